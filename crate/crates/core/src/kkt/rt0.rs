use crate::linalg::{SparseMatrix, TripletBuilder};

use super::{OptState, Rt0Data};

struct Layout {
    ne: usize,
    nt: usize,
}

impl Layout {
    fn of(state: &OptState) -> Self {
        Self {
            ne: state.mesh().num_edges(),
            nt: state.mesh().num_triangles(),
        }
    }
    fn n1(&self) -> usize {
        self.ne + self.nt
    }
    fn y(&self, t: usize) -> usize {
        self.ne + t
    }
    fn q(&self, t: usize) -> usize {
        self.n1() + self.ne + t
    }
}

pub(super) fn residual(state: &OptState, d: &Rt0Data) -> Vec<f64> {
    let l = Layout::of(state);
    let n1 = l.n1();
    let x = &state.x;
    let mut r = vec![0.0; 2 * n1];
    d.mixed.matrix.mul_vec_add(&x[..n1], &mut r[..n1]);
    d.mixed.matrix.mul_vec_add(&x[n1..], &mut r[n1..]);
    let spec = state.spec();
    let bounds = state.system.bounds();
    let alpha = spec.alpha();
    let gamma = state.gamma;
    let mesh = state.mesh();
    for t in 0..l.nt {
        let area = mesh.area(t);
        let z = d.z.values[t];
        let y = x[l.y(t)];
        let q = x[l.q(t)];
        r[l.y(t)] += area * z * bounds.control(3.0 * q * z) + d.e_int[t];
        let mut adj = 0.0;
        if y + spec.tau < 0.0 {
            adj += gamma * (y + spec.tau) * area;
        }
        if alpha != 0.0 {
            adj += alpha * (area * y - d.target_int[t]);
        }
        r[l.q(t)] += adj;
    }
    r
}

pub(super) fn jacobian(state: &OptState, d: &Rt0Data) -> SparseMatrix {
    let l = Layout::of(state);
    let n1 = l.n1();
    let a = &d.mixed.matrix;
    let mut b = TripletBuilder::with_capacity(2 * n1, 2 * n1, 2 * a.nnz() + 2 * l.nt);
    b.push_block(0, 0, a);
    b.push_block(n1, n1, a);
    let spec = state.spec();
    let bounds = state.system.bounds();
    let alpha = spec.alpha();
    let mesh = state.mesh();
    for t in 0..l.nt {
        let area = mesh.area(t);
        let z = d.z.values[t];
        let dk1 = area * z * bounds.control_derivative(3.0 * state.x[l.q(t)] * z) * 3.0 * z;
        if dk1 != 0.0 {
            b.push(l.y(t), l.q(t), dk1);
        }
        let mut dk2 = alpha * area;
        if state.x[l.y(t)] + spec.tau < 0.0 {
            dk2 += state.gamma * area;
        }
        if dk2 != 0.0 {
            b.push(l.q(t), l.y(t), dk2);
        }
    }
    b.build()
}

pub(super) fn objective(state: &OptState, d: &Rt0Data) -> f64 {
    let l = Layout::of(state);
    let spec = state.spec();
    let bounds = state.system.bounds();
    let alpha = spec.alpha();
    let mesh = state.mesh();
    let mut j = 0.0;
    for t in 0..l.nt {
        let area = mesh.area(t);
        let z = d.z.values[t];
        let y = state.x[l.y(t)];
        let control = bounds.control(3.0 * state.x[l.q(t)] * z);
        j += area * control.powf(-1.0 / 3.0);
        let v = (y + spec.tau).min(0.0);
        j += 0.5 * state.gamma * area * v * v;
        if alpha != 0.0 {
            j += 0.5 * alpha * (area * y * y - 2.0 * y * d.target_int[t] + d.target_sq[t]);
        }
    }
    j
}
