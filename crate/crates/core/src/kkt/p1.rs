use std::hash::Hash;

use crate::linalg::{SparseMatrix, TripletBuilder};
use crate::quadrature::{split_rule, QuadPoint, MIDPOINT_RULE};

use super::{ControlRegion, OptState, P1Data};

/// Nodal values of the iterate and the datum on one triangle.
struct Local {
    dofs: [Option<usize>; 3],
    y: [f64; 3],
    q: [f64; 3],
    z: [f64; 3],
}

fn dot(a: [f64; 3], b: [f64; 3]) -> f64 {
    a[0] * b[0] + a[1] * b[1] + a[2] * b[2]
}

impl Local {
    fn new(state: &OptState, d: &P1Data, t: usize) -> Self {
        let n = d.space.ndofs();
        let dofs = d.space.local_dofs(t);
        let tri = state.mesh().triangles()[t];
        let pick = |off: usize| dofs.map(|o| o.map_or(0.0, |k| state.x[off + k]));
        Self {
            dofs,
            y: pick(0),
            q: pick(n),
            z: tri.map(|v| d.z.values[v]),
        }
    }

    fn control_rule(&self, state: &OptState) -> Vec<QuadPoint<ControlRegion>> {
        let b = state.system.bounds();
        split_rule(|l| b.classify(3.0 * dot(self.q, l) * dot(self.z, l)), state.system.split_depth())
    }

    fn state_rule(&self, state: &OptState) -> Vec<QuadPoint<bool>> {
        let tau = state.spec().tau;
        split_rule(|l| dot(self.y, l) + tau < 0.0, state.system.split_depth())
    }
}

pub(super) fn residual(state: &OptState, d: &P1Data) -> Vec<f64> {
    let n = d.space.ndofs();
    let x = &state.x;
    let mut r = vec![0.0; 2 * n];
    d.stiffness.mul_vec_add(&x[..n], &mut r[..n]);
    d.stiffness.mul_vec_add(&x[n..], &mut r[n..]);
    let bounds = state.system.bounds();
    let gamma = state.gamma;
    let tau = state.spec().tau;
    let mesh = state.mesh();
    for t in 0..mesh.num_triangles() {
        let loc = Local::new(state, d, t);
        if loc.dofs.iter().all(Option::is_none) {
            continue;
        }
        let area = mesh.area(t);
        for qp in loc.control_rule(state) {
            let z = dot(loc.z, qp.bary);
            let val = qp.weight * area * z * bounds.control(3.0 * dot(loc.q, qp.bary) * z);
            for i in 0..3 {
                if let Some(k) = loc.dofs[i] {
                    r[k] -= val * qp.bary[i];
                }
            }
        }
        for qp in loc.state_rule(state) {
            if !qp.region {
                continue;
            }
            let val = qp.weight * area * gamma * (dot(loc.y, qp.bary) + tau);
            for i in 0..3 {
                if let Some(k) = loc.dofs[i] {
                    r[n + k] -= val * qp.bary[i];
                }
            }
        }
    }
    for (ri, e) in r[..n].iter_mut().zip(&d.e_load) {
        *ri -= e;
    }
    let alpha = state.spec().alpha();
    if alpha != 0.0 {
        let my = d.mass.mul_vec(&x[..n]);
        for k in 0..n {
            r[n + k] -= alpha * (my[k] - d.target_load[k]);
        }
    }
    r
}

pub(super) fn jacobian(state: &OptState, d: &P1Data) -> SparseMatrix {
    let n = d.space.ndofs();
    let mesh = state.mesh();
    let mut b = TripletBuilder::with_capacity(2 * n, 2 * n, 2 * d.stiffness.nnz() + 18 * mesh.num_triangles());
    b.push_block(0, 0, &d.stiffness);
    b.push_block(n, n, &d.stiffness);
    let bounds = state.system.bounds();
    let gamma = state.gamma;
    for t in 0..mesh.num_triangles() {
        let loc = Local::new(state, d, t);
        if loc.dofs.iter().all(Option::is_none) {
            continue;
        }
        let area = mesh.area(t);
        let mut k1 = [[0.0; 3]; 3];
        let mut k2 = [[0.0; 3]; 3];
        for qp in loc.control_rule(state) {
            if qp.region != ControlRegion::Inactive {
                continue;
            }
            let z = dot(loc.z, qp.bary);
            let c = -3.0 * z * z * bounds.control_derivative(3.0 * dot(loc.q, qp.bary) * z) * qp.weight * area;
            for i in 0..3 {
                for j in 0..3 {
                    k1[i][j] += c * qp.bary[i] * qp.bary[j];
                }
            }
        }
        for qp in loc.state_rule(state) {
            if !qp.region {
                continue;
            }
            let c = -gamma * qp.weight * area;
            for i in 0..3 {
                for j in 0..3 {
                    k2[i][j] += c * qp.bary[i] * qp.bary[j];
                }
            }
        }
        for i in 0..3 {
            let Some(di) = loc.dofs[i] else { continue };
            for j in 0..3 {
                let Some(dj) = loc.dofs[j] else { continue };
                if k1[i][j] != 0.0 {
                    b.push(di, n + dj, k1[i][j]);
                }
                if k2[i][j] != 0.0 {
                    b.push(n + di, dj, k2[i][j]);
                }
            }
        }
    }
    let alpha = state.spec().alpha();
    if alpha != 0.0 {
        for (r, c, v) in d.mass.iter() {
            b.push(n + r, c, -alpha * v);
        }
    }
    b.build()
}

pub(super) fn objective(state: &OptState, d: &P1Data) -> f64 {
    let bounds = state.system.bounds();
    let tau = state.spec().tau;
    let alpha = state.spec().alpha();
    let mesh = state.mesh();
    let mut j = 0.0;
    for t in 0..mesh.num_triangles() {
        let loc = Local::new(state, d, t);
        let area = mesh.area(t);
        for qp in loc.control_rule(state) {
            let l = bounds.control(3.0 * dot(loc.q, qp.bary) * dot(loc.z, qp.bary));
            j += qp.weight * area * l.powf(-1.0 / 3.0);
        }
        for qp in loc.state_rule(state) {
            if qp.region {
                let v = dot(loc.y, qp.bary) + tau;
                j += 0.5 * state.gamma * qp.weight * area * v * v;
            }
        }
        if alpha != 0.0 {
            let target = d.target_samples[t];
            for (k, l) in MIDPOINT_RULE.iter().enumerate() {
                let e = dot(loc.y, *l) - target[k];
                j += 0.5 * alpha * area / 3.0 * e * e;
            }
        }
    }
    j
}

pub(super) fn fingerprint(state: &OptState, d: &P1Data, h: &mut impl std::hash::Hasher) {
    for t in 0..state.mesh().num_triangles() {
        let loc = Local::new(state, d, t);
        let c: Vec<ControlRegion> = loc.control_rule(state).iter().map(|q| q.region).collect();
        let s: Vec<bool> = loc.state_rule(state).iter().map(|q| q.region).collect();
        c.hash(h);
        s.hash(h);
    }
}
