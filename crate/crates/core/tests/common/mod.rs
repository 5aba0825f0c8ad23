#![allow(dead_code)]

use std::sync::Arc;

use plate_core::kkt::{Discretization, KktSystem, OptState, ProblemSpec};
use plate_core::linalg::norm2;
use plate_core::mesh::build_uniform;
use plate_core::problems::{ex1_adjoint, ex1_state};

pub fn system(level: u32, spec: &ProblemSpec) -> Arc<KktSystem> {
    Arc::new(KktSystem::new(&Arc::new(build_uniform(level).unwrap()), spec).unwrap())
}

/// splitmix64 stream mapped to `[-1, 1)`.
pub fn noise(seed: u64) -> impl FnMut() -> f64 {
    let mut s = seed;
    move || {
        s = s.wrapping_add(0x9e37_79b9_7f4a_7c15);
        let mut z = s;
        z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
        z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
        z ^= z >> 31;
        (z >> 11) as f64 / (1u64 << 52) as f64 - 1.0
    }
}

/// Exact Example 1 state and a scaled adjoint at the degrees of freedom, plus
/// noise of size `amp`; fluxes are random too.
pub fn random_state(sys: &Arc<KktSystem>, gamma: f64, seed: u64, amp: f64) -> OptState {
    let mut rnd = noise(seed);
    let scale = 1.0 + 0.5 * rnd();
    let mut st = OptState::zeros(Arc::clone(sys), gamma);
    let m = Arc::clone(&sys.mesh);
    match sys.disc() {
        Discretization::Rt0 => {
            let (ne, nt) = (m.num_edges(), m.num_triangles());
            for e in 0..ne {
                st.x[e] = 0.1 * rnd();
                st.x[ne + nt + e] = 0.1 * rnd();
            }
            for t in 0..nt {
                let c = m.centroid(t);
                st.x[ne + t] = ex1_state(c) + amp * rnd();
                st.x[2 * ne + nt + t] = scale * ex1_adjoint(c) + amp * rnd();
            }
        }
        Discretization::P1 => {
            let space = sys.p1_space().unwrap();
            let n = space.ndofs();
            for k in 0..n {
                let p = m.vertices()[space.vertex(k)];
                st.x[k] = ex1_state(p) + amp * rnd();
                st.x[n + k] = scale * ex1_adjoint(p) + amp * rnd();
            }
        }
    }
    st
}

pub fn unit_direction(n: usize, seed: u64) -> Vec<f64> {
    let mut rnd = noise(seed);
    let mut d: Vec<f64> = (0..n).map(|_| rnd()).collect();
    let nd = norm2(&d);
    d.iter_mut().for_each(|v| *v /= nd);
    d
}

fn shifted(st: &OptState, dir: &[f64], eps: f64) -> OptState {
    let mut p = st.clone();
    for (xi, di) in p.x.iter_mut().zip(dir) {
        *xi += eps * di;
    }
    p
}

/// Relative error `‖(F(x+εd) − F(x−εd))/2ε − DF(x)d‖ / ‖DF(x)d‖`, or `None`
/// when some pointwise classification changes within `±ε d`.
pub fn fd_jacobian_error(st: &OptState, dir: &[f64], eps: f64) -> Option<f64> {
    let plus = shifted(st, dir, eps);
    let minus = shifted(st, dir, -eps);
    let f = st.classification_fingerprint();
    if plus.classification_fingerprint() != f || minus.classification_fingerprint() != f {
        return None;
    }
    let jd = st.jacobian().mul_vec(dir);
    let r0 = minus.residual();
    let r1 = plus.residual();
    let diff: Vec<f64> = r1.iter().zip(&r0).zip(&jd).map(|((a, b), c)| (a - b) / (2.0 * eps) - c).collect();
    Some(norm2(&diff) / norm2(&jd))
}
