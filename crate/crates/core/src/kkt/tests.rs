use std::sync::Arc;

use super::*;
use crate::linalg::norm2;
use crate::mesh::build_uniform;
use crate::poisson_p1::load_vector;
use crate::problems::{example1_spec, example2_spec, ex1_adjoint};
use crate::source::scalar_fn;

fn mesh(k: u32) -> Arc<Mesh> {
    Arc::new(build_uniform(k).unwrap())
}

fn small_load_spec(disc: Discretization) -> ProblemSpec {
    ProblemSpec {
        tau: 0.1,
        m_lo: 0.35,
        m_hi: 0.45,
        load: Load::Smooth(scalar_fn(|_| 0.01)),
        tracking: None,
        disc,
    }
}

fn system(k: u32, spec: &ProblemSpec) -> Arc<KktSystem> {
    Arc::new(KktSystem::new(&mesh(k), spec).unwrap())
}

/// With a small positive load the zero adjoint is consistent: l = m⁻³,
/// y = G(z l) stays far above -τ and the adjoint right-hand side vanishes.
#[test]
fn fixed_point_consistency_rt0() {
    let sys = system(4, &small_load_spec(Discretization::Rt0));
    let mesh = &sys.mesh;
    let z = sys.datum_p0().unwrap();
    let l = sys.bounds().l_max;
    let g: Vec<f64> = z.values.iter().map(|v| v * l).collect();
    let (y, v) = crate::poisson_rt0::solve_poisson_rt0(mesh, Rhs::Cells(&g)).unwrap();
    assert!(y.values.iter().all(|&v| v > -0.1));
    let mut x = v.fluxes.clone();
    x.extend(&y.values);
    x.resize(sys.dim(), 0.0);
    let st = OptState::new(Arc::clone(&sys), 1e4, x).unwrap();
    assert!(norm2(&residual_rt0(&st).unwrap()) <= 1e-10);
}

#[test]
fn fixed_point_consistency_p1() {
    let sys = system(4, &small_load_spec(Discretization::P1));
    let space = sys.p1_space().unwrap();
    let z = sys.datum_p1().unwrap();
    let l = sys.bounds().l_max;
    let zl: Vec<f64> = z.values.iter().map(|v| v * l).collect();
    let y = crate::poisson_p1::solve_poisson_p1(&sys.mesh, Rhs::Nodal(&zl)).unwrap();
    let mut x = space.restrict(&y);
    x.resize(sys.dim(), 0.0);
    let st = OptState::new(Arc::clone(&sys), 1e4, x).unwrap();
    assert!(norm2(&residual_p1(&st).unwrap()) <= 1e-8);
}

#[test]
fn hand_assembled_adjoint_entry() {
    let spec = example2_spec(Discretization::Rt0);
    let sys = system(1, &spec);
    let mut st = OptState::zeros(Arc::clone(&sys), 50.0);
    let m = sys.mesh.clone();
    let (ne, nt) = (m.num_edges(), m.num_triangles());
    assert_eq!((ne, nt), (5, 2));
    for t in 0..nt {
        st.x[ne + t] = -2.0 * spec.tau;
    }
    let r = st.residual();
    for t in 0..nt {
        // B v_q = 0, so the row is γ (y + τ) |T| = 50 · (-0.01) · 1/2
        assert!((r[2 * ne + nt + t] + 0.25).abs() < 1e-14);
    }
}

#[test]
fn perturbing_one_adjoint_value_touches_one_row() {
    let sys = system(3, &example1_spec(Discretization::Rt0));
    let m = sys.mesh.clone();
    let (ne, nt) = (m.num_edges(), m.num_triangles());
    let mut st = OptState::zeros(Arc::clone(&sys), 100.0);
    let base_q = 0.03 / 3.0;
    for t in 0..nt {
        let z = sys.datum_at(t, [1.0 / 3.0; 3]);
        st.x[2 * ne + nt + t] = base_q / z;
    }
    let r0 = st.residual();
    let t0 = nt / 2 + 3;
    let mut p = st.clone();
    p.x[2 * ne + nt + t0] *= 1.0 + 1e-6;
    let r1 = p.residual();
    let n1 = ne + nt;
    let changed: Vec<usize> = (0..n1).filter(|&i| r0[i] != r1[i]).collect();
    assert_eq!(changed, vec![ne + t0]);
    // in the adjoint block q only enters through Bᵀ on the edges of its triangle
    let mut edges: Vec<usize> = m.triangle_edges(t0).iter().map(|e| n1 + e).collect();
    edges.push(n1 + ne + t0);
    edges.sort();
    let changed: Vec<usize> = (n1..2 * n1).filter(|&i| r0[i] != r1[i]).collect();
    assert!(changed.iter().all(|i| edges.contains(i)), "{changed:?}");
}

#[test]
fn upper_clamp_reduces_to_load_vector() {
    let spec = example2_spec(Discretization::P1);
    let sys = system(4, &spec);
    let st = OptState::zeros(Arc::clone(&sys), 10.0);
    let r = residual_p1(&st).unwrap();
    let space = sys.p1_space().unwrap();
    let zl: Vec<f64> = sys.datum_p1().unwrap().values.iter().map(|v| v * sys.bounds().l_max).collect();
    let f = load_vector(space, Rhs::Nodal(&zl));
    let n = space.ndofs();
    for k in 0..n {
        assert!((r[k] + f[k]).abs() < 1e-14 * (1.0 + f[k].abs()));
    }
    // y = 0 ≥ -τ: Moreau–Yosida term vanishes and q = 0
    assert!(r[n..].iter().all(|&v| v == 0.0));
}

#[test]
fn tag_mismatch() {
    let st = OptState::zeros(system(2, &example2_spec(Discretization::P1)), 1.0);
    assert_eq!(
        residual_rt0(&st),
        Err(FieldError::TagMismatch {
            expected: "rt0",
            got: "p1"
        })
    );
}

#[test]
fn single_triangle_dk1_value() {
    let b = ControlBounds::new(0.35, 0.45);
    let area = 1.0 / 256.0;
    let z = 1.0;
    let dk1 = area * z * 3.0 * z * b.control_derivative(0.02);
    assert!((dk1 + 8.2630).abs() < 1e-4);
    assert!((dk1 + 2.25 * area * 0.02f64.powf(-1.75)).abs() < 1e-12);
}

#[test]
fn objective_examples() {
    for disc in [Discretization::Rt0, Discretization::P1] {
        let spec = small_load_spec(disc);
        let sys = system(3, &spec);
        let st = OptState::zeros(Arc::clone(&sys), 100.0);
        assert!((objective(&st) - spec.m_lo).abs() < 1e-13);
    }
    let spec = small_load_spec(Discretization::Rt0);
    let sys = system(3, &spec);
    let mut st = OptState::zeros(Arc::clone(&sys), 100.0);
    let (ne, nt) = (sys.mesh.num_edges(), sys.mesh.num_triangles());
    for t in 0..nt {
        st.x[ne + t] = -spec.tau - 0.01;
    }
    assert!((objective(&st) - spec.m_lo - 5e-3).abs() < 1e-13);
    assert!((ControlBounds::new(0.1, 0.2).l_min.powf(-1.0 / 3.0) - 0.2).abs() < 1e-14);
}

#[test]
fn zero_tracking_is_plain_system() {
    for disc in [Discretization::Rt0, Discretization::P1] {
        let plain = small_load_spec(disc);
        let mut tracked = plain.clone();
        tracked.tracking = Some(Tracking {
            alpha: 0.0,
            y_target: scalar_fn(|p| p[0]),
            e_load: scalar_fn(|_| 0.0),
        });
        let a = system(4, &plain);
        let b = system(4, &tracked);
        let mut x = vec![0.0; a.dim()];
        for (i, v) in x.iter_mut().enumerate() {
            *v = 0.05 * ((i * 37 % 17) as f64 / 17.0 - 0.5);
        }
        let sa = OptState::new(a, 300.0, x.clone()).unwrap();
        let sb = OptState::new(b, 300.0, x).unwrap();
        assert_eq!(sa.residual(), sb.residual());
        assert_eq!(sa.jacobian(), sb.jacobian());
        assert_eq!(sa.objective(), sb.objective());
    }
}

fn fd_check(st: &OptState, dir: &[f64], eps: f64) -> f64 {
    let j = st.jacobian();
    let jd = j.mul_vec(dir);
    let mut p = st.clone();
    for (xi, di) in p.x.iter_mut().zip(dir) {
        *xi += eps * di;
    }
    let r0 = st.residual();
    let r1 = p.residual();
    let diff: Vec<f64> = r1.iter().zip(&r0).zip(&jd).map(|((a, b), c)| (a - b) / eps - c).collect();
    norm2(&diff) / norm2(&jd)
}

#[test]
fn jacobian_matches_finite_differences_at_exact_data() {
    for disc in [Discretization::Rt0, Discretization::P1] {
        let spec = example1_spec(disc);
        let sys = system(4, &spec);
        let mut st = OptState::zeros(Arc::clone(&sys), 500.0);
        let m = sys.mesh.clone();
        let nt = m.num_triangles();
        match disc {
            Discretization::Rt0 => {
                let ne = m.num_edges();
                for t in 0..nt {
                    let c = m.centroid(t);
                    st.x[ne + t] = crate::problems::ex1_state(c) - 0.01;
                    st.x[2 * ne + nt + t] = 1.4 * ex1_adjoint(c);
                }
            }
            Discretization::P1 => {
                let space = sys.p1_space().unwrap();
                let n = space.ndofs();
                for k in 0..n {
                    let p = m.vertices()[space.vertex(k)];
                    st.x[k] = crate::problems::ex1_state(p) - 0.013;
                    st.x[n + k] = 1.4 * ex1_adjoint(p);
                }
            }
        }
        let mut dir: Vec<f64> = (0..st.x.len()).map(|i| (i * 7919 % 101) as f64 / 101.0 - 0.5).collect();
        let nd = norm2(&dir);
        dir.iter_mut().for_each(|v| *v /= nd);
        let eps = 1e-6;
        let mut p = st.clone();
        for (xi, di) in p.x.iter_mut().zip(&dir) {
            *xi += eps * di;
        }
        assert_eq!(st.classification_fingerprint(), p.classification_fingerprint());
        let rel = fd_check(&st, &dir, eps);
        assert!(rel < 1e-5, "{disc}: {rel}");
    }
}

#[test]
fn fully_clamped_control_decouples() {
    let spec = small_load_spec(Discretization::Rt0);
    let sys = system(3, &spec);
    let st = OptState::zeros(Arc::clone(&sys), 10.0);
    let j = st.jacobian();
    let n1 = sys.dim() / 2;
    assert!(j.iter().all(|(r, c, _)| !(r < n1 && c >= n1)));
}

#[test]
fn split_depth_self_convergence() {
    let spec = example1_spec(Discretization::P1);
    let m = mesh(5);
    let k1 = |depth: u32| {
        let sys = Arc::new(KktSystem::with_split_depth(&m, &spec, depth).unwrap());
        let space = sys.p1_space().unwrap();
        let n = space.ndofs();
        let mut st = OptState::zeros(Arc::clone(&sys), 1.0);
        for k in 0..n {
            st.x[n + k] = ex1_adjoint(m.vertices()[space.vertex(k)]);
        }
        let r = st.residual();
        let e = &sys_e_load(&sys);
        r[..n].iter().zip(e).map(|(a, b)| a + b).collect::<Vec<f64>>()
    };
    let a = k1(2);
    let b = k1(4);
    let scale = b.iter().fold(0.0f64, |m, v| m.max(v.abs()));
    let worst = a.iter().zip(&b).fold(0.0f64, |m, (x, y)| m.max((x - y).abs()));
    let l2 = norm2(&a.iter().zip(&b).map(|(x, y)| x - y).collect::<Vec<_>>()) / norm2(&b);
    assert!(l2 < 1e-4, "{l2}");
    assert!(worst / scale < 1e-3, "{}", worst / scale);
}

fn sys_e_load(sys: &KktSystem) -> Vec<f64> {
    match &sys.data {
        Data::P1(d) => d.e_load.clone(),
        Data::Rt0(d) => d.e_int.clone(),
    }
}

#[test]
fn active_sets_partition() {
    for disc in [Discretization::Rt0, Discretization::P1] {
        let sys = system(4, &example1_spec(disc));
        let mut st = OptState::zeros(Arc::clone(&sys), 10.0);
        let n = st.x.len();
        for i in n / 2..n {
            st.x[i] = 0.02;
        }
        let a = st.active_sets();
        let total = a.count(ControlRegion::Inactive) + a.count(ControlRegion::LowerClamp) + a.count(ControlRegion::UpperClamp);
        assert_eq!(total, sys.mesh.num_triangles() * a.cells_per_triangle);
        assert_eq!(a.state.len(), total);
    }
}

#[test]
fn recovered_control_in_bounds() {
    for disc in [Discretization::Rt0, Discretization::P1] {
        let sys = system(4, &example1_spec(disc));
        let mut st = OptState::zeros(Arc::clone(&sys), 10.0);
        let n = st.x.len();
        for i in 0..n {
            st.x[i] = ((i % 11) as f64 - 5.0) * 0.01;
        }
        let b = *sys.bounds();
        let cells = st.control_field().sample_cells(2);
        assert!(cells.iter().all(|&l| l >= b.l_min && l <= b.l_max));
        let u = recover_thickness(&cells, &b).unwrap();
        assert!(u.iter().all(|&u| u >= b.m_lo && u <= b.m_hi));
    }
}
