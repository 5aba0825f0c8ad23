//! Error functionals against an exact solution or a finer reference solve.

use std::sync::Arc;

use crate::error::FieldError;
use crate::kkt::{ControlRegion, Discretization, OptState};
use crate::mesh::{from_barycentric, Mesh, Point};
use crate::poisson_p1::shape_gradients;
use crate::problems::{ex1_control, ex1_state, ex1_state_gradient};
use crate::quadrature::{split_rule, MIDPOINT_RULE};

/// Closed-form state, state gradient and control.
#[derive(Clone, Copy)]
pub struct ExactSolution {
    pub y: fn(Point) -> f64,
    pub grad_y: fn(Point) -> Point,
    pub l: fn(Point) -> f64,
}

impl ExactSolution {
    pub fn example1() -> Self {
        Self {
            y: ex1_state,
            grad_y: ex1_state_gradient,
            l: ex1_control,
        }
    }
}

impl std::fmt::Debug for ExactSolution {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str("ExactSolution")
    }
}

/// What a discrete solution is compared with.
#[derive(Debug, Clone)]
pub enum Truth {
    Exact(ExactSolution),
    /// A solve on a refinement of the compared mesh. `ancestors[t]` is the
    /// triangle of the compared mesh containing reference triangle `t`; `None`
    /// means both share one mesh.
    Reference {
        state: OptState,
        ancestors: Option<Arc<Vec<usize>>>,
    },
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FieldErrors {
    pub linf_y: f64,
    pub l2_y: f64,
    pub l2_l: f64,
    /// Full H¹ norm of the state error (P1 only).
    pub h1_y: Option<f64>,
}

fn region_of(l: f64, lo: f64, hi: f64) -> ControlRegion {
    if l <= lo {
        ControlRegion::LowerClamp
    } else if l >= hi {
        ControlRegion::UpperClamp
    } else {
        ControlRegion::Inactive
    }
}

/// State gradient on triangle `t` (P1), zero for the piecewise constant RT0 state.
fn state_gradient(state: &OptState, t: usize) -> Point {
    let Some(space) = state.system.p1_space() else {
        return [0.0; 2];
    };
    let g = shape_gradients(state.mesh(), t);
    let mut out = [0.0; 2];
    for (i, d) in space.local_dofs(t).iter().enumerate() {
        let v = d.map_or(0.0, |d| state.x[d]);
        out[0] += g[i][0] * v;
        out[1] += g[i][1] * v;
    }
    out
}

/// State L∞ (sampled at vertices, edge midpoints and centroids),
/// state L², control L² with region-aware quadrature and, for P1, state H¹.
pub fn measure(approx: &OptState, truth: &Truth) -> Result<FieldErrors, FieldError> {
    let (mesh, anc): (Arc<Mesh>, Option<&[usize]>) = match truth {
        Truth::Exact(_) => (Arc::clone(approx.mesh()), None),
        Truth::Reference { state, ancestors } => {
            if state.disc() != approx.disc() {
                return Err(FieldError::TagMismatch {
                    expected: approx.disc().name(),
                    got: state.disc().name(),
                });
            }
            match ancestors {
                Some(a) => {
                    if a.len() != state.mesh().num_triangles() || a.iter().any(|&t| t >= approx.mesh().num_triangles()) {
                        return Err(FieldError::MeshMismatch);
                    }
                    (Arc::clone(state.mesh()), Some(a.as_slice()))
                }
                None => {
                    if !Arc::ptr_eq(state.mesh(), approx.mesh()) {
                        return Err(FieldError::MeshMismatch);
                    }
                    (Arc::clone(state.mesh()), None)
                }
            }
        }
    };
    let bounds = *approx.system.bounds();
    let depth = approx.system.split_depth();
    let is_p1 = approx.disc() == Discretization::P1;
    let amesh = Arc::clone(approx.mesh());

    let truth_state = |t: usize, b: [f64; 3], x: Point| match truth {
        Truth::Exact(e) => (e.y)(x),
        Truth::Reference { state, .. } => state.state_at(t, b),
    };
    let truth_control = |t: usize, b: [f64; 3], x: Point| match truth {
        Truth::Exact(e) => (e.l)(x),
        Truth::Reference { state, .. } => state.control_at(t, b),
    };

    let (mut linf, mut l2y, mut l2l, mut h1) = (0.0f64, 0.0, 0.0, 0.0);
    for t in 0..mesh.num_triangles() {
        let c = mesh.corners(t);
        let area = mesh.area(t);
        let ta = anc.map_or(t, |a| a[t]);
        let abary = |b: [f64; 3], x: Point| if anc.is_some() { amesh.barycentric(ta, x) } else { b };
        let approx_state = |b: [f64; 3]| {
            let x = from_barycentric(&c, b);
            approx.state_at(ta, abary(b, x))
        };
        let approx_control = |b: [f64; 3]| {
            let x = from_barycentric(&c, b);
            approx.control_at(ta, abary(b, x))
        };
        let mut samples: Vec<[f64; 3]> = MIDPOINT_RULE.to_vec();
        samples.push([1.0 / 3.0; 3]);
        samples.extend([[1.0, 0.0, 0.0], [0.0, 1.0, 0.0], [0.0, 0.0, 1.0]]);
        for b in samples {
            let x = from_barycentric(&c, b);
            linf = linf.max((truth_state(t, b, x) - approx_state(b)).abs());
        }
        let ga = state_gradient(approx, ta);
        let gt = match truth {
            Truth::Exact(_) => None,
            Truth::Reference { state, .. } => Some(state_gradient(state, t)),
        };
        for b in MIDPOINT_RULE {
            let x = from_barycentric(&c, b);
            let e = truth_state(t, b, x) - approx_state(b);
            l2y += area / 3.0 * e * e;
            if is_p1 {
                let g = match (truth, gt) {
                    (Truth::Exact(ex), _) => (ex.grad_y)(x),
                    (_, Some(g)) => g,
                    _ => unreachable!(),
                };
                h1 += area / 3.0 * ((g[0] - ga[0]).powi(2) + (g[1] - ga[1]).powi(2));
            }
        }
        let rule = split_rule(
            |b| {
                let x = from_barycentric(&c, b);
                (
                    region_of(truth_control(t, b, x), bounds.l_min, bounds.l_max),
                    region_of(approx_control(b), bounds.l_min, bounds.l_max),
                )
            },
            depth,
        );
        for q in rule {
            let x = from_barycentric(&c, q.bary);
            let e = truth_control(t, q.bary, x) - approx_control(q.bary);
            l2l += q.weight * area * e * e;
        }
    }
    Ok(FieldErrors {
        linf_y: linf,
        l2_y: l2y.sqrt(),
        l2_l: l2l.sqrt(),
        h1_y: is_p1.then(|| (l2y + h1).sqrt()),
    })
}
