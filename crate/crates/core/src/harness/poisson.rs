use std::sync::Arc;

use crate::error::Result;
use crate::kkt::Discretization;
use crate::mesh::build_uniform;
use crate::poisson_p1::{p1_norms, solve_poisson_p1};
use crate::poisson_rt0::{rt0_norms, solve_poisson_rt0};
use crate::problems::manufactured_poisson;
use crate::source::Rhs;

/// Errors of one level of the manufactured Poisson problem.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PoissonRow {
    pub level: u32,
    pub h: f64,
    /// Scalar L² error.
    pub l2: f64,
    /// H¹ seminorm error (P1) or flux L² error (RT0).
    pub grad: f64,
    pub linf: f64,
    /// Largest `|∫_T div v + ∫_T g|` over triangles (RT0), zero for P1.
    pub conservation: f64,
}

pub fn poisson_convergence(disc: Discretization, levels: std::ops::RangeInclusive<u32>) -> Result<Vec<PoissonRow>> {
    let mp = manufactured_poisson();
    let g = move |p| (mp.g)(p);
    let mut rows = Vec::new();
    for k in levels {
        let mesh = Arc::new(build_uniform(k)?);
        let row = match disc {
            Discretization::P1 => {
                let y = solve_poisson_p1(&mesh, Rhs::Function(&g))?;
                let e = p1_norms(&y, mp.y, mp.grad_y);
                PoissonRow {
                    level: k,
                    h: mesh.h(),
                    l2: e.l2,
                    grad: e.h1_semi,
                    linf: e.linf,
                    conservation: 0.0,
                }
            }
            Discretization::Rt0 => {
                let (y, v) = solve_poisson_rt0(&mesh, Rhs::Function(&g))?;
                let e = rt0_norms(&y, &v, mp.y, mp.grad_y)?;
                let conservation = (0..mesh.num_triangles())
                    .map(|t| (v.divergence(t) * mesh.area(t) + Rhs::Function(&g).integral(&mesh, t)).abs())
                    .fold(0.0, f64::max);
                PoissonRow {
                    level: k,
                    h: mesh.h(),
                    l2: e.l2_scalar,
                    grad: e.l2_flux,
                    linf: e.linf_scalar,
                    conservation,
                }
            }
        };
        rows.push(row);
    }
    Ok(rows)
}
