//! Lowest-order Raviart–Thomas mixed solver for the Dirichlet Poisson problem.
//!
//! Unknowns are one flux per edge (normal flux through the edge in its global
//! orientation) and one scalar per triangle. The global basis function of edge
//! `e` restricted to triangle `T` is `s (x - P) / (2|T|)`, with `P` the vertex
//! of `T` opposite `e` and `s = ±1` aligning the outward normal of `T` with the
//! global edge normal, so it carries unit flux through `e` and none through the
//! other two edges.

use std::sync::Arc;

use crate::error::{FieldError, LinalgError};
use crate::linalg::{DirectSolver, SparseMatrix, TripletBuilder};
use crate::mesh::{from_barycentric, Mesh, Point};
use crate::quadrature::MIDPOINT_RULE;
use crate::source::Rhs;

/// Piecewise constant field, one value per triangle.
#[derive(Debug, Clone)]
pub struct P0Field {
    pub mesh: Arc<Mesh>,
    pub values: Vec<f64>,
}

impl P0Field {
    pub fn zeros(mesh: &Arc<Mesh>) -> Self {
        Self {
            mesh: Arc::clone(mesh),
            values: vec![0.0; mesh.num_triangles()],
        }
    }
}

/// Raviart–Thomas field given by its edge fluxes.
#[derive(Debug, Clone)]
pub struct RT0Field {
    pub mesh: Arc<Mesh>,
    pub fluxes: Vec<f64>,
}

impl RT0Field {
    pub fn zeros(mesh: &Arc<Mesh>) -> Self {
        Self {
            mesh: Arc::clone(mesh),
            fluxes: vec![0.0; mesh.num_edges()],
        }
    }

    /// Value of the vector field at `x`, using the representation on `t`.
    pub fn eval(&self, t: usize, x: Point) -> Point {
        let mesh = &self.mesh;
        let p = mesh.corners(t);
        let te = mesh.triangle_edges(t);
        let scale = 1.0 / (2.0 * mesh.area(t));
        let mut v = [0.0; 2];
        for i in 0..3 {
            let c = mesh.edge_sign(t, i) * self.fluxes[te[i]] * scale;
            v[0] += c * (x[0] - p[i][0]);
            v[1] += c * (x[1] - p[i][1]);
        }
        v
    }

    /// Elementwise constant divergence on `t`.
    pub fn divergence(&self, t: usize) -> f64 {
        let te = self.mesh.triangle_edges(t);
        (0..3).map(|i| self.mesh.edge_sign(t, i) * self.fluxes[te[i]]).sum::<f64>() / self.mesh.area(t)
    }
}

/// Mass and divergence blocks of the mixed system `[[M, Bᵀ], [B, 0]]`.
#[derive(Debug, Clone)]
pub struct MixedSystem {
    pub mesh: Arc<Mesh>,
    /// `∫ ψ_e · ψ_f`, edges × edges.
    pub mass: SparseMatrix,
    /// `∫_T div ψ_e`, triangles × edges; entries are the edge signs.
    pub divergence: SparseMatrix,
    /// Full saddle-point matrix over `(fluxes, element values)`.
    pub matrix: SparseMatrix,
}

impl MixedSystem {
    pub fn assemble(mesh: &Arc<Mesh>) -> Self {
        let ne = mesh.num_edges();
        let nt = mesh.num_triangles();
        let mut mass = TripletBuilder::with_capacity(ne, ne, 9 * nt);
        let mut div = TripletBuilder::with_capacity(nt, ne, 3 * nt);
        for t in 0..nt {
            let p = mesh.corners(t);
            let te = mesh.triangle_edges(t);
            let area = mesh.area(t);
            let s = [mesh.edge_sign(t, 0), mesh.edge_sign(t, 1), mesh.edge_sign(t, 2)];
            let qp = MIDPOINT_RULE.map(|l| from_barycentric(&p, l));
            let scale = 1.0 / (4.0 * area * area);
            for i in 0..3 {
                for j in 0..3 {
                    let integral: f64 = qp
                        .iter()
                        .map(|x| (x[0] - p[i][0]) * (x[0] - p[j][0]) + (x[1] - p[i][1]) * (x[1] - p[j][1]))
                        .sum::<f64>()
                        * area
                        / 3.0;
                    mass.push(te[i], te[j], s[i] * s[j] * scale * integral);
                }
                div.push(t, te[i], s[i]);
            }
        }
        let mass = mass.build();
        let divergence = div.build();
        let mut full = TripletBuilder::with_capacity(ne + nt, ne + nt, mass.nnz() + 2 * divergence.nnz());
        full.push_block(0, 0, &mass);
        full.push_block(ne, 0, &divergence);
        full.push_block(0, ne, &divergence.transpose());
        Self {
            mesh: Arc::clone(mesh),
            mass,
            divergence,
            matrix: full.build(),
        }
    }

    pub fn dim(&self) -> usize {
        self.mesh.num_edges() + self.mesh.num_triangles()
    }

    /// Right-hand side `(0, -∫_T g)` of the mixed Poisson problem.
    pub fn rhs(&self, g: Rhs<'_>) -> Vec<f64> {
        let ne = self.mesh.num_edges();
        let mut b = vec![0.0; self.dim()];
        for t in 0..self.mesh.num_triangles() {
            b[ne + t] = -g.integral(&self.mesh, t);
        }
        b
    }

    pub fn factor(&self) -> Result<DirectSolver, LinalgError> {
        self.matrix.lu()
    }

    pub fn split(&self, x: &[f64]) -> (P0Field, RT0Field) {
        let ne = self.mesh.num_edges();
        (
            P0Field {
                mesh: Arc::clone(&self.mesh),
                values: x[ne..].to_vec(),
            },
            RT0Field {
                mesh: Arc::clone(&self.mesh),
                fluxes: x[..ne].to_vec(),
            },
        )
    }
}

/// `G_h(g) = (y_h, v_h)`.
pub fn solve_poisson_rt0(mesh: &Arc<Mesh>, rhs: Rhs<'_>) -> Result<(P0Field, RT0Field), LinalgError> {
    let sys = MixedSystem::assemble(mesh);
    let x = sys.factor()?.solve(&sys.rhs(rhs))?;
    Ok(sys.split(&x))
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Rt0Errors {
    pub l2_scalar: f64,
    pub l2_flux: f64,
    pub linf_scalar: f64,
}

/// L² errors by the midpoint rule; scalar L∞ error sampled at edge midpoints
/// and centroids.
pub fn rt0_norms(
    y: &P0Field,
    v: &RT0Field,
    y_exact: impl Fn(Point) -> f64,
    grad_exact: impl Fn(Point) -> Point,
) -> Result<Rt0Errors, FieldError> {
    if !Arc::ptr_eq(&y.mesh, &v.mesh) {
        return Err(FieldError::MeshMismatch);
    }
    let mesh = &y.mesh;
    let (mut l2s, mut l2v, mut linf) = (0.0, 0.0, 0.0f64);
    for t in 0..mesh.num_triangles() {
        let c = mesh.corners(t);
        let w = mesh.area(t) / 3.0;
        for l in MIDPOINT_RULE {
            let x = from_barycentric(&c, l);
            let e = y_exact(x) - y.values[t];
            let g = grad_exact(x);
            let vh = v.eval(t, x);
            l2s += w * e * e;
            l2v += w * ((g[0] - vh[0]).powi(2) + (g[1] - vh[1]).powi(2));
            linf = linf.max(e.abs());
        }
        linf = linf.max((y_exact(mesh.centroid(t)) - y.values[t]).abs());
    }
    Ok(Rt0Errors {
        l2_scalar: l2s.sqrt(),
        l2_flux: l2v.sqrt(),
        linf_scalar: linf,
    })
}
