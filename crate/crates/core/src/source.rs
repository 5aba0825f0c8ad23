//! Right-hand sides and element load integrals.

use std::sync::Arc;

use crate::mesh::{from_barycentric, Mesh, Point};
use crate::quadrature::MIDPOINT_RULE;

pub type ScalarFn = Arc<dyn Fn(Point) -> f64 + Send + Sync>;

pub fn scalar_fn(f: impl Fn(Point) -> f64 + Send + Sync + 'static) -> ScalarFn {
    Arc::new(f)
}

/// Right-hand side of a Poisson solve.
#[derive(Clone, Copy)]
pub enum Rhs<'a> {
    /// Evaluated at quadrature points.
    Function(&'a (dyn Fn(Point) -> f64 + Send + Sync)),
    /// Constant per element, sampled at the centroid. Suitable for loads
    /// whose jumps are aligned with mesh edges.
    CellConstant(&'a (dyn Fn(Point) -> f64 + Send + Sync)),
    /// One value per triangle.
    Cells(&'a [f64]),
    /// Continuous piecewise linear, one value per mesh vertex.
    Nodal(&'a [f64]),
}

impl Rhs<'_> {
    /// Values at the three midpoint-rule points of triangle `t`.
    pub fn sample(&self, mesh: &Mesh, t: usize) -> [f64; 3] {
        match *self {
            Rhs::Function(f) => {
                let c = mesh.corners(t);
                MIDPOINT_RULE.map(|l| f(from_barycentric(&c, l)))
            }
            Rhs::CellConstant(f) => [f(mesh.centroid(t)); 3],
            Rhs::Cells(v) => [v[t]; 3],
            Rhs::Nodal(v) => {
                let tri = mesh.triangles()[t];
                MIDPOINT_RULE.map(|l| l[0] * v[tri[0]] + l[1] * v[tri[1]] + l[2] * v[tri[2]])
            }
        }
    }

    /// `∫_T g dx` by the midpoint rule.
    pub fn integral(&self, mesh: &Mesh, t: usize) -> f64 {
        self.sample(mesh, t).iter().sum::<f64>() * mesh.area(t) / 3.0
    }

    /// `∫_T g λ_i dx` for the three barycentric hat functions.
    pub fn moments(&self, mesh: &Mesh, t: usize) -> [f64; 3] {
        let g = self.sample(mesh, t);
        let w = mesh.area(t) / 3.0;
        let mut out = [0.0; 3];
        for (q, l) in MIDPOINT_RULE.iter().enumerate() {
            for i in 0..3 {
                out[i] += w * g[q] * l[i];
            }
        }
        out
    }
}
