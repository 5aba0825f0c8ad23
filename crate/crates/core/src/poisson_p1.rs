//! Continuous piecewise linear Galerkin solver for `-Δy = g`, `y = 0` on the
//! boundary, plus assembly helpers and error norms.

use std::sync::Arc;

use crate::error::{FieldError, LinalgError};
use crate::linalg::{SparseMatrix, TripletBuilder};
use crate::mesh::{from_barycentric, Mesh, Point};
use crate::quadrature::MIDPOINT_RULE;
use crate::source::Rhs;

/// Continuous piecewise linear field, one value per mesh vertex.
#[derive(Debug, Clone)]
pub struct P1Field {
    pub mesh: Arc<Mesh>,
    pub values: Vec<f64>,
}

impl P1Field {
    pub fn zeros(mesh: &Arc<Mesh>) -> Self {
        Self {
            mesh: Arc::clone(mesh),
            values: vec![0.0; mesh.num_vertices()],
        }
    }

    /// Nodal interpolant of `f`.
    pub fn interpolate(mesh: &Arc<Mesh>, f: impl Fn(Point) -> f64) -> Self {
        Self {
            mesh: Arc::clone(mesh),
            values: mesh.vertices().iter().map(|&p| f(p)).collect(),
        }
    }

    pub fn eval(&self, t: usize, bary: [f64; 3]) -> f64 {
        let tri = self.mesh.triangles()[t];
        bary[0] * self.values[tri[0]] + bary[1] * self.values[tri[1]] + bary[2] * self.values[tri[2]]
    }

    pub fn gradient(&self, t: usize) -> Point {
        let g = shape_gradients(&self.mesh, t);
        let tri = self.mesh.triangles()[t];
        let mut out = [0.0; 2];
        for i in 0..3 {
            out[0] += g[i][0] * self.values[tri[i]];
            out[1] += g[i][1] * self.values[tri[i]];
        }
        out
    }
}

/// Gradients of the barycentric coordinates on triangle `t`.
pub fn shape_gradients(mesh: &Mesh, t: usize) -> [Point; 3] {
    let p = mesh.corners(t);
    let two_area = 2.0 * mesh.area(t);
    let mut g = [[0.0; 2]; 3];
    for i in 0..3 {
        let (a, b) = (p[(i + 1) % 3], p[(i + 2) % 3]);
        g[i] = [(a[1] - b[1]) / two_area, (b[0] - a[0]) / two_area];
    }
    g
}

/// Numbering of the interior (Dirichlet-free) vertices.
#[derive(Debug, Clone)]
pub struct P1Space {
    pub mesh: Arc<Mesh>,
    dof_of_vertex: Vec<Option<usize>>,
    vertex_of_dof: Vec<usize>,
}

impl P1Space {
    pub fn new(mesh: &Arc<Mesh>) -> Self {
        let mut dof_of_vertex = vec![None; mesh.num_vertices()];
        let mut vertex_of_dof = Vec::new();
        for (v, dof) in dof_of_vertex.iter_mut().enumerate() {
            if mesh.is_used_vertex(v) && !mesh.is_boundary_vertex(v) {
                *dof = Some(vertex_of_dof.len());
                vertex_of_dof.push(v);
            }
        }
        Self {
            mesh: Arc::clone(mesh),
            dof_of_vertex,
            vertex_of_dof,
        }
    }

    pub fn ndofs(&self) -> usize {
        self.vertex_of_dof.len()
    }
    pub fn dof(&self, vertex: usize) -> Option<usize> {
        self.dof_of_vertex[vertex]
    }
    pub fn vertex(&self, dof: usize) -> usize {
        self.vertex_of_dof[dof]
    }

    /// Local-to-global dof map of triangle `t` (`None` for boundary vertices).
    pub fn local_dofs(&self, t: usize) -> [Option<usize>; 3] {
        self.mesh.triangles()[t].map(|v| self.dof_of_vertex[v])
    }

    /// Expands interior values to a full vertex field (zero on the boundary).
    pub fn to_field(&self, dofs: &[f64]) -> P1Field {
        let mut values = vec![0.0; self.mesh.num_vertices()];
        for (d, &v) in self.vertex_of_dof.iter().enumerate() {
            values[v] = dofs[d];
        }
        P1Field {
            mesh: Arc::clone(&self.mesh),
            values,
        }
    }

    pub fn restrict(&self, field: &P1Field) -> Vec<f64> {
        self.vertex_of_dof.iter().map(|&v| field.values[v]).collect()
    }
}

/// Stiffness matrix `⟨∇φ_j, ∇φ_i⟩` over interior vertices.
pub fn assemble_stiffness(space: &P1Space) -> SparseMatrix {
    let mesh = &space.mesh;
    let n = space.ndofs();
    let mut b = TripletBuilder::with_capacity(n, n, 9 * mesh.num_triangles());
    for t in 0..mesh.num_triangles() {
        let g = shape_gradients(mesh, t);
        let dofs = space.local_dofs(t);
        let area = mesh.area(t);
        for i in 0..3 {
            let Some(di) = dofs[i] else { continue };
            for j in 0..3 {
                let Some(dj) = dofs[j] else { continue };
                b.push(di, dj, area * (g[i][0] * g[j][0] + g[i][1] * g[j][1]));
            }
        }
    }
    b.build()
}

/// Mass matrix `⟨φ_j, φ_i⟩` over interior vertices.
pub fn assemble_mass(space: &P1Space) -> SparseMatrix {
    let mesh = &space.mesh;
    let n = space.ndofs();
    let mut b = TripletBuilder::with_capacity(n, n, 9 * mesh.num_triangles());
    for t in 0..mesh.num_triangles() {
        let dofs = space.local_dofs(t);
        let area = mesh.area(t);
        for i in 0..3 {
            let Some(di) = dofs[i] else { continue };
            for j in 0..3 {
                let Some(dj) = dofs[j] else { continue };
                let m = if i == j { area / 6.0 } else { area / 12.0 };
                b.push(di, dj, m);
            }
        }
    }
    b.build()
}

/// Load vector `⟨g, φ_i⟩` by the midpoint rule.
pub fn load_vector(space: &P1Space, rhs: Rhs<'_>) -> Vec<f64> {
    let mut out = vec![0.0; space.ndofs()];
    for t in 0..space.mesh.num_triangles() {
        let m = rhs.moments(&space.mesh, t);
        for (i, d) in space.local_dofs(t).iter().enumerate() {
            if let Some(d) = d {
                out[*d] += m[i];
            }
        }
    }
    out
}

/// `G_h(g)`: the Galerkin solution in the Dirichlet space.
pub fn solve_poisson_p1(mesh: &Arc<Mesh>, rhs: Rhs<'_>) -> Result<P1Field, LinalgError> {
    let space = P1Space::new(mesh);
    let a = assemble_stiffness(&space);
    let f = load_vector(&space, rhs);
    let x = a.cholesky()?.solve(&f)?;
    Ok(space.to_field(&x))
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct P1Errors {
    pub l2: f64,
    pub h1_semi: f64,
    pub linf: f64,
}

impl P1Errors {
    pub fn h1_full(&self) -> f64 {
        (self.l2 * self.l2 + self.h1_semi * self.h1_semi).sqrt()
    }
}

/// Errors of `a` against an exact solution: L² and H¹-seminorm by the
/// midpoint rule, L∞ sampled at vertices, edge midpoints and centroids.
pub fn p1_norms(a: &P1Field, exact: impl Fn(Point) -> f64, grad_exact: impl Fn(Point) -> Point) -> P1Errors {
    let mesh = &a.mesh;
    let mut l2 = 0.0;
    let mut h1 = 0.0;
    let mut linf: f64 = 0.0;
    for t in 0..mesh.num_triangles() {
        let c = mesh.corners(t);
        let w = mesh.area(t) / 3.0;
        let grad = a.gradient(t);
        for l in MIDPOINT_RULE {
            let x = from_barycentric(&c, l);
            let e = exact(x) - a.eval(t, l);
            let ge = grad_exact(x);
            l2 += w * e * e;
            h1 += w * ((ge[0] - grad[0]).powi(2) + (ge[1] - grad[1]).powi(2));
            linf = linf.max(e.abs());
        }
        let centroid = [1.0 / 3.0; 3];
        linf = linf.max((exact(from_barycentric(&c, centroid)) - a.eval(t, centroid)).abs());
    }
    for (v, &p) in mesh.vertices().iter().enumerate() {
        if mesh.is_used_vertex(v) {
            linf = linf.max((exact(p) - a.values[v]).abs());
        }
    }
    P1Errors {
        l2: l2.sqrt(),
        h1_semi: h1.sqrt(),
        linf,
    }
}

/// Same as [`p1_norms`] but checks that both fields share a mesh.
pub fn p1_difference_norms(a: &P1Field, b: &P1Field) -> Result<P1Errors, FieldError> {
    if !Arc::ptr_eq(&a.mesh, &b.mesh) {
        return Err(FieldError::MeshMismatch);
    }
    let d = P1Field {
        mesh: Arc::clone(&a.mesh),
        values: a.values.iter().zip(&b.values).map(|(x, y)| x - y).collect(),
    };
    Ok(p1_norms(&d, |_| 0.0, |_| [0.0, 0.0]))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::mesh::build_uniform;
    use std::f64::consts::PI;

    fn mesh(k: u32) -> Arc<Mesh> {
        Arc::new(build_uniform(k).unwrap())
    }

    #[test]
    fn level_one_has_no_dofs() {
        let space = P1Space::new(&mesh(1));
        assert_eq!(space.ndofs(), 0);
        assert_eq!(assemble_stiffness(&space).nrows(), 0);
    }

    #[test]
    fn level_two_diagonal_is_four() {
        let space = P1Space::new(&mesh(2));
        let a = assemble_stiffness(&space);
        assert_eq!(a.nrows(), 1);
        assert!((a.get(0, 0) - 4.0).abs() < 1e-14);
    }

    #[test]
    fn stiffness_symmetric_and_spd() {
        let space = P1Space::new(&mesh(4));
        let a = assemble_stiffness(&space);
        assert_eq!(a.asymmetry(), 0.0);
        assert!(a.cholesky().is_ok());
    }

    #[test]
    fn zero_rhs_gives_zero() {
        let y = solve_poisson_p1(&mesh(3), Rhs::Function(&|_| 0.0)).unwrap();
        assert!(y.values.iter().all(|&v| v == 0.0));
    }

    #[test]
    fn level_two_center_value() {
        let g = |p: Point| 2.0 * PI * PI * (PI * p[0]).sin() * (PI * p[1]).sin();
        let m = mesh(2);
        let space = P1Space::new(&m);
        let load = load_vector(&space, Rhs::Function(&g));
        let y = solve_poisson_p1(&m, Rhs::Function(&g)).unwrap();
        let center = space.vertex(0);
        assert!((y.values[center] - load[0] / 4.0).abs() < 1e-14);
    }

    #[test]
    fn linear_interpolant_has_zero_error() {
        let m = mesh(3);
        let f = |p: Point| 2.0 * p[0] - 0.5 * p[1] + 0.25;
        let a = P1Field::interpolate(&m, f);
        let e = p1_norms(&a, f, |_| [2.0, -0.5]);
        assert!(e.l2 < 1e-13 && e.h1_semi < 1e-13 && e.linf < 1e-13);
    }

    #[test]
    fn interpolation_linf_error_decays_fourfold() {
        let s = |p: Point| (PI * p[0]).sin() * (PI * p[1]).sin();
        let gs = |p: Point| [PI * (PI * p[0]).cos() * (PI * p[1]).sin(), PI * (PI * p[0]).sin() * (PI * p[1]).cos()];
        let e4 = p1_norms(&P1Field::interpolate(&mesh(4), s), s, gs).linf;
        let e5 = p1_norms(&P1Field::interpolate(&mesh(5), s), s, gs).linf;
        let ratio = e4 / e5;
        assert!((3.5..4.5).contains(&ratio), "ratio {ratio}");
    }

    #[test]
    fn h1_seminorm_of_sine_product() {
        // |sin(πx)sin(πy)|_{H¹} = π/√2
        let gs = |p: Point| [PI * (PI * p[0]).cos() * (PI * p[1]).sin(), PI * (PI * p[0]).sin() * (PI * p[1]).cos()];
        let zero = P1Field::zeros(&mesh(7));
        let e = p1_norms(&zero, |_| 0.0, gs);
        assert!((e.h1_semi - PI / 2f64.sqrt()).abs() < 1e-3, "{}", e.h1_semi);
    }

    #[test]
    fn discrete_maximum_principle() {
        let m = mesh(5);
        let g = |p: Point| if p[0] < 0.3 { 5.0 } else { 0.0 };
        let y = solve_poisson_p1(&m, Rhs::Function(&g)).unwrap();
        assert!(y.values.iter().all(|&v| v >= 0.0));
    }
}
