//! Regularized discrete optimality systems.
//!
//! For a fixed mesh and problem a [`KktSystem`] holds everything that does not
//! depend on the iterate: the Poisson operator, the datum `z_h = G_h(f)` and
//! the tracking data. An [`OptState`] pairs a system with `γ` and a flat
//! coefficient vector, and evaluates the residual `F^γ`, its generalized
//! Jacobian, the objective and the recovered control.
//!
//! Layouts of the coefficient vector:
//! * RT0: `[v (edges), y (triangles), v_q (edges), q (triangles)]`
//! * P1: `[y (interior vertices), q (interior vertices)]`

mod control;
mod p1;
mod rt0;

use std::fmt;
use std::hash::{Hash, Hasher};
use std::str::FromStr;
use std::sync::Arc;

pub use control::{
    control_law, moreau_yosida_multiplier, multiplier_value, recover_control, recover_thickness, ControlBounds,
    ControlRegion,
};
pub use crate::quadrature::split_quadrature;

use crate::error::{FieldError, Result};
use crate::linalg::SparseMatrix;
use crate::mesh::{from_barycentric, Mesh, Point};
use crate::poisson_p1::{P1Field, P1Space};
use crate::poisson_rt0::{P0Field, RT0Field};
use crate::quadrature::{subdivide, DEFAULT_SPLIT_DEPTH, MIDPOINT_RULE};
use crate::source::{Rhs, ScalarFn};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Discretization {
    Rt0,
    P1,
}

impl Discretization {
    pub fn name(self) -> &'static str {
        match self {
            Discretization::Rt0 => "rt0",
            Discretization::P1 => "p1",
        }
    }

    /// Default exponent of the coupling `γ = O(h^{-κ})` in two dimensions.
    pub fn default_kappa(self) -> f64 {
        match self {
            Discretization::Rt0 => 2.0,
            Discretization::P1 => 4.0,
        }
    }
}

impl fmt::Display for Discretization {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Discretization {
    type Err = FieldError;
    fn from_str(s: &str) -> std::result::Result<Self, Self::Err> {
        match s.to_ascii_lowercase().as_str() {
            "rt0" => Ok(Discretization::Rt0),
            "p1" => Ok(Discretization::P1),
            other => Err(FieldError::Invalid(format!("unknown discretization '{other}'"))),
        }
    }
}

/// Right-hand side `f` of the state equation.
#[derive(Clone)]
pub enum Load {
    /// Smooth; integrated with the midpoint rule.
    Smooth(ScalarFn),
    /// Piecewise constant with jumps along mesh edges; sampled at centroids.
    CellConstant(ScalarFn),
}

impl Load {
    pub fn rhs(&self) -> Rhs<'_> {
        match self {
            Load::Smooth(f) => Rhs::Function(f.as_ref()),
            Load::CellConstant(f) => Rhs::CellConstant(f.as_ref()),
        }
    }

    pub fn eval(&self, x: Point) -> f64 {
        match self {
            Load::Smooth(f) | Load::CellConstant(f) => f(x),
        }
    }
}

/// Tracking term `(α/2)‖y − y_Ω‖²` together with the extra state load `e_Ω`.
#[derive(Clone)]
pub struct Tracking {
    pub alpha: f64,
    pub y_target: ScalarFn,
    pub e_load: ScalarFn,
}

#[derive(Clone)]
pub struct ProblemSpec {
    pub tau: f64,
    /// Lower thickness bound `m`.
    pub m_lo: f64,
    /// Upper thickness bound `M`.
    pub m_hi: f64,
    pub load: Load,
    pub tracking: Option<Tracking>,
    pub disc: Discretization,
}

impl fmt::Debug for ProblemSpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("ProblemSpec")
            .field("tau", &self.tau)
            .field("m_lo", &self.m_lo)
            .field("m_hi", &self.m_hi)
            .field("tracking_alpha", &self.tracking.as_ref().map(|t| t.alpha))
            .field("disc", &self.disc)
            .finish_non_exhaustive()
    }
}

impl ProblemSpec {
    pub fn validate(&self) -> std::result::Result<(), FieldError> {
        if !(self.tau > 0.0) {
            return Err(FieldError::Invalid(format!("tau must be positive, got {}", self.tau)));
        }
        if !(self.m_lo > 0.0 && self.m_lo < self.m_hi && self.m_hi.is_finite()) {
            return Err(FieldError::Invalid(format!(
                "thickness bounds must satisfy 0 < m < M, got m = {}, M = {}",
                self.m_lo, self.m_hi
            )));
        }
        if let Some(t) = &self.tracking {
            if !(t.alpha >= 0.0) {
                return Err(FieldError::Invalid(format!("alpha must be nonnegative, got {}", t.alpha)));
            }
        }
        Ok(())
    }

    pub fn bounds(&self) -> ControlBounds {
        ControlBounds::new(self.m_lo, self.m_hi)
    }

    pub fn with_disc(&self, disc: Discretization) -> Self {
        Self { disc, ..self.clone() }
    }

    fn alpha(&self) -> f64 {
        self.tracking.as_ref().map_or(0.0, |t| t.alpha)
    }
}

pub(crate) struct Rt0Data {
    mixed: crate::poisson_rt0::MixedSystem,
    z: P0Field,
    z_flux: RT0Field,
    /// `∫_T e_Ω`
    e_int: Vec<f64>,
    /// `∫_T y_Ω`
    target_int: Vec<f64>,
    /// `∫_T y_Ω²`
    target_sq: Vec<f64>,
}

pub(crate) struct P1Data {
    space: P1Space,
    stiffness: SparseMatrix,
    mass: SparseMatrix,
    z: P1Field,
    /// `∫ e_Ω φ_j`
    e_load: Vec<f64>,
    /// `∫ y_Ω φ_j`
    target_load: Vec<f64>,
    /// `Σ_T` midpoint-rule samples of `y_Ω` per triangle.
    target_samples: Vec<[f64; 3]>,
}

pub(crate) enum Data {
    Rt0(Rt0Data),
    P1(P1Data),
}

/// Iterate-independent part of the discrete optimality system on one mesh.
pub struct KktSystem {
    pub spec: ProblemSpec,
    pub mesh: Arc<Mesh>,
    bounds: ControlBounds,
    split_depth: u32,
    data: Data,
}

impl fmt::Debug for KktSystem {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("KktSystem")
            .field("disc", &self.spec.disc)
            .field("level", &self.mesh.level())
            .field("dim", &self.dim())
            .finish_non_exhaustive()
    }
}

/// Depth of the composite rule used for the data integrals `∫ e_Ω`, `∫ y_Ω`.
const DATA_DEPTH: u32 = 2;

fn composite_samples(mesh: &Mesh, t: usize, f: &dyn Fn(Point) -> f64, depth: u32) -> Vec<([f64; 3], f64)> {
    let c = mesh.corners(t);
    let subs = subdivide(depth);
    let w = 1.0 / (3.0 * subs.len() as f64);
    let mut out = Vec::with_capacity(3 * subs.len());
    for s in &subs {
        for l in MIDPOINT_RULE {
            let mut b = [0.0; 3];
            for (k, bk) in b.iter_mut().enumerate() {
                *bk = l[0] * s[0][k] + l[1] * s[1][k] + l[2] * s[2][k];
            }
            out.push((b, w * f(from_barycentric(&c, b))));
        }
    }
    out
}

impl KktSystem {
    pub fn new(mesh: &Arc<Mesh>, spec: &ProblemSpec) -> Result<Self> {
        Self::with_split_depth(mesh, spec, DEFAULT_SPLIT_DEPTH)
    }

    pub fn with_split_depth(mesh: &Arc<Mesh>, spec: &ProblemSpec, split_depth: u32) -> Result<Self> {
        spec.validate()?;
        let nt = mesh.num_triangles();
        let zero = |_: Point| 0.0;
        let (e_fn, t_fn): (&dyn Fn(Point) -> f64, &dyn Fn(Point) -> f64) = match &spec.tracking {
            Some(t) => (t.e_load.as_ref(), t.y_target.as_ref()),
            None => (&zero, &zero),
        };
        let has_tracking = spec.tracking.is_some();
        let data = match spec.disc {
            Discretization::Rt0 => {
                let mixed = crate::poisson_rt0::MixedSystem::assemble(mesh);
                let x = mixed.factor()?.solve(&mixed.rhs(spec.load.rhs()))?;
                let (z, z_flux) = mixed.split(&x);
                let mut e_int = vec![0.0; nt];
                let mut target_int = vec![0.0; nt];
                let mut target_sq = vec![0.0; nt];
                if has_tracking {
                    for t in 0..nt {
                        let a = mesh.area(t);
                        e_int[t] = a * composite_samples(mesh, t, e_fn, DATA_DEPTH).iter().map(|s| s.1).sum::<f64>();
                        let ts = composite_samples(mesh, t, t_fn, DATA_DEPTH);
                        let w = 1.0 / ts.len() as f64;
                        target_int[t] = a * ts.iter().map(|s| s.1).sum::<f64>();
                        target_sq[t] = a * ts.iter().map(|s| s.1 * s.1 / w).sum::<f64>();
                    }
                }
                Data::Rt0(Rt0Data {
                    mixed,
                    z,
                    z_flux,
                    e_int,
                    target_int,
                    target_sq,
                })
            }
            Discretization::P1 => {
                let space = P1Space::new(mesh);
                let stiffness = crate::poisson_p1::assemble_stiffness(&space);
                let mass = crate::poisson_p1::assemble_mass(&space);
                let f = crate::poisson_p1::load_vector(&space, spec.load.rhs());
                let zd = stiffness.cholesky()?.solve(&f)?;
                let z = space.to_field(&zd);
                let n = space.ndofs();
                let mut e_load = vec![0.0; n];
                let mut target_load = vec![0.0; n];
                let mut target_samples = vec![[0.0; 3]; if has_tracking { nt } else { 0 }];
                if has_tracking {
                    for t in 0..nt {
                        let a = mesh.area(t);
                        let dofs = space.local_dofs(t);
                        for (b, v) in composite_samples(mesh, t, e_fn, DATA_DEPTH) {
                            for i in 0..3 {
                                if let Some(d) = dofs[i] {
                                    e_load[d] += a * v * b[i];
                                }
                            }
                        }
                        for (b, v) in composite_samples(mesh, t, t_fn, DATA_DEPTH) {
                            for i in 0..3 {
                                if let Some(d) = dofs[i] {
                                    target_load[d] += a * v * b[i];
                                }
                            }
                        }
                        let c = mesh.corners(t);
                        target_samples[t] = MIDPOINT_RULE.map(|l| t_fn(from_barycentric(&c, l)));
                    }
                }
                Data::P1(P1Data {
                    space,
                    stiffness,
                    mass,
                    z,
                    e_load,
                    target_load,
                    target_samples,
                })
            }
        };
        Ok(Self {
            spec: spec.clone(),
            mesh: Arc::clone(mesh),
            bounds: spec.bounds(),
            split_depth,
            data,
        })
    }

    pub fn disc(&self) -> Discretization {
        self.spec.disc
    }

    pub fn bounds(&self) -> &ControlBounds {
        &self.bounds
    }

    pub fn split_depth(&self) -> u32 {
        self.split_depth
    }

    /// Length of the coefficient vector.
    pub fn dim(&self) -> usize {
        match &self.data {
            Data::Rt0(_) => 2 * (self.mesh.num_edges() + self.mesh.num_triangles()),
            Data::P1(d) => 2 * d.space.ndofs(),
        }
    }

    /// Scalar component of `G_h(f)` as a P0 field (RT0 only).
    pub fn datum_p0(&self) -> Option<&P0Field> {
        match &self.data {
            Data::Rt0(d) => Some(&d.z),
            Data::P1(_) => None,
        }
    }

    pub fn datum_flux(&self) -> Option<&RT0Field> {
        match &self.data {
            Data::Rt0(d) => Some(&d.z_flux),
            Data::P1(_) => None,
        }
    }

    /// `G_h(f)` as a P1 field (P1 only).
    pub fn datum_p1(&self) -> Option<&P1Field> {
        match &self.data {
            Data::P1(d) => Some(&d.z),
            Data::Rt0(_) => None,
        }
    }

    pub fn p1_space(&self) -> Option<&P1Space> {
        match &self.data {
            Data::P1(d) => Some(&d.space),
            Data::Rt0(_) => None,
        }
    }

    /// `z_h` at barycentric point `bary` of triangle `t`.
    pub fn datum_at(&self, t: usize, bary: [f64; 3]) -> f64 {
        match &self.data {
            Data::Rt0(d) => d.z.values[t],
            Data::P1(d) => d.z.eval(t, bary),
        }
    }
}

/// Concatenated primal/adjoint coefficients with their regularization parameter.
#[derive(Clone)]
pub struct OptState {
    pub system: Arc<KktSystem>,
    pub gamma: f64,
    pub x: Vec<f64>,
}

impl fmt::Debug for OptState {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("OptState")
            .field("disc", &self.disc())
            .field("level", &self.system.mesh.level())
            .field("gamma", &self.gamma)
            .field("dim", &self.x.len())
            .finish()
    }
}

/// Solution fields of an RT0 state.
#[derive(Debug, Clone)]
pub struct Rt0Fields {
    pub v: RT0Field,
    pub y: P0Field,
    pub v_q: RT0Field,
    pub q: P0Field,
}

/// Solution fields of a P1 state.
#[derive(Debug, Clone)]
pub struct P1Fields {
    pub y: P1Field,
    pub q: P1Field,
}

/// Recovered control: cellwise for RT0, composed with the projection for P1.
#[derive(Debug, Clone)]
pub enum ControlField {
    Cells(P0Field),
    Composed { q: P1Field, z: P1Field, bounds: ControlBounds },
}

impl ControlField {
    pub fn eval(&self, t: usize, bary: [f64; 3]) -> f64 {
        match self {
            ControlField::Cells(l) => l.values[t],
            ControlField::Composed { q, z, bounds } => bounds.control(3.0 * q.eval(t, bary) * z.eval(t, bary)),
        }
    }

    pub fn mesh(&self) -> &Arc<Mesh> {
        match self {
            ControlField::Cells(l) => &l.mesh,
            ControlField::Composed { q, .. } => &q.mesh,
        }
    }

    /// Values on the `4^depth` red subtriangles of every triangle, sampled at
    /// subtriangle centroids (triangle-major order).
    pub fn sample_cells(&self, depth: u32) -> Vec<f64> {
        let subs = subdivide(depth);
        let mesh = self.mesh();
        let mut out = Vec::with_capacity(mesh.num_triangles() * subs.len());
        for t in 0..mesh.num_triangles() {
            for s in &subs {
                out.push(self.eval(t, sub_centroid(s)));
            }
        }
        out
    }
}

pub(crate) fn sub_centroid(s: &[[f64; 3]; 3]) -> [f64; 3] {
    let mut b = [0.0; 3];
    for (k, bk) in b.iter_mut().enumerate() {
        *bk = (s[0][k] + s[1][k] + s[2][k]) / 3.0;
    }
    b
}

/// Control and state classification per triangle (RT0) or per red
/// subtriangle of depth `split_depth` (P1).
#[derive(Debug, Clone, PartialEq)]
pub struct ActiveSets {
    pub cells_per_triangle: usize,
    pub control: Vec<ControlRegion>,
    /// `y + τ ≤ 0`
    pub state: Vec<bool>,
}

impl ActiveSets {
    pub fn count(&self, region: ControlRegion) -> usize {
        self.control.iter().filter(|&&r| r == region).count()
    }

    pub fn state_active_count(&self) -> usize {
        self.state.iter().filter(|&&a| a).count()
    }
}

impl OptState {
    pub fn zeros(system: Arc<KktSystem>, gamma: f64) -> Self {
        let n = system.dim();
        Self {
            system,
            gamma,
            x: vec![0.0; n],
        }
    }

    pub fn new(system: Arc<KktSystem>, gamma: f64, x: Vec<f64>) -> std::result::Result<Self, FieldError> {
        if x.len() != system.dim() {
            return Err(FieldError::Invalid(format!(
                "coefficient vector has length {}, system expects {}",
                x.len(),
                system.dim()
            )));
        }
        if !(gamma > 0.0) {
            return Err(FieldError::Invalid(format!("gamma must be positive, got {gamma}")));
        }
        Ok(Self { system, gamma, x })
    }

    pub fn with_gamma(&self, gamma: f64) -> Self {
        Self {
            gamma,
            ..self.clone()
        }
    }

    pub fn disc(&self) -> Discretization {
        self.system.disc()
    }

    pub fn mesh(&self) -> &Arc<Mesh> {
        &self.system.mesh
    }

    pub fn spec(&self) -> &ProblemSpec {
        &self.system.spec
    }

    pub fn rt0_fields(&self) -> Option<Rt0Fields> {
        let Data::Rt0(_) = &self.system.data else { return None };
        let mesh = self.mesh();
        let (ne, nt) = (mesh.num_edges(), mesh.num_triangles());
        let p0 = |r: std::ops::Range<usize>| P0Field {
            mesh: Arc::clone(mesh),
            values: self.x[r].to_vec(),
        };
        let rt = |r: std::ops::Range<usize>| RT0Field {
            mesh: Arc::clone(mesh),
            fluxes: self.x[r].to_vec(),
        };
        let n1 = ne + nt;
        Some(Rt0Fields {
            v: rt(0..ne),
            y: p0(ne..n1),
            v_q: rt(n1..n1 + ne),
            q: p0(n1 + ne..2 * n1),
        })
    }

    pub fn p1_fields(&self) -> Option<P1Fields> {
        let Data::P1(d) = &self.system.data else { return None };
        let n = d.space.ndofs();
        Some(P1Fields {
            y: d.space.to_field(&self.x[..n]),
            q: d.space.to_field(&self.x[n..]),
        })
    }

    /// State values: per triangle for RT0, per mesh vertex for P1.
    pub fn state_values(&self) -> Vec<f64> {
        match &self.system.data {
            Data::Rt0(_) => {
                let m = self.mesh();
                self.x[m.num_edges()..m.num_edges() + m.num_triangles()].to_vec()
            }
            Data::P1(d) => d.space.to_field(&self.x[..d.space.ndofs()]).values,
        }
    }

    /// Adjoint values, laid out like [`Self::state_values`].
    pub fn adjoint_values(&self) -> Vec<f64> {
        match &self.system.data {
            Data::Rt0(_) => {
                let m = self.mesh();
                let n1 = m.num_edges() + m.num_triangles();
                self.x[n1 + m.num_edges()..].to_vec()
            }
            Data::P1(d) => d.space.to_field(&self.x[d.space.ndofs()..]).values,
        }
    }

    pub fn state_at(&self, t: usize, bary: [f64; 3]) -> f64 {
        match &self.system.data {
            Data::Rt0(_) => self.x[self.mesh().num_edges() + t],
            Data::P1(d) => p1_eval(&d.space, &self.x[..d.space.ndofs()], t, bary),
        }
    }

    pub fn adjoint_at(&self, t: usize, bary: [f64; 3]) -> f64 {
        match &self.system.data {
            Data::Rt0(_) => {
                let m = self.mesh();
                self.x[2 * m.num_edges() + m.num_triangles() + t]
            }
            Data::P1(d) => p1_eval(&d.space, &self.x[d.space.ndofs()..], t, bary),
        }
    }

    pub fn control_at(&self, t: usize, bary: [f64; 3]) -> f64 {
        self.system
            .bounds
            .control(3.0 * self.adjoint_at(t, bary) * self.system.datum_at(t, bary))
    }

    /// `F^γ(x)`
    pub fn residual(&self) -> Vec<f64> {
        match &self.system.data {
            Data::Rt0(d) => rt0::residual(self, d),
            Data::P1(d) => p1::residual(self, d),
        }
    }

    /// Generalized Jacobian `DF^γ(x)` with the zero subgradient at kinks.
    pub fn jacobian(&self) -> SparseMatrix {
        match &self.system.data {
            Data::Rt0(d) => rt0::jacobian(self, d),
            Data::P1(d) => p1::jacobian(self, d),
        }
    }

    /// `J^γ = ∫ l^{-1/3} + (γ/2)‖(y+τ)⁻‖² [+ (α/2)‖y − y_Ω‖²]`
    pub fn objective(&self) -> f64 {
        match &self.system.data {
            Data::Rt0(d) => rt0::objective(self, d),
            Data::P1(d) => p1::objective(self, d),
        }
    }

    pub fn active_sets(&self) -> ActiveSets {
        let mesh = self.mesh();
        let b = &self.system.bounds;
        let tau = self.spec().tau;
        let subs = match self.disc() {
            Discretization::Rt0 => vec![[[1.0, 0.0, 0.0], [0.0, 1.0, 0.0], [0.0, 0.0, 1.0]]],
            Discretization::P1 => subdivide(self.system.split_depth),
        };
        let cells = mesh.num_triangles() * subs.len();
        let mut control = Vec::with_capacity(cells);
        let mut state = Vec::with_capacity(cells);
        for t in 0..mesh.num_triangles() {
            for s in &subs {
                let c = sub_centroid(s);
                control.push(b.classify(3.0 * self.adjoint_at(t, c) * self.system.datum_at(t, c)));
                state.push(self.state_at(t, c) + tau <= 0.0);
            }
        }
        ActiveSets {
            cells_per_triangle: subs.len(),
            control,
            state,
        }
    }

    pub fn control_field(&self) -> ControlField {
        match &self.system.data {
            Data::Rt0(d) => {
                let q = self.adjoint_values();
                ControlField::Cells(P0Field {
                    mesh: Arc::clone(self.mesh()),
                    values: recover_control(&q, &d.z.values, &self.system.bounds),
                })
            }
            Data::P1(d) => ControlField::Composed {
                q: d.space.to_field(&self.x[d.space.ndofs()..]),
                z: d.z.clone(),
                bounds: self.system.bounds,
            },
        }
    }

    /// `ν^γ` at the state's degrees of freedom (see [`Self::state_values`]).
    pub fn multiplier(&self) -> Vec<f64> {
        moreau_yosida_multiplier(&self.state_values(), self.gamma, self.spec().tau)
    }

    /// `‖(y + τ)⁻‖_∞`; for P1 the extremum of each linear piece is at a vertex.
    pub fn constraint_violation(&self) -> f64 {
        let tau = self.spec().tau;
        self.state_values().iter().fold(0.0, |m, &y| m.max(-(y + tau).min(0.0)))
    }

    /// Hash of every pointwise classification the residual depends on. Equal
    /// fingerprints at two states mean the residual is smooth between them.
    pub fn classification_fingerprint(&self) -> u64 {
        let mut h = std::collections::hash_map::DefaultHasher::new();
        match &self.system.data {
            Data::Rt0(_) => {
                let sets = self.active_sets();
                sets.control.hash(&mut h);
                let strict: Vec<bool> = (0..self.mesh().num_triangles())
                    .map(|t| self.state_at(t, [1.0 / 3.0; 3]) + self.spec().tau < 0.0)
                    .collect();
                strict.hash(&mut h);
            }
            Data::P1(d) => p1::fingerprint(self, d, &mut h),
        }
        h.finish()
    }
}

fn p1_eval(space: &P1Space, dofs: &[f64], t: usize, bary: [f64; 3]) -> f64 {
    space
        .local_dofs(t)
        .iter()
        .zip(bary)
        .map(|(d, b)| d.map_or(0.0, |d| b * dofs[d]))
        .sum()
}

fn tag_check(state: &OptState, expected: Discretization) -> std::result::Result<(), FieldError> {
    if state.disc() != expected {
        return Err(FieldError::TagMismatch {
            expected: expected.name(),
            got: state.disc().name(),
        });
    }
    Ok(())
}

pub fn residual_rt0(state: &OptState) -> std::result::Result<Vec<f64>, FieldError> {
    tag_check(state, Discretization::Rt0)?;
    Ok(state.residual())
}

pub fn residual_p1(state: &OptState) -> std::result::Result<Vec<f64>, FieldError> {
    tag_check(state, Discretization::P1)?;
    Ok(state.residual())
}

pub fn jacobian(state: &OptState) -> SparseMatrix {
    state.jacobian()
}

pub fn objective(state: &OptState) -> f64 {
    state.objective()
}

#[cfg(test)]
mod tests;
