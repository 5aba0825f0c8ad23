//! Semismooth Newton iteration and the γ–h path-following driver.

use std::sync::Arc;
use std::time::Instant;

use thiserror::Error;

use crate::error::{FieldError, LinalgError, Result};
use crate::kkt::{Discretization, KktSystem, OptState, ProblemSpec};
use crate::linalg::norm2;
use crate::mesh::{build_uniform, refine, Prolongation};
use crate::quadrature::DEFAULT_SPLIT_DEPTH;

#[derive(Debug, Clone, PartialEq)]
pub struct NewtonReport {
    pub level: u32,
    pub gamma: f64,
    pub iterations: usize,
    /// `‖F^γ(x_n)‖₂`, starting with the initial iterate.
    pub residuals: Vec<f64>,
    pub converged: bool,
    /// Number of step halvings in each iteration.
    pub damping: Vec<u32>,
}

impl NewtonReport {
    pub fn final_residual(&self) -> f64 {
        self.residuals.last().copied().unwrap_or(f64::NAN)
    }
}

#[derive(Debug, Clone, Error)]
pub enum SolverError {
    #[error("singular Jacobian at level {level}, gamma {gamma:e}, iteration {iteration}: {source}")]
    SingularJacobian {
        level: u32,
        gamma: f64,
        iteration: usize,
        #[source]
        source: LinalgError,
    },
    #[error(
        "Newton failed to converge at level {}, gamma {:e}: residual {:e} after {} iterations",
        .report.level, .report.gamma, .report.final_residual(), .report.iterations
    )]
    NotConverged { report: Box<NewtonReport> },
    #[error("non-finite residual at level {level}, gamma {gamma:e}, iteration {iteration}")]
    NonFinite { level: u32, gamma: f64, iteration: usize },
}

impl SolverError {
    pub fn level(&self) -> u32 {
        match self {
            SolverError::SingularJacobian { level, .. } | SolverError::NonFinite { level, .. } => *level,
            SolverError::NotConverged { report } => report.level,
        }
    }

    pub fn gamma(&self) -> f64 {
        match self {
            SolverError::SingularJacobian { gamma, .. } | SolverError::NonFinite { gamma, .. } => *gamma,
            SolverError::NotConverged { report } => report.gamma,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct NewtonOptions {
    pub tol: f64,
    pub max_iterations: usize,
    pub max_halvings: u32,
}

impl Default for NewtonOptions {
    fn default() -> Self {
        Self {
            tol: 1e-3,
            max_iterations: 30,
            max_halvings: 10,
        }
    }
}

/// Damped semismooth Newton on `F^γ(x) = 0` starting from `x0` (whose own `γ`
/// is ignored).
///
/// A step is halved until the residual norm decreases; after
/// `max_halvings` halvings the shortest step is taken anyway.
pub fn newton_solve(
    x0: &OptState,
    gamma: f64,
    opts: &NewtonOptions,
) -> std::result::Result<(OptState, NewtonReport), SolverError> {
    let level = x0.mesh().level();
    let mut x = x0.with_gamma(gamma);
    let mut r = x.residual();
    let mut norm = norm2(&r);
    let mut report = NewtonReport {
        level,
        gamma,
        iterations: 0,
        residuals: vec![norm],
        converged: false,
        damping: Vec::new(),
    };
    log::debug!("newton level {level} gamma {gamma:e} it 0 residual {norm:e}");
    if !norm.is_finite() {
        return Err(SolverError::NonFinite {
            level,
            gamma,
            iteration: 0,
        });
    }
    for it in 0..opts.max_iterations {
        if norm <= opts.tol {
            report.converged = true;
            return Ok((x, report));
        }
        let singular = |source| SolverError::SingularJacobian {
            level,
            gamma,
            iteration: it,
            source,
        };
        let neg: Vec<f64> = r.iter().map(|v| -v).collect();
        let d = x.jacobian().lu().and_then(|lu| lu.solve(&neg)).map_err(singular)?;
        let mut step = 1.0;
        let mut halvings = 0;
        let (trial, trial_r, trial_norm) = loop {
            let mut t = x.clone();
            for (xi, di) in t.x.iter_mut().zip(&d) {
                *xi += step * di;
            }
            let tr = t.residual();
            let tn = norm2(&tr);
            if (tn.is_finite() && tn < norm) || halvings >= opts.max_halvings {
                break (t, tr, tn);
            }
            step *= 0.5;
            halvings += 1;
        };
        if !trial_norm.is_finite() {
            return Err(SolverError::NonFinite {
                level,
                gamma,
                iteration: it + 1,
            });
        }
        log::debug!("newton level {level} gamma {gamma:e} it {} residual {trial_norm:e} halvings {halvings}", it + 1);
        x = trial;
        r = trial_r;
        norm = trial_norm;
        report.iterations = it + 1;
        report.residuals.push(norm);
        report.damping.push(halvings);
    }
    if norm <= opts.tol {
        report.converged = true;
        return Ok((x, report));
    }
    Err(SolverError::NotConverged { report: Box::new(report) })
}

#[derive(Debug, Clone, PartialEq)]
pub struct PathConfig {
    pub level0: u32,
    pub gamma0: f64,
    pub kappa: f64,
    pub levels: usize,
    pub newton: NewtonOptions,
    /// Stop once `|J_n − J_{n−1}| / |J_n|` falls below this value.
    pub stop_rel_change: f64,
    /// Retries per level with `γ` scaled by `2^{κ/2}` instead of `2^κ`.
    pub conservative_retries: u32,
    pub split_depth: u32,
}

impl PathConfig {
    pub fn new(disc: Discretization, level0: u32, gamma0: f64, levels: usize) -> Self {
        Self {
            level0,
            gamma0,
            kappa: disc.default_kappa(),
            levels,
            newton: NewtonOptions::default(),
            stop_rel_change: 1e-10,
            conservative_retries: 1,
            split_depth: DEFAULT_SPLIT_DEPTH,
        }
    }

    pub fn validate(&self) -> std::result::Result<(), FieldError> {
        if self.level0 < 1 {
            return Err(FieldError::Invalid("start level must be at least 1".into()));
        }
        if !(self.gamma0 > 0.0) || !(self.kappa > 0.0) {
            return Err(FieldError::Invalid(format!(
                "gamma0 and kappa must be positive, got {} and {}",
                self.gamma0, self.kappa
            )));
        }
        if self.levels == 0 {
            return Err(FieldError::Invalid("path needs at least one level".into()));
        }
        Ok(())
    }

    /// Nominal `γ` at the `n`-th level of the path.
    pub fn gamma_at(&self, n: usize) -> f64 {
        self.gamma0 * 2f64.powf(self.kappa * n as f64)
    }
}

#[derive(Debug, Clone)]
pub struct PathStep {
    pub level: u32,
    pub gamma: f64,
    pub state: OptState,
    pub report: NewtonReport,
    pub objective: f64,
    pub wall_s: f64,
    /// Set when the level was reached only through a conservative retry.
    pub retried: bool,
}

#[derive(Debug, Clone)]
pub struct PathFailure {
    pub level: u32,
    pub gamma: f64,
    pub error: SolverError,
}

/// Levels completed so far and, if the path stopped early, why.
#[derive(Debug, Clone)]
pub struct PathRun {
    pub steps: Vec<PathStep>,
    /// `prolongations[i]` maps the mesh of `steps[i]` to the next level.
    pub prolongations: Vec<Prolongation>,
    pub failure: Option<PathFailure>,
}

impl PathRun {
    pub fn completed(&self) -> bool {
        self.failure.is_none()
    }

    pub fn max_gamma(&self) -> Option<f64> {
        self.steps.iter().map(|s| s.gamma).reduce(f64::max)
    }
}

/// Algorithm: at each level solve from the prolonged previous iterate, then
/// refine and multiply `γ` by `2^κ`.
pub fn run_path(spec: &ProblemSpec, cfg: &PathConfig) -> Result<PathRun> {
    run_path_with(spec, cfg, |_| {})
}

pub fn run_path_with(spec: &ProblemSpec, cfg: &PathConfig, mut observe: impl FnMut(&PathStep)) -> Result<PathRun> {
    cfg.validate()?;
    spec.validate()?;
    let mut mesh = Arc::new(build_uniform(cfg.level0)?);
    let mut start = OptState::zeros(
        Arc::new(KktSystem::with_split_depth(&mesh, spec, cfg.split_depth)?),
        cfg.gamma0,
    );
    let mut steps: Vec<PathStep> = Vec::new();
    let mut prolongations: Vec<Prolongation> = Vec::new();
    let mut prev_gamma: Option<f64> = None;
    for n in 0..cfg.levels {
        if n > 0 {
            let (fine, prolongation) = refine(&mesh)?;
            let system = Arc::new(KktSystem::with_split_depth(&fine, spec, cfg.split_depth)?);
            start = prolong_into(&steps[n - 1].state, &prolongation, system)?;
            prolongations.push(prolongation);
            mesh = fine;
        }
        let base = prev_gamma.unwrap_or(cfg.gamma0 * 2f64.powf(-cfg.kappa));
        let timer = Instant::now();
        let mut gamma = base * 2f64.powf(cfg.kappa);
        let mut outcome = newton_solve(&start, gamma, &cfg.newton);
        let mut retried = false;
        let mut attempts = 0;
        while outcome.is_err() && attempts < cfg.conservative_retries {
            let err = outcome.as_ref().err().expect("checked");
            log::warn!("{err}; retrying with a smaller increase of gamma");
            attempts += 1;
            retried = true;
            gamma = base * 2f64.powf(cfg.kappa / 2f64.powi(attempts as i32));
            outcome = newton_solve(&start, gamma, &cfg.newton);
        }
        let (state, report) = match outcome {
            Ok(v) => v,
            Err(error) => {
                prolongations.truncate(steps.len().saturating_sub(1));
                return Ok(PathRun {
                    steps,
                    prolongations,
                    failure: Some(PathFailure {
                        level: mesh.level(),
                        gamma,
                        error,
                    }),
                })
            }
        };
        let objective = state.objective();
        let step = PathStep {
            level: mesh.level(),
            gamma,
            state,
            report,
            objective,
            wall_s: timer.elapsed().as_secs_f64(),
            retried,
        };
        log::info!(
            "level {} gamma {:e}: {} Newton iterations, J = {:.6e}",
            step.level,
            step.gamma,
            step.report.iterations,
            step.objective
        );
        observe(&step);
        prev_gamma = Some(gamma);
        let stop = steps
            .last()
            .map(|p| ((objective - p.objective) / objective).abs() < cfg.stop_rel_change)
            .unwrap_or(false);
        steps.push(step);
        if stop {
            break;
        }
    }
    Ok(PathRun {
        steps,
        prolongations,
        failure: None,
    })
}

/// Transfers `x` to the fine mesh of `prolongation`, building the fine system
/// with the same problem and split depth.
pub fn prolong_state(x: &OptState, prolongation: &Prolongation) -> Result<OptState> {
    let system = Arc::new(KktSystem::with_split_depth(
        &prolongation.fine,
        x.spec(),
        x.system.split_depth(),
    )?);
    Ok(prolong_into(x, prolongation, system)?)
}

/// Same as [`prolong_state`] with a prebuilt fine system.
pub fn prolong_into(
    x: &OptState,
    prolongation: &Prolongation,
    fine: Arc<KktSystem>,
) -> std::result::Result<OptState, FieldError> {
    if !Arc::ptr_eq(x.mesh(), &prolongation.coarse) || !Arc::ptr_eq(&fine.mesh, &prolongation.fine) {
        return Err(FieldError::MeshMismatch);
    }
    if fine.disc() != x.disc() {
        return Err(FieldError::TagMismatch {
            expected: x.disc().name(),
            got: fine.disc().name(),
        });
    }
    let fmesh = Arc::clone(&fine.mesh);
    let values = match x.disc() {
        Discretization::Rt0 => {
            let f = x.rt0_fields().expect("rt0 state");
            let mut out = Vec::with_capacity(fine.dim());
            for (fluxes, cells) in [(&f.v.fluxes, &f.y.values), (&f.v_q.fluxes, &f.q.values)] {
                let cf = crate::poisson_rt0::RT0Field {
                    mesh: Arc::clone(x.mesh()),
                    fluxes: fluxes.clone(),
                };
                for (e, edge) in fmesh.edges().iter().enumerate() {
                    let t = edge.triangles[0].expect("every edge has a triangle");
                    let v = cf.eval(prolongation.parent[t], fmesh.edge_midpoint(e));
                    let n = fmesh.edge_normal(e);
                    out.push((v[0] * n[0] + v[1] * n[1]) * fmesh.edge_length(e));
                }
                out.extend(prolongation.parent.iter().map(|&p| cells[p]));
            }
            out
        }
        Discretization::P1 => {
            let f = x.p1_fields().expect("p1 state");
            let space = fine.p1_space().expect("p1 system");
            let mut out = Vec::with_capacity(fine.dim());
            for field in [&f.y, &f.q] {
                let full: Vec<f64> = prolongation
                    .vertex_embedding
                    .iter()
                    .map(|&(t, b)| if b[0].is_nan() { 0.0 } else { field.eval(t, b) })
                    .collect();
                out.extend((0..space.ndofs()).map(|k| full[space.vertex(k)]));
            }
            out
        }
    };
    OptState::new(fine, x.gamma, values)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::kkt::Load;
    use crate::mesh::refine;
    use crate::problems::{example1_spec, example2_spec};
    use crate::source::scalar_fn;

    #[test]
    fn linear_regime_one_step() {
        // small load: state never reaches -τ and the adjoint stays 0
        let spec = ProblemSpec {
            tau: 0.1,
            m_lo: 0.35,
            m_hi: 0.45,
            load: Load::Smooth(scalar_fn(|_| 0.01)),
            tracking: None,
            disc: Discretization::Rt0,
        };
        for disc in [Discretization::Rt0, Discretization::P1] {
            let sys = Arc::new(KktSystem::new(&Arc::new(build_uniform(4).unwrap()), &spec.with_disc(disc)).unwrap());
            let x0 = OptState::zeros(sys, 1.0);
            let opts = NewtonOptions {
                tol: 1e-12,
                ..NewtonOptions::default()
            };
            let (x, rep) = newton_solve(&x0, 1.0, &opts).unwrap();
            assert!(rep.converged);
            assert_eq!(rep.iterations, 1);
            assert!(norm2(&x.residual()) < 1e-10);
        }
    }

    #[test]
    fn single_level_path_is_newton() {
        let spec = example2_spec(Discretization::Rt0);
        let cfg = PathConfig::new(Discretization::Rt0, 3, 50.0, 1);
        let run = run_path(&spec, &cfg).unwrap();
        assert_eq!(run.steps.len(), 1);
        let sys = Arc::new(KktSystem::new(&Arc::new(build_uniform(3).unwrap()), &spec).unwrap());
        let (x, rep) = newton_solve(&OptState::zeros(sys, 50.0), 50.0, &cfg.newton).unwrap();
        assert_eq!(run.steps[0].report, rep);
        assert_eq!(run.steps[0].state.x, x.x);
        assert_eq!(run.steps[0].gamma, 50.0);
    }

    #[test]
    fn gamma_schedule() {
        let cfg = PathConfig::new(Discretization::Rt0, 4, 400.0, 4);
        let g: Vec<f64> = (0..4).map(|n| cfg.gamma_at(n)).collect();
        assert_eq!(g, vec![400.0, 1600.0, 6400.0, 25600.0]);
        let cfg = PathConfig::new(Discretization::P1, 4, 16.0, 4);
        let g: Vec<f64> = (0..4).map(|n| cfg.gamma_at(n)).collect();
        assert_eq!(g, vec![16.0, 256.0, 4096.0, 65536.0]);
    }

    fn coarse_state(disc: Discretization) -> (OptState, Prolongation) {
        let m = Arc::new(build_uniform(3).unwrap());
        let sys = Arc::new(KktSystem::new(&m, &example1_spec(disc)).unwrap());
        let mut st = OptState::zeros(sys, 10.0);
        let n = st.x.len();
        for (i, v) in st.x.iter_mut().enumerate() {
            *v = ((i * 31 % n) as f64 / n as f64) - 0.5;
        }
        let (_, p) = refine(&m).unwrap();
        (st, p)
    }

    #[test]
    fn prolonged_p0_copies_parent() {
        let (st, p) = coarse_state(Discretization::Rt0);
        let fine = prolong_state(&st, &p).unwrap();
        let c = st.rt0_fields().unwrap();
        let f = fine.rt0_fields().unwrap();
        for (t, &par) in p.parent.iter().enumerate() {
            assert_eq!(f.y.values[t], c.y.values[par]);
            assert_eq!(f.q.values[t], c.q.values[par]);
        }
    }

    #[test]
    fn prolonged_rt0_preserves_divergence() {
        let (st, p) = coarse_state(Discretization::Rt0);
        let fine = prolong_state(&st, &p).unwrap();
        let c = st.rt0_fields().unwrap();
        let f = fine.rt0_fields().unwrap();
        for (t, &par) in p.parent.iter().enumerate() {
            assert!((f.v.divergence(t) - c.v.divergence(par)).abs() < 1e-9 * (1.0 + c.v.divergence(par).abs()));
            assert!((f.v_q.divergence(t) - c.v_q.divergence(par)).abs() < 1e-9 * (1.0 + c.v_q.divergence(par).abs()));
            let x = p.fine.centroid(t);
            let a = f.v.eval(t, x);
            let b = c.v.eval(par, x);
            assert!((a[0] - b[0]).abs() < 1e-9 && (a[1] - b[1]).abs() < 1e-9);
        }
    }

    #[test]
    fn prolonged_p1_reproduces_linears() {
        let (mut st, p) = coarse_state(Discretization::P1);
        let space = st.system.p1_space().unwrap().clone();
        let n = space.ndofs();
        let coarse = st.mesh().clone();
        // linear functions vanishing on the boundary are zero, so use a
        // field that is linear on every coarse triangle: the coarse P1 field itself
        for k in 0..n {
            let v = coarse.vertices()[space.vertex(k)];
            st.x[k] = v[0] * (1.0 - v[0]) + v[1] * (1.0 - v[1]);
        }
        let fine = prolong_state(&st, &p).unwrap();
        let cf = st.p1_fields().unwrap();
        let ff = fine.p1_fields().unwrap();
        for t in 0..p.fine.num_triangles() {
            let x = p.fine.centroid(t);
            let par = p.parent[t];
            let a = ff.y.eval(t, [1.0 / 3.0; 3]);
            let b = cf.y.eval(par, coarse.barycentric(par, x));
            assert!((a - b).abs() < 1e-12);
        }
    }

    #[test]
    fn prolong_rejects_foreign_mesh() {
        let (st, _) = coarse_state(Discretization::Rt0);
        let other = Arc::new(build_uniform(3).unwrap());
        let (_, p) = refine(&other).unwrap();
        assert!(prolong_state(&st, &p).is_err());
    }
}
