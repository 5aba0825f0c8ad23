use std::sync::Arc;
use std::time::Instant;

use crate::error::{Error, FieldError, Result};
use crate::kkt::{Discretization, KktSystem, OptState, ProblemSpec};
use crate::mesh::{ancestor_map, build_uniform, Mesh};
use crate::solver::{newton_solve, run_path, NewtonOptions, PathConfig, PathRun};

use super::eoc::compute_eoc;
use super::errors::{measure, ExactSolution, FieldErrors, Truth};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum NormTag {
    LinfY,
    L2L,
    H1Y,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ErrorRecord {
    pub level: u32,
    pub h: f64,
    pub gamma: f64,
    pub disc: Discretization,
    pub errors: Vec<(NormTag, f64)>,
    pub newton_iters: usize,
    pub wall_s: f64,
}

impl ErrorRecord {
    pub fn new(state: &OptState, errors: &FieldErrors, newton_iters: usize, wall_s: f64) -> Self {
        let mut list = vec![(NormTag::LinfY, errors.linf_y), (NormTag::L2L, errors.l2_l)];
        if let Some(h1) = errors.h1_y {
            list.push((NormTag::H1Y, h1));
        }
        Self {
            level: state.mesh().level(),
            h: state.mesh().h(),
            gamma: state.gamma,
            disc: state.disc(),
            errors: list,
            newton_iters,
            wall_s,
        }
    }

    pub fn error(&self, tag: NormTag) -> Option<f64> {
        self.errors.iter().find(|e| e.0 == tag).map(|e| e.1)
    }
}

/// Error records of consecutive levels; EOC columns are derived on demand.
#[derive(Debug, Clone, PartialEq)]
pub struct EocTable {
    pub disc: Discretization,
    pub records: Vec<ErrorRecord>,
    /// Set when the run stopped before the last requested level.
    pub failure: Option<String>,
}

impl EocTable {
    /// EOC per row for `tag`; `None` in the first row and wherever an error is
    /// missing or nonpositive.
    pub fn eoc(&self, tag: NormTag) -> Vec<Option<f64>> {
        let mut out = vec![None];
        for w in self.records.windows(2) {
            let pair = match (w[0].error(tag), w[1].error(tag)) {
                (Some(a), Some(b)) => compute_eoc(&[(w[0].h, a), (w[1].h, b)]).ok().map(|v| v[0]),
                _ => None,
            };
            out.push(pair);
        }
        out.truncate(self.records.len());
        out
    }

    /// Aligned text table with six significant digits.
    pub fn to_pretty(&self) -> String {
        let p1 = self.disc == Discretization::P1;
        let mut s = format!(
            "{:>5} {:>12} {:>12} {:>12} {:>6} {:>12} {:>6}",
            "level", "h", "gamma", "err_linf_y", "eoc_y", "err_l2_l", "eoc_l"
        );
        if p1 {
            s += &format!(" {:>12} {:>6}", "err_h1_y", "eoc_h1");
        }
        s += &format!(" {:>6} {:>9}\n", "newton", "wall_s");
        let ey = self.eoc(NormTag::LinfY);
        let el = self.eoc(NormTag::L2L);
        let eh = self.eoc(NormTag::H1Y);
        let sci = |v: Option<f64>| v.map_or("-".to_string(), |v| format!("{v:.5e}"));
        let fix = |v: Option<f64>| v.map_or("-".to_string(), |v| format!("{v:.2}"));
        for (i, r) in self.records.iter().enumerate() {
            s += &format!(
                "{:>5} {:>12} {:>12} {:>12} {:>6} {:>12} {:>6}",
                r.level,
                sci(Some(r.h)),
                sci(Some(r.gamma)),
                sci(r.error(NormTag::LinfY)),
                fix(ey[i]),
                sci(r.error(NormTag::L2L)),
                fix(el[i])
            );
            if p1 {
                s += &format!(" {:>12} {:>6}", sci(r.error(NormTag::H1Y)), fix(eh[i]));
            }
            s += &format!(" {:>6} {:>9.3}\n", r.newton_iters, r.wall_s);
        }
        if let Some(f) = &self.failure {
            s += &format!("stopped: {f}\n");
        }
        s
    }
}

/// Reference for [`run_table`].
#[derive(Debug, Clone)]
pub enum TableTruth {
    Exact(ExactSolution),
    /// Reference solve on the same path continued up to this level.
    ReferenceLevel(u32),
}

fn step_errors(run: &PathRun, i: usize, truth: &Truth) -> Result<ErrorRecord> {
    let step = &run.steps[i];
    let errors = measure(&step.state, truth)?;
    Ok(ErrorRecord::new(&step.state, &errors, step.report.iterations, step.wall_s))
}

/// Runs the coupled path and tabulates errors per level.
pub fn run_table(spec: &ProblemSpec, cfg: &PathConfig, truth: &TableTruth) -> Result<EocTable> {
    match truth {
        TableTruth::Exact(exact) => {
            let run = run_path(spec, cfg)?;
            let truth = Truth::Exact(*exact);
            let records = (0..run.steps.len())
                .map(|i| step_errors(&run, i, &truth))
                .collect::<Result<Vec<_>>>()?;
            Ok(EocTable {
                disc: spec.disc,
                records,
                failure: run.failure.map(|f| f.error.to_string()),
            })
        }
        TableTruth::ReferenceLevel(ref_level) => {
            let last = cfg.level0 + cfg.levels as u32 - 1;
            if *ref_level <= last {
                return Err(Error::Invalid(format!(
                    "reference level {ref_level} must exceed the finest tabulated level {last}"
                )));
            }
            let mut full = cfg.clone();
            full.levels = (*ref_level - cfg.level0 + 1) as usize;
            full.stop_rel_change = 0.0;
            let run = run_path(spec, &full)?;
            if run.steps.len() < full.levels {
                let why = run
                    .failure
                    .as_ref()
                    .map_or_else(|| "path stopped early".to_string(), |f| f.error.to_string());
                return Ok(EocTable {
                    disc: spec.disc,
                    records: Vec::new(),
                    failure: Some(format!("reference level {ref_level} not reached: {why}")),
                });
            }
            let ri = run.steps.len() - 1;
            let reference = run.steps[ri].state.clone();
            let mut records = Vec::with_capacity(cfg.levels);
            for i in 0..cfg.levels {
                let chain: Vec<&crate::mesh::Prolongation> = run.prolongations[i..ri].iter().collect();
                let truth = Truth::Reference {
                    state: reference.clone(),
                    ancestors: Some(Arc::new(ancestor_map(&chain))),
                };
                records.push(step_errors(&run, i, &truth)?);
            }
            Ok(EocTable {
                disc: spec.disc,
                records,
                failure: None,
            })
        }
    }
}

/// One point of a γ-sweep; `failure` is set when Newton did not converge and
/// the errors are then absent. `regularization` holds the distance to the
/// solution at the largest converged `γ` on the same mesh.
#[derive(Debug, Clone, PartialEq)]
pub struct SweepPoint {
    pub gamma: f64,
    pub record: Option<ErrorRecord>,
    pub regularization: Option<ErrorRecord>,
    pub failure: Option<String>,
}

/// Solves on one mesh for every `γ` in increasing order, warm-starting each
/// from the last converged solution. With `truth = None` the solution at the
/// largest `γ` on the same mesh serves as reference.
pub fn gamma_sweep(
    spec: &ProblemSpec,
    level: u32,
    gammas: &[f64],
    truth: Option<&ExactSolution>,
    newton: &NewtonOptions,
) -> Result<Vec<SweepPoint>> {
    if gammas.windows(2).any(|w| !(w[1] > w[0])) || gammas.first().is_some_and(|&g| !(g > 0.0)) {
        return Err(FieldError::Invalid("gamma list must be positive and increasing".into()).into());
    }
    let mesh: Arc<Mesh> = Arc::new(build_uniform(level)?);
    let system = Arc::new(KktSystem::new(&mesh, spec)?);
    let mut current = OptState::zeros(system, gammas.first().copied().unwrap_or(1.0));
    let mut solved: Vec<(f64, std::result::Result<(OptState, usize, f64), String>)> = Vec::new();
    for &g in gammas {
        let timer = Instant::now();
        match newton_solve(&current, g, newton) {
            Ok((state, report)) => {
                current = state.clone();
                solved.push((g, Ok((state, report.iterations, timer.elapsed().as_secs_f64()))));
            }
            Err(e) => {
                log::warn!("sweep: {e}");
                solved.push((g, Err(e.to_string())));
            }
        }
    }
    let reference = solved
        .iter()
        .rev()
        .find_map(|(_, r)| r.as_ref().ok())
        .map(|(s, _, _)| Truth::Reference {
            state: s.clone(),
            ancestors: None,
        });
    let exact = truth.map(|e| Truth::Exact(*e));
    solved
        .into_iter()
        .map(|(gamma, r)| match r {
            Ok((state, iters, wall)) => {
                let record = |t: &Truth| -> Result<ErrorRecord> {
                    Ok(ErrorRecord::new(&state, &measure(&state, t)?, iters, wall))
                };
                let regularization = reference.as_ref().map(record).transpose()?;
                let record = match &exact {
                    Some(t) => Some(record(t)?),
                    None => regularization.clone(),
                };
                Ok(SweepPoint {
                    gamma,
                    record,
                    regularization,
                    failure: None,
                })
            }
            Err(msg) => Ok(SweepPoint {
                gamma,
                record: None,
                regularization: None,
                failure: Some(msg),
            }),
        })
        .collect()
}
