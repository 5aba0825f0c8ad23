//! Experiment orchestration: error tables with EOC columns, γ-sweeps and
//! file output.

mod config;
mod eoc;
mod errors;
mod export;
mod poisson;
mod table;

pub use config::{load_config, parse_config};
pub use eoc::{compute_eoc, loglog_slope, presaturation_slope, saturation_onset};
pub use errors::{measure, ExactSolution, FieldErrors, Truth};
pub use export::{
    active_set_boundaries, export_state_vtk, read_table_csv, table_from_csv, table_to_csv, vtk_string,
    write_segments_csv, write_sweep_csv, write_table_csv, write_vtk, BoundaryKind, Segment, SWEEP_HEADER,
    TABLE_H1_COLUMNS, TABLE_HEADER,
};
pub use poisson::{poisson_convergence, PoissonRow};
pub use table::{gamma_sweep, run_table, EocTable, ErrorRecord, NormTag, SweepPoint, TableTruth};

/// Mesh size of a uniform level: `√2 · 2^{1−k}`.
pub fn level_h(level: u32) -> f64 {
    std::f64::consts::SQRT_2 * 2f64.powi(1 - level as i32)
}
