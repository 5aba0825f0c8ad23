use std::sync::Arc;

use plate_core::harness::{
    active_set_boundaries, export_state_vtk, gamma_sweep, load_config, read_table_csv, run_table, table_to_csv,
    vtk_string, write_segments_csv, write_table_csv, BoundaryKind, ExactSolution, NormTag, TableTruth, TABLE_HEADER,
};
use plate_core::kkt::{Discretization, KktSystem, OptState};
use plate_core::mesh::{build_uniform, load_mesh};
use plate_core::poisson_rt0::P0Field;
use plate_core::problems::{example1_spec, example2_spec};
use plate_core::solver::{newton_solve, run_path, NewtonOptions, PathConfig};
use plate_core::Error;

fn scratch_dir(name: &str) -> std::path::PathBuf {
    let d = std::env::temp_dir().join(format!("plate-core-{name}-{}", std::process::id()));
    std::fs::create_dir_all(&d).unwrap();
    d
}

#[test]
fn identical_runs_have_identical_histories() {
    let spec = example1_spec(Discretization::Rt0);
    let cfg = PathConfig::new(Discretization::Rt0, 3, 400.0, 3);
    let a = run_path(&spec, &cfg).unwrap();
    let b = run_path(&spec, &cfg).unwrap();
    assert_eq!(a.steps.len(), b.steps.len());
    for (x, y) in a.steps.iter().zip(&b.steps) {
        assert_eq!(x.report.residuals, y.report.residuals);
        assert_eq!(x.state.x, y.state.x);
        assert_eq!(x.objective, y.objective);
    }
}

#[test]
fn coupled_schedules() {
    let rt0 = run_path(&example1_spec(Discretization::Rt0), &PathConfig::new(Discretization::Rt0, 4, 400.0, 4)).unwrap();
    let g: Vec<f64> = rt0.steps.iter().map(|s| s.gamma).collect();
    assert_eq!(g, vec![400.0, 1600.0, 6400.0, 25600.0]);
    let p1 = run_path(&example2_spec(Discretization::P1), &PathConfig::new(Discretization::P1, 4, 16.0, 3)).unwrap();
    let g: Vec<f64> = p1.steps.iter().map(|s| s.gamma).collect();
    assert_eq!(g, vec![16.0, 256.0, 4096.0]);
    let levels: Vec<u32> = p1.steps.iter().map(|s| s.level).collect();
    assert_eq!(levels, vec![4, 5, 6]);
}

#[test]
fn newton_tail_is_superlinear() {
    let run = run_path(&example1_spec(Discretization::Rt0), &PathConfig::new(Discretization::Rt0, 4, 400.0, 4)).unwrap();
    for s in &run.steps {
        let r = &s.report.residuals;
        let n = r.len();
        assert!(n >= 3, "{r:?}");
        assert!(r[n - 1] <= 10.0 * r[n - 2].powf(1.5), "level {}: {r:?}", s.level);
    }
}

#[test]
fn warm_start_beats_cold_start_on_most_levels() {
    let spec = example1_spec(Discretization::Rt0);
    let run = run_path(&spec, &PathConfig::new(Discretization::Rt0, 4, 400.0, 4)).unwrap();
    let mut better = 0;
    for s in &run.steps[1..] {
        let cold = OptState::zeros(Arc::clone(&s.state.system), s.gamma);
        let (_, rep) = newton_solve(&cold, s.gamma, &NewtonOptions::default()).unwrap();
        if s.report.iterations <= rep.iterations {
            better += 1;
        }
    }
    assert!(2 * better > run.steps.len() - 1, "{better}");
}

#[test]
fn warm_and_cold_sweep_answers_agree() {
    let spec = example1_spec(Discretization::Rt0);
    let opts = NewtonOptions::default();
    let gammas = [1e2, 1e3, 1e4];
    let warm = gamma_sweep(&spec, 5, &gammas, Some(&ExactSolution::example1()), &opts).unwrap();
    let mesh = Arc::new(build_uniform(5).unwrap());
    let sys = Arc::new(KktSystem::new(&mesh, &spec).unwrap());
    let (cold, _) = newton_solve(&OptState::zeros(sys, 1e4), 1e4, &opts).unwrap();
    let (mut warm_state, _) = newton_solve(&OptState::zeros(Arc::clone(&cold.system), 1e2), 1e2, &opts).unwrap();
    for g in [1e3, 1e4] {
        warm_state = newton_solve(&warm_state, g, &opts).unwrap().0;
    }
    let gap = cold
        .state_values()
        .iter()
        .zip(warm_state.state_values())
        .fold(0.0f64, |m, (a, b)| m.max((a - b).abs()));
    assert!(gap <= 10.0 * opts.tol, "{gap}");
    let last = warm.last().unwrap().record.as_ref().unwrap();
    assert!(last.error(NormTag::LinfY).unwrap() > 0.0);
}

#[test]
fn sweep_rejects_unsorted_gammas() {
    let spec = example1_spec(Discretization::Rt0);
    assert!(gamma_sweep(&spec, 3, &[10.0, 1.0], None, &NewtonOptions::default()).is_err());
}

#[test]
fn reference_table_needs_finer_level() {
    let spec = example2_spec(Discretization::P1);
    let cfg = PathConfig::new(Discretization::P1, 3, 16.0, 2);
    assert!(matches!(run_table(&spec, &cfg, &TableTruth::ReferenceLevel(4)), Err(Error::Invalid(_))));
}

#[test]
fn table_file_round_trip_and_header() {
    let spec = example1_spec(Discretization::Rt0);
    let table = run_table(
        &spec,
        &PathConfig::new(Discretization::Rt0, 3, 100.0, 2),
        &TableTruth::Exact(ExactSolution::example1()),
    )
    .unwrap();
    let csv = table_to_csv(&table);
    assert_eq!(csv.lines().next().unwrap(), TABLE_HEADER.join(","));
    let dir = scratch_dir("table");
    let path = dir.join("t.csv");
    write_table_csv(&table, &path).unwrap();
    assert_eq!(read_table_csv(&path).unwrap(), table);
    std::fs::remove_dir_all(dir).unwrap();
}

#[test]
fn vtk_of_level_one_p0_field() {
    let mesh = Arc::new(build_uniform(1).unwrap());
    let f = P0Field {
        mesh: Arc::clone(&mesh),
        values: vec![1.0, 2.0],
    };
    let s = vtk_string(&mesh, &[], &[("f", &f.values)]).unwrap();
    assert!(s.contains("CELLS 2 8"));
    assert!(s.contains("CELL_DATA 2"));
    assert!(vtk_string(&mesh, &[], &[("f", &[1.0])]).is_err());
}

#[test]
fn state_export_writes_files() {
    let dir = scratch_dir("vtk");
    for disc in [Discretization::Rt0, Discretization::P1] {
        let mesh = Arc::new(build_uniform(3).unwrap());
        let sys = Arc::new(KktSystem::new(&mesh, &example2_spec(disc)).unwrap());
        let (st, _) = newton_solve(&OptState::zeros(sys, 100.0), 100.0, &NewtonOptions::default()).unwrap();
        let files = export_state_vtk(&st, &dir, disc.name()).unwrap();
        assert!(!files.is_empty());
        for f in files {
            let text = std::fs::read_to_string(f).unwrap();
            assert!(text.starts_with("# vtk DataFile"));
        }
    }
    std::fs::remove_dir_all(dir).unwrap();
}

#[test]
fn clamp_boundaries_at_level_five() {
    let dir = scratch_dir("segments");
    for disc in [Discretization::Rt0, Discretization::P1] {
        let mesh = Arc::new(build_uniform(5).unwrap());
        let sys = Arc::new(KktSystem::new(&mesh, &example2_spec(disc)).unwrap());
        let (st, _) = newton_solve(&OptState::zeros(sys, 500.0), 500.0, &NewtonOptions::default()).unwrap();
        let segs = active_set_boundaries(&st, 2);
        assert!(segs.iter().any(|s| s.kind == BoundaryKind::Upper), "{disc}");
        assert!(segs.iter().any(|s| s.kind == BoundaryKind::State), "{disc}");
        for s in &segs {
            for p in [s.a, s.b] {
                assert!((0.0..=1.0).contains(&p[0]) && (0.0..=1.0).contains(&p[1]));
            }
        }
        let path = dir.join(format!("{disc}.csv"));
        write_segments_csv(&segs, &path).unwrap();
        assert_eq!(std::fs::read_to_string(&path).unwrap().lines().count(), segs.len() + 1);
    }
    std::fs::remove_dir_all(dir).unwrap();
}

#[test]
fn io_errors_carry_the_path() {
    let missing = std::env::temp_dir().join("plate-core-does-not-exist/x.cfg");
    match load_config(&missing) {
        Err(Error::Io { path, .. }) => assert_eq!(path, missing),
        other => panic!("{other:?}"),
    }
    assert!(load_mesh(&missing).is_err());
}
