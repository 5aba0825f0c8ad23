//! CSV, legacy VTK and active-set boundary output.

use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use crate::error::{Error, FieldError, Result};
use crate::kkt::{recover_thickness, ControlRegion, Discretization, OptState};
use crate::mesh::{from_barycentric, refine, Mesh, Point};
use crate::quadrature::subdivide;

use super::table::{EocTable, ErrorRecord, NormTag, SweepPoint};

pub const TABLE_HEADER: [&str; 9] = [
    "level",
    "h",
    "gamma",
    "err_linf_y",
    "eoc_y",
    "err_l2_l",
    "eoc_l",
    "newton_iters",
    "wall_s",
];
pub const TABLE_H1_COLUMNS: [&str; 2] = ["err_h1_y", "eoc_h1"];

fn io_err(path: &Path) -> impl FnOnce(std::io::Error) -> Error + '_ {
    move |source| Error::Io {
        path: path.to_path_buf(),
        source,
    }
}

fn csv_err(path: &Path) -> impl FnOnce(csv::Error) -> Error + '_ {
    move |source| Error::Csv {
        path: path.to_path_buf(),
        source,
    }
}

fn num(v: Option<f64>) -> String {
    v.map_or(String::new(), |v| format!("{v:e}"))
}

/// CSV text of a table; numbers keep full precision so that reading the file
/// back reproduces the table exactly. A failure note goes into a trailing
/// `#` comment line.
pub fn table_to_csv(table: &EocTable) -> String {
    let p1 = table.disc == Discretization::P1;
    let mut w = csv::WriterBuilder::new().from_writer(Vec::new());
    let mut header: Vec<&str> = TABLE_HEADER.to_vec();
    if p1 {
        header.extend(TABLE_H1_COLUMNS);
    }
    w.write_record(&header).expect("in-memory write");
    let ey = table.eoc(NormTag::LinfY);
    let el = table.eoc(NormTag::L2L);
    let eh = table.eoc(NormTag::H1Y);
    for (i, r) in table.records.iter().enumerate() {
        let mut row = vec![
            r.level.to_string(),
            num(Some(r.h)),
            num(Some(r.gamma)),
            num(r.error(NormTag::LinfY)),
            num(ey[i]),
            num(r.error(NormTag::L2L)),
            num(el[i]),
            r.newton_iters.to_string(),
            num(Some(r.wall_s)),
        ];
        if p1 {
            row.push(num(r.error(NormTag::H1Y)));
            row.push(num(eh[i]));
        }
        w.write_record(&row).expect("in-memory write");
    }
    let mut s = String::from_utf8(w.into_inner().expect("flush")).expect("utf8");
    if let Some(f) = &table.failure {
        for line in f.lines() {
            let _ = writeln!(s, "# failed: {line}");
        }
    }
    s
}

pub fn table_from_csv(text: &str) -> std::result::Result<EocTable, FieldError> {
    let bad = |m: String| FieldError::Invalid(m);
    let mut failure: Option<String> = None;
    for line in text.lines() {
        if let Some(rest) = line.strip_prefix("# failed: ") {
            failure = Some(match failure {
                Some(f) => format!("{f}\n{rest}"),
                None => rest.to_string(),
            });
        }
    }
    let mut rdr = csv::ReaderBuilder::new().comment(Some(b'#')).from_reader(text.as_bytes());
    let header: Vec<String> = rdr
        .headers()
        .map_err(|e| bad(e.to_string()))?
        .iter()
        .map(str::to_string)
        .collect();
    if header.len() < 9 || header[..9] != TABLE_HEADER {
        return Err(bad(format!("unexpected table header {header:?}")));
    }
    let p1 = header.len() == 11 && header[9..] == TABLE_H1_COLUMNS;
    let parse = |s: &str| -> std::result::Result<f64, FieldError> { s.parse::<f64>().map_err(|e| bad(format!("{s}: {e}"))) };
    let mut records = Vec::new();
    for row in rdr.records() {
        let row = row.map_err(|e| bad(e.to_string()))?;
        let mut errors = vec![(NormTag::LinfY, parse(&row[3])?), (NormTag::L2L, parse(&row[5])?)];
        if p1 {
            errors.push((NormTag::H1Y, parse(&row[9])?));
        }
        records.push(ErrorRecord {
            level: row[0].parse().map_err(|e| bad(format!("level: {e}")))?,
            h: parse(&row[1])?,
            gamma: parse(&row[2])?,
            disc: if p1 { Discretization::P1 } else { Discretization::Rt0 },
            errors,
            newton_iters: row[7].parse().map_err(|e| bad(format!("newton_iters: {e}")))?,
            wall_s: parse(&row[8])?,
        });
    }
    Ok(EocTable {
        disc: if p1 { Discretization::P1 } else { Discretization::Rt0 },
        records,
        failure,
    })
}

pub fn write_table_csv(table: &EocTable, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    fs::write(path, table_to_csv(table)).map_err(io_err(path))
}

pub fn read_table_csv(path: impl AsRef<Path>) -> Result<EocTable> {
    let path = path.as_ref();
    let text = fs::read_to_string(path).map_err(io_err(path))?;
    Ok(table_from_csv(&text)?)
}

pub const SWEEP_HEADER: [&str; 11] = [
    "level",
    "h",
    "gamma",
    "err_linf_y",
    "err_l2_l",
    "err_h1_y",
    "reg_linf_y",
    "reg_l2_l",
    "newton_iters",
    "wall_s",
    "status",
];

pub fn write_sweep_csv(points: &[SweepPoint], level: u32, h: f64, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    let mut w = csv::Writer::from_path(path).map_err(csv_err(path))?;
    w.write_record(SWEEP_HEADER).map_err(csv_err(path))?;
    for p in points {
        let r = p.record.as_ref();
        let row = [
            level.to_string(),
            num(Some(h)),
            num(Some(p.gamma)),
            num(r.and_then(|r| r.error(NormTag::LinfY))),
            num(r.and_then(|r| r.error(NormTag::L2L))),
            num(r.and_then(|r| r.error(NormTag::H1Y))),
            num(p.regularization.as_ref().and_then(|r| r.error(NormTag::LinfY))),
            num(p.regularization.as_ref().and_then(|r| r.error(NormTag::L2L))),
            r.map_or(String::new(), |r| r.newton_iters.to_string()),
            num(r.map(|r| r.wall_s)),
            p.failure.clone().unwrap_or_else(|| "converged".into()),
        ];
        w.write_record(&row).map_err(csv_err(path))?;
    }
    w.flush().map_err(io_err(path))
}

/// Legacy ASCII VTK unstructured grid with scalar point and cell data.
pub fn vtk_string(mesh: &Mesh, point_data: &[(&str, &[f64])], cell_data: &[(&str, &[f64])]) -> Result<String> {
    for (name, d) in point_data {
        if d.len() != mesh.num_vertices() {
            return Err(FieldError::Invalid(format!("point field {name} has {} values", d.len())).into());
        }
    }
    for (name, d) in cell_data {
        if d.len() != mesh.num_triangles() {
            return Err(FieldError::Invalid(format!("cell field {name} has {} values", d.len())).into());
        }
    }
    let mut s = String::new();
    let _ = writeln!(s, "# vtk DataFile Version 3.0");
    let _ = writeln!(s, "plate thickness fields");
    let _ = writeln!(s, "ASCII");
    let _ = writeln!(s, "DATASET UNSTRUCTURED_GRID");
    let _ = writeln!(s, "POINTS {} double", mesh.num_vertices());
    for p in mesh.vertices() {
        let _ = writeln!(s, "{:e} {:e} 0", p[0], p[1]);
    }
    let nt = mesh.num_triangles();
    let _ = writeln!(s, "CELLS {} {}", nt, 4 * nt);
    for t in mesh.triangles() {
        let _ = writeln!(s, "3 {} {} {}", t[0], t[1], t[2]);
    }
    let _ = writeln!(s, "CELL_TYPES {nt}");
    for _ in 0..nt {
        let _ = writeln!(s, "5");
    }
    let block = |s: &mut String, kind: &str, n: usize, data: &[(&str, &[f64])]| {
        if data.is_empty() {
            return;
        }
        let _ = writeln!(s, "{kind} {n}");
        for (name, d) in data {
            let _ = writeln!(s, "SCALARS {name} double 1");
            let _ = writeln!(s, "LOOKUP_TABLE default");
            for v in *d {
                let _ = writeln!(s, "{v:e}");
            }
        }
    };
    block(&mut s, "POINT_DATA", mesh.num_vertices(), point_data);
    block(&mut s, "CELL_DATA", nt, cell_data);
    Ok(s)
}

pub fn write_vtk(
    path: impl AsRef<Path>,
    mesh: &Mesh,
    point_data: &[(&str, &[f64])],
    cell_data: &[(&str, &[f64])],
) -> Result<()> {
    let path = path.as_ref();
    fs::write(path, vtk_string(mesh, point_data, cell_data)?).map_err(io_err(path))
}

/// Writes the solution fields of `state` to `<stem>.vtk`. For P1 the control
/// and thickness are sampled on the once-refined mesh into `<stem>_control.vtk`.
pub fn export_state_vtk(state: &OptState, dir: impl AsRef<Path>, stem: &str) -> Result<Vec<std::path::PathBuf>> {
    let dir = dir.as_ref();
    let bounds = *state.system.bounds();
    let mesh = state.mesh();
    let y = state.state_values();
    let q = state.adjoint_values();
    let nu = state.multiplier();
    let main = dir.join(format!("{stem}.vtk"));
    match state.disc() {
        Discretization::Rt0 => {
            let z = &state.system.datum_p0().expect("rt0").values;
            let l: Vec<f64> = (0..mesh.num_triangles()).map(|t| state.control_at(t, [1.0 / 3.0; 3])).collect();
            let u = recover_thickness(&l, &bounds)?;
            write_vtk(
                &main,
                mesh,
                &[],
                &[("y", &y), ("q", &q), ("z", z), ("l", &l), ("u", &u), ("nu", &nu)],
            )?;
            Ok(vec![main])
        }
        Discretization::P1 => {
            let z = &state.system.datum_p1().expect("p1").values;
            write_vtk(&main, mesh, &[("y", &y), ("q", &q), ("z", z), ("nu", &nu)], &[])?;
            let (fine, p) = refine(mesh)?;
            let l: Vec<f64> = (0..fine.num_triangles())
                .map(|t| {
                    let par = p.parent[t];
                    state.control_at(par, mesh.barycentric(par, fine.centroid(t)))
                })
                .collect();
            let u = recover_thickness(&l, &bounds)?;
            let ctrl = dir.join(format!("{stem}_control.vtk"));
            write_vtk(&ctrl, &fine, &[], &[("l", &l), ("u", &u)])?;
            Ok(vec![main, ctrl])
        }
    }
}

/// Kind of an active-set boundary segment.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum BoundaryKind {
    /// Boundary of `{3qz ≥ M⁴}`.
    Lower,
    /// Boundary of `{3qz ≤ m⁴}`.
    Upper,
    /// Boundary of `{y + τ ≤ 0}`.
    State,
}

impl BoundaryKind {
    pub fn name(self) -> &'static str {
        match self {
            BoundaryKind::Lower => "lower",
            BoundaryKind::Upper => "upper",
            BoundaryKind::State => "state",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Segment {
    pub kind: BoundaryKind,
    pub a: Point,
    pub b: Point,
}

/// Boundaries of the clamp and state-active sets. RT0: mesh edges separating
/// differently classified triangles. P1: zero level sets of `3 q z − M⁴`,
/// `3 q z − m⁴` and `y + τ`, traced linearly on red subtriangles of depth `depth`.
pub fn active_set_boundaries(state: &OptState, depth: u32) -> Vec<Segment> {
    let mesh = state.mesh();
    let bounds = *state.system.bounds();
    let tau = state.spec().tau;
    let mut out = Vec::new();
    match state.disc() {
        Discretization::Rt0 => {
            let sets = state.active_sets();
            for edge in mesh.edges() {
                let [Some(a), Some(b)] = edge.triangles else { continue };
                let [p, q] = edge.vertices;
                let seg = |kind| Segment {
                    kind,
                    a: mesh.vertices()[p],
                    b: mesh.vertices()[q],
                };
                let (ca, cb) = (sets.control[a], sets.control[b]);
                if (ca == ControlRegion::LowerClamp) != (cb == ControlRegion::LowerClamp) {
                    out.push(seg(BoundaryKind::Lower));
                }
                if (ca == ControlRegion::UpperClamp) != (cb == ControlRegion::UpperClamp) {
                    out.push(seg(BoundaryKind::Upper));
                }
                if sets.state[a] != sets.state[b] {
                    out.push(seg(BoundaryKind::State));
                }
            }
        }
        Discretization::P1 => {
            let subs = subdivide(depth);
            for t in 0..mesh.num_triangles() {
                let c = mesh.corners(t);
                for s in &subs {
                    let pts = s.map(|b| from_barycentric(&c, b));
                    let sv = s.map(|b| 3.0 * state.adjoint_at(t, b) * state.system.datum_at(t, b));
                    let yv = s.map(|b| state.state_at(t, b) + tau);
                    for (kind, vals) in [
                        (BoundaryKind::Lower, sv.map(|v| v - bounds.s_hi)),
                        (BoundaryKind::Upper, sv.map(|v| v - bounds.s_lo)),
                        (BoundaryKind::State, yv),
                    ] {
                        if let Some((a, b)) = zero_crossing(&pts, vals) {
                            out.push(Segment { kind, a, b });
                        }
                    }
                }
            }
        }
    }
    out
}

/// Segment of the zero level set of the linear interpolant of `v` on a triangle.
fn zero_crossing(p: &[Point; 3], v: [f64; 3]) -> Option<(Point, Point)> {
    let mut hits = Vec::with_capacity(2);
    for i in 0..3 {
        let j = (i + 1) % 3;
        let (a, b) = (v[i], v[j]);
        if (a < 0.0) != (b < 0.0) {
            let s = a / (a - b);
            hits.push([p[i][0] + s * (p[j][0] - p[i][0]), p[i][1] + s * (p[j][1] - p[i][1])]);
        }
    }
    (hits.len() == 2).then(|| (hits[0], hits[1]))
}

pub fn write_segments_csv(segments: &[Segment], path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    let mut w = csv::Writer::from_path(path).map_err(csv_err(path))?;
    w.write_record(["kind", "x0", "y0", "x1", "y1"]).map_err(csv_err(path))?;
    for s in segments {
        w.write_record([
            s.kind.name().to_string(),
            format!("{:e}", s.a[0]),
            format!("{:e}", s.a[1]),
            format!("{:e}", s.b[0]),
            format!("{:e}", s.b[1]),
        ])
        .map_err(csv_err(path))?;
    }
    w.flush().map_err(io_err(path))
}
