//! Conforming triangulations of the unit square, red refinement and the
//! transfer data needed to move fields between refinement levels.

use std::collections::HashMap;
use std::fmt::Write as _;
use std::path::Path;
use std::sync::Arc;

use crate::error::MeshError;

pub type Point = [f64; 2];

const GEOM_TOL: f64 = 1e-12;

#[derive(Debug, Clone, PartialEq)]
pub struct Edge {
    /// Endpoints, lower vertex index first. The edge is oriented from
    /// `vertices[0]` to `vertices[1]`.
    pub vertices: [usize; 2],
    /// Adjacent triangles; the second entry is `None` on the boundary.
    pub triangles: [Option<usize>; 2],
}

impl Edge {
    pub fn is_boundary(&self) -> bool {
        self.triangles[1].is_none()
    }
}

#[derive(Debug, Clone)]
pub struct Mesh {
    vertices: Vec<Point>,
    triangles: Vec<[usize; 3]>,
    edges: Vec<Edge>,
    /// `triangle_edges[t][i]` is the edge opposite local vertex `i`.
    triangle_edges: Vec<[usize; 3]>,
    areas: Vec<f64>,
    boundary_vertex: Vec<bool>,
    used_vertex: Vec<bool>,
    level: u32,
    h: f64,
}

impl Mesh {
    /// Builds a mesh from raw vertex/triangle lists and validates it.
    ///
    /// `h` overrides the geometric mesh size (used for the uniform family,
    /// where it is known in closed form).
    pub fn from_parts(
        vertices: Vec<Point>,
        triangles: Vec<[usize; 3]>,
        level: u32,
        h: Option<f64>,
    ) -> Result<Self, MeshError> {
        let nv = vertices.len();
        let mut used_vertex = vec![false; nv];
        let mut areas = Vec::with_capacity(triangles.len());
        for (t, tri) in triangles.iter().enumerate() {
            for &v in tri {
                if v >= nv {
                    return Err(MeshError::Topology {
                        triangle: t,
                        message: format!("vertex index {v} out of range (V = {nv})"),
                    });
                }
                used_vertex[v] = true;
            }
            if tri[0] == tri[1] || tri[1] == tri[2] || tri[0] == tri[2] {
                return Err(MeshError::Topology {
                    triangle: t,
                    message: "repeated vertex".into(),
                });
            }
            let area = signed_area(&[vertices[tri[0]], vertices[tri[1]], vertices[tri[2]]]);
            if area <= 0.0 {
                return Err(MeshError::Topology {
                    triangle: t,
                    message: format!("non-positive signed area {area:e} (inverted or degenerate)"),
                });
            }
            areas.push(area);
        }

        let mut edge_index: HashMap<(usize, usize), usize> = HashMap::new();
        let mut edges: Vec<Edge> = Vec::new();
        // local traversal direction of each stored edge in its first triangle
        let mut first_dir: Vec<(usize, usize)> = Vec::new();
        let mut triangle_edges = Vec::with_capacity(triangles.len());
        for (t, tri) in triangles.iter().enumerate() {
            let mut te = [0usize; 3];
            for i in 0..3 {
                let a = tri[(i + 1) % 3];
                let b = tri[(i + 2) % 3];
                let key = (a.min(b), a.max(b));
                match edge_index.get(&key) {
                    None => {
                        edge_index.insert(key, edges.len());
                        te[i] = edges.len();
                        edges.push(Edge {
                            vertices: [key.0, key.1],
                            triangles: [Some(t), None],
                        });
                        first_dir.push((a, b));
                    }
                    Some(&e) => {
                        if edges[e].triangles[1].is_some() {
                            return Err(MeshError::Topology {
                                triangle: t,
                                message: format!("edge ({}, {}) shared by more than two triangles", key.0, key.1),
                            });
                        }
                        if first_dir[e] == (a, b) {
                            return Err(MeshError::Topology {
                                triangle: t,
                                message: format!("inconsistent orientation across edge ({}, {})", key.0, key.1),
                            });
                        }
                        edges[e].triangles[1] = Some(t);
                        te[i] = e;
                    }
                }
            }
            triangle_edges.push(te);
        }

        let mut boundary_vertex = vec![false; nv];
        for e in edges.iter().filter(|e| e.is_boundary()) {
            let [a, b] = e.vertices;
            if !on_same_square_side(vertices[a], vertices[b]) {
                return Err(MeshError::Topology {
                    triangle: e.triangles[0].unwrap_or(0),
                    message: format!("boundary edge ({a}, {b}) is not on the domain boundary (non-conforming)"),
                });
            }
            boundary_vertex[a] = true;
            boundary_vertex[b] = true;
        }

        let total: f64 = areas.iter().sum();
        if (total - 1.0).abs() > GEOM_TOL {
            return Err(MeshError::Invalid(format!("triangle areas sum to {total}, expected 1")));
        }
        let n_used = used_vertex.iter().filter(|&&u| u).count() as i64;
        let euler = n_used - edges.len() as i64 + triangles.len() as i64;
        if euler != 1 {
            return Err(MeshError::Invalid(format!("Euler characteristic V - E + T = {euler}, expected 1")));
        }

        let h = h.unwrap_or_else(|| {
            edges
                .iter()
                .map(|e| dist(vertices[e.vertices[0]], vertices[e.vertices[1]]))
                .fold(0.0, f64::max)
        });

        Ok(Self {
            vertices,
            triangles,
            edges,
            triangle_edges,
            areas,
            boundary_vertex,
            used_vertex,
            level,
            h,
        })
    }

    pub fn vertices(&self) -> &[Point] {
        &self.vertices
    }
    pub fn triangles(&self) -> &[[usize; 3]] {
        &self.triangles
    }
    pub fn edges(&self) -> &[Edge] {
        &self.edges
    }
    pub fn triangle_edges(&self, t: usize) -> [usize; 3] {
        self.triangle_edges[t]
    }
    pub fn num_vertices(&self) -> usize {
        self.vertices.len()
    }
    pub fn num_edges(&self) -> usize {
        self.edges.len()
    }
    pub fn num_triangles(&self) -> usize {
        self.triangles.len()
    }
    pub fn level(&self) -> u32 {
        self.level
    }
    /// Longest triangle diameter.
    pub fn h(&self) -> f64 {
        self.h
    }
    pub fn area(&self, t: usize) -> f64 {
        self.areas[t]
    }
    pub fn areas(&self) -> &[f64] {
        &self.areas
    }
    pub fn is_boundary_vertex(&self, v: usize) -> bool {
        self.boundary_vertex[v]
    }
    pub fn is_used_vertex(&self, v: usize) -> bool {
        self.used_vertex[v]
    }

    pub fn corners(&self, t: usize) -> [Point; 3] {
        let [a, b, c] = self.triangles[t];
        [self.vertices[a], self.vertices[b], self.vertices[c]]
    }

    pub fn centroid(&self, t: usize) -> Point {
        let p = self.corners(t);
        [(p[0][0] + p[1][0] + p[2][0]) / 3.0, (p[0][1] + p[1][1] + p[2][1]) / 3.0]
    }

    /// Sign relating the global orientation of the edge opposite local vertex
    /// `i` of triangle `t` to the outward normal of `t`: `+1` when the global
    /// normal points out of `t`.
    pub fn edge_sign(&self, t: usize, i: usize) -> f64 {
        let tri = self.triangles[t];
        if tri[(i + 1) % 3] < tri[(i + 2) % 3] {
            1.0
        } else {
            -1.0
        }
    }

    /// Unit normal of edge `e` in its global orientation (the tangent
    /// `v0 -> v1` rotated clockwise).
    pub fn edge_normal(&self, e: usize) -> Point {
        let [a, b] = self.edges[e].vertices;
        let (pa, pb) = (self.vertices[a], self.vertices[b]);
        let len = dist(pa, pb);
        [(pb[1] - pa[1]) / len, -(pb[0] - pa[0]) / len]
    }

    pub fn edge_length(&self, e: usize) -> f64 {
        let [a, b] = self.edges[e].vertices;
        dist(self.vertices[a], self.vertices[b])
    }

    pub fn edge_midpoint(&self, e: usize) -> Point {
        let [a, b] = self.edges[e].vertices;
        midpoint(self.vertices[a], self.vertices[b])
    }

    /// Barycentric coordinates of `p` with respect to triangle `t`.
    pub fn barycentric(&self, t: usize, p: Point) -> [f64; 3] {
        barycentric(&self.corners(t), p)
    }

    /// Serializes to the `V E T` node/element text format.
    pub fn to_text(&self) -> String {
        let mut s = String::new();
        let _ = writeln!(s, "{} {} {}", self.num_vertices(), self.num_edges(), self.num_triangles());
        for p in &self.vertices {
            let _ = writeln!(s, "{:.17e} {:.17e}", p[0], p[1]);
        }
        for t in &self.triangles {
            let _ = writeln!(s, "{} {} {}", t[0], t[1], t[2]);
        }
        s
    }
}

pub fn signed_area(p: &[Point; 3]) -> f64 {
    0.5 * ((p[1][0] - p[0][0]) * (p[2][1] - p[0][1]) - (p[2][0] - p[0][0]) * (p[1][1] - p[0][1]))
}

pub fn barycentric(p: &[Point; 3], x: Point) -> [f64; 3] {
    let det = 2.0 * signed_area(p);
    let l1 = ((p[2][0] - x[0]) * (p[0][1] - x[1]) - (p[0][0] - x[0]) * (p[2][1] - x[1])) / det;
    let l2 = ((p[0][0] - x[0]) * (p[1][1] - x[1]) - (p[1][0] - x[0]) * (p[0][1] - x[1])) / det;
    [1.0 - l1 - l2, l1, l2]
}

pub fn from_barycentric(p: &[Point; 3], l: [f64; 3]) -> Point {
    [
        l[0] * p[0][0] + l[1] * p[1][0] + l[2] * p[2][0],
        l[0] * p[0][1] + l[1] * p[1][1] + l[2] * p[2][1],
    ]
}

fn dist(a: Point, b: Point) -> f64 {
    ((b[0] - a[0]).powi(2) + (b[1] - a[1]).powi(2)).sqrt()
}

fn midpoint(a: Point, b: Point) -> Point {
    [0.5 * (a[0] + b[0]), 0.5 * (a[1] + b[1])]
}

fn on_same_square_side(a: Point, b: Point) -> bool {
    let near = |x: f64, v: f64| (x - v).abs() <= GEOM_TOL;
    (near(a[0], 0.0) && near(b[0], 0.0))
        || (near(a[0], 1.0) && near(b[0], 1.0))
        || (near(a[1], 0.0) && near(b[1], 0.0))
        || (near(a[1], 1.0) && near(b[1], 1.0))
}

/// Uniform triangulation of level `k`: `n = 2^(k-1)` squares per side, each
/// cut by its lower-left to upper-right diagonal.
pub fn build_uniform(level: u32) -> Result<Mesh, MeshError> {
    if level < 1 || level > 30 {
        return Err(MeshError::InvalidLevel(level));
    }
    let n = 1usize << (level - 1);
    let idx = |i: usize, j: usize| j * (n + 1) + i;
    let mut vertices = Vec::with_capacity((n + 1) * (n + 1));
    for j in 0..=n {
        for i in 0..=n {
            vertices.push([i as f64 / n as f64, j as f64 / n as f64]);
        }
    }
    let mut triangles = Vec::with_capacity(2 * n * n);
    for j in 0..n {
        for i in 0..n {
            let (v00, v10, v11, v01) = (idx(i, j), idx(i + 1, j), idx(i + 1, j + 1), idx(i, j + 1));
            triangles.push([v00, v10, v11]);
            triangles.push([v00, v11, v01]);
        }
    }
    let h = std::f64::consts::SQRT_2 / n as f64;
    Mesh::from_parts(vertices, triangles, level, Some(h))
}

/// Transfer data between a mesh and its red refinement.
#[derive(Debug, Clone)]
pub struct Prolongation {
    pub coarse: Arc<Mesh>,
    pub fine: Arc<Mesh>,
    /// Coarse parent of every fine triangle.
    pub parent: Vec<usize>,
    /// For every fine vertex: a coarse triangle containing it and its
    /// barycentric coordinates there.
    pub vertex_embedding: Vec<(usize, [f64; 3])>,
}

/// Red refinement: every triangle is split into four congruent children by
/// joining its edge midpoints.
pub fn refine(coarse: &Arc<Mesh>) -> Result<(Arc<Mesh>, Prolongation), MeshError> {
    let nv = coarse.num_vertices();
    let mut vertices = coarse.vertices.clone();
    vertices.extend((0..coarse.num_edges()).map(|e| coarse.edge_midpoint(e)));

    let mut vertex_embedding: Vec<(usize, [f64; 3])> = vec![(usize::MAX, [0.0; 3]); vertices.len()];
    let mut triangles = Vec::with_capacity(4 * coarse.num_triangles());
    let mut parent = Vec::with_capacity(4 * coarse.num_triangles());
    for (t, &[a, b, c]) in coarse.triangles.iter().enumerate() {
        let te = coarse.triangle_edges[t];
        // midpoint opposite each local vertex
        let (ma, mb, mc) = (nv + te[0], nv + te[1], nv + te[2]);
        triangles.extend_from_slice(&[[a, mc, mb], [mc, b, ma], [mb, ma, c], [ma, mb, mc]]);
        parent.extend_from_slice(&[t; 4]);
        let embed = [
            (a, [1.0, 0.0, 0.0]),
            (b, [0.0, 1.0, 0.0]),
            (c, [0.0, 0.0, 1.0]),
            (ma, [0.0, 0.5, 0.5]),
            (mb, [0.5, 0.0, 0.5]),
            (mc, [0.5, 0.5, 0.0]),
        ];
        for (v, bary) in embed {
            if vertex_embedding[v].0 == usize::MAX {
                vertex_embedding[v] = (t, bary);
            }
        }
    }
    // vertices not touched by any triangle (dangling input vertices)
    for emb in vertex_embedding.iter_mut().filter(|e| e.0 == usize::MAX) {
        *emb = (0, [f64::NAN; 3]);
    }
    let fine = Arc::new(Mesh::from_parts(vertices, triangles, coarse.level + 1, Some(0.5 * coarse.h))?);
    let prolongation = Prolongation {
        coarse: Arc::clone(coarse),
        fine: Arc::clone(&fine),
        parent,
        vertex_embedding,
    };
    Ok((fine, prolongation))
}

/// Maps every triangle of the finest mesh of a refinement chain to its
/// ancestor on the coarsest mesh. `chain[0]` must start at the coarse mesh and
/// each subsequent prolongation continues from the previous fine mesh.
pub fn ancestor_map(chain: &[&Prolongation]) -> Vec<usize> {
    let Some(last) = chain.last() else {
        return Vec::new();
    };
    let mut map: Vec<usize> = (0..last.fine.num_triangles()).collect();
    for p in chain.iter().rev() {
        for a in map.iter_mut() {
            *a = p.parent[*a];
        }
    }
    map
}

/// Reads a mesh in the `V E T` node/element format.
pub fn load_mesh(path: impl AsRef<Path>) -> Result<Mesh, MeshError> {
    let path = path.as_ref();
    let text = std::fs::read_to_string(path).map_err(|source| MeshError::Io {
        path: path.to_path_buf(),
        source,
    })?;
    parse_mesh(&text)
}

pub fn parse_mesh(text: &str) -> Result<Mesh, MeshError> {
    let mut lines = text
        .lines()
        .enumerate()
        .map(|(i, l)| (i + 1, l.trim()))
        .filter(|(_, l)| !l.is_empty() && !l.starts_with('#'));

    let (hline, header) = lines.next().ok_or(MeshError::Parse {
        line: 1,
        message: "missing header `V E T`".into(),
    })?;
    let head: Vec<usize> = parse_fields(hline, header, 3)?;
    let (nv, ne, nt) = (head[0], head[1], head[2]);

    let mut vertices = Vec::with_capacity(nv);
    for _ in 0..nv {
        let (line, l) = lines.next().ok_or(MeshError::Parse {
            line: hline,
            message: format!("expected {nv} vertex lines"),
        })?;
        let xy: Vec<f64> = parse_fields(line, l, 2)?;
        vertices.push([xy[0], xy[1]]);
    }
    let mut triangles = Vec::with_capacity(nt);
    for _ in 0..nt {
        let (line, l) = lines.next().ok_or(MeshError::Parse {
            line: hline,
            message: format!("expected {nt} triangle lines"),
        })?;
        let ijk: Vec<usize> = parse_fields(line, l, 3)?;
        triangles.push([ijk[0], ijk[1], ijk[2]]);
    }
    if let Some((line, _)) = lines.next() {
        return Err(MeshError::Parse {
            line,
            message: "trailing content after triangle list".into(),
        });
    }

    let mesh = Mesh::from_parts(vertices, triangles, 0, None)?;
    if mesh.num_edges() != ne {
        return Err(MeshError::Invalid(format!(
            "header declares {ne} edges but the triangulation has {}",
            mesh.num_edges()
        )));
    }
    let dangling: Vec<usize> = (0..nv).filter(|&v| !mesh.is_used_vertex(v)).collect();
    if !dangling.is_empty() {
        log::warn!("mesh has {} unused vertices (first: {})", dangling.len(), dangling[0]);
    }
    Ok(mesh)
}

fn parse_fields<T: std::str::FromStr>(line: usize, text: &str, count: usize) -> Result<Vec<T>, MeshError> {
    let fields: Vec<&str> = text.split_whitespace().collect();
    if fields.len() != count {
        return Err(MeshError::Parse {
            line,
            message: format!("expected {count} fields, found {}", fields.len()),
        });
    }
    fields
        .iter()
        .map(|f| {
            f.parse::<T>().map_err(|_| MeshError::Parse {
                line,
                message: format!("cannot parse `{f}`"),
            })
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn counts(m: &Mesh) -> (usize, usize, usize) {
        (m.num_vertices(), m.num_edges(), m.num_triangles())
    }

    #[test]
    fn uniform_level_one() {
        let m = build_uniform(1).unwrap();
        assert_eq!(counts(&m), (4, 5, 2));
        assert_eq!(m.h(), std::f64::consts::SQRT_2);
    }

    #[test]
    fn uniform_level_four_counts() {
        let m = build_uniform(4).unwrap();
        assert_eq!(counts(&m), (81, 208, 128));
        assert!((m.h() - 0.17677669529663687).abs() < 1e-15);
    }

    #[test]
    fn uniform_level_six_mesh_size() {
        let m = build_uniform(6).unwrap();
        assert_eq!(m.h(), std::f64::consts::SQRT_2 * 2f64.powi(-5));
        assert!((m.h() - 0.04419417).abs() < 1e-8);
    }

    #[test]
    fn rejects_level_zero() {
        assert!(matches!(build_uniform(0), Err(MeshError::InvalidLevel(0))));
    }

    #[test]
    fn counting_formulas() {
        for k in 1..=6 {
            let n = 1usize << (k - 1);
            let m = build_uniform(k).unwrap();
            assert_eq!(counts(&m), ((n + 1) * (n + 1), 3 * n * n + 2 * n, 2 * n * n));
        }
    }

    #[test]
    fn edge_adjacency() {
        let m = build_uniform(3).unwrap();
        for e in m.edges() {
            let mid = m.edge_midpoint(m.edges().iter().position(|x| x == e).unwrap());
            let on_bdry = mid[0] == 0.0 || mid[0] == 1.0 || mid[1] == 0.0 || mid[1] == 1.0;
            assert_eq!(e.is_boundary(), on_bdry);
            assert!(e.vertices[0] < e.vertices[1]);
        }
    }

    #[test]
    fn refine_level_one() {
        let m = Arc::new(build_uniform(1).unwrap());
        let (f, p) = refine(&m).unwrap();
        assert_eq!(f.num_triangles(), 8);
        assert_eq!(f.h(), std::f64::consts::SQRT_2 / 2.0);
        assert!((f.areas().iter().sum::<f64>() - 1.0).abs() < 1e-12);
        assert_eq!(p.parent.len(), 8);
    }

    #[test]
    fn refine_matches_uniform_family() {
        let m = Arc::new(build_uniform(4).unwrap());
        let (f, _) = refine(&m).unwrap();
        let u = build_uniform(5).unwrap();
        assert_eq!(counts(&f), counts(&u));
        let sorted = |m: &Mesh| {
            let mut v: Vec<(i64, i64)> = m
                .vertices()
                .iter()
                .map(|p| ((p[0] * 1e9).round() as i64, (p[1] * 1e9).round() as i64))
                .collect();
            v.sort();
            v
        };
        assert_eq!(sorted(&f), sorted(&u));
    }

    #[test]
    fn prolongation_children_inside_parent() {
        let m = Arc::new(build_uniform(3).unwrap());
        let (f, p) = refine(&m).unwrap();
        for t in 0..f.num_triangles() {
            let l = m.barycentric(p.parent[t], f.centroid(t));
            assert!(l.iter().all(|&x| x > -1e-12));
        }
        for (v, (t, l)) in p.vertex_embedding.iter().enumerate() {
            assert!((l.iter().sum::<f64>() - 1.0).abs() < 1e-12);
            let x = from_barycentric(&m.corners(*t), *l);
            assert!((x[0] - f.vertices()[v][0]).abs() < 1e-14);
            assert!((x[1] - f.vertices()[v][1]).abs() < 1e-14);
        }
    }

    #[test]
    fn text_round_trip() {
        let m = build_uniform(1).unwrap();
        let back = parse_mesh(&m.to_text()).unwrap();
        assert_eq!(counts(&back), (4, 5, 2));
    }

    #[test]
    fn flipped_triangle_rejected() {
        let text = "4 5 2\n0 0\n1 0\n1 1\n0 1\n0 1 2\n0 3 2\n";
        match parse_mesh(text) {
            Err(MeshError::Topology { triangle, .. }) => assert_eq!(triangle, 1),
            other => panic!("expected topology error, got {other:?}"),
        }
    }

    #[test]
    fn dangling_vertex_accepted() {
        let text = "5 5 2\n0 0\n1 0\n1 1\n0 1\n0.5 0.5\n0 1 2\n0 2 3\n";
        let m = parse_mesh(text).unwrap();
        assert_eq!(m.num_vertices(), 5);
        assert!(!m.is_used_vertex(4));
    }

    #[test]
    fn hanging_node_rejected() {
        // three triangles on the lower-right half, one big triangle on the other half
        let text = "5 7 3\n0 0\n1 0\n1 1\n0 1\n0.5 0.5\n0 1 4\n1 2 4\n0 2 3\n";
        assert!(matches!(parse_mesh(text), Err(MeshError::Topology { .. })));
    }

    #[test]
    fn parse_error_reports_line() {
        let text = "4 5 2\n0 0\n1 x\n1 1\n0 1\n0 1 2\n0 2 3\n";
        match parse_mesh(text) {
            Err(MeshError::Parse { line, .. }) => assert_eq!(line, 3),
            other => panic!("expected parse error, got {other:?}"),
        }
    }
}
