//! Triangle quadrature: the three-point edge-midpoint rule (exact for
//! quadratics) and a region-aware composite variant used where integrands
//! contain pointwise projections.

use crate::mesh::{from_barycentric, signed_area, Point};

/// Barycentric coordinates of the three edge midpoints; each carries weight
/// `|T| / 3`.
pub const MIDPOINT_RULE: [[f64; 3]; 3] = [[0.0, 0.5, 0.5], [0.5, 0.0, 0.5], [0.5, 0.5, 0.0]];

pub const DEFAULT_SPLIT_DEPTH: u32 = 2;

/// Integrates `f` over the triangle with the edge-midpoint rule.
pub fn integrate(corners: &[Point; 3], mut f: impl FnMut(Point) -> f64) -> f64 {
    let area = signed_area(corners).abs();
    MIDPOINT_RULE
        .iter()
        .map(|&l| f(from_barycentric(corners, l)))
        .sum::<f64>()
        * area
        / 3.0
}

/// A quadrature point of a (possibly split) rule on a parent triangle.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct QuadPoint<R> {
    /// Barycentric coordinates with respect to the parent triangle.
    pub bary: [f64; 3],
    /// Weight as a fraction of the parent area.
    pub weight: f64,
    pub region: R,
}

/// Builds the region-aware rule for one triangle.
///
/// The classifier is sampled on the midpoint rule of the `4^depth` red
/// subtriangles. If every sample (and the parent's own three points) falls in
/// one region, the plain three-point rule on the parent is returned. Otherwise
/// the composite rule over the subtriangles is used, each point carrying its
/// own classification, so subtriangles inside one region are integrated with a
/// fixed branch and only the ones cut by a region boundary mix branches.
pub fn split_rule<R: Copy + PartialEq>(mut classify: impl FnMut([f64; 3]) -> R, depth: u32) -> Vec<QuadPoint<R>> {
    let plain: Vec<QuadPoint<R>> = MIDPOINT_RULE
        .iter()
        .map(|&b| QuadPoint {
            bary: b,
            weight: 1.0 / 3.0,
            region: classify(b),
        })
        .collect();
    if depth == 0 {
        return plain;
    }
    let subs = subdivide(depth);
    let sub_weight = 1.0 / (3.0 * subs.len() as f64);
    let mut composite = Vec::with_capacity(3 * subs.len());
    for s in &subs {
        for l in MIDPOINT_RULE {
            let bary = combine(s, l);
            composite.push(QuadPoint {
                bary,
                weight: sub_weight,
                region: classify(bary),
            });
        }
    }
    let first = plain[0].region;
    let uniform = plain.iter().chain(composite.iter()).all(|q| q.region == first);
    if uniform {
        plain
    } else {
        composite
    }
}

/// Integrates a region-dependent integrand over a triangle with the split
/// rule. `integrand(region, x)` is evaluated at physical points.
pub fn split_quadrature<R: Copy + PartialEq>(
    corners: &[Point; 3],
    classify: impl Fn(Point) -> R,
    integrand: impl Fn(R, Point) -> f64,
    depth: u32,
) -> f64 {
    let area = signed_area(corners).abs();
    split_rule(|b| classify(from_barycentric(corners, b)), depth)
        .iter()
        .map(|q| q.weight * integrand(q.region, from_barycentric(corners, q.bary)))
        .sum::<f64>()
        * area
}

/// Red subdivision of the reference triangle into `4^depth` children, each
/// given by the barycentric coordinates of its corners.
pub fn subdivide(depth: u32) -> Vec<[[f64; 3]; 3]> {
    let mut tris = vec![[[1.0, 0.0, 0.0], [0.0, 1.0, 0.0], [0.0, 0.0, 1.0]]];
    for _ in 0..depth {
        let mut next = Vec::with_capacity(4 * tris.len());
        for [a, b, c] in tris {
            let mab = mid3(a, b);
            let mbc = mid3(b, c);
            let mca = mid3(c, a);
            next.push([a, mab, mca]);
            next.push([mab, b, mbc]);
            next.push([mca, mbc, c]);
            next.push([mbc, mca, mab]);
        }
        tris = next;
    }
    tris
}

fn mid3(a: [f64; 3], b: [f64; 3]) -> [f64; 3] {
    [0.5 * (a[0] + b[0]), 0.5 * (a[1] + b[1]), 0.5 * (a[2] + b[2])]
}

fn combine(corners: &[[f64; 3]; 3], l: [f64; 3]) -> [f64; 3] {
    let mut out = [0.0; 3];
    for (k, o) in out.iter_mut().enumerate() {
        *o = l[0] * corners[0][k] + l[1] * corners[1][k] + l[2] * corners[2][k];
    }
    out
}
