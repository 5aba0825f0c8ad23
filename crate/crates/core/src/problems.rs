//! Benchmark problems.
//!
//! Example 1 has a manufactured radially symmetric solution centred at
//! `(1/2, 1/2)` with a tracking term and an extra load `e_Ω`; Example 2 is a
//! thin plate with a load that changes sign across `x₁ = 1/2`.

use std::f64::consts::PI;

use crate::kkt::{Discretization, Load, ProblemSpec, Tracking};
use crate::mesh::Point;
use crate::source::scalar_fn;

pub const EX1_TAU: f64 = 0.1;
pub const EX1_M_LO: f64 = 0.35;
pub const EX1_M_HI: f64 = 0.45;
pub const EX1_ALPHA: f64 = 1.0;

pub const EX2_TAU: f64 = 0.01;
pub const EX2_M_LO: f64 = 0.1;
pub const EX2_M_HI: f64 = 0.2;

const R_INNER: f64 = 0.125;
const R_OUTER: f64 = 0.375;

fn radius(x: Point) -> f64 {
    ((x[0] - 0.5).powi(2) + (x[1] - 0.5).powi(2)).sqrt()
}

/// Radial profile of the exact Example 1 state: constant `-τ` inside
/// `r ≤ 1/8`, a quintic blend on `(1/8, 3/8)`, zero outside.
pub fn ex1_state_radial(r: f64) -> f64 {
    if r <= R_INNER {
        -0.1
    } else if r < R_OUTER {
        ((((614.4 * r - 768.0) * r + 352.0) * r - 72.0) * r + 27.0 / 4.0) * r - 27.0 / 80.0
    } else {
        0.0
    }
}

pub fn ex1_state_radial_d1(r: f64) -> f64 {
    if r > R_INNER && r < R_OUTER {
        (((3072.0 * r - 3072.0) * r + 1056.0) * r - 144.0) * r + 27.0 / 4.0
    } else {
        0.0
    }
}

pub fn ex1_state_radial_d2(r: f64) -> f64 {
    if r > R_INNER && r < R_OUTER {
        ((12288.0 * r - 9216.0) * r + 2112.0) * r - 144.0
    } else {
        0.0
    }
}

pub fn ex1_adjoint_radial(r: f64) -> f64 {
    if r < R_INNER {
        -r * r + 1.0 / 64.0
    } else {
        0.0
    }
}

pub fn sine_product(x: Point) -> f64 {
    (PI * x[0]).sin() * (PI * x[1]).sin()
}

pub fn sine_product_gradient(x: Point) -> Point {
    [
        PI * (PI * x[0]).cos() * (PI * x[1]).sin(),
        PI * (PI * x[0]).sin() * (PI * x[1]).cos(),
    ]
}

pub fn ex1_load(x: Point) -> f64 {
    2.0 * PI * PI * sine_product(x)
}

pub fn ex1_state(x: Point) -> f64 {
    ex1_state_radial(radius(x))
}

pub fn ex1_state_gradient(x: Point) -> Point {
    let r = radius(x);
    if r <= 0.0 {
        return [0.0, 0.0];
    }
    let d = ex1_state_radial_d1(r) / r;
    [d * (x[0] - 0.5), d * (x[1] - 0.5)]
}

/// `Δ(y∘r)` from the radial formula `y'' + y'/r`.
pub fn ex1_state_laplacian(x: Point) -> f64 {
    let r = radius(x);
    if r > R_INNER && r < R_OUTER {
        ex1_state_radial_d2(r) + ex1_state_radial_d1(r) / r
    } else {
        0.0
    }
}

pub fn ex1_adjoint(x: Point) -> f64 {
    ex1_adjoint_radial(radius(x))
}

pub fn ex1_control(x: Point) -> f64 {
    crate::kkt::control_law(3.0 * ex1_adjoint(x) * sine_product(x), EX1_M_LO, EX1_M_HI)
}

pub fn ex1_target(x: Point) -> f64 {
    let r = radius(x);
    if r < R_INNER {
        -5.1
    } else {
        ex1_state_radial(r)
    }
}

pub fn ex1_extra_load(x: Point) -> f64 {
    -ex1_state_laplacian(x) - sine_product(x) * ex1_control(x)
}

/// All exact Example 1 quantities at one point.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Example1Values {
    pub y: f64,
    pub q: f64,
    pub l: f64,
    pub z: f64,
    pub f: f64,
    pub y_target: f64,
    pub e_load: f64,
}

pub fn example1_exact(x: Point) -> Example1Values {
    Example1Values {
        y: ex1_state(x),
        q: ex1_adjoint(x),
        l: ex1_control(x),
        z: sine_product(x),
        f: ex1_load(x),
        y_target: ex1_target(x),
        e_load: ex1_extra_load(x),
    }
}

/// The exact multiplier of Example 1 is `-dx` on the disc `r < 1/8` plus
/// `-1/4 ds` on its boundary circle. Returns its action on `g` using a polar
/// quadrature with `n` nodes per direction.
pub fn ex1_multiplier_action(g: impl Fn(Point) -> f64, n: usize) -> f64 {
    let mut volume = 0.0;
    let mut circle = 0.0;
    let dth = 2.0 * PI / n as f64;
    let dr = R_INNER / n as f64;
    for j in 0..n {
        let th = (j as f64 + 0.5) * dth;
        let (s, c) = th.sin_cos();
        circle += g([0.5 + R_INNER * c, 0.5 + R_INNER * s]) * R_INNER * dth;
        for i in 0..n {
            let r = (i as f64 + 0.5) * dr;
            volume += g([0.5 + r * c, 0.5 + r * s]) * r * dr * dth;
        }
    }
    -volume - 0.25 * circle
}

pub fn example1_spec(disc: Discretization) -> ProblemSpec {
    ProblemSpec {
        tau: EX1_TAU,
        m_lo: EX1_M_LO,
        m_hi: EX1_M_HI,
        load: Load::Smooth(scalar_fn(ex1_load)),
        tracking: Some(Tracking {
            alpha: EX1_ALPHA,
            y_target: scalar_fn(ex1_target),
            e_load: scalar_fn(ex1_extra_load),
        }),
        disc,
    }
}

pub fn ex2_load(x: Point) -> f64 {
    if x[0] <= 0.5 {
        -0.04
    } else {
        0.01
    }
}

pub fn example2_spec(disc: Discretization) -> ProblemSpec {
    ProblemSpec {
        tau: EX2_TAU,
        m_lo: EX2_M_LO,
        m_hi: EX2_M_HI,
        load: Load::CellConstant(scalar_fn(ex2_load)),
        tracking: None,
        disc,
    }
}

/// Manufactured Poisson problem: `g = 2π² sin sin`, `y = sin sin`.
pub struct ManufacturedPoisson {
    pub g: fn(Point) -> f64,
    pub y: fn(Point) -> f64,
    pub grad_y: fn(Point) -> Point,
}

pub fn manufactured_poisson() -> ManufacturedPoisson {
    ManufacturedPoisson {
        g: ex1_load,
        y: sine_product,
        grad_y: sine_product_gradient,
    }
}
