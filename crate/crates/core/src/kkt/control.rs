//! Pointwise control law, thickness recovery and the regularized multiplier.

use crate::error::FieldError;

/// Classification of `s = 3qz` against the projection interval `[m⁴, M⁴]`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum ControlRegion {
    /// `m⁴ < s < M⁴`, `l = s^{-3/4}`.
    Inactive,
    /// `s ≥ M⁴`, `l = M⁻³` (thickest plate).
    LowerClamp,
    /// `s ≤ m⁴`, `l = m⁻³` (thinnest plate).
    UpperClamp,
}

/// Precomputed powers of the thickness bounds.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ControlBounds {
    pub m_lo: f64,
    pub m_hi: f64,
    /// `m⁴`
    pub s_lo: f64,
    /// `M⁴`
    pub s_hi: f64,
    /// `M⁻³`
    pub l_min: f64,
    /// `m⁻³`
    pub l_max: f64,
}

impl ControlBounds {
    pub fn new(m_lo: f64, m_hi: f64) -> Self {
        Self {
            m_lo,
            m_hi,
            s_lo: m_lo.powi(4),
            s_hi: m_hi.powi(4),
            l_min: m_hi.powi(-3),
            l_max: m_lo.powi(-3),
        }
    }

    #[inline]
    pub fn classify(&self, s: f64) -> ControlRegion {
        if s >= self.s_hi {
            ControlRegion::LowerClamp
        } else if s <= self.s_lo {
            ControlRegion::UpperClamp
        } else {
            ControlRegion::Inactive
        }
    }

    /// `(P_[m⁴,M⁴] s)^{-3/4}`
    #[inline]
    pub fn control(&self, s: f64) -> f64 {
        match self.classify(s) {
            ControlRegion::LowerClamp => self.l_min,
            ControlRegion::UpperClamp => self.l_max,
            ControlRegion::Inactive => s.powf(-0.75).clamp(self.l_min, self.l_max),
        }
    }

    /// Derivative of [`Self::control`] in `s`, zero on both clamps and at the kinks.
    #[inline]
    pub fn control_derivative(&self, s: f64) -> f64 {
        match self.classify(s) {
            ControlRegion::Inactive => -0.75 * s.powf(-1.75),
            _ => 0.0,
        }
    }
}

pub fn control_law(s: f64, m_lo: f64, m_hi: f64) -> f64 {
    ControlBounds::new(m_lo, m_hi).control(s)
}

/// Pointwise `l = (P(3qz))^{-3/4}` for paired samples of `q` and `z`.
pub fn recover_control(q: &[f64], z: &[f64], bounds: &ControlBounds) -> Vec<f64> {
    assert_eq!(q.len(), z.len());
    q.iter().zip(z).map(|(&q, &z)| bounds.control(3.0 * q * z)).collect()
}

/// `u = l^{-1/3}`; rejects values outside `[M⁻³, m⁻³]`.
pub fn recover_thickness(l: &[f64], bounds: &ControlBounds) -> Result<Vec<f64>, FieldError> {
    l.iter()
        .map(|&v| {
            if !(bounds.l_min..=bounds.l_max).contains(&v) {
                return Err(FieldError::OutOfRange {
                    value: v,
                    lo: bounds.l_min,
                    hi: bounds.l_max,
                });
            }
            if v == bounds.l_max {
                Ok(bounds.m_lo)
            } else if v == bounds.l_min {
                Ok(bounds.m_hi)
            } else {
                Ok(v.powf(-1.0 / 3.0).clamp(bounds.m_lo, bounds.m_hi))
            }
        })
        .collect()
}

/// `ν = γ min(0, y + τ)`
#[inline]
pub fn multiplier_value(y: f64, gamma: f64, tau: f64) -> f64 {
    gamma * (y + tau).min(0.0)
}

pub fn moreau_yosida_multiplier(y: &[f64], gamma: f64, tau: f64) -> Vec<f64> {
    y.iter().map(|&v| multiplier_value(v, gamma, tau)).collect()
}
