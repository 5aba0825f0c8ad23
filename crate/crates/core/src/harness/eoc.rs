use crate::error::FieldError;

/// `EOC_i = log(e_i / e_{i+1}) / log(h_i / h_{i+1})`
pub fn compute_eoc(errors: &[(f64, f64)]) -> Result<Vec<f64>, FieldError> {
    for &(h, e) in errors {
        if !(e > 0.0) || !e.is_finite() {
            return Err(FieldError::Invalid(format!("errors must be positive, got {e}")));
        }
        if !(h > 0.0) {
            return Err(FieldError::Invalid(format!("mesh sizes must be positive, got {h}")));
        }
    }
    errors
        .windows(2)
        .map(|w| {
            let (h0, e0) = w[0];
            let (h1, e1) = w[1];
            if !(h1 < h0) {
                return Err(FieldError::Invalid("mesh sizes must decrease strictly".into()));
            }
            Ok((e0 / e1).ln() / (h0 / h1).ln())
        })
        .collect()
}

/// Least-squares slope of `log e` against `log x`.
pub fn loglog_slope(points: &[(f64, f64)]) -> Option<f64> {
    let pts: Vec<(f64, f64)> = points
        .iter()
        .filter(|(x, e)| *x > 0.0 && *e > 0.0)
        .map(|(x, e)| (x.ln(), e.ln()))
        .collect();
    if pts.len() < 2 {
        return None;
    }
    let n = pts.len() as f64;
    let mx = pts.iter().map(|p| p.0).sum::<f64>() / n;
    let my = pts.iter().map(|p| p.1).sum::<f64>() / n;
    let sxx: f64 = pts.iter().map(|p| (p.0 - mx).powi(2)).sum();
    let sxy: f64 = pts.iter().map(|p| (p.0 - mx) * (p.1 - my)).sum();
    (sxx > 0.0).then(|| sxy / sxx)
}

/// Index of the first point after which the error drops by less than the
/// relative amount `rel`; the last index if that never happens.
pub fn saturation_onset(errors: &[f64], rel: f64) -> usize {
    errors
        .windows(2)
        .position(|w| w[0] - w[1] < rel * w[0])
        .unwrap_or(errors.len().saturating_sub(1))
}

/// Log-log slope of `points` up to and including `onset`.
pub fn presaturation_slope(points: &[(f64, f64)], onset: usize) -> Option<f64> {
    loglog_slope(&points[..points.len().min(onset + 1)])
}
