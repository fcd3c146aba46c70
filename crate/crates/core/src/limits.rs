//! Limits of monotone sequences sampled along geometric grids.
//!
//! A function with power-law approach to its limit, `L + c s^p`, becomes geometric when
//! sampled at `s = 10^-k`, and Aitken's delta-squared transform removes a geometric
//! remainder exactly. Stabilization of successive Aitken estimates is the acceptance test.

/// Aitken's delta-squared extrapolation of three consecutive terms.
pub fn aitken(a0: f64, a1: f64, a2: f64) -> Option<f64> {
    let d1 = a1 - a0;
    let d2 = a2 - a1;
    let denom = d2 - d1;
    if denom == 0.0 || !denom.is_finite() {
        return None;
    }
    let v = a2 - d2 * d2 / denom;
    v.is_finite().then_some(v)
}

/// Last two Aitken estimates of a sequence; a constant tail counts as its own limit.
pub fn aitken_tail(seq: &[f64]) -> Option<(f64, f64)> {
    let n = seq.len();
    if n < 4 {
        return None;
    }
    let est = |i: usize| aitken(seq[i - 2], seq[i - 1], seq[i]).unwrap_or(seq[i]);
    Some((est(n - 2), est(n - 1)))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn geometric_remainder_is_removed() {
        let seq: Vec<f64> = (1..=8).map(|k| 2.5 + 3.0 * 0.3f64.powi(k)).collect();
        let (_, last) = aitken_tail(&seq).unwrap();
        assert!((last - 2.5).abs() < 1e-12);
    }

    #[test]
    fn constant_sequence() {
        let (a, b) = aitken_tail(&[1.0; 6]).unwrap();
        assert_eq!((a, b), (1.0, 1.0));
    }
}
