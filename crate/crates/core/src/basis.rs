//! Truncated power spline basis for the nonparametric time effect.
//!
//! The basis at time t is (1, t, ..., t^d, (t - k_1)_+^d, ..., (t - k_L)_+^d)
//! with d the polynomial degree and k_1 < ... < k_L interior knots, so the
//! basis dimension is h = d + 1 + L.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum KnotPlacement {
    EquallySpaced,
    Quantile,
}

/// Configuration of the spline basis.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SplineConfig {
    /// Polynomial degree d.
    pub degree: usize,
    /// Number of interior knots L.
    pub interior_knot_count: usize,
    pub knot_placement: KnotPlacement,
    /// Smoothness order r driving the default knot-count rule round(n^{1/(2r+1)}).
    pub smoothness_order: usize,
    /// Closed interval [t_min, t_max] in observation-time units.
    pub time_domain: (f64, f64),
}

impl SplineConfig {
    /// Basis dimension h = degree + 1 + interior knots.
    pub fn basis_dim(&self) -> usize {
        self.degree + 1 + self.interior_knot_count
    }
}

impl Default for SplineConfig {
    /// Cubic basis with smoothness order 2; knot count must still be chosen
    /// (see [`default_knot_count`]) and the time domain set from the data.
    fn default() -> Self {
        SplineConfig {
            degree: 3,
            interior_knot_count: 0,
            knot_placement: KnotPlacement::EquallySpaced,
            smoothness_order: 2,
            time_domain: (0.0, 1.0),
        }
    }
}

/// Spline basis values at a single time point; the first entry is the
/// intercept 1.
#[derive(Debug, Clone, PartialEq)]
pub struct BasisVector {
    values: Vec<f64>,
}

impl BasisVector {
    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }
}

/// Default number of interior knots, round(n^{1/(2r+1)}) with round-half-up.
pub fn default_knot_count(n: usize, r: usize) -> usize {
    assert!(n >= 1 && r >= 1);
    let x = (n as f64).powf(1.0 / (2.0 * r as f64 + 1.0));
    (x + 0.5).floor() as usize
}

/// Place the interior knots.
///
/// `EquallySpaced` puts knot k at t_min + k (t_max - t_min)/(L+1); `Quantile`
/// uses empirical quantiles k/(L+1) of `times` with linear interpolation
/// between order statistics (the convention where quantile q sits at
/// position (n-1)q of the sorted sample).
pub fn make_knots(config: &SplineConfig, times: &[f64]) -> Result<Vec<f64>> {
    let l = config.interior_knot_count;
    if l == 0 {
        return Ok(Vec::new());
    }
    let (t_min, t_max) = config.time_domain;
    if t_min >= t_max {
        return Err(Error::DegenerateTimeDomain { knots: l });
    }
    let knots: Vec<f64> = match config.knot_placement {
        KnotPlacement::EquallySpaced => (1..=l)
            .map(|k| t_min + k as f64 * (t_max - t_min) / (l as f64 + 1.0))
            .collect(),
        KnotPlacement::Quantile => {
            if times.is_empty() {
                return Err(Error::InvalidConfig(
                    "quantile knot placement needs observation times".into(),
                ));
            }
            let mut sorted = times.to_vec();
            sorted.sort_by(|a, b| a.partial_cmp(b).unwrap());
            (1..=l)
                .map(|k| {
                    let q = k as f64 / (l as f64 + 1.0);
                    let pos = (sorted.len() - 1) as f64 * q;
                    let lo = pos.floor() as usize;
                    let hi = pos.ceil() as usize;
                    let frac = pos - lo as f64;
                    sorted[lo] + frac * (sorted[hi] - sorted[lo])
                })
                .collect()
        }
    };
    if knots.windows(2).any(|w| w[0] >= w[1]) {
        return Err(Error::NonIncreasingKnots);
    }
    Ok(knots)
}

/// Evaluate the truncated power basis at t. Extrapolation beyond the
/// configured time domain is permitted.
pub fn evaluate_basis(config: &SplineConfig, knots: &[f64], t: f64) -> BasisVector {
    assert_eq!(
        knots.len(),
        config.interior_knot_count,
        "knot vector inconsistent with config"
    );
    let mut values = Vec::with_capacity(config.basis_dim());
    let mut power = 1.0;
    values.push(1.0);
    for _ in 0..config.degree {
        power *= t;
        values.push(power);
    }
    for &knot in knots {
        let a = (t - knot).max(0.0);
        values.push(a.powi(config.degree as i32));
    }
    BasisVector { values }
}

/// Inner product of basis values with spline coefficients.
pub fn evaluate_f(basis: &BasisVector, alpha: &[f64]) -> Result<f64> {
    if basis.len() != alpha.len() {
        return Err(Error::LengthMismatch { basis: basis.len(), coefficients: alpha.len() });
    }
    Ok(basis.values().iter().zip(alpha).map(|(b, a)| b * a).sum())
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;
    use proptest::prelude::*;

    fn config(degree: usize, knot_count: usize) -> SplineConfig {
        SplineConfig {
            degree,
            interior_knot_count: knot_count,
            knot_placement: KnotPlacement::EquallySpaced,
            smoothness_order: 2,
            time_domain: (0.0, 1.0),
        }
    }

    #[test]
    fn knot_count_rule() {
        assert_eq!(default_knot_count(50, 2), 2);
        assert_eq!(default_knot_count(1, 1), 1);
        // 100^{0.2} = 2.5118...; round-half-up gives 3
        assert_eq!(default_knot_count(100, 2), 3);
    }

    #[test]
    fn equally_spaced_knots() {
        let mut cfg = config(3, 1);
        assert_eq!(make_knots(&cfg, &[]).unwrap(), vec![0.5]);
        cfg.interior_knot_count = 3;
        assert_eq!(make_knots(&cfg, &[]).unwrap(), vec![0.25, 0.5, 0.75]);
    }

    #[test]
    fn quantile_knot_is_the_median() {
        let mut cfg = config(3, 1);
        cfg.knot_placement = KnotPlacement::Quantile;
        let times = [0.1, 0.2, 0.9, 1.0];
        // Brute-force oracle: position (n-1)/2 = 1.5 between 0.2 and 0.9.
        let mut sorted = times.to_vec();
        sorted.sort_by(|a, b| a.partial_cmp(b).unwrap());
        let expected = sorted[1] + 0.5 * (sorted[2] - sorted[1]);
        assert_eq!(make_knots(&cfg, &times).unwrap(), vec![expected]);
        assert_relative_eq!(expected, 0.55);
    }

    #[test]
    fn degenerate_domain_errors() {
        let mut cfg = config(3, 2);
        cfg.time_domain = (1.0, 1.0);
        assert!(matches!(
            make_knots(&cfg, &[1.0]),
            Err(Error::DegenerateTimeDomain { .. })
        ));
        // No knots requested: degenerate domain is fine.
        cfg.interior_knot_count = 0;
        assert!(make_knots(&cfg, &[1.0]).unwrap().is_empty());
    }

    #[test]
    fn basis_values() {
        let cfg = config(1, 0);
        assert_eq!(evaluate_basis(&cfg, &[], 0.3).values(), &[1.0, 0.3]);

        let cfg = config(1, 1);
        assert_eq!(evaluate_basis(&cfg, &[0.5], 0.3).values(), &[1.0, 0.3, 0.0]);

        let cfg = config(2, 1);
        let b = evaluate_basis(&cfg, &[0.5], 0.7);
        assert_relative_eq!(b.values()[0], 1.0);
        assert_relative_eq!(b.values()[1], 0.7);
        assert_relative_eq!(b.values()[2], 0.49);
        assert_relative_eq!(b.values()[3], 0.04, max_relative = 1e-12);
    }

    #[test]
    fn f_evaluation() {
        let b = BasisVector { values: vec![1.0, 0.3] };
        assert_eq!(evaluate_f(&b, &[2.0, 0.0]).unwrap(), 2.0);
        let b = BasisVector { values: vec![1.0, 0.3, 0.0] };
        assert_eq!(evaluate_f(&b, &[0.0, 1.0, 5.0]).unwrap(), 0.3);
        let b = BasisVector { values: vec![1.0, 0.7, 0.49, 0.04] };
        assert_relative_eq!(evaluate_f(&b, &[0.0, 0.0, 0.0, 10.0]).unwrap(), 0.4);
        assert!(evaluate_f(&b, &[1.0]).is_err());
    }

    #[test]
    fn derivatives_are_continuous_across_knots() {
        // The polynomial part is smooth everywhere, so any derivative jump at
        // a knot comes from the hinge term alone. Isolate it (coefficient 1 on
        // the hinge, 0 elsewhere) and compare one-sided finite-difference
        // quotients at the knot for every order below d.
        let cfg = config(3, 1);
        let knots = [0.5];
        let mut alpha = vec![0.0; cfg.basis_dim()];
        alpha[cfg.degree + 1] = 1.0;
        let f = |t: f64| evaluate_f(&evaluate_basis(&cfg, &knots, t), &alpha).unwrap();
        let k = knots[0];
        let h = 1e-8;
        for order in 1..cfg.degree {
            let (right, left) = match order {
                1 => ((f(k + h) - f(k)) / h, (f(k) - f(k - h)) / h),
                2 => (
                    (f(k + 2.0 * h) - 2.0 * f(k + h) + f(k)) / (h * h),
                    (f(k) - 2.0 * f(k - h) + f(k - 2.0 * h)) / (h * h),
                ),
                _ => unreachable!(),
            };
            let jump = (right - left).abs();
            assert!(jump < 1e-6, "order {order}: jump {jump}");
        }
        // The value itself is continuous for a generic coefficient vector.
        let alpha = [0.3, -1.2, 0.8, 2.0, -1.5];
        let f = |t: f64| evaluate_f(&evaluate_basis(&cfg, &knots, t), &alpha).unwrap();
        assert!((f(k + 1e-9) - f(k - 1e-9)).abs() < 1e-6);
    }

    #[test]
    fn polynomial_reduction_below_first_knot() {
        let cfg = config(2, 2);
        let knots = make_knots(&cfg, &[]).unwrap();
        let alpha = [0.5, -1.0, 2.0, 7.0, -3.0];
        for i in 0..=10 {
            let t = i as f64 * knots[0] / 10.0;
            let full = evaluate_f(&evaluate_basis(&cfg, &knots, t), &alpha).unwrap();
            let poly = 0.5 - 1.0 * t + 2.0 * t * t;
            assert_relative_eq!(full, poly, max_relative = 1e-12, epsilon = 1e-12);
        }
    }

    proptest! {
        #[test]
        fn basis_has_h_entries_and_monotone_truncated_terms(
            t1 in -2.0..3.0f64,
            delta in 0.0..1.0f64,
            degree in 0usize..4,
            knot_count in 0usize..4,
        ) {
            let cfg = config(degree, knot_count);
            let knots = make_knots(&cfg, &[]).unwrap();
            let b1 = evaluate_basis(&cfg, &knots, t1);
            let b2 = evaluate_basis(&cfg, &knots, t1 + delta);
            prop_assert_eq!(b1.len(), cfg.basis_dim());
            prop_assert_eq!(b1.values()[0], 1.0);
            for j in (degree + 1)..cfg.basis_dim() {
                prop_assert!(b2.values()[j] >= b1.values()[j]);
            }
            // Truncated entries vanish at or below the first knot.
            if knot_count > 0 {
                let at_knot = evaluate_basis(&cfg, &knots, knots[0]);
                for j in (degree + 1)..cfg.basis_dim() {
                    prop_assert_eq!(at_knot.values()[j], 0.0);
                }
            }
        }
    }
}
