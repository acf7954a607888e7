//! Statistical index over learned features, standardization, t-distribution
//! p-values, and operational-risk classification.

use crate::error::{Error, Result};

/// Scalar test function applied to feature magnitudes. Only entropy ships;
/// the enum is the registration point for further test functions.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum TestFunction {
    Entropy,
}

impl TestFunction {
    pub fn apply(self, lambda: f64) -> Result<f64> {
        match self {
            TestFunction::Entropy => phi_entropy(lambda),
        }
    }
}

impl std::str::FromStr for TestFunction {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "entropy" => Ok(TestFunction::Entropy),
            other => Err(Error::InvalidConfig(format!("unknown test_function {other:?}"))),
        }
    }
}

/// Entropy test function -lambda ln(lambda) on [0, 1], with phi(0) = 0.
pub fn phi_entropy(lambda: f64) -> Result<f64> {
    if !(0.0..=1.0).contains(&lambda) {
        return Err(Error::InvalidArgument(format!(
            "entropy test function domain is [0,1], got {lambda}"
        )));
    }
    if lambda == 0.0 {
        return Ok(0.0);
    }
    Ok(-lambda * lambda.ln())
}

/// Median of the magnitudes; even length averages the two middle order
/// statistics.
fn median_abs(features: &[f64]) -> f64 {
    let mut mags: Vec<f64> = features.iter().map(|f| f.abs()).collect();
    mags.sort_by(|a, b| a.partial_cmp(b).unwrap());
    let n = mags.len();
    if n % 2 == 1 {
        mags[n / 2]
    } else {
        0.5 * (mags[n / 2 - 1] + mags[n / 2])
    }
}

/// Statistical index: sum of the test function over feature magnitudes
/// strictly above the magnitude median.
pub fn n_phi(features: &[f64], tf: TestFunction) -> Result<f64> {
    if features.is_empty() {
        return Err(Error::EmptyInput("n_phi needs at least one feature".into()));
    }
    let med = median_abs(features);
    let mut sum = 0.0;
    for f in features {
        let mag = f.abs();
        if mag > med {
            sum += tf.apply(mag)?;
        }
    }
    Ok(sum)
}

/// Arithmetic mean over the per-iteration indices.
pub fn average_index(per_iteration: &[f64]) -> Result<f64> {
    if per_iteration.is_empty() {
        return Err(Error::EmptyInput("average_index over empty list".into()));
    }
    Ok(per_iteration.iter().sum::<f64>() / per_iteration.len() as f64)
}

/// Standardize with the sample (n-1 denominator) standard deviation.
pub fn standardize_series(values: &[f64]) -> Result<Vec<f64>> {
    if values.len() < 2 {
        return Err(Error::EmptyInput("standardization needs >= 2 values".into()));
    }
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    let var = values.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / (n - 1.0);
    let sd = var.sqrt();
    if sd == 0.0 || !sd.is_finite() {
        return Err(Error::DegenerateSeries(
            "zero standard deviation; all index values equal".into(),
        ));
    }
    Ok(values.iter().map(|v| (v - mean) / sd).collect())
}

// --- Student's t tail probability via the regularized incomplete beta ---

/// ln Gamma by the Lanczos approximation (g = 7, n = 9).
fn ln_gamma(x: f64) -> f64 {
    const COEF: [f64; 9] = [
        0.99999999999980993,
        676.5203681218851,
        -1259.1392167224028,
        771.32342877765313,
        -176.61502916214059,
        12.507343278686905,
        -0.13857109526572012,
        9.9843695780195716e-6,
        1.5056327351493116e-7,
    ];
    if x < 0.5 {
        // Reflection formula.
        let pi = std::f64::consts::PI;
        return (pi / (pi * x).sin()).ln() - ln_gamma(1.0 - x);
    }
    let x = x - 1.0;
    let mut acc = COEF[0];
    for (i, &c) in COEF.iter().enumerate().skip(1) {
        acc += c / (x + i as f64);
    }
    let t = x + 7.5;
    0.5 * (2.0 * std::f64::consts::PI).ln() + (x + 0.5) * t.ln() - t + acc.ln()
}

/// Continued fraction for the incomplete beta (modified Lentz).
fn beta_continued_fraction(a: f64, b: f64, x: f64) -> f64 {
    const TINY: f64 = 1e-300;
    const TOL: f64 = 1e-10;
    const MAX_ITER: usize = 500;

    let qab = a + b;
    let qap = a + 1.0;
    let qam = a - 1.0;
    let mut c = 1.0;
    let mut d = 1.0 - qab * x / qap;
    if d.abs() < TINY {
        d = TINY;
    }
    d = 1.0 / d;
    let mut h = d;
    for m in 1..=MAX_ITER {
        let mf = m as f64;
        let m2 = 2.0 * mf;
        let aa = mf * (b - mf) * x / ((qam + m2) * (a + m2));
        d = 1.0 + aa * d;
        if d.abs() < TINY {
            d = TINY;
        }
        c = 1.0 + aa / c;
        if c.abs() < TINY {
            c = TINY;
        }
        d = 1.0 / d;
        h *= d * c;
        let aa = -(a + mf) * (qab + mf) * x / ((a + m2) * (qap + m2));
        d = 1.0 + aa * d;
        if d.abs() < TINY {
            d = TINY;
        }
        c = 1.0 + aa / c;
        if c.abs() < TINY {
            c = TINY;
        }
        d = 1.0 / d;
        let del = d * c;
        h *= del;
        if (del - 1.0).abs() < TOL {
            break;
        }
    }
    h
}

/// Regularized incomplete beta I_x(a, b).
pub fn regularized_incomplete_beta(a: f64, b: f64, x: f64) -> f64 {
    if x <= 0.0 {
        return 0.0;
    }
    if x >= 1.0 {
        return 1.0;
    }
    let ln_front = ln_gamma(a + b) - ln_gamma(a) - ln_gamma(b) + a * x.ln() + b * (1.0 - x).ln();
    let front = ln_front.exp();
    if x < (a + 1.0) / (a + b + 2.0) {
        front * beta_continued_fraction(a, b, x) / a
    } else {
        1.0 - front * beta_continued_fraction(b, a, 1.0 - x) / b
    }
}

/// One-sided upper-tail probability P(T_df > |n_hat|) of the Student's t
/// distribution; result in (0, 0.5].
pub fn t_pvalue(n_hat: f64, df: usize) -> f64 {
    assert!(df >= 1, "degrees of freedom must be >= 1");
    let t = n_hat.abs();
    if t == 0.0 {
        return 0.5;
    }
    let v = df as f64;
    let x = v / (v + t * t);
    0.5 * regularized_incomplete_beta(v / 2.0, 0.5, x)
}

/// Operational-risk levels, ascending severity.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord)]
pub enum RiskLevel {
    Normal,
    Preventive,
    HighRisk,
    Emergency,
}

impl std::fmt::Display for RiskLevel {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        let s = match self {
            RiskLevel::Emergency => "EMERGENCY",
            RiskLevel::HighRisk => "HIGH_RISK",
            RiskLevel::Preventive => "PREVENTIVE",
            RiskLevel::Normal => "NORMAL",
        };
        f.write_str(s)
    }
}

impl std::str::FromStr for RiskLevel {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "EMERGENCY" => Ok(RiskLevel::Emergency),
            "HIGH_RISK" => Ok(RiskLevel::HighRisk),
            "PREVENTIVE" => Ok(RiskLevel::Preventive),
            "NORMAL" => Ok(RiskLevel::Normal),
            other => Err(Error::InvalidArgument(format!("unknown risk level {other:?}"))),
        }
    }
}

/// Map a one-sided p-value onto the confidence-level bands: p < 1.25% is
/// emergency, then 2.5% and 5% cut the high-risk and preventive bands.
pub fn classify_risk(p: f64) -> RiskLevel {
    if p < 0.0125 {
        RiskLevel::Emergency
    } else if p < 0.025 {
        RiskLevel::HighRisk
    } else if p < 0.05 {
        RiskLevel::Preventive
    } else {
        RiskLevel::Normal
    }
}

/// Per-feeder index series with derived statistics.
#[derive(Debug, Clone)]
pub struct IndexSeries {
    pub feeder_id: String,
    pub end_ticks: Vec<usize>,
    pub n_phi: Vec<f64>,
    pub standardized: Vec<f64>,
    pub p_values: Vec<f64>,
    pub risk_levels: Vec<RiskLevel>,
    pub degrees_of_freedom: usize,
}

/// Standardize the index series, compute per-point p-values at
/// df = len - 1, and classify each point.
pub fn assess_series(feeder_id: &str, n_phi: &[f64], end_ticks: &[usize]) -> Result<IndexSeries> {
    if n_phi.len() != end_ticks.len() {
        return Err(Error::DimensionMismatch(format!(
            "{} index values but {} end ticks",
            n_phi.len(),
            end_ticks.len()
        )));
    }
    let standardized = standardize_series(n_phi)?;
    let df = n_phi.len() - 1;
    let p_values: Vec<f64> = standardized.iter().map(|&s| t_pvalue(s, df)).collect();
    let risk_levels = p_values.iter().map(|&p| classify_risk(p)).collect();
    Ok(IndexSeries {
        feeder_id: feeder_id.to_string(),
        end_ticks: end_ticks.to_vec(),
        n_phi: n_phi.to_vec(),
        standardized,
        p_values,
        risk_levels,
        degrees_of_freedom: df,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn phi_entropy_values() {
        assert_eq!(phi_entropy(1.0).unwrap(), 0.0);
        assert_eq!(phi_entropy(0.0).unwrap(), 0.0);
        assert!((phi_entropy(0.5).unwrap() - 0.34657).abs() < 1e-5);
        let peak = phi_entropy(1.0 / std::f64::consts::E).unwrap();
        assert!((peak - 1.0 / std::f64::consts::E).abs() < 1e-12);
        assert!(phi_entropy(1.5).is_err());
        assert!(phi_entropy(-0.1).is_err());
    }

    #[test]
    fn n_phi_hand_computed() {
        // |f| = [0.2, 0.4, 0.6, 0.8], median 0.5, sum phi(0.6) + phi(0.8).
        let got = n_phi(&[0.2, -0.4, 0.6, -0.8], TestFunction::Entropy).unwrap();
        let expected = -0.6 * 0.6_f64.ln() - 0.8 * 0.8_f64.ln();
        assert!((expected - 0.48501).abs() < 1e-5);
        assert!((got - expected).abs() < 1e-12);
    }

    #[test]
    fn n_phi_all_equal_is_zero() {
        assert_eq!(n_phi(&[0.3; 7], TestFunction::Entropy).unwrap(), 0.0);
    }

    #[test]
    fn average_index_basics() {
        assert_eq!(average_index(&[0.4, 0.6]).unwrap(), 0.5);
        assert_eq!(average_index(&[0.7]).unwrap(), 0.7);
        assert!(average_index(&[]).is_err());
        let xs = [0.11, 0.42, 0.83, 0.05, 0.99, 0.27, 0.64, 0.31, 0.58, 0.72];
        let mut acc = 0.0;
        for x in xs {
            acc += x;
        }
        assert!((average_index(&xs).unwrap() - acc / 10.0).abs() < 1e-12);
    }

    #[test]
    fn standardize_two_points() {
        let s = standardize_series(&[1.0, 3.0]).unwrap();
        assert!((s[0] + std::f64::consts::FRAC_1_SQRT_2).abs() < 1e-12);
        assert!((s[1] - std::f64::consts::FRAC_1_SQRT_2).abs() < 1e-12);
    }

    #[test]
    fn standardize_mean_and_sd() {
        let xs = [0.5, 1.5, 2.25, 0.75, 3.5, 2.0, 1.25];
        let s = standardize_series(&xs).unwrap();
        let n = s.len() as f64;
        let mean: f64 = s.iter().sum::<f64>() / n;
        let sd: f64 = (s.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / (n - 1.0)).sqrt();
        assert!(mean.abs() < 1e-9);
        assert!((sd - 1.0).abs() < 1e-9);
    }

    #[test]
    fn standardize_degenerate() {
        assert!(matches!(
            standardize_series(&[2.0, 2.0, 2.0]),
            Err(Error::DegenerateSeries(_))
        ));
    }

    /// Numerical integration of the t density, the independent oracle for the
    /// continued-fraction path.
    fn t_tail_by_quadrature(t: f64, df: usize) -> f64 {
        let v = df as f64;
        let ln_norm = ln_gamma((v + 1.0) / 2.0) - ln_gamma(v / 2.0) - 0.5 * (v * std::f64::consts::PI).ln();
        let density = |x: f64| (ln_norm - (v + 1.0) / 2.0 * (1.0 + x * x / v).ln()).exp();
        // Tail mass = 1/2 minus Simpson over the finite interval [0, t],
        // which avoids any truncation error in the upper tail.
        let (a, b, n) = (0.0, t, 400_000usize);
        let h = (b - a) / n as f64;
        let mut acc = density(a) + density(b);
        for i in 1..n {
            let x = a + i as f64 * h;
            acc += density(x) * if i % 2 == 1 { 4.0 } else { 2.0 };
        }
        0.5 - acc * h / 3.0
    }

    #[test]
    fn t_pvalue_paper_worked_example() {
        let p = t_pvalue(2.650, 13);
        assert!((p - 0.0100).abs() < 0.0005, "p = {p}");
    }

    #[test]
    fn t_pvalue_zero_is_half() {
        for df in [1, 5, 13, 50] {
            assert!((t_pvalue(0.0, df) - 0.5).abs() < 1e-15);
        }
    }

    #[test]
    fn t_pvalue_matches_quadrature_oracle() {
        let p = t_pvalue(1.350, 13);
        assert!((p - 0.100).abs() < 0.001, "p = {p}");
        for (t, df) in [(0.5, 3), (1.0, 8), (2.0, 13), (3.3, 40), (0.25, 1)] {
            let oracle = t_tail_by_quadrature(t, df);
            let got = t_pvalue(t, df);
            assert!((got - oracle).abs() < 1e-6, "t={t} df={df}: {got} vs {oracle}");
        }
    }

    #[test]
    fn t_pvalue_approaches_normal_tail() {
        // Standard normal upper tail at 1.0 is 0.158655.
        let p = t_pvalue(1.0, 200);
        assert!((p - 0.158655).abs() < 1e-3, "p = {p}");
    }

    #[test]
    fn t_pvalue_decreasing_in_magnitude() {
        for df in [1, 5, 30] {
            let mut last = 0.5;
            for i in 1..=60 {
                let p = t_pvalue(i as f64 * 0.15, df);
                assert!(p < last, "df {df}, step {i}");
                last = p;
            }
        }
    }

    #[test]
    fn classify_risk_bands() {
        assert_eq!(classify_risk(0.002), RiskLevel::Emergency);
        assert_eq!(classify_risk(0.0125), RiskLevel::HighRisk);
        assert_eq!(classify_risk(0.03), RiskLevel::Preventive);
        assert_eq!(classify_risk(0.05), RiskLevel::Normal);
        assert_eq!(classify_risk(0.5), RiskLevel::Normal);
    }

    #[test]
    fn risk_order() {
        assert!(RiskLevel::Emergency > RiskLevel::HighRisk);
        assert!(RiskLevel::HighRisk > RiskLevel::Preventive);
        assert!(RiskLevel::Preventive > RiskLevel::Normal);
    }

    #[test]
    fn assess_series_flags_single_drop() {
        // 14 points, one deep entropy drop.
        let mut values = vec![4.0, 4.1, 3.9, 4.05, 4.0, 3.95, 4.1, 4.0, 3.9, 4.05, 4.0, 3.95, 4.1];
        values.insert(9, 1.0);
        let ticks: Vec<usize> = (1..=values.len()).map(|k| k * 96).collect();
        let series = assess_series("feeder-1", &values, &ticks).unwrap();
        assert_eq!(series.degrees_of_freedom, 13);
        assert_eq!(series.risk_levels[9], RiskLevel::Emergency);
        for (i, level) in series.risk_levels.iter().enumerate() {
            if i != 9 {
                assert_eq!(*level, RiskLevel::Normal, "point {i}");
            }
        }
    }

    #[test]
    fn assess_series_all_equal_errors() {
        let ticks: Vec<usize> = (1..=5).collect();
        assert!(assess_series("f", &[1.0; 5], &ticks).is_err());
    }

    proptest! {
        #[test]
        fn n_phi_bounds_and_permutation_invariance(
            mut fs in proptest::collection::vec(-1.0f64..=1.0, 2..64)
        ) {
            let v = n_phi(&fs, TestFunction::Entropy).unwrap();
            prop_assert!(v >= 0.0);
            let med = super::median_abs(&fs);
            let count = fs.iter().filter(|f| f.abs() > med).count();
            prop_assert!(v <= count as f64 / std::f64::consts::E + 1e-12);
            fs.reverse();
            let w = n_phi(&fs, TestFunction::Entropy).unwrap();
            prop_assert!((v - w).abs() < 1e-12);
        }

        #[test]
        fn standardization_shift_invariance(
            xs in proptest::collection::vec(0.0f64..10.0, 3..40),
            shift in -5.0f64..5.0,
        ) {
            prop_assume!(standardize_series(&xs).is_ok());
            let shifted: Vec<f64> = xs.iter().map(|x| x + shift).collect();
            let a = standardize_series(&xs).unwrap();
            let b = standardize_series(&shifted).unwrap();
            for (u, v) in a.iter().zip(&b) {
                prop_assert!((u - v).abs() < 1e-9);
            }
        }

        #[test]
        fn classify_risk_monotone(p1 in 0.0001f64..0.5, p2 in 0.0001f64..0.5) {
            let (lo, hi) = if p1 < p2 { (p1, p2) } else { (p2, p1) };
            prop_assert!(classify_risk(lo) >= classify_risk(hi));
        }
    }
}
