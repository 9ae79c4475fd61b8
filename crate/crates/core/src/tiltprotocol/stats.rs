//! Small-sample summary statistics.

use statrs::distribution::{ContinuousCDF, StudentsT};

#[derive(Debug, thiserror::Error, PartialEq)]
pub enum StatsError {
    #[error("need at least {needed} values, got {got}")]
    TooFew { needed: usize, got: usize },
    #[error("variance is zero, statistic undefined")]
    ZeroVariance,
    #[error("non-finite input")]
    NonFinite,
}

/// Mean, sample standard deviation and 95% t-interval half-width.
#[derive(Debug, Clone, PartialEq)]
pub struct AggregateResult {
    pub l1_name: String,
    pub n: usize,
    pub mean: f64,
    pub std: f64,
    pub ci95: f64,
}

impl AggregateResult {
    pub fn ci_bounds(&self) -> (f64, f64) {
        (self.mean - self.ci95, self.mean + self.ci95)
    }

    /// Whether the two 95% intervals share any point.
    pub fn ci_overlaps(&self, other: &AggregateResult) -> bool {
        let (a0, a1) = self.ci_bounds();
        let (b0, b1) = other.ci_bounds();
        a0 <= b1 && b0 <= a1
    }
}

/// Computed about the first value, so a constant sample gives exactly that value.
pub fn mean(xs: &[f64]) -> f64 {
    let x0 = xs[0];
    x0 + xs.iter().map(|x| x - x0).sum::<f64>() / xs.len() as f64
}

/// Sample variance with an `n - 1` denominator (shifted two-pass).
pub fn sample_variance(xs: &[f64]) -> f64 {
    let x0 = xs[0];
    let n = xs.len() as f64;
    let d_mean = xs.iter().map(|x| x - x0).sum::<f64>() / n;
    xs.iter().map(|x| (x - x0 - d_mean) * (x - x0 - d_mean)).sum::<f64>() / (n - 1.0)
}

/// Two-sided `1 - alpha` quantile of Student's t with `df` degrees of freedom.
pub fn t_quantile(p: f64, df: f64) -> f64 {
    StudentsT::new(0.0, 1.0, df).expect("df > 0").inverse_cdf(p)
}

pub fn aggregate(l1_name: &str, values: &[f64]) -> Result<AggregateResult, StatsError> {
    if values.len() < 2 {
        return Err(StatsError::TooFew {
            needed: 2,
            got: values.len(),
        });
    }
    if values.iter().any(|v| !v.is_finite()) {
        return Err(StatsError::NonFinite);
    }
    let n = values.len();
    let m = mean(values);
    let std = sample_variance(values).sqrt();
    let ci95 = t_quantile(0.975, (n - 1) as f64) * std / (n as f64).sqrt();
    Ok(AggregateResult {
        l1_name: l1_name.to_string(),
        n,
        mean: m,
        std,
        ci95,
    })
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct WelchResult {
    pub t: f64,
    pub df: f64,
    /// Two-sided.
    pub p: f64,
}

/// Welch's unequal-variance t-test with Welch–Satterthwaite degrees of freedom.
pub fn welch_ttest(a: &[f64], b: &[f64]) -> Result<WelchResult, StatsError> {
    for s in [a, b] {
        if s.len() < 2 {
            return Err(StatsError::TooFew { needed: 2, got: s.len() });
        }
        if s.iter().any(|v| !v.is_finite()) {
            return Err(StatsError::NonFinite);
        }
    }
    let (na, nb) = (a.len() as f64, b.len() as f64);
    let (va, vb) = (sample_variance(a) / na, sample_variance(b) / nb);
    let se2 = va + vb;
    if !(se2 > 0.0) {
        return Err(StatsError::ZeroVariance);
    }
    let t = (mean(a) - mean(b)) / se2.sqrt();
    let df = se2 * se2 / (va * va / (na - 1.0) + vb * vb / (nb - 1.0));
    let dist = StudentsT::new(0.0, 1.0, df).expect("df > 0");
    let p = (2.0 * dist.sf(t.abs())).min(1.0);
    Ok(WelchResult { t, df, p })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn constant_values() {
        let a = aggregate("es", &[52.33, 52.33, 52.33]).unwrap();
        assert_eq!((a.mean, a.std, a.ci95), (52.33, 0.0, 0.0));
    }

    #[test]
    fn one_to_five() {
        // scipy: std(ddof=1) and t.ppf(0.975, 4) * std / sqrt(5)
        let a = aggregate("x", &[1.0, 2.0, 3.0, 4.0, 5.0]).unwrap();
        assert_eq!(a.mean, 3.0);
        assert!((a.std - 1.5811388300841898).abs() < 1e-12);
        assert!((a.ci95 - 1.9632431614775607).abs() < 1e-9);
    }

    #[test]
    fn t_quantiles_match_table() {
        // scipy t.ppf(0.975, 4) and t.ppf(0.975, 2)
        assert!((t_quantile(0.975, 4.0) - 2.7764451051977987).abs() < 1e-9);
        assert!((t_quantile(0.975, 2.0) - 4.302652729696142).abs() < 1e-9);
    }

    #[test]
    fn too_few() {
        assert_eq!(aggregate("x", &[1.0]).unwrap_err(), StatsError::TooFew { needed: 2, got: 1 });
        assert!(welch_ttest(&[1.0], &[1.0, 2.0]).is_err());
    }

    #[test]
    fn welch_zero_numerator() {
        let r = welch_ttest(&[1.0, 2.0, 3.0], &[1.0, 2.0, 3.0]).unwrap();
        assert_eq!(r.t, 0.0);
        assert!((r.p - 1.0).abs() < 1e-12);
        let r = welch_ttest(&[4.0, 5.0, 6.0], &[0.0, 5.0, 10.0]).unwrap();
        assert_eq!(r.t, 0.0);
        assert_eq!(welch_ttest(&[2.0, 2.0], &[3.0, 3.0]).unwrap_err(), StatsError::ZeroVariance);
    }

    #[test]
    fn welch_against_scipy() {
        // scipy.stats.ttest_ind(a, b, equal_var=False)
        let r = welch_ttest(&[10.0, 11.0, 12.0, 13.0], &[20.0, 25.0, 22.0]).unwrap();
        assert!((r.t - -6.813851438692469).abs() < 1e-9);
        assert!((r.p - 0.008073949596797646).abs() < 1e-9);
    }
}
