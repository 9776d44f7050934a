//! Descriptive statistics and the significance tests used in reports.

use serde::{Deserialize, Serialize};
use statrs::distribution::{ContinuousCDF, StudentsT};

/// Two-sided 95% normal quantile.
pub const Z_95: f64 = 1.959_963_984_540_054;

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum StatsError {
    #[error("need at least {need} values, got {got}")]
    TooFew { need: usize, got: usize },
    #[error("series lengths differ ({0} vs {1})")]
    LengthMismatch(usize, usize),
    #[error("series is constant, so the statistic is undefined")]
    Constant,
    #[error("both samples have zero variance")]
    ZeroVariance,
    #[error("rate must lie in (0, 1), got {0}")]
    InvalidRate(f64),
}

pub fn mean(xs: &[f64]) -> Option<f64> {
    (!xs.is_empty()).then(|| xs.iter().sum::<f64>() / xs.len() as f64)
}

/// Sample variance (n - 1 denominator).
pub fn variance(xs: &[f64]) -> Option<f64> {
    if xs.len() < 2 {
        return None;
    }
    let m = mean(xs)?;
    Some(xs.iter().map(|x| (x - m).powi(2)).sum::<f64>() / (xs.len() - 1) as f64)
}

/// Mean with standard error and a 95% normal-approximation interval.
/// With a single value the spread fields are NaN.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Summary {
    pub n: usize,
    pub mean: f64,
    pub sd: f64,
    pub se: f64,
    pub ci_low: f64,
    pub ci_high: f64,
}

pub fn summarize(xs: &[f64]) -> Option<Summary> {
    let m = mean(xs)?;
    let sd = variance(xs).map_or(f64::NAN, f64::sqrt);
    let se = sd / (xs.len() as f64).sqrt();
    Some(Summary {
        n: xs.len(),
        mean: m,
        sd,
        se,
        ci_low: m - Z_95 * se,
        ci_high: m + Z_95 * se,
    })
}

pub fn pearson_r(x: &[f64], y: &[f64]) -> Result<f64, StatsError> {
    if x.len() != y.len() {
        return Err(StatsError::LengthMismatch(x.len(), y.len()));
    }
    if x.len() < 2 {
        return Err(StatsError::TooFew { need: 2, got: x.len() });
    }
    let mx = mean(x).unwrap_or_default();
    let my = mean(y).unwrap_or_default();
    let (mut sxy, mut sxx, mut syy) = (0.0, 0.0, 0.0);
    for (a, b) in x.iter().zip(y) {
        sxy += (a - mx) * (b - my);
        sxx += (a - mx).powi(2);
        syy += (b - my).powi(2);
    }
    if sxx == 0.0 || syy == 0.0 {
        return Err(StatsError::Constant);
    }
    Ok((sxy / (sxx * syy).sqrt()).clamp(-1.0, 1.0))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct WelchResult {
    pub t: f64,
    pub df: f64,
    /// Two-sided.
    pub p: f64,
}

/// Welch's unequal-variance t test of mean(a) - mean(b).
pub fn welch_t(a: &[f64], b: &[f64]) -> Result<WelchResult, StatsError> {
    for s in [a, b] {
        if s.len() < 2 {
            return Err(StatsError::TooFew { need: 2, got: s.len() });
        }
    }
    let (na, nb) = (a.len() as f64, b.len() as f64);
    let (va, vb) = (variance(a).unwrap_or_default(), variance(b).unwrap_or_default());
    let diff = mean(a).unwrap_or_default() - mean(b).unwrap_or_default();
    let (qa, qb) = (va / na, vb / nb);
    let se2 = qa + qb;
    if se2 == 0.0 {
        if diff == 0.0 {
            return Ok(WelchResult { t: 0.0, df: na + nb - 2.0, p: 1.0 });
        }
        return Err(StatsError::ZeroVariance);
    }
    let t = diff / se2.sqrt();
    let df = se2 * se2 / (qa * qa / (na - 1.0) + qb * qb / (nb - 1.0));
    let dist = StudentsT::new(0.0, 1.0, df).map_err(|_| StatsError::ZeroVariance)?;
    let p = (2.0 * dist.sf(t.abs())).min(1.0);
    Ok(WelchResult { t, df, p })
}

/// Cohen's d with the pooled standard deviation.
pub fn cohen_d(a: &[f64], b: &[f64]) -> Result<f64, StatsError> {
    for s in [a, b] {
        if s.len() < 2 {
            return Err(StatsError::TooFew { need: 2, got: s.len() });
        }
    }
    let (na, nb) = (a.len() as f64, b.len() as f64);
    let pooled = ((na - 1.0) * variance(a).unwrap_or_default()
        + (nb - 1.0) * variance(b).unwrap_or_default())
        / (na + nb - 2.0);
    let diff = mean(a).unwrap_or_default() - mean(b).unwrap_or_default();
    if pooled == 0.0 {
        return if diff == 0.0 { Ok(0.0) } else { Err(StatsError::ZeroVariance) };
    }
    Ok(diff / pooled.sqrt())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BhResult {
    pub rejected: Vec<bool>,
    /// Step-up adjusted p values, in input order.
    pub adjusted: Vec<f64>,
}

/// Benjamini-Hochberg step-up procedure at false discovery rate `q`.
pub fn bh_fdr(p_values: &[f64], q: f64) -> Result<BhResult, StatsError> {
    if !(q > 0.0 && q < 1.0) {
        return Err(StatsError::InvalidRate(q));
    }
    let m = p_values.len();
    let mut order: Vec<usize> = (0..m).collect();
    order.sort_by(|&i, &j| p_values[i].total_cmp(&p_values[j]));

    // Largest rank k with p_(k) <= k q / m; everything up to it is rejected.
    let cutoff = order
        .iter()
        .enumerate()
        .filter(|&(rank, &i)| p_values[i] <= (rank + 1) as f64 * q / m as f64)
        .map(|(rank, _)| rank + 1)
        .max()
        .unwrap_or(0);

    let mut rejected = vec![false; m];
    let mut adjusted = vec![0.0; m];
    let mut running = 1.0_f64;
    for (rank, &i) in order.iter().enumerate().rev() {
        running = running.min(p_values[i] * m as f64 / (rank + 1) as f64);
        adjusted[i] = running;
        rejected[i] = rank < cutoff;
    }
    Ok(BhResult { rejected, adjusted })
}
