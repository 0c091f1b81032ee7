//! Implied-distribution reconstruction from bucket markets: unified
//! event probabilities, 24-hour value-weighted token snapshots, and a
//! Gaussian fitted to bucket probability masses at each grid time.

use chrono::{DateTime, Duration, Utc};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::normal::normal_cdf;

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum FitError {
    #[error("need at least two buckets with observed mass")]
    TooFewBuckets,
    #[error("all probability mass sits in one unbounded bucket")]
    Degenerate,
}

/// Which outcome token a trade was on, relative to the bucket event.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum OutcomeSide {
    Yes,
    No,
}

/// Unified bucket-event probability of one trade: YES prices pass
/// through, NO prices map through the complement.
pub fn cpi_event_prob(price: f64, side: OutcomeSide) -> f64 {
    match side {
        OutcomeSide::Yes => price,
        OutcomeSide::No => 1.0 - price,
    }
}

/// One unified trade feeding a token snapshot.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CpiTrade {
    #[serde(with = "polyflow_core::time::iso_seconds")]
    pub timestamp: DateTime<Utc>,
    /// Already unified through [`cpi_event_prob`].
    pub event_prob: f64,
    /// Trade value (collateral units) used as the weight.
    pub value: f64,
}

pub const SNAPSHOT_WINDOW_HOURS: i64 = 24;
pub const MIN_TOKEN_PROB: f64 = 0.10;

/// Value-weighted probability of one token over trades in `(t −
/// window, t]`; `None` when no trades fall in the window or the
/// weighted probability does not exceed `min_prob`.
pub fn cpi_token_snapshot(
    trades: &[CpiTrade],
    t: DateTime<Utc>,
    window: Duration,
    min_prob: f64,
) -> Option<f64> {
    let mut num = 0.0;
    let mut den = 0.0;
    for trade in trades {
        if trade.timestamp > t - window && trade.timestamp <= t {
            num += trade.value * trade.event_prob;
            den += trade.value;
        }
    }
    if den == 0.0 {
        return None;
    }
    let p = num / den;
    (p > min_prob).then_some(p)
}

/// One outcome bucket: a half-open interval `(lower, upper]` on the
/// real line; the end buckets are unbounded.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BucketSpec {
    pub label: String,
    pub lower: f64,
    pub upper: f64,
}

impl BucketSpec {
    pub fn new(label: impl Into<String>, lower: f64, upper: f64) -> Self {
        let spec = Self {
            label: label.into(),
            lower,
            upper,
        };
        assert!(spec.lower < spec.upper, "bucket bounds must be ordered");
        spec
    }

    pub fn is_unbounded(&self) -> bool {
        self.lower.is_infinite() || self.upper.is_infinite()
    }
}

/// Gaussian mass of a bucket: Φ((upper−μ)/σ) − Φ((lower−μ)/σ), with
/// infinite bounds mapping Φ to 0 or 1.
pub fn bucket_mass(mu: f64, sigma: f64, bucket: &BucketSpec) -> f64 {
    assert!(sigma > 0.0, "sigma must be positive");
    let cdf = |bound: f64| {
        if bound == f64::INFINITY {
            1.0
        } else if bound == f64::NEG_INFINITY {
            0.0
        } else {
            normal_cdf((bound - mu) / sigma)
        }
    };
    cdf(bucket.upper) - cdf(bucket.lower)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GaussianFit {
    pub mu: f64,
    pub sigma: f64,
    /// Sum of squared mass errors at the optimum.
    pub residual: f64,
}

/// Search-space parameters for the bucket-mass fit: a μ grid padded
/// around the finite bucket bounds, a multiplicative σ grid, then
/// derivative-free local refinement.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FitOptions {
    pub mu_pad: f64,
    pub mu_step: f64,
    pub sigma_min: f64,
    pub sigma_max: f64,
    pub sigma_factor: f64,
    /// Hard lower bound on the reported σ.
    pub sigma_floor: f64,
}

impl Default for FitOptions {
    fn default() -> Self {
        Self {
            mu_pad: 0.5,
            mu_step: 1e-3,
            sigma_min: 0.01,
            sigma_max: 1.0,
            sigma_factor: 1.15,
            sigma_floor: 0.005,
        }
    }
}

/// Least-squares Gaussian over observed bucket masses. Masses are
/// normalized to sum 1 before fitting; the objective is evaluated only
/// over the observed buckets.
pub fn fit_gaussian_to_buckets(
    observed: &[(BucketSpec, f64)],
    options: FitOptions,
) -> Result<GaussianFit, FitError> {
    let with_mass: Vec<(&BucketSpec, f64)> = observed
        .iter()
        .filter(|(_, m)| *m > 0.0)
        .map(|(b, m)| (b, *m))
        .collect();
    if with_mass.len() < 2 {
        // a single massive bucket with finite bounds still pins nothing
        // beyond its midpoint; a single unbounded one pins nothing at all
        if with_mass.len() == 1 && with_mass[0].0.is_unbounded() {
            return Err(FitError::Degenerate);
        }
        return Err(FitError::TooFewBuckets);
    }
    let total: f64 = with_mass.iter().map(|(_, m)| m).sum();
    let normalized: Vec<(&BucketSpec, f64)> = with_mass
        .iter()
        .map(|(b, m)| (*b, m / total))
        .collect();

    let finite_bounds: Vec<f64> = normalized
        .iter()
        .flat_map(|(b, _)| [b.lower, b.upper])
        .filter(|v| v.is_finite())
        .collect();
    let (lo, hi) = match (
        finite_bounds.iter().cloned().fold(f64::INFINITY, f64::min),
        finite_bounds.iter().cloned().fold(f64::NEG_INFINITY, f64::max),
    ) {
        (lo, hi) if lo.is_finite() && hi.is_finite() => (lo, hi),
        _ => return Err(FitError::Degenerate),
    };

    let sse = |mu: f64, sigma: f64| -> f64 {
        normalized
            .iter()
            .map(|(b, obs)| {
                let d = bucket_mass(mu, sigma, b) - obs;
                d * d
            })
            .sum()
    };

    // coarse grid
    let mut best = (f64::INFINITY, lo, options.sigma_min.max(options.sigma_floor));
    let mu_lo = lo - options.mu_pad;
    let mu_hi = hi + options.mu_pad;
    let steps = ((mu_hi - mu_lo) / options.mu_step).ceil() as usize;
    let mut sigmas = Vec::new();
    let mut s = options.sigma_min.max(options.sigma_floor);
    while s <= options.sigma_max {
        sigmas.push(s);
        s *= options.sigma_factor;
    }
    for i in 0..=steps {
        let mu = mu_lo + i as f64 * options.mu_step;
        for &sigma in &sigmas {
            let e = sse(mu, sigma);
            if e < best.0 {
                best = (e, mu, sigma);
            }
        }
    }

    // derivative-free coordinate refinement
    let (mut err, mut mu, mut sigma) = best;
    let mut mu_step = options.mu_step;
    let mut sigma_factor: f64 = 1.05;
    while mu_step > 1e-9 || sigma_factor - 1.0 > 1e-9 {
        let mut improved = false;
        for (cand_mu, cand_sigma) in [
            (mu + mu_step, sigma),
            (mu - mu_step, sigma),
            (mu, (sigma * sigma_factor).min(options.sigma_max)),
            (mu, (sigma / sigma_factor).max(options.sigma_floor)),
        ] {
            let e = sse(cand_mu, cand_sigma);
            if e < err {
                err = e;
                mu = cand_mu;
                sigma = cand_sigma;
                improved = true;
            }
        }
        if !improved {
            mu_step /= 2.0;
            sigma_factor = 1.0 + (sigma_factor - 1.0) / 2.0;
        }
    }

    Ok(GaussianFit {
        mu,
        sigma,
        residual: err,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ImpliedPathPoint {
    #[serde(with = "polyflow_core::time::iso_seconds")]
    pub t: DateTime<Utc>,
    pub mu: f64,
    pub sigma: f64,
    pub tokens_used: u32,
    pub fit_residual: f64,
}

/// One bucket market's spec plus its unified trade stream.
#[derive(Debug, Clone)]
pub struct BucketSeries {
    pub spec: BucketSpec,
    pub trades: Vec<CpiTrade>,
}

/// Reconstructs the implied path over a time grid: snapshot the
/// retained token probabilities at each grid time, normalize, fit.
/// Grid times with fewer than two retained tokens are skipped.
pub fn implied_cpi_path(
    series: &[BucketSeries],
    grid: &[DateTime<Utc>],
    window: Duration,
    min_prob: f64,
    options: FitOptions,
) -> Vec<ImpliedPathPoint> {
    let mut out = Vec::new();
    for &t in grid {
        let observed: Vec<(BucketSpec, f64)> = series
            .iter()
            .filter_map(|s| {
                cpi_token_snapshot(&s.trades, t, window, min_prob)
                    .map(|p| (s.spec.clone(), p))
            })
            .collect();
        if observed.len() < 2 {
            continue;
        }
        if let Ok(fit) = fit_gaussian_to_buckets(&observed, options) {
            out.push(ImpliedPathPoint {
                t,
                mu: fit.mu,
                sigma: fit.sigma,
                tokens_used: observed.len() as u32,
                fit_residual: fit.residual,
            });
        }
    }
    out
}

// ---------------------------------------------------------------------
// bucket-label parsing
// ---------------------------------------------------------------------

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum BucketLabelKind {
    LessOrEqual(f64),
    Point(f64),
    GreaterOrEqual(f64),
}

/// Parses a bucket label out of a market title: the percentage figure
/// plus an optional "or less"/"or more" qualifier, e.g. "0.2%",
/// "0.0% or less", "0.4% or more".
pub fn parse_bucket_label(title: &str) -> Option<BucketLabelKind> {
    let lowered = title.to_lowercase();
    let pct = lowered.rfind('%')?;
    let head = &lowered[..pct];
    let start = head
        .rfind(|c: char| !(c.is_ascii_digit() || c == '.' || c == '-'))
        .map(|i| i + 1)
        .unwrap_or(0);
    let value: f64 = head[start..].parse().ok()?;
    let tail = &lowered[pct + 1..];
    if tail.trim_start().starts_with("or less") {
        Some(BucketLabelKind::LessOrEqual(value))
    } else if tail.trim_start().starts_with("or more") {
        Some(BucketLabelKind::GreaterOrEqual(value))
    } else {
        Some(BucketLabelKind::Point(value))
    }
}

impl BucketLabelKind {
    pub fn center(&self) -> f64 {
        match self {
            Self::LessOrEqual(v) | Self::Point(v) | Self::GreaterOrEqual(v) => *v,
        }
    }
}

/// Builds a partition of the real line from parsed bucket labels:
/// boundaries at midpoints between adjacent centers, unbounded ends.
/// Returns specs ordered by center alongside the input index of each.
pub fn build_bucket_partition(labels: &[(usize, BucketLabelKind)]) -> Vec<(usize, BucketSpec)> {
    let mut sorted: Vec<(usize, BucketLabelKind)> = labels.to_vec();
    sorted.sort_by(|a, b| a.1.center().partial_cmp(&b.1.center()).unwrap());
    let centers: Vec<f64> = sorted.iter().map(|(_, k)| k.center()).collect();
    let n = centers.len();
    let mut out = Vec::with_capacity(n);
    for (i, (idx, kind)) in sorted.iter().enumerate() {
        let lower = if i == 0 {
            f64::NEG_INFINITY
        } else {
            (centers[i - 1] + centers[i]) / 2.0
        };
        let upper = if i == n - 1 {
            f64::INFINITY
        } else {
            (centers[i] + centers[i + 1]) / 2.0
        };
        out.push((
            *idx,
            BucketSpec {
                label: format!("{:.1}%", kind.center()),
                lower,
                upper,
            },
        ));
    }
    out
}
