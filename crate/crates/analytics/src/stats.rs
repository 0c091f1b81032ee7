//! Classical test statistics used by the fee analysis: Pearson
//! correlation, one-way ANOVA (with an incomplete-beta p-value), and the
//! Kruskal–Wallis rank test with midrank tie correction.

use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum StatsError {
    #[error("degenerate input: {0}")]
    DegenerateInput(String),
}

/// Product-moment correlation. Requires equal lengths >= 2 and nonzero
/// variance on both sides.
pub fn pearson_r(x: &[f64], y: &[f64]) -> Result<f64, StatsError> {
    if x.len() != y.len() || x.len() < 2 {
        return Err(StatsError::DegenerateInput(format!(
            "need two equal-length samples of n >= 2, got {} and {}",
            x.len(),
            y.len()
        )));
    }
    let n = x.len() as f64;
    let mx = x.iter().sum::<f64>() / n;
    let my = y.iter().sum::<f64>() / n;
    let mut sxx = 0.0;
    let mut syy = 0.0;
    let mut sxy = 0.0;
    for (a, b) in x.iter().zip(y) {
        let dx = a - mx;
        let dy = b - my;
        sxx += dx * dx;
        syy += dy * dy;
        sxy += dx * dy;
    }
    if sxx == 0.0 || syy == 0.0 {
        return Err(StatsError::DegenerateInput("zero variance".into()));
    }
    Ok(sxy / (sxx * syy).sqrt())
}

#[derive(Debug, Clone, PartialEq)]
pub struct AnovaResult {
    pub f: f64,
    pub df_between: u64,
    pub df_within: u64,
    /// Upper-tail probability via the regularized incomplete beta.
    pub p_value: Option<f64>,
}

/// One-way ANOVA F statistic across groups.
pub fn anova_oneway(groups: &[Vec<f64>]) -> Result<AnovaResult, StatsError> {
    let k = groups.len();
    if k < 2 || groups.iter().any(|g| g.is_empty()) {
        return Err(StatsError::DegenerateInput(
            "need >= 2 non-empty groups".into(),
        ));
    }
    let n: usize = groups.iter().map(|g| g.len()).sum();
    if n <= k {
        return Err(StatsError::DegenerateInput(
            "total observations must exceed group count".into(),
        ));
    }
    let grand = groups.iter().flatten().sum::<f64>() / n as f64;
    let mut ssb = 0.0;
    let mut ssw = 0.0;
    for g in groups {
        let mean = g.iter().sum::<f64>() / g.len() as f64;
        ssb += g.len() as f64 * (mean - grand) * (mean - grand);
        ssw += g.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>();
    }
    let df_b = (k - 1) as u64;
    let df_w = (n - k) as u64;
    if ssw == 0.0 {
        return Err(StatsError::DegenerateInput("zero within-group variance".into()));
    }
    let f = (ssb / df_b as f64) / (ssw / df_w as f64);
    let p_value = if f.is_finite() {
        let x = df_w as f64 / (df_w as f64 + df_b as f64 * f);
        Some(beta_reg(df_w as f64 / 2.0, df_b as f64 / 2.0, x))
    } else {
        None
    };
    Ok(AnovaResult {
        f,
        df_between: df_b,
        df_within: df_w,
        p_value,
    })
}

/// Kruskal–Wallis H with midranks for ties and the standard tie
/// correction. All-tied data yields H = 0.
pub fn kruskal_wallis(groups: &[Vec<f64>]) -> Result<f64, StatsError> {
    let k = groups.len();
    if k < 2 || groups.iter().any(|g| g.is_empty()) {
        return Err(StatsError::DegenerateInput(
            "need >= 2 non-empty groups".into(),
        ));
    }
    let mut pooled: Vec<(f64, usize)> = Vec::new();
    for (gi, g) in groups.iter().enumerate() {
        for v in g {
            if !v.is_finite() {
                return Err(StatsError::DegenerateInput("non-finite value".into()));
            }
            pooled.push((*v, gi));
        }
    }
    let n = pooled.len();
    pooled.sort_by(|a, b| a.0.partial_cmp(&b.0).unwrap());

    // midranks and tie-group sizes
    let mut rank_sums = vec![0.0f64; k];
    let mut tie_term = 0.0f64;
    let mut i = 0;
    while i < n {
        let mut j = i;
        while j + 1 < n && pooled[j + 1].0 == pooled[i].0 {
            j += 1;
        }
        let t = (j - i + 1) as f64;
        let midrank = (i + 1 + j + 1) as f64 / 2.0;
        for item in &pooled[i..=j] {
            rank_sums[item.1] += midrank;
        }
        tie_term += t * t * t - t;
        i = j + 1;
    }

    let nf = n as f64;
    let mut h = 0.0;
    for (gi, g) in groups.iter().enumerate() {
        h += rank_sums[gi] * rank_sums[gi] / g.len() as f64;
    }
    h = 12.0 / (nf * (nf + 1.0)) * h - 3.0 * (nf + 1.0);

    let correction = 1.0 - tie_term / (nf * nf * nf - nf);
    if correction <= 0.0 {
        // every observation tied
        return Ok(0.0);
    }
    Ok(h / correction)
}

// ----- regularized incomplete beta (for the ANOVA p-value) -----

fn ln_gamma(x: f64) -> f64 {
    // Lanczos, g = 7, n = 9
    const COEF: [f64; 8] = [
        676.520_368_121_885_1,
        -1_259.139_216_722_402_8,
        771.323_428_777_653_1,
        -176.615_029_162_140_6,
        12.507_343_278_686_905,
        -0.138_571_095_265_720_12,
        9.984_369_578_019_572e-6,
        1.505_632_735_149_311_6e-7,
    ];
    if x < 0.5 {
        // reflection
        return std::f64::consts::PI.ln()
            - (std::f64::consts::PI * x).sin().ln()
            - ln_gamma(1.0 - x);
    }
    let x = x - 1.0;
    let mut a = 0.999_999_999_999_809_93;
    let t = x + 7.5;
    for (i, c) in COEF.iter().enumerate() {
        a += c / (x + (i + 1) as f64);
    }
    0.5 * (2.0 * std::f64::consts::PI).ln() + (x + 0.5) * t.ln() - t + a.ln()
}

fn beta_cf(a: f64, b: f64, x: f64) -> f64 {
    // continued fraction by the modified Lentz method
    const MAX_ITER: usize = 300;
    const EPS: f64 = 3e-16;
    const FPMIN: f64 = 1e-300;
    let qab = a + b;
    let qap = a + 1.0;
    let qam = a - 1.0;
    let mut c = 1.0;
    let mut d = 1.0 - qab * x / qap;
    if d.abs() < FPMIN {
        d = FPMIN;
    }
    d = 1.0 / d;
    let mut h = d;
    for m in 1..=MAX_ITER {
        let m = m as f64;
        let m2 = 2.0 * m;
        let aa = m * (b - m) * x / ((qam + m2) * (a + m2));
        d = 1.0 + aa * d;
        if d.abs() < FPMIN {
            d = FPMIN;
        }
        c = 1.0 + aa / c;
        if c.abs() < FPMIN {
            c = FPMIN;
        }
        d = 1.0 / d;
        h *= d * c;
        let aa = -(a + m) * (qab + m) * x / ((a + m2) * (qap + m2));
        d = 1.0 + aa * d;
        if d.abs() < FPMIN {
            d = FPMIN;
        }
        c = 1.0 + aa / c;
        if c.abs() < FPMIN {
            c = FPMIN;
        }
        d = 1.0 / d;
        let del = d * c;
        h *= del;
        if (del - 1.0).abs() < EPS {
            break;
        }
    }
    h
}

/// Regularized incomplete beta I_x(a, b).
pub fn beta_reg(a: f64, b: f64, x: f64) -> f64 {
    if x <= 0.0 {
        return 0.0;
    }
    if x >= 1.0 {
        return 1.0;
    }
    let bt = (ln_gamma(a + b) - ln_gamma(a) - ln_gamma(b) + a * x.ln() + b * (1.0 - x).ln()).exp();
    if x < (a + 1.0) / (a + b + 2.0) {
        bt * beta_cf(a, b, x) / a
    } else {
        1.0 - bt * beta_cf(b, a, 1.0 - x) / b
    }
}
