//! Statistics primitives: product-moment correlation with a two-sided
//! t-approximated p-value, and seeded percentile bootstrap intervals.

use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Pearson {
    pub r: f64,
    pub p: f64,
    pub n: usize,
}

/// Pearson product-moment correlation. Requires equal lengths, n >= 3 and
/// nonzero variance on both sides. The p-value is two-sided via
/// t = r * sqrt((n-2) / (1-r^2)) on n-2 degrees of freedom.
pub fn pearson(x: &[f64], y: &[f64]) -> Result<Pearson> {
    if x.len() != y.len() {
        return Err(Error::Stats(format!(
            "length mismatch: {} vs {}",
            x.len(),
            y.len()
        )));
    }
    let n = x.len();
    if n < 3 {
        return Err(Error::Stats(format!("need at least 3 points, got {n}")));
    }
    let mean_x = x.iter().sum::<f64>() / n as f64;
    let mean_y = y.iter().sum::<f64>() / n as f64;
    let mut s_xy = 0.0;
    let mut s_xx = 0.0;
    let mut s_yy = 0.0;
    for (a, b) in x.iter().zip(y) {
        let dx = a - mean_x;
        let dy = b - mean_y;
        s_xy += dx * dy;
        s_xx += dx * dx;
        s_yy += dy * dy;
    }
    if s_xx == 0.0 || s_yy == 0.0 {
        return Err(Error::Stats("zero variance input".into()));
    }

    // At perfect correlation the Cauchy-Schwarz bound is met exactly;
    // comparing the squared sums sidesteps square-root rounding so
    // y = x and y = -x come out at exactly +/-1.
    let r = if s_xy * s_xy >= s_xx * s_yy {
        s_xy.signum()
    } else {
        (s_xy / (s_xx * s_yy).sqrt()).clamp(-1.0, 1.0)
    };

    let df = (n - 2) as f64;
    let p = if r.abs() >= 1.0 {
        0.0
    } else {
        let t2 = r * r * df / (1.0 - r * r);
        // Two-sided: P(|T| > t) = I_{df/(df+t^2)}(df/2, 1/2).
        incomplete_beta(df / 2.0, 0.5, df / (df + t2))
    };
    Ok(Pearson { r, p, n })
}

/// ln Γ(x) by the Lanczos approximation.
fn ln_gamma(x: f64) -> f64 {
    const COEFFICIENTS: [f64; 6] = [
        76.18009172947146,
        -86.50532032941677,
        24.01409824083091,
        -1.231739572450155,
        0.1208650973866179e-2,
        -0.5395239384953e-5,
    ];
    let mut y = x;
    let tmp = x + 5.5;
    let tmp = tmp - (x + 0.5) * tmp.ln();
    let mut series = 1.000000000190015;
    for c in COEFFICIENTS {
        y += 1.0;
        series += c / y;
    }
    -tmp + (2.5066282746310005 * series / x).ln()
}

/// Regularized incomplete beta function I_x(a, b), by continued fraction.
pub fn incomplete_beta(a: f64, b: f64, x: f64) -> f64 {
    if x <= 0.0 {
        return 0.0;
    }
    if x >= 1.0 {
        return 1.0;
    }
    let ln_front =
        ln_gamma(a + b) - ln_gamma(a) - ln_gamma(b) + a * x.ln() + b * (1.0 - x).ln();
    let front = ln_front.exp();
    if x < (a + 1.0) / (a + b + 2.0) {
        front * beta_cf(a, b, x) / a
    } else {
        1.0 - front * beta_cf(b, a, 1.0 - x) / b
    }
}

fn beta_cf(a: f64, b: f64, x: f64) -> f64 {
    const MAX_ITER: usize = 200;
    const EPS: f64 = 3.0e-14;
    const FPMIN: f64 = 1.0e-300;

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

/// Linear-interpolation percentile over a sorted sample (the common R-7
/// definition). `q` in [0, 1].
pub fn percentile(sorted: &[f64], q: f64) -> f64 {
    assert!(!sorted.is_empty(), "percentile of empty sample");
    if sorted.len() == 1 {
        return sorted[0];
    }
    let pos = q.clamp(0.0, 1.0) * (sorted.len() - 1) as f64;
    let lower = pos.floor() as usize;
    let frac = pos - lower as f64;
    if lower + 1 >= sorted.len() {
        sorted[sorted.len() - 1]
    } else {
        sorted[lower] * (1.0 - frac) + sorted[lower + 1] * frac
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BootstrapCi {
    pub low: f64,
    pub high: f64,
}

/// Percentile bootstrap 95% interval for the mean of `values`, resampling
/// with replacement under a fixed seed. Deterministic for identical
/// inputs, seed, and iteration count.
pub fn bootstrap_mean_ci(values: &[f64], iterations: usize, seed: u64) -> Result<BootstrapCi> {
    if values.is_empty() {
        return Err(Error::Stats("bootstrap over an empty sample".into()));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut means = Vec::with_capacity(iterations);
    for _ in 0..iterations {
        let mut sum = 0.0;
        for _ in 0..values.len() {
            sum += values[rng.gen_range(0..values.len())];
        }
        means.push(sum / values.len() as f64);
    }
    means.sort_by(|a, b| a.partial_cmp(b).expect("finite means"));
    Ok(BootstrapCi {
        low: percentile(&means, 0.025),
        high: percentile(&means, 0.975),
    })
}

/// Percentile bootstrap 95% interval for a ratio-of-sums statistic over
/// groups: groups are resampled with replacement and the statistic is
/// sum(numerators) / sum(denominators). Used for patient-level resampling
/// where each patient carries several scenarios.
pub fn bootstrap_grouped_ci(
    groups: &[(f64, f64)],
    iterations: usize,
    seed: u64,
) -> Result<BootstrapCi> {
    if groups.is_empty() {
        return Err(Error::Stats("bootstrap over an empty sample".into()));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut stats = Vec::with_capacity(iterations);
    for _ in 0..iterations {
        let mut num = 0.0;
        let mut den = 0.0;
        for _ in 0..groups.len() {
            let (n, d) = groups[rng.gen_range(0..groups.len())];
            num += n;
            den += d;
        }
        if den > 0.0 {
            stats.push(num / den);
        }
    }
    if stats.is_empty() {
        return Err(Error::Stats("every bootstrap resample was empty".into()));
    }
    stats.sort_by(|a, b| a.partial_cmp(b).expect("finite stats"));
    Ok(BootstrapCi {
        low: percentile(&stats, 0.025),
        high: percentile(&stats, 0.975),
    })
}
