//! Welch's unequal-variance t-test with the Welch-Satterthwaite degrees of
//! freedom. The two-sided p-value integrates the t density numerically
//! (adaptive Simpson) instead of pulling in a stats dependency.

use super::EvalError;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct WelchResult {
    pub t: f64,
    pub df: f64,
    pub p_two_sided: f64,
}

fn mean_var(sample: &[f64]) -> (f64, f64) {
    let n = sample.len() as f64;
    let mean = sample.iter().sum::<f64>() / n;
    let var = sample.iter().map(|x| (x - mean) * (x - mean)).sum::<f64>() / (n - 1.0);
    (mean, var)
}

/// Both samples need at least two observations. Zero-variance pairs are
/// defined directly: equal means give t = 0, p = 1; unequal means give
/// infinite separation, p = 0 (df falls back to the pooled n - 2).
pub fn welch_t(sample_a: &[f64], sample_b: &[f64]) -> Result<WelchResult, EvalError> {
    if sample_a.len() < 2 || sample_b.len() < 2 {
        return Err(EvalError::SampleTooSmall {
            len: sample_a.len().min(sample_b.len()),
        });
    }
    let (na, nb) = (sample_a.len() as f64, sample_b.len() as f64);
    let (ma, va) = mean_var(sample_a);
    let (mb, vb) = mean_var(sample_b);
    let sea = va / na;
    let seb = vb / nb;
    let se2 = sea + seb;
    if se2 == 0.0 {
        let df = na + nb - 2.0;
        return Ok(if ma == mb {
            WelchResult {
                t: 0.0,
                df,
                p_two_sided: 1.0,
            }
        } else {
            WelchResult {
                t: if ma > mb {
                    f64::INFINITY
                } else {
                    f64::NEG_INFINITY
                },
                df,
                p_two_sided: 0.0,
            }
        });
    }
    let t = (ma - mb) / se2.sqrt();
    let df = se2 * se2 / (sea * sea / (na - 1.0) + seb * seb / (nb - 1.0));
    let p_two_sided = 2.0 * student_t_sf(t.abs(), df);
    Ok(WelchResult { t, df, p_two_sided })
}

/// P(T > x) for x >= 0: 0.5 minus the numerically integrated density over
/// [0, x].
fn student_t_sf(x: f64, df: f64) -> f64 {
    if x == 0.0 {
        return 0.5;
    }
    let log_c =
        ln_gamma((df + 1.0) / 2.0) - ln_gamma(df / 2.0) - 0.5 * (df * std::f64::consts::PI).ln();
    let pdf = move |v: f64| (log_c - (df + 1.0) / 2.0 * (v * v / df).ln_1p()).exp();
    let integral = adaptive_simpson(&pdf, 0.0, x, 1e-12, 60);
    (0.5 - integral).max(0.0)
}

/// Lanczos approximation (g = 7, 9 terms), good to ~1e-14 for x > 0.
fn ln_gamma(x: f64) -> f64 {
    const COEFFS: [f64; 8] = [
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
        return (std::f64::consts::PI / (std::f64::consts::PI * x).sin()).ln() - ln_gamma(1.0 - x);
    }
    let x = x - 1.0;
    let mut acc = 0.99999999999980993;
    for (i, &c) in COEFFS.iter().enumerate() {
        acc += c / (x + i as f64 + 1.0);
    }
    let t = x + 7.5;
    0.5 * (2.0 * std::f64::consts::PI).ln() + (x + 0.5) * t.ln() - t + acc.ln()
}

fn simpson(f: &dyn Fn(f64) -> f64, a: f64, b: f64) -> f64 {
    (b - a) / 6.0 * (f(a) + 4.0 * f((a + b) / 2.0) + f(b))
}

fn adaptive_simpson(f: &dyn Fn(f64) -> f64, a: f64, b: f64, tol: f64, depth: u32) -> f64 {
    let whole = simpson(f, a, b);
    adaptive_step(f, a, b, tol, whole, depth)
}

fn adaptive_step(f: &dyn Fn(f64) -> f64, a: f64, b: f64, tol: f64, whole: f64, depth: u32) -> f64 {
    let m = (a + b) / 2.0;
    let left = simpson(f, a, m);
    let right = simpson(f, m, b);
    if depth == 0 || (left + right - whole).abs() <= 15.0 * tol {
        return left + right + (left + right - whole) / 15.0;
    }
    adaptive_step(f, a, m, tol / 2.0, left, depth - 1)
        + adaptive_step(f, m, b, tol / 2.0, right, depth - 1)
}
