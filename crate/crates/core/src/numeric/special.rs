//! Normal, chi-square and Student-t distribution functions.
//!
//! Everything here is built on two primitives: the regularized incomplete
//! gamma function (series below `a + 1`, Lentz continued fraction above) and
//! the regularized incomplete beta function. Tail probabilities are computed
//! from the tail they belong to, so that interval probabilities deep in either
//! tail do not cancel to zero.

use std::f64::consts::{FRAC_1_SQRT_2, LN_2, PI};

use super::quad::integrate;
use super::roots::find_root;
use super::{Interval, NumericError};

const EPS: f64 = 1e-16;
const TINY: f64 = 1e-300;
const MAX_SERIES: usize = 100_000;

/// Natural log of the gamma function for `x > 0` (Lanczos, g = 7).
pub fn ln_gamma(x: f64) -> f64 {
    const COEF: [f64; 9] = [
        0.999_999_999_999_809_9,
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
        return (PI / (PI * x).sin()).ln() - ln_gamma(1.0 - x);
    }
    let x = x - 1.0;
    let mut acc = COEF[0];
    let t = x + 7.5;
    for (i, c) in COEF.iter().enumerate().skip(1) {
        acc += c / (x + i as f64);
    }
    0.5 * (2.0 * PI).ln() + (x + 0.5) * t.ln() - t + acc.ln()
}

/// Regularized incomplete gamma functions `(P(a, x), Q(a, x))`.
pub fn gamma_pq(a: f64, x: f64) -> Result<(f64, f64), NumericError> {
    if !(a > 0.0) || !(x >= 0.0) {
        return Err(NumericError::Domain(format!(
            "incomplete gamma needs a > 0 and x >= 0, got a = {a}, x = {x}"
        )));
    }
    if x == 0.0 {
        return Ok((0.0, 1.0));
    }
    if x.is_infinite() {
        return Ok((1.0, 0.0));
    }
    let log_prefactor = a * x.ln() - x - ln_gamma(a);
    if x < a + 1.0 {
        let s = lower_series(a, x)?;
        let p = (log_prefactor + s.ln() - a.ln()).exp().min(1.0);
        Ok((p, 1.0 - p))
    } else {
        let cf = upper_continued_fraction(a, x)?;
        let q = (log_prefactor + cf.ln()).exp().min(1.0);
        Ok((1.0 - q, q))
    }
}

// sum_{k>=0} x^k / ((a+1)...(a+k)), so that P = x^a e^-x / Gamma(a+1) * sum
fn lower_series(a: f64, x: f64) -> Result<f64, NumericError> {
    let mut term = 1.0;
    let mut sum = 1.0;
    let mut ap = a;
    for _ in 0..MAX_SERIES {
        ap += 1.0;
        term *= x / ap;
        sum += term;
        if term.abs() < sum.abs() * EPS {
            return Ok(sum);
        }
    }
    Err(NumericError::NonConvergence(format!(
        "incomplete gamma series, a = {a}, x = {x}"
    )))
}

// Lentz evaluation of the continued fraction for Gamma(a, x) e^x x^-a.
fn upper_continued_fraction(a: f64, x: f64) -> Result<f64, NumericError> {
    let mut b = x + 1.0 - a;
    let mut c = 1.0 / TINY;
    let mut d = 1.0 / b;
    let mut h = d;
    for i in 1..MAX_SERIES {
        let an = -(i as f64) * (i as f64 - a);
        b += 2.0;
        d = an * d + b;
        if d.abs() < TINY {
            d = TINY;
        }
        c = b + an / c;
        if c.abs() < TINY {
            c = TINY;
        }
        d = 1.0 / d;
        let delta = d * c;
        h *= delta;
        if (delta - 1.0).abs() < EPS {
            return Ok(h);
        }
    }
    Err(NumericError::NonConvergence(format!(
        "incomplete gamma continued fraction, a = {a}, x = {x}"
    )))
}

/// Regularized incomplete beta function `I_x(a, b)`.
pub fn beta_inc(a: f64, b: f64, x: f64) -> Result<f64, NumericError> {
    if !(a > 0.0) || !(b > 0.0) || !(0.0..=1.0).contains(&x) {
        return Err(NumericError::Domain(format!(
            "incomplete beta needs a, b > 0 and x in [0, 1], got ({a}, {b}, {x})"
        )));
    }
    if x == 0.0 || x == 1.0 {
        return Ok(x);
    }
    let ln_front = ln_gamma(a + b) - ln_gamma(a) - ln_gamma(b) + a * x.ln() + b * (1.0 - x).ln();
    if x < (a + 1.0) / (a + b + 2.0) {
        Ok((ln_front.exp() * beta_continued_fraction(a, b, x)? / a).min(1.0))
    } else {
        Ok((1.0 - ln_front.exp() * beta_continued_fraction(b, a, 1.0 - x)? / b).max(0.0))
    }
}

fn beta_continued_fraction(a: f64, b: f64, x: f64) -> Result<f64, NumericError> {
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
    for m in 1..MAX_SERIES {
        let m = m as f64;
        let m2 = 2.0 * m;
        let aa = m * (b - m) * x / ((qam + m2) * (a + m2));
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
        let aa = -(a + m) * (qab + m) * x / ((a + m2) * (qap + m2));
        d = 1.0 + aa * d;
        if d.abs() < TINY {
            d = TINY;
        }
        c = 1.0 + aa / c;
        if c.abs() < TINY {
            c = TINY;
        }
        d = 1.0 / d;
        let delta = d * c;
        h *= delta;
        if (delta - 1.0).abs() < EPS {
            return Ok(h);
        }
    }
    Err(NumericError::NonConvergence(format!(
        "incomplete beta continued fraction, a = {a}, b = {b}, x = {x}"
    )))
}

fn check_df(df: f64) -> Result<(), NumericError> {
    if df >= 1.0 && df.is_finite() {
        Ok(())
    } else {
        Err(NumericError::Domain(format!("degrees of freedom must be >= 1, got {df}")))
    }
}

fn check_probability(p: f64) -> Result<(), NumericError> {
    if p > 0.0 && p < 1.0 {
        Ok(())
    } else {
        Err(NumericError::Domain(format!("probability must lie in (0, 1), got {p}")))
    }
}

/// Standard normal density.
pub fn normal_pdf(x: f64) -> f64 {
    (-0.5 * x * x).exp() / (2.0 * PI).sqrt()
}

/// Complementary error function.
pub fn erfc(t: f64) -> f64 {
    // erfc(t) = Q(1/2, t^2) for t >= 0; arguments are always valid here
    if t >= 0.0 {
        gamma_pq(0.5, t * t).map(|(_, q)| q).unwrap_or(0.0)
    } else {
        1.0 + gamma_pq(0.5, t * t).map(|(p, _)| p).unwrap_or(1.0)
    }
}

/// Standard normal CDF.
pub fn normal_cdf(x: f64) -> f64 {
    if x.is_nan() {
        return f64::NAN;
    }
    0.5 * erfc(-x * FRAC_1_SQRT_2)
}

/// Standard normal survival function, accurate in the upper tail.
pub fn normal_sf(x: f64) -> f64 {
    normal_cdf(-x)
}

/// `P(lo <= Z <= hi)` for a standard normal `Z`, evaluated in the tail that
/// avoids cancellation. Returns 0 for an empty interval.
pub fn normal_interval(lo: f64, hi: f64) -> f64 {
    if !(hi > lo) {
        return 0.0;
    }
    if lo >= 0.0 {
        (normal_sf(lo) - normal_sf(hi)).max(0.0)
    } else {
        (normal_cdf(hi) - normal_cdf(lo)).max(0.0)
    }
}

/// Inverse of the standard normal CDF.
pub fn normal_quantile(p: f64) -> Result<f64, NumericError> {
    check_probability(p)?;
    // Acklam's rational approximation, then Halley refinement
    const A: [f64; 6] = [
        -3.969_683_028_665_376e1,
        2.209_460_984_245_205e2,
        -2.759_285_104_469_687e2,
        1.383_577_518_672_69e2,
        -3.066_479_806_614_716e1,
        2.506_628_277_459_239,
    ];
    const B: [f64; 5] = [
        -5.447_609_879_822_406e1,
        1.615_858_368_580_409e2,
        -1.556_989_798_598_866e2,
        6.680_131_188_771_972e1,
        -1.328_068_155_288_572e1,
    ];
    const C: [f64; 6] = [
        -7.784_894_002_430_293e-3,
        -3.223_964_580_411_365e-1,
        -2.400_758_277_161_838,
        -2.549_732_539_343_734,
        4.374_664_141_464_968,
        2.938_163_982_698_783,
    ];
    const D: [f64; 4] = [
        7.784_695_709_041_462e-3,
        3.224_671_290_700_398e-1,
        2.445_134_137_142_996,
        3.754_408_661_907_416,
    ];
    let p_low = 0.024_25;
    let mut x = if p < p_low {
        let q = (-2.0 * p.ln()).sqrt();
        (((((C[0] * q + C[1]) * q + C[2]) * q + C[3]) * q + C[4]) * q + C[5])
            / ((((D[0] * q + D[1]) * q + D[2]) * q + D[3]) * q + 1.0)
    } else if p <= 1.0 - p_low {
        let q = p - 0.5;
        let r = q * q;
        (((((A[0] * r + A[1]) * r + A[2]) * r + A[3]) * r + A[4]) * r + A[5]) * q
            / (((((B[0] * r + B[1]) * r + B[2]) * r + B[3]) * r + B[4]) * r + 1.0)
    } else {
        let q = (-2.0 * (1.0 - p).ln()).sqrt();
        -(((((C[0] * q + C[1]) * q + C[2]) * q + C[3]) * q + C[4]) * q + C[5])
            / ((((D[0] * q + D[1]) * q + D[2]) * q + D[3]) * q + 1.0)
    };
    for _ in 0..2 {
        // work with the smaller tail to keep relative accuracy
        let e = if p < 0.5 {
            normal_cdf(x) - p
        } else {
            (1.0 - p) - normal_sf(x)
        };
        let u = e * (2.0 * PI).sqrt() * (0.5 * x * x).exp();
        x -= u / (1.0 + 0.5 * x * u);
    }
    Ok(x)
}

/// Chi-square density with `df` degrees of freedom.
pub fn chi2_pdf(x: f64, df: f64) -> f64 {
    if x < 0.0 {
        return 0.0;
    }
    if x == 0.0 {
        return match df {
            d if d < 2.0 => f64::INFINITY,
            d if d == 2.0 => 0.5,
            _ => 0.0,
        };
    }
    let k = 0.5 * df;
    ((k - 1.0) * x.ln() - 0.5 * x - k * LN_2 - ln_gamma(k)).exp()
}

/// Chi-square CDF.
pub fn chi2_cdf(x: f64, df: f64) -> Result<f64, NumericError> {
    check_df(df)?;
    if x < 0.0 || x.is_nan() {
        return Err(NumericError::Domain(format!("chi-square CDF needs x >= 0, got {x}")));
    }
    Ok(gamma_pq(0.5 * df, 0.5 * x)?.0)
}

/// Chi-square survival function `1 - F(x)`, computed directly.
pub fn chi2_sf(x: f64, df: f64) -> Result<f64, NumericError> {
    check_df(df)?;
    if x < 0.0 || x.is_nan() {
        return Err(NumericError::Domain(format!("chi-square SF needs x >= 0, got {x}")));
    }
    Ok(gamma_pq(0.5 * df, 0.5 * x)?.1)
}

/// `P(lo <= X <= hi)` for `X ~ chi2(df)`, in whichever tail avoids cancellation.
pub fn chi2_interval(lo: f64, hi: f64, df: f64) -> Result<f64, NumericError> {
    if !(hi > lo) {
        return Ok(0.0);
    }
    let lo = lo.max(0.0);
    let (p_lo, q_lo) = gamma_pq(0.5 * df, 0.5 * lo)?;
    let (p_hi, q_hi) = gamma_pq(0.5 * df, 0.5 * hi)?;
    let v = if p_lo > 0.5 { q_lo - q_hi } else { p_hi - p_lo };
    Ok(v.clamp(0.0, 1.0))
}

/// Chi-square quantile: the `x` with `chi2_cdf(x, df) = p`.
pub fn chi2_quantile(p: f64, df: f64) -> Result<f64, NumericError> {
    check_probability(p)?;
    if p > 0.5 {
        chi2_invert(1.0 - p, df, true)
    } else {
        chi2_invert(p, df, false)
    }
}

/// Inverse survival function: the `x` with `chi2_sf(x, df) = q`. Keeps full
/// relative accuracy for `q` near 0.
pub fn chi2_isf(q: f64, df: f64) -> Result<f64, NumericError> {
    check_probability(q)?;
    if q > 0.5 {
        chi2_invert(1.0 - q, df, false)
    } else {
        chi2_invert(q, df, true)
    }
}

// Solve P(x) = target (upper = false) or Q(x) = target (upper = true).
fn chi2_invert(target: f64, df: f64, upper: bool) -> Result<f64, NumericError> {
    check_df(df)?;
    // Wilson-Hilferty starting point
    let z = if upper { -normal_quantile(target)? } else { normal_quantile(target)? };
    let h = 2.0 / (9.0 * df);
    let guess = (df * (1.0 - h + z * h.sqrt()).powi(3)).max(1e-8);
    let residual = |x: f64| -> f64 {
        let (lo, up) = gamma_pq(0.5 * df, 0.5 * x).unwrap_or((f64::NAN, f64::NAN));
        // both branches increase with x
        if upper {
            target - up
        } else {
            lo - target
        }
    };
    let mut lo = guess * 0.5;
    let mut hi = guess * 2.0 + 1.0;
    let mut guard = 0;
    while residual(lo) > 0.0 {
        lo *= 0.1;
        guard += 1;
        if guard > 400 || lo == 0.0 {
            return Ok(0.0);
        }
    }
    while residual(hi) < 0.0 {
        hi *= 2.0;
        guard += 1;
        if guard > 400 {
            return Err(NumericError::NonConvergence(format!(
                "chi2 inversion target = {target}, df = {df}"
            )));
        }
    }
    find_root(residual, Interval::new(lo, hi)?, 1e-15 * hi.max(1.0))
}

/// Central Student-t CDF.
pub fn student_t_cdf_central(x: f64, df: f64) -> Result<f64, NumericError> {
    check_df(df)?;
    if x.is_infinite() {
        return Ok(if x > 0.0 { 1.0 } else { 0.0 });
    }
    let tail = 0.5 * beta_inc(0.5 * df, 0.5, df / (df + x * x))?;
    Ok(if x > 0.0 { 1.0 - tail } else { tail })
}

/// Student-t quantile with `df` degrees of freedom.
pub fn student_t_quantile(p: f64, df: f64) -> Result<f64, NumericError> {
    check_probability(p)?;
    check_df(df)?;
    if p == 0.5 {
        return Ok(0.0);
    }
    // solve on the lower tail for p < 0.5 and use symmetry otherwise
    let pl = p.min(1.0 - p);
    let start = normal_quantile(pl)?;
    let mut lo = start * 2.0 - 1.0;
    let f = |t: f64| student_t_cdf_central(t, df).unwrap_or(f64::NAN) - pl;
    let mut guard = 0;
    while f(lo) > 0.0 {
        lo *= 2.0;
        guard += 1;
        if guard > 200 {
            return Err(NumericError::NonConvergence(format!("t quantile p = {p}, df = {df}")));
        }
    }
    let q = find_root(f, Interval::new(lo, 0.0)?, 1e-14)?;
    Ok(if p < 0.5 { q } else { -q })
}

/// Student-t CDF with noncentrality `ncp`.
///
/// Uses `P(T <= x) = E[Phi(x W - ncp)]` with `W = sqrt(V / df)`, `V ~ chi2(df)`,
/// integrating over the bulk of the `W` distribution. `ncp = 0` falls back to
/// the central CDF.
pub fn student_t_cdf(x: f64, df: f64, ncp: f64) -> Result<f64, NumericError> {
    check_df(df)?;
    if ncp == 0.0 {
        return student_t_cdf_central(x, df);
    }
    chi_mixture_expectation(df, |w| normal_cdf(x * w - ncp), 1e-13)
}

/// `E[g(W)]` for `W = sqrt(V / df)`, `V ~ chi2(df)`, by adaptive quadrature
/// over the central `1 - 2e-15` mass of `W`.
pub fn chi_mixture_expectation<G>(df: f64, g: G, tol: f64) -> Result<f64, NumericError>
where
    G: Fn(f64) -> f64,
{
    check_df(df)?;
    let tail = 1e-15;
    let w_lo = (chi2_quantile(tail, df)? / df).sqrt();
    let w_hi = (chi2_quantile(1.0 - tail, df)? / df).sqrt();
    let density = |w: f64| 2.0 * df * w * chi2_pdf(df * w * w, df);
    integrate(|w| g(w) * density(w), w_lo, w_hi, tol)
}
