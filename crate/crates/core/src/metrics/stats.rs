//! Welch's unequal-variance t-test and the special functions behind its
//! p-value.

use serde::{Deserialize, Serialize};

use crate::error::{NrrError, Result};

/// Lanczos approximation (g = 7, 9 terms), accurate to ~1e-15 for x > 0.
pub fn ln_gamma(x: f64) -> f64 {
    const G: f64 = 7.0;
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
        let pi = std::f64::consts::PI;
        return (pi / (pi * x).sin()).ln() - ln_gamma(1.0 - x);
    }
    let x = x - 1.0;
    let mut acc = COEF[0];
    for (i, &c) in COEF.iter().enumerate().skip(1) {
        acc += c / (x + i as f64);
    }
    let t = x + G + 0.5;
    0.5 * (2.0 * std::f64::consts::PI).ln() + (x + 0.5) * t.ln() - t + acc.ln()
}

/// Continued fraction for the incomplete beta function (modified Lentz).
fn beta_continued_fraction(a: f64, b: f64, x: f64) -> f64 {
    const TINY: f64 = 1e-300;
    const MAX_ITER: usize = 10_000;
    const TOL: f64 = 1e-16;

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
        if (delta - 1.0).abs() < TOL {
            break;
        }
    }
    h
}

/// Regularized incomplete beta `I_x(a, b)` for `a, b > 0`, `x ∈ [0, 1]`.
pub fn regularized_incomplete_beta(a: f64, b: f64, x: f64) -> f64 {
    assert!(a > 0.0 && b > 0.0, "shape parameters must be positive");
    assert!((0.0..=1.0).contains(&x), "x = {x} outside [0, 1]");
    if x == 0.0 {
        return 0.0;
    }
    if x == 1.0 {
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

/// Two-sided tail probability `P(|T| ≥ |t|)` of Student's t with `df` degrees.
pub fn student_t_two_sided_p(t: f64, df: f64) -> f64 {
    assert!(df > 0.0, "degrees of freedom must be positive");
    if !t.is_finite() {
        return 0.0;
    }
    let x = df / (df + t * t);
    regularized_incomplete_beta(0.5 * df, 0.5, x).clamp(0.0, 1.0)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct WelchResult {
    pub t: f64,
    pub df: f64,
    pub p: f64,
}

pub fn mean(xs: &[f64]) -> f64 {
    xs.iter().sum::<f64>() / xs.len() as f64
}

/// Sample variance with the `n − 1` divisor.
pub fn sample_variance(xs: &[f64]) -> f64 {
    let m = mean(xs);
    xs.iter().map(|x| (x - m) * (x - m)).sum::<f64>() / (xs.len() as f64 - 1.0)
}

pub fn sample_std(xs: &[f64]) -> f64 {
    sample_variance(xs).sqrt()
}

/// Welch's t-test from summary statistics (sample std, `n − 1` divisor).
pub fn welch_t_from_summary(
    (mean_a, std_a, n_a): (f64, f64, usize),
    (mean_b, std_b, n_b): (f64, f64, usize),
) -> Result<WelchResult> {
    if n_a < 2 || n_b < 2 {
        return Err(NrrError::Validation(format!(
            "Welch t needs at least 2 observations per sample, got {n_a} and {n_b}"
        )));
    }
    let se_a = std_a * std_a / n_a as f64;
    let se_b = std_b * std_b / n_b as f64;
    let se = se_a + se_b;
    if se == 0.0 {
        return Err(NrrError::Degenerate("both samples have zero variance".into()));
    }
    let t = (mean_a - mean_b) / se.sqrt();
    let df = se * se / (se_a * se_a / (n_a as f64 - 1.0) + se_b * se_b / (n_b as f64 - 1.0));
    let p = student_t_two_sided_p(t, df);
    Ok(WelchResult { t, df, p })
}

/// Welch's unequal-variance t-test with Welch–Satterthwaite degrees of
/// freedom and a two-sided p-value.
pub fn welch_t(a: &[f64], b: &[f64]) -> Result<WelchResult> {
    if a.len() < 2 || b.len() < 2 {
        return Err(NrrError::Validation(format!(
            "Welch t needs at least 2 observations per sample, got {} and {}",
            a.len(),
            b.len()
        )));
    }
    welch_t_from_summary((mean(a), sample_std(a), a.len()), (mean(b), sample_std(b), b.len()))
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    /// Adaptive Simpson quadrature.
    fn integrate<F: Fn(f64) -> f64>(f: &F, a: f64, b: f64, tol: f64) -> f64 {
        fn simpson<F: Fn(f64) -> f64>(f: &F, a: f64, fa: f64, b: f64, fb: f64) -> (f64, f64, f64) {
            let m = 0.5 * (a + b);
            let fm = f(m);
            (m, fm, (b - a) / 6.0 * (fa + 4.0 * fm + fb))
        }
        #[allow(clippy::too_many_arguments)]
        fn recurse<F: Fn(f64) -> f64>(
            f: &F,
            a: f64,
            fa: f64,
            b: f64,
            fb: f64,
            m: f64,
            fm: f64,
            whole: f64,
            tol: f64,
            depth: u32,
        ) -> f64 {
            let (lm, flm, left) = simpson(f, a, fa, m, fm);
            let (rm, frm, right) = simpson(f, m, fm, b, fb);
            let delta = left + right - whole;
            if depth == 0 || delta.abs() <= 15.0 * tol {
                return left + right + delta / 15.0;
            }
            recurse(f, a, fa, m, fm, lm, flm, left, tol / 2.0, depth - 1)
                + recurse(f, m, fm, b, fb, rm, frm, right, tol / 2.0, depth - 1)
        }
        let (fa, fb) = (f(a), f(b));
        let (m, fm, whole) = simpson(f, a, fa, b, fb);
        recurse(f, a, fa, b, fb, m, fm, whole, tol, 60)
    }

    /// P(|T| > t) by substituting x = √ν·tanθ, which turns the t density
    /// into cos^(ν−1)θ on [0, π/2]; no gamma or beta functions involved.
    fn two_sided_p_oracle(t: f64, df: f64) -> f64 {
        let f = |theta: f64| theta.cos().max(0.0).powf(df - 1.0);
        let half_pi = std::f64::consts::FRAC_PI_2;
        let theta_t = (t.abs() / df.sqrt()).atan();
        let total = integrate(&f, 0.0, half_pi, 1e-14);
        let tail = integrate(&f, theta_t, half_pi, 1e-14);
        tail / total
    }

    #[test]
    fn ln_gamma_known_values() {
        assert!(ln_gamma(1.0).abs() < 1e-14);
        assert!(ln_gamma(2.0).abs() < 1e-14);
        assert!((ln_gamma(5.0) - 24f64.ln()).abs() < 1e-13);
        assert!((ln_gamma(0.5) - std::f64::consts::PI.sqrt().ln()).abs() < 1e-14);
    }

    #[test]
    fn incomplete_beta_closed_forms() {
        // I_x(1, 1) = x ; I_x(a, 1) = x^a ; I_x(1, b) = 1 − (1−x)^b
        for &x in &[0.0, 0.1, 0.37, 0.5, 0.9, 1.0] {
            assert!((regularized_incomplete_beta(1.0, 1.0, x) - x).abs() < 1e-14);
            assert!((regularized_incomplete_beta(3.0, 1.0, x) - x.powi(3)).abs() < 1e-14);
            assert!((regularized_incomplete_beta(1.0, 2.5, x) - (1.0 - (1.0 - x).powf(2.5))).abs() < 1e-14);
        }
    }

    #[test]
    fn t_distribution_table_values() {
        // two-sided critical values: df=1 → 12.706 at 0.05, df=10 → 2.228 at 0.05
        assert!((student_t_two_sided_p(12.706_204_736, 1.0) - 0.05).abs() < 1e-9);
        assert!((student_t_two_sided_p(2.228_138_852, 10.0) - 0.05).abs() < 1e-9);
        // df = 1 is Cauchy: P(|T| > t) = 1 − 2·atan(t)/π
        for &t in &[0.1, 1.0, 3.0, 40.0] {
            let exact = 1.0 - 2.0 * f64::atan(t) / std::f64::consts::PI;
            assert!((student_t_two_sided_p(t, 1.0) - exact).abs() < 1e-13);
        }
    }

    #[test]
    fn p_value_matches_quadrature_oracle() {
        let cases = [
            (0.0, 4.0),
            (0.3, 1.0),
            (1.0, 2.0),
            (2.0, 3.3),
            (12.747, 4.72),
            (5.0, 8.0),
            (1.7, 17.5),
            (3.1, 60.0),
            (0.8, 1.4),
        ];
        for (t, df) in cases {
            let got = student_t_two_sided_p(t, df);
            let oracle = two_sided_p_oracle(t, df);
            assert!((got - oracle).abs() < 1e-8, "t={t} df={df}: {got} vs {oracle}");
        }
    }

    #[test]
    fn identical_samples() {
        let a = [0.2, 0.4, 0.6];
        let r = welch_t(&a, &a).unwrap();
        assert_eq!(r.t, 0.0);
        assert_eq!(r.p, 1.0);
    }

    #[test]
    fn separated_samples() {
        let b = [0.100, 0.101, 0.099, 0.1005, 0.0995];
        let a: Vec<f64> = b.iter().map(|x| x + 10.0).collect();
        let r = welch_t(&a, &b).unwrap();
        assert!(r.p < 0.001 && r.t > 0.0);
    }

    #[test]
    fn summary_stats_from_reported_table() {
        // 0.629 ± 0.025 vs 0.102 ± 0.089 with five seeds each:
        // t = 0.527 / sqrt(0.025²/5 + 0.089²/5) = 12.7468...
        let r = welch_t_from_summary((0.629, 0.025, 5), (0.102, 0.089, 5)).unwrap();
        let se = (0.025f64.powi(2) / 5.0 + 0.089f64.powi(2) / 5.0).sqrt();
        assert!((r.t - 0.527 / se).abs() < 1e-12);
        assert!((r.t - 12.747).abs() < 1e-3, "{}", r.t);
        assert!(r.p < 0.001);
    }

    #[test]
    fn degenerate_and_short_samples() {
        assert!(matches!(
            welch_t(&[1.0, 1.0], &[2.0, 2.0]),
            Err(NrrError::Degenerate(_))
        ));
        assert!(welch_t(&[1.0], &[2.0, 3.0]).is_err());
    }

    #[test]
    fn sample_std_uses_n_minus_one() {
        assert!((sample_std(&[1.0, 2.0, 3.0, 4.0]) - (5.0f64 / 3.0).sqrt()).abs() < 1e-15);
        assert_eq!(sample_std(&[0.5; 5]), 0.0);
    }

    proptest! {
        #[test]
        fn swap_flips_t_and_keeps_p(
            a in proptest::collection::vec(-5.0f64..5.0, 2..8),
            b in proptest::collection::vec(-5.0f64..5.0, 2..8),
        ) {
            if let (Ok(ab), Ok(ba)) = (welch_t(&a, &b), welch_t(&b, &a)) {
                prop_assert_eq!(ab.t, -ba.t);
                prop_assert_eq!(ab.df, ba.df);
                prop_assert_eq!(ab.p, ba.p);
                prop_assert!(ab.p >= 0.0 && ab.p <= 1.0);
            }
        }
    }
}
