//! Statistical utilities: Welch's two-sample t-test and Pearson
//! correlation, with p-values computed from scratch.

use crate::error::{Error, Result};

/// Result of a two-sample t-test.
#[derive(Debug, Clone, Copy)]
pub struct TTest {
    pub t: f64,
    pub p: f64,
    pub df: f64,
}

fn mean(xs: &[f64]) -> f64 {
    xs.iter().sum::<f64>() / xs.len() as f64
}

fn sample_variance(xs: &[f64], m: f64) -> f64 {
    xs.iter().map(|x| (x - m) * (x - m)).sum::<f64>() / (xs.len() - 1) as f64
}

/// Unequal-variance (Welch) two-sample t-test with a two-sided p-value.
///
/// Degenerate variance in both groups yields `t = 0, p = 1` when the means
/// agree and `p = 0` otherwise.
pub fn two_sample_t_test(a: &[f64], b: &[f64]) -> Result<TTest> {
    if a.len() < 2 || b.len() < 2 {
        return Err(Error::contract(format!(
            "t-test needs at least two values per group, got {} and {}",
            a.len(),
            b.len()
        )));
    }
    if a.iter().chain(b).any(|v| !v.is_finite()) {
        return Err(Error::contract("t-test inputs must be finite"));
    }
    let (ma, mb) = (mean(a), mean(b));
    let (va, vb) = (sample_variance(a, ma), sample_variance(b, mb));
    let (na, nb) = (a.len() as f64, b.len() as f64);

    let se2 = va / na + vb / nb;
    if se2 == 0.0 {
        return Ok(if ma == mb {
            TTest {
                t: 0.0,
                p: 1.0,
                df: na + nb - 2.0,
            }
        } else {
            TTest {
                t: if ma > mb {
                    f64::INFINITY
                } else {
                    f64::NEG_INFINITY
                },
                p: 0.0,
                df: na + nb - 2.0,
            }
        });
    }

    let t = (ma - mb) / se2.sqrt();
    let df = se2 * se2
        / ((va / na) * (va / na) / (na - 1.0) + (vb / nb) * (vb / nb) / (nb - 1.0));
    let p = student_t_two_sided_p(t, df);
    Ok(TTest { t, p, df })
}

/// `P(|T_df| >= |t|)` via the regularized incomplete beta function:
/// the tail identity `I_{df/(df+t^2)}(df/2, 1/2)`.
pub fn student_t_two_sided_p(t: f64, df: f64) -> f64 {
    if t == 0.0 {
        return 1.0;
    }
    if t.is_infinite() {
        return 0.0;
    }
    let x = df / (df + t * t);
    regularized_incomplete_beta(df / 2.0, 0.5, x).clamp(0.0, 1.0)
}

/// Sample Pearson correlation; `None` when either variance vanishes.
pub fn pearson(x: &[f64], y: &[f64]) -> Result<Option<f64>> {
    if x.len() != y.len() {
        return Err(Error::contract(format!(
            "pearson: {} xs vs {} ys",
            x.len(),
            y.len()
        )));
    }
    if x.len() < 2 {
        return Err(Error::contract("pearson needs at least two points"));
    }
    let (mx, my) = (mean(x), mean(y));
    let mut sxy = 0.0;
    let mut sxx = 0.0;
    let mut syy = 0.0;
    for (xi, yi) in x.iter().zip(y) {
        let dx = xi - mx;
        let dy = yi - my;
        sxy += dx * dy;
        sxx += dx * dx;
        syy += dy * dy;
    }
    if sxx == 0.0 || syy == 0.0 {
        return Ok(None);
    }
    Ok(Some((sxy / (sxx * syy).sqrt()).clamp(-1.0, 1.0)))
}

/// Lanczos approximation of `ln Gamma(x)` (g = 7, 9 coefficients).
fn ln_gamma(x: f64) -> f64 {
    const COEFFS: [f64; 9] = [
        0.999_999_999_999_809_93,
        676.520_368_121_885_1,
        -1_259.139_216_722_402_8,
        771.323_428_777_653_13,
        -176.615_029_162_140_6,
        12.507_343_278_686_905,
        -0.138_571_095_265_720_12,
        9.984_369_578_019_571_6e-6,
        1.505_632_735_149_311_6e-7,
    ];
    if x < 0.5 {
        // reflection
        let pi = std::f64::consts::PI;
        return (pi / (pi * x).sin()).ln() - ln_gamma(1.0 - x);
    }
    let x = x - 1.0;
    let mut acc = COEFFS[0];
    for (i, &c) in COEFFS.iter().enumerate().skip(1) {
        acc += c / (x + i as f64);
    }
    let t = x + 7.5;
    0.5 * (std::f64::consts::TAU).ln() + (x + 0.5) * t.ln() - t + acc.ln()
}

/// Regularized incomplete beta `I_x(a, b)` by the standard continued
/// fraction (modified Lentz evaluation), with the symmetry
/// `I_x(a,b) = 1 - I_{1-x}(b,a)` applied for fast convergence.
pub fn regularized_incomplete_beta(a: f64, b: f64, x: f64) -> f64 {
    if x <= 0.0 {
        return 0.0;
    }
    if x >= 1.0 {
        return 1.0;
    }
    let ln_front = a * x.ln() + b * (1.0 - x).ln() - ln_beta(a, b);
    if x < (a + 1.0) / (a + b + 2.0) {
        ln_front.exp() * beta_cf(a, b, x) / a
    } else {
        1.0 - (b * (1.0 - x).ln() + a * x.ln() - ln_beta(b, a)).exp() * beta_cf(b, a, 1.0 - x) / b
    }
}

fn ln_beta(a: f64, b: f64) -> f64 {
    ln_gamma(a) + ln_gamma(b) - ln_gamma(a + b)
}

fn beta_cf(a: f64, b: f64, x: f64) -> f64 {
    const MAX_ITER: usize = 300;
    const EPS: f64 = 3e-16;
    const TINY: f64 = 1e-300;

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
        // even step
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
        // odd step
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
        let del = d * c;
        h *= del;
        if (del - 1.0).abs() < EPS {
            break;
        }
    }
    h
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn ln_gamma_anchors() {
        assert!((ln_gamma(0.5) - std::f64::consts::PI.sqrt().ln()).abs() < 1e-12);
        assert!((ln_gamma(1.0)).abs() < 1e-12);
        assert!((ln_gamma(5.0) - 24.0_f64.ln()).abs() < 1e-12);
    }

    #[test]
    fn identical_groups_give_t_zero_p_one() {
        let r = two_sample_t_test(&[1.0, 2.0, 3.0], &[1.0, 2.0, 3.0]).unwrap();
        assert_eq!(r.t, 0.0);
        assert_eq!(r.p, 1.0);
    }

    #[test]
    fn hand_computed_t_statistic() {
        // means 2 vs 5, both variances 1, SE = sqrt(2/3)
        let r = two_sample_t_test(&[1.0, 2.0, 3.0], &[4.0, 5.0, 6.0]).unwrap();
        assert!((r.t - (-3.674)).abs() < 1e-3, "t = {}", r.t);
        assert!((r.df - 4.0).abs() < 1e-9);
        assert!(r.p < 0.05);
    }

    #[test]
    fn swapping_groups_negates_t_keeps_p() {
        let a = [0.2, 0.5, 0.9, 0.4];
        let b = [1.2, 1.4, 0.8];
        let r1 = two_sample_t_test(&a, &b).unwrap();
        let r2 = two_sample_t_test(&b, &a).unwrap();
        assert!((r1.t + r2.t).abs() < 1e-12);
        assert!((r1.p - r2.p).abs() < 1e-12);
    }

    #[test]
    fn degenerate_variances() {
        let r = two_sample_t_test(&[2.0, 2.0], &[2.0, 2.0]).unwrap();
        assert_eq!((r.t, r.p), (0.0, 1.0));
        let r = two_sample_t_test(&[3.0, 3.0], &[2.0, 2.0]).unwrap();
        assert_eq!(r.p, 0.0);
        assert!(r.t.is_infinite());
    }

    #[test]
    fn p_values_match_t_tables() {
        // two-sided critical values: t(0.975, 4) = 2.776, t(0.95, 4) = 2.132
        assert!((student_t_two_sided_p(2.776, 4.0) - 0.05).abs() < 5e-4);
        assert!((student_t_two_sided_p(2.132, 4.0) - 0.10).abs() < 5e-4);
        // Cauchy: P(|T_1| > 1) = 0.5 exactly
        assert!((student_t_two_sided_p(1.0, 1.0) - 0.5).abs() < 1e-9);
        // large df approaches the normal distribution
        assert!((student_t_two_sided_p(1.959_964, 1e6) - 0.05).abs() < 1e-4);
        assert_eq!(student_t_two_sided_p(0.0, 7.0), 1.0);
    }

    #[test]
    fn pearson_perfect_lines() {
        let x = [1.0, 2.0, 3.0, 4.0];
        let y2: Vec<f64> = x.iter().map(|v| 2.0 * v + 1.0).collect();
        assert_eq!(pearson(&x, &y2).unwrap(), Some(1.0));
        let yn: Vec<f64> = x.iter().map(|v| -v).collect();
        assert_eq!(pearson(&x, &yn).unwrap(), Some(-1.0));
    }

    #[test]
    fn pearson_hand_value() {
        let r = pearson(&[1.0, 2.0, 3.0], &[2.0, 4.0, 7.0])
            .unwrap()
            .unwrap();
        assert!((r - 0.9934).abs() < 1e-4, "r = {r}");
    }

    #[test]
    fn pearson_degenerate_is_absent() {
        assert_eq!(pearson(&[1.0, 1.0, 1.0], &[2.0, 3.0, 4.0]).unwrap(), None);
    }
}
