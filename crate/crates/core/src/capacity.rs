//! The entropy maximization behind the outer bound, the capacity region and
//! rate accounting.
//!
//! For independent inputs with `P[X1 = 1] = p1`, `P[X2 = 1] = p2`, the
//! residual uncertainty the adder channel leaves about its inputs is
//!
//! ```text
//! f(p1, p2) = -a log2(a / q) - b log2(b / q),  a = (1-p1) p2,  b = p1 (1-p2),  q = a + b
//! ```
//!
//! and its maximum, 1/2 at `p1 = p2 = 1/2`, bounds every achievable rate
//! pair by `(L1 - 1) R1 + (L2 - 1) R2 <= 1/2`.

use std::f64::consts::LN_2;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::multifile::MultifileTranscript;

/// Slack allowed by [`region_check`].
pub const REGION_TOLERANCE: f64 = 1e-12;

fn xlog2(x: f64, q: f64) -> f64 {
    if x <= 0.0 {
        0.0
    } else {
        x * (x / q).log2()
    }
}

/// `H(X1 X2 | Y)` for independent Bernoulli inputs, extended continuously
/// to the boundary of the square.
pub fn conditional_entropy_f(p1: f64, p2: f64) -> f64 {
    let a = (1.0 - p1) * p2;
    let b = p1 * (1.0 - p2);
    let q = a + b;
    if q <= 0.0 {
        return 0.0;
    }
    -xlog2(a, q) - xlog2(b, q)
}

/// `H(X1 X2 | Y)` computed directly from the four-point joint law and the
/// channel map, without the closed form.
pub fn brute_conditional_entropy(p1: f64, p2: f64) -> f64 {
    let px = |p: f64, x: u8| if x == 1 { p } else { 1.0 - p };
    let mut joint = [[0.0f64; 2]; 2];
    let mut py = [0.0f64; 3];
    for x1 in 0..2u8 {
        for x2 in 0..2u8 {
            let p = px(p1, x1) * px(p2, x2);
            joint[x1 as usize][x2 as usize] = p;
            py[(x1 + x2) as usize] += p;
        }
    }
    let mut h = 0.0;
    for x1 in 0..2usize {
        for x2 in 0..2usize {
            let p = joint[x1][x2];
            if p > 0.0 {
                h -= p * (p / py[x1 + x2]).log2();
            }
        }
    }
    h
}

/// `f` restricted to the line `p1 + p2 = 1`.
pub fn g(p: f64) -> f64 {
    conditional_entropy_f(p, 1.0 - p)
}

/// Closed-form derivative of `g` on `(0, 1/2]`.
pub fn g_prime(x: f64) -> f64 {
    let a = (1.0 - x) * (1.0 - x);
    let b = x * x;
    let q = a + b;
    2.0 * (1.0 - x) * (a / q).log2() - 2.0 * x * (b / q).log2()
}

/// `k(y) = log2(1 + y^2) - y log2(1 + y^-2)`; the sign of `g'(x)` equals the
/// sign of `k(1/x - 1)`.
pub fn k(y: f64) -> f64 {
    (1.0 + y * y).log2() - y * (1.0 + 1.0 / (y * y)).log2()
}

pub fn k_prime(y: f64) -> f64 {
    2.0 / LN_2 * (1.0 + y) / (1.0 + y * y) - (1.0 + 1.0 / (y * y)).log2()
}

pub fn k_second(y: f64) -> f64 {
    2.0 * (1.0 - y) * (1.0 + y).powi(2) / (y * (1.0 + y * y).powi(2) * LN_2)
}

/// Closed form of `df/dp1 + df/dp2` on the open square.
pub fn derivative_sum_closed_form(p1: f64, p2: f64) -> f64 {
    let q = p1 * (1.0 - p2) + (1.0 - p1) * p2;
    (p1 + p2 - 1.0) * (p1 * (1.0 - p1) * p2 * (1.0 - p2) / (q * q)).log2()
}

/// Central finite-difference estimate of `df/dp1 + df/dp2`.
pub fn derivative_sum_numeric(p1: f64, p2: f64, h: f64) -> f64 {
    let f = conditional_entropy_f;
    (f(p1 + h, p2) - f(p1 - h, p2)) / (2.0 * h) + (f(p1, p2 + h) - f(p1, p2 - h)) / (2.0 * h)
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct InputDistribution {
    pub p1: f64,
    pub p2: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MaximizeReport {
    pub grid_step: f64,
    pub grid_argmax: InputDistribution,
    pub grid_value: f64,
    pub argmax: InputDistribution,
    pub value: f64,
    /// The line search did not lose to any grid point.
    pub grid_consistent: bool,
}

/// Golden-section search for the maximum of a unimodal `h` on `[lo, hi]`.
pub fn golden_section_max(h: impl Fn(f64) -> f64, mut lo: f64, mut hi: f64, tol: f64) -> f64 {
    let inv_phi = (5f64.sqrt() - 1.0) / 2.0;
    let mut c = hi - inv_phi * (hi - lo);
    let mut d = lo + inv_phi * (hi - lo);
    let (mut hc, mut hd) = (h(c), h(d));
    while hi - lo > tol {
        if hc >= hd {
            hi = d;
            d = c;
            hd = hc;
            c = hi - inv_phi * (hi - lo);
            hc = h(c);
        } else {
            lo = c;
            c = d;
            hc = hd;
            d = lo + inv_phi * (hi - lo);
            hd = h(d);
        }
    }
    (lo + hi) / 2.0
}

/// Maximizes `f` over the unit square: a full grid first, then a
/// golden-section search along `p1 + p2 = 1`.
pub fn maximize_f() -> MaximizeReport {
    maximize_f_with(1e-3, 1e-10)
}

pub fn maximize_f_with(grid_step: f64, line_tol: f64) -> MaximizeReport {
    let steps = (1.0 / grid_step).round() as usize;
    let rows: Vec<(f64, usize, usize)> = (0..=steps)
        .into_par_iter()
        .map(|i| {
            let p1 = i as f64 / steps as f64;
            (0..=steps).fold((f64::NEG_INFINITY, i, 0), |best, j| {
                let v = conditional_entropy_f(p1, j as f64 / steps as f64);
                if v > best.0 {
                    (v, i, j)
                } else {
                    best
                }
            })
        })
        .collect();
    let (grid_value, gi, gj) = rows
        .into_iter()
        .fold((f64::NEG_INFINITY, 0, 0), |best, r| if r.0 > best.0 { r } else { best });
    let x = golden_section_max(g, 0.0, 1.0, line_tol);
    let value = g(x);
    MaximizeReport {
        grid_step,
        grid_argmax: InputDistribution {
            p1: gi as f64 / steps as f64,
            p2: gj as f64 / steps as f64,
        },
        grid_value,
        argmax: InputDistribution { p1: x, p2: 1.0 - x },
        value,
        grid_consistent: grid_value <= value + 1e-12,
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MonotoneReport {
    pub samples: usize,
    /// Largest `g(p) - g(p')` over sampled `p < p'`; at most 1e-12 when monotone.
    pub worst_violation: f64,
    pub monotone: bool,
    pub k_at_1: f64,
    pub k_prime_at_1: f64,
    /// `(2 - ln 2) / ln 2`.
    pub k_prime_at_1_expected: f64,
    /// `k'` never increases on a grid over `[1, 100]`.
    pub k_prime_nonincreasing: bool,
    pub passed: bool,
}

/// Checks that `g` is non-decreasing on `samples` evenly spaced points of
/// `(0, 1/2]`, plus the sign facts about `k` used to prove it.
pub fn verify_g_monotone(samples: usize) -> Result<MonotoneReport> {
    if samples < 2 {
        return Err(Error::config("need at least 2 samples"));
    }
    let mut running_max = f64::NEG_INFINITY;
    let mut worst = f64::NEG_INFINITY;
    for i in 1..=samples {
        let v = g(0.5 * i as f64 / samples as f64);
        worst = worst.max(running_max - v);
        running_max = running_max.max(v);
    }
    let grid: Vec<f64> = (0..=9900).map(|i| 1.0 + i as f64 / 100.0).collect();
    let k_prime_nonincreasing = grid.windows(2).all(|w| k_prime(w[1]) <= k_prime(w[0]) + 1e-12);
    let k_at_1 = k(1.0);
    let k_prime_at_1 = k_prime(1.0);
    let k_prime_at_1_expected = (2.0 - LN_2) / LN_2;
    let monotone = worst <= 1e-12;
    Ok(MonotoneReport {
        samples,
        worst_violation: worst,
        monotone,
        k_at_1,
        k_prime_at_1,
        k_prime_at_1_expected,
        k_prime_nonincreasing,
        passed: monotone
            && k_at_1.abs() <= 1e-12
            && (k_prime_at_1 - k_prime_at_1_expected).abs() <= 1e-12
            && k_prime_at_1 > 0.0
            && k_prime_nonincreasing,
    })
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DerivativeReport {
    pub h: f64,
    pub points: usize,
    pub worst_residual: f64,
    pub worst_at: InputDistribution,
    pub tolerance: f64,
    pub passed: bool,
}

/// Compares the closed-form derivative sum with central differences on the
/// interior grid `{step, 2 step, ..., 1 - step}^2`.
pub fn finite_difference_check(step: f64, h: f64, tolerance: f64) -> DerivativeReport {
    let m = (1.0 / step).round() as usize;
    let mut worst = 0.0f64;
    let mut worst_at = InputDistribution { p1: 0.0, p2: 0.0 };
    let mut points = 0;
    for i in 1..m {
        for j in 1..m {
            let (p1, p2) = (i as f64 / m as f64, j as f64 / m as f64);
            let r = (derivative_sum_numeric(p1, p2, h) - derivative_sum_closed_form(p1, p2)).abs();
            points += 1;
            if r > worst {
                worst = r;
                worst_at = InputDistribution { p1, p2 };
            }
        }
    }
    DerivativeReport {
        h,
        points,
        worst_residual: worst,
        worst_at,
        tolerance,
        passed: worst <= tolerance,
    }
}

/// File bits per channel use recovered from each server.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct RatePair {
    pub r1: f64,
    pub r2: f64,
}

impl RatePair {
    pub fn new(r1: f64, r2: f64) -> Result<Self> {
        if !(r1.is_finite() && r2.is_finite() && r1 >= 0.0 && r2 >= 0.0) {
            return Err(Error::config(format!(
                "rates must be finite and nonnegative, got ({r1}, {r2})"
            )));
        }
        Ok(RatePair { r1, r2 })
    }

    /// `1/2 - ((L1-1) R1 + (L2-1) R2)`.
    pub fn region_margin(&self, l1: usize, l2: usize) -> f64 {
        0.5 - ((l1 - 1) as f64 * self.r1 + (l2 - 1) as f64 * self.r2)
    }
}

/// `(L1 - 1) R1 + (L2 - 1) R2 <= 1/2`, up to [`REGION_TOLERANCE`].
pub fn region_check(r: RatePair, l1: usize, l2: usize) -> bool {
    r.region_margin(l1, l2) >= -REGION_TOLERANCE
}

/// Rates of a completed multifile session over `n` uses per round.
pub fn achieved_rates(transcript: &MultifileTranscript, n: usize) -> Result<RatePair> {
    let (f1, f2) = transcript.recovered.as_ref().ok_or(Error::Aborted)?;
    let uses = (n * transcript.header.rounds) as f64;
    RatePair::new(f1.len() as f64 / uses, f2.len() as f64 / uses)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RegionRow {
    pub l1: usize,
    pub l2: usize,
    /// Corner on the `R1` axis.
    pub r1_max: f64,
    /// Corner on the `R2` axis.
    pub r2_max: f64,
    /// Point reached with an even split of decodable positions.
    pub balanced: RatePair,
    pub corners_inside: bool,
    /// Points just beyond each corner are rejected.
    pub outside_rejected: bool,
}

/// Boundary points of the region for every `(L1, L2)` in `{2..=max_l}^2`.
pub fn region_table(max_l: usize) -> Vec<RegionRow> {
    let mut rows = Vec::new();
    for l1 in 2..=max_l {
        for l2 in 2..=max_l {
            let r1_max = 0.5 / (l1 - 1) as f64;
            let r2_max = 0.5 / (l2 - 1) as f64;
            let balanced = RatePair {
                r1: r1_max / 2.0,
                r2: r2_max / 2.0,
            };
            let corners = [
                RatePair { r1: r1_max, r2: 0.0 },
                RatePair { r1: 0.0, r2: r2_max },
                balanced,
            ];
            let beyond = [
                RatePair {
                    r1: r1_max + 1e-9,
                    r2: 0.0,
                },
                RatePair {
                    r1: 0.0,
                    r2: r2_max + 1e-9,
                },
            ];
            rows.push(RegionRow {
                l1,
                l2,
                r1_max,
                r2_max,
                balanced,
                corners_inside: corners.iter().all(|&r| region_check(r, l1, l2)),
                outside_rejected: beyond.iter().all(|&r| !region_check(r, l1, l2)),
            });
        }
    }
    rows
}

/// Everything the capacity command verifies.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CapacityReport {
    pub maximize: MaximizeReport,
    pub monotone: MonotoneReport,
    pub derivative: DerivativeReport,
    pub region: Vec<RegionRow>,
    pub passed: bool,
}

pub fn capacity_report() -> Result<CapacityReport> {
    capacity_report_with(10_000, 1e-3)
}

/// [`capacity_report`] with a custom monotonicity sample count and search
/// grid step.
pub fn capacity_report_with(samples: usize, grid_step: f64) -> Result<CapacityReport> {
    if !(grid_step > 0.0 && grid_step <= 0.5) {
        return Err(Error::config(format!(
            "grid step must lie in (0, 0.5], got {grid_step}"
        )));
    }
    let maximize = maximize_f_with(grid_step, 1e-10);
    let monotone = verify_g_monotone(samples)?;
    let derivative = finite_difference_check(0.01, 1e-6, 1e-5);
    let region = region_table(5);
    let passed = (maximize.value - 0.5).abs() <= 1e-9
        && (maximize.argmax.p1 - 0.5).abs() <= 1e-6
        && (maximize.argmax.p2 - 0.5).abs() <= 1e-6
        && maximize.grid_consistent
        && monotone.passed
        && derivative.passed
        && region.iter().all(|r| r.corners_inside && r.outside_rejected);
    Ok(CapacityReport {
        maximize,
        monotone,
        derivative,
        region,
        passed,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn f_examples() {
        assert!((conditional_entropy_f(0.5, 0.5) - 0.5).abs() < 1e-15);
        assert_eq!(conditional_entropy_f(0.0, 0.0), 0.0);
        assert_eq!(conditional_entropy_f(1.0, 1.0), 0.0);
        assert_eq!(conditional_entropy_f(0.3, 0.0), 0.0);
    }

    #[test]
    fn brute_examples() {
        assert_eq!(brute_conditional_entropy(0.7, 0.0), 0.0);
        assert_eq!(brute_conditional_entropy(1.0, 0.5), 0.0);
        assert!((brute_conditional_entropy(0.5, 0.5) - 0.5).abs() < 1e-15);
    }

    #[test]
    fn closed_form_matches_brute_force_on_grid() {
        for i in 0..=100 {
            for j in 0..=100 {
                let (p1, p2) = (i as f64 / 100.0, j as f64 / 100.0);
                let d = (conditional_entropy_f(p1, p2) - brute_conditional_entropy(p1, p2)).abs();
                assert!(d <= 1e-12, "({p1}, {p2}): {d}");
            }
        }
    }

    #[test]
    fn symmetries() {
        for i in 0..=40 {
            for j in 0..=40 {
                let (p1, p2) = (i as f64 / 40.0, j as f64 / 40.0);
                let v = conditional_entropy_f(p1, p2);
                assert!((v - conditional_entropy_f(p2, p1)).abs() < 1e-12);
                assert!((v - conditional_entropy_f(1.0 - p1, 1.0 - p2)).abs() < 1e-12);
            }
            let p = i as f64 / 40.0;
            assert!((g(p) - g(1.0 - p)).abs() < 1e-12);
        }
    }

    #[test]
    fn maximum_is_one_half_at_center() {
        let r = maximize_f();
        assert!((r.value - 0.5).abs() <= 1e-9, "{r:?}");
        assert!((r.argmax.p1 - 0.5).abs() <= 1e-6 && (r.argmax.p2 - 0.5).abs() <= 1e-6);
        assert!(r.grid_consistent);
        assert_eq!(r.grid_argmax, InputDistribution { p1: 0.5, p2: 0.5 });
        // The line alone reaches the same value.
        let x = golden_section_max(g, 0.0, 0.5, 1e-10);
        assert!((g(x) - r.value).abs() < 1e-12);
    }

    #[test]
    fn golden_section_on_a_parabola() {
        let x = golden_section_max(|x| -(x - 0.3) * (x - 0.3), 0.0, 1.0, 1e-10);
        assert!((x - 0.3).abs() < 1e-6);
    }

    #[test]
    fn g_is_monotone_and_k_facts_hold() {
        let r = verify_g_monotone(10_000).unwrap();
        assert!(r.passed, "{r:?}");
        assert!((g(0.5) - 0.5).abs() < 1e-15);
        assert!(verify_g_monotone(1).is_err());
    }

    #[test]
    fn k_second_is_nonpositive_and_matches_differences() {
        for i in 0..=990 {
            let y = 1.0 + i as f64 / 10.0;
            assert!(k_second(y) <= 0.0);
            let h = 1e-5;
            let num = (k_prime(y + h) - k_prime(y - h)) / (2.0 * h);
            assert!((num - k_second(y)).abs() < 1e-6, "y = {y}");
            let num = (k(y + h) - k(y - h)) / (2.0 * h);
            assert!((num - k_prime(y)).abs() < 1e-6, "y = {y}");
        }
    }

    #[test]
    fn g_prime_matches_differences_and_k_sign() {
        for i in 1..500 {
            let x = i as f64 / 1000.0;
            let h = 1e-7;
            let num = (g(x + h) - g(x - h)) / (2.0 * h);
            assert!((num - g_prime(x)).abs() < 1e-5, "x = {x}");
            assert_eq!(g_prime(x) >= 0.0, k(1.0 / x - 1.0) >= -1e-15, "x = {x}");
        }
    }

    #[test]
    fn derivative_sum_closed_form_holds() {
        let r = finite_difference_check(0.01, 1e-6, 1e-5);
        assert_eq!(r.points, 99 * 99);
        assert!(r.passed, "{r:?}");
    }

    #[test]
    fn region_examples() {
        assert!(region_check(RatePair { r1: 0.25, r2: 0.25 }, 2, 2));
        assert!(region_check(RatePair { r1: 0.0, r2: 0.0 }, 4, 5));
        for l in 2..=6 {
            let r = 1.0 / (4.0 * (l - 1) as f64);
            assert!(region_check(RatePair { r1: r, r2: r }, l, l));
            assert!(!region_check(RatePair { r1: r + 1e-9, r2: r }, l, l));
        }
        assert!(RatePair::new(-0.1, 0.0).is_err());
        assert!(RatePair::new(f64::NAN, 0.0).is_err());
    }

    #[test]
    fn region_table_is_consistent() {
        let t = region_table(5);
        assert_eq!(t.len(), 16);
        assert!(t.iter().all(|r| r.corners_inside && r.outside_rejected));
    }

    #[test]
    fn full_report_passes() {
        assert!(capacity_report().unwrap().passed);
    }

    proptest! {
        #[test]
        fn f_is_bounded(p1 in 0.0f64..=1.0, p2 in 0.0f64..=1.0) {
            let v = conditional_entropy_f(p1, p2);
            prop_assert!((0.0..=0.5 + 1e-12).contains(&v));
            prop_assert!((v - brute_conditional_entropy(p1, p2)).abs() <= 1e-12);
        }
    }
}
