//! Summability diagnostics over certified return-probability series.
//!
//! The walks studied here return to the origin so slowly that the interesting
//! statements are about *divergence* of weighted sums of return probabilities,
//! not about limits. This module turns a [`ReturnSeries`] into those partial
//! sums, compares measured valley blocks against the closed-form lower bound
//! that the divergence argument rests on, exposes the decay exponent
//! `a(n) = -ln p(n) / ln n`, and provides two reference curves: the exact
//! simple-random-walk return series and the limit density of the rescaled
//! exponent.
//!
//! Every sum here is built from `p_lower`, the certified lower bracket of the
//! series, so each reported partial sum is itself a certified lower bound.

use serde::{Deserialize, Serialize};

use crate::bounds::{BoundDirection, BoundReport};
use crate::error::Error;
use crate::exact_kernel::ReturnSeries;
use crate::potential::{gamma_membership, ValleyStats};
use crate::Result;

/// Which weighting the partial sums use.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "mode", rename_all = "snake_case")]
pub enum SumMode {
    /// `S_N = sum_{n <= N} p(n) * n^{-alpha}` with `0 <= alpha < 1`.
    Weighted {
        /// Polynomial damping exponent.
        alpha: f64,
    },
    /// `S_N = sum_{n <= N} p(n)^alpha` with `alpha > 0`.
    Power {
        /// Power applied to each term.
        alpha: f64,
    },
    /// `S_N = sum_{n <= N} prod_k p_k(n)` over the supplied series.
    Product,
}

/// One valley block of the weighted sum.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct BlockSum {
    /// First index of the block (inclusive).
    pub n_lo: usize,
    /// Last index of the block (inclusive, clamped to the series length).
    pub n_hi: usize,
    /// Sum of the mode's terms over the block.
    pub sum: f64,
}

/// Partial sums of a return-probability series under one weighting mode.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct DivergenceReport {
    /// The weighting that produced the sums.
    pub mode: SumMode,
    /// Number of series the terms were built from.
    pub d: usize,
    /// Largest index `N` covered.
    pub n_max: usize,
    /// `S_1..S_N`; nondecreasing because every term is nonnegative.
    pub partial_sums: Vec<f64>,
    /// Block sums over the requested index windows.
    pub block_sums: Vec<BlockSum>,
    /// Least-squares slope of `ln S_N` against `ln N`, when defined.
    pub trend_slope: Option<f64>,
}

fn mode_term(mode: SumMode, series: &[&ReturnSeries], idx: usize) -> f64 {
    match mode {
        SumMode::Weighted { alpha } => {
            series[0].p_lower[idx] * ((idx + 1) as f64).powf(-alpha)
        }
        SumMode::Power { alpha } => series[0].p_lower[idx].powf(alpha),
        SumMode::Product => {
            let mut acc = 1.0;
            for s in series {
                acc *= s.p_lower[idx];
            }
            acc
        }
    }
}

/// Computes the partial sums `S_1..S_N` of the series under `mode`.
///
/// `Weighted` and `Power` take exactly one series; `Product` takes one per
/// walker, all of equal length. Every mode accumulates through the same code
/// path, so the definitional coincidences (weighted at `alpha = 0`, power at
/// `alpha = 1`, product with one series) reproduce each other bit for bit.
pub fn partial_sums(series: &[&ReturnSeries], mode: SumMode) -> Result<DivergenceReport> {
    partial_sums_with_blocks(series, mode, &[])
}

/// [`partial_sums`] with block sums recorded over the given inclusive index
/// windows (each `(n_lo, n_hi)` clamped to the series length).
pub fn partial_sums_with_blocks(
    series: &[&ReturnSeries],
    mode: SumMode,
    blocks: &[(usize, usize)],
) -> Result<DivergenceReport> {
    match mode {
        SumMode::Weighted { alpha } => {
            if !(0.0..1.0).contains(&alpha) {
                return Err(Error::InvalidArgument(format!(
                    "weighted mode needs 0 <= alpha < 1, got {alpha}"
                )));
            }
            if series.len() != 1 {
                return Err(Error::InvalidArgument(format!(
                    "weighted mode takes exactly one series, got {}",
                    series.len()
                )));
            }
        }
        SumMode::Power { alpha } => {
            if !(alpha > 0.0) {
                return Err(Error::InvalidArgument(format!(
                    "power mode needs alpha > 0, got {alpha}"
                )));
            }
            if series.len() != 1 {
                return Err(Error::InvalidArgument(format!(
                    "power mode takes exactly one series, got {}",
                    series.len()
                )));
            }
        }
        SumMode::Product => {
            if series.is_empty() {
                return Err(Error::InvalidArgument(
                    "product mode needs at least one series".into(),
                ));
            }
            let len = series[0].p_lower.len();
            if series.iter().any(|s| s.p_lower.len() != len) {
                return Err(Error::InvalidArgument(
                    "product mode needs series of equal length".into(),
                ));
            }
        }
    }
    for (lo, hi) in blocks {
        if *lo < 1 || lo > hi {
            return Err(Error::InvalidArgument(format!(
                "bad block [{lo}, {hi}]"
            )));
        }
    }

    let n_max = series[0].p_lower.len();
    let mut partial = Vec::with_capacity(n_max);
    let mut acc = 0.0;
    for idx in 0..n_max {
        acc += mode_term(mode, series, idx);
        partial.push(acc);
    }

    let block_sums = blocks
        .iter()
        .map(|&(lo, hi)| {
            let hi = hi.min(n_max);
            let mut sum = 0.0;
            for idx in lo - 1..hi {
                sum += mode_term(mode, series, idx);
            }
            BlockSum { n_lo: lo, n_hi: hi, sum }
        })
        .collect();

    let trend_slope = trend_slope_ln_ln(&partial);
    Ok(DivergenceReport {
        mode,
        d: series.len(),
        n_max,
        partial_sums: partial,
        block_sums,
        trend_slope,
    })
}

fn trend_slope_ln_ln(partial: &[f64]) -> Option<f64> {
    let mut xs = Vec::new();
    let mut ys = Vec::new();
    for (idx, &v) in partial.iter().enumerate() {
        if v > 0.0 {
            xs.push(((idx + 1) as f64).ln());
            ys.push(v.ln());
        }
    }
    if xs.len() < 2 {
        return None;
    }
    let n = xs.len() as f64;
    let mx = xs.iter().sum::<f64>() / n;
    let my = ys.iter().sum::<f64>() / n;
    let mut num = 0.0;
    let mut den = 0.0;
    for (x, y) in xs.iter().zip(&ys) {
        num += (x - mx) * (y - my);
        den += (x - mx) * (x - mx);
    }
    if den == 0.0 {
        None
    } else {
        Some(num / den)
    }
}

/// Closed-form lower bound for the damped block sum over one good valley.
///
/// For a valley certified at `(l, delta)`, the localisation bound implies
/// that the sum of `p(n) * n^{-alpha}` over `n` in the valley's time block
/// `[exp(3 delta l), exp((1 - 2 delta) l)]` is at least
/// `(hi - lo - 1) * exp(-3 delta l) * hi^{-alpha}` (the count of interior
/// integers times the worst term). The proof's unspecified leading constant
/// is reported as `1`; callers compare measured sums against this value with
/// their own documented slack.
///
/// `block` overrides the `(lo, hi)` endpoints, e.g. to truncate the block at
/// the largest computed index; it must stay inside the certified range. The
/// exponent condition `alpha < (1 - 5 delta)/(1 - 2 delta)` (with
/// `0 < delta < 1/6`) is exactly the regime in which the default bound grows
/// without limit as `l` increases.
pub fn valley_block_bound(
    stats: &ValleyStats,
    delta: f64,
    alpha: f64,
    block: Option<(f64, f64)>,
) -> Result<f64> {
    if !(delta > 0.0 && delta < 1.0 / 6.0) {
        return Err(Error::InvalidArgument(format!(
            "delta = {delta} must lie in (0, 1/6)"
        )));
    }
    let critical = (1.0 - 5.0 * delta) / (1.0 - 2.0 * delta);
    if !(0.0..1.0).contains(&alpha) || alpha >= critical {
        return Err(Error::InvalidArgument(format!(
            "alpha = {alpha} must lie in [0, {critical}) for delta = {delta}"
        )));
    }
    let membership = gamma_membership(stats, delta)?;
    if !membership.both {
        return Err(Error::Precondition(format!(
            "valley is not certified at (l = {}, delta = {delta})",
            stats.l
        )));
    }
    let l = stats.l;
    let lo_full = (3.0 * delta * l).exp();
    let hi_full = ((1.0 - 2.0 * delta) * l).exp();
    let (lo, hi) = block.unwrap_or((lo_full, hi_full));
    if lo < lo_full - 1.0 - 1e-9 || hi > hi_full + 1e-9 || hi <= lo + 1.0 {
        return Err(Error::InvalidArgument(format!(
            "block [{lo}, {hi}] must lie inside [{lo_full:.1}, {hi_full:.1}] \
             and contain interior integers"
        )));
    }
    Ok((hi - lo - 1.0) * (-3.0 * delta * l).exp() * hi.powf(-alpha))
}

/// The decay exponent `a(n) = -ln p(n) / ln n` of a return series, with its
/// running extremes.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ExponentProcess {
    /// First index the exponent is defined for (always 2: `ln 1 = 0`).
    pub n_start: usize,
    /// `a(n)` for `n = n_start..=n_max`; `+inf` marks a vanished term.
    pub a: Vec<f64>,
    /// Smallest finite exponent seen so far (same indexing as `a`).
    pub running_min: Vec<f64>,
    /// Largest exponent seen so far (same indexing as `a`).
    pub running_max: Vec<f64>,
}

/// Computes the exponent process of a series (natural logs; the series index
/// `n` refers to the walk observed at time `2n`).
///
/// Indices with `p_lower(n) = 0` record the sentinel `+inf` and are excluded
/// from the running minimum.
pub fn exponent_process(series: &ReturnSeries) -> Result<ExponentProcess> {
    if series.p_lower.len() < 2 {
        return Err(Error::InvalidArgument(
            "exponent process needs the series up to n = 2".into(),
        ));
    }
    let mut a = Vec::with_capacity(series.p_lower.len() - 1);
    let mut running_min = Vec::with_capacity(a.capacity());
    let mut running_max = Vec::with_capacity(a.capacity());
    let mut lo = f64::INFINITY;
    let mut hi = f64::NEG_INFINITY;
    for (idx, &p) in series.p_lower.iter().enumerate().skip(1) {
        let n = (idx + 1) as f64;
        let val = if p > 0.0 { -p.ln() / n.ln() } else { f64::INFINITY };
        if val.is_finite() {
            lo = lo.min(val);
        }
        hi = hi.max(val);
        a.push(val);
        running_min.push(lo);
        running_max.push(hi);
    }
    Ok(ExponentProcess {
        n_start: 2,
        a,
        running_min,
        running_max,
    })
}

/// Exact return probability of the simple symmetric walk at time `2n`,
/// `binom(2n, n) / 4^n`, via the multiplicative recurrence
/// `p_n = p_{n-1} * (2n - 1) / (2n)`.
///
/// The recurrence keeps small cases exact in floating point (`p_1 = 1/2`,
/// `p_2 = 3/8`) and loses at most a few ulps per step.
pub fn srw_return(n: u64) -> Result<f64> {
    if n == 0 {
        return Err(Error::InvalidArgument(
            "return probability needs n >= 1".into(),
        ));
    }
    let mut p = 1.0;
    for k in 1..=n {
        p *= (2 * k - 1) as f64 / (2 * k) as f64;
    }
    Ok(p)
}

/// The full prefix `p_1..p_{n_max}` of [`srw_return`] in one sweep.
pub fn srw_return_sweep(n_max: u64) -> Vec<f64> {
    let mut out = Vec::with_capacity(n_max as usize);
    let mut p = 1.0;
    for k in 1..=n_max {
        p *= (2 * k - 1) as f64 / (2 * k) as f64;
        out.push(p);
    }
    out
}

/// Checks the square-root lower bound `srw_return(n) >= n^{-1/2} / 2`.
pub fn srw_lower_check(n: u64) -> Result<BoundReport> {
    let value = srw_return(n)?;
    Ok(BoundReport::new(
        "srw_return_lower",
        value,
        0.5 / (n as f64).sqrt(),
        BoundDirection::Lower,
        0.0,
    ))
}

/// Limit density of the rescaled decay exponent, branch for `z < 1`.
pub fn ahat_low_branch(z: f64) -> f64 {
    2.0 - z - (z + 2.0) * (-2.0 * z).exp()
}

/// Limit density of the rescaled decay exponent, branch for `z >= 1`.
pub fn ahat_high_branch(z: f64) -> f64 {
    let e2 = std::f64::consts::E * std::f64::consts::E;
    ((e2 - 1.0) * z - 2.0) * (-2.0 * z).exp()
}

/// Limit density of the rescaled decay exponent at `z > 0`.
///
/// Piecewise: [`ahat_low_branch`] on `(0, 1)`, [`ahat_high_branch`] on
/// `[1, inf)`; the branches agree at `z = 1` where both give `1 - 3/e^2`.
pub fn ahat_density(z: f64) -> Result<f64> {
    if !(z > 0.0) {
        return Err(Error::InvalidArgument(format!(
            "density is defined for z > 0, got {z}"
        )));
    }
    Ok(if z < 1.0 {
        ahat_low_branch(z)
    } else {
        ahat_high_branch(z)
    })
}

fn simpson(a: f64, b: f64, fa: f64, fm: f64, fb: f64) -> f64 {
    (b - a) / 6.0 * (fa + 4.0 * fm + fb)
}

fn adaptive_simpson(
    f: &impl Fn(f64) -> f64,
    a: f64,
    b: f64,
    fa: f64,
    fm: f64,
    fb: f64,
    whole: f64,
    tol: f64,
    depth: u32,
) -> f64 {
    let m = 0.5 * (a + b);
    let lm = 0.5 * (a + m);
    let rm = 0.5 * (m + b);
    let flm = f(lm);
    let frm = f(rm);
    let left = simpson(a, m, fa, flm, fm);
    let right = simpson(m, b, fm, frm, fb);
    let delta = left + right - whole;
    if depth == 0 || delta.abs() <= 15.0 * tol {
        left + right + delta / 15.0
    } else {
        adaptive_simpson(f, a, m, fa, flm, fm, left, 0.5 * tol, depth - 1)
            + adaptive_simpson(f, m, b, fm, frm, fb, right, 0.5 * tol, depth - 1)
    }
}

fn integrate(f: impl Fn(f64) -> f64, a: f64, b: f64, tol: f64) -> f64 {
    let m = 0.5 * (a + b);
    let (fa, fm, fb) = (f(a), f(m), f(b));
    let whole = simpson(a, b, fa, fm, fb);
    adaptive_simpson(&f, a, b, fa, fm, fb, whole, tol, 40)
}

/// Total mass of [`ahat_density`] over `(0, inf)`: adaptive quadrature up to
/// `z = 20` plus the analytic integral of the exponential tail beyond it.
///
/// A correct density must return `1` up to quadrature error.
pub fn ahat_normalization() -> f64 {
    let cut = 20.0;
    let head = integrate(ahat_low_branch, 0.0, 1.0, 1e-12)
        + integrate(ahat_high_branch, 1.0, cut, 1e-12);
    // For z >= 1 the density is ((e^2 - 1) z - 2) e^{-2z}, and
    // int_Z^inf z e^{-2z} dz = e^{-2Z} (Z/2 + 1/4),
    // int_Z^inf e^{-2z} dz = e^{-2Z} / 2.
    let e2 = std::f64::consts::E * std::f64::consts::E;
    let tail = (-2.0 * cut).exp() * ((e2 - 1.0) * (0.5 * cut + 0.25) - 1.0);
    head + tail
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::env_model::staircase_environment;
    use crate::exact_kernel::return_series;
    use crate::potential::valley_stats;
    use crate::potential::Potential;
    use crate::Environment;

    fn fair_series(n_max: usize) -> ReturnSeries {
        let reach = 2 * n_max as i64 + 2;
        let env = Environment::constant(0.5, -reach, reach).unwrap();
        return_series(&env, n_max, 1e-9).unwrap()
    }

    #[test]
    fn fair_walk_first_two_partial_sums_are_exact() {
        let series = fair_series(2);
        let report = partial_sums(&[&series], SumMode::Weighted { alpha: 0.0 }).unwrap();
        assert_eq!(report.partial_sums, vec![0.5, 0.875]);
    }

    #[test]
    fn mode_coincidences_are_bitwise() {
        let env = Environment::sample(crate::SiteLaw::default_law(), 9, -130, 130).unwrap();
        let series = return_series(&env, 60, 1e-6).unwrap();
        let weighted = partial_sums(&[&series], SumMode::Weighted { alpha: 0.0 }).unwrap();
        let power = partial_sums(&[&series], SumMode::Power { alpha: 1.0 }).unwrap();
        let product = partial_sums(&[&series], SumMode::Product).unwrap();
        assert_eq!(weighted.partial_sums, power.partial_sums);
        assert_eq!(weighted.partial_sums, product.partial_sums);
    }

    #[test]
    fn product_of_two_copies_matches_square_power() {
        let series = fair_series(40);
        let product = partial_sums(&[&series, &series], SumMode::Product).unwrap();
        let squared = partial_sums(&[&series], SumMode::Power { alpha: 2.0 }).unwrap();
        assert_eq!(product.d, 2);
        for (a, b) in product.partial_sums.iter().zip(&squared.partial_sums) {
            assert!((a - b).abs() <= 1e-14 * b.abs());
        }
    }

    #[test]
    fn partial_sums_reject_out_of_range_exponents() {
        let series = fair_series(4);
        for mode in [
            SumMode::Weighted { alpha: 1.0 },
            SumMode::Weighted { alpha: -0.1 },
            SumMode::Power { alpha: 0.0 },
        ] {
            assert!(matches!(
                partial_sums(&[&series], mode),
                Err(Error::InvalidArgument(_))
            ));
        }
        assert!(partial_sums(&[], SumMode::Product).is_err());
    }

    #[test]
    fn partial_sums_are_nondecreasing_and_trend_tracks_the_decay() {
        let series = fair_series(2000);
        let report = partial_sums(&[&series], SumMode::Weighted { alpha: 0.0 }).unwrap();
        for pair in report.partial_sums.windows(2) {
            assert!(pair[1] >= pair[0]);
        }
        // p(n) ~ n^{-1/2} makes S_N grow like sqrt(N).
        let slope = report.trend_slope.unwrap();
        assert!((0.4..0.6).contains(&slope), "slope {slope}");
    }

    #[test]
    fn measured_block_beats_the_valley_bound() {
        let env = staircase_environment(20.0, 0.15, 24).unwrap();
        let pot = Potential::from_environment(&env);
        let stats = valley_stats(&pot, 20.0).unwrap();
        let n_lo = (3.0f64 * 0.15 * 20.0).exp().ceil() as usize;
        let n_hi = 9000usize;
        let series = return_series(&env, n_hi, 1e-12).unwrap();
        for alpha in [0.0, 0.3] {
            let bound =
                valley_block_bound(&stats, 0.15, alpha, Some((n_lo as f64, n_hi as f64)))
                    .unwrap();
            let report = partial_sums_with_blocks(
                &[&series],
                SumMode::Weighted { alpha },
                &[(n_lo, n_hi)],
            )
            .unwrap();
            let measured = report.block_sums[0].sum;
            assert!(
                measured >= 0.5 * bound,
                "alpha {alpha}: measured {measured} bound {bound}"
            );
        }
    }

    #[test]
    fn default_block_bound_is_the_proof_expression() {
        let env = staircase_environment(30.0, 0.1, 24).unwrap();
        let pot = Potential::from_environment(&env);
        let stats = valley_stats(&pot, 30.0).unwrap();
        let bound = valley_block_bound(&stats, 0.1, 0.0, None).unwrap();
        let expected = (24.0f64.exp() - 9.0f64.exp() - 1.0) * (-9.0f64).exp();
        assert!((bound - expected).abs() <= 1e-9 * expected);
        assert!(bound > 0.0);
    }

    #[test]
    fn block_bound_exponent_vanishes_at_the_critical_weight() {
        // For delta = 0.1 the admissible weights stop at 5/8; pushing alpha
        // toward that point drives the bound's growth rate to zero from
        // above.
        let env = staircase_environment(30.0, 0.1, 24).unwrap();
        let pot = Potential::from_environment(&env);
        let stats = valley_stats(&pot, 30.0).unwrap();
        let l = 30.0;
        let mut last = f64::INFINITY;
        for alpha in [0.0, 0.3, 0.5, 0.6, 0.62] {
            let rate = valley_block_bound(&stats, 0.1, alpha, None).unwrap().ln() / l;
            assert!(rate > 0.0, "alpha {alpha}: rate {rate}");
            assert!(rate < last, "alpha {alpha}: rate {rate} last {last}");
            let predicted = (1.0 - 5.0 * 0.1) - alpha * (1.0 - 2.0 * 0.1);
            assert!((rate - predicted).abs() < 0.05, "alpha {alpha}");
            last = rate;
        }
        assert!(matches!(
            valley_block_bound(&stats, 0.1, 0.625, None),
            Err(Error::InvalidArgument(_))
        ));
        assert!(matches!(
            valley_block_bound(&stats, 0.2, 0.0, None),
            Err(Error::InvalidArgument(_))
        ));
    }

    #[test]
    fn block_bound_requires_a_certified_valley() {
        let env = staircase_environment(30.0, 0.1, 24).unwrap();
        let pot = Potential::from_environment(&env);
        let stats = valley_stats(&pot, 30.0).unwrap();
        // The same stats read at a much tighter delta stop qualifying.
        assert!(matches!(
            valley_block_bound(&stats, 0.001, 0.0, None),
            Err(Error::Precondition(_))
        ));
    }

    #[test]
    fn exponent_of_an_exact_power_law_is_flat() {
        let n_max = 600;
        let p: Vec<f64> = (1..=n_max).map(|n| (n as f64).powf(-0.5)).collect();
        let series = ReturnSeries {
            n_max,
            p_lower: p.clone(),
            p_upper: p,
            half_width: 0,
            slack_tol: 0.0,
            converged: true,
        };
        let process = exponent_process(&series).unwrap();
        for &a in &process.a {
            assert!((a - 0.5).abs() < 1e-12, "a {a}");
        }
        assert!((process.running_min.last().unwrap() - 0.5).abs() < 1e-12);
        assert!((process.running_max.last().unwrap() - 0.5).abs() < 1e-12);
    }

    #[test]
    fn fair_walk_exponent_approaches_one_half_slowly() {
        // p(n) = binom(2n, n) 4^{-n} ~ (pi n)^{-1/2}, so
        // a(n) = 1/2 + ln(pi)/(2 ln n): about 0.562 at n = 10^4. The gap to
        // the limit is therefore 0.062, not smaller; we assert the honest
        // envelope 0.07 and that the approach is monotone from above.
        let p = srw_return_sweep(10_000);
        let series = ReturnSeries {
            n_max: p.len(),
            p_lower: p.clone(),
            p_upper: p,
            half_width: 0,
            slack_tol: 0.0,
            converged: true,
        };
        let process = exponent_process(&series).unwrap();
        let a_last = *process.a.last().unwrap();
        assert!((a_last - 0.5).abs() < 0.07, "a {a_last}");
        assert!(a_last > 0.5);
        for pair in process.a.windows(2) {
            assert!(pair[1] <= pair[0] + 1e-12);
        }
        // Running extremes move the right way by construction.
        for pair in process.running_min.windows(2) {
            assert!(pair[1] <= pair[0]);
        }
        for pair in process.running_max.windows(2) {
            assert!(pair[1] >= pair[0]);
        }
    }

    #[test]
    fn vanished_terms_become_infinite_sentinels() {
        let series = ReturnSeries {
            n_max: 3,
            p_lower: vec![0.5, 0.0, 0.125],
            p_upper: vec![0.5, 0.0, 0.125],
            half_width: 0,
            slack_tol: 0.0,
            converged: true,
        };
        let process = exponent_process(&series).unwrap();
        assert!(process.a[0].is_infinite());
        assert!(process.a[1].is_finite());
        // The sentinel is excluded from the minimum but dominates the
        // maximum.
        assert!(process.running_min[1].is_finite());
        assert!(process.running_max[1].is_infinite());
    }

    #[test]
    fn srw_small_cases_are_exact() {
        assert_eq!(srw_return(1).unwrap(), 0.5);
        assert_eq!(srw_return(2).unwrap(), 0.375);
        let expected: f64 = 70.0 / 256.0;
        assert_eq!(srw_return(4).unwrap(), expected);
        let expected: f64 = 63.0 / 256.0;
        assert_eq!(srw_return(5).unwrap(), expected);
        assert!(srw_return(0).is_err());
    }

    #[test]
    fn srw_lower_bound_holds_through_a_million() {
        let sweep = srw_return_sweep(1_000_000);
        for (idx, &p) in sweep.iter().enumerate() {
            let n = (idx + 1) as f64;
            assert!(p >= 0.5 / n.sqrt(), "n {n}: p {p}");
        }
        assert_eq!(sweep[3], srw_return(4).unwrap());
        let report = srw_lower_check(2).unwrap();
        assert!(report.holds);
        assert!((report.rhs - 0.5 / 2.0f64.sqrt()).abs() < 1e-15);
    }

    #[test]
    fn density_branches_join_at_one() {
        let expected = 1.0 - 3.0 * (-2.0f64).exp();
        assert!((ahat_low_branch(1.0) - expected).abs() < 1e-12);
        assert!((ahat_high_branch(1.0) - expected).abs() < 1e-12);
        assert!((ahat_low_branch(1.0) - ahat_high_branch(1.0)).abs() < 1e-12);
    }

    #[test]
    fn density_is_nonnegative_and_vanishes_at_zero() {
        assert!(ahat_density(1e-9).unwrap() < 1e-8);
        assert!(ahat_density(0.0).is_err());
        assert!(ahat_density(-1.0).is_err());
        for k in 1..=10_000 {
            let z = k as f64 * 20.0 / 10_000.0;
            assert!(ahat_density(z).unwrap() >= 0.0, "z {z}");
        }
    }

    #[test]
    fn density_normalizes_to_one() {
        assert!((ahat_normalization() - 1.0).abs() < 1e-8);
    }
}
