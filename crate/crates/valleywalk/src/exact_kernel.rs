//! Exact n-step kernels by mass propagation and linear solves.
//!
//! Everything here computes quenched probabilities exactly (up to floating
//! point): one-step mass propagation on a window with absorbing or reflecting
//! edges, certified two-sided brackets for return probabilities, hitting
//! probabilities both in closed form and by an independent tridiagonal solve,
//! exit-time tails, expected confinement times, and the reversibility
//! identity `mu(x) P^x(X_n = y) = mu(y) P^y(X_n = x)`.
//!
//! The bracket construction is the workhorse: with absorbing edges,
//! `p_lower(n) = P(X_{2n} = 0, the walk never reached an edge)` and
//! `p_upper(n) = p_lower(n) + absorbed mass`, so `p_lower <= P(X_{2n} = 0)
//! <= p_upper` with a slack equal to the escape probability.  Widening the
//! window can only move `p_lower` up, and a window wider than the walk's
//! reach makes the bracket exact.

use crate::env_model::Environment;
use crate::error::Error;
use crate::potential::Potential;
use crate::Result;

/// Edge behaviour of a propagation window.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum EdgeMode {
    /// Mass reaching either edge site is captured and removed.
    Absorbing,
    /// Edge sites push the walk back inside with probability one.
    Reflecting,
}

/// Exact distribution of the walk after `time` steps on a window.
#[derive(Debug, Clone)]
pub struct MassProfile {
    lo: i64,
    hi: i64,
    time: u64,
    start: i64,
    mode: EdgeMode,
    p: Vec<f64>,
    scratch: Vec<f64>,
    up: Vec<f64>,
    down: Vec<f64>,
    absorbed_left: f64,
    absorbed_right: f64,
}

impl MassProfile {
    /// Unit mass at `start`, absorbing edges at `lo` and `hi`.
    ///
    /// The walk is considered stopped the moment it stands on an edge site,
    /// so `start` must be strictly inside.
    pub fn delta_absorbing(env: &Environment, lo: i64, hi: i64, start: i64) -> Result<Self> {
        if !(lo < start && start < hi) {
            return Err(Error::InvalidArgument(format!(
                "start {start} must lie strictly inside [{lo}, {hi}]"
            )));
        }
        Self::build(env, lo, hi, start, EdgeMode::Absorbing)
    }

    /// Unit mass at `start`, reflecting edges at `lo` and `hi` (deterministic
    /// push-back, the reflected chain of the valley analysis).
    pub fn delta_reflecting(env: &Environment, lo: i64, hi: i64, start: i64) -> Result<Self> {
        if !(lo <= start && start <= hi) {
            return Err(Error::InvalidArgument(format!(
                "start {start} must lie in [{lo}, {hi}]"
            )));
        }
        if hi - lo < 2 {
            return Err(Error::InvalidArgument(
                "reflecting window needs at least three sites".into(),
            ));
        }
        Self::build(env, lo, hi, start, EdgeMode::Reflecting)
    }

    fn build(env: &Environment, lo: i64, hi: i64, start: i64, mode: EdgeMode) -> Result<Self> {
        if lo >= hi {
            return Err(Error::InvalidArgument(format!("window [{lo}, {hi}] is empty")));
        }
        if !env.contains(lo) || !env.contains(hi) {
            return Err(Error::InvalidArgument(format!(
                "window [{lo}, {hi}] not covered by environment [{}, {}]",
                env.lo(),
                env.hi()
            )));
        }
        let m = (hi - lo + 1) as usize;
        let mut up = Vec::with_capacity(m);
        let mut down = Vec::with_capacity(m);
        for x in lo..=hi {
            let w = env.omega(x);
            up.push(w);
            down.push(1.0 - w);
        }
        match mode {
            EdgeMode::Absorbing => {
                // Edge sites never emit mass.
                up[0] = 0.0;
                down[0] = 0.0;
                up[m - 1] = 0.0;
                down[m - 1] = 0.0;
            }
            EdgeMode::Reflecting => {
                up[0] = 1.0;
                down[0] = 0.0;
                up[m - 1] = 0.0;
                down[m - 1] = 1.0;
            }
        }
        let mut p = vec![0.0; m];
        p[(start - lo) as usize] = 1.0;
        Ok(MassProfile {
            lo,
            hi,
            time: 0,
            start,
            mode,
            p,
            scratch: vec![0.0; m],
            up,
            down,
            absorbed_left: 0.0,
            absorbed_right: 0.0,
        })
    }

    /// Advances one time step.
    pub fn step(&mut self) {
        let m = self.p.len();
        let p = &self.p;
        let s = &mut self.scratch;
        s[0] = p[1] * self.down[1];
        s[m - 1] = p[m - 2] * self.up[m - 2];
        for i in 1..m - 1 {
            s[i] = p[i - 1] * self.up[i - 1] + p[i + 1] * self.down[i + 1];
        }
        if self.mode == EdgeMode::Absorbing {
            self.absorbed_left += s[0];
            self.absorbed_right += s[m - 1];
            s[0] = 0.0;
            s[m - 1] = 0.0;
        }
        std::mem::swap(&mut self.p, &mut self.scratch);
        self.time += 1;
    }

    /// Advances `k` time steps.
    pub fn step_many(&mut self, k: u64) {
        for _ in 0..k {
            self.step();
        }
    }

    /// Probability of standing at `x` (not absorbed) at the current time.
    pub fn prob(&self, x: i64) -> f64 {
        if x < self.lo || x > self.hi {
            return 0.0;
        }
        self.p[(x - self.lo) as usize]
    }

    /// Steps taken so far.
    pub fn time(&self) -> u64 {
        self.time
    }

    /// Left window edge.
    pub fn lo(&self) -> i64 {
        self.lo
    }

    /// Right window edge.
    pub fn hi(&self) -> i64 {
        self.hi
    }

    /// Starting site of the unit mass.
    pub fn start(&self) -> i64 {
        self.start
    }

    /// Mass absorbed at the left edge so far.
    pub fn absorbed_left(&self) -> f64 {
        self.absorbed_left
    }

    /// Mass absorbed at the right edge so far.
    pub fn absorbed_right(&self) -> f64 {
        self.absorbed_right
    }

    /// Total mass still in circulation plus absorbed mass, accumulated with
    /// compensated summation, minus one.  Exact propagation keeps this at the
    /// rounding level regardless of step count.
    pub fn conservation_residual(&self) -> f64 {
        let mut sum = 0.0f64;
        let mut c = 0.0f64;
        for &v in self.p.iter().chain([self.absorbed_left, self.absorbed_right].iter()) {
            let y = v - c;
            let t = sum + y;
            c = (t - sum) - y;
            sum = t;
        }
        sum - 1.0
    }

    /// Largest mass found on a site of impossible parity.  A nearest-neighbour
    /// walk started from a point mass occupies only sites with
    /// `x - start ≡ time (mod 2)`; propagation preserves the exact zeros, so
    /// this is identically `0.0` and asserting it costs nothing.
    pub fn parity_violation(&self) -> f64 {
        let mut worst = 0.0f64;
        for (i, &v) in self.p.iter().enumerate() {
            let x = self.lo + i as i64;
            if (x - self.start - self.time as i64).rem_euclid(2) == 1 {
                worst = worst.max(v.abs());
            }
        }
        worst
    }

    /// The full profile, left to right.
    pub fn probs(&self) -> &[f64] {
        &self.p
    }
}

/// Advances a profile one step (free-function form).
pub fn step(profile: &mut MassProfile) {
    profile.step();
}

/// Certified bracket series for the even-time return probability at the
/// origin: for `n = 1 ..= n_max`,
/// `p_lower[n-1] <= P(X_{2n} = 0) <= p_upper[n-1]`.
#[derive(Debug, Clone)]
pub struct ReturnSeries {
    /// Largest `n` in the series (time `2 n_max`).
    pub n_max: usize,
    /// Lower bracket: return probability with the walk confined to the window.
    pub p_lower: Vec<f64>,
    /// Upper bracket: lower bracket plus all mass absorbed by time `2n`.
    pub p_upper: Vec<f64>,
    /// Half-width of the final propagation window.
    pub half_width: i64,
    /// Requested bound on the final slack `p_upper - p_lower` at `n_max`.
    pub slack_tol: f64,
    /// Whether the slack target was met before the window budget ran out.
    pub converged: bool,
}

impl ReturnSeries {
    /// Bracket width at index `n` (1-based series index).
    pub fn slack(&self, n: usize) -> f64 {
        self.p_upper[n - 1] - self.p_lower[n - 1]
    }
}

/// Computes the return bracket, widening the window geometrically until the
/// final slack drops below `slack_tol`.
///
/// The window starts from the environment's own window (clamped to the walk's
/// reach `2 n_max + 1`) and doubles on failure, extending the environment
/// through its generator.  If the environment cannot grow far enough, the
/// partial series is returned with `converged = false` rather than an error,
/// so callers can still use the honest bracket.
pub fn return_series(env: &Environment, n_max: usize, slack_tol: f64) -> Result<ReturnSeries> {
    if n_max == 0 {
        return Err(Error::InvalidArgument("n_max must be positive".into()));
    }
    if !(slack_tol >= 0.0) {
        return Err(Error::InvalidArgument("slack_tol must be nonnegative".into()));
    }
    let reach = 2 * n_max as i64 + 1;
    let mut current = env.clone();
    loop {
        let lo = current.lo().max(-reach);
        let hi = current.hi().min(reach);
        let series = bracket_run(&current, lo, hi, n_max, slack_tol);
        let done = series.converged || (lo == -reach && hi == reach);
        if done {
            return Ok(series);
        }
        let new_lo = (2 * lo).max(-reach);
        let new_hi = (2 * hi).min(reach);
        match current.extended(new_lo.min(current.lo()), new_hi.max(current.hi())) {
            Ok(wider) => current = wider,
            Err(_) => {
                // Window budget or a non-extendable environment: report the
                // partial result, flagged.
                return Ok(series);
            }
        }
    }
}

fn bracket_run(env: &Environment, lo: i64, hi: i64, n_max: usize, slack_tol: f64) -> ReturnSeries {
    let mut profile =
        MassProfile::delta_absorbing(env, lo, hi, 0).expect("window straddles the origin");
    let mut p_lower = Vec::with_capacity(n_max);
    let mut p_upper = Vec::with_capacity(n_max);
    for _ in 1..=n_max {
        profile.step();
        profile.step();
        let lower = profile.prob(0);
        p_lower.push(lower);
        p_upper.push(lower + profile.absorbed_left() + profile.absorbed_right());
    }
    let converged = p_upper[n_max - 1] - p_lower[n_max - 1] <= slack_tol;
    ReturnSeries {
        n_max,
        p_lower,
        p_upper,
        half_width: (-lo).max(hi),
        slack_tol,
        converged,
    }
}

/// Hitting probability `P^y(tau(z) < tau(x))` in closed form: the ratio of
/// conductance-weighted edge sums
/// `sum_{j=x}^{y-1} exp(V(j)) / sum_{j=x}^{z-1} exp(V(j))`,
/// evaluated with the maximum potential shifted out of the exponentials so
/// deep valleys cannot overflow.
pub fn hitting_prob_formula(pot: &Potential, x: i64, y: i64, z: i64) -> Result<f64> {
    check_triple(x, y, z)?;
    if !pot.contains(x) || !pot.contains(z - 1) {
        return Err(Error::InvalidArgument(format!(
            "potential window [{}, {}] does not cover edges [{x}, {}]",
            pot.lo(),
            pot.hi(),
            z - 1
        )));
    }
    let m = (x..z).map(|j| pot.value(j)).fold(f64::NEG_INFINITY, f64::max);
    let mut num = 0.0;
    let mut den = 0.0;
    for j in x..z {
        let t = (pot.value(j) - m).exp();
        if j < y {
            num += t;
        }
        den += t;
    }
    Ok(num / den)
}

fn check_triple(x: i64, y: i64, z: i64) -> Result<()> {
    if !(x < z && x <= y && y <= z) {
        return Err(Error::InvalidArgument(format!(
            "need x <= y <= z with x < z, got ({x}, {y}, {z})"
        )));
    }
    Ok(())
}

/// Solves the Dirichlet problem for the walk on `(x, z)`:
/// `u(j) = omega_j u(j+1) + (1 - omega_j) u(j-1) + rhs(j)` inside, with
/// boundary values `u(x) = left`, `u(z) = right`.  Returns `u` on `x ..= z`.
///
/// Thomas elimination; the system is an irreducible weakly diagonally
/// dominant M-matrix, so no pivoting is needed.
fn dirichlet_solve(
    env: &Environment,
    x: i64,
    z: i64,
    rhs: impl Fn(i64) -> f64,
    left: f64,
    right: f64,
) -> Result<Vec<f64>> {
    if z - x < 1 {
        return Err(Error::InvalidArgument(format!("empty interval ({x}, {z})")));
    }
    if !env.contains(x + 1) && z - x > 1 {
        return Err(Error::InvalidArgument("interval outside environment".into()));
    }
    let m = (z - x - 1) as usize; // number of interior unknowns
    let mut u = vec![0.0; m + 2];
    u[0] = left;
    u[m + 1] = right;
    if m == 0 {
        return Ok(u);
    }
    if !env.contains(z - 1) || !env.contains(x + 1) {
        return Err(Error::InvalidArgument(format!(
            "interval ({x}, {z}) not covered by environment [{}, {}]",
            env.lo(),
            env.hi()
        )));
    }
    // Interior equations: -(1-w_j) u(j-1) + u(j) - w_j u(j+1) = rhs(j),
    // with the known boundary values moved to the right-hand side.
    let mut diag = vec![1.0f64; m];
    let mut b = vec![0.0f64; m];
    let omega: Vec<f64> = (x + 1..z).map(|j| env.omega(j)).collect();
    for (i, j) in (x + 1..z).enumerate() {
        b[i] = rhs(j);
    }
    b[0] += (1.0 - omega[0]) * left;
    b[m - 1] += omega[m - 1] * right;
    // Forward sweep: eliminate the subdiagonal -(1 - w_i).
    for i in 1..m {
        let factor = (1.0 - omega[i]) / diag[i - 1];
        diag[i] -= factor * omega[i - 1];
        b[i] += factor * b[i - 1];
    }
    // Back substitution.
    u[m] = b[m - 1] / diag[m - 1];
    for i in (0..m - 1).rev() {
        u[i + 1] = (b[i] + omega[i] * u[i + 2]) / diag[i];
    }
    Ok(u)
}

/// Hitting probability `P^y(tau(z) < tau(x))` by an independent route: the
/// harmonicity system `h(j) = omega_j h(j+1) + (1 - omega_j) h(j-1)` with
/// `h(x) = 0`, `h(z) = 1`, solved by tridiagonal elimination.
pub fn hitting_prob_solve(env: &Environment, x: i64, y: i64, z: i64) -> Result<f64> {
    check_triple(x, y, z)?;
    let u = dirichlet_solve(env, x, z, |_| 0.0, 0.0, 1.0)?;
    Ok(u[(y - x) as usize])
}

/// Expected confinement time `E^y[tau(z) ; tau(z) < tau(x)]`: the expected
/// time to reach `z`, counted only on walks that reach `z` before `x`.
///
/// Solves the harmonicity system for `h = P(tau(z) < tau(x))` first, then
/// the same operator with source `h`:
/// `g(j) = omega_j g(j+1) + (1 - omega_j) g(j-1) + h(j)`, `g(x) = g(z) = 0`.
pub fn expected_confinement(env: &Environment, x: i64, y: i64, z: i64) -> Result<f64> {
    check_triple(x, y, z)?;
    let h = dirichlet_solve(env, x, z, |_| 0.0, 0.0, 1.0)?;
    let g = dirichlet_solve(env, x, z, |j| h[(j - x) as usize], 0.0, 0.0)?;
    Ok(g[(y - x) as usize])
}

/// `P^y(tau(z) < k)`: probability of reaching `z > y` strictly before time
/// `k`, by absorbing propagation with the left edge placed out of reach.
///
/// The environment is extended on demand to cover `[y - k, z]`; with fewer
/// than `k` steps available the walk cannot touch `y - k`, so absorption
/// there never interferes and the result is exact.
pub fn exit_time_cdf(env: &Environment, y: i64, z: i64, k: u64) -> Result<f64> {
    if y >= z {
        return Err(Error::InvalidArgument(format!("need y < z, got ({y}, {z})")));
    }
    if k == 0 {
        return Ok(0.0);
    }
    let safe_lo = y - k as i64;
    let covering = cover(env, safe_lo.min(env.lo()), z.max(env.hi()))?;
    let mut profile = MassProfile::delta_absorbing(&covering, safe_lo, z, y)?;
    profile.step_many(k - 1);
    Ok(profile.absorbed_right())
}

/// Mirror of [`exit_time_cdf`] for a left barrier: `P^y(tau(x) < k)` with
/// `x < y`, right edge placed out of reach.
pub fn exit_time_cdf_left(env: &Environment, y: i64, x: i64, k: u64) -> Result<f64> {
    if x >= y {
        return Err(Error::InvalidArgument(format!("need x < y, got ({x}, {y})")));
    }
    if k == 0 {
        return Ok(0.0);
    }
    let safe_hi = y + k as i64;
    let covering = cover(env, x.min(env.lo()), safe_hi.max(env.hi()))?;
    let mut profile = MassProfile::delta_absorbing(&covering, x, safe_hi, y)?;
    profile.step_many(k - 1);
    Ok(profile.absorbed_left())
}

pub(crate) fn cover(env: &Environment, lo: i64, hi: i64) -> Result<Environment> {
    if env.lo() <= lo && env.hi() >= hi {
        return Ok(env.clone());
    }
    env.extended(lo.min(env.lo()), hi.max(env.hi()))
}

/// Residual of the reversibility identity
/// `mu(x) P^x(X_n = y) - mu(y) P^y(X_n = x)`, with both kernels computed by
/// exact propagation on a window wide enough that no path is lost.
pub fn reversibility_residual(env: &Environment, x: i64, y: i64, n: u64) -> Result<f64> {
    if (x - y).rem_euclid(2) != (n as i64).rem_euclid(2) {
        // Parity mismatch: both kernels are exactly zero.
        return Ok(0.0);
    }
    let lo = x.min(y) - n as i64;
    let hi = x.max(y) + n as i64;
    let covering = cover(env, (lo - 1).min(env.lo()), (hi + 1).max(env.hi()))?;
    let pot = Potential::from_environment(&covering);

    let mut from_x = MassProfile::delta_absorbing(&covering, lo - 1, hi + 1, x)?;
    from_x.step_many(n);
    let mut from_y = MassProfile::delta_absorbing(&covering, lo - 1, hi + 1, y)?;
    from_y.step_many(n);

    let lhs = pot.measure(x)? * from_x.prob(y);
    let rhs = pot.measure(y)? * from_y.prob(x);
    Ok(lhs - rhs)
}

/// Stationary measure of the reflected chain on `[t_minus, t_plus]`: the
/// interior keeps the reversible measure, while each barrier keeps only the
/// conductance of its single interior edge (`exp(-V(t_minus))` on the left,
/// `exp(-V(t_plus - 1))` on the right), matching the deterministic push-back.
pub fn reflected_measure(pot: &Potential, t_minus: i64, t_plus: i64) -> Result<Vec<f64>> {
    if t_plus - t_minus < 2 {
        return Err(Error::InvalidArgument(
            "reflected window needs at least three sites".into(),
        ));
    }
    let mut out = Vec::with_capacity((t_plus - t_minus + 1) as usize);
    for x in t_minus..=t_plus {
        let v = if x == t_minus {
            (-pot.try_value(t_minus)?).exp()
        } else if x == t_plus {
            (-pot.try_value(t_plus - 1)?).exp()
        } else {
            pot.measure(x)?
        };
        out.push(v);
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::env_model::SiteLaw;

    fn padded_env(values: &[(i64, f64)], lo: i64, hi: i64, fill: f64) -> Environment {
        let mut support: Vec<f64> = values.iter().map(|&(_, v)| v).collect();
        support.push(fill);
        support.sort_by(f64::total_cmp);
        support.dedup();
        let w = 1.0 / support.len() as f64;
        let law = SiteLaw::from_pairs(
            &support.iter().map(|&v| (v, w)).collect::<Vec<_>>(),
        )
        .unwrap();
        let vals: Vec<f64> = (lo..=hi)
            .map(|x| {
                values
                    .iter()
                    .find(|&&(site, _)| site == x)
                    .map(|&(_, v)| v)
                    .unwrap_or(fill)
            })
            .collect();
        Environment::from_values(law, lo, vals).unwrap()
    }

    #[test]
    fn one_step_from_a_point_mass() {
        let env = padded_env(&[(0, 0.7)], -2, 2, 0.5);
        let mut profile = MassProfile::delta_absorbing(&env, -2, 2, 0).unwrap();
        profile.step();
        assert_eq!(profile.prob(1), 0.7);
        assert!((profile.prob(-1) - 0.3).abs() < 1e-15);
        assert_eq!(profile.prob(0), 0.0);
    }

    #[test]
    fn two_step_return_by_path_enumeration() {
        // Oracle: the two paths through site 1 and site -1.
        let env = padded_env(&[(-1, 0.55), (0, 0.7), (1, 0.4)], -3, 3, 0.55);
        let mut profile = MassProfile::delta_absorbing(&env, -3, 3, 0).unwrap();
        profile.step_many(2);
        let expected: f64 = 0.7 * (1.0 - 0.4) + (1.0 - 0.7) * 0.55;
        assert!((expected - 0.585).abs() < 1e-15);
        assert!((profile.prob(0) - expected).abs() < 1e-15);
    }

    #[test]
    fn conservation_and_parity_over_many_steps() {
        let law = SiteLaw::default_law();
        let env = Environment::sample(law, 31, -1000, 1000).unwrap();
        let mut profile = MassProfile::delta_absorbing(&env, -1000, 1000, 0).unwrap();
        profile.step_many(10_000);
        assert!(
            profile.conservation_residual().abs() <= 1e-12,
            "residual {}",
            profile.conservation_residual()
        );
        assert_eq!(profile.parity_violation(), 0.0);
    }

    #[test]
    fn reflecting_mode_conserves_mass_without_absorption() {
        let law = SiteLaw::default_law();
        let env = Environment::sample(law, 8, -40, 40).unwrap();
        let mut profile = MassProfile::delta_reflecting(&env, -7, 9, 1).unwrap();
        profile.step_many(10_000);
        assert_eq!(profile.absorbed_left(), 0.0);
        assert_eq!(profile.absorbed_right(), 0.0);
        assert!(profile.conservation_residual().abs() <= 1e-12);
        assert_eq!(profile.parity_violation(), 0.0);
    }

    #[test]
    fn reflecting_edges_push_back_deterministically() {
        let env = Environment::constant(0.5, -5, 5).unwrap();
        let mut profile = MassProfile::delta_reflecting(&env, -2, 2, 2).unwrap();
        profile.step();
        assert_eq!(profile.prob(1), 1.0);
    }

    #[test]
    fn return_series_for_simple_walk_matches_central_binomial() {
        let env = Environment::constant(0.5, -64, 64).unwrap();
        let series = return_series(&env, 5, 1e-12).unwrap();
        assert!(series.converged);
        assert!((series.p_lower[0] - 0.5).abs() < 1e-15);
        assert!((series.p_lower[1] - 0.375).abs() < 1e-15);
        // C(10, 5) / 2^10 = 63/256
        assert!((series.p_lower[4] - 63.0 / 256.0).abs() < 1e-15);
        for n in 1..=5 {
            assert!(series.slack(n) <= 1e-12);
        }
    }

    #[test]
    fn bracket_orders_and_window_growth() {
        let law = SiteLaw::default_law();
        let env = Environment::sample(law, 3, -8, 8).unwrap();
        let series = return_series(&env, 200, 1e-10).unwrap();
        assert!(series.converged);
        assert!(series.half_width > 8, "window should have grown");
        for n in 1..=200 {
            assert!(series.p_lower[n - 1] <= series.p_upper[n - 1]);
            assert!(series.p_lower[n - 1] >= 0.0);
            assert!(series.p_upper[n - 1] <= 1.0 + 1e-12);
        }
    }

    #[test]
    fn p_lower_monotone_in_window_size() {
        let law = SiteLaw::default_law();
        let env = Environment::sample(law, 17, -400, 400).unwrap();
        let mut prev = vec![0.0; 50];
        for half in [10i64, 20, 40, 80] {
            let mut profile = MassProfile::delta_absorbing(&env, -half, half, 0).unwrap();
            let mut lows = Vec::new();
            for _ in 1..=50 {
                profile.step_many(2);
                lows.push(profile.prob(0));
            }
            for n in 0..50 {
                assert!(
                    lows[n] >= prev[n] - 1e-15,
                    "half {half}, n {}: {} < {}",
                    n + 1,
                    lows[n],
                    prev[n]
                );
            }
            prev = lows;
        }
    }

    #[test]
    fn non_extendable_window_reports_partial_result() {
        // Tight explicit window: heavy escape, no generator to widen with.
        let law = SiteLaw::constant(0.5).unwrap();
        let env = Environment::from_values(law, -2, vec![0.5; 5]).unwrap();
        let series = return_series(&env, 50, 1e-10).unwrap();
        assert!(!series.converged);
        assert!(series.slack(50) > 1e-10);
    }

    #[test]
    fn gamblers_ruin_for_fair_walk() {
        let env = Environment::constant(0.5, -2, 12).unwrap();
        let pot = Potential::from_environment(&env);
        let formula = hitting_prob_formula(&pot, 0, 3, 10).unwrap();
        assert!((formula - 0.3).abs() < 1e-12);
        let solved = hitting_prob_solve(&env, 0, 3, 10).unwrap();
        assert!((solved - 0.3).abs() < 1e-12);
    }

    #[test]
    fn biased_hitting_probability_against_hand_sum() {
        // omega = 0.6 everywhere, x = 0, y = 1, z = 3: 1 / (1 + 2/3 + 4/9).
        let env = Environment::constant(0.6, -2, 5).unwrap();
        let pot = Potential::from_environment(&env);
        let expected = 9.0 / 19.0;
        let formula = hitting_prob_formula(&pot, 0, 1, 3).unwrap();
        assert!((formula - expected).abs() < 1e-12, "formula {formula}");
        let solved = hitting_prob_solve(&env, 0, 1, 3).unwrap();
        assert!((solved - expected).abs() < 1e-12, "solved {solved}");
    }

    #[test]
    fn adjacent_barriers_reduce_to_one_step() {
        let law = SiteLaw::default_law();
        let env = Environment::sample(law, 41, -10, 10).unwrap();
        for y in -5..=5i64 {
            let p = hitting_prob_solve(&env, y - 1, y, y + 1).unwrap();
            assert!((p - env.omega(y)).abs() < 1e-15);
            let pot = Potential::from_environment(&env);
            let f = hitting_prob_formula(&pot, y - 1, y, y + 1).unwrap();
            assert!((f - env.omega(y)).abs() < 1e-12);
        }
    }

    #[test]
    fn boundary_cases_of_the_triple() {
        let env = Environment::constant(0.5, -5, 5).unwrap();
        let pot = Potential::from_environment(&env);
        assert_eq!(hitting_prob_formula(&pot, -3, -3, 4).unwrap(), 0.0);
        assert_eq!(hitting_prob_formula(&pot, -3, 4, 4).unwrap(), 1.0);
        assert_eq!(hitting_prob_solve(&env, -3, -3, 4).unwrap(), 0.0);
        assert_eq!(hitting_prob_solve(&env, -3, 4, 4).unwrap(), 1.0);
        assert!(hitting_prob_formula(&pot, 3, 2, 4).is_err());
        assert!(hitting_prob_formula(&pot, 3, 3, 3).is_err());
    }

    #[test]
    fn formula_and_solve_agree_on_random_environments() {
        let law = SiteLaw::default_law();
        for seed in 0..40u64 {
            let env = Environment::sample(law.clone(), seed, -60, 60).unwrap();
            let pot = Potential::from_environment(&env);
            let x = -50 + (seed as i64 % 7);
            let z = 40 + (seed as i64 % 11);
            let y = (x + z) / 2 + (seed as i64 % 5) - 2;
            let a = hitting_prob_formula(&pot, x, y, z).unwrap();
            let b = hitting_prob_solve(&env, x, y, z).unwrap();
            let denom = a.abs().max(b.abs()).max(f64::MIN_POSITIVE);
            assert!(
                (a - b).abs() / denom <= 1e-10,
                "seed {seed}: {a} vs {b}"
            );
        }
    }

    #[test]
    fn confinement_one_site_interval() {
        // x = -1, y = 0, z = 1: tau(z) = 1 on success, so the expectation is
        // the success probability.
        let env = padded_env(&[(0, 0.6)], -3, 3, 0.5);
        let g = expected_confinement(&env, -1, 0, 1).unwrap();
        assert!((g - 0.6).abs() < 1e-15);
    }

    #[test]
    fn confinement_matches_direct_series_on_fair_walk() {
        // Oracle: E[tau ; success] for the fair walk on (-2, 2) from 0 by
        // summing over path lengths: tau(2) = 2 + 4k happens with
        // probability 2^{-(2+4k)} * 2^k ... easier: exact absorbing DP,
        // accumulating time-weighted arrivals at the right barrier.
        let env = Environment::constant(0.5, -6, 6).unwrap();
        let mut profile = MassProfile::delta_absorbing(&env, -2, 2, 0).unwrap();
        let mut acc = 0.0;
        let mut prev_absorbed = 0.0;
        for _ in 0..2000 {
            profile.step();
            let arrived = profile.absorbed_right() - prev_absorbed;
            prev_absorbed = profile.absorbed_right();
            acc += arrived * profile.time() as f64;
        }
        let g = expected_confinement(&env, -2, 0, 2).unwrap();
        assert!((g - acc).abs() < 1e-12, "solve {g} vs dp {acc}");
    }

    #[test]
    fn exit_cdf_counts_only_fast_crossings() {
        // omega = 0.6, y = 0, z = 2, k = 3: only the straight up-up path
        // arrives strictly before time 3.
        let env = Environment::constant(0.6, -10, 10).unwrap();
        let p = exit_time_cdf(&env, 0, 2, 3).unwrap();
        assert!((p - 0.36).abs() < 1e-15, "p {p}");
        // Strictly-before-k semantics: k = 2 cannot reach site 2.
        let p = exit_time_cdf(&env, 0, 2, 2).unwrap();
        assert_eq!(p, 0.0);
        // Left mirror by symmetry of the complementary walk.
        let env_down = Environment::constant(0.4, -10, 10).unwrap();
        let q = exit_time_cdf_left(&env_down, 0, -2, 3).unwrap();
        assert!((q - 0.36).abs() < 1e-15, "q {q}");
    }

    #[test]
    fn exit_cdf_is_monotone_in_k_and_bounded_by_hitting_prob() {
        let law = SiteLaw::default_law();
        let env = Environment::sample(law, 19, -600, 30).unwrap();
        let mut prev = 0.0;
        for k in [1u64, 5, 20, 80, 300] {
            let p = exit_time_cdf(&env, 0, 8, k).unwrap();
            assert!(p >= prev - 1e-15);
            prev = p;
        }
        assert!(prev <= 1.0 + 1e-12);
    }

    #[test]
    fn reversibility_residual_small_on_random_environments() {
        let law = SiteLaw::default_law();
        for seed in 0..25u64 {
            let env = Environment::sample(law.clone(), seed, -80, 80).unwrap();
            let x = (seed as i64 % 9) - 4;
            let y = ((seed / 3) as i64 % 9) - 4;
            for n in [1u64, 7, 20, 50] {
                let r = reversibility_residual(&env, x, y, n).unwrap();
                assert!(
                    r.abs() <= 1e-10,
                    "seed {seed}, x {x}, y {y}, n {n}: residual {r}"
                );
            }
        }
    }

    #[test]
    fn reflected_measure_for_flat_potential() {
        let env = Environment::constant(0.5, -4, 4).unwrap();
        let pot = Potential::from_environment(&env);
        let mu = reflected_measure(&pot, -2, 2).unwrap();
        assert_eq!(mu, vec![1.0, 2.0, 2.0, 2.0, 1.0]);
    }

    #[test]
    fn reflected_measure_balances_the_reflected_chain() {
        // Detailed balance including the deterministic edges:
        // mu(t-) * 1 = mu(t- + 1) * (1 - omega_{t-+1}), and mirrored.
        let law = SiteLaw::default_law();
        let env = Environment::sample(law, 57, -30, 30).unwrap();
        let pot = Potential::from_environment(&env);
        let (tm, tp) = (-11i64, 13i64);
        let mu = reflected_measure(&pot, tm, tp).unwrap();
        let at = |x: i64| mu[(x - tm) as usize];
        let rel = |a: f64, b: f64| (a - b).abs() / a.abs().max(b.abs());
        assert!(rel(at(tm), at(tm + 1) * (1.0 - env.omega(tm + 1))) < 1e-12);
        assert!(rel(at(tp), at(tp - 1) * env.omega(tp - 1)) < 1e-12);
        for x in tm + 1..tp - 1 {
            let lhs = at(x) * env.omega(x);
            let rhs = at(x + 1) * (1.0 - env.omega(x + 1));
            assert!(rel(lhs, rhs) < 1e-12, "edge ({x}, {})", x + 1);
        }
    }
}
