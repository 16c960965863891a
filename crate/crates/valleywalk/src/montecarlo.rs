//! Monte Carlo harness for the multidimensional recurrence examples.
//!
//! Each example couples one or more one-dimensional walks into a vector
//! process and asks how often the *whole vector* sits at the origin: several
//! walkers in one shared random environment, walkers in independent
//! environments, a walker paired with a fair coin walk, and a lazy mixture
//! that spends each step on exactly one of its two coordinates.
//!
//! Replicas are embarrassingly parallel. Determinism is guaranteed by
//! construction: replica `r` always draws from stream `r` of a counter-mode
//! generator seeded by the spec, partial results are integer counts, and
//! chunks are merged in index order — so the result is bitwise identical no
//! matter how many workers run the chunks.

use rand::Rng;
use rand_chacha::{rand_core::SeedableRng, ChaCha8Rng};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::diagnostics::srw_return_sweep;
use crate::env_model::{Environment, SiteLaw};
use crate::error::Error;
use crate::exact_kernel::return_series;
use crate::rng::{derive_seed, DOMAIN_ENV};
use crate::Result;

/// Replicas per work unit; chunk results are merged in chunk order.
const CHUNK: u64 = 4096;

/// Pre-sampled half-width of derived environments. Walkers roaming further
/// fall back to the pure per-site generator, so this is a cache size, not a
/// boundary.
const PRESAMPLED_HALF: i64 = 512;

/// Jump-count index whose parity is tracked in [`tau_increment_stats`].
pub const TAU_PARITY_INDEX: u64 = 1000;

/// Which coupled process to simulate.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Mode {
    /// `d` independent walkers reading the same environment.
    SharedEnv {
        /// Number of walkers.
        d: usize,
    },
    /// `d` independent walkers, each in its own environment.
    IidEnvs {
        /// Number of walkers.
        d: usize,
    },
    /// One environment walker paired with an independent fair coin walk.
    RwreTimesSrw,
    /// Two coordinates, one step each tick: the first (environment-driven)
    /// coordinate moves with probability `delta_mix`, otherwise the second
    /// moves as a fair walk. `delta_mix = 1` degenerates to the pure
    /// environment walk in the first coordinate.
    LazyMixture {
        /// Probability that a tick goes to the first coordinate.
        delta_mix: f64,
    },
}

impl Mode {
    /// Dimension of the state vector.
    pub fn dimension(&self) -> usize {
        match self {
            Mode::SharedEnv { d } | Mode::IidEnvs { d } => *d,
            Mode::RwreTimesSrw | Mode::LazyMixture { .. } => 2,
        }
    }

    fn env_count(&self) -> usize {
        match self {
            Mode::IidEnvs { d } => *d,
            _ => 1,
        }
    }
}

/// One simulation request.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SimSpec {
    /// The coupled process.
    pub mode: Mode,
    /// Number of steps per replica; must be even.
    pub horizon: u64,
    /// Number of independent replicas.
    pub replicas: u64,
    /// Base seed; replica `r` uses stream `r`.
    pub seed: u64,
    /// Site law for derived environments.
    pub law: SiteLaw,
}

impl SimSpec {
    fn validate(&self) -> Result<()> {
        if self.horizon == 0 || self.horizon % 2 != 0 {
            return Err(Error::InvalidArgument(format!(
                "horizon must be even and positive, got {}",
                self.horizon
            )));
        }
        if self.replicas == 0 {
            return Err(Error::InvalidArgument("need at least one replica".into()));
        }
        match self.mode {
            Mode::SharedEnv { d } | Mode::IidEnvs { d } => {
                if d == 0 {
                    return Err(Error::InvalidArgument("need at least one walker".into()));
                }
            }
            Mode::LazyMixture { delta_mix } => {
                if !(delta_mix > 0.0 && delta_mix <= 1.0) {
                    return Err(Error::InvalidArgument(format!(
                        "delta_mix must lie in (0, 1], got {delta_mix}"
                    )));
                }
            }
            Mode::RwreTimesSrw => {}
        }
        Ok(())
    }

    fn default_envs(&self) -> Result<Vec<Environment>> {
        (0..self.mode.env_count() as u64)
            .map(|i| {
                Environment::sample(
                    self.law.clone(),
                    derive_seed(self.seed, DOMAIN_ENV, i),
                    -PRESAMPLED_HALF,
                    PRESAMPLED_HALF,
                )
            })
            .collect()
    }

    fn check_envs(&self, envs: &[Environment]) -> Result<()> {
        if envs.len() != self.mode.env_count() {
            return Err(Error::InvalidArgument(format!(
                "mode needs {} environment(s), got {}",
                self.mode.env_count(),
                envs.len()
            )));
        }
        Ok(())
    }
}

/// How the random numbers were produced, for the record.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct RngManifest {
    /// Generator family.
    pub algorithm: String,
    /// Base seed.
    pub seed: u64,
    /// Number of streams consumed (one per replica).
    pub streams: u64,
}

/// Cumulative origin-return counts of a simulation.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SimResult {
    /// Observation times (even, ending at the horizon).
    pub checkpoints: Vec<u64>,
    /// Summed return counts over all replicas, per checkpoint.
    pub total_returns: Vec<u64>,
    /// Mean cumulative returns per replica; nondecreasing in `t`.
    pub mean_returns: Vec<f64>,
    /// Standard error of each mean, from the replica-level variance.
    pub std_errors: Vec<f64>,
    /// Number of replicas.
    pub replicas: u64,
    /// Provenance of the random draws.
    pub rng: RngManifest,
}

/// Advances the state vector by one tick. Returns whether the first
/// coordinate moved (always true except in the lazy mixture).
fn advance(
    mode: &Mode,
    envs: &[Environment],
    state: &mut [i64],
    rng: &mut ChaCha8Rng,
) -> Result<bool> {
    match *mode {
        Mode::SharedEnv { d } => {
            for slot in state.iter_mut().take(d) {
                let u = rng.random::<f64>();
                let w = envs[0].value_at_unbounded(*slot)?;
                *slot += if u < w { 1 } else { -1 };
            }
            Ok(true)
        }
        Mode::IidEnvs { d } => {
            for i in 0..d {
                let u = rng.random::<f64>();
                let w = envs[i].value_at_unbounded(state[i])?;
                state[i] += if u < w { 1 } else { -1 };
            }
            Ok(true)
        }
        Mode::RwreTimesSrw => {
            let u = rng.random::<f64>();
            let w = envs[0].value_at_unbounded(state[0])?;
            state[0] += if u < w { 1 } else { -1 };
            let v = rng.random::<f64>();
            state[1] += if v < 0.5 { 1 } else { -1 };
            Ok(true)
        }
        Mode::LazyMixture { delta_mix } => {
            let u = rng.random::<f64>();
            let w = envs[0].value_at_unbounded(state[0])?;
            if u < delta_mix * w {
                state[0] += 1;
                Ok(true)
            } else if u < delta_mix {
                state[0] -= 1;
                Ok(true)
            } else if u < delta_mix + (1.0 - delta_mix) / 2.0 {
                state[1] += 1;
                Ok(false)
            } else {
                state[1] -= 1;
                Ok(false)
            }
        }
    }
}

fn replica_rng(seed: u64, replica: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(replica);
    rng
}

fn checkpoint_times(horizon: u64) -> Vec<u64> {
    let mut out = Vec::new();
    let mut t = 10u64;
    while t < horizon {
        out.push(t);
        t = t.saturating_mul(10);
    }
    out.push(horizon);
    out
}

/// Splits `0..replicas` into fixed chunks, maps each chunk to a partial
/// result in parallel, and folds the partials in chunk order.
fn chunked<T, F>(replicas: u64, map_chunk: F) -> Result<Vec<T>>
where
    T: Send,
    F: Fn(u64, u64) -> Result<T> + Sync,
{
    let chunk_count = replicas.div_ceil(CHUNK);
    (0..chunk_count)
        .into_par_iter()
        .map(|c| {
            let lo = c * CHUNK;
            let hi = ((c + 1) * CHUNK).min(replicas);
            map_chunk(lo, hi)
        })
        .collect()
}

/// Runs the simulation with environments derived from `(law, seed)`.
pub fn simulate(spec: &SimSpec) -> Result<SimResult> {
    let envs = spec.default_envs()?;
    simulate_with_envs(spec, &envs)
}

/// Runs the simulation on explicitly supplied environments.
///
/// Counts visits of the full state vector to the origin at even times, with
/// cumulative counts recorded at decade checkpoints and the horizon.
pub fn simulate_with_envs(spec: &SimSpec, envs: &[Environment]) -> Result<SimResult> {
    spec.validate()?;
    spec.check_envs(envs)?;
    let checkpoints = checkpoint_times(spec.horizon);
    let dim = spec.mode.dimension();

    struct Partial {
        sum: Vec<u64>,
        sum_sq: Vec<u64>,
    }
    let partials = chunked(spec.replicas, |lo, hi| {
        let mut sum = vec![0u64; checkpoints.len()];
        let mut sum_sq = vec![0u64; checkpoints.len()];
        for replica in lo..hi {
            let mut rng = replica_rng(spec.seed, replica);
            let mut state = vec![0i64; dim];
            let mut returns = 0u64;
            let mut next = 0usize;
            for t in 1..=spec.horizon {
                advance(&spec.mode, envs, &mut state, &mut rng)?;
                if t % 2 == 0 && state.iter().all(|&c| c == 0) {
                    returns += 1;
                }
                if checkpoints[next] == t {
                    sum[next] += returns;
                    sum_sq[next] += returns * returns;
                    next += 1;
                }
            }
        }
        Ok(Partial { sum, sum_sq })
    })?;

    let mut total = vec![0u64; checkpoints.len()];
    let mut total_sq = vec![0u64; checkpoints.len()];
    for p in partials {
        for (j, (s, q)) in p.sum.iter().zip(&p.sum_sq).enumerate() {
            total[j] += s;
            total_sq[j] += q;
        }
    }

    let n = spec.replicas as f64;
    let mean_returns: Vec<f64> = total.iter().map(|&s| s as f64 / n).collect();
    let std_errors: Vec<f64> = total
        .iter()
        .zip(&total_sq)
        .map(|(&s, &q)| {
            if spec.replicas < 2 {
                return f64::NAN;
            }
            let mean = s as f64 / n;
            let var = (q as f64 - n * mean * mean) / (n - 1.0);
            (var.max(0.0) / n).sqrt()
        })
        .collect();

    Ok(SimResult {
        checkpoints,
        total_returns: total,
        mean_returns,
        std_errors,
        replicas: spec.replicas,
        rng: RngManifest {
            algorithm: "chacha8".into(),
            seed: spec.seed,
            streams: spec.replicas,
        },
    })
}

/// Monte Carlo versus exact joint return probabilities at every even time.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct CompareReport {
    /// Observation times `2, 4, ..., horizon`.
    pub times: Vec<u64>,
    /// Exact joint probability (product of exact marginals) per time.
    pub exact_joint: Vec<f64>,
    /// Estimated joint probability per time.
    pub estimate_joint: Vec<f64>,
    /// Binomial z-score of each joint estimate.
    pub z_joint: Vec<f64>,
    /// Exact marginal per coordinate per time.
    pub exact_marginals: Vec<Vec<f64>>,
    /// Estimated marginal per coordinate per time.
    pub estimate_marginals: Vec<Vec<f64>>,
    /// Binomial z-score of each marginal estimate.
    pub z_marginals: Vec<Vec<f64>>,
    /// Number of replicas behind the estimates.
    pub replicas: u64,
    /// Largest `|z|` over the joint entries.
    pub max_abs_z_joint: f64,
}

fn binomial_z(estimate: f64, p: f64, replicas: u64) -> f64 {
    let se = (p * (1.0 - p) / replicas as f64).sqrt();
    if se == 0.0 {
        if estimate == p {
            0.0
        } else {
            f64::INFINITY
        }
    } else {
        (estimate - p) / se
    }
}

/// Validates the simulation against exact kernels on a short horizon.
///
/// The environment windows must be wide enough that no probability mass can
/// reach their edges within the horizon, so the exact marginals carry zero
/// truncation slack; the joint law is then the product of the marginals
/// because the walkers are independent given the environment(s).
///
/// The lazy mixture has no such product form and is rejected.
pub fn compare_exact(spec: &SimSpec, envs: &[Environment]) -> Result<CompareReport> {
    spec.validate()?;
    spec.check_envs(envs)?;
    if matches!(spec.mode, Mode::LazyMixture { .. }) {
        return Err(Error::InvalidArgument(
            "the lazy mixture's joint law is not a product of marginals".into(),
        ));
    }
    if spec.horizon > 40 {
        return Err(Error::InvalidArgument(format!(
            "exact comparison is limited to horizon <= 40, got {}",
            spec.horizon
        )));
    }
    let reach = spec.horizon as i64 + 1;
    for env in envs {
        if env.lo() > -reach || env.hi() < reach {
            return Err(Error::Precondition(format!(
                "window [{}, {}] leaves truncation slack at horizon {}",
                env.lo(),
                env.hi(),
                spec.horizon
            )));
        }
    }

    let n_max = (spec.horizon / 2) as usize;
    let dim = spec.mode.dimension();
    // Exact marginal per coordinate; the walkers never see the window edge,
    // so the series brackets coincide.
    let mut exact_marginals: Vec<Vec<f64>> = Vec::with_capacity(dim);
    match spec.mode {
        Mode::SharedEnv { d } => {
            let series = return_series(&envs[0], n_max, 0.0)?;
            debug_assert_eq!(series.slack(n_max), 0.0);
            for _ in 0..d {
                exact_marginals.push(series.p_lower.clone());
            }
        }
        Mode::IidEnvs { d } => {
            for i in 0..d {
                let series = return_series(&envs[i], n_max, 0.0)?;
                exact_marginals.push(series.p_lower.clone());
            }
        }
        Mode::RwreTimesSrw => {
            let series = return_series(&envs[0], n_max, 0.0)?;
            exact_marginals.push(series.p_lower.clone());
            exact_marginals.push(srw_return_sweep(n_max as u64));
        }
        Mode::LazyMixture { .. } => unreachable!(),
    }
    let exact_joint: Vec<f64> = (0..n_max)
        .map(|idx| exact_marginals.iter().map(|m| m[idx]).product())
        .collect();

    struct Partial {
        joint: Vec<u64>,
        marginal: Vec<Vec<u64>>,
    }
    let partials = chunked(spec.replicas, |lo, hi| {
        let mut joint = vec![0u64; n_max];
        let mut marginal = vec![vec![0u64; n_max]; dim];
        for replica in lo..hi {
            let mut rng = replica_rng(spec.seed, replica);
            let mut state = vec![0i64; dim];
            for t in 1..=spec.horizon {
                advance(&spec.mode, envs, &mut state, &mut rng)?;
                if t % 2 == 0 {
                    let idx = (t / 2 - 1) as usize;
                    if state.iter().all(|&c| c == 0) {
                        joint[idx] += 1;
                    }
                    for (i, &c) in state.iter().enumerate() {
                        if c == 0 {
                            marginal[i][idx] += 1;
                        }
                    }
                }
            }
        }
        Ok(Partial { joint, marginal })
    })?;

    let mut joint_counts = vec![0u64; n_max];
    let mut marginal_counts = vec![vec![0u64; n_max]; dim];
    for p in partials {
        for (j, c) in p.joint.iter().enumerate() {
            joint_counts[j] += c;
        }
        for (i, row) in p.marginal.iter().enumerate() {
            for (j, c) in row.iter().enumerate() {
                marginal_counts[i][j] += c;
            }
        }
    }

    let n = spec.replicas as f64;
    let estimate_joint: Vec<f64> = joint_counts.iter().map(|&c| c as f64 / n).collect();
    let estimate_marginals: Vec<Vec<f64>> = marginal_counts
        .iter()
        .map(|row| row.iter().map(|&c| c as f64 / n).collect())
        .collect();
    let z_joint: Vec<f64> = estimate_joint
        .iter()
        .zip(&exact_joint)
        .map(|(&e, &p)| binomial_z(e, p, spec.replicas))
        .collect();
    let z_marginals: Vec<Vec<f64>> = estimate_marginals
        .iter()
        .zip(&exact_marginals)
        .map(|(est, exa)| {
            est.iter()
                .zip(exa)
                .map(|(&e, &p)| binomial_z(e, p, spec.replicas))
                .collect()
        })
        .collect();
    let max_abs_z_joint = z_joint.iter().fold(0.0f64, |m, z| m.max(z.abs()));

    Ok(CompareReport {
        times: (1..=n_max as u64).map(|k| 2 * k).collect(),
        exact_joint,
        estimate_joint,
        z_joint,
        exact_marginals,
        estimate_marginals,
        z_marginals,
        replicas: spec.replicas,
        max_abs_z_joint,
    })
}

/// Statistics of the first-coordinate jump times of a lazy-mixture run.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct TauReport {
    /// Mixture weight of the first coordinate.
    pub delta_mix: f64,
    /// Total number of recorded jump-time increments.
    pub jumps: u64,
    /// Empirical mean increment; the geometric law predicts `1/delta_mix`.
    pub mean_increment: f64,
    /// Standard error of the mean.
    pub se_mean: f64,
    /// Empirical increment variance; predicted `(1-delta)/delta^2`.
    pub var_increment: f64,
    /// Smallest increment seen (at least 1 by construction).
    pub min_increment: u64,
    /// Jump index whose arrival-time parity is tracked.
    pub parity_index: u64,
    /// Replicas that reached the parity index.
    pub parity_samples: u64,
    /// Fraction of those whose arrival time was even.
    pub even_frequency: Option<f64>,
    /// Arrival times of jump number `parity_index`, one per qualifying
    /// replica, in replica order.
    pub parity_arrivals: Vec<u64>,
}

/// Runs a lazy-mixture simulation and reports the jump-time increments of
/// the first coordinate.
///
/// Increments of the jump times are independent geometric variables with
/// parameter `delta_mix`; the report carries their empirical mean and
/// variance, and the parity statistics of the arrival time of jump number
/// [`TAU_PARITY_INDEX`]. Errors if fewer than `min_jumps` increments were
/// recorded.
pub fn tau_increment_stats(spec: &SimSpec, min_jumps: u64) -> Result<TauReport> {
    spec.validate()?;
    let delta_mix = match spec.mode {
        Mode::LazyMixture { delta_mix } => delta_mix,
        _ => {
            return Err(Error::InvalidArgument(
                "jump-time statistics need the lazy mixture".into(),
            ))
        }
    };
    let envs = spec.default_envs()?;

    struct Partial {
        count: u64,
        sum: u64,
        sum_sq: u64,
        min: u64,
        arrivals: Vec<u64>,
    }
    let partials = chunked(spec.replicas, |lo, hi| {
        let mut part = Partial {
            count: 0,
            sum: 0,
            sum_sq: 0,
            min: u64::MAX,
            arrivals: Vec::new(),
        };
        for replica in lo..hi {
            let mut rng = replica_rng(spec.seed, replica);
            let mut state = vec![0i64; 2];
            let mut last_jump = 0u64;
            let mut jumps = 0u64;
            for t in 1..=spec.horizon {
                let moved = advance(&spec.mode, &envs, &mut state, &mut rng)?;
                if moved {
                    let inc = t - last_jump;
                    part.count += 1;
                    part.sum += inc;
                    part.sum_sq += inc * inc;
                    part.min = part.min.min(inc);
                    last_jump = t;
                    jumps += 1;
                    if jumps == TAU_PARITY_INDEX {
                        part.arrivals.push(t);
                    }
                }
            }
        }
        Ok(part)
    })?;

    let mut count = 0u64;
    let mut sum = 0u64;
    let mut sum_sq = 0u64;
    let mut min = u64::MAX;
    let mut arrivals = Vec::new();
    for p in partials {
        count += p.count;
        sum += p.sum;
        sum_sq += p.sum_sq;
        min = min.min(p.min);
        arrivals.extend(p.arrivals);
    }
    if count < min_jumps {
        return Err(Error::Precondition(format!(
            "recorded {count} jumps, need at least {min_jumps}"
        )));
    }

    let n = count as f64;
    let mean = sum as f64 / n;
    let var = if count > 1 {
        (sum_sq as f64 - n * mean * mean) / (n - 1.0)
    } else {
        f64::NAN
    };
    let even = arrivals.iter().filter(|&&t| t % 2 == 0).count() as f64;
    let parity_samples = arrivals.len() as u64;
    Ok(TauReport {
        delta_mix,
        jumps: count,
        mean_increment: mean,
        se_mean: (var / n).sqrt(),
        var_increment: var,
        min_increment: min,
        parity_index: TAU_PARITY_INDEX,
        parity_samples,
        even_frequency: if parity_samples > 0 {
            Some(even / parity_samples as f64)
        } else {
            None
        },
        parity_arrivals: arrivals,
    })
}
