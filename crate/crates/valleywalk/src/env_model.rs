//! Site laws and sampled environment windows.
//!
//! A site law is a finitely supported distribution on `(0, 1)` for the
//! right-step probability `omega_x`.  The walks of interest need three
//! standing assumptions on the law of `log rho` with `rho = (1 - omega) /
//! omega`: mean zero (recurrence), uniform ellipticity (support bounded away
//! from 0 and 1), and positive variance (a genuinely random environment).
//! [`validate_law`] reports all three; none of them is required to merely
//! sample, so degenerate reference laws (constant `omega = 1/2`) remain
//! expressible for kernel tests.
//!
//! Environments are finite windows `lo ..= hi` around the origin.  Site
//! values are a pure function of `(seed, site)`, so extending a window in
//! either direction reproduces the overlap bit for bit.

use serde::{Deserialize, Serialize};

use crate::error::Error;
use crate::rng;
use crate::Result;

/// Weights must sum to one within this absolute tolerance.
pub const WEIGHT_SUM_TOL: f64 = 1e-12;

/// Two atom values `a`, `b` are treated as a symmetric pair when
/// `|a + b - 1| <= SYMMETRY_PAIR_TOL`.
///
/// Pairing matters for exactness: a symmetric law has mean-zero `log rho` by
/// construction, and representing the pair's log-ratios as `t` and `-t`
/// (same magnitude, opposite sign) makes the weighted mean cancel exactly in
/// floating point instead of leaving an ulp-sized residue.
pub const SYMMETRY_PAIR_TOL: f64 = 1e-9;

/// Default window budget: windows larger than this many sites are refused.
pub const DEFAULT_MAX_SITES: usize = 4_000_000;

const SCHEMA_VERSION: u32 = 1;

/// `ln((1 - v) / v)` evaluated directly.  Weakly decreasing in `v`, which is
/// what makes `log_rho` magnitudes comparable against the ellipticity bound
/// without slack.
#[inline]
fn log_rho_raw(v: f64) -> f64 {
    ((1.0 - v) / v).ln()
}

/// One support point of a site law: `omega = value` with probability `weight`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Atom {
    /// Right-step probability, strictly inside `(0, 1)`.
    pub value: f64,
    /// Probability mass of this value.
    pub weight: f64,
}

/// A finitely supported law for the site variables `omega_x`.
///
/// Serialization round-trips through the atom list alone and re-validates on
/// the way back in, so a deserialized law satisfies the same invariants as a
/// constructed one.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(into = "SiteLawWire", try_from = "SiteLawWire")]
pub struct SiteLaw {
    atoms: Vec<Atom>,
    /// Canonical `log rho` per atom: symmetric pairs share one magnitude.
    log_rho: Vec<f64>,
    epsilon: f64,
}

/// Wire form of [`SiteLaw`]: `(value, weight)` pairs, the same shape the
/// environment file format uses.
#[derive(Serialize, Deserialize)]
struct SiteLawWire {
    atoms: Vec<(f64, f64)>,
}

impl From<SiteLaw> for SiteLawWire {
    fn from(law: SiteLaw) -> SiteLawWire {
        SiteLawWire {
            atoms: law.atoms.iter().map(|a| (a.value, a.weight)).collect(),
        }
    }
}

impl TryFrom<SiteLawWire> for SiteLaw {
    type Error = Error;

    fn try_from(wire: SiteLawWire) -> Result<SiteLaw> {
        SiteLaw::from_pairs(&wire.atoms)
    }
}

impl SiteLaw {
    /// Builds a law from `(value, weight)` atoms.
    ///
    /// Structural requirements: at least one atom, all values strictly in
    /// `(0, 1)`, distinct values, positive weights summing to one within
    /// [`WEIGHT_SUM_TOL`].
    pub fn new(atoms: Vec<Atom>) -> Result<Self> {
        if atoms.is_empty() {
            return Err(Error::InvalidLaw("no atoms".into()));
        }
        for a in &atoms {
            if !(a.value > 0.0 && a.value < 1.0) || !a.value.is_finite() {
                return Err(Error::InvalidLaw(format!(
                    "atom value {} outside (0, 1)",
                    a.value
                )));
            }
            if !(a.weight > 0.0) || !a.weight.is_finite() {
                return Err(Error::InvalidLaw(format!(
                    "atom weight {} not positive",
                    a.weight
                )));
            }
        }
        for i in 0..atoms.len() {
            for j in i + 1..atoms.len() {
                if atoms[i].value == atoms[j].value {
                    return Err(Error::InvalidLaw(format!(
                        "duplicate atom value {}",
                        atoms[i].value
                    )));
                }
            }
        }
        let total: f64 = atoms.iter().map(|a| a.weight).sum();
        if (total - 1.0).abs() > WEIGHT_SUM_TOL {
            return Err(Error::InvalidLaw(format!(
                "weights sum to {total}, not 1"
            )));
        }

        let log_rho = canonical_log_rho(&atoms);
        let epsilon = atoms
            .iter()
            .map(|a| a.value.min(1.0 - a.value))
            .fold(f64::INFINITY, f64::min);
        Ok(SiteLaw {
            atoms,
            log_rho,
            epsilon,
        })
    }

    /// Convenience constructor from `(value, weight)` pairs.
    pub fn from_pairs(pairs: &[(f64, f64)]) -> Result<Self> {
        Self::new(
            pairs
                .iter()
                .map(|&(value, weight)| Atom { value, weight })
                .collect(),
        )
    }

    /// The reference two-point law `{0.3, 0.7}` with equal weights.
    ///
    /// Symmetric support makes the mean of `log rho` vanish by construction,
    /// and `epsilon = 0.3` keeps the ellipticity constant mild.
    pub fn default_law() -> Self {
        Self::from_pairs(&[(0.3, 0.5), (0.7, 0.5)]).expect("reference law is valid")
    }

    /// Degenerate one-point law `omega = value` surely.  Fails the
    /// nondegeneracy check but samples fine; used for kernel fixtures.
    pub fn constant(value: f64) -> Result<Self> {
        Self::from_pairs(&[(value, 1.0)])
    }

    /// The atoms in construction order.
    pub fn atoms(&self) -> &[Atom] {
        &self.atoms
    }

    /// Ellipticity constant: distance of the support from `{0, 1}`.
    pub fn epsilon(&self) -> f64 {
        self.epsilon
    }

    /// Canonical `log rho` of atom `i` (paired atoms carry exactly opposite
    /// values).
    pub fn atom_log_rho(&self, i: usize) -> f64 {
        self.log_rho[i]
    }

    /// Largest possible `|log rho|` under this law: `log(1 - eps) - log(eps)`.
    pub fn increment_bound(&self) -> f64 {
        log_rho_raw(self.epsilon)
    }

    /// Picks an atom index from a uniform draw in `[0, 1)`.
    pub fn pick(&self, u: f64) -> usize {
        let total: f64 = self.atoms.iter().map(|a| a.weight).sum();
        let target = u * total;
        let mut cum = 0.0;
        for (i, a) in self.atoms.iter().enumerate() {
            cum += a.weight;
            if target < cum {
                return i;
            }
        }
        self.atoms.len() - 1
    }

    /// Index of the atom whose value is bitwise `v`, if any.
    pub fn atom_index_of(&self, v: f64) -> Option<usize> {
        self.atoms.iter().position(|a| a.value == v)
    }

    /// Canonical text form, stable across runs: `value:weight` pairs joined
    /// with commas, in construction order.
    pub fn canonical_string(&self) -> String {
        self.atoms
            .iter()
            .map(|a| format!("{}:{}", a.value, a.weight))
            .collect::<Vec<_>>()
            .join(",")
    }
}

/// Assigns each atom its `log rho`, giving symmetric pairs exactly opposite
/// values so that equal-weight pairs cancel exactly in the mean.
fn canonical_log_rho(atoms: &[Atom]) -> Vec<f64> {
    let n = atoms.len();
    let mut out = vec![f64::NAN; n];
    let mut done = vec![false; n];
    for i in 0..n {
        if done[i] {
            continue;
        }
        let v = atoms[i].value;
        if v > 0.5 {
            continue; // handled from the low side, or solo below
        }
        let partner = (0..n)
            .filter(|&j| j != i && !done[j])
            .find(|&j| (atoms[j].value + v - 1.0).abs() <= SYMMETRY_PAIR_TOL);
        let lr = log_rho_raw(v);
        out[i] = lr;
        done[i] = true;
        if let Some(j) = partner {
            out[j] = -lr;
            done[j] = true;
        }
    }
    // Atoms above 1/2 with no low-side partner.
    for i in 0..n {
        if !done[i] {
            let v = atoms[i].value;
            out[i] = -log_rho_raw(1.0 - v);
            done[i] = true;
        }
    }
    out
}

/// Outcome of checking a law against the three standing assumptions.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct LawReport {
    /// Report schema version.
    pub schema_version: u32,
    /// Ellipticity constant of the support.
    pub epsilon: f64,
    /// Weighted mean of `log rho`.
    pub mean_log_rho: f64,
    /// Weighted variance of `log rho`.
    pub var_log_rho: f64,
    /// `|mean_log_rho| <= tol` (recurrence).
    pub mean_zero: bool,
    /// `epsilon > 0` (uniform ellipticity; structural validation already
    /// guarantees this for constructible laws).
    pub elliptic: bool,
    /// `var_log_rho > 0` (genuinely random environment).
    pub nondegenerate: bool,
    /// All three checks passed.
    pub passes: bool,
    /// Tolerance used for the mean-zero check.
    pub tol: f64,
}

/// Checks the standing assumptions and reports the `log rho` moments.
///
/// Symmetric equal-weight pairs contribute exactly zero to the mean, so a
/// symmetric two-point law reports `mean_log_rho == 0.0` with no tolerance.
pub fn validate_law(law: &SiteLaw, tol: f64) -> LawReport {
    let mut mean = 0.0;
    let mut m2 = 0.0;
    let atoms = law.atoms();
    // Pair-aware accumulation: a pair's two weighted terms are added to each
    // other first, so opposite log-ratios with equal weights cancel exactly.
    let mut seen = vec![false; atoms.len()];
    for i in 0..atoms.len() {
        if seen[i] {
            continue;
        }
        seen[i] = true;
        let lr_i = law.atom_log_rho(i);
        let mut term = atoms[i].weight * lr_i;
        for j in i + 1..atoms.len() {
            if !seen[j] && law.atom_log_rho(j) == -lr_i && lr_i != 0.0 {
                term += atoms[j].weight * law.atom_log_rho(j);
                m2 += atoms[j].weight * law.atom_log_rho(j) * law.atom_log_rho(j);
                seen[j] = true;
                break;
            }
        }
        mean += term;
        m2 += atoms[i].weight * lr_i * lr_i;
    }
    let var = m2 - mean * mean;
    let mean_zero = mean.abs() <= tol;
    let elliptic = law.epsilon() > 0.0;
    let nondegenerate = var > 0.0;
    LawReport {
        schema_version: SCHEMA_VERSION,
        epsilon: law.epsilon(),
        mean_log_rho: mean,
        var_log_rho: var,
        mean_zero,
        elliptic,
        nondegenerate,
        passes: mean_zero && elliptic && nondegenerate,
        tol,
    }
}

/// How an environment's site values arise from site indices.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Generator {
    /// Independent draws from the law, indexed by the counter generator.
    Iid,
    /// Every site takes the same value.
    Constant {
        /// The shared site value.
        value: f64,
    },
    /// Deterministic double-slope valley: `depth` descending sites on each
    /// side of the origin, ascending everywhere beyond.
    Staircase {
        /// Number of descending sites on each side of the origin.
        depth: i64,
        /// Site value on descending stretches (potential decreases).
        descend: f64,
        /// Site value on ascending stretches (potential increases).
        ascend: f64,
    },
    /// Values supplied verbatim (a loaded file without a generator tag);
    /// cannot be extended.
    Explicit,
}

/// A sampled window `lo ..= hi` of site values.
#[derive(Debug, Clone, PartialEq)]
pub struct Environment {
    law: SiteLaw,
    seed: u64,
    generator: Generator,
    lo: i64,
    hi: i64,
    omega: Vec<f64>,
    atom_index: Vec<usize>,
    max_sites: usize,
}

impl Environment {
    fn generate_value(law: &SiteLaw, generator: &Generator, seed: u64, x: i64) -> Result<f64> {
        match generator {
            Generator::Iid => {
                let u = rng::uniform_at(seed, x);
                Ok(law.atoms()[law.pick(u)].value)
            }
            Generator::Constant { value } => Ok(*value),
            Generator::Staircase {
                depth,
                descend,
                ascend,
            } => {
                let d = *depth;
                let v = if x >= 1 {
                    if x <= d {
                        *descend
                    } else {
                        *ascend
                    }
                } else if x > -d {
                    *ascend
                } else {
                    *descend
                };
                Ok(v)
            }
            Generator::Explicit => Err(Error::WindowExhausted(format!(
                "site {x} not stored and environment has no generator"
            ))),
        }
    }

    fn build(
        law: SiteLaw,
        seed: u64,
        generator: Generator,
        lo: i64,
        hi: i64,
        max_sites: usize,
    ) -> Result<Self> {
        if lo > 0 || hi < 0 {
            return Err(Error::InvalidArgument(format!(
                "window [{lo}, {hi}] must contain the origin"
            )));
        }
        let len = (hi - lo + 1) as usize;
        if len > max_sites {
            return Err(Error::Budget(format!(
                "window of {len} sites exceeds the budget of {max_sites}"
            )));
        }
        let mut omega = Vec::with_capacity(len);
        let mut atom_index = Vec::with_capacity(len);
        for x in lo..=hi {
            let v = Self::generate_value(&law, &generator, seed, x)?;
            let idx = law.atom_index_of(v).ok_or_else(|| {
                Error::InvalidArgument(format!("site value {v} is not in the law's support"))
            })?;
            omega.push(v);
            atom_index.push(idx);
        }
        Ok(Environment {
            law,
            seed,
            generator,
            lo,
            hi,
            omega,
            atom_index,
            max_sites,
        })
    }

    /// Samples a window of independent site values.
    pub fn sample(law: SiteLaw, seed: u64, lo: i64, hi: i64) -> Result<Self> {
        Self::build(law, seed, Generator::Iid, lo, hi, DEFAULT_MAX_SITES)
    }

    /// Like [`Environment::sample`] with an explicit site budget.
    pub fn sample_with_budget(
        law: SiteLaw,
        seed: u64,
        lo: i64,
        hi: i64,
        max_sites: usize,
    ) -> Result<Self> {
        Self::build(law, seed, Generator::Iid, lo, hi, max_sites)
    }

    /// Constant environment `omega_x = value` on the window.
    pub fn constant(value: f64, lo: i64, hi: i64) -> Result<Self> {
        let law = SiteLaw::constant(value)?;
        Self::build(law, 0, Generator::Constant { value }, lo, hi, DEFAULT_MAX_SITES)
    }

    /// Environment with explicitly supplied values on the window; cannot be
    /// extended later.  Every value must lie in the law's support.
    pub fn from_values(law: SiteLaw, lo: i64, values: Vec<f64>) -> Result<Self> {
        if values.is_empty() {
            return Err(Error::InvalidArgument("empty value list".into()));
        }
        let hi = lo + values.len() as i64 - 1;
        if lo > 0 || hi < 0 {
            return Err(Error::InvalidArgument(format!(
                "window [{lo}, {hi}] must contain the origin"
            )));
        }
        let mut atom_index = Vec::with_capacity(values.len());
        for &v in &values {
            let idx = law.atom_index_of(v).ok_or_else(|| {
                Error::InvalidArgument(format!("site value {v} is not in the law's support"))
            })?;
            atom_index.push(idx);
        }
        Ok(Environment {
            law,
            seed: 0,
            generator: Generator::Explicit,
            lo,
            hi,
            omega: values,
            atom_index,
            max_sites: DEFAULT_MAX_SITES,
        })
    }

    /// Extends the window to `new_lo ..= new_hi`; the overlap is reproduced
    /// bit for bit because site values depend only on `(seed, site)`.
    pub fn extended(&self, new_lo: i64, new_hi: i64) -> Result<Self> {
        if new_lo > self.lo || new_hi < self.hi {
            return Err(Error::InvalidArgument(format!(
                "extension [{new_lo}, {new_hi}] does not contain [{}, {}]",
                self.lo, self.hi
            )));
        }
        let len = (new_hi - new_lo + 1) as usize;
        if len > self.max_sites {
            return Err(Error::Budget(format!(
                "window of {len} sites exceeds the budget of {}",
                self.max_sites
            )));
        }
        let mut omega = Vec::with_capacity(len);
        let mut atom_index = Vec::with_capacity(len);
        for x in new_lo..self.lo {
            let v = Self::generate_value(&self.law, &self.generator, self.seed, x)?;
            let idx = self
                .law
                .atom_index_of(v)
                .ok_or_else(|| Error::InvalidArgument(format!("value {v} not in support")))?;
            omega.push(v);
            atom_index.push(idx);
        }
        omega.extend_from_slice(&self.omega);
        atom_index.extend_from_slice(&self.atom_index);
        for x in self.hi + 1..=new_hi {
            let v = Self::generate_value(&self.law, &self.generator, self.seed, x)?;
            let idx = self
                .law
                .atom_index_of(v)
                .ok_or_else(|| Error::InvalidArgument(format!("value {v} not in support")))?;
            omega.push(v);
            atom_index.push(idx);
        }
        Ok(Environment {
            law: self.law.clone(),
            seed: self.seed,
            generator: self.generator.clone(),
            lo: new_lo,
            hi: new_hi,
            omega,
            atom_index,
            max_sites: self.max_sites,
        })
    }

    /// Overrides the site budget used by later extensions.
    pub fn set_max_sites(&mut self, max_sites: usize) {
        self.max_sites = max_sites;
    }

    /// Left edge of the window.
    pub fn lo(&self) -> i64 {
        self.lo
    }

    /// Right edge of the window.
    pub fn hi(&self) -> i64 {
        self.hi
    }

    /// Number of sites in the window.
    pub fn len(&self) -> usize {
        self.omega.len()
    }

    /// Windows always contain the origin, so they are never empty.
    pub fn is_empty(&self) -> bool {
        false
    }

    /// The law the sites were drawn from.
    pub fn law(&self) -> &SiteLaw {
        &self.law
    }

    /// Seed the window was sampled with.
    pub fn seed(&self) -> u64 {
        self.seed
    }

    /// How site values arise from indices.
    pub fn generator(&self) -> &Generator {
        &self.generator
    }

    /// True when `x` lies inside the sampled window.
    pub fn contains(&self, x: i64) -> bool {
        x >= self.lo && x <= self.hi
    }

    /// Right-step probability at site `x`.
    ///
    /// Panics if `x` is outside the window; use [`Environment::contains`]
    /// first when the index is not known to be valid.
    pub fn omega(&self, x: i64) -> f64 {
        assert!(self.contains(x), "site {x} outside window [{}, {}]", self.lo, self.hi);
        self.omega[(x - self.lo) as usize]
    }

    /// `log rho_x` in the law's canonical form, so symmetric-pair sites carry
    /// exactly opposite increments.
    pub fn log_rho(&self, x: i64) -> f64 {
        assert!(self.contains(x), "site {x} outside window [{}, {}]", self.lo, self.hi);
        self.law.atom_log_rho(self.atom_index[(x - self.lo) as usize])
    }

    /// Site value via the generator, ignoring the stored window.  Pure in
    /// `(seed, x)`; used by walkers that roam outside the sampled range.
    pub fn value_at_unbounded(&self, x: i64) -> Result<f64> {
        if self.contains(x) {
            return Ok(self.omega(x));
        }
        Self::generate_value(&self.law, &self.generator, self.seed, x)
    }

    /// All site values, left to right.
    pub fn omega_slice(&self) -> &[f64] {
        &self.omega
    }
}

/// Samples a window of independent site values (free-function form).
pub fn sample_environment(law: &SiteLaw, seed: u64, lo: i64, hi: i64) -> Result<Environment> {
    Environment::sample(law.clone(), seed, lo, hi)
}

/// Extends a window on both sides (free-function form).
pub fn extend_environment(env: &Environment, new_lo: i64, new_hi: i64) -> Result<Environment> {
    env.extended(new_lo, new_hi)
}

/// Deterministic valley fixture: the potential descends for
/// `depth = floor(delta * l / c)` sites on each side of the origin and
/// ascends beyond, where `c` is the step magnitude of the reference law.
///
/// By construction the excursion statistics satisfy the good-valley event
/// `Gamma(l, delta)`: the dip depth is at most `delta * l`, there is no
/// barrier between the origin and either bottom, and the potential crosses
/// level `l` after `depth + ceil(l / c)` sites, far inside `l^2` for the
/// parameter ranges of interest.  The window extends `pad` sites beyond the
/// crossing on each side so that confined mass cannot reach the edge in any
/// experiment of the intended length.
pub fn staircase_environment(l: f64, delta: f64, pad: i64) -> Result<Environment> {
    if !(l > 0.0) || !(delta > 0.0) || pad < 0 {
        return Err(Error::InvalidArgument(
            "staircase needs l > 0, delta > 0, pad >= 0".into(),
        ));
    }
    let law = SiteLaw::default_law();
    let c = law.increment_bound();
    let depth = (delta * l / c).floor() as i64;
    let crossing = depth + (l / c).ceil() as i64;
    let half = crossing + pad;
    Environment::build(
        law,
        0,
        Generator::Staircase {
            depth,
            descend: 0.7,
            ascend: 0.3,
        },
        -half,
        half,
        DEFAULT_MAX_SITES,
    )
}

#[derive(Serialize, Deserialize)]
struct LawWire {
    atoms: Vec<(f64, f64)>,
}

#[derive(Serialize, Deserialize)]
struct EnvFile {
    schema_version: u32,
    law: LawWire,
    seed: u64,
    lo: i64,
    hi: i64,
    omega: Vec<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    generator: Option<Generator>,
}

impl Environment {
    /// Serialises the window to the environment-file JSON document.
    pub fn to_json(&self) -> String {
        let wire = EnvFile {
            schema_version: SCHEMA_VERSION,
            law: LawWire {
                atoms: self.law.atoms().iter().map(|a| (a.value, a.weight)).collect(),
            },
            seed: self.seed,
            lo: self.lo,
            hi: self.hi,
            omega: self.omega.clone(),
            generator: match &self.generator {
                Generator::Explicit => None,
                g => Some(g.clone()),
            },
        };
        serde_json::to_string_pretty(&wire).expect("environment serialises")
    }

    /// Loads a window from the environment-file JSON document.
    ///
    /// A file without a `generator` tag yields an [`Generator::Explicit`]
    /// window that cannot be extended.  Stored values must match the embedded
    /// law's support bitwise; a mismatch is reported, not repaired.
    pub fn from_json(text: &str) -> Result<Self> {
        let wire: EnvFile = serde_json::from_str(text)
            .map_err(|e| Error::InvalidArgument(format!("malformed environment file: {e}")))?;
        if wire.schema_version != SCHEMA_VERSION {
            return Err(Error::InvalidArgument(format!(
                "environment file schema_version {} is not supported (expected {})",
                wire.schema_version, SCHEMA_VERSION
            )));
        }
        let law = SiteLaw::from_pairs(&wire.law.atoms)?;
        let hi = wire.lo + wire.omega.len() as i64 - 1;
        if hi != wire.hi {
            return Err(Error::InvalidArgument(format!(
                "environment file is inconsistent: lo {} plus {} values ends at {}, not hi {}",
                wire.lo,
                wire.omega.len(),
                hi,
                wire.hi
            )));
        }
        let generator = wire.generator.unwrap_or(Generator::Explicit);
        let mut atom_index = Vec::with_capacity(wire.omega.len());
        for &v in &wire.omega {
            let idx = law.atom_index_of(v).ok_or_else(|| {
                Error::InvalidArgument(format!("site value {v} is not in the law's support"))
            })?;
            atom_index.push(idx);
        }
        if wire.lo > 0 || wire.hi < 0 {
            return Err(Error::InvalidArgument(format!(
                "window [{}, {}] must contain the origin",
                wire.lo, wire.hi
            )));
        }
        Ok(Environment {
            law,
            seed: wire.seed,
            generator,
            lo: wire.lo,
            hi: wire.hi,
            omega: wire.omega,
            atom_index,
            max_sites: DEFAULT_MAX_SITES,
        })
    }
}
