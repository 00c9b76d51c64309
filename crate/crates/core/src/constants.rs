//! Corpus generation and certified lower bounds for the greedy-type
//! constants.
//!
//! Every constant is the supremum of some ratio over vectors (and `m`), so
//! evaluating the ratio on any concrete vector gives a lower bound. An
//! estimate is the largest ratio found on a corpus, optionally sharpened by
//! multiplicative hill-climbing, and always carries the witness that
//! produced it.

use std::cell::OnceCell;
use std::fmt;
use std::ops::RangeInclusive;
use std::str::FromStr;

use itertools::Itertools;
use rand::seq::index::sample;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::approx::{
    chebyshev_approximant, sigma_m, sigma_profile, sigma_tilde_m, sigma_tilde_profile, ZERO_ERROR_TOL,
};
use crate::error::{Error, Result};
use crate::greedy::{
    binomial, branch_ordering, branch_residual, check_cap, greedy_residual, greedy_set, greedy_sum,
    weak_sets_unchecked, BranchSelector,
};
use crate::spaces::{residual, CoeffVec, IndexSet, MinimalSystem};

/// Identifier of the pseudo-random generator recorded with every corpus.
pub const GENERATOR_ID: &str = "chacha8";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Provenance {
    RandomGaussian,
    Rademacher,
    BlockIndicator,
    ProofPattern,
    User,
}

/// Sizes of the corpus families. Zero disables a family.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct CorpusSpec {
    pub gaussian: usize,
    pub rademacher: usize,
    /// Every block indicator `1_A` with `1 <= |A| <= blocks`.
    pub blocks: usize,
    /// Every sign vector `ε·1_A` with `1 <= |A| <= signs`. The first sign
    /// is fixed to `+1`: all ratios are invariant under `x -> -x`.
    pub signs: usize,
    /// Sampled two-block vectors `Σ_A ε_i x_i + s Σ_C x_k`.
    pub patterns: usize,
    /// Sampled spike-plus-geometric-tail vectors.
    pub spikes: usize,
    /// Weakness parameters used for the two-block amplitudes.
    pub taus: Vec<f64>,
    /// Offset `δ` in `s ∈ {(1-δ)τ, (1+δ)/τ}`.
    pub delta: f64,
}

impl Default for CorpusSpec {
    fn default() -> Self {
        CorpusSpec {
            gaussian: 100,
            rademacher: 100,
            blocks: 3,
            signs: 2,
            patterns: 100,
            spikes: 50,
            taus: vec![1.0, 0.5],
            delta: 0.01,
        }
    }
}

impl CorpusSpec {
    /// A spec with every family disabled.
    pub fn none() -> Self {
        CorpusSpec {
            gaussian: 0,
            rademacher: 0,
            blocks: 0,
            signs: 0,
            patterns: 0,
            spikes: 0,
            ..CorpusSpec::default()
        }
    }

    /// Number of items the spec produces for a system of size `n`.
    pub fn item_count(&self, n: usize) -> u128 {
        let blocks: u128 = (1..=self.blocks.min(n)).map(|k| binomial(n, k)).sum();
        let signs: u128 = (1..=self.signs.min(n)).map(|k| binomial(n, k) << (k - 1)).sum();
        blocks + signs + (self.gaussian + self.rademacher + self.patterns + self.spikes) as u128
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CorpusItem {
    pub coeffs: CoeffVec,
    pub provenance: Provenance,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Corpus {
    pub seed: u64,
    pub generator: String,
    pub spec: CorpusSpec,
    pub items: Vec<CorpusItem>,
}

/// Compact description of a corpus stored alongside estimates.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CorpusDescriptor {
    pub seed: u64,
    pub generator: String,
    pub spec: CorpusSpec,
    pub items: usize,
}

impl Corpus {
    /// A corpus made of caller-supplied vectors.
    pub fn from_vectors(items: Vec<CoeffVec>) -> Self {
        Corpus {
            seed: 0,
            generator: GENERATOR_ID.to_string(),
            spec: CorpusSpec::none(),
            items: items
                .into_iter()
                .map(|coeffs| CorpusItem {
                    coeffs,
                    provenance: Provenance::User,
                })
                .collect(),
        }
    }

    /// Appends user vectors, dropping zero vectors.
    pub fn extend_user<I: IntoIterator<Item = CoeffVec>>(&mut self, items: I) {
        self.items
            .extend(items.into_iter().filter(|c| !c.is_zero()).map(|coeffs| CorpusItem {
                coeffs,
                provenance: Provenance::User,
            }));
    }

    pub fn len(&self) -> usize {
        self.items.len()
    }

    pub fn is_empty(&self) -> bool {
        self.items.is_empty()
    }

    pub fn vectors(&self) -> Vec<CoeffVec> {
        self.items.iter().map(|i| i.coeffs.clone()).collect()
    }

    pub fn descriptor(&self) -> CorpusDescriptor {
        CorpusDescriptor {
            seed: self.seed,
            generator: self.generator.clone(),
            spec: self.spec.clone(),
            items: self.items.len(),
        }
    }
}

/// The two-block vector with signs `signs` on `a` and amplitude
/// `s · max|signs|` on `c`.
pub fn proof_pattern_item(n: usize, a: &IndexSet, signs: &[f64], c: &IndexSet, s: f64) -> Result<CoeffVec> {
    a.check_range(n)?;
    c.check_range(n)?;
    if signs.len() != a.len() {
        return Err(Error::DimensionMismatch {
            expected: a.len(),
            found: signs.len(),
        });
    }
    if a.iter().any(|i| c.contains(i)) {
        return Err(Error::InvalidParameter("blocks A and C must be disjoint".into()));
    }
    let amp = signs.iter().fold(0.0_f64, |m, v| m.max(v.abs()));
    let mut v = vec![0.0; n];
    for (i, e) in a.iter().zip(signs) {
        v[i] = *e;
    }
    for k in c.iter() {
        v[k] = s * amp;
    }
    Ok(CoeffVec(v))
}

fn random_sign<R: Rng>(rng: &mut R) -> f64 {
    if rng.random_bool(0.5) {
        1.0
    } else {
        -1.0
    }
}

pub fn generate_corpus(sys: &MinimalSystem, spec: &CorpusSpec, seed: u64) -> Result<Corpus> {
    let n = sys.size();
    if spec.blocks > n || spec.signs > n {
        return Err(Error::InvalidParameter(format!(
            "block/sign cardinalities ({}, {}) exceed N = {n}",
            spec.blocks, spec.signs
        )));
    }
    if spec.item_count(n) == 0 {
        return Err(Error::EmptyCorpus);
    }
    if spec.patterns > 0 {
        if n < 2 {
            return Err(Error::InvalidParameter("two-block patterns need N >= 2".into()));
        }
        if spec.taus.is_empty() || spec.taus.iter().any(|t| !(*t > 0.0 && *t <= 1.0)) {
            return Err(Error::InvalidParameter(
                "pattern taus must be nonempty and in (0, 1]".into(),
            ));
        }
        if !(spec.delta > 0.0 && spec.delta < 1.0) {
            return Err(Error::InvalidParameter("delta must lie in (0, 1)".into()));
        }
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut items = Vec::new();
    let mut push = |coeffs: Vec<f64>, provenance| {
        items.push(CorpusItem {
            coeffs: CoeffVec(coeffs),
            provenance,
        })
    };
    for k in 1..=spec.blocks {
        for combo in (0..n).combinations(k) {
            let mut v = vec![0.0; n];
            for i in combo {
                v[i] = 1.0;
            }
            push(v, Provenance::BlockIndicator);
        }
    }
    for k in 1..=spec.signs {
        for combo in (0..n).combinations(k) {
            for mask in 0..(1u64 << (k - 1)) {
                let mut v = vec![0.0; n];
                for (t, &i) in combo.iter().enumerate() {
                    v[i] = if t > 0 && mask >> (t - 1) & 1 == 1 { -1.0 } else { 1.0 };
                }
                push(v, Provenance::BlockIndicator);
            }
        }
    }
    for t in 0..spec.patterns {
        let ka = rng.random_range(1..=3.min(n - 1));
        let kc = rng.random_range(1..=4.min(n - ka));
        let picked = sample(&mut rng, n, ka + kc).into_vec();
        let a = IndexSet::new(picked[..ka].iter().copied());
        let c = IndexSet::new(picked[ka..].iter().copied());
        let signs: Vec<f64> = (0..ka).map(|_| random_sign(&mut rng)).collect();
        let tau = spec.taus[t % spec.taus.len()];
        let s = if rng.random_bool(0.5) {
            (1.0 - spec.delta) * tau
        } else {
            (1.0 + spec.delta) / tau
        };
        push(
            proof_pattern_item(n, &a, &signs, &c, s)?.into_inner(),
            Provenance::ProofPattern,
        );
    }
    for _ in 0..spec.spikes {
        let mut order: Vec<usize> = (0..n).collect();
        rand::seq::SliceRandom::shuffle(order.as_mut_slice(), &mut rng);
        let r: f64 = rng.random_range(0.2..0.8);
        let mut v = vec![0.0; n];
        for (k, &i) in order.iter().enumerate() {
            v[i] = random_sign(&mut rng) * r.powi(k as i32);
        }
        push(v, Provenance::ProofPattern);
    }
    for _ in 0..spec.rademacher {
        let v = (0..n).map(|_| random_sign(&mut rng)).collect();
        push(v, Provenance::Rademacher);
    }
    for _ in 0..spec.gaussian {
        let v = loop {
            let v: Vec<f64> = (0..n).map(|_| rng.sample(StandardNormal)).collect();
            if v.iter().any(|x: &f64| *x != 0.0) {
                break v;
            }
        };
        push(v, Provenance::RandomGaussian);
    }
    Ok(Corpus {
        seed,
        generator: GENERATOR_ID.to_string(),
        spec: spec.clone(),
        items,
    })
}

/// The constants the lab knows how to bound. Weak and branch variants
/// carry their weakness parameter.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(into = "String", try_from = "String")]
pub enum Constant {
    K1q,
    K2q,
    Kd,
    Ksd,
    Khd,
    Ka,
    Ks,
    Kg,
    Kws(f64),
    Kwag(f64),
    Kbsg(f64),
    Kbag(f64),
}

impl Constant {
    /// The twelve constants, with `tau` for the parametrized ones.
    pub fn all(tau: f64) -> [Constant; 12] {
        use Constant::*;
        [
            K1q,
            K2q,
            Kd,
            Ksd,
            Khd,
            Ka,
            Ks,
            Kg,
            Kws(tau),
            Kwag(tau),
            Kbsg(tau),
            Kbag(tau),
        ]
    }

    pub fn tau(&self) -> Option<f64> {
        match self {
            Constant::Kws(t) | Constant::Kwag(t) | Constant::Kbsg(t) | Constant::Kbag(t) => Some(*t),
            _ => None,
        }
    }

    pub fn is_democracy(&self) -> bool {
        matches!(self, Constant::Kd | Constant::Ksd | Constant::Khd)
    }

    fn denominator(&self) -> Den {
        match self {
            Constant::K1q | Constant::K2q => Den::Norm,
            Constant::Ka | Constant::Kwag(_) | Constant::Kbag(_) => Den::SigmaTilde,
            _ => Den::Sigma,
        }
    }

    fn m_range(&self, n: usize) -> RangeInclusive<usize> {
        match self {
            Constant::Ks | Constant::Kws(_) | Constant::Kwag(_) | Constant::Kbsg(_) => 1..=n,
            _ => 0..=n,
        }
    }

    fn uses_selector(&self) -> bool {
        matches!(self, Constant::Kbsg(_) | Constant::Kbag(_))
    }
}

impl fmt::Display for Constant {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Constant::K1q => f.write_str("K_1q"),
            Constant::K2q => f.write_str("K_2q"),
            Constant::Kd => f.write_str("K_d"),
            Constant::Ksd => f.write_str("K_sd"),
            Constant::Khd => f.write_str("K_hd"),
            Constant::Ka => f.write_str("K_a"),
            Constant::Ks => f.write_str("K_s"),
            Constant::Kg => f.write_str("K_g"),
            Constant::Kws(t) => write!(f, "K_ws({t})"),
            Constant::Kwag(t) => write!(f, "K_wag({t})"),
            Constant::Kbsg(t) => write!(f, "K_bsg({t})"),
            Constant::Kbag(t) => write!(f, "K_bag({t})"),
        }
    }
}

impl FromStr for Constant {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let s = s.trim();
        let plain = match s {
            "K_1q" => Some(Constant::K1q),
            "K_2q" => Some(Constant::K2q),
            "K_d" => Some(Constant::Kd),
            "K_sd" => Some(Constant::Ksd),
            "K_hd" => Some(Constant::Khd),
            "K_a" => Some(Constant::Ka),
            "K_s" => Some(Constant::Ks),
            "K_g" => Some(Constant::Kg),
            _ => None,
        };
        if let Some(c) = plain {
            return Ok(c);
        }
        let unknown = || Error::InvalidParameter(format!("unknown constant `{s}`"));
        let (head, rest) = s.split_once('(').ok_or_else(unknown)?;
        let tau: f64 = rest
            .strip_suffix(')')
            .and_then(|t| t.trim().parse().ok())
            .ok_or_else(unknown)?;
        if !(tau > 0.0 && tau <= 1.0) {
            return Err(Error::InvalidParameter(format!("tau = {tau} must lie in (0, 1]")));
        }
        match head {
            "K_ws" => Ok(Constant::Kws(tau)),
            "K_wag" => Ok(Constant::Kwag(tau)),
            "K_bsg" => Ok(Constant::Kbsg(tau)),
            "K_bag" => Ok(Constant::Kbag(tau)),
            _ => Err(unknown()),
        }
    }
}

impl From<Constant> for String {
    fn from(c: Constant) -> String {
        c.to_string()
    }
}

impl TryFrom<String> for Constant {
    type Error = Error;

    fn try_from(s: String) -> Result<Self> {
        s.parse()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Direction {
    #[serde(alias = "lower")]
    LowerBound,
    #[serde(alias = "upper")]
    ConstructiveUpperBound,
}

/// What produced an estimate. For ratio constants `vectors = [x]` and `m`
/// is set; for the democracy family `vectors = [numerator, denominator]`
/// and `sets = [A, B]`. `scalars` holds the numerator and denominator.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Witness {
    pub vectors: Vec<CoeffVec>,
    pub m: Option<usize>,
    pub sets: Vec<IndexSet>,
    pub scalars: Vec<f64>,
    pub selector: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConstantEstimate {
    pub constant: Constant,
    pub value: f64,
    pub direction: Direction,
    pub witness: Option<Witness>,
    pub corpus: Option<CorpusDescriptor>,
    pub evaluated: usize,
    /// Ratios dropped because the denominator vanished.
    pub skipped: usize,
}

impl ConstantEstimate {
    pub fn name(&self) -> String {
        self.constant.to_string()
    }

    /// Re-evaluates the witness ratio from scratch.
    pub fn recompute(&self, sys: &MinimalSystem) -> Result<f64> {
        let w = self
            .witness
            .as_ref()
            .ok_or_else(|| Error::Unsupported(format!("{} carries no witness", self.constant)))?;
        if self.constant.is_democracy() {
            let [num, den] = w.vectors.as_slice() else {
                return Err(Error::InvalidParameter("democracy witness needs two vectors".into()));
            };
            return Ok(sys.norm_of(num)? / sys.norm_of(den)?);
        }
        let x = w
            .vectors
            .first()
            .ok_or_else(|| Error::InvalidParameter("witness has no vector".into()))?;
        let m = w.m.ok_or_else(|| Error::InvalidParameter("witness has no m".into()))?;
        let sel = match &w.selector {
            Some(name) => BranchSelector::by_name(name)
                .ok_or_else(|| Error::Unsupported(format!("selector `{name}` is not built in")))?,
            None => BranchSelector::greedy(),
        };
        evaluate(sys, self.constant, &sel, x, m)?
            .map(|e| e.value)
            .ok_or(Error::AllRatiosSkipped)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Den {
    Norm,
    Sigma,
    SigmaTilde,
}

/// One evaluated ratio.
#[derive(Debug, Clone, PartialEq)]
pub struct Evaluation {
    pub value: f64,
    pub numerator: f64,
    pub denominator: f64,
    /// The set realizing the numerator (greedy set, weak set, branch set).
    pub set: IndexSet,
}

fn numerator(
    sys: &MinimalSystem,
    constant: Constant,
    sel: &BranchSelector,
    x: &CoeffVec,
    m: usize,
) -> Result<(f64, IndexSet)> {
    Ok(match constant {
        Constant::K1q => (sys.norm_of(&greedy_sum(x, m)?)?, greedy_set(x, m)?),
        Constant::K2q | Constant::Ka | Constant::Kg => (sys.norm_of(&greedy_residual(x, m)?)?, greedy_set(x, m)?),
        Constant::Ks => {
            let gs = greedy_set(x, m)?;
            (chebyshev_approximant(sys, x, &gs)?.error, gs)
        }
        Constant::Kws(tau) | Constant::Kwag(tau) => {
            check_cap(binomial(x.len(), m))?;
            let mut best: Option<(f64, IndexSet)> = None;
            for w in weak_sets_unchecked(x, m, tau) {
                let e = if matches!(constant, Constant::Kws(_)) {
                    chebyshev_approximant(sys, x, &w)?.error
                } else {
                    sys.norm_of(&residual(x, &w)?)?
                };
                if best.as_ref().is_none_or(|b| e < b.0) {
                    let done = e == 0.0;
                    best = Some((e, w));
                    if done {
                        break;
                    }
                }
            }
            best.expect("the greedy set is a weak thresholding set")
        }
        Constant::Kbsg(tau) => {
            let order = branch_ordering(x, tau, sel)?;
            let w = IndexSet::new(order.into_iter().take(m));
            (chebyshev_approximant(sys, x, &w)?.error, w)
        }
        Constant::Kbag(tau) => {
            let order = if x.is_zero() {
                Vec::new()
            } else {
                branch_ordering(x, tau, sel)?
            };
            let w = IndexSet::new(order.into_iter().take(m));
            (sys.norm_of(&branch_residual(x, tau, m, sel)?)?, w)
        }
        Constant::Kd | Constant::Ksd | Constant::Khd => {
            return Err(Error::Unsupported(format!("{constant} is not a per-vector ratio")))
        }
    })
}

fn denominator(sys: &MinimalSystem, den: Den, x: &CoeffVec, m: usize) -> Result<f64> {
    match den {
        Den::Norm => sys.norm_of(x),
        Den::Sigma => Ok(sigma_m(sys, x, m)?.value),
        Den::SigmaTilde => Ok(sigma_tilde_m(sys, x, m)?.value),
    }
}

/// The defining ratio of `constant` at `(x, m)`; `None` when the
/// denominator vanishes (at most [`ZERO_ERROR_TOL`]).
pub fn evaluate(
    sys: &MinimalSystem,
    constant: Constant,
    sel: &BranchSelector,
    x: &CoeffVec,
    m: usize,
) -> Result<Option<Evaluation>> {
    let d = denominator(sys, constant.denominator(), x, m)?;
    finish(sys, constant, sel, x, m, d)
}

fn finish(
    sys: &MinimalSystem,
    constant: Constant,
    sel: &BranchSelector,
    x: &CoeffVec,
    m: usize,
    d: f64,
) -> Result<Option<Evaluation>> {
    if d <= ZERO_ERROR_TOL {
        return Ok(None);
    }
    let (num, set) = numerator(sys, constant, sel, x, m)?;
    Ok(Some(Evaluation {
        value: num / d,
        numerator: num,
        denominator: d,
        set,
    }))
}

#[derive(Debug, Clone, PartialEq)]
pub struct EstimatorConfig {
    /// Hill-climb the best witness after the corpus scan.
    pub refine: bool,
    pub refine_rounds: usize,
    /// Relative gain below which a perturbation is not accepted.
    pub refine_min_gain: f64,
    /// Exhaustive sign patterns up to this cardinality, sampled above.
    pub sd_exhaustive_max_card: usize,
    pub sd_samples: usize,
    /// Largest per-set number of signed amplitude patterns enumerated
    /// exhaustively for hyperdemocracy; larger sets are sampled.
    pub hd_exhaustive_limit: usize,
    pub hd_samples: usize,
    /// Amplitudes for the dominated side (`|a_i| <= 1`).
    pub hd_grid_small: Vec<f64>,
    /// Amplitudes for the dominating side (`|b_j| >= 1`).
    pub hd_grid_large: Vec<f64>,
    pub seed: u64,
}

impl Default for EstimatorConfig {
    fn default() -> Self {
        EstimatorConfig {
            refine: true,
            refine_rounds: 200,
            refine_min_gain: 1e-9,
            sd_exhaustive_max_card: 10,
            sd_samples: 512,
            hd_exhaustive_limit: 648,
            hd_samples: 128,
            hd_grid_small: vec![1.0, 0.5, 0.25],
            hd_grid_large: vec![1.0, 2.0, 4.0],
            seed: 0x5eed,
        }
    }
}

impl EstimatorConfig {
    pub fn without_refinement() -> Self {
        EstimatorConfig {
            refine: false,
            ..EstimatorConfig::default()
        }
    }
}

/// Estimation session over one system and corpus; caches the `σ_m` and
/// `σ̃_m` profiles of every corpus item.
pub struct Lab<'a> {
    sys: &'a MinimalSystem,
    corpus: &'a Corpus,
    config: EstimatorConfig,
    sigma: Vec<OnceCell<Vec<f64>>>,
    sigma_tilde: Vec<OnceCell<Vec<f64>>>,
}

impl<'a> Lab<'a> {
    pub fn new(sys: &'a MinimalSystem, corpus: &'a Corpus) -> Result<Self> {
        if corpus.is_empty() {
            return Err(Error::EmptyCorpus);
        }
        for item in &corpus.items {
            if item.coeffs.len() != sys.size() {
                return Err(Error::DimensionMismatch {
                    expected: sys.size(),
                    found: item.coeffs.len(),
                });
            }
            if item.coeffs.is_zero() {
                return Err(Error::ZeroVector);
            }
        }
        Ok(Lab {
            sys,
            corpus,
            config: EstimatorConfig::default(),
            sigma: (0..corpus.len()).map(|_| OnceCell::new()).collect(),
            sigma_tilde: (0..corpus.len()).map(|_| OnceCell::new()).collect(),
        })
    }

    pub fn with_config(mut self, config: EstimatorConfig) -> Self {
        self.config = config;
        self
    }

    pub fn config(&self) -> &EstimatorConfig {
        &self.config
    }

    fn cached(&self, idx: usize, den: Den, m: usize) -> Result<f64> {
        let x = &self.corpus.items[idx].coeffs;
        match den {
            Den::Norm => self.sys.norm_of(x),
            Den::Sigma => cached_profile(&self.sigma[idx], || {
                Ok(sigma_profile(self.sys, x)?.into_iter().map(|e| e.value).collect())
            })
            .map(|p| p[m]),
            Den::SigmaTilde => cached_profile(&self.sigma_tilde[idx], || {
                Ok(sigma_tilde_profile(self.sys, x)?.into_iter().map(|e| e.value).collect())
            })
            .map(|p| p[m]),
        }
    }

    /// Corpus maximum of the ratio defining `constant`.
    pub fn estimate(&self, constant: Constant, sel: &BranchSelector) -> Result<ConstantEstimate> {
        if constant.is_democracy() {
            let (d, sd, hd) = estimate_democracy_family_with(self.sys, self.sys.size(), &self.config)?;
            return Ok(match constant {
                Constant::Kd => d,
                Constant::Ksd => sd,
                _ => hd,
            });
        }
        let n = self.sys.size();
        let den = constant.denominator();
        let mut best: Option<(Evaluation, usize, usize)> = None;
        let (mut evaluated, mut skipped) = (0, 0);
        for idx in 0..self.corpus.len() {
            let x = &self.corpus.items[idx].coeffs;
            for m in constant.m_range(n) {
                let d = self.cached(idx, den, m)?;
                match finish(self.sys, constant, sel, x, m, d)? {
                    None => skipped += 1,
                    Some(ev) => {
                        evaluated += 1;
                        if best.as_ref().is_none_or(|b| ev.value > b.0.value) {
                            best = Some((ev, idx, m));
                        }
                    }
                }
            }
        }
        let (ev, idx, m) = best.ok_or(Error::AllRatiosSkipped)?;
        let mut x = self.corpus.items[idx].coeffs.clone();
        let mut ev = ev;
        if self.config.refine {
            (x, ev) = self.refine(constant, sel, x, m, ev)?;
        }
        Ok(ConstantEstimate {
            constant,
            value: ev.value,
            direction: Direction::LowerBound,
            witness: Some(Witness {
                vectors: vec![x],
                m: Some(m),
                sets: vec![ev.set],
                scalars: vec![ev.numerator, ev.denominator],
                selector: constant.uses_selector().then(|| sel.name().to_string()),
            }),
            corpus: Some(self.corpus.descriptor()),
            evaluated,
            skipped,
        })
    }

    /// Coordinate-wise multiplicative hill-climbing with factors
    /// `1 ± 10^-k`, `k = 1..4`; stops after a round without improvement.
    fn refine(
        &self,
        constant: Constant,
        sel: &BranchSelector,
        mut x: CoeffVec,
        m: usize,
        mut best: Evaluation,
    ) -> Result<(CoeffVec, Evaluation)> {
        let supp = x.support();
        for _ in 0..self.config.refine_rounds {
            let mut improved = false;
            for k in 1..=4 {
                let h = 10f64.powi(-k);
                for i in supp.iter() {
                    for f in [1.0 + h, 1.0 - h] {
                        let mut y = x.clone();
                        y[i] *= f;
                        if let Some(ev) = evaluate(self.sys, constant, sel, &y, m)? {
                            if ev.value > best.value * (1.0 + self.config.refine_min_gain) {
                                best = ev;
                                x = y;
                                improved = true;
                            }
                        }
                    }
                }
            }
            if !improved {
                break;
            }
        }
        Ok((x, best))
    }

    pub fn quasi_greedy(&self) -> Result<(ConstantEstimate, ConstantEstimate)> {
        let sel = BranchSelector::greedy();
        Ok((self.estimate(Constant::K1q, &sel)?, self.estimate(Constant::K2q, &sel)?))
    }

    pub fn almost_greedy(&self) -> Result<ConstantEstimate> {
        self.estimate(Constant::Ka, &BranchSelector::greedy())
    }

    pub fn semi_greedy(&self) -> Result<ConstantEstimate> {
        self.estimate(Constant::Ks, &BranchSelector::greedy())
    }

    pub fn greedy_constant(&self) -> Result<ConstantEstimate> {
        self.estimate(Constant::Kg, &BranchSelector::greedy())
    }

    pub fn weak_constants(&self, tau: f64) -> Result<(ConstantEstimate, ConstantEstimate)> {
        check_tau(tau)?;
        let sel = BranchSelector::greedy();
        Ok((
            self.estimate(Constant::Kws(tau), &sel)?,
            self.estimate(Constant::Kwag(tau), &sel)?,
        ))
    }

    pub fn branch_constants(&self, tau: f64, sel: &BranchSelector) -> Result<(ConstantEstimate, ConstantEstimate)> {
        check_tau(tau)?;
        Ok((
            self.estimate(Constant::Kbsg(tau), sel)?,
            self.estimate(Constant::Kbag(tau), sel)?,
        ))
    }
}

fn cached_profile(cell: &OnceCell<Vec<f64>>, f: impl FnOnce() -> Result<Vec<f64>>) -> Result<&Vec<f64>> {
    if let Some(v) = cell.get() {
        return Ok(v);
    }
    let v = f()?;
    Ok(cell.get_or_init(|| v))
}

fn check_tau(tau: f64) -> Result<()> {
    if tau > 0.0 && tau <= 1.0 {
        Ok(())
    } else {
        Err(Error::InvalidParameter(format!("tau = {tau} must lie in (0, 1]")))
    }
}

pub fn estimate_quasi_greedy(sys: &MinimalSystem, corpus: &Corpus) -> Result<(ConstantEstimate, ConstantEstimate)> {
    Lab::new(sys, corpus)?.quasi_greedy()
}

pub fn estimate_almost_greedy(sys: &MinimalSystem, corpus: &Corpus) -> Result<ConstantEstimate> {
    Lab::new(sys, corpus)?.almost_greedy()
}

pub fn estimate_semi_greedy(sys: &MinimalSystem, corpus: &Corpus) -> Result<ConstantEstimate> {
    Lab::new(sys, corpus)?.semi_greedy()
}

pub fn estimate_greedy_constant(sys: &MinimalSystem, corpus: &Corpus) -> Result<ConstantEstimate> {
    Lab::new(sys, corpus)?.greedy_constant()
}

pub fn estimate_weak_constants(
    sys: &MinimalSystem,
    corpus: &Corpus,
    tau: f64,
) -> Result<(ConstantEstimate, ConstantEstimate)> {
    Lab::new(sys, corpus)?.weak_constants(tau)
}

pub fn estimate_branch_constants(
    sys: &MinimalSystem,
    corpus: &Corpus,
    tau: f64,
    sel: &BranchSelector,
) -> Result<(ConstantEstimate, ConstantEstimate)> {
    Lab::new(sys, corpus)?.branch_constants(tau, sel)
}

pub fn estimate_democracy_family(
    sys: &MinimalSystem,
    max_card: usize,
) -> Result<(ConstantEstimate, ConstantEstimate, ConstantEstimate)> {
    estimate_democracy_family_with(sys, max_card, &EstimatorConfig::default())
}

/// Extremal norm for one cardinality: the largest numerator or the
/// smallest denominator seen so far.
#[derive(Clone)]
struct Extreme {
    norm: f64,
    vector: CoeffVec,
    set: IndexSet,
}

struct Side {
    num: Vec<Option<Extreme>>,
    den: Vec<Option<Extreme>>,
}

impl Side {
    fn new(max_card: usize) -> Self {
        Side {
            num: vec![None; max_card + 1],
            den: vec![None; max_card + 1],
        }
    }

    fn offer_num(&mut self, k: usize, norm: f64, v: &[f64], set: &IndexSet) {
        if self.num[k].as_ref().is_none_or(|e| norm > e.norm) {
            self.num[k] = Some(Extreme {
                norm,
                vector: CoeffVec(v.to_vec()),
                set: set.clone(),
            });
        }
    }

    fn offer_den(&mut self, k: usize, norm: f64, v: &[f64], set: &IndexSet) {
        if self.den[k].as_ref().is_none_or(|e| norm < e.norm) {
            self.den[k] = Some(Extreme {
                norm,
                vector: CoeffVec(v.to_vec()),
                set: set.clone(),
            });
        }
    }

    fn absorb(&mut self, other: &Side) {
        for k in 1..self.num.len() {
            if let Some(e) = &other.num[k] {
                self.offer_num(k, e.norm, &e.vector, &e.set);
            }
            if let Some(e) = &other.den[k] {
                self.offer_den(k, e.norm, &e.vector, &e.set);
            }
        }
    }

    /// `max_{k <= l} num[k] / den[l]`, first maximizer in `(k, l)` order.
    fn estimate(&self, constant: Constant, evaluated: usize) -> ConstantEstimate {
        let mut best: Option<(f64, &Extreme, &Extreme)> = None;
        for k in 1..self.num.len() {
            let Some(a) = &self.num[k] else { continue };
            for l in k..self.den.len() {
                let Some(b) = &self.den[l] else { continue };
                let r = a.norm / b.norm;
                if best.as_ref().is_none_or(|x| r > x.0) {
                    best = Some((r, a, b));
                }
            }
        }
        let (value, a, b) = best.expect("every cardinality has at least one set");
        ConstantEstimate {
            constant,
            value,
            direction: Direction::LowerBound,
            witness: Some(Witness {
                vectors: vec![a.vector.clone(), b.vector.clone()],
                m: None,
                sets: vec![a.set.clone(), b.set.clone()],
                scalars: vec![a.norm, b.norm],
                selector: None,
            }),
            corpus: None,
            evaluated,
            skipped: 0,
        }
    }
}

/// Signed patterns over `k` slots drawn from `grid`; the first sign is
/// fixed to `+`. Exhaustive when the count is at most `limit`, otherwise
/// `samples` random patterns plus the all-ones pattern when `1 ∈ grid`.
fn amplitude_patterns<R: Rng>(k: usize, grid: &[f64], limit: usize, samples: usize, rng: &mut R) -> Vec<Vec<f64>> {
    let g = grid.len();
    let total = (0..k).try_fold(1usize, |acc, t| acc.checked_mul(if t == 0 { g } else { 2 * g }));
    match total {
        Some(total) if total <= limit => (0..total)
            .map(|mut code| {
                (0..k)
                    .map(|t| {
                        let amp = grid[code % g];
                        code /= g;
                        if t == 0 {
                            amp
                        } else {
                            let s = code % 2;
                            code /= 2;
                            if s == 1 {
                                -amp
                            } else {
                                amp
                            }
                        }
                    })
                    .collect()
            })
            .collect(),
        _ => {
            let mut out: Vec<Vec<f64>> = Vec::with_capacity(samples + 1);
            if grid.contains(&1.0) {
                out.push(vec![1.0; k]);
            }
            for _ in 0..samples {
                out.push(
                    (0..k)
                        .map(|t| {
                            let amp = grid[rng.random_range(0..g)];
                            if t > 0 && rng.random_bool(0.5) {
                                -amp
                            } else {
                                amp
                            }
                        })
                        .collect(),
                );
            }
            out
        }
    }
}

/// Democracy (`K_d`), superdemocracy (`K_sd`) and hyperdemocracy (`K_hd`)
/// lower bounds over every pair of sets with `|A| <= |B| <= max_card`.
/// Each search space contains the previous one, so the three values are
/// nondecreasing.
pub fn estimate_democracy_family_with(
    sys: &MinimalSystem,
    max_card: usize,
    cfg: &EstimatorConfig,
) -> Result<(ConstantEstimate, ConstantEstimate, ConstantEstimate)> {
    let n = sys.size();
    if max_card == 0 || max_card > n {
        return Err(Error::TermCountOutOfRange {
            m: max_card,
            min: 1,
            max: n,
        });
    }
    if cfg.hd_grid_small.iter().any(|a| !(*a > 0.0 && *a <= 1.0))
        || cfg.hd_grid_large.iter().any(|b| b.is_nan() || *b < 1.0)
    {
        return Err(Error::InvalidParameter("amplitude grids need 0 < a <= 1 <= b".into()));
    }
    let sd_count = |k: usize| -> usize {
        if k <= cfg.sd_exhaustive_max_card {
            1usize << (k - 1)
        } else {
            cfg.sd_samples + 1
        }
    };
    let hd_count = |k: usize, g: usize| -> usize {
        (0..k)
            .try_fold(1usize, |acc, t| acc.checked_mul(if t == 0 { g } else { 2 * g }))
            .filter(|c| *c <= cfg.hd_exhaustive_limit)
            .unwrap_or(cfg.hd_samples + 1)
    };
    let total: u128 = (1..=max_card)
        .map(|k| {
            binomial(n, k)
                * (1 + sd_count(k) + hd_count(k, cfg.hd_grid_small.len()) + hd_count(k, cfg.hd_grid_large.len()))
                    as u128
        })
        .sum();
    check_cap(total)?;

    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut d = Side::new(max_card);
    let mut sd = Side::new(max_card);
    let mut hd = Side::new(max_card);
    let (mut d_eval, mut sd_eval, mut hd_eval) = (0, 0, 0);
    let mut v = vec![0.0; n];
    for k in 1..=max_card {
        for combo in (0..n).combinations(k) {
            let set = IndexSet::new(combo.iter().copied());
            let mut eval_pattern = |pattern: &[f64]| -> f64 {
                v.iter_mut().for_each(|x| *x = 0.0);
                for (&i, a) in combo.iter().zip(pattern) {
                    v[i] = *a;
                }
                sys.norm_of(&v).expect("length checked by construction")
            };
            let ones = vec![1.0; k];
            let nrm = eval_pattern(&ones);
            let ind: Vec<f64> = {
                let mut w = vec![0.0; n];
                combo.iter().for_each(|&i| w[i] = 1.0);
                w
            };
            d.offer_num(k, nrm, &ind, &set);
            d.offer_den(k, nrm, &ind, &set);
            d_eval += 1;

            let signs = if k <= cfg.sd_exhaustive_max_card {
                amplitude_patterns(k, &[1.0], usize::MAX, 0, &mut rng)
            } else {
                amplitude_patterns(k, &[1.0], 0, cfg.sd_samples, &mut rng)
            };
            for p in &signs {
                let nrm = eval_pattern(p);
                let mut w = vec![0.0; n];
                combo.iter().zip(p).for_each(|(&i, a)| w[i] = *a);
                sd.offer_num(k, nrm, &w, &set);
                sd.offer_den(k, nrm, &w, &set);
                sd_eval += 1;
            }
            for (grid, numerator_side) in [(&cfg.hd_grid_small, true), (&cfg.hd_grid_large, false)] {
                let pats = amplitude_patterns(k, grid, cfg.hd_exhaustive_limit, cfg.hd_samples, &mut rng);
                for p in &pats {
                    let nrm = eval_pattern(p);
                    let mut w = vec![0.0; n];
                    combo.iter().zip(p).for_each(|(&i, a)| w[i] = *a);
                    if numerator_side {
                        hd.offer_num(k, nrm, &w, &set);
                    } else {
                        hd.offer_den(k, nrm, &w, &set);
                    }
                    hd_eval += 1;
                }
            }
        }
    }
    // enforce the inclusions d ⊆ sd ⊆ hd of the search spaces
    sd.absorb(&d);
    hd.absorb(&sd);
    Ok((
        d.estimate(Constant::Kd, d_eval),
        sd.estimate(Constant::Ksd, d_eval + sd_eval),
        hd.estimate(Constant::Khd, d_eval + sd_eval + hd_eval),
    ))
}

/// Every estimate the lab can produce for one weakness parameter, sharing
/// one profile cache. Democracy uses all cardinalities up to `N`.
pub fn estimate_all(
    sys: &MinimalSystem,
    corpus: &Corpus,
    tau: f64,
    sel: &BranchSelector,
    config: &EstimatorConfig,
) -> Result<Vec<ConstantEstimate>> {
    let lab = Lab::new(sys, corpus)?.with_config(config.clone());
    let (d, sd, hd) = estimate_democracy_family_with(sys, sys.size(), config)?;
    let mut out = Vec::with_capacity(12);
    for c in Constant::all(tau) {
        out.push(match c {
            Constant::Kd => d.clone(),
            Constant::Ksd => sd.clone(),
            Constant::Khd => hd.clone(),
            _ => lab.estimate(c, sel)?,
        });
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::spaces::NormSpec;

    fn unit(norm: NormSpec, n: usize) -> MinimalSystem {
        MinimalSystem::unit_basis(norm, n).unwrap()
    }

    fn l1_example(alpha: f64, n: usize) -> MinimalSystem {
        // x_i = e_i + 2(α+1)(-1)^i e_1 for labels i = 2..n
        let basis = (2..=n)
            .map(|i| {
                let mut v = vec![0.0; n];
                v[0] = 2.0 * (alpha + 1.0) * if i % 2 == 0 { 1.0 } else { -1.0 };
                v[i - 1] = 1.0;
                v
            })
            .collect();
        let duals = (2..=n)
            .map(|i| {
                let mut v = vec![0.0; n];
                v[i - 1] = 1.0;
                v
            })
            .collect();
        MinimalSystem::new(NormSpec::l1(), basis, duals).unwrap()
    }

    fn blocks(n: usize, k: usize) -> Corpus {
        let spec = CorpusSpec {
            blocks: k,
            ..CorpusSpec::none()
        };
        generate_corpus(&unit(NormSpec::l1(), n), &spec, 1).unwrap()
    }

    #[test]
    fn corpus_is_deterministic() {
        let sys = unit(NormSpec::l2(), 5);
        let spec = CorpusSpec {
            rademacher: 10,
            ..CorpusSpec::none()
        };
        let a = generate_corpus(&sys, &spec, 7).unwrap();
        let b = generate_corpus(&sys, &spec, 7).unwrap();
        assert_eq!(a, b);
        assert_eq!(a.len(), 10);
        let c = generate_corpus(&sys, &CorpusSpec::default(), 3).unwrap();
        assert!(c.items.iter().all(|i| !i.coeffs.is_zero()));
    }

    #[test]
    fn block_family_count() {
        assert_eq!(blocks(6, 3).len(), 41);
        let spec = CorpusSpec {
            signs: 2,
            ..CorpusSpec::none()
        };
        // C(4,1) + 2 C(4,2)
        assert_eq!(generate_corpus(&unit(NormSpec::l1(), 4), &spec, 0).unwrap().len(), 16);
    }

    #[test]
    fn corpus_errors() {
        let sys = unit(NormSpec::l1(), 3);
        let spec = CorpusSpec {
            blocks: 4,
            ..CorpusSpec::none()
        };
        assert!(generate_corpus(&sys, &spec, 0).is_err());
        assert_eq!(generate_corpus(&sys, &CorpusSpec::none(), 0), Err(Error::EmptyCorpus));
    }

    #[test]
    fn proof_pattern_example() {
        let v = proof_pattern_item(6, &IndexSet::new([0]), &[1.0], &IndexSet::new([2, 3]), 1.01 / 0.5).unwrap();
        assert_eq!(v.0, vec![1.0, 0.0, 2.02, 2.02, 0.0, 0.0]);
        assert!(proof_pattern_item(6, &IndexSet::new([0]), &[1.0], &IndexSet::new([0]), 1.0).is_err());
    }

    #[test]
    fn constant_names_round_trip() {
        for c in Constant::all(0.5) {
            assert_eq!(c.to_string().parse::<Constant>().unwrap(), c);
        }
        assert_eq!(Constant::Kws(1.0).to_string(), "K_ws(1)");
        assert!("K_zz".parse::<Constant>().is_err());
        assert!("K_ws(2)".parse::<Constant>().is_err());
    }

    #[test]
    fn unit_l1_constants_are_one() {
        let sys = unit(NormSpec::l1(), 4);
        let corpus = generate_corpus(&sys, &CorpusSpec::default(), 11).unwrap();
        let all = estimate_all(
            &sys,
            &corpus,
            0.5,
            &BranchSelector::greedy(),
            &EstimatorConfig::default(),
        )
        .unwrap();
        assert_eq!(all.len(), 12);
        for e in all {
            assert!((e.value - 1.0).abs() < 1e-6, "{} = {}", e.name(), e.value);
        }
    }

    #[test]
    fn l1_example_lower_bounds() {
        let sys = l1_example(1.0, 6);
        let corpus = blocks(5, 2);
        let (k1q, k2q) = estimate_quasi_greedy(&sys, &corpus).unwrap();
        assert!(k1q.value >= 2.5 - 1e-9);
        assert!(k2q.value > 1.0);
        let ev = evaluate(
            &sys,
            Constant::K1q,
            &BranchSelector::greedy(),
            &CoeffVec(vec![1.0, 1.0, 0.0, 0.0, 0.0]),
            1,
        )
        .unwrap()
        .unwrap();
        assert!((ev.value - 2.5).abs() < 1e-12);
        let (kd, ksd, khd) = estimate_democracy_family(&sys, 3).unwrap();
        assert!(kd.value >= 2.5 - 1e-9);
        assert!(kd.value <= ksd.value && ksd.value <= khd.value + 1e-9);
    }

    #[test]
    fn witnesses_reproduce_values() {
        let sys = l1_example(2.0, 5);
        let corpus = generate_corpus(
            &sys,
            &CorpusSpec {
                gaussian: 10,
                rademacher: 5,
                ..CorpusSpec::none()
            },
            4,
        )
        .unwrap();
        let all = estimate_all(
            &sys,
            &corpus,
            0.5,
            &BranchSelector::max_index(),
            &EstimatorConfig::default(),
        )
        .unwrap();
        for e in all {
            let r = e.recompute(&sys).unwrap();
            assert!((r - e.value).abs() <= 1e-8, "{}: {} vs {}", e.name(), r, e.value);
        }
    }

    #[test]
    fn branch_default_matches_tga_estimates() {
        let sys = l1_example(1.0, 5);
        let corpus = generate_corpus(
            &sys,
            &CorpusSpec {
                gaussian: 15,
                blocks: 2,
                ..CorpusSpec::none()
            },
            9,
        )
        .unwrap();
        let lab = Lab::new(&sys, &corpus).unwrap();
        let (bsg, bag) = lab.branch_constants(0.5, &BranchSelector::greedy()).unwrap();
        assert_eq!(bag.value, lab.almost_greedy().unwrap().value);
        assert_eq!(bsg.value, lab.semi_greedy().unwrap().value);
    }

    #[test]
    fn all_skipped_is_an_error() {
        let sys = unit(NormSpec::l1(), 2);
        let corpus = Corpus::from_vectors(vec![CoeffVec(vec![1.0, 0.0])]);
        // m >= 1 with a one-term vector: every σ_m vanishes
        assert_eq!(estimate_semi_greedy(&sys, &corpus), Err(Error::AllRatiosSkipped));
    }

    #[test]
    fn weak_constants_at_tau_one_match_semi_greedy_on_distinct_moduli() {
        let sys = l1_example(1.0, 5);
        let corpus = Corpus::from_vectors(vec![CoeffVec(vec![3.0, -1.5, 0.7, 2.2])]);
        let cfg = EstimatorConfig::without_refinement();
        let lab = Lab::new(&sys, &corpus).unwrap().with_config(cfg);
        let (ws, wag) = lab.weak_constants(1.0).unwrap();
        assert_eq!(ws.value, lab.semi_greedy().unwrap().value);
        assert_eq!(wag.value, lab.almost_greedy().unwrap().value);
    }
}
