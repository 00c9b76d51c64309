//! The two explicit counterexample families and their constructive
//! Chebyshev approximants.
//!
//! Both families live in an `N`-dimensional ambient space with coordinate
//! 1 playing a special role:
//!
//! * `L1Alpha(α)` in `ℓ1^N`: `x_i = e_i + 2(α+1)(-1)^i e_1`,
//! * `SupNorm` in `ℓ∞^N`: `x_i = e_i + (-1)^i e_1`,
//! * `LpVariant(p)`: the `SupNorm` vectors measured in `ℓp^N`,
//!
//! for `i = 2..=N`, with duals `e_i'`. Position `k` of the system holds the
//! vector labelled `k + 2`; parities are always taken from the labels.
//!
//! The finite truncation of the sup-norm family is an honest biorthogonal
//! system on its span; its failure to be a Markushevich basis only appears
//! in infinite dimensions and is not asserted anywhere here.

use std::collections::BTreeMap;

use rand::seq::IndexedRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::checks::{KnownBound, Knowns};
use crate::constants::{
    estimate_democracy_family_with, evaluate, generate_corpus, Constant, CorpusSpec, Direction, EstimatorConfig, Lab,
};
use crate::error::{Error, Result};
use crate::greedy::{enumerate_weak_sets, is_weak_thresholding, BranchSelector, ThresholdingSet};
use crate::spaces::{CoeffVec, IndexSet, MinimalSystem, NormSpec};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "family")]
pub enum Family {
    L1Alpha { alpha: f64 },
    SupNorm,
    LpVariant { p: f64 },
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ExampleSpec {
    #[serde(flatten)]
    pub family: Family,
    /// Ambient dimension; the system has `N - 1` vectors.
    #[serde(rename = "N")]
    pub n: usize,
}

impl ExampleSpec {
    pub fn l1_alpha(alpha: f64, n: usize) -> Self {
        ExampleSpec {
            family: Family::L1Alpha { alpha },
            n,
        }
    }

    pub fn sup_norm(n: usize) -> Self {
        ExampleSpec {
            family: Family::SupNorm,
            n,
        }
    }

    pub fn lp_variant(p: f64, n: usize) -> Self {
        ExampleSpec {
            family: Family::LpVariant { p },
            n,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.n < 4 {
            return Err(Error::InvalidSpec(format!("N = {} must be at least 4", self.n)));
        }
        match self.family {
            Family::L1Alpha { alpha } if !(alpha > 0.0 && alpha.is_finite()) => {
                Err(Error::InvalidSpec(format!("alpha = {alpha} must be positive")))
            }
            Family::LpVariant { p } if !(p > 1.0 && p.is_finite()) => {
                Err(Error::InvalidSpec(format!("p = {p} must lie in (1, ∞)")))
            }
            _ => Ok(()),
        }
    }

    /// The constant `c` in the constructive bound `c / τ`.
    pub fn bound_factor(&self) -> f64 {
        match self.family {
            Family::L1Alpha { .. } => 4.0,
            Family::SupNorm => 3.0,
            Family::LpVariant { p } => 3.0 * 2f64.powf(1.0 / p),
        }
    }

    /// Coefficient of `e_1` in `x_i` for label `i`.
    fn head(&self, label: usize) -> f64 {
        let sign = if label.is_multiple_of(2) { 1.0 } else { -1.0 };
        match self.family {
            Family::L1Alpha { alpha } => 2.0 * (alpha + 1.0) * sign,
            _ => sign,
        }
    }

    fn norm(&self) -> NormSpec {
        match self.family {
            Family::L1Alpha { .. } => NormSpec::l1(),
            Family::SupNorm => NormSpec::Linf,
            Family::LpVariant { p } => NormSpec::lp(p),
        }
    }
}

/// A built example: the spec together with its system.
#[derive(Debug, Clone, PartialEq)]
pub struct ExampleSystem {
    pub spec: ExampleSpec,
    pub system: MinimalSystem,
}

pub fn build_example(spec: ExampleSpec) -> Result<ExampleSystem> {
    spec.validate()?;
    let n = spec.n;
    let basis = (2..=n)
        .map(|label| {
            let mut v = vec![0.0; n];
            v[0] = spec.head(label);
            v[label - 1] = 1.0;
            v
        })
        .collect();
    let duals = (2..=n)
        .map(|label| {
            let mut v = vec![0.0; n];
            v[label - 1] = 1.0;
            v
        })
        .collect();
    let system = MinimalSystem::new(spec.norm(), basis, duals)?.with_labels((2..=n).collect())?;
    Ok(ExampleSystem { spec, system })
}

/// Output of [`ExampleSystem::transfer_approximant`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TransferApproximant {
    /// Coefficients on `W`, in ascending position order.
    pub b: Vec<f64>,
    /// `‖x - Σ_W b_j x_j‖`.
    pub lhs: f64,
    /// `‖x - Σ_A a_i x_i‖`.
    pub rhs: f64,
    /// Guaranteed ratio `c / τ`.
    pub factor: f64,
    /// `factor · rhs - lhs`; nonnegative whenever the bound holds.
    pub slack: f64,
}

impl ExampleSystem {
    /// Transfers an arbitrary `m`-term approximant `Σ_A a_i x_i` to the
    /// weak thresholding set `W`: `b_j = a_j` on `W ∩ A`, and on `W \ A`,
    /// `b_j = (-1)^{j+π(j)} a_{π(j)}` with `π : W \ A -> A \ W` the
    /// order-preserving bijection. The signs make the `e_1` coordinates of
    /// the two residuals agree.
    pub fn transfer_approximant(
        &self,
        x: &CoeffVec,
        w: &ThresholdingSet,
        a_set: &IndexSet,
        a: &[f64],
    ) -> Result<TransferApproximant> {
        let sys = &self.system;
        if x.len() != sys.size() {
            return Err(Error::DimensionMismatch {
                expected: sys.size(),
                found: x.len(),
            });
        }
        let wi = w.indices();
        if !is_weak_thresholding(x, wi, w.tau()) {
            return Err(Error::NotCertified(format!(
                "{:?} is not a weak thresholding set for this x at tau = {}",
                wi.as_slice(),
                w.tau()
            )));
        }
        a_set.check_range(sys.size())?;
        if a_set.len() != wi.len() {
            return Err(Error::CardinalityMismatch(format!(
                "|A| = {} but |W| = {}",
                a_set.len(),
                wi.len()
            )));
        }
        if a.len() != a_set.len() {
            return Err(Error::DimensionMismatch {
                expected: a_set.len(),
                found: a.len(),
            });
        }
        let a_of: BTreeMap<usize, f64> = a_set.iter().zip(a.iter().copied()).collect();
        let w_minus = wi.difference(a_set);
        let a_minus = a_set.difference(wi);
        let pi: BTreeMap<usize, usize> = w_minus.iter().zip(a_minus.iter()).collect();
        let b: Vec<f64> = wi
            .iter()
            .map(|j| match a_of.get(&j) {
                Some(aj) => *aj,
                None => {
                    let k = pi[&j];
                    let parity = (sys.label(j) + sys.label(k)) % 2;
                    let sign = if parity == 0 { 1.0 } else { -1.0 };
                    sign * a_of[&k]
                }
            })
            .collect();
        let mut rw = x.clone();
        for (j, bj) in wi.iter().zip(&b) {
            rw[j] -= bj;
        }
        let mut ra = x.clone();
        for (i, ai) in a_set.iter().zip(a) {
            ra[i] -= ai;
        }
        let lhs = sys.norm_of(&rw)?;
        let rhs = sys.norm_of(&ra)?;
        let factor = self.spec.bound_factor() / w.tau();
        Ok(TransferApproximant {
            b,
            lhs,
            rhs,
            factor,
            slack: factor * rhs - lhs,
        })
    }
}

/// Constructive upper bounds that hold for the family, keyed by constant
/// name. `taus` selects which weakness parameters get entries.
pub fn known_bounds(spec: &ExampleSpec, taus: &[f64]) -> Result<Knowns> {
    spec.validate()?;
    let mut k = Knowns::new();
    let mut put = |name: String, value: f64, note: &str| {
        k.insert(
            name,
            KnownBound {
                value,
                direction: Direction::ConstructiveUpperBound,
                note: note.to_string(),
            },
        );
    };
    let c = spec.bound_factor();
    match spec.family {
        Family::L1Alpha { alpha } => {
            let eq = 2.0 * alpha + 3.0;
            let equiv = "from the l1 equivalence sum|a_i| <= ||sum a_i x_i|| <= (2α+3) sum|a_i|";
            for name in ["K_1q", "K_2q", "K_d", "K_sd", "K_hd", "K_a", "K_g"] {
                put(name.to_string(), eq, equiv);
            }
            put("K_s".into(), c, "constructive approximant with tau = 1");
            for &t in taus {
                put(
                    Constant::Kws(t).to_string(),
                    c / t,
                    "constructive approximant on every weak set",
                );
                put(
                    Constant::Kbsg(t).to_string(),
                    c / t,
                    "branch prefixes are weak thresholding sets",
                );
                put(
                    Constant::Kwag(t).to_string(),
                    eq,
                    "the greedy set is a weak thresholding set, so K_wag <= K_a",
                );
            }
        }
        Family::SupNorm | Family::LpVariant { .. } => {
            put("K_s".into(), c, "constructive approximant with tau = 1");
            for &t in taus {
                put(
                    Constant::Kws(t).to_string(),
                    c / t,
                    "constructive approximant on every weak set",
                );
                put(
                    Constant::Kbsg(t).to_string(),
                    c / t,
                    "branch prefixes are weak thresholding sets",
                );
            }
        }
    }
    Ok(k)
}

/// Statistics of a randomized sweep of [`ExampleSystem::transfer_approximant`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepStats {
    pub tau: f64,
    pub trials: usize,
    pub min_slack: f64,
    /// Largest observed `lhs / rhs` (only over `rhs > 0`).
    pub max_ratio: f64,
    pub factor: f64,
    pub violations: usize,
}

/// Random `(x, m, W, A, a)` with `W` drawn uniformly from the certified
/// weak thresholding sets. Coefficients are small integers (to create
/// ties) or Gaussians; `a` is either the restriction of `x`, a perturbed
/// restriction, or random.
pub fn sweep_transfer_approximant(ex: &ExampleSystem, tau: f64, trials: usize, seed: u64) -> Result<SweepStats> {
    let n = ex.system.size();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut stats = SweepStats {
        tau,
        trials,
        min_slack: f64::INFINITY,
        max_ratio: 0.0,
        factor: ex.spec.bound_factor() / tau,
        violations: 0,
    };
    for _ in 0..trials {
        let x = CoeffVec(
            (0..n)
                .map(|_| {
                    if rng.random_bool(0.5) {
                        rng.random_range(-3i32..=3) as f64
                    } else {
                        rng.sample::<f64, _>(rand_distr::StandardNormal) * 2.0
                    }
                })
                .collect(),
        );
        let m = rng.random_range(1..=n.min(4));
        let sets = enumerate_weak_sets(&x, m, tau)?;
        let w = sets.choose(&mut rng).expect("the greedy set is always weak").clone();
        let a_set = IndexSet::new(rand::seq::index::sample(&mut rng, n, m));
        let a: Vec<f64> = match rng.random_range(0..3) {
            0 => a_set.iter().map(|i| x[i]).collect(),
            1 => a_set.iter().map(|i| x[i] + rng.random_range(-0.5..0.5)).collect(),
            _ => a_set.iter().map(|_| rng.random_range(-4.0..4.0)).collect(),
        };
        let r = ex.transfer_approximant(&x, &w, &a_set, &a)?;
        stats.min_slack = stats.min_slack.min(r.slack);
        if r.rhs > 0.0 {
            stats.max_ratio = stats.max_ratio.max(r.lhs / r.rhs);
        }
        if r.slack < -1e-9 {
            stats.violations += 1;
        }
    }
    Ok(stats)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ClaimStatus {
    Pass,
    Fail,
    /// Reported for information; not decidable from lower bounds.
    Info,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Claim {
    pub id: String,
    pub description: String,
    pub value: f64,
    pub bound: Option<f64>,
    pub status: ClaimStatus,
    pub detail: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClaimsReport {
    pub spec: ExampleSpec,
    pub claims: Vec<Claim>,
}

impl ClaimsReport {
    pub fn passed(&self) -> bool {
        self.claims.iter().all(|c| c.status != ClaimStatus::Fail)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ClaimOptions {
    pub taus: Vec<f64>,
    pub trials: usize,
    pub seed: u64,
    pub corpus: CorpusSpec,
    pub estimator: EstimatorConfig,
}

impl Default for ClaimOptions {
    fn default() -> Self {
        ClaimOptions {
            taus: vec![1.0, 0.5],
            trials: 1000,
            seed: 0x5eed,
            corpus: CorpusSpec {
                gaussian: 40,
                rademacher: 20,
                blocks: 2,
                signs: 2,
                patterns: 20,
                spikes: 10,
                ..CorpusSpec::default()
            },
            estimator: EstimatorConfig::default(),
        }
    }
}

fn claim(id: &str, description: String, value: f64, bound: Option<f64>, ok: Option<bool>, detail: String) -> Claim {
    Claim {
        id: id.to_string(),
        description,
        value,
        bound,
        status: match ok {
            Some(true) => ClaimStatus::Pass,
            Some(false) => ClaimStatus::Fail,
            None => ClaimStatus::Info,
        },
        detail,
    }
}

fn indicator(n: usize, positions: impl IntoIterator<Item = usize>) -> CoeffVec {
    let mut v = vec![0.0; n];
    for i in positions {
        v[i] = 1.0;
    }
    CoeffVec(v)
}

/// Checks the finite-dimensional content of the family's claims: exact
/// witness values, lower bounds from the estimators, and constructive
/// upper bounds from approximant sweeps.
pub fn verify_example_claims(spec: &ExampleSpec, opts: &ClaimOptions) -> Result<ClaimsReport> {
    let ex = build_example(*spec)?;
    let sys = &ex.system;
    let n = sys.size();
    let corpus = generate_corpus(sys, &opts.corpus, opts.seed)?;
    let lab = Lab::new(sys, &corpus)?.with_config(opts.estimator.clone());
    let greedy = BranchSelector::greedy();
    let mut claims = Vec::new();

    for &tau in &opts.taus {
        let s = sweep_transfer_approximant(&ex, tau, opts.trials, opts.seed ^ tau.to_bits())?;
        claims.push(claim(
            "constructive-bound",
            format!(
                "‖x - Σ_W b x‖ <= {:.6}·‖x - Σ_A a x‖ over {} trials (tau = {tau})",
                s.factor, s.trials
            ),
            s.min_slack,
            Some(0.0),
            Some(s.violations == 0),
            format!("min slack {:.3e}, max ratio {:.6}", s.min_slack, s.max_ratio),
        ));
    }
    let c = spec.bound_factor();
    let ks = lab.semi_greedy()?;
    claims.push(claim(
        "semi-greedy-upper",
        format!("K_s estimate <= {c}"),
        ks.value,
        Some(c),
        Some(ks.value <= c + 1e-6),
        "lower-bound estimate must not exceed the constructive bound".into(),
    ));
    for &tau in &opts.taus {
        let (ws, _) = lab.weak_constants(tau)?;
        claims.push(claim(
            "weak-semi-greedy-upper",
            format!("K_ws({tau}) estimate <= {}", c / tau),
            ws.value,
            Some(c / tau),
            Some(ws.value <= c / tau + 1e-6),
            "lower-bound estimate must not exceed the constructive bound".into(),
        ));
    }

    match spec.family {
        Family::L1Alpha { alpha } => {
            let eq = 2.0 * alpha + 3.0;
            let x2 = sys.basis_norm(0);
            claims.push(claim(
                "norm-x2",
                format!("‖x_2‖ = 2α+3 = {eq}"),
                x2,
                Some(eq),
                Some((x2 - eq).abs() <= 1e-12),
                String::new(),
            ));
            let pair = indicator(n, [0, 1]);
            let x23 = sys.norm_of(&pair)?;
            claims.push(claim(
                "norm-x2-plus-x3",
                "‖x_2 + x_3‖ = 2".into(),
                x23,
                Some(2.0),
                Some((x23 - 2.0).abs() <= 1e-12),
                String::new(),
            ));
            let (k1q, k2q) = lab.quasi_greedy()?;
            let at_pair = evaluate(sys, Constant::K1q, &greedy, &pair, 1)?.map_or(0.0, |e| e.value);
            let half = eq / 2.0;
            claims.push(claim(
                "first-quasi-greedy-lower",
                format!("K_1q >= (2α+3)/2 = {half}, witness (x_2 + x_3, m = 1)"),
                k1q.value,
                Some(half),
                Some(k1q.value >= half - 1e-9 && (at_pair - half).abs() <= 1e-12),
                format!("ratio at the witness {at_pair}"),
            ));
            claims.push(claim(
                "second-quasi-greedy-lower",
                format!("K_2q > α = {alpha}"),
                k2q.value,
                Some(alpha),
                Some(k2q.value > alpha),
                String::new(),
            ));
            let (kd, _, _) = estimate_democracy_family_with(sys, n.min(4), &opts.estimator)?;
            claims.push(claim(
                "democracy-lower",
                format!("K_d >= (2α+3)/2 = {half} > α+1"),
                kd.value,
                Some(half),
                Some(kd.value >= half - 1e-9 && kd.value > alpha + 1.0),
                String::new(),
            ));
            let ka = lab.almost_greedy()?;
            claims.push(claim(
                "almost-greedy-lower",
                format!("K_a > α = {alpha}"),
                ka.value,
                Some(alpha),
                Some(ka.value > alpha),
                String::new(),
            ));
            for &tau in &opts.taus {
                if tau < 1.0 {
                    let (_, wag) = lab.weak_constants(tau)?;
                    let target = tau * (alpha + 1.0).sqrt();
                    claims.push(claim(
                        "weak-almost-greedy-info",
                        format!("true K_wag({tau}) > τ√(α+1) = {target:.6}"),
                        wag.value,
                        Some(target),
                        None,
                        "the claim concerns the exact constant; only a lower bound is computed".into(),
                    ));
                }
            }
        }
        Family::SupNorm | Family::LpVariant { .. } => {
            // A = labels {2, 4, ..., 4k}, B = labels {2, ..., 2k+1}
            let k = spec.n / 4;
            let a = indicator(n, (1..=2 * k).map(|t| 2 * t - 2));
            let b = indicator(n, 0..2 * k);
            let ratio = sys.norm_of(&a)? / sys.norm_of(&b)?;
            let (kd, _, _) = estimate_democracy_family_with(sys, n.min(2 * k), &opts.estimator)?;
            if spec.family == Family::SupNorm {
                let target = 2.0 * k as f64;
                claims.push(claim(
                    "democracy-witness",
                    format!("‖Σ_(i<=2n) x_2i‖ / ‖Σ_(i=2..2n+1) x_i‖ = 2n = {target}"),
                    ratio,
                    Some(target),
                    Some((ratio - target).abs() <= 1e-12),
                    String::new(),
                ));
                claims.push(claim(
                    "democracy-lower",
                    format!("K_d >= 2n = {target}"),
                    kd.value,
                    Some(target),
                    Some(kd.value >= target - 1e-9),
                    String::new(),
                ));
                // x = 1_A + (1+ε) 1_C with C disjoint from A turns the
                // democracy witness into a greedy-constant witness
                let eps = 1e-9;
                let a_set = IndexSet::new((1..=2 * k).map(|t| 2 * t - 2));
                let c_pos: Vec<usize> = (0..n).filter(|i| !a_set.contains(*i)).take(a_set.len()).collect();
                if c_pos.len() == a_set.len() {
                    let mut x = a.clone();
                    for i in c_pos {
                        x[i] = 1.0 + eps;
                    }
                    let kg = evaluate(sys, Constant::Kg, &greedy, &x, a_set.len())?.map_or(0.0, |e| e.value);
                    claims.push(claim(
                        "greedy-constant-transfer",
                        "K_g >= K_d via the transferred democracy witness".into(),
                        kg,
                        Some(kd.value),
                        Some(kg >= kd.value - 1e-6),
                        String::new(),
                    ));
                }
            } else {
                claims.push(claim(
                    "democracy-witness",
                    "democracy ratio of the even/consecutive blocks".into(),
                    ratio,
                    None,
                    None,
                    format!("K_d estimate {}", kd.value),
                ));
            }
        }
    }
    Ok(ClaimsReport { spec: *spec, claims })
}
