//! Greedy orderings, thresholding sets and branch greedy selection.

use std::fmt;
use std::sync::Arc;

use itertools::Itertools;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::spaces::{project, CoeffVec, IndexSet};

/// Upper limit on `C(N, m)` for exhaustive subset enumeration.
pub const ENUMERATION_CAP: u128 = 1_000_000;

pub fn binomial(n: usize, k: usize) -> u128 {
    if k > n {
        return 0;
    }
    let k = k.min(n - k);
    (0..k).fold(1u128, |acc, i| acc * (n - i) as u128 / (i + 1) as u128)
}

pub(crate) fn check_cap(count: u128) -> Result<()> {
    if count > ENUMERATION_CAP {
        Err(Error::EnumerationCap {
            count,
            cap: ENUMERATION_CAP,
        })
    } else {
        Ok(())
    }
}

/// Permutation sorting coefficients by decreasing modulus, ties resolved
/// toward the smaller position. Zero coefficients are ordered too.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct GreedyOrdering(Vec<usize>);

impl GreedyOrdering {
    pub fn as_slice(&self) -> &[usize] {
        &self.0
    }

    pub fn first(&self, m: usize) -> IndexSet {
        IndexSet::new(self.0[..m].iter().copied())
    }
}

pub fn greedy_ordering(c: &[f64]) -> GreedyOrdering {
    let mut perm: Vec<usize> = (0..c.len()).collect();
    // stable sort keeps ascending positions among equal moduli
    perm.sort_by(|&i, &j| c[j].abs().total_cmp(&c[i].abs()));
    GreedyOrdering(perm)
}

fn check_m(m: usize, min: usize, max: usize) -> Result<()> {
    if m < min || m > max {
        Err(Error::TermCountOutOfRange { m, min, max })
    } else {
        Ok(())
    }
}

/// `GS_m(x)`: the first `m` positions of the greedy ordering.
pub fn greedy_set(c: &[f64], m: usize) -> Result<IndexSet> {
    check_m(m, 0, c.len())?;
    Ok(greedy_ordering(c).first(m))
}

/// `G_m(x) = P_{GS_m(x)}(x)`.
pub fn greedy_sum(c: &CoeffVec, m: usize) -> Result<CoeffVec> {
    project(c, &greedy_set(c, m)?)
}

/// `x - G_m(x)`.
pub fn greedy_residual(c: &CoeffVec, m: usize) -> Result<CoeffVec> {
    let g = greedy_sum(c, m)?;
    Ok(CoeffVec(c.iter().zip(g.iter()).map(|(a, b)| a - b).collect()))
}

/// Checks `min_{i in S} |c_i| >= tau * max_{j not in S} |c_j|`.
pub fn is_weak_thresholding(c: &[f64], set: &IndexSet, tau: f64) -> bool {
    let inside = set.iter().map(|i| c[i].abs()).fold(f64::INFINITY, f64::min);
    let outside = (0..c.len())
        .filter(|j| !set.contains(*j))
        .map(|j| c[j].abs())
        .fold(0.0_f64, f64::max);
    inside >= tau * outside
}

fn check_tau(tau: f64) -> Result<()> {
    if tau > 0.0 && tau <= 1.0 {
        Ok(())
    } else {
        Err(Error::InvalidParameter(format!("tau = {tau} must lie in (0, 1]")))
    }
}

/// An `m`-element index set certified to be a weak thresholding set with
/// parameter `tau` for a particular coefficient vector.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ThresholdingSet {
    indices: IndexSet,
    tau: f64,
}

impl ThresholdingSet {
    pub fn certify(c: &[f64], indices: IndexSet, tau: f64) -> Result<Self> {
        check_tau(tau)?;
        indices.check_range(c.len())?;
        if !is_weak_thresholding(c, &indices, tau) {
            return Err(Error::NotCertified(format!(
                "{:?} fails the threshold inequality at tau = {tau}",
                indices.as_slice()
            )));
        }
        Ok(ThresholdingSet { indices, tau })
    }

    pub fn indices(&self) -> &IndexSet {
        &self.indices
    }

    pub fn m(&self) -> usize {
        self.indices.len()
    }

    pub fn tau(&self) -> f64 {
        self.tau
    }
}

/// All `m`-subsets that are weak thresholding sets for `c`, in
/// lexicographic order.
pub fn enumerate_weak_sets(c: &[f64], m: usize, tau: f64) -> Result<Vec<ThresholdingSet>> {
    check_m(m, 1, c.len())?;
    check_tau(tau)?;
    check_cap(binomial(c.len(), m))?;
    Ok(weak_sets_unchecked(c, m, tau)
        .map(|indices| ThresholdingSet { indices, tau })
        .collect())
}

pub(crate) fn weak_sets_unchecked(c: &[f64], m: usize, tau: f64) -> impl Iterator<Item = IndexSet> + '_ {
    (0..c.len())
        .combinations(m)
        .map(IndexSet::from_sorted_unchecked)
        .filter(move |s| is_weak_thresholding(c, s, tau))
}

/// `A^tau(x) = { i : |c_i| >= tau max_j |c_j| }`.
pub fn branch_active_set(c: &[f64], tau: f64) -> Result<IndexSet> {
    check_tau(tau)?;
    let max = c.iter().fold(0.0_f64, |a, x| a.max(x.abs()));
    if max == 0.0 {
        return Err(Error::ZeroVector);
    }
    Ok(active_set(c, tau, max))
}

fn active_set(c: &[f64], tau: f64, max: f64) -> IndexSet {
    IndexSet::from_sorted_unchecked((0..c.len()).filter(|&i| c[i].abs() >= tau * max).collect())
}

/// A single-step branch selection rule `G^tau`. Implementations receive a
/// nonzero coefficient vector and return one position of `A^tau(c)`.
pub trait SelectionRule: Send + Sync {
    fn name(&self) -> &str;
    fn select(&self, c: &[f64], tau: f64) -> usize;
}

/// Picks the first element of the greedy ordering.
#[derive(Debug, Clone, Copy, Default)]
pub struct GreedyRule;

impl SelectionRule for GreedyRule {
    fn name(&self) -> &str {
        "greedy"
    }

    fn select(&self, c: &[f64], _tau: f64) -> usize {
        greedy_ordering(c).as_slice()[0]
    }
}

/// Picks the largest position inside `A^tau(c)`.
#[derive(Debug, Clone, Copy, Default)]
pub struct MaxIndexRule;

impl SelectionRule for MaxIndexRule {
    fn name(&self) -> &str {
        "max-index"
    }

    fn select(&self, c: &[f64], tau: f64) -> usize {
        let max = c.iter().fold(0.0_f64, |a, x| a.max(x.abs()));
        (0..c.len())
            .rev()
            .find(|&i| c[i].abs() >= tau * max)
            .expect("nonzero vector has a nonempty active set")
    }
}

/// A branch selection rule that has passed the BG1-BG3 property suite.
#[derive(Clone)]
pub struct BranchSelector {
    rule: Arc<dyn SelectionRule>,
}

impl fmt::Debug for BranchSelector {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("BranchSelector").field("rule", &self.name()).finish()
    }
}

impl Default for BranchSelector {
    fn default() -> Self {
        BranchSelector::greedy()
    }
}

impl BranchSelector {
    pub fn greedy() -> Self {
        BranchSelector {
            rule: Arc::new(GreedyRule),
        }
    }

    pub fn max_index() -> Self {
        BranchSelector {
            rule: Arc::new(MaxIndexRule),
        }
    }

    /// Looks up a built-in selector by name.
    pub fn by_name(name: &str) -> Option<Self> {
        match name {
            "greedy" => Some(Self::greedy()),
            "max-index" => Some(Self::max_index()),
            _ => None,
        }
    }

    /// Registers a custom rule after running [`check_branch_axioms`] on it.
    pub fn register<R: SelectionRule + 'static>(rule: R) -> Result<Self> {
        check_branch_axioms(&rule, &AxiomSuite::default())?;
        Ok(BranchSelector { rule: Arc::new(rule) })
    }

    pub fn name(&self) -> &str {
        self.rule.name()
    }

    pub fn select(&self, c: &[f64], tau: f64) -> usize {
        self.rule.select(c, tau)
    }
}

/// Parameters of the randomized BG1-BG3 check.
#[derive(Debug, Clone)]
pub struct AxiomSuite {
    pub seed: u64,
    pub trials: usize,
    pub max_len: usize,
    pub taus: Vec<f64>,
}

impl Default for AxiomSuite {
    fn default() -> Self {
        AxiomSuite {
            seed: 0x5eed,
            trials: 300,
            max_len: 8,
            taus: vec![1.0, 0.7, 0.5, 0.3],
        }
    }
}

/// Draws a nonzero vector with frequent ties and zeros.
pub(crate) fn tie_heavy_vector<R: Rng>(rng: &mut R, n: usize) -> Vec<f64> {
    loop {
        let v: Vec<f64> = (0..n)
            .map(|_| match rng.random_range(0..4) {
                0 => 0.0,
                1 => f64::from(rng.random_range(-3i32..=3)),
                _ => rng.random_range(-5.0..5.0),
            })
            .collect();
        if v.iter().any(|x| *x != 0.0) {
            return v;
        }
    }
}

/// BG1: the selection lies in `A^tau(c)`. BG2: it is invariant under
/// nonzero rescaling. BG3: it depends only on `A^tau(c)` and the
/// coefficients there.
pub fn check_branch_axioms(rule: &dyn SelectionRule, suite: &AxiomSuite) -> Result<()> {
    let mut rng = ChaCha8Rng::seed_from_u64(suite.seed);
    let reject = |axiom, detail: String| Error::SelectorRejected {
        name: rule.name().to_string(),
        axiom,
        detail,
    };
    for _ in 0..suite.trials {
        let n = rng.random_range(1..=suite.max_len);
        let c = tie_heavy_vector(&mut rng, n);
        for &tau in &suite.taus {
            let active = branch_active_set(&c, tau)?;
            let pick = rule.select(&c, tau);
            if !active.contains(pick) {
                return Err(reject("BG1", format!("picked {pick} outside {active:?} for {c:?}")));
            }
            for k in -3i32..=3 {
                for sign in [1.0, -1.0] {
                    let lambda = sign * 10f64.powi(k);
                    let scaled: Vec<f64> = c.iter().map(|x| lambda * x).collect();
                    if rule.select(&scaled, tau) != pick {
                        return Err(reject("BG2", format!("rescaling {c:?} by {lambda}")));
                    }
                }
            }
            let max = c.iter().fold(0.0_f64, |a, x| a.max(x.abs()));
            let mut other = c.clone();
            for j in (0..n).filter(|j| !active.contains(*j)) {
                let u: f64 = rng.random_range(0.0..1.0);
                let s = if rng.random_bool(0.5) { 1.0 } else { -1.0 };
                other[j] = s * u * tau * max;
            }
            if other
                .iter()
                .enumerate()
                .any(|(j, x)| !active.contains(j) && x.abs() >= tau * max)
            {
                continue;
            }
            if rule.select(&other, tau) != pick {
                return Err(reject(
                    "BG3",
                    format!("{c:?} and {other:?} share the active set but differ"),
                ));
            }
        }
    }
    Ok(())
}

/// `rho^tau_x`: repeatedly applies the selector to the residual after
/// removing the coordinates chosen so far. Its length is `|supp(c)|`.
pub fn branch_ordering(c: &[f64], tau: f64, sel: &BranchSelector) -> Result<Vec<usize>> {
    check_tau(tau)?;
    if c.iter().all(|x| *x == 0.0) {
        return Err(Error::ZeroVector);
    }
    let mut resid = c.to_vec();
    let mut order = Vec::new();
    while resid.iter().any(|x| *x != 0.0) {
        let i = sel.select(&resid, tau);
        debug_assert!(resid[i] != 0.0);
        order.push(i);
        resid[i] = 0.0;
    }
    Ok(order)
}

/// `G^tau_m(x)`: projection onto the first `m` branch positions; positions
/// past the support contribute nothing and `G^tau_0 = 0`.
pub fn branch_greedy_sum(c: &CoeffVec, tau: f64, m: usize, sel: &BranchSelector) -> Result<CoeffVec> {
    check_m(m, 0, c.len())?;
    check_tau(tau)?;
    if c.is_zero() {
        return Ok(CoeffVec::zeros(c.len()));
    }
    let order = branch_ordering(c, tau, sel)?;
    let take = m.min(order.len());
    project(c, &IndexSet::new(order[..take].iter().copied()))
}

pub fn branch_residual(c: &CoeffVec, tau: f64, m: usize, sel: &BranchSelector) -> Result<CoeffVec> {
    let g = branch_greedy_sum(c, tau, m, sel)?;
    Ok(CoeffVec(c.iter().zip(g.iter()).map(|(a, b)| a - b).collect()))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn set(v: &[usize]) -> IndexSet {
        IndexSet::new(v.iter().copied())
    }

    #[test]
    fn ordering_examples() {
        assert_eq!(greedy_ordering(&[0.0, 0.0, 0.0]).as_slice(), &[0, 1, 2]);
        assert_eq!(greedy_ordering(&[3.0, -5.0, 5.0, 1.0]).as_slice(), &[1, 2, 0, 3]);
        let mut c = vec![0.0; 7];
        c[0] = 1.0;
        c[1] = 1.0;
        assert_eq!(greedy_ordering(&c).as_slice()[0], 0);
    }

    #[test]
    fn greedy_set_examples() {
        assert_eq!(greedy_set(&[4.0, 3.0, 1.0], 0).unwrap(), IndexSet::empty());
        assert_eq!(greedy_set(&[4.0, 3.0, 1.0], 2).unwrap(), set(&[0, 1]));
        assert_eq!(greedy_set(&[3.0, -5.0, 5.0, 1.0], 1).unwrap(), set(&[1]));
        assert!(matches!(
            greedy_set(&[1.0], 2),
            Err(Error::TermCountOutOfRange { m: 2, .. })
        ));
    }

    #[test]
    fn greedy_sum_examples() {
        let c = CoeffVec(vec![4.0, 3.0, 1.0]);
        assert_eq!(greedy_sum(&c, 0).unwrap(), CoeffVec::zeros(3));
        assert_eq!(greedy_sum(&c, 3).unwrap(), c);
        assert_eq!(greedy_residual(&c, 2).unwrap(), CoeffVec(vec![0.0, 0.0, 1.0]));
    }

    #[test]
    fn weak_set_examples() {
        let c = [4.0, 3.0, 1.0];
        let sets: Vec<IndexSet> = enumerate_weak_sets(&c, 2, 0.5)
            .unwrap()
            .into_iter()
            .map(|s| s.indices().clone())
            .collect();
        assert_eq!(sets, vec![set(&[0, 1])]);
        let sets: Vec<IndexSet> = enumerate_weak_sets(&c, 1, 0.25)
            .unwrap()
            .into_iter()
            .map(|s| s.indices().clone())
            .collect();
        assert_eq!(sets, vec![set(&[0]), set(&[1]), set(&[2])]);
        let d = [0.3, -2.0, 1.1, 5.0];
        let only = enumerate_weak_sets(&d, 2, 1.0).unwrap();
        assert_eq!(only.len(), 1);
        assert_eq!(only[0].indices(), &greedy_set(&d, 2).unwrap());
        assert!(enumerate_weak_sets(&c, 0, 0.5).is_err());
        assert!(enumerate_weak_sets(&c, 1, 0.0).is_err());
        assert!(enumerate_weak_sets(&c, 1, 1.5).is_err());
    }

    #[test]
    fn enumeration_cap() {
        let c = vec![1.0; 40];
        assert!(matches!(
            enumerate_weak_sets(&c, 20, 0.5),
            Err(Error::EnumerationCap { .. })
        ));
    }

    #[test]
    fn ties_are_non_strict() {
        // equal moduli: every 1-subset qualifies at tau = 1
        let c = [2.0, -2.0, 2.0];
        assert_eq!(enumerate_weak_sets(&c, 1, 1.0).unwrap().len(), 3);
    }

    #[test]
    fn certify() {
        let c = [4.0, 3.0, 1.0];
        assert!(ThresholdingSet::certify(&c, set(&[0, 2]), 0.5).is_err());
        let t = ThresholdingSet::certify(&c, set(&[0, 2]), 0.25).unwrap();
        assert_eq!(t.m(), 2);
    }

    #[test]
    fn active_set_examples() {
        let c = [4.0, 3.0, 1.0];
        assert_eq!(branch_active_set(&c, 0.5).unwrap(), set(&[0, 1]));
        assert_eq!(branch_active_set(&c, 1.0).unwrap(), set(&[0]));
        let scaled: Vec<f64> = c.iter().map(|x| -7.5 * x).collect();
        assert_eq!(branch_active_set(&scaled, 0.5).unwrap(), set(&[0, 1]));
        assert!(matches!(branch_active_set(&[0.0, 0.0], 0.5), Err(Error::ZeroVector)));
    }

    #[test]
    fn branch_ordering_examples() {
        let g = BranchSelector::greedy();
        let mx = BranchSelector::max_index();
        assert_eq!(branch_ordering(&[4.0, 3.0, 1.0], 0.5, &g).unwrap(), vec![0, 1, 2]);
        assert_eq!(branch_ordering(&[0.0, 7.0, 0.0], 0.3, &g).unwrap(), vec![1]);
        assert_eq!(branch_ordering(&[0.0, 7.0, 0.0], 1.0, &mx).unwrap(), vec![1]);
        assert_eq!(branch_ordering(&[4.0, 3.0, 1.0], 0.5, &mx).unwrap(), vec![1, 0, 2]);
        assert!(branch_ordering(&[0.0], 0.5, &g).is_err());
    }

    #[test]
    fn branch_sum_examples() {
        let c = CoeffVec(vec![4.0, 3.0, 1.0]);
        let g = BranchSelector::greedy();
        let mx = BranchSelector::max_index();
        assert_eq!(branch_greedy_sum(&c, 0.5, 0, &mx).unwrap(), CoeffVec::zeros(3));
        assert_eq!(
            branch_greedy_sum(&c, 0.5, 1, &mx).unwrap(),
            CoeffVec(vec![0.0, 3.0, 0.0])
        );
        for m in 0..=3 {
            assert_eq!(branch_greedy_sum(&c, 0.5, m, &g).unwrap(), greedy_sum(&c, m).unwrap());
        }
        let sparse = CoeffVec(vec![0.0, 2.0, 0.0]);
        assert_eq!(branch_greedy_sum(&sparse, 0.5, 3, &g).unwrap(), sparse);
        assert_eq!(
            branch_greedy_sum(&CoeffVec::zeros(3), 0.5, 2, &g).unwrap(),
            CoeffVec::zeros(3)
        );
    }

    #[test]
    fn builtin_rules_pass_axioms() {
        check_branch_axioms(&GreedyRule, &AxiomSuite::default()).unwrap();
        check_branch_axioms(&MaxIndexRule, &AxiomSuite::default()).unwrap();
    }

    struct PositiveFirst;
    impl SelectionRule for PositiveFirst {
        fn name(&self) -> &str {
            "positive-first"
        }
        fn select(&self, c: &[f64], tau: f64) -> usize {
            let active = branch_active_set(c, tau).unwrap();
            let first = active.as_slice()[0];
            let pick = active.iter().find(|&i| c[i] > 0.0).unwrap_or(first);
            pick
        }
    }

    struct GlobalArgmin;
    impl SelectionRule for GlobalArgmin {
        fn name(&self) -> &str {
            "global-argmin"
        }
        fn select(&self, c: &[f64], _tau: f64) -> usize {
            (0..c.len())
                .filter(|&i| c[i] != 0.0)
                .min_by(|&a, &b| c[a].abs().total_cmp(&c[b].abs()))
                .unwrap()
        }
    }

    struct OutsideAware;
    impl SelectionRule for OutsideAware {
        fn name(&self) -> &str {
            "outside-aware"
        }
        fn select(&self, c: &[f64], tau: f64) -> usize {
            let active = branch_active_set(c, tau).unwrap();
            let total: f64 = c.iter().map(|x| x.abs()).sum();
            let max = c.iter().fold(0.0_f64, |a, x| a.max(x.abs()));
            // depends on mass outside the active set
            if total > 2.0 * max {
                *active.as_slice().last().unwrap()
            } else {
                active.as_slice()[0]
            }
        }
    }

    #[test]
    fn registration_rejects_bad_rules() {
        let e = BranchSelector::register(PositiveFirst).unwrap_err();
        assert!(matches!(e, Error::SelectorRejected { axiom: "BG2", .. }), "{e}");
        let e = BranchSelector::register(GlobalArgmin).unwrap_err();
        assert!(matches!(e, Error::SelectorRejected { axiom: "BG1", .. }), "{e}");
        let e = BranchSelector::register(OutsideAware).unwrap_err();
        assert!(matches!(e, Error::SelectorRejected { axiom: "BG3", .. }), "{e}");
        assert_eq!(BranchSelector::register(MaxIndexRule).unwrap().name(), "max-index");
    }

    #[test]
    fn binomials() {
        assert_eq!(binomial(6, 3), 20);
        assert_eq!(binomial(40, 20), 137_846_528_820);
        assert_eq!(binomial(3, 4), 0);
    }
}
