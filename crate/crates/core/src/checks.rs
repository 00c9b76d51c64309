//! Consistency checks of the quantitative inequalities between constants.
//!
//! An inequality `L <= R` is tested only in the direction that can refute
//! it: the best available lower bound for `L` against the best available
//! upper bound for `R`. `Pass` therefore means "consistent with the
//! theorem", `Fail` means the numbers contradict it (a bug or a wrong
//! known), and when either side lacks the needed bound the result is
//! `NotCheckable`.

use std::collections::BTreeMap;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::approx::null_approximant_check;
use crate::constants::{Constant, ConstantEstimate, Direction};
use crate::error::Result;
use crate::spaces::{basis_constant_bounds, CoeffVec, MinimalSystem};

/// Relative tolerance used when comparing the two sides.
pub const CHECK_TOL: f64 = 1e-6;

/// A bound on a constant supplied from outside the search (a proof, a
/// closed form, a user file).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct KnownBound {
    pub value: f64,
    pub direction: Direction,
    #[serde(default)]
    pub note: String,
}

/// Known bounds keyed by constant name (`"K_a"`, `"K_ws(0.5)"`, ...).
pub type Knowns = BTreeMap<String, KnownBound>;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Status {
    Pass,
    Fail,
    NotCheckable,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct InequalityCheck {
    pub tag: String,
    pub statement: String,
    /// Lower bound used for the left-hand side.
    pub lhs: Option<f64>,
    /// Upper bound used for the right-hand side.
    pub rhs: Option<f64>,
    /// The individual numbers plugged in.
    pub inputs: BTreeMap<String, f64>,
    pub status: Status,
    pub note: String,
}

/// Lower and upper bounds collected from estimates and knowns.
struct Bounds<'a> {
    estimates: &'a [ConstantEstimate],
    knowns: &'a Knowns,
}

impl Bounds<'_> {
    fn lower(&self, name: &str) -> Option<f64> {
        let from_est = self
            .estimates
            .iter()
            .filter(|e| e.direction == Direction::LowerBound && e.name() == name)
            .map(|e| e.value);
        let from_known = self
            .knowns
            .get(name)
            .filter(|k| k.direction == Direction::LowerBound)
            .map(|k| k.value);
        from_est.chain(from_known).reduce(f64::max)
    }

    fn upper(&self, name: &str) -> Option<f64> {
        let from_est = self
            .estimates
            .iter()
            .filter(|e| e.direction == Direction::ConstructiveUpperBound && e.name() == name)
            .map(|e| e.value);
        let from_known = self
            .knowns
            .get(name)
            .filter(|k| k.direction == Direction::ConstructiveUpperBound)
            .map(|k| k.value);
        from_est.chain(from_known).reduce(f64::min)
    }

    /// Weakness parameters for which `prefix(τ)` has an upper bound.
    fn taus_with_upper(&self, make: fn(f64) -> Constant) -> Vec<f64> {
        let mut taus: Vec<f64> = self
            .estimates
            .iter()
            .filter(|e| e.direction == Direction::ConstructiveUpperBound)
            .map(|e| e.name())
            .chain(
                self.knowns
                    .iter()
                    .filter(|(_, k)| k.direction == Direction::ConstructiveUpperBound)
                    .map(|(n, _)| n.clone()),
            )
            .filter_map(|n| n.parse::<Constant>().ok())
            .filter_map(|c| c.tau().filter(|t| make(*t) == c))
            .collect();
        taus.sort_by(f64::total_cmp);
        taus.dedup();
        taus
    }
}

fn decide(
    tag: &str,
    statement: String,
    lhs: Option<f64>,
    rhs: Option<f64>,
    inputs: Vec<(&str, Option<f64>)>,
    note: &str,
) -> InequalityCheck {
    let status = match (lhs, rhs) {
        (Some(l), Some(r)) if l <= r + CHECK_TOL * r.abs().max(1.0) => Status::Pass,
        (Some(_), Some(_)) => Status::Fail,
        _ => Status::NotCheckable,
    };
    let missing: Vec<&str> = inputs.iter().filter(|(_, v)| v.is_none()).map(|(k, _)| *k).collect();
    let note = if missing.is_empty() {
        note.to_string()
    } else {
        format!("missing {}", missing.join(", "))
    };
    InequalityCheck {
        tag: tag.to_string(),
        statement,
        lhs,
        rhs,
        inputs: inputs
            .into_iter()
            .filter_map(|(k, v)| v.map(|v| (k.to_string(), v)))
            .collect(),
        status,
        note,
    }
}

/// Runs every inequality whose inputs can be assembled from `estimates`,
/// `knowns` and the system itself (norms of `x_i`, dual norm upper
/// bounds, the basis-constant upper bound).
pub fn check_inequalities(
    sys: &MinimalSystem,
    estimates: &[ConstantEstimate],
    knowns: &Knowns,
) -> Result<Vec<InequalityCheck>> {
    let b = Bounds { estimates, knowns };
    let mut out = Vec::new();

    let k2q = b.lower("K_2q");
    let kd_lo = b.lower("K_d");
    let ka_up = b.upper("K_a");
    out.push(decide(
        "T2.2",
        "K_2q <= K_a".into(),
        k2q,
        ka_up,
        vec![("K_2q lower", k2q), ("K_a upper", ka_up)],
        "",
    ));
    out.push(decide(
        "T2.2",
        "K_d <= K_a".into(),
        kd_lo,
        ka_up,
        vec![("K_d lower", kd_lo), ("K_a upper", ka_up)],
        "",
    ));
    let ka_lo = b.lower("K_a");
    let kd_up = b.upper("K_d");
    let k1q_up = b.upper("K_1q");
    let rhs = kd_up.zip(k1q_up).map(|(d, q)| 32.0 * d * (1.0 + q).powi(4));
    out.push(decide(
        "T2.2",
        "K_a <= 32 K_d (1 + K_1q)^4".into(),
        ka_lo,
        rhs,
        vec![("K_a lower", ka_lo), ("K_d upper", kd_up), ("K_1q upper", k1q_up)],
        "",
    ));

    let wag_taus = b.taus_with_upper(Constant::Kwag);
    if wag_taus.is_empty() {
        out.push(decide(
            "P2.3",
            "K_hd <= M^2 / tau^2 for a WAG(tau) constant M".into(),
            b.lower("K_hd"),
            None,
            vec![("K_wag(tau) upper", None)],
            "",
        ));
    }
    for tau in wag_taus {
        let m = b.upper(&Constant::Kwag(tau).to_string());
        let hd = b.lower("K_hd");
        out.push(decide(
            "P2.3",
            format!("K_hd <= M^2 / tau^2 (tau = {tau})"),
            hd,
            m.map(|m| m * m / (tau * tau)),
            vec![("K_hd lower", hd), ("M upper", m)],
            "",
        ));
        let q = b.lower("K_1q");
        out.push(decide(
            "P2.3",
            format!("K_1q <= (1 + M)(1 + M^2 / tau^4) (tau = {tau})"),
            q,
            m.map(|m| (1.0 + m) * (1.0 + m * m / tau.powi(4))),
            vec![("K_1q lower", q), ("M upper", m)],
            "",
        ));
    }

    let norms: Vec<f64> = (0..sys.size()).map(|i| sys.basis_norm(i)).collect();
    let sup_norm = norms.iter().copied().fold(0.0, f64::max);
    let inf_term = (0..sys.size())
        .map(|j| (1.0 + sys.dual_upper(j) * norms[j]) * norms[j])
        .fold(f64::INFINITY, f64::min);
    let kb_up = basis_constant_bounds(sys, &[])?.bracket.upper;
    let ws_taus = b.taus_with_upper(Constant::Kws);
    if ws_taus.is_empty() {
        out.push(decide(
            "L4.1",
            "sup ||x_i|| <= 2K/tau inf_j (1 + ||x_j'|| ||x_j||) ||x_j||".into(),
            Some(sup_norm),
            None,
            vec![("K_ws(tau) upper", None)],
            "",
        ));
        out.push(decide(
            "T5.5",
            "K_2q <= 5 K_b^2 K_ws + 6 K_b^3 K_ws^2 / tau^2".into(),
            k2q,
            None,
            vec![("K_ws(tau) upper", None)],
            "",
        ));
    }
    for tau in ws_taus {
        let k = b.upper(&Constant::Kws(tau).to_string());
        out.push(decide(
            "L4.1",
            format!("sup ||x_i|| <= 2K/tau inf_j (1 + ||x_j'|| ||x_j||) ||x_j|| (tau = {tau})"),
            Some(sup_norm),
            k.map(|k| 2.0 * k / tau * inf_term),
            vec![
                ("sup ||x_i||", Some(sup_norm)),
                ("K upper", k),
                ("inf term upper", Some(inf_term)),
            ],
            "dual norms enter through their ambient upper bounds",
        ));
        let rhs = k.map(|k| 5.0 * kb_up.powi(2) * k + 6.0 * kb_up.powi(3) * k * k / (tau * tau));
        out.push(decide(
            "T5.5",
            format!("K_2q <= 5 K_b^2 K_ws + 6 K_b^3 K_ws^2 / tau^2 (tau = {tau})"),
            k2q,
            rhs,
            vec![("K_2q lower", k2q), ("K_b upper", Some(kb_up)), ("K_ws upper", k)],
            "",
        ));
    }
    Ok(out)
}

/// The apex-extension inequalities: estimates on the extended system
/// against known upper bounds for the original one.
pub fn check_apex(extended: &[ConstantEstimate], original: &Knowns) -> Vec<InequalityCheck> {
    let b2 = Bounds {
        estimates: extended,
        knowns: &Knowns::new(),
    };
    let b1 = Bounds {
        estimates: &[],
        knowns: original,
    };
    let q2 = b2.lower("K_1q");
    let q1 = b1.upper("K_1q");
    let sd2 = b2.lower("K_sd");
    let sd1 = b1.upper("K_sd");
    vec![
        decide(
            "L4.6",
            "K_1q(B2) <= 2 K_1q(B1) + 1".into(),
            q2,
            q1.map(|q| 2.0 * q + 1.0),
            vec![("K_1q(B2) lower", q2), ("K_1q(B1) upper", q1)],
            "",
        ),
        decide(
            "L4.6",
            "K_sd(B2) <= 4 K_sd(B1)".into(),
            sd2,
            sd1.map(|s| 4.0 * s),
            vec![("K_sd(B2) lower", sd2), ("K_sd(B1) upper", sd1)],
            "",
        ),
    ]
}

/// Null-approximant property over a batch of instances: a vanishing
/// `σ_m` must come from a vector supported on at most `m` positions.
pub fn check_null_approximants(sys: &MinimalSystem, instances: &[(CoeffVec, usize)]) -> Result<InequalityCheck> {
    let mut failures = 0usize;
    let mut vanished = 0usize;
    let mut worst_defect = 0.0_f64;
    for (x, m) in instances {
        let c = null_approximant_check(sys, x, *m)?;
        if c.projection_defect.is_some() {
            vanished += 1;
        }
        worst_defect = worst_defect.max(c.projection_defect.unwrap_or(0.0));
        if !c.consistent {
            failures += 1;
        }
    }
    let mut inputs = BTreeMap::new();
    inputs.insert("instances".to_string(), instances.len() as f64);
    inputs.insert("vanishing".to_string(), vanished as f64);
    inputs.insert("worst projection defect".to_string(), worst_defect);
    Ok(InequalityCheck {
        tag: "L4.9".into(),
        statement: "sigma_m(x) = 0 iff |supp x| <= m, and then x = P_supp(x)".into(),
        lhs: Some(failures as f64),
        rhs: Some(0.0),
        inputs,
        status: if failures == 0 { Status::Pass } else { Status::Fail },
        note: format!("{failures} inconsistent instances"),
    })
}

/// Integer-valued vectors with a uniformly drawn support size and a
/// uniformly drawn `m`, so both sides of the equivalence get exercised.
pub fn structured_instances(n: usize, count: usize, seed: u64) -> Vec<(CoeffVec, usize)> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..count)
        .map(|_| {
            let s = rng.random_range(0..=n);
            let mut x = vec![0.0; n];
            for i in rand::seq::index::sample(&mut rng, n, s) {
                let v = f64::from(rng.random_range(1..=3));
                x[i] = if rng.random_bool(0.5) { v } else { -v };
            }
            (CoeffVec(x), rng.random_range(0..=n))
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::constants::{estimate_all, generate_corpus, CorpusSpec, EstimatorConfig};
    use crate::greedy::BranchSelector;
    use crate::spaces::NormSpec;

    fn known(value: f64) -> KnownBound {
        KnownBound {
            value,
            direction: Direction::ConstructiveUpperBound,
            note: String::new(),
        }
    }

    #[test]
    fn unit_l1_almost_greedy_bounds() {
        let sys = MinimalSystem::unit_basis(NormSpec::l1(), 4).unwrap();
        let corpus = generate_corpus(&sys, &CorpusSpec::default(), 1).unwrap();
        let est = estimate_all(
            &sys,
            &corpus,
            0.5,
            &BranchSelector::greedy(),
            &EstimatorConfig::default(),
        )
        .unwrap();
        let mut k = Knowns::new();
        k.insert("K_a".into(), known(1.0));
        let checks = check_inequalities(&sys, &est, &k).unwrap();
        let t22: Vec<_> = checks.iter().filter(|c| c.tag == "T2.2").collect();
        assert_eq!(t22[0].status, Status::Pass);
        assert_eq!(t22[1].status, Status::Pass);
        // no upper bounds for K_d, K_1q: two lower bounds are never conclusive
        assert_eq!(t22[2].status, Status::NotCheckable);
    }

    #[test]
    fn contradictions_fail() {
        let sys = MinimalSystem::unit_basis(NormSpec::l1(), 3).unwrap();
        let est = vec![ConstantEstimate {
            constant: Constant::K2q,
            value: 2.0,
            direction: Direction::LowerBound,
            witness: None,
            corpus: None,
            evaluated: 1,
            skipped: 0,
        }];
        let mut k = Knowns::new();
        k.insert("K_a".into(), known(1.5));
        let checks = check_inequalities(&sys, &est, &k).unwrap();
        assert_eq!(checks[0].status, Status::Fail);
        assert_eq!(checks[1].status, Status::NotCheckable);
    }

    #[test]
    fn parametrized_entries() {
        let sys = MinimalSystem::unit_basis(NormSpec::l2(), 3).unwrap();
        let mut k = Knowns::new();
        k.insert("K_ws(0.5)".into(), known(2.0));
        k.insert("K_wag(1)".into(), known(1.0));
        let checks = check_inequalities(&sys, &[], &k).unwrap();
        let l41: Vec<_> = checks.iter().filter(|c| c.tag == "L4.1").collect();
        assert_eq!(l41.len(), 1);
        // sup ||x_i|| = 1 <= 2·2/0.5·(1+1)·1
        assert_eq!(l41[0].status, Status::Pass);
        assert_eq!(l41[0].rhs, Some(16.0));
        assert!(checks
            .iter()
            .any(|c| c.tag == "P2.3" && c.statement.contains("tau = 1")));
    }

    #[test]
    fn null_sweep_on_unit_basis() {
        let sys = MinimalSystem::unit_basis(NormSpec::Linf, 4).unwrap();
        let inst = structured_instances(4, 60, 2);
        assert!(inst.iter().any(|(x, m)| x.support().len() <= *m));
        assert!(inst.iter().any(|(x, m)| x.support().len() > *m));
        let c = check_null_approximants(&sys, &inst).unwrap();
        assert_eq!(c.status, Status::Pass);
    }

    #[test]
    fn knowns_parse_from_json_shape() {
        let k: Knowns =
            serde_json::from_str(r#"{"K_a": {"value": 1, "direction": "upper", "note": "closed form"}}"#).unwrap();
        assert_eq!(k["K_a"].direction, Direction::ConstructiveUpperBound);
    }
}
