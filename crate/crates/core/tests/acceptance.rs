//! Acceptance gate: one line per criterion, non-zero exit on any failure.
//!
//! Every criterion is checked against values computed independently here
//! (closed forms, a brute-force grid minimizer, direct subset enumeration)
//! rather than against the library's own output.

use std::process::ExitCode;
use std::time::{Duration, Instant};

use greedy_lab::approx::{chebyshev_with, null_approximant_check};
use greedy_lab::checks::{check_apex, check_inequalities, Knowns, Status};
use greedy_lab::constants::{
    estimate_all, estimate_democracy_family, evaluate, generate_corpus, Constant, CorpusSpec, EstimatorConfig, Lab,
};
use greedy_lab::constructions::{build_example, known_bounds, sweep_transfer_approximant, ExampleSpec};
use greedy_lab::greedy::{check_branch_axioms, enumerate_weak_sets, AxiomSuite, GreedyRule, MaxIndexRule};
use greedy_lab::spaces::extend_with_apex;
use greedy_lab::{greedy_set, Backend, BranchSelector, CoeffVec, IndexSet, MinimalSystem, NormSpec};
use itertools::Itertools;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

type Outcome = Result<String, String>;

/// Name, check and runtime limit in seconds.
type Criterion = (&'static str, fn() -> Outcome, u64);

macro_rules! ensure {
    ($cond:expr, $($fmt:tt)+) => {
        let ok: bool = $cond;
        if !ok {
            return Err(format!($($fmt)+));
        }
    };
}

fn lib<T>(r: greedy_lab::Result<T>) -> Result<T, String> {
    r.map_err(|e| e.to_string())
}

fn ones(n: usize, positions: &[usize]) -> CoeffVec {
    let mut v = vec![0.0; n];
    for &i in positions {
        v[i] = 1.0;
    }
    CoeffVec(v)
}

fn example_l1_exact() -> Outcome {
    let greedy = BranchSelector::greedy();
    let mut worst: f64 = 0.0;
    for alpha in [1.0, 2.0, 3.0] {
        let ex = lib(build_example(ExampleSpec::l1_alpha(alpha, 8)))?;
        let sys = &ex.system;
        let n = sys.size();
        let eq = 2.0 * alpha + 3.0;
        // closed forms: ‖x_2‖_1 = 1 + 2(α+1); heads of x_2, x_3 cancel
        let x2 = sys.basis_norm(0);
        let pair = ones(n, &[0, 1]);
        let x23 = lib(sys.norm_of(&pair))?;
        ensure!((x2 - eq).abs() <= 1e-12, "alpha {alpha}: ‖x_2‖ = {x2}");
        ensure!((x23 - 2.0).abs() <= 1e-12, "alpha {alpha}: ‖x_2 + x_3‖ = {x23}");
        let at = lib(evaluate(sys, Constant::K1q, &greedy, &pair, 1))?.map(|e| e.value);
        ensure!(at == Some(eq / 2.0), "alpha {alpha}: witness ratio {at:?}");
        let corpus = lib(generate_corpus(
            sys,
            &CorpusSpec {
                gaussian: 20,
                rademacher: 20,
                patterns: 0,
                spikes: 0,
                ..CorpusSpec::default()
            },
            1,
        ))?;
        let lab = lib(Lab::new(sys, &corpus))?;
        let (k1q, _) = lib(lab.quasi_greedy())?;
        ensure!(
            k1q.value >= eq / 2.0 - 1e-9,
            "alpha {alpha}: K_1q estimate {}",
            k1q.value
        );
        let (kd, _, _) = lib(estimate_democracy_family(sys, 2))?;
        ensure!(kd.value >= eq / 2.0 - 1e-9, "alpha {alpha}: K_d estimate {}", kd.value);
        ensure!(
            kd.value > alpha + 1.0,
            "alpha {alpha}: K_d estimate {} <= α+1",
            kd.value
        );
        worst = worst.max((k1q.value - eq / 2.0).abs());
    }
    Ok(format!("K_1q estimate - (2α+3)/2 at most {worst:.1e}"))
}

fn example_l1_constructive() -> Outcome {
    let mut min_slack = f64::INFINITY;
    for alpha in [1.0, 3.0] {
        let ex = lib(build_example(ExampleSpec::l1_alpha(alpha, 8)))?;
        for tau in [1.0, 0.5, 0.25] {
            let s = lib(sweep_transfer_approximant(&ex, tau, 1000, 17))?;
            ensure!((s.factor - 4.0 / tau).abs() < 1e-15, "factor {}", s.factor);
            ensure!(s.min_slack >= -1e-9, "alpha {alpha} tau {tau}: {s:?}");
            min_slack = min_slack.min(s.min_slack);
        }
        let corpus = lib(generate_corpus(&ex.system, &CorpusSpec::default(), 3))?;
        let ks = lib(lib(Lab::new(&ex.system, &corpus))?.semi_greedy())?;
        ensure!(ks.value <= 4.0 + 1e-6, "alpha {alpha}: K_s estimate {}", ks.value);
    }
    Ok(format!("6000 trials, min slack {min_slack:.3e}"))
}

fn sup_norm_example() -> Outcome {
    let ex = lib(build_example(ExampleSpec::sup_norm(9)))?;
    let sys = &ex.system;
    // position k holds label k+2: labels {2,4,6,8} and {2,3,4,5}
    let a = ones(8, &[0, 2, 4, 6]);
    let b = ones(8, &[0, 1, 2, 3]);
    let ratio = lib(sys.norm_of(&a))? / lib(sys.norm_of(&b))?;
    ensure!(ratio == 4.0, "democracy ratio {ratio}");
    let mut min_slack = f64::INFINITY;
    for tau in [1.0, 0.5, 0.25] {
        let s = lib(sweep_transfer_approximant(&ex, tau, 1000, 29))?;
        ensure!(
            s.min_slack >= -1e-9 && (s.factor - 3.0 / tau).abs() < 1e-15,
            "sup tau {tau}: {s:?}"
        );
        min_slack = min_slack.min(s.min_slack);
    }
    let lp = lib(build_example(ExampleSpec::lp_variant(2.0, 9)))?;
    for tau in [1.0, 0.5, 0.25] {
        let s = lib(sweep_transfer_approximant(&lp, tau, 200, 31))?;
        let want = 3.0 * 2f64.sqrt() / tau;
        ensure!(
            s.min_slack >= -1e-9 && (s.factor - want).abs() < 1e-12,
            "l2 tau {tau}: {s:?}"
        );
        min_slack = min_slack.min(s.min_slack);
    }
    Ok(format!("ratio {ratio}, min slack {min_slack:.3e}"))
}

fn unit_baselines() -> Outcome {
    let mut items = 0;
    for norm in [NormSpec::l1(), NormSpec::Linf] {
        let sys = lib(MinimalSystem::unit_basis(norm.clone(), 6))?;
        let spec = CorpusSpec {
            gaussian: 200,
            rademacher: 150,
            ..CorpusSpec::default()
        };
        let corpus = lib(generate_corpus(&sys, &spec, 5))?;
        ensure!(corpus.len() >= 500, "corpus has {} items", corpus.len());
        items = corpus.len();
        let est = lib(estimate_all(
            &sys,
            &corpus,
            1.0,
            &BranchSelector::greedy(),
            &EstimatorConfig::default(),
        ))?;
        ensure!(est.len() == 12, "{} estimates", est.len());
        for e in &est {
            ensure!((e.value - 1.0).abs() <= 1e-6, "{norm:?}: {} = {}", e.name(), e.value);
        }
        let mut knowns = Knowns::new();
        knowns.insert(
            "K_a".into(),
            serde_json::from_str(r#"{"value": 1.0, "direction": "upper"}"#).map_err(|e| e.to_string())?,
        );
        let checks = lib(check_inequalities(&sys, &est, &knowns))?;
        let t22: Vec<_> = checks.iter().filter(|c| c.tag == "T2.2" && c.rhs.is_some()).collect();
        ensure!(t22.len() >= 2, "only {} checkable T2.2 inequalities", t22.len());
        for c in t22 {
            ensure!(c.status == Status::Pass, "{norm:?}: {} is {:?}", c.statement, c.status);
        }
    }
    Ok(format!("24 estimates equal 1, corpus of {items} items"))
}

fn k2q_consistency() -> Outcome {
    let spec = ExampleSpec::l1_alpha(1.0, 8);
    let ex = lib(build_example(spec))?;
    let sys = &ex.system;
    let corpus = lib(generate_corpus(sys, &CorpusSpec::default(), 7))?;
    let (_, k2q) = lib(lib(Lab::new(sys, &corpus))?.quasi_greedy())?;
    let mut knowns = lib(known_bounds(&spec, &[1.0, 0.5]))?;
    // only the weak semi-greedy bound may enter the right-hand side
    knowns.retain(|name, _| name.starts_with("K_ws"));
    let kb = lib(greedy_lab::spaces::basis_constant_bounds(sys, &[]))?.bracket.upper;
    let mut lines = Vec::new();
    for tau in [1.0, 0.5] {
        let kws = 4.0 / tau;
        let want = 5.0 * kb * kb * kws + 6.0 * kb.powi(3) * kws * kws / (tau * tau);
        let checks = lib(check_inequalities(sys, std::slice::from_ref(&k2q), &knowns))?;
        let c = checks
            .iter()
            .find(|c| c.tag == "T5.5" && c.statement.contains(&format!("tau = {tau}")))
            .ok_or(format!("no T5.5 check for tau {tau}"))?;
        ensure!(c.status == Status::Pass, "tau {tau}: {c:?}");
        ensure!(
            c.rhs.is_some_and(|r| (r - want).abs() <= 1e-9 * want),
            "tau {tau}: rhs {:?} vs {want}",
            c.rhs
        );
        ensure!(k2q.value <= want, "K_2q {} above {want}", k2q.value);
        lines.push(format!("tau {tau}: {:.3} <= {:.1}", k2q.value, want));
    }
    Ok(format!("K_b upper {kb:.3}; {}", lines.join(", ")))
}

fn apex_checks() -> Outcome {
    let unit = lib(MinimalSystem::unit_basis(NormSpec::l1(), 5))?;
    let l1 = lib(build_example(ExampleSpec::l1_alpha(1.0, 8)))?;
    let mut unit_knowns = Knowns::new();
    for name in ["K_1q", "K_sd"] {
        unit_knowns.insert(
            name.into(),
            serde_json::from_str(r#"{"value": 1.0, "direction": "upper"}"#).map_err(|e| e.to_string())?,
        );
    }
    let l1_knowns = lib(known_bounds(&l1.spec, &[]))?;
    let mut out = Vec::new();
    for (name, b1, knowns) in [("unit", &unit, unit_knowns), ("l1 example", &l1.system, l1_knowns)] {
        let b2 = lib(extend_with_apex(b1))?;
        let corpus = lib(generate_corpus(&b2, &CorpusSpec::default(), 11))?;
        let (k1q, _) = lib(lib(Lab::new(&b2, &corpus))?.quasi_greedy())?;
        let (_, ksd, _) = lib(estimate_democracy_family(&b2, b2.size().min(4)))?;
        let q1 = knowns["K_1q"].value;
        let sd1 = knowns["K_sd"].value;
        ensure!(
            k1q.value <= 2.0 * q1 + 1.0 + 1e-6,
            "{name}: K_1q(B2) {} vs {q1}",
            k1q.value
        );
        ensure!(ksd.value <= 4.0 * sd1 + 1e-6, "{name}: K_sd(B2) {} vs {sd1}", ksd.value);
        for c in check_apex(&[k1q.clone(), ksd.clone()], &knowns) {
            ensure!(c.status == Status::Pass, "{name}: {c:?}");
        }
        out.push(format!("{name}: K_1q {:.3}, K_sd {:.3}", k1q.value, ksd.value));
    }
    Ok(out.join("; "))
}

fn null_approximants() -> Outcome {
    let n = 6;
    let basis: Vec<Vec<f64>> = (0..n)
        .map(|i| {
            let mut v = vec![0.0; n];
            v[i] = 1.0;
            if i + 1 < n {
                v[i + 1] = 0.5;
            }
            v
        })
        .collect();
    let mut rng = ChaCha8Rng::seed_from_u64(41);
    let mut vanishing = 0;
    for norm in [NormSpec::l1(), NormSpec::l2(), NormSpec::Linf, NormSpec::lp(3.0)] {
        let sys = lib(MinimalSystem::from_square_basis(norm.clone(), basis.clone()))?;
        for _ in 0..500 {
            let s = rng.random_range(0..=n);
            let supp = rand::seq::index::sample(&mut rng, n, s);
            let mut x = vec![0.0; n];
            for i in supp {
                let v: i32 = rng.random_range(1..=3);
                x[i] = if rng.random_bool(0.5) { v as f64 } else { -v as f64 };
            }
            let m = rng.random_range(0..=n);
            let x = CoeffVec(x);
            let c = lib(null_approximant_check(&sys, &x, m))?;
            let small = c.sigma <= 1e-9;
            ensure!(small == (s <= m), "{norm:?}: sigma_{m} = {} for support {s}", c.sigma);
            if small {
                vanishing += 1;
                let d = c.projection_defect.ok_or("missing defect")?;
                ensure!(d <= 1e-8, "{norm:?}: projection defect {d}");
            }
            ensure!(c.consistent, "{norm:?}: {c:?}");
        }
    }
    Ok(format!("2000 instances, {vanishing} with vanishing sigma"))
}

/// Zooming grid search for a convex function of one variable: the
/// minimizer always lies within one step of the best grid point, so the
/// window can shrink to two steps around it.
fn zoom_1d(f: &dyn Fn(f64) -> f64, center: f64, radius: f64) -> f64 {
    let pts = 21;
    let (mut center, mut radius) = (center, radius);
    let mut best = f(center);
    for _ in 0..24 {
        let step = 2.0 * radius / (pts - 1) as f64;
        let mut arg = center;
        for i in 0..pts {
            let t = center - radius + step * i as f64;
            let v = f(t);
            if v < best {
                best = v;
                arg = t;
            }
        }
        center = arg;
        radius = 2.0 * step;
    }
    best
}

/// Brute-force minimizer of `a -> ‖v - Σ a_k b_k‖`, one coordinate at a
/// time (partial minima of a convex function are convex).
fn grid_oracle(norm: &NormSpec, v: &[f64], cols: &[Vec<f64>], center: &[f64], radius: f64) -> f64 {
    fn go(norm: &NormSpec, v: &[f64], cols: &[Vec<f64>], center: &[f64], radius: f64, fixed: &[f64]) -> f64 {
        if fixed.len() == cols.len() {
            let r: Vec<f64> = (0..v.len())
                .map(|t| v[t] - cols.iter().zip(fixed).map(|(c, ak)| c[t] * ak).sum::<f64>())
                .collect();
            return norm.norm(&r).unwrap();
        }
        let f = |t: f64| {
            let mut inner = fixed.to_vec();
            inner.push(t);
            go(norm, v, cols, center, radius, &inner)
        };
        zoom_1d(&f, center[fixed.len()], radius)
    }
    go(norm, v, cols, center, radius, &[])
}

fn solver_oracle() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(53);
    let mut worst: f64 = 0.0;
    let mut worst_l2: f64 = 0.0;
    for norm in [NormSpec::l1(), NormSpec::l2(), NormSpec::Linf, NormSpec::lp(3.0)] {
        let mut done = 0;
        while done < 200 {
            let n = rng.random_range(1..=3);
            let basis: Vec<Vec<f64>> = (0..n)
                .map(|i| {
                    (0..n)
                        .map(|j| f64::from(u8::from(i == j)) + rng.random_range(-0.4..0.4))
                        .collect()
                })
                .collect();
            let Ok(sys) = MinimalSystem::from_square_basis(norm.clone(), basis.clone()) else {
                continue;
            };
            let x = CoeffVec((0..n).map(|_| rng.random_range(-3.0..3.0)).collect());
            let k = rng.random_range(0..=n.min(2));
            let support = IndexSet::new(rand::seq::index::sample(&mut rng, n, k));
            let sol = lib(chebyshev_with(&sys, &x, &support, Backend::for_norm(&norm)))?;
            let v: Vec<f64> = (0..n).map(|t| (0..n).map(|i| x[i] * basis[i][t]).sum()).collect();
            let cols: Vec<Vec<f64>> = support.iter().map(|i| basis[i].clone()).collect();
            let center: Vec<f64> = support.iter().map(|i| x[i]).collect();
            let radius = 10.0 * (1.0 + x.max_modulus());
            let oracle = grid_oracle(&norm, &v, &cols, &center, radius);
            ensure!(
                (sol.error - oracle).abs() <= 1e-4,
                "{norm:?}: backend {} vs oracle {oracle} ({x:?}, {support:?})",
                sol.error
            );
            worst = worst.max((sol.error - oracle).abs());
            if norm == NormSpec::l2() {
                let sg = lib(chebyshev_with(&sys, &x, &support, Backend::Subgradient))?;
                ensure!(
                    (sg.error - sol.error).abs() <= 1e-6,
                    "l2: subgradient {} vs closed form {}",
                    sg.error,
                    sol.error
                );
                worst_l2 = worst_l2.max((sg.error - sol.error).abs());
            }
            done += 1;
        }
    }
    Ok(format!("max |backend - oracle| {worst:.1e}, max l2 gap {worst_l2:.1e}"))
}

fn weak_set_structure() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(67);
    let n = 8;
    let taus = [1.0, 0.7, 0.3];
    let mut sets_seen = 0usize;
    for _ in 0..1000 {
        let c: Vec<f64> = (0..n)
            .map(|_| match rng.random_range(0..4) {
                0 => 0.0,
                1 => f64::from(rng.random_range(-2i32..=2)),
                _ => rng.random_range(-3.0..3.0),
            })
            .collect();
        for m in 1..=4 {
            let gs = lib(greedy_set(&c, m))?;
            let mut previous: Option<Vec<IndexSet>> = None;
            for tau in taus {
                let family: Vec<IndexSet> = lib(enumerate_weak_sets(&c, m, tau))?
                    .into_iter()
                    .map(|w| w.indices().clone())
                    .collect();
                // direct definition over every m-subset
                let brute: Vec<IndexSet> = (0..n)
                    .combinations(m)
                    .filter(|s| {
                        let inside = s.iter().map(|&i| c[i].abs()).fold(f64::INFINITY, f64::min);
                        let outside = (0..n)
                            .filter(|j| !s.contains(j))
                            .map(|j| c[j].abs())
                            .fold(0.0, f64::max);
                        inside >= tau * outside
                    })
                    .map(IndexSet::new)
                    .collect();
                ensure!(
                    family.len() == brute.len() && brute.iter().all(|s| family.contains(s)),
                    "{c:?} m {m} tau {tau}"
                );
                ensure!(
                    family.contains(&gs),
                    "greedy set {gs:?} missing for {c:?}, m {m}, tau {tau}"
                );
                if let Some(prev) = &previous {
                    ensure!(
                        prev.iter().all(|s| family.contains(s)),
                        "families not monotone in tau for {c:?}, m {m}"
                    );
                }
                sets_seen += family.len();
                previous = Some(family);
            }
        }
    }
    let suite = AxiomSuite {
        seed: 71,
        trials: 1000,
        max_len: n,
        taus: taus.to_vec(),
    };
    lib(check_branch_axioms(&GreedyRule, &suite))?;
    lib(check_branch_axioms(&MaxIndexRule, &suite))?;
    Ok(format!(
        "{sets_seen} weak sets compared; BG1-BG3 hold for both selectors"
    ))
}

fn main() -> ExitCode {
    let criteria: [Criterion; 9] = [
        ("l1 example exact values", example_l1_exact, 1),
        ("l1 example constructive bound", example_l1_constructive, 60),
        ("sup-norm example", sup_norm_example, 60),
        ("unit-basis baselines", unit_baselines, 120),
        ("K_2q vs K_b and K_ws consistency", k2q_consistency, 120),
        ("apex extension", apex_checks, 120),
        ("null approximants", null_approximants, 60),
        ("solver oracle equivalence", solver_oracle, 60),
        ("weak-set structure", weak_set_structure, 60),
    ];
    let mut failed = 0;
    for (i, (name, run, limit)) in criteria.iter().enumerate() {
        let start = Instant::now();
        let outcome = run();
        let elapsed = start.elapsed();
        let outcome = match outcome {
            Ok(msg) if elapsed > Duration::from_secs(*limit) => Err(format!("{msg}; exceeded {limit} s")),
            other => other,
        };
        match outcome {
            Ok(msg) => println!("criterion {}: PASS ({name}, {:.2?}) {msg}", i + 1, elapsed),
            Err(msg) => {
                failed += 1;
                println!("criterion {}: FAIL ({name}, {:.2?}) {msg}", i + 1, elapsed);
            }
        }
    }
    if failed == 0 {
        ExitCode::SUCCESS
    } else {
        ExitCode::FAILURE
    }
}
