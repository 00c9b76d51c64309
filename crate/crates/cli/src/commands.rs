use std::collections::BTreeSet;
use std::path::PathBuf;
use std::time::Instant;

use clap::{Args, Parser, Subcommand, ValueEnum};
use greedy_lab::approx::chebyshev_approximant;
use greedy_lab::checks::{
    check_apex, check_inequalities, check_null_approximants, structured_instances, InequalityCheck, Knowns,
};
use greedy_lab::constants::{estimate_democracy_family_with, generate_corpus, EstimatorConfig, GENERATOR_ID};
use greedy_lab::constructions::{known_bounds, verify_example_claims, ClaimOptions, ClaimStatus};
use greedy_lab::greedy::branch_ordering;
use greedy_lab::spaces::{extend_with_apex, validate_system};
use greedy_lab::{
    branch_greedy_sum, greedy_set, greedy_sum, BranchSelector, CoeffVec, Constant, ConstantEstimate, Corpus, Direction,
    ExampleSpec, Family, IndexSet, Lab, MinimalSystem, Status,
};
use serde_json::{json, Value};

use crate::io::{load_knowns, load_system, parse_corpus, parse_positions, parse_vector, LoadedSystem};
use crate::report::{Entry, EntryStatus, Report};
use crate::CliError;

/// Theorem tags understood by `verify`.
pub const THEOREM_TAGS: [&str; 9] = [
    "T2.2", "P2.3", "L4.1", "L4.6", "L4.9", "T5.5", "EX-L1", "EX-SUP", "EX-LP",
];

const DEFAULT_SEED: u64 = 0x5eed;

#[derive(Debug, Parser)]
#[command(
    name = "greedylab",
    version,
    about = "Greedy-type algorithms and constants for finite minimal systems"
)]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
    /// Write the report here instead of standard output.
    #[arg(long, global = true)]
    pub out: Option<PathBuf>,
    #[arg(long, global = true, value_enum, default_value_t = Format::Structured)]
    pub format: Format,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Format {
    /// JSON document.
    Structured,
    /// Flat CSV, one row per scalar field.
    Tabular,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum FamilyName {
    #[value(name = "l1-alpha")]
    L1Alpha,
    SupNorm,
    LpVariant,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Algo {
    /// Thresholding greedy algorithm.
    Tga,
    /// Chebyshev approximant on the greedy set (or on --support).
    Cga,
    /// Branch greedy algorithm; requires --tau.
    Branch,
}

/// Where the system comes from. A file given with --system takes
/// precedence over the family flags.
#[derive(Debug, Args)]
pub struct SystemArgs {
    /// SystemSpec or family-shortcut file.
    #[arg(long)]
    pub system: Option<PathBuf>,
    #[arg(long, value_enum)]
    pub family: Option<FamilyName>,
    #[arg(long)]
    pub alpha: Option<f64>,
    /// Ambient dimension of a family example.
    #[arg(long = "n")]
    pub n: Option<usize>,
    #[arg(long)]
    pub p: Option<f64>,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Check biorthogonality, rank and normalization of a system.
    Validate {
        #[command(flatten)]
        system: SystemArgs,
    },
    /// Run one algorithm on one coefficient vector.
    Run {
        #[command(flatten)]
        system: SystemArgs,
        #[arg(long, value_enum)]
        algo: Algo,
        /// Coefficients, comma separated, or @file.
        #[arg(long, allow_hyphen_values = true)]
        x: String,
        #[arg(long)]
        m: Option<usize>,
        #[arg(long)]
        tau: Option<f64>,
        /// 1-based positions for cga, comma separated.
        #[arg(long)]
        support: Option<String>,
        #[arg(long, default_value = "greedy")]
        selector: String,
    },
    /// Lower-bound the named constants over a generated corpus.
    Estimate {
        #[command(flatten)]
        system: SystemArgs,
        /// Comma-separated names such as K_d,K_ws(0.5), or "all".
        #[arg(long, default_value = "all")]
        constants: String,
        /// Corpus families as key=value pairs, e.g. gaussian=50,blocks=2.
        #[arg(long)]
        corpus: Option<String>,
        #[arg(long, default_value_t = DEFAULT_SEED)]
        seed: u64,
        /// Weakness parameter used by "all".
        #[arg(long, default_value_t = 1.0)]
        tau: f64,
        #[arg(long, default_value = "greedy")]
        selector: String,
        /// Additional upper bounds to compare against.
        #[arg(long)]
        knowns: Option<PathBuf>,
        /// Skip the hill-climbing refinement of witnesses.
        #[arg(long)]
        no_refine: bool,
    },
    /// Check theorem inequalities and example claims.
    Verify {
        #[command(flatten)]
        system: SystemArgs,
        /// Comma-separated tags; defaults to every tag applicable to the system.
        #[arg(long)]
        theorems: Option<String>,
        #[arg(long)]
        knowns: Option<PathBuf>,
        #[arg(long, default_value_t = DEFAULT_SEED)]
        seed: u64,
        /// Weakness parameters, comma separated.
        #[arg(long, default_value = "1,0.5")]
        tau: String,
        #[arg(long)]
        corpus: Option<String>,
        #[arg(long, default_value = "greedy")]
        selector: String,
        /// Randomized trials per weakness parameter for example claims.
        #[arg(long, default_value_t = 1000)]
        trials: usize,
        /// Instances for the null-approximant sweep.
        #[arg(long, default_value_t = 500)]
        instances: usize,
    },
    /// Re-emit a saved report, e.g. as --format tabular.
    Report {
        /// A structured report written by an earlier command.
        input: PathBuf,
    },
}

/// A finished command: the report and whether any check failed.
#[derive(Debug)]
pub struct Outcome {
    pub report: Report,
    pub failed: bool,
}

pub fn execute(cli: &Cli) -> Result<Outcome, CliError> {
    let start = Instant::now();
    let mut outcome = match &cli.command {
        Command::Validate { system } => validate(&resolve(system)?),
        Command::Run {
            system,
            algo,
            x,
            m,
            tau,
            support,
            selector,
        } => run(&resolve(system)?, *algo, x, *m, *tau, support.as_deref(), selector),
        Command::Estimate {
            system,
            constants,
            corpus,
            seed,
            tau,
            selector,
            knowns,
            no_refine,
        } => estimate(
            &resolve(system)?,
            &EstimateArgs {
                constants,
                corpus: corpus.as_deref(),
                seed: *seed,
                tau: *tau,
                selector,
                knowns: knowns.as_ref(),
                refine: !no_refine,
            },
        ),
        Command::Verify {
            system,
            theorems,
            knowns,
            seed,
            tau,
            corpus,
            selector,
            trials,
            instances,
        } => verify(
            &resolve(system)?,
            &VerifyArgs {
                theorems: theorems.as_deref(),
                knowns: knowns.as_ref(),
                seed: *seed,
                taus: tau,
                corpus: corpus.as_deref(),
                selector,
                trials: *trials,
                instances: *instances,
            },
        ),
        Command::Report { input } => {
            let report = Report::from_structured(&crate::io::read_file(input)?)?;
            let failed = report.has_failures();
            return Ok(Outcome { report, failed });
        }
    }?;
    outcome
        .report
        .timings
        .insert("total".into(), start.elapsed().as_secs_f64());
    Ok(outcome)
}

fn resolve(args: &SystemArgs) -> Result<LoadedSystem, CliError> {
    if let Some(path) = &args.system {
        return load_system(path);
    }
    let family = args
        .family
        .ok_or_else(|| CliError::Input("give --system PATH or --family".into()))?;
    let n = args.n.ok_or_else(|| CliError::Input("--family needs --n".into()))?;
    let spec = match family {
        FamilyName::L1Alpha => ExampleSpec::l1_alpha(
            args.alpha
                .ok_or_else(|| CliError::Input("l1-alpha needs --alpha".into()))?,
            n,
        ),
        FamilyName::SupNorm => ExampleSpec::sup_norm(n),
        FamilyName::LpVariant => {
            ExampleSpec::lp_variant(args.p.ok_or_else(|| CliError::Input("lp-variant needs --p".into()))?, n)
        }
    };
    let origin = serde_json::to_string(&spec).expect("specs serialize");
    LoadedSystem::from_example(spec, origin)
}

fn finish(mut report: Report, loaded: &LoadedSystem) -> Outcome {
    report.attach_reproducers(&loaded.file_value());
    let failed = report.has_failures();
    Outcome { report, failed }
}

fn pass_fail(ok: bool) -> EntryStatus {
    if ok {
        EntryStatus::Pass
    } else {
        EntryStatus::Fail
    }
}

fn selector(name: &str) -> Result<BranchSelector, CliError> {
    BranchSelector::by_name(name).ok_or_else(|| CliError::Input(format!("unknown selector {name:?}")))
}

fn one_based(set: &IndexSet) -> Vec<usize> {
    set.iter().map(|i| i + 1).collect()
}

fn labels_of(sys: &MinimalSystem, set: &IndexSet) -> Vec<usize> {
    set.iter().map(|i| sys.label(i)).collect()
}

fn validate(loaded: &LoadedSystem) -> Result<Outcome, CliError> {
    let v = validate_system(&loaded.system);
    let mut report = Report::new("validate", Some(loaded));
    report.push(
        Entry::new(
            "validate_system",
            json!({}),
            serde_json::to_value(&v).expect("serializes"),
        )
        .with_status(pass_fail(v.passed())),
    );
    Ok(finish(report, loaded))
}

fn run(
    loaded: &LoadedSystem,
    algo: Algo,
    x: &str,
    m: Option<usize>,
    tau: Option<f64>,
    support: Option<&str>,
    sel_name: &str,
) -> Result<Outcome, CliError> {
    let sys = &loaded.system;
    let n = sys.size();
    let x = CoeffVec(parse_vector(x)?);
    if x.len() != n {
        return Err(CliError::Input(format!(
            "x has {} coefficients, the system has {n} vectors",
            x.len()
        )));
    }
    if tau.is_some() && algo != Algo::Branch {
        return Err(CliError::Input("--tau only applies to --algo branch".into()));
    }
    if support.is_some() && algo != Algo::Cga {
        return Err(CliError::Input("--support only applies to --algo cga".into()));
    }
    if sel_name != "greedy" && algo != Algo::Branch {
        return Err(CliError::Input("--selector only applies to --algo branch".into()));
    }
    let need_m = || m.ok_or_else(|| CliError::Input("--m is required".into()));
    let mut report = Report::new("run", Some(loaded));
    let mut inputs = json!({"x": x.0, "m": m});
    let (operation, approx, extra) = match algo {
        Algo::Tga => {
            let m = need_m()?;
            let set = greedy_set(&x, m)?;
            let g = greedy_sum(&x, m)?;
            (
                "tga",
                g,
                json!({"greedy_set": one_based(&set), "greedy_set_labels": labels_of(sys, &set)}),
            )
        }
        Algo::Cga => {
            let set = match support {
                Some(s) => parse_positions(s, n)?,
                None => greedy_set(&x, need_m()?)?,
            };
            inputs["support"] = json!(one_based(&set));
            let sol = chebyshev_approximant(sys, &x, &set)?;
            let extra = json!({
                "support": one_based(&sol.support),
                "support_labels": labels_of(sys, &sol.support),
                "backend": sol.backend,
                "certificate_gap": sol.certificate,
            });
            ("cga", sol.approximant(n), extra)
        }
        Algo::Branch => {
            let tau = tau.ok_or_else(|| CliError::Input("--algo branch requires --tau".into()))?;
            let m = need_m()?;
            let sel = selector(sel_name)?;
            inputs["tau"] = json!(tau);
            inputs["selector"] = json!(sel.name());
            let order = branch_ordering(&x, tau, &sel)?;
            let g = branch_greedy_sum(&x, tau, m, &sel)?;
            let chosen: Vec<usize> = order.iter().take(m).map(|i| i + 1).collect();
            (
                "branch",
                g,
                json!({"selected": chosen, "ordering": order.iter().map(|i| i + 1).collect::<Vec<_>>()}),
            )
        }
    };
    let resid: Vec<f64> = x.iter().zip(approx.iter()).map(|(a, b)| a - b).collect();
    let mut outputs = json!({
        "approximant": approx.0,
        "residual": resid,
        "residual_norm": sys.norm_of(&resid)?,
    });
    for (k, v) in extra.as_object().expect("object") {
        outputs[k] = v.clone();
    }
    report.push(Entry::new(operation, inputs, outputs));
    Ok(finish(report, loaded))
}

struct EstimateArgs<'a> {
    constants: &'a str,
    corpus: Option<&'a str>,
    seed: u64,
    tau: f64,
    selector: &'a str,
    knowns: Option<&'a PathBuf>,
    refine: bool,
}

fn parse_constants(list: &str, tau: f64) -> Result<Vec<Constant>, CliError> {
    if list.trim() == "all" {
        return Ok(Constant::all(tau).to_vec());
    }
    list.split(',')
        .map(str::trim)
        .filter(|t| !t.is_empty())
        .map(|t| {
            t.parse::<Constant>()
                .map_err(|e| CliError::Input(format!("{t:?}: {e}")))
        })
        .collect()
}

fn estimator_config(seed: u64, refine: bool) -> EstimatorConfig {
    EstimatorConfig {
        refine,
        seed,
        ..EstimatorConfig::default()
    }
}

/// Knowns for the system: the family's constructive bounds, overridden
/// entry by entry by the user file.
fn gather_knowns(loaded: &LoadedSystem, file: Option<&PathBuf>, taus: &[f64]) -> Result<Knowns, CliError> {
    let mut k = match &loaded.example {
        Some(spec) => known_bounds(spec, taus)?,
        None => Knowns::new(),
    };
    if let Some(path) = file {
        k.extend(load_knowns(path)?);
    }
    Ok(k)
}

fn corpus_for(sys: &MinimalSystem, spec: Option<&str>, seed: u64) -> Result<Corpus, CliError> {
    let spec = spec.map(parse_corpus).transpose()?.unwrap_or_default();
    Ok(generate_corpus(sys, &spec, seed)?)
}

/// Estimates in request order; the democracy family is searched once.
fn run_estimates(
    sys: &MinimalSystem,
    lab: &Lab,
    constants: &[Constant],
    sel: &BranchSelector,
) -> Result<Vec<Result<ConstantEstimate, greedy_lab::Error>>, CliError> {
    let mut democracy = None;
    let mut out = Vec::new();
    for &c in constants {
        if c.is_democracy() {
            if democracy.is_none() {
                democracy = Some(estimate_democracy_family_with(sys, sys.size(), lab.config())?);
            }
            let (d, sd, hd) = democracy.clone().expect("computed above");
            out.push(Ok(match c {
                Constant::Kd => d,
                Constant::Ksd => sd,
                _ => hd,
            }));
        } else {
            out.push(lab.estimate(c, sel));
        }
    }
    Ok(out)
}

fn estimate_entry(e: &ConstantEstimate, knowns: &Knowns) -> Entry {
    let upper = knowns
        .get(&e.name())
        .filter(|k| k.direction == Direction::ConstructiveUpperBound);
    let mut outputs = json!({
        "value": e.value,
        "direction": e.direction,
        "evaluated": e.evaluated,
        "skipped": e.skipped,
        "corpus": e.corpus,
    });
    let mut entry = Entry::new("estimate", json!({"constant": e.name()}), Value::Null);
    if let Some(k) = upper {
        outputs["known_upper"] = json!(k.value);
        outputs["known_upper_note"] = json!(k.note);
        entry = entry.with_status(pass_fail(e.value <= k.value + 1e-6 * k.value.abs().max(1.0)));
    }
    entry.outputs = outputs;
    match &e.witness {
        Some(w) => entry.with_witness(serde_json::to_value(w).expect("serializes")),
        None => entry,
    }
}

fn estimate(loaded: &LoadedSystem, args: &EstimateArgs) -> Result<Outcome, CliError> {
    let sys = &loaded.system;
    let constants = parse_constants(args.constants, args.tau)?;
    let sel = selector(args.selector)?;
    let taus: Vec<f64> = constants.iter().filter_map(Constant::tau).collect();
    let knowns = gather_knowns(loaded, args.knowns, &taus)?;
    let mut report = Report::new("estimate", Some(loaded));
    report.seed = Some(args.seed);
    report.generator = Some(GENERATOR_ID.to_string());

    let t = Instant::now();
    let corpus = corpus_for(sys, args.corpus, args.seed)?;
    report.timings.insert("corpus".into(), t.elapsed().as_secs_f64());
    let t = Instant::now();
    let lab = Lab::new(sys, &corpus)?.with_config(estimator_config(args.seed, args.refine));
    for (c, res) in constants.iter().zip(run_estimates(sys, &lab, &constants, &sel)?) {
        match res {
            Ok(e) => report.push(estimate_entry(&e, &knowns)),
            Err(err @ greedy_lab::Error::AllRatiosSkipped) => report.push(
                Entry::new(
                    "estimate",
                    json!({"constant": c.to_string()}),
                    json!({"error": err.to_string()}),
                )
                .with_status(EntryStatus::NotCheckable),
            ),
            Err(err) => return Err(err.into()),
        }
    }
    report.timings.insert("estimates".into(), t.elapsed().as_secs_f64());
    Ok(finish(report, loaded))
}

struct VerifyArgs<'a> {
    theorems: Option<&'a str>,
    knowns: Option<&'a PathBuf>,
    seed: u64,
    taus: &'a str,
    corpus: Option<&'a str>,
    selector: &'a str,
    trials: usize,
    instances: usize,
}

fn family_tag(spec: &ExampleSpec) -> &'static str {
    match spec.family {
        Family::L1Alpha { .. } => "EX-L1",
        Family::SupNorm => "EX-SUP",
        Family::LpVariant { .. } => "EX-LP",
    }
}

fn check_entry(c: &InequalityCheck) -> Entry {
    let status = match c.status {
        Status::Pass => EntryStatus::Pass,
        Status::Fail => EntryStatus::Fail,
        Status::NotCheckable => EntryStatus::NotCheckable,
    };
    Entry::new(
        "check_inequality",
        json!({"tag": c.tag, "statement": c.statement}),
        json!({"lhs": c.lhs, "rhs": c.rhs, "inputs": c.inputs, "note": c.note}),
    )
    .with_status(status)
}

fn verify(loaded: &LoadedSystem, args: &VerifyArgs) -> Result<Outcome, CliError> {
    let sys = &loaded.system;
    let taus: Vec<f64> = parse_vector(args.taus)?;
    if taus.is_empty() || taus.iter().any(|t| !(*t > 0.0 && *t <= 1.0)) {
        return Err(CliError::Input(format!(
            "weakness parameters must lie in (0, 1], got {taus:?}"
        )));
    }
    let tags: BTreeSet<String> = match args.theorems {
        Some(list) => list
            .split(',')
            .map(|t| t.trim().to_string())
            .filter(|t| !t.is_empty())
            .collect(),
        None => {
            let mut t: BTreeSet<String> = THEOREM_TAGS[..6].iter().map(|s| s.to_string()).collect();
            if let Some(spec) = &loaded.example {
                t.insert(family_tag(spec).to_string());
            }
            t
        }
    };
    if let Some(bad) = tags.iter().find(|t| !THEOREM_TAGS.contains(&t.as_str())) {
        return Err(CliError::Input(format!(
            "unknown theorem tag {bad:?}; expected one of {THEOREM_TAGS:?}"
        )));
    }
    for tag in tags.iter().filter(|t| t.starts_with("EX-")) {
        if loaded.example.as_ref().map(family_tag) != Some(tag.as_str()) {
            return Err(CliError::Input(format!("{tag} needs the matching family system")));
        }
    }
    let sel = selector(args.selector)?;
    let knowns = gather_knowns(loaded, args.knowns, &taus)?;
    let corpus_spec = args.corpus.map(parse_corpus).transpose()?.unwrap_or_default();
    let config = estimator_config(args.seed, true);
    let mut report = Report::new("verify", Some(loaded));
    report.seed = Some(args.seed);
    report.generator = Some(GENERATOR_ID.to_string());

    let inequality_tags = ["T2.2", "P2.3", "L4.1", "T5.5"];
    if inequality_tags.iter().any(|t| tags.contains(*t)) {
        let t = Instant::now();
        let corpus = generate_corpus(sys, &corpus_spec, args.seed)?;
        let lab = Lab::new(sys, &corpus)?.with_config(config.clone());
        let mut wanted: Vec<Constant> = Vec::new();
        for &tau in &taus {
            for c in Constant::all(tau) {
                if !wanted.contains(&c) {
                    wanted.push(c);
                }
            }
        }
        let estimates: Vec<ConstantEstimate> = run_estimates(sys, &lab, &wanted, &sel)?
            .into_iter()
            .filter_map(Result::ok)
            .collect();
        for c in check_inequalities(sys, &estimates, &knowns)?
            .iter()
            .filter(|c| tags.contains(&c.tag))
        {
            report.push(check_entry(c));
        }
        report.timings.insert("inequalities".into(), t.elapsed().as_secs_f64());
    }
    if tags.contains("L4.6") {
        let t = Instant::now();
        let b2 = extend_with_apex(sys)?;
        let corpus = generate_corpus(&b2, &corpus_spec, args.seed)?;
        let lab = Lab::new(&b2, &corpus)?.with_config(config.clone());
        let est: Vec<ConstantEstimate> = run_estimates(&b2, &lab, &[Constant::K1q, Constant::Ksd], &sel)?
            .into_iter()
            .collect::<Result<_, _>>()?;
        for c in check_apex(&est, &knowns) {
            report.push(check_entry(&c));
        }
        report.timings.insert("apex".into(), t.elapsed().as_secs_f64());
    }
    if tags.contains("L4.9") {
        let t = Instant::now();
        let inst = structured_instances(sys.size(), args.instances, args.seed);
        report.push(check_entry(&check_null_approximants(sys, &inst)?));
        report
            .timings
            .insert("null_approximants".into(), t.elapsed().as_secs_f64());
    }
    if let Some(spec) = loaded.example.as_ref().filter(|s| tags.contains(family_tag(s))) {
        let t = Instant::now();
        let opts = ClaimOptions {
            taus: taus.clone(),
            trials: args.trials,
            seed: args.seed,
            corpus: corpus_spec.clone(),
            estimator: config.clone(),
        };
        for c in verify_example_claims(spec, &opts)?.claims {
            let status = match c.status {
                ClaimStatus::Pass => EntryStatus::Pass,
                ClaimStatus::Fail => EntryStatus::Fail,
                ClaimStatus::Info => EntryStatus::Info,
            };
            report.push(
                Entry::new(
                    "example_claim",
                    json!({"tag": family_tag(spec), "claim": c.id, "description": c.description}),
                    json!({"value": c.value, "bound": c.bound, "detail": c.detail}),
                )
                .with_status(status),
            );
        }
        report
            .timings
            .insert("example_claims".into(), t.elapsed().as_secs_f64());
    }
    Ok(finish(report, loaded))
}
