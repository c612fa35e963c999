//! Command-line front end. Machine-readable results go to stdout as JSON
//! (or CSV when no `--out` is given); diagnostics go to stderr.

use std::ffi::OsString;
use std::io::Write;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand, ValueEnum};
use rand::Rng;
use rayon::prelude::*;
use serde_json::{json, Value};

use crate::dual_solver::solve_constrained;
use crate::error::{Error, Result};
use crate::flow_oracle::{
    build_budget_network, build_col_sparse_network, build_layout_network, build_row_sparse_network,
    brute_force_optimal, flow_to_allocation, has_negative_residual_cycle, network_optimum, objectives_equal,
};
use crate::mechanisms::{allocate, allocation_objective, run, MechanismSpec, Tradeoff};
use crate::model::{validate_allocation, BidProfile, LayoutConstraints, Outcome, Scenario, ScenarioDocument};
use crate::rng::{derive_seed, stream_rng};
use crate::simulation::experiments::{
    compare_baseline, run_experiment4, sweep_alpha, v0_grid, write_csv, ComparePoint, CurvePoint, ExperimentConfig,
    ThresholdPoint,
};
use crate::simulation::{gsp_fixed_slots, integrated_heuristic, myerson_fixed_slots, SmallInstance};

pub const EXIT_OK: u8 = 0;
pub const EXIT_CONFIG: u8 = 2;
pub const EXIT_INFEASIBLE: u8 = 3;
pub const EXIT_MISMATCH: u8 = 4;
/// Oracle check where the only disagreements are column-sparse greedy pages
/// below the true optimum.
pub const EXIT_GREEDY_SUBOPTIMAL: u8 = 5;

const EXAMPLE1: &str = include_str!("../fixtures/example1.json");
const EXAMPLE1_EXPECTED: &str = include_str!("../fixtures/example1_expected.json");

#[derive(Parser, Debug)]
#[command(name = "ias", version, about = "Integrated ad and organic search page mechanisms")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
    #[command(flatten)]
    pub opts: Options,
}

#[derive(Subcommand, Debug, Clone, Copy, PartialEq, Eq)]
pub enum Command {
    /// Run one mechanism on a scenario file and print the page
    Run,
    /// Revenue and volume across a grid of alpha values
    SweepAlpha,
    /// Solve the volume-floor problem for one floor or a grid of floors
    SolveConstrained,
    /// Paired comparison against fixed-slot Myerson for each slot count
    Compare,
    /// The comparison under correlated values and quality factors
    Experiment4,
    /// Mechanism vs flow network vs exhaustive search on random instances
    OracleCheck,
    /// Fixed-slot GSP and the integrated heuristic on the worked example
    Example1,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Family {
    None,
    Budget,
    RowSparse,
    ColumnSparse,
    /// Every family (oracle-check only)
    All,
}

impl Family {
    fn stream(self) -> u64 {
        self as u64
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Default)]
pub enum Mechanism {
    #[default]
    Ias,
    Gsp,
    Heuristic,
    Myerson,
}

#[derive(Args, Debug, Default)]
pub struct Options {
    /// Scenario JSON file
    #[arg(long, global = true)]
    pub scenario: Option<PathBuf>,
    #[arg(long, global = true)]
    pub alpha: Option<f64>,
    #[arg(long, global = true)]
    pub lambda: Option<f64>,
    /// Layout family; overrides the scenario file and config
    #[arg(long, global = true, value_enum)]
    pub family: Option<Family>,
    #[arg(long, global = true)]
    pub c: Option<usize>,
    #[arg(long, global = true)]
    pub l: Option<usize>,
    /// Volume floor (solve-constrained only)
    #[arg(long, global = true)]
    pub v0: Option<f64>,
    #[arg(long, global = true, env = "IAS_SEED")]
    pub seed: Option<u64>,
    /// Repetitions (instances for oracle-check, samples for solve-constrained)
    #[arg(long, global = true)]
    pub reps: Option<usize>,
    /// CSV output path; CSV goes to stdout when absent
    #[arg(long, global = true)]
    pub out: Option<PathBuf>,
    #[arg(long, global = true)]
    pub threads: Option<usize>,
    /// Print the flow network of a run to stderr
    #[arg(long, global = true)]
    pub dump_network: bool,
    /// Experiment config JSON; flags take precedence
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    #[arg(long, global = true, value_enum)]
    pub mechanism: Option<Mechanism>,
    /// Ad slots for the fixed-slot baselines
    #[arg(long, global = true)]
    pub m: Option<usize>,
    /// Ad bids in scenario order, comma separated
    #[arg(long, global = true, value_delimiter = ',', allow_hyphen_values = true)]
    pub bids: Option<Vec<f64>>,
    #[arg(long, global = true, value_delimiter = ',')]
    pub alphas: Option<Vec<f64>>,
    #[arg(long, global = true, value_delimiter = ',')]
    pub ms: Option<Vec<usize>>,
    #[arg(long, global = true, value_delimiter = ',', allow_hyphen_values = true)]
    pub rs: Option<Vec<f64>>,
    #[arg(long, global = true)]
    pub v0_points: Option<usize>,
    #[arg(long, global = true)]
    pub mc_samples: Option<usize>,
    #[arg(long, global = true)]
    pub epsilon: Option<f64>,
}

/// Parses `args`, runs the command and returns the process exit code.
pub fn main_with<I, T>(args: I) -> u8
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { EXIT_CONFIG } else { EXIT_OK };
        }
    };
    match execute(&cli) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e}");
            exit_code(&e)
        }
    }
}

pub fn exit_code(e: &Error) -> u8 {
    match e {
        Error::Infeasible(_) | Error::InfeasibleThreshold { .. } => EXIT_INFEASIBLE,
        Error::Flow(_) => EXIT_MISMATCH,
        _ => EXIT_CONFIG,
    }
}

pub fn execute(cli: &Cli) -> Result<u8> {
    check_flags(cli)?;
    let go = || dispatch(cli);
    match cli.opts.threads {
        Some(0) => Err(Error::InvalidParameter("--threads must be at least 1".into())),
        Some(n) => rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build()
            .map_err(|e| Error::InvalidParameter(e.to_string()))?
            .install(go),
        None => go(),
    }
}

fn check_flags(cli: &Cli) -> Result<()> {
    let o = &cli.opts;
    let bad = |m: &str| Err(Error::InvalidParameter(m.into()));
    if o.v0.is_some() && cli.command != Command::SolveConstrained {
        return bad("--v0 is only accepted by solve-constrained");
    }
    if o.alpha.is_some() && o.lambda.is_some() {
        return bad("give at most one of --alpha and --lambda");
    }
    if (o.alpha.is_some() || o.lambda.is_some()) && !matches!(cli.command, Command::Run | Command::OracleCheck) {
        return bad("--alpha and --lambda are only accepted by run and oracle-check");
    }
    if o.family == Some(Family::All) && cli.command != Command::OracleCheck {
        return bad("--family all is only accepted by oracle-check");
    }
    if o.mechanism.is_some() && cli.command != Command::Run {
        return bad("--mechanism is only accepted by run");
    }
    Ok(())
}

fn dispatch(cli: &Cli) -> Result<u8> {
    let o = &cli.opts;
    match cli.command {
        Command::Run => cmd_run(o),
        Command::SweepAlpha => cmd_sweep_alpha(o),
        Command::SolveConstrained => cmd_solve_constrained(o),
        Command::Compare => cmd_compare(o),
        Command::Experiment4 => cmd_experiment4(o),
        Command::OracleCheck => cmd_oracle_check(o),
        Command::Example1 => cmd_example1(),
    }
}

fn print_json(v: &Value) {
    println!("{v}");
}

/// Flags over config file over defaults.
fn experiment_config(o: &Options) -> Result<ExperimentConfig> {
    let mut cfg = match &o.config {
        Some(path) => {
            let text = std::fs::read_to_string(path).map_err(|e| Error::Io(format!("{}: {e}", path.display())))?;
            serde_json::from_str(&text).map_err(|e| Error::InvalidParameter(format!("{}: {e}", path.display())))?
        }
        None => ExperimentConfig::default(),
    };
    if let Some(v) = &o.alphas {
        cfg.alphas = v.clone();
    }
    if let Some(v) = &o.ms {
        cfg.ms = v.clone();
    }
    if let Some(v) = &o.rs {
        cfg.rs = v.clone();
    }
    if let Some(v) = o.v0_points {
        cfg.v0_points = v;
    }
    if let Some(v) = o.reps {
        cfg.reps = v;
    }
    if let Some(v) = o.mc_samples {
        cfg.mc_samples = v;
    }
    if let Some(v) = o.epsilon {
        cfg.epsilon = v;
    }
    if let Some(v) = o.seed {
        cfg.seed = v;
    }
    cfg.validate()?;
    Ok(cfg)
}

fn flag_layout(o: &Options) -> Result<Option<LayoutConstraints>> {
    let need = |x: Option<usize>, name: &str| {
        x.ok_or_else(|| Error::InvalidParameter(format!("--family needs --{name}")))
    };
    Ok(match o.family {
        None => None,
        Some(Family::None) => Some(LayoutConstraints::None),
        Some(Family::Budget) => Some(LayoutConstraints::Budget { c: need(o.c, "c")? }),
        Some(Family::RowSparse) => Some(LayoutConstraints::RowSparse {
            c: need(o.c, "c")?,
            l: need(o.l, "l")?,
        }),
        Some(Family::ColumnSparse) => Some(LayoutConstraints::ColumnSparse {
            c: need(o.c, "c")?,
            l: need(o.l, "l")?,
        }),
        Some(Family::All) => return Err(Error::InvalidParameter("--family all is only accepted by oracle-check".into())),
    })
}

fn load_document(path: &Path) -> Result<ScenarioDocument> {
    let doc = ScenarioDocument::load(path)?;
    doc.scenario()?;
    Ok(doc)
}

/// The scenario template: the `--scenario` file or the synthetic family
/// drawn from the seed. The layout is flags, then file, then config.
fn template(o: &Options, cfg: &ExperimentConfig) -> Result<(Scenario, LayoutConstraints)> {
    let (scenario, file_layout) = match &o.scenario {
        Some(path) => {
            let doc = load_document(path)?;
            (doc.scenario()?, doc.constraints)
        }
        None => (cfg.family.generate(cfg.seed)?, None),
    };
    let layout = flag_layout(o)?.or(file_layout).unwrap_or(cfg.layout);
    layout.validate(scenario.num_slots())?;
    Ok((scenario, layout))
}

fn page_json(scenario: &Scenario, out: &Outcome) -> Value {
    let page: Vec<Value> = out
        .allocation
        .slots()
        .iter()
        .enumerate()
        .map(|(k, &i)| {
            let item = &scenario.items()[i];
            let mut v = json!({
                "slot": k + 1,
                "exposure": scenario.exposure(k),
                "id": item.label,
                "kind": item.kind,
            });
            if item.is_ad() {
                v["payment"] = json!(out.payments[i]);
                v["actual_payment"] = json!(out.actual_payment(scenario, i));
            }
            v
        })
        .collect();
    json!({"page": page, "revenue": out.revenue, "gmv": out.gmv})
}

fn cmd_run(o: &Options) -> Result<u8> {
    let path = o
        .scenario
        .as_ref()
        .ok_or_else(|| Error::InvalidParameter("run needs --scenario".into()))?;
    let doc = load_document(path)?;
    let s = doc.scenario()?;
    let layout = flag_layout(o)?.or(doc.constraints).unwrap_or_default();
    layout.validate(s.num_slots())?;
    let profile = match (&o.bids, doc.bid_profile(&s)?) {
        (Some(b), _) => BidProfile::from_ad_bids(&s, b)?,
        (None, Some(p)) => p,
        (None, None) => BidProfile::sample(&s, &mut stream_rng(o.seed.unwrap_or(0), 0)),
    };
    let mechanism = o.mechanism.unwrap_or_default();
    let fixed_slots = || o.m.ok_or_else(|| Error::InvalidParameter("this mechanism needs --m".into()));
    if mechanism != Mechanism::Ias && (o.alpha.is_some() || o.lambda.is_some()) {
        return Err(Error::InvalidParameter("--alpha and --lambda apply to the ias mechanism only".into()));
    }
    let mut header = json!({"mechanism": format!("{mechanism:?}").to_lowercase()});
    let outcome = match mechanism {
        Mechanism::Ias => {
            let tradeoff = match (o.alpha, o.lambda) {
                (Some(a), None) => Tradeoff::Alpha(a),
                (None, Some(l)) => Tradeoff::Lambda(l),
                _ => return Err(Error::InvalidParameter("the ias mechanism needs exactly one of --alpha and --lambda".into())),
            };
            let spec = MechanismSpec::new(layout, tradeoff)?;
            header["alpha"] = json!(spec.alpha());
            header["layout"] = json!(layout);
            if o.dump_network {
                let lambda = tradeoff.lambda();
                let net = match layout {
                    LayoutConstraints::Budget { c } => build_budget_network(&s, &profile, lambda, c)?,
                    _ => build_layout_network(&s, &profile, lambda, &layout)?,
                };
                eprint!("{}", net.dump());
            }
            run(&s, &profile, &spec)?
        }
        Mechanism::Gsp => gsp_fixed_slots(&s, &profile, fixed_slots()?)?,
        Mechanism::Heuristic => integrated_heuristic(&s, &profile)?,
        Mechanism::Myerson => myerson_fixed_slots(&s, &profile, fixed_slots()?)?,
    };
    let mut v = page_json(&s, &outcome);
    for (k, x) in header.as_object().into_iter().flatten() {
        v[k] = x.clone();
    }
    print_json(&v);
    Ok(EXIT_OK)
}

/// CSV to `--out` (with a JSON summary on stdout) or to stdout.
fn emit_csv(o: &Options, command: &str, cfg: &ExperimentConfig, header: &[&str], rows: Vec<Vec<String>>) -> Result<u8> {
    let meta = json!({
        "command": command,
        "scenario": o.scenario.as_ref().map(|p| p.display().to_string()),
        "config": cfg,
    });
    match &o.out {
        Some(path) => {
            let file = std::fs::File::create(path).map_err(|e| Error::Io(format!("{}: {e}", path.display())))?;
            write_csv(std::io::BufWriter::new(file), &meta, header, &rows)?;
            print_json(&json!({"command": command, "rows": rows.len(), "out": path.display().to_string()}));
        }
        None => {
            let stdout = std::io::stdout();
            let mut lock = stdout.lock();
            write_csv(&mut lock, &meta, header, &rows)?;
            lock.flush().map_err(|e| Error::Io(e.to_string()))?;
        }
    }
    Ok(EXIT_OK)
}

fn with_extra(base: &[&'static str], extra: &[&'static str]) -> Vec<&'static str> {
    base.iter().chain(extra).copied().collect()
}

fn cmd_sweep_alpha(o: &Options) -> Result<u8> {
    let cfg = experiment_config(o)?;
    let (s, layout) = template(o, &cfg)?;
    let cfg = ExperimentConfig { layout, ..cfg };
    let points = sweep_alpha(&s, &layout, &cfg.alphas, cfg.reps, cfg.seed)?;
    let rows = points.iter().map(|p| p.curve.fields()).collect();
    emit_csv(o, "sweep-alpha", &cfg, &CurvePoint::HEADER, rows)
}

fn cmd_solve_constrained(o: &Options) -> Result<u8> {
    let mut cfg = experiment_config(o)?;
    if let (Some(r), None) = (o.reps, o.mc_samples) {
        cfg.mc_samples = r;
    }
    let (s, layout) = template(o, &cfg)?;
    let cfg = ExperimentConfig { layout, ..cfg };
    let dual = cfg.dual();
    let points = match o.v0 {
        Some(v0) => vec![ThresholdPoint::from_result(&solve_constrained(&s, &layout, v0, &dual)?)],
        None => {
            let grid = v0_grid(&s, &layout, cfg.v0_points, &dual)?;
            crate::simulation::sweep_threshold(&s, &layout, &grid, &dual)?
        }
    };
    let rows = points.iter().map(ThresholdPoint::fields).collect();
    emit_csv(
        o,
        "solve-constrained",
        &cfg,
        &with_extra(&CurvePoint::HEADER, &ThresholdPoint::EXTRA_HEADER),
        rows,
    )
}

fn cmd_compare(o: &Options) -> Result<u8> {
    let cfg = experiment_config(o)?;
    let (s, layout) = template(o, &cfg)?;
    let cfg = ExperimentConfig { layout, ..cfg };
    let points = compare_baseline(&s, &layout, &cfg.ms, cfg.reps, &cfg.dual())?;
    let rows = points.iter().map(ComparePoint::fields).collect();
    emit_csv(o, "compare", &cfg, &with_extra(&CurvePoint::HEADER, &ComparePoint::EXTRA_HEADER), rows)
}

fn cmd_experiment4(o: &Options) -> Result<u8> {
    let cfg = experiment_config(o)?;
    let (s, layout) = template(o, &cfg)?;
    let cfg = ExperimentConfig { layout, ..cfg };
    let points = run_experiment4(&s, &layout, &cfg.weights, &cfg.rs, &cfg.ms, cfg.reps, &cfg.dual())?;
    let rows = points
        .iter()
        .map(|(r, p)| std::iter::once(r.to_string()).chain(p.fields()).collect())
        .collect();
    let header = with_extra(&["r"], &with_extra(&CurvePoint::HEADER, &ComparePoint::EXTRA_HEADER));
    emit_csv(o, "experiment4", &cfg, &header, rows)
}

/// Outcome of one oracle-check instance.
#[derive(Debug, Clone, Default)]
struct InstanceCheck {
    mechanism_ok: bool,
    flow_ok: bool,
    /// Budget network equals the optimum; split gadgets bound it from above.
    family_network_ok: bool,
    record: Option<Value>,
}

fn check_instance(family: Family, o: &Options, seed: u64, j: u64) -> Result<InstanceCheck> {
    let mut rng = stream_rng(derive_seed(seed, family.stream()), j);
    let (s, p) = SmallInstance::default().draw(&mut rng)?;
    let k = s.num_slots();
    let mut c = o.c.unwrap_or_else(|| rng.random_range(1..=k));
    let mut l = o.l.unwrap_or_else(|| rng.random_range(1..=k)).min(k);
    c = c.max(1);
    l = l.max(1);
    let layout = match family {
        Family::Budget => LayoutConstraints::Budget { c },
        Family::RowSparse => LayoutConstraints::RowSparse { c, l },
        Family::ColumnSparse => LayoutConstraints::ColumnSparse { c, l },
        _ => LayoutConstraints::None,
    };
    let tradeoff = match (o.alpha, o.lambda) {
        (Some(a), _) => Tradeoff::Alpha(a),
        (_, Some(l)) => Tradeoff::Lambda(l),
        _ => Tradeoff::Lambda(rng.random_range(0.0..4.0)),
    };
    let lambda = tradeoff.lambda();
    if !lambda.is_finite() {
        return Err(Error::InvalidParameter("oracle-check needs a finite multiplier (alpha > 0)".into()));
    }
    let spec = MechanismSpec::new(layout, tradeoff)?;
    let mech = allocation_objective(&s, &p, lambda, &allocate(&s, &p, &spec)?);
    let brute = allocation_objective(&s, &p, lambda, &brute_force_optimal(&s, &p, lambda, &layout)?);

    let net = build_layout_network(&s, &p, lambda, &layout)?;
    let (value, flow) = network_optimum(&net)?;
    let decoded = flow_to_allocation(&net, &flow)
        .ok()
        .filter(|a| validate_allocation(&s, a, &layout).is_valid());
    let flow_ok = objectives_equal(value, brute)
        && !has_negative_residual_cycle(&net, &flow)
        && decoded.is_some_and(|a| objectives_equal(allocation_objective(&s, &p, lambda, &a), brute));

    let family_network_ok = match layout {
        LayoutConstraints::Budget { c } => objectives_equal(network_optimum(&build_budget_network(&s, &p, lambda, c)?)?.0, brute),
        LayoutConstraints::RowSparse { c, l } => network_optimum(&build_row_sparse_network(&s, &p, lambda, c, l)?)?.0 >= brute - 1e-9 * brute.abs().max(1.0),
        LayoutConstraints::ColumnSparse { c, l } => network_optimum(&build_col_sparse_network(&s, &p, lambda, c, l)?)?.0 >= brute - 1e-9 * brute.abs().max(1.0),
        LayoutConstraints::None => true,
    };
    let mechanism_ok = objectives_equal(mech, brute);
    let record = (!(mechanism_ok && flow_ok && family_network_ok)).then(|| {
        json!({
            "instance": j,
            "lambda": lambda,
            "scenario": ScenarioDocument::from_scenario(&s, Some(layout)),
            "bids": p.bids(),
            "mechanism_objective": mech,
            "flow_objective": value,
            "brute_force_objective": brute,
        })
    });
    Ok(InstanceCheck {
        mechanism_ok,
        flow_ok,
        family_network_ok,
        record,
    })
}

fn cmd_oracle_check(o: &Options) -> Result<u8> {
    let families = match o.family {
        None | Some(Family::All) => vec![Family::None, Family::Budget, Family::RowSparse, Family::ColumnSparse],
        Some(f) => vec![f],
    };
    let n = o.reps.unwrap_or(500);
    let seed = o.seed.unwrap_or(0);
    let mut hard_failure = false;
    let mut greedy_only = false;
    let mut report = Vec::new();
    for family in families {
        let checks: Vec<InstanceCheck> = (0..n as u64)
            .into_par_iter()
            .map(|j| check_instance(family, o, seed, j))
            .collect::<Result<_>>()?;
        let count = |f: fn(&InstanceCheck) -> bool| checks.iter().filter(|c| !f(c)).count();
        let mechanism_mismatches = count(|c| c.mechanism_ok);
        let flow_mismatches = count(|c| c.flow_ok);
        let network_failures = count(|c| c.family_network_ok);
        if flow_mismatches + network_failures > 0 || (mechanism_mismatches > 0 && family != Family::ColumnSparse) {
            hard_failure = true;
        } else if mechanism_mismatches > 0 {
            greedy_only = true;
        }
        let counterexample = checks.iter().find_map(|c| c.record.clone());
        if let Some(rec) = &counterexample {
            eprintln!("{family:?}: counterexample instance {}", rec["instance"]);
        }
        report.push(json!({
            "family": family.to_possible_value().map(|v| v.get_name().to_string()),
            "instances": n,
            "mechanism_mismatches": mechanism_mismatches,
            "flow_mismatches": flow_mismatches,
            "family_network_failures": network_failures,
            "counterexample": counterexample,
        }));
    }
    print_json(&json!({"seed": seed, "families": report}));
    Ok(if hard_failure {
        EXIT_MISMATCH
    } else if greedy_only {
        EXIT_GREEDY_SUBOPTIMAL
    } else {
        EXIT_OK
    })
}

fn matches_expected(s: &Scenario, out: &Outcome, expected: &Value) -> bool {
    let close = |a: f64, b: &Value| b.as_f64().is_some_and(|b| (a - b).abs() <= 1e-9);
    let labels: Vec<u64> = out.allocation.slots().iter().map(|&i| s.items()[i].label).collect();
    let page_ok = serde_json::from_value::<Vec<u64>>(expected["page"].clone()).is_ok_and(|p| p == labels);
    let payments_ok = expected["payments"].as_object().is_some_and(|m| {
        m.iter().all(|(label, pay)| {
            label
                .parse::<u64>()
                .ok()
                .and_then(|l| s.index_of_label(l))
                .is_some_and(|i| close(out.payments[i], pay))
        })
    });
    page_ok && payments_ok && close(out.gmv, &expected["gmv"]) && close(out.revenue, &expected["revenue"])
}

fn cmd_example1() -> Result<u8> {
    let doc = ScenarioDocument::from_json(EXAMPLE1)?;
    let s = doc.scenario()?;
    let p = doc
        .bid_profile(&s)?
        .ok_or_else(|| Error::Scenario("example fixture has no bids".into()))?;
    let expected: Value = serde_json::from_str(EXAMPLE1_EXPECTED).map_err(|e| Error::Scenario(e.to_string()))?;
    let mut all_ok = true;
    let mut v = json!({});
    for (name, out) in [
        ("fixed_slots", gsp_fixed_slots(&s, &p, 3)?),
        ("integrated", integrated_heuristic(&s, &p)?),
    ] {
        let ok = matches_expected(&s, &out, &expected[name]);
        all_ok &= ok;
        let mut table = page_json(&s, &out);
        table["matches_expected"] = json!(ok);
        v[name] = table;
    }
    print_json(&v);
    Ok(if all_ok { EXIT_OK } else { EXIT_MISMATCH })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn parses_every_subcommand() {
        for cmd in ["run", "sweep-alpha", "solve-constrained", "compare", "experiment4", "oracle-check", "example1"] {
            assert!(Cli::try_parse_from(["ias", cmd]).is_ok(), "{cmd}");
        }
    }

    #[test]
    fn flag_conflicts_are_config_errors() {
        let cli = Cli::try_parse_from(["ias", "compare", "--v0", "3"]).unwrap();
        assert_eq!(execute(&cli).map_err(|e| exit_code(&e)), Err(EXIT_CONFIG));
        let cli = Cli::try_parse_from(["ias", "run", "--alpha", "0.5", "--lambda", "1"]).unwrap();
        assert_eq!(execute(&cli).map_err(|e| exit_code(&e)), Err(EXIT_CONFIG));
    }

    #[test]
    fn exit_codes_by_error_kind() {
        assert_eq!(exit_code(&Error::Infeasible("x".into())), EXIT_INFEASIBLE);
        assert_eq!(exit_code(&Error::InfeasibleThreshold { v0: 1.0, max_volume: 0.5 }), EXIT_INFEASIBLE);
        assert_eq!(exit_code(&Error::Scenario("x".into())), EXIT_CONFIG);
    }

    #[test]
    fn layout_flags_need_parameters() {
        let o = Options { family: Some(Family::RowSparse), c: Some(1), ..Options::default() };
        assert!(flag_layout(&o).is_err());
        let o = Options { family: Some(Family::Budget), c: Some(2), ..Options::default() };
        assert_eq!(flag_layout(&o).unwrap(), Some(LayoutConstraints::Budget { c: 2 }));
    }
}
