//! `dyule`: experiments with α-delayed Yule processes.

use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde_json::json;

use delayed_yule::analytic::{
    self, beta_c, beta_critical, mgf_closed_form_half, mgf_fixed_point, mgf_solve_ode,
    w_loglog_moment, MgfGrid,
};
use delayed_yule::engine::{self, LimitSamplerConfig, ReplicateConfig, SimConfig, StopReason};
use delayed_yule::generator::{self, SequenceConfig};
use delayed_yule::io::{self, RunManifest, SampleHeader};
use delayed_yule::limits::{self, RecursionConfig};
use delayed_yule::stats;
use delayed_yule::verify::{self, Criterion, Level, VerifyConfig};
use delayed_yule::Error;

const EXIT_FAILURE: u8 = 1;
const EXIT_USAGE: u8 = 2;

#[derive(Parser)]
#[command(
    name = "dyule",
    version,
    about = "Simulation and numerical checks for alpha-delayed Yule processes"
)]
struct Cli {
    /// Seed for all randomness.
    #[arg(long, global = true, env = "DYULE_SEED", default_value_t = 0)]
    seed: u64,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Simulate V^(alpha)(t) and summarise replicates.
    Simulate(SimulateArgs),
    /// Sample the martingale limit A_beta(inf).
    Limits(LimitsArgs),
    /// Compute the moment generating function phi_beta on a grid.
    Phi(PhiArgs),
    /// Solve for the critical parameter beta_c.
    Betac(BetacArgs),
    /// Generator checks and the generation-profile chain.
    Generator {
        #[command(subcommand)]
        action: GeneratorAction,
    },
    /// Run the acceptance suite.
    Verify(VerifyArgs),
}

fn unit_interval(name: &'static str) -> impl Fn(&str) -> Result<f64, String> + Clone {
    move |s| {
        let x: f64 = s.parse().map_err(|_| format!("{name} must be a number"))?;
        if x > 0.0 && x <= 1.0 {
            Ok(x)
        } else {
            Err(format!("{name} must be in (0,1]"))
        }
    }
}

fn non_negative(s: &str) -> Result<f64, String> {
    match s.parse::<f64>() {
        Ok(x) if x >= 0.0 && x.is_finite() => Ok(x),
        _ => Err("must be a finite number >= 0".into()),
    }
}

#[derive(Clone, Copy, ValueEnum)]
enum Format {
    Csv,
    Json,
}

#[derive(Args)]
struct SimulateArgs {
    #[arg(long, value_parser = unit_interval("alpha"))]
    alpha: f64,
    #[arg(long, value_parser = non_negative)]
    horizon: f64,
    #[arg(long, default_value_t = 1, value_parser = clap::value_parser!(u64).range(1..))]
    replicates: u64,
    /// Population cap per run.
    #[arg(long, default_value_t = engine::DEFAULT_POPULATION_CAP)]
    cap: usize,
    #[arg(long, default_value_t = engine::DEFAULT_EVENT_CAP)]
    event_cap: usize,
    #[arg(long, default_value = ".")]
    out: PathBuf,
    /// Format of the single-run trajectory file.
    #[arg(long, value_enum, default_value = "csv")]
    format: Format,
}

#[derive(Clone, Copy, PartialEq, ValueEnum)]
enum LimitMethod {
    Engine,
    Recursive,
    Both,
}

#[derive(Args)]
struct LimitsArgs {
    #[arg(long, value_parser = unit_interval("beta"))]
    beta: f64,
    #[arg(long, value_enum, default_value = "both")]
    method: LimitMethod,
    #[arg(long, default_value_t = 10_000)]
    n: usize,
    #[arg(long, default_value_t = 15.0, value_parser = non_negative)]
    horizon: f64,
    #[arg(long, default_value_t = limits::DEFAULT_DEPTH)]
    depth: u32,
    /// Engine replicates stop once the population reaches this size.
    #[arg(long, default_value_t = engine::DEFAULT_STOP_POPULATION)]
    stop_population: usize,
    /// Do not branch particles at or above this height (beta <= 1/2 only).
    #[arg(long)]
    freeze_height: Option<u8>,
    #[arg(long, default_value = ".")]
    out: PathBuf,
}

#[derive(Clone, Copy, PartialEq, ValueEnum)]
enum PhiMethod {
    Ode,
    FixedPoint,
    Both,
}

#[derive(Args)]
struct PhiArgs {
    #[arg(long, value_parser = unit_interval("beta"))]
    beta: f64,
    #[arg(long, value_enum, default_value = "ode")]
    method: PhiMethod,
    #[arg(long, default_value_t = 10.0)]
    rmax: f64,
    #[arg(long, default_value_t = 1000)]
    steps: usize,
    #[arg(long, default_value_t = 1e-8)]
    tol: f64,
    #[arg(long, default_value_t = 1000)]
    max_iter: usize,
    #[arg(long, default_value = ".")]
    out: PathBuf,
}

#[derive(Args)]
struct BetacArgs {
    #[arg(long, default_value_t = 1e-12)]
    tol: f64,
}

#[derive(Subcommand)]
enum GeneratorAction {
    /// Check L a_beta = (2 beta - 1) a_(alpha beta) on random states.
    EigenCheck {
        #[arg(long, default_value_t = 1000)]
        trials: usize,
        /// Number of random branchings used to build each state.
        #[arg(long, default_value_t = 30)]
        max_steps: usize,
    },
    /// |L f_n(V)| / sup|f_n| at the full frontier of depth n.
    NormWitness {
        #[arg(long, value_parser = unit_interval("alpha"))]
        alpha: f64,
        #[arg(long)]
        n: u32,
    },
    /// Simulate the chain on generation-count vectors.
    SequenceSim {
        #[arg(long, value_parser = unit_interval("alpha"))]
        alpha: f64,
        #[arg(long, value_parser = non_negative)]
        horizon: f64,
        #[arg(long, default_value_t = 10_000)]
        replicates: usize,
        #[arg(long, default_value = ".")]
        out: PathBuf,
    },
}

#[derive(Args)]
struct VerifyArgs {
    #[arg(long, default_value = "quick", value_parser = ["quick", "full"])]
    level: String,
    /// Run only these criteria (name or number); repeatable.
    #[arg(long)]
    only: Vec<String>,
    #[arg(long, default_value = "verify_out")]
    out: PathBuf,
    #[arg(long, hide = true, default_value_t = verify::BETA_C_REFERENCE)]
    beta_c_reference: f64,
}

enum Failure {
    Usage(String),
    Runtime(String),
    Verification(String),
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        match e {
            Error::Domain(_) | Error::Precondition(_) | Error::Parse(_) => {
                Failure::Usage(e.to_string())
            }
            _ => Failure::Runtime(e.to_string()),
        }
    }
}

type CmdResult = Result<(), Failure>;

fn main() -> ExitCode {
    let cli = Cli::parse();
    let seed = cli.seed;
    let outcome = match cli.command {
        Command::Simulate(a) => simulate(a, seed),
        Command::Limits(a) => limits_cmd(a, seed),
        Command::Phi(a) => phi(a),
        Command::Betac(a) => betac(a),
        Command::Generator { action } => generator_cmd(action, seed),
        Command::Verify(a) => verify_cmd(a, seed),
    };
    match outcome {
        Ok(()) => ExitCode::SUCCESS,
        Err(Failure::Usage(m)) => {
            eprintln!("error: {m}");
            ExitCode::from(EXIT_USAGE)
        }
        Err(Failure::Runtime(m)) => {
            eprintln!("error: {m}");
            ExitCode::from(EXIT_FAILURE)
        }
        Err(Failure::Verification(m)) => {
            eprintln!("verification failed: {m}");
            ExitCode::from(EXIT_FAILURE)
        }
    }
}

fn print_json(v: &serde_json::Value) {
    println!(
        "{}",
        serde_json::to_string_pretty(v).expect("values serialize")
    );
}

/// Writes `summary` as `<name>` in `out`, then the manifest.
fn finish(
    mut manifest: RunManifest,
    out: &Path,
    summary_name: &str,
    summary: &serde_json::Value,
) -> CmdResult {
    let path = out.join(summary_name);
    io::write_json(&path, summary)?;
    manifest.outputs.push(path);
    manifest.finish();
    manifest.write(&out.join("manifest.json"))?;
    Ok(())
}

fn simulate(a: SimulateArgs, seed: u64) -> CmdResult {
    let params = json!({"alpha": a.alpha, "horizon": a.horizon, "replicates": a.replicates,
        "cap": a.cap, "event_cap": a.event_cap});
    let mut manifest = RunManifest::start("simulate", params.clone(), Some(seed));
    std::fs::create_dir_all(&a.out)
        .map_err(|e| Failure::Usage(format!("cannot create {}: {e}", a.out.display())))?;

    if a.replicates == 1 {
        let mut cfg = SimConfig::new(a.alpha, a.horizon, seed);
        cfg.population_cap = a.cap;
        cfg.event_cap = a.event_cap;
        let tr = engine::simulate(&cfg)?;
        let path = match a.format {
            Format::Csv => {
                let p = a.out.join("trajectory.csv");
                io::write_trajectory_csv(&tr, io::create_file(&p)?)?;
                p
            }
            Format::Json => {
                let p = a.out.join("trajectory.json");
                io::write_trajectory_json(&tr, io::create_file(&p)?)?;
                p
            }
        };
        manifest.outputs.push(path);
        let summary = json!({
            "schema_version": io::SCHEMA_VERSION,
            "parameters": params,
            "seed": seed,
            "jumps": tr.jumps(),
            "final_cardinality": tr.jumps() + 1,
            "stop_reason": tr.stop_reason(),
        });
        print_json(&summary);
        return finish(manifest, &a.out, "summary.json", &summary);
    }

    let mut cfg = ReplicateConfig::new(a.alpha, a.horizon, a.replicates as usize, seed);
    cfg.population_cap = a.cap;
    cfg.event_cap = a.event_cap;
    let outcomes = engine::replicate_profiles(&cfg)?;
    let csv_path = a.out.join("replicates.csv");
    {
        use std::io::Write;
        let mut w = io::create_file(&csv_path)?;
        let line = |w: &mut dyn Write, s: String| {
            writeln!(w, "{s}").map_err(|e| Failure::Runtime(e.to_string()))
        };
        line(
            &mut w,
            "replicate,cardinality,max_height,end_time,stop_reason".into(),
        )?;
        for (i, o) in outcomes.iter().enumerate() {
            line(
                &mut w,
                format!(
                    "{i},{},{},{},{:?}",
                    o.population(),
                    o.counts.len() - 1,
                    o.end_time,
                    o.stop
                ),
            )?;
        }
        w.flush().map_err(|e| Failure::Runtime(e.to_string()))?;
    }
    manifest.outputs.push(csv_path);

    let sizes: Vec<f64> = outcomes.iter().map(|o| o.population() as f64).collect();
    let (mean, se) = stats::mean_se(&sizes)?;
    let truncated = outcomes
        .iter()
        .filter(|o| o.stop != StopReason::Horizon)
        .count();
    let mut summary = json!({
        "schema_version": io::SCHEMA_VERSION,
        "parameters": params,
        "seed": seed,
        "mean_cardinality": mean,
        "mean_cardinality_se": se,
        "truncated": truncated,
    });
    if a.alpha == 0.5 {
        let counts: Vec<u64> = outcomes.iter().map(|o| o.population() - 1).collect();
        match stats::poisson_gof(&counts, a.horizon) {
            Ok(r) => summary["poisson_fit"] = json!(r.named("jumps_vs_poisson").with_seed(seed)),
            Err(e) => summary["poisson_fit_skipped"] = json!(e.to_string()),
        }
    }
    if a.alpha == 1.0 {
        summary["expected_mean_cardinality"] = json!(a.horizon.exp());
    }
    print_json(&summary);
    finish(manifest, &a.out, "summary.json", &summary)
}

fn limits_cmd(a: LimitsArgs, seed: u64) -> CmdResult {
    let params = json!({"beta": a.beta, "method": a.method.to_possible_value().map(|v| v.get_name().to_string()), "n": a.n,
        "horizon": a.horizon, "depth": a.depth, "stop_population": a.stop_population,
        "freeze_height": a.freeze_height});
    let mut manifest = RunManifest::start("limits", params.clone(), Some(seed));
    std::fs::create_dir_all(&a.out)
        .map_err(|e| Failure::Usage(format!("cannot create {}: {e}", a.out.display())))?;
    let regime = if a.beta <= beta_c() {
        "degenerate: beta <= beta_c, A_beta(inf) = 0 almost surely"
    } else if a.beta == 0.5 {
        "degenerate: a_1/2 is identically 1, every sample equals 1"
    } else {
        "non-degenerate: mean-one limit"
    };
    let mut summary = json!({
        "schema_version": io::SCHEMA_VERSION,
        "parameters": params,
        "seed": seed,
        "beta_c": beta_c(),
        "regime": regime,
    });
    let mut engine_values = None;
    let mut recursive_values = None;

    if a.method != LimitMethod::Recursive {
        let mut cfg = LimitSamplerConfig::new(a.beta, a.horizon, a.n, seed);
        cfg.stop_population = a.stop_population;
        cfg.freeze_height = a.freeze_height;
        let s = engine::sample_limit_engine(&cfg)?;
        let path = a.out.join("samples_engine.txt");
        let header = SampleHeader {
            sampler: "engine".into(),
            beta: Some(a.beta),
            alpha: Some(1.0),
            horizon: Some(a.horizon),
            seed,
            n: a.n,
            ..Default::default()
        };
        io::write_samples(&header, &s.values, io::create_file(&path)?)?;
        manifest.outputs.push(path);
        summary["engine"] = json!({
            "median": stats::median(&s.values)?,
            "mean": stats::mean_se(&s.values).map(|m| m.0).ok(),
            "truncated": s.truncated,
            "max_pruning_error": s.error_bounds.iter().copied().fold(0.0, f64::max),
        });
        if a.beta <= beta_c() {
            let half = LimitSamplerConfig {
                horizon: a.horizon / 2.0,
                ..cfg.clone()
            };
            let h = engine::sample_limit_engine(&half)?;
            summary["engine"]["median_at_half_horizon"] = json!(stats::median(&h.values)?);
        }
        engine_values = Some(s.values);
    }
    if a.method != LimitMethod::Engine {
        let cfg = RecursionConfig::new(a.beta, a.depth, a.n, seed);
        let values = limits::sample_limit_recursive(&cfg)?;
        let path = a.out.join("samples_recursive.txt");
        let header = SampleHeader {
            sampler: "recursive".into(),
            beta: Some(a.beta),
            depth: Some(a.depth),
            seed,
            n: a.n,
            ..Default::default()
        };
        io::write_samples(&header, &values, io::create_file(&path)?)?;
        manifest.outputs.push(path);
        summary["recursive"] = json!({
            "median": stats::median(&values)?,
            "mean": stats::mean_se(&values).map(|m| m.0).ok(),
        });
        if a.beta != 0.5 && a.n >= 20 {
            summary["recursive"]["depth_diagnostic"] = json!(limits::depth_diagnostic(&cfg)?);
        }
        recursive_values = Some(values);
    }
    let ks_ok = |v: &[f64]| v.len() >= 20 && a.beta != 0.5;
    if a.beta == 1.0 {
        for (key, v) in [("engine", &engine_values), ("recursive", &recursive_values)] {
            if let Some(v) = v.as_ref().filter(|v| ks_ok(v)) {
                summary[key]["ks_vs_exp1"] =
                    json!(stats::ks_one_sample(v, stats::exp1_cdf)?.with_seed(seed));
            }
        }
    }
    if let (Some(e), Some(r)) = (&engine_values, &recursive_values) {
        if ks_ok(e) && ks_ok(r) {
            summary["engine_vs_recursive"] = json!(stats::ks_two_sample(e, r)?.with_seed(seed));
        }
    }
    print_json(&summary);
    finish(manifest, &a.out, "report.json", &summary)
}

fn phi(a: PhiArgs) -> CmdResult {
    let params = json!({"beta": a.beta, "rmax": a.rmax, "steps": a.steps, "tol": a.tol, "max_iter": a.max_iter});
    let mut manifest = RunManifest::start("phi", params.clone(), None);
    std::fs::create_dir_all(&a.out)
        .map_err(|e| Failure::Usage(format!("cannot create {}: {e}", a.out.display())))?;
    let mut summary = json!({"schema_version": io::SCHEMA_VERSION, "parameters": params});
    let mut grids: Vec<MgfGrid> = Vec::new();
    if a.beta == 0.5 {
        eprintln!("note: beta = 1/2 has the closed form phi(r) = exp(-r)");
        grids.push(mgf_closed_form_half(a.rmax, a.steps)?);
    } else {
        if a.method != PhiMethod::FixedPoint {
            grids.push(mgf_solve_ode(a.beta, a.rmax, a.steps)?);
        }
        if a.method != PhiMethod::Ode {
            grids.push(mgf_fixed_point(a.beta, a.rmax, a.steps, a.max_iter, a.tol)?);
        }
    }
    for g in &grids {
        let path = a.out.join(format!("phi_{}.csv", g.method.as_str()));
        io::write_mgf_csv(g, io::create_file(&path)?)?;
        manifest.outputs.push(path);
        let mut entry = json!({
            "points": g.len(),
            "mean_estimate": g.mean_estimate(),
            "invariants": g.check_invariants().map(|_| "ok".to_string()).unwrap_or_else(|e| e.to_string()),
        });
        if let Some(it) = g.iterations {
            entry["iterations"] = json!(it);
        }
        if a.beta == 1.0 {
            entry["max_deviation_from_1_over_1_plus_r"] =
                json!(g.sup_deviation(|r| 1.0 / (1.0 + r), g.r_max()));
        }
        summary[g.method.as_str()] = entry;
    }
    if grids.len() == 2 {
        let r_hi = grids[0].r_max().min(grids[1].r_max());
        summary["sup_distance"] = json!(grids[1].sup_distance(&grids[0], r_hi));
        summary["sup_distance_range"] = json!([0.0, r_hi]);
    }
    print_json(&summary);
    finish(manifest, &a.out, "phi_report.json", &summary)
}

fn betac(a: BetacArgs) -> CmdResult {
    let b = beta_critical(a.tol)?;
    let crit = w_loglog_moment(b)?;
    println!("beta_c {b}");
    println!("residual {}", analytic::critical_equation(b));
    println!("criterion {crit}");
    println!("ln2 {}", std::f64::consts::LN_2);
    Ok(())
}

fn generator_cmd(action: GeneratorAction, seed: u64) -> CmdResult {
    match action {
        GeneratorAction::EigenCheck { trials, max_steps } => {
            let eps = generator::eigen_identity_error(trials, max_steps, seed)?;
            print_json(
                &json!({"trials": trials, "seed": seed, "max_relative_error_eps": eps, "pass": eps <= 8.0}),
            );
            if eps > 8.0 {
                return Err(Failure::Verification(
                    "eigen identity error above 8 eps".into(),
                ));
            }
            Ok(())
        }
        GeneratorAction::NormWitness { alpha, n } => {
            println!("{}", generator::norm_witness(alpha, n)?);
            Ok(())
        }
        GeneratorAction::SequenceSim {
            alpha,
            horizon,
            replicates,
            out,
        } => {
            let params = json!({"alpha": alpha, "horizon": horizon, "replicates": replicates});
            let mut manifest =
                RunManifest::start("generator sequence-sim", params.clone(), Some(seed));
            std::fs::create_dir_all(&out)
                .map_err(|e| Failure::Usage(format!("cannot create {}: {e}", out.display())))?;
            let tr = generator::simulate_sequence(&SequenceConfig::new(alpha, horizon, seed))?;
            let path = out.join("sequence.csv");
            io::write_sequence_csv(&tr, io::create_file(&path)?)?;
            manifest.outputs.push(path);
            let finals = generator::sample_sequences(alpha, horizon, replicates, seed)?;
            let jumps: Vec<u64> = finals.iter().map(|s| s.total() - 1).collect();
            let mean = jumps.iter().sum::<u64>() as f64 / jumps.len().max(1) as f64;
            let mut summary = json!({
                "schema_version": io::SCHEMA_VERSION,
                "parameters": params,
                "seed": seed,
                "mean_jumps": mean,
            });
            if alpha == 0.5 {
                match stats::poisson_gof(&jumps, horizon) {
                    Ok(r) => {
                        summary["poisson_fit"] = json!(r.named("jumps_vs_poisson").with_seed(seed))
                    }
                    Err(e) => summary["poisson_fit_skipped"] = json!(e.to_string()),
                }
            }
            print_json(&summary);
            finish(manifest, &out, "summary.json", &summary)
        }
    }
}

fn verify_cmd(a: VerifyArgs, seed: u64) -> CmdResult {
    let level: Level = a.level.parse()?;
    let only = a
        .only
        .iter()
        .map(|s| s.parse::<Criterion>())
        .collect::<Result<Vec<_>, _>>()?;
    let cfg = VerifyConfig {
        level,
        seed,
        out_dir: Some(a.out.clone()),
        only,
        beta_c_reference: a.beta_c_reference,
    };
    let mut manifest = RunManifest::start(
        "verify",
        json!({"level": a.level, "only": a.only, "beta_c_reference": a.beta_c_reference}),
        Some(seed),
    );
    let report = verify::run(&cfg)?;
    print!("{}", report.table());
    manifest.outputs = report
        .results
        .iter()
        .map(|r| {
            a.out
                .join(format!("{:02}_{}.json", r.number, r.criterion.name()))
        })
        .collect();
    manifest.finish();
    manifest.write(&a.out.join("manifest.json"))?;
    if report.pass() {
        println!("all {} criteria passed", report.results.len());
        Ok(())
    } else {
        let names: Vec<&str> = report.failed().iter().map(|c| c.name()).collect();
        Err(Failure::Verification(names.join(", ")))
    }
}
