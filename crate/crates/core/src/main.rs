//! Command-line front end: Monte Carlo runs, sweep tables, exact oracle
//! values, self-checks, and single-round traces.

use std::fs;
use std::path::PathBuf;
use std::process::ExitCode;

use anyhow::{Context as _, Result};
use clap::{Args, Parser, Subcommand, ValueEnum};
use rand::SeedableRng;
use rand_chacha::ChaCha12Rng;

use pmsim::channel::{adjoint, depolarizing, gamma_avg, lr_confinement_check, pm_equivalence_check};
use pmsim::harness::{
    self, closed_form_sigma, estimate_sigma, estimate_sigma_traced, exact_sigma,
    exact_sigma_enumerated, format_sig9, invariance_experiments, mix_seed, sweep_fig4,
    InitialState, RunConfig,
};
use pmsim::protocol::{plan_round, render_trace, run_round_recorded, SamplingMode};
use pmsim::square::PMSquare;

#[derive(Parser)]
#[command(name = "pmsim", version, about = "Sequential Peres-Mermin measurements on a shared two-qubit system")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Monte Carlo estimate of the witness for one configuration
    Run(RunArgs),
    /// Estimate per (passerby count, random state) cell; plot-ready table
    Sweep(SweepArgs),
    /// Exact witness values: closed form, channel oracle, enumeration
    Exact(ExactArgs),
    /// Structural invariance experiments and channel self-checks
    Check(CheckArgs),
    /// Plan and run a single round, printing its event log
    Trace(TraceArgs),
}

#[derive(Clone, Copy, ValueEnum)]
enum ModeArg {
    /// Passersby draw each measurement independently (uniform over nine)
    Replace,
    /// Passersby draw an ordered triple of distinct measurements
    Distinct,
}

impl From<ModeArg> for SamplingMode {
    fn from(mode: ModeArg) -> SamplingMode {
        match mode {
            ModeArg::Replace => SamplingMode::WithReplacement,
            ModeArg::Distinct => SamplingMode::DistinctTriple,
        }
    }
}

#[derive(Clone, Copy, ValueEnum)]
enum FormatArg {
    Csv,
    Json,
}

#[derive(Args)]
struct RunArgs {
    /// Number of passerby observers
    #[arg(long, default_value_t = 1)]
    passersby: u32,
    /// Rounds to simulate
    #[arg(long, default_value_t = 100_000)]
    rounds: usize,
    /// Master seed; rounds use per-index substreams
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Initial state: mixed | haar | file:<path>
    #[arg(long, default_value = "mixed")]
    state: String,
    /// Passerby sampling mode
    #[arg(long, value_enum, default_value_t = ModeArg::Replace)]
    mode: ModeArg,
    /// Worker threads (results identical for any value)
    #[arg(long, default_value_t = 1)]
    workers: usize,
    /// Write the result here instead of stdout
    #[arg(long)]
    out: Option<PathBuf>,
    #[arg(long, value_enum, default_value_t = FormatArg::Csv)]
    format: FormatArg,
    /// Print every round's event log to stderr (forces a serial run)
    #[arg(long)]
    verbose: bool,
}

#[derive(Args)]
struct SweepArgs {
    /// Passerby counts, comma separated
    #[arg(long, value_delimiter = ',', default_value = "1,2,3")]
    passersby: Vec<u32>,
    /// Random initial pure states per passerby count
    #[arg(long, default_value_t = 10)]
    states: u32,
    #[arg(long, default_value_t = 100_000)]
    rounds: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long, value_enum, default_value_t = ModeArg::Replace)]
    mode: ModeArg,
    #[arg(long, default_value_t = 1)]
    workers: usize,
    #[arg(long)]
    out: Option<PathBuf>,
    #[arg(long, value_enum, default_value_t = FormatArg::Csv)]
    format: FormatArg,
}

#[derive(Args)]
struct ExactArgs {
    #[arg(long, default_value_t = 1)]
    passersby: u32,
    #[arg(long, value_enum, default_value_t = ModeArg::Replace)]
    mode: ModeArg,
    /// Also run the full outcome-branch enumeration
    #[arg(long)]
    enumerate: bool,
    /// Branch-evaluation budget for the enumeration
    #[arg(long, default_value_t = harness::DEFAULT_ENUMERATION_BUDGET)]
    budget: u128,
    #[arg(long)]
    out: Option<PathBuf>,
    #[arg(long, value_enum, default_value_t = FormatArg::Csv)]
    format: FormatArg,
}

#[derive(Args)]
struct CheckArgs {
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Random trials for the channel-indistinguishability probe
    #[arg(long, default_value_t = 200)]
    trials: usize,
}

#[derive(Args)]
struct TraceArgs {
    #[arg(long, default_value_t = 1)]
    passersby: u32,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Initial state: mixed | haar | file:<path>
    #[arg(long, default_value = "mixed")]
    state: String,
    #[arg(long, value_enum, default_value_t = ModeArg::Replace)]
    mode: ModeArg,
}

fn parse_state(spec: &str, seed: u64) -> Result<InitialState> {
    match spec {
        "mixed" => Ok(InitialState::MaximallyMixed),
        "haar" => Ok(InitialState::Haar {
            seed: mix_seed(seed, 0x4A41, 0),
        }),
        other => {
            let path = other.strip_prefix("file:").with_context(|| {
                format!("unknown state '{other}'; expected mixed, haar, or file:<path>")
            })?;
            let text = fs::read_to_string(path)
                .with_context(|| format!("reading state file {path}"))?;
            let rho = harness::parse_state_json(&text)?;
            Ok(InitialState::Explicit(Box::new(rho)))
        }
    }
}

fn emit(out: &Option<PathBuf>, content: &str) -> Result<()> {
    match out {
        Some(path) => fs::write(path, content)
            .with_context(|| format!("writing {}", path.display()))?,
        None => print!("{content}"),
    }
    Ok(())
}

fn cmd_run(args: RunArgs) -> Result<()> {
    let cfg = RunConfig {
        n_passersby: args.passersby as usize,
        rounds: args.rounds,
        seed: args.seed,
        initial_state: parse_state(&args.state, args.seed)?,
        sampling_mode: args.mode.into(),
        workers: args.workers,
    };
    let estimate = if args.verbose {
        estimate_sigma_traced(&cfg, |round, trace| {
            eprintln!("round {round} (context {}):", trace.context);
            eprint!("{}", render_trace(trace));
        })?
    } else {
        estimate_sigma(&cfg)?
    };
    let content = match args.format {
        FormatArg::Csv => harness::estimate_csv(&cfg, &estimate),
        FormatArg::Json => harness::estimate_json(&estimate) + "\n",
    };
    emit(&args.out, &content)
}

fn cmd_sweep(args: SweepArgs) -> Result<()> {
    let rows = sweep_fig4(
        &args.passersby,
        args.states,
        args.rounds,
        args.seed,
        args.mode.into(),
        args.workers,
    )?;
    let content = match args.format {
        FormatArg::Csv => harness::sweep_csv(&rows),
        FormatArg::Json => harness::sweep_json(&rows) + "\n",
    };
    emit(&args.out, &content)
}

fn cmd_exact(args: ExactArgs) -> Result<()> {
    let mode: SamplingMode = args.mode.into();
    let n = args.passersby;
    let exact = exact_sigma(n, mode)?;
    let enumerated = if args.enumerate {
        Some(exact_sigma_enumerated(n, mode, args.budget)?)
    } else {
        None
    };
    let content = match args.format {
        FormatArg::Csv => {
            let mut s = String::from("n_passersby,mode,exact_sigma,closed_form,enumerated\n");
            s.push_str(&format!(
                "{},{},{},{},{}\n",
                n,
                mode_name(mode),
                format_sig9(exact),
                format_sig9(closed_form_sigma(n)),
                enumerated.map_or_else(String::new, format_sig9),
            ));
            s
        }
        FormatArg::Json => {
            let value = serde_json::json!({
                "n_passersby": n,
                "mode": mode_name(mode),
                "exact_sigma": harness::round_sig9(exact),
                "closed_form": harness::round_sig9(closed_form_sigma(n)),
                "enumerated": enumerated.map(harness::round_sig9),
            });
            serde_json::to_string_pretty(&value)? + "\n"
        }
    };
    emit(&args.out, &content)
}

fn mode_name(mode: SamplingMode) -> &'static str {
    match mode {
        SamplingMode::WithReplacement => "replace",
        SamplingMode::DistinctTriple => "distinct",
    }
}

/// Runs every self-check; returns false when any fails.
fn cmd_check(args: CheckArgs) -> Result<bool> {
    let mut all_pass = true;

    let invariance = invariance_experiments()?;
    println!("invariance experiments: {invariance}");
    all_pass &= invariance.pass;

    let mut rng = ChaCha12Rng::seed_from_u64(args.seed);
    let equivalence = pm_equivalence_check(
        &gamma_avg(),
        &depolarizing(5.0 / 9.0)?,
        args.trials.max(1),
        &mut rng,
    );
    println!("channel indistinguishability (averaged vs depolarizing 5/9): {equivalence}");
    all_pass &= equivalence.pass;

    let confinement = lr_confinement_check();
    println!("single-qubit sector confinement: {confinement}");
    all_pass &= confinement.pass;

    let square = PMSquare::new();
    let dual = adjoint(&gamma_avg());
    let mut max_shrink_error: f64 = 0.0;
    for obs in square.iter() {
        let shrunk = dual.apply_operator(obs.matrix());
        max_shrink_error =
            max_shrink_error.max(shrunk.max_abs_diff(&obs.matrix().scale(5.0 / 9.0)));
    }
    let shrink_pass = max_shrink_error <= 1e-12;
    println!(
        "{}: adjoint shrink factor 5/9 on all nine observables (max deviation {:.3e})",
        if shrink_pass { "PASS" } else { "FAIL" },
        max_shrink_error
    );
    all_pass &= shrink_pass;

    Ok(all_pass)
}

fn cmd_trace(args: TraceArgs) -> Result<()> {
    let rho0 = parse_state(&args.state, args.seed)?.resolve();
    let square = PMSquare::new();
    let mut rng = harness::round_rng(args.seed, 0);
    let plan = plan_round(args.passersby as usize, args.mode.into(), &mut rng);
    let trace = run_round_recorded(&square, &rho0, &plan, &mut rng);
    println!(
        "context {} (main order {} {} {}), main product {:+}",
        trace.context, plan.main_order[0], plan.main_order[1], plan.main_order[2], trace.main_product
    );
    print!("{}", render_trace(&trace));
    Ok(())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match cli.command {
        Command::Run(args) => cmd_run(args).map(|()| true),
        Command::Sweep(args) => cmd_sweep(args).map(|()| true),
        Command::Exact(args) => cmd_exact(args).map(|()| true),
        Command::Check(args) => cmd_check(args),
        Command::Trace(args) => cmd_trace(args).map(|()| true),
    };
    match result {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::from(3),
        Err(err) => {
            eprintln!("error: {err:#}");
            ExitCode::from(2)
        }
    }
}
