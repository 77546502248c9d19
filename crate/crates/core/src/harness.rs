//! Monte Carlo estimation of the witness, exact oracle values, the
//! closed-form prediction, sweep experiments, and report formatting.
//!
//! Reproducibility: every round draws from its own ChaCha12 stream keyed
//! by `(seed, round index)`, so results do not depend on execution order
//! or the worker count, and the per-context aggregation folds the rounds
//! in index order.

use std::collections::BTreeMap;
use std::fmt;

use itertools::Itertools;
use rand::SeedableRng;
use rand_chacha::ChaCha12Rng;
use serde::Serialize;

use crate::algebra::{random_pure_state, DensityMatrix, Operator};
use crate::channel::gamma_power;
use crate::measurement::{
    lueders_update, outcome_distribution, sequential_expectation, Outcome, ZERO_BRANCH_CUTOFF,
};
use crate::protocol::{plan_round, run_round, Observer, RoundPlan, RoundTrace, SamplingMode};
use crate::square::{
    brute_force_nc_bound, contexts, sigma_from_context_means, ContextId, PMIndex, PMSquare,
};
use crate::Error;

/// Default ceiling on outcome-branch evaluations in the full enumeration.
/// One passerby stays well inside; two already require raising it.
pub const DEFAULT_ENUMERATION_BUDGET: u128 = 200_000_000;

/// Initial state prepared at the start of every round.
#[derive(Clone, Debug)]
pub enum InitialState {
    MaximallyMixed,
    /// Haar-random pure state drawn once per configuration from its own
    /// seed.
    Haar { seed: u64 },
    Explicit(Box<DensityMatrix>),
}

impl InitialState {
    pub fn resolve(&self) -> DensityMatrix {
        match self {
            InitialState::MaximallyMixed => DensityMatrix::maximally_mixed(),
            InitialState::Haar { seed } => {
                random_pure_state(&mut ChaCha12Rng::seed_from_u64(*seed))
            }
            InitialState::Explicit(rho) => **rho,
        }
    }
}

/// One Monte Carlo configuration.
#[derive(Clone, Debug)]
pub struct RunConfig {
    pub n_passersby: usize,
    pub rounds: usize,
    pub seed: u64,
    pub initial_state: InitialState,
    pub sampling_mode: SamplingMode,
    /// Worker threads; results are bit-identical for every value.
    pub workers: usize,
}

impl RunConfig {
    fn validate(&self) -> Result<(), Error> {
        if self.rounds == 0 {
            return Err(Error::InvalidConfig("rounds must be at least 1".into()));
        }
        if self.workers == 0 {
            return Err(Error::InvalidConfig("workers must be at least 1".into()));
        }
        Ok(())
    }
}

/// Mean, round count, and standard error of one context.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct ContextEstimate {
    pub context: ContextId,
    pub mean: f64,
    pub count: usize,
    pub stderr: f64,
}

/// The assembled witness estimate.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct SigmaEstimate {
    /// Per-context statistics in report order R1..C3.
    pub per_context: Vec<ContextEstimate>,
    pub sigma: f64,
    pub sigma_stderr: f64,
    pub rounds_used: usize,
}

/// The random stream of one round: stream `round + 1` of the seeded
/// ChaCha12 generator (stream 0 is left unused).
pub fn round_rng(seed: u64, round: u64) -> ChaCha12Rng {
    let mut rng = ChaCha12Rng::seed_from_u64(seed);
    rng.set_stream(round + 1);
    rng
}

fn run_single_round(
    square: &PMSquare,
    rho0: &DensityMatrix,
    cfg: &RunConfig,
    round: u64,
) -> (RoundPlan, RoundTrace) {
    let mut rng = round_rng(cfg.seed, round);
    let plan = plan_round(cfg.n_passersby, cfg.sampling_mode, &mut rng);
    let trace = run_round(square, rho0, &plan, &mut rng);
    (plan, trace)
}

fn assemble(results: &[(ContextId, i8)], rounds: usize) -> Result<SigmaEstimate, Error> {
    let mut sums = [0.0f64; 6];
    let mut counts = [0usize; 6];
    for (ctx, product) in results {
        let slot = ContextId::ALL.iter().position(|c| c == ctx).unwrap();
        sums[slot] += *product as f64;
        counts[slot] += 1;
    }
    let mut per_context = Vec::with_capacity(6);
    let mut means = BTreeMap::new();
    let mut variance_sum = 0.0;
    for (slot, id) in ContextId::ALL.into_iter().enumerate() {
        let count = counts[slot];
        if count == 0 {
            return Err(Error::UnsampledContext {
                context: id,
                rounds,
            });
        }
        let mean = sums[slot] / count as f64;
        // Products are ±1, so the sum of squares is the count.
        let sample_variance = if count > 1 {
            ((count as f64 - sums[slot] * sums[slot] / count as f64) / (count as f64 - 1.0))
                .max(0.0)
        } else {
            0.0
        };
        let stderr = (sample_variance / count as f64).sqrt();
        variance_sum += sample_variance / count as f64;
        per_context.push(ContextEstimate {
            context: id,
            mean,
            count,
            stderr,
        });
        means.insert(id, mean);
    }
    Ok(SigmaEstimate {
        per_context,
        sigma: sigma_from_context_means(&means)?,
        sigma_stderr: variance_sum.sqrt(),
        rounds_used: rounds,
    })
}

/// Runs `cfg.rounds` independent rounds and assembles the witness. The
/// result is a pure function of the configuration: the same seed gives
/// bit-identical output for any worker count.
pub fn estimate_sigma(cfg: &RunConfig) -> Result<SigmaEstimate, Error> {
    cfg.validate()?;
    let square = PMSquare::new();
    let rho0 = cfg.initial_state.resolve();
    let results: Vec<(ContextId, i8)> = if cfg.workers > 1 {
        let pool = rayon::ThreadPoolBuilder::new()
            .num_threads(cfg.workers)
            .build()
            .map_err(|e| Error::InvalidConfig(format!("worker pool: {e}")))?;
        pool.install(|| {
            use rayon::prelude::*;
            (0..cfg.rounds as u64)
                .into_par_iter()
                .map(|round| {
                    let (_, trace) = run_single_round(&square, &rho0, cfg, round);
                    (trace.context, trace.main_product)
                })
                .collect()
        })
    } else {
        (0..cfg.rounds as u64)
            .map(|round| {
                let (_, trace) = run_single_round(&square, &rho0, cfg, round);
                (trace.context, trace.main_product)
            })
            .collect()
    };
    assemble(&results, cfg.rounds)
}

/// As [`estimate_sigma`], but serially, invoking `on_round` with every
/// finished round trace. Produces bit-identical estimates.
pub fn estimate_sigma_traced(
    cfg: &RunConfig,
    mut on_round: impl FnMut(u64, &RoundTrace),
) -> Result<SigmaEstimate, Error> {
    cfg.validate()?;
    let square = PMSquare::new();
    let rho0 = cfg.initial_state.resolve();
    let results: Vec<(ContextId, i8)> = (0..cfg.rounds as u64)
        .map(|round| {
            let (_, trace) = run_single_round(&square, &rho0, cfg, round);
            on_round(round, &trace);
            (trace.context, trace.main_product)
        })
        .collect();
    assemble(&results, cfg.rounds)
}

/// The closed-form witness value with `n` passersby: `6 · (5/9)^(2n)`.
pub fn closed_form_sigma(n: u32) -> f64 {
    6.0 * (5.0f64 / 9.0).powi(2 * n as i32)
}

/// Exact expected witness, no sampling.
///
/// With replacement the passerby average is the `n`-fold averaged channel,
/// so each context mean is the three-point sequential expectation with
/// that channel in both gaps. In distinct-triple mode no channel shortcut
/// exists and the value comes from the full enumeration under the default
/// budget.
pub fn exact_sigma(n: u32, mode: SamplingMode) -> Result<f64, Error> {
    match mode {
        SamplingMode::WithReplacement => {
            let square = PMSquare::new();
            let rho = DensityMatrix::maximally_mixed();
            let channel = gamma_power(n);
            let mut means = BTreeMap::new();
            for ctx in contexts() {
                let obs: Vec<_> = ctx.members.iter().map(|m| square.observable(*m)).collect();
                means.insert(ctx.id, sequential_expectation(&rho, &obs, Some(&channel)));
            }
            sigma_from_context_means(&means)
        }
        SamplingMode::DistinctTriple => {
            exact_sigma_enumerated(n, mode, DEFAULT_ENUMERATION_BUDGET)
        }
    }
}

/// All ordered pick triples available to one passerby under `mode`.
fn pick_triples(mode: SamplingMode) -> Vec<[PMIndex; 3]> {
    let mut triples = Vec::new();
    for a in PMIndex::ALL {
        for b in PMIndex::ALL {
            for c in PMIndex::ALL {
                if mode == SamplingMode::DistinctTriple && (a == b || a == c || b == c) {
                    continue;
                }
                triples.push([a, b, c]);
            }
        }
    }
    triples
}

/// Expected main product of one fully specified round, by recursion over
/// every outcome branch of every observer (Lüders updates only, no channel
/// machinery). Events after the main observer's last measurement cannot
/// change the product and are skipped; the remaining branch weights sum
/// to one.
fn round_expectation(square: &PMSquare, rho0: &DensityMatrix, plan: &RoundPlan) -> f64 {
    let mut schedule = Vec::with_capacity(3 * plan.access_order.len());
    for cycle in 0..3 {
        for observer in &plan.access_order {
            schedule.push((*observer, plan.pick_for(*observer, cycle)));
        }
    }
    let last_main = schedule
        .iter()
        .rposition(|(observer, _)| observer.is_main())
        .expect("plan has a main observer");
    schedule.truncate(last_main + 1);

    let mut total = 0.0;
    branch_walk(square, rho0, &schedule, 0, 1.0, 1.0, &mut total);
    total
}

fn branch_walk(
    square: &PMSquare,
    state: &DensityMatrix,
    schedule: &[(Observer, PMIndex)],
    position: usize,
    weight: f64,
    main_sign: f64,
    total: &mut f64,
) {
    if position == schedule.len() {
        *total += weight * main_sign;
        return;
    }
    let (observer, index) = schedule[position];
    let obs = square.observable(index);
    let (p_plus, p_minus) = outcome_distribution(state, obs);
    for outcome in Outcome::BOTH {
        let p = match outcome {
            Outcome::Plus => p_plus,
            Outcome::Minus => p_minus,
        };
        if p < ZERO_BRANCH_CUTOFF {
            continue;
        }
        let next = lueders_update(state, obs, outcome).expect("branch above cutoff");
        let sign = if observer.is_main() {
            main_sign * outcome.value()
        } else {
            main_sign
        };
        branch_walk(square, &next, schedule, position + 1, weight * p, sign, total);
    }
}

fn enumeration_size(n: u32, mode: SamplingMode) -> u128 {
    let tuples: u128 = match mode {
        SamplingMode::WithReplacement => 729,
        SamplingMode::DistinctTriple => 504,
    };
    let permutations: u128 = (1..=(n as u128 + 1)).product();
    let branches: u128 = 1u128 << (3 * (n + 1));
    permutations
        .saturating_mul(tuples.saturating_pow(n))
        .saturating_mul(36)
        .saturating_mul(branches)
}

/// Ground-truth witness value: averages the branch-enumerated round value
/// over every access order, every context and implementation order, and
/// every passerby pick tuple, all with their exact (uniform) weights.
/// Rejects configurations whose branch count exceeds `budget`.
pub fn exact_sigma_enumerated(n: u32, mode: SamplingMode, budget: u128) -> Result<f64, Error> {
    let required = enumeration_size(n, mode);
    if required > budget {
        return Err(Error::EnumerationTooLarge { required, budget });
    }
    let observers: Vec<Observer> = (0..=n)
        .map(|k| {
            if k == 0 {
                Observer::Main
            } else {
                Observer::Passerby(k)
            }
        })
        .collect();
    let order_count = observers.len();
    let mut sigma_sum = 0.0;
    let mut order_total = 0usize;
    for access_order in observers.into_iter().permutations(order_count) {
        sigma_sum += exact_sigma_for_access_order(n, mode, &access_order)?;
        order_total += 1;
    }
    Ok(sigma_sum / order_total as f64)
}

/// Exact witness under one fixed access order (still averaging contexts,
/// implementation orders, and pick tuples). Exposed separately so the
/// invariance experiment can compare permutations.
pub fn exact_sigma_for_access_order(
    n: u32,
    mode: SamplingMode,
    access_order: &[Observer],
) -> Result<f64, Error> {
    let square = PMSquare::new();
    let rho0 = DensityMatrix::maximally_mixed();
    let triples = pick_triples(mode);
    let mut assignments: Vec<Vec<[PMIndex; 3]>> = vec![vec![]];
    for _ in 0..n {
        assignments = assignments
            .into_iter()
            .cartesian_product(triples.iter().copied())
            .map(|(mut acc, next)| {
                acc.push(next);
                acc
            })
            .collect();
    }

    let mut means = BTreeMap::new();
    for ctx in contexts() {
        let mut sum = 0.0;
        let mut cases = 0usize;
        for main_order in ctx.members.into_iter().permutations(3) {
            for picks in &assignments {
                let plan = RoundPlan {
                    access_order: access_order.to_vec(),
                    main_context: ctx.id,
                    main_order: [main_order[0], main_order[1], main_order[2]],
                    passerby_picks: picks.clone(),
                    sampling_mode: mode,
                };
                sum += round_expectation(&square, &rho0, &plan);
                cases += 1;
            }
        }
        means.insert(ctx.id, sum / cases as f64);
    }
    sigma_from_context_means(&means)
}

/// One sweep cell: the estimate for a passerby count and a fresh random
/// initial state, next to the closed form and the noncontextual bound.
#[derive(Clone, Debug, Serialize)]
pub struct SweepRow {
    pub n_passersby: u32,
    pub state_index: u32,
    pub sigma: f64,
    pub sigma_stderr: f64,
    pub closed_form: f64,
    pub nc_bound: f64,
}

/// Runs an independent estimate per `(n, state index)` cell, each with a
/// Haar-random initial pure state redrawn from a derived sub-seed.
pub fn sweep_fig4(
    n_values: &[u32],
    n_states: u32,
    rounds: usize,
    seed: u64,
    mode: SamplingMode,
    workers: usize,
) -> Result<Vec<SweepRow>, Error> {
    let nc_bound = brute_force_nc_bound();
    let mut rows = Vec::with_capacity(n_values.len() * n_states as usize);
    for &n in n_values {
        for state_index in 0..n_states {
            let state_seed = mix_seed(seed, 0xA11CE ^ u64::from(n), u64::from(state_index));
            let cell_seed = mix_seed(seed, 0x0B0B ^ u64::from(n), u64::from(state_index));
            let cfg = RunConfig {
                n_passersby: n as usize,
                rounds,
                seed: cell_seed,
                initial_state: InitialState::Haar { seed: state_seed },
                sampling_mode: mode,
                workers,
            };
            let estimate = estimate_sigma(&cfg)?;
            rows.push(SweepRow {
                n_passersby: n,
                state_index,
                sigma: estimate.sigma,
                sigma_stderr: estimate.sigma_stderr,
                closed_form: closed_form_sigma(n),
                nc_bound,
            });
        }
    }
    Ok(rows)
}

/// Exact-value experiments validating the protocol interpretation.
#[derive(Clone, Debug)]
pub struct InvarianceReport {
    /// Enumerated witness at `n = 1` per access-order permutation
    /// (with-replacement picks).
    pub access_order_sigmas: Vec<f64>,
    pub access_order_spread: f64,
    /// Exact witness at `n = 1` in the two sampling modes, and their gap.
    pub replacement_sigma: f64,
    pub distinct_sigma: f64,
    pub mode_difference: f64,
    /// `Σ(n+1)/Σ(n)` for `n = 0, 1, 2` in with-replacement mode; the
    /// closed form predicts 25/81 each.
    pub decay_ratios: Vec<f64>,
    pub pass: bool,
}

impl fmt::Display for InvarianceReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(
            f,
            "{}: access-order spread {:.3e} over {} permutations",
            if self.pass { "PASS" } else { "FAIL" },
            self.access_order_spread,
            self.access_order_sigmas.len(),
        )?;
        writeln!(
            f,
            "  exact sigma, one passerby: replacement {:.9}, distinct {:.9} (difference {:+.9})",
            self.replacement_sigma, self.distinct_sigma, self.mode_difference
        )?;
        write!(f, "  decay ratios:")?;
        for ratio in &self.decay_ratios {
            write!(f, " {ratio:.9}")?;
        }
        write!(f, " (closed form {:.9})", 25.0 / 81.0)
    }
}

/// Runs the exact structural experiments: access-order permutation
/// invariance at one passerby, the with-replacement vs distinct-triple
/// comparison, and the geometric decay of the witness.
pub fn invariance_experiments() -> Result<InvarianceReport, Error> {
    let orders = [
        vec![Observer::Main, Observer::Passerby(1)],
        vec![Observer::Passerby(1), Observer::Main],
    ];
    let mut access_order_sigmas = Vec::new();
    for order in &orders {
        access_order_sigmas.push(exact_sigma_for_access_order(
            1,
            SamplingMode::WithReplacement,
            order,
        )?);
    }
    let spread = access_order_sigmas
        .iter()
        .cloned()
        .fold(f64::NEG_INFINITY, f64::max)
        - access_order_sigmas
            .iter()
            .cloned()
            .fold(f64::INFINITY, f64::min);

    let replacement_sigma = exact_sigma(1, SamplingMode::WithReplacement)?;
    let distinct_sigma = exact_sigma(1, SamplingMode::DistinctTriple)?;

    let mut decay_ratios = Vec::new();
    let mut previous = exact_sigma(0, SamplingMode::WithReplacement)?;
    for n in 1..=3 {
        let current = exact_sigma(n, SamplingMode::WithReplacement)?;
        decay_ratios.push(current / previous);
        previous = current;
    }

    let ratio_target = 25.0 / 81.0;
    let pass = spread.abs() <= 1e-9
        && decay_ratios.iter().all(|r| (r - ratio_target).abs() <= 1e-9)
        && (access_order_sigmas[0] - replacement_sigma).abs() <= 1e-9;

    Ok(InvarianceReport {
        access_order_sigmas,
        access_order_spread: spread,
        replacement_sigma,
        distinct_sigma,
        mode_difference: distinct_sigma - replacement_sigma,
        decay_ratios,
        pass,
    })
}

/// SplitMix64-style seed derivation; domain-separates the per-cell seeds
/// of sweep experiments.
pub fn mix_seed(seed: u64, a: u64, b: u64) -> u64 {
    let mut x = seed;
    for v in [a, b] {
        x ^= v.wrapping_mul(0x9E37_79B9_7F4A_7C15);
        x = x.wrapping_add(0x9E37_79B9_7F4A_7C15);
        let mut z = x;
        z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
        z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
        x = z ^ (z >> 31);
    }
    x
}

/// Formats with 9 significant digits, plain decimal notation.
pub fn format_sig9(x: f64) -> String {
    if x == 0.0 {
        return "0".to_string();
    }
    let exponent = x.abs().log10().floor() as i32;
    let decimals = (8 - exponent).clamp(0, 17) as usize;
    format!("{x:.decimals$}")
}

/// Rounds to the 9 significant digits that [`format_sig9`] would print;
/// applied before JSON serialization so both formats carry the same
/// numbers.
pub fn round_sig9(x: f64) -> f64 {
    format_sig9(x).parse().unwrap_or(x)
}

/// CSV table for sweep results (`n_passersby,state_index,sigma,
/// sigma_stderr,closed_form,nc_bound`).
pub fn sweep_csv(rows: &[SweepRow]) -> String {
    let mut out = String::from("n_passersby,state_index,sigma,sigma_stderr,closed_form,nc_bound\n");
    for row in rows {
        out.push_str(&format!(
            "{},{},{},{},{},{}\n",
            row.n_passersby,
            row.state_index,
            format_sig9(row.sigma),
            format_sig9(row.sigma_stderr),
            format_sig9(row.closed_form),
            format_sig9(row.nc_bound),
        ));
    }
    out
}

/// JSON rendering of sweep results, mirroring the CSV fields.
pub fn sweep_json(rows: &[SweepRow]) -> String {
    let rounded: Vec<SweepRow> = rows
        .iter()
        .map(|row| SweepRow {
            sigma: round_sig9(row.sigma),
            sigma_stderr: round_sig9(row.sigma_stderr),
            closed_form: round_sig9(row.closed_form),
            nc_bound: round_sig9(row.nc_bound),
            ..row.clone()
        })
        .collect();
    serde_json::to_string_pretty(&rounded).expect("sweep rows serialize")
}

/// CSV line (plus header) for a single estimate.
pub fn estimate_csv(cfg: &RunConfig, estimate: &SigmaEstimate) -> String {
    let mut out =
        String::from("n_passersby,rounds,seed,sigma,sigma_stderr,r1,r2,r3,c1,c2,c3\n");
    out.push_str(&format!(
        "{},{},{},{},{}",
        cfg.n_passersby,
        estimate.rounds_used,
        cfg.seed,
        format_sig9(estimate.sigma),
        format_sig9(estimate.sigma_stderr),
    ));
    for ctx in &estimate.per_context {
        out.push_str(&format!(",{}", format_sig9(ctx.mean)));
    }
    out.push('\n');
    out
}

/// JSON rendering of a single estimate.
pub fn estimate_json(estimate: &SigmaEstimate) -> String {
    let rounded = SigmaEstimate {
        per_context: estimate
            .per_context
            .iter()
            .map(|c| ContextEstimate {
                context: c.context,
                mean: round_sig9(c.mean),
                count: c.count,
                stderr: round_sig9(c.stderr),
            })
            .collect(),
        sigma: round_sig9(estimate.sigma),
        sigma_stderr: round_sig9(estimate.sigma_stderr),
        rounds_used: estimate.rounds_used,
    };
    serde_json::to_string_pretty(&rounded).expect("estimate serializes")
}

/// Parses an initial state from JSON: a 4×4 array of `[re, im]` pairs,
/// validated as a density matrix.
pub fn parse_state_json(text: &str) -> Result<DensityMatrix, Error> {
    let entries: [[[f64; 2]; 4]; 4] = serde_json::from_str(text)
        .map_err(|e| Error::StateFile(format!("expected a 4x4 array of [re, im] pairs: {e}")))?;
    let op = Operator::from_rows(std::array::from_fn(|i| {
        std::array::from_fn(|j| num_complex::Complex64::new(entries[i][j][0], entries[i][j][1]))
    }));
    DensityMatrix::new(op)
}
