//! The round engine: one main observer measuring a context member by
//! member while `N` passersby interleave their own square measurements,
//! everyone taking turns in a per-round random access order.

use std::fmt;

use rand::seq::SliceRandom;
use rand::Rng;

use crate::algebra::DensityMatrix;
use crate::measurement::{lueders_update, measure_sample, Outcome};
use crate::square::{context, ContextId, PMIndex, PMSquare};
use crate::Error;

/// Who is acting: the main observer or one of the passersby (numbered
/// from 1).
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum Observer {
    Main,
    Passerby(u32),
}

impl Observer {
    pub fn is_main(&self) -> bool {
        matches!(self, Observer::Main)
    }
}

impl fmt::Display for Observer {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Observer::Main => f.write_str("Main"),
            Observer::Passerby(k) => write!(f, "P{k}"),
        }
    }
}

/// How a passerby draws their three measurements.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum SamplingMode {
    /// Three independent uniform draws from the nine observables; this is
    /// the per-slot uniformity behind the averaged channel description.
    WithReplacement,
    /// A uniformly random ordered triple of three distinct observables.
    DistinctTriple,
}

/// Everything decided before a round starts.
#[derive(Clone, Debug)]
pub struct RoundPlan {
    /// Permutation of the `N+1` observers; turns proceed round-robin in
    /// this order for three full cycles.
    pub access_order: Vec<Observer>,
    pub main_context: ContextId,
    /// The context members in the main observer's implementation order.
    pub main_order: [PMIndex; 3],
    /// Entry `k` holds the three picks of `Passerby(k+1)`, one per cycle.
    pub passerby_picks: Vec<[PMIndex; 3]>,
    pub sampling_mode: SamplingMode,
}

impl RoundPlan {
    pub fn n_passersby(&self) -> usize {
        self.passerby_picks.len()
    }

    /// Checks the structural invariants: the access order is a permutation
    /// of the declared observers, the main order covers the context, and
    /// distinct-triple picks are distinct.
    pub fn validate(&self) -> Result<(), Error> {
        let n = self.n_passersby();
        if self.access_order.len() != n + 1 {
            return Err(Error::InvalidPlan(format!(
                "access order has {} slots for {} observers",
                self.access_order.len(),
                n + 1
            )));
        }
        if self.access_order.iter().filter(|o| o.is_main()).count() != 1 {
            return Err(Error::InvalidPlan("exactly one main observer per round".into()));
        }
        for k in 1..=n {
            if !self.access_order.contains(&Observer::Passerby(k as u32)) {
                return Err(Error::InvalidPlan(format!("passerby {k} missing from access order")));
            }
        }
        let mut members = context(self.main_context).members;
        let mut order = self.main_order;
        members.sort_by_key(PMIndex::flat);
        order.sort_by_key(PMIndex::flat);
        if members != order {
            return Err(Error::InvalidPlan(format!(
                "main order does not cover context {}",
                self.main_context
            )));
        }
        if self.sampling_mode == SamplingMode::DistinctTriple {
            for (k, picks) in self.passerby_picks.iter().enumerate() {
                if picks[0] == picks[1] || picks[0] == picks[2] || picks[1] == picks[2] {
                    return Err(Error::InvalidPlan(format!(
                        "passerby {} picks are not distinct",
                        k + 1
                    )));
                }
            }
        }
        Ok(())
    }

    /// The measurement scheduled for `observer` in the given cycle.
    pub fn pick_for(&self, observer: Observer, cycle: usize) -> PMIndex {
        match observer {
            Observer::Main => self.main_order[cycle],
            Observer::Passerby(k) => self.passerby_picks[k as usize - 1][cycle],
        }
    }
}

/// One measurement event in a round.
#[derive(Clone, Copy, Debug)]
pub struct RoundEvent {
    pub observer: Observer,
    pub index: PMIndex,
    pub outcome: Outcome,
}

/// Ordered log of a completed round.
#[derive(Clone, Debug)]
pub struct RoundTrace {
    pub events: Vec<RoundEvent>,
    pub context: ContextId,
    /// Product of the main observer's three outcomes.
    pub main_product: i8,
    /// Post-measurement state after each event, when recording was on.
    pub states: Option<Vec<DensityMatrix>>,
}

/// Draws a fresh plan: uniform access order, uniform context, uniform
/// implementation order, and per-passerby picks according to `mode`.
///
/// The draw order is fixed (access order, context, main order, then the
/// picks of passerby 1, 2, …) so a given stream state always yields the
/// same plan.
pub fn plan_round<R: Rng + ?Sized>(
    n_passersby: usize,
    mode: SamplingMode,
    rng: &mut R,
) -> RoundPlan {
    let mut access_order: Vec<Observer> = (0..=n_passersby)
        .map(|k| {
            if k == 0 {
                Observer::Main
            } else {
                Observer::Passerby(k as u32)
            }
        })
        .collect();
    access_order.shuffle(rng);

    let main_context = ContextId::ALL[rng.random_range(0..6)];
    let mut main_order = context(main_context).members;
    main_order.shuffle(rng);

    let passerby_picks = (0..n_passersby)
        .map(|_| match mode {
            SamplingMode::WithReplacement => {
                std::array::from_fn(|_| PMIndex::ALL[rng.random_range(0..9)])
            }
            SamplingMode::DistinctTriple => {
                let picked = rand::seq::index::sample(rng, 9, 3);
                std::array::from_fn(|k| PMIndex::ALL[picked.index(k)])
            }
        })
        .collect();

    RoundPlan {
        access_order,
        main_context,
        main_order,
        passerby_picks,
        sampling_mode: mode,
    }
}

fn run_round_impl<R: Rng + ?Sized>(
    square: &PMSquare,
    rho0: &DensityMatrix,
    plan: &RoundPlan,
    rng: &mut R,
    record_states: bool,
) -> RoundTrace {
    debug_assert!(plan.validate().is_ok());
    let slots = 3 * plan.access_order.len();
    let mut events = Vec::with_capacity(slots);
    let mut states = record_states.then(|| Vec::with_capacity(slots));
    let mut state = *rho0;
    let mut main_product = 1i8;
    for cycle in 0..3 {
        for observer in &plan.access_order {
            let index = plan.pick_for(*observer, cycle);
            let measured = measure_sample(&state, square.observable(index), rng);
            if observer.is_main() {
                main_product *= measured.value.sign();
            }
            events.push(RoundEvent {
                observer: *observer,
                index,
                outcome: measured.value,
            });
            state = measured.post_state;
            if let Some(list) = states.as_mut() {
                list.push(state);
            }
        }
    }
    RoundTrace {
        events,
        context: plan.main_context,
        main_product,
        states,
    }
}

/// Executes a round: the state starts at `rho0`, observers take turns in
/// `plan.access_order` for three full cycles, each sampling their next
/// planned measurement and passing the updated state on. No state
/// snapshots are kept.
pub fn run_round<R: Rng + ?Sized>(
    square: &PMSquare,
    rho0: &DensityMatrix,
    plan: &RoundPlan,
    rng: &mut R,
) -> RoundTrace {
    run_round_impl(square, rho0, plan, rng, false)
}

/// As [`run_round`], recording the post-measurement state of every event.
pub fn run_round_recorded<R: Rng + ?Sized>(
    square: &PMSquare,
    rho0: &DensityMatrix,
    plan: &RoundPlan,
    rng: &mut R,
) -> RoundTrace {
    run_round_impl(square, rho0, plan, rng, true)
}

/// Replays a round with a forced outcome sequence (one outcome per event
/// slot, in time order) instead of sampling. States are recorded. Fails if
/// a forced outcome has numerically zero probability.
pub fn run_round_forced(
    square: &PMSquare,
    rho0: &DensityMatrix,
    plan: &RoundPlan,
    outcomes: &[Outcome],
) -> Result<RoundTrace, Error> {
    plan.validate()?;
    let slots = 3 * plan.access_order.len();
    if outcomes.len() != slots {
        return Err(Error::InvalidPlan(format!(
            "forced outcome sequence has {} entries, round has {} slots",
            outcomes.len(),
            slots
        )));
    }
    let mut events = Vec::with_capacity(slots);
    let mut states = Vec::with_capacity(slots);
    let mut state = *rho0;
    let mut main_product = 1i8;
    let mut forced = outcomes.iter();
    for cycle in 0..3 {
        for observer in &plan.access_order {
            let index = plan.pick_for(*observer, cycle);
            let outcome = *forced.next().expect("length checked above");
            state = lueders_update(&state, square.observable(index), outcome)?;
            if observer.is_main() {
                main_product *= outcome.sign();
            }
            events.push(RoundEvent {
                observer: *observer,
                index,
                outcome,
            });
            states.push(state);
        }
    }
    Ok(RoundTrace {
        events,
        context: plan.main_context,
        main_product,
        states: Some(states),
    })
}

/// Renders a trace as one `step<k> <observer> A<i><j> -> <±1>` line per
/// event, in time order.
pub fn render_trace(trace: &RoundTrace) -> String {
    let mut out = String::new();
    for (k, event) in trace.events.iter().enumerate() {
        out.push_str(&format!(
            "step{} {} {} -> {}\n",
            k + 1,
            event.observer,
            event.index,
            event.outcome
        ));
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::algebra::{random_pure_state, ALGEBRA_TOL};
    use crate::square::contexts;
    use nalgebra::Vector4;
    use num_complex::Complex64;
    use rand::SeedableRng;
    use rand_chacha::ChaCha12Rng;

    fn ix(row: u8, col: u8) -> PMIndex {
        PMIndex::new(row, col)
    }

    fn ket(amps: [(f64, f64); 4]) -> DensityMatrix {
        DensityMatrix::from_ket(&Vector4::from_fn(|i, _| {
            Complex64::new(amps[i].0, amps[i].1)
        }))
    }

    fn solo_plan(context_id: ContextId) -> RoundPlan {
        RoundPlan {
            access_order: vec![Observer::Main],
            main_context: context_id,
            main_order: context(context_id).members,
            passerby_picks: vec![],
            sampling_mode: SamplingMode::WithReplacement,
        }
    }

    #[test]
    fn plan_with_no_passersby_is_main_only() {
        let mut rng = ChaCha12Rng::seed_from_u64(1);
        let plan = plan_round(0, SamplingMode::WithReplacement, &mut rng);
        assert_eq!(plan.access_order, vec![Observer::Main]);
        assert!(plan.passerby_picks.is_empty());
        assert!(plan.validate().is_ok());
    }

    #[test]
    fn planned_contexts_are_uniform() {
        let mut rng = ChaCha12Rng::seed_from_u64(2);
        let mut counts = [0usize; 6];
        let n = 10_000;
        for _ in 0..n {
            let plan = plan_round(1, SamplingMode::WithReplacement, &mut rng);
            let slot = ContextId::ALL.iter().position(|c| *c == plan.main_context).unwrap();
            counts[slot] += 1;
        }
        for count in counts {
            let freq = count as f64 / n as f64;
            assert!((freq - 1.0 / 6.0).abs() < 0.02, "context frequency {freq}");
        }
    }

    #[test]
    fn planned_picks_are_uniform_with_replacement() {
        let mut rng = ChaCha12Rng::seed_from_u64(3);
        let mut counts = [0usize; 9];
        let n = 10_000;
        for _ in 0..n {
            let plan = plan_round(1, SamplingMode::WithReplacement, &mut rng);
            for pick in plan.passerby_picks[0] {
                counts[pick.flat()] += 1;
            }
        }
        for count in counts {
            let freq = count as f64 / (3 * n) as f64;
            assert!((freq - 1.0 / 9.0).abs() < 0.02, "pick frequency {freq}");
        }
    }

    #[test]
    fn distinct_mode_draws_distinct_uniform_picks() {
        let mut rng = ChaCha12Rng::seed_from_u64(4);
        let mut counts = [0usize; 9];
        let n = 10_000;
        for _ in 0..n {
            let plan = plan_round(2, SamplingMode::DistinctTriple, &mut rng);
            assert!(plan.validate().is_ok());
            for picks in &plan.passerby_picks {
                assert!(picks[0] != picks[1] && picks[0] != picks[2] && picks[1] != picks[2]);
            }
            for pick in plan.passerby_picks[0] {
                counts[pick.flat()] += 1;
            }
        }
        for count in counts {
            let freq = count as f64 / (3 * n) as f64;
            assert!((freq - 1.0 / 9.0).abs() < 0.02, "pick frequency {freq}");
        }
    }

    #[test]
    fn access_orders_cover_all_permutations() {
        let mut rng = ChaCha12Rng::seed_from_u64(5);
        let mut seen = std::collections::HashSet::new();
        for _ in 0..200 {
            let plan = plan_round(2, SamplingMode::WithReplacement, &mut rng);
            seen.insert(plan.access_order.clone());
        }
        assert_eq!(seen.len(), 6);
    }

    #[test]
    fn solo_rounds_reproduce_the_context_sign() {
        let square = PMSquare::new();
        let mut rng = ChaCha12Rng::seed_from_u64(6);
        for _ in 0..10 {
            let rho = random_pure_state(&mut rng);
            for ctx in contexts() {
                let trace = run_round(&square, &rho, &solo_plan(ctx.id), &mut rng);
                assert_eq!(trace.main_product as f64, ctx.sign(), "context {}", ctx.id);
                assert_eq!(trace.events.len(), 3);
            }
        }
    }

    #[test]
    fn rounds_are_round_robin_with_n_passerby_events_between_main_turns() {
        let square = PMSquare::new();
        let rho = DensityMatrix::maximally_mixed();
        let mut rng = ChaCha12Rng::seed_from_u64(7);
        // Every access permutation for two passersby.
        let observers = [Observer::Main, Observer::Passerby(1), Observer::Passerby(2)];
        let perms: Vec<Vec<Observer>> = vec![
            vec![observers[0], observers[1], observers[2]],
            vec![observers[0], observers[2], observers[1]],
            vec![observers[1], observers[0], observers[2]],
            vec![observers[1], observers[2], observers[0]],
            vec![observers[2], observers[0], observers[1]],
            vec![observers[2], observers[1], observers[0]],
        ];
        for access_order in perms {
            let mut plan = plan_round(2, SamplingMode::WithReplacement, &mut rng);
            plan.access_order = access_order.clone();
            let trace = run_round(&square, &rho, &plan, &mut rng);
            assert_eq!(trace.events.len(), 9);
            for (k, event) in trace.events.iter().enumerate() {
                assert_eq!(event.observer, access_order[k % 3]);
            }
            let main_positions: Vec<usize> = trace
                .events
                .iter()
                .enumerate()
                .filter(|(_, e)| e.observer.is_main())
                .map(|(k, _)| k)
                .collect();
            assert_eq!(main_positions.len(), 3);
            assert_eq!(main_positions[1] - main_positions[0], 3);
            assert_eq!(main_positions[2] - main_positions[1], 3);
        }
    }

    #[test]
    fn identical_seed_and_plan_give_identical_traces() {
        let square = PMSquare::new();
        let rho = DensityMatrix::maximally_mixed();
        let mut plan_rng = ChaCha12Rng::seed_from_u64(8);
        let plan = plan_round(2, SamplingMode::WithReplacement, &mut plan_rng);
        let run = |seed: u64| {
            let mut rng = ChaCha12Rng::seed_from_u64(seed);
            run_round(&square, &rho, &plan, &mut rng)
        };
        let a = run(99);
        let b = run(99);
        assert_eq!(a.main_product, b.main_product);
        for (ea, eb) in a.events.iter().zip(&b.events) {
            assert_eq!(ea.observer, eb.observer);
            assert_eq!(ea.index, eb.index);
            assert_eq!(ea.outcome, eb.outcome);
        }
    }

    /// Worked two-observer round on `|00⟩`: main observer on context R2
    /// in the order (A22, A21, A23), passerby picks (A13, A33, A32).
    /// Forcing the outcome sequence pins every intermediate state to a
    /// hand-computed ket.
    #[test]
    fn forced_replay_matches_hand_computed_states() {
        let square = PMSquare::new();
        let rho0 = ket([(1.0, 0.0), (0.0, 0.0), (0.0, 0.0), (0.0, 0.0)]);
        let plan = RoundPlan {
            access_order: vec![Observer::Main, Observer::Passerby(1)],
            main_context: ContextId::R2,
            main_order: [ix(2, 2), ix(2, 1), ix(2, 3)],
            passerby_picks: vec![[ix(1, 3), ix(3, 3), ix(3, 2)]],
            sampling_mode: SamplingMode::DistinctTriple,
        };
        use Outcome::{Minus, Plus};
        let outcomes = [Plus, Minus, Plus, Minus, Plus, Minus];
        let trace = run_round_forced(&square, &rho0, &plan, &outcomes).unwrap();

        let s = std::f64::consts::FRAC_1_SQRT_2;
        let expected = [
            ket([(s, 0.0), (0.0, 0.0), (s, 0.0), (0.0, 0.0)]),
            ket([(0.5, 0.0), (-0.5, 0.0), (0.5, 0.0), (-0.5, 0.0)]),
            ket([(0.0, 0.0), (0.0, 0.0), (s, 0.0), (-s, 0.0)]),
            ket([(0.0, 0.0), (0.0, 0.0), (1.0, 0.0), (0.0, 0.0)]),
            ket([(0.0, 0.0), (s, 0.0), (s, 0.0), (0.0, 0.0)]),
            ket([(0.0, 0.0), (0.5, 0.5), (0.5, -0.5), (0.0, 0.0)]),
        ];
        let states = trace.states.as_ref().unwrap();
        for (step, (got, want)) in states.iter().zip(&expected).enumerate() {
            assert!(
                got.max_abs_diff(want) < 1e-10,
                "state after step {} deviates",
                step + 1
            );
        }
        // Main outcomes were +1, +1, +1.
        assert_eq!(trace.main_product, 1);

        // The variant with the third outcome flipped to −1 branches into
        // |0⟩|−⟩ and |01⟩ mid-round but merges to the same final state,
        // which lies in the −1 eigenspace of A32.
        let outcomes_b = [Plus, Minus, Minus, Minus, Plus, Minus];
        let trace_b = run_round_forced(&square, &rho0, &plan, &outcomes_b).unwrap();
        let states_b = trace_b.states.as_ref().unwrap();
        assert!(
            states_b[2].max_abs_diff(&ket([(s, 0.0), (-s, 0.0), (0.0, 0.0), (0.0, 0.0)]))
                < 1e-10
        );
        assert!(
            states_b[3].max_abs_diff(&ket([(0.0, 0.0), (1.0, 0.0), (0.0, 0.0), (0.0, 0.0)]))
                < 1e-10
        );
        assert!(states_b[5].max_abs_diff(&expected[5]) < 1e-10);
        assert_eq!(trace_b.main_product, -1);
        let a32 = square.observable(ix(3, 2));
        let final_op = *states_b[5].operator();
        assert!(
            (*a32.matrix() * final_op)
                .max_abs_diff(&final_op.scale(-1.0))
                < ALGEBRA_TOL
        );
    }

    #[test]
    fn forced_replay_rejects_impossible_outcomes() {
        let square = PMSquare::new();
        let rho0 = ket([(1.0, 0.0), (0.0, 0.0), (0.0, 0.0), (0.0, 0.0)]);
        let plan = RoundPlan {
            access_order: vec![Observer::Main],
            main_context: ContextId::R3,
            main_order: [ix(3, 3), ix(3, 1), ix(3, 2)],
            passerby_picks: vec![],
            sampling_mode: SamplingMode::WithReplacement,
        };
        // |00⟩ is the +1 eigenstate of A33.
        let result = run_round_forced(
            &square,
            &rho0,
            &plan,
            &[Outcome::Minus, Outcome::Plus, Outcome::Plus],
        );
        assert!(matches!(result, Err(Error::ZeroProbabilityOutcome { .. })));
    }

    #[test]
    fn malformed_plans_are_rejected() {
        let mut plan = solo_plan(ContextId::R1);
        plan.main_order = [ix(1, 1), ix(1, 2), ix(2, 3)];
        assert!(matches!(plan.validate(), Err(Error::InvalidPlan(_))));

        let mut plan = solo_plan(ContextId::R1);
        plan.access_order = vec![];
        assert!(matches!(plan.validate(), Err(Error::InvalidPlan(_))));

        let plan = RoundPlan {
            access_order: vec![Observer::Main, Observer::Passerby(1)],
            main_context: ContextId::R1,
            main_order: context(ContextId::R1).members,
            passerby_picks: vec![[ix(1, 1), ix(1, 1), ix(2, 2)]],
            sampling_mode: SamplingMode::DistinctTriple,
        };
        assert!(matches!(plan.validate(), Err(Error::InvalidPlan(_))));
    }

    #[test]
    fn rendered_trace_has_one_line_per_event() {
        let square = PMSquare::new();
        let rho = DensityMatrix::maximally_mixed();
        let mut rng = ChaCha12Rng::seed_from_u64(10);
        let plan = plan_round(1, SamplingMode::WithReplacement, &mut rng);
        let trace = run_round(&square, &rho, &plan, &mut rng);
        let text = render_trace(&trace);
        let lines: Vec<&str> = text.lines().collect();
        assert_eq!(lines.len(), trace.events.len());
        assert!(lines[0].starts_with("step1 "));
        for (line, event) in lines.iter().zip(&trace.events) {
            assert!(line.contains(&event.index.to_string()));
            assert!(line.ends_with("-> +1") || line.ends_with("-> -1"));
        }
    }

    #[test]
    fn solo_trace_lines_are_all_main() {
        let square = PMSquare::new();
        let rho = DensityMatrix::maximally_mixed();
        let mut rng = ChaCha12Rng::seed_from_u64(11);
        let trace = run_round(&square, &rho, &solo_plan(ContextId::R1), &mut rng);
        let text = render_trace(&trace);
        assert_eq!(text.lines().count(), 3);
        for line in text.lines() {
            assert!(line.contains(" Main "));
        }
    }
}
