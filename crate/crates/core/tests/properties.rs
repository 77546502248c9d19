//! Property-based checks of the library invariants.

use std::collections::BTreeMap;

use proptest::prelude::*;
use rand::SeedableRng;
use rand_chacha::ChaCha12Rng;

use pmsim::algebra::{pauli_decompose, pauli_reconstruct, random_pure_state};
use pmsim::channel::{depolarizing, gamma_avg, gamma_power, Channel};
use pmsim::harness::{format_sig9, round_sig9};
use pmsim::measurement::sequence_distribution;
use pmsim::square::{sigma_from_context_means, ContextId, PMIndex, PMSquare};

proptest! {
    #[test]
    fn decompose_reconstruct_is_identity(seed in any::<u64>()) {
        let rho = random_pure_state(&mut ChaCha12Rng::seed_from_u64(seed));
        let rebuilt = pauli_reconstruct(&pauli_decompose(&rho));
        prop_assert!(rebuilt.max_abs_diff(rho.operator()) < 1e-12);
    }

    #[test]
    fn state_coefficients_are_bounded(seed in any::<u64>()) {
        let rho = random_pure_state(&mut ChaCha12Rng::seed_from_u64(seed));
        let coeffs = pauli_decompose(&rho);
        prop_assert!((coeffs.c0 - 1.0).abs() < 1e-12);
        for v in coeffs.t.iter().chain(&coeffs.l).chain(&coeffs.r) {
            prop_assert!(v.abs() <= 1.0 + 1e-12);
        }
    }

    #[test]
    fn branch_probabilities_normalize(
        seed in any::<u64>(),
        picks in prop::collection::vec(0usize..9, 1..=3),
        channel_choice in 0u8..3,
        p in 0.0f64..=1.0,
    ) {
        let square = PMSquare::new();
        let rho = random_pure_state(&mut ChaCha12Rng::seed_from_u64(seed));
        let obs: Vec<_> = picks.iter().map(|k| square.observable(PMIndex::ALL[*k])).collect();
        let channel: Option<Channel> = match channel_choice {
            0 => None,
            1 => Some(gamma_avg()),
            _ => Some(depolarizing(p).unwrap()),
        };
        let gaps: Vec<Option<&Channel>> = vec![channel.as_ref(); obs.len() - 1];
        let distribution = sequence_distribution(&rho, &obs, &gaps);
        prop_assert_eq!(distribution.len(), 1 << obs.len());
        let total: f64 = distribution.iter().sum();
        prop_assert!((total - 1.0).abs() < 1e-10, "total probability {}", total);
        for p in &distribution {
            prop_assert!(*p >= 0.0);
        }
    }

    #[test]
    fn witness_from_means_stays_within_six(
        means in prop::array::uniform6(-1.0f64..=1.0),
    ) {
        let mut map = BTreeMap::new();
        for (id, mean) in ContextId::ALL.into_iter().zip(means) {
            map.insert(id, mean);
        }
        let sigma = sigma_from_context_means(&map).unwrap();
        prop_assert!(sigma.abs() <= 6.0 + 1e-12);
        let manual: f64 = ContextId::ALL
            .into_iter()
            .zip(means)
            .map(|(id, mean)| id.sign() * mean)
            .sum();
        prop_assert!((sigma - manual).abs() < 1e-12);
    }

    #[test]
    fn nine_digit_formatting_round_trips(x in -1.0e6f64..1.0e6) {
        let printed = format_sig9(x);
        let parsed: f64 = printed.parse().unwrap();
        let tolerance = 1e-8 * x.abs().max(1e-9);
        prop_assert!((parsed - x).abs() <= tolerance, "{} -> {}", x, printed);
        prop_assert_eq!(round_sig9(x), parsed);
    }

    #[test]
    fn channel_powers_contract_grid_coefficients(seed in any::<u64>(), n in 0u32..6) {
        let rho = random_pure_state(&mut ChaCha12Rng::seed_from_u64(seed));
        let before = pauli_decompose(&rho);
        let after = pauli_decompose(&gamma_power(n).apply(&rho));
        let factor = (5.0f64 / 9.0).powi(n as i32);
        for k in 0..9 {
            prop_assert!((after.t[k] - factor * before.t[k]).abs() < 1e-12);
        }
    }
}
