use erasot_core::bits::BitString;
use erasot_core::channel::transmit;
use erasot_core::oracle::capacity_bounds;
use erasot_core::protocol::{achievable_rate, sample_inputs};
use erasot_core::rng::{stream, RunStreams};
use erasot_core::sets::{decode_selector, encode_selector, IndexSet};
use erasot_core::{plan, run_protocol, Backend, ChannelParams};
use proptest::prelude::*;

fn disjoint_pair() -> impl Strategy<Value = (IndexSet, IndexSet)> {
    (1usize..40, 0usize..200).prop_flat_map(|(k, extra)| {
        Just((0..2 * k + extra).collect::<Vec<_>>()).prop_shuffle().prop_map(move |v| {
            let l0 = IndexSet::new(v[..k].to_vec()).unwrap();
            let l1 = IndexSet::new(v[k..2 * k].to_vec()).unwrap();
            (l0, l1)
        })
    })
}

proptest! {
    #![proptest_config(ProptestConfig { cases: 64, failure_persistence: None, ..ProptestConfig::default() })]

    #[test]
    fn selector_round_trip((l0, l1) in disjoint_pair()) {
        let (l, q) = encode_selector(&l0, &l1).unwrap();
        prop_assert_eq!(l.len(), 2 * l0.len());
        prop_assert_eq!(q.count_ones(), l1.len());
        prop_assert_eq!(decode_selector(&l, &q).unwrap(), (l0, l1));
    }

    #[test]
    fn eve_erasures_include_bob_erasures(e1 in 0.0f64..=1.0, e2 in 0.0f64..=1.0, n in 0usize..2000, seed: u64) {
        let mut rng = stream(seed, 0);
        let x = BitString::random(n, &mut rng);
        let (y, z) = transmit(&x, &ChannelParams::new(e1, e2).unwrap(), &mut rng);
        for i in 0..n {
            prop_assert!(!y.is_erased(i) || z.is_erased(i));
            if !z.is_erased(i) {
                prop_assert_eq!(z.value_bits().get(i), x.get(i));
            }
            if !y.is_erased(i) {
                prop_assert_eq!(y.value_bits().get(i), x.get(i));
            }
        }
    }

    #[test]
    fn bounds_are_ordered(e1 in 0.0f64..=1.0, e2 in 0.0f64..=1.0) {
        let b = capacity_bounds(&ChannelParams::new(e1, e2).unwrap());
        prop_assert!(0.0 <= b.lower && b.lower <= b.upper && b.upper <= e1.max(0.0));
        if b.tight {
            prop_assert!((b.upper - b.lower).abs() < 1e-12);
        }
    }

    #[test]
    fn rate_stays_below_lower_bound(e1 in 0.0f64..=1.0, e2 in 0.0f64..=1.0, delta in 1e-4f64..0.5) {
        let ch = ChannelParams::new(e1, e2).unwrap();
        prop_assert!(achievable_rate(&ch, delta).rate <= capacity_bounds(&ch).lower + 1e-12);
    }
}

proptest! {
    #![proptest_config(ProptestConfig { cases: 24, failure_persistence: None, ..ProptestConfig::default() })]

    /// Every completed run decodes K_U, Alice and Bob agree on (L0, L1),
    /// the set family is well formed and the views share one transcript.
    #[test]
    fn completed_runs_are_correct(
        e1 in prop::sample::select(vec![0.3, 0.5, 0.7]),
        e2 in prop::sample::select(vec![0.5, 0.8]),
        n in 200usize..1200,
        toeplitz: bool,
        seed: u64,
    ) {
        let ch = ChannelParams::new(e1, e2).unwrap();
        let Some(delta) = erasot_core::acceptance::largest_feasible_delta(n, ch) else { return Ok(()) };
        let backend = if toeplitz { Backend::UniversalHash } else { Backend::RandomTable };
        let cfg = plan(n, delta, ch).unwrap().with_backend(backend);
        if cfg.check_backend().is_err() {
            return Ok(());
        }
        for t in 0..4 {
            let mut streams = RunStreams::for_trial(seed, t);
            let (k0, k1, u) = sample_inputs(cfg.m, &mut streams.inputs);
            let out = run_protocol(&cfg, &k0, &k1, u, &mut streams).unwrap();
            if out.abort.is_some() {
                prop_assert!(out.views.is_none() && out.k_hat.is_none());
                continue;
            }
            prop_assert_eq!(out.decoded_correctly(&k0, &k1, u), Some(true));
            let fam = out.sets.as_ref().unwrap();
            prop_assert!(fam.check_invariants(n).is_ok());
            prop_assert_eq!(fam.l0.len(), fam.l1.len());
            prop_assert_eq!(fam.g.len(), cfg.sizes.set_size);
            prop_assert_eq!(out.alice_sets.as_ref(), Some(&(fam.l0.clone(), fam.l1.clone())));
            prop_assert!(out.views.as_ref().unwrap().share_transcript());
        }
    }
}
