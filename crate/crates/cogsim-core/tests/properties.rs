//! Property-based tests: random channels, traffic and runs must uphold the
//! structural invariants no matter the draw.

use proptest::prelude::*;

use cogsim_core::analytic::{
    renewal_queue_rate, stationary_distribution, ChannelMoments, RenewalQueueParams, ServiceChain,
    ThroughputRegion,
};
use cogsim_core::channel::NodeSet;
use cogsim_core::engine::{self, RunConfig};
use cogsim_core::protocols::Session;
use cogsim_core::{Algorithm, ArrivalProcess, ErasureSpec};

/// Random joint channel: both pattern tables drawn as normalized weights.
fn joint_spec_strategy() -> impl Strategy<Value = ErasureSpec> {
    (
        proptest::array::uniform8(0.01f64..1.0),
        proptest::array::uniform4(0.01f64..1.0),
    )
        .prop_map(|(w1, w2)| {
            let s1: f64 = w1.iter().sum();
            let s2: f64 = w2.iter().sum();
            let tx1 = w1.map(|w| w / s1);
            let tx2 = w2.map(|w| w / s2);
            ErasureSpec::from_joint(tx1, tx2, false).expect("normalized tables are valid")
        })
}

/// Random independent admissible channel (node 3 hears node 1 no worse than
/// it hears node 2).
fn admissible_spec_strategy() -> impl Strategy<Value = ErasureSpec> {
    (
        0.0f64..0.9,
        0.05f64..0.9,
        0.0f64..0.9,
        0.0f64..=1.0,
        0.0f64..0.9,
    )
        .prop_map(|(e2, a, e4_1, t, e4_2)| {
            let e = t * a;
            ErasureSpec::from_marginals_independent(e2, a, e4_1, e, e4_2, true)
                .expect("e <= a is admissible by construction")
        })
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    /// Erasure probabilities shrink (weakly) as the listener set grows, and
    /// every probability is a probability.
    #[test]
    fn erasure_monotone_under_supersets(spec in joint_spec_strategy()) {
        use cogsim_core::Transmitter;
        let sets: Vec<NodeSet> = [
            &[][..], &[2], &[3], &[4], &[2, 3], &[2, 4], &[3, 4], &[2, 3, 4],
        ]
        .iter()
        .map(|s| NodeSet::new(s).unwrap())
        .collect();
        for &s in &sets {
            let p = spec.erasure_prob(Transmitter::Node1, s).unwrap();
            prop_assert!((0.0..=1.0 + 1e-12).contains(&p));
            for &t in &sets {
                if s.contains_all(t) {
                    let q = spec.erasure_prob(Transmitter::Node1, t).unwrap();
                    prop_assert!(p <= q + 1e-12, "eps({s}) = {p} > eps({t}) = {q}");
                }
            }
        }
    }

    /// The service chain is a genuine stochastic matrix with a genuine
    /// stationary law, and the closed forms agree with it at every bias.
    #[test]
    fn chain_stationary_matches_closed_forms(
        spec in admissible_spec_strategy(),
        q in 0.0f64..=1.0,
    ) {
        let m = ChannelMoments::from_spec(&spec);
        let chain = ServiceChain::build(&m, q).unwrap();
        let mut total = 0.0;
        for row in &chain.transition {
            let sum: f64 = row.iter().sum();
            prop_assert!((sum - 1.0).abs() < 1e-9);
            for &p in row {
                prop_assert!((-1e-12..=1.0 + 1e-12).contains(&p));
            }
        }
        for &p in &chain.stationary {
            prop_assert!(p >= 0.0);
            total += p;
        }
        prop_assert!((total - 1.0).abs() < 1e-9);
        let (gap_phi, gap_psi) =
            cogsim_core::analytic::chain_identity_gaps(&m, q).unwrap();
        prop_assert!(gap_phi < 1e-9, "phi gap {gap_phi}");
        prop_assert!(gap_psi < 1e-9, "psi gap {gap_psi}");
    }

    /// Stationary solves of random positive stochastic matrices are exact.
    #[test]
    fn stationary_solver_balances(raw in proptest::collection::vec(
        proptest::collection::vec(0.01f64..1.0, 4), 4,
    )) {
        let rows: Vec<Vec<f64>> = raw
            .iter()
            .map(|r| {
                let s: f64 = r.iter().sum();
                r.iter().map(|w| w / s).collect()
            })
            .collect();
        let pi = stationary_distribution(&rows).unwrap();
        prop_assert!((pi.iter().sum::<f64>() - 1.0).abs() < 1e-10);
        for j in 0..4 {
            let balance: f64 = (0..4).map(|i| pi[i] * rows[i][j]).sum();
            prop_assert!((balance - pi[j]).abs() < 1e-10);
        }
    }

    /// Regions nest: direct within forwarding within coding within mixing.
    #[test]
    fn regions_nest(spec in admissible_spec_strategy()) {
        let r1 = ThroughputRegion::compute(Algorithm::NoCooperation, &spec, 2).unwrap();
        let r3 = ThroughputRegion::compute(Algorithm::Forwarding, &spec, 2).unwrap();
        let r4 = ThroughputRegion::compute(Algorithm::Coding, &spec, 2).unwrap();
        let r5 = ThroughputRegion::compute(Algorithm::CodedMixing, &spec, 2).unwrap();
        prop_assert!(r1.r1_max <= r3.r1_max + 1e-12);
        prop_assert!(r3.r1_max <= r4.r1_max + 1e-12);
        prop_assert!(r4.r1_max <= r5.r1_max + 1e-12);
        for i in 0..=20 {
            let x = r5.r1_max * i as f64 / 20.0;
            let v1 = r1.r2_max(x);
            let v3 = r3.r2_max(x);
            let v4 = r4.r2_max(x);
            let v5 = r5.r2_max(x);
            prop_assert!(v1 <= v3 + 1e-9, "r1 {x}: {v1} > {v3}");
            prop_assert!(v3 <= v4 + 1e-9, "r1 {x}: {v3} > {v4}");
            prop_assert!(v4 <= v5 + 1e-9, "r1 {x}: {v4} > {v5}");
        }
    }

    /// The renewal rate never exceeds either branch's cap.
    #[test]
    fn renewal_rate_bounded(
        arrivals in 0.01f64..5.0,
        chances in 0.01f64..5.0,
        slots_per_service in 1.0f64..10.0,
        cycle in 1.0f64..20.0,
    ) {
        let p = RenewalQueueParams {
            arrivals_per_cycle: arrivals,
            chances_per_cycle: chances,
            slots_per_service,
            cycle_slots: cycle,
        };
        let r = renewal_queue_rate(&p).unwrap();
        prop_assert!(r <= arrivals / cycle + 1e-12);
        prop_assert!(r <= chances / (cycle * slots_per_service) + 1e-12);
        prop_assert!(r >= 0.0);
    }

    /// Short runs of every protocol on random channels complete with all
    /// per-slot invariant checks green, one transmitter per slot, coded
    /// payloads only from the relay, and primary deliveries in order.
    #[test]
    fn random_runs_uphold_invariants(
        spec in joint_spec_strategy(),
        alg_id in prop_oneof![Just(1u8), Just(3), Just(4), Just(5)],
        lambda in 0.0f64..=1.0,
        q in 0.0f64..=1.0,
        seed in 0u64..1_000_000,
    ) {
        let alg = Algorithm::from_id(alg_id).unwrap();
        let cfg = RunConfig::new(alg, spec, ArrivalProcess::bernoulli(lambda).unwrap())
            .with_horizon(2_000)
            .with_mix_q(if alg == Algorithm::CodedMixing { q } else { 0.0 })
            .with_seed(seed);
        let mut last_primary_id = 0u64;
        let metrics = engine::run_observed(&cfg, |obs| {
            assert_eq!(
                obs.decision.kind.transmitter(),
                obs.event.transmitter(),
                "slot {}: decision and channel event disagree on the transmitter",
                obs.slot
            );
            if let cogsim_core::protocols::Payload::Coded { .. } = obs.decision.payload {
                assert_eq!(
                    obs.event.transmitter(),
                    cogsim_core::Transmitter::Node2,
                    "coded payload from the primary source at slot {}",
                    obs.slot
                );
            }
            for d in obs.deliveries {
                if d.session == Session::Primary {
                    assert!(d.id > last_primary_id, "primary delivered out of order");
                    last_primary_id = d.id;
                    let head = d.head_slot.expect("delivered packets were transmitted");
                    assert!(head <= d.slot && d.arrival_slot <= head);
                }
            }
        });
        prop_assert!(metrics.is_ok(), "engine error: {:?}", metrics.err());
    }

    /// Identical seeds reproduce identical delivery streams; the mixing
    /// protocol at bias 0 reproduces the plain coding protocol exactly.
    #[test]
    fn mix_zero_equals_coding(
        spec in admissible_spec_strategy(),
        lambda in 0.05f64..0.5,
        seed in 0u64..1_000_000,
    ) {
        let arrivals = ArrivalProcess::bernoulli(lambda).unwrap();
        let mut cfg4 = RunConfig::new(Algorithm::Coding, spec.clone(), arrivals.clone())
            .with_horizon(4_000)
            .with_seed(seed);
        cfg4.record_deliveries = true;
        let mut cfg5 = RunConfig::new(Algorithm::CodedMixing, spec, arrivals)
            .with_horizon(4_000)
            .with_seed(seed);
        cfg5.record_deliveries = true;
        let m4 = engine::run(&cfg4).unwrap();
        let m5 = engine::run(&cfg5).unwrap();
        prop_assert_eq!(m4.deliveries.as_ref().unwrap(), m5.deliveries.as_ref().unwrap());
    }

    /// Arrival draws stay inside the declared support.
    #[test]
    fn pmf_draws_in_support(
        masses in proptest::collection::btree_map(0u32..6, 0.01f64..1.0, 1..5),
        seed in 0u64..100_000,
    ) {
        use rand::SeedableRng;
        let total: f64 = masses.values().sum();
        let entries: Vec<(u32, f64)> = masses.iter().map(|(&k, &v)| (k, v / total)).collect();
        let pmf = ArrivalProcess::from_pmf(&entries).unwrap();
        let mut rng = rand_chacha::ChaCha12Rng::seed_from_u64(seed);
        for _ in 0..200 {
            let v = pmf.draw(&mut rng);
            prop_assert!(masses.contains_key(&v), "drew {v} outside support");
        }
    }
}
