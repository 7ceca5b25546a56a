//! Simulation-versus-analysis cross-checks: every closed form the crate
//! exposes is reproduced by the discrete-event engine on fixed seeds.

use cogsim_core::analytic::{cycle_means, ChannelMoments, ServiceChain};
use cogsim_core::engine::{self, RunConfig};
use cogsim_core::protocols::SlotKind;
use cogsim_core::{Algorithm, ArrivalProcess, ErasureSpec};

/// Independent channel of the two-protocol saturation examples
/// (eps{2}^1 = 0.2, eps{3}^1 = 0.8, eps{4}^1 = 0.5, eps{3}^2 = eps{4}^2 = 0.2).
fn independent_spec() -> ErasureSpec {
    ErasureSpec::from_marginals_independent(0.2, 0.8, 0.5, 0.2, 0.2, true).unwrap()
}

/// Correlated worked-example channel: independent node-1 erasures
/// (0.3, 0.77, 0.6), node-2 pattern table [0.75, 0.10, 0.00, 0.15].
fn reference_spec() -> ErasureSpec {
    let mut tx1 = [0.0; 8];
    for (mask, slot) in tx1.iter_mut().enumerate() {
        let p2 = if mask & 1 != 0 { 0.7 } else { 0.3 };
        let p3 = if mask & 2 != 0 { 0.23 } else { 0.77 };
        let p4 = if mask & 4 != 0 { 0.4 } else { 0.6 };
        *slot = p2 * p3 * p4;
    }
    ErasureSpec::from_joint(tx1, [0.75, 0.10, 0.00, 0.15], true).unwrap()
}

fn saturated(alg: Algorithm, spec: ErasureSpec, q: f64, seed: u64) -> engine::RunMetrics {
    let cfg = RunConfig::new(alg, spec, ArrivalProcess::bernoulli(1.0).unwrap())
        .with_horizon(1_000_000)
        .with_mix_q(q)
        .with_seed(seed);
    engine::run(&cfg).unwrap()
}

#[test]
fn saturation_throughput_matches_closed_forms() {
    let m_ind = ChannelMoments::from_spec(&independent_spec());
    let r1_direct = saturated(Algorithm::NoCooperation, independent_spec(), 0.0, 11).r1;
    assert!(
        (r1_direct - m_ind.mu1_no_cooperation()).abs() < 0.01,
        "direct: simulated {r1_direct}, closed form {}",
        m_ind.mu1_no_cooperation()
    );
    let r1_fwd = saturated(Algorithm::Forwarding, independent_spec(), 0.0, 12).r1;
    assert!(
        (r1_fwd - m_ind.mu1_forwarding()).abs() < 0.01,
        "forwarding: simulated {r1_fwd}, closed form {}",
        m_ind.mu1_forwarding()
    );

    // Coding shares the forwarding service law.
    let r1_coding = saturated(Algorithm::Coding, independent_spec(), 0.0, 13).r1;
    assert!((r1_coding - m_ind.mu1_forwarding()).abs() < 0.01);

    // The mixing protocol tracks the chain's pi[Fresh] at interior biases.
    let m_ref = ChannelMoments::from_spec(&reference_spec());
    for (q, seed) in [(0.0, 14), (0.3, 15), (0.7, 16), (1.0, 17)] {
        let chain = ServiceChain::build(&m_ref, q).unwrap();
        let r1 = saturated(Algorithm::CodedMixing, reference_spec(), q, seed).r1;
        assert!(
            (r1 - chain.pi_fresh()).abs() < 0.01,
            "mixing q={q}: simulated {r1}, chain {}",
            chain.pi_fresh()
        );
    }
}

#[test]
fn saturated_service_mean_matches_chain() {
    let m = ChannelMoments::from_spec(&reference_spec());
    let chain = ServiceChain::build(&m, 0.0).unwrap();
    let metrics = saturated(Algorithm::Coding, reference_spec(), 0.0, 21);
    let sim_mean = metrics.service.mean;
    let want = chain.mean_service();
    assert!(
        (sim_mean - want).abs() / want < 0.02,
        "service mean {sim_mean} vs chain {want}"
    );
}

#[test]
fn relay_seen_slot_fraction_matches_chain() {
    // Under primary saturation every slot is a service slot, so the fraction
    // of seen-relay slots converges to the chain's pi[RelaySeen].
    let m = ChannelMoments::from_spec(&reference_spec());
    let chain = ServiceChain::build(&m, 0.0).unwrap();
    let cfg = RunConfig::new(
        Algorithm::Coding,
        reference_spec(),
        ArrivalProcess::bernoulli(1.0).unwrap(),
    )
    .with_horizon(1_000_000)
    .with_seed(22);
    let warmup = cfg.effective_warmup();
    let mut seen = 0u64;
    let mut measured = 0u64;
    engine::run_observed(&cfg, |obs| {
        if obs.slot >= warmup {
            measured += 1;
            if matches!(
                obs.decision.kind,
                SlotKind::RelaySeenPlain | SlotKind::RelaySeenCoded
            ) {
                seen += 1;
            }
        }
    })
    .unwrap();
    let fraction = seen as f64 / measured as f64;
    assert!(
        (fraction - chain.pi_relay_seen()).abs() < 0.01,
        "seen fraction {fraction} vs pi {}",
        chain.pi_relay_seen()
    );
}

#[test]
fn busy_idle_cycles_match_renewal_forms() {
    // Direct protocol at half load: rho = 0.5, Bernoulli arrivals.
    let lambda = 0.1;
    let spec = independent_spec();
    let m = ChannelMoments::from_spec(&spec);
    let arrivals = ArrivalProcess::bernoulli(lambda).unwrap();
    let want = cycle_means(lambda, m.mu1_no_cooperation(), arrivals.p_zero()).unwrap();
    let cfg = RunConfig::new(Algorithm::NoCooperation, spec, arrivals)
        .with_horizon(2_000_000)
        .with_seed(23);
    let metrics = engine::run(&cfg).unwrap();
    let cycles = metrics.cycles;
    assert!(!cycles.insufficient, "only {} busy cycles", cycles.busy_cycles);
    assert!(
        (cycles.busy_mean - want.busy).abs() / want.busy < 0.03,
        "busy mean {} vs {}",
        cycles.busy_mean,
        want.busy
    );
    assert!(
        (cycles.idle_mean - want.idle).abs() / want.idle < 0.03,
        "idle mean {} vs {}",
        cycles.idle_mean,
        want.idle
    );
}

#[test]
fn stable_load_delivers_at_arrival_rate() {
    // Batch arrivals: pmf {0: 0.8, 1: 0.1, 2: 0.1}, mean 0.3 < mu = 7/15.
    let arrivals = ArrivalProcess::from_pmf(&[(0, 0.8), (1, 0.1), (2, 0.1)]).unwrap();
    let cfg = RunConfig::new(Algorithm::Forwarding, independent_spec(), arrivals)
        .with_horizon(1_000_000)
        .with_seed(24);
    let metrics = engine::run(&cfg).unwrap();
    assert!(metrics.is_stable(), "slope {}", metrics.trend_slope);
    assert!(
        (metrics.r1 - 0.3).abs() < 0.01,
        "delivered rate {} vs offered 0.3",
        metrics.r1
    );
}

#[test]
fn idle_slots_carry_secondary_at_full_rate() {
    // No primary traffic: every slot is a fresh secondary transmission and
    // deliveries run at 1 - eps{4}^2.
    let cfg = RunConfig::new(
        Algorithm::NoCooperation,
        independent_spec(),
        ArrivalProcess::bernoulli(0.0).unwrap(),
    )
    .with_horizon(500_000)
    .with_seed(25);
    let metrics = engine::run(&cfg).unwrap();
    assert!((metrics.r2 - 0.8).abs() < 0.01, "r2 = {}", metrics.r2);
    assert_eq!(metrics.r1, 0.0);
}
