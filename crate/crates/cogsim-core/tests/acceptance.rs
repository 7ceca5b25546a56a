//! Acceptance gate: ten go/no-go checks covering stability thresholds,
//! region reproduction, chain identities, service-time equivalence, the
//! dominance oracle, mixing degeneracy, region nesting, protocol invariants,
//! trace equivalence and the renewal queue. Each test prints exactly one
//! PASS/FAIL line (run with `--nocapture` to see them) and fails hard if its
//! tolerance is missed.

use std::time::Instant;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha12Rng;

use cogsim_core::analytic::{
    chain_identity_gaps, renewal_queue_rate, ChannelMoments, RenewalQueueParams, ServiceChain,
    ThroughputRegion,
};
use cogsim_core::dominance::dominance_report;
use cogsim_core::engine::{self, stability_probe, RunConfig};
use cogsim_core::protocols::{Payload, Session};
use cogsim_core::stats::{ks_two_sample, ks_two_sample_critical_1pct};
use cogsim_core::{Algorithm, ArrivalProcess, ErasureSpec, Transmitter};

// ---------------------------------------------------------------------------
// Fixtures and helpers
// ---------------------------------------------------------------------------

/// Independent channel of the two-protocol saturation examples:
/// eps{2}^1 = 0.2, eps{3}^1 = 0.8, eps{4}^1 = 0.5, eps{3}^2 = eps{4}^2 = 0.2.
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

/// Random independent admissible channel (node-3 erasure under the relay no
/// worse than under the source).
fn random_admissible_spec(rng: &mut ChaCha12Rng) -> ErasureSpec {
    let e2 = rng.gen_range(0.05..0.7);
    let a = rng.gen_range(0.25..0.85);
    let e4_1 = rng.gen_range(0.1..0.9);
    let e = a * rng.gen_range(0.1..0.85);
    let e4_2 = rng.gen_range(0.1..0.8);
    ErasureSpec::from_marginals_independent(e2, a, e4_1, e, e4_2, true).unwrap()
}

/// As above but additionally with eps{3,4}^1 >= eps{3,4}^2 (the regime where
/// the mixing coin is provably useless).
fn random_strongly_admissible_spec(rng: &mut ChaCha12Rng) -> ErasureSpec {
    for _ in 0..10_000 {
        let spec = random_admissible_spec(rng);
        if ChannelMoments::from_spec(&spec).strongly_admissible() {
            return spec;
        }
    }
    unreachable!("strongly admissible channels are not that rare");
}

fn verdict(num: u8, name: &str, pass: bool, detail: &str) {
    let tag = if pass { "PASS" } else { "FAIL" };
    println!("acceptance {num:02} {name}: {tag} — {detail}");
    assert!(pass, "acceptance {num:02} {name}: FAIL — {detail}");
}

// ---------------------------------------------------------------------------
// 1. Stability thresholds
// ---------------------------------------------------------------------------

#[test]
fn criterion_01_stability_thresholds() {
    let spec = independent_spec();
    let m = ChannelMoments::from_spec(&spec);
    let mu_direct = m.mu1_no_cooperation();
    let mu_coop = m.mu1_forwarding();
    let mut detail = String::new();
    let mut pass = true;
    for (alg, mu, seed) in [
        (Algorithm::NoCooperation, mu_direct, 101),
        (Algorithm::Forwarding, mu_coop, 102),
        (Algorithm::Coding, mu_coop, 103),
    ] {
        let base = RunConfig::new(
            alg,
            spec.clone(),
            ArrivalProcess::bernoulli(0.0).unwrap(),
        )
        .with_horizon(1_000_000)
        .with_seed(seed);
        let start = Instant::now();
        let points = stability_probe(&base, &[mu - 0.02, mu + 0.02]).unwrap();
        let per_point = start.elapsed().as_secs_f64() / 2.0;
        let ok = points[0].stable && !points[1].stable && per_point < 10.0;
        pass &= ok;
        detail.push_str(&format!(
            "{alg} λ={:.3}→{}/λ={:.3}→{} ({:.2}s/pt); ",
            points[0].lambda,
            if points[0].stable { "stable" } else { "UNSTABLE" },
            points[1].lambda,
            if points[1].stable { "STABLE" } else { "unstable" },
            per_point
        ));
    }
    verdict(1, "stability-thresholds", pass, detail.trim_end());
}

// ---------------------------------------------------------------------------
// 2. Region reproduction
// ---------------------------------------------------------------------------

#[test]
fn criterion_02_region_reproduction() {
    let cases = [
        (Algorithm::NoCooperation, independent_spec(), 201u64),
        (Algorithm::Forwarding, independent_spec(), 202),
        (Algorithm::Coding, reference_spec(), 203),
        (Algorithm::CodedMixing, reference_spec(), 204),
    ];
    let fractions = [0.1, 0.3, 0.5, 0.7, 0.85];
    let mut worst: f64 = 0.0;
    let mut pass = true;
    let mut detail = String::new();
    for (alg, spec, seed_base) in cases {
        let region = ThroughputRegion::compute(alg, &spec, 201).unwrap();
        let mut alg_worst: f64 = 0.0;
        for (k, frac) in fractions.iter().enumerate() {
            let r1 = frac * region.r1_max;
            let (want_r2, mix_q) = region.r2_max_with_q(r1);
            let cfg = RunConfig::new(
                alg,
                spec.clone(),
                ArrivalProcess::bernoulli(r1).unwrap(),
            )
            .with_horizon(1_000_000)
            .with_mix_q(mix_q.unwrap_or(0.0))
            .with_seed(seed_base * 10 + k as u64);
            let metrics = engine::run(&cfg).unwrap();
            let err = (metrics.r2 - want_r2).abs();
            alg_worst = alg_worst.max(err);
            pass &= err <= 0.01;
        }
        worst = worst.max(alg_worst);
        detail.push_str(&format!("{alg} worst |Δr2|={alg_worst:.4}; "));
    }
    verdict(
        2,
        "region-reproduction",
        pass,
        &format!("{}overall worst {worst:.4} (tol 0.01)", detail),
    );
}

// ---------------------------------------------------------------------------
// 3. Markov-chain identities
// ---------------------------------------------------------------------------

#[test]
fn criterion_03_chain_identities() {
    let m = ChannelMoments::from_spec(&reference_spec());
    let chain = ServiceChain::build(&m, 0.0).unwrap();

    // Quoted 5-decimal reference prints of the worked example.
    let quoted_ok = (chain.pi_fresh() - 0.24366).abs() < 1e-5
        && (chain.pi_relay_seen() - 0.31723).abs() < 1e-5;

    // Exact frozen values (independent rational-arithmetic evaluation:
    // 769/3156 and 1078000/3398223).
    let frozen_ok = (chain.pi_fresh() - 0.243_662_864_385_297_86).abs() < 1e-12
        && (chain.pi_relay_seen() - 0.317_224_620_044_064_2).abs() < 1e-12;

    // Closed forms versus the stationary solve across the bias range.
    let mut max_gap: f64 = 0.0;
    for q in [0.0, 0.25, 0.5, 0.75, 1.0] {
        let (gap_phi, gap_psi) = chain_identity_gaps(&m, q).unwrap();
        max_gap = max_gap.max(gap_phi).max(gap_psi);
    }
    let gaps_ok = max_gap < 1e-10;

    verdict(
        3,
        "chain-identities",
        quoted_ok && frozen_ok && gaps_ok,
        &format!(
            "pi_fresh={:.10} pi_relay_seen={:.10}, closed-form gap max {max_gap:.2e} (tol 1e-10)",
            chain.pi_fresh(),
            chain.pi_relay_seen()
        ),
    );
}

// ---------------------------------------------------------------------------
// 4. Service-time equivalence of coding and forwarding
// ---------------------------------------------------------------------------

#[test]
fn criterion_04_service_time_equivalence() {
    let spec = independent_spec();
    let mu = ChannelMoments::from_spec(&spec).mu1_forwarding();
    let lambda = 0.8 * mu;
    // Horizon sized for at least 1e5 measured deliveries per protocol.
    let horizon = (100_000.0 / (lambda * 0.9) * 1.15).ceil() as u64;
    let run = |alg: Algorithm, seed: u64| {
        let cfg = RunConfig::new(alg, spec.clone(), ArrivalProcess::bernoulli(lambda).unwrap())
            .with_horizon(horizon)
            .with_seed(seed);
        engine::run(&cfg).unwrap()
    };
    let m3 = run(Algorithm::Forwarding, 104);
    let m4 = run(Algorithm::Coding, 105);
    let n = m3.service_histogram.total();
    let k = m4.service_histogram.total();
    let stat = ks_two_sample(&m3.service_histogram, &m4.service_histogram);
    let crit = ks_two_sample_critical_1pct(n, k);
    verdict(
        4,
        "service-time-equivalence",
        n >= 100_000 && k >= 100_000 && stat < crit,
        &format!("n={n} m={k}, KS {stat:.5} < crit(1%) {crit:.5}"),
    );
}

// ---------------------------------------------------------------------------
// 5. Dominance oracle
// ---------------------------------------------------------------------------

#[test]
fn criterion_05_dominance_oracle() {
    let mut rng = ChaCha12Rng::seed_from_u64(777);
    let mut total_violations = 0u64;
    let mut worst_ks_margin = f64::INFINITY;
    let mut pass = true;
    for i in 0..10u64 {
        let spec = random_admissible_spec(&mut rng);
        let report = dominance_report(&spec, 100_000, 5_000 + i).unwrap();
        total_violations += report.violations;
        let g = &report.ks_direct_vs_geometric;
        worst_ks_margin = worst_ks_margin.min(g.critical_1pct - g.statistic);
        pass &= report.violations == 0 && !g.reject;
    }
    verdict(
        5,
        "dominance-oracle",
        pass,
        &format!(
            "10 specs x 1e5 draws: {total_violations} violations, \
             geometric-KS min margin {worst_ks_margin:.5}"
        ),
    );
}

// ---------------------------------------------------------------------------
// 6. Mixing degeneracy on strongly admissible channels
// ---------------------------------------------------------------------------

#[test]
fn criterion_06_mixing_degeneracy() {
    let mut rng = ChaCha12Rng::seed_from_u64(888);
    let mut pass = true;
    let mut worst_gap: f64 = 0.0;
    for _ in 0..20 {
        let spec = random_strongly_admissible_spec(&mut rng);
        let r4 = ThroughputRegion::compute(Algorithm::Coding, &spec, 101).unwrap();
        let r5 = ThroughputRegion::compute(Algorithm::CodedMixing, &spec, 101).unwrap();
        for p in &r5.boundary {
            let gap = (p.r2 - r4.r2_max(p.r1)).abs();
            worst_gap = worst_gap.max(gap);
            pass &= p.mix_q == Some(0.0) && gap <= 1e-9;
        }
    }
    // Where the relay reaches node 4 worse than the source does
    // (eps{3,4}^1 < eps{3,4}^2), mixing must strictly widen the region.
    let spec = reference_spec();
    let r4 = ThroughputRegion::compute(Algorithm::Coding, &spec, 101).unwrap();
    let r5 = ThroughputRegion::compute(Algorithm::CodedMixing, &spec, 101).unwrap();
    let best_gain = r5
        .boundary
        .iter()
        .map(|p| p.r2 - r4.r2_max(p.r1))
        .fold(f64::NEG_INFINITY, f64::max);
    pass &= best_gain > 1e-6;
    verdict(
        6,
        "mixing-degeneracy",
        pass,
        &format!(
            "20 strong specs: q*≡0, max |R5−R4| = {worst_gap:.2e} (tol 1e-9); \
             reference channel strict gain {best_gain:.4}"
        ),
    );
}

// ---------------------------------------------------------------------------
// 7. Region nesting
// ---------------------------------------------------------------------------

#[test]
fn criterion_07_region_nesting() {
    let mut rng = ChaCha12Rng::seed_from_u64(999);
    let mut pass = true;
    let mut worst: f64 = 0.0;
    for _ in 0..20 {
        let spec = random_admissible_spec(&mut rng);
        let r1 = ThroughputRegion::compute(Algorithm::NoCooperation, &spec, 2).unwrap();
        let r3 = ThroughputRegion::compute(Algorithm::Forwarding, &spec, 2).unwrap();
        let r4 = ThroughputRegion::compute(Algorithm::Coding, &spec, 2).unwrap();
        let r5 = ThroughputRegion::compute(Algorithm::CodedMixing, &spec, 2).unwrap();
        for i in 0..201 {
            let x = r5.r1_max * i as f64 / 200.0;
            let (v1, v3, v4, v5) = (r1.r2_max(x), r3.r2_max(x), r4.r2_max(x), r5.r2_max(x));
            let breach = (v1 - v3).max(v3 - v4).max(v4 - v5);
            worst = worst.max(breach);
            pass &= breach <= 1e-9;
        }
    }
    verdict(
        7,
        "region-nesting",
        pass,
        &format!("20 specs x 201 samples: worst nesting breach {worst:.2e} (tol 1e-9)"),
    );
}

// ---------------------------------------------------------------------------
// 8. Protocol invariants at scale
// ---------------------------------------------------------------------------

#[test]
fn criterion_08_protocol_invariants() {
    // Per protocol: 1e7 slots at 80% load with the engine's per-slot checks
    // plus observer-side checks for single-transmitter and relay-only coding.
    let cases = [
        (Algorithm::NoCooperation, independent_spec(), 0.0, 301u64),
        (Algorithm::Forwarding, independent_spec(), 0.0, 302),
        (Algorithm::Coding, reference_spec(), 0.0, 303),
        (Algorithm::CodedMixing, reference_spec(), 0.5, 304),
    ];
    let mut pass = true;
    let mut detail = String::new();
    for (alg, spec, q, seed) in cases {
        let m = ChannelMoments::from_spec(&spec);
        let mu = match alg {
            Algorithm::NoCooperation => m.mu1_no_cooperation(),
            Algorithm::Forwarding => m.mu1_forwarding(),
            _ => ServiceChain::build(&m, q).unwrap().pi_fresh(),
        };
        let cfg = RunConfig::new(
            alg,
            spec,
            ArrivalProcess::bernoulli(0.8 * mu).unwrap(),
        )
        .with_horizon(10_000_000)
        .with_mix_q(q)
        .with_seed(seed);
        let mut last_primary = 0u64;
        let mut slots = 0u64;
        let result = engine::run_observed(&cfg, |obs| {
            slots += 1;
            assert_eq!(
                obs.decision.kind.transmitter(),
                obs.event.transmitter(),
                "two transmitters in slot {}",
                obs.slot
            );
            if matches!(obs.decision.payload, Payload::Coded { .. }) {
                assert_eq!(obs.event.transmitter(), Transmitter::Node2);
            }
            for d in obs.deliveries {
                if d.session == Session::Primary {
                    assert!(d.id > last_primary, "out-of-order delivery");
                    last_primary = d.id;
                }
            }
        });
        let ok = result.is_ok() && slots == 10_000_000;
        pass &= ok;
        detail.push_str(&format!("{alg} {slots} slots ok; "));
        if let Err(e) = result {
            detail.push_str(&format!("{alg} ERROR {e}; "));
        }
    }
    verdict(8, "protocol-invariants", pass, detail.trim_end());
}

// ---------------------------------------------------------------------------
// 9. Trace equivalence of mixing at zero bias and plain coding
// ---------------------------------------------------------------------------

#[test]
fn criterion_09_trace_equivalence() {
    let mut rng = ChaCha12Rng::seed_from_u64(4242);
    let mut specs = vec![independent_spec(), reference_spec()];
    for _ in 0..3 {
        specs.push(random_admissible_spec(&mut rng));
    }
    let mut pass = true;
    let mut detail = String::new();
    for (i, spec) in specs.iter().enumerate() {
        let mu = ServiceChain::build(&ChannelMoments::from_spec(spec), 0.0)
            .unwrap()
            .pi_fresh();
        let arrivals = ArrivalProcess::bernoulli(0.7 * mu).unwrap();
        let run = |alg: Algorithm| {
            let mut cfg = RunConfig::new(alg, spec.clone(), arrivals.clone())
                .with_horizon(100_000)
                .with_seed(600 + i as u64);
            cfg.record_deliveries = true;
            engine::run(&cfg).unwrap()
        };
        let coding = run(Algorithm::Coding);
        let mixing = run(Algorithm::CodedMixing);
        let equal = coding.deliveries == mixing.deliveries
            && coding.delivered_primary == mixing.delivered_primary
            && coding.delivered_secondary == mixing.delivered_secondary;
        pass &= equal;
        detail.push_str(&format!(
            "spec{i}: {} records {}; ",
            coding.deliveries.as_ref().map_or(0, Vec::len),
            if equal { "identical" } else { "DIVERGED" }
        ));
    }
    verdict(9, "trace-equivalence", pass, detail.trim_end());
}

// ---------------------------------------------------------------------------
// 10. Renewal queue against a brute-force cycle simulator
// ---------------------------------------------------------------------------

/// Discrete pmf as (value, mass) pairs; masses sum to 1.
type Pmf = &'static [(u32, f64)];

fn draw_pmf(pmf: Pmf, rng: &mut ChaCha12Rng) -> u32 {
    let u: f64 = rng.gen();
    let mut acc = 0.0;
    for &(v, p) in pmf {
        acc += p;
        if u < acc {
            return v;
        }
    }
    pmf.last().unwrap().0
}

fn pmf_mean(pmf: Pmf) -> f64 {
    pmf.iter().map(|&(v, p)| v as f64 * p).sum()
}

/// Brute-force renewal-cycle queue: per cycle, arrivals join the backlog,
/// each service chance completes the head packet with probability `p_s`
/// (geometric services of mean `1/p_s` chances), and the cycle occupies a
/// drawn number of slots. Long-run delivered-per-slot rate.
fn brute_force_renewal_rate(
    arrivals: Pmf,
    chances: Pmf,
    cycle_slots: Pmf,
    p_s: f64,
    cycles: u64,
    seed: u64,
) -> f64 {
    let mut rng = ChaCha12Rng::seed_from_u64(seed);
    let mut backlog = 0u64;
    let mut delivered = 0u64;
    let mut slots = 0u64;
    for _ in 0..cycles {
        backlog += draw_pmf(arrivals, &mut rng) as u64;
        slots += draw_pmf(cycle_slots, &mut rng) as u64;
        for _ in 0..draw_pmf(chances, &mut rng) {
            if backlog > 0 && rng.gen::<f64>() < p_s {
                backlog -= 1;
                delivered += 1;
            }
        }
    }
    delivered as f64 / slots as f64
}

#[test]
fn criterion_10_renewal_queue() {
    // Ten parameter sets; the first five stable (arrivals below the service
    // capacity), the last five saturated. All sit at least 15% from the
    // branch boundary so finite runs classify them cleanly.
    struct Case {
        arrivals: Pmf,
        chances: Pmf,
        cycle: Pmf,
        p_s: f64,
    }
    let cases: [Case; 10] = [
        // Stable: E[A] * E[S] < E[H].
        Case { arrivals: &[(0, 0.7), (1, 0.3)], chances: &[(1, 1.0)], cycle: &[(2, 0.5), (3, 0.5)], p_s: 0.5 },
        Case { arrivals: &[(0, 0.5), (1, 0.5)], chances: &[(2, 1.0)], cycle: &[(3, 1.0)], p_s: 0.5 },
        Case { arrivals: &[(0, 0.8), (2, 0.2)], chances: &[(1, 0.5), (3, 0.5)], cycle: &[(2, 0.3), (5, 0.7)], p_s: 0.25 },
        Case { arrivals: &[(1, 1.0)], chances: &[(4, 1.0)], cycle: &[(4, 1.0)], p_s: 0.4 },
        Case { arrivals: &[(0, 0.6), (1, 0.2), (2, 0.2)], chances: &[(2, 0.5), (4, 0.5)], cycle: &[(4, 1.0)], p_s: 0.3 },
        // Saturated: E[A] * E[S] > E[H].
        Case { arrivals: &[(1, 0.5), (2, 0.5)], chances: &[(1, 1.0)], cycle: &[(2, 1.0)], p_s: 0.5 },
        Case { arrivals: &[(2, 1.0)], chances: &[(1, 0.5), (2, 0.5)], cycle: &[(3, 1.0)], p_s: 0.4 },
        Case { arrivals: &[(0, 0.3), (3, 0.7)], chances: &[(2, 1.0)], cycle: &[(2, 0.5), (4, 0.5)], p_s: 0.35 },
        Case { arrivals: &[(1, 1.0)], chances: &[(1, 1.0)], cycle: &[(2, 1.0)], p_s: 0.6 },
        Case { arrivals: &[(0, 0.2), (2, 0.8)], chances: &[(3, 1.0)], cycle: &[(5, 1.0)], p_s: 0.25 },
    ];
    let mut pass = true;
    let mut worst: f64 = 0.0;
    let mut stable_seen = 0;
    let mut saturated_seen = 0;
    for (i, c) in cases.iter().enumerate() {
        let params = RenewalQueueParams {
            arrivals_per_cycle: pmf_mean(c.arrivals),
            chances_per_cycle: pmf_mean(c.chances),
            slots_per_service: 1.0 / c.p_s,
            cycle_slots: pmf_mean(c.cycle),
        };
        // Branch classification with the demanded margin.
        let load = params.arrivals_per_cycle * params.slots_per_service;
        if load <= params.chances_per_cycle {
            assert!(load < 0.85 * params.chances_per_cycle, "case {i} too close");
            stable_seen += 1;
        } else {
            assert!(load > 1.15 * params.chances_per_cycle, "case {i} too close");
            saturated_seen += 1;
        }
        let want = renewal_queue_rate(&params).unwrap();
        let got = brute_force_renewal_rate(
            c.arrivals,
            c.chances,
            c.cycle,
            c.p_s,
            400_000,
            9_000 + i as u64,
        );
        let err = (got - want).abs();
        worst = worst.max(err);
        pass &= err <= 0.005;
    }
    pass &= stable_seen == 5 && saturated_seen == 5;
    verdict(
        10,
        "renewal-queue",
        pass,
        &format!(
            "{stable_seen} stable + {saturated_seen} saturated cases, worst |Δrate| = {worst:.4} (tol 0.005)"
        ),
    );
}
