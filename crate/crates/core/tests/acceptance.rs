//! Acceptance suite: one test per shipped claim, each printing a single
//! pass/fail line (visible under `cargo test -- --nocapture`).

use std::time::Instant;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha12Rng;
use statrs::distribution::{ChiSquared, ContinuousCDF};

use blocking_measures::dynamics::Simulation;
use blocking_measures::ext_int::Finite;
use blocking_measures::measures::sample_blocking;
use blocking_measures::model::{builtin, BuiltinModel};
use blocking_measures::standup::{lay_down, stack_shape, stand_up, transfer_move};
use blocking_measures::state::Configuration;
use blocking_measures::verify::{
    check_detailed_balance, check_gap_expansion, check_jacobi, check_sector_decomposition,
    check_sector_transport, check_shift_identity, check_stationary_solve, FiniteChain,
};
use blocking_measures::{BuiltinParams, ModelSpec, SectorWeight};

fn report(id: &str, pass: bool, detail: &str) {
    println!("[acceptance] {id}: {} ({detail})", if pass { "pass" } else { "fail" });
    assert!(pass, "{id} failed: {detail}");
}

fn full_line_asep(p: f64) -> ModelSpec {
    builtin(BuiltinModel::Asep, BuiltinParams::new(p)).unwrap()
}

fn random_stack(rng: &mut impl Rng) -> Configuration {
    let (lattice, occupancy) = stack_shape();
    let len = rng.gen_range(1..=8usize);
    let values: Vec<i64> = (0..len).map(|_| rng.gen_range(0..=4)).collect();
    Configuration::new(lattice, occupancy, 1 - len as i64, values, 0, 0).unwrap()
}

#[test]
fn criterion_01_jacobi_triple_product_grid() {
    let start = Instant::now();
    let mut worst = 0.0f64;
    let mut all_pass = true;
    for x in [0.1, 0.3, 0.5, 0.7, 0.9] {
        for y in [0.25, 0.5, 1.0, 2.0, 4.0] {
            let r = check_jacobi(x, y, 1e-10).unwrap();
            worst = worst.max(r.residual - r.tail_budget);
            all_pass &= r.pass;
        }
    }
    let elapsed = start.elapsed();
    report(
        "01 jacobi-grid",
        all_pass && elapsed.as_secs_f64() < 1.0,
        &format!("25 points, worst residual-tail {worst:.3e}, {elapsed:.2?}"),
    );
}

#[test]
fn criterion_02_detailed_balance_all_builtins() {
    let start = Instant::now();
    let p = 0.7;
    let instances: Vec<(&str, ModelSpec, i64, i64)> = vec![
        (
            "asep/6",
            builtin(
                BuiltinModel::Asep,
                BuiltinParams::new(p).with_c(0.0).with_lattice(Finite(-3), Finite(2)),
            )
            .unwrap(),
            -1,
            1,
        ),
        (
            "k3-exclusion/4",
            builtin(
                BuiltinModel::KExclusion,
                BuiltinParams::new(p).with_k(3).with_c(0.0).with_lattice(Finite(-2), Finite(1)),
            )
            .unwrap(),
            -3,
            3,
        ),
        (
            "zrp-rate1/4",
            builtin(
                BuiltinModel::ZrpRate1,
                BuiltinParams::new(p).with_lattice(Finite(-3), Finite(0)),
            )
            .unwrap(),
            0,
            12,
        ),
        (
            "independent-walkers/3",
            builtin(
                BuiltinModel::IndependentWalkers,
                BuiltinParams::new(p).with_c(0.0).with_lattice(Finite(-2), Finite(0)),
            )
            .unwrap(),
            0,
            12,
        ),
        (
            "q-zrp/3",
            builtin(
                BuiltinModel::QZrp,
                BuiltinParams::new(p).with_q_hat(0.5).with_lattice(Finite(-2), Finite(0)),
            )
            .unwrap(),
            0,
            12,
        ),
        (
            "are-you-alone/3",
            builtin(
                BuiltinModel::AreYouAlone,
                BuiltinParams::new(p)
                    .with_epsilon_delta(0.3, 0.1)
                    .with_lattice(Finite(-2), Finite(0)),
            )
            .unwrap(),
            0,
            12,
        ),
        (
            "bricklayers/2",
            builtin(
                BuiltinModel::Bricklayers,
                BuiltinParams::new(p)
                    .with_beta(std::f64::consts::LN_2)
                    .with_c(0.0)
                    .with_lattice(Finite(-1), Finite(0)),
            )
            .unwrap(),
            -4,
            5,
        ),
    ];
    let mut worst = 0.0f64;
    let mut all_pass = true;
    let mut failures = Vec::new();
    for (tag, spec, cap_lo, cap_hi) in &instances {
        let chain = FiniteChain::with_caps(spec, *cap_lo, *cap_hi).unwrap();
        let r = check_detailed_balance(&chain, 1e-12).unwrap();
        worst = worst.max(r.residual);
        if !r.pass {
            failures.push(format!("{tag}: {:.3e}", r.residual));
        }
        all_pass &= r.pass;
    }
    let elapsed = start.elapsed();
    report(
        "02 detailed-balance",
        all_pass && elapsed.as_secs_f64() < 30.0,
        &format!("7 models, worst residual {worst:.3e}, {elapsed:.2?} {failures:?}"),
    );
}

#[test]
fn criterion_03_stationary_solve_oracle() {
    // the instances of criterion 2 whose enumerated space is closed under
    // the dynamics: finite alphabets, no occupancy truncation
    let asep = builtin(
        BuiltinModel::Asep,
        BuiltinParams::new(0.7).with_c(0.0).with_lattice(Finite(-3), Finite(2)),
    )
    .unwrap();
    let kexcl = builtin(
        BuiltinModel::KExclusion,
        BuiltinParams::new(0.7).with_k(3).with_c(0.0).with_lattice(Finite(-2), Finite(1)),
    )
    .unwrap();
    let mut worst = 0.0f64;
    let mut all_pass = true;
    for spec in [&asep, &kexcl] {
        let chain = FiniteChain::new(spec, 3).unwrap();
        let r = check_stationary_solve(&chain, 1e-10).unwrap();
        worst = worst.max(r.residual);
        all_pass &= r.pass;
    }
    report("03 stationary-solve", all_pass, &format!("worst relative deviation {worst:.3e}"));
}

#[test]
fn criterion_04_shift_identity() {
    let asep = full_line_asep(0.7);
    let kexcl = builtin(BuiltinModel::KExclusion, BuiltinParams::new(0.7).with_k(2)).unwrap();
    let ra = check_shift_identity(&asep, Some(0.0), 1000, 11, 1e-12).unwrap();
    let rk = check_shift_identity(&kexcl, Some(0.0), 1000, 12, 1e-12).unwrap();
    report(
        "04 shift-identity",
        ra.pass && rk.pass,
        &format!("asep {:.3e}, k2-exclusion {:.3e}", ra.residual, rk.residual),
    );
}

#[test]
fn criterion_05_sector_law_chi_square() {
    let spec = full_line_asep(0.7);
    let sector = SectorWeight::new(0.7, 0.0).unwrap();
    let mut rng = ChaCha12Rng::seed_from_u64(5);
    const DRAWS: u64 = 100_000;
    let mut counts = [0u64; 11]; // n = -5 ..= 5
    let mut in_range = 0u64;
    for _ in 0..DRAWS {
        let z = sample_blocking(&spec, 0.0, 1e-8, &mut rng).unwrap();
        let n = z.conserved_n().unwrap();
        if (-5..=5).contains(&n) {
            counts[(n + 5) as usize] += 1;
            in_range += 1;
        }
    }
    let total_weight: f64 = (-5..=5).map(|n| sector.weight(n)).sum();
    // pool the extreme levels into tail bins so every expected count is
    // large enough (>= 5) for the chi-square approximation to hold
    let pooled: [&[i64]; 9] =
        [&[-5, -4], &[-3], &[-2], &[-1], &[0], &[1], &[2], &[3], &[4, 5]];
    let mut statistic = 0.0;
    for bin in pooled {
        let expected: f64 = bin
            .iter()
            .map(|&n| in_range as f64 * sector.weight(n) / total_weight)
            .sum();
        let observed: f64 = bin.iter().map(|&n| counts[(n + 5) as usize] as f64).sum();
        statistic += (observed - expected).powi(2) / expected;
    }
    // 0.1% level, 9 bins conditioned on the range => 8 degrees of freedom
    let threshold = ChiSquared::new(8.0).unwrap().inverse_cdf(0.999);
    report(
        "05 sector-law",
        statistic < threshold && in_range > DRAWS - 10,
        &format!("chi-square {statistic:.3} < {threshold:.3}, {in_range}/{DRAWS} in range"),
    );
}

#[test]
fn criterion_06_ergodic_decomposition() {
    let r = check_sector_decomposition(0.7, 0.0, 6, 1e-10).unwrap();
    report(
        "06 sector-decomposition",
        r.pass,
        &format!("residual {:.3e}, tail {:.3e}", r.residual, r.tail_budget),
    );
}

#[test]
fn criterion_07_stand_up_bijection() {
    let mut rng = ChaCha12Rng::seed_from_u64(7);
    let (ex_lattice, ex_occupancy) = blocking_measures::standup::exclusion_shape();

    // 10^4 round trips starting from stacks
    for _ in 0..10_000 {
        let z = random_stack(&mut rng);
        let n = rng.gen_range(-6..=6);
        let (back, m) = stand_up(&lay_down(&z, n).unwrap()).unwrap();
        assert_eq!((back, m), (z, n));
    }
    // 10^4 round trips starting from exclusion configurations
    for _ in 0..10_000 {
        let len = rng.gen_range(1..=10usize);
        let window_lo = rng.gen_range(-6..=0i64);
        let values: Vec<i64> = (0..len).map(|_| rng.gen_range(0..=1)).collect();
        let a = Configuration::new(ex_lattice, ex_occupancy, window_lo, values, 0, 1).unwrap();
        let (z, n) = stand_up(&a).unwrap();
        assert_eq!(lay_down(&z, n).unwrap(), a);
    }

    // coupled dynamics: drive the half-line stack process and mirror every
    // event on the laid-down exclusion configuration
    let spec = builtin(BuiltinModel::ZrpRate1, BuiltinParams::new(0.7)).unwrap();
    let c = spec.c_anchor.unwrap();
    let initial = sample_blocking(&spec, c, 1e-8, &mut rng).unwrap();
    let n = 3i64;
    let mut excl = lay_down(&initial, n).unwrap();
    let mut sim = Simulation::new(&spec, initial, 64).unwrap();
    for _ in 0..1_000 {
        let before = sim.config().clone();
        let event = sim.step(&mut rng).unwrap();
        let (from, to) = transfer_move(&before, n, event.from, event.to).unwrap();
        excl = excl.apply_move(from, to).unwrap();
        assert_eq!(lay_down(sim.config(), n).unwrap(), excl);
    }
    report("07 stand-up-bijection", true, "2x10^4 round trips + 10^3 coupled events exact");
}

#[test]
fn criterion_08_transport_and_gap_expansion() {
    let mut rng = ChaCha12Rng::seed_from_u64(8);
    let mut worst = 0.0f64;
    let mut all_pass = true;
    for p in [0.55, 0.7, 0.9] {
        for c in [-1.0, 0.0, 1.0] {
            // the ground-stack special case
            let (lattice, occupancy) = stack_shape();
            let ground = Configuration::new(lattice, occupancy, 0, vec![0], 0, 0).unwrap();
            let r = check_sector_transport(p, c, &ground, 0, 1e-9).unwrap();
            worst = worst.max(r.residual - r.tail_budget);
            all_pass &= r.pass;
            let r = check_gap_expansion(p, c, &ground, 1e-9).unwrap();
            worst = worst.max(r.residual - r.tail_budget);
            all_pass &= r.pass;
            for _ in 0..100 {
                let z = random_stack(&mut rng);
                let n = rng.gen_range(-6..=6);
                let r = check_sector_transport(p, c, &z, n, 1e-9).unwrap();
                worst = worst.max(r.residual - r.tail_budget);
                all_pass &= r.pass;
                let r = check_gap_expansion(p, c, &z, 1e-9).unwrap();
                worst = worst.max(r.residual - r.tail_budget);
                all_pass &= r.pass;
            }
        }
    }
    report(
        "08 transport/gap-expansion",
        all_pass,
        &format!("9 parameter pairs x 101 instances, worst residual-tail {worst:.3e}"),
    );
}

#[test]
fn criterion_09_conservation_over_a_million_events() {
    let spec = full_line_asep(0.7);
    let initial = Configuration::ground(spec.lattice, spec.occupancy);
    let mut sim = Simulation::new(&spec, initial, 200).unwrap();
    let mut rng = ChaCha12Rng::seed_from_u64(9);
    for k in 0..1_000_000u64 {
        sim.step(&mut rng).unwrap();
        assert_eq!(sim.config().conserved_n().unwrap(), 0, "N drifted at event {k}");
    }
    report(
        "09 conservation",
        true,
        &format!("N = 0 after each of 10^6 events, {} audit failures", sim.audit_failures()),
    );
}

#[test]
fn criterion_10_time_averages_match_the_sector_marginals() {
    // Enumeration oracle for the sector-0 conditioned measure: deviations
    // from the ground state confined to [-W, W], weights e^{sum theta_i z_i}
    // relative to ground, marginals conditioned on N = 0.
    const W: i64 = 10;
    let log_pq = (0.7f64 / 0.3).ln();
    let sites: u32 = (2 * W + 1) as u32;
    let mut cond_weight = 0.0f64;
    let mut cond_occ = [0.0f64; 11]; // sites -5 ..= 5
    for mask in 0u64..(1u64 << sites) {
        let mut n = 0i64;
        let mut log_w = 0.0f64;
        for b in 0..sites {
            let i = b as i64 - W;
            let occupied = (mask >> b) & 1 == 1;
            if occupied && i <= 0 {
                n -= 1;
            }
            if !occupied && i >= 1 {
                n += 1;
            }
            // relative to the ground state (0 for i <= 0, 1 for i >= 1)
            let ground = i64::from(i >= 1);
            log_w += i as f64 * log_pq * ((occupied as i64) - ground) as f64;
        }
        if n != 0 {
            continue;
        }
        let w = log_w.exp();
        cond_weight += w;
        for (slot, i) in (-5..=5).enumerate() {
            if (mask >> ((i + W) as u32)) & 1 == 1 {
                cond_occ[slot] += w;
            }
        }
    }
    let oracle: Vec<f64> = cond_occ.iter().map(|o| o / cond_weight).collect();

    // 25 independent replicas from the sector-0 ground state: burn 100,
    // measure 400, so 10^4 units of measured time in total.
    let spec = full_line_asep(0.7);
    const REPLICAS: usize = 25;
    const T_BURN: f64 = 100.0;
    const T_MEASURE: f64 = 400.0;
    let mut replica_means = Vec::with_capacity(REPLICAS);
    for k in 0..REPLICAS {
        let mut rng = ChaCha12Rng::seed_from_u64(10);
        rng.set_stream(k as u64);
        let initial = Configuration::ground(spec.lattice, spec.occupancy);
        let mut sim = Simulation::new(&spec, initial, 100).unwrap();
        let mut acc = [0.0f64; 11];
        let t_end = T_BURN + T_MEASURE;
        loop {
            let t0 = sim.time();
            if t0 >= t_end {
                break;
            }
            let snapshot: Vec<i64> = (-5..=5).map(|i| sim.config().get(i)).collect();
            let t1 = sim.step(&mut rng).unwrap().time.min(t_end);
            let weight = (t1 - t0.max(T_BURN)).max(0.0);
            for (a, &v) in acc.iter_mut().zip(&snapshot) {
                *a += weight * v as f64;
            }
            if t1 >= t_end {
                break;
            }
        }
        for a in &mut acc {
            *a /= T_MEASURE;
        }
        replica_means.push(acc);
    }

    let mut all_pass = true;
    let mut worst_sigmas = 0.0f64;
    for slot in 0..11 {
        let mean: f64 = replica_means.iter().map(|r| r[slot]).sum::<f64>() / REPLICAS as f64;
        let var: f64 = replica_means.iter().map(|r| (r[slot] - mean).powi(2)).sum::<f64>()
            / (REPLICAS - 1) as f64;
        let se = (var / REPLICAS as f64).sqrt().max(1e-12);
        let sigmas = (mean - oracle[slot]).abs() / se;
        worst_sigmas = worst_sigmas.max(sigmas);
        all_pass &= sigmas <= 3.0;
    }
    report(
        "10 monte-carlo-stationarity",
        all_pass,
        &format!("sites [-5,5], worst deviation {worst_sigmas:.2} sigma"),
    );
}
