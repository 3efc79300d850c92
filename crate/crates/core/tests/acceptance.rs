//! Acceptance suite. Every test prints one `[PASS]`/`[FAIL]` line straight to
//! stdout (visible without `--nocapture`) and then asserts.
//!
//!     cargo test --release -p jprc-core --test acceptance

use std::io::Write;
use std::sync::Mutex;
use std::time::{Duration, Instant};

use jprc_core::baselines::{equally_reduced_power, exhaustive_search, water_filling_single_cell, GridSpec};
use jprc_core::harness::{compare_schemes, run_sweep, ExperimentConfig, Method, SweepVariable};
use jprc_core::interference::InterferenceGraph;
use jprc_core::jprc::{compute_targets, power_update, run_observed};
use jprc_core::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

// the runtime limits assume the suite has the machine to itself
static SERIAL: Mutex<()> = Mutex::new(());

fn report(name: &str, pass: bool, detail: &str, elapsed: Duration, limit: Duration) {
    let ok = pass && elapsed < limit;
    let line = format!(
        "[{}] {name}: {detail} ({:.2} s, limit {} s)\n",
        if ok { "PASS" } else { "FAIL" },
        elapsed.as_secs_f64(),
        limit.as_secs()
    );
    let mut out = std::io::stdout().lock();
    out.write_all(line.as_bytes()).unwrap();
    out.flush().unwrap();
    assert!(pass, "{name}: {detail}");
    assert!(elapsed < limit, "{name}: took {elapsed:?}, limit {limit:?}");
}

fn serial() -> std::sync::MutexGuard<'static, ()> {
    SERIAL.lock().unwrap_or_else(|e| e.into_inner())
}

fn rel_close(a: f64, b: f64, tol: f64) -> bool {
    (a - b).abs() <= tol * a.abs().max(b.abs())
}

#[test]
fn water_filling_equivalence() {
    let _g = serial();
    let start = Instant::now();
    let cfg = ScenarioConfig { num_cells: 1, area_side: 500.0, ..Default::default() };
    let params = JprcParams::default();
    let (mut checked, mut worst, mut failures) = (0usize, 0.0f64, Vec::new());
    for seed in 0..20u64 {
        let base = generate_scenario(&cfg, seed).unwrap();
        for r_min in (50..=100).step_by(10).map(f64::from) {
            let s = base.with_min_rate(r_min);
            let a = allocate_subchannels(&s, Scheme::Ofdma).unwrap();
            let res = run(&s, &a, &params).unwrap();
            for i in 0..s.num_users() {
                let ch = a.channels(i);
                let gains: Vec<f64> = ch.iter().map(|&k| s.gain(0, i, k)).collect();
                let peak: Vec<f64> = ch.iter().map(|&k| s.peak_power(i, k)).collect();
                let jprc: Vec<f64> = ch.iter().map(|&k| res.final_powers.get(i, k)).collect();
                let expected = match water_filling_single_cell(&gains, s.noise(0), r_min, &peak) {
                    Ok(wf) => wf.powers,
                    Err(Error::Infeasible) => peak.clone(),
                    Err(e) => panic!("{e}"),
                };
                for (p, q) in jprc.iter().zip(&expected) {
                    checked += 1;
                    if !(p == q || rel_close(*p, *q, 1e-6)) {
                        failures.push((seed, r_min, i));
                    }
                    if *q > 0.0 {
                        worst = worst.max((p - q).abs() / q);
                    }
                }
            }
        }
    }
    report(
        "water-filling equivalence",
        failures.is_empty(),
        &format!("{checked} powers, worst relative error {worst:.2e} (tol 1e-6), mismatches {failures:?}"),
        start.elapsed(),
        Duration::from_secs(10),
    );
}

#[test]
fn convergence_speed() {
    let _g = serial();
    let start = Instant::now();
    let cfg = ScenarioConfig::default();
    let params = JprcParams { convergence_tol: 1e-12, ..Default::default() };
    let mut iterations = Vec::new();
    let (mut converged, mut settled) = (0usize, 0usize);
    for seed in 0..100u64 {
        let s = generate_scenario(&cfg, seed).unwrap();
        for scheme in Scheme::ALL {
            let a = allocate_subchannels(&s, scheme).unwrap();
            let res = run(&s, &a, &params).unwrap();
            iterations.push(res.iterations_used);
            if !res.converged {
                continue;
            }
            converged += 1;
            let last = res.aggregate_power();
            let drift = res.power_trace.iter().skip(25).map(|p| (p - last).abs() / last).fold(0.0, f64::max);
            if drift < 1e-4 {
                settled += 1;
            }
        }
    }
    iterations.sort_unstable();
    let n = iterations.len();
    let median = (iterations[(n - 1) / 2] + iterations[n / 2]) as f64 / 2.0;
    let settled_frac = settled as f64 / converged.max(1) as f64;
    report(
        "convergence speed",
        median <= 50.0 && settled_frac >= 0.90,
        &format!(
            "median iterations {median} (<= 50), max {}, settled after 25 in {:.1}% of {converged} converged runs (>= 90%)",
            iterations[n - 1],
            100.0 * settled_frac
        ),
        start.elapsed(),
        Duration::from_secs(120),
    );
}

#[test]
fn noma_vs_ofdma_gain() {
    let _g = serial();
    let start = Instant::now();
    let cfg = ExperimentConfig { num_snapshots: 500, ..ExperimentConfig::new(ScenarioConfig::default()) };
    let cmp = compare_schemes(&cfg).unwrap();
    report(
        "NOMA vs OFDMA gain",
        (0.40..=0.75).contains(&cmp.ratio),
        &format!(
            "improvement ratio {:.4} over {} paired snapshots (band [0.40, 0.75]); mean NOMA {:.3e} W, mean OFDMA {:.3e} W",
            cmp.ratio, cmp.snapshots, cmp.mean_noma, cmp.mean_ofdma
        ),
        start.elapsed(),
        Duration::from_secs(300),
    );
}

#[test]
fn oracle_near_optimality() {
    let _g = serial();
    let start = Instant::now();
    let peak = 0.5e-6;
    let step = peak / 200.0;
    let cfg = ScenarioConfig {
        num_cells: 2,
        users_per_cell: 1,
        num_subchannels: 2,
        peak_power: peak,
        ..Default::default()
    };
    let grid = GridSpec::new(step);
    let params = JprcParams::default();
    let (mut cases, mut within) = (0usize, 0usize);
    let mut worst_excess = f64::NEG_INFINITY;
    for seed in 0..50u64 {
        let base = generate_scenario(&cfg, seed).unwrap();
        for r_min in [1.0, 2.0, 3.0] {
            let s = base.with_min_rate(r_min);
            let a = allocate_subchannels(&s, Scheme::Noma).unwrap();
            let oracle = match exhaustive_search(&s, &a, &[r_min; 2], &grid) {
                Ok(o) => o,
                Err(Error::Infeasible) => continue,
                Err(e) => panic!("{e}"),
            };
            cases += 1;
            let res = run(&s, &a, &params).unwrap();
            let bound = oracle.aggregate * 1.05 + 4.0 * step;
            if res.all_feasible() && res.aggregate_power() <= bound {
                within += 1;
            }
            worst_excess = worst_excess.max((res.aggregate_power() - oracle.aggregate) / step);
        }
    }
    let frac = within as f64 / cases.max(1) as f64;

    // one channel: the fixed point solves a 2x2 linear system
    let single = ScenarioConfig { num_subchannels: 1, peak_power: 1.0, ..cfg.clone() };
    let tight = JprcParams { max_iterations: 100_000, convergence_tol: 1e-24, ..Default::default() };
    let (mut solved, mut worst_rel) = (0usize, 0.0f64);
    for seed in 0..50u64 {
        let base = generate_scenario(&single, seed).unwrap();
        for r_min in [1.0, 2.0, 3.0] {
            let s = base.with_min_rate(r_min);
            let a = allocate_subchannels(&s, Scheme::Noma).unwrap();
            let g = (2f64).powf(r_min) - 1.0;
            let n = s.noise(0);
            // p0 = g (p1 h01 + N) / h00,  p1 = g (p0 h10 + N) / h11
            let (c0, c1) = (g * s.gain(0, 1, 0) / s.gain(0, 0, 0), g * s.gain(1, 0, 0) / s.gain(1, 1, 0));
            let (b0, b1) = (g * n / s.gain(0, 0, 0), g * n / s.gain(1, 1, 0));
            let det = 1.0 - c0 * c1;
            if det <= 0.0 {
                continue;
            }
            let exact = [(b0 + c0 * b1) / det, (b1 + c1 * b0) / det];
            let res = run(&s, &a, &tight).unwrap();
            solved += 1;
            for (u, e) in exact.iter().enumerate() {
                worst_rel = worst_rel.max((res.final_powers.get(u, 0) - e).abs() / e);
            }
        }
    }
    report(
        "oracle near-optimality",
        frac >= 0.90 && worst_rel <= 1e-9,
        &format!(
            "JPRC within 1.05 x exhaustive + 4 step on {within}/{cases} grid-feasible cases ({:.1}%, need 90%), \
             worst excess {worst_excess:.2} steps; single channel worst relative error {worst_rel:.2e} over {solved} systems (tol 1e-9)",
            100.0 * frac
        ),
        start.elapsed(),
        Duration::from_secs(180),
    );
}

#[test]
fn monotone_trends() {
    let _g = serial();
    let start = Instant::now();
    let rates: Vec<f64> = (5..=35).step_by(5).map(f64::from).collect();
    let peaks = [0.25e-3, 0.5e-3];
    let mut sweeps = Vec::new();
    for peak in peaks {
        let cfg = ExperimentConfig {
            num_snapshots: 100,
            sweep_variable: SweepVariable::MinRate,
            sweep_values: rates.clone(),
            ..ExperimentConfig::new(ScenarioConfig { peak_power: peak, ..Default::default() })
        };
        sweeps.push(run_sweep(&cfg).unwrap());
    }
    let mean = |sweep: usize, scheme, r: f64| sweeps[sweep].cell(Method::Jprc, scheme, Some(r)).unwrap().mean_aggregate_power;
    let mut violations = Vec::new();
    for scheme in Scheme::ALL {
        for (s, peak) in peaks.iter().enumerate() {
            for w in rates.windows(2) {
                if mean(s, scheme, w[1]) < mean(s, scheme, w[0]) {
                    violations.push(format!("{scheme} peak {peak}: R_min {} -> {} decreases", w[0], w[1]));
                }
            }
        }
        for &r in &rates {
            if mean(1, scheme, r) > mean(0, scheme, r) {
                violations.push(format!("{scheme} R_min {r}: raising the peak increases power"));
            }
        }
    }
    let span = |s: usize, scheme| (mean(s, scheme, 5.0), mean(s, scheme, 35.0));
    report(
        "monotone trends",
        violations.is_empty(),
        &format!(
            "R_min 5..35 at two peaks, 100 snapshots, both schemes; NOMA {:.3e} -> {:.3e} W, OFDMA {:.3e} -> {:.3e} W; violations {violations:?}",
            span(0, Scheme::Noma).0,
            span(0, Scheme::Noma).1,
            span(0, Scheme::Ofdma).0,
            span(0, Scheme::Ofdma).1
        ),
        start.elapsed(),
        Duration::from_secs(300),
    );
}

/// Log-uniform in `[lo, hi]`.
fn log_uniform(rng: &mut ChaCha8Rng, lo: f64, hi: f64) -> f64 {
    (rng.random_range(lo.ln()..hi.ln())).exp()
}

#[test]
fn property_suite() {
    let _g = serial();
    let start = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(2024);
    let mut failures: Vec<String> = Vec::new();

    // (a) targets add up to the minimum rate, over random calls ...
    let mut feasible_calls = 0usize;
    for _ in 0..10_000 {
        let n = rng.random_range(1..=30);
        let zeta: Vec<f64> = (0..n).map(|_| log_uniform(&mut rng, 1e-14, 1e-4)).collect();
        let peak: Vec<f64> = (0..n).map(|_| log_uniform(&mut rng, 1e-9, 1e-2)).collect();
        let r_min = rng.random_range(0.0..120.0);
        let t = compute_targets(&zeta, r_min, &peak).unwrap();
        if t.feasible {
            feasible_calls += 1;
            let sum: f64 = t.target_rate.iter().sum();
            if (sum - r_min).abs() > 1e-9 {
                failures.push(format!("targets sum {sum} for R_min {r_min}"));
            }
        }
    }
    // ... and in every iteration of real runs, together with (b) the box
    // constraint on every iterate
    let mut user_iterations = 0usize;
    let mut box_checks = 0usize;
    let mut converged_runs = Vec::new();
    let base = ScenarioConfig::default();
    // run to the fixed point rather than to the default watt-level tolerance,
    // which leaves micro-watt powers with ~1e-4 relative slack
    let fixed_point = JprcParams { max_iterations: 5000, convergence_tol: 1e-20, ..Default::default() };
    for seed in 0..20u64 {
        let r_min = [5.0, 20.0, 35.0, 60.0][seed as usize % 4];
        let s = generate_scenario(&ScenarioConfig { min_rate: r_min, ..base.clone() }, 1000 + seed).unwrap();
        for scheme in Scheme::ALL {
            let a = allocate_subchannels(&s, scheme).unwrap();
            let res = run_observed(&s, &a, &fixed_point, |view| {
                for (i, t) in view.targets.iter().enumerate() {
                    if t.feasible {
                        user_iterations += 1;
                        let sum: f64 = t.target_rate.iter().sum();
                        if (sum - s.min_rate(i)).abs() > 1e-9 {
                            failures.push(format!("iteration {} user {i}: targets sum {sum}", view.iteration));
                        }
                    }
                    for &k in a.channels(i) {
                        box_checks += 1;
                        let p = view.powers.get(i, k);
                        if !(0.0..=s.peak_power(i, k)).contains(&p) {
                            failures.push(format!("iteration {} user {i} channel {k}: power {p} outside box", view.iteration));
                        }
                    }
                }
            })
            .unwrap();
            if res.converged {
                converged_runs.push((s.clone(), a, res));
            }
        }
    }

    // (c) at convergence, active non-peak channels hit their target SINR
    let mut sinr_checks = 0usize;
    let mut worst_sinr = 0.0f64;
    for (s, a, res) in &converged_runs {
        let graph = InterferenceGraph::new(s, a).unwrap();
        for i in 0..s.num_users() {
            let zeta = graph.zeta_row(i, &res.final_powers);
            let t = &res.final_targets[i];
            for (pos, &k) in a.channels(i).iter().enumerate() {
                let p = res.final_powers.get(i, k);
                if p <= 0.0 || p >= s.peak_power(i, k) {
                    continue;
                }
                sinr_checks += 1;
                let err = (p / zeta[pos] - t.target_sinr[pos]).abs() / t.target_sinr[pos];
                worst_sinr = worst_sinr.max(err);
            }
        }
    }
    if worst_sinr > 1e-6 {
        failures.push(format!("fixed-point SINR off by {worst_sinr:.2e}"));
    }

    // (d) the single-channel update map is monotone and strictly scalable
    // NOMA with four users per cell, OFDMA with one (a single channel cannot be split)
    let single = ScenarioConfig { num_subchannels: 1, peak_power: 1e3, ..base.clone() };
    let single_ofdma = ScenarioConfig { users_per_cell: 1, ..single.clone() };
    for trial in 0..1000u64 {
        let (cfg, scheme) = if trial % 2 == 0 { (&single, Scheme::Noma) } else { (&single_ofdma, Scheme::Ofdma) };
        let s = generate_scenario(cfg, 5000 + trial).unwrap();
        let a = allocate_subchannels(&s, scheme).unwrap();
        let graph = InterferenceGraph::new(&s, &a).unwrap();
        let users = s.num_users();
        let r_min = rng.random_range(0.5..8.0);
        let map = |p: &PowerMatrix| -> Vec<f64> {
            (0..users)
                .map(|i| {
                    if a.channels(i).is_empty() {
                        return 0.0;
                    }
                    let z = graph.zeta_row(i, p);
                    let t = compute_targets(&z, r_min, s.peak_row(i).get(..1).unwrap()).unwrap();
                    power_update(&t, &z, &[s.peak_power(i, 0)])[0]
                })
                .collect()
        };
        let assigned = |i: usize| a.is_assigned(i, 0);
        let rows = |f: &mut dyn FnMut(usize) -> f64| {
            PowerMatrix::from_rows(&(0..users).map(|i| vec![if assigned(i) { f(i) } else { 0.0 }]).collect::<Vec<_>>()).unwrap()
        };
        let p = rows(&mut |_| log_uniform(&mut rng, 1e-12, 1e-4));
        let q = rows(&mut |i| p.get(i, 0) + rng.random_range(0.0..1e-5));
        let alpha = rng.random_range(1.01..3.0);
        let scaled = rows(&mut |i| alpha * p.get(i, 0));
        let (ip, iq, ia) = (map(&p), map(&q), map(&scaled));
        for i in (0..users).filter(|&i| assigned(i)) {
            if iq[i] < ip[i] * (1.0 - 1e-12) {
                failures.push(format!("trial {trial} user {i}: map not monotone"));
            }
            if ia[i].is_nan() || alpha * ip[i] <= ia[i] {
                failures.push(format!("trial {trial} user {i}: map not strictly scalable"));
            }
        }
    }

    // (e) the joint grid search never does worse than a common power per user
    let tiny = ScenarioConfig {
        num_cells: 2,
        users_per_cell: 1,
        num_subchannels: 2,
        peak_power: 0.5e-6,
        ..base.clone()
    };
    let grid = GridSpec::new(0.5e-6 / 50.0);
    let mut tiny_cases = 0usize;
    for seed in 0..40u64 {
        let r_min = [0.5, 1.0, 1.5, 2.0][seed as usize % 4];
        let s = generate_scenario(&ScenarioConfig { min_rate: r_min, ..tiny.clone() }, 9000 + seed).unwrap();
        let a = allocate_subchannels(&s, Scheme::Noma).unwrap();
        let ex = exhaustive_search(&s, &a, &[r_min; 2], &grid);
        let eq = equally_reduced_power(&s, &a, &[r_min; 2], &grid);
        tiny_cases += 1;
        match (ex, eq) {
            (Ok(x), Ok(e)) if x.aggregate > e.aggregate => failures.push(format!("seed {seed}: exhaustive above equal power")),
            (Err(_), Ok(_)) => failures.push(format!("seed {seed}: equal power feasible, exhaustive not")),
            _ => {}
        }
    }

    report(
        "property suite",
        failures.is_empty(),
        &format!(
            "{feasible_calls} feasible random target calls, {user_iterations} feasible user-iterations, {box_checks} box checks, \
             {sinr_checks} SINR checks (worst {worst_sinr:.1e}), 1000 map instances, {tiny_cases} tiny grid instances; failures {:?}",
            failures.iter().take(5).collect::<Vec<_>>()
        ),
        start.elapsed(),
        Duration::from_secs(60),
    );
}
