//! Acceptance criteria, one PASS/FAIL line each. Runs with `cargo test --test acceptance`.

use std::fs;
use std::path::Path;
use std::process::Command;
use std::time::Instant;

use krylov_qfi::bounds::{
    kappa, krylov_bound, krylov_ladder, moments_operator, moments_spectral, relative_gap, taylor_bound,
    taylor_bound_tensor_oracle, theorem1_envelope,
};
use krylov_qfi::ensembles::{random_fullrank, random_rank_r};
use krylov_qfi::exact::{n_star, DEFAULT_GROUP_TOL};
use krylov_qfi::experiments::{run_experiment, ExperimentConfig, ExperimentKind};
use krylov_qfi::qcore::{c, collective_z, CMatrix, DensityMatrix, Observable, TransitionTable, C64};
use krylov_qfi::shadows::{
    batch_means, estimate_krylov_from_batches, estimate_taylor_from_batches, expected_snapshot, sample_shadows,
    u_stat_tk, ShadowBatch,
};

type Check = Result<String, String>;

fn ensure(cond: bool, msg: impl FnOnce() -> String) -> Result<(), String> {
    if cond {
        Ok(())
    } else {
        Err(msg())
    }
}

fn rel(a: f64, b: f64) -> f64 {
    (a - b).abs() / b.abs()
}

fn table(rho: &DensityMatrix, h: &Observable) -> TransitionTable {
    TransitionTable::from_state(rho, h).expect("valid instance")
}

/// Random Hermitian matrix with entries from a seeded Ginibre draw.
fn random_observable(d: usize, seed: u64) -> Observable {
    let g = random_rank_r(d, d, seed).unwrap().matrix().clone();
    let shift = CMatrix::from_fn(d, d, |i, j| c(((i * 7 + j * 3) % 5) as f64 * 0.1, ((i + 2 * j) % 3) as f64 * 0.05));
    let m = &g + &shift;
    Observable::new((&m + m.adjoint()) * c(0.5, 0.0)).unwrap()
}

fn ac1() -> Check {
    let h = collective_z(4).unwrap();
    let mut checked = 0;
    let mut max_terminal = 0.0f64;
    let mut worst_step = f64::INFINITY;
    for (family, r) in [("full-rank", 16), ("rank-2", 2)] {
        for seed in 0..100 {
            let rho = random_rank_r(16, r, 1000 + seed).unwrap();
            let t = table(&rho, &h);
            let ladder = krylov_ladder(&t, rho.spectrum(), usize::MAX);
            ensure(ladder.values.len() == ladder.n_star, || {
                format!("{family} seed {seed}: chain stopped at {} < n* = {}", ladder.values.len(), ladder.n_star)
            })?;
            for (i, w) in ladder.values.windows(2).enumerate() {
                worst_step = worst_step.min(w[1] - w[0]);
                ensure(w[1] - w[0] > -1e-12, || format!("{family} seed {seed}: B_{} > B_{}", i + 1, i + 2))?;
            }
            let terminal = rel(*ladder.values.last().unwrap(), ladder.qfi);
            max_terminal = max_terminal.max(terminal);
            ensure(terminal <= 1e-9, || format!("{family} seed {seed}: |B_n* - F_Q|/F_Q = {terminal:e}"))?;
            checked += 1;
        }
    }
    Ok(format!(
        "{checked} chains, max |B_n* - F_Q|/F_Q = {max_terminal:.1e}, smallest step {worst_step:.1e}"
    ))
}

fn ac2() -> Check {
    let env = theorem1_envelope(11.2, 3);
    ensure((env - 0.0990).abs() <= 0.0005, || format!("envelope(11.2, 3) = {env}"))?;
    let mut checks = 0;
    let mut tightest = f64::INFINITY;
    for n_qubits in [4usize, 6] {
        let d = 1 << n_qubits;
        let h = collective_z(n_qubits).unwrap();
        for seed in 0..100 {
            let rho = random_fullrank(d, 2000 + seed).unwrap();
            let t = table(&rho, &h);
            let ladder = krylov_ladder(&t, rho.spectrum(), 8);
            let k = kappa(rho.spectrum()).kappa;
            for n in 1..=ladder.n_star.min(8) {
                let gap = relative_gap(ladder.bound(n), ladder.qfi).map_err(|e| e.to_string())?;
                let bound = theorem1_envelope(k, n);
                tightest = tightest.min(bound - gap);
                ensure(gap <= bound + 1e-12, || format!("d={d} seed {seed} n={n}: gap {gap:e} > envelope {bound:e}"))?;
                checks += 1;
            }
        }
    }
    Ok(format!("envelope(11.2, 3) = {env:.4}; {checks} (state, n) checks, min slack {tightest:.1e}"))
}

fn ac3() -> Check {
    let mut checks = 0;
    for n_qubits in [4usize, 6] {
        let d = 1 << n_qubits;
        let h = collective_z(n_qubits).unwrap();
        for (family, r) in [("full-rank", d), ("rank-2", 2)] {
            for seed in 0..100 {
                let rho = random_rank_r(d, r, 3000 + seed).unwrap();
                let t = table(&rho, &h);
                let ladder = krylov_ladder(&t, rho.spectrum(), 4);
                for n in 1..=4 {
                    let kry = relative_gap(ladder.bound(n), ladder.qfi).map_err(|e| e.to_string())?;
                    let tay = relative_gap(taylor_bound(&t, 2 * n - 1).value, ladder.qfi).map_err(|e| e.to_string())?;
                    ensure(kry <= tay + 1e-12, || {
                        format!("d={d} {family} seed {seed} n={n}: Krylov gap {kry:e} > Taylor gap {tay:e}")
                    })?;
                    checks += 1;
                }
            }
        }
    }
    Ok(format!("{checks} (state, n) comparisons"))
}

fn ac4() -> Check {
    let rho = DensityMatrix::diagonal(&[0.5, 0.3, 0.2]).unwrap();
    let mut hm = CMatrix::zeros(3, 3);
    hm[(0, 1)] = c(1.0, 0.0);
    hm[(1, 0)] = c(1.0, 0.0);
    let h = Observable::new(hm).unwrap();
    let report = n_star(&table(&rho, &h), rho.spectrum(), DEFAULT_GROUP_TOL);
    ensure(report.n_star == 1 && report.card_s == 3 && report.card_j == 2, || format!("qutrit: {report:?}"))?;

    let h = collective_z(4).unwrap();
    let mut seen = Vec::new();
    let mut mismatches = Vec::new();
    for r in [2usize, 3] {
        for seed in 0..50 {
            let rho = random_rank_r(16, r, 4000 + seed).unwrap();
            let t = table(&rho, &h);
            let report = n_star(&t, rho.spectrum(), DEFAULT_GROUP_TOL);
            let ladder = krylov_ladder(&t, rho.spectrum(), usize::MAX);
            let first_exact = (1..=ladder.values.len()).find(|&n| rel(ladder.bound(n), ladder.qfi) <= 1e-9);
            if first_exact != Some(report.n_star) {
                let gap = first_exact.map_or(f64::NAN, |n| rel(ladder.bound(n), ladder.qfi));
                mismatches.push(format!(
                    "rank {r} seed {seed}: B_n within 1e-9 at n = {first_exact:?} (gap {gap:.1e}) but n* = {}",
                    report.n_star
                ));
            }
            ensure(report.n_star <= r * (r + 1) / 2, || format!("rank {r} seed {seed}: n* = {} > r(r+1)/2", report.n_star))?;
            // Independent route: the moment Gram system below n* must leave a gap the chain also sees.
            let moments = moments_spectral(&t, 2 * report.n_star);
            for n in 1..report.n_star {
                let b = krylov_bound(&moments, n).map_err(|e| e.to_string())?.value;
                let (g, l) = (rel(b, ladder.qfi), rel(ladder.bound(n), ladder.qfi));
                ensure(g > 0.0 && (g - l).abs() <= 1e-10, || {
                    format!("rank {r} seed {seed}: Gram gap {g:e} vs chain gap {l:e} at n = {n}")
                })?;
            }
            seen.push((r, report.n_star));
        }
    }
    let summary = |r: usize| {
        let mut v: Vec<usize> = seen.iter().filter(|x| x.0 == r).map(|x| x.1).collect();
        v.sort();
        v.dedup();
        format!("{v:?}")
    };
    ensure(mismatches.is_empty(), || format!("{} of 100 states: {}", mismatches.len(), mismatches.join("; ")))?;
    Ok(format!("qutrit n* = 1; n* values rank 2 {}, rank 3 {}", summary(2), summary(3)))
}

fn ac5() -> Check {
    let mut worst_moment = 0.0f64;
    for i in 0..50u64 {
        let d = [2usize, 3, 4, 8, 16, 64][i as usize % 6];
        let r = 1 + (i as usize * 7) % d;
        let rho = random_rank_r(d, r, 5000 + i).unwrap();
        let h = random_observable(d, 6000 + i);
        let spectral = moments_spectral(&table(&rho, &h), 9);
        let operator = moments_operator(&rho, &h, 9).map_err(|e| e.to_string())?;
        for k in 0..=9 {
            let (a, b) = (spectral.get(k), operator.get(k));
            let err = if a == 0.0 && b == 0.0 { 0.0 } else { rel(b, a) };
            worst_moment = worst_moment.max(err);
            ensure(err <= 1e-10, || format!("instance {i} (d={d}) k={k}: {a:e} vs {b:e}"))?;
        }
    }
    let mut worst_taylor = 0.0f64;
    let mut taylor_checks = 0;
    for d in [2usize, 4] {
        for seed in 0..10u64 {
            let rho = random_rank_r(d, 1 + seed as usize % d, 7000 + seed).unwrap();
            let h = random_observable(d, 8000 + seed);
            let t = table(&rho, &h);
            for n in 0..=7 {
                let fast = taylor_bound(&t, n).value;
                let oracle = taylor_bound_tensor_oracle(&rho, &h, n).map_err(|e| e.to_string())?;
                worst_taylor = worst_taylor.max((fast - oracle).abs());
                ensure((fast - oracle).abs() <= 1e-10, || format!("d={d} seed {seed} n={n}: {fast} vs {oracle}"))?;
                taylor_checks += 1;
            }
        }
    }
    Ok(format!(
        "moments: 50 instances, max rel. diff {worst_moment:.1e}; Taylor: {taylor_checks} checks, max diff {worst_taylor:.1e}"
    ))
}

fn ac6() -> Check {
    let mut worst = 0.0f64;
    for seed in 0..20 {
        let rho = random_fullrank(2, 9000 + seed).unwrap();
        let diff = expected_snapshot(&rho).map_err(|e| e.to_string())? - rho.matrix();
        let err = diff.iter().fold(0.0f64, |m, z: &C64| m.max(z.norm()));
        worst = worst.max(err);
        ensure(err <= 1e-12, || format!("seed {seed}: max deviation {err:e}"))?;
    }
    Ok(format!("20 single-qubit states, max deviation {worst:.1e}"))
}

fn ac7() -> Check {
    let rho = random_fullrank(4, 77).unwrap();
    let h = collective_z(2).unwrap();
    let exact = moments_spectral(&table(&rho, &h), 0).get(0);
    let estimates: Vec<f64> = (0..200)
        .map(|seed| {
            let counts = sample_shadows(&rho, 10_000, 3, seed).unwrap();
            u_stat_tk(&batch_means(&counts).unwrap(), &h, 0).unwrap()
        })
        .collect();
    let n = estimates.len() as f64;
    let mean = estimates.iter().sum::<f64>() / n;
    let se = (estimates.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1.0) / n).sqrt();
    let z = (mean - exact) / se;
    ensure(z.abs() <= 4.0, || format!("mean T0 {mean} vs exact {exact}: {z:.2} standard errors"))?;

    let mut worst = 0.0f64;
    for (rho, h) in [
        (rho.clone(), h.clone()),
        (random_rank_r(16, 2, 78).unwrap(), collective_z(4).unwrap()),
    ] {
        let t = table(&rho, &h);
        let ladder = krylov_ladder(&t, rho.spectrum(), 3);
        for n in 1..=3 {
            let batches = vec![ShadowBatch::exact(&rho); 2 * n + 1];
            let (est, _, _) = estimate_krylov_from_batches(&batches, &h, n).map_err(|e| e.to_string())?;
            let exact = ladder.bound(n);
            worst = worst.max(rel(est, exact));
            ensure(rel(est, exact) <= 1e-10, || format!("Krylov plug-in n={n}: {est} vs {exact}"))?;
        }
        for n in 0..=5 {
            let batches = vec![ShadowBatch::exact(&rho); n + 2];
            let est = estimate_taylor_from_batches(&batches, &h, n).map_err(|e| e.to_string())?;
            let exact = taylor_bound(&t, n).value;
            worst = worst.max(rel(est, exact));
            ensure(rel(est, exact) <= 1e-10, || format!("Taylor plug-in n={n}: {est} vs {exact}"))?;
        }
    }
    Ok(format!("mean T0 off by {z:+.2} SE over 200 seeds; plug-in max rel. diff {worst:.1e}"))
}

fn ac8() -> Check {
    let mut config = ExperimentConfig::defaults(ExperimentKind::ShadowEstimate);
    config.shots_grid = vec![1_000_000];
    config.repeats = 20;
    config.orders = vec![3];
    config.taylor_orders = vec![5];
    config.seed = 8;
    let out = run_experiment(&config).map_err(|e| e.to_string())?;
    let records = out.records();
    let krylov: Vec<f64> = records.iter().filter(|r| r.get("estimator") == "krylov").map(|r| r.num("rel_dev_qfi")).collect();
    let taylor: Vec<f64> = records.iter().filter(|r| r.get("estimator") == "taylor").map(|r| r.num("rel_dev_qfi")).collect();
    ensure(krylov.len() == 20 && taylor.len() == 20, || "missing estimator rows".into())?;
    let worst = krylov.iter().fold(0.0f64, |m, d| m.max(d.abs()));
    ensure(worst <= 0.05, || format!("largest |B3 - F_Q|/F_Q = {worst:.4}"))?;
    let closer = krylov.iter().zip(&taylor).filter(|(k, t)| k.abs() < t.abs()).count();
    ensure(closer >= 16, || format!("B3 closer than B5 Taylor in only {closer}/20 runs"))?;
    Ok(format!("largest |B3 - F_Q|/F_Q = {worst:.4}; B3 closer than Taylor B5 in {closer}/20 runs"))
}

fn ac9() -> Check {
    let mut config = ExperimentConfig::defaults(ExperimentKind::Detect);
    config.trials = 500;
    config.epsilon_grid = vec![0.05, 0.1, 0.15, 0.2, 0.25, 0.3];
    config.orders = vec![3];
    config.taylor_orders = vec![5];
    config.seed = 9;
    let out = run_experiment(&config).map_err(|e| e.to_string())?;
    let records = out.records();
    let mut lowest = f64::INFINITY;
    for &eps in &config.epsilon_grid {
        let at = |bound: &str| {
            records
                .iter()
                .find(|r| r.num("epsilon") == eps && r.get("bound") == bound)
                .map(|r| r.num("ratio"))
                .unwrap_or(f64::NAN)
        };
        let (kry, tay) = (at("krylov"), at("taylor"));
        ensure(kry >= tay, || format!("eps {eps}: Krylov ratio {kry} < Taylor ratio {tay}"))?;
        ensure(kry >= 0.9, || format!("eps {eps}: Krylov ratio {kry} < 0.9"))?;
        lowest = lowest.min(kry);
    }
    Ok(format!("6 noise levels x 500 states, lowest Krylov B3 ratio {lowest:.3}"))
}

fn cli(args: &[&str], out: &Path) -> Result<(), String> {
    let status = Command::new(env!("CARGO_BIN_EXE_krylov-qfi"))
        .args(args)
        .arg("--out")
        .arg(out)
        .output()
        .map_err(|e| e.to_string())?;
    ensure(status.status.success(), || {
        format!("{args:?} failed: {}", String::from_utf8_lossy(&status.stderr))
    })
}

/// Manifest minus the fields that legitimately differ between runs.
fn stable_manifest(path: &Path) -> Result<serde_json::Value, String> {
    let mut v: serde_json::Value = serde_json::from_str(&fs::read_to_string(path).map_err(|e| e.to_string())?)
        .map_err(|e| e.to_string())?;
    v.as_object_mut().unwrap().remove("wall_time");
    v["config"].as_object_mut().unwrap().remove("workers");
    Ok(v)
}

fn ac10() -> Check {
    let dir = tempfile::tempdir().map_err(|e| e.to_string())?;
    let experiments: [(&str, &[&str]); 5] = [
        ("gap_scan", &["gap-scan", "--trials", "20", "--seed", "10"]),
        ("compare_taylor", &["compare-taylor", "--trials", "3", "--seed", "10"]),
        ("shadow_estimate", &["shadow-estimate", "--shots", "20000,100000", "--repeats", "2", "--seed", "10"]),
        ("exact_match_scatter", &["exact-match-scatter", "--trials", "8", "--shots", "50000", "--seed", "10"]),
        ("detect", &["detect", "--trials", "60", "--seed", "10"]),
    ];
    let mut compared = 0;
    for (name, args) in experiments {
        let mut csvs = Vec::new();
        let mut manifests = Vec::new();
        for (run, workers) in [("a", "1"), ("b", "1"), ("c", "4")] {
            let out = dir.path().join(format!("{name}-{run}"));
            let mut full: Vec<&str> = args.to_vec();
            full.extend(["--workers", workers]);
            cli(&full, &out)?;
            csvs.push(fs::read(out.join(format!("{name}.csv"))).map_err(|e| e.to_string())?);
            let mut m = stable_manifest(&out.join(format!("{name}.manifest.json")))?;
            m["config"].as_object_mut().unwrap().remove("out_path");
            manifests.push(m);
        }
        ensure(csvs[0] == csvs[1], || format!("{name}: CSV differs between reruns"))?;
        ensure(csvs[0] == csvs[2], || format!("{name}: CSV differs between 1 and 4 workers"))?;
        ensure(manifests[0] == manifests[1] && manifests[0] == manifests[2], || format!("{name}: manifest differs"))?;
        compared += 1;
    }
    for args in [
        &["sample-shadows", "--qubits", "3", "--shots", "50000", "--batches", "5", "--seed", "3"][..],
        &["bounds", "--ensemble", "rank_r", "--rank", "3", "--seed", "3"][..],
        &["nstar", "--qubits", "3", "--seed", "3"][..],
    ] {
        let a = dir.path().join(format!("{}-a.out", args[0]));
        let b = dir.path().join(format!("{}-b.out", args[0]));
        cli(args, &a)?;
        cli(args, &b)?;
        ensure(fs::read(&a).map_err(|e| e.to_string())? == fs::read(&b).map_err(|e| e.to_string())?, || {
            format!("{} output differs between reruns", args[0])
        })?;
        compared += 1;
    }
    Ok(format!("{compared} commands byte-identical across reruns and worker counts"))
}

fn main() {
    let criteria: [(&str, &str, f64, fn() -> Check); 10] = [
        ("AC-1", "exact-match hierarchy", 30.0, ac1),
        ("AC-2", "convergence envelope", 60.0, ac2),
        ("AC-3", "Krylov tighter than Taylor", 60.0, ac3),
        ("AC-4", "termination order formula", 30.0, ac4),
        ("AC-5", "dual-path oracles", 30.0, ac5),
        ("AC-6", "shadow channel", 5.0, ac6),
        ("AC-7", "estimator unbiasedness", 120.0, ac7),
        ("AC-8", "shadow estimates vs QFI", 600.0, ac8),
        ("AC-9", "entanglement detection ratios", 300.0, ac9),
        ("AC-10", "determinism and parallel safety", 120.0, ac10),
    ];
    let mut failed = 0;
    for (id, title, budget, check) in criteria {
        let start = Instant::now();
        let result = std::panic::catch_unwind(check).unwrap_or_else(|_| Err("panicked".into()));
        let secs = start.elapsed().as_secs_f64();
        let result = match result {
            Ok(detail) if secs > budget => Err(format!("{detail}; took {secs:.1} s, budget {budget} s")),
            other => other,
        };
        match result {
            Ok(detail) => println!("[PASS] {id} {title}: {detail} ({secs:.1} s)"),
            Err(why) => {
                failed += 1;
                println!("[FAIL] {id} {title}: {why} ({secs:.1} s)");
            }
        }
    }
    println!("acceptance: {} passed, {failed} failed", 10 - failed);
    if failed > 0 {
        std::process::exit(1);
    }
}
