//! End-to-end acceptance checks. Runs without the libtest harness so every
//! criterion prints a PASS/FAIL line, and exits non-zero if any fails.

use std::collections::BTreeMap;
use std::path::Path;
use std::process::Command;
use std::time::Instant;

use hazshift::rng::{derive_seed, stream_rng};
use hazshift::sim::TrueHazard;
use hazshift::{
    effect_curve, generate, ipw_weights, kaplan_meier, oracle_psi, psi_hat, run_study, schoenfeld, CoxProblem,
    Dataset, Dgp, NamedTheta, StudyConfig, SubjectRecord, ThetaSpec,
};
use rand::Rng;
use rand_distr::StandardNormal;

/// Outcome of one check inside a criterion.
struct Check {
    ok: bool,
    detail: String,
}

type Criterion = (&'static str, fn() -> Vec<Check>);

fn check(ok: bool, detail: impl Into<String>) -> Check {
    Check { ok, detail: detail.into() }
}

fn max_abs(v: &[f64]) -> f64 {
    v.iter().fold(0.0, |m, x| m.max(x.abs()))
}

fn rows_within(dgp: Dgp, reference: &[f64], tol: f64, name: &str) -> Check {
    let grid = dgp.default_grid();
    let mut worst = (0.0, String::new());
    let mut misses = Vec::new();
    for (th, &want) in grid.iter().zip(reference) {
        let got = oracle_psi(dgp, &th.spec).expect("oracle");
        let diff = (got - want).abs();
        if diff > worst.0 {
            worst = (diff, th.label.clone());
        }
        if diff > tol {
            misses.push(format!("{}: {got:.7} vs {want} (|Δ| = {diff:.2e})", th.label));
        }
    }
    let detail = if misses.is_empty() {
        format!("{name}: all {} entries within {tol:e}, worst |Δ| = {:.2e} at {}", grid.len(), worst.0, worst.1)
    } else {
        format!("{name}: outside {tol:e}: {}", misses.join("; "))
    };
    check(misses.is_empty(), detail)
}

fn criterion_1() -> Vec<Check> {
    vec![
        rows_within(Dgp::Main, &[0.957, 0.893, 0.808, 0.694, 0.404, 0.336, 0.297, 0.273], 5e-4, "main design"),
        rows_within(
            Dgp::Multi,
            &[0.474, 0.436, 0.348, 0.424, 0.408, 0.426, 0.405, 0.413, 0.408],
            1e-3,
            "multi design",
        ),
    ]
}

fn study_bands(cfg: &StudyConfig) -> Vec<Check> {
    let started = Instant::now();
    let report = run_study(cfg).expect("study runs");
    let k = (report.replications - report.failed) as f64;
    let mut out = vec![check(
        true,
        format!(
            "{:?} n={} R={} B={} seed={}: {} failed, {} flagged, {:.0}s",
            cfg.dgp,
            cfg.n,
            cfg.replications,
            cfg.bootstrap,
            cfg.seed,
            report.failed,
            report.flagged,
            started.elapsed().as_secs_f64()
        ),
    )];
    for row in &report.rows {
        let bias_bound = 3.0 * row.see / k.sqrt();
        let ratio = row.sd / row.see;
        let ok_bias = row.bias.abs() <= bias_bound;
        let ok_ratio = (0.9..=1.1).contains(&ratio);
        let ok_cp = (0.926..=0.966).contains(&row.cp);
        out.push(check(
            ok_bias && ok_ratio && ok_cp,
            format!(
                "θ={:<7} bias {:+.5} (bound {:.5}){} sd/see {:.3}{} cp {:.3}{}",
                row.label,
                row.bias,
                bias_bound,
                if ok_bias { "" } else { " !" },
                ratio,
                if ok_ratio { "" } else { " !" },
                row.cp,
                if ok_cp { "" } else { " !" },
            ),
        ));
    }
    out
}

fn criterion_2() -> Vec<Check> {
    let mut out = study_bands(&StudyConfig {
        dgp: Dgp::Main,
        n: 5000,
        replications: 500,
        bootstrap: 200,
        seed: 1002,
        thetas: None,
    });
    out.extend(study_bands(&StudyConfig {
        dgp: Dgp::Main,
        n: 1000,
        replications: 500,
        bootstrap: 200,
        seed: 1012,
        thetas: None,
    }));
    out
}

fn criterion_3() -> Vec<Check> {
    study_bands(&StudyConfig {
        dgp: Dgp::Multi,
        n: 1000,
        replications: 500,
        bootstrap: 50,
        seed: 1003,
        thetas: None,
    })
}

fn criterion_4() -> Vec<Check> {
    let m = 1_000_000;
    let ds = generate(Dgp::Main, m, 1004);
    [1.0 / 3.0, 1.0, 2.0, 3.0]
        .into_iter()
        .map(|c| {
            let w = ipw_weights(&ds, &TrueHazard(Dgp::Main), &ThetaSpec::Constant(c)).unwrap().weights;
            let mean = w.iter().sum::<f64>() / m as f64;
            let var = w.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (m - 1) as f64;
            let se = (var / m as f64).sqrt();
            let dev = (mean - 1.0).abs();
            check(dev <= 3.0 * se, format!("θ={c:.4}: mean weight {mean:.6}, |mean − 1| = {dev:.2e}, 3·SE = {:.2e}", 3.0 * se))
        })
        .collect()
}

fn sequential_mean(ds: &Dataset) -> f64 {
    let mut sum = 0.0;
    for r in ds.records() {
        sum += r.y;
    }
    sum / ds.len() as f64
}

/// Small datasets with tied times, tied outcomes and censoring.
fn coarse_dataset(seed: u64, d: usize) -> Dataset {
    let mut rng = stream_rng(seed, 0);
    let n = rng.random_range(2..=80);
    let tau = 3.0;
    let mut recs: Vec<SubjectRecord> = (0..n)
        .map(|_| {
            let t = rng.random_range(1..=12) as f64 / 4.0;
            let cov = (0..d).map(|_| rng.random_range(-4..=4) as f64 / 2.0).collect();
            let y = rng.random_range(-50..=50) as f64 / 7.0;
            if t < tau {
                SubjectRecord::new(y, t, true, cov)
            } else {
                SubjectRecord::new(y, tau, false, cov)
            }
        })
        .collect();
    if !recs.iter().any(|r| r.delta) {
        recs[0] = SubjectRecord::new(recs[0].y, 1.0, true, recs[0].covariates.clone());
    }
    Dataset::new(recs, tau, (0..d).map(|j| format!("x{j}")).collect()).unwrap()
}

fn criterion_5() -> Vec<Check> {
    let identity = [NamedTheta::new("1", ThetaSpec::Constant(1.0))];
    let mut datasets = Vec::new();
    for s in 0..40u64 {
        let n = 20 + 97 * s as usize;
        datasets.push(generate(Dgp::Main, n, derive_seed(1005, s)));
        datasets.push(generate(Dgp::Multi, n, derive_seed(1005, 1000 + s)));
    }
    for s in 0..200u64 {
        datasets.push(coarse_dataset(derive_seed(1005, 2000 + s), (s % 3) as usize));
    }
    let (mut mismatches, mut end_to_end) = (0, 0);
    for ds in &datasets {
        let want = sequential_mean(ds).to_bits();
        let fit = CoxProblem::new(ds).and_then(|p| p.fit(None)).expect("fit");
        let direct = psi_hat(ds, &fit, &ThetaSpec::Constant(1.0), None).unwrap().to_bits();
        mismatches += usize::from(direct != want);
        // The full pipeline refuses non-converged fits, e.g. separable samples.
        if fit.converged() {
            end_to_end += 1;
            let curve = effect_curve(ds, &identity, 0, 0).unwrap()[0].psi_hat.to_bits();
            mismatches += usize::from(curve != want);
        }
    }
    vec![check(
        mismatches == 0,
        format!(
            "{} datasets ({end_to_end} also through the bootstrap pipeline), {mismatches} bitwise mismatches \
             against the sequential mean",
            datasets.len()
        ),
    )]
}

/// Closed-form log partial likelihood for one covariate and distinct event times.
fn partial_loglik(times: &[f64], events: &[bool], x: &[f64], beta: f64) -> f64 {
    let mut ll = 0.0;
    for i in 0..times.len() {
        if !events[i] {
            continue;
        }
        let risk: f64 = (0..times.len()).filter(|&j| times[j] >= times[i]).map(|j| (beta * x[j]).exp()).sum();
        ll += beta * x[i] - risk.ln();
    }
    ll
}

fn criterion_6() -> Vec<Check> {
    let mut rng = stream_rng(1006, 0);
    let tau = 2.0;
    let (mut interior, mut boundary, mut flat, mut worst) = (0, 0, 0, 0.0f64);
    let mut failures = Vec::new();
    while interior < 100 {
        let n = rng.random_range(2..=6);
        let mut times = Vec::with_capacity(n);
        let mut events = Vec::with_capacity(n);
        let mut x = Vec::with_capacity(n);
        for _ in 0..n {
            let event = rng.random_bool(0.75);
            times.push(if event { rng.random_range(0.0..tau) } else { tau });
            events.push(event);
            x.push(rng.sample::<f64, _>(StandardNormal));
        }
        if !events.iter().any(|&e| e) {
            continue;
        }
        let grid: Vec<f64> = (-100_000..=100_000).map(|k| k as f64 * 1e-4).collect();
        let values: Vec<f64> = grid.iter().map(|&b| partial_loglik(&times, &events, &x, b)).collect();
        let (lo, hi) = values.iter().fold((f64::INFINITY, f64::NEG_INFINITY), |(l, h), &v| (l.min(v), h.max(v)));
        if hi - lo < 1e-12 {
            flat += 1;
            continue;
        }
        let arg = grid[values.iter().enumerate().fold(0, |m, (k, &v)| if v > values[m] { k } else { m })];

        let recs = (0..n).map(|i| SubjectRecord::new(0.0, times[i], events[i], vec![x[i]])).collect();
        let ds = Dataset::new(recs, tau, vec!["x".into()]).unwrap();
        let fit = CoxProblem::new(&ds).and_then(|p| p.fit(None)).expect("fit");
        let beta = fit.beta()[0];
        if arg.abs() >= 10.0 - 1e-3 {
            boundary += 1;
            if fit.converged() && beta.abs() < 10.0 - 1e-3 {
                failures.push(format!("boundary maximum but converged at β̂ = {beta}"));
            }
            continue;
        }
        interior += 1;
        let diff = (beta - arg).abs();
        worst = worst.max(diff);
        if !fit.converged() || diff > 1e-3 {
            failures.push(format!("β̂ = {beta} vs grid {arg}"));
        }
    }
    let solver = check(
        failures.is_empty(),
        format!(
            "{interior} interior instances, worst |β̂ − argmax| = {worst:.2e}; {boundary} boundary maxima not reported \
             as converged interior fits; {flat} flat likelihoods skipped{}",
            if failures.is_empty() { String::new() } else { format!("; failures: {}", failures.join(", ")) }
        ),
    );

    let mut worst_rel = 0.0f64;
    for inst in 0..100 {
        let n = rng.random_range(4..=20);
        let d = rng.random_range(1..=3);
        let recs = (0..n)
            .map(|_| {
                let cov: Vec<f64> = (0..d).map(|_| rng.sample(StandardNormal)).collect();
                if rng.random_bool(0.8) {
                    SubjectRecord::new(0.0, rng.random_range(0.0..tau), true, cov)
                } else {
                    SubjectRecord::new(0.0, tau, false, cov)
                }
            })
            .collect();
        let ds = Dataset::new(recs, tau, (0..d).map(|j| format!("x{j}")).collect()).unwrap();
        let Ok(problem) = CoxProblem::new(&ds) else { continue };
        let beta: Vec<f64> = (0..d).map(|_| rng.random_range(-1.0..1.0)).collect();
        let weights: Option<Vec<f64>> = (inst % 2 == 1).then(|| (0..n).map(|_| rng.random_range(0.2..3.0)).collect());
        let w = weights.as_deref();
        let (_, grad, hess) = problem.evaluate(&beta, w).unwrap();
        let h = 1e-5;
        let mut fd_grad = vec![0.0; d];
        let mut fd_hess = vec![0.0; d * d];
        for a in 0..d {
            let mut up = beta.clone();
            let mut down = beta.clone();
            up[a] += h;
            down[a] -= h;
            let (lu, gu, _) = problem.evaluate(&up, w).unwrap();
            let (ld, gd, _) = problem.evaluate(&down, w).unwrap();
            fd_grad[a] = (lu - ld) / (2.0 * h);
            for b in 0..d {
                fd_hess[b * d + a] = (gu[b] - gd[b]) / (2.0 * h);
            }
        }
        let rel = |an: &[f64], fd: &[f64]| {
            let diff: Vec<f64> = an.iter().zip(fd).map(|(a, b)| a - b).collect();
            max_abs(&diff) / max_abs(an).max(1e-3)
        };
        worst_rel = worst_rel.max(rel(&grad, &fd_grad)).max(rel(&hess, &fd_hess));
    }
    let derivatives = check(
        worst_rel <= 1e-4,
        format!("100 instances (n ≤ 20, d ≤ 3): worst relative derivative error {worst_rel:.2e}"),
    );
    vec![solver, derivatives]
}

fn criterion_7() -> Vec<Check> {
    let reps = 200;
    let mut rejected = 0;
    let mut worst_sum = 0.0f64;
    for r in 0..reps {
        let ds = generate(Dgp::Multi, 500, derive_seed(1007, r));
        let fit = CoxProblem::new(&ds).and_then(|p| p.fit(None)).expect("fit");
        let report = schoenfeld(&ds, &fit).expect("schoenfeld");
        rejected += usize::from(report.global_p_value < 0.05);
        for j in 0..ds.dim() {
            let sum: f64 = report.residuals.iter().map(|row| row[j]).sum();
            worst_sum = worst_sum.max(sum.abs());
        }
    }
    let rate = rejected as f64 / reps as f64;
    vec![
        check(
            (0.02..=0.09).contains(&rate),
            format!("global test rejects {rejected}/{reps} = {rate:.3} at level 0.05"),
        ),
        check(worst_sum < 1e-6, format!("largest residual column sum {worst_sum:.2e}")),
    ]
}

fn criterion_8() -> Vec<Check> {
    let unit = |rows: &[(f64, bool)], tau: f64| {
        let recs = rows.iter().map(|&(t, d)| SubjectRecord::new(0.0, t, d, vec![])).collect();
        Dataset::new(recs, tau, vec![]).unwrap()
    };
    let km = kaplan_meier(&unit(&[(1.0, true), (2.0, false), (1.5, true)], 2.0));
    let hand = km.survival.eval(0.5) == 1.0
        && km.survival.eval(1.0) == 2.0 / 3.0
        && km.survival.eval(1.5) == 1.0 / 3.0
        && km.survival.eval(2.0) == 1.0 / 3.0
        && km.cumulative.eval(1.0) == 1.0 / 3.0
        && km.cumulative.eval(1.5) == 2.0 / 3.0;

    let mut rng = stream_rng(1008, 0);
    let mut mismatches = 0;
    let trials = 500;
    for _ in 0..trials {
        let n = rng.random_range(1..=300);
        let times: Vec<f64> = (0..n).map(|_| rng.random_range(1..=500) as f64 / 100.0).collect();
        let rows: Vec<(f64, bool)> = times.iter().map(|&t| (t, true)).collect();
        let km = kaplan_meier(&unit(&rows, 6.0));
        for (k, &t) in km.cumulative.times.iter().enumerate() {
            let count = times.iter().filter(|&&s| s <= t).count() as f64;
            mismatches += usize::from(km.cumulative.values[k] != count / n as f64);
        }
    }
    vec![
        check(hand, "three-record example: S = 2/3 after t=1, 1/3 after t=1.5, exactly"),
        check(mismatches == 0, format!("{trials} uncensored samples: {mismatches} steps differ from the empirical CDF")),
    ]
}

fn hazshift(args: &[&str], dir: &Path, threads: &str) -> bool {
    Command::new(env!("CARGO_BIN_EXE_hazshift"))
        .args(args)
        .args(["--threads", threads])
        .current_dir(dir)
        .env_remove("HAZSHIFT_THREADS")
        .output()
        .expect("binary runs")
        .status
        .success()
}

fn snapshot(dir: &Path) -> BTreeMap<String, Vec<u8>> {
    std::fs::read_dir(dir)
        .unwrap()
        .map(|e| {
            let e = e.unwrap();
            (e.file_name().to_string_lossy().into_owned(), std::fs::read(e.path()).unwrap())
        })
        .collect()
}

fn criterion_9() -> Vec<Check> {
    let root = tempfile::tempdir().unwrap();
    let data = root.path().join("data.csv");
    assert!(hazshift(&["simulate", "--dgp", "multi", "--n", "600", "--seed", "9", "--out", data.to_str().unwrap()], root.path(), "1"));
    let input = data.to_str().unwrap();
    let commands: Vec<(&str, Vec<&str>)> = vec![
        ("simulate", vec!["simulate", "--dgp", "main", "--n", "800", "--seed", "1009", "--out", "out.csv"]),
        (
            "estimate",
            vec![
                "estimate", "--input", input, "--tau", "2", "--theta", "1/3,1,2", "--theta", "loglinear:0.1,-0.2,0.3",
                "--B", "60", "--seed", "1009", "--out", "out.json",
            ],
        ),
        (
            "study",
            vec!["study", "--dgp", "main", "--n", "300", "--R", "6", "--B", "20", "--seed", "1009", "--out", "out.json"],
        ),
        ("diagnose", vec!["diagnose", "--input", input, "--tau", "2", "--out", "out.json"]),
        ("curves", vec!["curves", "--theta", "0.5,1,2", "--points", "51", "--out", "out.json"]),
    ];
    commands
        .into_iter()
        .map(|(name, args)| {
            let runs: Vec<BTreeMap<String, Vec<u8>>> = [("a", "1"), ("b", "1"), ("c", "8")]
                .iter()
                .map(|(sub, threads)| {
                    let dir = root.path().join(format!("{name}_{sub}"));
                    std::fs::create_dir(&dir).unwrap();
                    assert!(hazshift(&args, &dir, threads), "{name} failed");
                    snapshot(&dir)
                })
                .collect();
            let same = runs[0] == runs[1] && runs[0] == runs[2];
            let files: Vec<&String> = runs[0].keys().collect();
            check(same && !files.is_empty(), format!("{name}: {files:?} identical across two runs and 1 vs 8 threads"))
        })
        .collect()
}

fn main() {
    let criteria: [Criterion; 9] = [
        ("oracle reproduces the reference ψ rows", criterion_1),
        ("main-design study bands (n=5000 and n=1000)", criterion_2),
        ("multi-design study bands", criterion_3),
        ("true-hazard weights average to one", criterion_4),
        ("identity shift returns the sample mean bitwise", criterion_5),
        ("Cox solver against grid search and finite differences", criterion_6),
        ("Schoenfeld test calibration and residual sums", criterion_7),
        ("Kaplan–Meier exact values", criterion_8),
        ("byte-identical CLI outputs", criterion_9),
    ];
    // Optional criterion numbers on the command line select a subset.
    let only: Vec<usize> = std::env::args().skip(1).filter_map(|a| a.parse().ok()).collect();
    let mut failed = Vec::new();
    for (k, (title, run)) in criteria.iter().enumerate() {
        if !only.is_empty() && !only.contains(&(k + 1)) {
            continue;
        }
        let started = Instant::now();
        let checks = run();
        let ok = checks.iter().all(|c| c.ok);
        for c in &checks {
            println!("    {} {}", if c.ok { "ok  " } else { "FAIL" }, c.detail);
        }
        println!(
            "{} criterion {}: {title} ({:.1}s)",
            if ok { "PASS" } else { "FAIL" },
            k + 1,
            started.elapsed().as_secs_f64()
        );
        if !ok {
            failed.push(k + 1);
        }
    }
    if failed.is_empty() {
        println!("acceptance: all selected criteria pass");
    } else {
        println!("acceptance: failing criteria {failed:?}");
        std::process::exit(1);
    }
}
