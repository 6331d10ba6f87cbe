//! One function per subcommand. Each builds its results in memory, stages
//! every output file and commits them only once everything succeeded.

use std::collections::HashSet;
use std::fs;
use std::io::Write;
use std::time::Instant;

use anyhow::{bail, Context, Result};
use hazshift::{
    effect_curve, fit_cox, generate, intervention_curves, kaplan_meier, load_csv, run_study, schoenfeld, write_csv,
    AnalyticHazard, CsvSchema, CurvePoint, Dataset, Dgp, EffectEstimate, NamedTheta, StudyConfig, StudyReport,
};
use serde::Serialize;

use crate::output::{csv_bytes, num, sibling, to_json, Document, Metadata, Outputs, Seed};
use crate::theta_arg::parse_grid;
use crate::{CurvesArgs, DataArgs, DiagnoseArgs, EstimateArgs, SimulateArgs, StudyArgs};

/// Console summaries; a closed stdout (e.g. piped into `head`) is not an error.
macro_rules! say {
    ($($arg:tt)*) => {{
        let _ = writeln!(std::io::stdout(), $($arg)*);
    }};
}

macro_rules! say_part {
    ($($arg:tt)*) => {{
        let _ = write!(std::io::stdout(), $($arg)*);
    }};
}

pub struct Options {
    pub record_timing: bool,
    pub started: Instant,
}

impl Options {
    fn stamp<C: Serialize>(&self, meta: &mut Metadata<C>) {
        if self.record_timing {
            meta.wall_time_s = Some(self.started.elapsed().as_secs_f64());
        }
    }
}

fn stage_json<C: Serialize, R: Serialize>(
    out: &mut Outputs,
    path: &std::path::Path,
    meta: &Metadata<C>,
    results: R,
) -> Result<()> {
    out.stage(path, &to_json(&Document { metadata: meta, results })?)
}

fn report(written: &[std::path::PathBuf]) {
    for path in written {
        say!("wrote {}", path.display());
    }
}

#[derive(Serialize)]
struct DataConfig<'a> {
    input: String,
    schema: &'a CsvSchema,
    tau: f64,
}

fn load(args: &DataArgs) -> Result<(Dataset, CsvSchema)> {
    let schema = CsvSchema {
        y: args.col_y.clone(),
        time: args.col_time.clone(),
        delta: args.col_delta.clone(),
        covariates: args.covariates.clone(),
    };
    let ds = load_csv(&args.input, args.tau, &schema).with_context(|| format!("loading {}", args.input.display()))?;
    Ok((ds, schema))
}

#[derive(Serialize)]
struct CoxSummary<'a> {
    covariates: &'a [String],
    beta: &'a [f64],
    loglik: f64,
    converged: bool,
    n_iter: usize,
}

#[derive(Serialize)]
struct EstimateConfig<'a> {
    data: DataConfig<'a>,
    thetas: &'a [NamedTheta],
    #[serde(rename = "B")]
    bootstrap: usize,
}

#[derive(Serialize)]
struct EstimateResults<'a> {
    n: usize,
    n_events: usize,
    cox: CoxSummary<'a>,
    estimates: &'a [EffectEstimate],
}

pub fn estimate(args: &EstimateArgs, opts: &Options) -> Result<()> {
    let (ds, schema) = load(&args.data)?;
    let thetas = parse_grid(&args.theta, ds.dim())?;
    let seed = Seed::resolve(args.seed);
    let fit = fit_cox(&ds, None)?;
    let estimates = effect_curve(&ds, &thetas, args.bootstrap, seed.value)?;

    say!(
        "{:<24} {:>12} {:>12} {:>12} {:>12}",
        "theta", "psi_hat", "se", "max_weight", "ess"
    );
    for e in &estimates {
        say!(
            "{:<24} {:>12.6} {:>12} {:>12.4} {:>12.1}",
            e.label,
            e.psi_hat,
            e.se.map(|s| format!("{s:.6}")).unwrap_or_else(|| "-".into()),
            e.weights.max,
            e.weights.ess
        );
    }
    if estimates.first().is_some_and(|e| e.flagged) {
        eprintln!(
            "warning: {} of {} bootstrap refits failed",
            estimates[0].dropped, estimates[0].replicates
        );
    }

    let mut meta = Metadata::new(
        "estimate",
        Some(seed),
        EstimateConfig {
            data: DataConfig {
                input: args.data.input.display().to_string(),
                schema: &schema,
                tau: ds.tau(),
            },
            thetas: &thetas,
            bootstrap: args.bootstrap,
        },
    );
    opts.stamp(&mut meta);
    let results = EstimateResults {
        n: ds.len(),
        n_events: ds.n_events(),
        cox: CoxSummary {
            covariates: ds.covariate_names(),
            beta: fit.beta(),
            loglik: fit.loglik(),
            converged: fit.converged(),
            n_iter: fit.n_iter(),
        },
        estimates: &estimates,
    };
    let table = csv_bytes(&["theta_label", "psi_hat", "lo", "hi"], |w| {
        for e in &estimates {
            let [lo, hi] = e.ci.map_or([None, None], |[a, b]| [Some(a), Some(b)]);
            w.write_record([e.label.clone(), e.psi_hat.to_string(), num(lo), num(hi)])?;
        }
        Ok(())
    })?;

    let mut out = Outputs::default();
    stage_json(&mut out, &args.out, &meta, results)?;
    out.stage(sibling(&args.out, ".csv"), &table)?;
    report(&out.commit()?);
    Ok(())
}

#[derive(Serialize)]
struct SimulateConfig {
    dgp: Dgp,
    n: usize,
    tau: f64,
}

#[derive(Serialize)]
struct SimulateResults<'a> {
    file: String,
    covariates: &'a [String],
    n_events: usize,
    event_fraction: f64,
}

pub fn simulate(args: &SimulateArgs, opts: &Options) -> Result<()> {
    if args.n == 0 {
        bail!("--n must be positive");
    }
    let seed = Seed::resolve(args.seed);
    let ds = generate(args.dgp, args.n, seed.value);
    let mut data = Vec::new();
    write_csv(&ds, &mut data)?;

    let mut meta = Metadata::new(
        "simulate",
        Some(seed),
        SimulateConfig {
            dgp: args.dgp,
            n: args.n,
            tau: ds.tau(),
        },
    );
    opts.stamp(&mut meta);
    let results = SimulateResults {
        file: args
            .out
            .file_name()
            .map(|f| f.to_string_lossy().into_owned())
            .unwrap_or_default(),
        covariates: ds.covariate_names(),
        n_events: ds.n_events(),
        event_fraction: ds.n_events() as f64 / ds.len() as f64,
    };
    say!(
        "{} subjects, {} treated before tau ({:.4})",
        ds.len(),
        results.n_events,
        results.event_fraction
    );

    let mut out = Outputs::default();
    out.stage(&args.out, &data)?;
    stage_json(&mut out, &sibling(&args.out, ".meta.json"), &meta, results)?;
    report(&out.commit()?);
    Ok(())
}

fn study_config(args: &StudyArgs) -> Result<(StudyConfig, Seed)> {
    let base: Option<StudyConfig> = match &args.config {
        Some(path) => {
            let text = fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
            Some(serde_json::from_str(&text).with_context(|| format!("parsing {}", path.display()))?)
        }
        None => None,
    };
    let pick = |flag: Option<usize>, from: Option<usize>, name: &str| {
        flag.or(from).with_context(|| format!("--{name} is required without a config file"))
    };
    let dgp = args
        .dgp
        .or(base.as_ref().map(|c| c.dgp))
        .context("--dgp is required without a config file")?;
    let n = pick(args.n, base.as_ref().map(|c| c.n), "n")?;
    let replications = pick(args.replications, base.as_ref().map(|c| c.replications), "R")?;
    let bootstrap = pick(args.bootstrap, base.as_ref().map(|c| c.bootstrap), "B")?;
    let seed = Seed::resolve(args.seed.or(base.as_ref().map(|c| c.seed)));
    let thetas = if !args.theta.is_empty() {
        parse_grid(&args.theta, dgp.dim())?
    } else {
        match base.and_then(|c| c.thetas) {
            Some(t) => {
                for th in &t {
                    th.spec.check_dim(dgp.dim())?;
                }
                t
            }
            None => dgp.default_grid(),
        }
    };
    let cfg = StudyConfig {
        dgp,
        n,
        replications,
        bootstrap,
        seed: seed.value,
        thetas: Some(thetas),
    };
    Ok((cfg, seed))
}

/// Rows of the study table: metric name and per-θ value.
fn study_table(report: &StudyReport) -> Vec<(&'static str, Vec<f64>)> {
    let col = |f: &dyn Fn(&hazshift::StudyRow) -> f64| report.rows.iter().map(f).collect::<Vec<_>>();
    vec![
        ("psi", col(&|r| r.true_psi)),
        ("Bias (x1e-2)", col(&|r| 100.0 * r.bias)),
        ("%Bias", col(&|r| r.pct_bias)),
        ("SEE (x1e-2)", col(&|r| 100.0 * r.see)),
        ("SD (x1e-2)", col(&|r| 100.0 * r.sd)),
        ("95% CP", col(&|r| r.cp)),
    ]
}

pub fn study(args: &StudyArgs, opts: &Options) -> Result<()> {
    let (cfg, seed) = study_config(args)?;
    let result = run_study(&cfg)?;
    let table = study_table(&result);

    let labels: Vec<&str> = result.rows.iter().map(|r| r.label.as_str()).collect();
    say_part!("{:<14}", "");
    for l in &labels {
        say_part!("{l:>10}");
    }
    say!();
    for (name, values) in &table {
        say_part!("{name:<14}");
        for v in values {
            say_part!("{v:>10.3}");
        }
        say!();
    }
    if result.failed > 0 || result.flagged > 0 {
        eprintln!(
            "warning: {} replications failed, {} flagged for dropped bootstrap refits",
            result.failed, result.flagged
        );
    }

    let mut header = vec!["metric"];
    header.extend(&labels);
    let csv = csv_bytes(&header, |w| {
        for (name, values) in &table {
            let mut rec = vec![name.to_string()];
            rec.extend(values.iter().map(f64::to_string));
            w.write_record(&rec)?;
        }
        Ok(())
    })?;
    let mut meta = Metadata::new("study", Some(seed), &cfg);
    opts.stamp(&mut meta);
    let mut out = Outputs::default();
    stage_json(&mut out, &args.out, &meta, &result)?;
    out.stage(sibling(&args.out, ".csv"), &csv)?;
    report(&out.commit()?);
    Ok(())
}

#[derive(Serialize)]
struct DiagnoseResults<'a> {
    n: usize,
    n_events: usize,
    cox: &'a hazshift::CoxFit,
    schoenfeld: &'a hazshift::SchoenfeldReport,
    kaplan_meier: &'a hazshift::KaplanMeier,
}

pub fn diagnose(args: &DiagnoseArgs, opts: &Options) -> Result<()> {
    let (ds, schema) = load(&args.data)?;
    let fit = fit_cox(&ds, None)?;
    let sch = schoenfeld(&ds, &fit)?;
    let km = kaplan_meier(&ds);

    say!("{:<16} {:>12} {:>12} {:>10}", "covariate", "beta", "chisq", "p");
    for (name, (b, t)) in ds.covariate_names().iter().zip(fit.beta().iter().zip(&sch.tests)) {
        say!(
            "{:<16} {:>12.6} {:>12} {:>10}",
            name,
            b,
            t.chisq.map(|c| format!("{c:.4}")).unwrap_or_else(|| "-".into()),
            t.p_value.map(|p| format!("{p:.4}")).unwrap_or_else(|| "-".into())
        );
    }
    say!(
        "{:<16} {:>12} {:>12.4} {:>10.4}  (df {})",
        "GLOBAL", "", sch.global_chisq, sch.global_p_value, sch.global_df
    );

    let names = ds.covariate_names();
    let mut res_header = vec!["event_time", "record"];
    res_header.extend(names.iter().map(String::as_str));
    let residuals = csv_bytes(&res_header, |w| {
        for ((t, idx), row) in sch.event_times.iter().zip(&sch.record_index).zip(&sch.residuals) {
            let mut rec = vec![t.to_string(), idx.to_string()];
            rec.extend(row.iter().map(f64::to_string));
            w.write_record(&rec)?;
        }
        Ok(())
    })?;
    let tests = csv_bytes(&["covariate", "rho", "chisq", "df", "p_value"], |w| {
        for t in &sch.tests {
            w.write_record([t.covariate.clone(), num(t.rho), num(t.chisq), "1".into(), num(t.p_value)])?;
        }
        w.write_record([
            "GLOBAL".to_string(),
            String::new(),
            sch.global_chisq.to_string(),
            sch.global_df.to_string(),
            sch.global_p_value.to_string(),
        ])?;
        Ok(())
    })?;
    let cdf = &km.cumulative;
    let km_csv = csv_bytes(&["t", "estimate", "lower", "upper"], |w| {
        w.write_record(["0", &cdf.origin.to_string(), &cdf.origin.to_string(), &cdf.origin.to_string()])?;
        for (k, (t, v)) in cdf.times.iter().zip(&cdf.values).enumerate() {
            let lo = cdf.lower.as_ref().map(|b| b[k]);
            let hi = cdf.upper.as_ref().map(|b| b[k]);
            w.write_record([t.to_string(), v.to_string(), num(lo), num(hi)])?;
        }
        Ok(())
    })?;

    let mut meta = Metadata::new(
        "diagnose",
        None,
        DataConfig {
            input: args.data.input.display().to_string(),
            schema: &schema,
            tau: ds.tau(),
        },
    );
    opts.stamp(&mut meta);
    let results = DiagnoseResults {
        n: ds.len(),
        n_events: ds.n_events(),
        cox: &fit,
        schoenfeld: &sch,
        kaplan_meier: &km,
    };
    let mut out = Outputs::default();
    stage_json(&mut out, &args.out, &meta, results)?;
    out.stage(sibling(&args.out, "_residuals.csv"), &residuals)?;
    out.stage(sibling(&args.out, "_ph.csv"), &tests)?;
    out.stage(sibling(&args.out, "_km.csv"), &km_csv)?;
    report(&out.commit()?);
    Ok(())
}

#[derive(Serialize)]
struct CurvesConfig<'a> {
    hazard: &'a AnalyticHazard,
    covariate: &'a [f64],
    thetas: &'a [NamedTheta],
    t_max: f64,
    points: usize,
}

#[derive(Serialize)]
struct Curve<'a> {
    label: &'a str,
    file: String,
    points: Vec<CurvePoint>,
}

/// File-name-safe version of a θ label.
fn file_label(label: &str) -> String {
    label
        .chars()
        .map(|c| if c.is_ascii_alphanumeric() || c == '.' || c == '-' { c } else { '_' })
        .collect()
}

pub fn curves(args: &CurvesArgs, opts: &Options) -> Result<()> {
    let hazard = AnalyticHazard::new(args.scale, args.power, args.link.clone())?;
    if args.covariate.len() != args.link.len() {
        bail!(
            "--covariate has {} values but --link has {}",
            args.covariate.len(),
            args.link.len()
        );
    }
    if !(args.t_max.is_finite() && args.t_max > 0.0) || args.points < 2 {
        bail!("the grid needs a positive --t-max and at least 2 --points");
    }
    let thetas = parse_grid(&args.theta, args.link.len())?;
    let step = args.t_max / (args.points - 1) as f64;
    let grid: Vec<f64> = (0..args.points).map(|k| k as f64 * step).collect();

    let mut seen = HashSet::new();
    let mut out = Outputs::default();
    let mut curves = Vec::with_capacity(thetas.len());
    for th in &thetas {
        let path = sibling(&args.out, &format!("_theta_{}.csv", file_label(&th.label)));
        if !seen.insert(path.clone()) {
            bail!("two θ labels map to the same file {}", path.display());
        }
        let points = intervention_curves(&hazard, &args.covariate, &th.spec, &grid)?;
        let table = csv_bytes(&["t", "hazard", "density"], |w| {
            for p in &points {
                w.write_record([p.t.to_string(), p.hazard.to_string(), p.density.to_string()])?;
            }
            Ok(())
        })?;
        out.stage(&path, &table)?;
        curves.push(Curve {
            label: &th.label,
            file: path.file_name().map(|f| f.to_string_lossy().into_owned()).unwrap_or_default(),
            points,
        });
    }

    let mut meta = Metadata::new(
        "curves",
        None,
        CurvesConfig {
            hazard: &hazard,
            covariate: &args.covariate,
            thetas: &thetas,
            t_max: args.t_max,
            points: args.points,
        },
    );
    opts.stamp(&mut meta);
    stage_json(&mut out, &args.out, &meta, &curves)?;
    report(&out.commit()?);
    Ok(())
}
