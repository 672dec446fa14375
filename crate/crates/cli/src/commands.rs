//! The experiment commands. Each writes its tables, a plot and the run
//! manifest into `out_dir`, and returns a one-line summary.

use std::fmt::Write as _;
use std::path::{Path, PathBuf};
use std::time::Instant;

use alo_core::datagen::mix_seed;
use alo_core::{
    alo_auto, alo_convergence_diagnostic, fit, fit_path, kfold_from, lo_exact_from, oracle_linear_risk,
    simulate, Dataset, DesignSpec, DiagnosticSetup, FitResult, LossFamily, Simulation, TruthSpec,
};
use ndarray::Array1;

use crate::config::RunConfig;
use crate::error::{CliError, Result};
use crate::ingest::{ingest_csv, IngestOptions};
use crate::output::{cell, line_plot, write_csv, write_text, Series};

pub const RISK_CURVE_FIXED: [&str; 4] = ["lambda", "alo_risk", "lo_risk", "lo_se"];
pub const RISK_CURVE_TAIL: [&str; 7] =
    ["oracle_risk", "active_set_size", "clamped_count", "time_fit_ms", "time_alo_ms", "time_lo_ms", "error"];
pub const TIMING_HEADER: [&str; 7] = ["n", "p", "reps", "time_fit_ms", "time_alo_ms", "time_lo_ms", "lo_over_alo"];
pub const BIAS_HEADER: [&str; 5] = ["lambda", "estimator", "mean", "se", "count"];
pub const CONVERGE_HEADER: [&str; 5] = ["n", "p", "reps", "mean_max_gap", "worst_max_gap"];

/// Runs `cfg.command` on a thread pool of `cfg.threads` workers.
pub fn run(cfg: &RunConfig) -> Result<String> {
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(cfg.threads)
        .build()
        .map_err(|e| CliError::InvalidConfig(format!("threads: {e}")))?;
    pool.install(|| {
        std::fs::create_dir_all(&cfg.out_dir).map_err(|e| CliError::io(&cfg.out_dir, e))?;
        match cfg.command.as_str() {
            "simulate" => cmd_simulate(cfg),
            "risk-curve" => cmd_risk_curve(cfg),
            "bench" => cmd_bench(cfg),
            "bias-study" => cmd_bias_study(cfg),
            "converge" => cmd_converge(cfg),
            "ingest-check" => cmd_ingest_check(cfg),
            other => Err(CliError::InvalidConfig(format!("unknown command {other:?}"))),
        }
    })
}

fn out(cfg: &RunConfig, name: &str) -> PathBuf {
    cfg.out_dir.join(name)
}

fn ms(t: Instant) -> f64 {
    t.elapsed().as_secs_f64() * 1e3
}

fn strings(h: &[&str]) -> Vec<String> {
    h.iter().map(|s| s.to_string()).collect()
}

fn write_manifest(cfg: &RunConfig, extra: &str) -> Result<()> {
    write_text(&out(cfg, "manifest.txt"), &(cfg.manifest() + extra))
}

fn simulate_with(cfg: &RunConfig, n: usize, p: usize, k: usize, seed: u64) -> Result<Simulation> {
    let design = DesignSpec { n, p, structure: cfg.structure, scale_to_unit_signal: cfg.scale };
    let truth = TruthSpec { k, value_law: cfg.value_law, seed };
    Ok(simulate(&cfg.family, &design, &truth, cfg.sigma, seed)?)
}

struct Source {
    ds: Dataset,
    sim: Option<Simulation>,
    manifest_extra: String,
}

/// Reads `data_x`/`data_y` when set, otherwise simulates from the config.
fn load(cfg: &RunConfig) -> Result<Source> {
    match (&cfg.data_x, &cfg.data_y) {
        (Some(px), Some(py)) => {
            let opts = IngestOptions { header: cfg.header, standardize: cfg.standardize, intercept: cfg.intercept };
            let ing = ingest_csv(px, py, opts)?;
            let mut extra = String::new();
            if let Some((m, s)) = &ing.standardization {
                let join = |v: &[f64]| v.iter().map(|x| x.to_string()).collect::<Vec<_>>().join(",");
                let _ = writeln!(extra, "col_mean = {}", join(m));
                let _ = writeln!(extra, "col_sd = {}", join(s));
            }
            Ok(Source { ds: ing.dataset, sim: None, manifest_extra: extra })
        }
        _ => {
            let sim = simulate_with(cfg, cfg.n, cfg.p, cfg.k, cfg.seed)?;
            let ds = Dataset::new(sim.x.clone(), sim.y.clone())?;
            Ok(Source { ds, sim: Some(sim), manifest_extra: String::new() })
        }
    }
}

fn oracle(cfg: &RunConfig, sim: Option<&Simulation>, beta_hat: &Array1<f64>) -> Result<Option<f64>> {
    match sim {
        Some(s) if cfg.family == LossFamily::GaussianHalfSquared => {
            Ok(Some(oracle_linear_risk(&s.cov, beta_hat.view(), s.beta_star.view(), cfg.sigma)?))
        }
        _ => Ok(None),
    }
}

fn plot_x(cfg: &RunConfig, lambda: f64) -> f64 {
    if cfg.grid.log {
        lambda.log10()
    } else {
        lambda
    }
}

fn x_label(cfg: &RunConfig) -> &'static str {
    if cfg.grid.log {
        "log10 lambda"
    } else {
        "lambda"
    }
}

pub fn cmd_simulate(cfg: &RunConfig) -> Result<String> {
    let sim = simulate_with(cfg, cfg.n, cfg.p, cfg.k, cfg.seed)?;
    let header: Vec<String> = (1..=cfg.p).map(|j| format!("x{j}")).collect();
    let rows: Vec<Vec<String>> = sim.x.rows().into_iter().map(|r| r.iter().map(|v| v.to_string()).collect()).collect();
    write_csv(&out(cfg, "X.csv"), &header, &rows)?;
    let col = |v: &Array1<f64>| v.iter().map(|x| vec![x.to_string()]).collect::<Vec<_>>();
    write_csv(&out(cfg, "y.csv"), &strings(&["y"]), &col(&sim.y))?;
    write_csv(&out(cfg, "beta_star.csv"), &strings(&["beta_star"]), &col(&sim.beta_star))?;
    write_manifest(cfg, "")?;
    Ok(format!("simulated n = {}, p = {}, k = {} into {}", cfg.n, cfg.p, cfg.k, cfg.out_dir.display()))
}

pub fn risk_curve_header(kfold_list: &[usize]) -> Vec<String> {
    let mut h = strings(&RISK_CURVE_FIXED);
    h.extend(kfold_list.iter().map(|k| format!("kfold_risk_{k}")));
    h.extend(strings(&RISK_CURVE_TAIL));
    h
}

#[derive(Debug, Default)]
struct CurveRow {
    lambda: f64,
    alo: Option<f64>,
    lo: Option<(f64, f64)>,
    kfold: Vec<Option<f64>>,
    oracle: Option<f64>,
    active: Option<usize>,
    clamped: Option<usize>,
    t_fit: Option<f64>,
    t_alo: Option<f64>,
    t_lo: Option<f64>,
    error: String,
}

impl CurveRow {
    fn cells(&self) -> Vec<String> {
        let mut c = vec![self.lambda.to_string(), cell(self.alo), cell(self.lo.map(|l| l.0)), cell(self.lo.map(|l| l.1))];
        c.extend(self.kfold.iter().map(|&v| cell(v)));
        c.push(cell(self.oracle));
        c.push(self.active.map(|a| a.to_string()).unwrap_or_default());
        c.push(self.clamped.map(|a| a.to_string()).unwrap_or_default());
        c.extend([cell(self.t_fit), cell(self.t_alo), cell(self.t_lo), self.error.clone()]);
        c
    }
}

fn curve_point(cfg: &RunConfig, src: &Source, f: &FitResult, row: &mut CurveRow) -> Result<()> {
    let t = Instant::now();
    let rep = alo_auto(&src.ds, &cfg.family, &cfg.penalty, f, row.lambda, cfg.metric)?;
    row.t_alo = Some(ms(t));
    row.alo = Some(rep.risk);
    row.clamped = Some(rep.clamped_count);
    row.active = Some(f.active_set.len());
    row.oracle = oracle(cfg, src.sim.as_ref(), &f.beta_hat)?;
    let fcfg = cfg.fit_config();
    let mut degraded = 0;
    if !cfg.no_lo {
        let t = Instant::now();
        let lo = lo_exact_from(&src.ds, cfg.family, cfg.penalty, row.lambda, &fcfg, cfg.metric, &f.beta_hat)?;
        row.t_lo = Some(ms(t));
        row.lo = Some((lo.estimate, lo.std_error));
        degraded += lo.unconverged;
    }
    for (slot, &k) in row.kfold.iter_mut().zip(&cfg.kfold_list) {
        let kf = kfold_from(&src.ds, cfg.family, cfg.penalty, row.lambda, &fcfg, cfg.metric, k, cfg.seed, &f.beta_hat)?;
        *slot = Some(kf.estimate);
        degraded += kf.unconverged;
    }
    if !f.converged {
        row.error = "full fit not certified".into();
    } else if degraded > 0 {
        row.error = format!("{degraded} refits not certified");
    }
    Ok(())
}

pub fn cmd_risk_curve(cfg: &RunConfig) -> Result<String> {
    let src = load(cfg)?;
    let grid = cfg.grid.values()?;
    let fcfg = cfg.fit_config();
    let mut warm: Option<Array1<f64>> = None;
    let mut rows = Vec::with_capacity(grid.len());
    for &lambda in &grid {
        let mut row = CurveRow { lambda, kfold: vec![None; cfg.kfold_list.len()], ..CurveRow::default() };
        let t = Instant::now();
        match fit(&src.ds, cfg.family, cfg.penalty, lambda, &fcfg, warm.as_ref()) {
            Ok(f) => {
                row.t_fit = Some(ms(t));
                if let Err(e) = curve_point(cfg, &src, &f, &mut row) {
                    row.error = e.to_string();
                }
                warm = Some(f.beta_hat);
            }
            Err(e) => row.error = e.to_string(),
        }
        rows.push(row);
    }
    let table: Vec<Vec<String>> = rows.iter().map(CurveRow::cells).collect();
    write_csv(&out(cfg, "curve.csv"), &risk_curve_header(&cfg.kfold_list), &table)?;

    let pts = |get: &dyn Fn(&CurveRow) -> Option<f64>| -> Vec<(f64, f64)> {
        rows.iter().filter_map(|r| get(r).map(|v| (plot_x(cfg, r.lambda), v))).collect()
    };
    let mut series = vec![Series::new("ALO", pts(&|r| r.alo))];
    if !cfg.no_lo {
        let mut lo = Series::new("LO", pts(&|r| r.lo.map(|l| l.0)));
        lo.err = Some(rows.iter().filter_map(|r| r.lo.map(|l| if l.1.is_finite() { l.1 } else { 0.0 })).collect());
        series.push(lo);
    }
    for (i, k) in cfg.kfold_list.iter().enumerate() {
        series.push(Series::new(format!("{k}-fold"), pts(&|r| r.kfold[i])));
    }
    if rows.iter().any(|r| r.oracle.is_some()) {
        series.push(Series::new("oracle", pts(&|r| r.oracle)));
    }
    line_plot(&out(cfg, "curve.svg"), "Risk estimates", x_label(cfg), cfg.metric.name(), &series)?;
    write_manifest(cfg, &src.manifest_extra)?;
    let failed = rows.iter().filter(|r| r.alo.is_none()).count();
    let best = rows.iter().filter_map(|r| r.alo.map(|a| (r.lambda, a))).min_by(|a, b| a.1.total_cmp(&b.1));
    let mut msg = format!("{} lambdas, {failed} failed", rows.len());
    if let Some((l, a)) = best {
        let _ = write!(msg, "; ALO minimum {a} at lambda {l}");
    }
    Ok(msg)
}

fn median(v: &mut [f64]) -> f64 {
    v.sort_by(f64::total_cmp);
    let m = v.len() / 2;
    if v.len() % 2 == 1 {
        v[m]
    } else {
        0.5 * (v[m - 1] + v[m])
    }
}

/// Wall time of the path fit, of fit plus ALO, and of the leave-one-out
/// refits (warm-started from the path).
fn time_once(cfg: &RunConfig, ds: &Dataset, grid: &[f64]) -> Result<(f64, f64, Option<f64>)> {
    let fcfg = cfg.fit_config();
    let t = Instant::now();
    let path = fit_path(ds, cfg.family, cfg.penalty, grid, &fcfg)?;
    let t_fit = ms(t);
    let fits: Vec<FitResult> = path.into_iter().collect::<std::result::Result<_, _>>()?;
    for (f, &l) in fits.iter().zip(grid) {
        alo_auto(ds, &cfg.family, &cfg.penalty, f, l, cfg.metric)?;
    }
    let t_alo = ms(t);
    if cfg.no_lo {
        return Ok((t_fit, t_alo, None));
    }
    let t = Instant::now();
    for (f, &l) in fits.iter().zip(grid) {
        lo_exact_from(ds, cfg.family, cfg.penalty, l, &fcfg, cfg.metric, &f.beta_hat)?;
    }
    Ok((t_fit, t_alo, Some(ms(t))))
}

pub fn cmd_bench(cfg: &RunConfig) -> Result<String> {
    let grid = cfg.grid.values()?;
    let mut rows = Vec::new();
    let mut curves: [Vec<(f64, f64)>; 3] = Default::default();
    for &(n, p) in &cfg.sizes {
        let k = ((cfg.k_frac * n as f64).round() as usize).clamp(1, p);
        let sim = simulate_with(cfg, n, p, k, mix_seed(&[cfg.seed, n as u64, p as u64]))?;
        let ds = Dataset::new(sim.x, sim.y)?;
        let (mut tf, mut ta, mut tl) = (Vec::new(), Vec::new(), Vec::new());
        for _ in 0..cfg.reps {
            let (f, a, l) = time_once(cfg, &ds, &grid)?;
            tf.push(f);
            ta.push(a);
            tl.extend(l);
        }
        let (f, a) = (median(&mut tf), median(&mut ta));
        let l = (!tl.is_empty()).then(|| median(&mut tl));
        curves[0].push((n as f64, f));
        curves[1].push((n as f64, a));
        if let Some(l) = l {
            curves[2].push((n as f64, l));
        }
        rows.push(vec![
            n.to_string(),
            p.to_string(),
            cfg.reps.to_string(),
            f.to_string(),
            a.to_string(),
            cell(l),
            cell(l.map(|l| l / a)),
        ]);
    }
    write_csv(&out(cfg, "timing.csv"), &strings(&TIMING_HEADER), &rows)?;
    let [f, a, l] = curves;
    let mut series = vec![Series::new("fit", f), Series::new("ALO (with fit)", a)];
    if !cfg.no_lo {
        series.push(Series::new("LO", l));
    }
    line_plot(&out(cfg, "timing.svg"), "Median wall time", "n", "milliseconds", &series)?;
    write_manifest(cfg, "")?;
    Ok(format!("timed {} sizes x {} repetitions", cfg.sizes.len(), cfg.reps))
}

#[derive(Default, Clone)]
struct Acc {
    sum: f64,
    sum_sq: f64,
    count: usize,
}

impl Acc {
    fn push(&mut self, v: f64) {
        self.sum += v;
        self.sum_sq += v * v;
        self.count += 1;
    }

    fn mean_se(&self) -> (Option<f64>, Option<f64>) {
        if self.count == 0 {
            return (None, None);
        }
        let m = self.count as f64;
        let mean = self.sum / m;
        if self.count < 2 {
            return (Some(mean), None);
        }
        let var = ((self.sum_sq - m * mean * mean) / (m - 1.0)).max(0.0);
        (Some(mean), Some((var / m).sqrt()))
    }
}

pub fn cmd_bias_study(cfg: &RunConfig) -> Result<String> {
    let grid = cfg.grid.values()?;
    let fcfg = cfg.fit_config();
    let mut names: Vec<String> = cfg.kfold_list.iter().map(|k| format!("{k}-fold")).collect();
    if !cfg.no_lo {
        names.push("LO".into());
    }
    names.push("ALO".into());
    let with_oracle = cfg.family == LossFamily::GaussianHalfSquared;
    if with_oracle {
        names.push("oracle".into());
    }
    let mut acc = vec![vec![Acc::default(); names.len()]; grid.len()];
    for r in 0..cfg.reps {
        let seed = mix_seed(&[cfg.seed, r as u64]);
        let sim = simulate_with(cfg, cfg.n, cfg.p, cfg.k, seed)?;
        let ds = Dataset::new(sim.x.clone(), sim.y.clone())?;
        let path = fit_path(&ds, cfg.family, cfg.penalty, &grid, &fcfg)?;
        for (li, (f, &lambda)) in path.into_iter().zip(&grid).enumerate() {
            let Ok(f) = f else { continue };
            let mut vals: Vec<f64> = Vec::with_capacity(names.len());
            for &k in &cfg.kfold_list {
                vals.push(kfold_from(&ds, cfg.family, cfg.penalty, lambda, &fcfg, cfg.metric, k, seed, &f.beta_hat)?.estimate);
            }
            if !cfg.no_lo {
                vals.push(lo_exact_from(&ds, cfg.family, cfg.penalty, lambda, &fcfg, cfg.metric, &f.beta_hat)?.estimate);
            }
            vals.push(alo_auto(&ds, &cfg.family, &cfg.penalty, &f, lambda, cfg.metric)?.risk);
            if with_oracle {
                vals.push(oracle_linear_risk(&sim.cov, f.beta_hat.view(), sim.beta_star.view(), cfg.sigma)?);
            }
            for (a, v) in acc[li].iter_mut().zip(vals) {
                a.push(v);
            }
        }
    }
    let mut rows = Vec::new();
    let mut series: Vec<Series> = names.iter().map(|n| Series { err: Some(Vec::new()), ..Series::new(n.clone(), Vec::new()) }).collect();
    for (li, &lambda) in grid.iter().enumerate() {
        for (e, name) in names.iter().enumerate() {
            let a = &acc[li][e];
            let (mean, se) = a.mean_se();
            rows.push(vec![lambda.to_string(), name.clone(), cell(mean), cell(se), a.count.to_string()]);
            if let Some(m) = mean {
                series[e].points.push((plot_x(cfg, lambda), m));
                series[e].err.as_mut().unwrap().push(se.unwrap_or(0.0));
            }
        }
    }
    write_csv(&out(cfg, "bias.csv"), &strings(&BIAS_HEADER), &rows)?;
    line_plot(&out(cfg, "bias.svg"), "Monte-Carlo mean risk estimates", x_label(cfg), cfg.metric.name(), &series)?;
    write_manifest(cfg, "")?;
    Ok(format!("{} replications over {} lambdas", cfg.reps, grid.len()))
}

pub fn cmd_converge(cfg: &RunConfig) -> Result<String> {
    let setup = DiagnosticSetup {
        structure: cfg.structure,
        lambda_frac: cfg.lambda_frac,
        k_frac: cfg.k_frac,
        sigma: cfg.sigma,
    };
    let diag = alo_convergence_diagnostic(cfg.family, cfg.penalty, &cfg.sizes, cfg.reps, cfg.seed, &setup)?;
    let rows: Vec<Vec<String>> = diag
        .iter()
        .map(|d| {
            vec![
                d.n.to_string(),
                d.p.to_string(),
                d.reps.to_string(),
                d.mean_max_gap.to_string(),
                d.worst_max_gap.to_string(),
            ]
        })
        .collect();
    write_csv(&out(cfg, "converge.csv"), &strings(&CONVERGE_HEADER), &rows)?;
    let pts = |f: &dyn Fn(&alo_core::DiagnosticRow) -> f64| -> Vec<(f64, f64)> {
        diag.iter().map(|d| ((d.n as f64).log10(), f(d).log10())).collect()
    };
    let series = [Series::new("mean", pts(&|d| d.mean_max_gap)), Series::new("worst", pts(&|d| d.worst_max_gap))];
    line_plot(&out(cfg, "converge.svg"), "max |ALO - LO| in the linear predictor", "log10 n", "log10 gap", &series)?;
    write_manifest(cfg, "")?;
    Ok(format!("{} sizes x {} replications", diag.len(), cfg.reps))
}

pub fn cmd_ingest_check(cfg: &RunConfig) -> Result<String> {
    let src = load(cfg)?;
    cfg.family.check_responses(src.ds.y().as_slice().expect("contiguous"))?;
    write_manifest(cfg, &src.manifest_extra)?;
    Ok(format!(
        "n = {}, p = {}; responses valid for {}",
        src.ds.n(),
        src.ds.p(),
        cfg.family.name()
    ))
}

/// Convenience for tests and scripts: resolve and run from key/value pairs.
pub fn run_pairs(command: &str, pairs: &[(&str, &str)]) -> Result<String> {
    let map = pairs.iter().map(|(k, v)| (k.to_string(), v.to_string())).collect();
    run(&RunConfig::resolve(command, &map)?)
}

pub fn manifest_path(out_dir: &Path) -> PathBuf {
    out_dir.join("manifest.txt")
}
