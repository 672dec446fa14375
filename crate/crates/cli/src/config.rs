//! Run configuration: a flat `key = value` file overlaid by command-line
//! flags, resolved into typed settings with per-family defaults.
//!
//! The resolved configuration is written back as the run manifest, in the
//! same `key = value` format, so a manifest can be fed back in as a config.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use alo_core::{ErrorMetric, FitConfig, LossFamily, Penalty, Structure, ValueLaw};

use crate::error::{CliError, Result};

/// Every accepted key with a one-line description.
pub const KEYS: &[(&str, &str)] = &[
    ("family", "gaussian | logistic | poisson | poisson-softrect | pseudo-huber"),
    ("gamma", "pseudo-Huber transition width"),
    ("penalty", "ridge | lasso | elastic-net | bridge | smoothed-l1"),
    ("q", "bridge exponent in (1, 2)"),
    ("alpha_smooth", "smoothed-l1 sharpness"),
    ("mix", "elastic-net share of the l1 term, in [0, 1]"),
    ("lambda_min", "smallest lambda of the grid"),
    ("lambda_max", "largest lambda of the grid"),
    ("lambda_count", "number of grid points"),
    ("lambda_log", "log-spaced grid (true | false)"),
    ("metric", "squared | misclass | mae | nll"),
    ("n", "observations (simulated data)"),
    ("p", "features (simulated data)"),
    ("k", "nonzero true coefficients (default n/10)"),
    ("structure", "iid | spiked | toeplitz"),
    ("rho", "correlation of the spiked / toeplitz design"),
    ("sigma", "Gaussian noise standard deviation"),
    ("value_law", "laplace, or a number for fixed true coefficients"),
    ("scale", "rescale the design to unit signal variance (true | false)"),
    ("seed", "base random seed"),
    ("reps", "repetitions / Monte-Carlo replications"),
    ("folds", "K for a single K-fold column when kfold_list is empty (0 = none)"),
    ("kfold_list", "comma-separated K values for K-fold estimates"),
    ("threads", "worker threads (0 = all cores)"),
    ("out_dir", "output directory"),
    ("no_lo", "skip exact leave-one-out (true | false)"),
    ("data_x", "design CSV; when set, data is read instead of simulated"),
    ("data_y", "response CSV with one column"),
    ("header", "CSV files start with a header row (true | false)"),
    ("standardize", "standardize design columns to mean 0, SD 1 (true | false)"),
    ("intercept", "append a penalized column of ones (true | false)"),
    ("sizes", "comma-separated sizes NxP (or N for N x N)"),
    ("lambda_frac", "diagnostic lambda as a fraction of the null lambda"),
    ("k_frac", "diagnostic nonzeros as a fraction of n"),
    ("max_iters", "solver iteration cap"),
    ("kkt_tol", "solver stationarity tolerance"),
];

/// Keys a manifest carries for the record; accepted and ignored on input.
const INFO_KEYS: &[&str] = &["command", "col_mean", "col_sd"];

pub const COMMANDS: &[&str] = &["simulate", "risk-curve", "bench", "bias-study", "converge", "ingest-check"];

/// Parses `key = value` lines; `#` starts a comment line.
pub fn parse_kv(text: &str, origin: &str) -> Result<BTreeMap<String, String>> {
    let mut map = BTreeMap::new();
    for (no, raw) in text.lines().enumerate() {
        let line = raw.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let Some((k, v)) = line.split_once('=') else {
            return Err(CliError::InvalidConfig(format!("{origin}:{}: expected key = value", no + 1)));
        };
        map.insert(k.trim().to_string(), v.trim().to_string());
    }
    Ok(map)
}

pub fn read_kv_file(path: &Path) -> Result<BTreeMap<String, String>> {
    let text = std::fs::read_to_string(path).map_err(|e| CliError::io(path, e))?;
    parse_kv(&text, &path.display().to_string())
}

#[derive(Debug, Clone, PartialEq)]
pub struct GridSpec {
    pub min: f64,
    pub max: f64,
    pub count: usize,
    pub log: bool,
}

impl GridSpec {
    /// Descending grid, as the path solver expects.
    pub fn values(&self) -> Result<Vec<f64>> {
        Ok(alo_core::lambda_grid(self.min, self.max, self.count, self.log)?)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct RunConfig {
    pub command: String,
    pub family: LossFamily,
    pub penalty: Penalty,
    pub q: f64,
    pub alpha_smooth: f64,
    pub mix: f64,
    pub grid: GridSpec,
    pub metric: ErrorMetric,
    pub n: usize,
    pub p: usize,
    pub k: usize,
    pub structure: Structure,
    pub rho: f64,
    pub sigma: f64,
    pub value_law: ValueLaw,
    pub scale: bool,
    pub seed: u64,
    pub reps: usize,
    pub folds: usize,
    pub kfold_list: Vec<usize>,
    pub threads: usize,
    pub out_dir: PathBuf,
    pub no_lo: bool,
    pub data_x: Option<PathBuf>,
    pub data_y: Option<PathBuf>,
    pub header: bool,
    pub standardize: bool,
    pub intercept: bool,
    pub sizes: Vec<(usize, usize)>,
    pub lambda_frac: f64,
    pub k_frac: f64,
    pub max_iters: usize,
    pub kkt_tol: f64,
}

fn bad(key: &str, value: &str, what: &str) -> CliError {
    CliError::InvalidConfig(format!("{key} = {value:?}: {what}"))
}

struct Lookup<'a> {
    map: &'a BTreeMap<String, String>,
}

impl Lookup<'_> {
    fn raw(&self, key: &str) -> Option<&str> {
        self.map.get(key).map(String::as_str).filter(|v| !v.is_empty())
    }

    fn num<T: std::str::FromStr>(&self, key: &str, default: T) -> Result<T> {
        match self.raw(key) {
            None => Ok(default),
            Some(v) => v.parse().map_err(|_| bad(key, v, "not a valid number")),
        }
    }

    fn flag(&self, key: &str, default: bool) -> Result<bool> {
        match self.raw(key) {
            None => Ok(default),
            Some("true" | "1" | "yes") => Ok(true),
            Some("false" | "0" | "no") => Ok(false),
            Some(v) => Err(bad(key, v, "expected true or false")),
        }
    }

    fn list(&self, key: &str) -> Result<Vec<usize>> {
        match self.raw(key) {
            None => Ok(Vec::new()),
            Some(v) => v
                .split(',')
                .map(|s| s.trim().parse().map_err(|_| bad(key, v, "expected comma-separated integers")))
                .collect(),
        }
    }
}

fn parse_family(v: &str, gamma: f64) -> Option<LossFamily> {
    Some(match v {
        "gaussian" => LossFamily::GaussianHalfSquared,
        "logistic" => LossFamily::LogisticBernoulli,
        "poisson" => LossFamily::PoissonExpLink,
        "poisson-softrect" => LossFamily::PoissonSoftRect,
        "pseudo-huber" => LossFamily::PseudoHuber { gamma },
        _ => return None,
    })
}

fn parse_metric(v: &str) -> Option<ErrorMetric> {
    Some(match v {
        "squared" => ErrorMetric::SquaredError,
        "misclass" => ErrorMetric::Misclassification01,
        "mae" => ErrorMetric::MeanAbsoluteExpRate,
        "nll" => ErrorMetric::NegLogLikelihood,
        _ => return None,
    })
}

fn default_metric(fam: &LossFamily) -> ErrorMetric {
    match fam {
        LossFamily::GaussianHalfSquared | LossFamily::PseudoHuber { .. } => ErrorMetric::SquaredError,
        LossFamily::LogisticBernoulli => ErrorMetric::Misclassification01,
        LossFamily::PoissonExpLink | LossFamily::PoissonSoftRect => ErrorMetric::MeanAbsoluteExpRate,
    }
}

fn parse_sizes(v: &str) -> Result<Vec<(usize, usize)>> {
    v.split(',')
        .map(|item| {
            let item = item.trim();
            let parsed = match item.split_once('x') {
                Some((a, b)) => a.trim().parse().ok().zip(b.trim().parse().ok()),
                None => item.parse().ok().map(|n| (n, n)),
            };
            match parsed {
                Some((n, p)) if n > 0 && p > 0 => Ok((n, p)),
                _ => Err(bad("sizes", v, "expected entries like 500x1000 or 500")),
            }
        })
        .collect()
}

impl RunConfig {
    /// Resolves a merged key map (file then flags) for `command`.
    pub fn resolve(command: &str, map: &BTreeMap<String, String>) -> Result<Self> {
        if !COMMANDS.contains(&command) {
            return Err(CliError::InvalidConfig(format!("unknown command {command:?}")));
        }
        for key in map.keys() {
            if !KEYS.iter().any(|(k, _)| k == key) && !INFO_KEYS.contains(&key.as_str()) {
                return Err(CliError::InvalidConfig(format!("unknown key {key:?}")));
            }
        }
        let l = Lookup { map };

        let gamma = l.num("gamma", 1.0)?;
        let fam_name = l.raw("family").unwrap_or("gaussian");
        let family = parse_family(fam_name, gamma).ok_or_else(|| bad("family", fam_name, "unknown family"))?;
        family.validate()?;

        let q = l.num("q", 1.5)?;
        let alpha_smooth = l.num("alpha_smooth", 100.0)?;
        let mix = l.num("mix", 0.5)?;
        let pen_name = l.raw("penalty").unwrap_or("lasso");
        let penalty = match pen_name {
            "ridge" => Penalty::Ridge,
            "lasso" => Penalty::L1,
            "elastic-net" => Penalty::ElasticNet { mix },
            "bridge" => Penalty::Bridge { q },
            "smoothed-l1" => Penalty::SmoothedL1 { alpha: alpha_smooth },
            _ => return Err(bad("penalty", pen_name, "unknown penalty")),
        };
        penalty.validate().map_err(|e| CliError::InvalidConfig(e.to_string()))?;

        let (dmin, dmax) = match family {
            LossFamily::LogisticBernoulli => (0.1, 10.0),
            _ => (1.0, 100.0),
        };
        let grid = GridSpec {
            min: l.num("lambda_min", dmin)?,
            max: l.num("lambda_max", dmax)?,
            count: l.num("lambda_count", 30)?,
            log: l.flag("lambda_log", true)?,
        };
        if !(grid.min > 0.0 && grid.max >= grid.min && grid.max.is_finite()) {
            return Err(CliError::InvalidConfig(format!(
                "lambda grid needs 0 < lambda_min <= lambda_max, got {} .. {}",
                grid.min, grid.max
            )));
        }
        if grid.count == 0 {
            return Err(CliError::InvalidConfig("lambda_count must be at least 1".into()));
        }

        let metric = match l.raw("metric") {
            None => default_metric(&family),
            Some(v) => parse_metric(v).ok_or_else(|| bad("metric", v, "unknown metric"))?,
        };
        metric.check(&family).map_err(|e| CliError::InvalidConfig(e.to_string()))?;

        let n: usize = l.num("n", 200)?;
        let p: usize = l.num("p", 400)?;
        let k: usize = l.num("k", (n / 10).max(1))?;
        if n == 0 || p == 0 {
            return Err(CliError::InvalidConfig("n and p must be positive".into()));
        }
        if k > p {
            return Err(CliError::InvalidConfig(format!("k = {k} exceeds p = {p}")));
        }
        let rho = l.num("rho", 0.5)?;
        let st_name = l.raw("structure").unwrap_or("iid");
        let structure = match st_name {
            "iid" => Structure::Iid,
            "spiked" => Structure::Spiked(rho),
            "toeplitz" => Structure::Toeplitz(rho),
            _ => return Err(bad("structure", st_name, "unknown structure")),
        };
        structure.validate().map_err(|e| CliError::InvalidConfig(e.to_string()))?;
        let sigma = l.num("sigma", 1.0)?;
        if !(sigma >= 0.0) {
            return Err(bad("sigma", &sigma.to_string(), "must be >= 0"));
        }
        let value_law = match l.raw("value_law").unwrap_or("laplace") {
            "laplace" => ValueLaw::Laplace01,
            v => ValueLaw::Fixed(v.parse().map_err(|_| bad("value_law", v, "expected laplace or a number"))?),
        };

        let reps = l.num("reps", 5)?;
        if command == "bias-study" && reps < 2 {
            return Err(CliError::InvalidConfig(format!("bias-study needs reps >= 2, got {reps}")));
        }
        if reps == 0 {
            return Err(CliError::InvalidConfig("reps must be at least 1".into()));
        }
        let folds = l.num("folds", 0)?;
        let mut kfold_list = l.list("kfold_list")?;
        if kfold_list.is_empty() {
            if folds > 0 {
                kfold_list.push(folds);
            } else if command == "bias-study" {
                kfold_list = vec![3, 5, 10];
            }
        }
        if let Some(&bad_k) = kfold_list.iter().find(|&&k| k < 2) {
            return Err(CliError::InvalidConfig(format!("K-fold needs K >= 2, got {bad_k}")));
        }

        let data_x = l.raw("data_x").map(PathBuf::from);
        let data_y = l.raw("data_y").map(PathBuf::from);
        if data_x.is_some() != data_y.is_some() {
            return Err(CliError::InvalidConfig("data_x and data_y must be given together".into()));
        }
        if command == "ingest-check" && data_x.is_none() {
            return Err(CliError::InvalidConfig("ingest-check needs data_x and data_y".into()));
        }

        let sizes = match l.raw("sizes") {
            None if command == "converge" => vec![(50, 100), (100, 200), (200, 400)],
            None => Vec::new(),
            Some(v) => parse_sizes(v)?,
        };

        let cfg = RunConfig {
            command: command.to_string(),
            family,
            penalty,
            q,
            alpha_smooth,
            mix,
            grid,
            metric,
            n,
            p,
            k,
            structure,
            rho,
            sigma,
            value_law,
            scale: l.flag("scale", true)?,
            seed: l.num("seed", 1)?,
            reps,
            folds,
            kfold_list,
            threads: l.num("threads", 0)?,
            out_dir: PathBuf::from(l.raw("out_dir").unwrap_or("out")),
            no_lo: l.flag("no_lo", false)?,
            data_x,
            data_y,
            header: l.flag("header", true)?,
            standardize: l.flag("standardize", false)?,
            intercept: l.flag("intercept", false)?,
            sizes,
            lambda_frac: l.num("lambda_frac", 0.1)?,
            k_frac: l.num("k_frac", 0.1)?,
            max_iters: l.num("max_iters", 10_000)?,
            kkt_tol: l.num("kkt_tol", 1e-8)?,
        };
        cfg.fit_config().validate().map_err(|e| CliError::InvalidConfig(e.to_string()))?;
        Ok(cfg)
    }

    pub fn fit_config(&self) -> FitConfig {
        FitConfig { max_iters: self.max_iters, kkt_tol: self.kkt_tol, ..FitConfig::default() }
    }

    /// The fully resolved configuration as `key = value` lines.
    pub fn manifest(&self) -> String {
        let opt_path = |p: &Option<PathBuf>| p.as_ref().map(|p| p.display().to_string()).unwrap_or_default();
        let join = |v: &[usize]| v.iter().map(usize::to_string).collect::<Vec<_>>().join(",");
        let fam = self.family.name();
        let gamma = match self.family {
            LossFamily::PseudoHuber { gamma } => gamma,
            _ => 1.0,
        };
        let structure = match self.structure {
            Structure::Iid => "iid",
            Structure::Spiked(_) => "spiked",
            Structure::Toeplitz(_) => "toeplitz",
        };
        let value_law = match self.value_law {
            ValueLaw::Laplace01 => "laplace".to_string(),
            ValueLaw::Fixed(v) => v.to_string(),
        };
        let sizes = self.sizes.iter().map(|(n, p)| format!("{n}x{p}")).collect::<Vec<_>>().join(",");
        let entries: Vec<(&str, String)> = vec![
            ("command", self.command.clone()),
            ("family", fam.to_string()),
            ("gamma", gamma.to_string()),
            ("penalty", self.penalty.name().to_string()),
            ("q", self.q.to_string()),
            ("alpha_smooth", self.alpha_smooth.to_string()),
            ("mix", self.mix.to_string()),
            ("lambda_min", self.grid.min.to_string()),
            ("lambda_max", self.grid.max.to_string()),
            ("lambda_count", self.grid.count.to_string()),
            ("lambda_log", self.grid.log.to_string()),
            ("metric", self.metric.name().to_string()),
            ("n", self.n.to_string()),
            ("p", self.p.to_string()),
            ("k", self.k.to_string()),
            ("structure", structure.to_string()),
            ("rho", self.rho.to_string()),
            ("sigma", self.sigma.to_string()),
            ("value_law", value_law),
            ("scale", self.scale.to_string()),
            ("seed", self.seed.to_string()),
            ("reps", self.reps.to_string()),
            ("folds", self.folds.to_string()),
            ("kfold_list", join(&self.kfold_list)),
            ("threads", self.threads.to_string()),
            ("out_dir", self.out_dir.display().to_string()),
            ("no_lo", self.no_lo.to_string()),
            ("data_x", opt_path(&self.data_x)),
            ("data_y", opt_path(&self.data_y)),
            ("header", self.header.to_string()),
            ("standardize", self.standardize.to_string()),
            ("intercept", self.intercept.to_string()),
            ("sizes", sizes),
            ("lambda_frac", self.lambda_frac.to_string()),
            ("k_frac", self.k_frac.to_string()),
            ("max_iters", self.max_iters.to_string()),
            ("kkt_tol", self.kkt_tol.to_string()),
        ];
        let mut out = String::new();
        for (k, v) in entries {
            let _ = writeln!(out, "{k} = {v}");
        }
        out
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn map(pairs: &[(&str, &str)]) -> BTreeMap<String, String> {
        pairs.iter().map(|(k, v)| (k.to_string(), v.to_string())).collect()
    }

    #[test]
    fn family_defaults() {
        let c = RunConfig::resolve("risk-curve", &map(&[("family", "logistic")])).unwrap();
        assert_eq!((c.grid.min, c.grid.max, c.grid.count), (0.1, 10.0, 30));
        assert_eq!(c.metric, ErrorMetric::Misclassification01);
        let c = RunConfig::resolve("risk-curve", &map(&[("family", "poisson")])).unwrap();
        assert_eq!((c.grid.min, c.grid.max), (1.0, 100.0));
        assert_eq!(c.metric, ErrorMetric::MeanAbsoluteExpRate);
    }

    #[test]
    fn manifest_round_trips() {
        let c = RunConfig::resolve(
            "bias-study",
            &map(&[("family", "gaussian"), ("penalty", "bridge"), ("q", "1.3"), ("sizes", "10x20,30")]),
        )
        .unwrap();
        let again = RunConfig::resolve("bias-study", &parse_kv(&c.manifest(), "m").unwrap()).unwrap();
        assert_eq!(c, again);
        assert_eq!(again.kfold_list, vec![3, 5, 10]);
        assert_eq!(again.sizes, vec![(10, 20), (30, 30)]);
    }

    #[test]
    fn rejects_bad_input() {
        for pairs in [
            vec![("k", "500"), ("p", "400")],
            vec![("lambda_min", "0")],
            vec![("lambda_count", "0")],
            vec![("family", "gaussian"), ("metric", "misclass")],
            vec![("nonsense", "1")],
            vec![("kfold_list", "1,3")],
            vec![("data_x", "x.csv")],
        ] {
            assert!(RunConfig::resolve("risk-curve", &map(&pairs)).is_err(), "{pairs:?}");
        }
        assert!(RunConfig::resolve("bias-study", &map(&[("reps", "1")])).is_err());
        assert!(parse_kv("no equals sign", "t").is_err());
    }
}
