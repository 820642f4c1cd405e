use std::fmt;
use std::fs;
use std::path::{Path, PathBuf};

use rayon::prelude::*;
use z2lgt::analysis::{fit as fit_family, summarize, FitFamily, PeakOptions};
use z2lgt::config::{EngineKind, RunConfig};
use z2lgt::evolve::RunRecord;
use z2lgt::exact::DEFAULT_SPIN_CAP;
use z2lgt::io::{read_series_file, read_summary, write_fit_json, write_summary, FitReport, SeriesWriter, SummaryRow};
use z2lgt::Error;

use crate::{Axis, ConfigArgs};

pub enum Failure {
    Config(String),
    Numerical(String),
    Check(String),
}

impl Failure {
    pub fn code(&self) -> u8 {
        match self {
            Failure::Config(_) => 1,
            Failure::Numerical(_) => 2,
            Failure::Check(_) => 3,
        }
    }
}

impl fmt::Display for Failure {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Failure::Config(m) | Failure::Numerical(m) => f.write_str(m),
            Failure::Check(m) => write!(f, "check failed: {m}"),
        }
    }
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        match e {
            Error::KrylovNonConvergence { .. } | Error::StateCollapse { .. } | Error::NotConverged(_) | Error::Linalg(_) => {
                Failure::Numerical(e.to_string())
            }
            _ => Failure::Config(e.to_string()),
        }
    }
}

impl From<std::io::Error> for Failure {
    fn from(e: std::io::Error) -> Self {
        Failure::Config(e.to_string())
    }
}

type Outcome<T = ()> = Result<T, Failure>;

fn load_config(args: &ConfigArgs) -> Outcome<RunConfig> {
    let mut cfg = match &args.config {
        Some(path) => RunConfig::from_file(path)?,
        None => RunConfig::default(),
    };
    for item in &args.overrides {
        let (k, v) = item
            .split_once('=')
            .ok_or_else(|| Failure::Config(format!("override '{item}' is not KEY=VALUE")))?;
        cfg.set(k.trim(), v.trim())?;
    }
    cfg.validate()?;
    Ok(cfg)
}

/// Runs `cfg` into `output_dir/<run-id>/` and returns the directory and record.
fn run_to_dir(cfg: &RunConfig) -> Outcome<(PathBuf, RunRecord)> {
    let dir = cfg.output_dir.join(cfg.run_id());
    fs::create_dir_all(&dir)?;
    fs::write(dir.join("manifest.cfg"), cfg.to_manifest())?;
    let mut writer = SeriesWriter::create(&dir.join("series.csv"))?;
    let record = cfg.execute(|row| writer.write_row(row))?;
    Ok((dir, record))
}

fn peak_options(cfg: &RunConfig) -> PeakOptions {
    PeakOptions { tail_fraction: cfg.tail_fraction, ..PeakOptions::default() }
}

pub fn evolve(args: &ConfigArgs) -> Outcome {
    let cfg = load_config(args)?;
    let (dir, record) = run_to_dir(&cfg)?;
    println!("run_dir: {}", dir.display());
    println!("samples: {}", record.len());
    println!("max_gauss_violation: {:.3e}", record.max_gauss_violation());
    if let Ok(s) = summarize(&record, &peak_options(&cfg)) {
        println!("saturation: {:.10} spread: {:.3e} saturated: {}", s.saturation.value, s.saturation.spread, s.saturated);
        if let Some(p) = s.peak {
            println!("peak: t={} value={:.10} prominence={:.10}", p.t_peak, p.value, p.prominence);
        }
    }
    Ok(())
}

pub fn sweep(args: &ConfigArgs, axis: Axis, values: &[String], threads: Option<usize>) -> Outcome {
    let template = load_config(args)?;
    let key = match axis {
        Axis::Gamma => "gamma",
        Axis::X => "x",
        Axis::L => "L",
    };
    let values: Vec<&str> = values.iter().map(|s| s.trim()).filter(|s| !s.is_empty()).collect();
    if values.is_empty() {
        return Err(Failure::Config("sweep needs at least one value".into()));
    }
    let mut points = Vec::with_capacity(values.len());
    for v in values {
        let value: f64 = v.parse().map_err(|_| Failure::Config(format!("bad {key} value '{v}'")))?;
        let mut cfg = template.clone();
        cfg.set(key, v)?;
        cfg.validate()?;
        points.push((value, cfg));
    }

    let threads = threads
        .or_else(|| std::thread::available_parallelism().ok().map(|n| n.get()))
        .unwrap_or(1)
        .max(1);
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(threads)
        .build()
        .map_err(|e| Failure::Config(e.to_string()))?;
    let results: Vec<Outcome<SummaryRow>> = pool.install(|| {
        points
            .par_iter()
            .map(|(value, cfg)| {
                let (dir, record) = run_to_dir(cfg)?;
                let summary = summarize(&record, &peak_options(cfg))?;
                eprintln!("{key}={value}: {}", dir.display());
                Ok(SummaryRow { value: *value, summary })
            })
            .collect()
    });
    let rows = results.into_iter().collect::<Outcome<Vec<_>>>()?;

    fs::create_dir_all(&template.output_dir)?;
    let path = template.output_dir.join(format!("summary_{key}.csv"));
    write_summary(fs::File::create(&path)?, &rows)?;
    println!("summary: {}", path.display());
    Ok(())
}

pub fn fit(summary: &Path, family: &str, column: &str, output: Option<&Path>) -> Outcome {
    let family: FitFamily = family.parse()?;
    let rows = read_summary(fs::File::open(summary)?)?;
    let pick = |r: &SummaryRow| match column {
        "saturation" => Ok(r.summary.saturation.value),
        "final_value" => Ok(r.summary.saturation.final_value),
        "time_average" => Ok(r.summary.time_average),
        other => Err(Failure::Config(format!(
            "unknown column '{other}' (expected saturation, final_value or time_average)"
        ))),
    };
    let inputs = rows.iter().map(|r| Ok((r.value, pick(r)?))).collect::<Outcome<Vec<_>>>()?;
    let result = fit_family(family, &inputs)?;
    let converged = result.converged;
    let report = FitReport { result, inputs };
    match output {
        Some(path) => write_fit_json(fs::File::create(path)?, &report)?,
        None => {
            write_fit_json(std::io::stdout().lock(), &report)?;
            println!();
        }
    }
    if !converged {
        return Err(Failure::Numerical("fit did not converge; best-effort parameters written".into()));
    }
    Ok(())
}

fn max_deviation(a: &RunRecord, b: &RunRecord) -> Outcome<f64> {
    if a.len() != b.len() {
        return Err(Failure::Numerical(format!("record lengths differ: {} vs {}", a.len(), b.len())));
    }
    Ok(a.entropy_mid
        .iter()
        .zip(&b.entropy_mid)
        .map(|(x, y)| (x - y).abs())
        .fold(0.0, f64::max))
}

pub fn benchmark(args: &ConfigArgs, tol: f64, cutoffs: &[f64], cutoff_tol: f64) -> Outcome {
    let mut cfg = load_config(args)?;
    cfg.engine = EngineKind::Mps;
    let fits_exact = 2 * cfg.sites - 1 <= DEFAULT_SPIN_CAP;
    if !fits_exact && cutoffs.is_empty() {
        return Err(Failure::Config(format!(
            "exact comparison needs L <= {}; got L={}",
            DEFAULT_SPIN_CAP.div_ceil(2),
            cfg.sites
        )));
    }
    let mut failures = Vec::new();

    if fits_exact {
        let mps = cfg.execute(|_| Ok(()))?;
        let mut exact_cfg = cfg.clone();
        exact_cfg.engine = EngineKind::ExactTrotter;
        let exact = exact_cfg.execute(|_| Ok(()))?;
        let dev = max_deviation(&mps, &exact)?;
        println!("mps_vs_exact_trotter: max_abs_dev={dev:.3e} tol={tol:.1e}");
        println!("max_gauss_violation: {:.3e}", mps.max_gauss_violation());
        if !(dev < tol) {
            failures.push(format!("MPS deviates from exact by {dev:.3e}"));
        }
    }

    let mut reference: Option<(f64, RunRecord)> = None;
    for &cutoff in cutoffs {
        let mut c = cfg.clone();
        c.cutoff = cutoff;
        c.validate()?;
        let rec = c.execute(|_| Ok(()))?;
        match &reference {
            None => reference = Some((cutoff, rec)),
            Some((c0, r0)) => {
                let dev = max_deviation(r0, &rec)?;
                println!("cutoff {c0:e} vs {cutoff:e}: max_abs_dev={dev:.3e} tol={cutoff_tol:.1e}");
                if !(dev < cutoff_tol) {
                    failures.push(format!("cutoff {cutoff:e} deviates by {dev:.3e}"));
                }
            }
        }
    }

    if failures.is_empty() {
        println!("benchmark: pass");
        Ok(())
    } else {
        Err(Failure::Check(failures.join("; ")))
    }
}

pub fn check_gauss(run_dir: &Path, tol: f64) -> Outcome {
    let cfg = RunConfig::from_file(&run_dir.join("manifest.cfg"))?;
    let recomputed = cfg.execute(|_| Ok(()))?;
    let violation = recomputed.max_gauss_violation();
    println!("recomputed_max_gauss_violation: {violation:.3e}");
    let stored_path = run_dir.join("series.csv");
    let mut failures = Vec::new();
    if stored_path.exists() {
        let stored = read_series_file(&stored_path)?;
        println!("stored_max_gauss_violation: {:.3e}", stored.max_gauss_violation());
        if !(stored.max_gauss_violation() < tol) {
            failures.push(format!("stored series violates Gauss's law by {:.3e}", stored.max_gauss_violation()));
        }
    }
    if !(violation < tol) {
        failures.push(format!("recomputed run violates Gauss's law by {violation:.3e}"));
    }
    if failures.is_empty() {
        println!("gauss: pass");
        Ok(())
    } else {
        Err(Failure::Check(failures.join("; ")))
    }
}
