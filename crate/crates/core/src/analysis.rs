//! Post-processing of entropy time series: windowed averages, late-time
//! saturation, early-time peaks and least-squares fits of saturation values
//! against the measurement rate.

use ndarray::{Array1, Array2};
use ndarray_linalg::{Inverse, LeastSquaresSvd};
use serde::{Deserialize, Serialize};

use crate::evolve::RunRecord;
use crate::{Error, Result};

/// Default fraction of samples forming the tail window.
pub const DEFAULT_TAIL_FRACTION: f64 = 0.2;
/// Tail spread relative to the tail mean below which a series counts as saturated.
pub const SATURATION_THRESHOLD: f64 = 0.05;
/// Default early window as a fraction of the run length.
pub const DEFAULT_EARLY_FRACTION: f64 = 0.1;
/// Default relative excess of an early maximum over the tail mean.
pub const DEFAULT_PEAK_THRESHOLD: f64 = 0.1;

fn check_series(times: &[f64], values: &[f64]) -> Result<()> {
    if times.len() != values.len() {
        return Err(Error::InvalidParameter(format!(
            "series length mismatch: {} times, {} values",
            times.len(),
            values.len()
        )));
    }
    if times.is_empty() {
        return Err(Error::InvalidParameter("empty series".into()));
    }
    if times.windows(2).any(|w| !(w[1] > w[0])) {
        return Err(Error::InvalidParameter("times must be strictly increasing".into()));
    }
    Ok(())
}

fn interpolate(times: &[f64], values: &[f64], t: f64) -> f64 {
    let k = times.partition_point(|&s| s <= t);
    if k == 0 {
        return values[0];
    }
    if k == times.len() {
        return values[k - 1];
    }
    let (t0, t1) = (times[k - 1], times[k]);
    let w = (t - t0) / (t1 - t0);
    values[k - 1] * (1.0 - w) + values[k] * w
}

/// Trapezoidal mean of `values` over `window`, interpolating linearly at
/// window edges that fall between samples.
pub fn time_average_series(times: &[f64], values: &[f64], window: (f64, f64)) -> Result<f64> {
    check_series(times, values)?;
    let (a, b) = window;
    let (first, last) = (times[0], times[times.len() - 1]);
    let slack = 1e-9 * (last - first).abs().max(1.0);
    if !(a <= b) || a < first - slack || b > last + slack {
        return Err(Error::InvalidParameter(format!(
            "window [{a}, {b}] not within record [{first}, {last}]"
        )));
    }
    let (a, b) = (a.max(first), b.min(last));
    if b - a <= 0.0 {
        return Ok(interpolate(times, values, a));
    }
    let mut pts = vec![(a, interpolate(times, values, a))];
    pts.extend(
        times
            .iter()
            .zip(values)
            .filter(|(t, _)| **t > a && **t < b)
            .map(|(t, v)| (*t, *v)),
    );
    pts.push((b, interpolate(times, values, b)));
    let area: f64 = pts.windows(2).map(|w| 0.5 * (w[0].1 + w[1].1) * (w[1].0 - w[0].0)).sum();
    Ok(area / (b - a))
}

/// Trapezoidal mean of the mid-chain entropy over `window`.
pub fn time_average(record: &RunRecord, window: (f64, f64)) -> Result<f64> {
    time_average_series(&record.times, &record.entropy_mid, window)
}

/// Late-time statistics of a series.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Saturation {
    /// Mean over the tail window.
    pub value: f64,
    /// Population standard deviation over the tail window.
    pub spread: f64,
    /// Last sample of the series.
    pub final_value: f64,
    pub tail_samples: usize,
}

impl Saturation {
    pub fn relative_spread(&self) -> f64 {
        if self.spread == 0.0 {
            0.0
        } else {
            self.spread / self.value.abs()
        }
    }

    pub fn is_saturated(&self) -> bool {
        self.relative_spread() < SATURATION_THRESHOLD
    }
}

/// Number of samples in the tail window of a series of length `n`.
pub fn tail_len(n: usize, tail_fraction: f64) -> Result<usize> {
    if !(tail_fraction > 0.0 && tail_fraction <= 1.0) {
        return Err(Error::InvalidParameter(format!("tail fraction {tail_fraction} not in (0, 1]")));
    }
    let needed = (5.0 / tail_fraction).ceil() as usize;
    if n < needed {
        return Err(Error::InvalidParameter(format!(
            "{n} samples; tail fraction {tail_fraction} needs at least {needed}"
        )));
    }
    Ok(((tail_fraction * n as f64).ceil() as usize).clamp(1, n))
}

/// Mean and spread over the final `tail_fraction` of the samples.
pub fn saturation_series(values: &[f64], tail_fraction: f64) -> Result<Saturation> {
    let k = tail_len(values.len(), tail_fraction)?;
    let tail = &values[values.len() - k..];
    let mean = tail.iter().sum::<f64>() / k as f64;
    let var = tail.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / k as f64;
    Ok(Saturation {
        value: mean,
        spread: var.sqrt(),
        final_value: values[values.len() - 1],
        tail_samples: k,
    })
}

pub fn saturation_value(record: &RunRecord, tail_fraction: f64) -> Result<Saturation> {
    saturation_series(&record.entropy_mid, tail_fraction)
}

/// An early-time maximum standing out above the late-time plateau.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Peak {
    pub t_peak: f64,
    pub value: f64,
    /// Height above the tail mean.
    pub prominence: f64,
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct PeakOptions {
    /// Early window is `[t0, t0 + early_fraction·(T − t0)]`.
    pub early_fraction: f64,
    pub threshold: f64,
    pub tail_fraction: f64,
}

impl Default for PeakOptions {
    fn default() -> Self {
        PeakOptions {
            early_fraction: DEFAULT_EARLY_FRACTION,
            threshold: DEFAULT_PEAK_THRESHOLD,
            tail_fraction: DEFAULT_TAIL_FRACTION,
        }
    }
}

/// Global maximum of the early window, reported when the series settles onto
/// a plateau (saturated tail) and the maximum exceeds that plateau by more
/// than `threshold` relative to it. A series that never saturates has no
/// plateau to stand out from and yields `None`.
pub fn detect_peak_series(times: &[f64], values: &[f64], opts: &PeakOptions) -> Result<Option<Peak>> {
    check_series(times, values)?;
    let sat = saturation_series(values, opts.tail_fraction)?;
    if !sat.is_saturated() {
        return Ok(None);
    }
    let (t0, t1) = (times[0], times[times.len() - 1]);
    let end = t0 + opts.early_fraction * (t1 - t0);
    let best = times
        .iter()
        .zip(values)
        .filter(|(t, _)| **t <= end)
        .fold(None::<(f64, f64)>, |acc, (t, v)| match acc {
            Some((_, bv)) if bv >= *v => acc,
            _ => Some((*t, *v)),
        });
    Ok(best.and_then(|(t, v)| {
        let prominence = v - sat.value;
        (prominence > opts.threshold * sat.value.abs() && prominence > 0.0).then_some(Peak {
            t_peak: t,
            value: v,
            prominence,
        })
    }))
}

pub fn detect_peak(record: &RunRecord, opts: &PeakOptions) -> Result<Option<Peak>> {
    detect_peak_series(&record.times, &record.entropy_mid, opts)
}

/// Everything the sweep summary reports about one run.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct SeriesSummary {
    pub time_average: f64,
    pub saturation: Saturation,
    pub saturated: bool,
    pub peak: Option<Peak>,
}

pub fn summarize_series(times: &[f64], values: &[f64], opts: &PeakOptions) -> Result<SeriesSummary> {
    check_series(times, values)?;
    let window = (times[0], times[times.len() - 1]);
    let saturation = saturation_series(values, opts.tail_fraction)?;
    Ok(SeriesSummary {
        time_average: time_average_series(times, values, window)?,
        saturated: saturation.is_saturated(),
        saturation,
        peak: detect_peak_series(times, values, opts)?,
    })
}

pub fn summarize(record: &RunRecord, opts: &PeakOptions) -> Result<SeriesSummary> {
    summarize_series(&record.times, &record.entropy_mid, opts)
}

/// Model families for saturation value versus measurement rate.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FitFamily {
    /// `a·e^{−bγ} + c·γ + d`
    ExpLinear,
    /// `a·e^{−bγ} + c`
    ExpConst,
    /// `a·γ² + b·γ + c`
    Quadratic,
}

impl FitFamily {
    pub const ALL: [FitFamily; 3] = [FitFamily::ExpLinear, FitFamily::ExpConst, FitFamily::Quadratic];

    pub fn name(self) -> &'static str {
        match self {
            FitFamily::ExpLinear => "exp_linear",
            FitFamily::ExpConst => "exp_const",
            FitFamily::Quadratic => "quadratic",
        }
    }

    pub fn arity(self) -> usize {
        match self {
            FitFamily::ExpLinear => 4,
            FitFamily::ExpConst | FitFamily::Quadratic => 3,
        }
    }

    pub fn param_names(self) -> &'static [&'static str] {
        match self {
            FitFamily::ExpLinear => &["a", "b", "c", "d"],
            _ => &["a", "b", "c"],
        }
    }

    pub fn eval(self, p: &[f64], g: f64) -> f64 {
        match self {
            FitFamily::ExpLinear => p[0] * (-p[1] * g).exp() + p[2] * g + p[3],
            FitFamily::ExpConst => p[0] * (-p[1] * g).exp() + p[2],
            FitFamily::Quadratic => p[0] * g * g + p[1] * g + p[2],
        }
    }

    /// Partial derivatives of the model with respect to each parameter.
    pub fn gradient(self, p: &[f64], g: f64) -> Vec<f64> {
        match self {
            FitFamily::ExpLinear => {
                let e = (-p[1] * g).exp();
                vec![e, -p[0] * g * e, g, 1.0]
            }
            FitFamily::ExpConst => {
                let e = (-p[1] * g).exp();
                vec![e, -p[0] * g * e, 1.0]
            }
            FitFamily::Quadratic => vec![g * g, g, 1.0],
        }
    }

    /// Least-squares values of the linear parameters with the decay rate
    /// held at `b`. Returns the full parameter vector.
    fn seed_linear(self, data: &[(f64, f64)], b: f64) -> Result<Vec<f64>> {
        let cols: Vec<Box<dyn Fn(f64) -> f64>> = match self {
            FitFamily::ExpLinear => vec![Box::new(move |g| (-b * g).exp()), Box::new(|g| g), Box::new(|_| 1.0)],
            FitFamily::ExpConst => vec![Box::new(move |g| (-b * g).exp()), Box::new(|_| 1.0)],
            FitFamily::Quadratic => vec![Box::new(|g| g * g), Box::new(|g| g), Box::new(|_| 1.0)],
        };
        let a = Array2::from_shape_fn((data.len(), cols.len()), |(i, k)| cols[k](data[i].0));
        let y = Array1::from_iter(data.iter().map(|d| d.1));
        let sol = a.least_squares(&y)?.solution;
        Ok(match self {
            FitFamily::ExpLinear => vec![sol[0], b, sol[1], sol[2]],
            FitFamily::ExpConst => vec![sol[0], b, sol[1]],
            FitFamily::Quadratic => sol.to_vec(),
        })
    }
}

impl std::str::FromStr for FitFamily {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        FitFamily::ALL
            .into_iter()
            .find(|f| f.name() == s)
            .ok_or_else(|| Error::Config(format!("unknown fit family '{s}'")))
    }
}

impl std::fmt::Display for FitFamily {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.name())
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct FitOptions {
    pub multistart: usize,
    pub max_iterations: usize,
    /// Bound on `‖Jᵀr‖ / (‖J‖_F·‖y‖)` for convergence.
    pub gradient_tol: f64,
    /// Relative step size treated as stagnation.
    pub step_tol: f64,
}

impl Default for FitOptions {
    fn default() -> Self {
        FitOptions {
            multistart: 8,
            max_iterations: 500,
            gradient_tol: 1e-10,
            step_tol: 1e-14,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FitResult {
    pub family: FitFamily,
    pub params: Vec<f64>,
    pub std_errors: Vec<f64>,
    pub residual_norm: f64,
    pub gradient_norm: f64,
    pub converged: bool,
    pub iterations: usize,
    /// Residual norm after each accepted iteration, starting at the seed.
    pub residual_history: Vec<f64>,
}

fn residuals(family: FitFamily, p: &[f64], data: &[(f64, f64)]) -> Array1<f64> {
    Array1::from_iter(data.iter().map(|&(g, y)| family.eval(p, g) - y))
}

fn jacobian(family: FitFamily, p: &[f64], data: &[(f64, f64)]) -> Array2<f64> {
    let mut j = Array2::zeros((data.len(), family.arity()));
    for (i, &(g, _)) in data.iter().enumerate() {
        for (k, d) in family.gradient(p, g).into_iter().enumerate() {
            j[[i, k]] = d;
        }
    }
    j
}

fn scaled_gradient(j: &Array2<f64>, r: &Array1<f64>, ynorm: f64) -> f64 {
    let jn = j.iter().map(|v| v * v).sum::<f64>().sqrt();
    if jn == 0.0 {
        return 0.0;
    }
    let g = j.t().dot(r);
    g.dot(&g).sqrt() / (jn * ynorm)
}

fn solve_spd(a: &Array2<f64>, b: &Array1<f64>) -> Option<Array1<f64>> {
    use ndarray_linalg::Solve;
    a.solve(b).ok().filter(|x| x.iter().all(|v| v.is_finite()))
}

fn levenberg_marquardt(family: FitFamily, data: &[(f64, f64)], seed: Vec<f64>, opts: &FitOptions) -> FitResult {
    let n = family.arity();
    let ynorm = data.iter().map(|d| d.1 * d.1).sum::<f64>().sqrt().max(f64::MIN_POSITIVE);
    let mut p = seed;
    let mut r = residuals(family, &p, data);
    let mut cost = r.dot(&r);
    let mut history = vec![cost.sqrt()];
    let mut lambda = 1e-3;
    let mut iterations = 0;
    let mut converged = false;
    let mut gnorm = f64::INFINITY;

    while iterations < opts.max_iterations {
        let j = jacobian(family, &p, data);
        gnorm = scaled_gradient(&j, &r, ynorm);
        if gnorm < opts.gradient_tol {
            converged = true;
            break;
        }
        let jtj = j.t().dot(&j);
        let g = j.t().dot(&r);
        let mut accepted = false;
        while lambda < 1e16 {
            let mut a = jtj.clone();
            for k in 0..n {
                a[[k, k]] += lambda * jtj[[k, k]].max(1e-300);
            }
            let Some(delta) = solve_spd(&a, &g.mapv(|v| -v)) else {
                lambda *= 10.0;
                continue;
            };
            let trial: Vec<f64> = p.iter().zip(delta.iter()).map(|(a, d)| a + d).collect();
            let tr = residuals(family, &trial, data);
            let tc = tr.dot(&tr);
            if tc.is_finite() && tc <= cost {
                let step = delta.dot(&delta).sqrt();
                let scale = p.iter().map(|v| v * v).sum::<f64>().sqrt().max(1e-300);
                p = trial;
                r = tr;
                let stalled = cost - tc <= f64::EPSILON * cost && step <= opts.step_tol * scale.max(1.0);
                cost = tc;
                history.push(cost.sqrt());
                lambda = (lambda / 10.0).max(1e-12);
                accepted = true;
                if stalled {
                    lambda = 1e16;
                }
                break;
            }
            lambda *= 10.0;
        }
        iterations += 1;
        if !accepted || lambda >= 1e16 {
            let j = jacobian(family, &p, data);
            gnorm = scaled_gradient(&j, &r, ynorm);
            converged = gnorm < opts.gradient_tol;
            break;
        }
    }

    let j = jacobian(family, &p, data);
    let dof = data.len().saturating_sub(n);
    let std_errors = match (dof, j.t().dot(&j).inv()) {
        (d, Ok(cov)) if d > 0 => {
            let s2 = cost / d as f64;
            (0..n).map(|k| (s2 * cov[[k, k]]).max(0.0).sqrt()).collect()
        }
        _ => vec![f64::NAN; n],
    };
    FitResult {
        family,
        params: p,
        std_errors,
        residual_norm: cost.sqrt(),
        gradient_norm: gnorm,
        converged,
        iterations,
        residual_history: history,
    }
}

/// Least-squares fit of `family` to `(γ, S)` pairs.
///
/// Exponential families start from `multistart` decay rates spread
/// logarithmically over `[0.01, 10]`, each with the linear parameters solved
/// exactly; the quadratic family starts from its linear least-squares
/// solution. The start with the smallest final residual is returned.
pub fn fit_with(family: FitFamily, data: &[(f64, f64)], opts: &FitOptions) -> Result<FitResult> {
    if data.len() < family.arity() + 1 {
        return Err(Error::InvalidParameter(format!(
            "{} data points; {family} needs at least {}",
            data.len(),
            family.arity() + 1
        )));
    }
    if data.iter().any(|(g, s)| !g.is_finite() || !s.is_finite()) {
        return Err(Error::InvalidParameter("non-finite data point".into()));
    }
    let seeds: Vec<Vec<f64>> = match family {
        FitFamily::Quadratic => vec![family.seed_linear(data, 0.0)?],
        _ => {
            let m = opts.multistart.max(1);
            (0..m)
                .map(|k| {
                    let f = if m == 1 { 0.5 } else { k as f64 / (m - 1) as f64 };
                    family.seed_linear(data, 10f64.powf(-2.0 + 3.0 * f))
                })
                .collect::<Result<_>>()?
        }
    };
    let best = seeds
        .into_iter()
        .map(|s| levenberg_marquardt(family, data, s, opts))
        .min_by(|a, b| {
            (!a.converged, a.residual_norm)
                .partial_cmp(&(!b.converged, b.residual_norm))
                .unwrap_or(std::cmp::Ordering::Equal)
        })
        .expect("at least one start");
    Ok(best)
}

pub fn fit(family: FitFamily, data: &[(f64, f64)]) -> Result<FitResult> {
    fit_with(family, data, &FitOptions::default())
}
