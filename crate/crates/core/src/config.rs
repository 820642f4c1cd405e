//! Run configuration in a flat `key = value` text format.
//!
//! Blank lines and lines starting with `#` are ignored. Every key is
//! optional and falls back to its default; unknown or repeated keys are
//! errors. [`RunConfig::to_manifest`] writes every key back out, so a
//! manifest parsed again yields an identical configuration.

use std::fmt::Write as _;
use std::path::PathBuf;
use std::str::FromStr;

use crate::evolve::{
    ground_state_imaginary_time, run_with, ExactEngine, ImaginaryTimeOptions, MpsEngine, RecordRow, RunOptions,
    RunRecord,
};
use crate::exact::{ExactMode, StateVector, DEFAULT_SPIN_CAP};
use crate::model::{strong_coupling_vacuum, Measurement, ModelParams};
use crate::mps::{MpsState, Truncation};
use crate::{EntropyBase, Error, Result};

#[derive(Copy, Clone, Debug, PartialEq, Eq, Default)]
pub enum InitialState {
    #[default]
    Vacuum,
    /// Ground state of the unmonitored Hamiltonian.
    Ground,
}

#[derive(Copy, Clone, Debug, PartialEq, Eq, Default)]
pub enum EngineKind {
    #[default]
    Mps,
    ExactKrylov,
    ExactTrotter,
}

macro_rules! named_enum {
    ($ty:ident { $($variant:ident => $name:literal),+ $(,)? }) => {
        impl $ty {
            pub fn name(self) -> &'static str {
                match self { $($ty::$variant => $name),+ }
            }
        }

        impl FromStr for $ty {
            type Err = Error;

            fn from_str(s: &str) -> Result<Self> {
                match s {
                    $($name => Ok($ty::$variant),)+
                    other => Err(Error::Config(format!(
                        concat!("unknown ", stringify!($ty), " '{}' (expected one of: {})"),
                        other,
                        [$($name),+].join(", ")
                    ))),
                }
            }
        }

        impl std::fmt::Display for $ty {
            fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
                f.write_str(self.name())
            }
        }
    };
}

named_enum!(InitialState { Vacuum => "vacuum", Ground => "ground" });
named_enum!(EngineKind { Mps => "mps", ExactKrylov => "exact_krylov", ExactTrotter => "exact_trotter" });

#[derive(Clone, Debug, PartialEq)]
pub struct RunConfig {
    pub sites: usize,
    pub x: f64,
    pub m_over_g: f64,
    pub gamma: f64,
    pub measurement: Measurement,
    pub dt: f64,
    pub total_time: f64,
    pub maxdim: usize,
    pub cutoff: f64,
    pub initial_state: InitialState,
    pub entropy_base: EntropyBase,
    pub record_every: usize,
    pub tail_fraction: f64,
    pub output_dir: PathBuf,
    pub engine: EngineKind,
    /// Imaginary-time step used to prepare the ground state.
    pub ground_dtau: f64,
    pub ground_tol: f64,
}

impl Default for RunConfig {
    fn default() -> Self {
        let trunc = Truncation::default();
        let ground = ImaginaryTimeOptions::default();
        RunConfig {
            sites: 16,
            x: 0.5,
            m_over_g: 1.0,
            gamma: 0.0,
            measurement: Measurement::None,
            dt: 0.1,
            total_time: 100.0,
            maxdim: trunc.max_bond,
            cutoff: trunc.cutoff,
            initial_state: InitialState::Vacuum,
            entropy_base: EntropyBase::E,
            record_every: 1,
            tail_fraction: crate::analysis::DEFAULT_TAIL_FRACTION,
            output_dir: PathBuf::from("runs"),
            engine: EngineKind::Mps,
            ground_dtau: ground.dtau,
            ground_tol: ground.tol,
        }
    }
}

pub const KEYS: [&str; 17] = [
    "L",
    "x",
    "m_over_g",
    "gamma",
    "measurement",
    "dt",
    "T",
    "maxdim",
    "cutoff",
    "initial_state",
    "entropy_base",
    "record_every",
    "tail_fraction",
    "output_dir",
    "engine",
    "ground_dtau",
    "ground_tol",
];

fn parse_value<T: FromStr>(key: &str, value: &str) -> Result<T>
where
    T::Err: std::fmt::Display,
{
    value
        .parse()
        .map_err(|e| Error::Config(format!("{key}: cannot parse '{value}': {e}")))
}

impl RunConfig {
    /// Parses and validates configuration text.
    pub fn parse(text: &str) -> Result<Self> {
        let mut cfg = RunConfig::default();
        let mut seen = std::collections::HashSet::new();
        for (lineno, raw) in text.lines().enumerate() {
            let line = raw.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let (key, value) = line
                .split_once('=')
                .ok_or_else(|| Error::Config(format!("line {}: expected key = value", lineno + 1)))?;
            let (key, value) = (key.trim(), value.trim());
            if !seen.insert(key.to_string()) {
                return Err(Error::Config(format!("line {}: duplicate key '{key}'", lineno + 1)));
            }
            cfg.set(key, value)?;
        }
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn from_file(path: &std::path::Path) -> Result<Self> {
        Self::parse(&std::fs::read_to_string(path)?)
    }

    /// Sets one key from its textual value without validating the whole config.
    pub fn set(&mut self, key: &str, value: &str) -> Result<()> {
        match key {
            "L" => self.sites = parse_value(key, value)?,
            "x" => self.x = parse_value(key, value)?,
            "m_over_g" => self.m_over_g = parse_value(key, value)?,
            "gamma" => self.gamma = parse_value(key, value)?,
            "measurement" => self.measurement = parse_value(key, value)?,
            "dt" => self.dt = parse_value(key, value)?,
            "T" => self.total_time = parse_value(key, value)?,
            "maxdim" => self.maxdim = parse_value(key, value)?,
            "cutoff" => self.cutoff = parse_value(key, value)?,
            "initial_state" => self.initial_state = parse_value(key, value)?,
            "entropy_base" => self.entropy_base = parse_value(key, value)?,
            "record_every" => self.record_every = parse_value(key, value)?,
            "tail_fraction" => self.tail_fraction = parse_value(key, value)?,
            "output_dir" => self.output_dir = PathBuf::from(value),
            "engine" => self.engine = parse_value(key, value)?,
            "ground_dtau" => self.ground_dtau = parse_value(key, value)?,
            "ground_tol" => self.ground_tol = parse_value(key, value)?,
            other => return Err(Error::Config(format!("unknown key '{other}'"))),
        }
        Ok(())
    }

    pub fn get(&self, key: &str) -> Option<String> {
        Some(match key {
            "L" => self.sites.to_string(),
            "x" => self.x.to_string(),
            "m_over_g" => self.m_over_g.to_string(),
            "gamma" => self.gamma.to_string(),
            "measurement" => self.measurement.to_string(),
            "dt" => self.dt.to_string(),
            "T" => self.total_time.to_string(),
            "maxdim" => self.maxdim.to_string(),
            "cutoff" => self.cutoff.to_string(),
            "initial_state" => self.initial_state.to_string(),
            "entropy_base" => self.entropy_base.to_string(),
            "record_every" => self.record_every.to_string(),
            "tail_fraction" => self.tail_fraction.to_string(),
            "output_dir" => self.output_dir.display().to_string(),
            "engine" => self.engine.to_string(),
            "ground_dtau" => self.ground_dtau.to_string(),
            "ground_tol" => self.ground_tol.to_string(),
            _ => return None,
        })
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |msg: String| Err(Error::Config(msg));
        self.params().map_err(|e| Error::Config(e.to_string()))?;
        if !(self.dt > 0.0 && self.dt.is_finite()) {
            return bad(format!("dt must be positive, got {}", self.dt));
        }
        if !(self.total_time >= 0.0 && self.total_time.is_finite()) {
            return bad(format!("T must be non-negative, got {}", self.total_time));
        }
        if self.maxdim == 0 {
            return bad("maxdim must be >= 1".into());
        }
        if !(self.cutoff >= 0.0 && self.cutoff < 1.0) {
            return bad(format!("cutoff must lie in [0, 1), got {}", self.cutoff));
        }
        if self.record_every == 0 {
            return bad("record_every must be >= 1".into());
        }
        if !(self.tail_fraction > 0.0 && self.tail_fraction <= 1.0) {
            return bad(format!("tail_fraction must lie in (0, 1], got {}", self.tail_fraction));
        }
        if !(self.ground_dtau > 0.0 && self.ground_tol > 0.0) {
            return bad("ground_dtau and ground_tol must be positive".into());
        }
        if self.engine != EngineKind::Mps {
            let spins = 2 * self.sites - 1;
            if spins > DEFAULT_SPIN_CAP {
                return bad(format!(
                    "engine {} supports at most {DEFAULT_SPIN_CAP} spins; L={} needs {spins}",
                    self.engine, self.sites
                ));
            }
        }
        Ok(())
    }

    pub fn params(&self) -> Result<ModelParams> {
        ModelParams::new(self.sites, self.x, self.m_over_g, self.gamma, self.measurement)
    }

    pub fn truncation(&self) -> Truncation {
        Truncation { max_bond: self.maxdim, cutoff: self.cutoff }
    }

    pub fn run_options(&self) -> RunOptions {
        RunOptions {
            dt: self.dt,
            total_time: self.total_time,
            record_every: self.record_every,
            base: self.entropy_base,
            all_bonds: false,
        }
    }

    /// Every key with its current value, one per line, in [`KEYS`] order.
    pub fn to_manifest(&self) -> String {
        let mut out = String::new();
        for key in KEYS {
            let _ = writeln!(out, "{key} = {}", self.get(key).expect("known key"));
        }
        out
    }

    /// Short directory-safe identifier, unique per manifest content.
    pub fn run_id(&self) -> String {
        let hash = self
            .to_manifest()
            .bytes()
            .fold(0xcbf2_9ce4_8422_2325u64, |h, b| (h ^ b as u64).wrapping_mul(0x0100_0000_01b3));
        format!(
            "{}_L{}_x{}_g{}_{}_{:08x}",
            self.measurement,
            self.sites,
            self.x,
            self.gamma,
            self.engine,
            hash as u32
        )
    }

    /// Initial MPS, preparing the ground state by imaginary time if requested.
    pub fn initial_mps(&self) -> Result<MpsState> {
        let params = self.params()?;
        let vacuum = strong_coupling_vacuum(params.layout());
        match self.initial_state {
            InitialState::Vacuum => Ok(MpsState::from_product(&vacuum, self.truncation())),
            InitialState::Ground => {
                let opts = ImaginaryTimeOptions { dtau: self.ground_dtau, tol: self.ground_tol, ..Default::default() };
                let gs = ground_state_imaginary_time(&params.without_measurement(), &vacuum, self.truncation(), &opts)?;
                Ok(gs.state)
            }
        }
    }

    /// Runs the configured evolution, calling `on_row` for every record as it
    /// is produced.
    pub fn execute<F>(&self, on_row: F) -> Result<RunRecord>
    where
        F: FnMut(&RecordRow) -> Result<()>,
    {
        self.validate()?;
        let params = self.params()?;
        let opts = self.run_options();
        match self.engine {
            EngineKind::Mps => {
                let mut engine = MpsEngine::new(self.initial_mps()?, &params, self.dt)?;
                run_with(&mut engine, &params, &opts, on_row)
            }
            EngineKind::ExactKrylov | EngineKind::ExactTrotter => {
                let mode = if self.engine == EngineKind::ExactKrylov {
                    ExactMode::Krylov
                } else {
                    ExactMode::TrotterGates
                };
                let state = match self.initial_state {
                    InitialState::Vacuum => {
                        StateVector::from_product(&strong_coupling_vacuum(params.layout()), DEFAULT_SPIN_CAP)?
                    }
                    InitialState::Ground => {
                        StateVector::from_amplitudes(params.layout(), self.initial_mps()?.to_state_vector())?
                    }
                };
                let mut engine = ExactEngine::new(state, &params, self.dt, mode, DEFAULT_SPIN_CAP)?;
                run_with(&mut engine, &params, &opts, on_row)
            }
        }
    }
}
