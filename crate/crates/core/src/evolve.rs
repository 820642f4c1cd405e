//! Second-order Trotter gates and the normalized no-click time evolution.
//!
//! One step of length `dt` is the symmetric sweep
//! `A(dt/2) · B(dt) · A(dt/2)`, where `A` holds the gates of the clusters
//! with even index and `B` those with odd index. Clusters within a layer
//! share no spins, so their gates commute. The state is renormalized once
//! per full step.

use ndarray::Array2;

use crate::exact::{ExactMode, ExactPropagator, StateVector};
use crate::linalg::expm;
use crate::model::{
    cluster_terms, gauss_operators, ChainLayout, ClusterTerm, LocalOperator, ModelParams, ProductState,
    BOUNDARY_FLUX,
};
use crate::mps::{MpsState, Sweep, Truncation};
use crate::{EntropyBase, Error, Result, C64};

/// Number of steps of size `dt` in `total`; `total` must be a multiple of
/// `dt` up to rounding.
pub fn step_count(total: f64, dt: f64) -> Result<usize> {
    if !(dt > 0.0) || !dt.is_finite() {
        return Err(Error::InvalidParameter(format!("dt must be positive, got {dt}")));
    }
    if !(total >= 0.0) || !total.is_finite() {
        return Err(Error::InvalidParameter(format!("total time must be >= 0, got {total}")));
    }
    let n = (total / dt).round();
    if (n * dt - total).abs() > 1e-9 * total.max(1.0) {
        return Err(Error::InvalidParameter(format!("total time {total} is not a multiple of dt {dt}")));
    }
    Ok(n as usize)
}

/// Gate exponentials for one symmetric second-order step.
#[derive(Clone, Debug)]
pub struct TrotterGateSet {
    dt: f64,
    imaginary: bool,
    /// `(leftmost position, e^{-i h_j dt/2})` for even `j`.
    even: Vec<(usize, Array2<C64>)>,
    /// `(leftmost position, e^{-i h_j dt})` for odd `j`.
    odd: Vec<(usize, Array2<C64>)>,
}

impl TrotterGateSet {
    /// Real-time gates `e^{-i h dt}`.
    pub fn build(terms: &[ClusterTerm], dt: f64) -> Result<Self> {
        Self::with_generator(terms, dt, C64::new(0.0, -dt), false)
    }

    /// Imaginary-time gates `e^{-h dτ}`.
    pub fn build_imaginary(terms: &[ClusterTerm], dtau: f64) -> Result<Self> {
        Self::with_generator(terms, dtau, C64::from(-dtau), true)
    }

    fn with_generator(terms: &[ClusterTerm], dt: f64, factor: C64, imaginary: bool) -> Result<Self> {
        if !(dt >= 0.0) || !dt.is_finite() {
            return Err(Error::InvalidParameter(format!("dt must be >= 0, got {dt}")));
        }
        let mut even = Vec::new();
        let mut odd = Vec::new();
        for t in terms {
            if t.j % 2 == 0 {
                even.push((t.start(), expm(&t.h.mapv(|z| z * factor * 0.5).view())?));
            } else {
                odd.push((t.start(), expm(&t.h.mapv(|z| z * factor).view())?));
            }
        }
        Ok(Self { dt, imaginary, even, odd })
    }

    pub fn order(&self) -> usize {
        2
    }

    pub fn dt(&self) -> f64 {
        self.dt
    }

    pub fn is_imaginary(&self) -> bool {
        self.imaginary
    }

    pub fn even_gates(&self) -> &[(usize, Array2<C64>)] {
        &self.even
    }

    pub fn odd_gates(&self) -> &[(usize, Array2<C64>)] {
        &self.odd
    }

    /// Gates of one full step in application order.
    pub fn schedule(&self) -> impl Iterator<Item = (usize, &Array2<C64>)> {
        self.even
            .iter()
            .chain(self.odd.iter())
            .chain(self.even.iter())
            .map(|(p, g)| (*p, g))
    }
}

/// Anything that can be stepped and measured by [`run`].
pub trait Engine {
    fn layout(&self) -> ChainLayout;

    /// Advances one full step and renormalizes; returns the divisor.
    fn step(&mut self) -> Result<f64>;

    fn entropy(&mut self, bond: usize, base: EntropyBase) -> Result<f64>;

    fn expectations(&mut self, ops: &[LocalOperator]) -> Result<Vec<C64>>;

    fn max_bond(&self) -> usize {
        1
    }

    fn take_discarded_weight(&mut self) -> f64 {
        0.0
    }
}

/// MPS plus the gate set that drives it.
#[derive(Clone, Debug)]
pub struct MpsEngine {
    pub state: MpsState,
    gates: TrotterGateSet,
    layout: ChainLayout,
}

impl MpsEngine {
    pub fn new(state: MpsState, params: &ModelParams, dt: f64) -> Result<Self> {
        let gates = TrotterGateSet::build(&cluster_terms(params), dt)?;
        Self::with_gates(state, params.layout(), gates)
    }

    pub fn with_gates(state: MpsState, layout: ChainLayout, gates: TrotterGateSet) -> Result<Self> {
        if state.len() != layout.num_spins() {
            return Err(Error::InvalidParameter(format!(
                "MPS has {} sites but the layout needs {}",
                state.len(),
                layout.num_spins()
            )));
        }
        Ok(Self { state, gates, layout })
    }

    pub fn gates(&self) -> &TrotterGateSet {
        &self.gates
    }

    pub fn into_state(self) -> MpsState {
        self.state
    }

    /// One symmetric sweep without renormalization.
    pub fn propagate(&mut self) -> Result<()> {
        apply_layer(&mut self.state, &self.gates.even)?;
        apply_layer(&mut self.state, &self.gates.odd)?;
        apply_layer(&mut self.state, &self.gates.even)
    }
}

// Gates in a layer commute; sweep away from wherever the center sits.
fn apply_layer(state: &mut MpsState, layer: &[(usize, Array2<C64>)]) -> Result<()> {
    let center = state.center().unwrap_or(0);
    if center <= state.len() / 2 {
        for (pos, gate) in layer {
            state.apply_three_site_gate(gate, *pos, Sweep::LeftToRight)?;
        }
    } else {
        for (pos, gate) in layer.iter().rev() {
            state.apply_three_site_gate(gate, *pos, Sweep::RightToLeft)?;
        }
    }
    Ok(())
}

impl Engine for MpsEngine {
    fn layout(&self) -> ChainLayout {
        self.layout
    }

    fn step(&mut self) -> Result<f64> {
        self.propagate()?;
        self.state.normalize()
    }

    fn entropy(&mut self, bond: usize, base: EntropyBase) -> Result<f64> {
        self.state.bond_entropy(bond, base)
    }

    fn expectations(&mut self, ops: &[LocalOperator]) -> Result<Vec<C64>> {
        self.state.expectations(ops)
    }

    fn max_bond(&self) -> usize {
        self.state.max_bond_dim()
    }

    fn take_discarded_weight(&mut self) -> f64 {
        self.state.take_discarded_weight()
    }
}

/// Dense state vector with its propagator.
#[derive(Clone, Debug)]
pub struct ExactEngine {
    pub state: StateVector,
    propagator: ExactPropagator,
}

impl ExactEngine {
    pub fn new(state: StateVector, params: &ModelParams, dt: f64, mode: ExactMode, cap: usize) -> Result<Self> {
        let propagator = ExactPropagator::new(params, dt, mode, cap)?;
        Ok(Self { state, propagator })
    }
}

impl Engine for ExactEngine {
    fn layout(&self) -> ChainLayout {
        self.state.layout()
    }

    fn step(&mut self) -> Result<f64> {
        self.propagator.step(&mut self.state)
    }

    fn entropy(&mut self, bond: usize, base: EntropyBase) -> Result<f64> {
        crate::exact::entropy_exact(&self.state, bond, base)
    }

    fn expectations(&mut self, ops: &[LocalOperator]) -> Result<Vec<C64>> {
        ops.iter().map(|op| crate::exact::expectation_exact(&self.state, op)).collect()
    }

    fn max_bond(&self) -> usize {
        // Largest possible Schmidt rank of the dense state.
        let n = self.state.num_spins();
        1 << (n / 2).min(n - n / 2)
    }
}

#[derive(Copy, Clone, Debug, PartialEq)]
pub struct RunOptions {
    pub dt: f64,
    pub total_time: f64,
    pub record_every: usize,
    pub base: EntropyBase,
    /// Also record the entropy of every bond.
    pub all_bonds: bool,
}

impl Default for RunOptions {
    fn default() -> Self {
        Self { dt: 0.1, total_time: 100.0, record_every: 1, base: EntropyBase::E, all_bonds: false }
    }
}

/// Observables at one recorded time.
#[derive(Clone, Debug, PartialEq)]
pub struct RecordRow {
    pub t: f64,
    pub entropy_mid: f64,
    /// Product of the normalization divisors since the previous row.
    pub norm_factor: f64,
    pub gauss_min: f64,
    pub gauss_max: f64,
    pub energy: C64,
    /// Bond-dimension high-water mark so far.
    pub max_bond: usize,
    /// Relative discarded weight since the previous row.
    pub discarded_weight: f64,
    pub entropies: Option<Vec<f64>>,
}

/// Time series of one run.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct RunRecord {
    pub times: Vec<f64>,
    pub entropy_mid: Vec<f64>,
    pub entropies_all: Option<Vec<Vec<f64>>>,
    pub norm_factor: Vec<f64>,
    pub gauss_min: Vec<f64>,
    pub gauss_max: Vec<f64>,
    pub energy: Vec<C64>,
    pub max_bond: Vec<usize>,
    pub discarded_weight: Vec<f64>,
}

impl RunRecord {
    pub fn push(&mut self, row: RecordRow) {
        self.times.push(row.t);
        self.entropy_mid.push(row.entropy_mid);
        self.norm_factor.push(row.norm_factor);
        self.gauss_min.push(row.gauss_min);
        self.gauss_max.push(row.gauss_max);
        self.energy.push(row.energy);
        self.max_bond.push(row.max_bond);
        self.discarded_weight.push(row.discarded_weight);
        if let Some(e) = row.entropies {
            self.entropies_all.get_or_insert_with(Vec::new).push(e);
        }
    }

    pub fn len(&self) -> usize {
        self.times.len()
    }

    pub fn is_empty(&self) -> bool {
        self.times.is_empty()
    }

    pub fn row(&self, k: usize) -> RecordRow {
        RecordRow {
            t: self.times[k],
            entropy_mid: self.entropy_mid[k],
            norm_factor: self.norm_factor[k],
            gauss_min: self.gauss_min[k],
            gauss_max: self.gauss_max[k],
            energy: self.energy[k],
            max_bond: self.max_bond[k],
            discarded_weight: self.discarded_weight[k],
            entropies: self.entropies_all.as_ref().map(|e| e[k].clone()),
        }
    }

    /// Largest `|Re⟨G_i⟩ - 1|` over the whole run.
    pub fn max_gauss_violation(&self) -> f64 {
        self.gauss_min
            .iter()
            .chain(&self.gauss_max)
            .map(|g| (g - 1.0).abs())
            .fold(0.0, f64::max)
    }
}

/// Observables measured at every recorded time: all Gauss operators, then
/// all cluster energies.
fn measurement_ops(params: &ModelParams) -> (Vec<LocalOperator>, usize) {
    let layout = params.layout();
    let mut ops: Vec<LocalOperator> =
        gauss_operators(layout, BOUNDARY_FLUX).iter().map(|g| g.as_local()).collect();
    let n_gauss = ops.len();
    ops.extend(cluster_terms(params).into_iter().map(|t| LocalOperator::new(t.start(), t.h)));
    (ops, n_gauss)
}

fn measure<E: Engine>(engine: &mut E, params: &ModelParams, ops: &[LocalOperator], n_gauss: usize, opts: &RunOptions) -> Result<(f64, f64, f64, C64, Option<Vec<f64>>)> {
    let values = engine.expectations(ops)?;
    let (gmin, gmax) = values[..n_gauss]
        .iter()
        .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), g| (lo.min(g.re), hi.max(g.re)));
    let energy: C64 = values[n_gauss..].iter().sum();
    let cut = params.layout().cut_bond();
    let entropies = if opts.all_bonds {
        let bonds = params.layout().num_bonds();
        Some((0..bonds).map(|b| engine.entropy(b, opts.base)).collect::<Result<Vec<_>>>()?)
    } else {
        None
    };
    let mid = match &entropies {
        Some(e) => e[cut],
        None => engine.entropy(cut, opts.base)?,
    };
    Ok((mid, gmin, gmax, energy, entropies))
}

/// Evolves `engine` to `opts.total_time`, handing each recorded row to
/// `on_row` as soon as it is available.
pub fn run_with<E, F>(engine: &mut E, params: &ModelParams, opts: &RunOptions, mut on_row: F) -> Result<RunRecord>
where
    E: Engine,
    F: FnMut(&RecordRow) -> Result<()>,
{
    if engine.layout() != params.layout() {
        return Err(Error::InvalidParameter("engine layout does not match parameters".into()));
    }
    if opts.record_every == 0 {
        return Err(Error::InvalidParameter("record_every must be >= 1".into()));
    }
    let steps = step_count(opts.total_time, opts.dt)?;
    let (ops, n_gauss) = measurement_ops(params);
    let mut record = RunRecord::default();
    let mut high_water = engine.max_bond();
    let mut norm_acc = 1.0;
    let mut discarded_acc = engine.take_discarded_weight();

    let mut emit = |record: &mut RunRecord, row: RecordRow| -> Result<()> {
        on_row(&row)?;
        record.push(row);
        Ok(())
    };

    let (mid, gmin, gmax, energy, entropies) = measure(engine, params, &ops, n_gauss, opts)?;
    emit(
        &mut record,
        RecordRow {
            t: 0.0,
            entropy_mid: mid,
            norm_factor: 1.0,
            gauss_min: gmin,
            gauss_max: gmax,
            energy,
            max_bond: high_water,
            discarded_weight: std::mem::take(&mut discarded_acc),
            entropies,
        },
    )?;

    for k in 1..=steps {
        let factor = engine.step().map_err(|e| e.at_step(k))?;
        norm_acc *= factor;
        discarded_acc += engine.take_discarded_weight();
        high_water = high_water.max(engine.max_bond());
        if k % opts.record_every == 0 || k == steps {
            let (mid, gmin, gmax, energy, entropies) =
                measure(engine, params, &ops, n_gauss, opts).map_err(|e| e.at_step(k))?;
            emit(
                &mut record,
                RecordRow {
                    t: k as f64 * opts.dt,
                    entropy_mid: mid,
                    norm_factor: std::mem::replace(&mut norm_acc, 1.0),
                    gauss_min: gmin,
                    gauss_max: gmax,
                    energy,
                    max_bond: high_water,
                    discarded_weight: std::mem::take(&mut discarded_acc),
                    entropies,
                },
            )?;
        }
    }
    Ok(record)
}

pub fn run<E: Engine>(engine: &mut E, params: &ModelParams, opts: &RunOptions) -> Result<RunRecord> {
    run_with(engine, params, opts, |_| Ok(()))
}

/// Runs the MPS engine from `initial` (which must be normalized).
pub fn run_mps(initial: MpsState, params: &ModelParams, opts: &RunOptions) -> Result<(RunRecord, MpsState)> {
    let mut engine = MpsEngine::new(initial, params, opts.dt)?;
    let record = run(&mut engine, params, opts)?;
    Ok((record, engine.into_state()))
}

#[derive(Copy, Clone, Debug, PartialEq)]
pub struct ImaginaryTimeOptions {
    pub dtau: f64,
    /// Stop once `|ΔE| / dτ` falls below this.
    pub tol: f64,
    pub max_steps: usize,
}

impl Default for ImaginaryTimeOptions {
    fn default() -> Self {
        Self { dtau: 0.05, tol: 1e-8, max_steps: 20_000 }
    }
}

#[derive(Clone, Debug)]
pub struct GroundState {
    pub state: MpsState,
    /// Energy after each imaginary-time step, starting with the initial one.
    pub energies: Vec<f64>,
}

impl GroundState {
    pub fn energy(&self) -> f64 {
        *self.energies.last().expect("at least the initial energy")
    }
}

/// Cools `initial` with `e^{-H dτ}` Trotter sweeps until the energy
/// settles. Requires an unmonitored Hamiltonian.
pub fn ground_state_imaginary_time(
    params: &ModelParams,
    initial: &ProductState,
    trunc: Truncation,
    opts: &ImaginaryTimeOptions,
) -> Result<GroundState> {
    if params.gamma != 0.0 {
        return Err(Error::InvalidParameter("imaginary-time ground state needs gamma = 0".into()));
    }
    if !(opts.dtau > 0.0) {
        return Err(Error::InvalidParameter(format!("dtau must be positive, got {}", opts.dtau)));
    }
    let terms = cluster_terms(params);
    let energy_ops: Vec<LocalOperator> = terms.iter().map(|t| LocalOperator::new(t.start(), t.h.clone())).collect();
    let gates = TrotterGateSet::build_imaginary(&terms, opts.dtau)?;
    let mut engine = MpsEngine::with_gates(MpsState::from_product(initial, trunc), params.layout(), gates)?;
    let energy_of = |engine: &mut MpsEngine| -> Result<f64> {
        Ok(engine.expectations(&energy_ops)?.iter().sum::<C64>().re)
    };
    let mut energies = vec![energy_of(&mut engine)?];
    for k in 1..=opts.max_steps {
        engine.step().map_err(|e| e.at_step(k))?;
        let e = energy_of(&mut engine)?;
        let prev = *energies.last().expect("nonempty");
        energies.push(e);
        if (e - prev).abs() / opts.dtau < opts.tol {
            return Ok(GroundState { state: engine.into_state(), energies });
        }
    }
    Err(Error::NotConverged(opts.max_steps))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::linalg::{dagger, frobenius_norm, identity};
    use crate::model::{strong_coupling_vacuum, Measurement};

    #[test]
    fn zero_step_gives_identity_gates() {
        let p = ModelParams::new(6, 0.5, 1.0, 0.7, Measurement::PairDensity).unwrap();
        let g = TrotterGateSet::build(&cluster_terms(&p), 0.0).unwrap();
        assert_eq!(g.order(), 2);
        for (_, gate) in g.schedule() {
            assert!(frobenius_norm(&(gate - &identity(8)).view()) < 1e-15);
        }
    }

    #[test]
    fn unitary_gates_without_measurement() {
        let p = ModelParams::unitary(8, 0.5).unwrap();
        let g = TrotterGateSet::build(&cluster_terms(&p), 0.1).unwrap();
        assert_eq!(g.even_gates().len(), 4);
        assert_eq!(g.odd_gates().len(), 3);
        for (_, gate) in g.schedule() {
            let err = frobenius_norm(&(dagger(&gate.view()).dot(gate) - identity(8)).view());
            assert!(err < 1e-12);
        }
    }

    #[test]
    fn gates_approach_identity_linearly() {
        let p = ModelParams::new(4, 1.5, 1.0, 2.0, Measurement::HoppingFull).unwrap();
        let terms = cluster_terms(&p);
        let hmax = terms.iter().map(|t| frobenius_norm(&t.h.view())).fold(0.0, f64::max);
        for dt in [1e-2, 1e-3, 1e-4] {
            let g = TrotterGateSet::build(&terms, dt).unwrap();
            for (_, gate) in g.schedule() {
                assert!(frobenius_norm(&(gate - &identity(8)).view()) <= 1.1 * hmax * dt);
            }
        }
    }

    #[test]
    fn step_count_requires_commensurate_times() {
        assert_eq!(step_count(100.0, 0.1).unwrap(), 1000);
        assert_eq!(step_count(0.0, 0.1).unwrap(), 0);
        assert!(step_count(1.05, 0.1).is_err());
        assert!(step_count(1.0, 0.0).is_err());
    }

    #[test]
    fn imaginary_time_requires_unmonitored_model() {
        let p = ModelParams::new(4, 0.5, 1.0, 0.2, Measurement::ElectricFlux).unwrap();
        let vac = strong_coupling_vacuum(p.layout());
        assert!(ground_state_imaginary_time(&p, &vac, Truncation::default(), &Default::default()).is_err());
    }

    #[test]
    fn run_records_every_requested_step() {
        let p = ModelParams::new(4, 0.5, 1.0, 0.4, Measurement::ElectricFlux).unwrap();
        let mps = MpsState::from_product(&strong_coupling_vacuum(p.layout()), Truncation::default());
        let opts = RunOptions { dt: 0.1, total_time: 1.0, record_every: 3, ..Default::default() };
        let (rec, _) = run_mps(mps, &p, &opts).unwrap();
        let t: Vec<f64> = rec.times.iter().map(|t| (t * 10.0).round() / 10.0).collect();
        assert_eq!(t, vec![0.0, 0.3, 0.6, 0.9, 1.0]);
        assert!(rec.entropy_mid.iter().all(|&s| s >= 0.0));
        assert!(rec.max_gauss_violation() < 1e-10);
    }
}
