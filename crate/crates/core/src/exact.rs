//! Dense state-vector oracle for small lattices.
//!
//! The Hamiltonian here is assembled term by term from the full sum
//! ([`hamiltonian_terms`]) into a sparse matrix, independent of the cluster
//! decomposition the gate engine uses. Time stepping is either a Krylov
//! (Arnoldi) action of `e^{-i H dt}` or the same Trotter gate sequence as the
//! MPS engine applied to the dense vector.

use ndarray::{Array1, Array2, Array3};
use ndarray_linalg::{EigValsh, UPLO};
use num_complex::ComplexFloat;

use crate::evolve::TrotterGateSet;
use crate::linalg::expm;
use crate::model::{hamiltonian_terms, ChainLayout, LocalOperator, ModelParams, Pauli, ProductState};
use crate::{EntropyBase, Error, Result, C64};

/// Largest chain handled by default (L = 8, 2^15 amplitudes).
pub const DEFAULT_SPIN_CAP: usize = 16;

fn check_cap(spins: usize, cap: usize) -> Result<()> {
    if spins > cap {
        Err(Error::CapExceeded { spins, cap })
    } else {
        Ok(())
    }
}

/// Amplitudes over `2^N` basis states; chain position 0 is the most
/// significant bit and spin up is bit 1.
#[derive(Clone, Debug, PartialEq)]
pub struct StateVector {
    amps: Array1<C64>,
    layout: ChainLayout,
}

impl StateVector {
    pub fn from_product(p: &ProductState, cap: usize) -> Result<Self> {
        let layout = p.layout();
        let n = layout.num_spins();
        check_cap(n, cap)?;
        let index = p.spins().iter().fold(0usize, |acc, s| (acc << 1) | s.index());
        let mut amps = Array1::zeros(1 << n);
        amps[index] = C64::from(1.0);
        Ok(Self { amps, layout })
    }

    pub fn from_amplitudes(layout: ChainLayout, amps: Array1<C64>) -> Result<Self> {
        if amps.len() != 1 << layout.num_spins() {
            return Err(Error::InvalidParameter(format!(
                "expected {} amplitudes, got {}",
                1usize << layout.num_spins(),
                amps.len()
            )));
        }
        Ok(Self { amps, layout })
    }

    pub fn amplitudes(&self) -> &Array1<C64> {
        &self.amps
    }

    pub fn layout(&self) -> ChainLayout {
        self.layout
    }

    pub fn num_spins(&self) -> usize {
        self.layout.num_spins()
    }

    pub fn norm(&self) -> f64 {
        self.amps.iter().map(|z| z.norm_sqr()).sum::<f64>().sqrt()
    }

    /// Divides by the norm and returns the divisor.
    pub fn normalize(&mut self) -> Result<f64> {
        let n = self.norm();
        if !(n > 0.0) || !n.is_finite() {
            return Err(Error::StateCollapse { step: None });
        }
        self.amps.mapv_inplace(|z| z / n);
        Ok(n)
    }

    pub fn inner(&self, other: &StateVector) -> C64 {
        self.amps.iter().zip(other.amps.iter()).map(|(a, b)| a.conj() * b).sum()
    }

    /// Applies an operator on contiguous positions in place.
    pub fn apply_local(&mut self, op: &LocalOperator) {
        let n = self.num_spins();
        apply_on_positions(&mut self.amps, n, op.start, &op.matrix);
    }
}

fn apply_on_positions(amps: &mut Array1<C64>, n: usize, start: usize, matrix: &Array2<C64>) {
    let d = matrix.nrows();
    let width = d.trailing_zeros() as usize;
    assert!(start + width <= n, "operator support beyond the chain");
    let outer = 1usize << start;
    let inner = 1usize << (n - start - width);
    let data = std::mem::take(amps);
    let mut blocks: Array3<C64> = data.into_shape_with_order((outer, d, inner)).expect("shape");
    for mut block in blocks.outer_iter_mut() {
        let updated = matrix.dot(&block);
        block.assign(&updated);
    }
    *amps = blocks.into_shape_with_order(outer * d * inner).expect("shape");
}

/// Dense embedding of a local operator into the full `2^N` space.
pub fn embed_local(op: &LocalOperator, num_spins: usize) -> Array2<C64> {
    let left = Array2::<C64>::eye(1 << op.start);
    let right = Array2::<C64>::eye(1 << (num_spins - op.start - op.width));
    let k = crate::linalg::kron(&left.view(), &op.matrix.view());
    crate::linalg::kron(&k.view(), &right.view())
}

/// Effective Hamiltonian in compressed sparse row form.
#[derive(Clone, Debug)]
pub struct SparseHamiltonian {
    dim: usize,
    row_ptr: Vec<usize>,
    cols: Vec<usize>,
    vals: Vec<C64>,
}

impl SparseHamiltonian {
    pub fn new(params: &ModelParams, cap: usize) -> Result<Self> {
        let n = params.layout().num_spins();
        check_cap(n, cap)?;
        let terms = hamiltonian_terms(params);
        let dim = 1usize << n;
        let bit = |pos: usize| 1usize << (n - 1 - pos);
        let mut entries: Vec<(usize, usize, C64)> = Vec::new();
        for c in 0..dim {
            let mut diag = C64::from(0.0);
            for term in &terms {
                let mut r = c;
                let mut amp = term.coeff;
                for &(pos, p) in &term.factors {
                    let up = r & bit(pos) != 0;
                    match p {
                        Pauli::Z => amp *= if up { 1.0 } else { -1.0 },
                        Pauli::X => r ^= bit(pos),
                        Pauli::Plus => {
                            if up {
                                amp = C64::from(0.0);
                            } else {
                                r |= bit(pos);
                            }
                        }
                        Pauli::Minus => {
                            if up {
                                r &= !bit(pos);
                            } else {
                                amp = C64::from(0.0);
                            }
                        }
                    }
                }
                if amp == C64::from(0.0) {
                    continue;
                }
                if r == c {
                    diag += amp;
                } else {
                    entries.push((r, c, amp));
                }
            }
            entries.push((c, c, diag));
        }
        entries.sort_by_key(|&(r, c, _)| (r, c));
        let mut row_ptr = vec![0usize; dim + 1];
        let mut cols: Vec<usize> = Vec::with_capacity(entries.len());
        let mut vals: Vec<C64> = Vec::with_capacity(entries.len());
        let mut last: Option<(usize, usize)> = None;
        for (r, c, v) in entries {
            if last == Some((r, c)) {
                *vals.last_mut().expect("merged entry") += v;
                continue;
            }
            cols.push(c);
            vals.push(v);
            row_ptr[r + 1] += 1;
            last = Some((r, c));
        }
        for r in 0..dim {
            row_ptr[r + 1] += row_ptr[r];
        }
        Ok(Self { dim, row_ptr, cols, vals })
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn apply(&self, v: &[C64]) -> Vec<C64> {
        (0..self.dim)
            .map(|r| {
                (self.row_ptr[r]..self.row_ptr[r + 1])
                    .map(|k| self.vals[k] * v[self.cols[k]])
                    .sum()
            })
            .collect()
    }

    pub fn to_dense(&self) -> Array2<C64> {
        let mut m = Array2::zeros((self.dim, self.dim));
        for r in 0..self.dim {
            for k in self.row_ptr[r]..self.row_ptr[r + 1] {
                m[[r, self.cols[k]]] += self.vals[k];
            }
        }
        m
    }

    pub fn expectation(&self, state: &StateVector) -> C64 {
        let hv = self.apply(state.amps.as_slice().expect("contiguous"));
        let num: C64 = state.amps.iter().zip(&hv).map(|(a, b)| a.conj() * b).sum();
        num / state.amps.iter().map(|z| z.norm_sqr()).sum::<f64>()
    }
}

/// Arnoldi settings for `e^{τH} v`.
#[derive(Copy, Clone, Debug, PartialEq)]
pub struct KrylovOptions {
    /// Relative error target per step.
    pub tol: f64,
    /// Largest subspace before the step is split in half.
    pub max_dim: usize,
    /// Maximum number of halvings of a step.
    pub max_splits: usize,
}

impl Default for KrylovOptions {
    fn default() -> Self {
        Self { tol: 1e-10, max_dim: 40, max_splits: 12 }
    }
}

fn dot(a: &[C64], b: &[C64]) -> C64 {
    a.iter().zip(b).map(|(x, y)| x.conj() * y).sum()
}

fn vnorm(a: &[C64]) -> f64 {
    a.iter().map(|z| z.norm_sqr()).sum::<f64>().sqrt()
}

/// `e^{τH} v` by Arnoldi projection. The subspace grows until the leading
/// term of the a-posteriori error series drops below `tol·‖v‖`; if
/// `max_dim` is reached first the step is split in two.
pub fn krylov_expmv(h: &SparseHamiltonian, v: &[C64], tau: C64, opts: &KrylovOptions) -> Result<Vec<C64>> {
    krylov_expmv_split(h, v, tau, opts, 0)
}

fn krylov_expmv_split(h: &SparseHamiltonian, v: &[C64], tau: C64, opts: &KrylovOptions, depth: usize) -> Result<Vec<C64>> {
    match krylov_attempt(h, v, tau, opts)? {
        Ok(w) => Ok(w),
        Err(estimate) => {
            if depth >= opts.max_splits {
                return Err(Error::KrylovNonConvergence { tol: opts.tol, estimate });
            }
            let half = tau * 0.5;
            let mid = krylov_expmv_split(h, v, half, opts, depth + 1)?;
            krylov_expmv_split(h, &mid, half, opts, depth + 1)
        }
    }
}

// Outer Err is a hard failure; inner Err carries the error estimate when the
// subspace cap was reached.
fn krylov_attempt(h: &SparseHamiltonian, v: &[C64], tau: C64, opts: &KrylovOptions) -> Result<std::result::Result<Vec<C64>, f64>> {
    let beta = vnorm(v);
    if beta == 0.0 {
        return Ok(Ok(v.to_vec()));
    }
    let m_max = opts.max_dim.min(h.dim());
    let mut basis: Vec<Vec<C64>> = vec![v.iter().map(|z| z / beta).collect()];
    let mut hess = Array2::<C64>::zeros((m_max + 1, m_max));
    let mut last_estimate = f64::INFINITY;

    for j in 0..m_max {
        let mut w = h.apply(&basis[j]);
        // Modified Gram-Schmidt with one reorthogonalization pass.
        for _ in 0..2 {
            for (i, b) in basis.iter().enumerate() {
                let c = dot(b, &w);
                hess[[i, j]] += c;
                w.iter_mut().zip(b).for_each(|(x, y)| *x -= c * y);
            }
        }
        let hn = vnorm(&w);
        hess[[j + 1, j]] = C64::from(hn);
        let m = j + 1;

        // Augmented exponential: top-left block is e^{τH_m}, last column
        // holds τ φ₁(τH_m) e₁.
        let mut aug = Array2::<C64>::zeros((m + 1, m + 1));
        for r in 0..m {
            for c in 0..m {
                aug[[r, c]] = hess[[r, c]] * tau;
            }
        }
        aug[[0, m]] = tau;
        let e = expm(&aug.view())?;
        let breakdown = hn <= 1e-13 * hess.iter().map(|z| z.norm()).fold(0.0, f64::max).max(1.0);
        let estimate = hn * e[[m - 1, m]].norm();
        last_estimate = estimate;
        if breakdown || estimate <= opts.tol || m == h.dim() {
            let mut out = vec![C64::from(0.0); v.len()];
            for (k, b) in basis.iter().enumerate() {
                let coef = e[[k, 0]] * beta;
                out.iter_mut().zip(b).for_each(|(o, x)| *o += coef * x);
            }
            return Ok(Ok(out));
        }
        basis.push(w.into_iter().map(|z| z / hn).collect());
    }
    Ok(Err(last_estimate))
}

/// How the dense oracle advances one time step.
#[derive(Copy, Clone, Debug, PartialEq, Eq)]
pub enum ExactMode {
    Krylov,
    TrotterGates,
}

/// Advances a dense state by `e^{-i H_eff dt}` (or its Trotter product) and
/// renormalizes.
#[derive(Clone, Debug)]
pub struct ExactPropagator {
    hamiltonian: SparseHamiltonian,
    gates: TrotterGateSet,
    mode: ExactMode,
    dt: f64,
    pub krylov: KrylovOptions,
}

impl ExactPropagator {
    pub fn new(params: &ModelParams, dt: f64, mode: ExactMode, cap: usize) -> Result<Self> {
        if !(dt > 0.0) {
            return Err(Error::InvalidParameter(format!("dt must be positive, got {dt}")));
        }
        let hamiltonian = SparseHamiltonian::new(params, cap)?;
        let gates = TrotterGateSet::build(&crate::model::cluster_terms(params), dt)?;
        Ok(Self { hamiltonian, gates, mode, dt, krylov: KrylovOptions::default() })
    }

    pub fn hamiltonian(&self) -> &SparseHamiltonian {
        &self.hamiltonian
    }

    pub fn dt(&self) -> f64 {
        self.dt
    }

    /// Applies one unnormalized step.
    pub fn propagate(&self, state: &mut StateVector) -> Result<()> {
        match self.mode {
            ExactMode::Krylov => {
                let v = state.amps.as_slice().expect("contiguous");
                let w = krylov_expmv(&self.hamiltonian, v, C64::new(0.0, -self.dt), &self.krylov)?;
                state.amps = Array1::from(w);
            }
            ExactMode::TrotterGates => {
                let n = state.num_spins();
                for (pos, gate) in self.gates.schedule() {
                    apply_on_positions(&mut state.amps, n, pos, gate);
                }
            }
        }
        Ok(())
    }

    /// One full step followed by renormalization; returns the divisor.
    pub fn step(&self, state: &mut StateVector) -> Result<f64> {
        self.propagate(state)?;
        state.normalize()
    }
}

/// Normalized trajectory from `0` to `t` (inclusive), one state per step.
///
/// Holds every state in memory; for long runs prefer [`ExactPropagator`]
/// with the generic driver in [`crate::evolve`].
pub fn evolve_exact(state: &StateVector, params: &ModelParams, t: f64, dt: f64, mode: ExactMode) -> Result<Vec<StateVector>> {
    let prop = ExactPropagator::new(params, dt, mode, state.num_spins().max(DEFAULT_SPIN_CAP))?;
    let steps = crate::evolve::step_count(t, dt)?;
    let mut current = state.clone();
    current.normalize()?;
    let mut out = Vec::with_capacity(steps + 1);
    out.push(current.clone());
    for k in 0..steps {
        prop.step(&mut current).map_err(|e| e.at_step(k + 1))?;
        out.push(current.clone());
    }
    Ok(out)
}

/// Von Neumann entropy of the positions `0..=cut_bond`, from the eigenvalues
/// of the reduced density matrix of whichever side is smaller.
pub fn entropy_exact(state: &StateVector, cut_bond: usize, base: EntropyBase) -> Result<f64> {
    let n = state.num_spins();
    if cut_bond + 1 >= n {
        return Err(Error::OutOfRange { what: "bond", index: cut_bond, len: n - 1 });
    }
    let rows = 1usize << (cut_bond + 1);
    let cols = state.amps.len() / rows;
    let m = state.amps.clone().into_shape_with_order((rows, cols)).expect("shape");
    let mh = m.t().mapv(|z| z.conj());
    let rho = if rows <= cols { m.dot(&mh) } else { mh.dot(&m) };
    let eig = rho.eigvalsh(UPLO::Upper)?;
    Ok(base.entropy(eig.iter().map(|&p| p.max(0.0))))
}

/// `⟨ψ|O|ψ⟩ / ⟨ψ|ψ⟩`.
pub fn expectation_exact(state: &StateVector, op: &LocalOperator) -> Result<C64> {
    if op.start + op.width > state.num_spins() {
        return Err(Error::OutOfRange { what: "operator support", index: op.start, len: state.num_spins() });
    }
    let mut applied = state.clone();
    applied.apply_local(op);
    let norm2 = state.norm().powi(2);
    if !(norm2 > 0.0) {
        return Err(Error::StateCollapse { step: None });
    }
    Ok(state.inner(&applied) / norm2)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::linalg::{frobenius_norm, identity};
    use crate::model::{strong_coupling_vacuum, Measurement};

    #[test]
    fn product_state_is_single_basis_vector() {
        let vac = strong_coupling_vacuum(ChainLayout::new(2).unwrap());
        let sv = StateVector::from_product(&vac, DEFAULT_SPIN_CAP).unwrap();
        // bits (0,0,1) in chain order
        assert_eq!(sv.amplitudes()[0b001], C64::from(1.0));
        assert_eq!(sv.norm(), 1.0);
        let mut other = sv.clone();
        other.amps.fill(C64::from(0.0));
        other.amps[0b100] = C64::from(1.0);
        assert_eq!(sv.inner(&other), C64::from(0.0));
    }

    #[test]
    fn cap_is_enforced() {
        let vac = strong_coupling_vacuum(ChainLayout::new(10).unwrap());
        assert!(matches!(StateVector::from_product(&vac, DEFAULT_SPIN_CAP), Err(Error::CapExceeded { .. })));
        let p = ModelParams::unitary(10, 0.5).unwrap();
        assert!(SparseHamiltonian::new(&p, DEFAULT_SPIN_CAP).is_err());
    }

    #[test]
    fn sparse_hamiltonian_is_hermitian_without_measurement() {
        let p = ModelParams::unitary(4, 0.8).unwrap();
        let h = SparseHamiltonian::new(&p, DEFAULT_SPIN_CAP).unwrap().to_dense();
        let err = frobenius_norm(&(&h - &crate::linalg::dagger(&h.view())).view());
        assert!(err < 1e-15);
        let pm = ModelParams::new(4, 0.8, 1.0, 0.3, Measurement::HoppingFull).unwrap();
        let hm = SparseHamiltonian::new(&pm, DEFAULT_SPIN_CAP).unwrap().to_dense();
        assert!(frobenius_norm(&(&hm - &crate::linalg::dagger(&hm.view())).view()) > 0.1);
    }

    #[test]
    fn krylov_matches_dense_exponential() {
        let p = ModelParams::new(4, 0.5, 1.0, 0.4, Measurement::ElectricFlux).unwrap();
        let h = SparseHamiltonian::new(&p, DEFAULT_SPIN_CAP).unwrap();
        let vac = strong_coupling_vacuum(p.layout());
        let v = StateVector::from_product(&vac, DEFAULT_SPIN_CAP).unwrap();
        let tau = C64::new(0.0, -0.7);
        let got = krylov_expmv(&h, v.amplitudes().as_slice().unwrap(), tau, &KrylovOptions::default()).unwrap();
        let dense = expm(&h.to_dense().mapv(|z| z * tau).view()).unwrap();
        let want = dense.dot(v.amplitudes());
        let err: f64 = got.iter().zip(want.iter()).map(|(a, b)| (a - b).norm_sqr()).sum::<f64>().sqrt();
        assert!(err < 1e-9 * vnorm(&got), "{err:e}");
    }

    #[test]
    fn krylov_splits_long_steps() {
        let p = ModelParams::unitary(4, 1.5).unwrap();
        let h = SparseHamiltonian::new(&p, DEFAULT_SPIN_CAP).unwrap();
        let v = StateVector::from_product(&strong_coupling_vacuum(p.layout()), DEFAULT_SPIN_CAP).unwrap();
        let opts = KrylovOptions { max_dim: 6, ..Default::default() };
        let got = krylov_expmv(&h, v.amplitudes().as_slice().unwrap(), C64::new(0.0, -5.0), &opts).unwrap();
        let want = expm(&h.to_dense().mapv(|z| z * C64::new(0.0, -5.0)).view()).unwrap().dot(v.amplitudes());
        let err: f64 = got.iter().zip(want.iter()).map(|(a, b)| (a - b).norm_sqr()).sum::<f64>().sqrt();
        assert!(err < 1e-8, "{err:e}");

        let stingy = KrylovOptions { max_dim: 2, max_splits: 1, tol: 1e-14 };
        assert!(matches!(
            krylov_expmv(&h, v.amplitudes().as_slice().unwrap(), C64::new(0.0, -5.0), &stingy),
            Err(Error::KrylovNonConvergence { .. })
        ));
    }

    #[test]
    fn entropy_of_product_and_bell_states() {
        let layout = ChainLayout::new(2).unwrap();
        let sv = StateVector::from_product(&strong_coupling_vacuum(layout), DEFAULT_SPIN_CAP).unwrap();
        for b in 0..2 {
            assert_eq!(entropy_exact(&sv, b, EntropyBase::E).unwrap(), 0.0);
        }
        // (|01⟩ + |10⟩)/√2 on the first two spins, third spin down.
        let h = 0.5f64.sqrt();
        let mut amps = Array1::zeros(8);
        amps[0b010] = C64::from(h);
        amps[0b100] = C64::from(h);
        let bell = StateVector::from_amplitudes(layout, amps).unwrap();
        assert!((entropy_exact(&bell, 0, EntropyBase::E).unwrap() - 2f64.ln()).abs() < 1e-14);
        assert!((entropy_exact(&bell, 0, EntropyBase::Two).unwrap() - 1.0).abs() < 1e-14);
        assert!(entropy_exact(&bell, 1, EntropyBase::E).unwrap().abs() < 1e-14);
    }

    #[test]
    fn identity_expectation_is_one() {
        let layout = ChainLayout::new(4).unwrap();
        let sv = StateVector::from_product(&strong_coupling_vacuum(layout), DEFAULT_SPIN_CAP).unwrap();
        let op = LocalOperator::new(2, identity(8));
        assert!((expectation_exact(&sv, &op).unwrap() - C64::from(1.0)).norm() < 1e-15);
    }

    #[test]
    fn renormalization_is_idempotent() {
        let layout = ChainLayout::new(2).unwrap();
        let amps = Array1::from_shape_fn(8, |k| C64::new(k as f64, 1.0 - k as f64 * 0.3));
        let mut a = StateVector::from_amplitudes(layout, amps).unwrap();
        a.normalize().unwrap();
        let once = a.clone();
        let factor = a.normalize().unwrap();
        assert!((factor - 1.0).abs() < 1e-15);
        assert!(a.amplitudes().iter().zip(once.amplitudes()).all(|(x, y)| (x - y).norm() < 1e-15));
    }
}
