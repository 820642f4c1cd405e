//! Matrix product states on the interleaved spin chain.
//!
//! Tensors have axis signature `[left bond, physical (2), right bond]` with
//! both boundary bonds of dimension 1. The state is kept in mixed canonical
//! form around a single orthogonality center, so the Schmidt values of any
//! bond can be read off with one local SVD.
//!
//! ```text
//!   A[0] ── A[1] ── ... ── C[k] ── ... ── B[N-1]
//!    |       |              |              |
//!   left-orthonormal     center     right-orthonormal
//! ```

use ndarray::{s, Array1, Array2, Array3, Axis};
use num_complex::ComplexFloat;

use crate::blocks::{matmul, qr, singular_values, svd};
use crate::model::{LocalOperator, ProductState};
use crate::{EntropyBase, Error, Result, C64};

/// Bond-dimension cap and singular-value cutoff used after every SVD.
#[derive(Copy, Clone, Debug, PartialEq)]
pub struct Truncation {
    pub max_bond: usize,
    /// Singular values below `cutoff` times the largest one are dropped.
    pub cutoff: f64,
}

impl Default for Truncation {
    fn default() -> Self {
        Self { max_bond: 1000, cutoff: 1e-8 }
    }
}

impl Truncation {
    /// No truncation beyond dropping exact zeros.
    pub fn exact() -> Self {
        Self { max_bond: usize::MAX, cutoff: 0.0 }
    }

    /// Number of singular values to keep (descending input) and the relative
    /// discarded weight. At least one value is always kept.
    pub fn keep(&self, values: &[f64]) -> Result<(usize, f64)> {
        let total: f64 = values.iter().map(|v| v * v).sum();
        if !(total > 0.0) || !total.is_finite() {
            return Err(Error::StateCollapse { step: None });
        }
        let floor = self.cutoff * values[0];
        let keep = values
            .iter()
            .take_while(|&&v| v > 0.0 && v >= floor)
            .count()
            .clamp(1, self.max_bond.max(1));
        let discarded: f64 = values[keep..].iter().map(|v| v * v).sum();
        Ok((keep, discarded / total))
    }
}

/// Direction of a gate sweep; decides on which side of the window the
/// orthogonality center is left.
#[derive(Copy, Clone, Debug, PartialEq, Eq)]
pub enum Sweep {
    LeftToRight,
    RightToLeft,
}

/// Schmidt values across one bond.
#[derive(Clone, Debug, PartialEq)]
pub struct SchmidtSpectrum {
    pub bond: usize,
    /// Descending, normalized so that the squares sum to one.
    pub values: Vec<f64>,
    /// Relative weight dropped the last time this bond was truncated.
    pub discarded_weight: f64,
}

impl SchmidtSpectrum {
    pub fn entropy(&self, base: EntropyBase) -> f64 {
        base.entropy(self.values.iter().map(|v| v * v))
    }
}

#[derive(Clone, Debug)]
pub struct MpsState {
    tensors: Vec<Array3<C64>>,
    center: Option<usize>,
    trunc: Truncation,
    bond_discarded: Vec<f64>,
    discarded: f64,
}

fn to_matrix(t: Array3<C64>, rows: usize, cols: usize) -> Array2<C64> {
    t.as_standard_layout()
        .into_owned()
        .into_shape_with_order((rows, cols))
        .expect("contiguous reshape")
}

fn to_tensor(m: Array2<C64>, shape: (usize, usize, usize)) -> Array3<C64> {
    m.as_standard_layout()
        .into_owned()
        .into_shape_with_order(shape)
        .expect("contiguous reshape")
}

fn scale_rows(m: &mut Array2<C64>, s: &[f64]) {
    for (mut row, &v) in m.axis_iter_mut(Axis(0)).zip(s) {
        row.mapv_inplace(|z| z * v);
    }
}

fn scale_cols(m: &mut Array2<C64>, s: &[f64]) {
    for (mut col, &v) in m.axis_iter_mut(Axis(1)).zip(s) {
        col.mapv_inplace(|z| z * v);
    }
}

/// Contracts consecutive site tensors into `[left, 2^n, right]`.
fn contract_window(tensors: &[Array3<C64>]) -> Array3<C64> {
    let (dl, _, _) = tensors[0].dim();
    let mut acc = tensors[0].clone();
    for t in &tensors[1..] {
        let (l, p, r) = acc.dim();
        let (r2, p2, rr) = t.dim();
        debug_assert_eq!(r, r2);
        let m = matmul(&to_matrix(acc, l * p, r), &to_matrix(t.clone(), r2, p2 * rr));
        acc = to_tensor(m, (dl, p * p2, rr));
    }
    acc
}

/// `θ'[l, s', r] = Σ_s O[s', s] θ[l, s, r]`.
fn apply_physical(op: &Array2<C64>, theta: &Array3<C64>) -> Array3<C64> {
    let (l, p, r) = theta.dim();
    let perm = theta.view().permuted_axes([1, 0, 2]);
    let m = to_matrix(perm.to_owned(), p, l * r);
    let out = op.dot(&m);
    to_tensor(out, (p, l, r)).permuted_axes([1, 0, 2]).as_standard_layout().into_owned()
}

impl MpsState {
    /// Bond-dimension-one MPS of a product configuration.
    pub fn from_product(state: &ProductState, trunc: Truncation) -> Self {
        let tensors = state
            .spins()
            .iter()
            .map(|s| {
                let mut t = Array3::zeros((1, 2, 1));
                t[[0, s.index(), 0]] = C64::from(1.0);
                t
            })
            .collect::<Vec<_>>();
        let n = tensors.len();
        Self { tensors, center: Some(0), trunc, bond_discarded: vec![0.0; n.saturating_sub(1)], discarded: 0.0 }
    }

    /// Exact MPS factorization of a dense state (leftmost spin most
    /// significant), center on the last site.
    pub fn from_state_vector(amps: &[C64], num_spins: usize, trunc: Truncation) -> Result<Self> {
        if amps.len() != 1 << num_spins {
            return Err(Error::InvalidParameter(format!(
                "state vector length {} does not match {num_spins} spins",
                amps.len()
            )));
        }
        let mut tensors = Vec::with_capacity(num_spins);
        let mut rest = Array2::from_shape_vec((1, amps.len()), amps.to_vec()).expect("shape");
        let mut dl = 1;
        for k in 0..num_spins - 1 {
            let cols = rest.len() / (dl * 2);
            let m = rest.into_shape_with_order((dl * 2, cols)).expect("shape");
            let (u, s, vt) = svd(m)?;
            let (keep, _) = trunc.keep(&s)?;
            tensors.push(to_tensor(u.slice(s![.., ..keep]).to_owned(), (dl, 2, keep)));
            let mut r = vt.slice(s![..keep, ..]).to_owned();
            scale_rows(&mut r, &s[..keep]);
            rest = r;
            dl = keep;
            debug_assert!(k < num_spins);
        }
        tensors.push(to_tensor(rest, (dl, 2, 1)));
        Ok(Self {
            tensors,
            center: Some(num_spins - 1),
            trunc,
            bond_discarded: vec![0.0; num_spins - 1],
            discarded: 0.0,
        })
    }

    /// Wraps arbitrary tensors without assuming any canonical form.
    pub fn from_tensors(tensors: Vec<Array3<C64>>, trunc: Truncation) -> Result<Self> {
        if tensors.is_empty() {
            return Err(Error::InvalidParameter("empty MPS".into()));
        }
        if tensors[0].dim().0 != 1 || tensors[tensors.len() - 1].dim().2 != 1 {
            return Err(Error::InvalidParameter("boundary bonds must have dimension 1".into()));
        }
        for w in tensors.windows(2) {
            if w[0].dim().2 != w[1].dim().0 || w[0].dim().1 != 2 {
                return Err(Error::InvalidParameter("inconsistent bond dimensions".into()));
            }
        }
        let n = tensors.len();
        Ok(Self { tensors, center: None, trunc, bond_discarded: vec![0.0; n - 1], discarded: 0.0 })
    }

    pub fn len(&self) -> usize {
        self.tensors.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tensors.is_empty()
    }

    pub fn tensors(&self) -> &[Array3<C64>] {
        &self.tensors
    }

    pub fn center(&self) -> Option<usize> {
        self.center
    }

    pub fn truncation(&self) -> Truncation {
        self.trunc
    }

    pub fn set_truncation(&mut self, trunc: Truncation) {
        self.trunc = trunc;
    }

    /// Dimension of each internal bond (`len() - 1` entries).
    pub fn bond_dims(&self) -> Vec<usize> {
        self.tensors[..self.len() - 1].iter().map(|t| t.dim().2).collect()
    }

    pub fn max_bond_dim(&self) -> usize {
        self.bond_dims().into_iter().max().unwrap_or(1)
    }

    /// Relative discarded weight accumulated since the last call.
    pub fn take_discarded_weight(&mut self) -> f64 {
        std::mem::take(&mut self.discarded)
    }

    fn shift_center_right(&mut self, k: usize) -> Result<()> {
        let (dl, p, dr) = self.tensors[k].dim();
        let (q, r) = qr(to_matrix(self.tensors[k].clone(), dl * p, dr))?;
        let m = q.ncols();
        self.tensors[k] = to_tensor(q, (dl, p, m));
        let (_, p2, dr2) = self.tensors[k + 1].dim();
        let next = matmul(&r, &to_matrix(self.tensors[k + 1].clone(), dr, p2 * dr2));
        self.tensors[k + 1] = to_tensor(next, (m, p2, dr2));
        Ok(())
    }

    fn shift_center_left(&mut self, k: usize) -> Result<()> {
        let (dl, p, dr) = self.tensors[k].dim();
        // M = L Q via the QR of M†.
        let mh = to_matrix(self.tensors[k].clone(), dl, p * dr).t().mapv(|z| z.conj());
        let (q, r) = qr(mh)?;
        let m = q.ncols();
        self.tensors[k] = to_tensor(q.t().mapv(|z| z.conj()), (m, p, dr));
        let lower = r.t().mapv(|z| z.conj());
        let (dl2, p2, _) = self.tensors[k - 1].dim();
        let prev = matmul(&to_matrix(self.tensors[k - 1].clone(), dl2 * p2, dl), &lower);
        self.tensors[k - 1] = to_tensor(prev, (dl2, p2, m));
        Ok(())
    }

    /// Brings the state into mixed canonical form with center `k`.
    pub fn move_center(&mut self, k: usize) -> Result<()> {
        assert!(k < self.len(), "center {k} out of range");
        let current = match self.center {
            Some(c) => c,
            None => {
                // Full canonicalization: right-orthonormalize everything,
                // then sweep back.
                for j in (1..self.len()).rev() {
                    self.shift_center_left(j)?;
                }
                0
            }
        };
        for j in current..k {
            self.shift_center_right(j)?;
        }
        for j in (k + 1..=current).rev() {
            self.shift_center_left(j)?;
        }
        self.center = Some(k);
        Ok(())
    }

    /// Checks left/right orthonormality around the center.
    pub fn canonical_error(&self) -> Option<f64> {
        let c = self.center?;
        let mut worst: f64 = 0.0;
        for (k, t) in self.tensors.iter().enumerate() {
            let (dl, p, dr) = t.dim();
            let gram = if k < c {
                let m = to_matrix(t.clone(), dl * p, dr);
                m.t().mapv(|z| z.conj()).dot(&m)
            } else if k > c {
                let m = to_matrix(t.clone(), dl, p * dr);
                m.dot(&m.t().mapv(|z| z.conj()))
            } else {
                continue;
            };
            let n = gram.nrows();
            let err = (gram - Array2::<C64>::eye(n)).iter().map(|z| z.abs()).fold(0.0, f64::max);
            worst = worst.max(err);
        }
        Some(worst)
    }

    pub fn norm(&self) -> f64 {
        match self.center {
            Some(c) => self.tensors[c].iter().map(|z| z.norm_sqr()).sum::<f64>().sqrt(),
            None => {
                // ⟨ψ|ψ⟩ through transfer matrices.
                let mut env = Array2::<C64>::eye(1);
                for t in &self.tensors {
                    let (dl, p, dr) = t.dim();
                    let mut next = Array2::<C64>::zeros((dr, dr));
                    for s in 0..p {
                        let a = t.slice(s![.., s, ..]);
                        next = next + a.t().mapv(|z| z.conj()).dot(&env).dot(&a);
                    }
                    debug_assert_eq!(env.nrows(), dl);
                    env = next;
                }
                env[[0, 0]].re.max(0.0).sqrt()
            }
        }
    }

    /// Multiplies the state by a scalar.
    pub fn scale(&mut self, c: C64) {
        let k = self.center.unwrap_or(0);
        self.tensors[k].mapv_inplace(|z| z * c);
    }

    /// Divides by the norm and returns the divisor.
    pub fn normalize(&mut self) -> Result<f64> {
        if self.center.is_none() {
            self.move_center(0)?;
        }
        let n = self.norm();
        if !(n > 0.0) || !n.is_finite() {
            return Err(Error::StateCollapse { step: None });
        }
        self.scale(C64::from(1.0 / n));
        Ok(n)
    }

    /// Applies an 8×8 gate to positions `pos..pos+3` and re-splits the
    /// window with two truncated SVDs. The gate need not be unitary and the
    /// norm is not restored.
    pub fn apply_three_site_gate(&mut self, gate: &Array2<C64>, pos: usize, sweep: Sweep) -> Result<()> {
        let n = self.len();
        if pos + 2 >= n {
            return Err(Error::OutOfRange { what: "three-site window", index: pos, len: n });
        }
        assert_eq!(gate.dim(), (8, 8), "three-site gate must be 8x8");
        match self.center {
            Some(c) if c >= pos && c <= pos + 2 => {}
            Some(c) if c < pos => self.move_center(pos)?,
            _ => self.move_center(pos + 2)?,
        }

        let theta = apply_physical(gate, &contract_window(&self.tensors[pos..pos + 3]));
        let (dl, _, dr) = theta.dim();
        match sweep {
            Sweep::LeftToRight => {
                let (u, sv, vt) = svd(to_matrix(theta, dl * 2, 4 * dr))?;
                let (k1, w1) = self.trunc.keep(&sv)?;
                self.tensors[pos] = to_tensor(u.slice(s![.., ..k1]).to_owned(), (dl, 2, k1));
                let mut rest = vt.slice(s![..k1, ..]).to_owned();
                scale_rows(&mut rest, &sv[..k1]);
                let rest = rest.into_shape_with_order((k1 * 2, 2 * dr)).expect("shape");
                let (u2, sv2, vt2) = svd(rest)?;
                let (k2, w2) = self.trunc.keep(&sv2)?;
                self.tensors[pos + 1] = to_tensor(u2.slice(s![.., ..k2]).to_owned(), (k1, 2, k2));
                let mut last = vt2.slice(s![..k2, ..]).to_owned();
                scale_rows(&mut last, &sv2[..k2]);
                self.tensors[pos + 2] = to_tensor(last, (k2, 2, dr));
                self.center = Some(pos + 2);
                self.record_truncation(pos, w1, pos + 1, w2);
            }
            Sweep::RightToLeft => {
                let (u, sv, vt) = svd(to_matrix(theta, dl * 4, 2 * dr))?;
                let (k1, w1) = self.trunc.keep(&sv)?;
                self.tensors[pos + 2] = to_tensor(vt.slice(s![..k1, ..]).to_owned(), (k1, 2, dr));
                let mut rest = u.slice(s![.., ..k1]).to_owned();
                scale_cols(&mut rest, &sv[..k1]);
                let rest = rest
                    .as_standard_layout()
                    .into_owned()
                    .into_shape_with_order((dl * 2, 2 * k1))
                    .expect("shape");
                let (u2, sv2, vt2) = svd(rest)?;
                let (k2, w2) = self.trunc.keep(&sv2)?;
                self.tensors[pos + 1] = to_tensor(vt2.slice(s![..k2, ..]).to_owned(), (k2, 2, k1));
                let mut first = u2.slice(s![.., ..k2]).to_owned();
                scale_cols(&mut first, &sv2[..k2]);
                self.tensors[pos] = to_tensor(first, (dl, 2, k2));
                self.center = Some(pos);
                self.record_truncation(pos + 1, w1, pos, w2);
            }
        }
        Ok(())
    }

    fn record_truncation(&mut self, b1: usize, w1: f64, b2: usize, w2: f64) {
        self.bond_discarded[b1] = w1;
        self.bond_discarded[b2] = w2;
        self.discarded += w1 + w2;
    }

    /// Schmidt values across `bond` (between positions `bond` and `bond+1`).
    pub fn schmidt_spectrum(&mut self, bond: usize) -> Result<SchmidtSpectrum> {
        if bond + 1 >= self.len() {
            return Err(Error::OutOfRange { what: "bond", index: bond, len: self.len() - 1 });
        }
        let values = match self.center {
            Some(c) if c > bond => {
                self.move_center(bond + 1)?;
                let (dl, p, dr) = self.tensors[bond + 1].dim();
                singular_values(to_matrix(self.tensors[bond + 1].clone(), dl, p * dr))?
            }
            _ => {
                self.move_center(bond)?;
                let (dl, p, dr) = self.tensors[bond].dim();
                singular_values(to_matrix(self.tensors[bond].clone(), dl * p, dr))?
            }
        };
        let total = values.iter().map(|v| v * v).sum::<f64>().sqrt();
        if !(total > 0.0) {
            return Err(Error::StateCollapse { step: None });
        }
        Ok(SchmidtSpectrum {
            bond,
            values: values.into_iter().map(|v| v / total).collect(),
            discarded_weight: self.bond_discarded[bond],
        })
    }

    /// Von Neumann entropy across `bond` from its Schmidt spectrum.
    pub fn bond_entropy(&mut self, bond: usize, base: EntropyBase) -> Result<f64> {
        Ok(self.schmidt_spectrum(bond)?.entropy(base))
    }

    /// `⟨ψ|O|ψ⟩ / ⟨ψ|ψ⟩` for an operator on 1–3 contiguous positions.
    pub fn expectation(&mut self, op: &LocalOperator) -> Result<C64> {
        let end = op.start + op.width;
        if op.width == 0 || end > self.len() {
            return Err(Error::OutOfRange { what: "operator support", index: op.start, len: self.len() });
        }
        let target = match self.center {
            Some(c) => c.clamp(op.start, end - 1),
            None => op.start,
        };
        self.move_center(target)?;
        let theta = contract_window(&self.tensors[op.start..end]);
        let o_theta = apply_physical(&op.matrix, &theta);
        let num: C64 = theta.iter().zip(o_theta.iter()).map(|(a, b)| a.conj() * b).sum();
        let den: f64 = theta.iter().map(|z| z.norm_sqr()).sum();
        if !(den > 0.0) {
            return Err(Error::StateCollapse { step: None });
        }
        Ok(num / den)
    }

    /// Expectations of several local operators, visited in order of their
    /// support so the center moves in a single sweep. Results follow the
    /// input order.
    pub fn expectations(&mut self, ops: &[LocalOperator]) -> Result<Vec<C64>> {
        let mut order: Vec<usize> = (0..ops.len()).collect();
        order.sort_by_key(|&i| ops[i].start);
        if matches!(self.center, Some(c) if c > self.len() / 2) {
            order.reverse();
        }
        let mut out = vec![C64::from(0.0); ops.len()];
        for i in order {
            out[i] = self.expectation(&ops[i])?;
        }
        Ok(out)
    }

    /// Dense amplitudes, leftmost spin most significant.
    pub fn to_state_vector(&self) -> Array1<C64> {
        let t = contract_window(&self.tensors);
        let (_, p, _) = t.dim();
        t.into_shape_with_order(p).expect("boundary bonds are 1")
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::linalg::{identity, kron_all, sigma_z};
    use crate::model::{strong_coupling_vacuum, ChainLayout, Spin};

    fn bell_pair() -> MpsState {
        let h = C64::from(0.5f64.sqrt());
        let amps = [C64::from(0.0), h, h, C64::from(0.0)];
        MpsState::from_state_vector(&amps, 2, Truncation::exact()).unwrap()
    }

    #[test]
    fn product_state_has_unit_bonds_and_zero_entropy() {
        let layout = ChainLayout::new(4).unwrap();
        let vac = strong_coupling_vacuum(layout);
        let mut mps = MpsState::from_product(&vac, Truncation::default());
        assert!(mps.bond_dims().iter().all(|&d| d == 1));
        assert!((mps.norm() - 1.0).abs() < 1e-15);
        for b in 0..layout.num_bonds() {
            assert_eq!(mps.bond_entropy(b, EntropyBase::E).unwrap(), 0.0);
            assert_eq!(mps.schmidt_spectrum(b).unwrap().values, vec![1.0]);
        }
        for (k, s) in vac.spins().iter().enumerate() {
            let z = mps.expectation(&LocalOperator::new(k, sigma_z())).unwrap();
            assert_eq!(z.re, s.z());
        }
    }

    #[test]
    fn bell_cut_spectrum_and_entropy() {
        let mut mps = bell_pair();
        let spectrum = mps.schmidt_spectrum(0).unwrap();
        assert!(spectrum.values.iter().all(|v| (v - 0.5f64.sqrt()).abs() < 1e-14));
        assert!((spectrum.entropy(EntropyBase::E) - 2f64.ln()).abs() < 1e-14);
        assert!((mps.bond_entropy(0, EntropyBase::Two).unwrap() - 1.0).abs() < 1e-14);
    }

    #[test]
    fn identity_gate_leaves_state_unchanged() {
        let layout = ChainLayout::new(4).unwrap();
        let mut spins = strong_coupling_vacuum(layout).spins().to_vec();
        spins[3] = Spin::Up;
        let mut mps = MpsState::from_product(
            &crate::model::ProductState::new(layout, spins).unwrap(),
            Truncation::default(),
        );
        let before = mps.to_state_vector();
        mps.apply_three_site_gate(&identity(8), 2, Sweep::LeftToRight).unwrap();
        mps.apply_three_site_gate(&identity(8), 4, Sweep::RightToLeft).unwrap();
        let after = mps.to_state_vector();
        let diff: f64 = (&before - &after).iter().map(|z| z.norm()).sum();
        assert!(diff < 1e-12);
    }

    #[test]
    fn truncation_respects_cap_and_cutoff() {
        let t = Truncation { max_bond: 2, cutoff: 0.0 };
        assert_eq!(t.keep(&[1.0, 0.5, 0.25]).unwrap().0, 2);
        let t = Truncation { max_bond: 10, cutoff: 0.3 };
        let (k, w) = t.keep(&[2.0, 0.8, 0.5]).unwrap();
        assert_eq!(k, 2);
        assert!((w - 0.25 / 4.89).abs() < 1e-15);
        assert_eq!(Truncation { max_bond: 10, cutoff: 0.9 }.keep(&[1.0, 0.95]).unwrap().0, 2);
        assert_eq!(Truncation::exact().keep(&[1.0, 0.0]).unwrap().0, 1);
        assert!(matches!(t.keep(&[0.0, 0.0]), Err(Error::StateCollapse { .. })));
    }

    #[test]
    fn zero_gate_signals_collapse() {
        let vac = strong_coupling_vacuum(ChainLayout::new(2).unwrap());
        let mut mps = MpsState::from_product(&vac, Truncation::default());
        let zero = Array2::<C64>::zeros((8, 8));
        assert!(matches!(
            mps.apply_three_site_gate(&zero, 0, Sweep::LeftToRight),
            Err(Error::StateCollapse { .. })
        ));
    }

    #[test]
    fn normalize_reports_factor_and_is_projective() {
        let mut a = bell_pair();
        a.scale(C64::new(3.0, -4.0));
        assert!((a.normalize().unwrap() - 5.0).abs() < 1e-14);
        let mut b = bell_pair();
        b.normalize().unwrap();
        let phase = C64::new(3.0, -4.0) / 5.0;
        let diff: f64 = (&a.to_state_vector() - &b.to_state_vector().mapv(|z| z * phase))
            .iter()
            .map(|z| z.norm())
            .sum();
        assert!(diff < 1e-14);
    }

    #[test]
    fn two_site_expectation_on_bell_pair() {
        let mut mps = bell_pair();
        let zz = kron_all(&[sigma_z(), sigma_z()]);
        let v = mps.expectation(&LocalOperator::new(0, zz)).unwrap();
        assert!((v - C64::from(-1.0)).norm() < 1e-14);
    }
}
