//! Lattice layout, spin-mapped Hamiltonian, measurement deformations, Gauss
//! operators, and gauge-invariant product states.
//!
//! Matter site `i` sits at chain position `2i`, the link `(i, i+1)` at `2i+1`.
//! The local basis is (down, up) with σ^Z = diag(-1, +1); zero electric flux
//! is τ^Z = -1.

use std::fmt;
use std::ops::Range;
use std::str::FromStr;

use ndarray::Array2;

use crate::linalg::{identity, kron_all, sigma_minus, sigma_plus, sigma_x, sigma_z};
use crate::{Error, Result, C64};

/// τ^Z eigenvalue of the frozen virtual links beyond either end of the chain.
pub const BOUNDARY_FLUX: f64 = -1.0;

/// Index map between the gauge-theory lattice and the interleaved spin chain.
#[derive(Copy, Clone, Debug, PartialEq, Eq, Hash)]
pub struct ChainLayout {
    sites: usize,
}

impl ChainLayout {
    pub fn new(sites: usize) -> Result<Self> {
        if sites < 2 || sites % 2 != 0 {
            return Err(Error::InvalidLatticeSize(sites));
        }
        Ok(Self { sites })
    }

    /// Number of matter sites `L`.
    pub fn sites(&self) -> usize {
        self.sites
    }

    pub fn links(&self) -> usize {
        self.sites - 1
    }

    /// Total spin count `N = 2L - 1`.
    pub fn num_spins(&self) -> usize {
        2 * self.sites - 1
    }

    pub fn site_pos(&self, i: usize) -> usize {
        debug_assert!(i < self.sites);
        2 * i
    }

    pub fn link_pos(&self, i: usize) -> usize {
        debug_assert!(i < self.links());
        2 * i + 1
    }

    /// Number of three-spin clusters (site j, link j, site j+1).
    pub fn num_clusters(&self) -> usize {
        self.sites - 1
    }

    /// Leftmost chain position of cluster `j`.
    pub fn cluster_start(&self, j: usize) -> usize {
        2 * j
    }

    /// Bond `b` separates chain positions `b` and `b + 1`. The half-chain cut
    /// sits right after the link spin `(L/2 - 1, L/2)`.
    pub fn cut_bond(&self) -> usize {
        self.link_pos(self.sites / 2 - 1)
    }

    /// Chain positions of subsystem A (sites and links `0..L/2`).
    pub fn subsystem_a(&self) -> Range<usize> {
        0..self.cut_bond() + 1
    }

    pub fn num_bonds(&self) -> usize {
        self.num_spins() - 1
    }
}

/// Which observable is continuously monitored.
#[derive(Copy, Clone, Debug, Default, PartialEq, Eq, Hash)]
pub enum Measurement {
    #[default]
    None,
    /// τ^Z on every link: electric coefficient `1 - iγ`.
    ElectricFlux,
    /// Staggered σ^Z on every site: `μ -> μ - iγ`.
    PairDensity,
    /// The gauge-matter hopping on every cluster: `x -> x - iγ`.
    HoppingFull,
    /// Hopping measured only on clusters lying entirely inside subsystem A.
    HoppingSubsystem,
}

impl Measurement {
    pub const ALL: [Measurement; 5] = [
        Measurement::None,
        Measurement::ElectricFlux,
        Measurement::PairDensity,
        Measurement::HoppingFull,
        Measurement::HoppingSubsystem,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Measurement::None => "none",
            Measurement::ElectricFlux => "electric_flux",
            Measurement::PairDensity => "pair_density",
            Measurement::HoppingFull => "hopping_full",
            Measurement::HoppingSubsystem => "hopping_subsystem",
        }
    }
}

impl FromStr for Measurement {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Measurement::ALL
            .into_iter()
            .find(|m| m.name() == s)
            .ok_or_else(|| Error::UnknownMeasurement(s.to_string()))
    }
}

impl fmt::Display for Measurement {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

/// Physical parameters of one simulation.
///
/// `μ = 2 (m/g) √x` is always derived, never stored.
#[derive(Copy, Clone, Debug, PartialEq)]
pub struct ModelParams {
    layout: ChainLayout,
    pub x: f64,
    pub m_over_g: f64,
    pub gamma: f64,
    pub measurement: Measurement,
}

impl ModelParams {
    pub fn new(sites: usize, x: f64, m_over_g: f64, gamma: f64, measurement: Measurement) -> Result<Self> {
        let layout = ChainLayout::new(sites)?;
        if !(x.is_finite() && x > 0.0) {
            return Err(Error::InvalidParameter(format!("x must be positive, got {x}")));
        }
        if !(m_over_g.is_finite() && m_over_g >= 0.0) {
            return Err(Error::InvalidParameter(format!("m_over_g must be >= 0, got {m_over_g}")));
        }
        if !(gamma.is_finite() && gamma >= 0.0) {
            return Err(Error::InvalidParameter(format!("gamma must be >= 0, got {gamma}")));
        }
        Ok(Self { layout, x, m_over_g, gamma, measurement })
    }

    /// Unmonitored parameters with `m/g = 1`.
    pub fn unitary(sites: usize, x: f64) -> Result<Self> {
        Self::new(sites, x, 1.0, 0.0, Measurement::None)
    }

    pub fn layout(&self) -> ChainLayout {
        self.layout
    }

    pub fn sites(&self) -> usize {
        self.layout.sites()
    }

    pub fn mu(&self) -> f64 {
        2.0 * self.m_over_g * self.x.sqrt()
    }

    /// True when the effective Hamiltonian is Hermitian.
    pub fn is_unitary(&self) -> bool {
        self.gamma == 0.0 || self.measurement == Measurement::None
    }

    /// Same lattice and couplings with the measurement switched off.
    pub fn without_measurement(&self) -> Self {
        Self { gamma: 0.0, measurement: Measurement::None, ..*self }
    }

    pub fn with_sites(&self, sites: usize) -> Result<Self> {
        Self::new(sites, self.x, self.m_over_g, self.gamma, self.measurement)
    }

    fn monitored(&self, kind: Measurement) -> bool {
        self.gamma != 0.0 && self.measurement == kind
    }

    /// Coefficient of `σ⁺τ^Xσ⁻ + h.c.` on cluster `j`.
    pub fn hopping_coeff(&self, j: usize) -> C64 {
        let deformed = C64::new(self.x, -self.gamma);
        if self.monitored(Measurement::HoppingFull) {
            return deformed;
        }
        if self.monitored(Measurement::HoppingSubsystem) && j + 2 <= self.sites() / 2 {
            return deformed;
        }
        C64::from(self.x)
    }

    /// Coefficient of σ^Z on site `i`, including the staggered sign.
    pub fn mass_coeff(&self, i: usize) -> C64 {
        let sign = if i % 2 == 0 { 1.0 } else { -1.0 };
        let base = if self.monitored(Measurement::PairDensity) {
            C64::new(self.mu(), -self.gamma)
        } else {
            C64::from(self.mu())
        };
        base * sign
    }

    /// Coefficient of τ^Z on any link.
    pub fn electric_coeff(&self) -> C64 {
        if self.monitored(Measurement::ElectricFlux) {
            C64::new(1.0, -self.gamma)
        } else {
            C64::from(1.0)
        }
    }
}

/// Structured coefficients of one cluster block.
#[derive(Copy, Clone, Debug, PartialEq)]
pub struct ClusterCoefficients {
    pub hop: C64,
    pub mass_left: C64,
    pub mass_right: C64,
    pub electric: C64,
}

/// Three-spin block of the effective Hamiltonian on (site j, link j, site j+1).
#[derive(Clone, Debug)]
pub struct ClusterTerm {
    pub j: usize,
    pub parts: ClusterCoefficients,
    /// 8×8 matrix in the basis `s_site_j * 4 + s_link * 2 + s_site_j+1`.
    pub h: Array2<C64>,
}

impl ClusterTerm {
    pub fn from_parts(j: usize, parts: ClusterCoefficients) -> Self {
        let (sz, sx, sp, sm, id) = (sigma_z(), sigma_x(), sigma_plus(), sigma_minus(), identity(2));
        let hop = kron_all(&[sp.clone(), sx.clone(), sm.clone()]) + kron_all(&[sm, sx, sp]);
        let h = hop * parts.hop
            + kron_all(&[sz.clone(), id.clone(), id.clone()]) * parts.mass_left
            + kron_all(&[id.clone(), id.clone(), sz.clone()]) * parts.mass_right
            + kron_all(&[id.clone(), sz, id]) * parts.electric;
        Self { j, parts, h }
    }

    /// Leftmost chain position covered by this block.
    pub fn start(&self) -> usize {
        2 * self.j
    }
}

/// Splits the effective Hamiltonian into `L - 1` cluster blocks.
///
/// Interior mass terms are shared half/half between the two clusters that
/// contain the site; the end sites belong to one cluster only and keep their
/// full weight. Each link and hopping term lives in exactly one cluster.
pub fn cluster_terms(params: &ModelParams) -> Vec<ClusterTerm> {
    let layout = params.layout();
    let last_site = layout.sites() - 1;
    (0..layout.num_clusters())
        .map(|j| {
            let left_weight = if j == 0 { 1.0 } else { 0.5 };
            let right_weight = if j + 1 == last_site { 1.0 } else { 0.5 };
            let parts = ClusterCoefficients {
                hop: params.hopping_coeff(j),
                mass_left: params.mass_coeff(j) * left_weight,
                mass_right: params.mass_coeff(j + 1) * right_weight,
                electric: params.electric_coeff(),
            };
            ClusterTerm::from_parts(j, parts)
        })
        .collect()
}

/// Single-spin factor of a [`PauliTerm`].
#[derive(Copy, Clone, Debug, PartialEq, Eq)]
pub enum Pauli {
    X,
    Z,
    Plus,
    Minus,
}

/// `coeff · Π_k P_k` acting on the listed chain positions.
#[derive(Clone, Debug, PartialEq)]
pub struct PauliTerm {
    pub coeff: C64,
    pub factors: Vec<(usize, Pauli)>,
}

/// The effective Hamiltonian term by term, straight from its defining sum:
/// two hopping strings per link, one σ^Z per site, one τ^Z per link.
pub fn hamiltonian_terms(params: &ModelParams) -> Vec<PauliTerm> {
    let layout = params.layout();
    let mut terms = Vec::with_capacity(4 * layout.sites());
    for j in 0..layout.links() {
        let (a, l, b) = (layout.site_pos(j), layout.link_pos(j), layout.site_pos(j + 1));
        let coeff = params.hopping_coeff(j);
        terms.push(PauliTerm { coeff, factors: vec![(a, Pauli::Plus), (l, Pauli::X), (b, Pauli::Minus)] });
        terms.push(PauliTerm { coeff, factors: vec![(a, Pauli::Minus), (l, Pauli::X), (b, Pauli::Plus)] });
    }
    for i in 0..layout.sites() {
        terms.push(PauliTerm { coeff: params.mass_coeff(i), factors: vec![(layout.site_pos(i), Pauli::Z)] });
    }
    for j in 0..layout.links() {
        terms.push(PauliTerm { coeff: params.electric_coeff(), factors: vec![(layout.link_pos(j), Pauli::Z)] });
    }
    terms
}

#[derive(Copy, Clone, Debug, PartialEq, Eq, Hash)]
pub enum Spin {
    Down,
    Up,
}

impl Spin {
    /// Basis index in the (down, up) ordering.
    pub fn index(self) -> usize {
        match self {
            Spin::Down => 0,
            Spin::Up => 1,
        }
    }

    /// Pauli-Z eigenvalue.
    pub fn z(self) -> f64 {
        match self {
            Spin::Down => -1.0,
            Spin::Up => 1.0,
        }
    }
}

/// Product configuration of all `N` chain spins.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct ProductState {
    layout: ChainLayout,
    spins: Vec<Spin>,
    gauge_invariant: bool,
}

impl ProductState {
    pub fn new(layout: ChainLayout, spins: Vec<Spin>) -> Result<Self> {
        if spins.len() != layout.num_spins() {
            return Err(Error::InvalidParameter(format!(
                "product state needs {} spins, got {}",
                layout.num_spins(),
                spins.len()
            )));
        }
        let mut state = Self { layout, spins, gauge_invariant: false };
        state.gauge_invariant = gauss_operators(layout, BOUNDARY_FLUX)
            .iter()
            .all(|g| g.eigenvalue_on(&state) == 1.0);
        Ok(state)
    }

    /// Matter on site `i` is occupied (spin up) iff `occupied[i]`; links are
    /// then fixed by Gauss's law starting from zero incoming flux.
    pub fn from_matter(layout: ChainLayout, occupied: &[bool]) -> Result<Self> {
        if occupied.len() != layout.sites() {
            return Err(Error::InvalidParameter("matter configuration has wrong length".into()));
        }
        let mut spins = Vec::with_capacity(layout.num_spins());
        let mut flux_left = BOUNDARY_FLUX;
        for (i, &occ) in occupied.iter().enumerate() {
            let s = if occ { Spin::Up } else { Spin::Down };
            spins.push(s);
            if i + 1 < layout.sites() {
                // G_i = ±τ_left σ τ_right = +1 fixes τ_right.
                let sign = if i % 2 == 0 { -1.0 } else { 1.0 };
                let flux_right = 1.0 / (sign * flux_left * s.z());
                spins.push(if flux_right > 0.0 { Spin::Up } else { Spin::Down });
                flux_left = flux_right;
            }
        }
        Self::new(layout, spins)
    }

    pub fn layout(&self) -> ChainLayout {
        self.layout
    }

    pub fn spins(&self) -> &[Spin] {
        &self.spins
    }

    pub fn gauge_invariant(&self) -> bool {
        self.gauge_invariant
    }
}

/// Odd sites filled, even sites empty, no flux anywhere.
pub fn strong_coupling_vacuum(layout: ChainLayout) -> ProductState {
    let occupied: Vec<bool> = (0..layout.sites()).map(|i| i % 2 == 1).collect();
    ProductState::from_matter(layout, &occupied).expect("vacuum matches layout")
}

/// Local Gauss operator `G_i`; `(-1)` on even sites, `(+1)` on odd sites
/// times `τ^Z_{i-1,i} σ^Z_i τ^Z_{i,i+1}`, with missing boundary links
/// replaced by the frozen boundary flux.
#[derive(Clone, Debug)]
pub struct GaussOperator {
    pub site: usize,
    /// Leftmost chain position of the support.
    pub start: usize,
    /// Number of contiguous spins in the support (2 or 3).
    pub width: usize,
    pub matrix: Array2<C64>,
    // Scalar absorbed from missing links times the staggered sign.
    prefactor: f64,
}

impl GaussOperator {
    /// Eigenvalue on a product configuration (G is diagonal).
    pub fn eigenvalue_on(&self, state: &ProductState) -> f64 {
        self.prefactor
            * state.spins()[self.start..self.start + self.width]
                .iter()
                .map(|s| s.z())
                .product::<f64>()
    }

    pub fn as_local(&self) -> LocalOperator {
        LocalOperator { start: self.start, width: self.width, matrix: self.matrix.clone() }
    }
}

pub fn gauss_operators(layout: ChainLayout, boundary_flux: f64) -> Vec<GaussOperator> {
    let last = layout.sites() - 1;
    (0..layout.sites())
        .map(|i| {
            let mut prefactor = if i % 2 == 0 { -1.0 } else { 1.0 };
            let mut start = layout.site_pos(i);
            let mut width = 1;
            if i == 0 {
                prefactor *= boundary_flux;
            } else {
                start -= 1;
                width += 1;
            }
            if i == last {
                prefactor *= boundary_flux;
            } else {
                width += 1;
            }
            let matrix = kron_all(&vec![sigma_z(); width]) * C64::from(prefactor);
            GaussOperator { site: i, start, width, matrix, prefactor }
        })
        .collect()
}

/// An operator on 1–3 contiguous chain positions.
#[derive(Clone, Debug, PartialEq)]
pub struct LocalOperator {
    pub start: usize,
    pub width: usize,
    /// `2^width`-dimensional, leftmost position most significant.
    pub matrix: Array2<C64>,
}

impl LocalOperator {
    pub fn new(start: usize, matrix: Array2<C64>) -> Self {
        let width = matrix.nrows().trailing_zeros() as usize;
        assert_eq!(1 << width, matrix.nrows(), "local operator dimension must be a power of two");
        Self { start, width, matrix }
    }
}

/// Named local observables.
#[derive(Copy, Clone, Debug, PartialEq, Eq)]
pub enum Observable {
    SigmaZSite(usize),
    TauZLink(usize),
    Gauss(usize),
    EnergyCluster(usize),
}

pub fn local_operator(params: &ModelParams, obs: Observable) -> Result<LocalOperator> {
    let layout = params.layout();
    let check = |what, index: usize, len: usize| {
        if index < len {
            Ok(())
        } else {
            Err(Error::OutOfRange { what, index, len })
        }
    };
    match obs {
        Observable::SigmaZSite(i) => {
            check("site", i, layout.sites())?;
            Ok(LocalOperator::new(layout.site_pos(i), sigma_z()))
        }
        Observable::TauZLink(i) => {
            check("link", i, layout.links())?;
            Ok(LocalOperator::new(layout.link_pos(i), sigma_z()))
        }
        Observable::Gauss(i) => {
            check("site", i, layout.sites())?;
            Ok(gauss_operators(layout, BOUNDARY_FLUX).swap_remove(i).as_local())
        }
        Observable::EnergyCluster(j) => {
            check("cluster", j, layout.num_clusters())?;
            let term = cluster_terms(params).swap_remove(j);
            Ok(LocalOperator::new(term.start(), term.h))
        }
    }
}
