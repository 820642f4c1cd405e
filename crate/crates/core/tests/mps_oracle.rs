//! MPS operations checked against dense state vectors.

use ndarray::{Array1, Array2};
use num_complex::Complex64 as C;
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use z2lgt::exact::{entropy_exact, StateVector};
use z2lgt::model::{ChainLayout, LocalOperator};
use z2lgt::mps::{MpsState, Sweep, Truncation};
use z2lgt::EntropyBase;

fn random_amps(rng: &mut ChaCha8Rng, n: usize) -> Array1<C> {
    let mut v: Array1<C> = (0..1usize << n).map(|_| C::new(rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0))).collect();
    let norm = v.iter().map(|z| z.norm_sqr()).sum::<f64>().sqrt();
    v.mapv_inplace(|z| z / norm);
    v
}

fn random_gate(rng: &mut ChaCha8Rng) -> Array2<C> {
    Array2::from_shape_fn((8, 8), |_| C::new(rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0)))
}

fn max_diff(a: &Array1<C>, b: &Array1<C>) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y).norm()).fold(0.0, f64::max)
}

#[test]
fn entropy_of_random_state_matches_dense() {
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    for sites in [2, 4, 6] {
        let layout = ChainLayout::new(sites).unwrap();
        let n = layout.num_spins();
        let amps = random_amps(&mut rng, n);
        let dense = StateVector::from_amplitudes(layout, amps.clone()).unwrap();
        let mut mps = MpsState::from_state_vector(amps.as_slice().unwrap(), n, Truncation::exact()).unwrap();
        for bond in 0..n - 1 {
            for base in [EntropyBase::E, EntropyBase::Two] {
                let a = mps.bond_entropy(bond, base).unwrap();
                let b = entropy_exact(&dense, bond, base).unwrap();
                assert!((a - b).abs() < 1e-10, "bond {bond}: {a} vs {b}");
            }
        }
    }
}

#[test]
fn exact_factorization_reproduces_amplitudes() {
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let amps = random_amps(&mut rng, 9);
    let mps = MpsState::from_state_vector(amps.as_slice().unwrap(), 9, Truncation::exact()).unwrap();
    assert!(mps.canonical_error().unwrap() < 1e-12);
    assert!(max_diff(&mps.to_state_vector(), &amps) < 1e-12);
}

#[test]
fn normalize_is_idempotent() {
    let mut rng = ChaCha8Rng::seed_from_u64(9);
    let amps = random_amps(&mut rng, 7).mapv(|z| z * 3.5);
    let mut mps = MpsState::from_state_vector(amps.as_slice().unwrap(), 7, Truncation::exact()).unwrap();
    let first = mps.normalize().unwrap();
    assert!((first - 3.5).abs() < 1e-12);
    let before = mps.to_state_vector();
    let second = mps.normalize().unwrap();
    assert!((second - 1.0).abs() < 1e-12);
    assert!(max_diff(&mps.to_state_vector(), &before) < 1e-14);
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    /// Untruncated gate application agrees with the dense product and leaves
    /// the state in mixed-canonical form.
    #[test]
    fn untruncated_gates_match_dense(seed in any::<u64>(), sites in 2usize..=3, ngates in 1usize..6) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let layout = ChainLayout::new(2 * sites).unwrap();
        let n = layout.num_spins();
        let amps = random_amps(&mut rng, n);
        let mut dense = StateVector::from_amplitudes(layout, amps.clone()).unwrap();
        let mut mps = MpsState::from_state_vector(amps.as_slice().unwrap(), n, Truncation::exact()).unwrap();
        for _ in 0..ngates {
            let gate = random_gate(&mut rng);
            let pos = rng.gen_range(0..=n - 3);
            let sweep = if rng.gen_bool(0.5) { Sweep::LeftToRight } else { Sweep::RightToLeft };
            mps.apply_three_site_gate(&gate, pos, sweep).unwrap();
            dense.apply_local(&LocalOperator::new(pos, gate));
            let scale = dense.normalize().unwrap();
            mps.scale(C::from(1.0 / scale));
            prop_assert!(mps.canonical_error().unwrap() < 1e-12);
        }
        prop_assert!(max_diff(&mps.to_state_vector(), dense.amplitudes()) < 1e-10);
    }

    #[test]
    fn entropy_does_not_depend_on_center(seed in any::<u64>(), target in 0usize..9) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let amps = random_amps(&mut rng, 9);
        let mut mps = MpsState::from_state_vector(amps.as_slice().unwrap(), 9, Truncation::exact()).unwrap();
        let before: Vec<f64> = (0..8).map(|b| mps.bond_entropy(b, EntropyBase::E).unwrap()).collect();
        mps.move_center(target).unwrap();
        prop_assert!(mps.canonical_error().unwrap() < 1e-12);
        for (b, s) in before.iter().enumerate() {
            prop_assert!((mps.bond_entropy(b, EntropyBase::E).unwrap() - s).abs() < 1e-10);
        }
    }

    #[test]
    fn truncation_never_keeps_more_than_allowed(seed in any::<u64>(), cap in 1usize..6) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let amps = random_amps(&mut rng, 9);
        let mps = MpsState::from_state_vector(amps.as_slice().unwrap(), 9, Truncation { max_bond: cap, cutoff: 0.0 }).unwrap();
        prop_assert!(mps.max_bond_dim() <= cap);
    }
}
