//! Small dense helpers: Pauli matrices, Kronecker products, and a
//! scaling-and-squaring Padé matrix exponential.

use ndarray::{Array1, Array2, ArrayView2};
use ndarray_linalg::{Factorize, Solve};
use num_complex::ComplexFloat;

use crate::{Result, C64};

const ZERO: C64 = C64 { re: 0.0, im: 0.0 };
const ONE: C64 = C64 { re: 1.0, im: 0.0 };

/// Local basis ordering is (down, up) = (0, 1), so σ^Z = diag(-1, +1).
pub fn sigma_z() -> Array2<C64> {
    Array2::from_diag(&Array1::from(vec![-ONE, ONE]))
}

pub fn sigma_x() -> Array2<C64> {
    ndarray::array![[ZERO, ONE], [ONE, ZERO]]
}

/// σ⁺ = |up⟩⟨down|.
pub fn sigma_plus() -> Array2<C64> {
    ndarray::array![[ZERO, ZERO], [ONE, ZERO]]
}

/// σ⁻ = |down⟩⟨up|.
pub fn sigma_minus() -> Array2<C64> {
    ndarray::array![[ZERO, ONE], [ZERO, ZERO]]
}

pub fn identity(n: usize) -> Array2<C64> {
    Array2::eye(n)
}

/// `a ⊗ b`, with `a` acting on the more significant (leftmost) factor.
pub fn kron(a: &ArrayView2<C64>, b: &ArrayView2<C64>) -> Array2<C64> {
    let (ar, ac) = a.dim();
    let (br, bc) = b.dim();
    Array2::from_shape_fn((ar * br, ac * bc), |(i, j)| a[[i / br, j / bc]] * b[[i % br, j % bc]])
}

/// Kronecker product of a list of factors, leftmost first.
pub fn kron_all(factors: &[Array2<C64>]) -> Array2<C64> {
    factors
        .iter()
        .fold(Array2::eye(1), |acc, f| kron(&acc.view(), &f.view()))
}

pub fn dagger(a: &ArrayView2<C64>) -> Array2<C64> {
    a.t().mapv(|z| z.conj())
}

pub fn frobenius_norm(a: &ArrayView2<C64>) -> f64 {
    a.iter().map(|z| z.norm_sqr()).sum::<f64>().sqrt()
}

fn one_norm(a: &Array2<C64>) -> f64 {
    a.columns()
        .into_iter()
        .map(|c| c.iter().map(|z| z.abs()).sum::<f64>())
        .fold(0.0, f64::max)
}

// Padé coefficients and 1-norm thresholds for double precision.
const PADE3: [f64; 4] = [120.0, 60.0, 12.0, 1.0];
const PADE5: [f64; 6] = [30240.0, 15120.0, 3360.0, 420.0, 30.0, 1.0];
const PADE7: [f64; 8] = [17297280.0, 8648640.0, 1995840.0, 277200.0, 25200.0, 1512.0, 56.0, 1.0];
const PADE9: [f64; 10] = [
    17643225600.0,
    8821612800.0,
    2075673600.0,
    302702400.0,
    30270240.0,
    2162160.0,
    110880.0,
    3960.0,
    90.0,
    1.0,
];
const PADE13: [f64; 14] = [
    64764752532480000.0,
    32382376266240000.0,
    7771770303897600.0,
    1187353796428800.0,
    129060195264000.0,
    10559470521600.0,
    670442572800.0,
    33522128640.0,
    1323241920.0,
    40840800.0,
    960960.0,
    16380.0,
    182.0,
    1.0,
];
const THETA: [(f64, usize); 4] = [
    (1.495585217958292e-2, 3),
    (2.539398330063230e-1, 5),
    (9.504178996162932e-1, 7),
    (2.097847961257068e0, 9),
];
const THETA13: f64 = 5.371920351148152;

/// Matrix exponential `e^A` of a small dense complex matrix.
///
/// Scaling and squaring with diagonal Padé approximants of degree 3–13,
/// chosen from the 1-norm of `A` so the backward error stays at unit
/// roundoff.
pub fn expm(a: &ArrayView2<C64>) -> Result<Array2<C64>> {
    let n = a.nrows();
    assert_eq!(n, a.ncols(), "expm needs a square matrix");
    let a = a.to_owned();
    let norm = one_norm(&a);
    if norm == 0.0 {
        return Ok(identity(n));
    }
    let eye = identity(n);
    let a2 = a.dot(&a);

    for &(theta, m) in THETA.iter() {
        if norm <= theta {
            let b: &[f64] = match m {
                3 => &PADE3,
                5 => &PADE5,
                7 => &PADE7,
                _ => &PADE9,
            };
            // Even powers A^0, A^2, ..., A^(m-1).
            let mut pow = eye.clone();
            let mut u_inner = Array2::<C64>::zeros((n, n));
            let mut v = Array2::<C64>::zeros((n, n));
            for k in 0..=(m / 2) {
                v.scaled_add(C64::from(b[2 * k]), &pow);
                u_inner.scaled_add(C64::from(b[2 * k + 1]), &pow);
                if k < m / 2 {
                    pow = pow.dot(&a2);
                }
            }
            let u = a.dot(&u_inner);
            return pade_solve(&u, &v);
        }
    }

    let s = if norm > THETA13 { (norm / THETA13).log2().ceil() as i32 } else { 0 };
    let scale = C64::from(2f64.powi(-s));
    let a = a.mapv(|z| z * scale);
    let a2 = a.dot(&a);
    let a4 = a2.dot(&a2);
    let a6 = a4.dot(&a2);
    let b = PADE13.map(C64::from);
    let u_hi = &a6 * b[13] + &a4 * b[11] + &a2 * b[9];
    let u_inner = a6.dot(&u_hi) + &a6 * b[7] + &a4 * b[5] + &a2 * b[3] + &eye * b[1];
    let u = a.dot(&u_inner);
    let v_hi = &a6 * b[12] + &a4 * b[10] + &a2 * b[8];
    let v = a6.dot(&v_hi) + &a6 * b[6] + &a4 * b[4] + &a2 * b[2] + &eye * b[0];
    let mut r = pade_solve(&u, &v)?;
    for _ in 0..s {
        r = r.dot(&r);
    }
    Ok(r)
}

// Solves (V - U) R = (V + U) column by column.
fn pade_solve(u: &Array2<C64>, v: &Array2<C64>) -> Result<Array2<C64>> {
    let p = v + u;
    let q = v - u;
    let lu = q.factorize()?;
    let n = u.nrows();
    let mut r = Array2::<C64>::zeros((n, n));
    for j in 0..n {
        let col = lu.solve(&p.column(j).to_owned())?;
        r.column_mut(j).assign(&col);
    }
    Ok(r)
}
