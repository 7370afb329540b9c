//! Dense complex linear algebra helpers shared across the crate.
//!
//! Matrices are `ndarray::Array2<Complex64>` in standard (row-major) layout.
//! Vectorization follows the column-stacking convention: the vector index of
//! the matrix unit E_rc is `c * d + r`, so the map rho -> A rho B has the
//! matrix `transpose(B) ⊗ A` on vectorized inputs.

use ndarray::{Array1, Array2};
use ndarray_linalg::{EigValsh, Eigh, Inverse, SVD, UPLO};
use num_complex::Complex64;

use crate::error::{Error, Result};

/// Complex scalar type used throughout the crate.
pub type C64 = Complex64;

/// Complex zero.
pub const C_ZERO: C64 = C64::new(0.0, 0.0);
/// Complex one.
pub const C_ONE: C64 = C64::new(1.0, 0.0);
/// Imaginary unit.
pub const C_I: C64 = C64::new(0.0, 1.0);

/// Conjugate transpose.
pub fn dagger(a: &Array2<C64>) -> Array2<C64> {
    a.t().mapv(|z| z.conj())
}

/// Commutator `a b - b a`.
pub fn commutator(a: &Array2<C64>, b: &Array2<C64>) -> Array2<C64> {
    a.dot(b) - b.dot(a)
}

/// Anticommutator `a b + b a`.
pub fn anticommutator(a: &Array2<C64>, b: &Array2<C64>) -> Array2<C64> {
    a.dot(b) + b.dot(a)
}

/// Kronecker product with the first factor most significant.
pub fn kron(a: &Array2<C64>, b: &Array2<C64>) -> Array2<C64> {
    let (ar, ac) = a.dim();
    let (br, bc) = b.dim();
    let mut out = Array2::zeros((ar * br, ac * bc));
    for i in 0..ar {
        for j in 0..ac {
            let aij = a[[i, j]];
            if aij == C_ZERO {
                continue;
            }
            for k in 0..br {
                for l in 0..bc {
                    out[[i * br + k, j * bc + l]] = aij * b[[k, l]];
                }
            }
        }
    }
    out
}

/// Identity matrix of dimension `d`.
pub fn eye(d: usize) -> Array2<C64> {
    Array2::eye(d)
}

/// Trace of the matrix product `x y` without forming the product:
/// the entrywise sum of x[i, j] y[j, i].
pub fn trace_of_product(x: &Array2<C64>, y: &Array2<C64>) -> C64 {
    let n = x.nrows();
    let mut acc = C_ZERO;
    for i in 0..n {
        for j in 0..n {
            acc += x[[i, j]] * y[[j, i]];
        }
    }
    acc
}

/// Operator (spectral) norm: the largest singular value.
///
/// Uses a values-only LAPACK SVD, which is both correct for non-normal
/// inputs and the fastest dense route available here.
pub fn op_norm(a: &Array2<C64>) -> f64 {
    if a.iter().all(|z| z.norm_sqr() == 0.0) {
        return 0.0;
    }
    let (_, s, _) = a.svd(false, false).expect("LAPACK svd failed");
    s.iter().cloned().fold(0.0, f64::max)
}

/// Frobenius norm.
pub fn frobenius_norm(a: &Array2<C64>) -> f64 {
    a.iter().map(|z| z.norm_sqr()).sum::<f64>().sqrt()
}

/// Largest absolute entry.
pub fn max_abs(a: &Array2<C64>) -> f64 {
    a.iter().map(|z| z.norm()).fold(0.0, f64::max)
}

/// Largest deviation from Hermiticity, `max_ij |a_ij - conj(a_ji)|`.
pub fn hermiticity_deviation(a: &Array2<C64>) -> f64 {
    let n = a.nrows();
    let mut dev: f64 = 0.0;
    for r in 0..n {
        for c in r..n {
            dev = dev.max((a[[r, c]] - a[[c, r]].conj()).norm());
        }
    }
    dev
}

/// Eigenvalues of a Hermitian matrix, ascending.
pub fn eigvalsh(a: &Array2<C64>) -> Result<Array1<f64>> {
    a.eigvalsh(UPLO::Lower)
        .map_err(|_| Error::NumericalCheck { check: "eigvalsh", value: f64::NAN })
}

/// Eigendecomposition of a Hermitian matrix (ascending eigenvalues).
pub fn eigh(a: &Array2<C64>) -> Result<(Array1<f64>, Array2<C64>)> {
    a.eigh(UPLO::Lower)
        .map_err(|_| Error::NumericalCheck { check: "eigh", value: f64::NAN })
}

/// Column-stacking vectorization: `vec(A)[c * d + r] = A[r, c]`.
pub fn vectorize(a: &Array2<C64>) -> Array1<C64> {
    let d = a.nrows();
    let mut v = Array1::zeros(d * d);
    for c in 0..d {
        for r in 0..d {
            v[c * d + r] = a[[r, c]];
        }
    }
    v
}

/// Inverse of [`vectorize`].
pub fn unvectorize(v: &Array1<C64>, d: usize) -> Array2<C64> {
    let mut a = Array2::zeros((d, d));
    for c in 0..d {
        for r in 0..d {
            a[[r, c]] = v[c * d + r];
        }
    }
    a
}

/// Trace of a square matrix.
pub fn trace(a: &Array2<C64>) -> C64 {
    a.diag().iter().sum()
}

/// Hilbert-Schmidt inner product `Tr(a† b)`.
pub fn hs_dot(a: &Array2<C64>, b: &Array2<C64>) -> C64 {
    a.iter().zip(b.iter()).map(|(x, y)| x.conj() * y).sum()
}

/// Matrix 1-norm (maximum absolute column sum), used for exponential scaling.
fn one_norm(a: &Array2<C64>) -> f64 {
    let mut best: f64 = 0.0;
    for c in a.columns() {
        best = best.max(c.iter().map(|z| z.norm()).sum());
    }
    best
}

/// Matrix exponential by scaling and squaring with a degree-13 Pade
/// approximant. Intended for the moderate dimensions used in propagator
/// cross-checks and local splitting steps.
pub fn expm(a: &Array2<C64>) -> Result<Array2<C64>> {
    const THETA_13: f64 = 5.371_920_351_148_152;
    let b: [f64; 14] = [
        64_764_752_532_480_000.0,
        32_382_376_266_240_000.0,
        7_771_770_303_897_600.0,
        1_187_353_796_428_800.0,
        129_060_195_264_000.0,
        10_559_470_521_600.0,
        670_442_572_800.0,
        33_522_128_640.0,
        1_323_241_920.0,
        40_840_800.0,
        960_960.0,
        16_380.0,
        182.0,
        1.0,
    ];
    let d = a.nrows();
    if d != a.ncols() {
        return Err(Error::DimensionMismatch { left: d, right: a.ncols() });
    }
    let norm = one_norm(a);
    let s = if norm > THETA_13 {
        (norm / THETA_13).log2().ceil() as u32
    } else {
        0
    };
    let scaled = a.mapv(|z| z / C64::new(2f64.powi(s as i32), 0.0));

    let a2 = scaled.dot(&scaled);
    let a4 = a2.dot(&a2);
    let a6 = a2.dot(&a4);
    let id = eye(d);

    let u_inner = a6.mapv(|z| z * b[13]) + a4.mapv(|z| z * b[11]) + a2.mapv(|z| z * b[9]);
    let u_poly = a6.dot(&u_inner)
        + a6.mapv(|z| z * b[7])
        + a4.mapv(|z| z * b[5])
        + a2.mapv(|z| z * b[3])
        + id.mapv(|z| z * b[1]);
    let u = scaled.dot(&u_poly);

    let v_inner = a6.mapv(|z| z * b[12]) + a4.mapv(|z| z * b[10]) + a2.mapv(|z| z * b[8]);
    let v = a6.dot(&v_inner)
        + a6.mapv(|z| z * b[6])
        + a4.mapv(|z| z * b[4])
        + a2.mapv(|z| z * b[2])
        + id.mapv(|z| z * b[0]);

    let denom = &v - &u;
    let numer = &v + &u;
    let denom_inv = denom
        .inv()
        .map_err(|_| Error::NumericalCheck { check: "expm denominator inversion", value: norm })?;
    let mut r = denom_inv.dot(&numer);
    for _ in 0..s {
        r = r.dot(&r);
    }
    Ok(r)
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;
    use ndarray::array;

    fn pauli_x() -> Array2<C64> {
        array![[C_ZERO, C_ONE], [C_ONE, C_ZERO]]
    }

    fn pauli_y() -> Array2<C64> {
        array![[C_ZERO, -C_I], [C_I, C_ZERO]]
    }

    fn pauli_z() -> Array2<C64> {
        array![[C_ONE, C_ZERO], [C_ZERO, -C_ONE]]
    }

    #[test]
    fn vectorization_round_trips_and_indexes_column_major() {
        let a = array![
            [C64::new(1.0, 2.0), C64::new(3.0, 4.0)],
            [C64::new(5.0, 6.0), C64::new(7.0, 8.0)]
        ];
        let v = vectorize(&a);
        assert_eq!(v[0], a[[0, 0]]);
        assert_eq!(v[1], a[[1, 0]]);
        assert_eq!(v[2], a[[0, 1]]);
        assert_eq!(v[3], a[[1, 1]]);
        let back = unvectorize(&v, 2);
        assert_eq!(back, a);
    }

    #[test]
    fn sandwich_map_is_bt_kron_a() {
        // rho -> A rho B must act as transpose(B) ⊗ A on vec(rho).
        let a = pauli_x();
        let b = pauli_y();
        let rho = array![
            [C64::new(0.7, 0.0), C64::new(0.1, -0.2)],
            [C64::new(0.1, 0.2), C64::new(0.3, 0.0)]
        ];
        let direct = a.dot(&rho).dot(&b);
        let superop = kron(&b.t().to_owned(), &a);
        let via_vec = unvectorize(&superop.dot(&vectorize(&rho)), 2);
        assert!(max_abs(&(&direct - &via_vec)) < 1e-14);
    }

    #[test]
    fn op_norm_matches_known_values() {
        assert_abs_diff_eq!(op_norm(&pauli_x()), 1.0, epsilon = 1e-12);
        let j = array![[C_ZERO, C_ONE], [C_ZERO, C_ZERO]];
        assert_abs_diff_eq!(op_norm(&j), 1.0, epsilon = 1e-12);
        let scaled = j.mapv(|z| z * C64::new(3.5, 0.0));
        assert_abs_diff_eq!(op_norm(&scaled), 3.5, epsilon = 1e-12);
        let zero: Array2<C64> = Array2::zeros((3, 3));
        assert_eq!(op_norm(&zero), 0.0);
    }

    #[test]
    fn expm_reproduces_pauli_rotation() {
        // exp(-i pi/2 X) = -i X.
        let gen = pauli_x().mapv(|z| z * (-C_I) * C64::new(std::f64::consts::FRAC_PI_2, 0.0));
        let u = expm(&gen).unwrap();
        let expected = pauli_x().mapv(|z| z * (-C_I));
        assert!(max_abs(&(&u - &expected)) < 1e-13);
    }

    #[test]
    fn expm_handles_large_norms_by_scaling() {
        let gen = pauli_z().mapv(|z| z * C64::new(0.0, 40.0));
        let u = expm(&gen).unwrap();
        let expected = array![
            [C64::from_polar(1.0, 40.0), C_ZERO],
            [C_ZERO, C64::from_polar(1.0, -40.0)]
        ];
        assert!(max_abs(&(&u - &expected)) < 1e-10);
    }

    #[test]
    fn hermiticity_deviation_detects_asymmetry() {
        let mut a = pauli_y();
        assert_abs_diff_eq!(hermiticity_deviation(&a), 0.0, epsilon = 1e-15);
        a[[0, 1]] += C64::new(1e-3, 0.0);
        assert!(hermiticity_deviation(&a) > 5e-4);
    }

    #[test]
    fn eigvalsh_orders_ascending() {
        let vals = eigvalsh(&pauli_z()).unwrap();
        assert_abs_diff_eq!(vals[0], -1.0, epsilon = 1e-12);
        assert_abs_diff_eq!(vals[1], 1.0, epsilon = 1e-12);
    }
}
