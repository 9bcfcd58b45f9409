//! Dense complex linear algebra on small matrices: matrix exponential by
//! scaling and squaring with Padé approximants, an eigendecomposition oracle,
//! exponential-integrator `phi` functions and flat matrix-vector kernels.

use nalgebra::{DMatrix, DVector};
use num_complex::Complex64;

use crate::error::{Error, Result};

pub type CMatrix = DMatrix<Complex64>;
pub type CVector = DVector<Complex64>;

const PADE3: [f64; 4] = [120.0, 60.0, 12.0, 1.0];
const PADE5: [f64; 6] = [30240.0, 15120.0, 3360.0, 420.0, 30.0, 1.0];
const PADE7: [f64; 8] = [
    17297280.0, 8648640.0, 1995840.0, 277200.0, 25200.0, 1512.0, 56.0, 1.0,
];
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
// Backward-error thresholds for degrees 3, 5, 7, 9, 13.
const THETA: [f64; 5] = [
    1.495585217958292e-2,
    2.539398330063230e-1,
    9.504178996162932e-1,
    2.097847961257068e0,
    5.371920351148152e0,
];

fn c(x: f64) -> Complex64 {
    Complex64::new(x, 0.0)
}

/// Induced 1-norm.
pub fn norm1(m: &CMatrix) -> f64 {
    (0..m.ncols())
        .map(|j| m.column(j).iter().map(|z| z.norm()).sum::<f64>())
        .fold(0.0, f64::max)
}

fn is_finite(m: &CMatrix) -> bool {
    m.iter().all(|z| z.re.is_finite() && z.im.is_finite())
}

fn pade_low(a: &CMatrix, b: &[f64]) -> (CMatrix, CMatrix) {
    let n = a.nrows();
    let id = CMatrix::identity(n, n);
    let a2 = a * a;
    let mut powers = vec![id.clone(), a2.clone()];
    while powers.len() * 2 < b.len() {
        let next = powers.last().unwrap() * &a2;
        powers.push(next);
    }
    let mut u = CMatrix::zeros(n, n);
    let mut v = CMatrix::zeros(n, n);
    for (k, p) in powers.iter().enumerate() {
        v += p * c(b[2 * k]);
        if 2 * k + 1 < b.len() {
            u += p * c(b[2 * k + 1]);
        }
    }
    (a * u, v)
}

fn pade13(a: &CMatrix) -> (CMatrix, CMatrix) {
    let b = PADE13;
    let n = a.nrows();
    let id = CMatrix::identity(n, n);
    let a2 = a * a;
    let a4 = &a2 * &a2;
    let a6 = &a4 * &a2;
    let inner_u = &a6 * c(b[13]) + &a4 * c(b[11]) + &a2 * c(b[9]);
    let u = a * (&a6 * inner_u + &a6 * c(b[7]) + &a4 * c(b[5]) + &a2 * c(b[3]) + &id * c(b[1]));
    let inner_v = &a6 * c(b[12]) + &a4 * c(b[10]) + &a2 * c(b[8]);
    let v = &a6 * inner_v + &a6 * c(b[6]) + &a4 * c(b[4]) + &a2 * c(b[2]) + &id * c(b[0]);
    (u, v)
}

/// `exp(t M)` by scaling and squaring with a Padé approximant of degree
/// 3, 5, 7, 9 or 13 chosen from the 1-norm.
pub fn matrix_exponential(m: &CMatrix, t: f64) -> Result<CMatrix> {
    if m.nrows() != m.ncols() {
        return Err(Error::InvalidInput("matrix exponential needs a square matrix".into()));
    }
    if !is_finite(m) || !t.is_finite() {
        return Err(Error::InvalidInput("matrix exponential of non-finite input".into()));
    }
    let n = m.nrows();
    if n == 0 {
        return Ok(CMatrix::zeros(0, 0));
    }
    let a = m * c(t);
    let norm = norm1(&a);
    if norm == 0.0 {
        return Ok(CMatrix::identity(n, n));
    }
    let (u, v, squarings) = if norm <= THETA[0] {
        let (u, v) = pade_low(&a, &PADE3);
        (u, v, 0)
    } else if norm <= THETA[1] {
        let (u, v) = pade_low(&a, &PADE5);
        (u, v, 0)
    } else if norm <= THETA[2] {
        let (u, v) = pade_low(&a, &PADE7);
        (u, v, 0)
    } else if norm <= THETA[3] {
        let (u, v) = pade_low(&a, &PADE9);
        (u, v, 0)
    } else {
        let s = (norm / THETA[4]).log2().ceil().max(0.0) as i32;
        let scaled = &a * c(2f64.powi(-s));
        let (u, v) = pade13(&scaled);
        (u, v, s)
    };
    let p = &v + &u;
    let q = &v - &u;
    let mut r = q
        .lu()
        .solve(&p)
        .ok_or_else(|| Error::Singular("Padé denominator is singular".into()))?;
    for _ in 0..squarings {
        r = &r * &r;
    }
    if !is_finite(&r) {
        return Err(Error::Overflow { scale: norm });
    }
    Ok(r)
}

/// Eigenvalues of a general complex matrix via the Schur form.
pub fn eigenvalues(m: &CMatrix) -> Result<Vec<Complex64>> {
    let schur = nalgebra::linalg::Schur::try_new(m.clone(), 1e-15, 10_000)
        .ok_or_else(|| Error::Singular("Schur iteration did not converge".into()))?;
    let t = schur.unpack().1;
    Ok((0..t.nrows()).map(|i| t[(i, i)]).collect())
}

/// Unit vector spanning the numerical null space of `m` (right singular vector
/// of the smallest singular value), with that singular value.
pub fn null_vector(m: &CMatrix) -> (CVector, f64) {
    let svd = m.clone().svd(false, true);
    let v_t = svd.v_t.expect("requested right singular vectors");
    let sv = &svd.singular_values;
    let mut k = 0;
    for i in 1..sv.len() {
        if sv[i] < sv[k] {
            k = i;
        }
    }
    let v: CVector = v_t.row(k).adjoint();
    (v, sv[k])
}

/// Spectral condition number `sigma_max / sigma_min`.
pub fn condition_number(m: &CMatrix) -> f64 {
    let sv = m.clone().singular_values();
    let max = sv.iter().cloned().fold(0.0, f64::max);
    let min = sv.iter().cloned().fold(f64::INFINITY, f64::min);
    if min == 0.0 {
        f64::INFINITY
    } else {
        max / min
    }
}

/// Eigendecomposition `M = V diag(lambda) V^{-1}` with eigenvectors taken as
/// null vectors of `M - lambda I`. Returns `None` when the eigenvector matrix
/// is numerically singular (defective or nearly defective `M`).
pub fn eigendecomposition(m: &CMatrix) -> Result<Option<(Vec<Complex64>, CMatrix)>> {
    let n = m.nrows();
    let lambda = eigenvalues(m)?;
    let mut v = CMatrix::zeros(n, n);
    for (k, &l) in lambda.iter().enumerate() {
        let shifted = m - CMatrix::identity(n, n) * l;
        let (vec, _) = null_vector(&shifted);
        v.set_column(k, &vec);
    }
    if condition_number(&v) > 1e12 {
        return Ok(None);
    }
    Ok(Some((lambda, v)))
}

/// `exp(t M)` through the eigendecomposition; `None` for ill-conditioned
/// eigenvector matrices (condition number at least `1e8`).
pub fn expm_eigen(m: &CMatrix, t: f64) -> Result<Option<CMatrix>> {
    let Some((lambda, v)) = eigendecomposition(m)? else {
        return Ok(None);
    };
    if condition_number(&v) >= 1e8 {
        return Ok(None);
    }
    let inv = v
        .clone()
        .try_inverse()
        .ok_or_else(|| Error::Singular("eigenvector matrix".into()))?;
    let d = CMatrix::from_diagonal(&CVector::from_iterator(
        lambda.len(),
        lambda.iter().map(|l| (l * t).exp()),
    ));
    Ok(Some(&v * d * inv))
}

/// `(exp(A), phi_1(A), phi_2(A))` with `phi_1(z) = (e^z - 1)/z` and
/// `phi_2(z) = (e^z - 1 - z)/z^2`, read off the exponential of the block
/// matrix `[[A, I, 0], [0, 0, I], [0, 0, 0]]`.
pub fn phi_functions(a: &CMatrix) -> Result<(CMatrix, CMatrix, CMatrix)> {
    let n = a.nrows();
    let mut big = CMatrix::zeros(3 * n, 3 * n);
    big.view_mut((0, 0), (n, n)).copy_from(a);
    for i in 0..n {
        big[(i, n + i)] = c(1.0);
        big[(n + i, 2 * n + i)] = c(1.0);
    }
    let e = matrix_exponential(&big, 1.0)?;
    Ok((
        e.view((0, 0), (n, n)).into_owned(),
        e.view((0, n), (n, n)).into_owned(),
        e.view((0, 2 * n), (n, n)).into_owned(),
    ))
}

/// Row-major flattening.
pub fn flatten(m: &CMatrix) -> Vec<Complex64> {
    let mut out = Vec::with_capacity(m.nrows() * m.ncols());
    for i in 0..m.nrows() {
        for j in 0..m.ncols() {
            out.push(m[(i, j)]);
        }
    }
    out
}

/// `out = M x` for a row-major `n x n` matrix.
#[inline]
pub fn matvec(m: &[Complex64], x: &[Complex64], out: &mut [Complex64]) {
    let n = x.len();
    for i in 0..n {
        let row = &m[i * n..(i + 1) * n];
        let mut acc = Complex64::new(0.0, 0.0);
        for j in 0..n {
            acc += row[j] * x[j];
        }
        out[i] = acc;
    }
}

/// `out += M x` for a row-major `n x n` matrix.
#[inline]
pub fn matvec_add(m: &[Complex64], x: &[Complex64], out: &mut [Complex64]) {
    let n = x.len();
    for i in 0..n {
        let row = &m[i * n..(i + 1) * n];
        let mut acc = Complex64::new(0.0, 0.0);
        for j in 0..n {
            acc += row[j] * x[j];
        }
        out[i] += acc;
    }
}

/// Relative Frobenius distance `||a - b|| / max(||b||, tiny)`.
pub fn relative_error(a: &CMatrix, b: &CMatrix) -> f64 {
    (a - b).norm() / b.norm().max(f64::MIN_POSITIVE)
}
