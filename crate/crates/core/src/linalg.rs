//! Small dense complex-matrix helpers for the `(A, B)` variational pair.

use nalgebra::DMatrix;
use num_complex::Complex64;

pub type CMatrix = DMatrix<Complex64>;
pub type RMatrix = DMatrix<f64>;

pub fn identity(d: usize) -> CMatrix {
    CMatrix::identity(d, d)
}

pub fn from_real(m: &RMatrix) -> CMatrix {
    m.map(|v| Complex64::new(v, 0.0))
}

/// Builds a complex matrix from row-major real and imaginary parts.
pub fn from_parts(d: usize, re: &[f64], im: &[f64]) -> CMatrix {
    assert_eq!(re.len(), d * d);
    assert_eq!(im.len(), d * d);
    CMatrix::from_fn(d, d, |r, c| Complex64::new(re[r * d + c], im[r * d + c]))
}

/// Row-major real and imaginary parts.
pub fn to_parts(m: &CMatrix) -> (Vec<f64>, Vec<f64>) {
    let d = m.nrows();
    let mut re = Vec::with_capacity(d * d);
    let mut im = Vec::with_capacity(d * d);
    for r in 0..d {
        for c in 0..m.ncols() {
            re.push(m[(r, c)].re);
            im.push(m[(r, c)].im);
        }
    }
    (re, im)
}

pub fn frobenius(m: &CMatrix) -> f64 {
    m.iter().map(|z| z.norm_sqr()).sum::<f64>().sqrt()
}

/// Largest singular value.
pub fn spectral_norm(m: &CMatrix) -> f64 {
    if m.nrows() == 1 {
        return m[(0, 0)].norm();
    }
    m.clone()
        .singular_values()
        .iter()
        .cloned()
        .fold(0.0, f64::max)
}

/// Residuals of the two admissibility conditions on `(A, B)`:
/// `||A^t B - B^t A||` and `||A^* B + B^* A - 2I||` (Frobenius), each divided
/// by `max(1, ||A|| ||B||)` so that growing (hyperbolic) pairs are judged by
/// relative round-off.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Cond1Residual {
    pub symmetry: f64,
    pub normalization: f64,
}

impl Cond1Residual {
    pub fn max(&self) -> f64 {
        self.symmetry.max(self.normalization)
    }
}

pub fn cond1_residual(a: &CMatrix, b: &CMatrix) -> Cond1Residual {
    let d = a.nrows();
    let scale = (frobenius(a) * frobenius(b)).max(1.0);
    let sym = a.transpose() * b - b.transpose() * a;
    let norm = a.adjoint() * b + b.adjoint() * a - identity(d) * Complex64::new(2.0, 0.0);
    Cond1Residual {
        symmetry: frobenius(&sym) / scale,
        normalization: frobenius(&norm) / scale,
    }
}

pub fn det(m: &CMatrix) -> Complex64 {
    m.determinant()
}

pub fn inverse(m: &CMatrix) -> Option<CMatrix> {
    m.clone().try_inverse()
}

/// Wraps an angle difference into `(-pi, pi]`.
pub fn wrap_angle(x: f64) -> f64 {
    let two_pi = 2.0 * std::f64::consts::PI;
    let mut y = x % two_pi;
    if y > std::f64::consts::PI {
        y -= two_pi;
    } else if y <= -std::f64::consts::PI {
        y += two_pi;
    }
    y
}

/// Constructs an admissible pair from a complex symmetric `C = B A^{-1}`
/// with positive-definite real part and a unitary `U`: `A = (Re C)^{-1/2} U`,
/// `B = C A`.
pub fn admissible_pair(c: &CMatrix, u: &CMatrix) -> (CMatrix, CMatrix) {
    let p = c.map(|z| z.re);
    let eig = nalgebra::SymmetricEigen::new(p);
    let inv_sqrt = &eig.eigenvectors
        * RMatrix::from_diagonal(&eig.eigenvalues.map(|l| 1.0 / l.sqrt()))
        * eig.eigenvectors.transpose();
    let a = from_real(&inv_sqrt) * u;
    let b = c * &a;
    (a, b)
}
