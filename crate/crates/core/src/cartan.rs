//! Cartan and Jordan projections of SL(d, R), vectors of the Cartan subspace
//! and linear functionals written in the fundamental-weight basis.
//!
//! Indices of roots, weights and index sets are 1-based throughout, so
//! `omega(k)` is the sum of the first `k` coordinates.

use std::ops::{Add, Mul, Neg, Sub};

use nalgebra::linalg::SVD;
use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub type Matrix = DMatrix<f64>;

/// Largest `|det - 1|` accepted (and silently renormalized) for input matrices.
pub const DET_TOLERANCE: f64 = 1e-6;

const SVD_MAX_ITER: usize = 10_000;

/// A vector of the Cartan subspace: `d` real entries summing to zero.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct WeylVector(Vec<f64>);

impl WeylVector {
    pub fn new(entries: Vec<f64>) -> Self {
        WeylVector(entries)
    }

    pub fn zeros(d: usize) -> Self {
        WeylVector(vec![0.0; d])
    }

    /// Builds the vector of `a_theta` whose `omega_k` values are prescribed
    /// for `k` in `theta`; roots outside `theta` vanish.
    pub fn from_theta_omegas(theta: &ThetaSet, omegas: &[f64]) -> Self {
        assert_eq!(omegas.len(), theta.indices().len());
        let d = theta.dim();
        let mut entries = vec![0.0; d];
        let mut prev_k = 0;
        let mut prev_w = 0.0;
        let ends = theta.indices().iter().copied().zip(omegas.iter().copied());
        for (k, w) in ends.chain(std::iter::once((d, 0.0))) {
            let value = (w - prev_w) / (k - prev_k) as f64;
            entries[prev_k..k].iter_mut().for_each(|e| *e = value);
            prev_k = k;
            prev_w = w;
        }
        WeylVector(entries)
    }

    pub fn dim(&self) -> usize {
        self.0.len()
    }

    pub fn entries(&self) -> &[f64] {
        &self.0
    }

    pub fn into_entries(self) -> Vec<f64> {
        self.0
    }

    /// Fundamental weight `omega_k`; `omega_0 = 0` and `omega_d` is the total.
    pub fn omega(&self, k: usize) -> f64 {
        self.0[..k].iter().sum()
    }

    /// Simple root `alpha_k = v_k - v_{k+1}` for `1 <= k < d`.
    pub fn alpha(&self, k: usize) -> f64 {
        self.0[k - 1] - self.0[k]
    }

    /// Coordinate reversal.
    pub fn hat_iota(&self) -> Self {
        WeylVector(self.0.iter().rev().copied().collect())
    }

    pub fn norm(&self) -> f64 {
        self.0.iter().map(|x| x * x).sum::<f64>().sqrt()
    }

    pub fn max_abs_diff(&self, other: &WeylVector) -> f64 {
        self.0
            .iter()
            .zip(&other.0)
            .map(|(a, b)| (a - b).abs())
            .fold(0.0, f64::max)
    }

    pub fn max_abs(&self) -> f64 {
        self.0.iter().map(|x| x.abs()).fold(0.0, f64::max)
    }

    pub fn is_dominant(&self) -> bool {
        self.0.windows(2).all(|w| w[0] >= w[1])
    }
}

impl Add for &WeylVector {
    type Output = WeylVector;
    fn add(self, rhs: &WeylVector) -> WeylVector {
        WeylVector(self.0.iter().zip(&rhs.0).map(|(a, b)| a + b).collect())
    }
}

impl Sub for &WeylVector {
    type Output = WeylVector;
    fn sub(self, rhs: &WeylVector) -> WeylVector {
        WeylVector(self.0.iter().zip(&rhs.0).map(|(a, b)| a - b).collect())
    }
}

impl Neg for &WeylVector {
    type Output = WeylVector;
    fn neg(self) -> WeylVector {
        WeylVector(self.0.iter().map(|a| -a).collect())
    }
}

impl Mul<&WeylVector> for f64 {
    type Output = WeylVector;
    fn mul(self, rhs: &WeylVector) -> WeylVector {
        WeylVector(rhs.0.iter().map(|a| self * a).collect())
    }
}

/// A non-empty subset of `{1, ..., d-1}` invariant under `k -> d - k`.
#[derive(Clone, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct ThetaSet {
    d: usize,
    indices: Vec<usize>,
}

impl ThetaSet {
    pub fn new(d: usize, indices: &[usize]) -> Result<Self> {
        if d < 2 {
            return Err(Error::InvalidInput(format!("dimension {d} is below 2")));
        }
        let mut sorted = indices.to_vec();
        sorted.sort_unstable();
        sorted.dedup();
        if sorted.is_empty() {
            return Err(Error::InvalidInput("index set is empty".into()));
        }
        if let Some(&k) = sorted.iter().find(|&&k| k == 0 || k >= d) {
            return Err(Error::BadIndex(format!("{k} is outside 1..{}", d - 1)));
        }
        if sorted.iter().any(|k| sorted.binary_search(&(d - k)).is_err()) {
            return Err(Error::AsymmetricTheta { d, indices: sorted });
        }
        Ok(ThetaSet { d, indices: sorted })
    }

    /// All simple roots, `{1, ..., d-1}`.
    pub fn full(d: usize) -> Result<Self> {
        Self::new(d, &(1..d).collect::<Vec<_>>())
    }

    /// `{1, d-1}`, the index set of the projective line and hyperplane.
    pub fn extremal(d: usize) -> Result<Self> {
        Self::new(d, &[1, d - 1])
    }

    pub fn dim(&self) -> usize {
        self.d
    }

    pub fn indices(&self) -> &[usize] {
        &self.indices
    }

    pub fn contains(&self, k: usize) -> bool {
        self.indices.binary_search(&k).is_ok()
    }

    pub fn max(&self) -> usize {
        *self.indices.last().expect("index set is non-empty")
    }
}

/// A linear functional on the Cartan subspace, `sum_k c_k omega_k`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Functional {
    d: usize,
    /// `coeffs[k - 1]` multiplies `omega_k`.
    coeffs: Vec<f64>,
}

impl Functional {
    pub fn zero(d: usize) -> Self {
        Functional { d, coeffs: vec![0.0; d - 1] }
    }

    pub fn from_omega_coefficients(d: usize, coeffs: &[(usize, f64)]) -> Result<Self> {
        let mut f = Functional::zero(d);
        for &(k, c) in coeffs {
            if k == 0 || k >= d {
                return Err(Error::BadIndex(format!("omega_{k} in dimension {d}")));
            }
            f.coeffs[k - 1] += c;
        }
        Ok(f)
    }

    pub fn omega(d: usize, k: usize) -> Result<Self> {
        Self::from_omega_coefficients(d, &[(k, 1.0)])
    }

    /// `alpha_k = 2 omega_k - omega_{k-1} - omega_{k+1}`.
    pub fn alpha(d: usize, k: usize) -> Result<Self> {
        if k == 0 || k >= d {
            return Err(Error::BadIndex(format!("alpha_{k} in dimension {d}")));
        }
        let mut terms = vec![(k, 2.0)];
        if k > 1 {
            terms.push((k - 1, -1.0));
        }
        if k + 1 < d {
            terms.push((k + 1, -1.0));
        }
        Self::from_omega_coefficients(d, &terms)
    }

    pub fn dim(&self) -> usize {
        self.d
    }

    pub fn coefficient(&self, k: usize) -> f64 {
        self.coeffs[k - 1]
    }

    pub fn support(&self) -> Vec<usize> {
        (1..self.d).filter(|&k| self.coeffs[k - 1] != 0.0).collect()
    }

    pub fn eval(&self, v: &WeylVector) -> f64 {
        let mut partial = 0.0;
        let mut total = 0.0;
        for (k, c) in self.coeffs.iter().enumerate() {
            partial += v.0[k];
            total += c * partial;
        }
        total
    }

    /// The involution `c_k -> c_{d-k}`.
    pub fn iota_star(&self) -> Functional {
        Functional { d: self.d, coeffs: self.coeffs.iter().rev().copied().collect() }
    }

    /// Expresses the restriction to `a_theta` in the weights `omega_k, k in theta`,
    /// so that `restrict(theta).eval(v) == eval(project_theta(v, theta))`.
    pub fn restrict(&self, theta: &ThetaSet) -> Functional {
        let mut out = Functional::zero(self.d);
        let mut bounds = vec![0];
        bounds.extend_from_slice(theta.indices());
        bounds.push(self.d);
        for pair in bounds.windows(2) {
            let (lo, hi) = (pair[0], pair[1]);
            for j in lo + 1..=hi {
                if j == self.d {
                    continue;
                }
                let c = self.coeffs[j - 1];
                let tau = (j - lo) as f64 / (hi - lo) as f64;
                if lo > 0 {
                    out.coeffs[lo - 1] += (1.0 - tau) * c;
                }
                if hi < self.d {
                    out.coeffs[hi - 1] += tau * c;
                }
            }
        }
        out
    }

    pub fn scaled(&self, factor: f64) -> Functional {
        Functional { d: self.d, coeffs: self.coeffs.iter().map(|c| c * factor).collect() }
    }

    pub fn plus(&self, other: &Functional) -> Functional {
        assert_eq!(self.d, other.d);
        Functional {
            d: self.d,
            coeffs: self.coeffs.iter().zip(&other.coeffs).map(|(a, b)| a + b).collect(),
        }
    }
}

/// Orthogonal projection onto `a_theta`, the subspace on which every root
/// outside `theta` vanishes. Each block of coordinates between consecutive
/// indices of `theta` is replaced by its mean.
pub fn project_theta(v: &WeylVector, theta: &ThetaSet) -> Result<WeylVector> {
    if v.dim() != theta.dim() {
        return Err(Error::SingularSystem(format!(
            "vector of dimension {} against index set of dimension {}",
            v.dim(),
            theta.dim()
        )));
    }
    let omegas: Vec<f64> = theta.indices().iter().map(|&k| v.omega(k)).collect();
    Ok(WeylVector::from_theta_omegas(theta, &omegas))
}

fn check_square(a: &Matrix) -> Result<usize> {
    let d = a.nrows();
    if d < 2 || a.ncols() != d {
        return Err(Error::InvalidInput(format!("expected a square matrix of size >= 2, got {}x{}", a.nrows(), a.ncols())));
    }
    if a.iter().any(|x| !x.is_finite()) {
        return Err(Error::InvalidInput("matrix has non-finite entries".into()));
    }
    Ok(d)
}

/// Rescales `a` to determinant one when `|det a - 1| <= DET_TOLERANCE`.
pub fn normalize_unimodular(a: &Matrix) -> Result<Matrix> {
    let d = check_square(a)?;
    let det = a.determinant();
    if !det.is_finite() || (det - 1.0).abs() > DET_TOLERANCE {
        return Err(Error::NonUnimodular { det });
    }
    Ok(a * det.abs().powf(-1.0 / d as f64))
}

/// Inverse of a unimodular matrix: the adjugate in dimension two, closed-form
/// cofactors or LU otherwise.
pub fn unimodular_inverse(a: &Matrix) -> Result<Matrix> {
    if a.nrows() == 2 {
        let (p, q, r, s) = (a[(0, 0)], a[(0, 1)], a[(1, 0)], a[(1, 1)]);
        let det = p * s - q * r;
        return Ok(Matrix::from_row_slice(2, 2, &[s, -q, -r, p]) / det);
    }
    a.clone()
        .try_inverse()
        .ok_or_else(|| Error::SingularSystem("matrix is not invertible".into()))
}

/// Singular values in weakly decreasing order.
pub fn singular_values(a: &Matrix) -> Result<Vec<f64>> {
    let svd = SVD::try_new(a.clone(), false, false, f64::EPSILON, SVD_MAX_ITER)
        .ok_or(Error::DecompositionFailure("singular value decomposition"))?;
    let mut s: Vec<f64> = svd.singular_values.iter().copied().collect();
    s.sort_by(|a, b| b.total_cmp(a));
    Ok(s)
}

/// Assembles a zero-sum log spectrum from the leading logs of a matrix and of
/// its inverse. Small values of `a` are read off as reciprocals of the large
/// values of `a^{-1}`, which keeps them accurate for badly conditioned products.
fn two_sided_log_spectrum(d: usize, top: &[f64], bottom: &[f64]) -> Result<WeylVector> {
    let half = d / 2;
    let mut out = vec![0.0; d];
    for i in 0..half {
        out[i] = top[i];
        out[d - 1 - i] = -bottom[i];
    }
    if d % 2 == 1 {
        out[half] = -out.iter().sum::<f64>();
    } else {
        let mean = out.iter().sum::<f64>() / d as f64;
        out.iter_mut().for_each(|x| *x -= mean);
    }
    if out.iter().any(|x| !x.is_finite()) {
        return Err(Error::DecompositionFailure("log spectrum"));
    }
    out.sort_by(|a, b| b.total_cmp(a));
    Ok(WeylVector(out))
}

/// Squarings used by [`log_spectral_radius`]; the estimate is exact up to a
/// relative `2^-SQUARINGS` of the eigenvector conditioning.
const SQUARINGS: usize = 64;

/// `log rho(m) = lim 2^-j log |m^(2^j)|`, by repeated squaring with
/// renormalization. Unlike a Schur form this stays accurate when the entries
/// are many orders of magnitude larger than the eigenvalues.
pub fn log_spectral_radius(m: &Matrix) -> Result<f64> {
    let mut power = m.clone();
    let (mut total, mut weight) = (0.0, 1.0);
    for _ in 0..SQUARINGS {
        let norm = power.norm();
        if !(norm > 0.0 && norm.is_finite()) {
            return Err(Error::DecompositionFailure("spectral radius"));
        }
        total += weight * norm.ln();
        power /= norm;
        power = &power * &power;
        weight *= 0.5;
    }
    Ok(total)
}

/// Zero-sum log spectrum from cumulative logs `top[k-1] = log |wedge^k a|`
/// and `bottom[k-1] = log |wedge^k a^-1|`, `k = 1..=d/2`, for either the
/// spectral radius (Jordan) or the operator norm (Cartan).
pub fn log_spectrum_from_wedges(d: usize, top: &[f64], bottom: &[f64]) -> Result<WeylVector> {
    let half = d / 2;
    if top.len() != half || bottom.len() != half {
        return Err(Error::InvalidInput(format!("expected {half} spectral radii per side")));
    }
    let moduli = |radii: &[f64]| -> Vec<f64> { (0..half).map(|i| radii[i] - if i == 0 { 0.0 } else { radii[i - 1] }).collect() };
    two_sided_log_spectrum(d, &moduli(top), &moduli(bottom))
}

fn wedge_log_radii(m: &Matrix) -> Result<Vec<f64>> {
    (1..=m.nrows() / 2)
        .map(|k| if k == 1 { log_spectral_radius(m) } else { log_spectral_radius(&crate::matgroup::exterior_power_rep(m, k)?) })
        .collect()
}

/// Cartan projection from a matrix and its (independently known) inverse.
/// No determinant check is made.
pub fn kappa_with_inverse(a: &Matrix, a_inv: &Matrix) -> Result<WeylVector> {
    let logs = |m: &Matrix| singular_values(m).map(|s| s.iter().map(|x| x.ln()).collect::<Vec<f64>>());
    two_sided_log_spectrum(a.nrows(), &logs(a)?, &logs(a_inv)?)
}

/// Jordan projection from a matrix and its inverse.
pub fn jordan_with_inverse(a: &Matrix, a_inv: &Matrix) -> Result<WeylVector> {
    log_spectrum_from_wedges(a.nrows(), &wedge_log_radii(a)?, &wedge_log_radii(a_inv)?)
}

/// Cartan projection: log singular values, weakly decreasing.
pub fn kappa(a: &Matrix) -> Result<WeylVector> {
    let a = normalize_unimodular(a)?;
    kappa_with_inverse(&a, &unimodular_inverse(&a)?)
}

/// Jordan projection: log eigenvalue moduli, weakly decreasing.
pub fn jordan(a: &Matrix) -> Result<WeylVector> {
    let a = normalize_unimodular(a)?;
    jordan_with_inverse(&a, &unimodular_inverse(&a)?)
}
