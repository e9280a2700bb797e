//! Partial flags, their distance and transversality, attracting fixed flags
//! and sampled limit sets.
//!
//! A flag of type `theta` is stored as a d x d orthogonal frame whose first
//! `k` columns span the `k`-dimensional subspace for every `k` in `theta`.
//! Frames are canonicalized by a QR pass with positive diagonal.

use nalgebra::linalg::SVD;

use crate::cartan::{jordan_with_inverse, kappa_with_inverse, singular_values, unimodular_inverse, Matrix, ThetaSet, WeylVector};
use crate::error::{Error, Result};
use crate::matgroup::{map_ball, plucker, plucker_span, GroupElement, Presentation, WedgeElement, Word};

/// Default tolerance on root gaps for `u_theta` and fixed flags.
pub const DEFAULT_GAP_TOLERANCE: f64 = 1e-6;
/// Default transversality tolerance on the determinant witness.
pub const DEFAULT_TRANSVERSE_TOLERANCE: f64 = 1e-9;
/// Flags closer than this are considered equal.
pub const FLAG_EQUALITY_TOLERANCE: f64 = 1e-7;

#[derive(Clone, Debug, PartialEq)]
pub struct Flag {
    theta: ThetaSet,
    frame: Matrix,
}

/// Q factor of a QR decomposition with the diagonal of R made non-negative.
pub(crate) fn orthonormal_frame(m: &Matrix) -> Matrix {
    let qr = m.clone().qr();
    let mut q = qr.q();
    let r = qr.r();
    for i in 0..r.nrows().min(r.ncols()) {
        if r[(i, i)] < 0.0 {
            q.column_mut(i).neg_mut();
        }
    }
    q
}

impl Flag {
    /// Flag spanned by the leading columns of an invertible matrix.
    pub fn from_frame(theta: &ThetaSet, m: &Matrix) -> Result<Self> {
        let d = theta.dim();
        if m.nrows() != d || m.ncols() != d {
            return Err(Error::ThetaMismatch);
        }
        let r = m.clone().qr().r();
        let scale = m.amax().max(f64::MIN_POSITIVE);
        if (0..d).any(|i| r[(i, i)].abs() <= 1e-13 * scale) {
            return Err(Error::SingularSystem("frame is rank deficient".into()));
        }
        Ok(Flag { theta: theta.clone(), frame: orthonormal_frame(m) })
    }

    /// The flag spanned by `e_1, ..., e_k`.
    pub fn standard(theta: &ThetaSet) -> Self {
        let d = theta.dim();
        Flag { theta: theta.clone(), frame: Matrix::identity(d, d) }
    }

    /// The flag spanned by `e_d, ..., e_{d-k+1}`, transverse to the standard one.
    pub fn opposite(theta: &ThetaSet) -> Self {
        let d = theta.dim();
        let frame = Matrix::from_fn(d, d, |i, j| if i + j == d - 1 { 1.0 } else { 0.0 });
        Flag { theta: theta.clone(), frame }
    }

    pub fn theta(&self) -> &ThetaSet {
        &self.theta
    }

    pub fn dim(&self) -> usize {
        self.theta.dim()
    }

    pub fn frame(&self) -> &Matrix {
        &self.frame
    }

    /// Orthonormal basis (d x k) of the k-dimensional subspace.
    pub fn subspace(&self, k: usize) -> Matrix {
        self.frame.columns(0, k).into_owned()
    }

    /// Projective point of the line, as a unit vector.
    pub fn line(&self) -> Vec<f64> {
        self.frame.column(0).iter().copied().collect()
    }

    /// Image under the projective action of `a`.
    pub fn act(&self, a: &Matrix) -> Flag {
        Flag { theta: self.theta.clone(), frame: orthonormal_frame(&(a * &self.frame)) }
    }

    /// Image under an element given by its exterior powers. The small
    /// subspaces come from `wedge^k g`, the large ones as complements of
    /// `wedge^k g^-T`, so long products keep every subspace accurate.
    pub fn act_wedge(&self, g: &WedgeElement) -> Result<Flag> {
        let d = self.dim();
        if g.dim() != d {
            return Err(Error::ThetaMismatch);
        }
        let top = d / 2;
        let mut upper: Vec<Matrix> = Vec::with_capacity(top);
        for k in 1..=top {
            let xi = g.power(k) * plucker(&self.frame.columns(0, k).into_owned());
            upper.push(plucker_span(&xi.normalize(), d, k)?);
        }
        let mut lower: Vec<Matrix> = Vec::with_capacity(d - top);
        for m in 1..d - top {
            let eta = g.inverse_power(m).transpose() * plucker(&self.frame.columns(d - m, m).into_owned());
            lower.push(plucker_span(&eta.normalize(), d, m)?);
        }
        let upper = chain_frame(&upper, d)?;
        let lower = chain_frame(&lower, d)?;
        let lower = orthonormal_frame(&(&lower - &upper * upper.tr_mul(&lower)));
        let mut frame = Matrix::zeros(d, d);
        frame.columns_mut(0, top).copy_from(&upper);
        for j in 0..lower.ncols() {
            frame.column_mut(d - 1 - j).copy_from(&lower.column(j));
        }
        let others = Matrix::from_fn(d, d - 1, |i, j| frame[(i, if j < top { j } else { j + 1 })]);
        let middle = leading_left_vectors(&(Matrix::identity(d, d) - &others * others.transpose()), 1)?;
        frame.column_mut(top).copy_from(&middle.column(0));
        Ok(Flag { theta: self.theta.clone(), frame })
    }

    fn check_pair(&self, other: &Flag) -> Result<()> {
        if self.theta != other.theta {
            return Err(Error::ThetaMismatch);
        }
        Ok(())
    }
}

/// Orthonormal columns `c_1, ..., c_n` with `c_1..c_k` spanning the `k`-th of
/// the nested subspaces `spans` (given as `d x k` bases).
fn chain_frame(spans: &[Matrix], d: usize) -> Result<Matrix> {
    let mut out = Matrix::zeros(d, spans.len());
    for (k, span) in spans.iter().enumerate() {
        let done = out.columns(0, k);
        let mut residual = Matrix::zeros(d, d);
        residual.columns_mut(0, span.ncols()).copy_from(&(span - done * done.tr_mul(span)));
        out.column_mut(k).copy_from(&leading_left_vectors(&residual, 1)?.column(0));
    }
    Ok(out)
}

fn largest_singular_value(m: &Matrix) -> f64 {
    if m.nrows() == 1 || m.ncols() == 1 {
        return m.norm();
    }
    m.singular_values().iter().copied().fold(0.0, f64::max)
}

/// Max over `k` in `theta` of the sine of the largest principal angle between
/// the `k`-dimensional subspaces.
pub fn flag_distance(f: &Flag, g: &Flag) -> Result<f64> {
    f.check_pair(g)?;
    let d = f.dim();
    let mut out: f64 = 0.0;
    for &k in f.theta.indices() {
        let complement = f.frame.columns(k, d - k);
        let m = complement.transpose() * g.frame.columns(0, k);
        out = out.max(largest_singular_value(&m));
    }
    Ok(out.min(1.0))
}

/// `|det(W^T V)|` where `V` spans `F^k` and `W` spans the orthogonal complement
/// of `G^(d-k)`; this equals `|det[F^k | G^(d-k)]|` for orthonormal bases.
fn transversality_witness(f: &Flag, g: &Flag, k: usize) -> f64 {
    let d = f.dim();
    let annihilator = g.frame.columns(d - k, k);
    (annihilator.transpose() * f.frame.columns(0, k)).determinant()
}

/// Whether `F^k` and `G^(d-k)` are complementary for all `k` in `theta`,
/// with the smallest determinant witness.
pub fn is_transverse(f: &Flag, g: &Flag, tol: f64) -> Result<(bool, f64)> {
    f.check_pair(g)?;
    let witness = f
        .theta
        .indices()
        .iter()
        .map(|&k| transversality_witness(f, g, k).abs())
        .fold(f64::INFINITY, f64::min);
    Ok((witness > tol, witness))
}

pub(crate) fn signed_witness(f: &Flag, g: &Flag, k: usize) -> f64 {
    transversality_witness(f, g, k)
}

/// Left singular frame with singular values in decreasing order.
fn left_singular_frame(a: &Matrix) -> Result<(Vec<f64>, Matrix)> {
    let svd = SVD::try_new(a.clone(), true, false, f64::EPSILON, 10_000)
        .ok_or(Error::DecompositionFailure("singular value decomposition"))?;
    let u = svd.u.expect("left vectors requested");
    let mut order: Vec<usize> = (0..a.nrows()).collect();
    order.sort_by(|&i, &j| svd.singular_values[j].total_cmp(&svd.singular_values[i]));
    let values = order.iter().map(|&i| svd.singular_values[i]).collect();
    let frame = Matrix::from_fn(a.nrows(), a.nrows(), |r, c| u[(r, order[c])]);
    Ok((values, frame))
}

/// Leading `k` left singular vectors. The SVD alone loses the top vector once
/// the condition number nears `1/eps`, so it is polished by power iteration
/// on `a a^T`; the remaining columns are only re-orthogonalized against it.
fn leading_left_vectors(a: &Matrix, k: usize) -> Result<Matrix> {
    let (values, frame) = left_singular_frame(a)?;
    let scaled = a / values[0];
    let mut top = frame.column(0).into_owned();
    for _ in 0..POLISH_STEPS {
        top = (&scaled * scaled.tr_mul(&top)).normalize();
    }
    let mut block = frame.columns(0, k).into_owned();
    block.column_mut(0).copy_from(&top);
    Ok(orthonormal_frame(&block))
}

const POLISH_STEPS: usize = 3;

/// Frame of `u_theta(a)`: the top half from `a`, the bottom half from the
/// leading vectors of `a^-T`, which span the complements of the large subspaces.
fn cartan_frame(a: &Matrix, a_inv: &Matrix) -> Result<Matrix> {
    let d = a.nrows();
    let top = d / 2;
    let upper = leading_left_vectors(a, top)?;
    let lower = leading_left_vectors(&a_inv.transpose(), d - top)?;
    let projected = &lower - &upper * (upper.tr_mul(&lower));
    let lower = projected.qr().q();
    let mut frame = Matrix::zeros(d, d);
    frame.columns_mut(0, top).copy_from(&upper);
    for j in 0..d - top {
        frame.column_mut(d - 1 - j).copy_from(&lower.column(j));
    }
    Ok(frame)
}

fn check_gaps(theta: &ThetaSet, spectrum: &WeylVector, gap_tol: f64) -> Result<()> {
    for &k in theta.indices() {
        let gap = spectrum.alpha(k);
        if gap < gap_tol {
            return Err(Error::InsufficientGap { k, value: gap });
        }
    }
    Ok(())
}

/// The flag spanned by the leading left singular vectors of `a`.
pub fn u_theta(a: &Matrix, theta: &ThetaSet, gap_tol: f64) -> Result<Flag> {
    if a.nrows() != theta.dim() {
        return Err(Error::ThetaMismatch);
    }
    let a_inv = unimodular_inverse(a)?;
    check_gaps(theta, &kappa_with_inverse(a, &a_inv)?, gap_tol)?;
    Ok(Flag { theta: theta.clone(), frame: orthonormal_frame(&cartan_frame(a, &a_inv)?) })
}

/// As [`u_theta`], with the gaps read from the two-sided Cartan projection.
pub fn u_theta_element(g: &GroupElement, theta: &ThetaSet, gap_tol: f64) -> Result<Flag> {
    if g.matrix.nrows() != theta.dim() {
        return Err(Error::ThetaMismatch);
    }
    check_gaps(theta, &g.kappa()?, gap_tol)?;
    Ok(Flag { theta: theta.clone(), frame: orthonormal_frame(&cartan_frame(&g.matrix, &g.inverse)?) })
}

/// Attracting fixed flag of a `theta`-proximal matrix, by orthogonal iteration.
pub fn attracting_fixed_flag(a: &Matrix, theta: &ThetaSet, gap_tol: f64) -> Result<Flag> {
    if a.nrows() != theta.dim() {
        return Err(Error::ThetaMismatch);
    }
    let nu = jordan_with_inverse(a, &unimodular_inverse(a)?)?;
    for &k in theta.indices() {
        if nu.alpha(k) <= gap_tol {
            return Err(Error::NotProximal { k });
        }
    }
    let scale = singular_values(a)?[0];
    let step = a / scale;
    let (_, start) = left_singular_frame(a)?;
    let mut flag = Flag { theta: theta.clone(), frame: orthonormal_frame(&start) };
    let min_gap = theta.indices().iter().map(|&k| nu.alpha(k)).fold(f64::INFINITY, f64::min);
    let max_iter = ((40.0 / min_gap).ceil() as usize).clamp(50, 2_000_000);
    let mut best = f64::INFINITY;
    let mut stalled = 0;
    for _ in 0..max_iter {
        let next = flag.act(&step);
        let moved = flag_distance(&next, &flag)?;
        flag = next;
        if moved < 1e-15 {
            break;
        }
        if moved < best * 0.999 {
            best = moved;
            stalled = 0;
        } else {
            stalled += 1;
            if stalled > 20 && best < 1e-10 {
                break;
            }
        }
    }
    Ok(flag)
}

/// Limit-set sample: `u_theta` of every element of the sphere of radius `n`.
#[derive(Clone, Debug)]
pub struct LimitSetSample {
    pub flags: Vec<Flag>,
    pub words: Vec<Word>,
    /// Elements dropped because a root gap fell below tolerance.
    pub skipped: usize,
}

pub fn sample_limit_set(p: &Presentation, theta: &ThetaSet, n: usize, gap_tol: f64, cap: usize) -> Result<LimitSetSample> {
    if p.dim() != theta.dim() {
        return Err(Error::ThetaMismatch);
    }
    let bucket = map_ball(p, n, n, cap, |g| match u_theta_element(g, theta, gap_tol) {
        Ok(f) => Ok(Some((f, g.word.clone()))),
        Err(Error::InsufficientGap { .. }) => Ok(None),
        Err(e) => Err(e),
    })?;
    let mut out = LimitSetSample { flags: Vec::new(), words: Vec::new(), skipped: 0 };
    for item in bucket.into_iter().flatten() {
        match item? {
            Some((f, w)) => {
                out.flags.push(f);
                out.words.push(w);
            }
            None => out.skipped += 1,
        }
    }
    Ok(out)
}

/// Unit vectors `kappa_theta(g) / |kappa_theta(g)|` over the sphere of radius `n`.
pub fn limit_cone_sample(p: &Presentation, theta: &ThetaSet, n: usize, cap: usize) -> Result<Vec<WeylVector>> {
    let bucket = map_ball(p, n, n, cap, |g| -> Result<Option<WeylVector>> {
        let k = crate::cartan::project_theta(&g.kappa()?, theta)?;
        let norm = k.norm();
        Ok((norm > 0.0).then(|| (1.0 / norm) * &k))
    })?;
    bucket.into_iter().flatten().filter_map(|r| r.transpose()).collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn diag(v: &[f64]) -> Matrix {
        Matrix::from_diagonal(&nalgebra::DVector::from_vec(v.to_vec()))
    }

    fn full(d: usize) -> ThetaSet {
        ThetaSet::full(d).unwrap()
    }

    #[test]
    fn standard_and_opposite_are_transverse() {
        let theta = full(4);
        let (ok, w) = is_transverse(&Flag::standard(&theta), &Flag::opposite(&theta), 1e-9).unwrap();
        assert!(ok);
        assert!((w - 1.0).abs() < 1e-15);
        let (ok, _) = is_transverse(&Flag::standard(&theta), &Flag::standard(&theta), 1e-9).unwrap();
        assert!(!ok);
    }

    #[test]
    fn u_theta_of_diagonal_is_standard() {
        let theta = full(3);
        let f = u_theta(&diag(&[3.0, 1.0, 1.0 / 3.0]), &theta, 1e-6).unwrap();
        assert!(flag_distance(&f, &Flag::standard(&theta)).unwrap() < 1e-15);
    }

    #[test]
    fn u_theta_reports_insufficient_gap() {
        let theta = full(3);
        let err = u_theta(&diag(&[2.0, 2.0, 0.25]), &theta, 1e-6).unwrap_err();
        assert!(matches!(err, Error::InsufficientGap { k: 1, .. }));
        let partial = ThetaSet::new(4, &[2]).unwrap();
        assert!(u_theta(&diag(&[2.0, 2.0, 0.5, 0.5]), &partial, 1e-6).is_ok());
    }

    #[test]
    fn u_theta_survives_huge_condition_numbers() {
        // Singular values e^{+-17}: every column is within e^{-34} of the top left vector.
        let t: f64 = 17.0;
        let a = Matrix::from_row_slice(2, 2, &[t.cosh(), t.sinh(), t.sinh(), t.cosh()]);
        let r = Matrix::from_row_slice(2, 2, &[0.6, -0.8, 0.8, 0.6]);
        let m = &r * &a;
        let line = u_theta(&m, &full(2), 1e-6).unwrap().line();
        let column = m.column(0).normalize();
        let sin = (line[0] * column[1] - line[1] * column[0]).abs();
        assert!(sin < 1e-12, "{sin:e}");
    }

    #[test]
    fn fixed_flag_of_diagonal() {
        let theta = full(3);
        let f = attracting_fixed_flag(&diag(&[3.0, 1.0, 1.0 / 3.0]), &theta, 1e-6).unwrap();
        assert!(flag_distance(&f, &Flag::standard(&theta)).unwrap() < 1e-12);
        let rotation = Matrix::from_row_slice(2, 2, &[0.0, -1.0, 1.0, 0.0]);
        let err = attracting_fixed_flag(&rotation, &full(2), 1e-6).unwrap_err();
        assert!(matches!(err, Error::NotProximal { k: 1 }));
    }

    #[test]
    fn fixed_flag_matches_high_power_singular_flag() {
        let a = Matrix::from_row_slice(3, 3, &[2.0, 1.0, 0.0, 1.0, 1.0, 0.5, 0.0, 0.3, 0.8]);
        let a = crate::cartan::normalize_unimodular(&(a.clone() / a.determinant().cbrt())).unwrap();
        let theta = full(3);
        let fixed = attracting_fixed_flag(&a, &theta, 1e-6).unwrap();
        let mut power = Matrix::identity(3, 3);
        for _ in 0..20 {
            power = &power * &a;
        }
        let far = u_theta(&power, &theta, 1e-6).unwrap();
        assert!(flag_distance(&fixed, &far).unwrap() < 1e-6);
        assert!(flag_distance(&fixed.act(&a), &fixed).unwrap() < 1e-10);
    }

    #[test]
    fn distance_between_lines() {
        let theta = full(2);
        let t: f64 = 0.3;
        let g = Flag::from_frame(&theta, &Matrix::from_row_slice(2, 2, &[t.cos(), 0.0, t.sin(), 1.0])).unwrap();
        assert!((flag_distance(&Flag::standard(&theta), &g).unwrap() - t.sin()).abs() < 1e-15);
        let other = full(3);
        assert!(matches!(flag_distance(&Flag::standard(&other), &g), Err(Error::ThetaMismatch)));
    }

    #[test]
    fn rank_deficient_frame_rejected() {
        let theta = full(2);
        let m = Matrix::from_row_slice(2, 2, &[1.0, 2.0, 1.0, 2.0]);
        assert!(matches!(Flag::from_frame(&theta, &m), Err(Error::SingularSystem(_))));
    }

    #[test]
    fn limit_set_sample_skips_gapless_elements() {
        let rotation = Matrix::from_row_slice(2, 2, &[0.0, -1.0, 1.0, 0.0]);
        let hyperbolic = diag(&[2.0, 0.5]);
        let p = Presentation::new(vec![hyperbolic, rotation], vec![], true).unwrap();
        let sample = sample_limit_set(&p, &full(2), 1, 1e-6, 100).unwrap();
        assert_eq!(sample.flags.len(), 2);
        assert_eq!(sample.skipped, 2);
    }
}
