//! Iwasawa cocycle and Gromov product on partial flag spaces.

use crate::cartan::{Matrix, WeylVector};
use crate::error::{Error, Result};
use crate::flags::{signed_witness, Flag};
use crate::matgroup::{plucker, WedgeElement};

/// `log |v_1 ^ ... ^ v_k|` for the columns of `m`, via the R factor of a QR.
pub fn log_wedge_norm(m: &Matrix) -> f64 {
    let r = m.clone().qr().r();
    (0..m.ncols()).map(|i| r[(i, i)].abs().ln()).sum()
}

/// `B_theta(a, F)`: the vector of `a_theta` with
/// `omega_k = log |a v_1 ^ ... ^ a v_k|` for an orthonormal basis of `F^k`.
pub fn iwasawa(a: &Matrix, f: &Flag) -> Result<WeylVector> {
    if a.nrows() != f.dim() || a.ncols() != f.dim() {
        return Err(Error::ThetaMismatch);
    }
    let omegas: Vec<f64> = f
        .theta()
        .indices()
        .iter()
        .map(|&k| log_wedge_norm(&(a * f.subspace(k))))
        .collect();
    Ok(WeylVector::from_theta_omegas(f.theta(), &omegas))
}

/// As [`iwasawa`], reading `k`-volumes from the exterior powers of `g`; for
/// `k > d/2` from `wedge^(d-k) g^-T` on the complement of `F^k`, which has the
/// same norm when `det g = 1`.
pub fn iwasawa_wedge(g: &WedgeElement, f: &Flag) -> Result<WeylVector> {
    let d = f.dim();
    if g.dim() != d {
        return Err(Error::ThetaMismatch);
    }
    let omegas: Vec<f64> = f
        .theta()
        .indices()
        .iter()
        .map(|&k| {
            if 2 * k <= d {
                (g.power(k) * plucker(&f.subspace(k))).norm().ln()
            } else {
                (g.inverse_power(d - k).tr_mul(&plucker(&f.frame().columns(k, d - k).into_owned()))).norm().ln()
            }
        })
        .collect();
    Ok(WeylVector::from_theta_omegas(f.theta(), &omegas))
}

/// `G_theta(F, G)`: the vector of `a_theta` with
/// `omega_k = log |det(f_i(v_j))|`, `v` an orthonormal basis of `F^k` and `f`
/// an orthonormal basis of the annihilator of `G^(d-k)`.
pub fn gromov_product(f: &Flag, g: &Flag, tol: f64) -> Result<WeylVector> {
    if f.theta() != g.theta() {
        return Err(Error::ThetaMismatch);
    }
    let mut omegas = Vec::with_capacity(f.theta().indices().len());
    for &k in f.theta().indices() {
        let witness = signed_witness(f, g, k).abs();
        if witness <= tol {
            return Err(Error::NotTransverse { k, witness });
        }
        omegas.push(witness.ln());
    }
    Ok(WeylVector::from_theta_omegas(f.theta(), &omegas))
}
