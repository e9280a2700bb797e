//! Critical exponents, Poincaré partial sums and atomic approximants of
//! Patterson-Sullivan measures on a partial flag space.
//!
//! Every functional `phi` is evaluated on `kappa_theta = p_theta(kappa)`.
//! Orbit counts are taken over the word ball of radius `n_max`; the counting
//! radius up to which the ball is treated as complete is the smallest value of
//! `phi(kappa_theta)` on the outer sphere.

use rayon::prelude::*;
use serde::Serialize;

use crate::cartan::{kappa_with_inverse, Functional, ThetaSet};
use crate::cocycle::{gromov_product, iwasawa};
use crate::error::{Error, Result};
use crate::flags::{u_theta_element, Flag};
use crate::matgroup::{map_ball, GroupElement, Presentation, Word};

/// Values of `phi(kappa_theta(g))` below this are treated as negative.
const NEGATIVE_SLACK: f64 = 1e-9;
/// Counting radii below this are indistinguishable from round-off.
const MIN_RADIUS: f64 = 1e-9;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
pub enum ExponentMethod {
    SphereRegression,
    SeriesTransition,
}

#[derive(Clone, Debug)]
pub struct ExponentOptions {
    /// Fractions of the certified radius bounding the regression window.
    pub window: (f64, f64),
    pub grid_points: usize,
    pub element_cap: usize,
    /// Largest tolerated fraction of orbit points with negative `phi`.
    pub negative_fraction: f64,
}

impl Default for ExponentOptions {
    fn default() -> Self {
        ExponentOptions {
            window: (0.2, 0.9),
            grid_points: 64,
            element_cap: crate::matgroup::DEFAULT_ELEMENT_CAP,
            negative_fraction: 0.0,
        }
    }
}

#[derive(Clone, Debug, Serialize)]
pub struct ExponentEstimate {
    pub delta_hat: f64,
    pub window: (f64, f64),
    /// Root-mean-square residual of the regression.
    pub residual: f64,
    pub method: ExponentMethod,
    pub certified_radius: f64,
    /// `(R, log N(R))` for sphere regression, `(k, log I_k)` for the series test.
    pub samples: Vec<(f64, f64)>,
    pub negative_exceptions: usize,
}

/// `phi(kappa_theta(g))` for every element of a word ball, by sphere.
#[derive(Clone, Debug)]
pub struct OrbitValues {
    pub per_sphere: Vec<Vec<f64>>,
    pub negative_exceptions: usize,
    sorted: Vec<f64>,
}

/// Least-squares slope, intercept and RMS residual.
pub fn linear_fit(xs: &[f64], ys: &[f64]) -> (f64, f64, f64) {
    let n = xs.len() as f64;
    let mx = xs.iter().sum::<f64>() / n;
    let my = ys.iter().sum::<f64>() / n;
    let sxx: f64 = xs.iter().map(|x| (x - mx) * (x - mx)).sum();
    let sxy: f64 = xs.iter().zip(ys).map(|(x, y)| (x - mx) * (y - my)).sum();
    let slope = if sxx > 0.0 { sxy / sxx } else { 0.0 };
    let intercept = my - slope * mx;
    let rss: f64 = xs.iter().zip(ys).map(|(x, y)| (y - intercept - slope * x).powi(2)).sum();
    (slope, intercept, (rss / n).sqrt())
}

fn log_sum_exp(values: impl Iterator<Item = f64>) -> f64 {
    let v: Vec<f64> = values.collect();
    let m = v.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if !m.is_finite() {
        return m;
    }
    m + v.iter().map(|x| (x - m).exp()).sum::<f64>().ln()
}

impl OrbitValues {
    pub fn compute(p: &Presentation, theta: &ThetaSet, phi: &Functional, n_max: usize, opts: &ExponentOptions) -> Result<Self> {
        if p.dim() != theta.dim() || phi.dim() != theta.dim() {
            return Err(Error::ThetaMismatch);
        }
        let restricted = phi.restrict(theta);
        let buckets = map_ball(p, n_max, 0, opts.element_cap, |g| g.kappa().map(|k| restricted.eval(&k)))?;
        let per_sphere = buckets
            .into_iter()
            .map(|b| b.into_iter().collect::<Result<Vec<f64>>>())
            .collect::<Result<Vec<_>>>()?;
        Self::from_values(per_sphere, opts.negative_fraction)
    }

    pub fn from_values(per_sphere: Vec<Vec<f64>>, negative_fraction: f64) -> Result<Self> {
        let total: usize = per_sphere.iter().map(Vec::len).sum();
        let negative = per_sphere.iter().flatten().filter(|&&v| v < -NEGATIVE_SLACK).count();
        let fraction = negative as f64 / total.max(1) as f64;
        if fraction > negative_fraction {
            return Err(Error::NegativePhiOnCone { fraction });
        }
        let mut sorted: Vec<f64> = per_sphere.iter().flatten().copied().collect();
        sorted.sort_by(f64::total_cmp);
        Ok(OrbitValues { per_sphere, negative_exceptions: negative, sorted })
    }

    /// Radius below which every orbit point is enumerated.
    pub fn certified_radius(&self) -> f64 {
        match self.per_sphere.last() {
            Some(outer) if !outer.is_empty() && self.per_sphere.len() > 1 => {
                outer.iter().copied().fold(f64::INFINITY, f64::min)
            }
            _ => self.sorted.last().copied().unwrap_or(0.0),
        }
    }

    /// `N(R) = #{g : phi(kappa_theta(g)) <= R}`.
    pub fn count_below(&self, radius: f64) -> usize {
        self.sorted.partition_point(|&v| v <= radius)
    }

    pub fn total(&self) -> usize {
        self.sorted.len()
    }

    /// Slope of `log N(R)` against `R` on an evenly spaced grid over `[lo, hi]`.
    pub fn regression_in_window(&self, lo: f64, hi: f64, grid_points: usize) -> Result<ExponentEstimate> {
        if !(hi > lo) || hi <= MIN_RADIUS || grid_points < 2 {
            return Err(Error::WindowEmpty(format!("window [{lo}, {hi}] with {grid_points} points")));
        }
        let samples: Vec<(f64, f64)> = (0..grid_points)
            .map(|j| {
                let r = lo + (hi - lo) * j as f64 / (grid_points - 1) as f64;
                (r, (self.count_below(r).max(1) as f64).ln())
            })
            .collect();
        let xs: Vec<f64> = samples.iter().map(|s| s.0).collect();
        let ys: Vec<f64> = samples.iter().map(|s| s.1).collect();
        let (slope, _, residual) = linear_fit(&xs, &ys);
        Ok(ExponentEstimate {
            delta_hat: slope,
            window: (lo, hi),
            residual,
            method: ExponentMethod::SphereRegression,
            certified_radius: self.certified_radius(),
            samples,
            negative_exceptions: self.negative_exceptions,
        })
    }

    pub fn sphere_regression(&self, opts: &ExponentOptions) -> Result<ExponentEstimate> {
        let r = self.certified_radius();
        if !(r > MIN_RADIUS) || !r.is_finite() {
            return Err(Error::WindowEmpty(format!("certified radius {r}")));
        }
        self.regression_in_window(opts.window.0 * r, opts.window.1 * r, opts.grid_points)
    }

    fn sphere_log_increments(&self, s: f64, spheres: &[usize]) -> Vec<f64> {
        spheres
            .iter()
            .map(|&k| log_sum_exp(self.per_sphere[k].iter().map(|v| -s * v)))
            .collect()
    }

    fn increment_slope(&self, s: f64, spheres: &[usize]) -> (f64, f64) {
        let xs: Vec<f64> = spheres.iter().map(|&k| k as f64).collect();
        let ys = self.sphere_log_increments(s, spheres);
        let (slope, _, residual) = linear_fit(&xs, &ys);
        (slope, residual)
    }

    /// The exponent `s` at which the per-sphere increments of the Poincaré
    /// series stop growing, over the outer half of the spheres.
    pub fn series_transition(&self) -> Result<ExponentEstimate> {
        let n = self.per_sphere.len().saturating_sub(1);
        let spheres: Vec<usize> = (n.div_ceil(2).max(1)..=n).filter(|&k| !self.per_sphere[k].is_empty()).collect();
        if spheres.len() < 2 {
            return Err(Error::WindowEmpty("fewer than two non-empty outer spheres".into()));
        }
        let mut lo = 0.0;
        let mut hi = 1.0;
        let delta = if self.increment_slope(0.0, &spheres).0 <= 0.0 {
            0.0
        } else {
            while self.increment_slope(hi, &spheres).0 > 0.0 {
                hi *= 2.0;
                if hi > 1e9 {
                    return Err(Error::WindowEmpty("increments never decay".into()));
                }
            }
            for _ in 0..100 {
                let mid = 0.5 * (lo + hi);
                if self.increment_slope(mid, &spheres).0 > 0.0 {
                    lo = mid;
                } else {
                    hi = mid;
                }
            }
            0.5 * (lo + hi)
        };
        let (_, residual) = self.increment_slope(delta, &spheres);
        let ys = self.sphere_log_increments(delta, &spheres);
        let values = spheres.iter().flat_map(|&k| self.per_sphere[k].iter().copied());
        let (wlo, whi) = values.fold((f64::INFINITY, f64::NEG_INFINITY), |(a, b), v| (a.min(v), b.max(v)));
        Ok(ExponentEstimate {
            delta_hat: delta,
            window: (wlo, whi),
            residual,
            method: ExponentMethod::SeriesTransition,
            certified_radius: self.certified_radius(),
            samples: spheres.iter().map(|&k| k as f64).zip(ys).collect(),
            negative_exceptions: self.negative_exceptions,
        })
    }
}

/// Critical exponent by regression of `log N(R)` on `R` over the certified window.
pub fn critical_exponent(p: &Presentation, theta: &ThetaSet, phi: &Functional, n_max: usize, opts: &ExponentOptions) -> Result<ExponentEstimate> {
    OrbitValues::compute(p, theta, phi, n_max, opts)?.sphere_regression(opts)
}

/// Critical exponent by the growth-to-decay transition of sphere increments.
pub fn series_transition_exponent(p: &Presentation, theta: &ThetaSet, phi: &Functional, n_max: usize, opts: &ExponentOptions) -> Result<ExponentEstimate> {
    OrbitValues::compute(p, theta, phi, n_max, opts)?.series_transition()
}

#[derive(Clone, Debug, Serialize)]
pub struct PartialSum {
    pub value: f64,
    pub per_sphere: Vec<f64>,
    /// Slope of the log sphere increments over the outer half of the spheres.
    pub tail_slope: f64,
}

/// `sum_{|g| <= n} exp(-s phi(kappa_theta(g)))`, summed sphere by sphere in
/// canonical order.
pub fn poincare_partial_sum(p: &Presentation, theta: &ThetaSet, phi: &Functional, s: f64, n: usize, opts: &ExponentOptions) -> Result<PartialSum> {
    let values = OrbitValues::compute(p, theta, phi, n, opts)?;
    let per_sphere: Vec<f64> = values.per_sphere.iter().map(|b| b.iter().map(|v| (-s * v).exp()).sum()).collect();
    let value = per_sphere.iter().sum();
    let outer: Vec<usize> = (n.div_ceil(2).max(1)..=n).filter(|&k| per_sphere[k] > 0.0).collect();
    let tail_slope = if outer.len() >= 2 {
        let xs: Vec<f64> = outer.iter().map(|&k| k as f64).collect();
        let ys: Vec<f64> = outer.iter().map(|&k| per_sphere[k].ln()).collect();
        linear_fit(&xs, &ys).0
    } else {
        0.0
    };
    Ok(PartialSum { value, per_sphere, tail_slope })
}

#[derive(Clone, Debug)]
pub struct MeasureOptions {
    /// Critical exponent estimate to check `s` against; estimated when absent.
    pub delta_hat: Option<f64>,
    pub min_margin: f64,
    pub gap_tolerance: f64,
    pub exponent: ExponentOptions,
    /// Keep only atoms from the outermost `shell` spheres of the ball. Inner
    /// spheres put macroscopic atoms at the attracting points of short words.
    pub shell: Option<usize>,
}

impl Default for MeasureOptions {
    fn default() -> Self {
        MeasureOptions {
            delta_hat: None,
            min_margin: 0.01,
            gap_tolerance: crate::flags::DEFAULT_GAP_TOLERANCE,
            exponent: ExponentOptions::default(),
            shell: None,
        }
    }
}

/// Default relative offsets of `s` above the critical exponent.
pub const EPSILON_SCHEDULE: [f64; 3] = [0.2, 0.1, 0.05];

/// Probability measure on flags with atoms at `u_theta(g)`, `|g| <= n`,
/// weighted by `exp(-s phi(kappa_theta(g)))`.
#[derive(Clone, Debug)]
pub struct AtomicMeasure {
    pub theta: ThetaSet,
    pub s: f64,
    pub atoms: Vec<Flag>,
    pub weights: Vec<f64>,
    pub words: Vec<Word>,
    /// Orbit points without a `theta` gap (including the identity when present).
    pub excluded_count: usize,
    /// Share of the unnormalized mass carried by excluded points.
    pub excluded_mass: f64,
}

impl AtomicMeasure {
    pub fn len(&self) -> usize {
        self.atoms.len()
    }

    pub fn is_empty(&self) -> bool {
        self.atoms.is_empty()
    }

    pub fn mass_where(&self, pred: impl Fn(&Flag) -> bool) -> f64 {
        self.atoms.iter().zip(&self.weights).filter(|(f, _)| pred(f)).map(|(_, w)| w).sum()
    }
}

pub fn patterson_measure(p: &Presentation, theta: &ThetaSet, phi: &Functional, s: f64, n: usize, opts: &MeasureOptions) -> Result<AtomicMeasure> {
    let delta = match opts.delta_hat {
        Some(d) => d,
        None => critical_exponent(p, theta, phi, n, &opts.exponent)?.delta_hat,
    };
    if s < delta * (1.0 + opts.min_margin) || s <= 0.0 {
        return Err(Error::SubcriticalS { s, delta });
    }
    let restricted = phi.restrict(theta);
    let min_len = opts.shell.map_or(0, |k| (n + 1).saturating_sub(k.max(1)));
    let buckets = map_ball(p, n, min_len, opts.exponent.element_cap, |g| -> Result<(f64, Option<Flag>, Word)> {
        let value = restricted.eval(&g.kappa()?);
        match u_theta_element(g, theta, opts.gap_tolerance) {
            Ok(flag) => Ok((value, Some(flag), g.word.clone())),
            Err(Error::InsufficientGap { .. }) => Ok((value, None, g.word.clone())),
            Err(e) => Err(e),
        }
    })?;
    let items = buckets.into_iter().flatten().collect::<Result<Vec<_>>>()?;
    let floor = items.iter().map(|i| i.0).fold(f64::INFINITY, f64::min);
    let mut atoms = Vec::new();
    let mut weights = Vec::new();
    let mut words = Vec::new();
    let (mut kept, mut dropped, mut excluded_count) = (0.0, 0.0, 0);
    for (value, flag, word) in items {
        let w = (-s * (value - floor)).exp();
        match flag {
            Some(f) => {
                kept += w;
                atoms.push(f);
                weights.push(w);
                words.push(word);
            }
            None => {
                dropped += w;
                excluded_count += 1;
            }
        }
    }
    if atoms.is_empty() {
        return Err(Error::InvalidInput("no orbit point has a theta gap".into()));
    }
    weights.iter_mut().for_each(|w| *w /= kept);
    Ok(AtomicMeasure {
        theta: theta.clone(),
        s,
        atoms,
        weights,
        words,
        excluded_count,
        excluded_mass: dropped / (kept + dropped),
    })
}

#[derive(Clone, Debug, Serialize)]
pub struct SphereResidual {
    pub sphere: usize,
    pub count: usize,
    pub min: f64,
    pub median: f64,
    pub max: f64,
    /// `s` times the median: the log defect of the Radon-Nikodym derivative.
    pub log_density_defect: f64,
}

/// Residual of the conformality relation
/// `phi(kappa_theta(a^-1 g)) - phi(kappa_theta(g)) = phi(B_theta(a^-1, u_theta(g)))`
/// over each sphere of radius `1..=n`.
pub fn quasi_invariance_residual(
    p: &Presentation,
    theta: &ThetaSet,
    phi: &Functional,
    alpha: &GroupElement,
    s: f64,
    n: usize,
    gap_tolerance: f64,
    cap: usize,
) -> Result<Vec<SphereResidual>> {
    let restricted = phi.restrict(theta);
    let buckets = map_ball(p, n, 1, cap, |g| -> Result<Option<f64>> {
        let flag = match u_theta_element(g, theta, gap_tolerance) {
            Ok(f) => f,
            Err(Error::InsufficientGap { .. }) => return Ok(None),
            Err(e) => return Err(e),
        };
        let moved = &alpha.inverse * &g.matrix;
        let moved_inv = &g.inverse * &alpha.matrix;
        let lhs = restricted.eval(&kappa_with_inverse(&moved, &moved_inv)?) - restricted.eval(&g.kappa()?);
        let rhs = restricted.eval(&iwasawa(&alpha.inverse, &flag)?);
        Ok(Some((lhs - rhs).abs()))
    })?;
    buckets
        .into_iter()
        .enumerate()
        .map(|(i, bucket)| {
            let mut values: Vec<f64> = bucket.into_iter().filter_map(|r| r.transpose()).collect::<Result<_>>()?;
            values.sort_by(f64::total_cmp);
            let (min, median, max) = if values.is_empty() {
                (f64::NAN, f64::NAN, f64::NAN)
            } else {
                (values[0], values[values.len() / 2], values[values.len() - 1])
            };
            Ok(SphereResidual { sphere: i + 1, count: values.len(), min, median, max, log_density_defect: s * median })
        })
        .collect()
}

/// `exp(-delta phi(G_theta(F, G)))`, the density of the product measure
/// pairing against which the geodesic-flow measure is built.
pub fn pair_density(phi: &Functional, delta: f64, f: &Flag, g: &Flag, tol: f64) -> Result<f64> {
    let gromov = gromov_product(f, g, tol)?;
    Ok((-delta * phi.eval(&gromov)).exp())
}

/// Runs [`patterson_measure`] for `s = delta (1 + eps)` over a schedule.
pub fn patterson_schedule(p: &Presentation, theta: &ThetaSet, phi: &Functional, delta: f64, schedule: &[f64], n: usize, opts: &MeasureOptions) -> Result<Vec<AtomicMeasure>> {
    let opts = MeasureOptions { delta_hat: Some(delta), ..opts.clone() };
    schedule
        .par_iter()
        .map(|eps| patterson_measure(p, theta, phi, delta * (1.0 + eps), n, &opts))
        .collect()
}

#[derive(Clone, Debug, Serialize)]
pub struct EntropyDropReport {
    pub group: ExponentEstimate,
    pub subgroup: ExponentEstimate,
    pub gap: f64,
    /// Largest distance from a sampled limit flag of the group to the sampled
    /// limit set of the subgroup.
    pub separation: f64,
}

#[derive(Clone, Debug)]
pub struct EntropyDropOptions {
    pub exponent: ExponentOptions,
    /// Word length of the limit-set samples used for the separation.
    pub sample_length: usize,
    pub gap_tolerance: f64,
}

impl Default for EntropyDropOptions {
    fn default() -> Self {
        EntropyDropOptions {
            exponent: ExponentOptions::default(),
            sample_length: 5,
            gap_tolerance: crate::flags::DEFAULT_GAP_TOLERANCE,
        }
    }
}

/// Compares the critical exponent of a group with that of the subgroup
/// generated by `subgroup_words`, on a common regression window.
pub fn entropy_drop_experiment(
    p: &Presentation,
    subgroup_words: &[Word],
    theta: &ThetaSet,
    phi: &Functional,
    n_max: usize,
    opts: &EntropyDropOptions,
) -> Result<EntropyDropReport> {
    let sub = p.subgroup(subgroup_words, p.is_assumed_free())?;
    let whole = OrbitValues::compute(p, theta, phi, n_max, &opts.exponent)?;
    let part = OrbitValues::compute(&sub, theta, phi, n_max, &opts.exponent)?;
    let radius = whole.certified_radius().min(part.certified_radius());
    if !(radius > MIN_RADIUS) {
        return Err(Error::WindowEmpty(format!("matched radius {radius}")));
    }
    let (lo, hi) = (opts.exponent.window.0 * radius, opts.exponent.window.1 * radius);
    let group = whole.regression_in_window(lo, hi, opts.exponent.grid_points)?;
    let subgroup = part.regression_in_window(lo, hi, opts.exponent.grid_points)?;
    let cap = opts.exponent.element_cap;
    let big = crate::flags::sample_limit_set(p, theta, opts.sample_length, opts.gap_tolerance, cap)?;
    let small = crate::flags::sample_limit_set(&sub, theta, opts.sample_length, opts.gap_tolerance, cap)?;
    if small.flags.is_empty() || big.flags.is_empty() {
        return Err(Error::InvalidInput("empty limit-set sample".into()));
    }
    let nearest: Vec<f64> = big
        .flags
        .par_iter()
        .map(|f| -> Result<f64> {
            small.flags.iter().try_fold(f64::INFINITY, |m, g| Ok(m.min(crate::flags::flag_distance(f, g)?)))
        })
        .collect::<Result<_>>()?;
    let separation = nearest.into_iter().fold(0.0, f64::max);
    Ok(EntropyDropReport { gap: group.delta_hat - subgroup.delta_hat, group, subgroup, separation })
}

#[derive(Clone, Debug, Serialize)]
pub struct ConcavityRow {
    pub lambda: f64,
    /// Exponent of `lambda phi_1 + (1 - lambda) phi_2` after normalization.
    pub delta_hat: f64,
    pub residual: f64,
    pub within_bound: bool,
}

#[derive(Clone, Debug, Serialize)]
pub struct ConcavityReport {
    /// Raw exponents of the two functionals, used to normalize them.
    pub delta_first: f64,
    pub delta_second: f64,
    pub rows: Vec<ConcavityRow>,
}

/// Exponents along the segment between two functionals rescaled to have
/// exponent 1; rows above `1 + tolerance` are flagged.
pub fn concavity_experiment(
    p: &Presentation,
    theta: &ThetaSet,
    first: &Functional,
    second: &Functional,
    lambdas: &[f64],
    n_max: usize,
    tolerance: f64,
    opts: &ExponentOptions,
) -> Result<ConcavityReport> {
    if first.dim() != second.dim() {
        return Err(Error::ThetaMismatch);
    }
    let delta_first = critical_exponent(p, theta, first, n_max, opts)?.delta_hat;
    let delta_second = critical_exponent(p, theta, second, n_max, opts)?.delta_hat;
    if !(delta_first > 0.0 && delta_second > 0.0) {
        return Err(Error::WindowEmpty("an endpoint functional has zero exponent".into()));
    }
    let (a, b) = (first.scaled(delta_first), second.scaled(delta_second));
    let rows = lambdas
        .iter()
        .map(|&lambda| {
            let phi = a.scaled(lambda).plus(&b.scaled(1.0 - lambda));
            let est = critical_exponent(p, theta, &phi, n_max, opts)?;
            Ok(ConcavityRow { lambda, delta_hat: est.delta_hat, residual: est.residual, within_bound: est.delta_hat <= 1.0 + tolerance })
        })
        .collect::<Result<_>>()?;
    Ok(ConcavityReport { delta_first, delta_second, rows })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::cartan::Matrix;

    fn parabolic() -> Presentation {
        Presentation::new(vec![Matrix::from_row_slice(2, 2, &[1.0, 1.0, 0.0, 1.0])], vec![], true).unwrap()
    }

    fn cyclic_hyperbolic(lambda: f64) -> Presentation {
        Presentation::new(vec![Matrix::from_row_slice(2, 2, &[lambda, 0.0, 0.0, 1.0 / lambda])], vec![], true).unwrap()
    }

    fn alpha1() -> (ThetaSet, Functional) {
        (ThetaSet::full(2).unwrap(), Functional::alpha(2, 1).unwrap())
    }

    #[test]
    fn fit_recovers_line() {
        let xs = [0.0, 1.0, 2.0, 3.0];
        let ys = [1.0, 3.0, 5.0, 7.0];
        let (slope, intercept, residual) = linear_fit(&xs, &ys);
        assert!((slope - 2.0).abs() < 1e-15 && (intercept - 1.0).abs() < 1e-15 && residual < 1e-15);
    }

    #[test]
    fn parabolic_partial_sums_match_closed_form() {
        let (theta, phi) = alpha1();
        let s = 0.8;
        let sum = poincare_partial_sum(&parabolic(), &theta, &phi, s, 50, &ExponentOptions::default()).unwrap();
        let expected = 1.0 + 2.0 * (1..=50).map(|m| (-2.0 * s * (m as f64 / 2.0).asinh()).exp()).sum::<f64>();
        assert!((sum.value - expected).abs() < 1e-12 * expected);
    }

    #[test]
    fn cyclic_hyperbolic_has_zero_exponent() {
        let (theta, phi) = alpha1();
        let est = critical_exponent(&cyclic_hyperbolic(2.0), &theta, &phi, 400, &ExponentOptions::default()).unwrap();
        assert!(est.delta_hat.abs() < 0.01, "{}", est.delta_hat);
        let series = series_transition_exponent(&cyclic_hyperbolic(2.0), &theta, &phi, 40, &ExponentOptions::default()).unwrap();
        assert_eq!(series.delta_hat, 0.0);
    }

    #[test]
    fn negative_functional_rejected() {
        let (theta, phi) = alpha1();
        let err = critical_exponent(&cyclic_hyperbolic(2.0), &theta, &phi.scaled(-1.0), 10, &ExponentOptions::default()).unwrap_err();
        assert!(matches!(err, Error::NegativePhiOnCone { .. }));
    }

    #[test]
    fn empty_window() {
        let (theta, phi) = alpha1();
        let rotation = Matrix::from_row_slice(2, 2, &[0.0, -1.0, 1.0, 0.0]);
        let p = Presentation::new(vec![rotation], vec![], false).unwrap();
        let err = critical_exponent(&p, &theta, &phi, 5, &ExponentOptions::default()).unwrap_err();
        assert!(matches!(err, Error::WindowEmpty(_)));
    }

    #[test]
    fn scaling_covariance() {
        let (theta, phi) = alpha1();
        let p = parabolic();
        let opts = ExponentOptions::default();
        let a = critical_exponent(&p, &theta, &phi, 300, &opts).unwrap();
        let b = critical_exponent(&p, &theta, &phi.scaled(2.0), 300, &opts).unwrap();
        assert!((a.delta_hat - 2.0 * b.delta_hat).abs() < 1e-9);
    }

    #[test]
    fn subcritical_measure_rejected() {
        let (theta, phi) = alpha1();
        let opts = MeasureOptions { delta_hat: Some(0.5), ..MeasureOptions::default() };
        let err = patterson_measure(&parabolic(), &theta, &phi, 0.4, 5, &opts).unwrap_err();
        assert!(matches!(err, Error::SubcriticalS { .. }));
    }

    #[test]
    fn measure_concentrates_on_identity_flag_for_large_s() {
        let (theta, phi) = alpha1();
        let a = Matrix::from_row_slice(2, 2, &[2.0, 1.0, 1.0, 1.0]);
        let b = Matrix::from_row_slice(2, 2, &[2.0, -1.0, -1.0, 1.0]);
        let p = Presentation::new(vec![a, b], vec![], true).unwrap();
        let opts = MeasureOptions { delta_hat: Some(1.0), ..MeasureOptions::default() };
        let mu = patterson_measure(&p, &theta, &phi, 40.0, 3, &opts).unwrap();
        assert_eq!(mu.excluded_count, 1);
        assert!(mu.excluded_mass > 0.99);
        let total: f64 = mu.weights.iter().sum();
        assert!((total - 1.0).abs() < 1e-12);
        let generators = mu.words.iter().zip(&mu.weights).filter(|(w, _)| w.len() == 1).map(|(_, x)| x).sum::<f64>();
        assert!(generators > 0.999);
    }

    #[test]
    fn quasi_invariance_is_exact_on_diagonal_powers() {
        let (theta, phi) = alpha1();
        let p = cyclic_hyperbolic(1.5);
        let alpha = GroupElement::from_word(&p, &p.parse_word("a").unwrap());
        let table = quasi_invariance_residual(&p, &theta, &phi, &alpha, 1.0, 8, 1e-6, 1000).unwrap();
        for row in &table[1..] {
            assert!(row.max < 1e-12, "sphere {} residual {}", row.sphere, row.max);
        }
    }

    #[test]
    fn pair_density_grows_near_tangency() {
        let theta = ThetaSet::full(2).unwrap();
        let phi = Functional::alpha(2, 1).unwrap();
        let base = Flag::standard(&theta);
        let mut last = 0.0;
        for t in [0.5f64, 0.1, 0.01] {
            let g = Flag::from_frame(&theta, &Matrix::from_row_slice(2, 2, &[t.cos(), -t.sin(), t.sin(), t.cos()])).unwrap();
            let density = pair_density(&phi, 0.5, &base, &g, 1e-12).unwrap();
            assert!(density > last);
            last = density;
        }
    }
}
