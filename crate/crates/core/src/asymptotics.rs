//! Closed-geodesic counting and box-counting dimension of sampled limit sets.

use std::collections::HashMap;

use serde::Serialize;

use crate::cartan::{project_theta, Functional, ThetaSet};
use crate::error::{Error, Result};
use crate::flags::{flag_distance, sample_limit_set, Flag};
use crate::matgroup::{conjugacy_classes, map_ball, Presentation};
use crate::patterson::{critical_exponent, linear_fit, ExponentEstimate, ExponentOptions};

#[derive(Clone, Debug, Serialize)]
pub struct CountRow {
    pub t: f64,
    /// Classes `g` with `0 < phi(nu_theta(g)) <= t`; `g` and `g^-1` count separately.
    pub oriented: usize,
    pub unoriented: f64,
    /// `exp(delta t) / (delta t)`.
    pub prediction: f64,
    pub ratio: f64,
    /// `log(oriented) / t`.
    pub log_growth: f64,
    /// Classes longer than the enumerated word length might still fall below `t`.
    pub truncated: bool,
}

#[derive(Clone, Debug, Serialize)]
pub struct CountTable {
    pub rows: Vec<CountRow>,
    pub delta_hat: f64,
    pub word_length: usize,
    /// Smallest `phi(nu_theta) / |w|` over enumerated cyclic words.
    pub per_letter_min: f64,
    pub certified_t: f64,
    pub classes: usize,
    pub primitive_only: bool,
}

impl CountTable {
    pub fn largest_certified(&self) -> Option<&CountRow> {
        self.rows.iter().rev().find(|r| !r.truncated && r.oriented > 0)
    }
}

#[derive(Clone, Debug)]
pub struct CountOptions {
    pub primitive_only: bool,
    pub initial_length: usize,
    pub max_word_length: usize,
    pub element_cap: usize,
}

impl Default for CountOptions {
    fn default() -> Self {
        CountOptions {
            primitive_only: false,
            initial_length: 4,
            max_word_length: 12,
            element_cap: crate::matgroup::DEFAULT_ELEMENT_CAP,
        }
    }
}

/// Counts conjugacy classes by `phi(nu_theta)`, lengthening the enumeration
/// until the certified cutoff passes the largest requested `t` or the word
/// length cap is reached.
pub fn count_closed_geodesics(
    p: &Presentation,
    theta: &ThetaSet,
    phi: &Functional,
    delta_hat: f64,
    t_grid: &[f64],
    opts: &CountOptions,
) -> Result<CountTable> {
    if t_grid.is_empty() || t_grid.windows(2).any(|w| w[1] <= w[0]) || t_grid[0] <= 0.0 {
        return Err(Error::InvalidInput("t grid must be positive and strictly increasing".into()));
    }
    if p.dim() != theta.dim() || phi.dim() != theta.dim() {
        return Err(Error::ThetaMismatch);
    }
    let restricted = phi.restrict(theta);
    let t_max = t_grid[t_grid.len() - 1];
    let mut length = opts.initial_length.clamp(1, opts.max_word_length.max(1));
    loop {
        let classes = conjugacy_classes(p, length, opts.primitive_only, opts.element_cap)?;
        let mut lengths = Vec::with_capacity(classes.classes.len());
        let mut per_letter_min = f64::INFINITY;
        for c in &classes.classes {
            let value = restricted.eval(&project_theta(&c.jordan, theta)?);
            per_letter_min = per_letter_min.min(value / c.word.len() as f64);
            if value > 0.0 {
                lengths.push(value);
            }
        }
        let certified_t = per_letter_min.max(0.0) * (length + 1) as f64;
        if certified_t > t_max || length >= opts.max_word_length {
            lengths.sort_by(f64::total_cmp);
            let rows = t_grid
                .iter()
                .map(|&t| {
                    let oriented = lengths.partition_point(|&v| v <= t);
                    let prediction = if delta_hat > 0.0 { (delta_hat * t).exp() / (delta_hat * t) } else { f64::NAN };
                    CountRow {
                        t,
                        oriented,
                        unoriented: oriented as f64 / 2.0,
                        prediction,
                        ratio: oriented as f64 / prediction,
                        log_growth: (oriented as f64).ln() / t,
                        truncated: t >= certified_t,
                    }
                })
                .collect();
            return Ok(CountTable {
                rows,
                delta_hat,
                word_length: length,
                per_letter_min,
                certified_t,
                classes: lengths.len(),
                primitive_only: opts.primitive_only,
            });
        }
        length += 1;
    }
}

/// Point samples for box counting.
#[derive(Clone, Debug)]
pub enum PointSet {
    /// Points of `R^m` with the Euclidean metric.
    Euclidean(Vec<Vec<f64>>),
    /// Lines of `R^d` given by spanning vectors, with the chordal metric `sin(angle)`.
    Projective(Vec<Vec<f64>>),
    /// Flags with the flag distance.
    Flags(Vec<Flag>),
}

impl PointSet {
    pub fn len(&self) -> usize {
        match self {
            PointSet::Euclidean(v) | PointSet::Projective(v) => v.len(),
            PointSet::Flags(v) => v.len(),
        }
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }
}

#[derive(Clone, Debug, Serialize)]
pub struct BoxDimension {
    pub dimension: f64,
    pub residual: f64,
    /// `(scale, covering count)` pairs.
    pub counts: Vec<(f64, usize)>,
    pub distinct_points: usize,
}

pub const MIN_BOX_POINTS: usize = 100;
pub const MIN_BOX_SCALES: usize = 5;
const SATURATION_LIMIT: f64 = 0.4;
/// Chordal distances below this are dominated by round-off in sampled flags.
const MIN_RESOLVED_SCALE: f64 = 1e-12;
/// Above this ambient dimension the neighbour search falls back to a scan.
const MAX_GRID_DIM: usize = 6;

/// Sorted, deduplicated coordinates; projective points are unit vectors
/// with a positive leading nonzero entry.
fn canonical_vectors(points: &[Vec<f64>], projective: bool) -> Result<Vec<Vec<f64>>> {
    let dim = points[0].len();
    let mut out = Vec::with_capacity(points.len());
    for p in points {
        if p.len() != dim || p.iter().any(|x| !x.is_finite()) {
            return Err(Error::InvalidInput("points must be finite and of equal dimension".into()));
        }
        if projective {
            let norm = p.iter().map(|x| x * x).sum::<f64>().sqrt();
            if norm == 0.0 {
                return Err(Error::InvalidInput("zero vector does not span a line".into()));
            }
            let lead = p.iter().find(|x| x.abs() > 1e-12 * norm).copied().unwrap_or(1.0);
            let scale = lead.signum() / norm;
            out.push(p.iter().map(|x| x * scale).collect());
        } else {
            out.push(p.clone());
        }
    }
    out.sort_by(|a, b| a.iter().zip(b).map(|(x, y)| x.total_cmp(y)).find(|o| o.is_ne()).unwrap_or(std::cmp::Ordering::Equal));
    out.dedup_by(|a, b| a.iter().zip(b.iter()).all(|(x, y)| (x - y).abs() <= 1e-12));
    Ok(out)
}

fn euclidean(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum::<f64>().sqrt()
}

fn chordal(a: &[f64], b: &[f64]) -> f64 {
    let minus = euclidean(a, b);
    let plus = a.iter().zip(b).map(|(x, y)| (x + y) * (x + y)).sum::<f64>().sqrt();
    0.5 * minus * plus
}

fn cell_of(v: &[f64], size: f64) -> Vec<i64> {
    v.iter().map(|x| (x / size).floor() as i64).collect()
}

fn neighbours(cell: &[i64]) -> Vec<Vec<i64>> {
    let mut out = vec![Vec::with_capacity(cell.len())];
    for &c in cell {
        out = out
            .into_iter()
            .flat_map(|prefix| {
                (-1..=1).map(move |o| {
                    let mut next = prefix.clone();
                    next.push(c + o);
                    next
                })
            })
            .collect();
    }
    out
}

/// Greedy cover of vectors in order: a point opens a new ball unless it lies
/// within `eps` of an existing center.
fn greedy_vector_cover(points: &[Vec<f64>], eps: f64, projective: bool) -> usize {
    let metric = if projective { chordal } else { euclidean };
    let dim = points[0].len();
    if dim > MAX_GRID_DIM {
        let mut centers: Vec<&Vec<f64>> = Vec::new();
        for p in points {
            if !centers.iter().any(|c| metric(c, p) <= eps) {
                centers.push(p);
            }
        }
        return centers.len();
    }
    // Chordal distance eps forces one of v, -v within sqrt(2) eps in R^d.
    let size = if projective { eps * std::f64::consts::SQRT_2 } else { eps };
    let mut grid: HashMap<Vec<i64>, Vec<usize>> = HashMap::new();
    let mut count = 0;
    for (i, p) in points.iter().enumerate() {
        let mut probes = vec![p.clone()];
        if projective {
            probes.push(p.iter().map(|x| -x).collect());
        }
        let covered = probes.iter().any(|q| {
            neighbours(&cell_of(q, size))
                .iter()
                .filter_map(|c| grid.get(c))
                .flatten()
                .any(|&j| metric(&points[j], p) <= eps)
        });
        if !covered {
            grid.entry(cell_of(p, size)).or_default().push(i);
            count += 1;
        }
    }
    count
}

fn greedy_flag_cover(flags: &[Flag], eps: f64) -> Result<usize> {
    let mut centers: Vec<&Flag> = Vec::new();
    for f in flags {
        let mut covered = false;
        for c in &centers {
            if flag_distance(c, f)? <= eps {
                covered = true;
                break;
            }
        }
        if !covered {
            centers.push(f);
        }
    }
    Ok(centers.len())
}

fn check_geometric(scales: &[f64]) -> Result<()> {
    if scales.len() < MIN_BOX_SCALES || scales.iter().any(|s| !(*s > 0.0)) {
        return Err(Error::InvalidInput(format!("need at least {MIN_BOX_SCALES} positive scales")));
    }
    let ratio = scales[1] / scales[0];
    if (ratio - 1.0).abs() < 1e-12 || scales.windows(2).any(|w| ((w[1] / w[0]) / ratio - 1.0).abs() > 1e-6) {
        return Err(Error::InvalidInput("scale grid must be geometric".into()));
    }
    Ok(())
}

/// Geometric grid of `count` scales from `lo` to `hi`.
pub fn geometric_scales(lo: f64, hi: f64, count: usize) -> Vec<f64> {
    (0..count).map(|i| lo * (hi / lo).powf(i as f64 / (count - 1) as f64)).collect()
}

/// Slope of `log N(eps)` against `log(1 / eps)` for greedy covers.
pub fn box_counting_dimension(points: &PointSet, scales: &[f64]) -> Result<BoxDimension> {
    if points.len() < MIN_BOX_POINTS {
        return Err(Error::InvalidInput(format!("need at least {MIN_BOX_POINTS} points")));
    }
    check_geometric(scales)?;
    let (distinct, counts): (usize, Vec<usize>) = match points {
        PointSet::Euclidean(v) | PointSet::Projective(v) => {
            let projective = matches!(points, PointSet::Projective(_));
            let canon = canonical_vectors(v, projective)?;
            (canon.len(), scales.iter().map(|&e| greedy_vector_cover(&canon, e, projective)).collect())
        }
        PointSet::Flags(flags) => {
            let mut unique: Vec<&Flag> = Vec::new();
            for f in flags {
                let mut seen = false;
                for u in &unique {
                    if flag_distance(u, f)? <= 1e-12 {
                        seen = true;
                        break;
                    }
                }
                if !seen {
                    unique.push(f);
                }
            }
            let owned: Vec<Flag> = unique.into_iter().cloned().collect();
            let counts = scales.iter().map(|&e| greedy_flag_cover(&owned, e)).collect::<Result<_>>()?;
            (owned.len(), counts)
        }
    };
    if distinct > 1 {
        let saturated = counts.iter().filter(|&&c| c >= distinct).count();
        if saturated as f64 > SATURATION_LIMIT * counts.len() as f64 {
            return Err(Error::DegenerateScales);
        }
    }
    let xs: Vec<f64> = scales.iter().map(|s| -s.ln()).collect();
    let ys: Vec<f64> = counts.iter().map(|&c| (c as f64).ln()).collect();
    let (dimension, _, residual) = linear_fit(&xs, &ys);
    Ok(BoxDimension { dimension, residual, counts: scales.iter().copied().zip(counts).collect(), distinct_points: distinct })
}

#[derive(Clone, Debug, Serialize)]
pub struct HausdorffReport {
    pub exponent: ExponentEstimate,
    pub box_dimension: BoxDimension,
    pub difference: f64,
}

#[derive(Clone, Debug)]
pub struct HausdorffOptions {
    pub exponent: ExponentOptions,
    pub scale_count: usize,
    /// The finest scale is this multiple of `exp(-min alpha_1(kappa))` over the sampled sphere.
    pub fine_factor: f64,
    /// The coarsest scale is this fraction of the sample diameter.
    pub coarse_fraction: f64,
    /// Explicit scale grid, replacing the automatic one.
    pub scales: Option<Vec<f64>>,
    pub gap_tolerance: f64,
}

impl Default for HausdorffOptions {
    fn default() -> Self {
        HausdorffOptions {
            exponent: ExponentOptions::default(),
            scale_count: 8,
            fine_factor: 1.0,
            coarse_fraction: 0.1,
            scales: None,
            gap_tolerance: crate::flags::DEFAULT_GAP_TOLERANCE,
        }
    }
}

/// Geometric grid from `fine_factor * exp(-min alpha_1(kappa))` over the outer
/// sphere, below which the sample cannot resolve the limit set, up to a
/// fraction of the sample diameter.
fn automatic_scales(p: &Presentation, n_max: usize, lines: &[Vec<f64>], opts: &HausdorffOptions) -> Result<Vec<f64>> {
    let sphere = map_ball(p, n_max, n_max, opts.exponent.element_cap, |g| g.kappa().map(|k| k.alpha(1)))?;
    let min_gap = sphere.into_iter().flatten().collect::<Result<Vec<f64>>>()?.into_iter().fold(f64::INFINITY, f64::min);
    let canon = if lines.is_empty() { Vec::new() } else { canonical_vectors(lines, true)? };
    // Within a factor two of the diameter.
    let diameter = canon.first().map_or(0.0, |v| canon.iter().map(|w| chordal(v, w)).fold(0.0, f64::max));
    let fine = (opts.fine_factor * (-min_gap).exp()).max(MIN_RESOLVED_SCALE);
    let coarse = opts.coarse_fraction * diameter;
    if !(coarse > fine) {
        return Err(Error::DegenerateScales);
    }
    Ok(geometric_scales(fine, coarse, opts.scale_count))
}

/// The `alpha_1` critical exponent next to the box dimension of the sampled
/// limit set in projective space.
pub fn hausdorff_vs_exponent(p: &Presentation, n_max: usize, opts: &HausdorffOptions) -> Result<HausdorffReport> {
    let d = p.dim();
    let theta = ThetaSet::extremal(d)?;
    let alpha = Functional::alpha(d, 1)?;
    let exponent = critical_exponent(p, &theta, &alpha, n_max, &opts.exponent)?;
    let sample = sample_limit_set(p, &theta, n_max, opts.gap_tolerance, opts.exponent.element_cap)?;
    let lines: Vec<Vec<f64>> = sample.flags.iter().map(Flag::line).collect();
    let scales = match &opts.scales {
        Some(s) => s.clone(),
        None => automatic_scales(p, n_max, &lines, opts)?,
    };
    let box_dimension = box_counting_dimension(&PointSet::Projective(lines), &scales)?;
    Ok(HausdorffReport { difference: exponent.delta_hat - box_dimension.dimension, exponent, box_dimension })
}
