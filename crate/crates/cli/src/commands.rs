//! One function per subcommand, each turning a validated config into tables,
//! a report and warnings.

use anyhow::Result;
use nalgebra::DVector;
use pslab_core::asymptotics::{
    box_counting_dimension, count_closed_geodesics, hausdorff_vs_exponent, CountOptions, HausdorffOptions, PointSet,
};
use pslab_core::cartan::{jordan, kappa, Functional, ThetaSet, WeylVector};
use pslab_core::flags::{attracting_fixed_flag, limit_cone_sample, sample_limit_set, Flag};
use pslab_core::hilbert::{conicality_score, shadow_measure_check, KleinModel, ShadowOptions};
use pslab_core::matgroup::{map_ball, GroupElement, Presentation, Word};
use pslab_core::patterson::{
    concavity_experiment, critical_exponent, entropy_drop_experiment, patterson_measure, quasi_invariance_residual,
    series_transition_exponent, EntropyDropOptions, ExponentEstimate, ExponentMethod, ExponentOptions, MeasureOptions,
};
use serde_json::json;

use crate::config::{ConfigError, Method, Metric, RunConfig, Setup};
use crate::output::{Cell, Outcome, Table};

/// Subcommand names, in the order they are documented.
pub const COMMANDS: [&str; 13] = [
    "kappa",
    "orbit",
    "limit-set",
    "limit-cone",
    "critical-exponent",
    "ps-measure",
    "quasi-invariance",
    "shadow-check",
    "conicality",
    "count-geodesics",
    "box-dim",
    "entropy-drop",
    "concavity",
];

const DEFAULT_N: usize = 8;

pub fn run(command: &str, config: &RunConfig, setup: &Setup) -> Result<Outcome> {
    let ctx = Context { config, p: &setup.presentation, theta: &setup.theta, phi: &setup.phi };
    match command {
        "kappa" => ctx.kappa(),
        "orbit" => ctx.orbit(),
        "limit-set" => ctx.limit_set(),
        "limit-cone" => ctx.limit_cone(),
        "critical-exponent" => ctx.critical_exponent(),
        "ps-measure" => ctx.ps_measure(),
        "quasi-invariance" => ctx.quasi_invariance(),
        "shadow-check" => ctx.shadow_check(),
        "conicality" => ctx.conicality(),
        "count-geodesics" => ctx.count_geodesics(),
        "box-dim" => ctx.box_dim(),
        "entropy-drop" => ctx.entropy_drop(),
        "concavity" => ctx.concavity(),
        other => Err(ConfigError::new("command", format!("unknown command {other}")).into()),
    }
}

struct Context<'a> {
    config: &'a RunConfig,
    p: &'a Presentation,
    theta: &'a ThetaSet,
    phi: &'a Functional,
}

fn indexed(prefix: &str, count: usize) -> impl Iterator<Item = String> + '_ {
    (1..=count).map(move |k| format!("{prefix}_{k}"))
}

fn weyl_cells(v: &WeylVector) -> impl Iterator<Item = Cell> + '_ {
    v.entries().iter().map(|&x| Cell::Float(x))
}

/// Column names of a flag: the first `max(theta)` frame columns, row-major.
fn flag_columns(d: usize, theta: &ThetaSet) -> Vec<String> {
    (1..=d).flat_map(|i| (1..=theta.max()).map(move |j| format!("x_{i}_{j}"))).collect()
}

fn flag_cells(flag: &Flag) -> Vec<Cell> {
    let frame = flag.frame();
    let width = flag.theta().max();
    (0..frame.nrows()).flat_map(|i| (0..width).map(move |j| Cell::Float(frame[(i, j)]))).collect()
}

fn exponent_summary(out: &mut Outcome, key: &str, est: &ExponentEstimate) {
    out.summarize(key, est.delta_hat);
    out.report(
        &format!("{key}Details"),
        json!({
            "method": est.method,
            "window": est.window,
            "residual": est.residual,
            "certifiedRadius": est.certified_radius,
            "negativeExceptions": est.negative_exceptions,
        }),
    );
    if est.negative_exceptions > 0 {
        out.warn(format!("{} orbit points have negative phi", est.negative_exceptions));
    }
}

impl Context<'_> {
    fn d(&self) -> usize {
        self.p.dim()
    }

    fn n(&self, default: usize) -> usize {
        self.config.params.n.unwrap_or(default)
    }

    fn cap(&self) -> usize {
        self.config.params.element_cap.unwrap_or(pslab_core::matgroup::DEFAULT_ELEMENT_CAP)
    }

    fn exponent_options(&self) -> ExponentOptions {
        let params = &self.config.params;
        let defaults = ExponentOptions::default();
        ExponentOptions {
            window: params.window.map_or(defaults.window, |[lo, hi]| (lo, hi)),
            grid_points: params.grid_points.unwrap_or(defaults.grid_points),
            element_cap: self.cap(),
            negative_fraction: self.config.tolerances.negative_fraction,
        }
    }

    fn estimate(&self, phi: &Functional, n: usize, default: Method) -> Result<ExponentEstimate> {
        let opts = self.exponent_options();
        Ok(match self.config.params.method.unwrap_or(default) {
            Method::Regression => critical_exponent(self.p, self.theta, phi, n, &opts)?,
            Method::Series => series_transition_exponent(self.p, self.theta, phi, n, &opts)?,
        })
    }

    fn parse_word(&self, text: &str, path: &str) -> Result<Word> {
        Ok(self.p.parse_word(text).map_err(|e| ConfigError::new(path, e))?)
    }

    fn measure_options(&self, delta: f64, epsilon: f64) -> MeasureOptions {
        MeasureOptions {
            delta_hat: Some(delta),
            min_margin: epsilon.min(MeasureOptions::default().min_margin),
            gap_tolerance: self.config.tolerances.gap,
            exponent: self.exponent_options(),
            shell: self.config.params.shell,
        }
    }

    fn exponent_and_s(&self, n: usize, default_method: Method, default_epsilon: f64) -> Result<(ExponentEstimate, f64, f64)> {
        let est = self.estimate(self.phi, n, default_method)?;
        let epsilon = self.config.params.epsilon.unwrap_or(default_epsilon);
        let s = self.config.params.s.unwrap_or(est.delta_hat * (1.0 + epsilon));
        Ok((est, epsilon, s))
    }

    fn kappa(&self) -> Result<Outcome> {
        let d = self.d();
        let mut table = Table::new("kappa", std::iter::once("generator".to_string()).chain(indexed("kappa", d)).chain(indexed("nu", d)));
        for (i, g) in self.p.generators().iter().enumerate() {
            let (k, nu) = (kappa(g)?, jordan(g)?);
            table.push(std::iter::once(Cell::from(i)).chain(weyl_cells(&k)).chain(weyl_cells(&nu)).collect());
        }
        let mut out = Outcome { tables: vec![table], ..Default::default() };
        out.report("labels", self.p.labels());
        Ok(out)
    }

    fn orbit(&self) -> Result<Outcome> {
        let d = self.d();
        let n = self.n(4);
        let restricted = self.phi.restrict(self.theta);
        let buckets = map_ball(self.p, n, 1, self.cap(), |g: &GroupElement| -> pslab_core::error::Result<(String, usize, WeylVector, f64)> {
            let k = g.kappa()?;
            let value = restricted.eval(&k);
            Ok((self.p.format_word(&g.word), g.word.len(), k, value))
        })?;
        let mut table = Table::new(
            "orbit",
            ["word".to_string(), "length".to_string()].into_iter().chain(indexed("kappa", d)).chain(["phi".to_string()]),
        );
        let mut negative = 0usize;
        for item in buckets.into_iter().flatten() {
            let (word, len, k, value) = item?;
            negative += usize::from(value < 0.0);
            table.push([Cell::from(word), Cell::from(len)].into_iter().chain(weyl_cells(&k)).chain([Cell::from(value)]).collect());
        }
        let mut out = Outcome::default();
        out.summarize("elements", table.rows.len());
        if negative > 0 {
            out.warn(format!("phi is negative on {negative} of {} orbit points", table.rows.len()));
        }
        out.tables.push(table);
        Ok(out)
    }

    fn limit_set(&self) -> Result<Outcome> {
        let n = self.n(DEFAULT_N);
        let sample = sample_limit_set(self.p, self.theta, n, self.config.tolerances.gap, self.cap())?;
        let mut table = Table::new("limit_set", std::iter::once("word".to_string()).chain(flag_columns(self.d(), self.theta)))
            .with_meta("theta", json!(self.theta.indices()));
        for (f, w) in sample.flags.iter().zip(&sample.words) {
            table.push(std::iter::once(Cell::from(self.p.format_word(w))).chain(flag_cells(f)).collect());
        }
        let mut out = Outcome::default();
        out.summarize("points", sample.flags.len());
        out.summarize("skipped", sample.skipped);
        if sample.skipped > 0 {
            out.warn(format!("{} elements skipped for insufficient root gap", sample.skipped));
        }
        out.tables.push(table);
        Ok(out)
    }

    fn limit_cone(&self) -> Result<Outcome> {
        let d = self.d();
        let n = self.n(DEFAULT_N);
        let directions = limit_cone_sample(self.p, self.theta, n, self.cap())?;
        let restricted = self.phi.restrict(self.theta);
        let mut table = Table::new("limit_cone", indexed("v", d).chain(["phi".to_string()]));
        let mut negative = 0usize;
        for v in &directions {
            let value = restricted.eval(v);
            negative += usize::from(value < 0.0);
            table.push(weyl_cells(v).chain([Cell::from(value)]).collect());
        }
        let fraction = if directions.is_empty() { 0.0 } else { negative as f64 / directions.len() as f64 };
        let mut out = Outcome::default();
        out.summarize("directions", directions.len());
        out.summarize("negativePhiFraction", fraction);
        if negative > 0 {
            out.warn(format!("phi is negative on a fraction {fraction} of the sampled cone"));
        }
        out.tables.push(table);
        Ok(out)
    }

    fn critical_exponent(&self) -> Result<Outcome> {
        let est = self.estimate(self.phi, self.n(DEFAULT_N), Method::Regression)?;
        let columns = match est.method {
            ExponentMethod::SphereRegression => ["radius", "log_count"],
            ExponentMethod::SeriesTransition => ["sphere", "log_increment"],
        };
        let mut table = Table::new("exponent_samples", columns);
        for &(x, y) in &est.samples {
            table.push(vec![x.into(), y.into()]);
        }
        let mut out = Outcome { tables: vec![table], ..Default::default() };
        exponent_summary(&mut out, "deltaHat", &est);
        out.summarize("residual", est.residual);
        Ok(out)
    }

    fn ps_measure(&self) -> Result<Outcome> {
        let n = self.n(DEFAULT_N);
        let (est, epsilon, s) = self.exponent_and_s(n, Method::Regression, 0.1)?;
        let schedule: Vec<f64> = match (&self.config.params.epsilon_schedule, self.config.params.s) {
            (Some(eps), None) => eps.iter().map(|e| est.delta_hat * (1.0 + e)).collect(),
            _ => vec![s],
        };
        let mut out = Outcome::default();
        exponent_summary(&mut out, "deltaHat", &est);
        let mut measures = Vec::new();
        for (i, &s) in schedule.iter().enumerate() {
            let margin = (s / est.delta_hat - 1.0).min(epsilon);
            let mu = patterson_measure(self.p, self.theta, self.phi, s, n, &self.measure_options(est.delta_hat, margin))?;
            let name = if schedule.len() == 1 { "atoms".to_string() } else { format!("atoms_{i}") };
            let mut table =
                Table::new(&name, ["word".to_string(), "weight".to_string()].into_iter().chain(flag_columns(self.d(), self.theta)))
                    .with_meta("s", json!(s));
            for ((w, &weight), f) in mu.words.iter().zip(&mu.weights).zip(&mu.atoms) {
                table.push([Cell::from(self.p.format_word(w)), Cell::from(weight)].into_iter().chain(flag_cells(f)).collect());
            }
            if mu.excluded_count > 0 {
                out.warn(format!("s = {s}: {} atoms dropped for insufficient root gap (mass {})", mu.excluded_count, mu.excluded_mass));
            }
            measures.push(json!({ "s": s, "atoms": mu.len(), "excludedCount": mu.excluded_count, "excludedMass": mu.excluded_mass }));
            out.tables.push(table);
        }
        out.summarize("measures", measures);
        Ok(out)
    }

    fn quasi_invariance(&self) -> Result<Outcome> {
        let n = self.n(6);
        let (est, _, s) = self.exponent_and_s(n, Method::Regression, 0.1)?;
        let text = self.config.params.alpha_word.clone().unwrap_or_else(|| self.p.labels()[0].clone());
        let word = self.parse_word(&text, "params.alphaWord")?;
        let alpha = GroupElement::from_word(self.p, &word);
        let rows = quasi_invariance_residual(self.p, self.theta, self.phi, &alpha, s, n, self.config.tolerances.gap, self.cap())?;
        let mut table = Table::new("residuals", ["sphere", "count", "min", "median", "max", "log_density_defect"]);
        for r in &rows {
            table.push(vec![r.sphere.into(), r.count.into(), r.min.into(), r.median.into(), r.max.into(), r.log_density_defect.into()]);
        }
        let mut out = Outcome { tables: vec![table], ..Default::default() };
        exponent_summary(&mut out, "deltaHat", &est);
        out.summarize("s", s);
        out.summarize("alphaWord", self.p.format_word(&word));
        out.summarize("maxResidual", rows.iter().map(|r| r.max).fold(0.0, f64::max));
        Ok(out)
    }

    fn shadow_check(&self) -> Result<Outcome> {
        let params = &self.config.params;
        let model = KleinModel::detect(self.p)?;
        let n = self.n(10);
        let (est, epsilon, s) = self.exponent_and_s(n, Method::Series, 0.01)?;
        let mut measure_opts = self.measure_options(est.delta_hat, epsilon);
        measure_opts.shell = Some(params.shell.unwrap_or(1));
        let mu = patterson_measure(self.p, self.theta, self.phi, s, n, &measure_opts)?;
        let defaults = ShadowOptions::default();
        let opts = ShadowOptions {
            spheres: params.spheres.map_or(defaults.spheres.clone(), |[a, b]| a..=b),
            radius_factor: params.radius_factor.unwrap_or(defaults.radius_factor),
            mass_target: params.mass_target.unwrap_or(defaults.mass_target),
            element_cap: self.cap(),
            ..defaults
        };
        let report = shadow_measure_check(&model, self.p, &mu, self.phi, est.delta_hat, &opts)?;
        let max_spread = params.max_spread.unwrap_or(100.0);
        let mut table = Table::new("spheres", ["sphere", "count", "min", "max", "spread"]);
        for r in &report.spheres {
            table.push(vec![r.sphere.into(), r.count.into(), r.min.into(), r.max.into(), r.spread.into()]);
        }
        let mut out = Outcome { tables: vec![table], ..Default::default() };
        exponent_summary(&mut out, "deltaHat", &est);
        out.summarize("s", s);
        out.summarize("r0", report.r0);
        out.summarize("eps0", report.eps0);
        out.summarize("radius", report.radius);
        out.summarize("bound", report.bound);
        out.summarize("pooledSpread", report.pooled_spread);
        out.summarize("strictlyIncreasing", report.strictly_increasing);
        out.summarize("growthTrend", report.growth_trend);
        out.summarize("maxSpread", max_spread);
        out.summarize("passes", report.passes(max_spread));
        if mu.excluded_count > 0 {
            out.warn(format!("{} atoms dropped for insufficient root gap", mu.excluded_count));
        }
        if !report.passes(max_spread) {
            out.warn("shadow spreads exceed the requested bounds or grow across spheres");
        }
        Ok(out)
    }

    fn conicality(&self) -> Result<Outcome> {
        let params = &self.config.params;
        let model = KleinModel::detect(self.p)?;
        let d = self.d();
        let (target, source) = match (&params.boundary_point, &params.boundary_word) {
            (Some(v), None) => {
                if v.len() != d {
                    return Err(ConfigError::new("params.boundaryPoint", format!("expected {d} entries")).into());
                }
                (DVector::from_column_slice(v), "boundaryPoint".to_string())
            }
            (None, word) => {
                let text = word.clone().unwrap_or_else(|| self.p.labels()[0].clone());
                let w = self.parse_word(&text, "params.boundaryWord")?;
                let g = GroupElement::from_word(self.p, &w);
                let flag = attracting_fixed_flag(&g.matrix, &ThetaSet::extremal(d)?, self.config.tolerances.gap)?;
                (DVector::from_vec(flag.line()), format!("attracting line of {}", self.p.format_word(&w)))
            }
            (Some(_), Some(_)) => {
                return Err(ConfigError::new("params", "give boundaryPoint or boundaryWord, not both").into());
            }
        };
        let z = model.boundary_point(&target)?;
        let r = params.r.unwrap_or(1.0);
        let n = self.n(DEFAULT_N);
        let counts = conicality_score(&model, self.p, &z, r, n, self.cap())?;
        let mut table = Table::new("conicality", ["sphere", "count"]);
        for (i, &c) in counts.iter().enumerate() {
            table.push(vec![(i + 1).into(), c.into()]);
        }
        let mut out = Outcome { tables: vec![table], ..Default::default() };
        out.summarize("target", source);
        out.summarize("r", r);
        out.summarize("counts", &counts);
        Ok(out)
    }

    fn count_geodesics(&self) -> Result<Outcome> {
        let params = &self.config.params;
        let est = self.estimate(self.phi, self.n(10), Method::Regression)?;
        let t_grid = match &params.t_grid {
            Some(grid) => grid.clone(),
            None => {
                let (t_max, step) = (params.t_max.unwrap_or(40.0), params.t_step.unwrap_or(1.0));
                if !(step > 0.0 && t_max >= step) {
                    return Err(ConfigError::new("params.tStep", "need 0 < tStep <= tMax").into());
                }
                (1..).map(|k| k as f64 * step).take_while(|&t| t <= t_max + 1e-9 * step).collect()
            }
        };
        let defaults = CountOptions::default();
        let opts = CountOptions {
            primitive_only: params.primitive_only.unwrap_or(false),
            max_word_length: params.max_word_length.unwrap_or(defaults.max_word_length),
            element_cap: self.cap(),
            ..defaults
        };
        let counts = count_closed_geodesics(self.p, self.theta, self.phi, est.delta_hat, &t_grid, &opts)?;
        let mut table = Table::new("counts", ["t", "oriented", "unoriented", "prediction", "ratio", "log_growth", "truncated"])
            .with_meta("deltaHat", json!(counts.delta_hat))
            .with_meta("certifiedT", json!(counts.certified_t))
            .with_meta("wordLength", json!(counts.word_length))
            .with_meta("primitiveOnly", json!(counts.primitive_only));
        for r in &counts.rows {
            table.push(vec![
                r.t.into(),
                r.oriented.into(),
                r.unoriented.into(),
                r.prediction.into(),
                r.ratio.into(),
                r.log_growth.into(),
                r.truncated.into(),
            ]);
        }
        let mut out = Outcome { tables: vec![table], ..Default::default() };
        exponent_summary(&mut out, "deltaHat", &est);
        out.summarize("wordLength", counts.word_length);
        out.summarize("certifiedT", counts.certified_t);
        out.summarize("classes", counts.classes);
        if let Some(row) = counts.largest_certified() {
            out.summarize("largestCertifiedT", row.t);
            out.summarize("logGrowthAtCertifiedT", row.log_growth);
            out.summarize("logGrowthGap", (row.log_growth - est.delta_hat).abs());
        }
        let truncated = counts.rows.iter().filter(|r| r.truncated).count();
        if truncated > 0 {
            out.warn(format!("{truncated} rows lie beyond the certified cutoff {}", counts.certified_t));
        }
        Ok(out)
    }

    fn box_dim(&self) -> Result<Outcome> {
        let params = &self.config.params;
        let n = self.n(DEFAULT_N);
        let mut out = Outcome::default();
        let dimension = match params.metric.unwrap_or(Metric::Chordal) {
            Metric::Chordal => {
                let opts = HausdorffOptions {
                    exponent: self.exponent_options(),
                    scales: params.scales.clone(),
                    gap_tolerance: self.config.tolerances.gap,
                    ..Default::default()
                };
                let report = hausdorff_vs_exponent(self.p, n, &opts)?;
                exponent_summary(&mut out, "deltaHat", &report.exponent);
                out.summarize("difference", report.difference);
                report.box_dimension
            }
            Metric::Flag => {
                let scales = params
                    .scales
                    .clone()
                    .ok_or_else(|| ConfigError::new("params.scales", "required for the flag metric"))?;
                let sample = sample_limit_set(self.p, self.theta, n, self.config.tolerances.gap, self.cap())?;
                if sample.skipped > 0 {
                    out.warn(format!("{} elements skipped for insufficient root gap", sample.skipped));
                }
                box_counting_dimension(&PointSet::Flags(sample.flags), &scales)?
            }
        };
        let mut table = Table::new("box_counts", ["scale", "count"]);
        for &(scale, count) in &dimension.counts {
            table.push(vec![scale.into(), count.into()]);
        }
        table = table.with_meta("dimension", json!(dimension.dimension)).with_meta("residual", json!(dimension.residual));
        out.summarize("boxDimension", dimension.dimension);
        out.summarize("residual", dimension.residual);
        out.summarize("distinctPoints", dimension.distinct_points);
        out.tables.push(table);
        Ok(out)
    }

    fn entropy_drop(&self) -> Result<Outcome> {
        let params = &self.config.params;
        let texts = params
            .subgroup_words
            .as_ref()
            .ok_or_else(|| ConfigError::new("params.subgroupWords", "required"))?;
        let words = texts
            .iter()
            .enumerate()
            .map(|(i, t)| self.parse_word(t, &format!("params.subgroupWords[{i}]")))
            .collect::<Result<Vec<_>>>()?;
        let defaults = EntropyDropOptions::default();
        let opts = EntropyDropOptions {
            exponent: self.exponent_options(),
            sample_length: params.sample_length.unwrap_or(defaults.sample_length),
            gap_tolerance: self.config.tolerances.gap,
        };
        let report = entropy_drop_experiment(self.p, &words, self.theta, self.phi, self.n(10), &opts)?;
        let mut table = Table::new("exponents", ["group", "delta_hat", "residual", "window_lo", "window_hi"]);
        for (name, est) in [("group", &report.group), ("subgroup", &report.subgroup)] {
            table.push(vec![name.into(), est.delta_hat.into(), est.residual.into(), est.window.0.into(), est.window.1.into()]);
        }
        let mut out = Outcome { tables: vec![table], ..Default::default() };
        exponent_summary(&mut out, "deltaHat", &report.group);
        exponent_summary(&mut out, "subgroupDeltaHat", &report.subgroup);
        out.summarize("gap", report.gap);
        out.summarize("separation", report.separation);
        out.summarize("subgroupWords", words.iter().map(|w| self.p.format_word(w)).collect::<Vec<_>>());
        Ok(out)
    }

    fn concavity(&self) -> Result<Outcome> {
        let params = &self.config.params;
        let second = match &params.phi2 {
            Some(spec) => spec.functional(self.d()).map_err(|e| ConfigError::new(format!("params.phi2.{}", e.path), e.message))?,
            None => self.phi.iota_star(),
        };
        let lambdas = params.lambdas.clone().unwrap_or_else(|| (1..=9).map(|k| k as f64 / 10.0).collect());
        let tolerance = params.bound_tolerance.unwrap_or(0.05);
        let report = concavity_experiment(self.p, self.theta, self.phi, &second, &lambdas, self.n(10), tolerance, &self.exponent_options())?;
        let mut table = Table::new("concavity", ["lambda", "delta_hat", "residual", "within_bound"])
            .with_meta("deltaFirst", json!(report.delta_first))
            .with_meta("deltaSecond", json!(report.delta_second));
        for r in &report.rows {
            table.push(vec![r.lambda.into(), r.delta_hat.into(), r.residual.into(), r.within_bound.into()]);
        }
        let mut out = Outcome { tables: vec![table], ..Default::default() };
        out.summarize("deltaFirst", report.delta_first);
        out.summarize("deltaSecond", report.delta_second);
        out.summarize("maxNormalized", report.rows.iter().map(|r| r.delta_hat).fold(f64::NEG_INFINITY, f64::max));
        out.summarize("allWithinBound", report.rows.iter().all(|r| r.within_bound));
        if let Some(r) = report.rows.iter().find(|r| !r.within_bound) {
            out.warn(format!("normalized exponent {} at lambda {} exceeds 1 + {tolerance}", r.delta_hat, r.lambda));
        }
        Ok(out)
    }
}
