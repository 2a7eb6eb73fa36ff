//! Simulation-in-the-loop calibration experiments.
//!
//! An experiment frees one parameter family (car following, lane change or
//! both) and fits it to one detector quantity (flow, speed or occupancy).
//! Labels follow the 3 × 3 matrix `1.a` … `3.c`: the digit picks the
//! family, the letter the quantity.

use std::fmt;
use std::io::Write;
use std::str::FromStr;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::macroscopic::{edie_fields, GridSpec, Lanes, MacroField};
use crate::metrics::{objective_with_seed, rmse_detectors, rmse_macro, try_objective, Quantity};
use crate::microsim::run_with_seed;
use crate::optimizer::{differential_evolution_with, DEConfig, DeOptions, OptResult};
use crate::scenario::{ParamId, ParameterBounds, ParameterSet, ScenarioConfig};
use crate::sensing::{simulate_detectors, MeasurementGrid};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum ParamSubset {
    #[serde(rename = "cf")]
    CarFollowing,
    #[serde(rename = "lc")]
    LaneChange,
    #[serde(rename = "cf+lc")]
    Both,
}

impl ParamSubset {
    pub const ALL: [ParamSubset; 3] = [ParamSubset::CarFollowing, ParamSubset::LaneChange, ParamSubset::Both];

    pub fn ids(self) -> Vec<ParamId> {
        match self {
            ParamSubset::CarFollowing => ParamId::CAR_FOLLOWING.to_vec(),
            ParamSubset::LaneChange => ParamId::LANE_CHANGE.to_vec(),
            ParamSubset::Both => ParamId::ALL.to_vec(),
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            ParamSubset::CarFollowing => "cf",
            ParamSubset::LaneChange => "lc",
            ParamSubset::Both => "cf+lc",
        }
    }

    fn digit(self) -> char {
        match self {
            ParamSubset::CarFollowing => '1',
            ParamSubset::LaneChange => '2',
            ParamSubset::Both => '3',
        }
    }
}

/// Quantities an experiment can be fitted to, in label-letter order.
pub const CALIBRATION_QUANTITIES: [Quantity; 3] = [Quantity::Flow, Quantity::Speed, Quantity::Occupancy];

fn letter(q: Quantity) -> Option<char> {
    match q {
        Quantity::Flow => Some('a'),
        Quantity::Speed => Some('b'),
        Quantity::Occupancy => Some('c'),
        Quantity::Density => None,
    }
}

/// Which demand realization candidate simulations use.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SeedMode {
    /// A seed different from the one that generated the observations.
    #[default]
    Distinct,
    /// The data-generating seed itself.
    Same,
}

impl SeedMode {
    pub fn simulation_seed(self, data_seed: u64) -> u64 {
        match self {
            SeedMode::Distinct => data_seed.wrapping_add(1),
            SeedMode::Same => data_seed,
        }
    }
}

impl FromStr for SeedMode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_lowercase().as_str() {
            "distinct" => Ok(SeedMode::Distinct),
            "same" => Ok(SeedMode::Same),
            other => Err(Error::validation("seed mode", format!("expected distinct or same, got {other:?}"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ExperimentSpec {
    pub label: String,
    pub subset: ParamSubset,
    pub quantity: Quantity,
    pub de: DEConfig,
}

impl ExperimentSpec {
    pub fn new(subset: ParamSubset, quantity: Quantity, de: DEConfig) -> Result<Self> {
        let l = letter(quantity).ok_or_else(|| {
            Error::validation("quantity", format!("cannot calibrate against {quantity}"))
        })?;
        Ok(ExperimentSpec {
            label: format!("{}.{l}", subset.digit()),
            subset,
            quantity,
            de,
        })
    }

    pub fn from_label(label: &str, de: DEConfig) -> Result<Self> {
        let bad = || Error::validation("label", format!("expected 1.a through 3.c, got {label:?}"));
        let mut chars = label.trim().chars();
        let (Some(d), Some('.'), Some(l), None) = (chars.next(), chars.next(), chars.next(), chars.next()) else {
            return Err(bad());
        };
        let subset = ParamSubset::ALL.into_iter().find(|s| s.digit() == d).ok_or_else(bad)?;
        let quantity = CALIBRATION_QUANTITIES
            .into_iter()
            .find(|&q| letter(q) == Some(l))
            .ok_or_else(bad)?;
        ExperimentSpec::new(subset, quantity, de)
    }

    /// All nine experiments, `1.a` first.
    pub fn matrix(de: DEConfig) -> Vec<ExperimentSpec> {
        ParamSubset::ALL
            .into_iter()
            .flat_map(|s| CALIBRATION_QUANTITIES.into_iter().map(move |q| (s, q)))
            .map(|(s, q)| ExperimentSpec::new(s, q, de).expect("calibration quantity"))
            .collect()
    }

    pub fn validate(&self) -> Result<()> {
        let expected = ExperimentSpec::new(self.subset, self.quantity, self.de)?;
        if expected.label != self.label {
            return Err(Error::validation(
                "label",
                format!("{} does not match {} against {}", self.label, self.subset.name(), self.quantity),
            ));
        }
        self.de.validate()
    }
}

/// Observations and settings shared by every experiment on one dataset.
#[derive(Debug, Clone)]
pub struct CalibrationContext {
    pub scenario: ScenarioConfig,
    pub observed: MeasurementGrid,
    /// Reference field for the macroscopic errors.
    pub validation: Option<MacroField>,
    /// Seed used for every candidate simulation.
    pub sim_seed: u64,
}

impl CalibrationContext {
    pub fn new(
        scenario: ScenarioConfig,
        observed: MeasurementGrid,
        validation: Option<MacroField>,
        mode: SeedMode,
    ) -> Result<Self> {
        scenario.validate()?;
        if observed.is_empty() {
            return Err(Error::validation("observations", "measurement grid is empty"));
        }
        if !observed.cells().iter().any(|c| c.flow_vph.is_some() || c.speed_mps.is_some()) {
            return Err(Error::validation("observations", "every measurement is missing"));
        }
        let sim_seed = mode.simulation_seed(scenario.simulation.seed);
        Ok(CalibrationContext {
            scenario,
            observed,
            validation,
            sim_seed,
        })
    }

    pub fn data_seed(&self) -> u64 {
        self.scenario.simulation.seed
    }

    /// Bounds with the subset freed and everything else pinned at the
    /// scenario defaults.
    pub fn bounds(&self, subset: ParamSubset) -> ParameterBounds {
        ParameterBounds::calibration_ranges(self.scenario.defaults).with_free(&subset.ids())
    }

    /// Objective over the free-parameter box, coordinates in `ParamId::ALL`
    /// order restricted to the subset.
    pub fn objective(&self, spec: &ExperimentSpec) -> impl Fn(&[f64]) -> f64 + Sync + '_ {
        let bounds = self.bounds(spec.subset);
        let z = spec.quantity;
        move |x: &[f64]| {
            let theta = bounds.assemble(x);
            objective_with_seed(&self.observed, &self.scenario, &theta, z, self.sim_seed)
        }
    }
}

/// Errors in flow, speed and density, in vph, mph and veh/mile. A value is
/// missing when there was no overlap to compare.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct RmseTriple {
    pub flow: Option<f64>,
    pub speed: Option<f64>,
    pub density: Option<f64>,
}

impl RmseTriple {
    pub const ZERO: RmseTriple = RmseTriple {
        flow: Some(0.0),
        speed: Some(0.0),
        density: Some(0.0),
    };

    fn collect(mut f: impl FnMut(Quantity) -> Result<f64>) -> Result<Self> {
        let mut get = |q| match f(q) {
            Ok(v) => Ok(Some(v)),
            Err(Error::EmptyOverlap(_)) => Ok(None),
            Err(e) => Err(e),
        };
        Ok(RmseTriple {
            flow: get(Quantity::Flow)?,
            speed: get(Quantity::Speed)?,
            density: get(Quantity::Density)?,
        })
    }

    pub fn get(&self, q: Quantity) -> Option<f64> {
        match q {
            Quantity::Flow => self.flow,
            Quantity::Speed => self.speed,
            Quantity::Density => self.density,
            Quantity::Occupancy => None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Evaluation {
    pub detector: RmseTriple,
    /// Present when the context has a validation field.
    pub macroscopic: Option<RmseTriple>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CalibrationReport {
    pub label: String,
    pub subset: ParamSubset,
    pub quantity: Quantity,
    pub data_seed: u64,
    pub sim_seed: u64,
    pub free: Vec<ParamId>,
    pub calibrated: ParameterSet,
    pub defaults: ParameterSet,
    pub opt: OptResult,
    /// Objective of the default parameters.
    pub default_objective: f64,
    pub result: Evaluation,
    pub baseline: Evaluation,
    /// The scenario had no demand, so there was nothing to fit.
    pub trivial: bool,
}

/// Scores `theta` against the context's observations and validation field.
pub fn evaluate(ctx: &CalibrationContext, theta: &ParameterSet) -> Result<Evaluation> {
    let traj = run_with_seed(&ctx.scenario, theta, ctx.sim_seed)?;
    let sim = simulate_detectors(&traj, &ctx.scenario.detectors)?;
    let detector = RmseTriple::collect(|q| rmse_detectors(&ctx.observed, &sim, q))?;
    let macroscopic = match &ctx.validation {
        Some(v) => {
            let field = edie_fields(&traj, &v.grid, Lanes::PerLane(&ctx.scenario.network));
            Some(RmseTriple::collect(|q| rmse_macro(v, &field, q))?)
        }
        None => None,
    };
    Ok(Evaluation { detector, macroscopic })
}

/// Edie reference field of a trajectory log on `grid`, per lane.
pub fn validation_field(
    traj: &crate::microsim::TrajectoryLog,
    scenario: &ScenarioConfig,
    grid: &GridSpec,
) -> MacroField {
    edie_fields(traj, grid, Lanes::PerLane(&scenario.network))
}

/// Runs DE on one experiment and scores the result and the defaults.
///
/// One initial individual sits at the defaults (clipped into the box), so
/// the calibrated objective never exceeds that individual's objective.
pub fn run_experiment(ctx: &CalibrationContext, spec: &ExperimentSpec) -> Result<CalibrationReport> {
    run_experiment_with_ledger(ctx, spec, None)
}

pub fn run_experiment_with_ledger(
    ctx: &CalibrationContext,
    spec: &ExperimentSpec,
    ledger: Option<&mut dyn Write>,
) -> Result<CalibrationReport> {
    spec.validate()?;
    let bounds = ctx.bounds(spec.subset);
    bounds.validate()?;
    let defaults = ctx.scenario.defaults;
    let mut report = CalibrationReport {
        label: spec.label.clone(),
        subset: spec.subset,
        quantity: spec.quantity,
        data_seed: ctx.data_seed(),
        sim_seed: ctx.sim_seed,
        free: bounds.free_ids(),
        calibrated: defaults,
        defaults,
        opt: OptResult {
            best_x: bounds.project(&defaults),
            best_f: 0.0,
            generations: 0,
            evaluations: 0,
            converged: true,
            trace: vec![0.0],
        },
        default_objective: 0.0,
        result: Evaluation {
            detector: RmseTriple::ZERO,
            macroscopic: ctx.validation.as_ref().map(|_| RmseTriple::ZERO),
        },
        baseline: Evaluation {
            detector: RmseTriple::ZERO,
            macroscopic: ctx.validation.as_ref().map(|_| RmseTriple::ZERO),
        },
        trivial: false,
    };
    let no_demand = ctx.scenario.demand.is_empty();
    let no_traffic = ctx.observed.cells().iter().all(|c| c.flow_vph.unwrap_or(0.0) == 0.0);
    if no_demand && no_traffic {
        report.trivial = true;
        return Ok(report);
    }

    // surfaces geometry mismatches instead of scoring every candidate as a penalty
    report.default_objective = try_objective(&ctx.observed, &ctx.scenario, &defaults, spec.quantity, ctx.sim_seed)?;

    let f = ctx.objective(spec);
    let opts = DeOptions {
        init_points: vec![bounds.project(&defaults)],
        ledger,
    };
    let opt = differential_evolution_with(&f, &bounds.free_box(), &spec.de, opts)?;
    report.calibrated = bounds.assemble(&opt.best_x);
    report.opt = opt;
    report.result = evaluate(ctx, &report.calibrated)?;
    report.baseline = evaluate(ctx, &defaults)?;
    Ok(report)
}

/// One matrix cell: a report or the reason it failed.
#[derive(Debug, Clone, PartialEq)]
pub struct MatrixCell {
    pub label: String,
    pub outcome: std::result::Result<CalibrationReport, String>,
}

/// Runs the experiments on up to `jobs` threads. A failing cell is recorded
/// and does not stop the others. Output order follows `specs`.
pub fn run_matrix(ctx: &CalibrationContext, specs: &[ExperimentSpec], jobs: usize) -> Result<Vec<MatrixCell>> {
    if jobs < 1 {
        return Err(Error::validation("jobs", "need at least 1"));
    }
    let one = |spec: &ExperimentSpec| MatrixCell {
        label: spec.label.clone(),
        outcome: run_experiment(ctx, spec).map_err(|e| e.to_string()),
    };
    if jobs == 1 {
        return Ok(specs.iter().map(one).collect());
    }
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(jobs)
        .build()
        .map_err(|e| Error::Optimizer(format!("thread pool: {e}")))?;
    Ok(pool.install(|| specs.par_iter().map(one).collect()))
}

fn cell(v: Option<f64>) -> String {
    v.map(|x| x.to_string()).unwrap_or_default()
}

pub const SUMMARY_HEADER: [&str; 17] = [
    "label",
    "status",
    "subset",
    "quantity",
    "det_flow_vph",
    "det_speed_mph",
    "det_density_vpm",
    "macro_flow_vphpl",
    "macro_speed_mph",
    "macro_density_vpmpl",
    "objective",
    "default_objective",
    "generations",
    "evaluations",
    "converged",
    "trivial",
    "message",
];

fn summary_row(label: &str, status: &str, subset: &str, quantity: &str, e: &Evaluation) -> Vec<String> {
    let m = e.macroscopic.unwrap_or_default();
    vec![
        label.to_string(),
        status.to_string(),
        subset.to_string(),
        quantity.to_string(),
        cell(e.detector.flow),
        cell(e.detector.speed),
        cell(e.detector.density),
        cell(m.flow),
        cell(m.speed),
        cell(m.density),
    ]
}

/// Table of detector and macroscopic errors, one row per experiment, with a
/// leading `default` row holding the uncalibrated baseline.
pub fn write_summary_csv<W: Write>(cells: &[MatrixCell], writer: W) -> Result<()> {
    let io = |e: csv::Error| Error::io("summary csv", e.into());
    let mut w = csv::Writer::from_writer(writer);
    w.write_record(SUMMARY_HEADER).map_err(io)?;
    if let Some(r) = cells.iter().find_map(|c| c.outcome.as_ref().ok()) {
        let mut row = summary_row("default", "baseline", "", "", &r.baseline);
        row.extend([String::new(), String::new(), String::new(), String::new(), String::new(), String::new(), String::new()]);
        w.write_record(row).map_err(io)?;
    }
    for c in cells {
        let row = match &c.outcome {
            Ok(r) => {
                let mut row = summary_row(&r.label, "ok", r.subset.name(), r.quantity.name(), &r.result);
                row.extend([
                    r.opt.best_f.to_string(),
                    r.default_objective.to_string(),
                    r.opt.generations.to_string(),
                    r.opt.evaluations.to_string(),
                    r.opt.converged.to_string(),
                    r.trivial.to_string(),
                    String::new(),
                ]);
                row
            }
            Err(msg) => {
                let mut row = vec![c.label.clone(), "failed".to_string()];
                row.resize(SUMMARY_HEADER.len() - 1, String::new());
                row.push(msg.replace('\n', " "));
                row
            }
        };
        w.write_record(row).map_err(io)?;
    }
    w.flush().map_err(|e| Error::io("summary csv", e))?;
    Ok(())
}

/// Long-format report of one experiment: `kind,name,unit,calibrated,default`
/// with rows for every error and every parameter.
pub fn write_report_csv<W: Write>(r: &CalibrationReport, writer: W) -> Result<()> {
    let io = |e: csv::Error| Error::io("report csv", e.into());
    let mut w = csv::Writer::from_writer(writer);
    w.write_record(["kind", "name", "unit", "calibrated", "default"]).map_err(io)?;
    let units = [
        (Quantity::Flow, "vph", "vphpl"),
        (Quantity::Speed, "mph", "mph"),
        (Quantity::Density, "vpm", "vpmpl"),
    ];
    for (q, unit, _) in units {
        w.write_record(["rmse_detector", q.name(), unit, &cell(r.result.detector.get(q)), &cell(r.baseline.detector.get(q))])
            .map_err(io)?;
    }
    if let (Some(res), Some(base)) = (r.result.macroscopic, r.baseline.macroscopic) {
        for (q, _, unit) in units {
            w.write_record(["rmse_macro", q.name(), unit, &cell(res.get(q)), &cell(base.get(q))])
                .map_err(io)?;
        }
    }
    w.write_record([
        "objective",
        r.quantity.name(),
        r.quantity.unit(),
        &r.opt.best_f.to_string(),
        &r.default_objective.to_string(),
    ])
    .map_err(io)?;
    for id in ParamId::ALL {
        let kind = if r.free.contains(&id) { "param_free" } else { "param_fixed" };
        w.write_record([kind, id.name(), "", &r.calibrated.get(id).to_string(), &r.defaults.get(id).to_string()])
            .map_err(io)?;
    }
    w.flush().map_err(|e| Error::io("report csv", e))?;
    Ok(())
}

/// JSON lines: one record per generation, then a summary record.
pub fn write_run_log<W: Write>(r: &CalibrationReport, mut w: W) -> Result<()> {
    let io = |e| Error::io("run log", e);
    let np = r.opt.evaluations.checked_div(r.opt.trace.len()).unwrap_or(0);
    for (g, best) in r.opt.trace.iter().enumerate() {
        let rec = serde_json::json!({
            "label": r.label,
            "generation": g,
            "best_objective": best,
            "evaluations": np * (g + 1),
        });
        writeln!(w, "{rec}").map_err(io)?;
    }
    let summary = serde_json::json!({
        "label": r.label,
        "summary": r,
    });
    writeln!(w, "{summary}").map_err(io)?;
    Ok(())
}

impl fmt::Display for CalibrationReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let s = |v: Option<f64>| v.map(|x| format!("{x:.3}")).unwrap_or_else(|| "-".into());
        write!(
            f,
            "{}: objective {:.4} (default {:.4}), detector speed RMSE {} mph (default {}), {} generations{}",
            self.label,
            self.opt.best_f,
            self.default_objective,
            s(self.result.detector.speed),
            s(self.baseline.detector.speed),
            self.opt.generations,
            if self.opt.converged { ", converged" } else { "" }
        )
    }
}

/// Partial DE settings layered over a base configuration.
#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DeOverrides {
    pub np: Option<usize>,
    pub f: Option<f64>,
    pub cr: Option<f64>,
    pub max_generations: Option<usize>,
    pub tol: Option<f64>,
    pub seed: Option<u64>,
    pub width: Option<usize>,
}

impl DeOverrides {
    pub fn apply(&self, base: DEConfig) -> DEConfig {
        DEConfig {
            np: self.np.unwrap_or(base.np),
            f: self.f.unwrap_or(base.f),
            cr: self.cr.unwrap_or(base.cr),
            max_generations: self.max_generations.unwrap_or(base.max_generations),
            tol: self.tol.unwrap_or(base.tol),
            seed: self.seed.unwrap_or(base.seed),
            width: self.width.unwrap_or(base.width),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ManifestEntry {
    pub label: String,
    #[serde(default)]
    pub de: DeOverrides,
}

/// Experiment list with per-experiment DE overrides, stored as TOML.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentManifest {
    #[serde(default)]
    pub seed_mode: SeedMode,
    #[serde(default)]
    pub de: DeOverrides,
    #[serde(rename = "experiment")]
    pub experiments: Vec<ManifestEntry>,
}

impl ExperimentManifest {
    /// The full matrix with no overrides.
    pub fn full(seed_mode: SeedMode, de: DEConfig) -> Self {
        ExperimentManifest {
            seed_mode,
            de: DeOverrides {
                np: Some(de.np),
                f: Some(de.f),
                cr: Some(de.cr),
                max_generations: Some(de.max_generations),
                tol: Some(de.tol),
                seed: Some(de.seed),
                width: Some(de.width),
            },
            experiments: ExperimentSpec::matrix(de)
                .into_iter()
                .map(|s| ManifestEntry {
                    label: s.label,
                    de: DeOverrides::default(),
                })
                .collect(),
        }
    }

    pub fn from_toml_str(text: &str, source_name: &str) -> Result<Self> {
        toml::from_str(text).map_err(|e| Error::Parse {
            source_name: source_name.to_string(),
            message: e.to_string(),
        })
    }

    pub fn to_toml_string(&self) -> String {
        toml::to_string(self).expect("manifest serializes")
    }

    /// Resolved specs: `base`, then the manifest-wide overrides, then the
    /// per-experiment ones.
    pub fn specs(&self, base: DEConfig) -> Result<Vec<ExperimentSpec>> {
        let shared = self.de.apply(base);
        let mut seen = std::collections::BTreeSet::new();
        let mut out = Vec::new();
        for e in &self.experiments {
            if !seen.insert(e.label.trim().to_string()) {
                return Err(Error::validation("manifest", format!("experiment {} listed twice", e.label)));
            }
            let spec = ExperimentSpec::from_label(&e.label, e.de.apply(shared))?;
            spec.validate()?;
            out.push(spec);
        }
        if out.is_empty() {
            return Err(Error::validation("manifest", "no experiments"));
        }
        Ok(out)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn labels_cover_the_matrix() {
        let labels: Vec<String> = ExperimentSpec::matrix(DEConfig::default()).into_iter().map(|s| s.label).collect();
        assert_eq!(labels, ["1.a", "1.b", "1.c", "2.a", "2.b", "2.c", "3.a", "3.b", "3.c"]);
        let s = ExperimentSpec::from_label("2.c", DEConfig::default()).unwrap();
        assert_eq!((s.subset, s.quantity), (ParamSubset::LaneChange, Quantity::Occupancy));
        assert!(ExperimentSpec::from_label("4.a", DEConfig::default()).is_err());
        assert!(ExperimentSpec::from_label("1.d", DEConfig::default()).is_err());
        assert!(ExperimentSpec::new(ParamSubset::Both, Quantity::Density, DEConfig::default()).is_err());
        let mut wrong = s.clone();
        wrong.label = "1.c".into();
        assert!(wrong.validate().is_err());
    }

    #[test]
    fn subset_dimensions() {
        assert_eq!(ParamSubset::CarFollowing.ids().len(), 5);
        assert_eq!(ParamSubset::LaneChange.ids().len(), 5);
        assert_eq!(ParamSubset::Both.ids().len(), 10);
    }

    #[test]
    fn manifest_layers_overrides() {
        let text = r#"
            seed_mode = "same"
            [de]
            np = 10
            [[experiment]]
            label = "1.b"
            [[experiment]]
            label = "3.b"
            de = { max_generations = 5 }
        "#;
        let m = ExperimentManifest::from_toml_str(text, "test").unwrap();
        assert_eq!(m.seed_mode, SeedMode::Same);
        let specs = m.specs(DEConfig::default()).unwrap();
        assert_eq!(specs[0].de.np, 10);
        assert_eq!(specs[0].de.max_generations, DEConfig::default().max_generations);
        assert_eq!(specs[1].de.max_generations, 5);
        assert!(ExperimentManifest::from_toml_str("bogus = 1\nexperiment = []", "t").is_err());

        let full = ExperimentManifest::full(SeedMode::Distinct, DEConfig::default());
        let back = ExperimentManifest::from_toml_str(&full.to_toml_string(), "round trip").unwrap();
        assert_eq!(back, full);
        assert_eq!(back.specs(DEConfig::default()).unwrap().len(), 9);
    }

    #[test]
    fn seed_modes() {
        assert_eq!(SeedMode::Same.simulation_seed(42), 42);
        assert_ne!(SeedMode::Distinct.simulation_seed(42), 42);
        assert_eq!("Distinct".parse::<SeedMode>().unwrap(), SeedMode::Distinct);
    }
}
