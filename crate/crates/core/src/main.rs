use std::fs::File;
use std::io::BufReader;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use mergecal::calibrate::{
    evaluate, run_experiment_with_ledger, run_matrix, validation_field, write_report_csv, write_run_log,
    write_summary_csv, CalibrationContext, CalibrationReport, ExperimentManifest, ExperimentSpec, MatrixCell,
    ParamSubset, RmseTriple, SeedMode,
};
use mergecal::heatmap::write_ppm;
use mergecal::io::{create_dir, write_atomic, write_atomic_str};
use mergecal::macroscopic::{asm_reconstruct, edie_fields, AsmParams, GridSpec, Lanes, MacroField};
use mergecal::metrics::Quantity;
use mergecal::microsim::{run_with_seed, TrajectoryLog};
use mergecal::optimizer::DEConfig;
use mergecal::scenario::{build_synthetic_merge, load_scenario, ParameterSet, ScenarioConfig};
use mergecal::sensing::{ingest_measurements, simulate_detectors, simulate_detectors_live};
use mergecal::{Error, Result};

/// Freeway merge microsimulation and detector-driven calibration.
///
/// Units in files: m, s, m/s for trajectories and detector speeds, veh/h for
/// detector flows, and vph, veh/mile and mph per lane for macroscopic fields.
/// Exit status: 0 on success, 1 on invalid input, 2 on a runtime fault.
#[derive(Debug, Parser)]
#[command(name = "mergecal", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Run the microsimulation and write every vehicle's trajectory.
    Simulate(SimulateArgs),
    /// Produce loop-detector measurements from a trajectory file or a fresh run.
    Detect(DetectArgs),
    /// Compute Edie flow, density and speed fields from trajectories.
    Edie(EdieArgs),
    /// Reconstruct a field from detector data by adaptive smoothing.
    Asm(AsmArgs),
    /// Calibrate one experiment of the 3 x 3 matrix.
    Calibrate(CalibrateArgs),
    /// Calibrate every experiment of the matrix and tabulate the errors.
    Matrix(MatrixArgs),
    /// Score one parameter set against observations.
    Evaluate(EvaluateArgs),
    /// Render a macroscopic field as PPM images.
    Heatmap(HeatmapArgs),
}

#[derive(Debug, Args)]
struct ScenarioArgs {
    /// Scenario TOML file [default: built-in synthetic merge corridor].
    #[arg(long, value_name = "FILE")]
    scenario: Option<PathBuf>,
    /// Override the scenario's random seed.
    #[arg(long)]
    seed: Option<u64>,
}

impl ScenarioArgs {
    fn load(&self) -> Result<ScenarioConfig> {
        let mut s = match &self.scenario {
            Some(p) => load_scenario(p)?,
            None => build_synthetic_merge(),
        };
        if let Some(seed) = self.seed {
            s.simulation.seed = seed;
        }
        Ok(s)
    }
}

#[derive(Debug, Args)]
struct SimulateArgs {
    #[command(flatten)]
    scenario: ScenarioArgs,
    /// Parameters: `defaults`, `ground-truth` or a TOML file.
    #[arg(long, default_value = "ground-truth")]
    params: String,
    /// Keep only every k-th time step.
    #[arg(long, default_value_t = 1, value_name = "K")]
    decimate: usize,
    /// Trajectory CSV to write.
    #[arg(long, value_name = "FILE")]
    out: PathBuf,
}

#[derive(Debug, Args)]
struct DetectArgs {
    #[command(flatten)]
    scenario: ScenarioArgs,
    /// Trajectory CSV; without it the scenario is simulated.
    #[arg(long, value_name = "FILE")]
    traj: Option<PathBuf>,
    /// Parameters when simulating: `defaults`, `ground-truth` or a TOML file.
    #[arg(long, default_value = "ground-truth")]
    params: String,
    /// Measurement CSV to write.
    #[arg(long, value_name = "FILE")]
    out: PathBuf,
}

#[derive(Debug, Args)]
struct GridArgs {
    /// Cell length, m.
    #[arg(long, default_value_t = 10.0)]
    dx: f64,
    /// Cell duration, s.
    #[arg(long, default_value_t = 10.0)]
    dt: f64,
}

#[derive(Debug, Args)]
struct EdieArgs {
    #[command(flatten)]
    scenario: ScenarioArgs,
    /// Trajectory CSV.
    #[arg(long, value_name = "FILE")]
    traj: PathBuf,
    #[command(flatten)]
    grid: GridArgs,
    /// Report whole cross-section totals instead of per-lane values.
    #[arg(long)]
    total: bool,
    /// Field CSV to write.
    #[arg(long, value_name = "FILE")]
    out: PathBuf,
}

#[derive(Debug, Args)]
struct AsmArgs {
    /// Measurement CSV.
    #[arg(long, value_name = "FILE")]
    obs: PathBuf,
    /// Cell length, m.
    #[arg(long)]
    dx: f64,
    /// Cell duration, s.
    #[arg(long)]
    dt: f64,
    /// Road length, m [default: farthest detector position].
    #[arg(long)]
    length: Option<f64>,
    /// End of the time window, s [default: end of the last interval].
    #[arg(long)]
    horizon: Option<f64>,
    /// Free-flow wave speed, m/s.
    #[arg(long, allow_negative_numbers = true)]
    c_free: Option<f64>,
    /// Congested wave speed, m/s (negative).
    #[arg(long, allow_negative_numbers = true)]
    c_cong: Option<f64>,
    /// Spatial smoothing width, m.
    #[arg(long)]
    sigma: Option<f64>,
    /// Temporal smoothing width, s.
    #[arg(long)]
    tau: Option<f64>,
    /// Crossover speed, m/s.
    #[arg(long)]
    v_thr: Option<f64>,
    /// Crossover width, m/s.
    #[arg(long)]
    dv: Option<f64>,
    /// Field CSV to write.
    #[arg(long, value_name = "FILE")]
    out: PathBuf,
}

#[derive(Debug, Args)]
struct DeArgs {
    /// Population size.
    #[arg(long)]
    np: Option<usize>,
    /// Generation limit.
    #[arg(long)]
    max_generations: Option<usize>,
    /// Differential weight F.
    #[arg(long)]
    mutation: Option<f64>,
    /// Crossover rate CR.
    #[arg(long)]
    crossover: Option<f64>,
    /// Relative spread of population objectives that stops the search.
    #[arg(long)]
    tol: Option<f64>,
    /// Optimizer seed.
    #[arg(long)]
    de_seed: Option<u64>,
    /// Objective evaluations run in parallel.
    #[arg(long)]
    width: Option<usize>,
}

impl DeArgs {
    fn apply(&self, base: DEConfig) -> DEConfig {
        DEConfig {
            np: self.np.unwrap_or(base.np),
            f: self.mutation.unwrap_or(base.f),
            cr: self.crossover.unwrap_or(base.cr),
            max_generations: self.max_generations.unwrap_or(base.max_generations),
            tol: self.tol.unwrap_or(base.tol),
            seed: self.de_seed.unwrap_or(base.seed),
            width: self.width.unwrap_or(base.width),
        }
    }
}

#[derive(Debug, Args)]
struct ObservationArgs {
    #[command(flatten)]
    scenario: ScenarioArgs,
    /// Observed measurement CSV.
    #[arg(long, value_name = "FILE")]
    obs: PathBuf,
    /// Reference trajectories; their Edie field scores the macroscopic errors.
    #[arg(long, value_name = "FILE", conflicts_with = "validation_field")]
    validation: Option<PathBuf>,
    /// Reference field CSV, used as is.
    #[arg(long, value_name = "FILE")]
    validation_field: Option<PathBuf>,
    #[command(flatten)]
    grid: GridArgs,
    /// Candidate runs use the data seed plus one (`distinct`) or the data seed (`same`).
    #[arg(long, default_value = "distinct")]
    seed_mode: SeedMode,
}

impl ObservationArgs {
    fn context(&self) -> Result<CalibrationContext> {
        let scenario = self.scenario.load()?;
        let observed = ingest_measurements(&self.obs, Some(scenario.simulation.horizon_s))?;
        let validation = match (&self.validation, &self.validation_field) {
            (Some(p), _) => {
                let traj = read_trajectories(p, &scenario)?;
                let grid = GridSpec::new(scenario.network.length_m, scenario.simulation.horizon_s, self.grid.dx, self.grid.dt)?;
                Some(validation_field(&traj, &scenario, &grid))
            }
            (None, Some(p)) => Some(MacroField::read_csv(open(p)?, None)?),
            (None, None) => None,
        };
        CalibrationContext::new(scenario, observed, validation, self.seed_mode)
    }
}

#[derive(Debug, Args)]
struct CalibrateArgs {
    #[command(flatten)]
    data: ObservationArgs,
    /// Experiment label, 1.a through 3.c.
    #[arg(long, required_unless_present_all = ["subset", "quantity"])]
    label: Option<String>,
    /// Free parameters: cf, lc or cf+lc.
    #[arg(long, conflicts_with = "label", requires = "quantity")]
    subset: Option<String>,
    /// Calibration quantity: flow, speed or occupancy.
    #[arg(long, conflicts_with = "label", requires = "subset")]
    quantity: Option<Quantity>,
    #[command(flatten)]
    de: DeArgs,
    /// Output directory.
    #[arg(long, value_name = "DIR")]
    out: PathBuf,
}

#[derive(Debug, Args)]
struct MatrixArgs {
    #[command(flatten)]
    data: ObservationArgs,
    /// Experiment manifest TOML [default: all nine experiments].
    #[arg(long, value_name = "FILE")]
    manifest: Option<PathBuf>,
    /// Experiments run concurrently.
    #[arg(long, default_value_t = 1)]
    jobs: usize,
    #[command(flatten)]
    de: DeArgs,
    /// Output directory.
    #[arg(long, value_name = "DIR")]
    out: PathBuf,
}

#[derive(Debug, Args)]
struct EvaluateArgs {
    #[command(flatten)]
    data: ObservationArgs,
    /// Parameters: `defaults`, `ground-truth` or a TOML file.
    #[arg(long, default_value = "defaults")]
    params: String,
    /// Result CSV [default: print to stdout only].
    #[arg(long, value_name = "FILE")]
    out: Option<PathBuf>,
}

#[derive(Debug, Args)]
struct HeatmapArgs {
    /// Field CSV.
    #[arg(long, value_name = "FILE")]
    field: PathBuf,
    /// speed, flow, density or all.
    #[arg(long, default_value = "all")]
    quantity: String,
    /// Output directory.
    #[arg(long, value_name = "DIR")]
    out: PathBuf,
}

fn open(path: &Path) -> Result<BufReader<File>> {
    File::open(path).map(BufReader::new).map_err(|e| Error::Io {
        path: path.to_path_buf(),
        source: e,
    })
}

fn read_trajectories(path: &Path, scenario: &ScenarioConfig) -> Result<TrajectoryLog> {
    TrajectoryLog::read_csv(
        open(path)?,
        scenario.simulation.vehicle_length_m,
        scenario.simulation.horizon_s,
        scenario.network.length_m,
    )
}

fn resolve_params(spec: &str, scenario: &ScenarioConfig) -> Result<ParameterSet> {
    let p = match spec {
        "defaults" => scenario.defaults,
        "ground-truth" => scenario.ground_truth.ok_or_else(|| Error::Validation {
            field: "params".into(),
            message: "scenario has no ground_truth table".into(),
        })?,
        path => {
            let text = std::fs::read_to_string(path).map_err(|e| Error::Io {
                path: path.into(),
                source: e,
            })?;
            toml::from_str(&text).map_err(|e| Error::Parse {
                source_name: path.to_string(),
                message: e.to_string(),
            })?
        }
    };
    p.validate()?;
    Ok(p)
}

fn save_report(dir: &Path, r: &CalibrationReport) -> Result<()> {
    write_atomic(&dir.join(format!("{}_report.csv", r.label)), |w| write_report_csv(r, w))?;
    write_atomic(&dir.join(format!("{}_log.jsonl", r.label)), |w| write_run_log(r, w))
}

fn simulate(a: &SimulateArgs) -> Result<()> {
    if a.decimate < 1 {
        return Err(Error::Validation {
            field: "decimate".into(),
            message: "must be at least 1".into(),
        });
    }
    let scenario = a.scenario.load()?;
    let params = resolve_params(&a.params, &scenario)?;
    let traj = run_with_seed(&scenario, &params, scenario.simulation.seed)?;
    let dec = (a.decimate > 1).then_some((scenario.simulation.dt_s, a.decimate));
    write_atomic(&a.out, |w| traj.write_csv(w, dec))?;
    eprintln!("{} vehicles, {} samples", traj.tracks.len(), traj.sample_count());
    Ok(())
}

fn detect(a: &DetectArgs) -> Result<()> {
    let scenario = a.scenario.load()?;
    let grid = match &a.traj {
        Some(p) => simulate_detectors(&read_trajectories(p, &scenario)?, &scenario.detectors)?,
        None => {
            let params = resolve_params(&a.params, &scenario)?;
            simulate_detectors_live(&scenario, &params, scenario.simulation.seed)?
        }
    };
    write_atomic(&a.out, |w| grid.write_csv(w))
}

fn edie(a: &EdieArgs) -> Result<()> {
    let scenario = a.scenario.load()?;
    let traj = read_trajectories(&a.traj, &scenario)?;
    let grid = GridSpec::new(scenario.network.length_m, scenario.simulation.horizon_s, a.grid.dx, a.grid.dt)?;
    let lanes = if a.total { Lanes::Total } else { Lanes::PerLane(&scenario.network) };
    let field = edie_fields(&traj, &grid, lanes);
    write_atomic(&a.out, |w| field.write_csv(w))
}

fn asm(a: &AsmArgs) -> Result<()> {
    let obs = ingest_measurements(&a.obs, a.horizon)?;
    let length = match a.length {
        Some(l) => l,
        None => obs.sites().iter().map(|s| s.position_m).fold(0.0, f64::max),
    };
    let horizon = a.horizon.unwrap_or_else(|| *obs.boundaries().last().unwrap_or(&0.0));
    let grid = GridSpec::new(length, horizon, a.dx, a.dt)?;
    let mut p = AsmParams::defaults_for(&obs);
    p.c_free = a.c_free.unwrap_or(p.c_free);
    p.c_cong = a.c_cong.unwrap_or(p.c_cong);
    p.sigma_m = a.sigma.unwrap_or(p.sigma_m);
    p.tau_s = a.tau.unwrap_or(p.tau_s);
    p.v_thr = a.v_thr.unwrap_or(p.v_thr);
    p.dv = a.dv.unwrap_or(p.dv);
    let field = asm_reconstruct(&obs, &grid, &p)?;
    write_atomic(&a.out, |w| field.write_csv(w))
}

fn calibrate(a: &CalibrateArgs) -> Result<()> {
    let de = a.de.apply(DEConfig::default());
    let spec = match (&a.label, &a.subset, a.quantity) {
        (Some(l), _, _) => ExperimentSpec::from_label(l, de)?,
        (None, Some(s), Some(q)) => {
            let subset = match s.as_str() {
                "cf" => ParamSubset::CarFollowing,
                "lc" => ParamSubset::LaneChange,
                "cf+lc" => ParamSubset::Both,
                other => {
                    return Err(Error::Validation {
                        field: "subset".into(),
                        message: format!("expected cf, lc or cf+lc, got {other:?}"),
                    })
                }
            };
            ExperimentSpec::new(subset, q, de)?
        }
        _ => unreachable!("clap enforces label or subset with quantity"),
    };
    spec.validate()?;
    let ctx = a.data.context()?;
    create_dir(&a.out)?;
    let mut ledger = Vec::new();
    let report = run_experiment_with_ledger(&ctx, &spec, Some(&mut ledger))?;
    save_report(&a.out, &report)?;
    write_atomic(&a.out.join(format!("{}_de.csv", report.label)), |w| {
        w.write_all(&ledger).map_err(|e| Error::Io {
            path: "de ledger".into(),
            source: e,
        })
    })?;
    println!("{report}");
    Ok(())
}

fn matrix(a: &MatrixArgs) -> Result<()> {
    let manifest = match &a.manifest {
        Some(p) => {
            let text = std::fs::read_to_string(p).map_err(|e| Error::Io {
                path: p.clone(),
                source: e,
            })?;
            let mut m = ExperimentManifest::from_toml_str(&text, &p.display().to_string())?;
            // command-line DE flags win over the manifest's shared settings
            let base = a.de.apply(m.de.apply(DEConfig::default()));
            m.de = ExperimentManifest::full(m.seed_mode, base).de;
            m
        }
        None => ExperimentManifest::full(a.data.seed_mode, a.de.apply(DEConfig::default())),
    };
    let specs = manifest.specs(DEConfig::default())?;
    if a.jobs < 1 {
        return Err(Error::Validation {
            field: "jobs".into(),
            message: "must be at least 1".into(),
        });
    }
    let mut ctx = a.data.context()?;
    ctx.sim_seed = manifest.seed_mode.simulation_seed(ctx.data_seed());
    create_dir(&a.out)?;
    let cells: Vec<MatrixCell> = run_matrix(&ctx, &specs, a.jobs)?;
    for c in &cells {
        match &c.outcome {
            Ok(r) => {
                save_report(&a.out, r)?;
                println!("{r}");
            }
            Err(msg) => eprintln!("{}: failed: {msg}", c.label),
        }
    }
    write_atomic(&a.out.join("results.csv"), |w| write_summary_csv(&cells, w))?;
    write_atomic_str(&a.out.join("manifest.toml"), &manifest.to_toml_string())?;
    if cells.iter().all(|c| c.outcome.is_err()) {
        return Err(Error::Optimizer("every experiment failed".into()));
    }
    Ok(())
}

fn evaluate_cmd(a: &EvaluateArgs) -> Result<()> {
    let ctx = a.data.context()?;
    let params = resolve_params(&a.params, &ctx.scenario)?;
    let e = evaluate(&ctx, &params)?;
    let fmt = |v: Option<f64>| v.map(|x| x.to_string()).unwrap_or_default();
    let mut rows: Vec<[String; 4]> = Vec::new();
    let mut push = |kind: &str, t: &RmseTriple, units: [&str; 3]| {
        for (q, unit) in [Quantity::Flow, Quantity::Speed, Quantity::Density].into_iter().zip(units) {
            rows.push([kind.to_string(), q.name().to_string(), unit.to_string(), fmt(t.get(q))]);
        }
    };
    push("rmse_detector", &e.detector, ["vph", "mph", "vpm"]);
    if let Some(m) = &e.macroscopic {
        push("rmse_macro", m, ["vphpl", "mph", "vpmpl"]);
    }
    for r in &rows {
        println!("{} {} = {} {}", r[0], r[1], if r[3].is_empty() { "-" } else { &r[3] }, r[2]);
    }
    if let Some(out) = &a.out {
        write_atomic(out, |w| {
            let io = |e: csv::Error| Error::Io {
                path: out.clone(),
                source: e.into(),
            };
            let mut c = csv::Writer::from_writer(w);
            c.write_record(["kind", "name", "unit", "value"]).map_err(io)?;
            for r in &rows {
                c.write_record(r).map_err(io)?;
            }
            c.flush().map_err(|e| Error::Io {
                path: out.clone(),
                source: e,
            })
        })?;
    }
    Ok(())
}

fn heatmap(a: &HeatmapArgs) -> Result<()> {
    let quantities = match a.quantity.as_str() {
        "all" => vec![Quantity::Speed, Quantity::Flow, Quantity::Density],
        q => {
            let q: Quantity = q.parse()?;
            if q == Quantity::Occupancy {
                return Err(Error::Validation {
                    field: "quantity".into(),
                    message: "fields have no occupancy".into(),
                });
            }
            vec![q]
        }
    };
    let field = MacroField::read_csv(open(&a.field)?, None)?;
    create_dir(&a.out)?;
    for q in quantities {
        write_atomic(&a.out.join(format!("{}_heatmap.ppm", q.name())), |w| write_ppm(&field, q, w))?;
    }
    Ok(())
}

fn run(cli: Cli) -> Result<()> {
    match &cli.command {
        Command::Simulate(a) => simulate(a),
        Command::Detect(a) => detect(a),
        Command::Edie(a) => edie(a),
        Command::Asm(a) => asm(a),
        Command::Calibrate(a) => calibrate(a),
        Command::Matrix(a) => matrix(a),
        Command::Evaluate(a) => evaluate_cmd(a),
        Command::Heatmap(a) => heatmap(a),
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            let msg = e.to_string().replace('\n', " ");
            eprintln!("error: {msg}");
            ExitCode::from(if e.is_input_error() { 1 } else { 2 })
        }
    }
}
