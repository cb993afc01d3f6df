//! `prionlab` command line: config loading, subcommand dispatch, output files
//! and the manifest.

use std::collections::BTreeMap;
use std::ffi::OsString;
use std::fs;
use std::path::{Path, PathBuf};
use std::sync::Arc;

use clap::{Parser, Subcommand};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::config::{RunConfig, Scenario};
use crate::error::{Error, Result};
use crate::frag::FragMatrix;
use crate::grid::{Density, SizeGrid};
use crate::params::ModelParams;
use crate::pde::{PrionPde, Sample, StepRecord, SystemState, Trajectory};
use crate::profile::{compute_profile, estimate_gap, LinearFlow, Profile};
use crate::reduction::{
    consistency_check, fit_decay, integrate_reduced, transform_from_pde, v_snapshot_residual, EpsSource, OdeOptions,
    ReducedSample, ReducedState,
};
use crate::stability::{equilibria, lyapunov_monitor, persistence_monitor, stability_report};
use crate::verify::verify;

pub const EXIT_OK: i32 = 0;
pub const EXIT_CONFIG: i32 = 2;
pub const EXIT_NUMERICAL: i32 = 3;

#[derive(Debug, Parser)]
#[command(name = "prionlab", version, about = "Numerical laboratory for the prion equation with general incidence")]
pub struct Cli {
    /// JSON run configuration; defaults are used for anything missing.
    #[arg(long, global = true, value_name = "PATH")]
    pub config: Option<PathBuf>,
    /// Output directory (default: `out`, or the config's `out`).
    #[arg(long, global = true, value_name = "DIR")]
    pub out: Option<PathBuf>,
    /// Overrides the config seed.
    #[arg(long, global = true, value_name = "N")]
    pub seed: Option<u64>,
    /// Worker threads for sweeps.
    #[arg(long, global = true, value_name = "N")]
    pub threads: Option<usize>,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Self-similar fragmentation profile.
    Profile,
    /// Spectral gap of the linear growth-fragmentation flow.
    Gap,
    /// Full monomer/polymer simulation.
    Simulate,
    /// Self-similar reduction of a `simulate` output directory.
    Reduce {
        #[arg(long, value_name = "DIR")]
        trajectory: Option<PathBuf>,
    },
    /// Reduced three-dimensional system.
    Ode,
    /// Equilibria, Jacobian, Routh-Hurwitz and cooperativity.
    Stability,
    /// Stability over a Cartesian parameter grid.
    Sweep,
    /// Verification suites.
    Verify {
        /// Comma-separated suite names (default: config, else all).
        #[arg(long, value_delimiter = ',')]
        suite: Vec<String>,
    },
}

impl Command {
    fn scenario(&self) -> Scenario {
        match self {
            Command::Profile => Scenario::Profile,
            Command::Gap => Scenario::Gap,
            Command::Simulate => Scenario::Simulate,
            Command::Reduce { .. } => Scenario::Reduce,
            Command::Ode => Scenario::Ode,
            Command::Stability => Scenario::Stability,
            Command::Sweep => Scenario::Sweep,
            Command::Verify { .. } => Scenario::Verify,
        }
    }
}

#[derive(Clone, Debug, Serialize, Deserialize, PartialEq, Eq)]
pub struct FileEntry {
    pub path: String,
    pub bytes: u64,
    pub sha256: String,
}

#[derive(Clone, Debug, Serialize, Deserialize, PartialEq, Eq)]
pub struct Manifest {
    pub program: String,
    pub version: String,
    pub scenario: Scenario,
    pub seed: u64,
    pub status: String,
    pub exit_code: i32,
    pub diagnostic: Option<String>,
    pub files: Vec<FileEntry>,
}

pub const MANIFEST: &str = "manifest.json";

fn io_err(path: &Path, e: std::io::Error) -> Error {
    Error::Precondition(format!("cannot write {}: {e}", path.display()))
}

/// Writes `bytes` to `root/rel`, creating parents, and returns its manifest entry.
fn write_file(root: &Path, rel: &str, bytes: &[u8]) -> Result<FileEntry> {
    let path = root.join(rel);
    if let Some(parent) = path.parent() {
        fs::create_dir_all(parent).map_err(|e| io_err(parent, e))?;
    }
    fs::write(&path, bytes).map_err(|e| io_err(&path, e))?;
    Ok(FileEntry { path: rel.to_string(), bytes: bytes.len() as u64, sha256: hex::encode(Sha256::digest(bytes)) })
}

struct Output {
    root: PathBuf,
    files: BTreeMap<String, FileEntry>,
}

impl Output {
    fn new(root: PathBuf) -> Result<Self> {
        fs::create_dir_all(&root).map_err(|e| io_err(&root, e))?;
        Ok(Output { root, files: BTreeMap::new() })
    }

    fn write(&mut self, rel: &str, bytes: &[u8]) -> Result<()> {
        let entry = write_file(&self.root, rel, bytes)?;
        self.files.insert(entry.path.clone(), entry);
        Ok(())
    }

    fn json<T: Serialize + ?Sized>(&mut self, rel: &str, value: &T) -> Result<()> {
        self.write(rel, &to_json(value))
    }

    fn density(&mut self, rel: &str, u: &Density<f64>) -> Result<()> {
        let mut buf = Vec::new();
        u.write_csv(&mut buf).map_err(|e| Error::Precondition(e.to_string()))?;
        self.write(rel, &buf)
    }
}

fn to_json<T: Serialize + ?Sized>(value: &T) -> Vec<u8> {
    let mut bytes = serde_json::to_vec_pretty(value).expect("report types serialize");
    bytes.push(b'\n');
    bytes
}

/// CSV with `{}` formatting, which round-trips `f64` exactly.
fn table<R: AsRef<[String]>>(header: &[&str], rows: impl IntoIterator<Item = R>) -> Vec<u8> {
    let mut wtr = csv::Writer::from_writer(Vec::new());
    wtr.write_record(header).expect("in-memory write");
    for row in rows {
        wtr.write_record(row.as_ref()).expect("in-memory write");
    }
    wtr.into_inner().expect("in-memory flush")
}

fn nums(xs: &[f64]) -> Vec<String> {
    xs.iter().map(|x| x.to_string()).collect()
}

/// Parses the arguments, runs, writes the manifest and returns the exit code.
pub fn run<I, A>(args: I) -> i32
where
    I: IntoIterator<Item = A>,
    A: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { EXIT_CONFIG } else { EXIT_OK };
            let _ = e.print();
            return code;
        }
    };
    let scenario = cli.command.scenario();
    let loaded = match &cli.config {
        Some(path) => RunConfig::load(path),
        None => {
            let config = RunConfig::default();
            let text = String::from_utf8(to_json(&config)).expect("json is utf-8");
            Ok((config, text))
        }
    };
    let fallback_out = cli.out.clone().unwrap_or_else(|| PathBuf::from("out"));
    let (mut config, text) = match loaded {
        Ok(v) => v,
        Err(e) => return fail_early(&fallback_out, scenario, cli.seed.unwrap_or(0), &e),
    };
    if let Some(seed) = cli.seed {
        config.seed = seed;
    }
    let out_dir = cli.out.clone().or_else(|| config.out.clone()).unwrap_or_else(|| PathBuf::from("out"));
    let checked = config.validate().and_then(|_| match config.scenario {
        Some(s) if s != scenario => {
            Err(Error::Precondition(format!("config scenario {s:?} does not match subcommand {scenario:?}")))
        }
        _ => Ok(()),
    });
    if let Err(e) = checked {
        return fail_early(&out_dir, scenario, config.seed, &e);
    }
    let mut out = match Output::new(out_dir.clone()) {
        Ok(o) => o,
        Err(e) => {
            eprintln!("error: {e}");
            return EXIT_CONFIG;
        }
    };
    let result = out.write("config.json", text.as_bytes()).and_then(|_| {
        let pool = rayon::ThreadPoolBuilder::new()
            .num_threads(cli.threads.unwrap_or(0))
            .build()
            .map_err(|e| Error::Precondition(format!("thread pool: {e}")))?;
        pool.install(|| dispatch(&cli.command, &config, &mut out))
    });
    let (code, status, diagnostic) = match &result {
        Ok(()) => (EXIT_OK, "ok", None),
        Err(e) if e.is_config() => (EXIT_CONFIG, "config_error", Some(e.to_string())),
        Err(e) => (EXIT_NUMERICAL, "numerical_failure", Some(e.to_string())),
    };
    if let Some(d) = &diagnostic {
        eprintln!("error: {d}");
    }
    let manifest = Manifest {
        program: "prionlab".into(),
        version: env!("CARGO_PKG_VERSION").into(),
        scenario,
        seed: config.seed,
        status: status.into(),
        exit_code: code,
        diagnostic,
        files: out.files.into_values().collect(),
    };
    if let Err(e) = write_file(&out.root, MANIFEST, &to_json(&manifest)) {
        eprintln!("error: {e}");
        return EXIT_CONFIG;
    }
    code
}

/// Reports a configuration error, with a manifest when the directory is usable.
fn fail_early(out: &Path, scenario: Scenario, seed: u64, err: &Error) -> i32 {
    eprintln!("error: {err}");
    let manifest = Manifest {
        program: "prionlab".into(),
        version: env!("CARGO_PKG_VERSION").into(),
        scenario,
        seed,
        status: "config_error".into(),
        exit_code: EXIT_CONFIG,
        diagnostic: Some(err.to_string()),
        files: Vec::new(),
    };
    if fs::create_dir_all(out).is_ok() {
        let _ = write_file(out, MANIFEST, &to_json(&manifest));
    }
    EXIT_CONFIG
}

fn dispatch(command: &Command, config: &RunConfig, out: &mut Output) -> Result<()> {
    match command {
        Command::Profile => cmd_profile(config, out),
        Command::Gap => cmd_gap(config, out),
        Command::Simulate => cmd_simulate(config, out),
        Command::Reduce { trajectory } => cmd_reduce(config, trajectory.as_deref(), out),
        Command::Ode => cmd_ode(config, out),
        Command::Stability => cmd_stability(config, out),
        Command::Sweep => cmd_sweep(config, out),
        Command::Verify { suite } => cmd_verify(config, suite, out),
    }
}

struct Model {
    params: ModelParams<f64>,
    grid: Arc<SizeGrid<f64>>,
    frag: Arc<FragMatrix<f64>>,
}

fn model(config: &RunConfig) -> Result<Model> {
    let params = config.params.validate()?;
    let grid = config.grid.build(&params)?;
    let frag = Arc::new(FragMatrix::assemble(grid.clone(), &params)?);
    Ok(Model { params, grid, frag })
}

fn profile_of(config: &RunConfig, m: &Model) -> Result<Profile<f64>> {
    compute_profile(&m.frag, &m.params, &config.profile.options())
}

#[derive(Serialize)]
struct ProfileReport {
    #[serde(flatten)]
    summary: crate::profile::ProfileSummary,
    n_cells: usize,
    x_max: f64,
    /// `∫|U − e^{−x}| x dx`, when that closed form applies (`γ = 1`, uniform kernel, `β = μ`).
    closed_form_weighted_l1: Option<f64>,
}

fn closed_form_error(params: &ModelParams<f64>, u: &Density<f64>) -> Option<f64> {
    let applies = params.gamma == 1.0 && params.beta == params.mu && matches!(params.kernel, crate::FragKernel::Uniform);
    applies.then(|| {
        let g = u.grid();
        let e = g.edges();
        (0..g.len())
            .map(|i| {
                let avg = ((-e[i]).exp() - (-e[i + 1]).exp()) / g.widths()[i];
                (u.values()[i] - avg).abs() * g.centers()[i] * g.widths()[i]
            })
            .sum()
    })
}

fn cmd_profile(config: &RunConfig, out: &mut Output) -> Result<()> {
    let m = model(config)?;
    let profile = profile_of(config, &m)?;
    out.density("profile.csv", &profile.density)?;
    out.json(
        "profile.json",
        &ProfileReport {
            summary: profile.summary(),
            n_cells: m.grid.len(),
            x_max: m.grid.x_max(),
            closed_form_weighted_l1: closed_form_error(&m.params, &profile.density),
        },
    )
}

fn cmd_gap(config: &RunConfig, out: &mut Output) -> Result<()> {
    let m = model(config)?;
    let profile = profile_of(config, &m)?;
    let u0 = config.gap.u0.build(&m.grid, || Ok(profile.density.clone()))?;
    let flow = LinearFlow::new(m.frag.clone(), m.params.mu, config.profile.scheme);
    let gap = estimate_gap(&flow, &profile, &u0, m.params.r, &config.gap.options())?;
    out.write("gap.csv", &table(&["t", "d", "m1"], gap.series.iter().map(|s| nums(&[s.t, s.d, s.m1]))))?;
    out.json("gap.json", &gap)
}

const SAMPLE_HEADER: [&str; 8] = ["t", "V", "m0", "m1", "mp", "mr", "x_norm", "escaped_mass"];
const STEP_HEADER: [&str; 4] = ["t", "dt", "fv0", "fv1"];

#[derive(Serialize)]
struct FinalState {
    t: f64,
    #[serde(rename = "V")]
    v: f64,
    m0: f64,
    m1: f64,
    mp: f64,
    mr: f64,
    escaped_mass: f64,
}

#[derive(Serialize)]
struct LyapunovSummary {
    max_l: f64,
    max_increment: f64,
    monotone: bool,
    decay_rate: Option<f64>,
    rate_bound: f64,
    tail_tl_q3: f64,
    tail_tl_q4: f64,
    algebraic_c: Option<f64>,
}

#[derive(Serialize)]
struct SimulationReport {
    #[serde(rename = "R0")]
    r0: f64,
    steps: usize,
    rejected_steps: usize,
    truncation_flag: bool,
    final_state: FinalState,
    /// Present when `R0 ≤ 1`.
    lyapunov: Option<LyapunovSummary>,
    /// Present when `R0 > 1`.
    persistence: Option<crate::stability::PersistenceReport>,
}

fn cmd_simulate(config: &RunConfig, out: &mut Output) -> Result<()> {
    let m = model(config)?;
    let u0 = config.initial.u0.build(&m.grid, || Ok(profile_of(config, &m)?.density))?;
    let state = SystemState::new(0.0, config.initial.v0, u0, &m.params)?;
    let opts = &config.simulation;
    let traj = PrionPde::new(m.params, m.frag.clone(), opts.scheme).simulate(state, opts)?;

    let rows = traj.samples.iter().map(|s| nums(&[s.t, s.v, s.m0, s.m1, s.mp, s.mr, s.x_norm, s.escaped_mass]));
    out.write("trajectory.csv", &table(&SAMPLE_HEADER, rows))?;
    out.write("steps.csv", &table(&STEP_HEADER, traj.steps.iter().map(|s| nums(&[s.t, s.dt, s.fv0, s.fv1]))))?;
    let mut index = Vec::new();
    for (i, (t, u)) in traj.snapshots.iter().enumerate() {
        let name = format!("snapshots/snapshot_{i:05}.csv");
        out.density(&name, u)?;
        index.push(vec![t.to_string(), name]);
    }
    out.write("snapshots.csv", &table(&["t", "file"], index))?;
    out.density("final_density.csv", &traj.final_state.u)?;

    let r0 = m.params.r0();
    let lyapunov = (r0 <= 1.0).then(|| {
        let l = lyapunov_monitor(&traj.samples, &m.params);
        LyapunovSummary {
            max_l: l.max_l,
            max_increment: l.max_increment,
            monotone: l.monotone,
            decay_rate: l.decay_rate,
            rate_bound: l.rate_bound,
            tail_tl_q3: l.tail_tl_q3,
            tail_tl_q4: l.tail_tl_q4,
            algebraic_c: l.algebraic_c,
        }
    });
    let persistence = (r0 > 1.0).then(|| persistence_monitor(&traj.samples, &m.params, 1.0 / 3.0, 0.5));
    let f = &traj.final_state;
    out.json(
        "summary.json",
        &SimulationReport {
            r0,
            steps: traj.steps.len(),
            rejected_steps: traj.rejected_steps,
            truncation_flag: traj.truncation_flag,
            final_state: FinalState { t: f.t, v: f.v, m0: f.m0, m1: f.m1, mp: f.mp, mr: f.mr, escaped_mass: f.escaped },
            lyapunov,
            persistence,
        },
    )
}

fn read_table(path: &Path, width: usize) -> Result<Vec<Vec<f64>>> {
    let mut rdr = csv::Reader::from_path(path).map_err(|e| Error::Precondition(format!("{}: {e}", path.display())))?;
    let mut rows = Vec::new();
    for (i, rec) in rdr.records().enumerate() {
        let rec = rec.map_err(|e| Error::Precondition(format!("{}: {e}", path.display())))?;
        let row = (0..width)
            .map(|k| {
                rec.get(k)
                    .and_then(|s| s.parse::<f64>().ok())
                    .ok_or_else(|| Error::Precondition(format!("{} row {i}: bad column {k}", path.display())))
            })
            .collect::<Result<Vec<_>>>()?;
        rows.push(row);
    }
    Ok(rows)
}

/// Reads back a `simulate` output directory.
fn load_trajectory(dir: &Path) -> Result<(RunConfig, Model, Trajectory<f64>)> {
    let (source, _) = RunConfig::load(&dir.join("config.json"))?;
    let m = model(&source)?;
    let samples = read_table(&dir.join("trajectory.csv"), SAMPLE_HEADER.len())?
        .into_iter()
        .map(|r| Sample { t: r[0], v: r[1], m0: r[2], m1: r[3], mp: r[4], mr: r[5], x_norm: r[6], escaped_mass: r[7] })
        .collect::<Vec<_>>();
    let steps = read_table(&dir.join("steps.csv"), STEP_HEADER.len())?
        .into_iter()
        .map(|r| StepRecord { t: r[0], dt: r[1], fv0: r[2], fv1: r[3] })
        .collect();
    let open = |rel: &str| {
        let p = dir.join(rel);
        fs::File::open(&p).map_err(|e| Error::Precondition(format!("{}: {e}", p.display())))
    };
    let mut snapshots = Vec::new();
    let path = dir.join("snapshots.csv");
    let mut rdr = csv::Reader::from_path(&path).map_err(|e| Error::Precondition(format!("{}: {e}", path.display())))?;
    for rec in rdr.records() {
        let rec = rec.map_err(|e| Error::Precondition(format!("{}: {e}", path.display())))?;
        let t: f64 = rec[0].parse().map_err(|_| Error::Precondition(format!("{}: bad time", path.display())))?;
        snapshots.push((t, Density::read_csv(m.grid.clone(), open(&rec[1])?)?));
    }
    let last = *samples.last().ok_or_else(|| Error::Degenerate("empty trajectory".into()))?;
    let u = Density::read_csv(m.grid.clone(), open("final_density.csv")?)?;
    let mut final_state = SystemState::new(last.t, last.v, u, &m.params)?;
    final_state.escaped = last.escaped_mass;
    let truncation_flag = samples.iter().any(|s| s.escaped_mass > 1e-6 * s.m1);
    let traj = Trajectory { samples, snapshots, steps, final_state, truncation_flag, rejected_steps: 0 };
    Ok((source, m, traj))
}

#[derive(Serialize)]
struct ReduceReport {
    rho0: f64,
    #[serde(rename = "M_p")]
    mp: f64,
    max_abs_eps_1: f64,
    h_quadrature_gap: f64,
    w_bound_margin: f64,
    h_bound_margin: f64,
    decay_eps_0: crate::reduction::DecayFit,
    decay_eps_p: crate::reduction::DecayFit,
    decay_eps_r: crate::reduction::DecayFit,
    consistency: crate::reduction::ConsistencyReport,
    /// `(h, ‖v̇ − Lv‖/‖v‖)` at each density snapshot.
    v_residual: Vec<(f64, f64)>,
}

fn reduced_rows(red: &[ReducedSample]) -> Vec<Vec<String>> {
    red.iter().map(|s| nums(&[s.t, s.v, s.w, s.q, s.p, s.y, s.h, s.eps_p])).collect()
}

const REDUCED_HEADER: [&str; 8] = ["t", "V", "W", "Q", "P", "Y", "h", "eps_p"];

fn cmd_reduce(config: &RunConfig, flag: Option<&Path>, out: &mut Output) -> Result<()> {
    let dir = flag
        .map(Path::to_path_buf)
        .or_else(|| config.reduce.trajectory_dir.clone())
        .ok_or_else(|| Error::Precondition("reduce needs --trajectory DIR or reduce.trajectory_dir".into()))?;
    let (source, m, traj) = load_trajectory(&dir)?;
    let profile = profile_of(&source, &m)?;
    let tr = transform_from_pde(&traj, &m.params, &profile)?;
    let rows = tr.samples.iter().zip(0..).map(|(s, i)| {
        let e = &tr.eps;
        nums(&[s.t, s.w, s.h, s.q, s.p, s.y, s.v, e.eps_0[i], e.eps_1[i], e.eps_p[i], e.eps_r[i]])
    });
    let header = ["t", "W", "h", "Q", "P", "Y", "V", "eps_0", "eps_1", "eps_p", "eps_r"];
    out.write("reduction.csv", &table(&header, rows))?;

    let first = tr.samples[0];
    let last_t = tr.samples.last().map(|s| s.t).unwrap_or(0.0);
    let opts = OdeOptions {
        horizon: last_t - first.t,
        dt: config.reduce.ode_dt.unwrap_or(1e-3),
        output_every: source.simulation.output_every,
    };
    let red = integrate_reduced(&ReducedState::vwq(first.v, first.w, first.q), &m.params, profile.mp, &EpsSource::from_series(&tr.eps), &opts)?;
    out.write("reduced_ode.csv", &table(&REDUCED_HEADER, reduced_rows(&red)))?;
    let consistency = consistency_check(&tr.samples, &red)?;
    let flow = LinearFlow::new(m.frag.clone(), m.params.mu, source.simulation.scheme);
    let sup = |xs: &[f64]| xs.iter().fold(0.0f64, |a, &b| a.max(b.abs()));
    out.json(
        "reduce.json",
        &ReduceReport {
            rho0: tr.rho0,
            mp: profile.mp,
            max_abs_eps_1: sup(&tr.eps.eps_1),
            h_quadrature_gap: tr.h_quadrature_gap,
            w_bound_margin: tr.w_bound_margin,
            h_bound_margin: tr.h_bound_margin,
            decay_eps_0: fit_decay(&tr.eps.h, &tr.eps.eps_0, 1e-12),
            decay_eps_p: fit_decay(&tr.eps.h, &tr.eps.eps_p, 1e-12),
            decay_eps_r: fit_decay(&tr.eps.h, &tr.eps.eps_r, 1e-12),
            consistency,
            v_residual: v_snapshot_residual(&tr, &flow, m.params.r),
        },
    )
}

#[derive(Serialize)]
struct OdeReport {
    formulation: crate::reduction::Formulation,
    #[serde(rename = "M_p")]
    mp: f64,
    initial: [f64; 3],
    last: ReducedSample,
    #[serde(rename = "V_inf")]
    v_inf: Option<f64>,
    #[serde(rename = "Q_inf")]
    q_inf: Option<f64>,
}

fn cmd_ode(config: &RunConfig, out: &mut Output) -> Result<()> {
    let params = config.params.validate()?;
    let ode = &config.ode;
    let needs_model = ode.mp.is_none() || ode.x0.is_none();
    let m = if needs_model { Some(model(config)?) } else { None };
    let mp = match ode.mp {
        Some(mp) => mp,
        None => profile_of(config, m.as_ref().unwrap())?.mp,
    };
    let initial = match ode.x0 {
        Some(x) => ReducedState { formulation: ode.formulation, x },
        None => {
            let m = m.as_ref().unwrap();
            let u0 = config.initial.u0.build(&m.grid, || Ok(profile_of(config, m)?.density))?;
            ReducedState::vwq(config.initial.v0, 1.0, u0.moment(1.0)).convert(ode.formulation, params.gamma)
        }
    };
    let red = integrate_reduced(&initial, &params, mp, &ode.eps, &ode.options())?;
    out.write("ode.csv", &table(&REDUCED_HEADER, reduced_rows(&red)))?;
    let eq = equilibria(&params, mp);
    out.json(
        "ode.json",
        &OdeReport {
            formulation: ode.formulation,
            mp,
            initial: initial.x,
            last: *red.last().expect("integration yields at least the initial sample"),
            v_inf: eq.endemic.map(|e| e.v),
            q_inf: eq.endemic.map(|e| e.q),
        },
    )
}

fn cmd_stability(config: &RunConfig, out: &mut Output) -> Result<()> {
    let params = config.params.validate()?;
    let mp = match config.stability.mp {
        Some(mp) => mp,
        None => profile_of(config, &model(config)?)?.mp,
    };
    let mut report = serde_json::to_value(stability_report(&params, mp)?).expect("report serializes");
    report["M_p"] = mp.into();
    out.json("stability.json", &report)
}

fn cmd_sweep(config: &RunConfig, out: &mut Output) -> Result<()> {
    let axes: Vec<(&String, &Vec<f64>)> = config.sweep.axes.iter().collect();
    if axes.iter().any(|(_, v)| v.is_empty()) {
        return Err(Error::Precondition("sweep axes must not be empty".into()));
    }
    let total: usize = axes.iter().map(|(_, v)| v.len()).product();
    let mut points = Vec::with_capacity(total);
    for idx in 0..total {
        let mut params = config.params;
        let mut rest = idx;
        let mut values = Vec::with_capacity(axes.len());
        for (name, vals) in axes.iter().rev() {
            let v = vals[rest % vals.len()];
            rest /= vals.len();
            params.set(name, v);
            values.push(v);
        }
        values.reverse();
        points.push((params.validate()?, values));
    }
    let root = out.root.clone();
    let results: Vec<Result<(Vec<String>, FileEntry)>> = points
        .par_iter()
        .enumerate()
        .map(|(i, (params, values))| {
            let mp = match config.sweep.mp {
                Some(mp) => mp,
                None => {
                    let grid = config.grid.build(params)?;
                    let frag = Arc::new(FragMatrix::assemble(grid, params)?);
                    compute_profile(&frag, params, &config.profile.options())?.mp
                }
            };
            let rep = stability_report(params, mp)?;
            let mut json = serde_json::to_value(&rep).expect("report serializes");
            json["M_p"] = mp.into();
            json["params"] = serde_json::to_value(params).expect("params serialize");
            let entry = write_file(&root, &format!("runs/run_{i:05}/stability.json"), &to_json(&json))?;
            let mut row = nums(values);
            row.extend([
                mp.to_string(),
                rep.r0.to_string(),
                rep.routh_hurwitz_pass.map(|b| u8::from(b).to_string()).unwrap_or_default(),
                rep.max_real_part.map(|x| x.to_string()).unwrap_or_default(),
                u8::from(rep.cooperative).to_string(),
            ]);
            Ok((row, entry))
        })
        .collect();
    let mut rows = Vec::with_capacity(total);
    for r in results {
        let (row, entry) = r?;
        out.files.insert(entry.path.clone(), entry);
        rows.push(row);
    }
    let mut header: Vec<&str> = axes.iter().map(|(n, _)| n.as_str()).collect();
    header.extend(["M_p", "R0", "rh_pass", "max_re_eig", "cooperative"]);
    out.write("sweep.csv", &table(&header, rows))
}

fn cmd_verify(config: &RunConfig, flag: &[String], out: &mut Output) -> Result<()> {
    let suites = if flag.is_empty() { config.verify.suites.clone() } else { flag.to_vec() };
    if let Some(bad) = suites.iter().find(|s| !crate::config::SUITES.contains(&s.as_str())) {
        return Err(Error::Precondition(format!("unknown verify suite {bad:?}")));
    }
    let report = verify(&suites, config.seed);
    for suite in &report.suites {
        for c in &suite.criteria {
            println!("{} [{}] {}: {}", if c.pass { "PASS" } else { "FAIL" }, suite.suite, c.id, c.name);
        }
    }
    out.json("verify.json", &report)
}
