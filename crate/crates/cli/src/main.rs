//! `qdgraph` batch front end. Every run writes its artifacts plus a
//! `manifest.json` listing inputs, seeds and SHA-256 checksums; `replay`
//! reruns a manifest and compares the checksums.

use std::f64::consts::PI;
use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::time::Instant;

use clap::{Args, Parser, Subcommand, ValueEnum};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use serde_json::json;
use sha2::{Digest, Sha256};

use qdgraph::fit::{fit_parameters, synthetic_targets, FitConfig, SubsetMode};
use qdgraph::ideal::{self, parse_gates, IntervalGate};
use qdgraph::metrics::{
    self, concurrence, fidelity, fit_damped_cosine, ideal_target, linear_regression, max_fidelity_timeshift,
    two_photon_target, Protocol,
};
use qdgraph::protocol::{
    average_joint, chain_fidelities, herald_and_readout, overhauser_samples, spin_sz_trace, Circular, CompiledSequence,
    JointState, OsrpPlacement, PulseProgram, CATERPILLAR_10,
};
use qdgraph::qcore::linalg::{random_density, trace_distance};
use qdgraph::qcore::{c, DensityMatrix, Register};
use qdgraph::tomography::{reconstruct, simulate_counts, CountTable, MeasurementSetting, Shots};
use qdgraph::trion::TrionParams;

/// Version of the CSV column sets and JSON layouts written by this tool.
const SCHEMA_VERSION: u32 = 1;

#[derive(Parser, Debug)]
#[command(name = "qdgraph", version, about = "Spin-photon graph-state simulator")]
struct Cli {
    /// Output directory for artifacts and the run manifest.
    #[arg(long, global = true, env = "QDGRAPH_OUT", default_value = "qdgraph-out")]
    out: PathBuf,

    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Simulate a pulse program and report the heralded state and fidelities.
    Simulate(SimulateArgs),
    /// Ideal statevector of a protocol preset or gate list.
    Ideal(IdealArgs),
    /// Two- and four-partite fidelity table of the graph-state protocols.
    FidelityTable(TableArgs),
    /// Four-photon visibility against the phase φ₂ over [0, 3π].
    VisibilityScan(VisibilityArgs),
    /// Conditional S_z of the second photon against pulse delay.
    SzTrace(SzArgs),
    /// Fit model parameters to two-photon density matrices.
    Fit(FitArgs),
    /// Simulated tomography counts and their reconstruction.
    TomoRoundtrip(TomoArgs),
    /// Chain fidelity against photon number.
    Scaling(ScalingArgs),
    /// Rerun a manifest and verify that every artifact checksum matches.
    Replay(ReplayArgs),
}

#[derive(Args, Debug, Clone)]
struct ParamArg {
    /// Parameter preset (measured, ideal, near-term) or a TOML file.
    #[arg(long, default_value = "measured")]
    params: String,
}

#[derive(Args, Debug)]
struct SimulateArgs {
    #[command(flatten)]
    params: ParamArg,
    /// Program preset (lc4, ghz4, rlc1, rlc2, visibility) or a TOML file.
    #[arg(long, default_value = "lc4")]
    program: String,
    /// Herald outcome of the first photon; defaults to the program's.
    #[arg(long)]
    herald: Option<String>,
    #[arg(long, default_value_t = 100)]
    samples: usize,
    #[arg(long, default_value_t = 7)]
    seed: u64,
    #[arg(long, value_enum, default_value_t = Placement::OnSpin)]
    placement: Placement,
}

#[derive(ValueEnum, Debug, Clone, Copy)]
enum Placement {
    OnSpin,
    InEmission,
}

impl From<Placement> for OsrpPlacement {
    fn from(p: Placement) -> Self {
        match p {
            Placement::OnSpin => OsrpPlacement::OnSpin,
            Placement::InEmission => OsrpPlacement::InEmission,
        }
    }
}

#[derive(Args, Debug)]
struct IdealArgs {
    /// Preset (lc4, ghz4, rlc1, rlc2) or a gate list such as "Ry(pi/2) Es Z Es".
    #[arg(long)]
    gates: String,
    /// Initial spin state: up, down, plus or minus.
    #[arg(long, default_value = "up")]
    init: String,
}

#[derive(Args, Debug)]
struct TableArgs {
    #[command(flatten)]
    params: ParamArg,
    /// Protocol to tabulate: all, lc, ghz, rlc1 or rlc2.
    #[arg(long, default_value = "all")]
    preset: String,
    #[arg(long, default_value_t = 100)]
    samples: usize,
    /// Parameter sets drawn from the fit uncertainties for σ; 0 disables.
    #[arg(long, default_value_t = 0)]
    param_sets: usize,
    #[arg(long, default_value_t = 7)]
    seed: u64,
}

#[derive(Args, Debug)]
struct VisibilityArgs {
    #[command(flatten)]
    params: ParamArg,
    /// Number of equally spaced φ₂ values on [0, 3π].
    #[arg(long, default_value_t = 61)]
    points: usize,
    #[arg(long, default_value_t = 100)]
    samples: usize,
    #[arg(long, default_value_t = 7)]
    seed: u64,
}

#[derive(ValueEnum, Debug, Clone, Copy, PartialEq)]
enum SzMode {
    /// Free precession between the two pulses.
    Larmor,
    /// A phase pulse halfway between the two pulses.
    Osrp,
}

#[derive(Args, Debug)]
struct SzArgs {
    #[command(flatten)]
    params: ParamArg,
    #[arg(long, value_enum, default_value_t = SzMode::Larmor)]
    mode: SzMode,
    /// Largest pulse delay, ns.
    #[arg(long, default_value_t = 4.0)]
    t_max: f64,
    /// Delay step, ns.
    #[arg(long, default_value_t = 0.05)]
    step: f64,
    /// Nominal phase-pulse angle in units of π (osrp mode).
    #[arg(long, default_value_t = 1.0)]
    theta_pi: f64,
    #[arg(long, default_value_t = 100)]
    samples: usize,
    #[arg(long, default_value_t = 7)]
    seed: u64,
}

#[derive(Args, Debug)]
struct FitArgs {
    /// Fit configuration TOML. Without it a synthetic round trip is run.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Truth parameters for the synthetic round trip.
    #[command(flatten)]
    params: ParamArg,
    /// Overhauser samples used to generate synthetic targets.
    #[arg(long, default_value_t = 100)]
    target_samples: usize,
    #[arg(long, default_value_t = 99)]
    target_seed: u64,
    /// Overhauser samples per objective evaluation (synthetic mode).
    #[arg(long, default_value_t = 20)]
    samples: usize,
    #[arg(long, default_value_t = 3)]
    restarts: usize,
    /// Fit seed; overrides the config file value when given.
    #[arg(long)]
    seed: Option<u64>,
    /// Refit on leave-one-out target subsets for the spread.
    #[arg(long)]
    leave_one_out: bool,
}

#[derive(Args, Debug)]
struct TomoArgs {
    /// Count table CSV to reconstruct; skips simulation.
    #[arg(long)]
    counts: Option<PathBuf>,
    /// Density-matrix JSON to measure, or to compare against with --counts.
    #[arg(long)]
    state: Option<PathBuf>,
    /// Qubits of the random state used when no --state is given.
    #[arg(long, default_value_t = 2)]
    qubits: usize,
    /// Shots per setting, or "analytic" for exact probabilities.
    #[arg(long, default_value = "1000000")]
    shots: String,
    #[arg(long, default_value_t = 7)]
    seed: u64,
}

#[derive(ValueEnum, Debug, Clone, Copy, PartialEq)]
enum Family {
    Ghz,
    Lc,
    Caterpillar,
    All,
}

#[derive(Args, Debug)]
struct ScalingArgs {
    #[arg(long, default_value = "near-term")]
    params: String,
    #[arg(long, value_enum, default_value_t = Family::All)]
    protocol: Family,
    #[arg(long, default_value_t = 10)]
    max_photons: usize,
    #[arg(long, default_value_t = 100)]
    samples: usize,
    #[arg(long, default_value_t = 7)]
    seed: u64,
}

#[derive(Args, Debug)]
struct ReplayArgs {
    #[arg(long)]
    manifest: PathBuf,
}

/// Failure classes mapped onto exit codes.
#[derive(Debug)]
enum CliError {
    Validation(String),
    Numerical(String),
    Io(String),
}

impl CliError {
    fn code(&self) -> u8 {
        match self {
            CliError::Validation(_) => 2,
            CliError::Numerical(_) => 3,
            CliError::Io(_) => 1,
        }
    }

    fn to_json(&self) -> String {
        let (kind, msg) = match self {
            CliError::Validation(m) => ("validation", m),
            CliError::Numerical(m) => ("numerical", m),
            CliError::Io(m) => ("io", m),
        };
        json!({ "error": kind, "message": msg, "exit_code": self.code() }).to_string()
    }
}

impl From<qdgraph::Error> for CliError {
    fn from(e: qdgraph::Error) -> Self {
        match e {
            qdgraph::Error::Io(io) => CliError::Io(io.to_string()),
            e if e.is_numerical() => CliError::Numerical(e.to_string()),
            e => CliError::Validation(e.to_string()),
        }
    }
}

impl From<std::io::Error> for CliError {
    fn from(e: std::io::Error) -> Self {
        CliError::Io(e.to_string())
    }
}

type CliResult<T> = std::result::Result<T, CliError>;

fn invalid(msg: impl Into<String>) -> CliError {
    CliError::Validation(msg.into())
}

#[derive(Clone, Debug, Serialize, Deserialize, PartialEq)]
struct FileDigest {
    path: String,
    sha256: String,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
struct RunManifest {
    schema_version: u32,
    command: String,
    argv: Vec<String>,
    inputs: Vec<FileDigest>,
    seed: Option<u64>,
    samples: Option<usize>,
    out_dir: String,
    tool_version: String,
    wall_clock_s: f64,
    artifacts: Vec<FileDigest>,
}

fn sha256_hex(bytes: &[u8]) -> String {
    Sha256::digest(bytes).iter().map(|b| format!("{b:02x}")).collect()
}

/// Collects artifacts and inputs of one run; writes are serialized here.
struct Run {
    out: PathBuf,
    inputs: Vec<FileDigest>,
    artifacts: Vec<FileDigest>,
    seed: Option<u64>,
    samples: Option<usize>,
}

impl Run {
    fn new(out: &Path) -> CliResult<Self> {
        fs::create_dir_all(out)?;
        Ok(Run { out: out.to_path_buf(), inputs: Vec::new(), artifacts: Vec::new(), seed: None, samples: None })
    }

    fn read_input(&mut self, path: &Path) -> CliResult<String> {
        let text = fs::read_to_string(path).map_err(|e| invalid(format!("cannot read {}: {e}", path.display())))?;
        self.inputs.push(FileDigest { path: path.display().to_string(), sha256: sha256_hex(text.as_bytes()) });
        Ok(text)
    }

    fn write(&mut self, name: &str, contents: &str) -> CliResult<()> {
        fs::write(self.out.join(name), contents)?;
        self.artifacts.push(FileDigest { path: name.to_string(), sha256: sha256_hex(contents.as_bytes()) });
        Ok(())
    }

    fn write_json(&mut self, name: &str, value: &impl Serialize) -> CliResult<()> {
        let mut text = serde_json::to_string_pretty(value).map_err(|e| CliError::Io(e.to_string()))?;
        text.push('\n');
        self.write(name, &text)
    }

    fn params(&mut self, spec: &str) -> CliResult<TrionParams> {
        let path = Path::new(spec);
        if path.extension().is_some_and(|e| e == "toml") || path.is_file() {
            let text = self.read_input(path)?;
            Ok(TrionParams::from_toml(&text)?)
        } else {
            Ok(TrionParams::preset(spec)?)
        }
    }

    fn program(&mut self, spec: &str, p: &TrionParams) -> CliResult<PulseProgram> {
        let path = Path::new(spec);
        if path.extension().is_some_and(|e| e == "toml") || path.is_file() {
            let text = self.read_input(path)?;
            Ok(PulseProgram::from_toml(&text)?)
        } else {
            Ok(PulseProgram::preset(spec, p)?)
        }
    }
}

fn main() -> ExitCode {
    let argv: Vec<String> = std::env::args().collect();
    let cli = match Cli::try_parse_from(&argv) {
        Ok(cli) => cli,
        Err(e) if matches!(e.kind(), clap::error::ErrorKind::DisplayHelp | clap::error::ErrorKind::DisplayVersion) => {
            let _ = e.print();
            return ExitCode::SUCCESS;
        }
        Err(e) => {
            let err = CliError::Validation(e.to_string().trim().to_string());
            eprintln!("{}", err.to_json());
            return ExitCode::from(err.code());
        }
    };
    match execute(cli, &argv[1..]) {
        Ok(manifest) => {
            println!("{}", Path::new(&manifest.out_dir).join("manifest.json").display());
            ExitCode::SUCCESS
        }
        Err(err) => {
            eprintln!("{}", err.to_json());
            ExitCode::from(err.code())
        }
    }
}

/// Runs one parsed command and writes its manifest.
fn execute(cli: Cli, argv: &[String]) -> CliResult<RunManifest> {
    let started = Instant::now();
    if let Command::Replay(a) = &cli.command {
        return replay(&a.manifest, &cli.out);
    }
    let mut run = Run::new(&cli.out)?;
    let name = command_name(&cli.command);
    match cli.command {
        Command::Simulate(a) => simulate(&mut run, a)?,
        Command::Ideal(a) => ideal_cmd(&mut run, a)?,
        Command::FidelityTable(a) => fidelity_table(&mut run, a)?,
        Command::VisibilityScan(a) => visibility_scan(&mut run, a)?,
        Command::SzTrace(a) => sz_trace(&mut run, a)?,
        Command::Fit(a) => fit(&mut run, a)?,
        Command::TomoRoundtrip(a) => tomo_roundtrip(&mut run, a)?,
        Command::Scaling(a) => scaling(&mut run, a)?,
        Command::Replay(_) => unreachable!("handled above"),
    }
    let manifest = RunManifest {
        schema_version: SCHEMA_VERSION,
        command: name.to_string(),
        argv: argv.to_vec(),
        inputs: run.inputs,
        seed: run.seed,
        samples: run.samples,
        out_dir: run.out.display().to_string(),
        tool_version: env!("CARGO_PKG_VERSION").to_string(),
        wall_clock_s: started.elapsed().as_secs_f64(),
        artifacts: run.artifacts,
    };
    let text = serde_json::to_string_pretty(&manifest).map_err(|e| CliError::Io(e.to_string()))?;
    fs::write(run.out.join("manifest.json"), text + "\n")?;
    Ok(manifest)
}

fn command_name(c: &Command) -> &'static str {
    match c {
        Command::Simulate(_) => "simulate",
        Command::Ideal(_) => "ideal",
        Command::FidelityTable(_) => "fidelity-table",
        Command::VisibilityScan(_) => "visibility-scan",
        Command::SzTrace(_) => "sz-trace",
        Command::Fit(_) => "fit",
        Command::TomoRoundtrip(_) => "tomo-roundtrip",
        Command::Scaling(_) => "scaling",
        Command::Replay(_) => "replay",
    }
}

/// Reruns the recorded command into `out` and compares checksums by
/// artifact name. Any mismatch is a validation failure.
fn replay(manifest_path: &Path, out: &Path) -> CliResult<RunManifest> {
    let text = fs::read_to_string(manifest_path)
        .map_err(|e| invalid(format!("cannot read {}: {e}", manifest_path.display())))?;
    let recorded: RunManifest = serde_json::from_str(&text).map_err(|e| invalid(format!("bad manifest: {e}")))?;
    if recorded.command == "replay" {
        return Err(invalid("cannot replay a replay manifest"));
    }
    if recorded.schema_version != SCHEMA_VERSION {
        return Err(invalid(format!("manifest schema {} is not {SCHEMA_VERSION}", recorded.schema_version)));
    }
    if Path::new(&recorded.out_dir) == out {
        return Err(invalid("replay output directory must differ from the recorded one"));
    }
    for input in &recorded.inputs {
        let bytes = fs::read(&input.path).map_err(|e| invalid(format!("input {} unavailable: {e}", input.path)))?;
        if sha256_hex(&bytes) != input.sha256 {
            return Err(invalid(format!("input {} changed since the recorded run", input.path)));
        }
    }
    let mut argv = vec!["qdgraph".to_string()];
    argv.extend(recorded.argv.iter().cloned());
    let mut cli = Cli::try_parse_from(&argv).map_err(|e| invalid(e.to_string()))?;
    cli.out = out.to_path_buf();
    let fresh = execute(cli, &recorded.argv)?;
    let mismatched: Vec<&str> =
        recorded.artifacts.iter().filter(|a| !fresh.artifacts.contains(a)).map(|a| a.path.as_str()).collect();
    if !mismatched.is_empty() || fresh.artifacts.len() != recorded.artifacts.len() {
        return Err(invalid(format!("replay checksums differ for: {}", mismatched.join(", "))));
    }
    Ok(fresh)
}

fn parse_herald(s: &str) -> CliResult<Circular> {
    Ok(Circular::parse(s)?)
}

fn simulate(run: &mut Run, a: SimulateArgs) -> CliResult<()> {
    let p = run.params(&a.params.params)?;
    let mut prog = run.program(&a.program, &p)?;
    if let Some(h) = &a.herald {
        prog = prog.with_herald(parse_herald(h)?);
    }
    if a.samples == 0 {
        return Err(invalid("--samples must be at least 1"));
    }
    run.seed = Some(a.seed);
    run.samples = Some(a.samples);
    let herald = prog.herald();
    let samples = overhauser_samples(p.b_oh_sigma, a.samples, a.seed)?;
    let placement = OsrpPlacement::from(a.placement);
    let states = samples
        .iter()
        .map(|s| CompiledSequence::with_placement(&p, &prog, s, placement)?.run(herald))
        .collect::<qdgraph::Result<Vec<JointState>>>()?;
    let avg = average_joint(&states)?;
    run.write("state.json", &(avg.state.to_json() + "\n"))?;

    // fidelities only exist for programs whose intervals are Clifford gates
    let t = prog.evaluation_time();
    let report = match ideal_target(&p, &prog, herald, 0.0) {
        Ok(_) => {
            let full =
                max_fidelity_timeshift(&avg.state, |tt| ideal_target(&p, &prog, herald, tt - t), t, p.t1, &a.program)?;
            let two = if prog.excitations() >= 3 {
                let readout = prog.readout();
                let (rho2, prob) = herald_and_readout(&avg, readout)?;
                let target = two_photon_target(&ideal_target(&p, &prog, herald, 0.0)?, readout)?;
                Some(json!({
                    "readout": readout.name(),
                    "readout_probability": prob,
                    "fidelity": fidelity(&rho2, &target)?,
                    "concurrence": concurrence(&rho2)?,
                }))
            } else {
                None
            };
            json!({ "fidelity": full, "two_photon": two })
        }
        Err(e) => json!({ "fidelity": null, "note": e.to_string() }),
    };
    run.write_json(
        "report.json",
        &json!({
            "schema_version": SCHEMA_VERSION,
            "herald": herald.name(),
            "herald_probability": avg.probability,
            "photons": avg.photon_labels(),
            "evaluation_time_ns": t,
            "report": report,
        }),
    )
}

fn ideal_cmd(run: &mut Run, a: IdealArgs) -> CliResult<()> {
    let (init, herald) = match a.init.as_str() {
        "up" => ([c(1.0), c(0.0)], Circular::R),
        "down" => ([c(0.0), c(1.0)], Circular::L),
        "plus" => ([c(0.5f64.sqrt()), c(0.5f64.sqrt())], Circular::R),
        "minus" => ([c(0.5f64.sqrt()), c(-(0.5f64.sqrt()))], Circular::R),
        other => return Err(invalid(format!("unknown initial state `{other}`"))),
    };
    let p = TrionParams::ideal();
    let (gates, ket) = match a.gates.as_str() {
        "lc4" | "ghz4" | "rlc1" | "rlc2" => {
            if !matches!(a.init.as_str(), "up" | "down") {
                return Err(invalid("protocol presets start from a heralded spin: use --init up or down"));
            }
            let prog = PulseProgram::preset(&a.gates, &p)?;
            let (mut g, tail) = prog.ideal_gates(&p)?;
            g.extend(tail);
            (g, ideal_target(&p, &prog, herald, 0.0)?)
        }
        text => {
            let g = parse_gates(text)?;
            let ket = ideal::ideal_protocol_state(&g, init)?;
            (g, ket)
        }
    };
    let amps = ket.amps();
    run.write_json(
        "statevector.json",
        &json!({
            "schema_version": SCHEMA_VERSION,
            "gates": ideal::format_gates(&gates),
            "labels": ket.register().labels(),
            "re": amps.iter().map(|z| z.re).collect::<Vec<_>>(),
            "im": amps.iter().map(|z| z.im).collect::<Vec<_>>(),
        }),
    )
}

fn fidelity_table(run: &mut Run, a: TableArgs) -> CliResult<()> {
    let p = run.params(&a.params.params)?;
    let wanted: Vec<Protocol> = match a.preset.to_ascii_lowercase().as_str() {
        "all" => Protocol::all().to_vec(),
        name => vec![Protocol::all()
            .into_iter()
            .find(|pr| pr.name().eq_ignore_ascii_case(name))
            .ok_or_else(|| invalid(format!("unknown protocol `{name}`")))?],
    };
    run.seed = Some(a.seed);
    run.samples = Some(a.samples);
    let entries: Vec<_> = metrics::fidelity_table(&p, a.samples, a.param_sets, a.seed)?
        .into_iter()
        .filter(|e| wanted.contains(&e.protocol))
        .collect();
    run.write("fidelity_table.csv", &metrics::table_csv(&entries))?;
    run.write_json("fidelity_table.json", &json!({ "schema_version": SCHEMA_VERSION, "entries": entries }))
}

fn linspace(lo: f64, hi: f64, n: usize) -> Vec<f64> {
    match n {
        0 => Vec::new(),
        1 => vec![lo],
        _ => (0..n).map(|k| lo + (hi - lo) * k as f64 / (n - 1) as f64).collect(),
    }
}

fn visibility_scan(run: &mut Run, a: VisibilityArgs) -> CliResult<()> {
    let p = run.params(&a.params.params)?;
    if a.points < 2 {
        return Err(invalid("--points must be at least 2"));
    }
    run.seed = Some(a.seed);
    run.samples = Some(a.samples);
    let phis = linspace(0.0, 3.0 * PI, a.points);
    let vis = metrics::visibility_scan(&p, &phis, a.samples, a.seed)?;
    let mut csv = String::from("phi2,V\n");
    for (phi, v) in phis.iter().zip(&vis) {
        csv.push_str(&format!("{phi:.6},{v:.6}\n"));
    }
    run.write("visibility.csv", &csv)
}

fn sz_trace(run: &mut Run, a: SzArgs) -> CliResult<()> {
    let p = run.params(&a.params.params)?;
    if !(a.step > 0.0 && a.t_max >= a.step) {
        return Err(invalid("need 0 < --step <= --t-max"));
    }
    run.seed = Some(a.seed);
    run.samples = Some(a.samples);
    let n = (a.t_max / a.step + 1e-9).floor() as usize;
    let delays: Vec<f64> = (1..=n).map(|k| k as f64 * a.step).collect();
    let theta = (a.mode == SzMode::Osrp).then_some(a.theta_pi * PI);
    let sz = spin_sz_trace(&p, &delays, theta, a.samples, a.seed)?;
    let mut csv = String::from("delay_ns,sz\n");
    for (d, s) in delays.iter().zip(&sz) {
        csv.push_str(&format!("{d:.4},{s:.6}\n"));
    }
    run.write("sz_trace.csv", &csv)?;
    let fitted = match fit_damped_cosine(&delays, &sz) {
        Ok(f) => json!({ "fit": f, "half_life_ns": f.half_life() }),
        Err(e) => json!({ "fit": null, "note": e.to_string() }),
    };
    run.write_json(
        "sz_fit.json",
        &json!({ "schema_version": SCHEMA_VERSION, "larmor_period_ns": p.larmor_period(), "damped_cosine": fitted }),
    )
}

fn fit(run: &mut Run, a: FitArgs) -> CliResult<()> {
    let mut cfg = match &a.config {
        Some(path) => {
            let text = run.read_input(path)?;
            FitConfig::from_toml(&text)?
        }
        None => {
            let truth = run.params(&a.params.params)?;
            let targets = synthetic_targets(&truth, a.target_samples, a.target_seed)?;
            let mut cfg = FitConfig::new(truth, targets);
            cfg.n_samples = a.samples;
            cfg.restarts = a.restarts;
            cfg.subsets = SubsetMode::None;
            cfg
        }
    };
    if let Some(seed) = a.seed {
        cfg.seed = seed;
    }
    if a.leave_one_out {
        cfg.subsets = SubsetMode::LeaveOneOut;
    }
    run.seed = Some(cfg.seed);
    run.samples = Some(cfg.n_samples);
    let result = fit_parameters(&cfg)?;
    run.write("fit_params.csv", &result.to_csv())?;
    run.write_json("fit_result.json", &json!({ "schema_version": SCHEMA_VERSION, "result": result }))
}

fn tomo_roundtrip(run: &mut Run, a: TomoArgs) -> CliResult<()> {
    let truth = match &a.state {
        Some(path) => Some(DensityMatrix::from_json(&run.read_input(path)?)?),
        None => None,
    };
    run.seed = Some(a.seed);
    let table = match &a.counts {
        Some(path) => CountTable::from_csv(&run.read_input(path)?)?,
        None => {
            let shots = match a.shots.as_str() {
                "analytic" => Shots::Analytic,
                n => Shots::Finite(n.parse().map_err(|_| invalid(format!("bad --shots `{n}`")))?),
            };
            let rho = match &truth {
                Some(r) => r.clone(),
                None => {
                    if a.qubits == 0 || a.qubits > 6 {
                        return Err(invalid("--qubits must be between 1 and 6"));
                    }
                    let mut rng = ChaCha8Rng::seed_from_u64(a.seed);
                    let labels: Vec<String> = (0..a.qubits).map(|k| format!("q{k}")).collect();
                    DensityMatrix::new(Register::qubits(labels)?, random_density(1 << a.qubits, &mut rng), true)?
                }
            };
            let n = rho.register().labels().len();
            let settings = MeasurementSetting::complete(n);
            let t = simulate_counts(&rho, &settings, shots, a.seed)?;
            run.write("counts.csv", &t.to_csv()?)?;
            if truth.is_none() {
                run.write("truth.json", &(rho.to_json() + "\n"))?;
            }
            return finish_tomo(run, &t, Some(&rho));
        }
    };
    finish_tomo(run, &table, truth.as_ref())
}

fn finish_tomo(run: &mut Run, table: &CountTable, truth: Option<&DensityMatrix>) -> CliResult<()> {
    let rec = reconstruct(table)?;
    run.write("reconstruction.json", &(rec.to_json() + "\n"))?;
    let comparison = match truth {
        Some(t) if t.dim() == rec.dim() => json!({
            "trace_distance": trace_distance(t.mat(), rec.mat()),
            "fidelity": metrics::uhlmann_fidelity(t, &rec)?,
        }),
        Some(_) => return Err(invalid("reference state and count table disagree on the qubit count")),
        None => json!(null),
    };
    let shots = match table.shots {
        Shots::Analytic => json!("analytic"),
        Shots::Finite(n) => json!(n),
    };
    run.write_json(
        "tomography_report.json",
        &json!({
            "schema_version": SCHEMA_VERSION,
            "qubits": table.n_photons,
            "settings": table.counts.len(),
            "shots_per_setting": shots,
            "comparison": comparison,
        }),
    )
}

fn scaling(run: &mut Run, a: ScalingArgs) -> CliResult<()> {
    let p = run.params(&a.params)?;
    if a.max_photons < 2 {
        return Err(invalid("--max-photons must be at least 2"));
    }
    run.seed = Some(a.seed);
    run.samples = Some(a.samples);
    let families: Vec<Family> = match a.protocol {
        Family::All => vec![Family::Ghz, Family::Lc, Family::Caterpillar],
        f => vec![f],
    };
    let mut csv = String::from("protocol,photons,fidelity,log_fidelity\n");
    let mut fits = serde_json::Map::new();
    for fam in families {
        let (name, pattern) = match fam {
            Family::Ghz => ("ghz", vec![IntervalGate::Z; a.max_photons]),
            Family::Lc => ("lc", vec![IntervalGate::Ry; a.max_photons]),
            Family::Caterpillar => {
                if a.max_photons > CATERPILLAR_10.len() {
                    return Err(invalid(format!("the caterpillar pattern has {} photons", CATERPILLAR_10.len())));
                }
                ("caterpillar", CATERPILLAR_10[..a.max_photons].to_vec())
            }
            Family::All => unreachable!("expanded above"),
        };
        let fids = chain_fidelities(&p, IntervalGate::Ry, &pattern, a.samples, a.seed)?;
        let xs: Vec<f64> = (1..=fids.len()).map(|n| n as f64).collect();
        let ys: Vec<f64> = fids.iter().map(|f| f.ln()).collect();
        for ((n, f), l) in xs.iter().zip(&fids).zip(&ys) {
            csv.push_str(&format!("{name},{n},{f:.6},{l:.6}\n"));
        }
        let reg = linear_regression(&xs, &ys)?;
        let monotone = fids.windows(2).all(|w| w[1] < w[0]);
        fits.insert(name.to_string(), json!({ "regression": reg, "monotone": monotone }));
    }
    run.write("scaling.csv", &csv)?;
    run.write_json("scaling_fit.json", &json!({ "schema_version": SCHEMA_VERSION, "log_fidelity_vs_photons": fits }))
}
