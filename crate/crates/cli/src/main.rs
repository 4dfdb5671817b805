use clap::{Args, Parser, Subcommand};
use orbindex::dynamics::integrate_orbit;
use orbindex::indices::analyze_circular_orbit;
use orbindex::model::Model;
use orbindex::morse_index::{duistermaat_check, verify_index_theorem};
use orbindex::orbits::{cylinder_derivatives, find_circular_orbit, scan_energy, scan_to_csv};
use orbindex::scenario::{build_checked, run_scenario, selftest, ScenarioConfig, VERSION};
use orbindex::Error;
use serde::Serialize;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

const PASS: u8 = 0;
const VALIDATION: u8 = 2;
const NUMERICAL: u8 = 3;
const CONFIG: u8 = 4;

#[derive(Parser)]
#[command(name = "orbindex", version, about = "Index checks for circular orbits of a planar magnetic system")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct Common {
    /// TOML config; defaults are used for missing keys.
    #[arg(long, short)]
    config: Option<PathBuf>,
    /// Overrides output_dir from the config.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct Selected {
    #[command(flatten)]
    common: Common,
    /// fstar or f2
    #[arg(long, default_value = "fstar")]
    profile: String,
}

#[derive(Subcommand)]
enum Command {
    Profile {
        #[command(subcommand)]
        cmd: ProfileCmd,
    },
    Orbit {
        #[command(subcommand)]
        cmd: OrbitCmd,
    },
    Cylinder {
        #[command(subcommand)]
        cmd: CylinderCmd,
    },
    Indices {
        #[command(subcommand)]
        cmd: IndicesCmd,
    },
    Scenario {
        #[command(subcommand)]
        cmd: ScenarioCmd,
    },
    /// Randomized spectral-flow suite and index calibration.
    Selftest {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        trials: Option<usize>,
        #[arg(long)]
        seed: Option<u64>,
        /// Run the calibration with the orientation reversed; must fail.
        #[arg(long)]
        flip_sign: bool,
    },
}

#[derive(Subcommand)]
enum ProfileCmd {
    /// Build a profile and check its constraints.
    Validate(Selected),
}

#[derive(Subcommand)]
enum OrbitCmd {
    /// Circular orbit at energy k, with a one-period trajectory CSV.
    Find(Selected),
}

#[derive(Subcommand)]
enum CylinderCmd {
    /// T(k) along the circular branch as CSV.
    Scan(Selected),
}

#[derive(Subcommand)]
enum IndicesCmd {
    /// Monodromy, Conley–Zehnder data and Morse indices of one orbit.
    Run(Selected),
}

#[derive(Subcommand)]
enum ScenarioCmd {
    /// Both scenario orbits through every check.
    #[command(name = "paper-s2")]
    PaperS2(Common),
}

#[derive(Debug, thiserror::Error)]
enum CliError {
    #[error("config: {0}")]
    Config(String),
    #[error("io: {0}")]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Core(#[from] Error),
    #[error("failed checks: {0}")]
    Failed(String),
}

impl CliError {
    fn code(&self) -> u8 {
        match self {
            CliError::Config(_) => CONFIG,
            CliError::Io(_) => CONFIG,
            CliError::Core(Error::InvalidSpec(_)) => CONFIG,
            CliError::Core(Error::ValidationFailed(_) | Error::InfeasibleSpec(_)) => VALIDATION,
            CliError::Core(_) => NUMERICAL,
            CliError::Failed(_) => VALIDATION,
        }
    }
}

type CliResult<T> = Result<T, CliError>;

/// Every JSON document carries the tool version and the effective config.
#[derive(Serialize)]
struct Envelope<'a, T: Serialize> {
    tool: &'static str,
    version: &'static str,
    command: &'static str,
    config: &'a ScenarioConfig,
    result: T,
}

fn load(common: &Common) -> CliResult<ScenarioConfig> {
    let mut cfg = match &common.config {
        Some(path) => {
            let text = std::fs::read_to_string(path).map_err(|e| CliError::Config(format!("{}: {e}", path.display())))?;
            toml::from_str(&text).map_err(|e| CliError::Config(format!("{}: {e}", path.display())))?
        }
        None => ScenarioConfig::default(),
    };
    if let Some(out) = &common.out {
        cfg.output_dir = Some(out.to_string_lossy().into_owned());
    }
    cfg.check().map_err(|e| CliError::Config(e.to_string()))?;
    Ok(cfg)
}

fn to_json<T: Serialize>(v: &T) -> String {
    let mut s = serde_json::to_string_pretty(v).expect("report serializes");
    s.push('\n');
    s
}

/// Prints JSON to stdout and writes it, with any CSV side files, to the
/// output directory when one is configured.
fn emit(cfg: &ScenarioConfig, name: &str, json: &str, csv: &[(String, String)]) -> CliResult<()> {
    print!("{json}");
    if let Some(dir) = &cfg.output_dir {
        let dir = Path::new(dir);
        std::fs::create_dir_all(dir)?;
        std::fs::write(dir.join(format!("{name}.json")), json)?;
        for (file, body) in csv {
            std::fs::write(dir.join(file), body)?;
        }
    }
    Ok(())
}

fn envelope<'a, T: Serialize>(command: &'static str, cfg: &'a ScenarioConfig, result: T) -> Envelope<'a, T> {
    Envelope { tool: "orbindex", version: VERSION, command, config: cfg, result }
}

fn profile_validate(sel: &Selected) -> CliResult<()> {
    let cfg = load(&sel.common)?;
    let (pc, claim) = cfg.profile(&sel.profile)?;
    // checked against the configured anchors and the fixed derivative data
    let (p, rep) = build_checked(&sel.profile, pc, claim)?;
    let json = to_json(&envelope("profile validate", &cfg, &rep));
    emit(&cfg, &format!("profile_{}", sel.profile), &json, &[(format!("profile_{}.csv", sel.profile), p.to_csv())])?;
    if !rep.pass {
        let names: Vec<&str> = rep.failures().map(|c| c.name.as_str()).collect();
        return Err(Error::ValidationFailed(names.join(", ")).into());
    }
    Ok(())
}

fn model_for(cfg: &ScenarioConfig, name: &str) -> CliResult<(Model, f64)> {
    let (pc, claim) = cfg.profile(name)?;
    let (p, rep) = build_checked(name, pc, claim)?;
    if !rep.pass {
        let names: Vec<&str> = rep.failures().map(|c| c.name.as_str()).collect();
        return Err(Error::ValidationFailed(format!("{name}: {}", names.join(", "))).into());
    }
    Ok((Model::new(p), pc.seed_radius))
}

#[derive(Serialize)]
struct OrbitOut {
    orbit: orbindex::orbits::CircularOrbit,
    derivatives: orbindex::orbits::CylinderDerivatives,
    chi: i32,
    steps: usize,
    energy_drift: f64,
    momentum_drift: f64,
    closing_error: f64,
}

fn orbit_find(sel: &Selected) -> CliResult<()> {
    let cfg = load(&sel.common)?;
    let (m, seed) = model_for(&cfg, &sel.profile)?;
    let orbit = find_circular_orbit(&m, cfg.k, seed)?;
    let derivatives = cylinder_derivatives(&m, &orbit)?;
    let chi = orbindex::orbits::correction_term(derivatives.tprime)?;
    let traj = integrate_orbit(&m, &orbit.state(), orbit.period, cfg.steps_per_period)?;
    let end = traj.last();
    let start = orbit.state();
    let closing_error = ((end.r - start.r).powi(2)
        + (end.theta - start.theta - 2.0 * std::f64::consts::PI).powi(2)
        + (end.rdot - start.rdot).powi(2)
        + (end.thetadot - start.thetadot).powi(2))
    .sqrt();
    let out = OrbitOut {
        steps: cfg.steps_per_period,
        energy_drift: traj.energy_drift,
        momentum_drift: traj.momentum_drift,
        closing_error,
        chi,
        derivatives,
        orbit,
    };
    let json = to_json(&envelope("orbit find", &cfg, &out));
    emit(&cfg, &format!("orbit_{}", sel.profile), &json, &[(format!("trajectory_{}.csv", sel.profile), traj.to_csv(&m))])
}

fn cylinder_scan(sel: &Selected) -> CliResult<()> {
    let mut cfg = load(&sel.common)?;
    cfg.scan.profile = sel.profile.clone();
    let (m, seed) = model_for(&cfg, &sel.profile)?;
    let rows = scan_energy(&m, (cfg.scan.k_min, cfg.scan.k_max), cfg.scan.samples, (cfg.k, seed));
    let csv = scan_to_csv(&rows);
    print!("{csv}");
    if let Some(dir) = &cfg.output_dir {
        let dir = Path::new(dir);
        std::fs::create_dir_all(dir)?;
        std::fs::write(dir.join(format!("scan_{}.csv", sel.profile)), &csv)?;
        std::fs::write(dir.join(format!("scan_{}.json", sel.profile)), to_json(&envelope("cylinder scan", &cfg, &rows)))?;
    }
    Ok(())
}

#[derive(Serialize)]
struct IndicesOut {
    indices: orbindex::indices::OrbitIndices,
    morse: orbindex::morse_index::IndexTheoremReport,
    duistermaat: orbindex::morse_index::DuistermaatReport,
}

fn indices_run(sel: &Selected) -> CliResult<()> {
    let cfg = load(&sel.common)?;
    let (m, seed) = model_for(&cfg, &sel.profile)?;
    let orbit = find_circular_orbit(&m, cfg.k, seed)?;
    let indices = analyze_circular_orbit(&m, &orbit, cfg.steps_per_period)?;
    let morse = verify_index_theorem(&m, &orbit, cfg.n)?;
    let duistermaat = duistermaat_check(&morse, &indices);
    let ok = morse.holds && duistermaat.holds && duistermaat.free_matches_rab;
    let out = IndicesOut { indices, morse, duistermaat };
    let json = to_json(&envelope("indices run", &cfg, &out));
    emit(&cfg, &format!("indices_{}", sel.profile), &json, &[])?;
    if !ok {
        return Err(CliError::Failed("index theorem or Duistermaat identity".into()));
    }
    Ok(())
}

fn scenario(common: &Common) -> CliResult<()> {
    let cfg = load(common)?;
    let bundle = run_scenario(&cfg)?;
    let json = to_json(&bundle);
    let mut csv = vec![];
    for o in &bundle.orbits {
        let (pc, _) = cfg.profile(&o.name)?;
        let (m, _) = model_for(&cfg, &o.name)?;
        let rows = scan_energy(&m, (cfg.scan.k_min, cfg.scan.k_max), cfg.scan.samples, (cfg.k, pc.seed_radius));
        csv.push((format!("scan_{}.csv", o.name), scan_to_csv(&rows)));
    }
    emit(&cfg, "scenario", &json, &csv)?;
    if !bundle.pass {
        return Err(CliError::Failed(bundle.failed[0].clone()));
    }
    Ok(())
}

fn run_selftest(common: &Common, trials: Option<usize>, seed: Option<u64>, flip: bool) -> CliResult<()> {
    let cfg = load(common)?;
    let rep = selftest(trials.unwrap_or(cfg.spectral_trials), seed.unwrap_or(cfg.seed), flip);
    let json = to_json(&envelope("selftest", &cfg, &rep));
    emit(&cfg, "selftest", &json, &[])?;
    if !rep.calibration.pass {
        let bad: Vec<&str> = rep.calibration.cases.iter().filter(|c| !c.pass).map(|c| c.path.as_str()).collect();
        return Err(CliError::Failed(format!("calibration: {}", bad.join(", "))));
    }
    if !rep.spectral.pass {
        return Err(CliError::Failed(format!("spectral flow: {} of {} trials", rep.spectral.failures.len(), rep.spectral.trials)));
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let res = match &cli.command {
        Command::Profile { cmd: ProfileCmd::Validate(s) } => profile_validate(s),
        Command::Orbit { cmd: OrbitCmd::Find(s) } => orbit_find(s),
        Command::Cylinder { cmd: CylinderCmd::Scan(s) } => cylinder_scan(s),
        Command::Indices { cmd: IndicesCmd::Run(s) } => indices_run(s),
        Command::Scenario { cmd: ScenarioCmd::PaperS2(c) } => scenario(c),
        Command::Selftest { common, trials, seed, flip_sign } => run_selftest(common, *trials, *seed, *flip_sign),
    };
    match res {
        Ok(()) => ExitCode::from(PASS),
        Err(e) => {
            eprintln!("orbindex: {e}");
            ExitCode::from(e.code())
        }
    }
}
