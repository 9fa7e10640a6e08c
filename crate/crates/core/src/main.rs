//! `lsol` command-line entry point.
//!
//! Every subcommand resolves its configuration from built-in defaults, an
//! optional JSON file (`--config`) and individual flags, in that order, and
//! writes `manifest.json` plus its outputs into `--out`.

use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use log::info;
use num_complex::Complex64 as C64;
use serde::{Deserialize, Serialize};
use serde_json::Value;

use lsol::integrator::{evolve, EvolveConfig, FieldModel, Probe, Scheme};
use lsol::io::{read_grid, resolve, write_csv, write_grid, Manifest};
use lsol::matter::{adiabatic_check, AdiabaticConfig};
use lsol::noise::composition_check;
use lsol::soliton::{
    adler_coefficient, embed_profile, find_free_soliton, free_running_frequency, locking_domain_scan, scan_grid, soliton_stability,
    Geometry, Outcome, RelaxConfig, SolitonProfile,
};
use lsol::steady::{bistability_map, branch_continuation, homogeneous_solutions, homogeneous_stability, BranchLabel, DEFAULT_NQ};
use lsol::{ComplexField, DimensionalParams, DimensionlessParams, Error, Frame, GridSpec, Result};

#[derive(Parser, Debug)]
#[command(name = "lsol", version, about = "Laser soliton analysis: steady states, stability, evolution, locking and noise checks")]
struct Cli {
    #[command(flatten)]
    common: Common,
    #[command(subcommand)]
    command: Command,
}

#[derive(Args, Debug, Clone)]
struct Common {
    /// JSON configuration; flags given on the command line take precedence
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Worker threads (falls back to LSOL_THREADS, then all cores)
    #[arg(long, global = true)]
    threads: Option<usize>,
    /// Output directory
    #[arg(long, global = true)]
    out: Option<PathBuf>,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Homogeneous states, their stability and the hysteresis curve
    Homog(HomogFlags),
    /// Linear stability of homogeneous states or of the free soliton
    Stability(StabilityFlags),
    /// Free soliton profile by Newton iteration
    Soliton(SolitonFlags),
    /// Time integration of the field equation
    Evolve(EvolveFlags),
    /// Locking map over detuning and holding intensity
    Lockscan(LockscanFlags),
    /// Monte-Carlo check of the composed noise moments
    NoiseTest(NoiseFlags),
    /// Full matter model against the closed field equation
    AdiabaticCheck(AdiabaticFlags),
}

impl Command {
    fn name(&self) -> &'static str {
        match self {
            Command::Homog(_) => "homog",
            Command::Stability(_) => "stability",
            Command::Soliton(_) => "soliton",
            Command::Evolve(_) => "evolve",
            Command::Lockscan(_) => "lockscan",
            Command::NoiseTest(_) => "noise-test",
            Command::AdiabaticCheck(_) => "adiabatic-check",
        }
    }
}

/// Gain-law flags shared by most subcommands.
#[derive(Args, Debug, Clone, Serialize)]
struct ModelFlags {
    #[arg(long)]
    g0: Option<f64>,
    #[arg(long)]
    a0: Option<f64>,
    #[arg(long)]
    b: Option<f64>,
}

#[derive(Args, Debug, Clone, Serialize)]
struct HomogFlags {
    #[command(flatten)]
    #[serde(flatten)]
    model: ModelFlags,
    #[arg(long)]
    theta: Option<f64>,
    /// Holding intensity I_in = E_in²
    #[arg(long)]
    iin: Option<f64>,
    /// Upper end of the hysteresis sweep; 0 skips it
    #[arg(long)]
    iin_max: Option<f64>,
    #[arg(long)]
    n_iin: Option<usize>,
}

#[derive(Args, Debug, Clone, Serialize)]
struct StabilityFlags {
    #[command(flatten)]
    #[serde(flatten)]
    model: ModelFlags,
    /// "homogeneous" or "soliton"
    #[arg(long)]
    target: Option<String>,
    #[arg(long)]
    theta: Option<f64>,
    #[arg(long)]
    iin: Option<f64>,
    #[arg(long)]
    q_max: Option<f64>,
    #[arg(long)]
    n_q: Option<usize>,
    /// "line" or "radial"
    #[arg(long)]
    geometry: Option<String>,
    #[arg(long)]
    n: Option<usize>,
    #[arg(long)]
    length: Option<f64>,
}

#[derive(Args, Debug, Clone, Serialize)]
struct SolitonFlags {
    #[command(flatten)]
    #[serde(flatten)]
    model: ModelFlags,
    #[arg(long)]
    geometry: Option<String>,
    #[arg(long)]
    n: Option<usize>,
    #[arg(long)]
    length: Option<f64>,
    /// Also run the linear stability and Adler coefficient
    #[arg(long)]
    stability: Option<bool>,
}

#[derive(Args, Debug, Clone, Serialize)]
struct EvolveFlags {
    #[command(flatten)]
    #[serde(flatten)]
    model: ModelFlags,
    #[arg(long)]
    theta: Option<f64>,
    #[arg(long)]
    e_in: Option<f64>,
    /// Transverse dimension, 1 or 2
    #[arg(long)]
    dim: Option<usize>,
    #[arg(long)]
    n: Option<usize>,
    #[arg(long)]
    length: Option<f64>,
    #[arg(long)]
    dt: Option<f64>,
    #[arg(long)]
    t_end: Option<f64>,
    /// "soliton", "uniform" or the path of an LSOL1 file
    #[arg(long)]
    initial: Option<String>,
    /// Amplitude of the uniform start
    #[arg(long)]
    amplitude: Option<f64>,
    #[arg(long)]
    noise: Option<bool>,
    #[arg(long)]
    s_a: Option<f64>,
    #[arg(long)]
    s_p: Option<f64>,
    /// Inverse saturation photon number; sets the noise strength
    #[arg(long)]
    beta: Option<f64>,
    #[arg(long)]
    observe_every: Option<f64>,
}

#[derive(Args, Debug, Clone, Serialize)]
struct LockscanFlags {
    #[command(flatten)]
    #[serde(flatten)]
    model: ModelFlags,
    #[arg(long)]
    n: Option<usize>,
    #[arg(long)]
    length: Option<f64>,
    #[arg(long)]
    n_theta: Option<usize>,
    #[arg(long)]
    n_i: Option<usize>,
    #[arg(long)]
    i_min: Option<f64>,
    #[arg(long)]
    i_max: Option<f64>,
    #[arg(long)]
    t_end: Option<f64>,
    #[arg(long)]
    dt: Option<f64>,
}

#[derive(Args, Debug, Clone, Serialize)]
struct NoiseFlags {
    #[command(flatten)]
    #[serde(flatten)]
    model: ModelFlags,
    #[arg(long)]
    s_a: Option<f64>,
    /// Defaults to s_a
    #[arg(long)]
    s_p: Option<f64>,
    /// Reduced intensity
    #[arg(long)]
    i: Option<f64>,
    /// Sample count; scientific notation is accepted
    #[arg(long)]
    samples: Option<f64>,
    /// Γ2/Γ1 = γ1/γ2
    #[arg(long)]
    hierarchy: Option<f64>,
}

#[derive(Args, Debug, Clone, Serialize)]
struct AdiabaticFlags {
    #[command(flatten)]
    #[serde(flatten)]
    model: ModelFlags,
    /// Comma-separated κ/min(rate) values
    #[arg(long, value_delimiter = ',')]
    ratios: Option<Vec<f64>>,
    #[arg(long)]
    n: Option<usize>,
    #[arg(long)]
    initial_intensity: Option<f64>,
    #[arg(long)]
    t_end_kappa: Option<f64>,
}

/// Declares a config struct with the run-level keys every command shares.
macro_rules! run_config {
    ($name:ident { $($field:ident : $ty:ty = $default:expr),* $(,)? }) => {
        #[derive(Clone, Debug, Serialize, Deserialize)]
        #[serde(deny_unknown_fields, default)]
        struct $name {
            out: PathBuf,
            seed: u64,
            threads: Option<usize>,
            $($field: $ty,)*
        }

        impl Default for $name {
            fn default() -> Self {
                $name { out: PathBuf::from("lsol-out"), seed: 0, threads: None, $($field: $default,)* }
            }
        }

        impl RunLevel for $name {
            fn out(&self) -> &Path {
                &self.out
            }
            fn seed(&self) -> u64 {
                self.seed
            }
            fn threads(&self) -> Option<usize> {
                self.threads
            }
        }
    };
}

trait RunLevel {
    fn out(&self) -> &Path;
    fn seed(&self) -> u64;
    fn threads(&self) -> Option<usize>;
}

run_config!(HomogConfig { g0: f64 = 2.08, a0: f64 = 2.0, b: f64 = 10.0, theta: f64 = 0.0, iin: f64 = 0.0, iin_max: f64 = 0.0, n_iin: usize = 400 });

run_config!(StabilityConfig {
    g0: f64 = 2.08,
    a0: f64 = 2.0,
    b: f64 = 10.0,
    target: String = "homogeneous".into(),
    theta: f64 = 0.0,
    iin: f64 = 0.0,
    q_max: Option<f64> = None,
    n_q: usize = DEFAULT_NQ,
    geometry: String = "line".into(),
    n: usize = 256,
    length: f64 = 64.0,
});

run_config!(SolitonConfig { g0: f64 = 2.08, a0: f64 = 2.0, b: f64 = 10.0, geometry: String = "line".into(), n: usize = 256, length: f64 = 64.0, stability: bool = true });

run_config!(EvolveRunConfig {
    g0: f64 = 2.08,
    a0: f64 = 2.0,
    b: f64 = 10.0,
    theta: f64 = 0.0,
    e_in: f64 = 0.0,
    dim: usize = 1,
    n: usize = 256,
    length: f64 = 64.0,
    dt: f64 = 0.05,
    t_end: f64 = 100.0,
    initial: String = "soliton".into(),
    amplitude: f64 = 1.0,
    noise: bool = false,
    s_a: f64 = 0.0,
    s_p: f64 = 0.0,
    adiabatic_ratio: f64 = 0.01,
    hierarchy: f64 = 1e-3,
    beta: f64 = 1e-6,
    observe_every: f64 = 1.0,
});

run_config!(LockscanConfig {
    g0: f64 = 2.08,
    a0: f64 = 2.0,
    b: f64 = 10.0,
    n: usize = 256,
    length: f64 = 64.0,
    n_theta: usize = 8,
    n_i: usize = 8,
    i_min: f64 = 1e-7,
    i_max: f64 = 1e-4,
    t_end: f64 = 10000.0,
    dt: f64 = 0.05,
    relax: RelaxConfig = RelaxConfig::default(),
});

run_config!(NoiseConfig { g0: f64 = 2.08, a0: f64 = 2.0, b: f64 = 10.0, s_a: f64 = 0.0, s_p: Option<f64> = None, i: f64 = 1.0, samples: f64 = 1e6, hierarchy: f64 = 1e-9 });

run_config!(AdiabaticRunConfig { g0: f64 = 2.08, a0: f64 = 2.0, b: f64 = 10.0, ratios: Vec<f64> = vec![0.1, 0.03, 0.01], check: AdiabaticConfig = AdiabaticConfig::default() });

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    // clap exits with 2 on usage errors and 0 for --help/--version
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("lsol: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}

fn flag_value<T: Serialize>(common: &Common, flags: &T) -> Value {
    let mut v = serde_json::to_value(flags).expect("flags serialize");
    if let Value::Object(m) = &mut v {
        if let Some(o) = &common.out {
            m.insert("out".into(), Value::String(o.display().to_string()));
        }
        if let Some(s) = common.seed {
            m.insert("seed".into(), s.into());
        }
        if let Some(t) = common.threads {
            m.insert("threads".into(), t.into());
        }
    }
    v
}

fn run(cli: Cli) -> Result<()> {
    let c = &cli.common;
    let file = c.config.as_deref();
    let name = cli.command.name();
    match &cli.command {
        Command::Homog(f) => with_run(name, resolve::<HomogConfig>(file, flag_value(c, f))?, homog),
        Command::Stability(f) => with_run(name, resolve::<StabilityConfig>(file, flag_value(c, f))?, stability),
        Command::Soliton(f) => with_run(name, resolve::<SolitonConfig>(file, flag_value(c, f))?, soliton),
        Command::Evolve(f) => with_run(name, resolve::<EvolveRunConfig>(file, flag_value(c, f))?, evolve_cmd),
        Command::Lockscan(f) => with_run(name, resolve::<LockscanConfig>(file, flag_value(c, f))?, lockscan),
        Command::NoiseTest(f) => with_run(name, resolve::<NoiseConfig>(file, flag_value(c, f))?, noise_test),
        Command::AdiabaticCheck(f) => {
            // the sweep settings live in a nested block; lift the flat flags into it
            let mut v = flag_value(c, f);
            if let Value::Object(m) = &mut v {
                let mut check = serde_json::Map::new();
                for k in ["n", "initial_intensity", "t_end_kappa"] {
                    if let Some(x) = m.remove(k) {
                        check.insert(k.into(), x);
                    }
                }
                m.insert("check".into(), Value::Object(check));
            }
            with_run(name, resolve::<AdiabaticRunConfig>(file, v)?, adiabatic)
        }
    }
}

fn thread_budget(cfg: Option<usize>) -> Result<usize> {
    let n = match cfg {
        Some(n) => n,
        None => match std::env::var("LSOL_THREADS") {
            Ok(s) => s.trim().parse().map_err(|_| Error::Config(format!("LSOL_THREADS must be a positive integer, got '{s}'")))?,
            Err(_) => std::thread::available_parallelism().map(|n| n.get()).unwrap_or(1),
        },
    };
    if n == 0 {
        return Err(Error::Config("thread budget must be at least 1".into()));
    }
    Ok(n)
}

/// Sets up the thread pool and output directory, runs `body` and writes the
/// manifest (also after a numerical failure, so the attempt is on record).
fn with_run<C, F>(command: &str, cfg: C, body: F) -> Result<()>
where
    C: Serialize + RunLevel,
    F: FnOnce(&C, &mut Manifest) -> Result<()>,
{
    let threads = thread_budget(cfg.threads())?;
    rayon::ThreadPoolBuilder::new().num_threads(threads).build_global().map_err(|e| Error::Config(e.to_string()))?;
    let out = cfg.out().to_path_buf();
    std::fs::create_dir_all(&out).map_err(|e| Error::Config(format!("{}: {e}", out.display())))?;
    let mut manifest = Manifest::new(command, serde_json::to_value(&cfg).expect("config serializes"), Some(cfg.seed()), threads);
    let res = body(&cfg, &mut manifest);
    if let Err(e) = &res {
        manifest.warnings.push(format!("failed: {e}"));
    }
    manifest.write(&out)?;
    res
}

fn reduced(g0: f64, a0: f64, b: f64, theta: f64, e_in: f64) -> Result<DimensionlessParams> {
    DimensionlessParams::new(g0, a0, b, theta, e_in)
}

fn geometry(s: &str) -> Result<Geometry> {
    match s {
        "line" => Ok(Geometry::Line),
        "radial" => Ok(Geometry::Radial),
        _ => Err(Error::Config(format!("geometry must be 'line' or 'radial', got '{s}'"))),
    }
}

fn label_code(l: BranchLabel) -> f64 {
    match l {
        BranchLabel::Inphase => 0.0,
        BranchLabel::Antiphase => 1.0,
        BranchLabel::Free => 2.0,
    }
}

fn write_json<T: Serialize>(path: &Path, v: &T) -> Result<()> {
    std::fs::write(path, serde_json::to_string_pretty(v).expect("serializes") + "\n")?;
    Ok(())
}

fn output(m: &mut Manifest, dir: &Path, name: &str) -> PathBuf {
    m.outputs.push(name.to_string());
    dir.join(name)
}

fn homog(cfg: &HomogConfig, m: &mut Manifest) -> Result<()> {
    let p = reduced(cfg.g0, cfg.a0, cfg.b, cfg.theta, cfg.iin.max(0.0).sqrt())?;
    let states = homogeneous_solutions(cfg.iin, &p)?;
    let path = output(m, &cfg.out, "roots.csv");
    write_csv(
        &path,
        &["I_in [reduced]", "intensity [reduced]", "phase [rad]", "label [0 inphase|1 antiphase|2 free]", "stable [0|1]", "max_growth [1/reduced time]"],
        states.iter().map(|s| [s.i_in, s.intensity, s.phi, label_code(s.label), s.stable as u8 as f64, s.max_growth]),
    )?;
    for s in &states {
        println!("I = {:.6}  phase = {:+.4}  {:?}  {}", s.intensity, s.phi, s.label, if s.stable { "stable" } else { "unstable" });
    }
    if cfg.iin_max > 0.0 {
        let n = cfg.n_iin.max(2);
        let grid: Vec<f64> = (0..n).map(|k| cfg.iin_max * k as f64 / (n - 1) as f64).collect();
        let h = branch_continuation(&grid, &p)?;
        let rows = h.branches.iter().flat_map(|b| {
            b.points.iter().map(move |s| [b.id as f64, s.i_in, s.intensity, s.phi, label_code(s.label), s.stable as u8 as f64])
        });
        write_csv(
            &output(m, &cfg.out, "branches.csv"),
            &["branch", "I_in [reduced]", "intensity [reduced]", "phase [rad]", "label [0 inphase|1 antiphase|2 free]", "stable [0|1]"],
            rows,
        )?;
        write_csv(&output(m, &cfg.out, "folds.csv"), &["I_in [reduced]", "intensity [reduced]"], h.folds.iter().map(|f| [f.i_in, f.intensity]))?;
        write_csv(&output(m, &cfg.out, "bistable.csv"), &["I_in_lo [reduced]", "I_in_hi [reduced]"], h.bistable.iter().map(|(a, b)| [*a, *b]))?;
        println!("{} branches, {} folds, {} bistable intervals", h.branches.len(), h.folds.len(), h.bistable.len());
    }
    Ok(())
}

fn stability(cfg: &StabilityConfig, m: &mut Manifest) -> Result<()> {
    match cfg.target.as_str() {
        "homogeneous" => {
            let p = reduced(cfg.g0, cfg.a0, cfg.b, cfg.theta, cfg.iin.max(0.0).sqrt())?;
            let states = homogeneous_solutions(cfg.iin, &p)?;
            let mut rows = Vec::new();
            for (k, s) in states.iter().enumerate() {
                let d = homogeneous_stability(s, &p, cfg.q_max, cfg.n_q);
                println!("state {k}: I = {:.6}, max growth {:+.3e}", s.intensity, d.max_increment);
                for (q, l) in d.q.iter().zip(&d.lambda) {
                    rows.push([k as f64, s.intensity, *q, l[0].re, l[0].im, l[1].re, l[1].im]);
                }
            }
            write_csv(
                &output(m, &cfg.out, "dispersion.csv"),
                &[
                    "state",
                    "intensity [reduced]",
                    "q [1/reduced length]",
                    "re_lambda1 [1/reduced time]",
                    "im_lambda1 [1/reduced time]",
                    "re_lambda2 [1/reduced time]",
                    "im_lambda2 [1/reduced time]",
                ],
                rows,
            )
        }
        "soliton" => {
            let p = reduced(cfg.g0, cfg.a0, cfg.b, 0.0, 0.0)?;
            let s = find_free_soliton(&p, geometry(&cfg.geometry)?, &GridSpec::line(cfg.n, cfg.length)?, None)?;
            let r = soliton_stability(&s)?;
            write_modes(&output(m, &cfg.out, "modes.csv"), &r.leading)?;
            write_json(&output(m, &cfg.out, "stability.json"), &r)?;
            println!("max growth {:+.3e}: {}", r.max_growth, if r.stable { "stable" } else { "unstable" });
            Ok(())
        }
        t => Err(Error::Config(format!("target must be 'homogeneous' or 'soliton', got '{t}'"))),
    }
}

fn write_modes(path: &Path, modes: &[lsol::soliton::Mode]) -> Result<()> {
    let block = |b: &str| -> f64 {
        match b {
            "even" => 0.0,
            "odd" => 1.0,
            _ => b.trim_start_matches("m=").parse().unwrap_or(f64::NAN),
        }
    };
    let neutral = |n: Option<lsol::soliton::NeutralKind>| match n {
        None => 0.0,
        Some(lsol::soliton::NeutralKind::Phase) => 1.0,
        Some(lsol::soliton::NeutralKind::Translation) => 2.0,
    };
    write_csv(
        path,
        &[
            "re_lambda [1/reduced time]",
            "im_lambda [1/reduced time]",
            "block [0 even|1 odd|m on a disc]",
            "residual",
            "neutral [0 none|1 phase|2 translation]",
            "overlap",
        ],
        modes.iter().map(|md| [md.lambda.re, md.lambda.im, block(&md.block), md.residual, neutral(md.neutral), md.overlap]),
    )
}

#[derive(Serialize)]
struct SolitonSummary {
    geometry: Geometry,
    nu_s: f64,
    omega: f64,
    peak_intensity: f64,
    background_amplitude: f64,
    residual: f64,
    newton_steps: usize,
    stable: Option<bool>,
    max_growth: Option<f64>,
    adler: Option<f64>,
    free_running_frequency: Option<f64>,
}

fn soliton(cfg: &SolitonConfig, m: &mut Manifest) -> Result<()> {
    let p = reduced(cfg.g0, cfg.a0, cfg.b, 0.0, 0.0)?;
    let geo = geometry(&cfg.geometry)?;
    let grid = GridSpec::line(cfg.n, cfg.length)?;
    let s = find_free_soliton(&p, geo, &grid, None)?;
    info!("converged: nu_s = {}, residual {:e}", s.nu_s, s.residual);
    write_profile(&output(m, &cfg.out, "profile.csv"), &s)?;
    write_grid(&output(m, &cfg.out, "profile.lsol"), &s.field, "A", 0.0)?;
    let (mut stable, mut growth, mut adler, mut nu_run) = (None, None, None, None);
    if cfg.stability {
        let r = soliton_stability(&s)?;
        write_modes(&output(m, &cfg.out, "modes.csv"), &r.leading)?;
        stable = Some(r.stable);
        growth = Some(r.max_growth);
        adler = Some(adler_coefficient(&s)?);
        if geo == Geometry::Line {
            nu_run = Some(free_running_frequency(&s, &grid, 0.05)?);
        }
    }
    let summary = SolitonSummary {
        geometry: geo,
        nu_s: s.nu_s,
        omega: s.omega(),
        peak_intensity: s.peak_intensity(),
        background_amplitude: s.background_amplitude,
        residual: s.residual,
        newton_steps: s.residual_history.len().saturating_sub(1),
        stable,
        max_growth: growth,
        adler,
        free_running_frequency: nu_run,
    };
    write_json(&output(m, &cfg.out, "summary.json"), &summary)?;
    println!("nu_s = {:.10}  peak I = {:.6}  residual {:.2e}", s.nu_s, s.peak_intensity(), s.residual);
    if let Some(st) = stable {
        println!("{}", if st { "stable" } else { "unstable" });
    }
    Ok(())
}

fn write_profile(path: &Path, s: &SolitonProfile) -> Result<()> {
    let (xs, vals): (Vec<f64>, Vec<C64>) = match s.geometry {
        Geometry::Radial => s.radial_samples(),
        Geometry::Line => (s.field.grid.coords(0), s.field.values.clone()),
    };
    let x = if s.geometry == Geometry::Radial { "rho [reduced length]" } else { "x [reduced length]" };
    write_csv(
        path,
        &[x, "re_A [reduced]", "im_A [reduced]", "abs_A [reduced]", "arg_A [rad]"],
        xs.iter().zip(&vals).map(|(x, a)| [*x, a.re, a.im, a.norm(), a.arg()]),
    )
}

fn evolve_cmd(cfg: &EvolveRunConfig, m: &mut Manifest) -> Result<()> {
    let mut p = reduced(cfg.g0, cfg.a0, cfg.b, cfg.theta, cfg.e_in)?;
    let grid = match cfg.dim {
        1 => GridSpec::line(cfg.n, cfg.length)?,
        2 => GridSpec::square(cfg.n, cfg.length)?,
        d => return Err(Error::Config(format!("dim must be 1 or 2, got {d}"))),
    };
    let field = match cfg.initial.as_str() {
        "uniform" => ComplexField::from_fn(grid.clone(), Frame::Holding, |_, _| C64::new(cfg.amplitude, 0.0)),
        "soliton" => {
            let free = DimensionlessParams { theta: 0.0, e_in: 0.0, ..p.clone() };
            let (geo, line) = if cfg.dim == 1 { (Geometry::Line, grid.clone()) } else { (Geometry::Radial, GridSpec::line(cfg.n, cfg.length)?) };
            embed_profile(&find_free_soliton(&free, geo, &line, None)?, &grid)?
        }
        path => {
            let rec = read_grid(Path::new(path)).map_err(|e| Error::Config(format!("{path}: {e}")))?;
            if rec.field.frame != Frame::Holding {
                return Err(Error::Config(format!("{path}: expected a reduced-units field, found frame '{}'", rec.field.frame.tag())));
            }
            rec.field
        }
    };
    let mut ecfg = EvolveConfig::deterministic(cfg.dt, cfg.t_end);
    ecfg.observers = vec![(cfg.observe_every, Probe::Summary)];
    ecfg.seed = cfg.seed;
    let mut d = None;
    if cfg.noise {
        p.s_a = Some(cfg.s_a);
        p.s_p = Some(cfg.s_p);
        ecfg.noise = true;
        ecfg.scheme = Scheme::EulerMaruyamaSplit;
        if !(cfg.beta > 0.0 && cfg.beta.is_finite()) {
            return Err(Error::Config(format!("beta must be positive, got {}", cfg.beta)));
        }
        // β is the inverse saturation photon number and sets the noise level
        let mut base = DimensionalParams::adiabatic_family(&p, cfg.adiabatic_ratio, cfg.hierarchy)?;
        base.g *= cfg.beta.sqrt();
        d = Some(DimensionalParams::from_dimensionless(&p, &base)?);
    }
    let tr = evolve(&field, &ecfg, FieldModel::Reduced(p), d.as_ref())?;
    m.warnings.extend(tr.warnings.iter().cloned());
    write_grid(&output(m, &cfg.out, "final.lsol"), &tr.field, "E", tr.time)?;
    write_csv(
        &output(m, &cfg.out, "observers.csv"),
        &["t [reduced time]", "l2 [reduced]", "max_abs [reduced]", "centroid_x [reduced length]", "centroid_y [reduced length]", "tail_fraction"],
        tr.records.iter().map(|r| [r.time, r.l2, r.max_abs, r.centroid[0], r.centroid[1], r.tail]),
    )?;
    println!("t = {}  max|E| = {:.6}  steps {}", tr.time, tr.field.max_abs(), tr.steps);
    Ok(())
}

#[derive(Serialize)]
struct LockscanSummary {
    nu_s: f64,
    free_running_frequency: f64,
    adler: f64,
    min_locking: Option<(f64, f64)>,
    undecided: usize,
    /// Locked cells that fall inside a homogeneous bistability interval.
    locked_in_bistable: usize,
}

fn lockscan(cfg: &LockscanConfig, m: &mut Manifest) -> Result<()> {
    let p = reduced(cfg.g0, cfg.a0, cfg.b, 0.0, 0.0)?;
    let grid = GridSpec::line(cfg.n, cfg.length)?;
    let s = find_free_soliton(&p, Geometry::Line, &grid, None)?;
    let k = adler_coefficient(&s)?;
    let nu_run = free_running_frequency(&s, &grid, cfg.dt)?;
    let (thetas, i_ins) = scan_grid(nu_run, k, cfg.i_min, cfg.i_max, cfg.n_theta, cfg.n_i);
    let rcfg = RelaxConfig { t_end: cfg.t_end, dt: cfg.dt, ..cfg.relax.clone() };
    let scan = locking_domain_scan(&s, &thetas, &i_ins, &grid, &rcfg)?;
    write_csv(
        &output(m, &cfg.out, "verdicts.csv"),
        &[
            "theta [1/reduced time]",
            "I_in [reduced]",
            "outcome_code [-1 undecided|0 locked|1 beating|2 delocalized|3 extinguished|4 free]",
            "beat_frequency [1/reduced time]",
        ],
        scan.cells.iter().map(|c| [c.theta, c.i_in, Outcome::code(c.outcome) as f64, c.beat_frequency.unwrap_or(f64::NAN)]),
    )?;
    let mut bnd: Vec<[f64; 3]> = scan.lower_boundary.iter().map(|(t, i)| [*t, *i, 0.0]).collect();
    bnd.extend(scan.upper_boundary.iter().map(|(t, i)| [*t, *i, 1.0]));
    write_csv(&output(m, &cfg.out, "boundary.csv"), &["theta [1/reduced time]", "I_in [reduced]", "edge [0 lower|1 upper]"], bnd)?;

    let maps = bistability_map(&thetas, cfg.i_max, &p)?;
    let locked_in_bistable = scan
        .cells
        .iter()
        .filter(|c| c.outcome == Some(Outcome::Locked))
        .filter(|c| maps.iter().find(|h| h.theta == c.theta).is_some_and(|h| h.is_bistable(c.i_in)))
        .count();
    let summary = LockscanSummary { nu_s: s.nu_s, free_running_frequency: nu_run, adler: k, min_locking: scan.min_locking, undecided: scan.undecided, locked_in_bistable };
    write_json(&output(m, &cfg.out, "summary.json"), &summary)?;
    match scan.min_locking {
        Some((t, i)) => println!("minimal locking I_in = {i:.3e} at theta = {t:.6}"),
        None => println!("no locked cell"),
    }
    println!("{} undecided cells, {} locked cells inside bistability", scan.undecided, locked_in_bistable);
    Ok(())
}

fn noise_test(cfg: &NoiseConfig, m: &mut Manifest) -> Result<()> {
    if !(cfg.samples >= 2.0 && cfg.samples.fract() == 0.0 && cfg.samples <= 1e12) {
        return Err(Error::Config(format!("samples must be an integer >= 2, got {}", cfg.samples)));
    }
    let mut p = reduced(cfg.g0, cfg.a0, cfg.b, 0.0, 0.0)?;
    p.s_a = Some(cfg.s_a);
    p.s_p = Some(cfg.s_p.unwrap_or(cfg.s_a));
    p.validate()?;
    let c = composition_check(&p, cfg.i, cfg.hierarchy, cfg.samples as usize, cfg.seed)?;
    let rows = [
        [0.0, c.closed.phi_phi.re, c.active.square.value.re, c.active.square.std_err.re, c.z_scores[0]],
        [1.0, c.closed.phi_phi.im, c.active.square.value.im, c.active.square.std_err.im, c.z_scores[1]],
        [2.0, c.closed.phi_abs, c.active.abs.value, c.active.abs.std_err, c.z_scores[2]],
        [3.0, c.closed.phip_phip.re, c.passive.square.value.re, c.passive.square.std_err.re, c.z_scores[3]],
        [4.0, c.closed.phip_phip.im, c.passive.square.value.im, c.passive.square.std_err.im, c.z_scores[4]],
        [5.0, c.closed.phip_abs, c.passive.abs.value, c.passive.abs.std_err, c.z_scores[5]],
    ];
    write_csv(
        &output(m, &cfg.out, "moments.csv"),
        &[
            "moment [0 re<Phi^2>|1 im<Phi^2>|2 <|Phi|^2>|3 re<Phip^2>|4 im<Phip^2>|5 <|Phip|^2>]",
            "closed [physical moment]",
            "estimate [physical moment]",
            "std_err [physical moment]",
            "z",
        ],
        rows,
    )?;
    write_json(&output(m, &cfg.out, "composition.json"), &c)?;
    let names = ["re<Phi^2>", "im<Phi^2>", "<|Phi|^2>", "re<Phip^2>", "im<Phip^2>", "<|Phip|^2>"];
    for (n, r) in names.iter().zip(&rows) {
        println!("{n:>11}  closed {:+.6e}  estimate {:+.6e} ± {:.2e}  z = {:.2}", r[1], r[2], r[3], r[4]);
    }
    println!("max z = {:.2} ({})", c.max_z(), if c.max_z() <= 5.0 { "within 5 SE" } else { "outside 5 SE" });
    Ok(())
}

fn adiabatic(cfg: &AdiabaticRunConfig, m: &mut Manifest) -> Result<()> {
    let p = reduced(cfg.g0, cfg.a0, cfg.b, 0.0, 0.0)?;
    let pts = adiabatic_check(&p, &cfg.ratios, &cfg.check)?;
    write_csv(
        &output(m, &cfg.out, "adiabatic.csv"),
        &[
            "ratio",
            "hierarchy",
            "intensity_full [reduced]",
            "intensity_closed [reduced]",
            "steady_discrepancy",
            "trajectory_discrepancy",
            "t_end [s]",
        ],
        pts.iter().map(|a| [a.ratio, a.hierarchy, a.intensity_full, a.intensity_closed, a.steady_discrepancy, a.trajectory_discrepancy, a.t_end]),
    )?;
    for a in &pts {
        println!("ratio {:.0e}: I_full = {:.6}  I_closed = {:.6}  discrepancy {:.3e}", a.ratio, a.intensity_full, a.intensity_closed, a.steady_discrepancy);
    }
    Ok(())
}
