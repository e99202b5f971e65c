//! `levitomo`: simulate, detect and reconstruct levitated-particle motion.

#![allow(clippy::neg_cmp_op_on_partial_ord)]

mod error;
mod plots;
mod run;
mod settings;
mod stages;

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use levitomo::{derive, Config, Scheme, StateKind};

use error::CliError;
use run::{Manifest, Run};
use settings::{split_config_text, RunSettings};
use stages::Context;

#[derive(Parser)]
#[command(name = "levitomo", version, about = "Levitated-nanoparticle homodyne tomography pipeline")]
struct Cli {
    #[command(flatten)]
    common: Common,
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct Common {
    /// Key-value config file; missing keys keep the reference values.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    #[arg(long, global = true, default_value_t = 1)]
    seed: u64,
    #[arg(long, global = true, default_value = "out")]
    out: PathBuf,
    /// Override a config or run setting, `key=value`. Repeatable.
    #[arg(long = "set", global = true, value_name = "K=V")]
    overrides: Vec<String>,
    #[arg(long, global = true, value_enum, default_value_t = StateArg::Thermal)]
    state: StateArg,
    #[arg(long, global = true, value_enum, default_value_t = SchemeArg::Both)]
    scheme: SchemeArg,
    /// Worker thread cap; results do not depend on it.
    #[arg(long, global = true)]
    threads: Option<usize>,
}

#[derive(Clone, Copy, ValueEnum)]
enum StateArg {
    Thermal,
    Coherent,
    Fock1,
}

#[derive(Clone, Copy, ValueEnum)]
enum SchemeArg {
    Ch,
    Cbh,
    Both,
}

#[derive(Subcommand)]
enum Command {
    /// Derived trap and coupling quantities.
    Derive,
    /// Simulate a position trajectory.
    Simulate,
    /// Photon counts and calibrated positions from a trajectory.
    Detect {
        /// Trajectory CSV; defaults to `<out>/trajectory.csv`.
        #[arg(long)]
        input: Option<PathBuf>,
    },
    /// Power spectral density and Lorentzian fit of position records.
    Psd {
        /// Position CSV; defaults to `<out>/positions_<scheme>.csv` per scheme.
        #[arg(long)]
        input: Option<PathBuf>,
    },
    /// Phase-binned marginals and Wigner reconstruction.
    Tomo {
        /// Position CSV; defaults to `<out>/positions_<scheme>.csv`.
        #[arg(long)]
        input: Option<PathBuf>,
    },
    /// Decoherence time against superposition size.
    Decoherence {
        #[arg(long)]
        zmin: Option<f64>,
        #[arg(long)]
        zmax: Option<f64>,
        #[arg(long)]
        npoints: Option<usize>,
    },
    /// All stages end to end.
    Pipeline,
}

impl Command {
    fn name(&self) -> &'static str {
        match self {
            Command::Derive => "derive",
            Command::Simulate => "simulate",
            Command::Detect { .. } => "detect",
            Command::Psd { .. } => "psd",
            Command::Tomo { .. } => "tomo",
            Command::Decoherence { .. } => "decoherence",
            Command::Pipeline => "pipeline",
        }
    }
}

fn load_config(common: &Common) -> Result<(Config, RunSettings, String), CliError> {
    let text = match &common.config {
        Some(p) => std::fs::read_to_string(p)
            .map_err(|e| CliError::Usage(format!("cannot read config file {}: {e}", p.display())))?,
        None => String::new(),
    };
    let (physical, mut settings) = split_config_text(&text)?;
    let mut cfg = Config::parse(&physical)?;
    for o in &common.overrides {
        let (k, v) = o
            .split_once('=')
            .ok_or_else(|| CliError::Usage(format!("override `{o}` is not of the form key=value")))?;
        if RunSettings::is_key(k.trim()) {
            settings.set(k.trim(), v)?;
        } else {
            cfg.apply_override(o)?;
        }
    }
    cfg.validate()?;
    settings.validate()?;
    Ok((cfg, settings, text))
}

fn execute(cli: Cli) -> Result<Vec<PathBuf>, CliError> {
    let common = &cli.common;
    if let Some(n) = common.threads {
        if n == 0 {
            return Err(CliError::Usage("--threads must be >= 1".into()));
        }
        rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build_global()
            .map_err(|e| CliError::Usage(format!("cannot set thread count: {e}")))?;
    }
    let (cfg, mut settings, _) = load_config(common)?;
    if let Command::Decoherence { zmin, zmax, npoints } = &cli.command {
        if let Some(v) = zmin {
            settings.decoherence_zmin_m = *v;
        }
        if let Some(v) = zmax {
            settings.decoherence_zmax_m = *v;
        }
        if let Some(v) = npoints {
            settings.decoherence_points = *v;
        }
        settings.validate()?;
    }
    let dq = derive(&cfg)?;
    let state = match common.state {
        StateArg::Thermal => StateKind::Thermal,
        StateArg::Coherent => StateKind::Coherent,
        StateArg::Fock1 => StateKind::Fock1,
    };
    let schemes = match common.scheme {
        SchemeArg::Ch => vec![Scheme::Ch],
        SchemeArg::Cbh => vec![Scheme::Cbh],
        SchemeArg::Both => vec![Scheme::Ch, Scheme::Cbh],
    };
    let ctx = Context {
        cfg,
        dq,
        settings,
        seed: common.seed,
        state,
        schemes,
    };

    let name = cli.command.name();
    let versions = BTreeMap::from([
        ("levitomo".to_string(), levitomo::VERSION.to_string()),
        ("levitomo-cli".to_string(), env!("CARGO_PKG_VERSION").to_string()),
    ]);
    let manifest = Manifest {
        command: name.to_string(),
        seed: ctx.seed,
        state: state.to_string(),
        scheme: match common.scheme {
            SchemeArg::Ch => "ch",
            SchemeArg::Cbh => "cbh",
            SchemeArg::Both => "both",
        }
        .to_string(),
        versions,
        config_path: common.config.as_ref().map(|p| p.display().to_string()),
        config: ctx.cfg.to_text(),
        settings: ctx.settings.clone(),
        overrides: common.overrides.clone(),
        stages: Vec::new(),
        status: String::new(),
        error: None,
    };
    let manifest_name = if name == "pipeline" {
        "manifest.json".to_string()
    } else {
        format!("manifest_{name}.json")
    };
    let mut run = Run::new(&common.out, &manifest_name, manifest)?;
    if let Some(p) = &common.config {
        run.stage("config", |sio| {
            sio.input(p);
            Ok(())
        })?;
    }
    let out = run.out_dir().to_path_buf();

    match &cli.command {
        Command::Derive => {
            run.stage("derive", |sio| stages::derive_stage(&ctx, sio))?;
            let text = std::fs::read_to_string(out.join("derived.json"))
                .map_err(|e| CliError::Usage(format!("cannot read back derived.json: {e}")))?;
            print!("{text}");
        }
        Command::Simulate => {
            run.stage("simulate", |sio| stages::simulate_stage(&ctx, sio))?;
        }
        Command::Detect { input } => {
            let path = input.clone().unwrap_or_else(|| out.join("trajectory.csv"));
            let traj = run.stage("read", |sio| stages::read_input_trajectory(&path, sio))?;
            for &scheme in &ctx.schemes {
                run.stage(&format!("detect_{scheme}"), |sio| stages::detect_stage(&ctx, &traj, scheme, sio))?;
            }
        }
        Command::Psd { input } => {
            let mut spectra = Vec::new();
            for (label, path) in inputs_for(&ctx, input.as_deref(), &out) {
                let pos = run.stage("read", |sio| stages::read_input_trajectory(&path, sio))?;
                spectra.push(run.stage(&format!("psd_{label}"), |sio| stages::psd_stage(&ctx, &pos, &label, sio))?);
            }
            run.stage("noise", |sio| stages::noise_stage(&spectra, sio))?;
        }
        Command::Tomo { input } => {
            if ctx.state == StateKind::Fock1 {
                run.stage("tomo", |sio| stages::fock_stage(&ctx, sio))?;
            } else {
                let path = input
                    .clone()
                    .unwrap_or_else(|| out.join(format!("positions_{}.csv", ctx.primary_scheme())));
                let pos = run.stage("read", |sio| stages::read_input_trajectory(&path, sio))?;
                let spectral = run.stage("psd", |sio| stages::psd_stage(&ctx, &pos, "tomo", sio))?;
                let omega = spectral.omega_hat(&ctx);
                run.stage("tomo", |sio| stages::tomo_stage(&ctx, &pos, omega, sio))?;
            }
        }
        Command::Decoherence { .. } => {
            run.stage("decoherence", |sio| stages::decoherence_stage(&ctx, sio))?;
        }
        Command::Pipeline => pipeline(&ctx, &mut run)?,
    }
    run.finish()
}

/// Position files for the `psd` command: the explicit input, or one per scheme.
fn inputs_for(ctx: &Context, input: Option<&Path>, out: &Path) -> Vec<(String, PathBuf)> {
    match input {
        Some(p) => vec![("input".to_string(), p.to_path_buf())],
        None => ctx
            .schemes
            .iter()
            .map(|s| (s.to_string(), out.join(format!("positions_{s}.csv"))))
            .collect(),
    }
}

fn pipeline(ctx: &Context, run: &mut Run) -> Result<(), CliError> {
    run.stage("derive", |sio| stages::derive_stage(ctx, sio))?;
    let mut detected = Vec::new();
    let mut spectra = Vec::new();
    let tomography = if ctx.state == StateKind::Fock1 {
        run.stage("tomo", |sio| stages::fock_stage(ctx, sio))?
    } else {
        let traj = run.stage("simulate", |sio| stages::simulate_stage(ctx, sio))?;
        for &scheme in &ctx.schemes {
            detected.push(run.stage(&format!("detect_{scheme}"), |sio| {
                stages::detect_stage(ctx, &traj, scheme, sio)
            })?);
        }
        for d in &detected {
            let label = d.scheme.to_string();
            spectra.push(run.stage(&format!("psd_{label}"), |sio| {
                stages::psd_stage(ctx, &d.positions, &label, sio)
            })?);
        }
        run.stage("noise", |sio| stages::noise_stage(&spectra, sio))?;
        let primary = ctx.primary_scheme().to_string();
        let omega = spectra
            .iter()
            .find(|s| s.label == primary)
            .map(|s| s.omega_hat(ctx))
            .expect("primary scheme was fitted");
        let pos = &detected
            .iter()
            .find(|d| d.scheme == ctx.primary_scheme())
            .expect("primary scheme was detected")
            .positions;
        run.stage("tomo", |sio| stages::tomo_stage(ctx, pos, omega, sio))?
    };
    let curve = run.stage("decoherence", |sio| stages::decoherence_stage(ctx, sio))?;
    let trace = detected
        .iter()
        .find(|d| d.scheme == ctx.primary_scheme())
        .zip(tomography.analysis.omega_hat_rad_s);
    run.stage("plots", |sio| {
        plots::plot_stage(
            &plots::PlotInputs {
                trace,
                tomography: &tomography,
                spectra: &spectra,
                decoherence: &curve,
                trace_windows: ctx.settings.plot_trace_windows,
            },
            sio,
        )
    })?;
    Ok(())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match execute(cli) {
        Ok(files) => {
            for f in files {
                println!("wrote {}", f.display());
            }
            ExitCode::SUCCESS
        }
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
