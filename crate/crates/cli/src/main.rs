use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use mbs_interferometer::model::QrngMode;
use mbs_interferometer::montecarlo::Execution;
use mbs_interferometer::scenarios::{
    emit, load_run_file, replay, run_scenario_with, Engine, ScenarioName, ScenarioResult,
    ScenarioSpec,
};
use mbs_interferometer::Error;

#[derive(Parser)]
#[command(name = "mbsim", version, about = "Memory-based temporal interferometer simulator")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Wave and particle fringes (xi = 1 and xi = 0).
    Fig1d(RunOpts),
    /// Fringes across the QRNG weight sweep.
    Fig2(RunOpts),
    /// Fringes across the second-memory efficiency sweep.
    Fig3(RunOpts),
    /// Visibility versus second-memory storage time.
    Fig4(RunOpts),
    /// Time-resolved counts at zero and pi phase.
    Fig5a(RunOpts),
    /// Decay scans of each memory and of the interferometer.
    Fig5b(RunOpts),
    /// Visibility versus optical depth of the second memory.
    Fig5c(RunOpts),
    /// Run a scenario described by a TOML file.
    Run {
        #[arg(long)]
        config: PathBuf,
        #[command(flatten)]
        opts: RunOpts,
    },
    /// Rerun the scenario recorded in a provenance sidecar.
    Replay {
        sidecar: PathBuf,
        /// Output directory [default: out/<scenario>].
        #[arg(long)]
        out: Option<PathBuf>,
        #[arg(long)]
        serial: bool,
    },
}

#[derive(Clone, Copy, ValueEnum)]
enum EngineArg {
    Analytic,
    MonteCarlo,
    Both,
}

#[derive(Clone, Copy, ValueEnum)]
enum ModeArg {
    Amplitude,
    Ensemble,
}

#[derive(Args)]
struct RunOpts {
    #[arg(long, value_enum)]
    engine: Option<EngineArg>,
    #[arg(long)]
    seed: Option<u64>,
    /// Monte Carlo trials per sweep point and phase.
    #[arg(long)]
    trials: Option<u64>,
    /// Output directory [default: out/<scenario>].
    #[arg(long)]
    out: Option<PathBuf>,
    #[arg(long, value_enum)]
    qrng_mode: Option<ModeArg>,
    /// Run on one thread. Output is identical either way.
    #[arg(long)]
    serial: bool,
}

impl RunOpts {
    fn apply(&self, mut spec: ScenarioSpec) -> ScenarioSpec {
        if let Some(e) = self.engine {
            spec.engine = match e {
                EngineArg::Analytic => Engine::Analytic,
                EngineArg::MonteCarlo => Engine::MonteCarlo,
                EngineArg::Both => Engine::Both,
            };
        }
        if let Some(s) = self.seed {
            spec.seed = s;
        }
        if let Some(t) = self.trials {
            spec.trials_per_point = t;
        }
        if let Some(m) = self.qrng_mode {
            spec.base_config.qrng.mode = match m {
                ModeArg::Amplitude => QrngMode::Amplitude,
                ModeArg::Ensemble => QrngMode::Ensemble,
            };
        }
        spec
    }
}

fn execution(serial: bool) -> Execution {
    if serial {
        Execution::Serial
    } else {
        Execution::Parallel
    }
}

fn exit_code(e: &Error) -> u8 {
    match e.category() {
        "validation" => 3,
        "input" => 4,
        "config" => 5,
        "scenario" => 6,
        "quadrature" => 7,
        "fit" => 8,
        "io" => 9,
        _ => 1,
    }
}

fn default_out(name: ScenarioName) -> PathBuf {
    Path::new("out").join(name.as_str())
}

fn run_spec(spec: ScenarioSpec, opts: &RunOpts) -> Result<(), Error> {
    let spec = opts.apply(spec);
    let out = opts.out.clone().unwrap_or_else(|| default_out(spec.name));
    let result = run_scenario_with(&spec, execution(opts.serial))?;
    emit(&result, &out)?;
    report(&result, &out);
    Ok(())
}

fn report(result: &ScenarioResult, out: &Path) {
    let spec = &result.provenance.spec;
    println!("scenario {} ({} sweep points)", result.name, spec.sweep.values.len());
    for p in &result.points {
        let mut line = format!(
            "  {} = {:<10} V_model = {:.4}",
            spec.sweep.parameter.as_str(),
            p.value,
            p.visibility_analytic
        );
        if let Some(v) = p.visibility_fit_analytic {
            line.push_str(&format!("  V_fit = {v:.4}"));
        }
        if let Some(v) = p.visibility_fit_montecarlo {
            line.push_str(&format!("  V_mc = {v:.4}"));
        }
        println!("{line}");
    }
    for f in &result.fits {
        if let mbs_interferometer::scenarios::FitSummary::Decay(d) = f.fit {
            println!(
                "  {}: A = {:.1}  T = {:.1} ns  g0 = {:.1}",
                f.label, d.a, d.t, d.g0
            );
        }
    }
    println!("wrote {} files to {}", result.series.len() + 1, out.display());
}

fn dispatch(cli: Cli) -> Result<(), Error> {
    let preset = |n| ScenarioSpec::preset(n);
    match cli.command {
        Command::Fig1d(o) => run_spec(preset(ScenarioName::Fig1d), &o),
        Command::Fig2(o) => run_spec(preset(ScenarioName::Fig2), &o),
        Command::Fig3(o) => run_spec(preset(ScenarioName::Fig3), &o),
        Command::Fig4(o) => run_spec(preset(ScenarioName::Fig4), &o),
        Command::Fig5a(o) => run_spec(preset(ScenarioName::Fig5a), &o),
        Command::Fig5b(o) => run_spec(preset(ScenarioName::Fig5b), &o),
        Command::Fig5c(o) => run_spec(preset(ScenarioName::Fig5c), &o),
        Command::Run { config, opts } => run_spec(load_run_file(&config)?.spec, &opts),
        Command::Replay {
            sidecar,
            out,
            serial,
        } => {
            let spec = mbs_interferometer::scenarios::read_provenance(&sidecar)?;
            let out = out.unwrap_or_else(|| default_out(spec.name));
            let result = replay(&sidecar, &out, execution(serial))?;
            report(&result, &out);
            Ok(())
        }
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match dispatch(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error[{}]: {e}", e.category());
            ExitCode::from(exit_code(&e))
        }
    }
}
