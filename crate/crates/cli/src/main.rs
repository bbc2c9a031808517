use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::Context;
use chronoflow_cli::manifest::Manifest;
use chronoflow_cli::pipeline::{run_pipeline, stages_through};
use chronoflow_cli::plot::{emit_plots, PlotKind};
use chronoflow_cli::{RunConfig, Stage};
use clap::{Args, Parser, Subcommand};

#[derive(Parser)]
#[command(name = "chronoflow", version, about = "Exact-factorization quantum hydrodynamics pipeline")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run every stage and render the figures.
    Run(Common),
    /// Born-Oppenheimer surfaces and the initial state.
    Bo(Common),
    /// Propagate the joint wavefunction.
    Propagate(Common),
    /// Factorize every stored snapshot and report adiabaticity.
    Factorize(Common),
    /// Evaluate the hydrodynamic residuals.
    Residuals(Common),
    /// Integrate clock-dependent and Bohmian trajectories.
    Trajectories(Common),
    /// Render figures from an existing output directory.
    Plot {
        #[command(flatten)]
        common: Common,
        /// Restrict to these kinds: potentials, snapshots, trajectories, residuals.
        #[arg(long = "only", value_delimiter = ',')]
        only: Vec<String>,
    },
}

#[derive(Args)]
struct Common {
    /// JSON run configuration; built-in defaults when omitted.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Output directory.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Dotted-path override such as `propagation.dt=0.05`; repeatable.
    #[arg(long = "override", value_name = "KEY=VALUE")]
    overrides: Vec<String>,
}

impl Common {
    fn resolve(&self) -> anyhow::Result<(RunConfig, PathBuf)> {
        let cfg = match &self.config {
            Some(p) => {
                let text = std::fs::read_to_string(p).with_context(|| format!("reading {}", p.display()))?;
                RunConfig::from_json(&text, &self.overrides)?
            }
            None => RunConfig::with_overrides(&self.overrides)?,
        };
        let out = self.out.clone().or_else(|| cfg.output.dir.clone()).context("no output directory: pass --out")?;
        Ok((cfg, out))
    }
}

fn plot_only(out: &Path, only: &[String]) -> anyhow::Result<()> {
    let mut m = Manifest::read(out)?;
    let kinds = if only.is_empty() {
        PlotKind::available(&m)
    } else {
        only.iter().map(|s| PlotKind::parse(s)).collect::<anyhow::Result<Vec<_>>>()?
    };
    let names = emit_plots(&mut m, out, &kinds)?;
    if !m.stages.contains(&Stage::Plot) && !names.is_empty() {
        m.stages.push(Stage::Plot);
    }
    m.write(out)?;
    for n in names {
        log::info!("wrote {n}");
    }
    Ok(())
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    let cli = Cli::parse();
    let (common, last) = match &cli.command {
        Command::Run(c) => (c, Stage::Plot),
        Command::Bo(c) => (c, Stage::Bo),
        Command::Propagate(c) => (c, Stage::Propagate),
        Command::Factorize(c) => (c, Stage::Factorize),
        Command::Residuals(c) => (c, Stage::Residuals),
        Command::Trajectories(c) => (c, Stage::Trajectories),
        Command::Plot { common, .. } => (common, Stage::Plot),
    };
    let (cfg, out) = match common.resolve() {
        Ok(v) => v,
        Err(e) => {
            eprintln!("error [config]: {e:#}");
            return ExitCode::from(2);
        }
    };
    if let Command::Plot { only, .. } = &cli.command {
        return match plot_only(&out, only) {
            Ok(()) => ExitCode::SUCCESS,
            Err(e) => {
                eprintln!("error [plot]: {e:#}");
                ExitCode::from(1)
            }
        };
    }
    match run_pipeline(&cfg, &out, &stages_through(last)) {
        Ok(m) => {
            println!("{}", out.join(chronoflow_cli::manifest::MANIFEST_FILE).display());
            log::info!("{} artifacts", m.artifacts.len());
            ExitCode::SUCCESS
        }
        Err(e) => {
            eprintln!("error {e}");
            ExitCode::from(1)
        }
    }
}
