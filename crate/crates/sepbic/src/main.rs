//! Command-line front end: solve 1D spectra, certify BIC catalogs, compute
//! golden-rule coupling reports, propagate perturbed systems, resolve
//! tight-binding lattices, and run full named scenarios.

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use sepbic::error::ErrorClass;
use sepbic::scenarios::{
    preset, preset_by_name, run_scenario, ConventionChoice, ScenarioConfig, ScenarioKind,
};

#[derive(Parser)]
#[command(
    name = "sepbic",
    version,
    about = "Separable Hamiltonians, bound states in the continuum, and symmetry-steered radiation"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(clap::Args)]
struct CommonArgs {
    /// Scenario configuration file; defaults to a built-in preset.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Output directory for CSV and binary artifacts.
    #[arg(long)]
    out: PathBuf,
    /// Kinetic convention override.
    #[arg(long, value_parser = ["reduced", "half", "calibrate"])]
    convention: Option<String>,
}

#[derive(Subcommand)]
enum Command {
    /// Solve the 1D bound spectra of the configured axes.
    Spectrum1d(CommonArgs),
    /// Certify the BIC catalog of the configured system.
    Bics(CommonArgs),
    /// Golden-rule coupling report for the configured perturbation.
    Couple(CommonArgs),
    /// Time-propagate the perturbed system and record radiation observables.
    Propagate(CommonArgs),
    /// Tight-binding chains: convention resolution and lattice BICs.
    Tb(CommonArgs),
    /// Run a full named scenario (gauss2d|gauss3d|paraxial|coldatom|tightbinding).
    Scenario {
        name: String,
        #[command(flatten)]
        common: CommonArgs,
    },
}

fn load_config(common: &CommonArgs, fallback: ScenarioKind) -> sepbic::Result<ScenarioConfig> {
    let mut cfg = match &common.config {
        Some(path) => ScenarioConfig::parse(&std::fs::read_to_string(path)?)?,
        None => preset(fallback),
    };
    if let Some(conv) = &common.convention {
        cfg.convention = ConventionChoice::parse(conv)?;
    }
    Ok(cfg)
}

/// Trim a config down to what one subcommand needs, so e.g. `spectrum1d`
/// does not pay for a propagation stage configured in the same file.
fn restrict(mut cfg: ScenarioConfig, keep_coupling: bool, keep_propagation: bool) -> ScenarioConfig {
    if !keep_coupling {
        cfg.perturbation = None;
    }
    if !keep_propagation {
        cfg.propagation = None;
    }
    cfg
}

fn run(cli: Cli) -> sepbic::Result<()> {
    match cli.command {
        Command::Spectrum1d(common) => {
            let cfg = restrict(load_config(&common, ScenarioKind::Gauss2d)?, false, false);
            let bundle = run_scenario(&cfg, &common.out)?;
            for spec in &bundle.spectra {
                println!(
                    "axis {}: {} bound states, ground {:?}",
                    spec.axis_label,
                    spec.bound_count(),
                    spec.ground_energy()
                );
            }
            Ok(())
        }
        Command::Bics(common) => {
            let cfg = restrict(load_config(&common, ScenarioKind::Gauss2d)?, false, false);
            let bundle = run_scenario(&cfg, &common.out)?;
            println!(
                "threshold {:?}; {} BICs certified",
                bundle.threshold.map(|t| t.threshold),
                bundle.bics.len()
            );
            for b in bundle.bics.iter().take(20) {
                println!(
                    "  {} E = {:.6} channels = {} protected = {}",
                    b.state.ket_label(),
                    b.state.energy,
                    b.channel_count,
                    b.symmetry_protected
                );
            }
            Ok(())
        }
        Command::Couple(common) => {
            let cfg = restrict(load_config(&common, ScenarioKind::Gauss2d)?, true, false);
            if cfg.perturbation.is_none() {
                return Err(sepbic::Error::InvalidConfig(
                    "couple needs a [perturbation] section".into(),
                ));
            }
            let bundle = run_scenario(&cfg, &common.out)?;
            if let Some(report) = &bundle.coupling {
                println!("{}", report.convention_note);
                for (axes, gamma) in &report.per_axes {
                    println!(
                        "  Gamma_{} = {:.6e}",
                        axes.label(report.state.indices.len()),
                        gamma
                    );
                }
                println!("  total = {:.6e}", report.total);
            }
            Ok(())
        }
        Command::Propagate(common) => {
            let cfg = load_config(&common, ScenarioKind::Gauss2d)?;
            if cfg.propagation.is_none() {
                return Err(sepbic::Error::InvalidConfig(
                    "propagate needs a [propagation] section".into(),
                ));
            }
            let bundle = run_scenario(&cfg, &common.out)?;
            if let Some((rec, fit)) = &bundle.propagation {
                let at = rec.last();
                println!(
                    "survival {:.6}; x-fraction {:.3e}; bookkeeping error {:.3e}",
                    rec.survival[at],
                    rec.directionality_x(at),
                    rec.bookkeeping_error(at)
                );
                if let Some(f) = fit {
                    println!(
                        "fitted Gamma = {:.6e} (residual {:.2e})",
                        f.gamma, f.residual_rms
                    );
                }
            }
            Ok(())
        }
        Command::Tb(common) => {
            let cfg = load_config(&common, ScenarioKind::TightBinding)?;
            let bundle = run_scenario(&cfg, &common.out)?;
            if let Some((resolved, set)) = &bundle.lattice {
                println!(
                    "convention {:?}/{:?}; chain energies {:?}",
                    resolved.onsite_sign,
                    resolved.region,
                    resolved.spectrum.energies_from_band()
                );
                println!("{} lattice BICs:", set.bics.len());
                for b in &set.bics {
                    println!(
                        "  |{},{}> E = {:.4} protected = {}",
                        b.indices.0, b.indices.1, b.energy, b.symmetry_protected
                    );
                }
            }
            Ok(())
        }
        Command::Scenario { name, common } => {
            let mut cfg = match &common.config {
                Some(path) => ScenarioConfig::parse(&std::fs::read_to_string(path)?)?,
                None => preset_by_name(&name)?,
            };
            if let Some(conv) = &common.convention {
                cfg.convention = ConventionChoice::parse(conv)?;
            }
            let bundle = run_scenario(&cfg, &common.out)?;
            println!(
                "scenario {} done: stages [{}], convention {}, hash {}",
                bundle.config.kind.label(),
                bundle.stages.join(", "),
                bundle.convention.label(),
                bundle.config_hash
            );
            Ok(())
        }
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(err) => {
            eprintln!("error: {err}");
            let mut source = std::error::Error::source(&err);
            while let Some(s) = source {
                eprintln!("  caused by: {s}");
                source = s.source();
            }
            match err.class() {
                ErrorClass::Validation => ExitCode::from(2),
                ErrorClass::Numerical => ExitCode::from(3),
                ErrorClass::Io => ExitCode::from(4),
            }
        }
    }
}
