//! Turnkey configurations of the physical systems this crate models: the 2D
//! and 3D Gaussian traps, the paraxial photonic sheets, the cold-atom trap,
//! and the tight-binding lattice. Each runner produces a deterministic
//! directory of CSV and binary artifacts plus a manifest keyed by the config
//! hash; the kinetic-convention calibration lives here too, because it is a
//! property of a scenario's published numbers, not of any single solver.

pub mod coldatom;
pub mod config;
pub mod paraxial;
pub mod presets;

use std::path::Path;

use ndarray::Array2;

use crate::coupling::{
    dimensionality_selection, golden_rule_widths, CouplingContext, CouplingReport,
    DimensionalityReport, Factor1D, Perturbation,
};
use crate::eigen1d::{
    solve_bound_states, KineticConvention, Potential1D, Spectrum1D,
};
use crate::error::{Error, Result};
use crate::grid::Grid1D;
use crate::io;
use crate::lattice::{
    chain_bound_states, lattice_find_bics, resolve_convention, ChainSpectrum, LatticeBicSet,
    ResolvedConvention, TightBindingChain,
};
use crate::separable::{
    continuum_threshold, find_bics_with, BicRecord, FindOptions, SeparableSystem, ThresholdReport,
};
use crate::tdse2d::{
    fit_decay_rate, product_field, propagate, Absorber, DecayFit, DetectorRect, PropagationSetup,
    RadiationRecord,
};

pub use coldatom::{coldatom_scenario, ColdAtomReport, ColdAtomUnits};
pub use config::{
    AxisConfig, BicConfig, BoxConfig, ColdAtomConfig, ConventionChoice, ParaxialConfig,
    PerturbationConfig, PropagationConfig, ScenarioConfig, ScenarioKind, TightBindingConfig,
};
pub use paraxial::{
    interpretation_sweep, solve_reading, InterpretationReport, ParaxialReading, ParaxialSystem,
    PUBLISHED_BETAS,
};
pub use presets::{preset, preset_by_name};

/// Published level positions used as calibration targets.
pub mod published {
    /// 2D trap BIC energy.
    pub const GAUSS2D_BIC: f64 = -1.04;
    /// 3D trap: transverse-well levels, tight-well levels, BIC energy.
    pub const GAUSS3D_EX: [f64; 4] = [-0.33, -0.20, -0.10, -0.029];
    pub const GAUSS3D_EZ: [f64; 2] = [-0.61, -0.059];
    pub const GAUSS3D_BIC: f64 = -0.47;
    /// Cold atoms: continuum onset, per-sheet bound count, showcase energy.
    pub const COLDATOM_THRESHOLD: f64 = -296.24;
    pub const COLDATOM_SHEET_COUNT: usize = 138;
    pub const COLDATOM_EXAMPLE: f64 = -146.62;
    /// Defect chains.
    pub const TB_ENERGIES: [f64; 4] = [-0.93, -0.74, -0.46, -0.16];
}

/// Relative tolerance inside which a convention candidate counts as matching
/// the published numbers.
pub const CALIBRATION_REL_TOL: f64 = 0.05;

/// One candidate convention and how close it came.
#[derive(Debug, Clone)]
pub struct CalibrationCandidate {
    pub convention: KineticConvention,
    /// `(quantity, achieved, target)` triples.
    pub achieved: Vec<(String, f64, f64)>,
    pub max_rel_deviation: f64,
}

#[derive(Debug, Clone)]
pub struct CalibrationReport {
    pub chosen: KineticConvention,
    pub candidates: Vec<CalibrationCandidate>,
}

fn axis_potential(axis: &AxisConfig) -> (Potential1D, Result<Grid1D>) {
    (
        Potential1D::GaussianWell {
            depth: axis.depth,
            width: axis.width,
            center: axis.center,
        },
        Grid1D::symmetric(axis.half_extent, axis.points),
    )
}

fn solve_axes(config: &ScenarioConfig, convention: KineticConvention) -> Result<Vec<Spectrum1D>> {
    config
        .axes
        .iter()
        .map(|axis| {
            let (pot, grid) = axis_potential(axis);
            solve_bound_states(&pot, &grid?, convention, &axis.label)
        })
        .collect()
}

/// Relaxed-edge solve used while probing convention candidates: a losing
/// candidate may bind extra marginal states whose tails the grid was never
/// sized for, and only the low-lying levels enter the comparison.
fn solve_axes_relaxed(
    config: &ScenarioConfig,
    convention: KineticConvention,
) -> Result<Vec<Spectrum1D>> {
    let opts = crate::eigen1d::SolveOptions {
        edge_amplitude_tol: 1e-2,
        ..Default::default()
    };
    config
        .axes
        .iter()
        .map(|axis| {
            let (pot, grid) = axis_potential(axis);
            crate::eigen1d::solve_bound_states_with(&pot, &grid?, convention, &axis.label, opts)
        })
        .collect()
}

fn candidate_for(
    config: &ScenarioConfig,
    convention: KineticConvention,
) -> Result<CalibrationCandidate> {
    let spectra = solve_axes_relaxed(config, convention)?;
    let mut achieved = Vec::new();
    match config.kind {
        ScenarioKind::Gauss2d => {
            let sys = SeparableSystem::new(spectra)?;
            let e = sys.product_state(&[2, 1]).map(|s| s.energy);
            achieved.push((
                "E(2,1)".to_string(),
                e.unwrap_or(f64::INFINITY),
                published::GAUSS2D_BIC,
            ));
        }
        ScenarioKind::Gauss3d => {
            for (i, target) in published::GAUSS3D_EX.iter().enumerate() {
                let got = spectra[0]
                    .bound_states
                    .get(i)
                    .map_or(f64::INFINITY, |b| b.energy);
                achieved.push((format!("Ex({i})"), got, *target));
            }
            for (i, target) in published::GAUSS3D_EZ.iter().enumerate() {
                let got = spectra[2]
                    .bound_states
                    .get(i)
                    .map_or(f64::INFINITY, |b| b.energy);
                achieved.push((format!("Ez({i})"), got, *target));
            }
            let sys = SeparableSystem::new(spectra)?;
            let e = sys.product_state(&[1, 1, 1]).map(|s| s.energy);
            achieved.push((
                "E(1,1,1)".to_string(),
                e.unwrap_or(f64::INFINITY),
                published::GAUSS3D_BIC,
            ));
        }
        other => {
            return Err(Error::CalibrationFailed(format!(
                "scenario '{}' has no convention calibration targets",
                other.label()
            )))
        }
    }
    let max_rel_deviation = achieved
        .iter()
        .map(|(_, got, want)| ((got - want) / want).abs())
        .fold(0.0f64, f64::max);
    Ok(CalibrationCandidate {
        convention,
        achieved,
        max_rel_deviation,
    })
}

/// Solve the scenario under both kinetic conventions and keep whichever
/// reproduces the published levels, refusing to pick silently when neither
/// does. Scenarios whose convention is forced analytically (cold atoms by
/// the reduced-unit definition, paraxial by the envelope equation) return
/// that convention with a consistency check where one is available.
pub fn calibrate_convention(config: &ScenarioConfig) -> Result<CalibrationReport> {
    match config.kind {
        ScenarioKind::Gauss2d | ScenarioKind::Gauss3d => {
            let candidates = vec![
                candidate_for(config, KineticConvention::Reduced)?,
                candidate_for(config, KineticConvention::HalfMass { mass: 1.0 })?,
            ];
            let best = candidates
                .iter()
                .filter(|c| c.max_rel_deviation <= CALIBRATION_REL_TOL)
                .min_by(|a, b| {
                    a.max_rel_deviation
                        .partial_cmp(&b.max_rel_deviation)
                        .unwrap()
                });
            match best {
                Some(winner) => Ok(CalibrationReport {
                    chosen: winner.convention,
                    candidates: candidates.clone(),
                }),
                None => Err(Error::CalibrationFailed(format!(
                    "no convention reproduces the published levels within {:.0}%: {}",
                    CALIBRATION_REL_TOL * 100.0,
                    candidates
                        .iter()
                        .map(|c| format!(
                            "{} off by {:.1}%",
                            c.convention.label(),
                            c.max_rel_deviation * 100.0
                        ))
                        .collect::<Vec<_>>()
                        .join(", ")
                ))),
            }
        }
        ScenarioKind::ColdAtom => {
            // The reduced-unit definition fixes the convention; calibration
            // degenerates to a consistency check against the quoted
            // threshold.
            let cold = config.cold_atom.as_ref().ok_or_else(|| {
                Error::InvalidConfig("coldatom scenario needs a [coldatom] section".into())
            })?;
            let report = coldatom_scenario(
                cold.total_reduced_depth,
                cold.sheet_width,
                cold.half_extent,
                cold.points,
            )?;
            let dev =
                ((report.threshold - published::COLDATOM_THRESHOLD) / published::COLDATOM_THRESHOLD)
                    .abs();
            let candidate = CalibrationCandidate {
                convention: KineticConvention::Reduced,
                achieved: vec![(
                    "threshold".to_string(),
                    report.threshold,
                    published::COLDATOM_THRESHOLD,
                )],
                max_rel_deviation: dev,
            };
            if dev > CALIBRATION_REL_TOL {
                return Err(Error::CalibrationFailed(format!(
                    "reduced-unit threshold {} disagrees with the quoted {}",
                    report.threshold,
                    published::COLDATOM_THRESHOLD
                )));
            }
            Ok(CalibrationReport {
                chosen: KineticConvention::Reduced,
                candidates: vec![candidate],
            })
        }
        other => Err(Error::CalibrationFailed(format!(
            "scenario '{}' has no convention calibration",
            other.label()
        ))),
    }
}

fn convention_of(config: &ScenarioConfig) -> Result<(KineticConvention, Option<CalibrationReport>)> {
    match config.convention {
        ConventionChoice::Reduced => Ok((KineticConvention::Reduced, None)),
        ConventionChoice::Half => Ok((KineticConvention::HalfMass { mass: 1.0 }, None)),
        ConventionChoice::Calibrate => {
            let report = calibrate_convention(config)?;
            Ok((report.chosen, Some(report)))
        }
    }
}

/// Assemble the perturbation described in a config for an N-axis system.
pub fn build_perturbation(cfg: &PerturbationConfig, n_axes: usize) -> Result<Perturbation> {
    let bump = |center: f64| Factor1D::Bump {
        center,
        width: cfg.width,
    };
    let even = |offset: f64| Factor1D::EvenBumpPair {
        offset,
        width: cfg.width,
    };
    let odd = |offset: f64| Factor1D::OddBumpPair {
        offset,
        width: cfg.width,
    };
    let factors = match (cfg.kind.as_str(), n_axes) {
        ("even_y", 2) => vec![bump(cfg.offset_x), even(cfg.offset_y)],
        ("odd_x", 2) => vec![odd(cfg.offset_x), bump(cfg.offset_y)],
        ("bump", 2) => vec![bump(cfg.offset_x), bump(cfg.offset_y)],
        ("even_z", 3) => vec![bump(cfg.offset_x), bump(cfg.offset_y), even(cfg.offset_x)],
        ("even_xy", 3) => vec![even(cfg.offset_x), even(cfg.offset_y), bump(cfg.offset_x)],
        ("even_xyz", 3) => vec![even(cfg.offset_x), even(cfg.offset_y), even(cfg.offset_x)],
        (kind, n) => {
            return Err(Error::InvalidConfig(format!(
                "perturbation kind '{kind}' is not defined for {n} axes"
            )))
        }
    };
    Ok(Perturbation::single(cfg.amplitude, factors))
}

/// Everything a scenario run produced, both in memory and on disk.
#[derive(Debug)]
pub struct ScenarioBundle {
    pub config: ScenarioConfig,
    pub config_hash: String,
    pub convention: KineticConvention,
    pub calibration: Option<CalibrationReport>,
    pub spectra: Vec<Spectrum1D>,
    pub threshold: Option<ThresholdReport>,
    pub bics: Vec<BicRecord>,
    pub coupling: Option<CouplingReport>,
    pub dimensionality: Option<DimensionalityReport>,
    pub propagation: Option<(RadiationRecord, Option<DecayFit>)>,
    pub lattice: Option<(ResolvedConvention, LatticeBicSet)>,
    pub paraxial: Option<ParaxialRunReport>,
    pub coldatom: Option<ColdAtomReport>,
    pub stages: Vec<&'static str>,
}

/// The paraxial sweep outcome plus the BIC catalog asserted on the selected
/// four-mode interpretation.
#[derive(Debug)]
pub struct ParaxialRunReport {
    pub sweep: Vec<InterpretationReport>,
    /// Index into `sweep` of the interpretation the catalog uses.
    pub selected: usize,
    pub spectrum: Spectrum1D,
    pub bics: Vec<BicRecord>,
    pub threshold: ThresholdReport,
}

/// Run a scenario end to end, writing artifacts into `out_dir`. Outputs are
/// written as stages complete, so failures keep their partial results.
pub fn run_scenario(config: &ScenarioConfig, out_dir: &Path) -> Result<ScenarioBundle> {
    config.validate().map_err(|e| e.in_stage("validate"))?;
    std::fs::create_dir_all(out_dir).map_err(|e| Error::from(e).in_stage("prepare-out"))?;
    std::fs::write(out_dir.join("config.txt"), config.serialize())
        .map_err(|e| Error::from(e).in_stage("prepare-out"))?;

    let mut bundle = ScenarioBundle {
        config: config.clone(),
        config_hash: config.hash(),
        convention: KineticConvention::Reduced,
        calibration: None,
        spectra: Vec::new(),
        threshold: None,
        bics: Vec::new(),
        coupling: None,
        dimensionality: None,
        propagation: None,
        lattice: None,
        paraxial: None,
        coldatom: None,
        stages: Vec::new(),
    };

    match config.kind {
        ScenarioKind::Gauss2d | ScenarioKind::Gauss3d | ScenarioKind::Custom => {
            run_gaussian(config, out_dir, &mut bundle)?
        }
        ScenarioKind::ColdAtom => run_coldatom(config, out_dir, &mut bundle)?,
        ScenarioKind::Paraxial => run_paraxial(config, out_dir, &mut bundle)?,
        ScenarioKind::TightBinding => run_tightbinding(config, out_dir, &mut bundle)?,
    }

    write_bundle_manifest(out_dir, &bundle).map_err(|e| e.in_stage("manifest"))?;
    Ok(bundle)
}

fn run_gaussian(
    config: &ScenarioConfig,
    out_dir: &Path,
    bundle: &mut ScenarioBundle,
) -> Result<()> {
    let (convention, calibration) = convention_of(config).map_err(|e| e.in_stage("calibrate"))?;
    bundle.convention = convention;
    bundle.calibration = calibration;
    bundle.stages.push("calibrate");

    let spectra = solve_axes(config, convention).map_err(|e| e.in_stage("solve1d"))?;
    for spec in &spectra {
        io::write_spectrum_csv(
            &out_dir.join(format!("spectrum_{}.csv", spec.axis_label)),
            spec,
        )
        .map_err(|e| e.in_stage("solve1d"))?;
        for b in &spec.bound_states {
            io::write_wavefunction(
                &out_dir.join(format!("wavefunction_{}_{}.bin", spec.axis_label, b.n)),
                &spec.axis_label,
                &spec.grid,
                convention,
                &b.wavefunction,
            )
            .map_err(|e| e.in_stage("solve1d"))?;
        }
    }
    bundle.spectra = spectra.clone();
    bundle.stages.push("solve1d");

    let sys = SeparableSystem::new(spectra).map_err(|e| e.in_stage("bics"))?;
    bundle.threshold = Some(continuum_threshold(&sys));
    let opts = match &config.bic {
        Some(b) => FindOptions {
            enumerate_channels: b.channels,
            max_records: b.max_records,
            product_cap: b.product_cap,
        },
        None => FindOptions::default(),
    };
    let bics = find_bics_with(&sys, opts).map_err(|e| e.in_stage("bics"))?;
    io::write_bic_catalog_csv(&out_dir.join("bic_catalog.csv"), &bics)
        .map_err(|e| e.in_stage("bics"))?;
    bundle.bics = bics;
    bundle.stages.push("bics");

    if let Some(pert_cfg) = &config.perturbation {
        run_coupling_stage(config, out_dir, bundle, pert_cfg, convention)?;
    }
    if let Some(prop_cfg) = &config.propagation {
        run_propagation_stage(config, out_dir, bundle, prop_cfg, convention)?;
    }
    Ok(())
}

fn target_indices(config: &ScenarioConfig, bundle: &ScenarioBundle) -> Result<Vec<usize>> {
    if let Some(b) = &config.bic {
        if let Some(t) = &b.target {
            return Ok(t.clone());
        }
    }
    bundle
        .bics
        .first()
        .map(|b| b.state.indices.clone())
        .ok_or_else(|| Error::InvalidConfig("no certified BIC to target".into()))
}

fn run_coupling_stage(
    config: &ScenarioConfig,
    out_dir: &Path,
    bundle: &mut ScenarioBundle,
    pert_cfg: &PerturbationConfig,
    convention: KineticConvention,
) -> Result<()> {
    let stage = "couple";
    let n_axes = config.axes.len();
    let pert = build_perturbation(pert_cfg, n_axes).map_err(|e| e.in_stage(stage))?;
    let box_cfg = config.box_cfg.as_ref().ok_or_else(|| {
        Error::InvalidConfig("coupling needs a [box] section".into()).in_stage(stage)
    })?;
    let potentials: Vec<Potential1D> = config
        .axes
        .iter()
        .map(|a| axis_potential(a).0)
        .collect();
    let grids: Vec<Grid1D> = config
        .axes
        .iter()
        .map(|a| Grid1D::symmetric(a.half_extent, a.points))
        .collect::<Result<_>>()
        .map_err(|e| e.in_stage(stage))?;
    let ctx = CouplingContext::build(&potentials, &grids, convention, box_cfg.factor, box_cfg.e_max)
        .map_err(|e| e.in_stage(stage))?;
    let target = target_indices(config, bundle).map_err(|e| e.in_stage(stage))?;

    let report = golden_rule_widths(&ctx, &target, &pert).map_err(|e| e.in_stage(stage))?;
    io::write_coupling_csv(&out_dir.join("coupling_report.csv"), &report)
        .map_err(|e| e.in_stage(stage))?;
    bundle.coupling = Some(report);

    if n_axes == 3 {
        let dim = dimensionality_selection(&ctx, &target, &pert).map_err(|e| e.in_stage(stage))?;
        write_dimensionality_csv(&out_dir.join("dimensionality.csv"), &dim, n_axes)
            .map_err(|e| e.in_stage(stage))?;
        bundle.dimensionality = Some(dim);
    }
    bundle.stages.push(stage);
    Ok(())
}

fn write_dimensionality_csv(
    path: &Path,
    report: &DimensionalityReport,
    n_axes: usize,
) -> Result<()> {
    use std::io::Write;
    let mut w = std::io::BufWriter::new(std::fs::File::create(path)?);
    writeln!(w, "channel,verdict,forbidden_axis,relative_element")?;
    for v in &report.radiating {
        writeln!(
            w,
            "{},radiating,,{}",
            v.channel.label(n_axes),
            v.relative_element
        )?;
    }
    for v in &report.forbidden {
        writeln!(
            w,
            "{},forbidden,{},{}",
            v.channel.label(n_axes),
            v.forbidden_axis.unwrap_or(usize::MAX),
            v.relative_element
        )?;
    }
    Ok(())
}

fn run_propagation_stage(
    config: &ScenarioConfig,
    out_dir: &Path,
    bundle: &mut ScenarioBundle,
    prop_cfg: &PropagationConfig,
    convention: KineticConvention,
) -> Result<()> {
    let stage = "propagate";
    if config.axes.len() != 2 {
        return Err(
            Error::InvalidConfig("time propagation is 2D only".into()).in_stage(stage),
        );
    }
    let target = target_indices(config, bundle).map_err(|e| e.in_stage(stage))?;
    let (setup, psi0) =
        build_propagation(config, prop_cfg, convention, &target).map_err(|e| e.in_stage(stage))?;
    let (record, final_field) = propagate(&setup, &psi0).map_err(|e| e.in_stage(stage))?;
    io::write_observables_csv(&out_dir.join("observables.csv"), &record)
        .map_err(|e| e.in_stage(stage))?;
    io::write_observables_long_csv(&out_dir.join("observables_long.csv"), &record)
        .map_err(|e| e.in_stage(stage))?;
    io::write_field_snapshot(
        &out_dir.join("field_final.bin"),
        prop_cfg.steps as u64,
        prop_cfg.dt * prop_cfg.steps as f64,
        &setup.grid_x,
        &setup.grid_y,
        &final_field,
    )
    .map_err(|e| e.in_stage(stage))?;
    // Exclude the switch-on ramp (plus a margin) from the decay fit.
    let total_time = prop_cfg.dt * prop_cfg.steps as f64;
    let skip = match prop_cfg.ramp_time {
        Some(r) => ((r + 0.05 * total_time) / total_time).max(0.2),
        None => 0.2,
    };
    let fit = fit_decay_rate(&record.times, &record.survival, skip).ok();
    bundle.propagation = Some((record, fit));
    bundle.stages.push(stage);
    Ok(())
}

/// Assemble the propagation setup for a 2-axis config: solve the axis wells
/// on the propagation grid so the initial product state is an exact discrete
/// eigenstate, then add the configured perturbation field.
pub fn build_propagation(
    config: &ScenarioConfig,
    prop_cfg: &PropagationConfig,
    convention: KineticConvention,
    target: &[usize],
) -> Result<(PropagationSetup, Array2<num_complex::Complex64>)> {
    let grid = Grid1D::symmetric(prop_cfg.half_extent, prop_cfg.points)?;
    let pots: Vec<Potential1D> = config.axes.iter().map(|a| axis_potential(a).0).collect();
    let opts = crate::eigen1d::SolveOptions {
        // The propagation box is what it is; marginal top states only cost
        // the edge check, not the targeted low-lying product state.
        edge_amplitude_tol: 1e-2,
        ..Default::default()
    };
    let sx = crate::eigen1d::solve_bound_states_with(&pots[0], &grid, convention, "x", opts)?;
    let sy = crate::eigen1d::solve_bound_states_with(&pots[1], &grid, convention, "y", opts)?;
    let bx = sx.bound_states.get(target[0]).ok_or_else(|| {
        Error::InvalidConfig(format!("x axis has no bound state {}", target[0]))
    })?;
    let by = sy.bound_states.get(target[1]).ok_or_else(|| {
        Error::InvalidConfig(format!("y axis has no bound state {}", target[1]))
    })?;
    let psi0 = product_field(&bx.wavefunction, &by.wavefunction);

    let perturbation = match &config.perturbation {
        Some(p) => {
            let pert = build_perturbation(p, 2)?;
            let mut field = Array2::zeros((grid.len(), grid.len()));
            for term in &pert.terms {
                let fx = term.factors[0].sample(&grid)?;
                let fy = term.factors[1].sample(&grid)?;
                for ix in 0..grid.len() {
                    for iy in 0..grid.len() {
                        field[(ix, iy)] += pert.strength * fx[ix] * fy[iy];
                    }
                }
            }
            Some(field)
        }
        None => None,
    };

    let setup = PropagationSetup {
        grid_x: grid.clone(),
        grid_y: grid.clone(),
        base_x: pots[0].sample(&grid)?,
        base_y: pots[1].sample(&grid)?,
        perturbation,
        ramp_time: prop_cfg.ramp_time,
        convention,
        dt: prop_cfg.dt,
        n_steps: prop_cfg.steps,
        sample_every: prop_cfg.sample_every,
        absorber: Some(Absorber {
            width_fraction: prop_cfg.absorber_width_fraction,
            strength: prop_cfg.absorber_strength,
        }),
        detectors: DetectorRect {
            x_d: prop_cfg.detector_fraction * prop_cfg.half_extent,
            y_d: prop_cfg.detector_fraction * prop_cfg.half_extent,
        },
    };
    Ok((setup, psi0))
}

fn run_coldatom(config: &ScenarioConfig, out_dir: &Path, bundle: &mut ScenarioBundle) -> Result<()> {
    let cold = config
        .cold_atom
        .as_ref()
        .ok_or_else(|| Error::InvalidConfig("missing [coldatom]".into()).in_stage("validate"))?;
    bundle.convention = KineticConvention::Reduced;
    let report = coldatom_scenario(
        cold.total_reduced_depth,
        cold.sheet_width,
        cold.half_extent,
        cold.points,
    )
    .map_err(|e| e.in_stage("solve1d"))?;
    io::write_spectrum_csv(&out_dir.join("sheet_spectrum.csv"), &report.sheet)
        .map_err(|e| e.in_stage("solve1d"))?;
    bundle.spectra = vec![report.sheet.clone()];
    bundle.threshold = Some(ThresholdReport {
        threshold: report.threshold,
        empty_axis_warning: false,
    });
    bundle.coldatom = Some(report);
    bundle.stages.push("solve1d");
    bundle.stages.push("bics");
    Ok(())
}

fn run_paraxial(config: &ScenarioConfig, out_dir: &Path, bundle: &mut ScenarioBundle) -> Result<()> {
    let p = config
        .paraxial
        .as_ref()
        .ok_or_else(|| Error::InvalidConfig("missing [paraxial]".into()).in_stage("validate"))?;
    let sys = ParaxialSystem::new(p.n0, p.wavelength_nm, p.delta_n0, p.sigma_um)
        .map_err(|e| e.in_stage("validate"))?;
    let sweep = interpretation_sweep(&sys).map_err(|e| e.in_stage("sweep"))?;
    write_paraxial_sweep_csv(&out_dir.join("interpretations.csv"), &sweep)
        .map_err(|e| e.in_stage("sweep"))?;
    bundle.stages.push("sweep");

    // The catalog is asserted on an interpretation with exactly four modes;
    // the fitted reading guarantees one exists.
    let selected = sweep
        .iter()
        .position(|r| r.mode_count == 4)
        .ok_or_else(|| {
            Error::CalibrationFailed("no interpretation produced four bound modes".into())
                .in_stage("bics")
        })?;
    let chosen = &sweep[selected];
    let spectrum = paraxial::solve_sheet(sys.wavenumber(), chosen.sigma, chosen.depth, "sheet")
        .map_err(|e| e.in_stage("bics"))?;
    io::write_spectrum_csv(&out_dir.join("sheet_spectrum.csv"), &spectrum)
        .map_err(|e| e.in_stage("bics"))?;
    let sep = SeparableSystem::new(vec![spectrum.clone(), spectrum.clone()])
        .map_err(|e| e.in_stage("bics"))?;
    let threshold = continuum_threshold(&sep);
    let bics = crate::separable::find_bics(&sep).map_err(|e| e.in_stage("bics"))?;
    io::write_bic_catalog_csv(&out_dir.join("bic_catalog.csv"), &bics)
        .map_err(|e| e.in_stage("bics"))?;
    bundle.convention = KineticConvention::HalfMass {
        mass: sys.wavenumber(),
    };
    bundle.spectra = vec![spectrum.clone()];
    bundle.threshold = Some(threshold);
    bundle.bics = bics.clone();
    bundle.paraxial = Some(ParaxialRunReport {
        sweep,
        selected,
        spectrum,
        bics,
        threshold,
    });
    bundle.stages.push("bics");
    Ok(())
}

fn write_paraxial_sweep_csv(path: &Path, sweep: &[InterpretationReport]) -> Result<()> {
    use std::io::Write;
    let mut w = std::io::BufWriter::new(std::fs::File::create(path)?);
    writeln!(
        w,
        "reading,sigma_mm,depth_inv_mm,mode_count,betas,max_beta_deviation"
    )?;
    for r in sweep {
        let betas: Vec<String> = r.betas.iter().map(|b| b.to_string()).collect();
        writeln!(
            w,
            "{},{},{},{},{},{}",
            r.reading.label(),
            r.sigma,
            r.depth,
            r.mode_count,
            betas.join(";"),
            r.max_beta_deviation.map_or(String::new(), |d| d.to_string()),
        )?;
    }
    Ok(())
}

fn run_tightbinding(
    config: &ScenarioConfig,
    out_dir: &Path,
    bundle: &mut ScenarioBundle,
) -> Result<()> {
    let tb = config
        .tight_binding
        .as_ref()
        .ok_or_else(|| Error::InvalidConfig("missing [tightbinding]".into()).in_stage("validate"))?;

    let (resolved, spectrum): (Option<ResolvedConvention>, ChainSpectrum) = match &tb.targets {
        Some(targets) => {
            let r = resolve_convention(tb.v, tb.t, tb.n_defect, tb.sites, targets, 0.01)
                .map_err(|e| e.in_stage("resolve"))?;
            let s = r.spectrum.clone();
            (Some(r), s)
        }
        None => {
            // Without published targets, take the recipe literally.
            let chain = TightBindingChain::new(
                tb.v,
                tb.t,
                tb.n_defect,
                tb.sites,
                crate::lattice::OnsiteSign::MinusV,
                crate::lattice::DefectRegion::HalfOpen,
            )
            .map_err(|e| e.in_stage("resolve"))?;
            (None, chain_bound_states(&chain).map_err(|e| e.in_stage("resolve"))?)
        }
    };
    io::write_chain_spectrum_csv(&out_dir.join("chain_spectrum.csv"), &spectrum)
        .map_err(|e| e.in_stage("resolve"))?;
    if let Some(r) = &resolved {
        write_tb_candidates_csv(&out_dir.join("convention_candidates.csv"), r)
            .map_err(|e| e.in_stage("resolve"))?;
    }
    bundle.stages.push("resolve");

    let set = lattice_find_bics(&spectrum, &spectrum).map_err(|e| e.in_stage("bics"))?;
    io::write_lattice_bic_csv(&out_dir.join("bic_catalog.csv"), &set)
        .map_err(|e| e.in_stage("bics"))?;
    bundle.stages.push("bics");

    let resolved = match resolved {
        Some(r) => r,
        None => ResolvedConvention {
            onsite_sign: crate::lattice::OnsiteSign::MinusV,
            region: crate::lattice::DefectRegion::HalfOpen,
            spectrum,
            max_deviation: f64::NAN,
            candidates: Vec::new(),
        },
    };
    bundle.lattice = Some((resolved, set));
    Ok(())
}

fn write_tb_candidates_csv(path: &Path, resolved: &ResolvedConvention) -> Result<()> {
    use std::io::Write;
    let mut w = std::io::BufWriter::new(std::fs::File::create(path)?);
    writeln!(w, "onsite_sign,region,energies,max_deviation,selected")?;
    for c in &resolved.candidates {
        let energies: Vec<String> = c.energies_from_band.iter().map(|e| e.to_string()).collect();
        let selected = c.onsite_sign == resolved.onsite_sign && c.region == resolved.region;
        writeln!(
            w,
            "{:?},{:?},{},{},{}",
            c.onsite_sign,
            c.region,
            energies.join(";"),
            c.max_deviation.map_or(String::new(), |d| d.to_string()),
            selected
        )?;
    }
    Ok(())
}

fn write_bundle_manifest(out_dir: &Path, bundle: &ScenarioBundle) -> Result<()> {
    let mut entries: Vec<(String, String)> = vec![
        ("scenario".into(), bundle.config.kind.label().to_string()),
        ("config_hash".into(), bundle.config_hash.clone()),
        ("convention".into(), bundle.convention.label()),
        (
            "version".into(),
            env!("CARGO_PKG_VERSION").to_string(),
        ),
        (
            "calibration_rel_tol".into(),
            format!("{CALIBRATION_REL_TOL}"),
        ),
        ("stages".into(), bundle.stages.join(",")),
    ];
    if let Some(t) = &bundle.threshold {
        entries.push(("continuum_threshold".into(), format!("{}", t.threshold)));
        if t.empty_axis_warning {
            entries.push(("warning".into(), "an axis has no bound states".into()));
        }
    }
    if !bundle.bics.is_empty() {
        entries.push(("bic_count".into(), format!("{}", bundle.bics.len())));
    }
    if let Some(report) = &bundle.coldatom {
        entries.push((
            "per_sheet_bound_count".into(),
            format!("{}", report.per_sheet_bound_count),
        ));
        entries.push(("bic_count".into(), format!("{}", report.bic_count)));
        entries.push((
            "example_state".into(),
            format!(
                "{:?} -> {}",
                report.example_indices, report.example_energy
            ),
        ));
        entries.push((
            "recoil_note".into(),
            format!(
                "10*E_r = {:.2} (reduced) vs quoted total depth {:.2}",
                report.ten_recoils_reduced, report.quoted_total_depth
            ),
        ));
    }
    if let Some(report) = &bundle.coupling {
        entries.push(("rate_convention".into(), report.convention_note.into()));
        entries.push(("gamma_total".into(), format!("{}", report.total)));
    }
    if let Some((rec, fit)) = &bundle.propagation {
        entries.push((
            "dt_accuracy_guard_ok".into(),
            format!("{}", rec.dt_accuracy_guard_ok),
        ));
        if let Some(f) = fit {
            entries.push(("gamma_fit".into(), format!("{}", f.gamma)));
        }
    }
    if let Some(p) = &bundle.paraxial {
        entries.push((
            "paraxial_selected".into(),
            p.sweep[p.selected].reading.label().into(),
        ));
    }
    if let Some((resolved, set)) = &bundle.lattice {
        entries.push((
            "tb_convention".into(),
            format!("{:?}/{:?}", resolved.onsite_sign, resolved.region),
        ));
        entries.push(("tb_bic_count".into(), format!("{}", set.bics.len())));
    }
    io::write_manifest(&out_dir.join("manifest.txt"), &entries)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn tightbinding_scenario_end_to_end() {
        let dir = tempfile::tempdir().unwrap();
        let cfg = preset(ScenarioKind::TightBinding);
        let bundle = run_scenario(&cfg, dir.path()).unwrap();
        let (resolved, set) = bundle.lattice.as_ref().unwrap();
        assert!(resolved.max_deviation <= 0.01);
        assert_eq!(set.bics.len(), 6);
        assert!(dir.path().join("manifest.txt").exists());
        assert!(dir.path().join("bic_catalog.csv").exists());
        assert!(dir.path().join("convention_candidates.csv").exists());
    }

    #[test]
    fn gauss2d_calibration_prefers_reduced() {
        let cfg = preset(ScenarioKind::Gauss2d);
        let report = calibrate_convention(&cfg).unwrap();
        assert_eq!(report.chosen, KineticConvention::Reduced);
        assert_eq!(report.candidates.len(), 2);
        // Both candidates carry their achieved numbers.
        for c in &report.candidates {
            assert!(!c.achieved.is_empty());
        }
    }

    #[test]
    fn manifest_outputs_are_reproducible() {
        let cfg = preset(ScenarioKind::TightBinding);
        let dir_a = tempfile::tempdir().unwrap();
        let dir_b = tempfile::tempdir().unwrap();
        run_scenario(&cfg, dir_a.path()).unwrap();
        run_scenario(&cfg, dir_b.path()).unwrap();
        for file in ["manifest.txt", "bic_catalog.csv", "chain_spectrum.csv"] {
            let a = std::fs::read(dir_a.path().join(file)).unwrap();
            let b = std::fs::read(dir_b.path().join(file)).unwrap();
            assert_eq!(a, b, "{file} differs between identical runs");
        }
    }

    #[test]
    fn empty_custom_config_lists_missing_fields() {
        let dir = tempfile::tempdir().unwrap();
        let cfg = ScenarioConfig::empty(ScenarioKind::Custom);
        let err = run_scenario(&cfg, dir.path()).unwrap_err();
        let msg = err.to_string();
        assert!(msg.contains("validate") || msg.contains("missing"), "{msg}");
    }
}
