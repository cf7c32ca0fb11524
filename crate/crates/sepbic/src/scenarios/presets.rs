//! Built-in scenario presets. Physics parameters are the published ones;
//! grids, boxes and propagation settings are this crate's defaults, chosen
//! so the catalog quantities converge well inside their quoted tolerances.
//! Every key can be overridden through a config file.

use super::config::*;

pub fn preset(kind: ScenarioKind) -> ScenarioConfig {
    match kind {
        ScenarioKind::Gauss2d => gauss2d(),
        ScenarioKind::Gauss3d => gauss3d(),
        ScenarioKind::Paraxial => paraxial(),
        ScenarioKind::ColdAtom => coldatom(),
        ScenarioKind::TightBinding => tightbinding(),
        ScenarioKind::Custom => ScenarioConfig::empty(ScenarioKind::Custom),
    }
}

pub fn preset_by_name(name: &str) -> crate::error::Result<ScenarioConfig> {
    Ok(preset(ScenarioKind::parse(name)?))
}

/// Double Gaussian well, depths {1.4, 2.2}, widths {5, 4}: hosts the
/// even-x/odd-y BIC near -1.04 with exactly two degenerate channels.
fn gauss2d() -> ScenarioConfig {
    ScenarioConfig {
        kind: ScenarioKind::Gauss2d,
        convention: ConventionChoice::Calibrate,
        axes: vec![
            AxisConfig {
                label: "x".into(),
                depth: 1.4,
                width: 5.0,
                center: 0.0,
                half_extent: 40.0,
                points: 2001,
            },
            AxisConfig {
                label: "y".into(),
                depth: 2.2,
                width: 4.0,
                center: 0.0,
                half_extent: 40.0,
                points: 2001,
            },
        ],
        box_cfg: Some(BoxConfig {
            factor: 10.0,
            e_max: 3.0,
        }),
        bic: Some(BicConfig {
            channels: true,
            max_records: None,
            product_cap: 8_000_000,
            target: Some(vec![2, 1]),
        }),
        perturbation: Some(PerturbationConfig {
            kind: "odd_x".into(),
            amplitude: 0.2,
            offset_x: 2.0,
            offset_y: 1.5,
            width: 2.0,
        }),
        propagation: Some(PropagationConfig {
            half_extent: 50.0,
            points: 512,
            dt: 0.05,
            steps: 5000,
            sample_every: 10,
            absorber_width_fraction: 0.25,
            absorber_strength: 1.5,
            detector_fraction: 0.7,
            ramp_time: Some(80.0),
        }),
        tight_binding: None,
        paraxial: None,
        cold_atom: None,
    }
}

/// Three Gaussian wells, depths {0.4, 0.4, 1}, widths {12, 12, 3}: the
/// |1,1,1> BIC whose radiation dimensionality is steered by perturbation
/// parity.
fn gauss3d() -> ScenarioConfig {
    let xy = AxisConfig {
        label: "x".into(),
        depth: 0.4,
        width: 12.0,
        center: 0.0,
        half_extent: 115.0,
        points: 2876,
    };
    ScenarioConfig {
        kind: ScenarioKind::Gauss3d,
        convention: ConventionChoice::Calibrate,
        axes: vec![
            xy.clone(),
            AxisConfig {
                label: "y".into(),
                ..xy
            },
            AxisConfig {
                label: "z".into(),
                depth: 1.0,
                width: 3.0,
                center: 0.0,
                half_extent: 65.0,
                points: 1626,
            },
        ],
        box_cfg: Some(BoxConfig {
            factor: 6.0,
            e_max: 1.2,
        }),
        bic: Some(BicConfig {
            channels: true,
            max_records: None,
            product_cap: 8_000_000,
            target: Some(vec![1, 1, 1]),
        }),
        perturbation: Some(PerturbationConfig {
            kind: "even_z".into(),
            amplitude: 0.05,
            offset_x: 3.0,
            offset_y: 2.0,
            width: 3.0,
        }),
        propagation: None,
        tight_binding: None,
        paraxial: None,
        cold_atom: None,
    }
}

/// Two detuned light sheets in a photorefractive medium, published
/// parameters. The interpretation sweep happens inside the runner.
fn paraxial() -> ScenarioConfig {
    ScenarioConfig {
        kind: ScenarioKind::Paraxial,
        convention: ConventionChoice::Reduced,
        axes: Vec::new(),
        box_cfg: None,
        bic: None,
        perturbation: None,
        propagation: None,
        tight_binding: None,
        paraxial: Some(ParaxialConfig {
            n0: 2.3,
            wavelength_nm: 485.0,
            delta_n0: 5.7e-4,
            sigma_um: 30.0,
        }),
        cold_atom: None,
    }
}

/// Three crossed light sheets for Rb-87, in reduced units (lengths in
/// micrometers, energies in units of hbar^2 / (2 m x0^2) with x0 = 1 um).
fn coldatom() -> ScenarioConfig {
    ScenarioConfig {
        kind: ScenarioKind::ColdAtom,
        convention: ConventionChoice::Reduced,
        axes: Vec::new(),
        box_cfg: None,
        bic: None,
        perturbation: None,
        propagation: None,
        tight_binding: None,
        paraxial: None,
        cold_atom: Some(ColdAtomConfig {
            total_reduced_depth: 446.93,
            sheet_width: 20.0,
            half_extent: 250.0,
            points: 50001,
        }),
    }
}

/// Defect chains with the published `{V, t, N}` recipe and the published
/// band-referenced energies the convention resolver must reproduce.
fn tightbinding() -> ScenarioConfig {
    ScenarioConfig {
        kind: ScenarioKind::TightBinding,
        convention: ConventionChoice::Reduced,
        axes: Vec::new(),
        box_cfg: None,
        bic: None,
        perturbation: None,
        propagation: None,
        tight_binding: Some(TightBindingConfig {
            v: -1.0,
            t: -0.3,
            n_defect: 2,
            sites: 201,
            targets: Some(vec![-0.93, -0.74, -0.46, -0.16]),
        }),
        paraxial: None,
        cold_atom: None,
    }
}
