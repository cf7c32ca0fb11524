//! Flat key-value scenario configuration: sectioned `key = value` text,
//! hand-parsed so configs stay diff-friendly and dependency-free, with an
//! exact serialize/parse round trip and a content hash for manifests.

use std::collections::BTreeMap;
use std::fmt::Write as _;

use sha2::{Digest, Sha256};

use crate::error::{Error, Result};

/// Which turnkey system a config describes.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ScenarioKind {
    Gauss2d,
    Gauss3d,
    Paraxial,
    ColdAtom,
    TightBinding,
    Custom,
}

impl ScenarioKind {
    pub fn label(self) -> &'static str {
        match self {
            ScenarioKind::Gauss2d => "gauss2d",
            ScenarioKind::Gauss3d => "gauss3d",
            ScenarioKind::Paraxial => "paraxial",
            ScenarioKind::ColdAtom => "coldatom",
            ScenarioKind::TightBinding => "tightbinding",
            ScenarioKind::Custom => "custom",
        }
    }

    pub fn parse(s: &str) -> Result<Self> {
        Ok(match s {
            "gauss2d" => ScenarioKind::Gauss2d,
            "gauss3d" => ScenarioKind::Gauss3d,
            "paraxial" => ScenarioKind::Paraxial,
            "coldatom" => ScenarioKind::ColdAtom,
            "tightbinding" => ScenarioKind::TightBinding,
            "custom" => ScenarioKind::Custom,
            other => {
                return Err(Error::InvalidConfig(format!(
                    "unknown scenario kind '{other}'"
                )))
            }
        })
    }
}

/// Kinetic convention request: fixed, or resolved by calibration.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ConventionChoice {
    Reduced,
    Half,
    Calibrate,
}

impl ConventionChoice {
    pub fn label(self) -> &'static str {
        match self {
            ConventionChoice::Reduced => "reduced",
            ConventionChoice::Half => "half",
            ConventionChoice::Calibrate => "calibrate",
        }
    }

    pub fn parse(s: &str) -> Result<Self> {
        Ok(match s {
            "reduced" => ConventionChoice::Reduced,
            "half" => ConventionChoice::Half,
            "calibrate" => ConventionChoice::Calibrate,
            other => {
                return Err(Error::InvalidConfig(format!(
                    "unknown convention '{other}' (expected reduced|half|calibrate)"
                )))
            }
        })
    }
}

/// One Gaussian-well axis and its solve grid.
#[derive(Debug, Clone, PartialEq)]
pub struct AxisConfig {
    pub label: String,
    pub depth: f64,
    pub width: f64,
    pub center: f64,
    pub half_extent: f64,
    pub points: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct BoxConfig {
    pub factor: f64,
    pub e_max: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct BicConfig {
    pub channels: bool,
    pub max_records: Option<usize>,
    pub product_cap: usize,
    /// Product state the coupling and propagation stages focus on.
    pub target: Option<Vec<usize>>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct PerturbationConfig {
    /// `even_y`, `odd_x`, or `bump` (generic in both axes).
    pub kind: String,
    pub amplitude: f64,
    pub offset_x: f64,
    pub offset_y: f64,
    pub width: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct PropagationConfig {
    pub half_extent: f64,
    pub points: usize,
    pub dt: f64,
    pub steps: usize,
    pub sample_every: usize,
    pub absorber_width_fraction: f64,
    pub absorber_strength: f64,
    /// Detector position as a fraction of the half extent.
    pub detector_fraction: f64,
    /// Adiabatic switch-on time for the perturbation (absent = sudden).
    pub ramp_time: Option<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct TightBindingConfig {
    pub v: f64,
    pub t: f64,
    pub n_defect: usize,
    pub sites: usize,
    /// Published band-referenced energies the convention resolver matches.
    pub targets: Option<Vec<f64>>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ParaxialConfig {
    pub n0: f64,
    pub wavelength_nm: f64,
    pub delta_n0: f64,
    pub sigma_um: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ColdAtomConfig {
    pub total_reduced_depth: f64,
    pub sheet_width: f64,
    pub half_extent: f64,
    pub points: usize,
}

/// A full scenario description. Sections are optional; validation per kind
/// decides which must be present.
#[derive(Debug, Clone, PartialEq)]
pub struct ScenarioConfig {
    pub kind: ScenarioKind,
    pub convention: ConventionChoice,
    pub axes: Vec<AxisConfig>,
    pub box_cfg: Option<BoxConfig>,
    pub bic: Option<BicConfig>,
    pub perturbation: Option<PerturbationConfig>,
    pub propagation: Option<PropagationConfig>,
    pub tight_binding: Option<TightBindingConfig>,
    pub paraxial: Option<ParaxialConfig>,
    pub cold_atom: Option<ColdAtomConfig>,
}

impl ScenarioConfig {
    pub fn empty(kind: ScenarioKind) -> Self {
        ScenarioConfig {
            kind,
            convention: ConventionChoice::Calibrate,
            axes: Vec::new(),
            box_cfg: None,
            bic: None,
            perturbation: None,
            propagation: None,
            tight_binding: None,
            paraxial: None,
            cold_atom: None,
        }
    }

    /// Canonical text form: fixed section and key order.
    pub fn serialize(&self) -> String {
        let mut out = String::new();
        let _ = writeln!(out, "[scenario]");
        let _ = writeln!(out, "kind = {}", self.kind.label());
        let _ = writeln!(out, "convention = {}", self.convention.label());
        for (i, axis) in self.axes.iter().enumerate() {
            let _ = writeln!(out, "\n[axis.{i}]");
            let _ = writeln!(out, "label = {}", axis.label);
            let _ = writeln!(out, "depth = {}", axis.depth);
            let _ = writeln!(out, "width = {}", axis.width);
            let _ = writeln!(out, "center = {}", axis.center);
            let _ = writeln!(out, "half_extent = {}", axis.half_extent);
            let _ = writeln!(out, "points = {}", axis.points);
        }
        if let Some(b) = &self.box_cfg {
            let _ = writeln!(out, "\n[box]");
            let _ = writeln!(out, "factor = {}", b.factor);
            let _ = writeln!(out, "e_max = {}", b.e_max);
        }
        if let Some(b) = &self.bic {
            let _ = writeln!(out, "\n[bic]");
            let _ = writeln!(out, "channels = {}", b.channels);
            if let Some(m) = b.max_records {
                let _ = writeln!(out, "max_records = {m}");
            }
            let _ = writeln!(out, "product_cap = {}", b.product_cap);
            if let Some(t) = &b.target {
                let strs: Vec<String> = t.iter().map(|n| n.to_string()).collect();
                let _ = writeln!(out, "target = {}", strs.join(";"));
            }
        }
        if let Some(p) = &self.perturbation {
            let _ = writeln!(out, "\n[perturbation]");
            let _ = writeln!(out, "kind = {}", p.kind);
            let _ = writeln!(out, "amplitude = {}", p.amplitude);
            let _ = writeln!(out, "offset_x = {}", p.offset_x);
            let _ = writeln!(out, "offset_y = {}", p.offset_y);
            let _ = writeln!(out, "width = {}", p.width);
        }
        if let Some(p) = &self.propagation {
            let _ = writeln!(out, "\n[propagation]");
            let _ = writeln!(out, "half_extent = {}", p.half_extent);
            let _ = writeln!(out, "points = {}", p.points);
            let _ = writeln!(out, "dt = {}", p.dt);
            let _ = writeln!(out, "steps = {}", p.steps);
            let _ = writeln!(out, "sample_every = {}", p.sample_every);
            let _ = writeln!(out, "absorber_width_fraction = {}", p.absorber_width_fraction);
            let _ = writeln!(out, "absorber_strength = {}", p.absorber_strength);
            let _ = writeln!(out, "detector_fraction = {}", p.detector_fraction);
            if let Some(r) = p.ramp_time {
                let _ = writeln!(out, "ramp_time = {r}");
            }
        }
        if let Some(t) = &self.tight_binding {
            let _ = writeln!(out, "\n[tightbinding]");
            let _ = writeln!(out, "v = {}", t.v);
            let _ = writeln!(out, "t = {}", t.t);
            let _ = writeln!(out, "n = {}", t.n_defect);
            let _ = writeln!(out, "sites = {}", t.sites);
            if let Some(targets) = &t.targets {
                let strs: Vec<String> = targets.iter().map(|x| x.to_string()).collect();
                let _ = writeln!(out, "targets = {}", strs.join(";"));
            }
        }
        if let Some(p) = &self.paraxial {
            let _ = writeln!(out, "\n[paraxial]");
            let _ = writeln!(out, "n0 = {}", p.n0);
            let _ = writeln!(out, "wavelength_nm = {}", p.wavelength_nm);
            let _ = writeln!(out, "delta_n0 = {}", p.delta_n0);
            let _ = writeln!(out, "sigma_um = {}", p.sigma_um);
        }
        if let Some(c) = &self.cold_atom {
            let _ = writeln!(out, "\n[coldatom]");
            let _ = writeln!(out, "total_reduced_depth = {}", c.total_reduced_depth);
            let _ = writeln!(out, "sheet_width = {}", c.sheet_width);
            let _ = writeln!(out, "half_extent = {}", c.half_extent);
            let _ = writeln!(out, "points = {}", c.points);
        }
        out
    }

    /// First 16 hex digits of the SHA-256 of the canonical serialization.
    pub fn hash(&self) -> String {
        let digest = Sha256::digest(self.serialize().as_bytes());
        digest[..8].iter().map(|b| format!("{b:02x}")).collect()
    }

    pub fn parse(text: &str) -> Result<Self> {
        let sections = split_sections(text)?;
        let mut cfg = ScenarioConfig::empty(ScenarioKind::Custom);

        let scenario = sections
            .get("scenario")
            .ok_or_else(|| Error::InvalidConfig("missing [scenario] section".into()))?;
        cfg.kind = ScenarioKind::parse(&require(scenario, "scenario", "kind")?)?;
        cfg.convention = ConventionChoice::parse(&require(scenario, "scenario", "convention")?)?;
        check_known(scenario, "scenario", &["kind", "convention"])?;

        let mut axis_ids: Vec<usize> = sections
            .keys()
            .filter_map(|s| s.strip_prefix("axis.").and_then(|i| i.parse().ok()))
            .collect();
        axis_ids.sort_unstable();
        for (expect, id) in axis_ids.iter().enumerate() {
            if expect != *id {
                return Err(Error::InvalidConfig(format!(
                    "axis sections must be contiguous from 0; found axis.{id}"
                )));
            }
            let sec_name = format!("axis.{id}");
            let sec = &sections[&sec_name];
            cfg.axes.push(AxisConfig {
                label: require(sec, &sec_name, "label")?,
                depth: require_f64(sec, &sec_name, "depth")?,
                width: require_f64(sec, &sec_name, "width")?,
                center: require_f64(sec, &sec_name, "center")?,
                half_extent: require_f64(sec, &sec_name, "half_extent")?,
                points: require_usize(sec, &sec_name, "points")?,
            });
            check_known(
                sec,
                &sec_name,
                &["label", "depth", "width", "center", "half_extent", "points"],
            )?;
        }

        if let Some(sec) = sections.get("box") {
            cfg.box_cfg = Some(BoxConfig {
                factor: require_f64(sec, "box", "factor")?,
                e_max: require_f64(sec, "box", "e_max")?,
            });
            check_known(sec, "box", &["factor", "e_max"])?;
        }
        if let Some(sec) = sections.get("bic") {
            cfg.bic = Some(BicConfig {
                channels: require_bool(sec, "bic", "channels")?,
                max_records: optional_usize(sec, "bic", "max_records")?,
                product_cap: require_usize(sec, "bic", "product_cap")?,
                target: optional_usize_list(sec, "bic", "target")?,
            });
            check_known(
                sec,
                "bic",
                &["channels", "max_records", "product_cap", "target"],
            )?;
        }
        if let Some(sec) = sections.get("perturbation") {
            cfg.perturbation = Some(PerturbationConfig {
                kind: require(sec, "perturbation", "kind")?,
                amplitude: require_f64(sec, "perturbation", "amplitude")?,
                offset_x: require_f64(sec, "perturbation", "offset_x")?,
                offset_y: require_f64(sec, "perturbation", "offset_y")?,
                width: require_f64(sec, "perturbation", "width")?,
            });
            check_known(
                sec,
                "perturbation",
                &["kind", "amplitude", "offset_x", "offset_y", "width"],
            )?;
        }
        if let Some(sec) = sections.get("propagation") {
            cfg.propagation = Some(PropagationConfig {
                half_extent: require_f64(sec, "propagation", "half_extent")?,
                points: require_usize(sec, "propagation", "points")?,
                dt: require_f64(sec, "propagation", "dt")?,
                steps: require_usize(sec, "propagation", "steps")?,
                sample_every: require_usize(sec, "propagation", "sample_every")?,
                absorber_width_fraction: require_f64(
                    sec,
                    "propagation",
                    "absorber_width_fraction",
                )?,
                absorber_strength: require_f64(sec, "propagation", "absorber_strength")?,
                detector_fraction: require_f64(sec, "propagation", "detector_fraction")?,
                ramp_time: optional_f64(sec, "propagation", "ramp_time")?,
            });
            check_known(
                sec,
                "propagation",
                &[
                    "half_extent",
                    "points",
                    "dt",
                    "steps",
                    "sample_every",
                    "absorber_width_fraction",
                    "absorber_strength",
                    "detector_fraction",
                    "ramp_time",
                ],
            )?;
        }
        if let Some(sec) = sections.get("tightbinding") {
            cfg.tight_binding = Some(TightBindingConfig {
                v: require_f64(sec, "tightbinding", "v")?,
                t: require_f64(sec, "tightbinding", "t")?,
                n_defect: require_usize(sec, "tightbinding", "n")?,
                sites: require_usize(sec, "tightbinding", "sites")?,
                targets: optional_f64_list(sec, "tightbinding", "targets")?,
            });
            check_known(sec, "tightbinding", &["v", "t", "n", "sites", "targets"])?;
        }
        if let Some(sec) = sections.get("paraxial") {
            cfg.paraxial = Some(ParaxialConfig {
                n0: require_f64(sec, "paraxial", "n0")?,
                wavelength_nm: require_f64(sec, "paraxial", "wavelength_nm")?,
                delta_n0: require_f64(sec, "paraxial", "delta_n0")?,
                sigma_um: require_f64(sec, "paraxial", "sigma_um")?,
            });
            check_known(
                sec,
                "paraxial",
                &["n0", "wavelength_nm", "delta_n0", "sigma_um"],
            )?;
        }
        if let Some(sec) = sections.get("coldatom") {
            cfg.cold_atom = Some(ColdAtomConfig {
                total_reduced_depth: require_f64(sec, "coldatom", "total_reduced_depth")?,
                sheet_width: require_f64(sec, "coldatom", "sheet_width")?,
                half_extent: require_f64(sec, "coldatom", "half_extent")?,
                points: require_usize(sec, "coldatom", "points")?,
            });
            check_known(
                sec,
                "coldatom",
                &["total_reduced_depth", "sheet_width", "half_extent", "points"],
            )?;
        }

        let known_sections: Vec<&str> = vec![
            "scenario",
            "box",
            "bic",
            "perturbation",
            "propagation",
            "tightbinding",
            "paraxial",
            "coldatom",
        ];
        for name in sections.keys() {
            if !known_sections.contains(&name.as_str()) && !name.starts_with("axis.") {
                return Err(Error::InvalidConfig(format!("unknown section [{name}]")));
            }
        }

        cfg.validate()?;
        Ok(cfg)
    }

    /// Per-kind completeness check; reports every missing piece at once.
    pub fn validate(&self) -> Result<()> {
        let mut missing: Vec<&str> = Vec::new();
        match self.kind {
            ScenarioKind::Gauss2d => {
                if self.axes.len() != 2 {
                    missing.push("two [axis.N] sections");
                }
                if self.box_cfg.is_none() {
                    missing.push("[box]");
                }
            }
            ScenarioKind::Gauss3d => {
                if self.axes.len() != 3 {
                    missing.push("three [axis.N] sections");
                }
                if self.box_cfg.is_none() {
                    missing.push("[box]");
                }
            }
            ScenarioKind::Paraxial => {
                if self.paraxial.is_none() {
                    missing.push("[paraxial]");
                }
            }
            ScenarioKind::ColdAtom => {
                if self.cold_atom.is_none() {
                    missing.push("[coldatom]");
                }
            }
            ScenarioKind::TightBinding => {
                if self.tight_binding.is_none() {
                    missing.push("[tightbinding]");
                }
            }
            ScenarioKind::Custom => {
                if self.axes.is_empty()
                    && self.tight_binding.is_none()
                    && self.paraxial.is_none()
                    && self.cold_atom.is_none()
                {
                    missing.push("at least one system section ([axis.N], [tightbinding], [paraxial] or [coldatom])");
                }
                if !self.axes.is_empty() && self.box_cfg.is_none() {
                    missing.push("[box]");
                }
            }
        }
        if missing.is_empty() {
            Ok(())
        } else {
            Err(Error::InvalidConfig(format!(
                "scenario '{}' is missing: {}",
                self.kind.label(),
                missing.join(", ")
            )))
        }
    }
}

type Section = BTreeMap<String, String>;

fn split_sections(text: &str) -> Result<BTreeMap<String, Section>> {
    let mut sections: BTreeMap<String, Section> = BTreeMap::new();
    let mut current: Option<String> = None;
    for (lineno, raw) in text.lines().enumerate() {
        let line = raw.split('#').next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        if let Some(name) = line.strip_prefix('[').and_then(|s| s.strip_suffix(']')) {
            let name = name.trim().to_string();
            if sections.contains_key(&name) {
                return Err(Error::InvalidConfig(format!(
                    "duplicate section [{name}] at line {}",
                    lineno + 1
                )));
            }
            sections.insert(name.clone(), Section::new());
            current = Some(name);
            continue;
        }
        let Some((key, value)) = line.split_once('=') else {
            return Err(Error::InvalidConfig(format!(
                "line {} is neither a section nor 'key = value': {raw:?}",
                lineno + 1
            )));
        };
        let section = current.as_ref().ok_or_else(|| {
            Error::InvalidConfig(format!("key before any section at line {}", lineno + 1))
        })?;
        let prev = sections
            .get_mut(section)
            .unwrap()
            .insert(key.trim().to_string(), value.trim().to_string());
        if prev.is_some() {
            return Err(Error::InvalidConfig(format!(
                "duplicate key '{}' in [{}]",
                key.trim(),
                section
            )));
        }
    }
    Ok(sections)
}

fn require(sec: &Section, section: &str, key: &str) -> Result<String> {
    sec.get(key).cloned().ok_or_else(|| {
        Error::InvalidConfig(format!("missing key '{key}' in section [{section}]"))
    })
}

fn require_f64(sec: &Section, section: &str, key: &str) -> Result<f64> {
    require(sec, section, key)?.parse().map_err(|_| {
        Error::InvalidConfig(format!("key '{key}' in [{section}] is not a number"))
    })
}

fn require_usize(sec: &Section, section: &str, key: &str) -> Result<usize> {
    require(sec, section, key)?.parse().map_err(|_| {
        Error::InvalidConfig(format!("key '{key}' in [{section}] is not a count"))
    })
}

fn require_bool(sec: &Section, section: &str, key: &str) -> Result<bool> {
    require(sec, section, key)?.parse().map_err(|_| {
        Error::InvalidConfig(format!("key '{key}' in [{section}] is not true/false"))
    })
}

fn optional_f64(sec: &Section, section: &str, key: &str) -> Result<Option<f64>> {
    match sec.get(key) {
        Some(v) => v.parse().map(Some).map_err(|_| {
            Error::InvalidConfig(format!("key '{key}' in [{section}] is not a number"))
        }),
        None => Ok(None),
    }
}

fn optional_usize(sec: &Section, section: &str, key: &str) -> Result<Option<usize>> {
    match sec.get(key) {
        Some(v) => v.parse().map(Some).map_err(|_| {
            Error::InvalidConfig(format!("key '{key}' in [{section}] is not a count"))
        }),
        None => Ok(None),
    }
}

fn optional_usize_list(sec: &Section, section: &str, key: &str) -> Result<Option<Vec<usize>>> {
    match sec.get(key) {
        Some(v) => v
            .split(';')
            .map(|s| {
                s.trim().parse().map_err(|_| {
                    Error::InvalidConfig(format!(
                        "key '{key}' in [{section}] is not a ';'-separated list of counts"
                    ))
                })
            })
            .collect::<Result<Vec<usize>>>()
            .map(Some),
        None => Ok(None),
    }
}

fn optional_f64_list(sec: &Section, section: &str, key: &str) -> Result<Option<Vec<f64>>> {
    match sec.get(key) {
        Some(v) => v
            .split(';')
            .map(|s| {
                s.trim().parse().map_err(|_| {
                    Error::InvalidConfig(format!(
                        "key '{key}' in [{section}] is not a ';'-separated list of numbers"
                    ))
                })
            })
            .collect::<Result<Vec<f64>>>()
            .map(Some),
        None => Ok(None),
    }
}

fn check_known(sec: &Section, section: &str, known: &[&str]) -> Result<()> {
    for key in sec.keys() {
        if !known.contains(&key.as_str()) {
            return Err(Error::InvalidConfig(format!(
                "unknown key '{key}' in section [{section}]"
            )));
        }
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::scenarios::presets::preset;

    #[test]
    fn presets_round_trip_exactly() {
        for kind in [
            ScenarioKind::Gauss2d,
            ScenarioKind::Gauss3d,
            ScenarioKind::Paraxial,
            ScenarioKind::ColdAtom,
            ScenarioKind::TightBinding,
        ] {
            let cfg = preset(kind);
            let text = cfg.serialize();
            let parsed = ScenarioConfig::parse(&text).unwrap();
            assert_eq!(parsed, cfg, "round trip for {}", kind.label());
            assert_eq!(parsed.hash(), cfg.hash());
        }
    }

    #[test]
    fn empty_custom_reports_missing_fields() {
        let err = ScenarioConfig::parse("[scenario]\nkind = custom\nconvention = reduced\n")
            .unwrap_err();
        let msg = err.to_string();
        assert!(msg.contains("missing"), "{msg}");
        assert!(msg.contains("axis"), "{msg}");
    }

    #[test]
    fn unknown_keys_are_rejected() {
        let text = "[scenario]\nkind = tightbinding\nconvention = reduced\nbogus = 1\n";
        assert!(ScenarioConfig::parse(text).is_err());
        let text = "[scenario]\nkind = tightbinding\nconvention = reduced\n\n[nonsense]\na = 1\n";
        assert!(ScenarioConfig::parse(text).is_err());
    }

    #[test]
    fn comments_and_spacing_are_tolerated() {
        let text = "\n# a comment\n[scenario]\n  kind =  tightbinding  # trailing\nconvention = reduced\n\n[tightbinding]\nv = -1\nt = -0.3\nn = 2\nsites = 201\n";
        let cfg = ScenarioConfig::parse(text).unwrap();
        assert_eq!(cfg.kind, ScenarioKind::TightBinding);
        assert_eq!(cfg.tight_binding.unwrap().sites, 201);
    }

    #[test]
    fn hash_tracks_content() {
        let a = preset(ScenarioKind::Gauss2d);
        let mut b = a.clone();
        b.axes[0].depth = 1.5;
        assert_ne!(a.hash(), b.hash());
        assert_eq!(a.hash().len(), 16);
    }
}
