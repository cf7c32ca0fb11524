//! Artifact export: CSV catalogs, self-describing binary grid dumps, and the
//! run manifest.
//!
//! Everything written here is deterministic for a given input: fixed column
//! orders, fixed iteration orders, and shortest round-trip float formatting,
//! so identical configurations produce bit-identical files.

use std::io::{BufWriter, Read, Write};
use std::path::Path;

use ndarray::Array2;
use num_complex::Complex64;

use crate::coupling::CouplingReport;
use crate::eigen1d::{KineticConvention, Spectrum1D};
use crate::error::{Error, Result};
use crate::grid::Grid1D;
use crate::lattice::{ChainSpectrum, LatticeBicSet};
use crate::separable::BicRecord;
use crate::tdse2d::RadiationRecord;

fn convention_tag(c: KineticConvention) -> (u8, f64) {
    match c {
        KineticConvention::Reduced => (0, 0.0),
        KineticConvention::HalfMass { mass } => (1, mass),
    }
}

fn convention_from_tag(tag: u8, mass: f64) -> Result<KineticConvention> {
    match tag {
        0 => Ok(KineticConvention::Reduced),
        1 => Ok(KineticConvention::HalfMass { mass }),
        _ => Err(Error::InvalidConfig(format!("unknown convention tag {tag}"))),
    }
}

/// `(n, E, parity)` rows for one axis spectrum.
pub fn write_spectrum_csv(path: &Path, spec: &Spectrum1D) -> Result<()> {
    let mut w = BufWriter::new(std::fs::File::create(path)?);
    writeln!(w, "n,energy,parity")?;
    for b in &spec.bound_states {
        writeln!(w, "{},{},{}", b.n, b.energy, b.parity.label())?;
    }
    Ok(())
}

/// Band-referenced chain spectrum in the same schema.
pub fn write_chain_spectrum_csv(path: &Path, spec: &ChainSpectrum) -> Result<()> {
    let mut w = BufWriter::new(std::fs::File::create(path)?);
    writeln!(w, "n,energy,parity")?;
    for b in &spec.bound_states {
        writeln!(w, "{},{},{}", b.n, b.energy_from_band, b.parity.label())?;
    }
    Ok(())
}

/// BIC catalog: `(indices, energy, threshold, n_channels, symmetry_protected)`.
pub fn write_bic_catalog_csv(path: &Path, bics: &[BicRecord]) -> Result<()> {
    let mut w = BufWriter::new(std::fs::File::create(path)?);
    writeln!(w, "indices,energy,threshold,n_channels,symmetry_protected")?;
    for b in bics {
        let idx: Vec<String> = b.state.indices.iter().map(|n| n.to_string()).collect();
        writeln!(
            w,
            "{},{},{},{},{}",
            idx.join(";"),
            b.state.energy,
            b.threshold,
            b.channel_count,
            b.symmetry_protected
        )?;
    }
    Ok(())
}

/// Lattice BIC catalog in the shared schema.
pub fn write_lattice_bic_csv(path: &Path, set: &LatticeBicSet) -> Result<()> {
    let mut w = BufWriter::new(std::fs::File::create(path)?);
    writeln!(w, "indices,energy,threshold,n_channels,symmetry_protected")?;
    for b in &set.bics {
        writeln!(
            w,
            "{};{},{},{},{},{}",
            b.indices.0,
            b.indices.1,
            b.energy,
            set.threshold,
            b.channels.len(),
            b.symmetry_protected
        )?;
    }
    Ok(())
}

/// Golden-rule report rows:
/// `(channel, sector, m2, rho, gamma, forbidden, forbidden_axis)`.
pub fn write_coupling_csv(path: &Path, report: &CouplingReport) -> Result<()> {
    let n_axes = report.state.indices.len();
    let mut w = BufWriter::new(std::fs::File::create(path)?);
    writeln!(
        w,
        "channel,sector,m2,rho,gamma,forbidden,forbidden_axis"
    )?;
    for row in &report.rows {
        writeln!(
            w,
            "{},{},{},{},{},{},{}",
            row.channel.label(n_axes),
            row.sector.label(),
            row.m2,
            row.rho,
            row.gamma,
            row.forbidden_axis.is_some(),
            row.forbidden_axis.map_or(String::new(), |a| a.to_string()),
        )?;
    }
    Ok(())
}

/// Observable time series of a propagation run, wide format.
pub fn write_observables_csv(path: &Path, rec: &RadiationRecord) -> Result<()> {
    let mut w = BufWriter::new(std::fs::File::create(path)?);
    writeln!(
        w,
        "time,survival,interior_norm,flux_px,flux_mx,flux_py,flux_my,cum_px,cum_mx,cum_py,cum_my,absorbed_rate,cum_absorbed"
    )?;
    for i in 0..rec.times.len() {
        writeln!(
            w,
            "{},{},{},{},{},{},{},{},{},{},{},{},{}",
            rec.times[i],
            rec.survival[i],
            rec.interior_norm[i],
            rec.flux[0][i],
            rec.flux[1][i],
            rec.flux[2][i],
            rec.flux[3][i],
            rec.cumulative_flux[0][i],
            rec.cumulative_flux[1][i],
            rec.cumulative_flux[2][i],
            rec.cumulative_flux[3][i],
            rec.absorbed_rate[i],
            rec.cumulative_absorbed[i],
        )?;
    }
    Ok(())
}

/// The same series in long format (`time,series,value`), one row per sample
/// per series, ready for plotting tools.
pub fn write_observables_long_csv(path: &Path, rec: &RadiationRecord) -> Result<()> {
    let mut w = BufWriter::new(std::fs::File::create(path)?);
    writeln!(w, "time,series,value")?;
    let series: [(&str, &Vec<f64>); 7] = [
        ("survival", &rec.survival),
        ("interior_norm", &rec.interior_norm),
        ("flux_px", &rec.flux[0]),
        ("flux_mx", &rec.flux[1]),
        ("flux_py", &rec.flux[2]),
        ("flux_my", &rec.flux[3]),
        ("absorbed_rate", &rec.absorbed_rate),
    ];
    for (name, values) in series {
        for (t, v) in rec.times.iter().zip(values) {
            writeln!(w, "{t},{name},{v}")?;
        }
    }
    Ok(())
}

const WAVE_MAGIC: &[u8; 4] = b"SBW1";
const FIELD_MAGIC: &[u8; 4] = b"SBF2";

/// Binary dump of one 1D wavefunction with a self-describing header:
/// magic, version, axis label, grid bounds, point count, convention.
pub fn write_wavefunction(
    path: &Path,
    label: &str,
    grid: &Grid1D,
    convention: KineticConvention,
    values: &[f64],
) -> Result<()> {
    if values.len() != grid.len() {
        return Err(Error::GridMismatch(
            "wavefunction does not match its grid".into(),
        ));
    }
    let mut w = BufWriter::new(std::fs::File::create(path)?);
    w.write_all(WAVE_MAGIC)?;
    w.write_all(&1u32.to_le_bytes())?;
    let label_bytes = label.as_bytes();
    w.write_all(&(label_bytes.len() as u32).to_le_bytes())?;
    w.write_all(label_bytes)?;
    w.write_all(&grid.x_min().to_le_bytes())?;
    w.write_all(&grid.x_max().to_le_bytes())?;
    w.write_all(&(grid.len() as u64).to_le_bytes())?;
    let (tag, mass) = convention_tag(convention);
    w.write_all(&[tag])?;
    w.write_all(&mass.to_le_bytes())?;
    for v in values {
        w.write_all(&v.to_le_bytes())?;
    }
    Ok(())
}

pub struct WavefunctionDump {
    pub label: String,
    pub grid: Grid1D,
    pub convention: KineticConvention,
    pub values: Vec<f64>,
}

pub fn read_wavefunction(path: &Path) -> Result<WavefunctionDump> {
    let mut r = std::fs::File::open(path)?;
    let mut buf = Vec::new();
    r.read_to_end(&mut buf)?;
    let mut cur = Cursor::new(&buf);
    if cur.take_bytes(4)? != WAVE_MAGIC {
        return Err(Error::InvalidConfig("not a wavefunction dump".into()));
    }
    let version = cur.take_u32()?;
    if version != 1 {
        return Err(Error::InvalidConfig(format!(
            "unsupported wavefunction dump version {version}"
        )));
    }
    let label_len = cur.take_u32()? as usize;
    let label = String::from_utf8(cur.take_bytes(label_len)?.to_vec())
        .map_err(|e| Error::InvalidConfig(format!("bad label: {e}")))?;
    let x_min = cur.take_f64()?;
    let x_max = cur.take_f64()?;
    let n = cur.take_u64()? as usize;
    let tag = cur.take_bytes(1)?[0];
    let mass = cur.take_f64()?;
    let convention = convention_from_tag(tag, mass)?;
    let mut values = Vec::with_capacity(n);
    for _ in 0..n {
        values.push(cur.take_f64()?);
    }
    Ok(WavefunctionDump {
        label,
        grid: Grid1D::new(x_min, x_max, n)?,
        convention,
        values,
    })
}

/// Binary snapshot of a complex 2D field: header (step, time, both grid
/// specs), then interleaved re/im doubles in row-major `[ix][iy]` order.
pub fn write_field_snapshot(
    path: &Path,
    step: u64,
    time: f64,
    grid_x: &Grid1D,
    grid_y: &Grid1D,
    field: &Array2<Complex64>,
) -> Result<()> {
    if field.shape() != [grid_x.len(), grid_y.len()] {
        return Err(Error::GridMismatch("field does not match grids".into()));
    }
    let mut w = BufWriter::new(std::fs::File::create(path)?);
    w.write_all(FIELD_MAGIC)?;
    w.write_all(&1u32.to_le_bytes())?;
    w.write_all(&step.to_le_bytes())?;
    w.write_all(&time.to_le_bytes())?;
    for g in [grid_x, grid_y] {
        w.write_all(&g.x_min().to_le_bytes())?;
        w.write_all(&g.x_max().to_le_bytes())?;
        w.write_all(&(g.len() as u64).to_le_bytes())?;
    }
    for z in field.iter() {
        w.write_all(&z.re.to_le_bytes())?;
        w.write_all(&z.im.to_le_bytes())?;
    }
    Ok(())
}

pub struct FieldSnapshot {
    pub step: u64,
    pub time: f64,
    pub grid_x: Grid1D,
    pub grid_y: Grid1D,
    pub field: Array2<Complex64>,
}

pub fn read_field_snapshot(path: &Path) -> Result<FieldSnapshot> {
    let mut r = std::fs::File::open(path)?;
    let mut buf = Vec::new();
    r.read_to_end(&mut buf)?;
    let mut cur = Cursor::new(&buf);
    if cur.take_bytes(4)? != FIELD_MAGIC {
        return Err(Error::InvalidConfig("not a field snapshot".into()));
    }
    let version = cur.take_u32()?;
    if version != 1 {
        return Err(Error::InvalidConfig(format!(
            "unsupported field snapshot version {version}"
        )));
    }
    let step = cur.take_u64()?;
    let time = cur.take_f64()?;
    let mut grids = Vec::with_capacity(2);
    for _ in 0..2 {
        let x_min = cur.take_f64()?;
        let x_max = cur.take_f64()?;
        let n = cur.take_u64()? as usize;
        grids.push(Grid1D::new(x_min, x_max, n)?);
    }
    let (nx, ny) = (grids[0].len(), grids[1].len());
    let mut field = Array2::zeros((nx, ny));
    for ix in 0..nx {
        for iy in 0..ny {
            let re = cur.take_f64()?;
            let im = cur.take_f64()?;
            field[(ix, iy)] = Complex64::new(re, im);
        }
    }
    Ok(FieldSnapshot {
        step,
        time,
        grid_x: grids.remove(0),
        grid_y: grids.remove(0),
        field,
    })
}

struct Cursor<'a> {
    buf: &'a [u8],
    pos: usize,
}

impl<'a> Cursor<'a> {
    fn new(buf: &'a [u8]) -> Self {
        Cursor { buf, pos: 0 }
    }

    fn take_bytes(&mut self, n: usize) -> Result<&'a [u8]> {
        if self.pos + n > self.buf.len() {
            return Err(Error::InvalidConfig("truncated binary dump".into()));
        }
        let s = &self.buf[self.pos..self.pos + n];
        self.pos += n;
        Ok(s)
    }

    fn take_u32(&mut self) -> Result<u32> {
        Ok(u32::from_le_bytes(self.take_bytes(4)?.try_into().unwrap()))
    }

    fn take_u64(&mut self) -> Result<u64> {
        Ok(u64::from_le_bytes(self.take_bytes(8)?.try_into().unwrap()))
    }

    fn take_f64(&mut self) -> Result<f64> {
        Ok(f64::from_le_bytes(self.take_bytes(8)?.try_into().unwrap()))
    }
}

/// The run manifest: config hash, resolved convention, tolerances, versions,
/// and the stages that completed. Plain `key = value` lines.
pub fn write_manifest(path: &Path, entries: &[(String, String)]) -> Result<()> {
    let mut w = BufWriter::new(std::fs::File::create(path)?);
    for (k, v) in entries {
        writeln!(w, "{k} = {v}")?;
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::eigen1d::{solve_bound_states, Potential1D};

    #[test]
    fn wavefunction_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("wf.bin");
        let grid = Grid1D::symmetric(45.0, 901).unwrap();
        let spec = solve_bound_states(
            &Potential1D::gaussian(2.0, 2.0),
            &grid,
            KineticConvention::Reduced,
            "x",
        )
        .unwrap();
        let values = &spec.bound_states[0].wavefunction;
        write_wavefunction(&path, "x", &grid, KineticConvention::Reduced, values).unwrap();
        let dump = read_wavefunction(&path).unwrap();
        assert_eq!(dump.label, "x");
        assert_eq!(dump.grid, grid);
        assert_eq!(dump.convention, KineticConvention::Reduced);
        assert_eq!(&dump.values, values);
    }

    #[test]
    fn field_snapshot_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("field.bin");
        let gx = Grid1D::symmetric(5.0, 16).unwrap();
        let gy = Grid1D::symmetric(4.0, 12).unwrap();
        let mut field = Array2::zeros((16, 12));
        for ix in 0..16 {
            for iy in 0..12 {
                field[(ix, iy)] = Complex64::new(ix as f64, -(iy as f64));
            }
        }
        write_field_snapshot(&path, 42, 2.1, &gx, &gy, &field).unwrap();
        let snap = read_field_snapshot(&path).unwrap();
        assert_eq!(snap.step, 42);
        assert_eq!(snap.time, 2.1);
        assert_eq!(snap.grid_x, gx);
        assert_eq!(snap.grid_y, gy);
        assert_eq!(snap.field, field);
    }

    #[test]
    fn spectrum_csv_has_expected_shape() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("spec.csv");
        let grid = Grid1D::symmetric(40.0, 801).unwrap();
        let spec = solve_bound_states(
            &Potential1D::gaussian(1.4, 5.0),
            &grid,
            KineticConvention::Reduced,
            "x",
        )
        .unwrap();
        write_spectrum_csv(&path, &spec).unwrap();
        let text = std::fs::read_to_string(&path).unwrap();
        let lines: Vec<&str> = text.lines().collect();
        assert_eq!(lines[0], "n,energy,parity");
        assert_eq!(lines.len(), spec.bound_count() + 1);
        assert!(lines[1].starts_with("0,") && lines[1].ends_with(",even"));
    }
}
