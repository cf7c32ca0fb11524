//! One separated 1D Hamiltonian: bound states with parities, box-normalized
//! continuum states, and the 1D density of states recovered from box level
//! spacing.
//!
//! The zero of energy is always the continuum edge of the isolated axis, so a
//! bound state is simply `E < 0` (up to a small configurable edge tolerance).

use crate::error::{Error, Result};
use crate::grid::Grid1D;
use crate::tridiag::TridiagonalOperator;

/// Kinetic-term convention of the 1D Hamiltonian.
///
/// `Reduced` is `H = -d2/dx2 + V`; `HalfMass` is `H = -(1/2m) d2/dx2 + V`.
/// Physical write-ups rarely say which one their "arbitrary units" mean, so
/// scenario calibration solves under both and keeps whichever reproduces the
/// published level positions.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum KineticConvention {
    Reduced,
    HalfMass { mass: f64 },
}

impl KineticConvention {
    /// Coefficient `c` in `-c d2/dx2`.
    pub fn kinetic_coefficient(self) -> f64 {
        match self {
            KineticConvention::Reduced => 1.0,
            KineticConvention::HalfMass { mass } => 0.5 / mass,
        }
    }

    pub fn label(self) -> String {
        match self {
            KineticConvention::Reduced => "reduced".into(),
            KineticConvention::HalfMass { mass } if mass == 1.0 => "half".into(),
            KineticConvention::HalfMass { mass } => format!("half(m={mass})"),
        }
    }
}

/// Mirror parity of a state or perturbation factor along one axis.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Parity {
    Even,
    Odd,
    /// Not defined: asymmetric grid, asymmetric potential, or a factor with
    /// no definite symmetry.
    None,
}

impl Parity {
    /// Parity of a product of factors; `None` is absorbing.
    pub fn combine(self, other: Parity) -> Parity {
        match (self, other) {
            (Parity::Even, p) | (p, Parity::Even) => p,
            (Parity::Odd, Parity::Odd) => Parity::Even,
            _ => Parity::None,
        }
    }

    pub fn label(self) -> &'static str {
        match self {
            Parity::Even => "even",
            Parity::Odd => "odd",
            Parity::None => "none",
        }
    }
}

/// A 1D potential that vanishes at the grid edges.
#[derive(Debug, Clone, PartialEq)]
pub enum Potential1D {
    /// `V(x) = -depth * exp(-2 (x-center)^2 / width^2)`, the light-sheet form.
    GaussianWell { depth: f64, width: f64, center: f64 },
    /// Arbitrary samples on the target grid.
    Tabulated { values: Vec<f64> },
}

impl Potential1D {
    pub fn gaussian(depth: f64, width: f64) -> Self {
        Potential1D::GaussianWell {
            depth,
            width,
            center: 0.0,
        }
    }

    /// Depth scale used for edge and continuum tolerances.
    pub fn scale(&self) -> f64 {
        match self {
            Potential1D::GaussianWell { depth, .. } => depth.abs(),
            Potential1D::Tabulated { values } => {
                values.iter().fold(0.0f64, |m, v| m.max(v.abs()))
            }
        }
    }

    pub fn sample(&self, grid: &Grid1D) -> Result<Vec<f64>> {
        match self {
            Potential1D::GaussianWell {
                depth,
                width,
                center,
            } => {
                if !(*depth > 0.0) || !(*width > 0.0) {
                    return Err(Error::InvalidConfig(format!(
                        "gaussian well needs positive depth and width, got depth={depth} width={width}"
                    )));
                }
                Ok(grid.sample(|x| {
                    let u = (x - center) / width;
                    -depth * (-2.0 * u * u).exp()
                }))
            }
            Potential1D::Tabulated { values } => {
                if values.len() != grid.len() {
                    return Err(Error::GridMismatch(format!(
                        "tabulated potential has {} samples for a {}-point grid",
                        values.len(),
                        grid.len()
                    )));
                }
                Ok(values.clone())
            }
        }
    }

    /// A potential is symmetric when its samples mirror onto themselves.
    fn is_symmetric_on(&self, grid: &Grid1D, samples: &[f64]) -> bool {
        if !grid.is_symmetric() {
            return false;
        }
        let scale = self.scale().max(1e-300);
        samples
            .iter()
            .zip(samples.iter().rev())
            .all(|(a, b)| (a - b).abs() <= 1e-10 * scale)
    }
}

/// One bound eigenstate of a 1D Hamiltonian. The wavefunction is normalized
/// under the grid inner product `h * sum psi_i^2 = 1`.
#[derive(Debug, Clone)]
pub struct BoundState {
    pub n: usize,
    pub energy: f64,
    pub wavefunction: Vec<f64>,
    pub parity: Parity,
}

/// Bound spectrum of one axis. `continuum_edge` is zero by the energy-zero
/// convention; it is kept explicit so exports are self-describing.
#[derive(Debug, Clone)]
pub struct Spectrum1D {
    pub axis_label: String,
    pub grid: Grid1D,
    pub convention: KineticConvention,
    pub bound_states: Vec<BoundState>,
    pub continuum_edge: f64,
}

impl Spectrum1D {
    pub fn bound_count(&self) -> usize {
        self.bound_states.len()
    }

    pub fn energies(&self) -> Vec<f64> {
        self.bound_states.iter().map(|b| b.energy).collect()
    }

    pub fn ground_energy(&self) -> Option<f64> {
        self.bound_states.first().map(|b| b.energy)
    }
}

/// Tolerances for the bound-state solve.
#[derive(Debug, Clone, Copy)]
pub struct SolveOptions {
    /// Potential must satisfy `|V(edge)| < edge_potential_tol * scale`.
    pub edge_potential_tol: f64,
    /// Highest bound state must satisfy `|psi(edge)| < edge_amplitude_tol * max|psi|`.
    pub edge_amplitude_tol: f64,
    /// Continuum edge tolerance as a fraction of the potential scale: bound
    /// means `E < -continuum_edge_frac * scale`.
    pub continuum_edge_frac: f64,
}

impl Default for SolveOptions {
    fn default() -> Self {
        SolveOptions {
            edge_potential_tol: 1e-8,
            edge_amplitude_tol: 1e-6,
            continuum_edge_frac: 1e-9,
        }
    }
}

/// All bound states (`E < -eps_edge`) of the Hamiltonian built from `pot` on
/// `grid`, with parities assigned on symmetric grids.
///
/// No bound states is a valid outcome, not an error; an unconverged box (the
/// highest bound state still touching the wall) is an error.
pub fn solve_bound_states(
    pot: &Potential1D,
    grid: &Grid1D,
    convention: KineticConvention,
    label: &str,
) -> Result<Spectrum1D> {
    solve_bound_states_with(pot, grid, convention, label, SolveOptions::default())
}

pub fn solve_bound_states_with(
    pot: &Potential1D,
    grid: &Grid1D,
    convention: KineticConvention,
    label: &str,
    opts: SolveOptions,
) -> Result<Spectrum1D> {
    let samples = pot.sample(grid)?;
    let scale = pot.scale().max(f64::MIN_POSITIVE);
    let edge = samples[0].abs().max(samples[samples.len() - 1].abs());
    if edge >= opts.edge_potential_tol * scale {
        return Err(Error::GridTooSmall(format!(
            "potential magnitude {edge:.3e} at the grid edge exceeds {:.1e} of its scale {scale:.3e}",
            opts.edge_potential_tol
        )));
    }

    let op = TridiagonalOperator::schrodinger(grid, &samples, convention)?;
    let eps_edge = opts.continuum_edge_frac * scale;
    let (lo, _) = op.gershgorin();
    let found = op.eigenvalues_in(lo - 1.0, -eps_edge);

    let symmetric = pot.is_symmetric_on(grid, &samples);
    let h = grid.spacing();
    let mut bound_states = Vec::with_capacity(found.len());
    let mut cluster: Vec<Vec<f64>> = Vec::new();
    let mut last_e = f64::NEG_INFINITY;
    let cluster_tol = 1e-8 * op.norm_bound();
    for &(k, e) in &found {
        if (e - last_e).abs() > cluster_tol {
            cluster.clear();
        }
        let refs: Vec<&[f64]> = cluster.iter().map(|v| v.as_slice()).collect();
        let mut v = op.eigenvector(e, &refs, k)?;
        cluster.push(v.clone());
        last_e = e;
        // Rescale to the grid inner product.
        let inv = 1.0 / h.sqrt();
        for x in v.iter_mut() {
            *x *= inv;
        }
        let parity = if symmetric {
            classify_parity(grid, &v)
        } else {
            Parity::None
        };
        bound_states.push(BoundState {
            n: bound_states.len(),
            energy: e,
            wavefunction: v,
            parity,
        });
    }

    if let Some(top) = bound_states.last() {
        let max_amp = top
            .wavefunction
            .iter()
            .fold(0.0f64, |m, x| m.max(x.abs()));
        let edge_amp = top.wavefunction[0]
            .abs()
            .max(top.wavefunction[top.wavefunction.len() - 1].abs());
        if edge_amp >= opts.edge_amplitude_tol * max_amp {
            return Err(Error::GridTooSmall(format!(
                "highest bound state (E = {:.6}) has edge amplitude {:.2e} of its peak; widen the grid",
                top.energy,
                edge_amp / max_amp
            )));
        }
    }

    Ok(Spectrum1D {
        axis_label: label.to_string(),
        grid: grid.clone(),
        convention,
        bound_states,
        continuum_edge: 0.0,
    })
}

/// Sign of the mirror overlap decides parity; anything that is not cleanly
/// +-1 is reported as `None`.
fn classify_parity(grid: &Grid1D, v: &[f64]) -> Parity {
    let m = grid.mirror_inner(v, v);
    let n = grid.inner(v, v);
    let r = m / n;
    if (r - 1.0).abs() < 1e-6 {
        Parity::Even
    } else if (r + 1.0).abs() < 1e-6 {
        Parity::Odd
    } else {
        Parity::None
    }
}

/// Count sign changes of a wavefunction above a noise floor — the Sturm
/// oscillation count used by tests.
pub fn count_nodes(v: &[f64]) -> usize {
    let max = v.iter().fold(0.0f64, |m, x| m.max(x.abs()));
    let floor = 1e-8 * max;
    let mut nodes = 0;
    let mut last: Option<f64> = None;
    for &x in v {
        if x.abs() <= floor {
            continue;
        }
        if let Some(prev) = last {
            if prev * x < 0.0 {
                nodes += 1;
            }
        }
        last = Some(x);
    }
    nodes
}

/// How continuum stand-in states are normalized.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ContinuumNormalization {
    /// Unit norm on the box: `h * sum psi^2 = 1`.
    Box,
    /// `psi_E = psi_box / sqrt(local level spacing within the parity sector)`,
    /// which makes golden-rule products box-size independent.
    Energy,
}

/// One box-normalized continuum stand-in state.
#[derive(Debug, Clone)]
pub struct BoxState {
    pub energy: f64,
    pub wavefunction: Vec<f64>,
    pub parity: Parity,
}

/// Positive-energy eigenstates of the same operator on an enlarged box.
///
/// States are stored box-normalized; `energy_norm_factor` converts a given
/// state to the energy normalization.
#[derive(Debug, Clone)]
pub struct BoxContinuumSet {
    pub box_grid: Grid1D,
    pub convention: KineticConvention,
    pub states: Vec<BoxState>,
    pub normalization: ContinuumNormalization,
}

impl BoxContinuumSet {
    pub fn energy_window(&self) -> Option<(f64, f64)> {
        match (self.states.first(), self.states.last()) {
            (Some(a), Some(b)) => Some((a.energy, b.energy)),
            _ => None,
        }
    }

    /// Indices of states in the given parity sector (all states if `None`).
    pub fn sector(&self, parity: Option<Parity>) -> Vec<usize> {
        self.states
            .iter()
            .enumerate()
            .filter(|(_, s)| parity.map_or(true, |p| s.parity == p))
            .map(|(i, _)| i)
            .collect()
    }

    /// Density of states at `E` from the centered difference of the level
    /// staircase, optionally restricted to one parity sector.
    pub fn density_of_states(&self, energy: f64, parity: Option<Parity>) -> Result<f64> {
        let sector = self.sector(parity);
        if sector.len() < 3 {
            return Err(Error::EnergyOutOfRange {
                energy,
                lo: f64::NAN,
                hi: f64::NAN,
            });
        }
        let es: Vec<f64> = sector.iter().map(|&i| self.states[i].energy).collect();
        let (lo, hi) = (es[0], es[es.len() - 1]);
        if energy <= lo || energy >= hi {
            return Err(Error::EnergyOutOfRange { energy, lo, hi });
        }
        // Centered difference of the staircase at the two levels bracketing
        // E, then linear interpolation between them; plain nearest-level
        // sampling is off by O(spacing/E) which matters on coarse boxes.
        let j = es.partition_point(|e| *e < energy).clamp(1, es.len() - 1);
        let (jl, jr) = (j - 1, j);
        let rho_at = |k: usize| -> f64 {
            let k = k.clamp(1, es.len() - 2);
            2.0 / (es[k + 1] - es[k - 1])
        };
        let (rl, rr) = (rho_at(jl), rho_at(jr));
        let t = (energy - es[jl]) / (es[jr] - es[jl]);
        Ok(rl + t * (rr - rl))
    }

    /// The two sector states bracketing `E`.
    pub fn bracketing(&self, energy: f64, parity: Option<Parity>) -> Result<(usize, usize)> {
        let sector = self.sector(parity);
        let es: Vec<f64> = sector.iter().map(|&i| self.states[i].energy).collect();
        if es.len() < 2 || energy < es[0] || energy > es[es.len() - 1] {
            return Err(Error::EnergyOutOfRange {
                energy,
                lo: es.first().copied().unwrap_or(f64::NAN),
                hi: es.last().copied().unwrap_or(f64::NAN),
            });
        }
        let j = es.partition_point(|e| *e < energy).clamp(1, es.len() - 1);
        Ok((sector[j - 1], sector[j]))
    }

    /// Multiply a box-normalized state by this to energy-normalize it.
    pub fn energy_norm_factor(&self, index: usize) -> Result<f64> {
        let parity = self.states[index].parity;
        let rho = self.density_of_states(self.states[index].energy, Some(parity))?;
        Ok(rho.sqrt())
    }
}

/// Solve the boxed continuum: all states with `0 < E < e_max` on `box_grid`.
///
/// An `e_max` below the first box level yields an empty set (not an error).
pub fn solve_box_continuum(
    pot: &Potential1D,
    box_grid: &Grid1D,
    e_max: f64,
    convention: KineticConvention,
) -> Result<BoxContinuumSet> {
    let samples = pot.sample(box_grid)?;
    let op = TridiagonalOperator::schrodinger(box_grid, &samples, convention)?;
    let scale = pot.scale().max(f64::MIN_POSITIVE);
    let eps_edge = 1e-12 * scale.max(1.0);
    let found = op.eigenvalues_in(eps_edge, e_max);

    let symmetric = pot.is_symmetric_on(box_grid, &samples);
    let h = box_grid.spacing();
    let mut states = Vec::with_capacity(found.len());
    let mut cluster: Vec<Vec<f64>> = Vec::new();
    let mut last_e = f64::NEG_INFINITY;
    let cluster_tol = 1e-8 * op.norm_bound();
    for &(k, e) in &found {
        if (e - last_e).abs() > cluster_tol {
            cluster.clear();
        }
        let refs: Vec<&[f64]> = cluster.iter().map(|v| v.as_slice()).collect();
        let mut v = op.eigenvector(e, &refs, k)?;
        cluster.push(v.clone());
        last_e = e;
        let inv = 1.0 / h.sqrt();
        for x in v.iter_mut() {
            *x *= inv;
        }
        let parity = if symmetric {
            classify_parity(box_grid, &v)
        } else {
            Parity::None
        };
        states.push(BoxState {
            energy: e,
            wavefunction: v,
            parity,
        });
    }

    Ok(BoxContinuumSet {
        box_grid: box_grid.clone(),
        convention,
        states,
        normalization: ContinuumNormalization::Box,
    })
}

/// Default box for continuum solves: same spacing as the physical grid, a
/// configurable factor wider.
pub fn default_box_grid(grid: &Grid1D, factor: f64) -> Result<Grid1D> {
    let half = 0.5 * (grid.x_max() - grid.x_min()) * factor;
    let n = ((2.0 * half / grid.spacing()).round() as usize) + 1;
    // Keep the node count odd so x = 0 stays on the grid.
    let n = if n % 2 == 0 { n + 1 } else { n };
    Grid1D::symmetric(half, n)
}

#[cfg(test)]
mod tests {
    use super::*;

    const PI: f64 = std::f64::consts::PI;

    #[test]
    fn zero_potential_has_no_bound_states() {
        let grid = Grid1D::symmetric(10.0, 201).unwrap();
        let pot = Potential1D::Tabulated {
            values: vec![0.0; 201],
        };
        let spec = solve_bound_states(&pot, &grid, KineticConvention::Reduced, "x").unwrap();
        assert_eq!(spec.bound_count(), 0);
    }

    #[test]
    fn fig2_x_axis_well() {
        // V = 1.4, sigma = 5: three bound states, n = 2 even.
        let grid = Grid1D::symmetric(40.0, 1601).unwrap();
        let pot = Potential1D::gaussian(1.4, 5.0);
        let spec = solve_bound_states(&pot, &grid, KineticConvention::Reduced, "x").unwrap();
        assert!(spec.bound_count() >= 3, "got {}", spec.bound_count());
        assert_eq!(spec.bound_states[2].parity, Parity::Even);
        assert_eq!(spec.bound_states[1].parity, Parity::Odd);
        // Oscillation theorem: n-th state has n sign changes.
        for b in &spec.bound_states {
            assert_eq!(count_nodes(&b.wavefunction), b.n, "state {}", b.n);
        }
    }

    #[test]
    fn grid_too_small_is_reported() {
        let grid = Grid1D::symmetric(6.0, 201).unwrap();
        let pot = Potential1D::gaussian(1.4, 5.0);
        let err = solve_bound_states(&pot, &grid, KineticConvention::Reduced, "x").unwrap_err();
        assert!(matches!(err, Error::GridTooSmall(_)));
    }

    #[test]
    fn bound_energies_converge_under_refinement() {
        let pot = Potential1D::gaussian(2.2, 4.0);
        let coarse = {
            let grid = Grid1D::symmetric(40.0, 3201).unwrap();
            solve_bound_states(&pot, &grid, KineticConvention::Reduced, "y").unwrap()
        };
        let finer = {
            let grid = Grid1D::symmetric(40.0, 6401).unwrap();
            solve_bound_states(&pot, &grid, KineticConvention::Reduced, "y").unwrap()
        };
        let wider = {
            let grid = Grid1D::symmetric(50.0, 8001).unwrap();
            solve_bound_states(&pot, &grid, KineticConvention::Reduced, "y").unwrap()
        };
        assert_eq!(coarse.bound_count(), finer.bound_count());
        assert_eq!(coarse.bound_count(), wider.bound_count());
        for ((a, b), c) in coarse
            .bound_states
            .iter()
            .zip(&finer.bound_states)
            .zip(&wider.bound_states)
        {
            assert!((a.energy - b.energy).abs() < 1e-4);
            assert!((b.energy - c.energy).abs() < 1e-6 + 4.0 * (a.energy - b.energy).abs());
        }
    }

    #[test]
    fn free_box_ladder() {
        // Zero potential on [-L, L] under H = -d2/dx2: E_m = (m pi / 2L)^2.
        let l = 20.0;
        let grid = Grid1D::symmetric(l, 4001).unwrap();
        let pot = Potential1D::Tabulated {
            values: vec![0.0; 4001],
        };
        let set = solve_box_continuum(&pot, &grid, 1.0, KineticConvention::Reduced).unwrap();
        assert!(set.states.len() > 5);
        // Dirichlet walls sit one spacing beyond the edge nodes.
        let l_eff = l + grid.spacing();
        for (m, s) in set.states.iter().take(8).enumerate() {
            let exact = (((m + 1) as f64) * PI / (2.0 * l_eff)).powi(2);
            assert!(
                (s.energy - exact).abs() < 1e-3 * exact.max(1e-2),
                "m={m}: {} vs {exact}",
                s.energy
            );
            // Parity alternates even/odd in ascending order.
            let expect = if m % 2 == 0 { Parity::Even } else { Parity::Odd };
            assert_eq!(s.parity, expect, "m={m}");
        }
    }

    #[test]
    fn free_box_density_of_states() {
        // rho_sector(E) = L / (2 pi sqrt(E)) per parity channel.
        let l = 30.0;
        let n = 6001;
        let grid = Grid1D::symmetric(l, n).unwrap();
        let pot = Potential1D::Tabulated { values: vec![0.0; n] };
        let set = solve_box_continuum(&pot, &grid, 2.0, KineticConvention::Reduced).unwrap();
        for e in [0.25f64, 0.5, 1.0] {
            let expect = l / (2.0 * PI * e.sqrt());
            for p in [Parity::Even, Parity::Odd] {
                let rho = set.density_of_states(e, Some(p)).unwrap();
                assert!(
                    (rho / expect - 1.0).abs() < 2e-2,
                    "E={e} parity {:?}: {rho} vs {expect}",
                    p
                );
            }
            // All-levels staircase doubles the sector value.
            let rho_all = set.density_of_states(e, None).unwrap();
            assert!((rho_all / (2.0 * expect) - 1.0).abs() < 2e-2);
            // Square-root dispersion: rho(4E)/rho(E) = 1/2.
            if 4.0 * e < 2.0 {
                let r = set.density_of_states(4.0 * e, None).unwrap() / rho_all;
                assert!((r - 0.5).abs() < 2e-2, "ratio {r}");
            }
        }
    }

    #[test]
    fn doubling_box_doubles_dos() {
        let pot = Potential1D::gaussian(1.0, 2.0);
        let mk = |l: f64, n: usize| {
            let grid = Grid1D::symmetric(l, n).unwrap();
            solve_box_continuum(&pot, &grid, 1.5, KineticConvention::Reduced).unwrap()
        };
        let a = mk(40.0, 2001);
        let b = mk(80.0, 4001);
        let ra = a.density_of_states(0.8, None).unwrap();
        let rb = b.density_of_states(0.8, None).unwrap();
        assert!((rb / ra - 2.0).abs() < 0.05, "ratio {}", rb / ra);
    }

    #[test]
    fn well_compresses_levels_and_empty_window_is_empty() {
        let l = 50.0;
        let n = 4001;
        let grid = Grid1D::symmetric(l, n).unwrap();
        let free = solve_box_continuum(
            &Potential1D::Tabulated { values: vec![0.0; n] },
            &grid,
            1.0,
            KineticConvention::Reduced,
        )
        .unwrap();
        let well = solve_box_continuum(
            &Potential1D::gaussian(1.4, 5.0),
            &grid,
            1.0,
            KineticConvention::Reduced,
        )
        .unwrap();
        // The attractive well pulls scattering phase in, so the count below a
        // fixed energy never drops relative to the free box once the states
        // it captured below zero are added back.
        let captured = solve_bound_states(
            &Potential1D::gaussian(1.4, 5.0),
            &grid,
            KineticConvention::Reduced,
            "x",
        )
        .unwrap()
        .bound_count();
        assert!(well.states.len() + captured >= free.states.len());
        // Count grows like sqrt(E) for the free box.
        let below = |set: &BoxContinuumSet, e: f64| {
            set.states.iter().filter(|s| s.energy < e).count() as f64
        };
        let ratio = below(&free, 1.0) / below(&free, 0.25);
        assert!((ratio - 2.0).abs() < 0.2, "sqrt-E count ratio {ratio}");
        // e_max below the first level -> empty set.
        let tiny = solve_box_continuum(
            &Potential1D::Tabulated { values: vec![0.0; n] },
            &grid,
            1e-6,
            KineticConvention::Reduced,
        )
        .unwrap();
        assert!(tiny.states.is_empty());
    }

    #[test]
    fn dos_out_of_window_errors() {
        let grid = Grid1D::symmetric(20.0, 801).unwrap();
        let pot = Potential1D::Tabulated { values: vec![0.0; 801] };
        let set = solve_box_continuum(&pot, &grid, 1.0, KineticConvention::Reduced).unwrap();
        assert!(set.density_of_states(5.0, None).is_err());
        assert!(set.density_of_states(-0.5, None).is_err());
    }
}
