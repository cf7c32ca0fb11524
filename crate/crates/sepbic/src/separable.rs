//! Product spectra of separable systems, continuum thresholds, and BIC
//! certification.
//!
//! For `H = sum_i H_i` with each axis's continuum starting at zero, the full
//! continuum starts at the lowest channel onset: delocalize along a nonempty
//! subset of axes and pay the bound ground-state energies of the rest. A
//! product of bound states whose total energy exceeds that threshold is a
//! bound state in the continuum, and its degenerate channels are exactly the
//! channel families whose onset it clears.

use crate::eigen1d::{Parity, Spectrum1D};
use crate::error::{Error, Result};

/// A subset of axes, as a bitmask (N <= 3 in practice, u8 leaves room).
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct AxisSet(u8);

impl AxisSet {
    pub fn empty() -> Self {
        AxisSet(0)
    }

    pub fn from_axes(axes: &[usize]) -> Self {
        let mut m = 0u8;
        for &a in axes {
            m |= 1 << a;
        }
        AxisSet(m)
    }

    pub fn contains(self, axis: usize) -> bool {
        self.0 & (1 << axis) != 0
    }

    pub fn insert(&mut self, axis: usize) {
        self.0 |= 1 << axis;
    }

    pub fn len(self) -> usize {
        self.0.count_ones() as usize
    }

    pub fn is_empty(self) -> bool {
        self.0 == 0
    }

    pub fn mask(self) -> u8 {
        self.0
    }

    pub fn iter(self, n_axes: usize) -> impl Iterator<Item = usize> {
        (0..n_axes).filter(move |a| self.contains(*a))
    }

    /// Nonempty subsets of `{0..n_axes}`, ordered by size then mask value.
    pub fn nonempty_subsets(n_axes: usize) -> Vec<AxisSet> {
        let mut subsets: Vec<AxisSet> = (1u8..(1 << n_axes)).map(AxisSet).collect();
        subsets.sort_by_key(|s| (s.len(), s.0));
        subsets
    }

    pub fn label(self, n_axes: usize) -> String {
        const NAMES: [&str; 3] = ["x", "y", "z"];
        let mut s = String::new();
        for a in self.iter(n_axes) {
            s.push_str(NAMES.get(a).copied().unwrap_or("?"));
        }
        s
    }
}

/// Per-BIC channels are counted as degenerate when their onset clears the
/// state energy by this relative margin; the continuum is gapless above the
/// onset, so anything below it is genuinely degenerate.
pub const DEGENERACY_MARGIN: f64 = 1e-12;

/// A separable system: one solved 1D spectrum per axis, sharing the
/// continuum-at-zero energy convention.
#[derive(Debug, Clone)]
pub struct SeparableSystem {
    axes: Vec<Spectrum1D>,
}

impl SeparableSystem {
    pub fn new(axes: Vec<Spectrum1D>) -> Result<Self> {
        if axes.len() < 2 || axes.len() > 3 {
            return Err(Error::InvalidConfig(format!(
                "separable systems support 2 or 3 axes, got {}",
                axes.len()
            )));
        }
        Ok(SeparableSystem { axes })
    }

    pub fn n_axes(&self) -> usize {
        self.axes.len()
    }

    pub fn axis(&self, i: usize) -> &Spectrum1D {
        &self.axes[i]
    }

    pub fn axes(&self) -> &[Spectrum1D] {
        &self.axes
    }

    pub fn bound_counts(&self) -> Vec<usize> {
        self.axes.iter().map(|a| a.bound_count()).collect()
    }

    /// Total number of bound product states.
    pub fn product_count(&self) -> usize {
        self.axes.iter().map(|a| a.bound_count()).product()
    }

    pub fn product_state(&self, indices: &[usize]) -> Result<ProductState> {
        if indices.len() != self.n_axes() {
            return Err(Error::InvalidConfig(format!(
                "{} indices for a {}-axis system",
                indices.len(),
                self.n_axes()
            )));
        }
        let mut energy = 0.0;
        let mut parities = Vec::with_capacity(indices.len());
        for (axis, &n) in indices.iter().enumerate() {
            let spec = &self.axes[axis];
            let state = spec.bound_states.get(n).ok_or_else(|| {
                Error::InvalidConfig(format!(
                    "axis {axis} ({}) has {} bound states, index {n} does not exist",
                    spec.axis_label,
                    spec.bound_count()
                ))
            })?;
            energy += state.energy;
            parities.push(state.parity);
        }
        Ok(ProductState {
            indices: indices.to_vec(),
            energy,
            parities,
        })
    }
}

/// A product of bound 1D states, addressed by per-axis quantum numbers.
#[derive(Debug, Clone, PartialEq)]
pub struct ProductState {
    pub indices: Vec<usize>,
    pub energy: f64,
    pub parities: Vec<Parity>,
}

impl ProductState {
    pub fn ket_label(&self) -> String {
        let inner: Vec<String> = self.indices.iter().map(|n| n.to_string()).collect();
        format!("|{}>", inner.join(","))
    }
}

/// A family of continuum states: delocalized along `delocalized`, bound with
/// fixed quantum numbers on the remaining axes. Its energies are gapless
/// above `onset`.
#[derive(Debug, Clone, PartialEq)]
pub struct ContinuumChannel {
    pub delocalized: AxisSet,
    /// `(axis, bound index)` for every non-delocalized axis, ascending axis.
    pub bound_indices: Vec<(usize, usize)>,
    pub onset: f64,
    /// `(axis, parity)` of the bound factors.
    pub bound_parities: Vec<(usize, Parity)>,
}

impl ContinuumChannel {
    pub fn bound_index_on(&self, axis: usize) -> Option<usize> {
        self.bound_indices
            .iter()
            .find(|(a, _)| *a == axis)
            .map(|(_, n)| *n)
    }

    pub fn label(&self, n_axes: usize) -> String {
        let mut parts: Vec<String> = Vec::with_capacity(n_axes);
        for axis in 0..n_axes {
            if self.delocalized.contains(axis) {
                parts.push(format!("E{}", AxisSet::from_axes(&[axis]).label(n_axes)));
            } else {
                parts.push(self.bound_index_on(axis).unwrap_or(0).to_string());
            }
        }
        format!("|{}>", parts.join(","))
    }
}

/// Continuum threshold plus the degenerate-case warning flag.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ThresholdReport {
    pub threshold: f64,
    /// Set when some axis has no bound states at all: no bound products
    /// exist, and the threshold is reported as zero by convention.
    pub empty_axis_warning: bool,
}

/// Lowest channel onset of the system. For N=2 this is `min(E_x^0, E_y^0)`;
/// for N=3 the minimum over channels of the bound ground-state sums on the
/// non-delocalized axes (which reduces to the same formula at N=2).
pub fn continuum_threshold(sys: &SeparableSystem) -> ThresholdReport {
    if sys.axes().iter().any(|a| a.bound_count() == 0) {
        return ThresholdReport {
            threshold: 0.0,
            empty_axis_warning: true,
        };
    }
    let n = sys.n_axes();
    let grounds: Vec<f64> = sys
        .axes()
        .iter()
        .map(|a| a.ground_energy().expect("checked non-empty"))
        .collect();
    let mut threshold = f64::INFINITY;
    for subset in AxisSet::nonempty_subsets(n) {
        let onset: f64 = (0..n)
            .filter(|a| !subset.contains(*a))
            .map(|a| grounds[a])
            .sum();
        threshold = threshold.min(onset);
    }
    ThresholdReport {
        threshold,
        empty_axis_warning: false,
    }
}

/// All channels degenerate with a state at `energy`: onset at or below
/// `energy` minus the relative degeneracy margin. Channels are ordered by
/// (subset size, subset mask, bound indices).
pub fn degenerate_channels(sys: &SeparableSystem, energy: f64) -> Vec<ContinuumChannel> {
    let n = sys.n_axes();
    let cutoff = energy - DEGENERACY_MARGIN * energy.abs();
    let mut channels = Vec::new();
    for subset in AxisSet::nonempty_subsets(n) {
        let bound_axes: Vec<usize> = (0..n).filter(|a| !subset.contains(*a)).collect();
        enumerate_bound_tuples(sys, &bound_axes, cutoff, &mut |chosen, onset| {
            let bound_parities = chosen
                .iter()
                .map(|&(axis, m)| (axis, sys.axis(axis).bound_states[m].parity))
                .collect();
            channels.push(ContinuumChannel {
                delocalized: subset,
                bound_indices: chosen.to_vec(),
                onset,
                bound_parities,
            });
        });
    }
    channels.sort_by(|a, b| {
        (a.delocalized.len(), a.delocalized.0, &a.bound_indices).cmp(&(
            b.delocalized.len(),
            b.delocalized.0,
            &b.bound_indices,
        ))
    });
    channels
}

/// Depth-first enumeration of bound-index tuples on `bound_axes` whose energy
/// sum stays at or below `cutoff`.
fn enumerate_bound_tuples(
    sys: &SeparableSystem,
    bound_axes: &[usize],
    cutoff: f64,
    emit: &mut impl FnMut(&[(usize, usize)], f64),
) {
    fn recurse(
        sys: &SeparableSystem,
        bound_axes: &[usize],
        depth: usize,
        chosen: &mut Vec<(usize, usize)>,
        acc: f64,
        cutoff: f64,
        emit: &mut impl FnMut(&[(usize, usize)], f64),
    ) {
        if depth == bound_axes.len() {
            if acc <= cutoff {
                emit(chosen, acc);
            }
            return;
        }
        let axis = bound_axes[depth];
        for m in 0..sys.axis(axis).bound_count() {
            let e = sys.axis(axis).bound_states[m].energy;
            if acc + e > cutoff {
                continue;
            }
            chosen.push((axis, m));
            recurse(sys, bound_axes, depth + 1, chosen, acc + e, cutoff, emit);
            chosen.pop();
        }
    }
    let mut chosen = Vec::new();
    recurse(sys, bound_axes, 0, &mut chosen, 0.0, cutoff, emit);
}

/// Count the channels degenerate with `energy` without materializing them.
pub fn count_channels(sys: &SeparableSystem, energy: f64) -> usize {
    let n = sys.n_axes();
    let cutoff = energy - DEGENERACY_MARGIN * energy.abs();
    let mut count = 0usize;
    for subset in AxisSet::nonempty_subsets(n) {
        let bound_axes: Vec<usize> = (0..n).filter(|a| !subset.contains(*a)).collect();
        match bound_axes.len() {
            0 => {
                if 0.0 <= cutoff {
                    count += 1;
                }
            }
            1 => {
                let es = sys.axis(bound_axes[0]).energies();
                count += es.partition_point(|e| *e <= cutoff);
            }
            2 => {
                let ea = sys.axis(bound_axes[0]).energies();
                let eb = sys.axis(bound_axes[1]).energies();
                let mut j = eb.len();
                for &a in &ea {
                    while j > 0 && a + eb[j - 1] > cutoff {
                        j -= 1;
                    }
                    count += j;
                    if j == 0 {
                        break;
                    }
                }
            }
            _ => unreachable!("at most 3 axes"),
        }
    }
    count
}

/// A certified bound state in the continuum.
#[derive(Debug, Clone)]
pub struct BicRecord {
    pub state: ProductState,
    pub threshold: f64,
    /// Materialized channel list; left empty when enumeration is disabled
    /// for bulk catalogs (`channel_count` is always filled).
    pub channels: Vec<ContinuumChannel>,
    pub channel_count: usize,
    pub symmetry_protected: bool,
}

/// Options for bulk BIC searches.
#[derive(Debug, Clone, Copy)]
pub struct FindOptions {
    /// Materialize each record's channel list (disable for huge catalogs).
    pub enumerate_channels: bool,
    /// Keep only this many records, lowest energies first.
    pub max_records: Option<usize>,
    /// Refuse to enumerate more product states than this.
    pub product_cap: usize,
}

impl Default for FindOptions {
    fn default() -> Self {
        FindOptions {
            enumerate_channels: true,
            max_records: None,
            product_cap: 8_000_000,
        }
    }
}

/// Every product of bound states strictly above the continuum threshold,
/// sorted by energy then lexicographic indices, with channels and the
/// symmetry-protection flag.
pub fn find_bics(sys: &SeparableSystem) -> Result<Vec<BicRecord>> {
    find_bics_with(sys, FindOptions::default())
}

pub fn find_bics_with(sys: &SeparableSystem, opts: FindOptions) -> Result<Vec<BicRecord>> {
    let report = continuum_threshold(sys);
    if report.empty_axis_warning {
        return Ok(Vec::new());
    }
    let total = sys.product_count();
    if total > opts.product_cap {
        return Err(Error::InvalidConfig(format!(
            "{total} product states exceed the enumeration cap {}; raise FindOptions::product_cap or use count_bics",
            opts.product_cap
        )));
    }

    let counts = sys.bound_counts();
    let n = sys.n_axes();
    let mut indices = vec![0usize; n];
    let mut hits: Vec<ProductState> = Vec::new();
    'enumerate: loop {
        let state = sys.product_state(&indices).expect("in-range indices");
        if is_above_threshold(state.energy, report.threshold) {
            hits.push(state);
        }
        let mut axis = n;
        loop {
            if axis == 0 {
                break 'enumerate;
            }
            axis -= 1;
            indices[axis] += 1;
            if indices[axis] < counts[axis] {
                break;
            }
            indices[axis] = 0;
        }
    }

    hits.sort_by(|a, b| {
        a.energy
            .partial_cmp(&b.energy)
            .unwrap()
            .then_with(|| a.indices.cmp(&b.indices))
    });
    if let Some(cap) = opts.max_records {
        hits.truncate(cap);
    }

    Ok(hits
        .into_iter()
        .map(|state| certify(sys, state, report.threshold, opts.enumerate_channels))
        .collect())
}

/// Certify a single product state; `None` when it is an ordinary bound state
/// below the threshold.
pub fn certify_product(sys: &SeparableSystem, indices: &[usize]) -> Result<Option<BicRecord>> {
    let report = continuum_threshold(sys);
    let state = sys.product_state(indices)?;
    if report.empty_axis_warning || !is_above_threshold(state.energy, report.threshold) {
        return Ok(None);
    }
    Ok(Some(certify(sys, state, report.threshold, true)))
}

/// Number of bound products above the threshold, without materializing them.
pub fn count_bics(sys: &SeparableSystem) -> usize {
    let report = continuum_threshold(sys);
    if report.empty_axis_warning {
        return 0;
    }
    match sys.n_axes() {
        2 => count_pairs_above(
            &sys.axis(0).energies(),
            &sys.axis(1).energies(),
            report.threshold,
        ),
        3 => {
            let ea = sys.axis(0).energies();
            let eb = sys.axis(1).energies();
            sys.axis(2)
                .energies()
                .iter()
                .map(|&c| count_pairs_above(&ea, &eb, report.threshold - c))
                .sum()
        }
        _ => unreachable!(),
    }
}

fn count_pairs_above(ea: &[f64], eb: &[f64], threshold: f64) -> usize {
    // Count (a, b) with ea[a] + eb[b] above threshold; both lists ascend.
    let mut count = 0usize;
    let mut j = 0usize;
    for &a in ea.iter().rev() {
        while j < eb.len() && !is_above_threshold(a + eb[j], threshold) {
            j += 1;
        }
        count += eb.len() - j;
        if j == eb.len() {
            break;
        }
    }
    count
}

fn is_above_threshold(energy: f64, threshold: f64) -> bool {
    energy - DEGENERACY_MARGIN * energy.abs() > threshold
}

fn certify(
    sys: &SeparableSystem,
    state: ProductState,
    threshold: f64,
    enumerate: bool,
) -> BicRecord {
    let channel_count = count_channels(sys, state.energy);
    let channels = degenerate_channels(sys, state.energy);
    let symmetry_protected = protected_by_parity(&state, &channels);
    BicRecord {
        state,
        threshold,
        channels: if enumerate { channels } else { Vec::new() },
        channel_count,
        symmetry_protected,
    }
}

/// True when every channel differs from the state in parity on at least one
/// shared symmetric bound axis.
pub fn protected_by_parity(state: &ProductState, channels: &[ContinuumChannel]) -> bool {
    if channels.is_empty() {
        return false;
    }
    channels.iter().all(|ch| {
        ch.bound_parities.iter().any(|&(axis, ch_parity)| {
            matches!(
                (state.parities[axis], ch_parity),
                (Parity::Even, Parity::Odd) | (Parity::Odd, Parity::Even)
            )
        })
    })
}

/// A group of channels that differ only along axes whose *entire* bound
/// spectrum clears the threshold; such axes are reported as wildcards, the
/// way one writes `|E_x, m, 0>` with `m` free.
#[derive(Debug, Clone, PartialEq)]
pub struct ChannelFamily {
    pub delocalized: AxisSet,
    /// Fixed bound indices on the non-collapsed axes.
    pub fixed: Vec<(usize, usize)>,
    /// Axes collapsed into a wildcard.
    pub wildcard_axes: Vec<usize>,
    pub member_count: usize,
}

impl ChannelFamily {
    pub fn label(&self, n_axes: usize) -> String {
        let mut parts: Vec<String> = Vec::with_capacity(n_axes);
        for axis in 0..n_axes {
            if self.delocalized.contains(axis) {
                parts.push(format!("E{}", AxisSet::from_axes(&[axis]).label(n_axes)));
            } else if self.wildcard_axes.contains(&axis) {
                parts.push("*".into());
            } else {
                let n = self
                    .fixed
                    .iter()
                    .find(|(a, _)| *a == axis)
                    .map(|(_, n)| *n)
                    .unwrap_or(0);
                parts.push(n.to_string());
            }
        }
        format!("|{}>", parts.join(","))
    }
}

/// Group a channel list into families. Within one delocalized subset, a
/// bound axis collapses to a wildcard when every one of its bound indices
/// occurs among the qualifying channels.
pub fn channel_families(
    sys: &SeparableSystem,
    channels: &[ContinuumChannel],
) -> Vec<ChannelFamily> {
    use std::collections::BTreeMap;

    let mut seen: BTreeMap<(u8, usize), Vec<bool>> = BTreeMap::new();
    for ch in channels {
        for &(axis, m) in &ch.bound_indices {
            let entry = seen
                .entry((ch.delocalized.0, axis))
                .or_insert_with(|| vec![false; sys.axis(axis).bound_count()]);
            entry[m] = true;
        }
    }
    let collapsible = |subset: AxisSet, axis: usize| -> bool {
        seen.get(&(subset.0, axis))
            .map_or(false, |v| v.iter().all(|&b| b))
    };

    let mut families: BTreeMap<(u8, Vec<(usize, usize)>), ChannelFamily> = BTreeMap::new();
    for ch in channels {
        let mut fixed = Vec::new();
        let mut wildcards = Vec::new();
        for &(axis, m) in &ch.bound_indices {
            if collapsible(ch.delocalized, axis) {
                wildcards.push(axis);
            } else {
                fixed.push((axis, m));
            }
        }
        families
            .entry((ch.delocalized.0, fixed.clone()))
            .or_insert_with(|| ChannelFamily {
                delocalized: ch.delocalized,
                fixed,
                wildcard_axes: wildcards,
                member_count: 0,
            })
            .member_count += 1;
    }

    families.into_values().collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::eigen1d::{solve_bound_states, KineticConvention, Potential1D};
    use crate::grid::Grid1D;

    fn fig2_system() -> SeparableSystem {
        let grid = Grid1D::symmetric(40.0, 1601).unwrap();
        let x = solve_bound_states(
            &Potential1D::gaussian(1.4, 5.0),
            &grid,
            KineticConvention::Reduced,
            "x",
        )
        .unwrap();
        let y = solve_bound_states(
            &Potential1D::gaussian(2.2, 4.0),
            &grid,
            KineticConvention::Reduced,
            "y",
        )
        .unwrap();
        SeparableSystem::new(vec![x, y]).unwrap()
    }

    #[test]
    fn threshold_is_min_ground() {
        let sys = fig2_system();
        let report = continuum_threshold(&sys);
        let ex0 = sys.axis(0).ground_energy().unwrap();
        let ey0 = sys.axis(1).ground_energy().unwrap();
        assert!(!report.empty_axis_warning);
        assert_eq!(report.threshold, ex0.min(ey0));
        let sys2 = SeparableSystem::new(vec![sys.axis(0).clone(), sys.axis(0).clone()]).unwrap();
        assert_eq!(continuum_threshold(&sys2).threshold, ex0);
    }

    #[test]
    fn empty_axis_sets_warning() {
        let grid = Grid1D::symmetric(18.0, 361).unwrap();
        let empty = solve_bound_states(
            &Potential1D::Tabulated {
                values: vec![0.0; 361],
            },
            &grid,
            KineticConvention::Reduced,
            "x",
        )
        .unwrap();
        let well = solve_bound_states(
            &Potential1D::gaussian(2.0, 1.5),
            &grid,
            KineticConvention::Reduced,
            "y",
        )
        .unwrap();
        let sys = SeparableSystem::new(vec![empty, well]).unwrap();
        let report = continuum_threshold(&sys);
        assert!(report.empty_axis_warning);
        assert_eq!(report.threshold, 0.0);
        assert!(find_bics(&sys).unwrap().is_empty());
    }

    #[test]
    fn fig2_bic_and_channels() {
        let sys = fig2_system();
        let bics = find_bics(&sys).unwrap();
        let bic = bics
            .iter()
            .find(|b| b.state.indices == [2, 1])
            .expect("|2,1> should be certified");
        assert!(
            (bic.state.energy + 1.04).abs() < 0.01,
            "E = {}",
            bic.state.energy
        );
        assert_eq!(bic.state.parities, vec![Parity::Even, Parity::Odd]);
        // Exactly two channels: y-delocalized with x ground, x-delocalized
        // with y ground.
        assert_eq!(bic.channel_count, 2);
        assert_eq!(bic.channels.len(), 2);
        for ch in &bic.channels {
            assert_eq!(ch.delocalized.len(), 1);
            assert_eq!(ch.bound_indices.len(), 1);
            assert_eq!(ch.bound_indices[0].1, 0);
            assert!(ch.onset <= bic.state.energy);
        }
        assert!(!bic.symmetry_protected);
        assert_eq!(channel_families(&sys, &bic.channels).len(), 2);
    }

    #[test]
    fn ground_product_has_no_channels() {
        let sys = fig2_system();
        let ground = sys.product_state(&[0, 0]).unwrap();
        assert!(degenerate_channels(&sys, ground.energy).is_empty());
        assert!(certify_product(&sys, &[0, 0]).unwrap().is_none());
    }

    #[test]
    fn channel_count_matches_enumeration() {
        let sys = fig2_system();
        for e in [-1.5, -1.0, -0.5, -0.1] {
            assert_eq!(
                count_channels(&sys, e),
                degenerate_channels(&sys, e).len(),
                "at E={e}"
            );
        }
        assert_eq!(count_bics(&sys), find_bics(&sys).unwrap().len());
    }

    #[test]
    fn deepening_the_other_well_keeps_certification() {
        // Deepening y lowers its ground state (the threshold) faster than
        // its first excited state, so |2,1> stays certified along the sweep.
        let grid = Grid1D::symmetric(40.0, 1601).unwrap();
        let x = solve_bound_states(
            &Potential1D::gaussian(1.4, 5.0),
            &grid,
            KineticConvention::Reduced,
            "x",
        )
        .unwrap();
        // The sweep can pull a near-threshold state below zero whose tail is
        // wider than any reasonable grid; relax the edge check, which only
        // affects that marginal state, not the certification question.
        let opts = crate::eigen1d::SolveOptions {
            edge_amplitude_tol: 1e-2,
            ..Default::default()
        };
        for step in 0..5 {
            let depth = 2.2 * (1.0 + 0.05 * step as f64);
            let y = crate::eigen1d::solve_bound_states_with(
                &Potential1D::gaussian(depth, 4.0),
                &grid,
                KineticConvention::Reduced,
                "y",
                opts,
            )
            .unwrap();
            let sys = SeparableSystem::new(vec![x.clone(), y]).unwrap();
            assert!(
                certify_product(&sys, &[2, 1]).unwrap().is_some(),
                "lost certification at depth {depth}"
            );
        }
    }

    #[test]
    fn dense_cross_check_on_a_small_grid() {
        use crate::dense2d::{dense_diagonalize_2d, tensor_sum_sorted};
        use crate::tridiag::{eig_tridiagonal, EigCount, TridiagonalOperator};
        use ndarray::Array2;

        // Coarse grid: physically inaccurate, but separability on the grid
        // is exact, so products must appear verbatim in the dense spectrum.
        let n = 48;
        let grid = Grid1D::symmetric(14.0, n).unwrap();
        let px = Potential1D::gaussian(1.8, 3.0);
        let py = Potential1D::gaussian(2.6, 2.2);
        // Deliberately coarse and truncated: the identity being tested is
        // exact on the grid, whatever the physical accuracy.
        let opts = crate::eigen1d::SolveOptions {
            edge_amplitude_tol: 1e-2,
            ..Default::default()
        };
        let x = crate::eigen1d::solve_bound_states_with(
            &px,
            &grid,
            KineticConvention::Reduced,
            "x",
            opts,
        )
        .unwrap();
        let y = crate::eigen1d::solve_bound_states_with(
            &py,
            &grid,
            KineticConvention::Reduced,
            "y",
            opts,
        )
        .unwrap();
        let sys = SeparableSystem::new(vec![x, y]).unwrap();
        let bics = find_bics(&sys).unwrap();
        assert!(!bics.is_empty(), "test system should host a BIC");

        let vx = px.sample(&grid).unwrap();
        let vy = py.sample(&grid).unwrap();
        let mut pot2d = Array2::zeros((n, n));
        for ix in 0..n {
            for iy in 0..n {
                pot2d[(ix, iy)] = vx[ix] + vy[iy];
            }
        }
        let dense =
            dense_diagonalize_2d(&pot2d, &grid, &grid, KineticConvention::Reduced, true).unwrap();
        let scale = dense.eigenvalues.iter().fold(0.0f64, |m, x| m.max(x.abs()));

        let all = |v: &[f64]| -> Vec<f64> {
            eig_tridiagonal(
                &TridiagonalOperator::schrodinger(&grid, v, KineticConvention::Reduced).unwrap(),
                EigCount::All,
            )
            .unwrap()
            .iter()
            .map(|p| p.value)
            .collect()
        };
        for (a, b) in dense
            .eigenvalues
            .iter()
            .zip(tensor_sum_sorted(&all(&vx), &all(&vy)))
        {
            assert!((a - b).abs() <= 1e-10 * scale);
        }

        let vectors = dense.eigenvectors.as_ref().unwrap();
        let h = grid.spacing();
        for bic in &bics {
            let best = dense
                .eigenvalues
                .iter()
                .map(|e| (e - bic.state.energy).abs())
                .fold(f64::INFINITY, f64::min);
            assert!(
                best <= 1e-9 * scale,
                "missing BIC energy {}",
                bic.state.energy
            );

            // Product wavefunction against the dense eigenvector subspace of
            // nearby energies: overlap^2 beyond 1 - 1e-10.
            let wx = &sys.axis(0).bound_states[bic.state.indices[0]].wavefunction;
            let wy = &sys.axis(1).bound_states[bic.state.indices[1]].wavefunction;
            let mut product = vec![0.0; n * n];
            for ix in 0..n {
                for iy in 0..n {
                    // 1D functions are grid-normalized (h sum = 1); the dense
                    // eigenvectors are unit-Euclidean, so scale by h.
                    product[ix * n + iy] = wx[ix] * wy[iy] * h;
                }
            }
            let mut overlap2 = 0.0;
            for (k, e) in dense.eigenvalues.iter().enumerate() {
                if (e - bic.state.energy).abs() <= 1e-8 * scale {
                    let dot: f64 = (0..n * n).map(|r| vectors[(r, k)] * product[r]).sum();
                    overlap2 += dot * dot;
                }
            }
            assert!(
                overlap2 > 1.0 - 1e-10,
                "overlap^2 = {overlap2} for {}",
                bic.state.ket_label()
            );
        }
    }

    #[test]
    fn level_counting_identity_on_a_small_box() {
        // On a finite product grid the count of dense eigenvalues below E
        // equals bound products below E plus, per channel, the box levels
        // that fit under E: exact combinatorics of the tensor sum.
        use crate::tridiag::{eig_tridiagonal, EigCount, TridiagonalOperator};
        let n = 40;
        let grid = Grid1D::symmetric(12.0, n).unwrap();
        let vx = Potential1D::gaussian(1.8, 3.0).sample(&grid).unwrap();
        let vy = Potential1D::gaussian(2.6, 2.2).sample(&grid).unwrap();
        let all = |v: &[f64]| -> Vec<f64> {
            eig_tridiagonal(
                &TridiagonalOperator::schrodinger(&grid, v, KineticConvention::Reduced).unwrap(),
                EigCount::All,
            )
            .unwrap()
            .iter()
            .map(|p| p.value)
            .collect()
        };
        let ex = all(&vx);
        let ey = all(&vy);
        let sums = crate::dense2d::tensor_sum_sorted(&ex, &ey);

        let split = |es: &[f64]| -> (Vec<f64>, Vec<f64>) {
            (
                es.iter().copied().filter(|e| *e < 0.0).collect(),
                es.iter().copied().filter(|e| *e >= 0.0).collect(),
            )
        };
        let (bx, cx) = split(&ex);
        let (by, cy) = split(&ey);

        for e_mark in [-1.0, -0.3, 0.4, 2.0] {
            let total = sums.partition_point(|s| *s < e_mark);
            let pair_count = |left: &[f64], right: &[f64]| -> usize {
                left.iter()
                    .map(|a| right.partition_point(|b| a + b < e_mark))
                    .sum()
            };
            let expected = pair_count(&bx, &by)
                + pair_count(&bx, &cy)
                + pair_count(&by, &cx)
                + pair_count(&cx, &cy);
            assert_eq!(total, expected, "at E={e_mark}");
        }
    }
}
