//! Tight-binding chains with a centered on-site defect, and BICs on the 2D
//! product lattice.
//!
//! A uniform chain with hopping `t` has its band on `[-2|t|, +2|t|]`; a
//! defect region pulls discrete states outside the band. Published numbers
//! for such lattices are quoted with the zero of energy at the band edge the
//! bound states split off from (the same "continuum starts at zero"
//! convention as the continuous systems), so the spectrum carries both raw
//! and band-referenced energies. The defect sign and extent conventions are
//! ambiguous in compact notation; a resolver tries all four readings and
//! keeps whichever reproduces the published level positions.

use crate::eigen1d::Parity;
use crate::error::{Error, Result};
use crate::separable::AxisSet;
use crate::tridiag::TridiagonalOperator;

/// Whether the defect occupies `|k| < N` or `|k| <= N`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum DefectRegion {
    HalfOpen,
    Closed,
}

/// Whether the on-site defect energy is `-V` (literal) or `+V`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum OnsiteSign {
    MinusV,
    PlusV,
}

/// A finite, centered truncation of the infinite defect chain.
#[derive(Debug, Clone, PartialEq)]
pub struct TightBindingChain {
    pub v: f64,
    pub t: f64,
    pub n_defect: usize,
    /// Total sites; must be odd so the defect is centered.
    pub sites: usize,
    pub onsite_sign: OnsiteSign,
    pub region: DefectRegion,
}

impl TightBindingChain {
    pub fn new(
        v: f64,
        t: f64,
        n_defect: usize,
        sites: usize,
        onsite_sign: OnsiteSign,
        region: DefectRegion,
    ) -> Result<Self> {
        if sites % 2 == 0 || sites < 5 {
            return Err(Error::InvalidConfig(format!(
                "chain needs an odd site count of at least 5, got {sites}"
            )));
        }
        if t == 0.0 {
            return Err(Error::InvalidConfig("hopping must be nonzero".into()));
        }
        Ok(TightBindingChain {
            v,
            t,
            n_defect,
            sites,
            onsite_sign,
            region,
        })
    }

    /// On-site energy at site `k` (centered indexing).
    pub fn onsite(&self, k: isize) -> f64 {
        let inside = match self.region {
            DefectRegion::HalfOpen => (k.unsigned_abs() as usize) < self.n_defect,
            DefectRegion::Closed => (k.unsigned_abs() as usize) <= self.n_defect,
        };
        if !inside {
            return 0.0;
        }
        match self.onsite_sign {
            OnsiteSign::MinusV => -self.v,
            OnsiteSign::PlusV => self.v,
        }
    }

    pub fn band_edges(&self) -> (f64, f64) {
        (-2.0 * self.t.abs(), 2.0 * self.t.abs())
    }

    pub fn hamiltonian(&self) -> TridiagonalOperator {
        let half = (self.sites / 2) as isize;
        let diagonal: Vec<f64> = (-half..=half).map(|k| self.onsite(k)).collect();
        let off_diagonal = vec![self.t; self.sites - 1];
        TridiagonalOperator::new(diagonal, off_diagonal).expect("validated dimensions")
    }
}

/// One defect-localized eigenstate of the truncated chain.
#[derive(Debug, Clone)]
pub struct ChainState {
    pub n: usize,
    /// Raw eigenvalue of the chain Hamiltonian.
    pub energy: f64,
    /// Energy referenced to the band edge the state split off from: band
    /// bottom for below-band states, band top (mirrored sign) for above-band
    /// ones. Negative means bound below its continuum.
    pub energy_from_band: f64,
    pub below_band: bool,
    pub amplitudes: Vec<f64>,
    pub parity: Parity,
}

/// Defect-state spectrum of one chain.
#[derive(Debug, Clone)]
pub struct ChainSpectrum {
    pub chain: TightBindingChain,
    pub band_edges: (f64, f64),
    pub bound_states: Vec<ChainState>,
}

impl ChainSpectrum {
    pub fn bound_count(&self) -> usize {
        self.bound_states.len()
    }

    /// Band-referenced energies, ascending.
    pub fn energies_from_band(&self) -> Vec<f64> {
        self.bound_states.iter().map(|b| b.energy_from_band).collect()
    }

    pub fn all_below_band(&self) -> bool {
        self.bound_states.iter().all(|b| b.below_band)
    }
}

/// All eigenstates outside the band, with parities and the truncation check.
pub fn chain_bound_states(chain: &TightBindingChain) -> Result<ChainSpectrum> {
    let op = chain.hamiltonian();
    let (band_lo, band_hi) = chain.band_edges();
    let scale = op.norm_bound();
    let margin = 1e-12 * scale;

    let (lo, hi) = op.gershgorin();
    let mut found = op.eigenvalues_in(lo - 1.0, band_lo - margin);
    found.extend(op.eigenvalues_in(band_hi + margin, hi + 1.0));

    let mut bound_states = Vec::with_capacity(found.len());
    for (slot, &(k, e)) in found.iter().enumerate() {
        let v = op.eigenvector(e, &[], k)?;
        let max_amp = v.iter().fold(0.0f64, |m, x| m.max(x.abs()));
        let edge_amp = v[0].abs().max(v[v.len() - 1].abs());
        if edge_amp >= 1e-8 * max_amp {
            return Err(Error::TruncationTooSmall(format!(
                "defect state at E = {e:.6} reaches the chain ends (relative amplitude {:.2e}); increase the site count beyond {}",
                edge_amp / max_amp,
                chain.sites
            )));
        }
        let below_band = e < band_lo;
        let energy_from_band = if below_band { e - band_lo } else { band_hi - e };
        let mirror: f64 = v.iter().zip(v.iter().rev()).map(|(a, b)| a * b).sum();
        let parity = if (mirror - 1.0).abs() < 1e-6 {
            Parity::Even
        } else if (mirror + 1.0).abs() < 1e-6 {
            Parity::Odd
        } else {
            Parity::None
        };
        bound_states.push(ChainState {
            n: slot,
            energy: e,
            energy_from_band,
            below_band,
            amplitudes: v,
            parity,
        });
    }

    // Ascending in band-referenced energy (below-band states already are).
    bound_states.sort_by(|a, b| a.energy_from_band.partial_cmp(&b.energy_from_band).unwrap());
    for (i, b) in bound_states.iter_mut().enumerate() {
        b.n = i;
    }

    Ok(ChainSpectrum {
        chain: chain.clone(),
        band_edges: chain.band_edges(),
        bound_states,
    })
}

/// The four readings of a `{V, t, N}` defect-chain recipe.
pub fn convention_candidates() -> [(OnsiteSign, DefectRegion); 4] {
    [
        (OnsiteSign::MinusV, DefectRegion::HalfOpen),
        (OnsiteSign::MinusV, DefectRegion::Closed),
        (OnsiteSign::PlusV, DefectRegion::HalfOpen),
        (OnsiteSign::PlusV, DefectRegion::Closed),
    ]
}

#[derive(Debug, Clone)]
pub struct CandidateReport {
    pub onsite_sign: OnsiteSign,
    pub region: DefectRegion,
    pub energies_from_band: Vec<f64>,
    /// Worst deviation from the targets, or `None` when the counts differ.
    pub max_deviation: Option<f64>,
}

#[derive(Debug, Clone)]
pub struct ResolvedConvention {
    pub onsite_sign: OnsiteSign,
    pub region: DefectRegion,
    pub spectrum: ChainSpectrum,
    pub max_deviation: f64,
    pub candidates: Vec<CandidateReport>,
}

/// Solve all four candidate conventions and keep the one whose
/// band-referenced bound energies reproduce `targets` within `tol`.
pub fn resolve_convention(
    v: f64,
    t: f64,
    n_defect: usize,
    sites: usize,
    targets: &[f64],
    tol: f64,
) -> Result<ResolvedConvention> {
    let mut candidates = Vec::with_capacity(4);
    let mut winner: Option<ResolvedConvention> = None;
    for (onsite_sign, region) in convention_candidates() {
        let chain = TightBindingChain::new(v, t, n_defect, sites, onsite_sign, region)?;
        let spectrum = match chain_bound_states(&chain) {
            Ok(s) => s,
            Err(Error::TruncationTooSmall(_)) => continue,
            Err(e) => return Err(e),
        };
        let energies = spectrum.energies_from_band();
        let max_dev = if energies.len() == targets.len() {
            Some(
                energies
                    .iter()
                    .zip(targets)
                    .map(|(a, b)| (a - b).abs())
                    .fold(0.0f64, f64::max),
            )
        } else {
            None
        };
        candidates.push(CandidateReport {
            onsite_sign,
            region,
            energies_from_band: energies,
            max_deviation: max_dev,
        });
        if let Some(dev) = max_dev {
            // Bipartite symmetry lets a repulsive defect mirror the published
            // energies from above the band; prefer the reading with genuine
            // below-band bound states, which is what the zero-at-continuum
            // convention describes.
            let better = dev <= tol
                && match &winner {
                    None => true,
                    Some(w) => {
                        let w_below = w.spectrum.all_below_band();
                        let c_below = spectrum.all_below_band();
                        (c_below && !w_below) || (c_below == w_below && dev < w.max_deviation)
                    }
                };
            if better {
                winner = Some(ResolvedConvention {
                    onsite_sign,
                    region,
                    spectrum,
                    max_deviation: dev,
                    candidates: Vec::new(),
                });
            }
        }
    }
    match winner {
        Some(mut w) => {
            w.candidates = candidates;
            Ok(w)
        }
        None => Err(Error::CalibrationFailed(format!(
            "no defect-chain convention reproduces the target energies {targets:?} within {tol}; candidates saw {:?}",
            candidates
                .iter()
                .map(|c| c.energies_from_band.clone())
                .collect::<Vec<_>>()
        ))),
    }
}

/// A continuum channel of the 2D product lattice. Lattice continua are bands,
/// bounded above as well as below, so each channel carries a window.
#[derive(Debug, Clone)]
pub struct LatticeChannel {
    pub delocalized: AxisSet,
    /// `(axis, index, parity)` of the bound factor for singly-delocalized
    /// channels; `None` when both axes are extended.
    pub bound: Option<(usize, usize, Parity)>,
    /// Energy window `[onset, top]` in band-referenced units.
    pub window: (f64, f64),
}

/// A certified BIC of the product lattice.
#[derive(Debug, Clone)]
pub struct LatticeBic {
    pub indices: (usize, usize),
    /// Band-referenced product energy.
    pub energy: f64,
    pub parities: (Parity, Parity),
    pub channels: Vec<LatticeChannel>,
    pub symmetry_protected: bool,
}

#[derive(Debug, Clone)]
pub struct LatticeBicSet {
    pub threshold: f64,
    pub bics: Vec<LatticeBic>,
}

/// BICs of `H_x (x) I + I (x) H_y`: bound products embedded in at least one
/// channel window. Energies are band-referenced, so each 1D continuum spans
/// `[0, 4|t|]` and the threshold is the lower bound ground state.
pub fn lattice_find_bics(x: &ChainSpectrum, y: &ChainSpectrum) -> Result<LatticeBicSet> {
    if !x.all_below_band() || !y.all_below_band() {
        return Err(Error::InvalidConfig(
            "BIC certification expects all defect states below the band".into(),
        ));
    }
    let bandwidth_x = x.band_edges.1 - x.band_edges.0;
    let bandwidth_y = y.band_edges.1 - y.band_edges.0;

    let threshold = x
        .bound_states
        .first()
        .map(|b| b.energy_from_band)
        .unwrap_or(0.0)
        .min(
            y.bound_states
                .first()
                .map(|b| b.energy_from_band)
                .unwrap_or(0.0),
        );

    let mut bics = Vec::new();
    for bx in &x.bound_states {
        for by in &y.bound_states {
            let energy = bx.energy_from_band + by.energy_from_band;
            let mut channels = Vec::new();
            // y-extended, bound in x.
            for bound in &x.bound_states {
                let window = (
                    bound.energy_from_band,
                    bound.energy_from_band + bandwidth_y,
                );
                if energy > window.0 && energy < window.1 {
                    channels.push(LatticeChannel {
                        delocalized: AxisSet::from_axes(&[1]),
                        bound: Some((0, bound.n, bound.parity)),
                        window,
                    });
                }
            }
            // x-extended, bound in y.
            for bound in &y.bound_states {
                let window = (
                    bound.energy_from_band,
                    bound.energy_from_band + bandwidth_x,
                );
                if energy > window.0 && energy < window.1 {
                    channels.push(LatticeChannel {
                        delocalized: AxisSet::from_axes(&[0]),
                        bound: Some((1, bound.n, bound.parity)),
                        window,
                    });
                }
            }
            // Both extended: the 2D band.
            let window2 = (0.0, bandwidth_x + bandwidth_y);
            if energy > window2.0 && energy < window2.1 {
                channels.push(LatticeChannel {
                    delocalized: AxisSet::from_axes(&[0, 1]),
                    bound: None,
                    window: window2,
                });
            }
            if channels.is_empty() {
                continue;
            }
            let parities = (bx.parity, by.parity);
            let symmetry_protected = channels.iter().all(|ch| match ch.bound {
                Some((axis, _, ch_parity)) => {
                    let state_parity = if axis == 0 { parities.0 } else { parities.1 };
                    matches!(
                        (state_parity, ch_parity),
                        (Parity::Even, Parity::Odd) | (Parity::Odd, Parity::Even)
                    )
                }
                // Doubly-extended states come in all parity combinations;
                // nothing protects against them by mirror symmetry alone.
                None => false,
            });
            bics.push(LatticeBic {
                indices: (bx.n, by.n),
                energy,
                parities,
                channels,
                symmetry_protected,
            });
        }
    }
    bics.sort_by(|a, b| {
        a.energy
            .partial_cmp(&b.energy)
            .unwrap()
            .then_with(|| a.indices.cmp(&b.indices))
    });
    Ok(LatticeBicSet { threshold, bics })
}

#[cfg(test)]
mod tests {
    use super::*;

    const PUBLISHED: [f64; 4] = [-0.93, -0.74, -0.46, -0.16];

    fn published_chain() -> ChainSpectrum {
        resolve_convention(-1.0, -0.3, 2, 201, &PUBLISHED, 0.01)
            .unwrap()
            .spectrum
    }

    #[test]
    fn resolver_picks_the_attractive_closed_region() {
        let resolved = resolve_convention(-1.0, -0.3, 2, 201, &PUBLISHED, 0.01).unwrap();
        assert_eq!(resolved.onsite_sign, OnsiteSign::PlusV);
        assert_eq!(resolved.region, DefectRegion::Closed);
        assert!(resolved.max_deviation <= 0.01);
        let energies = resolved.spectrum.energies_from_band();
        assert_eq!(energies.len(), 4);
        for (e, t) in energies.iter().zip(PUBLISHED) {
            assert!((e - t).abs() <= 0.01, "{e} vs {t}");
        }
        // The resolver reports all four candidates.
        assert_eq!(resolved.candidates.len(), 4);
    }

    #[test]
    fn no_defect_means_no_bound_states() {
        let chain =
            TightBindingChain::new(0.0, -0.3, 2, 201, OnsiteSign::PlusV, DefectRegion::Closed)
                .unwrap();
        let spec = chain_bound_states(&chain).unwrap();
        assert_eq!(spec.bound_count(), 0);
    }

    #[test]
    fn deep_single_site_defect_oracle() {
        // One defect site at -V, V >> |t|: second-order perturbation theory
        // puts the bound state at -V - 2 t^2 / V.
        let v = 10.0;
        let t = 0.3f64;
        let chain =
            TightBindingChain::new(v, t, 1, 201, OnsiteSign::MinusV, DefectRegion::HalfOpen)
                .unwrap();
        let spec = chain_bound_states(&chain).unwrap();
        assert_eq!(spec.bound_count(), 1);
        let expect = -v - 2.0 * t * t / v;
        let e = spec.bound_states[0].energy;
        assert!(
            (e - expect).abs() < 1e-3,
            "E = {e}, second-order estimate {expect}"
        );
    }

    #[test]
    fn band_edges_of_truncated_uniform_chain_converge() {
        let t = -0.3f64;
        for (sites, tol) in [(51usize, 2e-3), (201, 1e-3), (401, 1e-4)] {
            let chain =
                TightBindingChain::new(0.0, t, 1, sites, OnsiteSign::PlusV, DefectRegion::HalfOpen)
                    .unwrap();
            let op = chain.hamiltonian();
            let bottom = op.eigenvalue_by_index(0);
            let top = op.eigenvalue_by_index(sites - 1);
            assert!((bottom + 2.0 * t.abs()).abs() < tol, "sites={sites}");
            assert!((top - 2.0 * t.abs()).abs() < tol, "sites={sites}");
        }
    }

    #[test]
    fn bound_count_is_monotone_in_defect_depth() {
        let mut last = 0;
        for v in [0.2, 0.5, 1.0, 1.5, 2.5, 4.0] {
            let chain =
                TightBindingChain::new(v, -0.3, 2, 301, OnsiteSign::MinusV, DefectRegion::Closed)
                    .unwrap();
            // MinusV with positive v is the attractive defect here.
            let chain = TightBindingChain {
                onsite_sign: OnsiteSign::PlusV,
                v: -v,
                ..chain
            };
            let count = chain_bound_states(&chain)
                .map(|s| s.bound_count())
                .unwrap_or(0);
            assert!(
                count >= last,
                "count dropped from {last} to {count} at |V| = {v}"
            );
            last = count;
        }
        assert!(last >= 4);
    }

    #[test]
    fn published_bic_set_and_protection_flags() {
        let spec = published_chain();
        let set = lattice_find_bics(&spec, &spec).unwrap();
        assert!((set.threshold + 0.9308).abs() < 0.01);
        let mut found: Vec<(usize, usize)> = set.bics.iter().map(|b| b.indices).collect();
        found.sort();
        assert_eq!(
            found,
            vec![(1, 3), (2, 2), (2, 3), (3, 1), (3, 2), (3, 3)],
            "exactly the published six BICs"
        );
        for bic in &set.bics {
            let protected = bic.indices == (1, 3) || bic.indices == (3, 1);
            assert_eq!(
                bic.symmetry_protected, protected,
                "protection flag for {:?}",
                bic.indices
            );
            assert!(!bic.channels.is_empty());
        }
    }

    #[test]
    fn shallow_single_bound_state_gives_no_bics() {
        let chain =
            TightBindingChain::new(-0.25, -0.3, 0, 201, OnsiteSign::PlusV, DefectRegion::Closed)
                .unwrap();
        let spec = chain_bound_states(&chain).unwrap();
        assert_eq!(spec.bound_count(), 1);
        let set = lattice_find_bics(&spec, &spec).unwrap();
        assert!(set.bics.is_empty(), "|0,0> sits below every channel");
    }

    #[test]
    fn product_lattice_spectrum_is_the_exact_tensor_sum() {
        use crate::dense2d::tensor_sum_sorted;
        use crate::tridiag::{eig_tridiagonal, EigCount};
        use ndarray::Array2;
        use ndarray_linalg::{EigValsh, UPLO};

        let chain =
            TightBindingChain::new(-1.0, -0.3, 2, 31, OnsiteSign::PlusV, DefectRegion::Closed)
                .unwrap();
        let op = chain.hamiltonian();
        let e1: Vec<f64> = eig_tridiagonal(&op, EigCount::All)
            .unwrap()
            .iter()
            .map(|p| p.value)
            .collect();
        let m = chain.sites;
        let mut h2 = Array2::<f64>::zeros((m * m, m * m));
        for i in 0..m {
            for j in 0..m {
                let row = i * m + j;
                h2[(row, row)] = chain.onsite(i as isize - (m / 2) as isize)
                    + chain.onsite(j as isize - (m / 2) as isize);
                if j + 1 < m {
                    h2[(row, row + 1)] = chain.t;
                    h2[(row + 1, row)] = chain.t;
                }
                if i + 1 < m {
                    let col = (i + 1) * m + j;
                    h2[(row, col)] = chain.t;
                    h2[(col, row)] = chain.t;
                }
            }
        }
        let dense = h2.eigvalsh(UPLO::Lower).unwrap();
        let sums = tensor_sum_sorted(&e1, &e1);
        for (a, b) in dense.iter().zip(&sums) {
            assert!((a - b).abs() < 1e-11, "{a} vs {b}");
        }
    }
}
