//! Real symmetric tridiagonal operators and their eigensolver.
//!
//! Eigenvalues come from Sturm-sequence bisection (the LDLT pivot count gives
//! the number of eigenvalues below a shift), eigenvectors from inverse
//! iteration with a partially pivoted tridiagonal solve. This is the engine
//! behind every 1D Hamiltonian in the crate; grids with 10^5 points only ever
//! ask for the eigenvalues they need, never the full decomposition.

use crate::error::{Error, Result};
use crate::eigen1d::KineticConvention;
use crate::grid::Grid1D;

/// Guard used in place of a vanishing LDLT pivot during Sturm counts.
const PIVOT_GUARD: f64 = 1e-300;

/// How many eigenpairs `eig_tridiagonal` should produce.
#[derive(Debug, Clone, Copy)]
pub enum EigCount {
    All,
    Lowest(usize),
}

/// A real symmetric tridiagonal matrix: `diagonal` of length n and
/// `off_diagonal` of length n-1.
#[derive(Debug, Clone)]
pub struct TridiagonalOperator {
    diagonal: Vec<f64>,
    off_diagonal: Vec<f64>,
}

/// One eigenpair; the vector is normalized to unit Euclidean length with its
/// first significant component positive.
#[derive(Debug, Clone)]
pub struct EigenPair {
    pub value: f64,
    pub vector: Vec<f64>,
}

impl TridiagonalOperator {
    pub fn new(diagonal: Vec<f64>, off_diagonal: Vec<f64>) -> Result<Self> {
        if diagonal.is_empty() {
            return Err(Error::InvalidGrid("empty operator".into()));
        }
        if off_diagonal.len() + 1 != diagonal.len() {
            return Err(Error::GridMismatch(format!(
                "off-diagonal length {} does not match dimension {}",
                off_diagonal.len(),
                diagonal.len()
            )));
        }
        if diagonal.iter().chain(&off_diagonal).any(|v| !v.is_finite()) {
            return Err(Error::InvalidGrid("non-finite matrix entry".into()));
        }
        Ok(TridiagonalOperator {
            diagonal,
            off_diagonal,
        })
    }

    /// Finite-difference Hamiltonian `-c d2/dx2 + V` with Dirichlet walls,
    /// using the 3-point Laplacian. `c` comes from the kinetic convention.
    /// The 3-point stencil is what makes multi-axis separability exact on the
    /// grid.
    pub fn schrodinger(
        grid: &Grid1D,
        potential: &[f64],
        convention: KineticConvention,
    ) -> Result<Self> {
        if potential.len() != grid.len() {
            return Err(Error::GridMismatch(format!(
                "potential has {} samples for a {}-point grid",
                potential.len(),
                grid.len()
            )));
        }
        let c = convention.kinetic_coefficient();
        let h2 = grid.spacing() * grid.spacing();
        let diagonal: Vec<f64> = potential.iter().map(|v| 2.0 * c / h2 + v).collect();
        let off_diagonal = vec![-c / h2; grid.len() - 1];
        TridiagonalOperator::new(diagonal, off_diagonal)
    }

    pub fn dim(&self) -> usize {
        self.diagonal.len()
    }

    pub fn diagonal(&self) -> &[f64] {
        &self.diagonal
    }

    pub fn off_diagonal(&self) -> &[f64] {
        &self.off_diagonal
    }

    /// Matrix-vector product.
    pub fn apply(&self, v: &[f64]) -> Vec<f64> {
        let n = self.dim();
        debug_assert_eq!(v.len(), n);
        let mut out = vec![0.0; n];
        for i in 0..n {
            let mut s = self.diagonal[i] * v[i];
            if i > 0 {
                s += self.off_diagonal[i - 1] * v[i - 1];
            }
            if i + 1 < n {
                s += self.off_diagonal[i] * v[i + 1];
            }
            out[i] = s;
        }
        out
    }

    /// Gershgorin bounds on the spectrum.
    pub fn gershgorin(&self) -> (f64, f64) {
        let n = self.dim();
        let mut lo = f64::INFINITY;
        let mut hi = f64::NEG_INFINITY;
        for i in 0..n {
            let left = if i > 0 { self.off_diagonal[i - 1].abs() } else { 0.0 };
            let right = if i + 1 < n { self.off_diagonal[i].abs() } else { 0.0 };
            lo = lo.min(self.diagonal[i] - left - right);
            hi = hi.max(self.diagonal[i] + left + right);
        }
        (lo, hi)
    }

    /// Spectral scale used for tolerances: the largest Gershgorin magnitude.
    pub fn norm_bound(&self) -> f64 {
        let (lo, hi) = self.gershgorin();
        lo.abs().max(hi.abs()).max(f64::MIN_POSITIVE)
    }

    /// Number of eigenvalues strictly below `lambda` (Sturm sequence / LDLT
    /// negative pivot count).
    pub fn sturm_count(&self, lambda: f64) -> usize {
        let n = self.dim();
        let mut count = 0usize;
        let mut q = self.diagonal[0] - lambda;
        if q < 0.0 {
            count += 1;
        }
        for i in 1..n {
            let q_safe = if q.abs() < PIVOT_GUARD {
                if q >= 0.0 {
                    PIVOT_GUARD
                } else {
                    -PIVOT_GUARD
                }
            } else {
                q
            };
            let e = self.off_diagonal[i - 1];
            q = (self.diagonal[i] - lambda) - e * e / q_safe;
            if q < 0.0 {
                count += 1;
            }
        }
        count
    }

    /// The k-th eigenvalue (ascending, 0-based) by bisection.
    pub fn eigenvalue_by_index(&self, k: usize) -> f64 {
        debug_assert!(k < self.dim());
        let (mut a, mut b) = self.gershgorin();
        a -= 1.0;
        b += 1.0;
        for _ in 0..200 {
            let mid = 0.5 * (a + b);
            if (b - a) <= 4.0 * f64::EPSILON * mid.abs().max(1.0) {
                break;
            }
            if self.sturm_count(mid) <= k {
                a = mid;
            } else {
                b = mid;
            }
        }
        0.5 * (a + b)
    }

    /// All eigenvalues in `(lo, hi)`, returned as `(index, value)` pairs in
    /// ascending order.
    pub fn eigenvalues_in(&self, lo: f64, hi: f64) -> Vec<(usize, f64)> {
        let k0 = self.sturm_count(lo);
        let k1 = self.sturm_count(hi);
        (k0..k1).map(|k| (k, self.eigenvalue_by_index(k))).collect()
    }

    /// Eigenvector for an eigenvalue computed to bisection accuracy, via
    /// inverse iteration. `ortho` lists previously found vectors in the same
    /// near-degenerate cluster to orthogonalize against. Returns a unit
    /// Euclidean-norm vector.
    pub fn eigenvector(&self, lambda: f64, ortho: &[&[f64]], index_hint: usize) -> Result<Vec<f64>> {
        let n = self.dim();
        let scale = self.norm_bound();
        // Absolute floor covers operators whose norm is itself at round-off
        // (bisection localizes eigenvalues to ~eps absolute regardless).
        let tol = 1e-10 * scale + 64.0 * f64::EPSILON * (1.0 + lambda.abs());

        let mut v = seed_vector(n, index_hint);
        orthogonalize(&mut v, ortho);
        normalize(&mut v);

        let mut best: Option<(f64, Vec<f64>)> = None;
        for attempt in 0..10 {
            let mut w = v.clone();
            solve_shifted(&self.diagonal, &self.off_diagonal, lambda, &mut w);
            // Pivot guards can produce ~1e300 entries; rescale before the
            // squared norm to avoid overflow.
            let peak = w.iter().fold(0.0f64, |m, x| m.max(x.abs()));
            if !peak.is_finite() || peak == 0.0 {
                v = seed_vector(n, index_hint.wrapping_add(17 * (attempt + 1)));
                orthogonalize(&mut v, ortho);
                normalize(&mut v);
                continue;
            }
            for x in w.iter_mut() {
                *x /= peak;
            }
            orthogonalize(&mut w, ortho);
            let norm = normalize(&mut w);
            if !norm.is_finite() || norm == 0.0 {
                v = seed_vector(n, index_hint.wrapping_add(17 * (attempt + 1)));
                orthogonalize(&mut v, ortho);
                normalize(&mut v);
                continue;
            }
            let residual = self.residual(lambda, &w);
            if best.as_ref().map_or(true, |(r, _)| residual < *r) {
                best = Some((residual, w.clone()));
            }
            if residual <= 0.25 * tol {
                break;
            }
            v = w;
        }

        let (residual, mut w) = best.ok_or(Error::NonConvergence {
            index: index_hint,
            residual: f64::INFINITY,
        })?;
        if residual > tol {
            return Err(Error::NonConvergence {
                index: index_hint,
                residual,
            });
        }
        canonical_sign(&mut w);
        Ok(w)
    }

    /// `||Hv - lambda v||_2` for a unit vector `v`.
    pub fn residual(&self, lambda: f64, v: &[f64]) -> f64 {
        let hv = self.apply(v);
        hv.iter()
            .zip(v)
            .map(|(a, b)| {
                let d = a - lambda * b;
                d * d
            })
            .sum::<f64>()
            .sqrt()
    }
}

/// First `k` (or all) eigenpairs in ascending order. Near-degenerate clusters
/// are orthogonalized; exact ties are ordered by the index of the first
/// significant vector component so output is deterministic.
pub fn eig_tridiagonal(op: &TridiagonalOperator, count: EigCount) -> Result<Vec<EigenPair>> {
    let n = op.dim();
    let k = match count {
        EigCount::All => n,
        EigCount::Lowest(k) => {
            if k > n {
                return Err(Error::InvalidGrid(format!(
                    "requested {k} eigenpairs of a dimension-{n} operator"
                )));
            }
            k
        }
    };
    let values: Vec<f64> = (0..k).map(|i| op.eigenvalue_by_index(i)).collect();
    let cluster_tol = 1e-8 * op.norm_bound().max(1e-30);

    let mut pairs: Vec<EigenPair> = Vec::with_capacity(k);
    let mut cluster_start = 0usize;
    for (i, &value) in values.iter().enumerate() {
        if i > 0 && (value - values[i - 1]).abs() > cluster_tol {
            cluster_start = i;
        }
        let ortho: Vec<&[f64]> = pairs[cluster_start..i]
            .iter()
            .map(|p| p.vector.as_slice())
            .collect();
        let vector = op.eigenvector(value, &ortho, i)?;
        pairs.push(EigenPair { value, vector });
    }

    // Canonical order inside exactly tied groups.
    pairs.sort_by(|a, b| {
        a.value
            .partial_cmp(&b.value)
            .unwrap()
            .then_with(|| first_significant(&a.vector).cmp(&first_significant(&b.vector)))
    });
    Ok(pairs)
}

fn first_significant(v: &[f64]) -> usize {
    let max = v.iter().fold(0.0f64, |m, x| m.max(x.abs()));
    v.iter()
        .position(|x| x.abs() > 1e-8 * max)
        .unwrap_or(0)
}

fn canonical_sign(v: &mut [f64]) {
    let i = first_significant(v);
    if v[i] < 0.0 {
        for x in v.iter_mut() {
            *x = -*x;
        }
    }
}

fn seed_vector(n: usize, salt: usize) -> Vec<f64> {
    // Deterministic quasi-random start; xorshift keeps clusters from sharing
    // a starting direction.
    let mut state = 0x9e3779b97f4a7c15u64 ^ (salt as u64).wrapping_mul(0xd1342543de82ef95);
    (0..n)
        .map(|_| {
            state ^= state << 13;
            state ^= state >> 7;
            state ^= state << 17;
            (state >> 11) as f64 / (1u64 << 53) as f64 - 0.5
        })
        .collect()
}

fn orthogonalize(v: &mut [f64], basis: &[&[f64]]) {
    for b in basis {
        let dot: f64 = v.iter().zip(*b).map(|(a, c)| a * c).sum();
        for (x, c) in v.iter_mut().zip(*b) {
            *x -= dot * c;
        }
    }
}

fn normalize(v: &mut [f64]) -> f64 {
    let norm = v.iter().map(|x| x * x).sum::<f64>().sqrt();
    if norm > 0.0 && norm.is_finite() {
        for x in v.iter_mut() {
            *x /= norm;
        }
    }
    norm
}

/// Solve `(T - lambda I) x = b` in place by Gaussian elimination with partial
/// pivoting (fill-in limited to a second superdiagonal). Vanishing pivots are
/// replaced by a tiny guard, which is exactly what inverse iteration wants.
fn solve_shifted(diagonal: &[f64], off_diagonal: &[f64], lambda: f64, b: &mut [f64]) {
    let n = diagonal.len();
    if n == 1 {
        let d = guard(diagonal[0] - lambda);
        b[0] /= d;
        return;
    }
    let dl: Vec<f64> = off_diagonal.to_vec();
    let mut d: Vec<f64> = diagonal.iter().map(|x| x - lambda).collect();
    let mut du: Vec<f64> = off_diagonal.to_vec();
    let mut du2 = vec![0.0; n.saturating_sub(2)];

    for i in 0..n - 1 {
        if d[i].abs() >= dl[i].abs() {
            let piv = guard(d[i]);
            d[i] = piv;
            let fact = dl[i] / piv;
            d[i + 1] -= fact * du[i];
            b[i + 1] -= fact * b[i];
        } else {
            let fact = d[i] / dl[i];
            let old_d_next = d[i + 1];
            d[i] = dl[i];
            du[i] = {
                let old_du = du[i];
                d[i + 1] = old_du - fact * old_d_next;
                old_d_next
            };
            if i + 1 < n - 1 {
                let old_du_next = du[i + 1];
                du2[i] = old_du_next;
                du[i + 1] = -fact * old_du_next;
            }
            let old_b = b[i];
            b[i] = b[i + 1];
            b[i + 1] = old_b - fact * b[i + 1];
        }
    }

    b[n - 1] /= guard(d[n - 1]);
    b[n - 2] = (b[n - 2] - du[n - 2] * b[n - 1]) / guard(d[n - 2]);
    for i in (0..n.saturating_sub(2)).rev() {
        b[i] = (b[i] - du[i] * b[i + 1] - du2[i] * b[i + 2]) / guard(d[i]);
    }
}

fn guard(x: f64) -> f64 {
    if x.abs() < PIVOT_GUARD {
        if x >= 0.0 {
            PIVOT_GUARD
        } else {
            -PIVOT_GUARD
        }
    } else {
        x
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn max_offdiag_gram(pairs: &[EigenPair]) -> f64 {
        let mut worst = 0.0f64;
        for (i, a) in pairs.iter().enumerate() {
            for (j, b) in pairs.iter().enumerate() {
                let dot: f64 = a.vector.iter().zip(&b.vector).map(|(x, y)| x * y).sum();
                let target = if i == j { 1.0 } else { 0.0 };
                worst = worst.max((dot - target).abs());
            }
        }
        worst
    }

    #[test]
    fn zero_operator_has_zero_spectrum() {
        let op = TridiagonalOperator::new(vec![0.0; 3], vec![0.0; 2]).unwrap();
        let pairs = eig_tridiagonal(&op, EigCount::All).unwrap();
        assert_eq!(pairs.len(), 3);
        for p in &pairs {
            assert!(p.value.abs() < 1e-14);
        }
        assert!(max_offdiag_gram(&pairs) < 1e-10);
    }

    #[test]
    fn two_by_two_analytic() {
        let op = TridiagonalOperator::new(vec![2.0, 2.0], vec![-1.0]).unwrap();
        let pairs = eig_tridiagonal(&op, EigCount::All).unwrap();
        assert!((pairs[0].value - 1.0).abs() < 1e-12);
        assert!((pairs[1].value - 3.0).abs() < 1e-12);
    }

    #[test]
    fn uniform_chain_matches_closed_form() {
        // d_i = 0, e_i = -1: eigenvalues -2 cos(k pi / (n+1)).
        let n = 50;
        let op = TridiagonalOperator::new(vec![0.0; n], vec![-1.0; n - 1]).unwrap();
        let pairs = eig_tridiagonal(&op, EigCount::All).unwrap();
        for (k, p) in pairs.iter().enumerate() {
            let exact = -2.0 * ((k + 1) as f64 * std::f64::consts::PI / (n as f64 + 1.0)).cos();
            assert!(
                (p.value - exact).abs() < 1e-12,
                "k={k}: {} vs {exact}",
                p.value
            );
        }
        assert!(max_offdiag_gram(&pairs) < 1e-10);
    }

    #[test]
    fn harmonic_ladder_oracle() {
        // H = -1/2 d2/dx2 + x^2/2 has the (n + 1/2) ladder. The 3-point
        // stencil error is O(h^2 <p^4>), so the lowest six levels sit within
        // 1e-4 on this grid.
        let grid = Grid1D::symmetric(6.0, 2001).unwrap();
        let pot = grid.sample(|x| 0.5 * x * x);
        let op = TridiagonalOperator::schrodinger(
            &grid,
            &pot,
            KineticConvention::HalfMass { mass: 1.0 },
        )
        .unwrap();
        for n in 0..6 {
            let e = op.eigenvalue_by_index(n);
            assert!(
                (e - (n as f64 + 0.5)).abs() < 1e-4,
                "level {n}: {e} vs {}",
                n as f64 + 0.5
            );
        }
        // A deliberately coarse 200-point grid still pins the ground state.
        let coarse = Grid1D::symmetric(5.0, 200).unwrap();
        let pot = coarse.sample(|x| 0.5 * x * x);
        let op = TridiagonalOperator::schrodinger(
            &coarse,
            &pot,
            KineticConvention::HalfMass { mass: 1.0 },
        )
        .unwrap();
        assert!((op.eigenvalue_by_index(0) - 0.5).abs() < 1e-4);
    }

    #[test]
    fn residuals_meet_contract() {
        let grid = Grid1D::symmetric(8.0, 400).unwrap();
        let pot = grid.sample(|x| -2.0 * (-x * x / 4.0).exp());
        let op =
            TridiagonalOperator::schrodinger(&grid, &pot, KineticConvention::Reduced).unwrap();
        let pairs = eig_tridiagonal(&op, EigCount::Lowest(20)).unwrap();
        let scale = op.norm_bound();
        for (i, p) in pairs.iter().enumerate() {
            let r = op.residual(p.value, &p.vector);
            assert!(r <= 1e-10 * scale, "index {i}: residual {r:.3e}");
            if i > 0 {
                assert!(p.value >= pairs[i - 1].value - 1e-12 * scale);
            }
        }
        assert!(max_offdiag_gram(&pairs) < 1e-10);
    }

    #[test]
    fn sturm_count_brackets_eigenvalues() {
        let op = TridiagonalOperator::new(vec![1.0, 3.0], vec![-1.0]).unwrap();
        // eigenvalues 2 -+ sqrt(2)
        assert_eq!(op.sturm_count(0.0), 0);
        assert_eq!(op.sturm_count(1.0), 1);
        assert_eq!(op.sturm_count(4.0), 2);
    }
}
