//! Fisher information assembly, nuisance elimination and error bounds.

use std::fmt;
use std::ops::Range;

use nalgebra::{DMatrix, SymmetricEigen};
use serde::{Serialize, Serializer};

use crate::derivs::{BlockLayout, JacobianStack, ParamBlock};
use crate::error::{Error, Result};
use crate::twofold::DdMatrix;

/// Default relative eigenvalue cutoff for rank and positive-definiteness.
pub const DEFAULT_REL_THRESHOLD: f64 = 1e-9;

/// Below this fraction of its largest eigenvalue a nuisance block is treated
/// as singular and pseudo-inverted.
const NUISANCE_SINGULAR_TOL: f64 = 1e-12;

/// An EFIM whose largest eigenvalue is at most this fraction of the
/// information the interest block held before elimination is numerically
/// zero: everything left is cancellation residue.
pub const NUMERICAL_ZERO_TOL: f64 = 1e-12;

/// Fisher information of a parameter vector laid out by `layout`.
#[derive(Debug, Clone, PartialEq)]
pub struct Fim {
    pub matrix: DMatrix<f64>,
    pub layout: BlockLayout,
}

/// Information left for the parameters of interest after removing nuisances.
#[derive(Debug, Clone, PartialEq)]
pub struct Efim {
    pub matrix: DMatrix<f64>,
    pub layout: BlockLayout,
    pub nuisance_dims: usize,
    /// Set when the nuisance block had to be pseudo-inverted.
    pub nuisance_singular: bool,
    /// Largest eigenvalue of the interest block of the FIM before
    /// elimination; the scale of the roundoff left in `matrix`.
    pub interest_scale: f64,
}

/// Eigenvalue diagnostics of an information matrix.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct IdentReport {
    /// Ascending.
    pub eigenvalues: Vec<f64>,
    pub rank: usize,
    pub positive_definite: bool,
    pub rel_threshold: f64,
}

/// An error bound, or the marker for a parameter that cannot be estimated.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Bound {
    Finite(f64),
    Unbounded,
}

impl Bound {
    pub fn is_finite(self) -> bool {
        matches!(self, Bound::Finite(_))
    }

    /// The bound as a float, `+inf` when unbounded.
    pub fn value(self) -> f64 {
        match self {
            Bound::Finite(v) => v,
            Bound::Unbounded => f64::INFINITY,
        }
    }
}

impl fmt::Display for Bound {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Bound::Finite(v) => write!(f, "{v:e}"),
            Bound::Unbounded => f.write_str("inf"),
        }
    }
}

impl Serialize for Bound {
    fn serialize<S: Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        match self {
            Bound::Finite(v) => s.serialize_f64(*v),
            Bound::Unbounded => s.serialize_str("inf"),
        }
    }
}

fn check_stack(stack: &JacobianStack, snr_linear: f64) -> Result<()> {
    if !(snr_linear > 0.0 && snr_linear.is_finite()) {
        return Err(Error::invalid(format!("SNR {snr_linear} must be > 0")));
    }
    let first = stack
        .matrices
        .first()
        .ok_or_else(|| Error::invalid("empty Jacobian stack"))?;
    let k = stack.layout.total_dim();
    let rows = first.nrows();
    for (t, d) in stack.matrices.iter().enumerate() {
        if d.shape() != (rows, k) {
            return Err(Error::invalid(format!(
                "Jacobian {t} has shape {:?}, expected ({rows}, {k})",
                d.shape()
            )));
        }
    }
    Ok(())
}

/// `2·snr·Σ_t Re(D_tᴴ D_t)`.
pub fn assemble_fim(stack: &JacobianStack, snr_linear: f64) -> Result<Fim> {
    check_stack(stack, snr_linear)?;
    let k = stack.layout.total_dim();
    let mut m = DMatrix::zeros(k, k);
    for d in &stack.matrices {
        m += (d.adjoint() * d).map(|z| z.re);
    }
    m *= 2.0 * snr_linear;
    symmetrize(&mut m);
    Ok(Fim {
        matrix: m,
        layout: stack.layout.clone(),
    })
}

/// Eigenvalues of the FIM, ascending, as squared singular values of its
/// real factor `√(2·snr)·[Re D_1; Im D_1; …]`.
///
/// Small eigenvalues come out with absolute error near `eps²·λ_max` instead
/// of the `eps·λ_max` of an eigensolver run on the assembled matrix.
pub fn information_spectrum(stack: &JacobianStack, snr_linear: f64) -> Result<Vec<f64>> {
    check_stack(stack, snr_linear)?;
    let k = stack.layout.total_dim();
    let rows = stack.matrices[0].nrows();
    let scale = (2.0 * snr_linear).sqrt();
    let mut factor = DMatrix::zeros(2 * rows * stack.matrices.len(), k);
    for (t, d) in stack.matrices.iter().enumerate() {
        let base = 2 * rows * t;
        for i in 0..rows {
            for j in 0..k {
                factor[(base + i, j)] = scale * d[(i, j)].re;
                factor[(base + rows + i, j)] = scale * d[(i, j)].im;
            }
        }
    }
    let mut values: Vec<f64> = factor
        .svd(false, false)
        .singular_values
        .iter()
        .map(|s| s * s)
        .collect();
    // A short factor has fewer singular values than unknowns.
    values.resize(k, 0.0);
    values.sort_by(f64::total_cmp);
    Ok(values)
}

/// Mirror the upper triangle so the result is exactly symmetric.
fn symmetrize(m: &mut DMatrix<f64>) {
    let n = m.nrows();
    for i in 0..n {
        for j in (i + 1)..n {
            let v = 0.5 * (m[(i, j)] + m[(j, i)]);
            m[(i, j)] = v;
            m[(j, i)] = v;
        }
    }
}

fn submatrix(m: &DMatrix<f64>, rows: &[usize], cols: &[usize]) -> DMatrix<f64> {
    DMatrix::from_fn(rows.len(), cols.len(), |i, j| m[(rows[i], cols[j])])
}

/// Eigenvalues in ascending order with matching eigenvector columns.
fn sorted_eigen(m: &DMatrix<f64>) -> (Vec<f64>, DMatrix<f64>) {
    let eig = SymmetricEigen::new(m.clone());
    let mut order: Vec<usize> = (0..m.nrows()).collect();
    order.sort_by(|&a, &b| eig.eigenvalues[a].total_cmp(&eig.eigenvalues[b]));
    let values = order.iter().map(|&i| eig.eigenvalues[i]).collect();
    let vectors = DMatrix::from_fn(m.nrows(), m.nrows(), |r, c| eig.eigenvectors[(r, order[c])]);
    (values, vectors)
}

/// Pseudo-inverse of a symmetric PSD matrix, dropping eigenvalues at or
/// below `rel_tol·λ_max`.
pub fn psd_pseudo_inverse(m: &DMatrix<f64>, rel_tol: f64) -> DMatrix<f64> {
    let (values, vectors) = sorted_eigen(m);
    let lmax = values.last().copied().unwrap_or(0.0);
    let mut out = DMatrix::zeros(m.nrows(), m.ncols());
    if lmax <= 0.0 {
        return out;
    }
    for (i, &l) in values.iter().enumerate() {
        if l > rel_tol * lmax {
            let v = vectors.column(i);
            out += (v * v.transpose()) / l;
        }
    }
    out
}

/// Inverse of a symmetric positive-definite matrix, computed in
/// double-double precision and rounded once. Returns `None` if the Cholesky
/// factorization breaks down.
pub fn spd_inverse(m: &DMatrix<f64>) -> Option<DMatrix<f64>> {
    if m.iter().any(|v| !v.is_finite()) {
        return None;
    }
    DdMatrix::from_f64(m).spd_inverse().map(|inv| inv.to_f64())
}

/// Schur complement of `m` onto the index set `keep`, eliminating `drop`.
///
/// Returns the complement and whether the eliminated block was singular
/// (in which case its pseudo-inverse was used).
pub fn schur_complement(m: &DMatrix<f64>, keep: &[usize], drop: &[usize]) -> (DMatrix<f64>, bool) {
    if drop.is_empty() {
        return (submatrix(m, keep, keep), false);
    }
    let full = DdMatrix::from_f64(m);
    let a = full.submatrix(keep, keep);
    let b = full.submatrix(keep, drop);
    let c = submatrix(m, drop, drop);
    let (values, _) = sorted_eigen(&c);
    let lmax = values.last().copied().unwrap_or(0.0);
    let lmin = values.first().copied().unwrap_or(0.0);
    let well_posed = lmax > 0.0 && lmin > NUISANCE_SINGULAR_TOL * lmax;
    let inverse = if well_posed {
        full.submatrix(drop, drop).spd_inverse()
    } else {
        None
    };
    let (c_inv, singular) = match inverse {
        Some(inv) => (inv, false),
        None => (
            DdMatrix::from_f64(&psd_pseudo_inverse(&c, NUISANCE_SINGULAR_TOL)),
            true,
        ),
    };
    (a.minus_congruence(&b, &c_inv).to_f64(), singular)
}

fn indices(layout: &BlockLayout, blocks: &[ParamBlock]) -> Result<Vec<usize>> {
    let mut out = Vec::new();
    for b in blocks {
        let r = layout.range(*b).ok_or_else(|| {
            Error::invalid(format!("block {b:?} is not in the information matrix"))
        })?;
        out.extend(r);
    }
    Ok(out)
}

/// Equivalent information of `interest`, treating every other block of the
/// FIM as a nuisance.
pub fn efim(fim: &Fim, interest: &[ParamBlock]) -> Result<Efim> {
    let layout = BlockLayout::new(interest)?;
    let keep = indices(&fim.layout, interest)?;
    let nuisance: Vec<ParamBlock> = fim
        .layout
        .blocks()
        .into_iter()
        .filter(|b| !interest.contains(b))
        .collect();
    let drop = indices(&fim.layout, &nuisance)?;
    let (matrix, nuisance_singular) = schur_complement(&fim.matrix, &keep, &drop);
    let interest_scale = sorted_eigen(&submatrix(&fim.matrix, &keep, &keep))
        .0
        .last()
        .copied()
        .unwrap_or(0.0)
        .max(0.0);
    Ok(Efim {
        matrix,
        layout,
        nuisance_dims: drop.len(),
        nuisance_singular,
        interest_scale,
    })
}

fn count_above(eigenvalues: &[f64], cutoff: f64) -> usize {
    eigenvalues.iter().filter(|&&l| l > cutoff).count()
}

/// Eigen diagnostics of any symmetric information matrix: rank counts the
/// eigenvalues above `rel_threshold·λ_max`.
pub fn spectral_report(m: &DMatrix<f64>, rel_threshold: f64) -> IdentReport {
    let (eigenvalues, _) = sorted_eigen(m);
    let lmax = eigenvalues.last().copied().unwrap_or(0.0);
    let rank = if lmax > 0.0 {
        count_above(&eigenvalues, rel_threshold * lmax)
    } else {
        0
    };
    IdentReport {
        positive_definite: rank == m.nrows() && rank > 0,
        eigenvalues,
        rank,
        rel_threshold,
    }
}

impl Efim {
    pub fn dim(&self) -> usize {
        self.matrix.nrows()
    }

    /// Largest eigenvalue, or zero when the whole matrix is cancellation
    /// residue (see [`NUMERICAL_ZERO_TOL`]).
    pub fn effective_max_eigenvalue(&self) -> f64 {
        let lmax = self.matrix.symmetric_eigenvalues().max();
        if lmax <= NUMERICAL_ZERO_TOL * self.interest_scale {
            0.0
        } else {
            lmax.max(0.0)
        }
    }
}

/// Rank and positive-definiteness of an EFIM.
///
/// Same rule as [`spectral_report`], except that an EFIM which is
/// numerically zero relative to the pre-elimination information has rank 0.
pub fn identifiability(efim: &Efim, rel_threshold: f64) -> IdentReport {
    let mut report = spectral_report(&efim.matrix, rel_threshold);
    if efim.effective_max_eigenvalue() == 0.0 {
        report.rank = 0;
        report.positive_definite = false;
    }
    report
}

/// Information about the blocks at `range` after also marginalizing every
/// other EFIM block. Equals the inverse of the `range` sub-block of
/// `EFIM⁻¹` whenever the EFIM is invertible.
pub fn marginal_information(efim: &Efim, range: Range<usize>) -> Result<(DMatrix<f64>, bool)> {
    let n = efim.matrix.nrows();
    if range.is_empty() || range.end > n {
        return Err(Error::invalid(format!(
            "range {range:?} outside a {n}x{n} EFIM"
        )));
    }
    let keep: Vec<usize> = range.clone().collect();
    let drop: Vec<usize> = (0..n).filter(|i| !range.contains(i)).collect();
    Ok(schur_complement(&efim.matrix, &keep, &drop))
}

/// Number of independent directions of the `range` parameters that stay
/// estimable when every other EFIM parameter is also unknown.
///
/// Eigenvalues of the marginal information are compared against the parent
/// EFIM's largest eigenvalue, since that sets the roundoff scale.
pub fn block_rank(efim: &Efim, range: Range<usize>, rel_threshold: f64) -> Result<usize> {
    let (info, _) = marginal_information(efim, range)?;
    let reference = efim.effective_max_eigenvalue();
    if reference == 0.0 {
        return Ok(0);
    }
    let (eigenvalues, _) = sorted_eigen(&info);
    Ok(count_above(&eigenvalues, rel_threshold * reference))
}

/// `sqrt(trace([EFIM⁻¹]_range))`, or [`Bound::Unbounded`] when those
/// parameters are not jointly identifiable.
pub fn block_bound(efim: &Efim, range: Range<usize>, rel_threshold: f64) -> Result<Bound> {
    let dim = range.len();
    if block_rank(efim, range.clone(), rel_threshold)? < dim {
        return Ok(Bound::Unbounded);
    }
    let (info, _) = marginal_information(efim, range)?;
    match spd_inverse(&info) {
        Some(inv) => Ok(Bound::Finite(inv.trace().sqrt())),
        None => Ok(Bound::Unbounded),
    }
}

/// Position error bound, meters.
pub fn peb(efim: &Efim, position_block: Range<usize>) -> Result<Bound> {
    block_bound(efim, position_block, DEFAULT_REL_THRESHOLD)
}

/// Orientation error bound, radians.
pub fn oeb(efim: &Efim, orientation_block: Range<usize>) -> Result<Bound> {
    block_bound(efim, orientation_block, DEFAULT_REL_THRESHOLD)
}
