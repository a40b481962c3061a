//! Small dense linear-algebra helpers on top of `nalgebra`.

use nalgebra::{Cholesky, DMatrix, DVector, SymmetricEigen};

use crate::error::{Error, Result};

/// Smallest eigenvalue a matrix must exceed to count as positive definite.
pub const PD_THRESHOLD: f64 = 1e-12;

pub fn symmetrize(m: &mut DMatrix<f64>) {
    let n = m.nrows();
    for i in 0..n {
        for j in (i + 1)..n {
            let avg = 0.5 * (m[(i, j)] + m[(j, i)]);
            m[(i, j)] = avg;
            m[(j, i)] = avg;
        }
    }
}

pub fn symmetrized(mut m: DMatrix<f64>) -> DMatrix<f64> {
    symmetrize(&mut m);
    m
}

/// Largest singular value.
pub fn spectral_norm(m: &DMatrix<f64>) -> f64 {
    if m.is_empty() {
        return 0.0;
    }
    m.singular_values().max()
}

/// Eigenvalues of the symmetric part, ascending.
pub fn sym_eigenvalues(m: &DMatrix<f64>) -> Vec<f64> {
    if m.is_empty() {
        return Vec::new();
    }
    let mut ev: Vec<f64> = SymmetricEigen::new(symmetrized(m.clone()))
        .eigenvalues
        .iter()
        .copied()
        .collect();
    ev.sort_by(f64::total_cmp);
    ev
}

pub fn min_eigenvalue(m: &DMatrix<f64>) -> f64 {
    sym_eigenvalues(m).first().copied().unwrap_or(f64::INFINITY)
}

pub fn max_eigenvalue(m: &DMatrix<f64>) -> f64 {
    sym_eigenvalues(m).last().copied().unwrap_or(f64::NEG_INFINITY)
}

/// Moduli of all (possibly complex) eigenvalues, descending.
pub fn eigenvalue_moduli(m: &DMatrix<f64>) -> Vec<f64> {
    if m.is_empty() {
        return Vec::new();
    }
    let mut moduli: Vec<f64> = if is_symmetric(m, 0.0) {
        SymmetricEigen::new(m.clone())
            .eigenvalues
            .iter()
            .map(|v| v.abs())
            .collect()
    } else {
        m.complex_eigenvalues().iter().map(|c| c.norm()).collect()
    };
    moduli.sort_by(|a, b| b.total_cmp(a));
    moduli
}

pub fn spectral_radius(m: &DMatrix<f64>) -> f64 {
    eigenvalue_moduli(m).first().copied().unwrap_or(0.0)
}

pub fn is_symmetric(m: &DMatrix<f64>, tol: f64) -> bool {
    m.is_square() && (m - m.transpose()).amax() <= tol
}

/// Fails unless `m` is symmetric with smallest eigenvalue above [`PD_THRESHOLD`].
pub fn check_positive_definite(m: &DMatrix<f64>, what: &str) -> Result<()> {
    if !m.is_square() {
        return Err(Error::Dimension(format!("{what} must be square")));
    }
    let scale = m.amax().max(1.0);
    if !is_symmetric(m, 1e-12 * scale) {
        return Err(Error::InvalidInput(format!("{what} is not symmetric")));
    }
    let min = min_eigenvalue(m);
    if !(min > PD_THRESHOLD) {
        return Err(Error::NotPositiveDefinite {
            what: what.to_string(),
            min_eigenvalue: min,
        });
    }
    Ok(())
}

pub fn cholesky(m: &DMatrix<f64>, what: &str) -> Result<Cholesky<f64, nalgebra::Dyn>> {
    Cholesky::new(symmetrized(m.clone())).ok_or_else(|| Error::Singular(format!("{what} is not positive definite")))
}

/// Inverse of a symmetric positive-definite matrix via its Cholesky factor.
pub fn spd_inverse(m: &DMatrix<f64>, what: &str) -> Result<DMatrix<f64>> {
    if m.is_empty() {
        return Ok(m.clone());
    }
    Ok(symmetrized(cholesky(m, what)?.inverse()))
}

/// Numerical rank: singular values above `rel_tol * sigma_max`.
pub fn rank(m: &DMatrix<f64>, rel_tol: f64) -> usize {
    if m.is_empty() {
        return 0;
    }
    let sv = m.singular_values();
    let max = sv.max();
    if max == 0.0 {
        return 0;
    }
    sv.iter().filter(|&&s| s > rel_tol * max).count()
}

pub fn block_diagonal(blocks: &[DMatrix<f64>]) -> DMatrix<f64> {
    let rows: usize = blocks.iter().map(|b| b.nrows()).sum();
    let cols: usize = blocks.iter().map(|b| b.ncols()).sum();
    let mut out = DMatrix::zeros(rows, cols);
    let (mut r, mut c) = (0, 0);
    for b in blocks {
        out.view_mut((r, c), (b.nrows(), b.ncols())).copy_from(b);
        r += b.nrows();
        c += b.ncols();
    }
    out
}

/// Stacks matrices with `cols` columns vertically.
pub fn vstack(blocks: &[DMatrix<f64>], cols: usize) -> DMatrix<f64> {
    let rows: usize = blocks.iter().map(|b| b.nrows()).sum();
    let mut out = DMatrix::zeros(rows, cols);
    let mut r = 0;
    for b in blocks {
        out.view_mut((r, 0), (b.nrows(), cols)).copy_from(b);
        r += b.nrows();
    }
    out
}

pub fn vstack_vectors(parts: &[DVector<f64>]) -> DVector<f64> {
    DVector::from_iterator(
        parts.iter().map(|p| p.len()).sum(),
        parts.iter().flat_map(|p| p.iter().copied()),
    )
}

/// Builds a matrix from row-major nested rows; all rows must share one length.
pub fn from_rows(rows: &[Vec<f64>]) -> Result<DMatrix<f64>> {
    let nrows = rows.len();
    let ncols = rows.first().map_or(0, Vec::len);
    if rows.iter().any(|r| r.len() != ncols) {
        return Err(Error::Dimension("ragged matrix rows".into()));
    }
    Ok(DMatrix::from_row_iterator(
        nrows,
        ncols,
        rows.iter().flat_map(|r| r.iter().copied()),
    ))
}

pub fn to_rows(m: &DMatrix<f64>) -> Vec<Vec<f64>> {
    m.row_iter().map(|r| r.iter().copied().collect()).collect()
}

pub fn binomial(n: u64, k: u64) -> f64 {
    if k > n {
        return 0.0;
    }
    let k = k.min(n - k);
    (0..k).fold(1.0, |acc, j| acc * (n - j) as f64 / (j + 1) as f64)
}

#[cfg(test)]
mod tests {
    use super::*;
    use nalgebra::dmatrix;

    #[test]
    fn spectral_norm_of_diagonal() {
        let m = dmatrix![3.0, 0.0; 0.0, -4.0];
        assert!((spectral_norm(&m) - 4.0).abs() < 1e-14);
    }

    #[test]
    fn spectral_radius_of_rotation() {
        let m = dmatrix![0.0, -0.5; 0.5, 0.0];
        assert!((spectral_radius(&m) - 0.5).abs() < 1e-14);
    }

    #[test]
    fn positive_definite_checks() {
        assert!(check_positive_definite(&dmatrix![2.0, 1.0; 1.0, 2.0], "m").is_ok());
        let err = check_positive_definite(&dmatrix![1.0, 1.0; 1.0, 1.0], "m").unwrap_err();
        assert!(matches!(err, Error::NotPositiveDefinite { .. }));
        assert!(check_positive_definite(&dmatrix![1.0, 2.0; 0.0, 1.0], "m").is_err());
    }

    #[test]
    fn rank_of_outer_product() {
        let v = DVector::from_vec(vec![1.0, 2.0, 3.0]);
        assert_eq!(rank(&(&v * v.transpose()), 1e-9), 1);
        assert_eq!(rank(&DMatrix::<f64>::zeros(2, 2), 1e-9), 0);
    }

    #[test]
    fn block_diagonal_layout() {
        let b = block_diagonal(&[dmatrix![1.0], dmatrix![2.0, 3.0; 4.0, 5.0]]);
        assert_eq!(b, dmatrix![1.0, 0.0, 0.0; 0.0, 2.0, 3.0; 0.0, 4.0, 5.0]);
    }

    #[test]
    fn binomials() {
        assert_eq!(binomial(5, 2), 10.0);
        assert_eq!(binomial(3, 5), 0.0);
        assert_eq!(binomial(0, 0), 1.0);
    }
}
