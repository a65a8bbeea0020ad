//! Thin wrappers over nalgebra's dense decompositions with the ordering and
//! symmetry conventions the rest of the crate relies on.

use nalgebra::{DMatrix, DVector, SymmetricEigen};

use crate::error::{Error, Result};

/// Relative asymmetry tolerated before a matrix is rejected as non-symmetric.
pub const SYMMETRY_TOL: f64 = 1e-12;

/// Eigenpairs of a symmetric matrix, eigenvalues in nonincreasing order.
#[derive(Debug, Clone)]
pub struct SymEigen {
    pub values: Vec<f64>,
    /// Column `j` is the eigenvector for `values[j]`.
    pub vectors: DMatrix<f64>,
}

pub fn max_abs(m: &DMatrix<f64>) -> f64 {
    m.iter().fold(0.0_f64, |acc, v| acc.max(v.abs()))
}

pub fn check_square(m: &DMatrix<f64>, what: &str) -> Result<()> {
    if m.nrows() != m.ncols() {
        return Err(Error::Dimension(format!(
            "{what} must be square, got {}x{}",
            m.nrows(),
            m.ncols()
        )));
    }
    Ok(())
}

pub fn check_finite(m: &DMatrix<f64>, what: &str) -> Result<()> {
    if m.iter().any(|v| !v.is_finite()) {
        return Err(Error::Numerical(format!("{what} has non-finite entries")));
    }
    Ok(())
}

/// Returns `(A + Aᵀ)/2` after checking the asymmetry is within [`SYMMETRY_TOL`].
pub fn symmetrized(m: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    check_square(m, "symmetric matrix")?;
    let scale = max_abs(m).max(f64::MIN_POSITIVE);
    let t = m.transpose();
    let asym = max_abs(&(m - &t));
    if asym > SYMMETRY_TOL * scale {
        return Err(Error::Validation(format!(
            "matrix is not symmetric (max |A - Aᵀ| = {asym:e})"
        )));
    }
    Ok((m + t) * 0.5)
}

pub fn sym_eigen(m: &DMatrix<f64>) -> Result<SymEigen> {
    let sym = symmetrized(m)?;
    check_finite(&sym, "symmetric matrix")?;
    let n = sym.nrows();
    let eig = SymmetricEigen::try_new(sym, f64::EPSILON, 0)
        .ok_or_else(|| Error::Numerical("symmetric eigensolver did not converge".into()))?;
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| eig.eigenvalues[b].total_cmp(&eig.eigenvalues[a]));
    let values = order.iter().map(|&i| eig.eigenvalues[i]).collect();
    let vectors = DMatrix::from_fn(n, n, |r, c| eig.eigenvectors[(r, order[c])]);
    Ok(SymEigen { values, vectors })
}

/// Thin SVD `W = U diag(σ) Vᵀ` with σ nonincreasing.
#[derive(Debug, Clone)]
pub struct Svd {
    pub u: DMatrix<f64>,
    pub singular_values: Vec<f64>,
    pub v_t: DMatrix<f64>,
}

pub fn svd(m: &DMatrix<f64>) -> Result<Svd> {
    check_finite(m, "matrix")?;
    let k = m.nrows().min(m.ncols());
    if k == 0 {
        return Ok(Svd {
            u: DMatrix::zeros(m.nrows(), 0),
            singular_values: Vec::new(),
            v_t: DMatrix::zeros(0, m.ncols()),
        });
    }
    let dec = m
        .clone()
        .try_svd(true, true, f64::EPSILON, 0)
        .ok_or_else(|| Error::Numerical("SVD did not converge".into()))?;
    let u = dec.u.expect("requested U");
    let v_t = dec.v_t.expect("requested Vᵀ");
    let mut order: Vec<usize> = (0..k).collect();
    order.sort_by(|&a, &b| dec.singular_values[b].total_cmp(&dec.singular_values[a]));
    Ok(Svd {
        u: DMatrix::from_fn(u.nrows(), k, |r, c| u[(r, order[c])]),
        singular_values: order.iter().map(|&i| dec.singular_values[i]).collect(),
        v_t: DMatrix::from_fn(k, v_t.ncols(), |r, c| v_t[(order[r], c)]),
    })
}

pub fn singular_values(m: &DMatrix<f64>) -> Result<Vec<f64>> {
    check_finite(m, "matrix")?;
    if m.nrows().min(m.ncols()) == 0 {
        return Ok(Vec::new());
    }
    let sv = m
        .clone()
        .try_svd(false, false, f64::EPSILON, 0)
        .ok_or_else(|| Error::Numerical("SVD did not converge".into()))?
        .singular_values;
    let mut v: Vec<f64> = sv.iter().copied().collect();
    v.sort_by(|a, b| b.total_cmp(a));
    Ok(v)
}

pub fn op_norm(m: &DMatrix<f64>) -> Result<f64> {
    Ok(singular_values(m)?.first().copied().unwrap_or(0.0))
}

pub fn fro_norm(m: &DMatrix<f64>) -> f64 {
    m.iter().map(|v| v * v).sum::<f64>().sqrt()
}

/// Solves `A x = b` for symmetric positive definite `A`, falling back to LU.
pub fn solve_spd(a: &DMatrix<f64>, b: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    if let Some(ch) = a.clone().cholesky() {
        return Ok(ch.solve(b));
    }
    a.clone()
        .lu()
        .solve(b)
        .ok_or_else(|| Error::Numerical("singular linear system".into()))
}

pub fn relu_in_place(m: &mut DMatrix<f64>) {
    m.iter_mut().for_each(|v| *v = v.max(0.0));
}

pub fn row_norm(m: &DMatrix<f64>, i: usize) -> f64 {
    m.row(i).iter().map(|v| v * v).sum::<f64>().sqrt()
}

/// Gram matrix `XᵀX / n` of the rows of `x`.
pub fn second_moment(x: &DMatrix<f64>) -> DMatrix<f64> {
    let n = x.nrows() as f64;
    let g = x.transpose() * x / n;
    // exact symmetry regardless of the product kernel's summation order
    (&g + g.transpose()) * 0.5
}

pub fn to_dvector(v: &[f64]) -> DVector<f64> {
    DVector::from_column_slice(v)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn eigen_sorted_descending() {
        let m = DMatrix::from_diagonal(&DVector::from_vec(vec![1.0, 3.0, 2.0]));
        let e = sym_eigen(&m).unwrap();
        assert_eq!(e.values, vec![3.0, 2.0, 1.0]);
        assert!((e.vectors[(1, 0)].abs() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn rejects_asymmetric() {
        let m = DMatrix::from_row_slice(2, 2, &[1.0, 2.0, 0.0, 1.0]);
        assert!(matches!(sym_eigen(&m), Err(Error::Validation(_))));
    }

    #[test]
    fn svd_reconstructs() {
        let m = DMatrix::from_row_slice(2, 3, &[1.0, 2.0, 3.0, -1.0, 0.5, 4.0]);
        let s = svd(&m).unwrap();
        let rec = &s.u * DMatrix::from_diagonal(&DVector::from_vec(s.singular_values.clone())) * &s.v_t;
        assert!(max_abs(&(rec - &m)) < 1e-12);
        assert!(s.singular_values[0] >= s.singular_values[1]);
    }
}
