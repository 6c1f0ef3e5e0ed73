//! Small dense linear-algebra helpers shared by the modules.

use nalgebra::{DMatrix, DVector};

/// `X + X'`.
pub fn he(x: &DMatrix<f64>) -> DMatrix<f64> {
    x + x.transpose()
}

/// Symmetric part `(X + X') / 2`.
pub fn sym(x: &DMatrix<f64>) -> DMatrix<f64> {
    (x + x.transpose()) * 0.5
}

/// Eigenvalues of the symmetric part of `x`, ascending.
pub fn sym_eigenvalues(x: &DMatrix<f64>) -> Vec<f64> {
    if x.nrows() == 0 {
        return Vec::new();
    }
    let mut ev: Vec<f64> = sym(x).symmetric_eigenvalues().iter().copied().collect();
    ev.sort_by(|a, b| a.total_cmp(b));
    ev
}

/// Smallest eigenvalue of a symmetric matrix (`+inf` for an empty matrix).
pub fn s_min(x: &DMatrix<f64>) -> f64 {
    sym_eigenvalues(x).first().copied().unwrap_or(f64::INFINITY)
}

/// Largest eigenvalue of a symmetric matrix (`-inf` for an empty matrix).
pub fn s_max(x: &DMatrix<f64>) -> f64 {
    sym_eigenvalues(x)
        .last()
        .copied()
        .unwrap_or(f64::NEG_INFINITY)
}

/// Singular values in descending order.
pub fn singular_values(x: &DMatrix<f64>) -> Vec<f64> {
    if x.nrows() == 0 || x.ncols() == 0 {
        return Vec::new();
    }
    let mut sv: Vec<f64> = x
        .clone()
        .svd(false, false)
        .singular_values
        .iter()
        .copied()
        .collect();
    sv.sort_by(|a, b| b.total_cmp(a));
    sv
}

/// Numerical rank: singular values above `rel_tol * max(rows, cols) * s_max` count.
pub fn rank(x: &DMatrix<f64>, rel_tol: f64) -> usize {
    let sv = singular_values(x);
    let Some(&top) = sv.first() else { return 0 };
    if top == 0.0 {
        return 0;
    }
    let thr = rel_tol * x.nrows().max(x.ncols()) as f64 * top;
    sv.iter().filter(|&&s| s > thr).count()
}

/// Largest absolute entry.
pub fn max_abs(x: &DMatrix<f64>) -> f64 {
    x.iter().fold(0.0_f64, |m, v| m.max(v.abs()))
}

pub fn max_abs_vec(x: &DVector<f64>) -> f64 {
    x.iter().fold(0.0_f64, |m, v| m.max(v.abs()))
}

/// True when every entry is finite.
pub fn all_finite(x: &DMatrix<f64>) -> bool {
    x.iter().all(|v| v.is_finite())
}

/// Orthonormal basis of the column space of a projector, built by pivoted
/// Gram-Schmidt over its columns so that coordinate-aligned subspaces come
/// back as coordinate vectors. `dim` columns are extracted.
pub fn basis_from_projector(proj: &DMatrix<f64>, dim: usize) -> DMatrix<f64> {
    let n = proj.nrows();
    let mut out = DMatrix::<f64>::zeros(n, dim);
    let mut work: Vec<DVector<f64>> = (0..n).map(|j| proj.column(j).into_owned()).collect();
    let mut used = vec![false; n];
    for k in 0..dim {
        let norms: Vec<f64> = work.iter().map(|c| c.norm()).collect();
        let best = norms
            .iter()
            .enumerate()
            .filter(|(j, _)| !used[*j])
            .fold(None::<(usize, f64)>, |acc, (j, &v)| match acc {
                Some((_, bv)) if v <= bv * (1.0 + 1e-12) => acc,
                _ => Some((j, v)),
            })
            .map(|(j, _)| j)
            .expect("projector rank smaller than requested dimension");
        used[best] = true;
        let mut q = work[best].clone();
        // second pass of re-orthogonalisation against earlier columns
        for i in 0..k {
            let prev = out.column(i).into_owned();
            q -= &prev * prev.dot(&q);
        }
        let nq = q.norm();
        q /= nq;
        for (j, col) in work.iter_mut().enumerate() {
            if !used[j] {
                let c = q.dot(col);
                *col -= &q * c;
            }
        }
        out.set_column(k, &q);
    }
    apply_sign_convention(&mut out);
    out
}

/// Flip each column so that its largest-magnitude entry is positive; ties go
/// to the lowest row index.
pub fn apply_sign_convention(basis: &mut DMatrix<f64>) {
    for j in 0..basis.ncols() {
        let col = basis.column(j);
        let top = col.iter().fold(0.0_f64, |m, v| m.max(v.abs()));
        let pivot = col
            .iter()
            .position(|v| v.abs() >= top * (1.0 - 1e-12))
            .unwrap_or(0);
        if col[pivot] < 0.0 {
            basis.column_mut(j).neg_mut();
        }
    }
}

/// Least-squares solution of `a x = b` through the SVD.
pub fn lstsq(a: &DMatrix<f64>, b: &DVector<f64>) -> DVector<f64> {
    if a.ncols() == 0 {
        return DVector::zeros(0);
    }
    let svd = a.clone().svd(true, true);
    let top = svd.singular_values.iter().fold(0.0_f64, |m, v| m.max(*v));
    let eps = 1e-13 * top * a.nrows().max(a.ncols()) as f64;
    svd.solve(b, eps).expect("SVD computed with both factors")
}

/// Orthonormal basis of the nullspace of `a` (columns), using a relative tolerance.
pub fn nullspace(a: &DMatrix<f64>, rel_tol: f64) -> DMatrix<f64> {
    let ncols = a.ncols();
    if a.nrows() == 0 {
        return DMatrix::identity(ncols, ncols);
    }
    // pad to square so the SVD returns a full right basis
    let rows = a.nrows().max(ncols);
    let mut padded = DMatrix::<f64>::zeros(rows, ncols);
    padded.view_mut((0, 0), (a.nrows(), ncols)).copy_from(a);
    let svd = padded.svd(false, true);
    let v_t = svd.v_t.expect("requested V'");
    let top = svd.singular_values.iter().fold(0.0_f64, |m, v| m.max(*v));
    let thr = rel_tol * rows as f64 * top;
    let idx: Vec<usize> = (0..svd.singular_values.len())
        .filter(|&i| top == 0.0 || svd.singular_values[i] <= thr)
        .collect();
    let mut out = DMatrix::<f64>::zeros(ncols, idx.len());
    for (k, &i) in idx.iter().enumerate() {
        out.set_column(k, &v_t.row(i).transpose());
    }
    out
}

/// Stack matrices vertically.
pub fn vstack(blocks: &[&DMatrix<f64>]) -> DMatrix<f64> {
    let cols = blocks.first().map(|b| b.ncols()).unwrap_or(0);
    let rows: usize = blocks.iter().map(|b| b.nrows()).sum();
    let mut out = DMatrix::zeros(rows, cols);
    let mut r = 0;
    for b in blocks {
        out.view_mut((r, 0), (b.nrows(), cols)).copy_from(*b);
        r += b.nrows();
    }
    out
}

/// Stack matrices horizontally.
pub fn hstack(blocks: &[&DMatrix<f64>]) -> DMatrix<f64> {
    let rows = blocks.first().map(|b| b.nrows()).unwrap_or(0);
    let cols: usize = blocks.iter().map(|b| b.ncols()).sum();
    let mut out = DMatrix::zeros(rows, cols);
    let mut c = 0;
    for b in blocks {
        out.view_mut((0, c), (rows, b.ncols())).copy_from(*b);
        c += b.ncols();
    }
    out
}

/// Dense matrix from nested rows.
pub fn from_rows(rows: &[Vec<f64>]) -> DMatrix<f64> {
    let nr = rows.len();
    let nc = rows.first().map(|r| r.len()).unwrap_or(0);
    DMatrix::from_fn(nr, nc, |i, j| rows[i][j])
}

pub fn to_rows(m: &DMatrix<f64>) -> Vec<Vec<f64>> {
    (0..m.nrows())
        .map(|i| m.row(i).iter().copied().collect())
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn rank_of_known_matrices() {
        let a = from_rows(&[vec![1., 2., 1.], vec![0., 1., 0.], vec![2., 5., 2.]]);
        assert_eq!(rank(&a, 1e-9), 2);
        assert_eq!(rank(&DMatrix::zeros(3, 3), 1e-9), 0);
    }

    #[test]
    fn projector_basis_is_coordinate_aligned() {
        let mut p = DMatrix::<f64>::zeros(4, 4);
        p[(0, 0)] = 1.0;
        p[(2, 2)] = 1.0;
        let b = basis_from_projector(&p, 2);
        assert_eq!(
            b.column(0).iter().copied().collect::<Vec<_>>(),
            vec![1., 0., 0., 0.]
        );
        assert_eq!(
            b.column(1).iter().copied().collect::<Vec<_>>(),
            vec![0., 0., 1., 0.]
        );
    }

    #[test]
    fn sign_convention_prefers_lowest_row_on_ties() {
        let mut b = DMatrix::from_column_slice(2, 1, &[-0.5_f64.sqrt(), 0.5_f64.sqrt()]);
        apply_sign_convention(&mut b);
        assert!(b[(0, 0)] > 0.0);
    }

    #[test]
    fn nullspace_of_rank_deficient() {
        let a = from_rows(&[vec![1., 1., 0.], vec![2., 2., 0.]]);
        let z = nullspace(&a, 1e-12);
        assert_eq!(z.ncols(), 2);
        assert!(max_abs(&(&a * &z)) < 1e-12);
    }
}
