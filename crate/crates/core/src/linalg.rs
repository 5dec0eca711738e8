//! Sparse storage and a banded LU factorization with partial pivoting.
//!
//! The KKT matrices produced by the coupling problem are sparse and, once
//! unknowns are ordered by their spatial position, banded. Partial pivoting
//! handles the zero diagonal blocks of the saddle-point structure.

use crate::error::{AtcError, Result};

/// Compressed sparse row matrix.
#[derive(Clone, Debug, PartialEq)]
pub struct CsrMatrix {
    n_rows: usize,
    n_cols: usize,
    row_ptr: Vec<usize>,
    cols: Vec<usize>,
    vals: Vec<f64>,
}

impl CsrMatrix {
    /// Builds from `(row, col, value)` entries; duplicates are summed and
    /// explicit zeros dropped.
    pub fn from_triplets(n_rows: usize, n_cols: usize, mut entries: Vec<(usize, usize, f64)>) -> Self {
        entries.sort_unstable_by_key(|e| (e.0, e.1));
        let mut row_ptr = vec![0; n_rows + 1];
        let mut cols = Vec::with_capacity(entries.len());
        let mut vals: Vec<f64> = Vec::with_capacity(entries.len());
        let mut rows = Vec::with_capacity(entries.len());
        for (i, j, v) in entries {
            assert!(i < n_rows && j < n_cols, "entry ({i}, {j}) out of bounds");
            if rows.last() == Some(&i) && cols.last() == Some(&j) {
                *vals.last_mut().unwrap() += v;
            } else {
                rows.push(i);
                cols.push(j);
                vals.push(v);
            }
        }
        let mut keep_cols = Vec::with_capacity(cols.len());
        let mut keep_vals = Vec::with_capacity(vals.len());
        for ((i, j), v) in rows.into_iter().zip(cols).zip(vals) {
            if v != 0.0 {
                row_ptr[i + 1] += 1;
                keep_cols.push(j);
                keep_vals.push(v);
            }
        }
        for i in 0..n_rows {
            row_ptr[i + 1] += row_ptr[i];
        }
        Self {
            n_rows,
            n_cols,
            row_ptr,
            cols: keep_cols,
            vals: keep_vals,
        }
    }

    pub fn n_rows(&self) -> usize {
        self.n_rows
    }

    pub fn n_cols(&self) -> usize {
        self.n_cols
    }

    pub fn nnz(&self) -> usize {
        self.vals.len()
    }

    pub fn row(&self, i: usize) -> impl Iterator<Item = (usize, f64)> + '_ {
        let r = self.row_ptr[i]..self.row_ptr[i + 1];
        self.cols[r.clone()].iter().copied().zip(self.vals[r].iter().copied())
    }

    pub fn iter(&self) -> impl Iterator<Item = (usize, usize, f64)> + '_ {
        (0..self.n_rows).flat_map(move |i| self.row(i).map(move |(j, v)| (i, j, v)))
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        let r = self.row_ptr[i]..self.row_ptr[i + 1];
        match self.cols[r.clone()].binary_search(&j) {
            Ok(k) => self.vals[r.start + k],
            Err(_) => 0.0,
        }
    }

    pub fn matvec(&self, x: &[f64]) -> Vec<f64> {
        assert_eq!(x.len(), self.n_cols);
        (0..self.n_rows)
            .map(|i| self.row(i).map(|(j, v)| v * x[j]).sum())
            .collect()
    }

    pub fn max_abs(&self) -> f64 {
        self.vals.iter().fold(0.0, |m, v| m.max(v.abs()))
    }

    /// Largest `|a_ij − a_ji|`.
    pub fn asymmetry(&self) -> f64 {
        self.iter()
            .map(|(i, j, v)| (v - self.get(j, i)).abs())
            .fold(0.0, f64::max)
    }

    pub fn to_dense(&self) -> Vec<Vec<f64>> {
        let mut d = vec![vec![0.0; self.n_cols]; self.n_rows];
        for (i, j, v) in self.iter() {
            d[i][j] = v;
        }
        d
    }
}

pub fn max_norm(v: &[f64]) -> f64 {
    v.iter().fold(0.0, |m, x| m.max(x.abs()))
}

pub fn norm2(v: &[f64]) -> f64 {
    v.iter().map(|x| x * x).sum::<f64>().sqrt()
}

/// LU factors `PA = LU` of a symmetrically permuted band matrix.
#[derive(Clone, Debug)]
pub struct BandedLu {
    n: usize,
    kl: usize,
    ku: usize,
    width: usize,
    data: Vec<f64>,
    pivots: Vec<usize>,
    /// `perm[new] = old`.
    perm: Vec<usize>,
    pivot_ratio: f64,
}

impl BandedLu {
    /// Factorizes `A[perm, perm]`; `perm[new] = old` (identity if `None`).
    pub fn factor(matrix: &CsrMatrix, perm: Option<&[usize]>) -> Result<Self> {
        let n = matrix.n_rows();
        if matrix.n_cols() != n {
            return Err(AtcError::Usage("banded LU needs a square matrix".into()));
        }
        let perm: Vec<usize> = match perm {
            Some(p) => {
                if p.len() != n {
                    return Err(AtcError::Usage("permutation has the wrong length".into()));
                }
                p.to_vec()
            }
            None => (0..n).collect(),
        };
        let mut inverse = vec![usize::MAX; n];
        for (new, &old) in perm.iter().enumerate() {
            inverse[old] = new;
        }
        if inverse.contains(&usize::MAX) {
            return Err(AtcError::Usage("invalid permutation".into()));
        }
        let (mut kl, mut ku) = (0, 0);
        for (i, j, _) in matrix.iter() {
            let (p, q) = (inverse[i], inverse[j]);
            if p > q {
                kl = kl.max(p - q);
            } else {
                ku = ku.max(q - p);
            }
        }
        let width = 2 * kl + ku + 1;
        let mut lu = Self {
            n,
            kl,
            ku,
            width,
            data: vec![0.0; n * width],
            pivots: vec![0; n],
            perm,
            pivot_ratio: 1.0,
        };
        for (i, j, v) in matrix.iter() {
            let (p, q) = (inverse[i], inverse[j]);
            *lu.at_mut(p, q) = v;
        }
        lu.eliminate()?;
        Ok(lu)
    }

    #[inline]
    fn pos(&self, i: usize, j: usize) -> usize {
        self.row_base(i) + j
    }

    /// Offset such that `row_base(i) + j` addresses column `j` of row `i`.
    #[inline]
    fn row_base(&self, i: usize) -> usize {
        i * (self.width - 1) + self.kl
    }

    #[inline]
    fn at(&self, i: usize, j: usize) -> f64 {
        self.data[self.pos(i, j)]
    }

    #[inline]
    fn at_mut(&mut self, i: usize, j: usize) -> &mut f64 {
        let p = self.pos(i, j);
        &mut self.data[p]
    }

    fn eliminate(&mut self) -> Result<()> {
        let n = self.n;
        let (mut max_pivot, mut min_pivot) = (0.0f64, f64::INFINITY);
        for k in 0..n {
            let last_row = (k + self.kl).min(n - 1);
            let last_col = (k + self.kl + self.ku).min(n - 1);
            let mut p = k;
            let mut best = self.at(k, k).abs();
            for i in k + 1..=last_row {
                let v = self.at(i, k).abs();
                if v > best {
                    best = v;
                    p = i;
                }
            }
            if !(best > 0.0 && best.is_finite()) {
                let condition = if min_pivot.is_finite() {
                    max_pivot / min_pivot
                } else {
                    f64::INFINITY
                };
                return Err(AtcError::SingularMatrix { row: k, condition });
            }
            max_pivot = max_pivot.max(best);
            min_pivot = min_pivot.min(best);
            self.pivots[k] = p;
            if p != k {
                for j in k..=last_col {
                    let (a, b) = (self.pos(k, j), self.pos(p, j));
                    self.data.swap(a, b);
                }
            }
            let pivot = self.at(k, k);
            let base_k = self.row_base(k);
            for i in k + 1..=last_row {
                let l = self.at(i, k) / pivot;
                if l == 0.0 {
                    continue;
                }
                *self.at_mut(i, k) = l;
                let base_i = self.row_base(i);
                for j in k + 1..=last_col {
                    let v = self.data[base_k + j];
                    if v != 0.0 {
                        self.data[base_i + j] -= l * v;
                    }
                }
            }
        }
        self.pivot_ratio = max_pivot / min_pivot;
        Ok(())
    }

    /// `max |u_kk| / min |u_kk|`, a cheap conditioning indicator.
    pub fn pivot_ratio(&self) -> f64 {
        self.pivot_ratio
    }

    pub fn bandwidths(&self) -> (usize, usize) {
        (self.kl, self.ku)
    }

    /// Solves `A x = b` in the original ordering.
    pub fn solve(&self, b: &[f64]) -> Vec<f64> {
        let n = self.n;
        let mut y: Vec<f64> = self.perm.iter().map(|&old| b[old]).collect();
        for k in 0..n {
            let p = self.pivots[k];
            if p != k {
                y.swap(k, p);
            }
            let yk = y[k];
            if yk != 0.0 {
                for i in k + 1..=(k + self.kl).min(n - 1) {
                    y[i] -= self.at(i, k) * yk;
                }
            }
        }
        for k in (0..n).rev() {
            let mut s = y[k];
            for j in k + 1..=(k + self.kl + self.ku).min(n - 1) {
                s -= self.at(k, j) * y[j];
            }
            y[k] = s / self.at(k, k);
        }
        let mut x = vec![0.0; n];
        for (new, &old) in self.perm.iter().enumerate() {
            x[old] = y[new];
        }
        x
    }
}

/// Outcome of [`solve_refined`].
#[derive(Clone, Debug)]
pub struct LinearSolve {
    pub solution: Vec<f64>,
    /// `‖Ax − b‖₂ / ‖b‖₂` (0 for `b = 0`).
    pub relative_residual: f64,
    pub pivot_ratio: f64,
}

/// Factorizes and solves, with up to three steps of iterative refinement.
pub fn solve_refined(matrix: &CsrMatrix, perm: Option<&[usize]>, rhs: &[f64]) -> Result<LinearSolve> {
    let lu = BandedLu::factor(matrix, perm)?;
    let b_norm = norm2(rhs);
    if b_norm == 0.0 {
        return Ok(LinearSolve {
            solution: vec![0.0; rhs.len()],
            relative_residual: 0.0,
            pivot_ratio: lu.pivot_ratio(),
        });
    }
    let mut x = lu.solve(rhs);
    let residual = |x: &[f64]| -> Vec<f64> {
        matrix
            .matvec(x)
            .iter()
            .zip(rhs)
            .map(|(ax, b)| b - ax)
            .collect()
    };
    let mut r = residual(&x);
    let mut rel = norm2(&r) / b_norm;
    for _ in 0..3 {
        if rel < 1e-14 {
            break;
        }
        let dx = lu.solve(&r);
        let candidate: Vec<f64> = x.iter().zip(&dx).map(|(a, b)| a + b).collect();
        let r_new = residual(&candidate);
        let rel_new = norm2(&r_new) / b_norm;
        if !(rel_new < rel) {
            break;
        }
        x = candidate;
        r = r_new;
        rel = rel_new;
    }
    Ok(LinearSolve {
        solution: x,
        relative_residual: rel,
        pivot_ratio: lu.pivot_ratio(),
    })
}
