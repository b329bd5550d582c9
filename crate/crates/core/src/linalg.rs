//! Dense row-major matrices and a Householder least-squares solver.
//!
//! Columns are scaled to unit Euclidean norm before factorization, so the
//! rank test is insensitive to the units of individual covariates.

/// Relative threshold on |R_jj| (after column scaling) below which the
/// design is declared rank deficient.
pub const RANK_TOLERANCE: f64 = 1e-10;

#[derive(Debug, Clone, PartialEq)]
pub struct Matrix {
    nrows: usize,
    ncols: usize,
    data: Vec<f64>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct RankDeficient;

impl Matrix {
    pub fn zeros(nrows: usize, ncols: usize) -> Self {
        Self {
            nrows,
            ncols,
            data: vec![0.0; nrows * ncols],
        }
    }

    /// Builds a matrix from equally sized rows.
    ///
    /// Panics if the rows are ragged.
    pub fn from_rows(rows: &[Vec<f64>]) -> Self {
        let nrows = rows.len();
        let ncols = rows.first().map_or(0, Vec::len);
        let mut data = Vec::with_capacity(nrows * ncols);
        for row in rows {
            assert_eq!(row.len(), ncols, "ragged rows");
            data.extend_from_slice(row);
        }
        Self { nrows, ncols, data }
    }

    /// Design matrix with a leading column of ones followed by `columns`.
    pub fn with_intercept(n: usize, columns: &[&[f64]]) -> Self {
        let ncols = columns.len() + 1;
        let mut m = Self::zeros(n, ncols);
        for i in 0..n {
            m[(i, 0)] = 1.0;
            for (j, col) in columns.iter().enumerate() {
                m[(i, j + 1)] = col[i];
            }
        }
        m
    }

    pub fn nrows(&self) -> usize {
        self.nrows
    }

    pub fn ncols(&self) -> usize {
        self.ncols
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.data[i * self.ncols..(i + 1) * self.ncols]
    }

    pub fn column(&self, j: usize) -> Vec<f64> {
        (0..self.nrows).map(|i| self[(i, j)]).collect()
    }

    pub fn mul_vec(&self, v: &[f64]) -> Vec<f64> {
        debug_assert_eq!(v.len(), self.ncols);
        (0..self.nrows).map(|i| dot(self.row(i), v)).collect()
    }

    /// Xᵀ r
    pub fn tr_mul_vec(&self, r: &[f64]) -> Vec<f64> {
        debug_assert_eq!(r.len(), self.nrows);
        let mut out = vec![0.0; self.ncols];
        for (i, &ri) in r.iter().enumerate() {
            for (o, x) in out.iter_mut().zip(self.row(i)) {
                *o += x * ri;
            }
        }
        out
    }

    /// Returns a copy with row `i` multiplied by `s[i]`.
    pub fn scale_rows(&self, s: &[f64]) -> Self {
        let mut m = self.clone();
        for (i, &si) in s.iter().enumerate() {
            for x in &mut m.data[i * self.ncols..(i + 1) * self.ncols] {
                *x *= si;
            }
        }
        m
    }

    pub fn is_full_rank(&self) -> bool {
        self.nrows >= self.ncols && lstsq(self, &vec![0.0; self.nrows]).is_ok()
    }
}

impl std::ops::Index<(usize, usize)> for Matrix {
    type Output = f64;
    fn index(&self, (i, j): (usize, usize)) -> &f64 {
        &self.data[i * self.ncols + j]
    }
}

impl std::ops::IndexMut<(usize, usize)> for Matrix {
    fn index_mut(&mut self, (i, j): (usize, usize)) -> &mut f64 {
        &mut self.data[i * self.ncols + j]
    }
}

pub fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// Solves min ‖A x − b‖₂ by Householder QR on the column-scaled matrix.
pub fn lstsq(a: &Matrix, b: &[f64]) -> Result<Vec<f64>, RankDeficient> {
    let (m, n) = (a.nrows, a.ncols);
    assert_eq!(b.len(), m);
    if m < n {
        return Err(RankDeficient);
    }
    let mut scale = vec![0.0; n];
    for (j, s) in scale.iter_mut().enumerate() {
        *s = (0..m).map(|i| a[(i, j)].powi(2)).sum::<f64>().sqrt();
        if !(*s > 0.0) || !s.is_finite() {
            return Err(RankDeficient);
        }
    }
    let mut r = a.clone();
    for i in 0..m {
        for j in 0..n {
            r[(i, j)] /= scale[j];
        }
    }
    let mut qtb = b.to_vec();
    let mut diag = vec![0.0; n];
    let mut v = vec![0.0; m];

    for k in 0..n {
        let norm = (k..m).map(|i| r[(i, k)].powi(2)).sum::<f64>().sqrt();
        if norm == 0.0 {
            return Err(RankDeficient);
        }
        let alpha = if r[(k, k)] > 0.0 { -norm } else { norm };
        for i in k..m {
            v[i] = r[(i, k)];
        }
        v[k] -= alpha;
        let vnorm2: f64 = (k..m).map(|i| v[i] * v[i]).sum();
        if vnorm2 > 0.0 {
            for j in k..n {
                let s: f64 = (k..m).map(|i| v[i] * r[(i, j)]).sum::<f64>() * 2.0 / vnorm2;
                for i in k..m {
                    r[(i, j)] -= s * v[i];
                }
            }
            let s: f64 = (k..m).map(|i| v[i] * qtb[i]).sum::<f64>() * 2.0 / vnorm2;
            for i in k..m {
                qtb[i] -= s * v[i];
            }
        }
        diag[k] = r[(k, k)];
    }

    let max_diag = diag.iter().fold(0.0_f64, |acc, d| acc.max(d.abs()));
    if diag.iter().any(|d| d.abs() <= RANK_TOLERANCE * max_diag) {
        return Err(RankDeficient);
    }

    let mut z = vec![0.0; n];
    for k in (0..n).rev() {
        let tail: f64 = ((k + 1)..n).map(|j| r[(k, j)] * z[j]).sum();
        z[k] = (qtb[k] - tail) / r[(k, k)];
    }
    Ok(z.iter().zip(&scale).map(|(zi, s)| zi / s).collect())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn exact_square_system() {
        let a = Matrix::from_rows(&[vec![2.0, 1.0], vec![1.0, 3.0]]);
        let x = lstsq(&a, &[5.0, 10.0]).unwrap();
        assert!((x[0] - 1.0).abs() < 1e-14);
        assert!((x[1] - 3.0).abs() < 1e-14);
    }

    #[test]
    fn duplicated_column_is_rank_deficient() {
        let a = Matrix::from_rows(&[
            vec![1.0, 2.0, 2.0],
            vec![1.0, 3.0, 3.0],
            vec![1.0, 5.0, 5.0],
            vec![1.0, 7.0, 7.0],
        ]);
        assert_eq!(lstsq(&a, &[1.0, 2.0, 3.0, 4.0]), Err(RankDeficient));
        assert!(!a.is_full_rank());
    }

    #[test]
    fn zero_column_is_rank_deficient() {
        let a = Matrix::from_rows(&[vec![1.0, 0.0], vec![1.0, 0.0], vec![1.0, 0.0]]);
        assert_eq!(lstsq(&a, &[1.0, 2.0, 3.0]), Err(RankDeficient));
    }

    #[test]
    fn badly_scaled_columns_are_not_rank_deficient() {
        let rows: Vec<Vec<f64>> = (0..10)
            .map(|i| vec![1.0, 1e6 * i as f64, 1e-6 * ((i * i) as f64)])
            .collect();
        assert!(Matrix::from_rows(&rows).is_full_rank());
    }
}
