//! Small dense symmetric solvers for the surrogate fit.
//!
//! Matrices are row-major `Vec<f64>` of side `n`. Problem sizes are bounded by
//! the number of distinct words in one document, so nothing here needs BLAS.

/// Square symmetric matrix stored row-major.
#[derive(Debug, Clone, PartialEq)]
pub struct SymMatrix {
    n: usize,
    data: Vec<f64>,
}

impl SymMatrix {
    pub fn zeros(n: usize) -> Self {
        SymMatrix {
            n,
            data: vec![0.0; n * n],
        }
    }

    pub fn from_rows(n: usize, data: Vec<f64>) -> Self {
        assert_eq!(data.len(), n * n);
        SymMatrix { n, data }
    }

    pub fn size(&self) -> usize {
        self.n
    }

    #[inline]
    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.data[i * self.n + j]
    }

    #[inline]
    pub fn set(&mut self, i: usize, j: usize, v: f64) {
        self.data[i * self.n + j] = v;
    }

    /// Principal submatrix on `idx`.
    pub fn submatrix(&self, idx: &[usize]) -> SymMatrix {
        let mut out = SymMatrix::zeros(idx.len());
        for (a, &i) in idx.iter().enumerate() {
            for (b, &j) in idx.iter().enumerate() {
                out.set(a, b, self.get(i, j));
            }
        }
        out
    }

    /// `Aᵀ A` and `Aᵀ y` for a row-major `rows × cols` matrix `a`.
    pub fn gram(a: &[f64], rows: usize, cols: usize, y: &[f64]) -> (SymMatrix, Vec<f64>) {
        debug_assert_eq!(a.len(), rows * cols);
        let mut g = SymMatrix::zeros(cols);
        let mut c = vec![0.0; cols];
        for r in 0..rows {
            let row = &a[r * cols..(r + 1) * cols];
            for i in 0..cols {
                let ri = row[i];
                if ri == 0.0 {
                    continue;
                }
                c[i] += ri * y[r];
                let gi = &mut g.data[i * cols..(i + 1) * cols];
                for j in i..cols {
                    gi[j] += ri * row[j];
                }
            }
        }
        for i in 0..cols {
            for j in 0..i {
                g.data[i * cols + j] = g.data[j * cols + i];
            }
        }
        (g, c)
    }
}

/// Lower-triangular Cholesky factor grown one column at a time.
///
/// A column whose residual pivot falls below `rel_tol` times its diagonal is
/// linearly dependent on the columns already in the factor and is refused.
#[derive(Debug, Clone)]
pub struct IncrementalCholesky {
    rel_tol: f64,
    /// Rows of L, row `i` has `i + 1` entries.
    rows: Vec<Vec<f64>>,
}

impl IncrementalCholesky {
    pub fn new(rel_tol: f64) -> Self {
        IncrementalCholesky {
            rel_tol,
            rows: Vec::new(),
        }
    }

    pub fn len(&self) -> usize {
        self.rows.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rows.is_empty()
    }

    /// Appends a column with cross products `cross` against the current
    /// columns and self product `diag`. Returns `false` if it is dependent.
    pub fn push(&mut self, cross: &[f64], diag: f64) -> bool {
        debug_assert_eq!(cross.len(), self.rows.len());
        let l = self.forward(cross);
        let d2 = diag - l.iter().map(|v| v * v).sum::<f64>();
        if !(d2 > self.rel_tol * diag.abs()) || diag <= 0.0 {
            return false;
        }
        let mut row = l;
        row.push(d2.sqrt());
        self.rows.push(row);
        true
    }

    fn forward(&self, b: &[f64]) -> Vec<f64> {
        let mut x = Vec::with_capacity(b.len());
        for (i, row) in self.rows.iter().enumerate() {
            let s: f64 = row[..i].iter().zip(&x).map(|(a, b)| a * b).sum();
            x.push((b[i] - s) / row[i]);
        }
        x
    }

    /// Solves `L Lᵀ x = b`.
    pub fn solve(&self, b: &[f64]) -> Vec<f64> {
        let n = self.rows.len();
        let mut x = self.forward(b);
        for i in (0..n).rev() {
            let mut s = x[i];
            for k in i + 1..n {
                s -= self.rows[k][i] * x[k];
            }
            x[i] = s / self.rows[i][i];
        }
        x
    }
}

/// Cholesky of a whole matrix; `None` if it is not numerically positive definite.
pub fn cholesky(a: &SymMatrix, rel_tol: f64) -> Option<IncrementalCholesky> {
    let mut chol = IncrementalCholesky::new(rel_tol);
    for i in 0..a.size() {
        let cross: Vec<f64> = (0..i).map(|j| a.get(i, j)).collect();
        if !chol.push(&cross, a.get(i, i)) {
            return None;
        }
    }
    Some(chol)
}
