//! Compressed sparse row storage for the assembled bilinear forms.

use crate::par;

/// Square matrix in compressed sparse row form. Column indices are sorted
/// within each row.
#[derive(Debug, Clone, PartialEq)]
pub struct CsrMatrix {
    n: usize,
    row_ptr: Vec<usize>,
    col_idx: Vec<usize>,
    values: Vec<f64>,
}

impl CsrMatrix {
    /// Zero matrix with the sparsity of a tensor-product nodal grid whose
    /// axes have `dims[a]` nodes: node `p` couples with every node whose
    /// multi-index differs by at most one along each axis. The first axis
    /// varies fastest.
    pub fn tensor_stencil(dims: &[usize]) -> Self {
        let n: usize = dims.iter().product();
        let mut row_ptr = Vec::with_capacity(n + 1);
        let mut col_idx = Vec::with_capacity(n * 3usize.pow(dims.len() as u32));
        row_ptr.push(0);
        let mut strides = vec![1usize; dims.len()];
        for a in 1..dims.len() {
            strides[a] = strides[a - 1] * dims[a - 1];
        }
        let mut multi = vec![0usize; dims.len()];
        for row in 0..n {
            let mut rem = row;
            for a in 0..dims.len() {
                multi[a] = rem % dims[a];
                rem /= dims[a];
            }
            // enumerate offsets from the slowest axis down so columns come out sorted
            let mut cols = vec![0usize];
            for a in (0..dims.len()).rev() {
                let lo = multi[a].saturating_sub(1);
                let hi = (multi[a] + 1).min(dims[a] - 1);
                let mut next = Vec::with_capacity(cols.len() * 3);
                for &c in &cols {
                    for m in lo..=hi {
                        next.push(c + m * strides[a]);
                    }
                }
                cols = next;
            }
            col_idx.extend_from_slice(&cols);
            row_ptr.push(col_idx.len());
        }
        let nnz = col_idx.len();
        CsrMatrix {
            n,
            row_ptr,
            col_idx,
            values: vec![0.0; nnz],
        }
    }

    pub fn dim(&self) -> usize {
        self.n
    }

    pub fn nnz(&self) -> usize {
        self.values.len()
    }

    pub fn row_ptr(&self) -> &[usize] {
        &self.row_ptr
    }

    pub fn col_idx(&self) -> &[usize] {
        &self.col_idx
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    #[inline]
    fn slot(&self, i: usize, j: usize) -> Option<usize> {
        let (a, b) = (self.row_ptr[i], self.row_ptr[i + 1]);
        self.col_idx[a..b].binary_search(&j).ok().map(|p| a + p)
    }

    /// Accumulate `v` into entry `(i, j)`. Panics if `(i, j)` is outside the
    /// sparsity pattern.
    #[inline]
    pub fn add(&mut self, i: usize, j: usize, v: f64) {
        let s = self
            .slot(i, j)
            .unwrap_or_else(|| panic!("entry ({i}, {j}) outside the sparsity pattern"));
        self.values[s] += v;
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.slot(i, j).map_or(0.0, |s| self.values[s])
    }

    pub fn diagonal(&self) -> Vec<f64> {
        (0..self.n).map(|i| self.get(i, i)).collect()
    }

    pub fn max_abs(&self) -> f64 {
        self.values.iter().fold(0.0, |m, v| m.max(v.abs()))
    }

    pub fn scale(&mut self, s: f64) {
        self.values.iter_mut().for_each(|v| *v *= s);
    }

    #[inline]
    fn row_dot(&self, i: usize, x: &[f64]) -> f64 {
        let (a, b) = (self.row_ptr[i], self.row_ptr[i + 1]);
        self.col_idx[a..b]
            .iter()
            .zip(&self.values[a..b])
            .map(|(&j, &v)| v * x[j])
            .sum()
    }

    /// `y = A x`
    pub fn mul_vec_into(&self, x: &[f64], y: &mut [f64]) {
        assert_eq!(x.len(), self.n);
        assert_eq!(y.len(), self.n);
        par::fill_indexed(y, |i| self.row_dot(i, x));
    }

    pub fn mul_vec(&self, x: &[f64]) -> Vec<f64> {
        let mut y = vec![0.0; self.n];
        self.mul_vec_into(x, &mut y);
        y
    }

    /// Largest `|a_ij - a_ji|` over the stored entries.
    pub fn asymmetry(&self) -> f64 {
        let mut worst: f64 = 0.0;
        for i in 0..self.n {
            for s in self.row_ptr[i]..self.row_ptr[i + 1] {
                let j = self.col_idx[s];
                let vt = match self.slot(j, i) {
                    Some(t) => self.values[t],
                    None => return f64::INFINITY,
                };
                worst = worst.max((self.values[s] - vt).abs());
            }
        }
        worst
    }

    /// Principal submatrix on the rows/columns with `keep[i] == true`,
    /// renumbered in increasing order.
    pub fn principal_submatrix(&self, keep: &[bool]) -> CsrMatrix {
        assert_eq!(keep.len(), self.n);
        let mut new_index = vec![usize::MAX; self.n];
        let mut m = 0;
        for (i, &k) in keep.iter().enumerate() {
            if k {
                new_index[i] = m;
                m += 1;
            }
        }
        let mut row_ptr = Vec::with_capacity(m + 1);
        let mut col_idx = Vec::new();
        let mut values = Vec::new();
        row_ptr.push(0);
        for i in (0..self.n).filter(|&i| keep[i]) {
            for s in self.row_ptr[i]..self.row_ptr[i + 1] {
                let j = self.col_idx[s];
                if keep[j] {
                    col_idx.push(new_index[j]);
                    values.push(self.values[s]);
                }
            }
            row_ptr.push(col_idx.len());
        }
        CsrMatrix {
            n: m,
            row_ptr,
            col_idx,
            values,
        }
    }
}

#[inline]
pub fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

#[inline]
pub fn norm(a: &[f64]) -> f64 {
    dot(a, a).sqrt()
}
