//! Dense row-major point clouds and the small symmetric-matrix kernels the
//! filters need.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::error::{invalid, Result};
use crate::par::{self, Exec, CHUNK_ROWS};

/// `rows × cols` matrix stored row-major; one row per sample.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Points {
    rows: usize,
    cols: usize,
    data: Vec<f64>,
}

impl Points {
    pub fn new(rows: usize, cols: usize, data: Vec<f64>) -> Result<Self> {
        if data.len() != rows * cols {
            return Err(invalid(format!(
                "{} values do not form a {rows}x{cols} matrix",
                data.len()
            )));
        }
        Ok(Self { rows, cols, data })
    }

    pub fn zeros(rows: usize, cols: usize) -> Self {
        Self {
            rows,
            cols,
            data: vec![0.0; rows * cols],
        }
    }

    pub fn from_rows<R: AsRef<[f64]>>(rows: &[R]) -> Result<Self> {
        let cols = rows.first().map_or(0, |r| r.as_ref().len());
        let mut data = Vec::with_capacity(rows.len() * cols);
        for r in rows {
            let r = r.as_ref();
            if r.len() != cols {
                return Err(invalid("ragged rows"));
            }
            data.extend_from_slice(r);
        }
        Ok(Self {
            rows: rows.len(),
            cols,
            data,
        })
    }

    #[inline]
    pub fn rows(&self) -> usize {
        self.rows
    }

    #[inline]
    pub fn cols(&self) -> usize {
        self.cols
    }

    #[inline]
    pub fn row(&self, i: usize) -> &[f64] {
        &self.data[i * self.cols..(i + 1) * self.cols]
    }

    #[inline]
    pub fn row_mut(&mut self, i: usize) -> &mut [f64] {
        &mut self.data[i * self.cols..(i + 1) * self.cols]
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.data
    }

    pub fn as_mut_slice(&mut self) -> &mut [f64] {
        &mut self.data
    }

    pub fn iter_rows(&self) -> impl ExactSizeIterator<Item = &[f64]> + '_ {
        self.data.chunks_exact(self.cols.max(1)).take(self.rows)
    }

    /// Copies the listed rows, in order, into a new matrix.
    pub fn select(&self, idx: &[usize]) -> Points {
        let mut data = Vec::with_capacity(idx.len() * self.cols);
        for &i in idx {
            data.extend_from_slice(self.row(i));
        }
        Points {
            rows: idx.len(),
            cols: self.cols,
            data,
        }
    }

    /// Applies the same linear map to every row: `row ↦ Q row`.
    pub fn transform(&self, q: &DenseMatrix) -> Points {
        let mut out = Points::zeros(self.rows, q.rows());
        for (i, r) in self.iter_rows().enumerate() {
            q.apply(r, out.row_mut(i));
        }
        out
    }

    pub fn scaled(&self, c: f64) -> Points {
        Points {
            rows: self.rows,
            cols: self.cols,
            data: self.data.iter().map(|v| v * c).collect(),
        }
    }
}

/// General `rows × cols` matrix, row-major.
#[derive(Clone, Debug, PartialEq)]
pub struct DenseMatrix {
    rows: usize,
    cols: usize,
    data: Vec<f64>,
}

impl DenseMatrix {
    pub fn new(rows: usize, cols: usize, data: Vec<f64>) -> Result<Self> {
        if data.len() != rows * cols {
            return Err(invalid("matrix shape mismatch"));
        }
        Ok(Self { rows, cols, data })
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn apply(&self, x: &[f64], out: &mut [f64]) {
        for (i, o) in out.iter_mut().enumerate() {
            *o = dot(&self.data[i * self.cols..(i + 1) * self.cols], x);
        }
    }
}

/// Symmetric `dim × dim` matrix, full storage.
#[derive(Clone, Debug, PartialEq)]
pub struct SymMatrix {
    dim: usize,
    data: Vec<f64>,
}

impl SymMatrix {
    pub fn zeros(dim: usize) -> Self {
        Self {
            dim,
            data: vec![0.0; dim * dim],
        }
    }

    pub fn from_full(dim: usize, data: Vec<f64>) -> Result<Self> {
        if data.len() != dim * dim {
            return Err(invalid("matrix shape mismatch"));
        }
        Ok(Self { dim, data })
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    #[inline]
    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.data[i * self.dim + j]
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.data
    }

    pub fn mul_vec(&self, x: &[f64], out: &mut [f64]) {
        for (i, o) in out.iter_mut().enumerate() {
            *o = dot(&self.data[i * self.dim..(i + 1) * self.dim], x);
        }
    }

    pub fn quad_form(&self, x: &[f64]) -> f64 {
        let mut tmp = vec![0.0; self.dim];
        self.mul_vec(x, &mut tmp);
        dot(x, &tmp)
    }

    /// Frobenius inner product with `u uᵀ`.
    pub fn energy(&self, u: &[f64]) -> f64 {
        self.quad_form(u)
    }

    pub fn trace(&self) -> f64 {
        (0..self.dim).map(|i| self.get(i, i)).sum()
    }

    /// Top eigenpair by power iteration from a fixed seeded start vector.
    pub fn top_eigenpair(&self, opts: PowerOptions) -> (f64, Vec<f64>) {
        power_iteration(self, opts)
    }

    pub fn to_nalgebra(&self) -> nalgebra::DMatrix<f64> {
        nalgebra::DMatrix::from_row_slice(self.dim, self.dim, &self.data)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct PowerOptions {
    pub max_iter: usize,
    /// Stop once successive unit iterates differ by at most this in norm.
    pub tol: f64,
    pub seed: u64,
}

impl Default for PowerOptions {
    fn default() -> Self {
        Self {
            max_iter: 10_000,
            tol: 1e-14,
            seed: 0x005E_ED0F_E16E,
        }
    }
}

fn power_iteration(m: &SymMatrix, opts: PowerOptions) -> (f64, Vec<f64>) {
    let d = m.dim;
    let mut rng = ChaCha8Rng::seed_from_u64(opts.seed);
    let mut v: Vec<f64> = (0..d).map(|_| rng.sample(StandardNormal)).collect();
    normalize(&mut v);
    let mut w = vec![0.0; d];
    for _ in 0..opts.max_iter {
        m.mul_vec(&v, &mut w);
        let norm = norm2(&w);
        if norm == 0.0 || !norm.is_finite() {
            return (0.0, v);
        }
        let mut step = 0.0;
        for (vi, wi) in v.iter_mut().zip(&w) {
            let next = wi / norm;
            step += (next - *vi) * (next - *vi);
            *vi = next;
        }
        if step.sqrt() <= opts.tol.max(f64::EPSILON) {
            break;
        }
    }
    m.mul_vec(&v, &mut w);
    (dot(&v, &w), v)
}

#[inline]
pub fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

#[inline]
pub fn norm2(a: &[f64]) -> f64 {
    dot(a, a).sqrt()
}

pub fn normalize(a: &mut [f64]) -> f64 {
    let n = norm2(a);
    if n > 0.0 {
        a.iter_mut().for_each(|v| *v /= n);
    }
    n
}

pub fn sub(a: &[f64], b: &[f64]) -> Vec<f64> {
    a.iter().zip(b).map(|(x, y)| x - y).collect()
}

/// Mean of the selected rows, computed as an offset from the first selected
/// row so that identical rows reproduce that row bit-exactly.
pub fn mean_of(points: &Points, idx: &[usize], exec: Exec) -> Vec<f64> {
    let d = points.cols();
    let Some(&first) = idx.first() else {
        return vec![0.0; d];
    };
    let anchor = points.row(first);
    let parts = par::map_chunks(exec, idx.len(), CHUNK_ROWS, |r| {
        let mut acc = vec![0.0; d];
        for &i in &idx[r] {
            for ((a, x), o) in acc.iter_mut().zip(points.row(i)).zip(anchor) {
                *a += x - o;
            }
        }
        acc
    });
    let m = idx.len() as f64;
    sum_partials_mean(parts, d, anchor, m)
}

fn sum_partials_mean(parts: Vec<Vec<f64>>, d: usize, anchor: &[f64], m: f64) -> Vec<f64> {
    par::sum_partials(parts, d)
        .into_iter()
        .zip(anchor)
        .map(|(s, a)| a + s / m)
        .collect()
}

/// `(1/m) Σ (x_i − c)(x_i − c)ᵀ` over the selected rows; `center = None`
/// gives the uncentered second moment.
pub fn scatter_of(points: &Points, idx: &[usize], center: Option<&[f64]>, exec: Exec) -> SymMatrix {
    let d = points.cols();
    if idx.is_empty() {
        return SymMatrix::zeros(d);
    }
    let parts = par::map_chunks(exec, idx.len(), CHUNK_ROWS, |r| {
        let mut acc = vec![0.0; d * d];
        let mut buf = vec![0.0; d];
        for &i in &idx[r] {
            let x = points.row(i);
            match center {
                Some(c) => buf.iter_mut().zip(x).zip(c).for_each(|((b, x), c)| *b = x - c),
                None => buf.copy_from_slice(x),
            }
            for a in 0..d {
                let ba = buf[a];
                let row = &mut acc[a * d..a * d + d];
                for b in a..d {
                    row[b] += ba * buf[b];
                }
            }
        }
        acc
    });
    let mut full = par::sum_partials(parts, d * d);
    let m = idx.len() as f64;
    for a in 0..d {
        for b in a..d {
            let v = full[a * d + b] / m;
            full[a * d + b] = v;
            full[b * d + a] = v;
        }
    }
    SymMatrix { dim: d, data: full }
}

/// Uncentered second moment of all rows.
pub fn second_moment(points: &Points, exec: Exec) -> SymMatrix {
    let idx: Vec<usize> = (0..points.rows()).collect();
    scatter_of(points, &idx, None, exec)
}

/// Largest-magnitude eigenvalue of a symmetric matrix (operator norm).
pub fn operator_norm(m: &SymMatrix) -> f64 {
    let eig = nalgebra::SymmetricEigen::new(m.to_nalgebra());
    eig.eigenvalues.iter().fold(0.0f64, |a, v| a.max(v.abs()))
}

/// All eigenvalues, ascending.
pub fn eigenvalues(m: &SymMatrix) -> Vec<f64> {
    let eig = nalgebra::SymmetricEigen::new(m.to_nalgebra());
    let mut v: Vec<f64> = eig.eigenvalues.iter().copied().collect();
    v.sort_by(f64::total_cmp);
    v
}

/// Uniformly random unit vector in `R^d`.
pub fn random_unit<R: Rng + ?Sized>(d: usize, rng: &mut R) -> Vec<f64> {
    loop {
        let mut v: Vec<f64> = (0..d).map(|_| rng.sample(StandardNormal)).collect();
        if normalize(&mut v) > 1e-8 {
            return v;
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    #[test]
    fn mean_of_identical_rows_is_exact() {
        let row = [0.1, -3.7, 1e-3];
        let p = Points::from_rows(&vec![row; 10_007]).unwrap();
        let idx: Vec<usize> = (0..p.rows()).collect();
        assert_eq!(mean_of(&p, &idx, Exec::Sequential), row.to_vec());
    }

    #[test]
    fn scatter_matches_hand_computation() {
        let p = Points::from_rows(&[[1.0, 2.0], [3.0, 0.0]]).unwrap();
        let m = second_moment(&p, Exec::Sequential);
        assert_eq!(m.as_slice(), &[5.0, 1.0, 1.0, 2.0]);
        let c = scatter_of(&p, &[0, 1], Some(&[2.0, 1.0]), Exec::Sequential);
        assert_eq!(c.as_slice(), &[1.0, -1.0, -1.0, 1.0]);
    }

    #[test]
    fn power_iteration_agrees_with_dense_eigensolver() {
        let m = SymMatrix::from_full(3, vec![4.0, 1.0, 0.5, 1.0, 3.0, 0.2, 0.5, 0.2, 1.0]).unwrap();
        let (lambda, v) = m.top_eigenpair(PowerOptions::default());
        let ev = eigenvalues(&m);
        assert_abs_diff_eq!(lambda, ev[2], epsilon = 1e-9);
        assert_abs_diff_eq!(norm2(&v), 1.0, epsilon = 1e-12);
        assert_abs_diff_eq!(m.quad_form(&v), lambda, epsilon = 1e-12);
    }

    #[test]
    fn zero_matrix_has_zero_top_eigenvalue() {
        let (lambda, v) = SymMatrix::zeros(4).top_eigenpair(PowerOptions::default());
        assert_eq!(lambda, 0.0);
        assert_abs_diff_eq!(norm2(&v), 1.0, epsilon = 1e-12);
    }
}
