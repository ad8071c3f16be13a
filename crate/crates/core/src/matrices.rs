//! Dense and block-diagonal matrices, the norms used by the bounds, and
//! power-iteration eigen/singular value routines.

use std::fmt::Write as _;

use nalgebra::DMatrix;
use rand::Rng;
use rand_distr::StandardNormal;

use crate::distributions::DistributionSpec;
use crate::error::{check_len, Error, Result};
use crate::rng::RngStream;

/// Iteration cap of the power method.
pub const POWER_MAX_ITER: usize = 10_000;
/// Default relative tolerance of the power method.
pub const POWER_TOL: f64 = 1e-8;
/// Largest matrix accepted by [`extreme_eigen_sym`].
pub const EIGEN_MAX_DIM: usize = 512;

/// Row-major dense real matrix.
#[derive(Debug, Clone, PartialEq)]
pub struct DenseMatrix {
    rows: usize,
    cols: usize,
    data: Vec<f64>,
}

impl DenseMatrix {
    pub fn new(rows: usize, cols: usize, data: Vec<f64>) -> Result<Self> {
        check_len(rows * cols, data.len())?;
        if data.iter().any(|v| !v.is_finite()) {
            return Err(Error::Argument("matrix entries must be finite".into()));
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

    pub fn identity(n: usize) -> Self {
        Self::diagonal(&vec![1.0; n])
    }

    pub fn diagonal(diag: &[f64]) -> Self {
        let n = diag.len();
        let mut m = Self::zeros(n, n);
        for (i, v) in diag.iter().enumerate() {
            m.data[i * n + i] = *v;
        }
        m
    }

    pub fn from_rows(rows: &[Vec<f64>]) -> Result<Self> {
        let r = rows.len();
        let c = rows.first().map_or(0, Vec::len);
        if rows.iter().any(|row| row.len() != c) {
            return Err(Error::Argument("ragged rows".into()));
        }
        Self::new(r, c, rows.concat())
    }

    /// `u vᵀ`.
    pub fn outer(u: &[f64], v: &[f64]) -> Self {
        let mut m = Self::zeros(u.len(), v.len());
        for (i, a) in u.iter().enumerate() {
            for (j, b) in v.iter().enumerate() {
                m.data[i * v.len() + j] = a * b;
            }
        }
        m
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    #[inline]
    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.data[i * self.cols + j]
    }

    #[inline]
    pub fn set(&mut self, i: usize, j: usize, v: f64) {
        self.data[i * self.cols + j] = v;
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.data[i * self.cols..(i + 1) * self.cols]
    }

    pub fn scaled(&self, c: f64) -> Self {
        Self {
            rows: self.rows,
            cols: self.cols,
            data: self.data.iter().map(|v| c * v).collect(),
        }
    }

    pub fn sub(&self, other: &DenseMatrix) -> Result<Self> {
        check_len(self.rows, other.rows)?;
        check_len(self.cols, other.cols)?;
        Ok(Self {
            rows: self.rows,
            cols: self.cols,
            data: self.data.iter().zip(&other.data).map(|(a, b)| a - b).collect(),
        })
    }

    pub fn transpose(&self) -> Self {
        let mut t = Self::zeros(self.cols, self.rows);
        for i in 0..self.rows {
            for j in 0..self.cols {
                t.data[j * self.rows + i] = self.get(i, j);
            }
        }
        t
    }

    /// `out = A x`.
    pub fn matvec_into(&self, x: &[f64], out: &mut [f64]) {
        for (o, row) in out.iter_mut().zip(self.data.chunks_exact(self.cols.max(1))) {
            *o = row.iter().zip(x).map(|(a, b)| a * b).sum();
        }
        if self.cols == 0 {
            out.iter_mut().for_each(|o| *o = 0.0);
        }
    }

    /// `out = Aᵀ y`.
    pub fn matvec_t_into(&self, y: &[f64], out: &mut [f64]) {
        out.iter_mut().for_each(|o| *o = 0.0);
        for (i, yi) in y.iter().enumerate().take(self.rows) {
            if *yi == 0.0 {
                continue;
            }
            for (o, a) in out.iter_mut().zip(self.row(i)) {
                *o += a * yi;
            }
        }
    }

    pub fn matvec(&self, x: &[f64]) -> Result<Vec<f64>> {
        check_len(self.cols, x.len())?;
        let mut out = vec![0.0; self.rows];
        self.matvec_into(x, &mut out);
        Ok(out)
    }

    pub fn matvec_t(&self, y: &[f64]) -> Result<Vec<f64>> {
        check_len(self.rows, y.len())?;
        let mut out = vec![0.0; self.cols];
        self.matvec_t_into(y, &mut out);
        Ok(out)
    }

    pub fn matmul(&self, other: &DenseMatrix) -> Result<Self> {
        check_len(self.cols, other.rows)?;
        let mut out = Self::zeros(self.rows, other.cols);
        for i in 0..self.rows {
            for k in 0..self.cols {
                let a = self.get(i, k);
                if a == 0.0 {
                    continue;
                }
                let orow = &mut out.data[i * other.cols..(i + 1) * other.cols];
                for (o, b) in orow.iter_mut().zip(other.row(k)) {
                    *o += a * b;
                }
            }
        }
        Ok(out)
    }

    /// `AᵀA`, symmetric by construction.
    pub fn gram(&self) -> Self {
        let n = self.cols;
        let mut g = Self::zeros(n, n);
        for r in 0..self.rows {
            let row = self.row(r);
            for i in 0..n {
                let a = row[i];
                if a == 0.0 {
                    continue;
                }
                for j in i..n {
                    g.data[i * n + j] += a * row[j];
                }
            }
        }
        for i in 0..n {
            for j in 0..i {
                g.data[i * n + j] = g.data[j * n + i];
            }
        }
        g
    }

    /// Principal submatrix on `idx`.
    pub fn principal_submatrix(&self, idx: &[usize]) -> Self {
        let k = idx.len();
        let mut s = Self::zeros(k, k);
        for (a, &i) in idx.iter().enumerate() {
            for (b, &j) in idx.iter().enumerate() {
                s.data[a * k + b] = self.get(i, j);
            }
        }
        s
    }

    pub fn is_symmetric(&self, tol: f64) -> bool {
        self.rows == self.cols && (0..self.rows).all(|i| (0..i).all(|j| (self.get(i, j) - self.get(j, i)).abs() <= tol))
    }

    /// Text fixture format: `rows cols` header, then one line per row.
    pub fn to_text(&self) -> String {
        let mut s = format!("{} {}\n", self.rows, self.cols);
        for i in 0..self.rows {
            let line: Vec<String> = self.row(i).iter().map(|v| format!("{v:e}")).collect();
            let _ = writeln!(s, "{}", line.join(" "));
        }
        s
    }

    pub fn from_text(text: &str) -> Result<Self> {
        let mut tokens = text.split_whitespace();
        let mut dim = |what: &str| -> Result<usize> {
            tokens
                .next()
                .ok_or_else(|| Error::Argument(format!("matrix text: missing {what}")))?
                .parse()
                .map_err(|e| Error::Argument(format!("matrix text: bad {what}: {e}")))
        };
        let rows = dim("rows")?;
        let cols = dim("cols")?;
        let data = tokens
            .map(|t| {
                t.parse::<f64>()
                    .map_err(|e| Error::Argument(format!("matrix text: bad entry {t:?}: {e}")))
            })
            .collect::<Result<Vec<f64>>>()?;
        Self::new(rows, cols, data)
    }
}

pub fn frobenius_norm(a: &DenseMatrix) -> f64 {
    a.data.iter().map(|v| v * v).sum::<f64>().sqrt()
}

/// `‖A‖_{2→∞}`: the largest Euclidean row norm.
pub fn opnorm_2_inf(a: &DenseMatrix) -> f64 {
    (0..a.rows)
        .map(|i| a.row(i).iter().map(|v| v * v).sum::<f64>().sqrt())
        .fold(0.0, f64::max)
}

/// Largest eigenvalue of a positive semidefinite operator of dimension `n`.
///
/// Starts from a fixed-seed Gaussian vector and stops once the eigen-residual
/// `‖Tv - ρv‖` drops below `tol·max(ρ, scale)`; `scale` lets callers measure
/// accuracy against the size of a related operator when `ρ` itself is tiny.
pub fn power_iteration_psd<F>(n: usize, tol: f64, scale: f64, apply: F) -> Result<(f64, Vec<f64>)>
where
    F: Fn(&[f64], &mut [f64]),
{
    if !(tol > 0.0) {
        return Err(Error::Argument(format!("tolerance must be positive, got {tol}")));
    }
    if n == 0 {
        return Ok((0.0, Vec::new()));
    }
    let mut rng = RngStream::new(0x00C0_FFEE, n as u64).rng();
    let mut v: Vec<f64> = (0..n).map(|_| rng.sample(StandardNormal)).collect();
    normalize(&mut v);
    let mut w = vec![0.0; n];
    let mut best = 0.0f64;
    for _ in 0..POWER_MAX_ITER {
        apply(&v, &mut w);
        let rho: f64 = v.iter().zip(&w).map(|(a, b)| a * b).sum();
        best = best.max(rho);
        let floor = tol * rho.abs().max(scale);
        let w_norm = norm2(&w);
        if w_norm == 0.0 {
            return Ok((0.0, v));
        }
        let resid: f64 = v.iter().zip(&w).map(|(a, b)| (b - rho * a).powi(2)).sum::<f64>().sqrt();
        if resid <= floor {
            return Ok((rho, v));
        }
        for (vi, wi) in v.iter_mut().zip(&w) {
            *vi = wi / w_norm;
        }
    }
    Err(Error::Convergence {
        iterations: POWER_MAX_ITER,
        best,
    })
}

/// `‖A‖_{2→2}` by power iteration on `AᵀA` (or `AAᵀ`, whichever is smaller).
pub fn opnorm_2_2(a: &DenseMatrix, tol: f64) -> Result<f64> {
    if a.rows == 0 || a.cols == 0 {
        return Ok(0.0);
    }
    let res = if a.cols <= a.rows {
        let mut tmp = vec![0.0; a.rows];
        let tmp = std::cell::RefCell::new(&mut tmp);
        power_iteration_psd(a.cols, tol, 0.0, |x, out| {
            let mut t = tmp.borrow_mut();
            a.matvec_into(x, &mut t);
            a.matvec_t_into(&t, out);
        })
    } else {
        let mut tmp = vec![0.0; a.cols];
        let tmp = std::cell::RefCell::new(&mut tmp);
        power_iteration_psd(a.rows, tol, 0.0, |y, out| {
            let mut t = tmp.borrow_mut();
            a.matvec_t_into(y, &mut t);
            a.matvec_into(&t, out);
        })
    };
    match res {
        Ok((rho, _)) => Ok(rho.max(0.0).sqrt()),
        // clustered top singular values: fall back to a dense solve when small enough
        Err(Error::Convergence { .. }) if a.rows.min(a.cols) <= EIGEN_MAX_DIM => {
            let m = DMatrix::from_row_slice(a.rows, a.cols, &a.data);
            Ok(m.singular_values().max())
        }
        Err(Error::Convergence { iterations, best }) => Err(Error::Convergence {
            iterations,
            best: best.max(0.0).sqrt(),
        }),
        Err(e) => Err(e),
    }
}

/// `(λ_min, λ_max)` of a symmetric matrix.
///
/// `λ_max` comes from power iteration on `S + cI` with `c` the Gershgorin
/// shift that makes the operator positive semidefinite, `λ_min` from power
/// iteration on `λ_max I - S`. If either iteration hits the cap the matrix
/// is handed to a dense symmetric eigensolver instead.
pub fn extreme_eigen_sym(s: &DenseMatrix, tol: f64) -> Result<(f64, f64)> {
    let n = s.rows;
    if n != s.cols {
        return Err(Error::Argument("matrix must be square".into()));
    }
    if n > EIGEN_MAX_DIM {
        return Err(Error::Capacity(format!(
            "eigen problem of size {n} exceeds {EIGEN_MAX_DIM}"
        )));
    }
    if !s.is_symmetric(1e-10) {
        return Err(Error::Argument("matrix must be symmetric to 1e-10".into()));
    }
    if n == 0 {
        return Ok((0.0, 0.0));
    }
    let gersh_lo = (0..n)
        .map(|i| {
            let off: f64 = (0..n).filter(|&j| j != i).map(|j| s.get(i, j).abs()).sum();
            s.get(i, i) - off
        })
        .fold(f64::INFINITY, f64::min);
    let shift = (-gersh_lo).max(0.0);
    let shifted = |x: &[f64], out: &mut [f64]| {
        s.matvec_into(x, out);
        for (o, xi) in out.iter_mut().zip(x) {
            *o += shift * xi;
        }
    };
    let top = match power_iteration_psd(n, tol, 0.0, shifted) {
        Ok((top, _)) => top,
        Err(Error::Convergence { .. }) => return Ok(dense_sym_extremes(s)),
        Err(e) => return Err(e),
    };
    let lambda_max = top - shift;
    let flipped = |x: &[f64], out: &mut [f64]| {
        s.matvec_into(x, out);
        for (o, xi) in out.iter_mut().zip(x) {
            *o = lambda_max * xi - *o;
        }
    };
    let scale = lambda_max.abs().max(gersh_lo.abs());
    match power_iteration_psd(n, tol, scale, flipped) {
        Ok((spread, _)) => Ok((lambda_max - spread.max(0.0), lambda_max)),
        Err(Error::Convergence { .. }) => Ok(dense_sym_extremes(s)),
        Err(e) => Err(e),
    }
}

/// Extreme eigenvalues from a full symmetric eigendecomposition.
///
/// Used when power iteration stalls on a cluster of nearly equal extreme
/// eigenvalues, where the gap makes the iteration cap unreachable.
fn dense_sym_extremes(s: &DenseMatrix) -> (f64, f64) {
    let m = DMatrix::from_row_slice(s.rows, s.cols, &s.data);
    let ev = m.symmetric_eigen().eigenvalues;
    (ev.min(), ev.max())
}

pub(crate) fn norm2(x: &[f64]) -> f64 {
    x.iter().map(|v| v * v).sum::<f64>().sqrt()
}

pub(crate) fn normalize(x: &mut [f64]) {
    let n = norm2(x);
    if n > 0.0 {
        x.iter_mut().for_each(|v| *v /= n);
    }
}

/// `B = diag(Φ_1, …, Φ_L)` with every block `m × d`.
#[derive(Debug, Clone, PartialEq)]
pub struct BlockDiagonalMatrix {
    blocks: Vec<DenseMatrix>,
    m: usize,
    d: usize,
}

impl BlockDiagonalMatrix {
    pub fn new(blocks: Vec<DenseMatrix>) -> Result<Self> {
        let first = blocks
            .first()
            .ok_or_else(|| Error::Argument("at least one block required".into()))?;
        let (m, d) = (first.rows(), first.cols());
        for b in &blocks {
            if b.rows() != m || b.cols() != d {
                return Err(Error::Argument(format!(
                    "blocks must share shape {m}x{d}, found {}x{}",
                    b.rows(),
                    b.cols()
                )));
            }
        }
        Ok(Self { blocks, m, d })
    }

    pub fn blocks(&self) -> &[DenseMatrix] {
        &self.blocks
    }

    pub fn num_blocks(&self) -> usize {
        self.blocks.len()
    }

    /// Rows per block.
    pub fn m(&self) -> usize {
        self.m
    }

    /// Columns per block.
    pub fn d(&self) -> usize {
        self.d
    }

    pub fn shape(&self) -> (usize, usize) {
        (self.m * self.blocks.len(), self.d * self.blocks.len())
    }

    pub fn to_dense(&self) -> DenseMatrix {
        let (r, c) = self.shape();
        let mut out = DenseMatrix::zeros(r, c);
        for (l, b) in self.blocks.iter().enumerate() {
            for i in 0..self.m {
                for j in 0..self.d {
                    out.set(l * self.m + i, l * self.d + j, b.get(i, j));
                }
            }
        }
        out
    }

    pub fn scaled(&self, c: f64) -> Self {
        Self {
            blocks: self.blocks.iter().map(|b| b.scaled(c)).collect(),
            m: self.m,
            d: self.d,
        }
    }

    /// `‖B‖_{2→2} = max_l ‖Φ_l‖_{2→2}`.
    pub fn opnorm_2_2(&self, tol: f64) -> Result<f64> {
        self.blocks
            .iter()
            .map(|b| opnorm_2_2(b, tol))
            .try_fold(0.0f64, |acc, n| Ok(acc.max(n?)))
    }

    pub(crate) fn apply_into(&self, x: &[f64], out: &mut [f64]) {
        for (l, b) in self.blocks.iter().enumerate() {
            b.matvec_into(&x[l * self.d..(l + 1) * self.d], &mut out[l * self.m..(l + 1) * self.m]);
        }
    }

    pub(crate) fn apply_t_into(&self, y: &[f64], out: &mut [f64]) {
        for (l, b) in self.blocks.iter().enumerate() {
            b.matvec_t_into(&y[l * self.m..(l + 1) * self.m], &mut out[l * self.d..(l + 1) * self.d]);
        }
    }

    pub fn apply_t(&self, y: &[f64]) -> Result<Vec<f64>> {
        check_len(self.m * self.blocks.len(), y.len())?;
        let mut out = vec![0.0; self.d * self.blocks.len()];
        self.apply_t_into(y, &mut out);
        Ok(out)
    }
}

/// `B x`, computed block by block.
pub fn block_apply(b: &BlockDiagonalMatrix, x: &[f64]) -> Result<Vec<f64>> {
    check_len(b.d * b.blocks.len(), x.len())?;
    let mut out = vec![0.0; b.m * b.blocks.len()];
    b.apply_into(x, &mut out);
    Ok(out)
}

/// `L` independent `m × d` blocks with i.i.d. entries from `spec`, rescaled to
/// unit variance. Block `l` is drawn from `stream.substream(l)`.
pub fn random_block_diagonal(
    spec: &DistributionSpec,
    num_blocks: usize,
    m: usize,
    d: usize,
    stream: RngStream,
) -> Result<BlockDiagonalMatrix> {
    if num_blocks == 0 || m == 0 || d == 0 {
        return Err(Error::Argument("L, m and d must all be >= 1".into()));
    }
    let sampler = spec.sampler()?;
    let unit = 1.0 / spec.variance().sqrt();
    let blocks = (0..num_blocks)
        .map(|l| {
            let mut rng = stream.substream(l as u64).rng();
            let data = (0..m * d).map(|_| unit * sampler.draw(&mut rng)).collect();
            DenseMatrix { rows: m, cols: d, data }
        })
        .collect();
    BlockDiagonalMatrix::new(blocks)
}

/// Real orthogonal `D × D` matrix.
#[derive(Debug, Clone, PartialEq)]
pub struct OrthogonalBasis {
    matrix: DenseMatrix,
}

/// Max-entry tolerance on `ΨᵀΨ - I`.
pub const ORTHOGONALITY_TOL: f64 = 1e-10;

impl OrthogonalBasis {
    pub fn new(matrix: DenseMatrix) -> Result<Self> {
        if matrix.rows() != matrix.cols() {
            return Err(Error::Argument("basis must be square".into()));
        }
        let err = orthogonality_error(&matrix);
        if err > ORTHOGONALITY_TOL {
            return Err(Error::Argument(format!(
                "basis not orthogonal: max |ΨᵀΨ - I| = {err:e}"
            )));
        }
        Ok(Self { matrix })
    }

    pub fn identity(dim: usize) -> Self {
        Self {
            matrix: DenseMatrix::identity(dim),
        }
    }

    pub fn dim(&self) -> usize {
        self.matrix.rows()
    }

    pub fn matrix(&self) -> &DenseMatrix {
        &self.matrix
    }

    pub fn apply(&self, x: &[f64]) -> Result<Vec<f64>> {
        self.matrix.matvec(x)
    }

    pub fn apply_t(&self, y: &[f64]) -> Result<Vec<f64>> {
        self.matrix.matvec_t(y)
    }

    /// Rows `l·d .. (l+1)·d` of `Ψ`, i.e. the partial expansion `Ψ_l`.
    pub fn row_block(&self, l: usize, d: usize) -> &[f64] {
        let n = self.dim();
        &self.matrix.data()[l * d * n..(l + 1) * d * n]
    }
}

/// `max |ΨᵀΨ - I|` entrywise.
pub fn orthogonality_error(psi: &DenseMatrix) -> f64 {
    let g = psi.gram();
    let n = g.rows();
    let mut err = 0.0f64;
    for i in 0..n {
        for j in 0..n {
            let target = if i == j { 1.0 } else { 0.0 };
            err = err.max((g.get(i, j) - target).abs());
        }
    }
    err
}

/// Haar-distributed orthogonal matrix: QR of a Gaussian matrix with the
/// signs of `diag(R)` folded into `Q`.
pub fn haar_orthogonal(dim: usize, stream: RngStream) -> Result<OrthogonalBasis> {
    if dim == 0 {
        return Err(Error::Argument("dimension must be >= 1".into()));
    }
    let mut rng = stream.rng();
    let gauss = DMatrix::<f64>::from_fn(dim, dim, |_, _| rng.sample(StandardNormal));
    let qr = gauss.qr();
    let q = qr.q();
    let r = qr.r();
    let mut data = Vec::with_capacity(dim * dim);
    for i in 0..dim {
        for j in 0..dim {
            let sign = if r[(j, j)] < 0.0 { -1.0 } else { 1.0 };
            data.push(q[(i, j)] * sign);
        }
    }
    OrthogonalBasis::new(DenseMatrix::new(dim, dim, data)?)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn m(rows: &[&[f64]]) -> DenseMatrix {
        DenseMatrix::from_rows(&rows.iter().map(|r| r.to_vec()).collect::<Vec<_>>()).unwrap()
    }

    /// Cyclic Jacobi eigenvalues, kept here as an independent reference.
    fn jacobi_eigenvalues(s: &DenseMatrix) -> Vec<f64> {
        let n = s.rows();
        let mut a = s.clone();
        for _sweep in 0..100 {
            let off: f64 = (0..n)
                .flat_map(|i| (0..n).filter(move |&j| j != i).map(move |j| (i, j)))
                .map(|(i, j)| a.get(i, j).powi(2))
                .sum();
            if off < 1e-26 {
                break;
            }
            for p in 0..n {
                for q in p + 1..n {
                    let apq = a.get(p, q);
                    if apq.abs() < 1e-300 {
                        continue;
                    }
                    let theta = (a.get(q, q) - a.get(p, p)) / (2.0 * apq);
                    let t = theta.signum() / (theta.abs() + (theta * theta + 1.0).sqrt());
                    let t = if theta == 0.0 { 1.0 } else { t };
                    let c = 1.0 / (t * t + 1.0).sqrt();
                    let sn = t * c;
                    for k in 0..n {
                        let akp = a.get(k, p);
                        let akq = a.get(k, q);
                        a.set(k, p, c * akp - sn * akq);
                        a.set(k, q, sn * akp + c * akq);
                    }
                    for k in 0..n {
                        let apk = a.get(p, k);
                        let aqk = a.get(q, k);
                        a.set(p, k, c * apk - sn * aqk);
                        a.set(q, k, sn * apk + c * aqk);
                    }
                }
            }
        }
        let mut ev: Vec<f64> = (0..n).map(|i| a.get(i, i)).collect();
        ev.sort_by(|x, y| x.total_cmp(y));
        ev
    }

    #[test]
    fn clustered_extremes() {
        // Q·diag(λ)·Qᵀ with the two smallest eigenvalues 1e-4 apart
        let lam = [0.7021, 0.7022, 0.78, 0.84, 1.02, 1.1, 1.3, 1.5457];
        let q = haar_orthogonal(8, RngStream::new(21, 0)).unwrap();
        let mut s = DenseMatrix::zeros(8, 8);
        for i in 0..8 {
            for j in 0..8 {
                let v: f64 = (0..8)
                    .map(|k| q.matrix().get(i, k) * lam[k] * q.matrix().get(j, k))
                    .sum();
                s.set(i, j, v);
            }
        }
        let s = s.scaled(0.5).sub(&s.transpose().scaled(-0.5)).unwrap();
        let (lo, hi) = extreme_eigen_sym(&s, 1e-8).unwrap();
        let ev = jacobi_eigenvalues(&s);
        assert!(
            (lo - ev[0]).abs() < 1e-9 && (hi - ev[7]).abs() < 1e-9,
            "{lo} {hi} {ev:?}"
        );
    }

    #[test]
    fn frobenius_examples() {
        assert!((frobenius_norm(&DenseMatrix::identity(3)) - 3f64.sqrt()).abs() < 1e-15);
        assert_eq!(frobenius_norm(&DenseMatrix::zeros(2, 5)), 0.0);
        assert_eq!(frobenius_norm(&m(&[&[3.0, 4.0]])), 5.0);
    }

    #[test]
    fn opnorm_examples() {
        let tol = POWER_TOL;
        assert!((opnorm_2_2(&DenseMatrix::diagonal(&[1.0, 3.0]), tol).unwrap() - 3.0).abs() < 1e-8);
        assert!((opnorm_2_2(&DenseMatrix::identity(5), tol).unwrap() - 1.0).abs() < 1e-8);
        // eigenvalues of [[1,1],[1,1]] solve λ² - 2λ = 0
        assert!((opnorm_2_2(&m(&[&[1.0, 1.0], &[1.0, 1.0]]), tol).unwrap() - 2.0).abs() < 1e-8);
        assert_eq!(opnorm_2_2(&DenseMatrix::zeros(3, 2), tol).unwrap(), 0.0);
        assert!(opnorm_2_2(&DenseMatrix::identity(2), 0.0).is_err());
    }

    #[test]
    fn opnorm_2_inf_examples() {
        assert_eq!(opnorm_2_inf(&DenseMatrix::identity(3)), 1.0);
        assert_eq!(opnorm_2_inf(&m(&[&[3.0, 4.0], &[0.0, 1.0]])), 5.0);
        assert_eq!(opnorm_2_inf(&DenseMatrix::zeros(4, 4)), 0.0);
    }

    #[test]
    fn opnorm_2_inf_certificate() {
        let mut rng = RngStream::new(3, 3).rng();
        let a = DenseMatrix::new(5, 4, (0..20).map(|_| rng.sample(StandardNormal)).collect()).unwrap();
        let closed = opnorm_2_inf(&a);
        let mut brute = 0.0f64;
        for _ in 0..10_000 {
            let mut x: Vec<f64> = (0..4).map(|_| rng.sample(StandardNormal)).collect();
            normalize(&mut x);
            let y = a.matvec(&x).unwrap();
            brute = brute.max(y.iter().fold(0.0f64, |m, v| m.max(v.abs())));
        }
        assert!(brute <= closed + 1e-12);
        let best = (0..5)
            .max_by(|&i, &j| norm2(a.row(i)).total_cmp(&norm2(a.row(j))))
            .unwrap();
        let mut x = a.row(best).to_vec();
        normalize(&mut x);
        let y = a.matvec(&x).unwrap();
        let attained = y.iter().fold(0.0f64, |m, v| m.max(v.abs()));
        assert!((attained - closed).abs() < 1e-12);
    }

    #[test]
    fn opnorm_below_frobenius_equal_for_rank_one() {
        let mut rng = RngStream::new(4, 4).rng();
        for _ in 0..20 {
            let a = DenseMatrix::new(4, 6, (0..24).map(|_| rng.sample(StandardNormal)).collect()).unwrap();
            assert!(opnorm_2_2(&a, POWER_TOL).unwrap() <= frobenius_norm(&a) + 1e-12);
            let u: Vec<f64> = (0..4).map(|_| rng.sample(StandardNormal)).collect();
            let v: Vec<f64> = (0..3).map(|_| rng.sample(StandardNormal)).collect();
            let r1 = DenseMatrix::outer(&u, &v);
            let f = frobenius_norm(&r1);
            assert!((opnorm_2_2(&r1, POWER_TOL).unwrap() - f).abs() < 1e-8 * f);
        }
    }

    #[test]
    fn eigen_examples() {
        let (lo, hi) = extreme_eigen_sym(&DenseMatrix::diagonal(&[0.5, 2.0]), POWER_TOL).unwrap();
        assert!((lo - 0.5).abs() < 1e-8 && (hi - 2.0).abs() < 1e-8);
        let (lo, hi) = extreme_eigen_sym(&DenseMatrix::identity(4), POWER_TOL).unwrap();
        assert!((lo - 1.0).abs() < 1e-12 && (hi - 1.0).abs() < 1e-12);
        // [[2,1],[1,2]]: (2-λ)² = 1
        let (lo, hi) = extreme_eigen_sym(&m(&[&[2.0, 1.0], &[1.0, 2.0]]), POWER_TOL).unwrap();
        assert!((lo - 1.0).abs() < 1e-8 && (hi - 3.0).abs() < 1e-8);
        // indefinite, with the all-ones vector an eigenvector of the smaller eigenvalue
        let (lo, hi) = extreme_eigen_sym(&m(&[&[-1.0, 3.0], &[3.0, -1.0]]), POWER_TOL).unwrap();
        assert!((lo + 4.0).abs() < 1e-8 && (hi - 2.0).abs() < 1e-8, "{lo} {hi}");
        assert!(extreme_eigen_sym(&m(&[&[1.0, 2.0], &[0.0, 1.0]]), POWER_TOL).is_err());
    }

    #[test]
    fn eigen_matches_closed_form_3x3() {
        // tridiagonal [[2,-1,0],[-1,2,-1],[0,-1,2]] has eigenvalues 2 ± √2 and 2
        let s = m(&[&[2.0, -1.0, 0.0], &[-1.0, 2.0, -1.0], &[0.0, -1.0, 2.0]]);
        let (lo, hi) = extreme_eigen_sym(&s, POWER_TOL).unwrap();
        assert!((lo - (2.0 - 2f64.sqrt())).abs() < 1e-8);
        assert!((hi - (2.0 + 2f64.sqrt())).abs() < 1e-8);
    }

    #[test]
    fn eigen_matches_jacobi() {
        let mut rng = RngStream::new(5, 5).rng();
        for n in [3, 8, 17, 40, 64] {
            let mut s = DenseMatrix::zeros(n, n);
            for i in 0..n {
                for j in 0..=i {
                    let v: f64 = rng.sample(StandardNormal);
                    s.set(i, j, v);
                    s.set(j, i, v);
                }
            }
            let ev = jacobi_eigenvalues(&s);
            let (lo, hi) = extreme_eigen_sym(&s, 1e-9).unwrap();
            let scale = ev[n - 1].abs().max(ev[0].abs());
            assert!((lo - ev[0]).abs() < 1e-8 * scale, "n={n}: {lo} vs {}", ev[0]);
            assert!((hi - ev[n - 1]).abs() < 1e-8 * scale, "n={n}: {hi} vs {}", ev[n - 1]);
        }
    }

    #[test]
    fn block_apply_examples() {
        let b = BlockDiagonalMatrix::new(vec![DenseMatrix::identity(2), DenseMatrix::identity(2)]).unwrap();
        assert_eq!(
            block_apply(&b, &[1.0, 2.0, 3.0, 4.0]).unwrap(),
            vec![1.0, 2.0, 3.0, 4.0]
        );
        let single = BlockDiagonalMatrix::new(vec![m(&[&[2.0]])]).unwrap();
        assert_eq!(block_apply(&single, &[3.0]).unwrap(), vec![6.0]);
        assert!(matches!(block_apply(&b, &[1.0]), Err(Error::DimensionMismatch { .. })));
        assert!(BlockDiagonalMatrix::new(vec![DenseMatrix::identity(2), DenseMatrix::identity(3)]).is_err());
    }

    #[test]
    fn block_apply_matches_dense() {
        let b = random_block_diagonal(&DistributionSpec::standard_gaussian(), 2, 3, 4, RngStream::new(6, 0)).unwrap();
        let x: Vec<f64> = (0..8).map(|i| (i as f64 * 0.7).sin()).collect();
        let fast = block_apply(&b, &x).unwrap();
        let dense = b.to_dense().matvec(&x).unwrap();
        for (a, c) in fast.iter().zip(&dense) {
            assert!((a - c).abs() < 1e-12);
        }
        let y: Vec<f64> = (0..6).map(|i| i as f64 - 2.0).collect();
        let t_fast = b.apply_t(&y).unwrap();
        let t_dense = b.to_dense().matvec_t(&y).unwrap();
        for (a, c) in t_fast.iter().zip(&t_dense) {
            assert!((a - c).abs() < 1e-12);
        }
    }

    #[test]
    fn block_opnorm_is_max_block_norm() {
        for seed in 0..5 {
            let b = random_block_diagonal(&DistributionSpec::standard_gaussian(), 3, 4, 3, RngStream::new(seed, 1))
                .unwrap();
            let dense = opnorm_2_2(&b.to_dense(), POWER_TOL).unwrap();
            assert!((b.opnorm_2_2(POWER_TOL).unwrap() - dense).abs() < 1e-7 * dense);
        }
    }

    #[test]
    fn random_block_diagonal_properties() {
        let b = random_block_diagonal(&DistributionSpec::Rademacher, 2, 1, 2, RngStream::new(1, 0)).unwrap();
        assert_eq!(b.num_blocks(), 2);
        assert!(b.blocks().iter().all(|blk| blk.data().iter().all(|v| v.abs() == 1.0)));
        let again = random_block_diagonal(&DistributionSpec::Rademacher, 2, 1, 2, RngStream::new(1, 0)).unwrap();
        assert_eq!(b, again);

        let spec = DistributionSpec::SymmetricWeibull { alpha: 1.0 };
        let big = random_block_diagonal(&spec, 10, 100, 100, RngStream::new(2, 0)).unwrap();
        let mut mom = crate::stats::Moments::default();
        for blk in big.blocks() {
            for v in blk.data() {
                mom.push(v * v);
            }
        }
        assert_eq!(mom.n, 100_000);
        assert!((mom.mean() - 1.0).abs() < 3.0 * mom.std_error(), "{}", mom.mean());
        assert!(random_block_diagonal(&spec, 0, 1, 1, RngStream::new(0, 0)).is_err());
    }

    #[test]
    fn haar_properties() {
        let one = haar_orthogonal(1, RngStream::new(1, 1)).unwrap();
        assert_eq!(one.matrix().get(0, 0).abs(), 1.0);
        let five = haar_orthogonal(5, RngStream::new(1, 2)).unwrap();
        assert!(orthogonality_error(five.matrix()) <= 1e-10);
        assert_eq!(five, haar_orthogonal(5, RngStream::new(1, 2)).unwrap());
        assert!(OrthogonalBasis::new(DenseMatrix::diagonal(&[1.0, 2.0])).is_err());
    }

    #[test]
    fn text_round_trip() {
        let a = m(&[&[1.5, -2.0, 0.125], &[1e-7, 3.0, 4.0]]);
        let back = DenseMatrix::from_text(&a.to_text()).unwrap();
        assert_eq!(a, back);
        assert!(DenseMatrix::from_text("2 2\n1 2 3").is_err());
        assert!(DenseMatrix::from_text("1 1\nx").is_err());
    }
}
