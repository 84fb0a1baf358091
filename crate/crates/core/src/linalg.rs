//! Banded symmetric matrices and a shift-invert subspace eigensolver.
//!
//! Structured triangulations with lexicographic node numbering give matrices
//! whose bandwidth is one grid row, so a banded Cholesky factorization is
//! both exact and cheap at desk scale.

use nalgebra::{DMatrix, DVector, SymmetricEigen};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};

/// Symmetric matrix stored as its lower band.
#[derive(Debug, Clone)]
pub struct BandMatrix {
    n: usize,
    bw: usize,
    data: Vec<f64>,
}

impl BandMatrix {
    pub fn zeros(n: usize, bw: usize) -> Self {
        BandMatrix {
            n,
            bw,
            data: vec![0.0; n * (bw + 1)],
        }
    }

    pub fn dim(&self) -> usize {
        self.n
    }

    pub fn bandwidth(&self) -> usize {
        self.bw
    }

    #[inline]
    fn idx(&self, i: usize, j: usize) -> usize {
        i * (self.bw + 1) + (j + self.bw - i)
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        let (i, j) = if i >= j { (i, j) } else { (j, i) };
        if i - j > self.bw {
            0.0
        } else {
            self.data[self.idx(i, j)]
        }
    }

    /// Adds `v` to entry `(i, j)` (and implicitly `(j, i)`).
    pub fn add(&mut self, i: usize, j: usize, v: f64) {
        let (i, j) = if i >= j { (i, j) } else { (j, i) };
        assert!(i - j <= self.bw, "entry ({i},{j}) outside band {}", self.bw);
        let k = self.idx(i, j);
        self.data[k] += v;
    }

    /// Principal submatrix on the (sorted) indices `keep`.
    pub fn restrict(&self, keep: &[usize]) -> BandMatrix {
        let mut bw = 0;
        for (a, &i) in keep.iter().enumerate() {
            for (b, &j) in keep[..a].iter().enumerate().rev() {
                if i - j > self.bw {
                    break;
                }
                if self.get(i, j) != 0.0 {
                    bw = bw.max(a - b);
                }
            }
        }
        let mut out = BandMatrix::zeros(keep.len(), bw);
        for (a, &i) in keep.iter().enumerate() {
            for b in a.saturating_sub(bw)..=a {
                let v = self.get(i, keep[b]);
                if v != 0.0 {
                    let k = out.idx(a, b);
                    out.data[k] = v;
                }
            }
        }
        out
    }

    pub fn mul_vec(&self, x: &[f64]) -> Vec<f64> {
        let mut y = vec![0.0; self.n];
        for i in 0..self.n {
            let lo = i.saturating_sub(self.bw);
            let row = &self.data[i * (self.bw + 1)..(i + 1) * (self.bw + 1)];
            let mut acc = 0.0;
            for j in lo..i {
                let a = row[j + self.bw - i];
                acc += a * x[j];
                y[j] += a * x[i];
            }
            acc += row[self.bw] * x[i];
            y[i] += acc;
        }
        y
    }

    /// `x^T A y`.
    pub fn inner(&self, x: &[f64], y: &[f64]) -> f64 {
        let ay = self.mul_vec(y);
        x.iter().zip(&ay).map(|(a, b)| a * b).sum()
    }

    /// `self + s * other`; the result has the larger of the two bandwidths.
    pub fn add_scaled(&self, s: f64, other: &BandMatrix) -> BandMatrix {
        assert_eq!(self.n, other.n);
        if self.bw == other.bw {
            let data = self.data.iter().zip(&other.data).map(|(a, b)| a + s * b).collect();
            return BandMatrix { n: self.n, bw: self.bw, data };
        }
        let bw = self.bw.max(other.bw);
        let mut out = BandMatrix::zeros(self.n, bw);
        for i in 0..self.n {
            for j in i.saturating_sub(bw)..=i {
                let k = out.idx(i, j);
                out.data[k] = self.get(i, j) + s * other.get(i, j);
            }
        }
        out
    }

    pub fn row_sums(&self) -> Vec<f64> {
        self.mul_vec(&vec![1.0; self.n])
    }

    pub fn to_dense(&self) -> DMatrix<f64> {
        DMatrix::from_fn(self.n, self.n, |i, j| self.get(i, j))
    }

    pub fn cholesky(&self) -> Result<BandCholesky> {
        let (n, bw) = (self.n, self.bw);
        let mut l = self.data.clone();
        let idx = |i: usize, j: usize| i * (bw + 1) + (j + bw - i);
        for j in 0..n {
            let lo = j.saturating_sub(bw);
            let mut d = l[idx(j, j)];
            for k in lo..j {
                let v = l[idx(j, k)];
                d -= v * v;
            }
            if d <= 0.0 || !d.is_finite() {
                return Err(Error::Numeric(format!(
                    "matrix not positive definite at pivot {j} (value {d:e})"
                )));
            }
            let d = d.sqrt();
            l[idx(j, j)] = d;
            for i in j + 1..(j + bw + 1).min(n) {
                let lo_i = i.saturating_sub(bw).max(lo);
                let mut s = l[idx(i, j)];
                for k in lo_i..j {
                    s -= l[idx(i, k)] * l[idx(j, k)];
                }
                l[idx(i, j)] = s / d;
            }
        }
        Ok(BandCholesky { n, bw, l })
    }
}

/// Lower-triangular banded Cholesky factor `A = L L^T`.
#[derive(Debug, Clone)]
pub struct BandCholesky {
    n: usize,
    bw: usize,
    l: Vec<f64>,
}

impl BandCholesky {
    #[inline]
    fn at(&self, i: usize, j: usize) -> f64 {
        self.l[i * (self.bw + 1) + (j + self.bw - i)]
    }

    pub fn solve(&self, b: &[f64]) -> Vec<f64> {
        let mut y = b.to_vec();
        for i in 0..self.n {
            let lo = i.saturating_sub(self.bw);
            let mut s = y[i];
            for k in lo..i {
                s -= self.at(i, k) * y[k];
            }
            y[i] = s / self.at(i, i);
        }
        for i in (0..self.n).rev() {
            let hi = (i + self.bw + 1).min(self.n);
            let mut s = y[i];
            for k in i + 1..hi {
                s -= self.at(k, i) * y[k];
            }
            y[i] = s / self.at(i, i);
        }
        y
    }
}

/// Eigenpairs of `K x = λ M x` sorted by ascending eigenvalue, with
/// `M`-orthonormal eigenvectors stored as columns.
#[derive(Debug, Clone)]
pub struct EigenPairs {
    pub values: Vec<f64>,
    pub vectors: DMatrix<f64>,
    pub residuals: Vec<f64>,
    pub iterations: usize,
}

#[derive(Debug, Clone, Copy)]
pub struct EigenOptions {
    pub tolerance: f64,
    pub max_iterations: usize,
    pub seed: u64,
}

impl Default for EigenOptions {
    fn default() -> Self {
        EigenOptions {
            tolerance: 1e-10,
            max_iterations: 2000,
            seed: 0x5eed,
        }
    }
}

/// Smallest `nev` eigenpairs of the symmetric pencil `(K, M)` by shift-invert
/// subspace iteration with Rayleigh-Ritz projection.
///
/// `shift` must lie strictly below the smallest eigenvalue so that
/// `K - shift M` is positive definite.
pub fn smallest_eigenpairs(
    k: &BandMatrix,
    m: &BandMatrix,
    nev: usize,
    shift: f64,
    opts: EigenOptions,
) -> Result<EigenPairs> {
    let n = k.dim();
    if nev == 0 {
        return Ok(EigenPairs {
            values: vec![],
            vectors: DMatrix::zeros(n, 0),
            residuals: vec![],
            iterations: 0,
        });
    }
    if nev > n {
        return Err(Error::Config(format!(
            "requested {nev} eigenpairs of a {n}-dimensional problem"
        )));
    }
    let block = (2 * nev).max(nev + 8).min(n);
    let factor = k.add_scaled(-shift, m).cholesky()?;

    let mut rng = ChaCha8Rng::seed_from_u64(opts.seed);
    let mut x = DMatrix::from_fn(n, block, |_, _| rng.gen::<f64>() - 0.5);
    let mut values = vec![0.0; block];
    let mut residuals = vec![f64::INFINITY; nev];

    for iter in 1..=opts.max_iterations {
        let mut y = DMatrix::zeros(n, block);
        for c in 0..block {
            let mx = m.mul_vec(x.column(c).as_slice());
            let sol = factor.solve(&mx);
            y.column_mut(c).copy_from_slice(&sol);
        }
        let ky = apply_columns(k, &y);
        let my = apply_columns(m, &y);
        let kr = symmetrize(y.transpose() * &ky);
        let mr = symmetrize(y.transpose() * &my);
        let (theta, q) = dense_generalized(&kr, &mr)?;
        x = &y * &q;
        values = theta;

        let kx = &ky * &q;
        let mx = &my * &q;
        let scale = values[nev - 1].abs().max(shift.abs()).max(f64::MIN_POSITIVE);
        for c in 0..nev {
            let r = kx.column(c) - mx.column(c) * values[c];
            let denom = (values[c].abs() + scale) * mx.column(c).norm();
            residuals[c] = r.norm() / denom;
        }
        if residuals.iter().all(|r| *r <= opts.tolerance) {
            let mut vectors = x.columns(0, nev).into_owned();
            fix_signs(&mut vectors);
            return Ok(EigenPairs {
                values: values[..nev].to_vec(),
                vectors,
                residuals,
                iterations: iter,
            });
        }
    }
    let worst = residuals.iter().cloned().fold(0.0, f64::max);
    Err(Error::Numeric(format!(
        "eigensolver did not converge in {} iterations (worst relative residual {worst:e}, eigenvalue estimates {:?})",
        opts.max_iterations,
        &values[..nev]
    )))
}

fn apply_columns(a: &BandMatrix, x: &DMatrix<f64>) -> DMatrix<f64> {
    let mut out = DMatrix::zeros(x.nrows(), x.ncols());
    for c in 0..x.ncols() {
        let v = a.mul_vec(x.column(c).as_slice());
        out.column_mut(c).copy_from_slice(&v);
    }
    out
}

fn symmetrize(a: DMatrix<f64>) -> DMatrix<f64> {
    (&a + a.transpose()) * 0.5
}

/// Dense generalized symmetric eigenproblem; eigenvectors are `B`-orthonormal
/// and eigenvalues ascending.
pub fn dense_generalized(a: &DMatrix<f64>, b: &DMatrix<f64>) -> Result<(Vec<f64>, DMatrix<f64>)> {
    let chol = b
        .clone()
        .cholesky()
        .ok_or_else(|| Error::Numeric("Rayleigh-Ritz mass matrix is singular".into()))?;
    let l = chol.l();
    let linv = l
        .clone()
        .try_inverse()
        .ok_or_else(|| Error::Numeric("singular Cholesky factor".into()))?;
    let c = symmetrize(&linv * a * linv.transpose());
    let eig = SymmetricEigen::new(c);
    let mut order: Vec<usize> = (0..eig.eigenvalues.len()).collect();
    order.sort_by(|&i, &j| eig.eigenvalues[i].total_cmp(&eig.eigenvalues[j]));
    let vals = order.iter().map(|&i| eig.eigenvalues[i]).collect();
    let z = DMatrix::from_fn(a.nrows(), order.len(), |r, c| eig.eigenvectors[(r, order[c])]);
    let v = linv.transpose() * z;
    Ok((vals, v))
}

/// Flips each column so that its largest-magnitude entry is positive.
pub fn fix_signs(v: &mut DMatrix<f64>) {
    for mut col in v.column_iter_mut() {
        let mut best = 0;
        for (i, x) in col.iter().enumerate() {
            if x.abs() > col[best].abs() + 1e-12 * col[best].abs() {
                best = i;
            }
        }
        if col[best] < 0.0 {
            col.neg_mut();
        }
    }
}

pub fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

pub fn to_dvector(v: &[f64]) -> DVector<f64> {
    DVector::from_column_slice(v)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn laplacian_1d(n: usize) -> (BandMatrix, BandMatrix) {
        let mut k = BandMatrix::zeros(n, 1);
        let mut m = BandMatrix::zeros(n, 1);
        for i in 0..n {
            k.add(i, i, 2.0);
            m.add(i, i, 1.0);
            if i + 1 < n {
                k.add(i + 1, i, -1.0);
            }
        }
        (k, m)
    }

    #[test]
    fn cholesky_solves_band_system() {
        let (k, _) = laplacian_1d(12);
        let x: Vec<f64> = (0..12).map(|i| (i as f64).sin()).collect();
        let b = k.mul_vec(&x);
        let sol = k.cholesky().unwrap().solve(&b);
        for (a, b) in sol.iter().zip(&x) {
            assert!((a - b).abs() < 1e-12);
        }
    }

    #[test]
    fn cholesky_rejects_indefinite() {
        let mut a = BandMatrix::zeros(2, 1);
        a.add(0, 0, 1.0);
        a.add(1, 1, 1.0);
        a.add(1, 0, 2.0);
        assert!(a.cholesky().is_err());
    }

    #[test]
    fn subspace_iteration_matches_closed_form() {
        // Eigenvalues of tridiag(-1, 2, -1): 2 - 2 cos(jπ/(n+1)).
        let n = 60;
        let (k, m) = laplacian_1d(n);
        let pairs = smallest_eigenpairs(&k, &m, 5, -0.01, EigenOptions::default()).unwrap();
        for (j, v) in pairs.values.iter().enumerate() {
            let exact = 2.0 - 2.0 * ((j + 1) as f64 * std::f64::consts::PI / (n + 1) as f64).cos();
            assert!((v - exact).abs() < 1e-10 * exact.max(1.0), "{v} vs {exact}");
        }
        let gram = pairs.vectors.transpose() * m.to_dense() * &pairs.vectors;
        assert!((gram - DMatrix::identity(5, 5)).amax() < 1e-10);
    }

    #[test]
    fn dense_and_subspace_agree_on_generalized_pencil() {
        let n = 30;
        let (k, _) = laplacian_1d(n);
        let mut m = BandMatrix::zeros(n, 1);
        for i in 0..n {
            m.add(i, i, 4.0 + (i % 3) as f64);
            if i + 1 < n {
                m.add(i + 1, i, 1.0);
            }
        }
        let (dense, _) = dense_generalized(&k.to_dense(), &m.to_dense()).unwrap();
        let pairs = smallest_eigenpairs(&k, &m, 4, -1e-3, EigenOptions::default()).unwrap();
        for j in 0..4 {
            assert!((dense[j] - pairs.values[j]).abs() < 1e-10 * dense[j]);
        }
    }
}
