//! Band-stored matrices, LU factorization with partial pivoting, and a
//! bordered solver for band systems augmented by a few dense rows/columns.

use crate::error::{Result, SolverError};

/// Square band matrix of dimension `dim` with `kl` subdiagonals and `ku`
/// superdiagonals. Storage is LAPACK-style column panels with `kl` extra
/// superdiagonal rows to absorb pivoting fill-in: entry `(i, j)` lives at
/// panel row `kl + ku + i - j` of column `j`.
#[derive(Debug, Clone)]
pub struct BandMatrix {
    dim: usize,
    kl: usize,
    ku: usize,
    width: usize,
    data: Vec<f64>,
}

impl BandMatrix {
    pub fn zeros(dim: usize, kl: usize, ku: usize) -> Self {
        let width = 2 * kl + ku + 1;
        BandMatrix { dim, kl, ku, width, data: vec![0.0; width * dim] }
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn bandwidths(&self) -> (usize, usize) {
        (self.kl, self.ku)
    }

    #[inline]
    fn slot(&self, i: usize, j: usize) -> usize {
        debug_assert!(i < self.dim && j < self.dim);
        // Factored matrices use the widened upper band kl + ku.
        debug_assert!(j as isize - i as isize <= (self.kl + self.ku) as isize);
        debug_assert!(i as isize - j as isize <= self.kl as isize);
        j * self.width + (self.kl + self.ku + i - j)
    }

    #[inline]
    pub fn get(&self, i: usize, j: usize) -> f64 {
        let d = j as isize - i as isize;
        if d > self.ku as isize || -d > self.kl as isize {
            0.0
        } else {
            self.data[self.slot(i, j)]
        }
    }

    #[inline]
    pub fn set(&mut self, i: usize, j: usize, v: f64) {
        let slot = self.slot(i, j);
        self.data[slot] = v;
    }

    #[inline]
    pub fn add(&mut self, i: usize, j: usize, v: f64) {
        let slot = self.slot(i, j);
        self.data[slot] += v;
    }

    pub fn fill_zero(&mut self) {
        self.data.fill(0.0);
    }

    /// y = A x.
    pub fn matvec(&self, x: &[f64], y: &mut [f64]) {
        assert_eq!(x.len(), self.dim);
        assert_eq!(y.len(), self.dim);
        for i in 0..self.dim {
            let j0 = i.saturating_sub(self.kl);
            let j1 = (i + self.ku).min(self.dim - 1);
            let mut acc = 0.0;
            for j in j0..=j1 {
                acc += self.data[self.slot(i, j)] * x[j];
            }
            y[i] = acc;
        }
    }

    /// In-place LU factorization with partial pivoting. Returns the row
    /// permutation as pivot indices (`piv[k]` is the row swapped into
    /// position `k` at step `k`).
    pub fn factor(mut self) -> Result<BandLu> {
        let n = self.dim;
        let kl = self.kl;
        let ku = self.ku;
        let mut piv = vec![0usize; n];
        // After row interchanges the effective upper bandwidth grows to
        // kl + ku; the storage already reserves those rows.
        let ku_eff = kl + ku;
        for k in 0..n {
            // Pivot search in column k, rows k..=k+kl.
            let rmax = (k + kl).min(n - 1);
            let mut p = k;
            let mut vmax = self.data[self.slot(k, k)].abs();
            for r in k + 1..=rmax {
                let v = self.data[self.slot(r, k)].abs();
                if v > vmax {
                    vmax = v;
                    p = r;
                }
            }
            if vmax == 0.0 || !vmax.is_finite() {
                return Err(SolverError::SingularMatrix { column: k });
            }
            piv[k] = p;
            let cmax = (k + ku_eff).min(n - 1);
            if p != k {
                for j in k..=cmax {
                    let a = self.slot(k, j);
                    let b = self.slot(p, j);
                    self.data.swap(a, b);
                }
            }
            let pivot = self.data[self.slot(k, k)];
            let inv = 1.0 / pivot;
            for r in k + 1..=rmax {
                let slot_rk = self.slot(r, k);
                let mult = self.data[slot_rk] * inv;
                self.data[slot_rk] = mult;
                if mult != 0.0 {
                    for j in k + 1..=cmax {
                        let a_kj = self.data[self.slot(k, j)];
                        if a_kj != 0.0 {
                            let slot_rj = self.slot(r, j);
                            self.data[slot_rj] -= mult * a_kj;
                        }
                    }
                }
            }
        }
        Ok(BandLu { mat: self, piv })
    }
}

/// Factored band matrix.
#[derive(Debug, Clone)]
pub struct BandLu {
    mat: BandMatrix,
    piv: Vec<usize>,
}

impl BandLu {
    /// Solve A x = b in place.
    pub fn solve_in_place(&self, b: &mut [f64]) {
        let n = self.mat.dim;
        let kl = self.mat.kl;
        let ku_eff = self.mat.kl + self.mat.ku;
        assert_eq!(b.len(), n);
        // Forward: apply P and L.
        for k in 0..n {
            let p = self.piv[k];
            if p != k {
                b.swap(k, p);
            }
            let rmax = (k + kl).min(n - 1);
            let bk = b[k];
            if bk != 0.0 {
                for r in k + 1..=rmax {
                    b[r] -= self.mat.data[self.mat.slot(r, k)] * bk;
                }
            }
        }
        // Backward: U x = y.
        for k in (0..n).rev() {
            let cmax = (k + ku_eff).min(n - 1);
            let mut acc = b[k];
            for j in k + 1..=cmax {
                acc -= self.mat.data[self.mat.slot(k, j)] * b[j];
            }
            b[k] = acc / self.mat.data[self.mat.slot(k, k)];
        }
    }

    pub fn solve(&self, b: &[f64]) -> Vec<f64> {
        let mut x = b.to_vec();
        self.solve_in_place(&mut x);
        x
    }
}

/// Solve `J delta = -r` for a band system. The Newton update convention
/// (right-hand side negated) lives here so callers pass residuals directly.
pub fn solve_banded(jacobian: BandMatrix, residual: &[f64]) -> Result<Vec<f64>> {
    let lu = jacobian.factor()?;
    let mut rhs: Vec<f64> = residual.iter().map(|r| -r).collect();
    lu.solve_in_place(&mut rhs);
    Ok(rhs)
}

/// Band core augmented by `k` dense border columns and rows:
///
/// ```text
/// [ A  B ] [x]   [f]
/// [ Cᵀ D ] [y] = [g]
/// ```
///
/// with `A` banded (dim x dim), `B` dim x k, `C` dim x k, `D` k x k.
/// Solved by block elimination through the band LU of `A` with a dense
/// k x k Schur complement, followed by iterative refinement to recover
/// accuracy when `A` is nearly singular (which happens by construction for
/// the steady system close to a solution).
pub struct BorderedBandSystem {
    pub core: BandMatrix,
    /// Border columns, each of length `dim`.
    pub cols: Vec<Vec<f64>>,
    /// Border rows, each of length `dim`.
    pub rows: Vec<Vec<f64>>,
    /// Dense corner block, `rows.len()` x `cols.len()`, row-major.
    pub corner: Vec<f64>,
}

impl BorderedBandSystem {
    pub fn total_dim(&self) -> usize {
        self.core.dim() + self.cols.len()
    }

    /// y = M x for the full bordered operator.
    fn apply(&self, x: &[f64], y: &mut [f64]) {
        let n = self.core.dim();
        let k = self.cols.len();
        self.core.matvec(&x[..n], &mut y[..n]);
        for (c, col) in self.cols.iter().enumerate() {
            let xc = x[n + c];
            if xc != 0.0 {
                for i in 0..n {
                    y[i] += col[i] * xc;
                }
            }
        }
        for (r, row) in self.rows.iter().enumerate() {
            let mut acc = 0.0;
            for i in 0..n {
                acc += row[i] * x[i];
            }
            for c in 0..k {
                acc += self.corner[r * k + c] * x[n + c];
            }
            y[n + r] = acc;
        }
    }

    /// Solve `M z = rhs`. `rhs` has length `dim + k`.
    ///
    /// The core may be singular at exact solutions of bordered problems; in
    /// that case the factorization is retried with a small diagonal shift and
    /// the defect-correction loop below removes the perturbation.
    pub fn solve(&self, rhs: &[f64]) -> Result<Vec<f64>> {
        let n = self.core.dim();
        let k = self.cols.len();
        assert_eq!(self.rows.len(), k);
        assert_eq!(rhs.len(), n + k);
        let lu = match self.core.clone().factor() {
            Ok(lu) => lu,
            Err(SolverError::SingularMatrix { .. }) => {
                let mut scale = 0.0f64;
                for i in 0..n {
                    scale = scale.max(self.core.get(i, i).abs());
                }
                let shift = 1e-10 * scale.max(1.0);
                let mut shifted = self.core.clone();
                for i in 0..n {
                    shifted.add(i, i, shift);
                }
                shifted.factor()?
            }
            Err(e) => return Err(e),
        };

        let mut z = self.solve_with_lu(&lu, rhs)?;
        // Defect correction against the true bordered operator: restores
        // accuracy lost to a nearly singular core or the diagonal shift.
        let mut resid = vec![0.0; n + k];
        let scale = rhs.iter().fold(0.0f64, |a, b| a.max(b.abs())).max(1.0);
        let mut prev_worst = f64::INFINITY;
        for _ in 0..6 {
            self.apply(&z, &mut resid);
            let mut worst = 0.0f64;
            for i in 0..n + k {
                resid[i] = rhs[i] - resid[i];
                worst = worst.max(resid[i].abs());
            }
            if worst <= 1e-14 * scale || worst >= prev_worst {
                break;
            }
            prev_worst = worst;
            let correction = self.solve_with_lu(&lu, &resid)?;
            for i in 0..n + k {
                z[i] += correction[i];
            }
        }
        Ok(z)
    }

    fn solve_with_lu(&self, lu: &BandLu, rhs: &[f64]) -> Result<Vec<f64>> {
        let n = self.core.dim();
        let k = self.cols.len();
        // A w = f  and  A V = B.
        let mut w = rhs[..n].to_vec();
        lu.solve_in_place(&mut w);
        let mut v: Vec<Vec<f64>> = Vec::with_capacity(k);
        for col in &self.cols {
            let mut vc = col.clone();
            lu.solve_in_place(&mut vc);
            v.push(vc);
        }
        // Schur: (D - Cᵀ V) y = g - Cᵀ w.
        let mut schur = vec![0.0; k * k];
        let mut srhs = vec![0.0; k];
        for r in 0..k {
            let row = &self.rows[r];
            let mut acc = 0.0;
            for i in 0..n {
                acc += row[i] * w[i];
            }
            srhs[r] = rhs[n + r] - acc;
            for c in 0..k {
                let mut dot = 0.0;
                for i in 0..n {
                    dot += row[i] * v[c][i];
                }
                schur[r * k + c] = self.corner[r * k + c] - dot;
            }
        }
        let y = solve_dense_small(&mut schur, &mut srhs, k)?;
        // x = w - V y.
        let mut x = w;
        for c in 0..k {
            let yc = y[c];
            if yc != 0.0 {
                for i in 0..n {
                    x[i] -= v[c][i] * yc;
                }
            }
        }
        x.extend_from_slice(&y);
        Ok(x)
    }
}

/// Gaussian elimination with partial pivoting for the tiny Schur block.
fn solve_dense_small(a: &mut [f64], b: &mut [f64], k: usize) -> Result<Vec<f64>> {
    for col in 0..k {
        let mut p = col;
        let mut vmax = a[col * k + col].abs();
        for r in col + 1..k {
            let v = a[r * k + col].abs();
            if v > vmax {
                vmax = v;
                p = r;
            }
        }
        if vmax == 0.0 || !vmax.is_finite() {
            return Err(SolverError::SingularMatrix { column: col });
        }
        if p != col {
            for j in 0..k {
                a.swap(col * k + j, p * k + j);
            }
            b.swap(col, p);
        }
        let inv = 1.0 / a[col * k + col];
        for r in col + 1..k {
            let mult = a[r * k + col] * inv;
            if mult != 0.0 {
                for j in col..k {
                    a[r * k + j] -= mult * a[col * k + j];
                }
                b[r] -= mult * b[col];
            }
        }
    }
    for col in (0..k).rev() {
        let mut acc = b[col];
        for j in col + 1..k {
            acc -= a[col * k + j] * b[j];
        }
        b[col] = acc / a[col * k + col];
    }
    Ok(b.to_vec())
}

#[cfg(test)]
mod tests {
    use super::*;
    use nalgebra::{DMatrix, DVector};

    /// Deterministic pseudo-random stream, good enough for test matrices.
    struct Lcg(u64);
    impl Lcg {
        fn next_f64(&mut self) -> f64 {
            self.0 = self.0.wrapping_mul(6364136223846793005).wrapping_add(1442695040888963407);
            ((self.0 >> 11) as f64) / ((1u64 << 53) as f64) * 2.0 - 1.0
        }
    }

    fn random_band(dim: usize, kl: usize, ku: usize, seed: u64) -> BandMatrix {
        let mut rng = Lcg(seed);
        let mut a = BandMatrix::zeros(dim, kl, ku);
        for i in 0..dim {
            for j in i.saturating_sub(kl)..=(i + ku).min(dim - 1) {
                a.set(i, j, rng.next_f64());
            }
            // Keep it comfortably nonsingular.
            a.add(i, i, 4.0);
        }
        a
    }

    fn to_dense(a: &BandMatrix) -> DMatrix<f64> {
        let n = a.dim();
        DMatrix::from_fn(n, n, |i, j| a.get(i, j))
    }

    #[test]
    fn identity_solve_negates_rhs() {
        let mut a = BandMatrix::zeros(7, 2, 2);
        for i in 0..7 {
            a.set(i, i, 1.0);
        }
        let r: Vec<f64> = (0..7).map(|i| i as f64 - 3.0).collect();
        let delta = solve_banded(a, &r).unwrap();
        for i in 0..7 {
            assert_eq!(delta[i], -r[i]);
        }
    }

    #[test]
    fn zero_matrix_is_singular() {
        let a = BandMatrix::zeros(5, 1, 1);
        let r = vec![1.0; 5];
        assert!(matches!(solve_banded(a, &r), Err(SolverError::SingularMatrix { .. })));
    }

    #[test]
    fn random_band_systems_match_dense_oracle() {
        for (dim, kl, ku, seed) in
            [(10, 2, 3, 1u64), (60, 11, 11, 2), (33, 5, 1, 3), (48, 1, 7, 4), (60, 11, 11, 99)]
        {
            let a = random_band(dim, kl, ku, seed);
            let dense = to_dense(&a);
            let mut rng = Lcg(seed ^ 0xabcdef);
            let r: Vec<f64> = (0..dim).map(|_| rng.next_f64()).collect();

            let delta = solve_banded(a, &r).unwrap();
            let lu = dense.clone().lu();
            let expected = lu.solve(&DVector::from_vec(r.iter().map(|v| -v).collect())).unwrap();
            let mut err: f64 = 0.0;
            let mut rnorm: f64 = 0.0;
            for i in 0..dim {
                err = err.max((delta[i] - expected[i]).abs());
                rnorm = rnorm.max(r[i].abs());
            }
            // Residual check against the dense oracle.
            let resid = &dense * DVector::from_vec(delta.clone())
                + DVector::from_vec(r.clone());
            assert!(resid.amax() <= 1e-10 * rnorm, "dim={dim} seed={seed}: {}", resid.amax());
            assert!(err <= 1e-9, "solution mismatch {err}");
        }
    }

    #[test]
    fn pivoting_handles_zero_leading_diagonal() {
        // Diagonal starts at zero; partial pivoting must swap.
        let mut a = BandMatrix::zeros(4, 1, 1);
        a.set(0, 0, 0.0);
        a.set(0, 1, 2.0);
        a.set(1, 0, 1.0);
        a.set(1, 1, 1.0);
        a.set(1, 2, -1.0);
        a.set(2, 1, 3.0);
        a.set(2, 2, 0.5);
        a.set(2, 3, 1.0);
        a.set(3, 2, 1.0);
        a.set(3, 3, 1.0);
        let dense = to_dense(&a);
        let r = vec![1.0, -2.0, 0.5, 3.0];
        let delta = solve_banded(a, &r).unwrap();
        let resid = &dense * DVector::from_vec(delta) + DVector::from_vec(r);
        assert!(resid.amax() < 1e-12);
    }

    #[test]
    fn bordered_solver_matches_dense() {
        let dim = 30;
        let k = 2;
        let a = random_band(dim, 4, 4, 7);
        let mut rng = Lcg(1234);
        let cols: Vec<Vec<f64>> = (0..k)
            .map(|_| (0..dim).map(|_| rng.next_f64()).collect())
            .collect();
        let rows: Vec<Vec<f64>> = (0..k)
            .map(|_| (0..dim).map(|_| rng.next_f64()).collect())
            .collect();
        let corner: Vec<f64> = (0..k * k).map(|_| rng.next_f64()).collect();
        let rhs: Vec<f64> = (0..dim + k).map(|_| rng.next_f64()).collect();

        let full = DMatrix::from_fn(dim + k, dim + k, |i, j| {
            if i < dim && j < dim {
                a.get(i, j)
            } else if i < dim {
                cols[j - dim][i]
            } else if j < dim {
                rows[i - dim][j]
            } else {
                corner[(i - dim) * k + (j - dim)]
            }
        });
        let sys = BorderedBandSystem { core: a, cols, rows, corner };
        let z = sys.solve(&rhs).unwrap();
        let expected = full.lu().solve(&DVector::from_vec(rhs.clone())).unwrap();
        for i in 0..dim + k {
            assert!((z[i] - expected[i]).abs() < 1e-9, "i={i}: {} vs {}", z[i], expected[i]);
        }
    }

    #[test]
    fn bordered_solver_survives_nearly_singular_core() {
        // Core with a tiny singular value; the border restores rank. This is
        // the structure of the steady system near a converged solution.
        let dim = 12;
        let mut a = BandMatrix::zeros(dim, 2, 2);
        for i in 0..dim {
            a.set(i, i, 1.0);
        }
        a.set(dim - 1, dim - 1, 1e-13);
        let cols = vec![vec![1.0; dim]];
        let rows = vec![{
            let mut r = vec![0.0; dim];
            r[dim - 1] = 1.0;
            r
        }];
        let corner = vec![0.0];
        let rhs: Vec<f64> = (0..dim + 1).map(|i| (i as f64 * 0.37).sin()).collect();

        let full = DMatrix::from_fn(dim + 1, dim + 1, |i, j| {
            if i < dim && j < dim {
                a.get(i, j)
            } else if i < dim {
                cols[0][i]
            } else if j < dim {
                rows[0][j]
            } else {
                corner[0]
            }
        });
        let sys = BorderedBandSystem { core: a, cols, rows, corner };
        let z = sys.solve(&rhs).unwrap();
        let resid = &full * DVector::from_vec(z) - DVector::from_vec(rhs);
        assert!(resid.amax() < 1e-10, "bordered residual {}", resid.amax());
    }
}
