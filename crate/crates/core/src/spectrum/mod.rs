//! Reduced spectral basis of the pencil (W, D).
//!
//! Solves W v = lambda D v for the r smallest-magnitude eigenpairs. With the
//! negative-semidefinite sign convention all eigenvalues are non-positive,
//! the kernel mode lambda_1 = 0 comes first, and the basis is D-orthonormal.

mod solver;

pub use solver::SolverOptions;

use std::path::Path;

use crate::binio::{PayloadReader, PayloadWriter};
use crate::error::{Error, Result};
use crate::laplacian::OperatorPair;

const CACHE_MAGIC: &[u8; 4] = b"SCRB";
const CACHE_VERSION: u32 = 1;

/// The r retained eigenpairs (Lambda_r, V_r) plus the data needed to build
/// time grids and descriptors without touching the mesh again.
#[derive(Debug, Clone)]
pub struct SpectralBasis {
    /// Non-positive, ordered by increasing magnitude; eigenvalues[0] = 0.
    pub eigenvalues: Vec<f64>,
    /// V_r, row-major N x r: vectors[i * r + k] is component i of mode k.
    pub vectors: Vec<f64>,
    /// Mass diagonal D the basis is orthonormal against.
    pub mass: Vec<f64>,
    /// Gershgorin (or externally supplied) estimate of |lambda_N|.
    pub lambda_max_abs: f64,
    pub n: usize,
    pub r: usize,
}

impl SpectralBasis {
    /// Row i of V_r: the mode amplitudes seen from vertex i.
    #[inline]
    pub fn row(&self, i: usize) -> &[f64] {
        &self.vectors[i * self.r..(i + 1) * self.r]
    }

    /// |lambda_r| of the last retained mode.
    pub fn lambda_r_abs(&self) -> f64 {
        self.eigenvalues.last().map(|l| l.abs()).unwrap_or(0.0)
    }

    /// Check the basis invariants against its operator: D-orthonormality,
    /// per-pair residuals, kernel mode, ordering, and the |lambda_N| bound.
    pub fn validate(&self, op: &OperatorPair) -> Result<()> {
        let (n, r) = (self.n, self.r);
        if op.n() != n || self.vectors.len() != n * r || self.eigenvalues.len() != r {
            return Err(Error::Mismatch(format!(
                "basis shape ({n} x {r}) inconsistent with operator of size {}",
                op.n()
            )));
        }
        // V^T D V = I
        for a in 0..r {
            for b in a..r {
                let mut s = 0.0;
                for i in 0..n {
                    s += self.vectors[i * r + a] * op.mass[i] * self.vectors[i * r + b];
                }
                let target = if a == b { 1.0 } else { 0.0 };
                if (s - target).abs() > 1e-8 {
                    return Err(Error::Numerical(format!(
                        "D-orthonormality violated at ({a},{b}): got {s:.3e}"
                    )));
                }
            }
        }
        // residuals and ordering
        let mut col = vec![0.0f64; n];
        for k in 0..r {
            for i in 0..n {
                col[i] = self.vectors[i * r + k];
            }
            let lambda = self.eigenvalues[k];
            let wv = op.stiffness.apply(&col);
            let mut res_sq = 0.0;
            let mut dv_sq = 0.0;
            for i in 0..n {
                let dv = op.mass[i] * col[i];
                res_sq += (wv[i] - lambda * dv).powi(2);
                dv_sq += dv * dv;
            }
            if res_sq.sqrt() > 1e-8 * dv_sq.sqrt() * lambda.abs().max(1.0) {
                return Err(Error::Numerical(format!(
                    "pair {k} residual {:.3e} exceeds tolerance",
                    res_sq.sqrt()
                )));
            }
            if k > 0 && lambda.abs() + 1e-14 < self.eigenvalues[k - 1].abs() {
                return Err(Error::Numerical(format!(
                    "eigenvalues not ordered by magnitude at index {k}"
                )));
            }
            if lambda.abs() > self.lambda_max_abs * (1.0 + 1e-10) {
                return Err(Error::Numerical(format!(
                    "eigenvalue {k} magnitude {:.6e} exceeds lambda_max_abs {:.6e}",
                    lambda.abs(),
                    self.lambda_max_abs
                )));
            }
        }
        if r >= 2 && self.eigenvalues[0].abs() > 1e-8 * self.eigenvalues[1].abs() {
            return Err(Error::Numerical(format!(
                "kernel eigenvalue is {:.3e}, not zero relative to lambda_2",
                self.eigenvalues[0]
            )));
        }
        Ok(())
    }

    pub fn save_cache(&self, path: &Path) -> Result<()> {
        let mut w = PayloadWriter::new();
        w.put_u64(self.n as u64);
        w.put_u64(self.r as u64);
        w.put_f64_slice(&self.mass);
        w.put_f64_slice(&self.eigenvalues);
        w.put_f64_slice(&self.vectors);
        w.put_f64(self.lambda_max_abs);
        w.write(CACHE_MAGIC, CACHE_VERSION, path)
    }

    pub fn load_cache(path: &Path) -> Result<Self> {
        let mut rd = PayloadReader::open(path, CACHE_MAGIC, CACHE_VERSION)?;
        let n = rd.get_u64()? as usize;
        let r = rd.get_u64()? as usize;
        let mass = rd.get_f64_vec(n)?;
        let eigenvalues = rd.get_f64_vec(r)?;
        let vectors = rd.get_f64_vec(n.checked_mul(r).ok_or_else(|| {
            Error::Format(format!("{}: basis dimensions overflow", path.display()))
        })?)?;
        let lambda_max_abs = rd.get_f64()?;
        rd.finish()?;
        Ok(SpectralBasis {
            eigenvalues,
            vectors,
            mass,
            lambda_max_abs,
            n,
            r,
        })
    }
}

/// Gershgorin bound on max_i |lambda_i(D^-1 W)|: max_i sum_j |W_ij| / D_ii.
/// Always an upper bound for the real spectrum of the pencil.
pub fn estimate_lambda_max(op: &OperatorPair) -> f64 {
    let mut best = 0.0f64;
    for i in 0..op.n() {
        let (_, vals) = op.stiffness.row(i);
        let row_sum: f64 = vals.iter().map(|v| v.abs()).sum();
        best = best.max(row_sum / op.mass[i]);
    }
    best
}

/// Solve for the r smallest-magnitude eigenpairs with default options.
pub fn solve_reduced(op: &OperatorPair, r: usize) -> Result<SpectralBasis> {
    solve_reduced_with(op, r, &SolverOptions::default())
}

pub fn solve_reduced_with(
    op: &OperatorPair,
    r: usize,
    opts: &SolverOptions,
) -> Result<SpectralBasis> {
    let n = op.n();
    if r == 0 {
        return Err(Error::Config("mode count r must be positive".into()));
    }
    if r >= n {
        return Err(Error::Config(format!(
            "mode count r = {r} must be smaller than the vertex count N = {n}"
        )));
    }
    let out = solver::solve_pencil(op, r, opts)?;
    Ok(SpectralBasis {
        eigenvalues: out.eigenvalues,
        vectors: out.vectors,
        mass: op.mass.clone(),
        lambda_max_abs: estimate_lambda_max(op),
        n,
        r,
    })
}
