//! Shift-invert Lanczos for the symmetric-definite pencil (W, D).
//!
//! The pencil is symmetrized to S = D^-1/2 W D^-1/2, shifted to the
//! positive-definite A = sigma*I - S, and factorized once with a banded
//! Cholesky after reverse-Cuthill-McKee reordering. Lanczos with full
//! reorthogonalization then runs on A^-1, whose dominant eigenvalues are
//! exactly the smallest-magnitude eigenvalues of the pencil. The Krylov
//! basis grows until every wanted pair passes the pencil residual test;
//! by default it may grow to the full dimension, where the decomposition
//! is exact, so convergence is a certainty rather than a hope.

use rand::prelude::*;
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::laplacian::OperatorPair;
use crate::sparse::CsrMatrix;

/// Tuning knobs for the iterative eigensolver.
#[derive(Debug, Clone)]
pub struct SolverOptions {
    /// Relative residual tolerance: accept a pair when
    /// ||W v - lambda D v|| <= tol * ||D v|| * max(1, |lambda|).
    pub tol: f64,
    /// Hard cap on the Krylov dimension. `None` lets the basis grow to N,
    /// where the reduction is exact; `Some(m)` errors out at m instead.
    pub max_basis: Option<usize>,
    /// Seed for the deterministic start vector.
    pub seed: u64,
}

impl Default for SolverOptions {
    fn default() -> Self {
        SolverOptions {
            tol: 1e-10,
            max_basis: None,
            seed: 0x5eed_0001,
        }
    }
}

/// Reverse Cuthill-McKee ordering of the matrix graph.
/// Returns perm with perm[old_index] = new_index.
fn rcm_permutation(w: &CsrMatrix) -> Vec<usize> {
    let n = w.n();
    let degree: Vec<usize> = (0..n)
        .map(|i| w.row(i).0.iter().filter(|&&j| j != i).count())
        .collect();
    let neighbors = |i: usize| -> Vec<usize> {
        let (cols, _) = w.row(i);
        let mut nb: Vec<usize> = cols.iter().copied().filter(|&j| j != i).collect();
        nb.sort_by_key(|&j| (degree[j], j));
        nb
    };

    // BFS levels from `start`; returns visit order (used both for the
    // pseudo-peripheral search and for the CM sweep itself)
    let bfs = |start: usize, visited: &mut [bool]| -> Vec<usize> {
        let mut order = vec![start];
        visited[start] = true;
        let mut head = 0;
        while head < order.len() {
            let u = order[head];
            head += 1;
            for v in neighbors(u) {
                if !visited[v] {
                    visited[v] = true;
                    order.push(v);
                }
            }
        }
        order
    };

    let mut order: Vec<usize> = Vec::with_capacity(n);
    let mut assigned = vec![false; n];
    loop {
        // lowest-degree unassigned vertex seeds the next component
        let Some(seed) = (0..n)
            .filter(|&i| !assigned[i])
            .min_by_key(|&i| (degree[i], i))
        else {
            break;
        };
        // pseudo-peripheral refinement: hop to the farthest low-degree
        // vertex while the eccentricity keeps growing
        let mut start = seed;
        let mut depth = 0usize;
        for _ in 0..8 {
            let mut seen = assigned.clone();
            let level_order = bfs(start, &mut seen);
            let last = *level_order.last().unwrap();
            let new_depth = level_order.len();
            if new_depth <= depth {
                break;
            }
            depth = new_depth;
            start = last;
        }
        let component = bfs(start, &mut assigned);
        order.extend(component);
    }

    order.reverse();
    let mut perm = vec![0usize; n];
    for (new, &old) in order.iter().enumerate() {
        perm[old] = new;
    }
    perm
}

/// Symmetric banded matrix in lower form: entry (i, j) with
/// 0 <= i - j <= bandwidth lives at data[j * (bandwidth + 1) + (i - j)].
struct BandMatrix {
    n: usize,
    bandwidth: usize,
    data: Vec<f64>,
}

impl BandMatrix {
    fn zeros(n: usize, bandwidth: usize) -> Self {
        BandMatrix {
            n,
            bandwidth,
            data: vec![0.0; n * (bandwidth + 1)],
        }
    }

    #[inline]
    fn idx(&self, i: usize, j: usize) -> usize {
        debug_assert!(i >= j && i - j <= self.bandwidth);
        j * (self.bandwidth + 1) + (i - j)
    }

    #[cfg(test)]
    fn set(&mut self, i: usize, j: usize, v: f64) {
        let slot = self.idx(i, j);
        self.data[slot] = v;
    }

    /// In-place lower Cholesky A = L L^T.
    fn cholesky_in_place(&mut self) -> Result<()> {
        let (n, b) = (self.n, self.bandwidth);
        for j in 0..n {
            for k in j.saturating_sub(b)..j {
                let ljk = self.data[self.idx(j, k)];
                if ljk == 0.0 {
                    continue;
                }
                let imax = (k + b).min(n - 1);
                for i in j..=imax {
                    let lik = self.data[self.idx(i, k)];
                    let slot = self.idx(i, j);
                    self.data[slot] -= lik * ljk;
                }
            }
            let diag = self.idx(j, j);
            let d = self.data[diag];
            if !(d.is_finite() && d > 0.0) {
                return Err(Error::Numerical(format!(
                    "shifted operator lost positive definiteness at pivot {j} (value {d}); \
                     the stiffness matrix is likely not negative semidefinite"
                )));
            }
            let s = d.sqrt();
            self.data[diag] = s;
            let imax = (j + b).min(n - 1);
            for i in j + 1..=imax {
                let slot = self.idx(i, j);
                self.data[slot] /= s;
            }
        }
        Ok(())
    }

    /// Count eigenvalues of (self - mu*I) that are positive, via the signs
    /// of the pivots of an unpivoted banded LDL^T factorization (Sylvester
    /// inertia). Returns None when a pivot is too close to zero to trust,
    /// in which case the caller should retry with a perturbed mu.
    fn count_above(&self, mu: f64) -> Option<usize> {
        let (n, b) = (self.n, self.bandwidth);
        let mut data = self.data.clone();
        let idx = |i: usize, j: usize| j * (b + 1) + (i - j);
        for j in 0..n {
            data[idx(j, j)] -= mu;
        }
        let scale = data.iter().fold(0.0f64, |a, &x| a.max(x.abs())).max(1e-300);
        let tiny = 1e-14 * scale;
        let mut pos = 0usize;
        for j in 0..n {
            for k in j.saturating_sub(b)..j {
                let ljk = data[idx(j, k)];
                if ljk == 0.0 {
                    continue;
                }
                let w = ljk * data[idx(k, k)];
                let imax = (k + b).min(n - 1);
                for i in j..=imax {
                    data[idx(i, j)] -= data[idx(i, k)] * w;
                }
            }
            let dj = data[idx(j, j)];
            if !dj.is_finite() || dj.abs() <= tiny {
                return None;
            }
            if dj > 0.0 {
                pos += 1;
            }
            let imax = (j + b).min(n - 1);
            for i in j + 1..=imax {
                data[idx(i, j)] /= dj;
            }
        }
        Some(pos)
    }

    /// Solve L L^T x = rhs with the factored band.
    fn solve(&self, rhs: &[f64], x: &mut Vec<f64>) {
        let (n, b) = (self.n, self.bandwidth);
        x.clear();
        x.extend_from_slice(rhs);
        // forward: L y = rhs
        for j in 0..n {
            let xj = x[j] / self.data[self.idx(j, j)];
            x[j] = xj;
            let imax = (j + b).min(n - 1);
            for i in j + 1..=imax {
                x[i] -= self.data[self.idx(i, j)] * xj;
            }
        }
        // backward: L^T x = y
        for j in (0..n).rev() {
            let mut s = x[j];
            let imax = (j + b).min(n - 1);
            for i in j + 1..=imax {
                s -= self.data[self.idx(i, j)] * x[i];
            }
            x[j] = s / self.data[self.idx(j, j)];
        }
    }
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

fn norm(a: &[f64]) -> f64 {
    dot(a, a).sqrt()
}

/// One converged eigenpair in the original (unpermuted) pencil coordinates.
struct PencilPair {
    lambda: f64,
    vector: Vec<f64>,
}

pub(crate) struct SolveOutput {
    pub eigenvalues: Vec<f64>,
    /// Row-major N x r.
    pub vectors: Vec<f64>,
}

pub(crate) fn solve_pencil(op: &OperatorPair, r: usize, opts: &SolverOptions) -> Result<SolveOutput> {
    let n = op.n();
    let w = &op.stiffness;
    if w.symmetry_error() > 1e-12 * w.max_abs().max(1e-300) {
        return Err(Error::Numerical(
            "stiffness matrix is not symmetric within tolerance".into(),
        ));
    }

    let d_isqrt: Vec<f64> = op.mass.iter().map(|&d| 1.0 / d.sqrt()).collect();
    let gersh = crate::spectrum::estimate_lambda_max(op);
    let sigma = if gersh > 0.0 { gersh / (2.0 * n as f64) } else { 1.0 };

    // banded A = sigma*I - D^-1/2 W D^-1/2 in RCM order
    let perm = rcm_permutation(w);
    let mut bandwidth = 0usize;
    for (i, j, _) in w.iter_entries() {
        bandwidth = bandwidth.max(perm[i].abs_diff(perm[j]));
    }
    // pristine S kept for Sylvester-inertia verification of extractions
    let mut s_band = BandMatrix::zeros(n, bandwidth);
    for (i, j, v) in w.iter_entries() {
        let (pi, pj) = (perm[i], perm[j]);
        if pi >= pj {
            let slot = s_band.idx(pi, pj);
            s_band.data[slot] = v * d_isqrt[i] * d_isqrt[j];
        }
    }
    let mut band = BandMatrix::zeros(n, bandwidth);
    for (slot, &s) in s_band.data.iter().enumerate() {
        band.data[slot] = -s;
    }
    for j in 0..n {
        let slot = band.idx(j, j);
        band.data[slot] += sigma;
    }
    band.cholesky_in_place()?;
    log::debug!(
        "shift-invert setup: n={n}, bandwidth={bandwidth}, sigma={sigma:.6e}, gershgorin={gersh:.6e}"
    );

    // Lanczos on A^-1 with full reorthogonalization
    let hard_cap = opts.max_basis.map(|m| m.min(n)).unwrap_or(n);
    if hard_cap < r {
        return Err(Error::Numerical(format!(
            "Krylov budget {hard_cap} is below the requested mode count {r}"
        )));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(opts.seed);
    let mut random_unit = |qs: &[Vec<f64>]| -> Vec<f64> {
        let mut v: Vec<f64> = (0..n).map(|_| rng.random::<f64>() - 0.5).collect();
        for _ in 0..2 {
            for q in qs {
                let c = dot(q, &v);
                for (vi, qi) in v.iter_mut().zip(q) {
                    *vi -= c * qi;
                }
            }
        }
        let nv = norm(&v);
        for vi in v.iter_mut() {
            *vi /= nv;
        }
        v
    };

    let mut qs: Vec<Vec<f64>> = vec![random_unit(&[])];
    let mut alphas: Vec<f64> = Vec::new();
    let mut betas: Vec<f64> = Vec::new();
    let mut checkpoint = hard_cap.min((r + 20).max(2 * r));
    let breakdown_tol = 1e-13 / sigma;
    let mut work = Vec::with_capacity(n);

    loop {
        let q = qs.last().unwrap().clone();
        band.solve(&q, &mut work);
        let alpha = dot(&q, &work);
        for (wi, qi) in work.iter_mut().zip(&q) {
            *wi -= alpha * qi;
        }
        if let Some(beta_prev) = betas.last() {
            let q_prev = &qs[qs.len() - 2];
            for (wi, pi) in work.iter_mut().zip(q_prev) {
                *wi -= beta_prev * pi;
            }
        }
        for _ in 0..2 {
            for qk in &qs {
                let c = dot(qk, &work);
                if c != 0.0 {
                    for (wi, qi) in work.iter_mut().zip(qk) {
                        *wi -= c * qi;
                    }
                }
            }
        }
        alphas.push(alpha);
        let m = alphas.len();

        if m >= checkpoint || m == hard_cap {
            if let Some(pairs) =
                try_extract(op, &d_isqrt, &perm, &s_band, sigma, &qs, &alphas, &betas, r, opts.tol)
            {
                return Ok(finalize(pairs, n, r));
            }
            if m == hard_cap {
                if opts.max_basis.is_some() && hard_cap < n {
                    return Err(Error::Numerical(format!(
                        "eigensolver did not converge within the configured Krylov budget of {hard_cap} vectors \
                         (n = {n}, requested r = {r}, tol = {:.1e})",
                        opts.tol
                    )));
                }
                // full-dimension reduction is exact; failing here means the
                // residual tolerance itself is unreachable in this arithmetic
                return Err(Error::Numerical(format!(
                    "eigensolver exhausted the full Krylov space (n = {n}) without meeting \
                     tol = {:.1e}; the pencil is likely ill-conditioned",
                    opts.tol
                )));
            }
            checkpoint = hard_cap.min(checkpoint + checkpoint / 2 + 10);
        }

        let beta = norm(&work);
        if beta <= breakdown_tol {
            // invariant subspace found: continue in its orthogonal complement
            log::debug!("lanczos breakdown at step {m} (beta = {beta:.3e}); injecting restart vector");
            qs.push(random_unit(&qs));
            betas.push(0.0);
        } else {
            for wi in work.iter_mut() {
                *wi /= beta;
            }
            qs.push(work.clone());
            betas.push(beta);
        }
    }
}

/// Ritz extraction + pencil residual test + spectrum-count verification.
/// Returns the r accepted pairs sorted by |lambda| ascending, or None if
/// any residual is out of band or an eigenvalue was skipped.
#[allow(clippy::too_many_arguments)]
fn try_extract(
    op: &OperatorPair,
    d_isqrt: &[f64],
    perm: &[usize],
    s_band: &BandMatrix,
    sigma: f64,
    qs: &[Vec<f64>],
    alphas: &[f64],
    betas: &[f64],
    r: usize,
    tol: f64,
) -> Option<Vec<PencilPair>> {
    let m = alphas.len();
    if m < r {
        return None;
    }
    let n = op.n();
    let mut t = nalgebra::DMatrix::<f64>::zeros(m, m);
    for (i, &a) in alphas.iter().enumerate() {
        t[(i, i)] = a;
    }
    for (i, &b) in betas.iter().take(m - 1).enumerate() {
        t[(i, i + 1)] = b;
        t[(i + 1, i)] = b;
    }
    let eig = nalgebra::SymmetricEigen::new(t);
    let mut order: Vec<usize> = (0..m).collect();
    // largest theta of A^-1 <=> smallest |lambda| of the pencil
    order.sort_by(|&a, &b| eig.eigenvalues[b].total_cmp(&eig.eigenvalues[a]));

    let mut pairs = Vec::with_capacity(r);
    for &idx in order.iter().take(r) {
        let y = eig.eigenvectors.column(idx);
        // Ritz vector in permuted symmetrized coordinates
        let mut u = vec![0.0f64; n];
        for (k, q) in qs.iter().take(m).enumerate() {
            let c = y[k];
            if c != 0.0 {
                for (ui, qi) in u.iter_mut().zip(q) {
                    *ui += c * qi;
                }
            }
        }
        // back to pencil coordinates: v_i = u_perm(i) / sqrt(D_i)
        let mut v: Vec<f64> = (0..n).map(|i| u[perm[i]] * d_isqrt[i]).collect();
        let vdv: f64 = v.iter().zip(&op.mass).map(|(x, d)| x * x * d).sum();
        let scale = vdv.sqrt();
        for x in v.iter_mut() {
            *x /= scale;
        }
        // Rayleigh quotient is the best eigenvalue estimate for this vector
        let wv = op.stiffness.apply(&v);
        let lambda: f64 = v.iter().zip(&wv).map(|(a, b)| a * b).sum();
        let mut res_sq = 0.0;
        let mut dv_sq = 0.0;
        for i in 0..n {
            let dv = op.mass[i] * v[i];
            res_sq += (wv[i] - lambda * dv).powi(2);
            dv_sq += dv * dv;
        }
        if res_sq.sqrt() > tol * dv_sq.sqrt() * lambda.abs().max(1.0) {
            return None;
        }
        pairs.push(PencilPair { lambda, vector: v });
    }
    pairs.sort_by(|a, b| a.lambda.abs().total_cmp(&b.lambda.abs()));
    if !counts_are_complete(s_band, sigma, &pairs) {
        log::debug!(
            "extraction at m = {m} skipped an eigenvalue inside a cluster; \
             growing the Krylov space"
        );
        return None;
    }
    Some(pairs)
}

/// Sylvester-inertia check that no eigenvalue was skipped: a Krylov space
/// grown from a single vector resolves a degenerate cluster only through
/// roundoff, so a converged-looking set can omit a cluster member. For the
/// midpoint between each pair of adjacent distinct eigenvalue groups, the
/// number of pencil eigenvalues above it (counted exactly from the pivot
/// signs of S - mu*I) must equal the number of delivered pairs above it.
/// Truncating inside the last group is legitimate, so the tail has no
/// boundary to check.
fn counts_are_complete(s_band: &BandMatrix, sigma: f64, pairs: &[PencilPair]) -> bool {
    // pairs are sorted by |lambda| ascending, hence values descending
    let scale = pairs
        .iter()
        .map(|p| p.lambda.abs())
        .fold(0.0f64, f64::max)
        .max(sigma);
    let group_tol = 1e-8 * scale;
    let mut cumulative = 0usize;
    let mut k = 0;
    while k < pairs.len() {
        let mut end = k + 1;
        while end < pairs.len() && (pairs[end].lambda - pairs[end - 1].lambda).abs() <= group_tol {
            end += 1;
        }
        cumulative += end - k;
        if end == pairs.len() {
            break;
        }
        let upper = pairs[end - 1].lambda;
        let lower = pairs[end].lambda;
        let mid = 0.5 * (upper + lower);
        let width = upper - lower;
        // a near-singular pivot at mu is resolved by nudging mu in the gap
        let count = [0.0, -0.05, 0.05, -0.2, 0.2]
            .iter()
            .find_map(|off| s_band.count_above(mid + off * width));
        match count {
            Some(above) if above == cumulative => {}
            Some(above) => {
                log::debug!(
                    "inertia count at mu = {mid:.6e}: spectrum has {above} \
                     eigenvalues above, extraction delivered {cumulative}"
                );
                return false;
            }
            // persistently ambiguous pivots: cannot disprove the extraction
            None => log::debug!("inertia count at mu = {mid:.6e} is ambiguous; skipping boundary"),
        }
        k = end;
    }
    true
}

fn finalize(pairs: Vec<PencilPair>, n: usize, r: usize) -> SolveOutput {
    // snap the kernel eigenvalue to exactly zero when it is pure roundoff
    let scale = pairs
        .iter()
        .map(|p| p.lambda.abs())
        .fold(0.0f64, f64::max)
        .max(1.0);
    let mut eigenvalues: Vec<f64> = pairs.iter().map(|p| p.lambda).collect();
    for l in eigenvalues.iter_mut() {
        if l.abs() <= 1e-12 * scale {
            *l = 0.0;
        }
    }
    let mut vectors = vec![0.0f64; n * r];
    for (k, p) in pairs.iter().enumerate() {
        for i in 0..n {
            vectors[i * r + k] = p.vector[i];
        }
    }
    SolveOutput {
        eigenvalues,
        vectors,
    }
}
