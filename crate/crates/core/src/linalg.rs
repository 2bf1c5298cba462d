//! Matrix-free Krylov and subspace solvers plus dense rank decisions.

use nalgebra::{DMatrix, SymmetricEigen};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

fn axpy(y: &mut [f64], s: f64, x: &[f64]) {
    for (a, b) in y.iter_mut().zip(x) {
        *a += s * b;
    }
}

/// A linear operator that is self-adjoint for [`LinearOperator::inner`].
pub trait LinearOperator {
    fn dim(&self) -> usize;
    fn apply(&self, x: &[f64]) -> Vec<f64>;
    fn inner(&self, a: &[f64], b: &[f64]) -> f64 {
        dot(a, b)
    }
}

/// `A + σ I`.
pub struct Shifted<'a, A: LinearOperator + ?Sized> {
    pub op: &'a A,
    pub shift: f64,
}

impl<A: LinearOperator + ?Sized> LinearOperator for Shifted<'_, A> {
    fn dim(&self) -> usize {
        self.op.dim()
    }
    fn apply(&self, x: &[f64]) -> Vec<f64> {
        let mut y = self.op.apply(x);
        axpy(&mut y, self.shift, x);
        y
    }
    fn inner(&self, a: &[f64], b: &[f64]) -> f64 {
        self.op.inner(a, b)
    }
}

#[derive(Clone, Copy, Debug)]
pub struct CgOptions {
    /// Relative residual target `|b − Ax| ≤ rel·|b| + abs`.
    pub rel: f64,
    pub abs: f64,
    pub max_iter: usize,
}

#[derive(Clone, Debug)]
pub struct CgOutcome {
    pub x: Vec<f64>,
    pub iterations: usize,
    pub residual_history: Vec<f64>,
    pub converged: bool,
}

impl CgOutcome {
    pub fn into_result(self) -> Result<Vec<f64>> {
        if self.converged {
            Ok(self.x)
        } else {
            Err(Error::CgNotConverged {
                iterations: self.iterations,
                last: self.residual_history.last().copied().unwrap_or(f64::NAN),
                history: self.residual_history,
            })
        }
    }
}

/// Conjugate gradients in the operator's inner product.
///
/// Works on consistent semidefinite systems as long as `b` lies in the range.
pub fn conjugate_gradient<A: LinearOperator + ?Sized>(
    op: &A,
    b: &[f64],
    x0: Option<&[f64]>,
    opts: CgOptions,
) -> CgOutcome {
    let n = op.dim();
    let mut x = x0.map(<[f64]>::to_vec).unwrap_or_else(|| vec![0.0; n]);
    let mut r = b.to_vec();
    if x0.is_some() {
        let ax = op.apply(&x);
        axpy(&mut r, -1.0, &ax);
    }
    let bnorm = op.inner(b, b).max(0.0).sqrt();
    let target = opts.rel * bnorm + opts.abs;
    let mut rr = op.inner(&r, &r);
    let mut history = vec![rr.max(0.0).sqrt()];
    if rr.sqrt() <= target {
        return CgOutcome {
            x,
            iterations: 0,
            residual_history: history,
            converged: true,
        };
    }
    let mut p = r.clone();
    for it in 1..=opts.max_iter {
        let ap = op.apply(&p);
        let pap = op.inner(&p, &ap);
        if !(pap > 0.0) || !pap.is_finite() {
            return CgOutcome {
                x,
                iterations: it,
                residual_history: history,
                converged: false,
            };
        }
        let alpha = rr / pap;
        axpy(&mut x, alpha, &p);
        axpy(&mut r, -alpha, &ap);
        let rr_new = op.inner(&r, &r);
        history.push(rr_new.max(0.0).sqrt());
        if rr_new.sqrt() <= target {
            return CgOutcome {
                x,
                iterations: it,
                residual_history: history,
                converged: true,
            };
        }
        let beta = rr_new / rr;
        rr = rr_new;
        for (pi, ri) in p.iter_mut().zip(&r) {
            *pi = ri + beta * *pi;
        }
    }
    CgOutcome {
        x,
        iterations: opts.max_iter,
        residual_history: history,
        converged: false,
    }
}

/// Rayleigh-quotient power iteration estimate of the largest eigenvalue.
pub fn largest_eigenvalue<A: LinearOperator + ?Sized>(op: &A, iterations: usize, seed: u64) -> f64 {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut x: Vec<f64> = (0..op.dim()).map(|_| rng.gen_range(-1.0..1.0)).collect();
    let mut lambda = 0.0;
    for _ in 0..iterations {
        let nx = op.inner(&x, &x).sqrt();
        x.iter_mut().for_each(|v| *v /= nx);
        let y = op.apply(&x);
        lambda = op.inner(&x, &y);
        x = y;
    }
    lambda
}

fn orthonormalize<A: LinearOperator + ?Sized>(op: &A, block: &mut Vec<Vec<f64>>) {
    // modified Gram-Schmidt, twice
    for _ in 0..2 {
        for i in 0..block.len() {
            for j in 0..i {
                let (head, tail) = block.split_at_mut(i);
                let c = op.inner(&head[j], &tail[0]);
                axpy(&mut tail[0], -c, &head[j]);
            }
            let nrm = op.inner(&block[i], &block[i]).max(0.0).sqrt();
            if nrm > 0.0 {
                block[i].iter_mut().for_each(|v| *v /= nrm);
            }
        }
    }
}

#[derive(Clone, Copy, Debug)]
pub struct NearKernelOptions {
    pub block: usize,
    /// Eigenvalues below `cutoff · λ_max` count as kernel.
    pub cutoff: f64,
    /// Required `max kept / min discarded` ratio.
    pub max_gap_ratio: f64,
    /// Inverse-iteration shift relative to `λ_max`.
    pub shift: f64,
    /// Target `|A x| ≤ residual · λ_max · |x|` for kept vectors.
    pub residual: f64,
    pub inner_tol: f64,
    pub max_outer: usize,
    pub seed: u64,
}

impl Default for NearKernelOptions {
    fn default() -> Self {
        NearKernelOptions {
            block: 8,
            cutoff: 1e-8,
            max_gap_ratio: 1e-4,
            shift: 1e-3,
            residual: 1e-12,
            inner_tol: 1e-12,
            max_outer: 60,
            seed: 0x5eed,
        }
    }
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct NearKernel {
    #[serde(skip)]
    pub vectors: Vec<Vec<f64>>,
    /// Ritz values of the whole block, ascending.
    pub eigenvalues: Vec<f64>,
    pub residuals: Vec<f64>,
    pub lambda_max: f64,
    pub count: usize,
    /// Largest kept eigenvalue over smallest discarded one.
    pub gap_ratio: f64,
    pub outer_iterations: usize,
}

/// Near-kernel of a positive semidefinite operator by blocked shifted
/// inverse subspace iteration with inner CG solves and Rayleigh–Ritz.
pub fn near_kernel<A: LinearOperator + ?Sized>(op: &A, opts: &NearKernelOptions) -> Result<NearKernel> {
    let n = op.dim();
    let m = opts.block.min(n);
    let lambda_max = largest_eigenvalue(op, 60, opts.seed ^ 0x9e37);
    if !(lambda_max > 0.0) {
        return Err(Error::NoSpectralGap { tail: vec![0.0; m] });
    }
    let shift = opts.shift * lambda_max;
    let shifted = Shifted { op, shift };
    let mut rng = ChaCha8Rng::seed_from_u64(opts.seed);
    let mut block: Vec<Vec<f64>> = (0..m)
        .map(|_| (0..n).map(|_| rng.gen_range(-1.0..1.0)).collect())
        .collect();
    orthonormalize(op, &mut block);
    let cg = CgOptions {
        rel: opts.inner_tol,
        abs: 0.0,
        max_iter: 20 * n.max(1),
    };

    let mut last_count = usize::MAX;
    let mut stable = 0;
    for outer in 1..=opts.max_outer {
        let mut next = Vec::with_capacity(m);
        for v in &block {
            next.push(conjugate_gradient(&shifted, v, None, cg).into_result()?);
        }
        block = next;
        orthonormalize(op, &mut block);

        // Rayleigh–Ritz
        let images: Vec<Vec<f64>> = block.iter().map(|v| op.apply(v)).collect();
        let h = DMatrix::from_fn(m, m, |i, j| 0.5 * (op.inner(&block[i], &images[j]) + op.inner(&block[j], &images[i])));
        let eig = SymmetricEigen::new(h);
        let mut order: Vec<usize> = (0..m).collect();
        order.sort_by(|&a, &b| eig.eigenvalues[a].total_cmp(&eig.eigenvalues[b]));
        let mut rotated = Vec::with_capacity(m);
        let mut rot_images = Vec::with_capacity(m);
        let mut values = Vec::with_capacity(m);
        for &c in &order {
            let mut v = vec![0.0; n];
            let mut w = vec![0.0; n];
            for i in 0..m {
                let q = eig.eigenvectors[(i, c)];
                axpy(&mut v, q, &block[i]);
                axpy(&mut w, q, &images[i]);
            }
            rotated.push(v);
            rot_images.push(w);
            values.push(eig.eigenvalues[c]);
        }
        block = rotated;
        let residuals: Vec<f64> = block
            .iter()
            .zip(&rot_images)
            .zip(&values)
            .map(|((v, w), &theta)| {
                let mut r = w.clone();
                axpy(&mut r, -theta, v);
                op.inner(&r, &r).max(0.0).sqrt()
            })
            .collect();

        let count = values.iter().filter(|&&v| v < opts.cutoff * lambda_max).count();
        // kept pairs must be converged to the residual target, and the first
        // discarded one well enough that its Ritz value cannot still drop
        // below the cutoff (a contaminated kernel vector has residual ≫ θ)
        let kept_done = residuals[..count].iter().all(|&r| r <= opts.residual * lambda_max);
        let next_done = count == m || residuals[count] <= 1e-2 * values[count];
        if count == last_count {
            stable += 1;
        } else {
            stable = 0;
        }
        last_count = count;
        if outer >= 2 && stable >= 1 && kept_done && next_done || outer == opts.max_outer {
            if count == m {
                return Err(Error::NoSpectralGap { tail: values });
            }
            let kept_max = if count == 0 { 0.0 } else { values[count - 1].max(0.0) };
            let gap_ratio = kept_max / values[count];
            if gap_ratio > opts.max_gap_ratio {
                return Err(Error::NoSpectralGap { tail: values });
            }
            return Ok(NearKernel {
                vectors: block[..count].to_vec(),
                eigenvalues: values,
                residuals,
                lambda_max,
                count,
                gap_ratio,
                outer_iterations: outer,
            });
        }
    }
    unreachable!("loop returns on the last iteration")
}

/// Numerical rank of a dense matrix with singular-value gap evidence.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RankEvidence {
    pub rows: usize,
    pub cols: usize,
    pub rank: usize,
    pub nullity: usize,
    pub sigma_max: f64,
    pub threshold: f64,
    pub smallest_retained: Option<f64>,
    pub largest_discarded: Option<f64>,
    pub gap_factor: f64,
    pub singular_values: Vec<f64>,
}

/// Relative singular-value threshold for rank decisions.
pub const RANK_THRESHOLD: f64 = 1e-6;
/// Required ratio between the smallest kept and largest dropped singular value.
pub const RANK_GAP: f64 = 1e2;

/// Rank with threshold `RANK_THRESHOLD · σ_max`; fails unless the kept and
/// dropped singular values are separated by at least `RANK_GAP`.
pub fn rank_from_singular_values(rows: usize, cols: usize, mut sv: Vec<f64>) -> Result<RankEvidence> {
    sv.sort_by(|a, b| b.total_cmp(a));
    let sigma_max = sv.first().copied().unwrap_or(0.0);
    let threshold = RANK_THRESHOLD * sigma_max;
    let rank = if sigma_max == 0.0 { 0 } else { sv.iter().filter(|&&s| s > threshold).count() };
    let smallest_retained = rank.checked_sub(1).map(|i| sv[i]);
    let largest_discarded = sv.get(rank).copied();
    let gap_factor = match (smallest_retained, largest_discarded) {
        (Some(a), Some(b)) if b > 0.0 => a / b,
        _ => f64::INFINITY,
    };
    if gap_factor < RANK_GAP {
        let lo = rank.saturating_sub(3);
        let hi = (rank + 3).min(sv.len());
        return Err(Error::RankAmbiguous {
            retained: smallest_retained.unwrap_or(0.0),
            discarded: largest_discarded.unwrap_or(0.0),
            required: RANK_GAP,
            tail: sv[lo..hi].to_vec(),
        });
    }
    Ok(RankEvidence {
        rows,
        cols,
        rank,
        nullity: cols - rank,
        sigma_max,
        threshold,
        smallest_retained,
        largest_discarded,
        gap_factor,
        singular_values: sv,
    })
}

/// Dense matrix assembled column by column from a matrix-free map.
pub fn dense_from_columns(rows: usize, cols: usize, column: impl Fn(usize) -> Vec<f64>) -> faer::Mat<f64> {
    let mut m = faer::Mat::<f64>::zeros(rows, cols);
    for j in 0..cols {
        let c = column(j);
        debug_assert_eq!(c.len(), rows);
        for (i, v) in c.into_iter().enumerate() {
            if v != 0.0 {
                m[(i, j)] = v;
            }
        }
    }
    m
}

/// Symmetric eigen-decomposition `(values, vectors)` of `m mᵀ` or `mᵀ m`.
fn gram_eigen(m: &faer::Mat<f64>, left: bool) -> Result<(Vec<f64>, faer::Mat<f64>)> {
    let gram = if left { m * m.transpose() } else { m.transpose() * m };
    let eig = gram
        .self_adjoint_eigen(faer::Side::Lower)
        .map_err(|e| Error::LinearAlgebra(format!("eigendecomposition failed: {e:?}")))?;
    let s = eig.S().column_vector();
    let values = (0..s.nrows()).map(|i| s[i]).collect();
    Ok((values, eig.U().to_owned()))
}

/// Singular values as square roots of the eigenvalues of the smaller Gram
/// matrix. The divide-and-conquer SVD misplaces singular values of the
/// highly degenerate difference operators by up to `1e-4 σ_max`, while
/// the symmetric eigensolver stays at rounding level.
pub fn singular_values(m: &faer::Mat<f64>) -> Result<Vec<f64>> {
    if m.nrows() == 0 || m.ncols() == 0 {
        return Ok(Vec::new());
    }
    let gram = if m.nrows() < m.ncols() { m * m.transpose() } else { m.transpose() * m };
    let ev = gram
        .self_adjoint_eigenvalues(faer::Side::Lower)
        .map_err(|e| Error::LinearAlgebra(format!("eigendecomposition failed: {e:?}")))?;
    let mut sv: Vec<f64> = ev.iter().map(|v| v.max(0.0).sqrt()).collect();
    sv.sort_by(|a, b| b.total_cmp(a));
    Ok(sv)
}

pub fn dense_rank(m: &faer::Mat<f64>) -> Result<RankEvidence> {
    rank_from_singular_values(m.nrows(), m.ncols(), singular_values(m)?)
}

/// Orthonormal basis of the column space as column vectors, from the
/// eigenvectors of `m mᵀ` and thresholded like [`dense_rank`].
pub fn range_basis(m: &faer::Mat<f64>) -> Result<Vec<Vec<f64>>> {
    let (values, u) = gram_eigen(m, true)?;
    let sv: Vec<f64> = values.iter().map(|v| v.max(0.0).sqrt()).collect();
    let ev = rank_from_singular_values(m.nrows(), m.ncols(), sv.clone())?;
    let mut order: Vec<usize> = (0..sv.len()).collect();
    order.sort_by(|&a, &b| sv[b].total_cmp(&sv[a]));
    Ok(order[..ev.rank]
        .iter()
        .map(|&c| (0..m.nrows()).map(|r| u[(r, c)]).collect())
        .collect())
}

/// Least-squares distance `min_x |A x − y|` by CG on the normal equations
/// (CGLS). Returns `(x, residual_norm)`.
pub fn least_squares(
    apply: impl Fn(&[f64]) -> Vec<f64>,
    apply_t: impl Fn(&[f64]) -> Vec<f64>,
    cols: usize,
    y: &[f64],
    tol: f64,
    max_iter: usize,
) -> (Vec<f64>, f64) {
    let mut x = vec![0.0; cols];
    let mut r = y.to_vec();
    let mut s = apply_t(&r);
    let mut p = s.clone();
    let mut gamma = dot(&s, &s);
    let target = tol * gamma.sqrt();
    for _ in 0..max_iter {
        if gamma.sqrt() <= target || gamma == 0.0 {
            break;
        }
        let q = apply(&p);
        let qq = dot(&q, &q);
        if qq == 0.0 {
            break;
        }
        let alpha = gamma / qq;
        let rr = dot(&r, &r);
        axpy(&mut x, alpha, &p);
        axpy(&mut r, -alpha, &q);
        // the residual norm decreases monotonically in exact arithmetic;
        // an increase means the attainable accuracy has been reached
        if dot(&r, &r) > rr {
            axpy(&mut x, -alpha, &p);
            break;
        }
        s = apply_t(&r);
        let gamma_new = dot(&s, &s);
        let beta = gamma_new / gamma;
        gamma = gamma_new;
        for (pi, si) in p.iter_mut().zip(&s) {
            *pi = si + beta * *pi;
        }
    }
    let ax = apply(&x);
    let res = y.iter().zip(&ax).map(|(a, b)| (a - b) * (a - b)).sum::<f64>().sqrt();
    (x, res)
}

#[cfg(test)]
mod tests {
    use super::*;

    struct Diag(Vec<f64>);
    impl LinearOperator for Diag {
        fn dim(&self) -> usize {
            self.0.len()
        }
        fn apply(&self, x: &[f64]) -> Vec<f64> {
            x.iter().zip(&self.0).map(|(a, b)| a * b).collect()
        }
    }

    #[test]
    fn cg_solves_spd() {
        let op = Diag((1..=50).map(|i| i as f64).collect());
        let b: Vec<f64> = (0..50).map(|i| (i as f64).sin()).collect();
        let out = conjugate_gradient(&op, &b, None, CgOptions { rel: 1e-12, abs: 0.0, max_iter: 200 });
        assert!(out.converged);
        for i in 0..50 {
            assert!((out.x[i] * (i + 1) as f64 - b[i]).abs() < 1e-10);
        }
    }

    #[test]
    fn cg_reports_stagnation() {
        let op = Diag(vec![1.0, 2.0, 0.0]);
        let out = conjugate_gradient(&op, &[1.0, 1.0, 1.0], None, CgOptions { rel: 1e-12, abs: 0.0, max_iter: 10 });
        assert!(!out.converged);
        assert!(matches!(out.into_result(), Err(Error::CgNotConverged { .. })));
    }

    #[test]
    fn near_kernel_counts_zero_eigenvalues() {
        let mut d: Vec<f64> = (0..200).map(|i| 1.0 + i as f64).collect();
        d[17] = 0.0;
        d[90] = 0.0;
        d[3] = 0.0;
        let nk = near_kernel(&Diag(d), &NearKernelOptions { block: 6, ..Default::default() }).unwrap();
        assert_eq!(nk.count, 3);
        assert!(nk.gap_ratio < 1e-10);
        for v in &nk.vectors {
            let mass: f64 = [3, 17, 90].iter().map(|&i| v[i] * v[i]).sum();
            assert!((mass - 1.0).abs() < 1e-10);
        }
    }

    #[test]
    fn near_kernel_without_gap_fails() {
        let d = vec![0.0; 10];
        assert!(matches!(
            near_kernel(&Diag(d), &NearKernelOptions { block: 4, ..Default::default() }),
            Err(Error::NoSpectralGap { .. })
        ));
    }

    #[test]
    fn rank_decisions() {
        let ev = rank_from_singular_values(3, 3, vec![1.0, 1e-15, 0.5]).unwrap();
        assert_eq!((ev.rank, ev.nullity), (2, 1));
        assert!(rank_from_singular_values(3, 3, vec![1.0, 5e-6, 1e-7]).is_err());
        let zero = rank_from_singular_values(2, 4, vec![0.0, 0.0]).unwrap();
        assert_eq!((zero.rank, zero.nullity), (0, 4));
        let m = dense_from_columns(3, 2, |j| if j == 0 { vec![1.0, 2.0, 3.0] } else { vec![2.0, 4.0, 6.0] });
        assert_eq!(dense_rank(&m).unwrap().rank, 1);
        assert_eq!(range_basis(&m).unwrap().len(), 1);
    }

    #[test]
    fn cgls_distance() {
        // A = [e1, e2] in R^3, y = (1, 2, 3) → distance 3
        let apply = |x: &[f64]| vec![x[0], x[1], 0.0];
        let apply_t = |y: &[f64]| vec![y[0], y[1]];
        let (x, res) = least_squares(apply, apply_t, 2, &[1.0, 2.0, 3.0], 1e-14, 10);
        assert!((x[0] - 1.0).abs() < 1e-14 && (x[1] - 2.0).abs() < 1e-14);
        assert!((res - 3.0).abs() < 1e-14);
    }
}
