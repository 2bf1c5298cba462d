//! Independent dense reference computations used to cross-check the
//! matrix-free operators: the exterior derivative assembled straight from
//! `(dα)_I = Σₘ (−1)ᵐ ∂_{iₘ} α_{I∖iₘ}`, and Hodge projectors built from
//! orthonormal range bases in the metric-weighted coordinates.

use faer::Mat;
use nalgebra::{DMatrix, SymmetricEigen};

use crate::error::Result;
use crate::grid::{FormField, Grid, MetricField};
use crate::linalg;

fn subsets(k: usize) -> Vec<Vec<usize>> {
    let mut out = Vec::new();
    for mask in 0u32..16 {
        if mask.count_ones() as usize == k {
            out.push((0..4).filter(|i| mask & (1 << i) != 0).collect());
        }
    }
    out.sort();
    out
}

fn neighbour(grid: &Grid, p: usize, axis: usize, step: isize) -> usize {
    let n = grid.n();
    let mut c = grid.coords(p);
    c[axis] = ((c[axis] as isize + step).rem_euclid(n[axis] as isize)) as usize;
    grid.index(c)
}

/// Dense matrix of the centered-difference `d` on k-forms.
pub fn dense_d(grid: &Grid, k: usize) -> Mat<f64> {
    let src = subsets(k);
    let dst = subsets(k + 1);
    let n = grid.len();
    let h = grid.spacing();
    let mut m = Mat::<f64>::zeros(dst.len() * n, src.len() * n);
    for (o, out_idx) in dst.iter().enumerate() {
        for (pos, &axis) in out_idx.iter().enumerate() {
            let rest: Vec<usize> = out_idx.iter().copied().filter(|&i| i != axis).collect();
            let c = src.iter().position(|s| *s == rest).expect("face of a subset");
            let sign = if pos % 2 == 0 { 1.0 } else { -1.0 };
            for p in 0..n {
                let row = o * n + p;
                m[(row, c * n + neighbour(grid, p, axis, 1))] += sign / (2.0 * h[axis]);
                m[(row, c * n + neighbour(grid, p, axis, -1))] -= sign / (2.0 * h[axis]);
            }
        }
    }
    m
}

fn det(m: &DMatrix<f64>) -> f64 {
    if m.nrows() == 0 {
        1.0
    } else {
        m.determinant()
    }
}

/// Square root (and inverse square root) of the k-form mass matrix, a
/// dense block-diagonal matrix with blocks `(√det g · det g⁻¹[I,J])^{±½}`.
fn mass_roots(grid: &Grid, g: &MetricField, k: usize) -> (Mat<f64>, Mat<f64>) {
    let idx = subsets(k);
    let c = idx.len();
    let n = grid.len();
    let mut root = Mat::<f64>::zeros(c * n, c * n);
    let mut inv_root = Mat::<f64>::zeros(c * n, c * n);
    for p in 0..n {
        let gp = g.at(p);
        let ginv = DMatrix::from_fn(4, 4, |i, j| gp.inverse()[(i, j)]);
        let block = DMatrix::from_fn(c, c, |a, b| {
            let minor = DMatrix::from_fn(k, k, |i, j| ginv[(idx[a][i], idx[b][j])]);
            det(&minor) * gp.sqrt_det() * grid.cell_volume()
        });
        let eig = SymmetricEigen::new(block);
        for a in 0..c {
            for b in 0..c {
                let (mut s, mut si) = (0.0, 0.0);
                for e in 0..c {
                    let q = eig.eigenvectors[(a, e)] * eig.eigenvectors[(b, e)];
                    s += q * eig.eigenvalues[e].sqrt();
                    si += q / eig.eigenvalues[e].sqrt();
                }
                root[(a * n + p, b * n + p)] = s;
                inv_root[(a * n + p, b * n + p)] = si;
            }
        }
    }
    (root, inv_root)
}

fn project(basis: &[Vec<f64>], v: &[f64]) -> Vec<f64> {
    let mut out = vec![0.0; v.len()];
    for q in basis {
        let c = linalg::dot(q, v);
        out.iter_mut().zip(q).for_each(|(o, x)| *o += c * x);
    }
    out
}

fn to_vec(m: &Mat<f64>, v: &[f64]) -> Vec<f64> {
    (0..m.nrows()).map(|i| (0..m.ncols()).map(|j| m[(i, j)] * v[j]).sum()).collect()
}

/// Exact, coexact and harmonic parts of `a` by explicit orthogonal
/// projection onto `range d` and `range δ` in the metric inner product.
pub fn hodge_parts(grid: &Grid, g: &MetricField, a: &FormField) -> Result<[FormField; 3]> {
    let k = a.degree();
    let (root, inv_root) = mass_roots(grid, g, k);
    let y = to_vec(&root, a.as_slice());
    let exact_w = if k > 0 {
        // range of M^{1/2} d_{k−1}
        let d = dense_d(grid, k - 1);
        let a_mat = &root * &d;
        project(&linalg::range_basis(&a_mat)?, &y)
    } else {
        vec![0.0; y.len()]
    };
    let coexact_w = if k < 4 {
        // range of M^{1/2} δ = (M_{k+1}^{1/2} d_k M_k^{-1/2})ᵀ
        let (root1, _) = mass_roots(grid, g, k + 1);
        let d = dense_d(grid, k);
        let b = (&root1 * &d * &inv_root).transpose().to_owned();
        project(&linalg::range_basis(&b)?, &y)
    } else {
        vec![0.0; y.len()]
    };
    let harm_w: Vec<f64> = y.iter().zip(&exact_w).zip(&coexact_w).map(|((a, b), c)| a - b - c).collect();
    let back = |w: &[f64]| FormField::from_vec(grid, k, to_vec(&inv_root, w));
    Ok([back(&exact_w)?, back(&coexact_w)?, back(&harm_w)?])
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::grid::ext_d;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn dense_d_matches_stencil() {
        let g = Grid::new([3, 5, 3, 3], [1.0, 2.0, 1.5, 1.0]).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        for k in 0..4 {
            let a = FormField::random(&g, k, &mut rng);
            let d = dense_d(&g, k);
            let lhs = to_vec(&d, a.as_slice());
            let rhs = ext_d(&g, &a).unwrap();
            let err = lhs.iter().zip(rhs.as_slice()).map(|(x, y)| (x - y).abs()).fold(0.0, f64::max);
            assert!(err < 1e-12, "degree {k}: {err}");
        }
    }
}
