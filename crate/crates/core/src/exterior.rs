//! Index bookkeeping for the exterior algebra of ℝ⁴.
//!
//! Basis k-forms are the increasing multi-indices of `{0, 1, 2, 3}` in
//! lexicographic order, so Λ² is ordered `01, 02, 03, 12, 13, 23`
//! (written `dx12, dx13, dx14, dx23, dx24, dx34` with one-based axes).
//! The orientation is `dx1 ∧ dx2 ∧ dx3 ∧ dx4`.

use nalgebra::Matrix4;

pub const DIM: usize = 4;

const B0: [&[usize]; 1] = [&[]];
const B1: [&[usize]; 4] = [&[0], &[1], &[2], &[3]];
const B2: [&[usize]; 6] = [&[0, 1], &[0, 2], &[0, 3], &[1, 2], &[1, 3], &[2, 3]];
const B3: [&[usize]; 4] = [&[0, 1, 2], &[0, 1, 3], &[0, 2, 3], &[1, 2, 3]];
const B4: [&[usize]; 1] = [&[0, 1, 2, 3]];

/// Basis multi-indices of Λᵏ.
pub fn basis(k: usize) -> &'static [&'static [usize]] {
    match k {
        0 => &B0,
        1 => &B1,
        2 => &B2,
        3 => &B3,
        4 => &B4,
        _ => panic!("no {k}-forms in dimension 4"),
    }
}

/// Number of components of a k-form, C(4, k).
pub fn components(k: usize) -> usize {
    basis(k).len()
}

pub fn index_of(k: usize, multi: &[usize]) -> Option<usize> {
    basis(k).iter().position(|b| *b == multi)
}

/// Human-readable one-based component names (`"dx13"`, `"1"` for 0-forms).
pub fn component_names(k: usize) -> Vec<String> {
    basis(k)
        .iter()
        .map(|m| {
            if m.is_empty() {
                "1".to_string()
            } else {
                let digits: String = m.iter().map(|i| char::from(b'1' + *i as u8)).collect();
                format!("dx{digits}")
            }
        })
        .collect()
}

/// One term of the coordinate formula for d on k-forms:
/// `(da)[out] += sign * ∂_axis a[input]`.
#[derive(Clone, Copy, Debug)]
pub struct DTerm {
    pub out: usize,
    pub axis: usize,
    pub input: usize,
    pub sign: f64,
}

/// Terms of `(da)_I = Σ_p (-1)^p ∂_{I_p} a_{I \ I_p}` for a k-form `a`.
pub fn d_terms(k: usize) -> Vec<DTerm> {
    assert!(k < DIM, "d is not defined on top-degree forms");
    let mut terms = Vec::new();
    for (out, multi) in basis(k + 1).iter().enumerate() {
        for p in 0..multi.len() {
            let rest: Vec<usize> = multi
                .iter()
                .enumerate()
                .filter(|&(q, _)| q != p)
                .map(|(_, &i)| i)
                .collect();
            let input = index_of(k, &rest).expect("sub-multi-index is a basis element");
            let sign = if p % 2 == 0 { 1.0 } else { -1.0 };
            terms.push(DTerm {
                out,
                axis: multi[p],
                input,
                sign,
            });
        }
    }
    terms
}

fn det_submatrix(m: &Matrix4<f64>, rows: &[usize], cols: &[usize]) -> f64 {
    match rows.len() {
        0 => 1.0,
        1 => m[(rows[0], cols[0])],
        2 => m[(rows[0], cols[0])] * m[(rows[1], cols[1])] - m[(rows[0], cols[1])] * m[(rows[1], cols[0])],
        3 => {
            let a = |i: usize, j: usize| m[(rows[i], cols[j])];
            a(0, 0) * (a(1, 1) * a(2, 2) - a(1, 2) * a(2, 1))
                - a(0, 1) * (a(1, 0) * a(2, 2) - a(1, 2) * a(2, 0))
                + a(0, 2) * (a(1, 0) * a(2, 1) - a(1, 1) * a(2, 0))
        }
        4 => m.determinant(),
        _ => unreachable!(),
    }
}

/// Gram matrix of the induced inner product on Λᵏ from an inverse metric:
/// `G[I][J] = det(ginv[I, J])`, row-major `C(4,k) × C(4,k)`.
pub fn induced_gram(k: usize, ginv: &Matrix4<f64>) -> Vec<f64> {
    let b = basis(k);
    let c = b.len();
    let mut out = vec![0.0; c * c];
    for (i, bi) in b.iter().enumerate() {
        for (j, bj) in b.iter().enumerate() {
            out[i * c + j] = det_submatrix(ginv, bi, bj);
        }
    }
    out
}

/// Sign of the permutation that sorts the concatenation `first ++ second`.
pub fn shuffle_sign(first: &[usize], second: &[usize]) -> f64 {
    let mut inversions = 0;
    for &a in first {
        for &b in second {
            if a > b {
                inversions += 1;
            }
        }
    }
    if inversions % 2 == 0 {
        1.0
    } else {
        -1.0
    }
}

/// Complementary multi-index in `{0,1,2,3}`.
pub fn complement(multi: &[usize]) -> Vec<usize> {
    (0..DIM).filter(|i| !multi.contains(i)).collect()
}

/// Hodge star on k-form coefficients for the metric `g` (given through its
/// inverse and `sqrt(det g)`): `(*a)_{J} = sqrt(det g) · sign(I, J) · a^I`
/// with `a^I` the index-raised coefficients and `J` the complement of `I`.
pub fn hodge_star(k: usize, ginv: &Matrix4<f64>, sqrt_det: f64, a: &[f64]) -> Vec<f64> {
    let b = basis(k);
    let gram = induced_gram(k, ginv);
    let c = b.len();
    let raised: Vec<f64> = (0..c)
        .map(|i| (0..c).map(|j| gram[i * c + j] * a[j]).sum())
        .collect();
    let mut out = vec![0.0; components(DIM - k)];
    for (i, multi) in b.iter().enumerate() {
        let comp = complement(multi);
        let j = index_of(DIM - k, &comp).expect("complement is a basis element");
        out[j] += sqrt_det * shuffle_sign(multi, &comp) * raised[i];
    }
    out
}
