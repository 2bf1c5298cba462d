//! Pointwise exterior algebra on Λ²(ℝ⁴): wedge pairing, Hodge star,
//! the action of an almost complex structure, the self-dual and
//! J-type splittings, and positivity of J-invariant forms.
//!
//! A 2-form `a` is identified with the antisymmetric matrix
//! `A[i][j] = a(e_i, e_j)`; its coefficients are `A[i][j]` for `i < j`
//! in the order of [`crate::exterior::basis`]`(2)`.

use std::ops::{Add, Mul, Neg, Sub};

use nalgebra::{Matrix4, Matrix6, SymmetricEigen, Vector4};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::exterior;

/// Tolerance for identities that hold exactly in exact arithmetic.
pub const EXACT_TOL: f64 = 1e-12;
/// Tolerance for constructed frames and invariance pre-checks.
pub const FRAME_TOL: f64 = 1e-10;

const PAIRS: [(usize, usize); 6] = [(0, 1), (0, 2), (0, 3), (1, 2), (1, 3), (2, 3)];

#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct Fiber2Form(pub [f64; 6]);

impl Fiber2Form {
    pub const ZERO: Fiber2Form = Fiber2Form([0.0; 6]);

    pub fn basis(i: usize) -> Self {
        let mut c = [0.0; 6];
        c[i] = 1.0;
        Fiber2Form(c)
    }

    /// Builds `Σ c · dx^{ij}` from one-based axis pairs, e.g. `&[(1.0, 1, 3)]`.
    pub fn from_terms(terms: &[(f64, usize, usize)]) -> Self {
        let mut out = Self::ZERO;
        for &(c, i, j) in terms {
            let (a, b, s) = if i < j { (i - 1, j - 1, c) } else { (j - 1, i - 1, -c) };
            let idx = PAIRS.iter().position(|&p| p == (a, b)).expect("distinct axes in 1..=4");
            out.0[idx] += s;
        }
        out
    }

    pub fn from_matrix(m: &Matrix4<f64>) -> Self {
        let mut c = [0.0; 6];
        for (k, &(i, j)) in PAIRS.iter().enumerate() {
            c[k] = 0.5 * (m[(i, j)] - m[(j, i)]);
        }
        Fiber2Form(c)
    }

    pub fn to_matrix(&self) -> Matrix4<f64> {
        let mut m = Matrix4::zeros();
        for (k, &(i, j)) in PAIRS.iter().enumerate() {
            m[(i, j)] = self.0[k];
            m[(j, i)] = -self.0[k];
        }
        m
    }

    /// Euclidean coefficient dot product.
    pub fn dot(&self, other: &Self) -> f64 {
        self.0.iter().zip(other.0.iter()).map(|(a, b)| a * b).sum()
    }

    pub fn norm(&self) -> f64 {
        self.dot(self).sqrt()
    }

    pub fn max_abs(&self) -> f64 {
        self.0.iter().fold(0.0, |m, v| m.max(v.abs()))
    }
}

impl Add for Fiber2Form {
    type Output = Self;
    fn add(self, rhs: Self) -> Self {
        let mut c = self.0;
        for (a, b) in c.iter_mut().zip(rhs.0) {
            *a += b;
        }
        Fiber2Form(c)
    }
}

impl Sub for Fiber2Form {
    type Output = Self;
    fn sub(self, rhs: Self) -> Self {
        self + (-rhs)
    }
}

impl Neg for Fiber2Form {
    type Output = Self;
    fn neg(self) -> Self {
        self * -1.0
    }
}

impl Mul<f64> for Fiber2Form {
    type Output = Self;
    fn mul(self, s: f64) -> Self {
        Fiber2Form(self.0.map(|v| v * s))
    }
}

/// An endomorphism `J` of ℝ⁴ with `J² = -I`. Column `i` is `J e_i`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct FiberJ(Matrix4<f64>);

impl FiberJ {
    /// The standard structure `e1 ↦ e2, e3 ↦ e4`.
    pub fn standard() -> Self {
        let mut m = Matrix4::zeros();
        m[(1, 0)] = 1.0;
        m[(0, 1)] = -1.0;
        m[(3, 2)] = 1.0;
        m[(2, 3)] = -1.0;
        FiberJ(m)
    }

    /// Validates `J² = -I` to [`EXACT_TOL`] (scaled by `|J|²`).
    pub fn new(m: Matrix4<f64>) -> Result<Self> {
        let residual = Self::square_residual(&m);
        let scale = m.abs().max().powi(2).max(1.0);
        if residual > EXACT_TOL * scale {
            return Err(Error::NotComplexStructure { residual });
        }
        Ok(FiberJ(m))
    }

    /// `P J₀ P⁻¹`; fails when `P` is numerically singular.
    pub fn conjugated(p: &Matrix4<f64>) -> Result<Self> {
        let inv = p
            .try_inverse()
            .ok_or_else(|| Error::LinearAlgebra("singular conjugator".into()))?;
        Ok(FiberJ(p * Self::standard().0 * inv))
    }

    pub fn square_residual(m: &Matrix4<f64>) -> f64 {
        (m * m + Matrix4::identity()).abs().max()
    }

    pub fn matrix(&self) -> &Matrix4<f64> {
        &self.0
    }

    pub fn apply(&self, v: &Vector4<f64>) -> Vector4<f64> {
        self.0 * v
    }
}

/// A symmetric positive-definite bilinear form on ℝ⁴.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct FiberMetric {
    m: Matrix4<f64>,
    inv: Matrix4<f64>,
    sqrt_det: f64,
}

impl FiberMetric {
    pub fn identity() -> Self {
        FiberMetric {
            m: Matrix4::identity(),
            inv: Matrix4::identity(),
            sqrt_det: 1.0,
        }
    }

    pub fn new(m: Matrix4<f64>) -> Result<Self> {
        let asym = (m - m.transpose()).abs().max();
        if asym > EXACT_TOL * m.abs().max().max(1.0) {
            return Err(Error::NotSpd(format!("asymmetry {asym:e}")));
        }
        let m = (m + m.transpose()) * 0.5;
        let chol = m
            .cholesky()
            .ok_or_else(|| Error::NotSpd("Cholesky factorization failed".into()))?;
        let det = m.determinant();
        if !(det > 0.0) {
            return Err(Error::NotSpd(format!("determinant {det:e}")));
        }
        Ok(FiberMetric {
            m,
            inv: chol.inverse(),
            sqrt_det: det.sqrt(),
        })
    }

    pub fn diagonal(d: [f64; 4]) -> Result<Self> {
        Self::new(Matrix4::from_diagonal(&Vector4::from(d)))
    }

    pub fn matrix(&self) -> &Matrix4<f64> {
        &self.m
    }

    pub fn inverse(&self) -> &Matrix4<f64> {
        &self.inv
    }

    pub fn sqrt_det(&self) -> f64 {
        self.sqrt_det
    }

    /// Induced inner product on Λ² (without the volume density).
    pub fn inner2(&self, a: &Fiber2Form, b: &Fiber2Form) -> f64 {
        let g = exterior::induced_gram(2, &self.inv);
        let mut s = 0.0;
        for i in 0..6 {
            for j in 0..6 {
                s += a.0[i] * g[i * 6 + j] * b.0[j];
            }
        }
        s
    }

    pub fn norm2(&self, a: &Fiber2Form) -> f64 {
        self.inner2(a, a).max(0.0).sqrt()
    }

    /// `g(J·, J·)`.
    pub fn pulled_back(&self, j: &FiberJ) -> Matrix4<f64> {
        j.matrix().transpose() * self.m * j.matrix()
    }

    pub fn is_compatible(&self, j: &FiberJ, tol: f64) -> bool {
        (self.pulled_back(j) - self.m).abs().max() <= tol * self.m.abs().max()
    }
}

/// Coefficient of `dx1234` in `a ∧ b`.
pub fn wedge2(a: &Fiber2Form, b: &Fiber2Form) -> f64 {
    let (a, b) = (&a.0, &b.0);
    a[0] * b[5] + a[5] * b[0] - a[1] * b[4] - a[4] * b[1] + a[2] * b[3] + a[3] * b[2]
}

/// Hodge star on 2-forms for `g` and the fixed orientation.
pub fn star2(g: &FiberMetric, a: &Fiber2Form) -> Fiber2Form {
    let s = exterior::hodge_star(2, g.inverse(), g.sqrt_det(), &a.0);
    let mut c = [0.0; 6];
    c.copy_from_slice(&s);
    Fiber2Form(c)
}

/// `a ↦ a(J·, J·)`.
pub fn j_act2(j: &FiberJ, a: &Fiber2Form) -> Fiber2Form {
    let m = j.matrix();
    Fiber2Form::from_matrix(&(m.transpose() * a.to_matrix() * m))
}

/// J-invariant and J-anti-invariant parts.
pub fn proj_j(j: &FiberJ, a: &Fiber2Form) -> (Fiber2Form, Fiber2Form) {
    let ja = j_act2(j, a);
    ((*a + ja) * 0.5, (*a - ja) * 0.5)
}

/// Self-dual and anti-self-dual parts.
pub fn proj_g(g: &FiberMetric, a: &Fiber2Form) -> (Fiber2Form, Fiber2Form) {
    let sa = star2(g, a);
    ((*a + sa) * 0.5, (*a - sa) * 0.5)
}

/// Matrix of a linear map on Λ² in the coefficient basis.
pub fn operator_matrix(f: impl Fn(&Fiber2Form) -> Fiber2Form) -> Matrix6<f64> {
    let mut m = Matrix6::zeros();
    for col in 0..6 {
        let image = f(&Fiber2Form::basis(col));
        for row in 0..6 {
            m[(row, col)] = image.0[row];
        }
    }
    m
}

/// Orthonormal (Euclidean coefficient) basis of the range of a projector on Λ²,
/// from the eigenvectors of `P Pᵀ` with non-negligible eigenvalues.
pub fn range_basis(projector: &Matrix6<f64>) -> Vec<Fiber2Form> {
    let eig = SymmetricEigen::new(projector * projector.transpose());
    let lmax = eig.eigenvalues.max();
    let mut order: Vec<usize> = (0..6).collect();
    order.sort_by(|&a, &b| eig.eigenvalues[b].total_cmp(&eig.eigenvalues[a]));
    order
        .into_iter()
        .filter(|&i| eig.eigenvalues[i] > 1e-12 * lmax)
        .map(|i| Fiber2Form(std::array::from_fn(|r| eig.eigenvectors[(r, i)])))
        .collect()
}

/// Symmetric part of the bilinear form `(X, Y) ↦ w(X, JY)`.
pub fn taming_matrix(j: &FiberJ, w: &Fiber2Form) -> Matrix4<f64> {
    let aj = w.to_matrix() * j.matrix();
    (aj + aj.transpose()) * 0.5
}

/// Smallest eigenvalue of the symmetrized `w(·, J·)` in coordinates.
/// Positive iff `w` tames `J`.
pub fn positivity_margin(j: &FiberJ, w: &Fiber2Form) -> f64 {
    SymmetricEigen::new(taming_matrix(j, w)).eigenvalues.min()
}

/// Smallest eigenvalue of the symmetrized `w(·, J·)` relative to `g`, i.e.
/// the least root of `det(S - λ g) = 0`.
pub fn positivity_margin_relative(j: &FiberJ, g: &FiberMetric, w: &Fiber2Form) -> f64 {
    let l = g.matrix().cholesky().expect("metric is SPD").l();
    let linv = l.try_inverse().expect("Cholesky factor is invertible");
    let s = taming_matrix(j, w);
    SymmetricEigen::new(linv * s * linv.transpose()).eigenvalues.min()
}

/// `½(g₀ + g₀(J·, J·))`, the J-compatible average of a metric.
pub fn compatible_metric(j: &FiberJ, g0: &FiberMetric) -> FiberMetric {
    let m = (g0.matrix() + g0.pulled_back(j)) * 0.5;
    FiberMetric::new(m).expect("averaging preserves positive definiteness")
}

/// Fundamental form `ω(X, Y) = g(JX, Y)`.
pub fn fundamental_form(j: &FiberJ, g: &FiberMetric) -> Fiber2Form {
    Fiber2Form::from_matrix(&(j.matrix().transpose() * g.matrix()))
}

/// A `g`-orthonormal frame `(e1, Je1, e3, Je3)` with its coframe forms:
/// the fundamental form `θ¹²+θ³⁴` and the J-invariant anti-self-dual
/// triple `θ¹²−θ³⁴, θ¹³+θ²⁴, θ¹⁴−θ²³`. Each has `g`-norm `√2`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct AdaptedFrame {
    pub vectors: Matrix4<f64>,
    pub omega: Fiber2Form,
    pub asd: [Fiber2Form; 3],
}

impl AdaptedFrame {
    pub fn new(j: &FiberJ, g: &FiberMetric) -> Result<Self> {
        let gm = g.matrix();
        let ip = |a: &Vector4<f64>, b: &Vector4<f64>| (a.transpose() * gm * b)[(0, 0)];
        let mut e1 = Vector4::new(1.0, 0.0, 0.0, 0.0);
        e1 /= ip(&e1, &e1).sqrt();
        let e2 = j.apply(&e1);
        // pick the coordinate axis with the largest component orthogonal to span{e1, e2}
        let mut best = None;
        let mut best_norm = -1.0;
        for axis in 0..4 {
            let mut v = Vector4::zeros();
            v[axis] = 1.0;
            let v = v - e1 * ip(&e1, &v) - e2 * ip(&e2, &v);
            let n = ip(&v, &v);
            if n > best_norm {
                best_norm = n;
                best = Some(v);
            }
        }
        let mut e3 = best.expect("four candidates");
        e3 /= best_norm.sqrt();
        let e4 = j.apply(&e3);
        let vectors = Matrix4::from_columns(&[e1, e2, e3, e4]);
        if vectors.determinant() <= 0.0 {
            return Err(Error::OrientationMismatch { point: 0 });
        }
        let coframe = vectors
            .try_inverse()
            .ok_or_else(|| Error::LinearAlgebra("degenerate adapted frame".into()))?;
        let to_coords = |terms: &[(f64, usize, usize)]| {
            let f = Fiber2Form::from_terms(terms).to_matrix();
            Fiber2Form::from_matrix(&(coframe.transpose() * f * coframe))
        };
        Ok(AdaptedFrame {
            vectors,
            omega: to_coords(&[(1.0, 1, 2), (1.0, 3, 4)]),
            asd: [
                to_coords(&[(1.0, 1, 2), (-1.0, 3, 4)]),
                to_coords(&[(1.0, 1, 3), (1.0, 2, 4)]),
                to_coords(&[(1.0, 1, 4), (-1.0, 2, 3)]),
            ],
        })
    }

    pub fn compose(&self, f: f64, b: [f64; 3]) -> Fiber2Form {
        self.omega * f + self.asd[0] * b[0] + self.asd[1] * b[1] + self.asd[2] * b[2]
    }
}

/// Coordinates of a J-invariant form in `span{ω_g} ⊕ Λ_g^-`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct SocCoordinates {
    pub f: f64,
    pub b: [f64; 3],
}

impl SocCoordinates {
    pub fn b_norm(&self) -> f64 {
        self.b.iter().map(|v| v * v).sum::<f64>().sqrt()
    }

    /// `f − |b|`, which equals the `g`-relative positivity margin.
    pub fn cone_margin(&self) -> f64 {
        self.f - self.b_norm()
    }

    pub fn reconstruct(&self, frame: &AdaptedFrame) -> Fiber2Form {
        frame.compose(self.f, self.b)
    }
}

/// Decomposes a J-invariant `w` as `f·ω_g + Σ bᵢ ωᵢ⁻` for the compatible
/// metric `g_j`.
pub fn soc_coordinates(j: &FiberJ, g_j: &FiberMetric, w: &Fiber2Form) -> Result<SocCoordinates> {
    let residual = (j_act2(j, w) - *w).max_abs();
    if residual > FRAME_TOL * w.max_abs().max(1.0) {
        return Err(Error::NotInvariant { residual });
    }
    let frame = AdaptedFrame::new(j, g_j)?;
    Ok(soc_coordinates_in(&frame, g_j, w))
}

/// Frame coordinates without the invariance check.
pub fn soc_coordinates_in(frame: &AdaptedFrame, g: &FiberMetric, w: &Fiber2Form) -> SocCoordinates {
    SocCoordinates {
        f: 0.5 * g.inner2(w, &frame.omega),
        b: [
            0.5 * g.inner2(w, &frame.asd[0]),
            0.5 * g.inner2(w, &frame.asd[1]),
            0.5 * g.inner2(w, &frame.asd[2]),
        ],
    }
}

/// Euclidean projection of `(f, b)` onto the shifted cone `{f ≥ |b| + ε}`.
pub fn project_soc_point(f: f64, b: [f64; 3], eps: f64) -> (f64, [f64; 3]) {
    let t = f - eps;
    let nb = b.iter().map(|v| v * v).sum::<f64>().sqrt();
    if nb <= t {
        (f, b)
    } else if nb <= -t {
        (eps, [0.0; 3])
    } else {
        let s = 0.5 * (t + nb);
        let r = s / nb;
        (s + eps, b.map(|v| v * r))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn random_form(rng: &mut impl Rng) -> Fiber2Form {
        Fiber2Form(std::array::from_fn(|_| rng.gen_range(-1.0..1.0)))
    }

    fn random_metric(rng: &mut impl Rng) -> FiberMetric {
        let a = Matrix4::from_fn(|_, _| rng.gen_range(-0.6..0.6));
        FiberMetric::new(a * a.transpose() + Matrix4::identity()).unwrap()
    }

    fn random_j(rng: &mut impl Rng) -> FiberJ {
        let p = Matrix4::identity() + Matrix4::from_fn(|_, _| rng.gen_range(-0.3..0.3));
        FiberJ::conjugated(&p).unwrap()
    }

    fn omega0() -> Fiber2Form {
        Fiber2Form::from_terms(&[(1.0, 1, 2), (1.0, 3, 4)])
    }

    #[test]
    fn wedge_examples() {
        let e12 = Fiber2Form::from_terms(&[(1.0, 1, 2)]);
        let e34 = Fiber2Form::from_terms(&[(1.0, 3, 4)]);
        assert_eq!(wedge2(&e12, &e34), 1.0);
        assert_eq!(wedge2(&e12, &e12), 0.0);
        assert_eq!(wedge2(&omega0(), &omega0()), 2.0);
    }

    #[test]
    fn euclidean_star() {
        let g = FiberMetric::identity();
        let e12 = Fiber2Form::from_terms(&[(1.0, 1, 2)]);
        assert_eq!(star2(&g, &e12), Fiber2Form::from_terms(&[(1.0, 3, 4)]));
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        for _ in 0..100 {
            let a = random_form(&mut rng);
            assert!((star2(&g, &star2(&g, &a)) - a).max_abs() < EXACT_TOL);
        }
    }

    /// Star through an orthonormalizing change of basis: with `g = Eᵀ E`
    /// the coframe `θ = E dx` is orthonormal, so the Euclidean star in
    /// θ-coordinates pulled back is the `g`-star.
    fn star_oracle(g: &Matrix4<f64>, a: &Fiber2Form) -> Fiber2Form {
        let e = g.cholesky().unwrap().l().transpose(); // g = Eᵀ E
        let einv = e.try_inverse().unwrap();
        // θ-components of a: a = Σ a_ij dx^i dx^j, dx = E⁻¹ θ
        let a_theta = einv.transpose() * a.to_matrix() * einv;
        let s_theta = star2(&FiberMetric::identity(), &Fiber2Form::from_matrix(&a_theta)).to_matrix();
        let s = e.transpose() * s_theta * e;
        // orientation of θ agrees with dx since det E > 0
        Fiber2Form::from_matrix(&s)
    }

    #[test]
    fn star_matches_orthonormal_frame_oracle() {
        let g = FiberMetric::diagonal([4.0, 1.0, 1.0, 1.0]).unwrap();
        let e12 = Fiber2Form::from_terms(&[(1.0, 1, 2)]);
        let s = star2(&g, &e12);
        assert!((s - star_oracle(g.matrix(), &e12)).max_abs() < EXACT_TOL);
        // sqrt(det g) * g^11 g^22 = 2 * 1/4
        assert!((s - Fiber2Form::from_terms(&[(0.5, 3, 4)])).max_abs() < EXACT_TOL);
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        for _ in 0..200 {
            let g = random_metric(&mut rng);
            let a = random_form(&mut rng);
            assert!((star2(&g, &a) - star_oracle(g.matrix(), &a)).max_abs() < 1e-11);
        }
    }

    #[test]
    fn star_pairing_convention() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        for _ in 0..200 {
            let g = random_metric(&mut rng);
            let (a, b) = (random_form(&mut rng), random_form(&mut rng));
            // <a, *b>_g vol = a ∧ b, vol = sqrt(det g) dx1234
            let lhs = g.inner2(&a, &star2(&g, &b)) * g.sqrt_det();
            assert!((lhs - wedge2(&a, &b)).abs() < 1e-11);
        }
    }

    #[test]
    fn j_action_examples() {
        let j = FiberJ::standard();
        assert_eq!(j_act2(&j, &omega0()), omega0());
        let a = Fiber2Form::from_terms(&[(1.0, 1, 3), (-1.0, 2, 4)]);
        // dx13(Je_1, Je_3) = dx13(e2, e4) = 0, dx24(e2, e4) = 1 → −dx24 ...
        assert_eq!(j_act2(&j, &a), -a);
        let (p, m) = proj_j(&j, &Fiber2Form::from_terms(&[(1.0, 1, 3)]));
        assert_eq!(p, Fiber2Form::from_terms(&[(0.5, 1, 3), (0.5, 2, 4)]));
        assert_eq!(m, Fiber2Form::from_terms(&[(0.5, 1, 3), (-0.5, 2, 4)]));
        assert_eq!(proj_j(&j, &omega0()), (omega0(), Fiber2Form::ZERO));
    }

    #[test]
    fn j_action_matches_direct_evaluation() {
        // α(J·,J·) evaluated on basis vectors
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        for _ in 0..50 {
            let j = random_j(&mut rng);
            let a = random_form(&mut rng);
            let am = a.to_matrix();
            let ja = j_act2(&j, &a).to_matrix();
            for p in 0..4 {
                for q in 0..4 {
                    let (x, y) = (j.matrix().column(p), j.matrix().column(q));
                    let direct = (x.transpose() * am * y)[(0, 0)];
                    assert!((ja[(p, q)] - direct).abs() < 1e-12);
                }
            }
        }
    }

    #[test]
    fn involutions_and_splittings() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        for _ in 0..10_000 {
            let g = random_metric(&mut rng);
            let j = random_j(&mut rng);
            let a = random_form(&mut rng);
            let scale = a.max_abs();
            assert!((star2(&g, &star2(&g, &a)) - a).max_abs() < 1e-11 * scale.max(1.0));
            assert!((j_act2(&j, &j_act2(&j, &a)) - a).max_abs() < 1e-11);
            let (p, m) = proj_j(&j, &a);
            assert!((p + m - a).max_abs() < EXACT_TOL);
            assert!((j_act2(&j, &p) - p).max_abs() < 1e-11);
            assert!((j_act2(&j, &m) + m).max_abs() < 1e-11);
            let (sd, asd) = proj_g(&g, &a);
            assert!((star2(&g, &sd) - sd).max_abs() < 1e-11);
            assert!((star2(&g, &asd) + asd).max_abs() < 1e-11);
        }
    }

    #[test]
    fn proj_g_examples() {
        let g = FiberMetric::identity();
        let e12 = Fiber2Form::from_terms(&[(1.0, 1, 2)]);
        let (sd, asd) = proj_g(&g, &e12);
        assert_eq!(sd, Fiber2Form::from_terms(&[(0.5, 1, 2), (0.5, 3, 4)]));
        assert_eq!(asd, Fiber2Form::from_terms(&[(0.5, 1, 2), (-0.5, 3, 4)]));
        assert_eq!(proj_g(&g, &omega0()), (omega0(), Fiber2Form::ZERO));
        let mut rng = ChaCha8Rng::seed_from_u64(6);
        for _ in 0..500 {
            let g = random_metric(&mut rng);
            let a = random_form(&mut rng);
            let (sd, asd) = proj_g(&g, &a);
            assert!(wedge2(&sd, &asd).abs() < 1e-12);
            let total = g.inner2(&a, &a);
            assert!((total - g.inner2(&sd, &sd) - g.inner2(&asd, &asd)).abs() < 1e-11 * total);
        }
    }

    #[test]
    fn fiber_dimension_counts() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        for _ in 0..20 {
            let j = random_j(&mut rng);
            let g = compatible_metric(&j, &random_metric(&mut rng));
            let pj = operator_matrix(|a| proj_j(&j, a).0);
            let mj = operator_matrix(|a| proj_j(&j, a).1);
            let pg = operator_matrix(|a| proj_g(&g, a).0);
            let mg = operator_matrix(|a| proj_g(&g, a).1);
            assert_eq!(range_basis(&pj).len(), 4);
            assert_eq!(range_basis(&mj).len(), 2);
            assert_eq!(range_basis(&pg).len(), 3);
            assert_eq!(range_basis(&mg).len(), 3);
        }
    }

    /// Λ_J^+ = span{ω} ⊕ Λ_g^- and Λ_g^+ = span{ω} ⊕ Λ_J^- for a compatible pair.
    #[test]
    fn type_decomposition_as_projector_ranges() {
        let mut rng = ChaCha8Rng::seed_from_u64(8);
        for _ in 0..50 {
            let j = random_j(&mut rng);
            let g = compatible_metric(&j, &random_metric(&mut rng));
            let omega = fundamental_form(&j, &g);
            let pj = operator_matrix(|a| proj_j(&j, a).0);
            let mj = operator_matrix(|a| proj_j(&j, a).1);
            let pg = operator_matrix(|a| proj_g(&g, a).0);
            let mg = operator_matrix(|a| proj_g(&g, a).1);
            // ω is J-invariant and self-dual
            assert!((j_act2(&j, &omega) - omega).max_abs() < 1e-10);
            assert!((star2(&g, &omega) - omega).max_abs() < 1e-10);
            // every ASD form is J-invariant; every anti-invariant form is SD
            for b in range_basis(&mg) {
                assert!((pj * nalgebra::Vector6::from(b.0) - nalgebra::Vector6::from(b.0)).amax() < 1e-10);
            }
            for b in range_basis(&mj) {
                assert!((pg * nalgebra::Vector6::from(b.0) - nalgebra::Vector6::from(b.0)).amax() < 1e-10);
                assert!(g.inner2(&b, &omega).abs() < 1e-10);
            }
        }
    }

    #[test]
    fn margin_examples() {
        let j = FiberJ::standard();
        assert!((positivity_margin(&j, &omega0()) - 1.0).abs() < EXACT_TOL);
        assert!((positivity_margin(&j, &-omega0()) + 1.0).abs() < EXACT_TOL);
        for &(f, b1) in &[(1.0, 0.3), (0.7, -0.9), (2.0, 1.5)] {
            let w = omega0() * f + Fiber2Form::from_terms(&[(b1, 1, 2), (-b1, 3, 4)]);
            let ev = SymmetricEigen::new(taming_matrix(&j, &w)).eigenvalues;
            let mut ev: Vec<f64> = ev.iter().copied().collect();
            ev.sort_by(f64::total_cmp);
            let (lo, hi) = (f - b1.abs(), f + b1.abs());
            let expected = [lo, lo, hi, hi];
            for (a, b) in ev.iter().zip(expected) {
                assert!((a - b).abs() < 1e-12);
            }
            assert!((positivity_margin(&j, &w) - (f - b1.abs())).abs() < 1e-12);
        }
    }

    #[test]
    fn anti_invariant_part_does_not_change_taming() {
        let j = FiberJ::standard();
        let a = Fiber2Form::from_terms(&[(2.0, 1, 3), (-2.0, 2, 4)]);
        assert!(taming_matrix(&j, &a).abs().max() < EXACT_TOL);
        assert!((positivity_margin(&j, &(omega0() + a)) - 1.0).abs() < EXACT_TOL);
    }

    #[test]
    fn soc_examples() {
        let j = FiberJ::standard();
        let g = FiberMetric::identity();
        let c = soc_coordinates(&j, &g, &omega0()).unwrap();
        assert_eq!((c.f, c.b), (1.0, [0.0; 3]));
        let w = omega0() + Fiber2Form::from_terms(&[(0.5, 1, 2), (-0.5, 3, 4)]);
        let c = soc_coordinates(&j, &g, &w).unwrap();
        assert!((c.f - 1.0).abs() < 1e-12);
        assert!((c.b[0] - 0.5).abs() < 1e-12 && c.b[1].abs() < 1e-12 && c.b[2].abs() < 1e-12);
        let bad = Fiber2Form::from_terms(&[(1.0, 1, 3)]);
        assert!(matches!(soc_coordinates(&j, &g, &bad), Err(Error::NotInvariant { .. })));
    }

    #[test]
    fn adapted_frame_is_consistent() {
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        for _ in 0..200 {
            let j = random_j(&mut rng);
            let g = compatible_metric(&j, &random_metric(&mut rng));
            let frame = AdaptedFrame::new(&j, &g).unwrap();
            assert!((frame.omega - fundamental_form(&j, &g)).max_abs() < 1e-10);
            for a in frame.asd {
                assert!((j_act2(&j, &a) - a).max_abs() < 1e-10);
                assert!((star2(&g, &a) + a).max_abs() < 1e-10);
                assert!((g.inner2(&a, &a) - 2.0).abs() < 1e-10);
            }
            let e = frame.vectors;
            assert!((e.transpose() * g.matrix() * e - Matrix4::identity()).abs().max() < 1e-10);
        }
    }

    #[test]
    fn soc_criterion_matches_eigen_oracle() {
        let mut rng = ChaCha8Rng::seed_from_u64(10);
        for _ in 0..20_000 {
            let j = random_j(&mut rng);
            let g = compatible_metric(&j, &random_metric(&mut rng));
            let w = proj_j(&j, &random_form(&mut rng)).0;
            let c = soc_coordinates(&j, &g, &w).unwrap();
            let frame = AdaptedFrame::new(&j, &g).unwrap();
            assert!((c.reconstruct(&frame) - w).max_abs() < 1e-10);
            let m = positivity_margin(&j, &w);
            assert_eq!(m > 0.0, c.cone_margin() > 0.0);
            let rel = positivity_margin_relative(&j, &g, &w);
            assert!((rel - c.cone_margin()).abs() < 1e-10);
        }
    }

    #[test]
    fn soc_projection_examples() {
        assert_eq!(project_soc_point(2.0, [0.5, 0.0, 0.0], 0.1), (2.0, [0.5, 0.0, 0.0]));
        assert_eq!(project_soc_point(-1.0, [0.0; 3], 0.0), (0.0, [0.0; 3]));
        assert_eq!(project_soc_point(0.0, [1.0, 0.0, 0.0], 0.0), (0.5, [0.5, 0.0, 0.0]));
    }

    #[test]
    fn soc_projection_matches_one_dimensional_search() {
        // the projection of (f, b) keeps the direction of b, so it is the
        // nearest point on the boundary ray family (s + ε, s·b̂), s ≥ 0,
        // or the point itself when already inside
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        for _ in 0..200 {
            let f = rng.gen_range(-2.0..2.0);
            let b: [f64; 3] = std::array::from_fn(|_| rng.gen_range(-2.0..2.0));
            let eps = rng.gen_range(0.0..0.3);
            let (pf, pb) = project_soc_point(f, b, eps);
            let nb = b.iter().map(|v| v * v).sum::<f64>().sqrt();
            if f >= nb + eps {
                continue;
            }
            let dist = |s: f64| {
                let bf = s / nb;
                (f - s - eps).powi(2) + b.iter().map(|v| (v - v * bf).powi(2)).sum::<f64>()
            };
            let (mut lo, mut hi) = (0.0, 4.0);
            for _ in 0..200 {
                let m1 = lo + (hi - lo) / 3.0;
                let m2 = hi - (hi - lo) / 3.0;
                if dist(m1) < dist(m2) {
                    hi = m2;
                } else {
                    lo = m1;
                }
            }
            let s = 0.5 * (lo + hi);
            assert!((pf - (s + eps)).abs() < 1e-6);
            for i in 0..3 {
                assert!((pb[i] - b[i] * s / nb).abs() < 1e-6);
            }
        }
    }
}
