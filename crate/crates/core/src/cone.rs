//! Conic feasibility over the J-positive cone: tamed forms with a
//! prescribed anti-invariant part, compatible forms, and the passage from a
//! tamed form to a compatible one.
//!
//! A J-invariant 2-form is written pointwise as `f·ω_g + Σ bᵢ ωᵢ⁻` in the
//! adapted frame of the compatible metric; it is J-positive with relative
//! margin `f − |b|`. With unknowns `x = (f, b₁, b₂, b₃)` and
//! `D x = d(f·ω_g + Σ bᵢ ωᵢ⁻)`, the problem is to find `x` in
//! `{Dx = rhs} ∩ {f ≥ |b| + ε}`, solved by over-relaxed alternating
//! projections (ADMM on the indicator splitting).

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::fiber::{self, Fiber2Form};
use crate::grid::{ext_d, ext_d_transpose, norm, FormField, Grid};
use crate::jfield::{proj_field_j, JSetting};
use crate::linalg::{self, CgOptions, LinearOperator};

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SolverOptions {
    /// Cone margin in units of `ω_g`.
    pub epsilon: f64,
    pub budget: usize,
    pub relaxation: f64,
    /// Kept for configuration compatibility; with pure indicator functions
    /// the iteration does not depend on it.
    pub penalty: f64,
    pub cg_tol: f64,
}

impl Default for SolverOptions {
    fn default() -> Self {
        SolverOptions {
            epsilon: 1e-3,
            budget: 10_000,
            relaxation: 1.6,
            penalty: 1.0,
            cg_tol: 1e-10,
        }
    }
}

/// Acceptance thresholds of the a-posteriori validation.
pub const CLOSED_TOL: f64 = 1e-6;
pub const ANTI_INVARIANT_TOL: f64 = 1e-10;

/// `x ↦ d(f·ω_g + Σ bᵢ ωᵢ⁻)` with unknowns laid out `[f | b₁ | b₂ | b₃]`.
pub struct ConeOperator<'a> {
    pub grid: &'a Grid,
    pub setting: &'a JSetting,
}

impl ConeOperator<'_> {
    pub fn unknowns(&self) -> usize {
        4 * self.grid.len()
    }

    /// The J-invariant 2-form with frame coordinates `x`.
    pub fn compose(&self, x: &[f64]) -> FormField {
        let n = self.grid.len();
        let frames = &self.setting.cache.frames;
        let mut out = FormField::zeros(self.grid, 2);
        for p in 0..n {
            out.set_fiber2(p, &frames[p].compose(x[p], [x[n + p], x[2 * n + p], x[3 * n + p]]));
        }
        out
    }

    /// Transpose of [`ConeOperator::compose`] in coefficient inner products.
    pub fn compose_transpose(&self, a: &FormField) -> Vec<f64> {
        let n = self.grid.len();
        let frames = &self.setting.cache.frames;
        let mut x = vec![0.0; 4 * n];
        for p in 0..n {
            let v = a.fiber2(p);
            x[p] = frames[p].omega.dot(&v);
            for i in 0..3 {
                x[(i + 1) * n + p] = frames[p].asd[i].dot(&v);
            }
        }
        x
    }

    pub fn apply(&self, x: &[f64]) -> Vec<f64> {
        ext_d(self.grid, &self.compose(x)).expect("2-form").into_vec()
    }

    pub fn apply_transpose(&self, y: &[f64]) -> Vec<f64> {
        let y = FormField::from_vec(self.grid, 3, y.to_vec()).expect("3-form size");
        self.compose_transpose(&ext_d_transpose(self.grid, &y).expect("3-form"))
    }
}

/// `D Dᵀ` on 3-forms.
struct NormalOp<'a, 'b>(&'b ConeOperator<'a>);

impl LinearOperator for NormalOp<'_, '_> {
    fn dim(&self) -> usize {
        4 * self.0.grid.len()
    }
    fn apply(&self, y: &[f64]) -> Vec<f64> {
        self.0.apply(&self.0.apply_transpose(y))
    }
}

/// One feasibility problem: find `ω⁺` in the cone with `dω⁺ = rhs`; the
/// certified form is `offset + ω⁺`, whose anti-invariant part must equal
/// `target_minus`.
pub struct ConeProblem<'a> {
    pub setting: &'a JSetting,
    pub rhs: FormField,
    pub offset: FormField,
    pub target_minus: FormField,
    pub options: SolverOptions,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum Status {
    Feasible,
    Undetermined,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct IterationRecord {
    pub iteration: usize,
    /// `|x − z|`: distance between the affine and cone iterates.
    pub primal_gap: f64,
    /// `|Dx − rhs| / max(|rhs|, |Dx|)` after the affine projection.
    pub affine_residual: f64,
    /// `min_x (f − |b|)` of the affine iterate.
    pub min_cone_margin: f64,
    pub cg_iterations: usize,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Validation {
    /// `|dω| / |ω|` in the compatible metric.
    pub closedness: f64,
    /// `max |ω_J^- − target|`.
    pub anti_invariant_error: f64,
    /// Smallest taming eigenvalue of `ω(·, J·)` relative to `g_J` over the grid.
    pub min_margin: f64,
    /// Smallest Euclidean taming eigenvalue.
    pub min_margin_euclidean: f64,
    /// Fraction of points with relative margin at least `ε/2`.
    pub positive_fraction: f64,
    pub passed: bool,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct FeasibilityResult {
    pub status: Status,
    #[serde(skip)]
    pub omega: Option<FormField>,
    /// The solved cone variable `ω⁺` (without the offset).
    #[serde(skip)]
    pub plus: Option<FormField>,
    pub validation: Option<Validation>,
    pub epsilon: f64,
    pub iterations: usize,
    /// Factor applied to `ω` by [`compat`] so that the mean of `f` is 1.
    pub normalization: Option<f64>,
    pub history: Vec<IterationRecord>,
}

impl FeasibilityResult {
    pub fn is_feasible(&self) -> bool {
        self.status == Status::Feasible
    }

    pub fn closedness(&self) -> Option<f64> {
        self.validation.map(|v| v.closedness)
    }

    pub fn min_margin(&self) -> Option<f64> {
        self.validation.map(|v| v.min_margin)
    }
}

/// Least-norm correction of `x` onto `{Dx = rhs}` by CG on `DDᵀy = Dx − rhs`,
/// warm-started from `y`. Returns `(x', cg_iterations, relative residual)`.
pub fn project_affine(
    op: &ConeOperator,
    rhs: &[f64],
    x: &[f64],
    y: &mut Vec<f64>,
    tol: f64,
) -> Result<(Vec<f64>, usize, f64)> {
    let dx = op.apply(x);
    let r: Vec<f64> = dx.iter().zip(rhs).map(|(a, b)| a - b).collect();
    let scale = linalg::dot(rhs, rhs).sqrt().max(linalg::dot(&dx, &dx).sqrt());
    let rn = linalg::dot(&r, &r).sqrt();
    if rn <= tol * scale + 1e-12 {
        return Ok((x.to_vec(), 0, if scale > 0.0 { rn / scale } else { rn }));
    }
    let normal = NormalOp(op);
    let out = linalg::conjugate_gradient(
        &normal,
        &r,
        Some(y.as_slice()),
        CgOptions {
            rel: 0.0,
            abs: tol * scale + 1e-12,
            max_iter: 20 * op.unknowns(),
        },
    );
    let iterations = out.iterations;
    *y = out.into_result()?;
    let dty = op.apply_transpose(y);
    let xp: Vec<f64> = x.iter().zip(&dty).map(|(a, b)| a - b).collect();
    let dxp = op.apply(&xp);
    let res = dxp.iter().zip(rhs).map(|(a, b)| (a - b) * (a - b)).sum::<f64>().sqrt();
    Ok((xp, iterations, if scale > 0.0 { res / scale } else { res }))
}

/// Pointwise Euclidean projection onto `{f ≥ |b| + ε}`.
pub fn project_soc(x: &[f64], eps: f64) -> Vec<f64> {
    let n = x.len() / 4;
    let mut out = x.to_vec();
    for p in 0..n {
        let (f, b) = fiber::project_soc_point(x[p], [x[n + p], x[2 * n + p], x[3 * n + p]], eps);
        out[p] = f;
        for i in 0..3 {
            out[(i + 1) * n + p] = b[i];
        }
    }
    out
}

/// `min_x (f − |b|)`.
pub fn min_cone_margin(x: &[f64]) -> f64 {
    let n = x.len() / 4;
    (0..n)
        .map(|p| x[p] - (x[n + p].powi(2) + x[2 * n + p].powi(2) + x[3 * n + p].powi(2)).sqrt())
        .fold(f64::INFINITY, f64::min)
}

/// Independent a-posteriori checks of a candidate form.
pub fn validate(setting: &JSetting, omega: &FormField, target_minus: &FormField, eps: f64) -> Result<Validation> {
    let grid = &setting.grid;
    let g = &setting.cache.g_j;
    let d = ext_d(grid, omega)?;
    let on = norm(grid, g, omega);
    let closedness = if on > 0.0 { norm(grid, g, &d) / on } else { f64::INFINITY };
    let minus = proj_field_j(&setting.j, omega).1;
    let anti_invariant_error = minus.sub(target_minus).max_abs();
    let mut min_margin = f64::INFINITY;
    let mut min_margin_euclidean = f64::INFINITY;
    let mut positive = 0usize;
    for p in 0..grid.len() {
        let w = omega.fiber2(p);
        let m = fiber::positivity_margin_relative(setting.j.at(p), g.at(p), &w);
        min_margin = min_margin.min(m);
        min_margin_euclidean = min_margin_euclidean.min(fiber::positivity_margin(setting.j.at(p), &w));
        if m >= eps / 2.0 {
            positive += 1;
        }
    }
    let scale = target_minus.max_abs().max(1.0);
    let passed = closedness <= CLOSED_TOL
        && anti_invariant_error <= ANTI_INVARIANT_TOL * scale
        && positive == grid.len();
    Ok(Validation {
        closedness,
        anti_invariant_error,
        min_margin,
        min_margin_euclidean,
        positive_fraction: positive as f64 / grid.len() as f64,
        passed,
    })
}

/// Alternating projections with relaxation between `{Dx = rhs}` and the
/// pointwise cone. Stops with a validated certificate as soon as the affine
/// iterate has cone margin `≥ ε/2`, or reports `Undetermined` after `budget`
/// iterations.
pub fn solve_feasibility(problem: &ConeProblem) -> Result<FeasibilityResult> {
    let setting = problem.setting;
    let grid = &setting.grid;
    let opts = problem.options;
    if !(opts.epsilon > 0.0) {
        return Err(Error::Invalid(format!("margin ε = {} must be positive", opts.epsilon)));
    }
    if !(opts.relaxation > 0.0 && opts.relaxation < 2.0) {
        return Err(Error::Invalid(format!("relaxation {} must lie in (0, 2)", opts.relaxation)));
    }
    let rhs_form = &problem.rhs;
    let drhs = ext_d(grid, rhs_form)?;
    let hmin = grid.spacing().into_iter().fold(f64::INFINITY, f64::min);
    if drhs.max_abs() > 1e-10 * (rhs_form.max_abs() / hmin).max(1e-300) {
        return Err(Error::InconsistentRhs {
            residual: drhs.max_abs(),
        });
    }
    let op = ConeOperator { grid, setting };
    let rhs = rhs_form.as_slice();
    let n = grid.len();
    // start from ω_g
    let mut z = vec![0.0; 4 * n];
    z[..n].iter_mut().for_each(|v| *v = 1.0);
    let mut u = vec![0.0; 4 * n];
    let mut y = vec![0.0; 4 * n];
    let mut history = Vec::new();
    let alpha = opts.relaxation;

    for it in 1..=opts.budget {
        let v: Vec<f64> = z.iter().zip(&u).map(|(a, b)| a - b).collect();
        let (x, cg_iterations, affine_residual) = project_affine(&op, rhs, &v, &mut y, opts.cg_tol)?;
        if x.iter().any(|v| !v.is_finite()) {
            return Err(Error::Diverged { iteration: it });
        }
        let margin = min_cone_margin(&x);
        let primal_gap = x.iter().zip(&z).map(|(a, b)| (a - b).powi(2)).sum::<f64>().sqrt();
        history.push(IterationRecord {
            iteration: it,
            primal_gap,
            affine_residual,
            min_cone_margin: margin,
            cg_iterations,
        });
        if margin >= opts.epsilon / 2.0 {
            let plus = op.compose(&x);
            let omega = problem.offset.add(&plus);
            let validation = validate(setting, &omega, &problem.target_minus, opts.epsilon)?;
            if validation.passed {
                return Ok(FeasibilityResult {
                    status: Status::Feasible,
                    omega: Some(omega),
                    plus: Some(plus),
                    validation: Some(validation),
                    epsilon: opts.epsilon,
                    iterations: it,
                    normalization: None,
                    history,
                });
            }
        }
        let xh: Vec<f64> = x.iter().zip(&z).map(|(a, b)| alpha * a + (1.0 - alpha) * b).collect();
        let w: Vec<f64> = xh.iter().zip(&u).map(|(a, b)| a + b).collect();
        z = project_soc(&w, opts.epsilon);
        for i in 0..u.len() {
            u[i] += xh[i] - z[i];
        }
    }
    Ok(FeasibilityResult {
        status: Status::Undetermined,
        omega: None,
        plus: None,
        validation: None,
        epsilon: opts.epsilon,
        iterations: opts.budget,
        normalization: None,
        history,
    })
}

fn check_anti_invariant(setting: &JSetting, alpha: &FormField) -> Result<()> {
    if alpha.degree() != 2 {
        return Err(Error::DegreeMismatch {
            expected: 2,
            found: alpha.degree(),
        });
    }
    let plus = proj_field_j(&setting.j, alpha).0;
    let residual = plus.max_abs();
    if residual > ANTI_INVARIANT_TOL * alpha.max_abs().max(1.0) {
        return Err(Error::NotAntiInvariant { residual });
    }
    Ok(())
}

/// A tamed symplectic form whose J-anti-invariant part is `α`.
pub fn tame(setting: &JSetting, alpha: &FormField, options: SolverOptions) -> Result<FeasibilityResult> {
    check_anti_invariant(setting, alpha)?;
    let rhs = ext_d(&setting.grid, alpha)?.scaled(-1.0);
    solve_feasibility(&ConeProblem {
        setting,
        rhs,
        offset: alpha.clone(),
        target_minus: alpha.clone(),
        options,
    })
}

/// A compatible symplectic form, scaled so that the volume-weighted mean
/// of its `ω_g` coefficient is 1.
pub fn compat(setting: &JSetting, options: SolverOptions) -> Result<FeasibilityResult> {
    let zero = FormField::zeros(&setting.grid, 2);
    let mut res = tame(setting, &zero, options)?;
    if let Some(omega) = res.omega.take() {
        let f = mean_omega_coefficient(setting, &omega);
        let s = 1.0 / f;
        let omega = omega.scaled(s);
        res.plus = res.plus.map(|p| p.scaled(s));
        res.validation = Some(validate(setting, &omega, &zero, options.epsilon)?);
        res.normalization = Some(s);
        res.omega = Some(omega);
    }
    Ok(res)
}

/// Volume-weighted mean of `f = ½⟨ω, ω_g⟩_g`.
pub fn mean_omega_coefficient(setting: &JSetting, omega: &FormField) -> f64 {
    let g = &setting.cache.g_j;
    let (mut num, mut den) = (0.0, 0.0);
    for p in 0..setting.grid.len() {
        let w = g.at(p).sqrt_det();
        num += w * 0.5 * g.at(p).inner2(&omega.fiber2(p), &setting.cache.omega_g.fiber2(p));
        den += w;
    }
    num / den
}

/// Given a closed taming `ω = ω_J^+ + ω_J^-`, finds `ω̃⁺` in the cone with
/// `dω̃⁺ = dω_J^-` and returns the compatible form `ω_J^+ + ω̃⁺`.
pub fn tamed_to_compatible(setting: &JSetting, tamed: &FormField, options: SolverOptions) -> Result<FeasibilityResult> {
    let grid = &setting.grid;
    let g = &setting.cache.g_j;
    let on = norm(grid, g, tamed);
    let closed = norm(grid, g, &ext_d(grid, tamed)?) / on.max(f64::MIN_POSITIVE);
    if closed > CLOSED_TOL {
        return Err(Error::NotClosed { residual: closed });
    }
    let margin = (0..grid.len())
        .map(|p| fiber::positivity_margin_relative(setting.j.at(p), g.at(p), &tamed.fiber2(p)))
        .fold(f64::INFINITY, f64::min);
    if !(margin > 0.0) {
        return Err(Error::NotTaming { margin });
    }
    let (plus, minus) = proj_field_j(&setting.j, tamed);
    solve_feasibility(&ConeProblem {
        setting,
        rhs: ext_d(grid, &minus)?,
        offset: plus,
        target_minus: FormField::zeros(grid, 2),
        options,
    })
}

/// Smallest `n ≥ 0` (with 0.5% overshoot) making `nω + θ` tame `J` at every
/// point: the largest generalized eigenvalue of `−S_θ` relative to `S_ω`,
/// where `S` is the symmetrized `(·)(·, J·)`.
pub fn scale_shift(setting: &JSetting, theta: &FormField, omega: &FormField) -> Result<f64> {
    let mut worst: f64 = 0.0;
    for p in 0..setting.grid.len() {
        let j = setting.j.at(p);
        let s_omega = fiber::taming_matrix(j, &omega.fiber2(p));
        let chol = s_omega.cholesky().ok_or(Error::NotTaming {
            margin: fiber::positivity_margin(j, &omega.fiber2(p)),
        })?;
        let linv = chol.l().try_inverse().expect("Cholesky factor is invertible");
        let s_theta = fiber::taming_matrix(j, &theta.fiber2(p));
        let m = -(linv * s_theta * linv.transpose());
        let lmax = nalgebra::SymmetricEigen::new(m).eigenvalues.max();
        worst = worst.max(lmax);
    }
    Ok(worst * 1.005)
}

/// `max_x √(|α|²_g / 2)`; each unit frame form has amplitude 1.
pub fn amplitude(setting: &JSetting, alpha: &FormField) -> f64 {
    let g = &setting.cache.g_j;
    (0..setting.grid.len())
        .map(|p| (0.5 * g.at(p).norm2(&alpha.fiber2(p)).powi(2)).sqrt())
        .fold(0.0, f64::max)
}

/// Constant-coefficient anti-invariant directions: the anti-invariant
/// frame forms `ωᵢ⁻` that are J-anti-invariant (for `J₀` these are
/// `dx¹³ − dx²⁴` and `dx¹⁴ + dx²³`), at the given amplitude.
pub fn constant_anti_invariant(setting: &JSetting, which: usize, amp: f64) -> FormField {
    let grid = &setting.grid;
    // pointwise anti-invariant basis from the J-type splitting of the frame
    let mut out = FormField::zeros(grid, 2);
    for p in 0..grid.len() {
        let frame = &setting.cache.frames[p];
        let basis = anti_invariant_frame(frame);
        out.set_fiber2(p, &(basis[which] * amp));
    }
    out
}

/// The two frame forms `θ¹³ − θ²⁴` and `θ¹⁴ + θ²³`, which span `Λ_J^-`.
fn anti_invariant_frame(frame: &fiber::AdaptedFrame) -> [Fiber2Form; 2] {
    let coframe = frame.vectors.try_inverse().expect("frame is invertible");
    let to_coords = |terms: &[(f64, usize, usize)]| {
        let f = Fiber2Form::from_terms(terms).to_matrix();
        Fiber2Form::from_matrix(&(coframe.transpose() * f * coframe))
    };
    [
        to_coords(&[(1.0, 1, 3), (-1.0, 2, 4)]),
        to_coords(&[(1.0, 1, 4), (1.0, 2, 3)]),
    ]
}

/// A seeded band-limited J-anti-invariant field at the given amplitude.
pub fn band_limited_anti_invariant(setting: &JSetting, amp: f64, modes: usize, seed: u64) -> FormField {
    let grid = &setting.grid;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let raw = crate::fields::band_limited_form(grid, 2, modes, 2, &mut rng);
    let minus = proj_field_j(&setting.j, &raw).1;
    let a = amplitude(setting, &minus);
    if a == 0.0 {
        minus
    } else {
        minus.scaled(amp / a)
    }
}
