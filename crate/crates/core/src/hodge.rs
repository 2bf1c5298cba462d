//! Hodge Laplacians, harmonic forms, Betti numbers and the Hodge
//! decomposition, together with the partner map that trades a self-dual
//! 2-form for an anti-self-dual one with the same exterior derivative.

use nalgebra::{DMatrix, SymmetricEigen};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::grid::{codiff, ext_d, inner, norm, FormField, Grid, MetricField};
use crate::linalg::{self, CgOptions, LinearOperator, NearKernel, NearKernelOptions};

/// CG relative tolerance for Hodge potentials.
pub const POTENTIAL_TOL: f64 = 1e-12;
/// Eigenvalues below this fraction of the largest count as harmonic.
pub const HARMONIC_CUTOFF: f64 = 1e-8;
/// Required kept/discarded eigenvalue ratio.
pub const HARMONIC_GAP: f64 = 1e-4;
/// Default block size of the harmonic eigensolver.
pub const DEFAULT_BUDGET: usize = 8;

/// `Δ = dδ + δd`.
pub fn laplacian(grid: &Grid, g: &MetricField, a: &FormField) -> Result<FormField> {
    let k = a.degree();
    let mut out = FormField::zeros(grid, k);
    if k > 0 {
        out.axpy(1.0, &ext_d(grid, &codiff(grid, g, a)?)?);
    }
    if k < 4 {
        out.axpy(1.0, &codiff(grid, g, &ext_d(grid, a)?)?);
    }
    Ok(out)
}

/// The Hodge Laplacian as a matrix-free operator, self-adjoint in the
/// metric inner product.
pub struct LaplacianOp<'a> {
    pub grid: &'a Grid,
    pub metric: &'a MetricField,
    pub degree: usize,
}

impl LaplacianOp<'_> {
    fn wrap(&self, x: &[f64]) -> FormField {
        FormField::from_vec(self.grid, self.degree, x.to_vec()).expect("operator dimension")
    }
}

impl LinearOperator for LaplacianOp<'_> {
    fn dim(&self) -> usize {
        crate::exterior::components(self.degree) * self.grid.len()
    }
    fn apply(&self, x: &[f64]) -> Vec<f64> {
        laplacian(self.grid, self.metric, &self.wrap(x)).expect("valid degree").into_vec()
    }
    fn inner(&self, a: &[f64], b: &[f64]) -> f64 {
        if self.metric.is_flat() {
            return linalg::dot(a, b) * self.grid.cell_volume();
        }
        inner(self.grid, self.metric, &self.wrap(a), &self.wrap(b)).expect("same degree")
    }
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct HarmonicBasis {
    pub degree: usize,
    #[serde(skip)]
    pub forms: Vec<FormField>,
    pub dim: usize,
    /// Ritz values of the whole block (kept and discarded), ascending.
    pub eigenvalues: Vec<f64>,
    pub lambda_max: f64,
    pub gap: f64,
    pub outer_iterations: usize,
}

fn harmonic_options(budget: usize, seed: u64) -> NearKernelOptions {
    NearKernelOptions {
        block: budget,
        cutoff: HARMONIC_CUTOFF,
        max_gap_ratio: HARMONIC_GAP,
        shift: 1e-3,
        residual: 1e-12,
        inner_tol: 1e-12,
        max_outer: 60,
        seed,
    }
}

/// Orthonormal basis of the near-kernel of `Δ_k` in the metric inner product.
pub fn harmonic_basis(grid: &Grid, g: &MetricField, degree: usize, dim_budget: usize) -> Result<HarmonicBasis> {
    if degree > 4 {
        return Err(Error::InvalidDegree {
            op: "harmonic_basis",
            degree,
        });
    }
    let op = LaplacianOp {
        grid,
        metric: g,
        degree,
    };
    let NearKernel {
        vectors,
        eigenvalues,
        lambda_max,
        count,
        gap_ratio,
        outer_iterations,
        ..
    } = linalg::near_kernel(&op, &harmonic_options(dim_budget, 0x4a7d + degree as u64))?;
    let forms = vectors
        .into_iter()
        .map(|v| FormField::from_vec(grid, degree, v).expect("dimension"))
        .collect();
    Ok(HarmonicBasis {
        degree,
        forms,
        dim: count,
        eigenvalues,
        lambda_max,
        gap: gap_ratio,
        outer_iterations,
    })
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct BettiReport {
    pub b: [usize; 5],
    pub bplus: usize,
    pub bminus: usize,
    pub bases: Vec<HarmonicBasis>,
    /// Eigenvalues of `⋆` on the harmonic 2-forms, ideally `±1`.
    pub star_eigenvalues: Vec<f64>,
}

impl BettiReport {
    pub fn harmonic2(&self) -> &[FormField] {
        &self.bases[2].forms
    }
}

/// Eigenvalues of `⋆` compressed to the span of `forms`, ascending.
fn star_signature(grid: &Grid, g: &MetricField, forms: &[FormField]) -> Result<Vec<f64>> {
    let m = forms.len();
    if m == 0 {
        return Ok(Vec::new());
    }
    let stars: Vec<FormField> = forms.iter().map(|h| g.star2(h)).collect();
    let mut gram = DMatrix::zeros(m, m);
    let mut star = DMatrix::zeros(m, m);
    for i in 0..m {
        for j in 0..m {
            gram[(i, j)] = inner(grid, g, &forms[i], &forms[j])?;
            star[(i, j)] = inner(grid, g, &forms[i], &stars[j])?;
        }
    }
    let star = (&star + star.transpose()) * 0.5;
    let eg = SymmetricEigen::new(gram);
    if eg.eigenvalues.min() <= 1e-12 * eg.eigenvalues.max() {
        return Err(Error::Discretization("harmonic 2-forms are linearly dependent".into()));
    }
    let inv_root = &eg.eigenvectors
        * DMatrix::from_diagonal(&eg.eigenvalues.map(|v| 1.0 / v.sqrt()))
        * eg.eigenvectors.transpose();
    let mut ev: Vec<f64> = SymmetricEigen::new(&inv_root * star * &inv_root).eigenvalues.iter().copied().collect();
    ev.sort_by(f64::total_cmp);
    Ok(ev)
}

/// `b₀..b₄` from harmonic bases and `b^±` as the signature of `⋆` on the
/// harmonic 2-forms. Eigenvalues away from `±1` mean the computed space is
/// not `⋆`-invariant and are reported as a discretization failure.
pub fn betti_numbers(grid: &Grid, g: &MetricField, dim_budget: usize) -> Result<BettiReport> {
    let bases = (0..=4)
        .map(|k| harmonic_basis(grid, g, k, dim_budget))
        .collect::<Result<Vec<_>>>()?;
    let b = std::array::from_fn(|k| bases[k].dim);
    let star_eigenvalues = star_signature(grid, g, &bases[2].forms)?;
    if let Some(bad) = star_eigenvalues.iter().find(|v| (v.abs() - 1.0).abs() > 1e-3) {
        return Err(Error::Discretization(format!("⋆ on harmonic 2-forms has eigenvalue {bad}")));
    }
    let bplus = star_eigenvalues.iter().filter(|&&v| v > 0.0).count();
    Ok(BettiReport {
        b,
        bplus,
        bminus: b[2] - bplus,
        bases,
        star_eigenvalues,
    })
}

#[derive(Clone, Debug)]
pub struct HodgeDecomposition {
    pub harmonic: FormField,
    /// `α₁` with exact part `dα₁` (absent for 0-forms).
    pub exact_potential: Option<FormField>,
    /// `Γ` with coexact part `δΓ` (absent for 4-forms).
    pub coexact_potential: Option<FormField>,
    pub exact: FormField,
    pub coexact: FormField,
    pub residual: f64,
    pub orthogonality: f64,
    pub cg_iterations: [usize; 2],
}

impl HodgeDecomposition {
    /// For 2-forms, the 1-form `α₂ = −*Γ`, so that `*dα₂ = δΓ`.
    pub fn coexact_one_form(&self, g: &MetricField) -> Option<FormField> {
        let gamma = self.coexact_potential.as_ref()?;
        (gamma.degree() == 3).then(|| g.star(gamma).scaled(-1.0))
    }
}

/// Solves `Δu = rhs`; `floor` is an absolute residual floor that absorbs
/// rounding noise in right-hand sides which vanish in exact arithmetic.
fn solve_laplacian(grid: &Grid, g: &MetricField, degree: usize, rhs: &FormField, floor: f64) -> Result<(FormField, usize)> {
    let op = LaplacianOp {
        grid,
        metric: g,
        degree,
    };
    let n = op.dim();
    let out = linalg::conjugate_gradient(
        &op,
        rhs.as_slice(),
        None,
        CgOptions {
            rel: POTENTIAL_TOL,
            abs: floor,
            max_iter: 20 * n,
        },
    );
    let iterations = out.iterations;
    let x = out.into_result()?;
    Ok((FormField::from_vec(grid, degree, x)?, iterations))
}

/// `a = h + dα₁ + δΓ` with `Δα₁ = δa` and `ΔΓ = da`; the right-hand sides
/// are orthogonal to harmonic forms, so the Krylov iterates never pick up
/// harmonic components.
pub fn hodge_decompose(grid: &Grid, g: &MetricField, a: &FormField) -> Result<HodgeDecomposition> {
    let k = a.degree();
    let mut iterations = [0, 0];
    let inv_h: f64 = grid.spacing().iter().map(|h| 1.0 / h).sum();
    let floor = 1e-14 * inv_h * norm(grid, g, a);
    let (exact_potential, exact) = if k > 0 {
        let (alpha1, it) = solve_laplacian(grid, g, k - 1, &codiff(grid, g, a)?, floor)?;
        iterations[0] = it;
        let ex = ext_d(grid, &alpha1)?;
        (Some(alpha1), ex)
    } else {
        (None, FormField::zeros(grid, k))
    };
    let (coexact_potential, coexact) = if k < 4 {
        let (gamma, it) = solve_laplacian(grid, g, k + 1, &ext_d(grid, a)?, floor)?;
        iterations[1] = it;
        let co = codiff(grid, g, &gamma)?;
        (Some(gamma), co)
    } else {
        (None, FormField::zeros(grid, k))
    };
    let harmonic = a.sub(&exact).sub(&coexact);
    let an = norm(grid, g, a).max(f64::MIN_POSITIVE);
    let recon = harmonic.add(&exact).add(&coexact);
    let residual = norm(grid, g, &a.sub(&recon)) / an;
    let pairs = [
        inner(grid, g, &harmonic, &exact)?,
        inner(grid, g, &harmonic, &coexact)?,
        inner(grid, g, &exact, &coexact)?,
    ];
    let orthogonality = pairs.iter().fold(0.0f64, |m, v| m.max(v.abs())) / (an * an);
    Ok(HodgeDecomposition {
        harmonic,
        exact_potential,
        coexact_potential,
        exact,
        coexact,
        residual,
        orthogonality,
        cg_iterations: iterations,
    })
}

/// Pre-condition tolerance on the wrong-duality part of a partner input.
pub const PARTNER_INPUT_TOL: f64 = 1e-8;
/// `|dβ − da| ≤ PARTNER_D_TOL·|da|`.
pub const PARTNER_D_TOL: f64 = 1e-8;
/// `|*β ± β| ≤ PARTNER_DUALITY_TOL·|β|`.
pub const PARTNER_DUALITY_TOL: f64 = 1e-6;

#[derive(Clone, Debug)]
pub struct Partner {
    pub beta: FormField,
    pub d_defect: f64,
    pub duality_defect: f64,
}

fn partner(grid: &Grid, g: &MetricField, a: &FormField, input_self_dual: bool) -> Result<Partner> {
    if a.degree() != 2 {
        return Err(Error::DegreeMismatch {
            expected: 2,
            found: a.degree(),
        });
    }
    let sign = if input_self_dual { 1.0 } else { -1.0 };
    let an = norm(grid, g, a);
    // wrong-duality part: (a ∓ *a)/2
    let wrong = a.sub(&g.star2(a).scaled(sign)).scaled(0.5);
    let wrong_rel = if an > 0.0 { norm(grid, g, &wrong) / an } else { 0.0 };
    if wrong_rel > PARTNER_INPUT_TOL {
        return Err(Error::WrongDuality {
            expected: if input_self_dual { "self-dual" } else { "anti-self-dual" },
            residual: wrong_rel,
        });
    }
    let dec = hodge_decompose(grid, g, a)?;
    let beta = dec.coexact.sub(&dec.exact);
    let da = ext_d(grid, a)?;
    let db = ext_d(grid, &beta)?;
    let dan = norm(grid, g, &da);
    let d_defect = if dan > 0.0 { norm(grid, g, &db.sub(&da)) / dan } else { norm(grid, g, &db) };
    let bn = norm(grid, g, &beta);
    // output should satisfy *β = −sign·β
    let defect = beta.add(&g.star2(&beta).scaled(sign));
    let duality_defect = if bn > 1e-14 * an.max(1.0) { norm(grid, g, &defect) / bn } else { 0.0 };
    if d_defect > PARTNER_D_TOL && dan > 0.0 {
        return Err(Error::Discretization(format!("|dβ − da|/|da| = {d_defect:e}")));
    }
    if duality_defect > PARTNER_DUALITY_TOL {
        return Err(Error::Discretization(format!("partner duality defect {duality_defect:e}")));
    }
    Ok(Partner {
        beta,
        d_defect,
        duality_defect,
    })
}

/// For self-dual `a = h + dα₁ + δΓ`, returns `β = δΓ − dα₁`, which is
/// anti-self-dual with `dβ = da`.
pub fn asd_partner(grid: &Grid, g: &MetricField, a: &FormField) -> Result<Partner> {
    partner(grid, g, a, true)
}

/// The mirrored map: anti-self-dual input, self-dual output.
pub fn sd_partner(grid: &Grid, g: &MetricField, a: &FormField) -> Result<Partner> {
    partner(grid, g, a, false)
}
