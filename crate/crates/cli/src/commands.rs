use std::collections::BTreeMap;
use std::path::Path;
use std::time::Instant;

use clap::ValueEnum;
use jforms::cone::{self, FeasibilityResult, Status as SolveStatus};
use jforms::fields::band_limited_form;
use jforms::fiber::{self, soc_coordinates, AdaptedFrame};
use jforms::grid::io::read_form;
use jforms::hodge;
use jforms::jfield::{self, invariant_report, make_recipe_j, modified_complex_cohomology, proj_field_g, JSetting, Which};
use jforms::{FormField, Grid, MetricField};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde_json::{json, Value};
use thiserror::Error;

use crate::config::{build_metric, AlphaRecipe, ConfigError, ExperimentConfig};
use crate::report::{Status, Table};
use crate::suite;

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
pub enum Command {
    Betti,
    HodgeDecompose,
    AsdPartner,
    Invariants,
    Complexes,
    RankIdentity,
    Tame,
    Compat,
    TamedToCompatible,
    VerifySuite,
}

impl Command {
    pub fn name(self) -> &'static str {
        match self {
            Command::Betti => "betti",
            Command::HodgeDecompose => "hodge-decompose",
            Command::AsdPartner => "asd-partner",
            Command::Invariants => "invariants",
            Command::Complexes => "complexes",
            Command::RankIdentity => "rank-identity",
            Command::Tame => "tame",
            Command::Compat => "compat",
            Command::TamedToCompatible => "tamed-to-compatible",
            Command::VerifySuite => "verify-suite",
        }
    }
}

#[derive(Debug, Error)]
pub enum CliError {
    #[error(transparent)]
    Config(#[from] ConfigError),
    #[error("invalid input: {0}")]
    Input(jforms::Error),
    #[error("computation failed: {0}")]
    Compute(jforms::Error),
    #[error("cannot write output: {0}")]
    Output(#[from] std::io::Error),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Config(_) | CliError::Input(_) => 2,
            CliError::Compute(_) | CliError::Output(_) => 1,
        }
    }
}

impl From<jforms::Error> for CliError {
    fn from(e: jforms::Error) -> Self {
        use jforms::Error as E;
        match e {
            E::Discretization(_)
            | E::CgNotConverged { .. }
            | E::NoSpectralGap { .. }
            | E::RankAmbiguous { .. }
            | E::LinearAlgebra(_)
            | E::Diverged { .. } => CliError::Compute(e),
            _ => CliError::Input(e),
        }
    }
}

pub type CliResult<T> = Result<T, CliError>;

pub struct Context {
    pub config: ExperimentConfig,
    pub seed: u64,
}

impl Context {
    pub fn grid(&self) -> CliResult<Grid> {
        Ok(self.config.grid()?)
    }

    pub fn metric(&self, grid: &Grid) -> CliResult<MetricField> {
        Ok(build_metric(grid, &self.config.metric)?)
    }

    pub fn setting(&self, grid: &Grid) -> CliResult<JSetting> {
        let j = make_recipe_j(grid, &self.config.j.recipe())?;
        Ok(JSetting::new(grid, j, self.metric(grid)?)?)
    }

    fn rng(&self, salt: u64) -> ChaCha8Rng {
        ChaCha8Rng::seed_from_u64(self.seed ^ salt.wrapping_mul(0x9e37_79b9_7f4a_7c15))
    }
}

/// Everything a command produces besides the report envelope.
#[derive(Default)]
pub struct Output {
    pub status: Option<Status>,
    pub result: Value,
    pub tables: Vec<Table>,
    pub forms: Vec<(String, Grid, FormField)>,
    pub fiber_dump: Option<Value>,
    pub steps: BTreeMap<String, f64>,
}

impl Output {
    fn new(status: Status, result: Value) -> Self {
        Output {
            status: Some(status),
            result,
            ..Default::default()
        }
    }
}

pub fn run(command: Command, ctx: &Context) -> CliResult<Output> {
    let mut out = match command {
        Command::Betti => betti(ctx)?,
        Command::HodgeDecompose => hodge_decompose(ctx)?,
        Command::AsdPartner => partner(ctx)?,
        Command::Invariants => invariants(ctx)?,
        Command::Complexes => complexes(ctx)?,
        Command::RankIdentity => rank_identity(ctx)?,
        Command::Tame => tame(ctx)?,
        Command::Compat => compat(ctx)?,
        Command::TamedToCompatible => tamed_to_compatible(ctx)?,
        Command::VerifySuite => suite::command(ctx)?,
    };
    if ctx.config.output.fiber_dump && out.fiber_dump.is_none() {
        let grid = ctx.grid()?;
        out.fiber_dump = Some(fiber_dump(&ctx.setting(&grid)?)?);
    }
    Ok(out)
}

fn to_value<T: serde::Serialize>(v: &T) -> Value {
    serde_json::to_value(v).expect("report types serialize")
}

fn read_input(path: &Path, grid: &Grid) -> CliResult<FormField> {
    let (g, form) = read_form(path)?;
    if g.n() != grid.n() || g.periods() != grid.periods() {
        return Err(CliError::Input(jforms::Error::Invalid(format!(
            "{} lives on n = {:?}, L = {:?}, the configured grid is n = {:?}, L = {:?}",
            path.display(),
            g.n(),
            g.periods(),
            grid.n(),
            grid.periods()
        ))));
    }
    Ok(form)
}

fn sweep_sizes(ctx: &Context) -> &[usize] {
    &ctx.config.options.sweep
}

fn betti(ctx: &Context) -> CliResult<Output> {
    let grid = ctx.grid()?;
    let g = ctx.metric(&grid)?;
    let r = hodge::betti_numbers(&grid, &g, ctx.config.options.dim_budget)?;
    let mut out = Output::new(
        Status::Pass,
        json!({
            "b": r.b,
            "bplus": r.bplus,
            "bminus": r.bminus,
            "star_eigenvalues": r.star_eigenvalues,
            "harmonic": to_value(&r.bases),
        }),
    );
    if !sweep_sizes(ctx).is_empty() {
        let mut t = Table::new("betti", &["n", "b0", "b1", "b2", "b3", "b4", "bplus", "bminus", "worst_gap"]);
        for &n in sweep_sizes(ctx) {
            let grid = ctx.config.cube(n)?;
            let r = hodge::betti_numbers(&grid, &ctx.metric(&grid)?, ctx.config.options.dim_budget)?;
            let gap = r.bases.iter().map(|b| b.gap).fold(0.0, f64::max);
            let mut row = vec![n.to_string()];
            row.extend(r.b.iter().map(|v| v.to_string()));
            row.extend([r.bplus.to_string(), r.bminus.to_string(), format!("{gap:e}")]);
            t.push(row);
        }
        out.tables.push(t);
    }
    Ok(out)
}

fn hodge_decompose(ctx: &Context) -> CliResult<Output> {
    let grid = ctx.grid()?;
    let g = ctx.metric(&grid)?;
    let a = match &ctx.config.options.input {
        Some(p) => read_input(p, &grid)?,
        None => FormField::random(&grid, ctx.config.options.degree, &mut ctx.rng(1)),
    };
    let d = hodge::hodge_decompose(&grid, &g, &a)?;
    let norm = |f: &FormField| jforms::grid::norm(&grid, &g, f);
    let ok = d.residual <= 1e-8 && d.orthogonality <= 1e-8;
    let mut out = Output::new(
        Status::from_bool(ok),
        json!({
            "degree": a.degree(),
            "norm_input": norm(&a),
            "norm_exact": norm(&d.exact),
            "norm_coexact": norm(&d.coexact),
            "norm_harmonic": norm(&d.harmonic),
            "residual": d.residual,
            "orthogonality": d.orthogonality,
            "cg_iterations": d.cg_iterations,
            "tolerance": 1e-8,
        }),
    );
    out.forms = vec![
        ("input".into(), grid.clone(), a),
        ("exact".into(), grid.clone(), d.exact),
        ("coexact".into(), grid.clone(), d.coexact),
        ("harmonic".into(), grid, d.harmonic),
    ];
    Ok(out)
}

/// Partner of a self-dual input (or, mirrored, of an anti-self-dual one).
fn partner(ctx: &Context) -> CliResult<Output> {
    let grid = ctx.grid()?;
    let g = ctx.metric(&grid)?;
    let a = match &ctx.config.options.input {
        Some(p) => read_input(p, &grid)?,
        None => proj_field_g(&g, &band_limited_form(&grid, 2, 4, 2, &mut ctx.rng(2))).0,
    };
    let (sd, asd) = proj_field_g(&g, &a);
    let self_dual = jforms::grid::norm(&grid, &g, &asd) <= jforms::grid::norm(&grid, &g, &sd);
    let p = if self_dual {
        hodge::asd_partner(&grid, &g, &a)?
    } else {
        hodge::sd_partner(&grid, &g, &a)?
    };
    let mut out = Output::new(
        Status::Pass,
        json!({
            "input": if self_dual { "self_dual" } else { "anti_self_dual" },
            "d_defect": p.d_defect,
            "duality_defect": p.duality_defect,
            "tolerances": {"d_defect": hodge::PARTNER_D_TOL, "duality_defect": hodge::PARTNER_DUALITY_TOL},
        }),
    );
    out.forms = vec![("input".into(), grid.clone(), a), ("partner".into(), grid, p.beta)];
    Ok(out)
}

fn invariants(ctx: &Context) -> CliResult<Output> {
    let grid = ctx.grid()?;
    let s = ctx.setting(&grid)?;
    let r = invariant_report(&s)?;
    let ok = r.h_minus + r.h_plus == r.b2 && r.h_minus_le_b_plus && r.h_plus_ge_b_minus;
    let mut out = Output::new(Status::from_bool(ok), to_value(&r));
    if !sweep_sizes(ctx).is_empty() {
        let mut t = Table::new("invariants", &["n", "h_minus", "h_plus", "b_plus", "b_minus", "dim_T_g", "method"]);
        for &n in sweep_sizes(ctx) {
            let grid = ctx.config.cube(n)?;
            let r = invariant_report(&ctx.setting(&grid)?)?;
            t.push(vec![
                n.to_string(),
                r.h_minus.to_string(),
                r.h_plus.to_string(),
                r.b_plus.to_string(),
                r.b_minus.to_string(),
                r.dim_t_g.to_string(),
                r.h_minus_evidence.method.clone(),
            ]);
        }
        out.tables.push(t);
    }
    Ok(out)
}

struct Complexes {
    value: Value,
    consistent: bool,
    plus: Vec<usize>,
    minus: Vec<usize>,
}

fn complexes_on(s: &JSetting) -> CliResult<Complexes> {
    let inv = invariant_report(s)?;
    let plus = modified_complex_cohomology(s, Which::Plus)?;
    let minus = modified_complex_cohomology(s, Which::Minus)?;
    let b = inv.betti;
    let plus_ok = plus.dims == [b[0], b[1], inv.h_plus, b[3], b[4]];
    let minus_ok = minus.dims[..3] == [b[0], b[1], inv.h_minus] && minus.dims[4] == b[4];
    let kernels_ok = minus.kernel_d1 == minus.kernel_dj;
    Ok(Complexes {
        value: json!({
            "plus": to_value(&plus),
            "minus": to_value(&minus),
            "h_plus": inv.h_plus,
            "h_minus": inv.h_minus,
            "betti": b,
            "plus_matches": plus_ok,
            "minus_matches": minus_ok,
            "kernel_equality": kernels_ok,
        }),
        consistent: plus_ok && minus_ok && kernels_ok,
        plus: plus.dims,
        minus: minus.dims,
    })
}

fn complexes(ctx: &Context) -> CliResult<Output> {
    let grid = ctx.grid()?;
    let c = complexes_on(&ctx.setting(&grid)?)?;
    let mut out = Output::new(Status::from_bool(c.consistent), c.value);
    if !sweep_sizes(ctx).is_empty() {
        let mut t = Table::new("complexes", &["n", "complex", "H0", "H1", "H2", "H3", "H4"]);
        for &n in sweep_sizes(ctx) {
            let grid = ctx.config.cube(n)?;
            let c = complexes_on(&ctx.setting(&grid)?)?;
            for (name, dims) in [("plus", &c.plus), ("minus", &c.minus)] {
                let mut row = vec![n.to_string(), name.to_string()];
                row.extend(dims.iter().map(|v| v.to_string()));
                t.push(row);
            }
        }
        out.tables.push(t);
    }
    Ok(out)
}

fn rank_identity(ctx: &Context) -> CliResult<Output> {
    let grid = ctx.grid()?;
    let r = jfield::rank_identity(&ctx.setting(&grid)?, ctx.seed)?;
    Ok(Output::new(Status::from_bool(r.passed()), to_value(&r)))
}

pub fn build_alpha(setting: &JSetting, recipe: &AlphaRecipe) -> CliResult<FormField> {
    Ok(match recipe {
        AlphaRecipe::Zero => FormField::zeros(&setting.grid, 2),
        AlphaRecipe::Constant { direction, amplitude } => cone::constant_anti_invariant(setting, *direction, *amplitude),
        AlphaRecipe::BandLimited { amplitude, modes, seed } => {
            cone::band_limited_anti_invariant(setting, *amplitude, *modes, *seed)
        }
        AlphaRecipe::File { path } => read_input(path, &setting.grid)?,
    })
}

fn solve_status(r: &FeasibilityResult) -> Status {
    match r.status {
        SolveStatus::Feasible => Status::Pass,
        SolveStatus::Undetermined => Status::Undetermined,
    }
}

fn tame(ctx: &Context) -> CliResult<Output> {
    let grid = ctx.grid()?;
    let s = ctx.setting(&grid)?;
    let alpha = build_alpha(&s, &ctx.config.options.alpha)?;
    let r = cone::tame(&s, &alpha, ctx.config.solver)?;
    let mut out = Output::new(
        solve_status(&r),
        json!({"alpha_amplitude": cone::amplitude(&s, &alpha), "solve": to_value(&r)}),
    );
    out.forms.push(("alpha".into(), grid.clone(), alpha));
    if let Some(w) = r.omega {
        out.forms.push(("omega".into(), grid, w));
    }
    Ok(out)
}

fn compat(ctx: &Context) -> CliResult<Output> {
    let grid = ctx.grid()?;
    let s = ctx.setting(&grid)?;
    let r = cone::compat(&s, ctx.config.solver)?;
    let mut out = Output::new(solve_status(&r), json!({"solve": to_value(&r)}));
    if let Some(w) = r.omega {
        out.forms.push(("omega".into(), grid, w));
    }
    Ok(out)
}

fn tamed_to_compatible(ctx: &Context) -> CliResult<Output> {
    let grid = ctx.grid()?;
    let s = ctx.setting(&grid)?;
    let mut result = serde_json::Map::new();
    let tamed = match &ctx.config.options.tamed {
        Some(p) => read_input(p, &grid)?,
        None => {
            let alpha = build_alpha(&s, &ctx.config.options.alpha)?;
            let r = cone::tame(&s, &alpha, ctx.config.solver)?;
            result.insert("tame".into(), to_value(&r));
            match r.omega {
                Some(w) => w,
                None => return Ok(Output::new(Status::Undetermined, Value::Object(result))),
            }
        }
    };
    let r = cone::tamed_to_compatible(&s, &tamed, ctx.config.solver)?;
    result.insert("compatible".into(), to_value(&r));
    let mut out = Output::new(solve_status(&r), Value::Object(result));
    out.forms.push(("tamed".into(), grid.clone(), tamed));
    if let Some(w) = r.omega {
        out.forms.push(("compatible".into(), grid, w));
    }
    Ok(out)
}

/// Fiber-level data at grid point 0: `{basis, inputs, outputs}`.
pub fn fiber_dump(s: &JSetting) -> CliResult<Value> {
    let j = s.j.at(0);
    let g0 = s.g0.at(0);
    let gj = s.cache.g_j.at(0);
    let omega = s.cache.omega_g.fiber2(0);
    let frame = AdaptedFrame::new(j, gj)?;
    let mat = |m: &nalgebra::Matrix4<f64>| -> Vec<Vec<f64>> { (0..4).map(|r| (0..4).map(|c| m[(r, c)]).collect()).collect() };
    let soc = soc_coordinates(j, gj, &omega)?;
    Ok(json!({
        "basis": jforms::exterior::component_names(2),
        "inputs": {"point": 0, "J": mat(j.matrix()), "g0": mat(g0.matrix())},
        "outputs": {
            "g_J": mat(gj.matrix()),
            "omega_g": omega.0,
            "frame_vectors": mat(&frame.vectors),
            "anti_self_dual_invariant": frame.asd.iter().map(|f| f.0).collect::<Vec<_>>(),
            "plus_basis": (0..s.plus.rank).map(|i| s.plus.at(0, i).0).collect::<Vec<_>>(),
            "minus_basis": (0..s.minus.rank).map(|i| s.minus.at(0, i).0).collect::<Vec<_>>(),
            "omega_soc": to_value(&soc),
            "omega_margin": fiber::positivity_margin_relative(j, gj, &omega),
        },
    }))
}

/// Wall-clock helper for step timings.
pub fn timed<T>(steps: &mut BTreeMap<String, f64>, name: &str, f: impl FnOnce() -> T) -> T {
    let t = Instant::now();
    let v = f();
    steps.insert(name.into(), t.elapsed().as_secs_f64());
    v
}
