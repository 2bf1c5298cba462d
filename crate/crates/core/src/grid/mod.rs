//! Periodic 4-grids, collocated form fields, the centered-difference
//! exterior derivative and its metric adjoint.

pub mod io;

pub use io::{read_form, write_form, FormContainer};

use nalgebra::Matrix4;
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::exterior::{self, DTerm};
use crate::fiber::{self, Fiber2Form, FiberMetric};

/// A periodic grid with `n[i]` points (odd, ≥ 3) on a period `l[i]`.
#[derive(Clone, Debug)]
pub struct Grid {
    n: [usize; 4],
    l: [f64; 4],
    h: [f64; 4],
    len: usize,
    forward: [Vec<u32>; 4],
    backward: [Vec<u32>; 4],
}

impl PartialEq for Grid {
    fn eq(&self, other: &Self) -> bool {
        self.n == other.n && self.l == other.l
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct GridSpec {
    pub n: [usize; 4],
    #[serde(rename = "L")]
    pub l: [f64; 4],
}

impl Grid {
    pub fn new(n: [usize; 4], l: [f64; 4]) -> Result<Self> {
        let mut problems = Vec::new();
        for i in 0..4 {
            if n[i] < 3 || n[i] % 2 == 0 {
                problems.push(format!("n[{i}] = {} must be odd and at least 3", n[i]));
            }
            if !(l[i] > 0.0 && l[i].is_finite()) {
                problems.push(format!("L[{i}] = {} must be a positive finite period", l[i]));
            }
        }
        if !problems.is_empty() {
            return Err(Error::InvalidGrid(problems.join("; ")));
        }
        let len: usize = n.iter().product();
        if len > u32::MAX as usize {
            return Err(Error::InvalidGrid("too many points".into()));
        }
        let h = std::array::from_fn(|i| l[i] / n[i] as f64);
        let mut grid = Grid {
            n,
            l,
            h,
            len,
            forward: Default::default(),
            backward: Default::default(),
        };
        for axis in 0..4 {
            let (fw, bw): (Vec<u32>, Vec<u32>) = (0..len)
                .map(|p| (grid.shifted(p, axis, 1) as u32, grid.shifted(p, axis, -1) as u32))
                .unzip();
            grid.forward[axis] = fw;
            grid.backward[axis] = bw;
        }
        Ok(grid)
    }

    /// `n⁴` points on the unit 4-torus.
    pub fn cube(n: usize) -> Result<Self> {
        Self::new([n; 4], [1.0; 4])
    }

    pub fn from_spec(spec: &GridSpec) -> Result<Self> {
        Self::new(spec.n, spec.l)
    }

    pub fn spec(&self) -> GridSpec {
        GridSpec { n: self.n, l: self.l }
    }

    pub fn n(&self) -> [usize; 4] {
        self.n
    }

    pub fn periods(&self) -> [f64; 4] {
        self.l
    }

    pub fn spacing(&self) -> [f64; 4] {
        self.h
    }

    pub fn len(&self) -> usize {
        self.len
    }

    pub fn is_empty(&self) -> bool {
        self.len == 0
    }

    pub fn cell_volume(&self) -> f64 {
        self.h.iter().product()
    }

    /// Row-major multi-index of a point (last axis fastest).
    pub fn coords(&self, mut p: usize) -> [usize; 4] {
        let mut c = [0; 4];
        for axis in (0..4).rev() {
            c[axis] = p % self.n[axis];
            p /= self.n[axis];
        }
        c
    }

    pub fn index(&self, c: [usize; 4]) -> usize {
        ((c[0] * self.n[1] + c[1]) * self.n[2] + c[2]) * self.n[3] + c[3]
    }

    pub fn position(&self, p: usize) -> [f64; 4] {
        let c = self.coords(p);
        std::array::from_fn(|i| c[i] as f64 * self.h[i])
    }

    fn shifted(&self, p: usize, axis: usize, by: isize) -> usize {
        let mut c = self.coords(p);
        let n = self.n[axis] as isize;
        c[axis] = ((c[axis] as isize + by).rem_euclid(n)) as usize;
        self.index(c)
    }

    /// `out += scale · (f(x + hₐeₐ) − f(x − hₐeₐ)) / (2hₐ)`.
    fn centered_diff_add(&self, axis: usize, f: &[f64], scale: f64, out: &mut [f64]) {
        let c = scale / (2.0 * self.h[axis]);
        let (fw, bw) = (&self.forward[axis], &self.backward[axis]);
        for p in 0..self.len {
            out[p] += c * (f[fw[p] as usize] - f[bw[p] as usize]);
        }
    }

    /// Smallest nonzero singular value of the centered gradient,
    /// `minᵢ sin(π/nᵢ)/hᵢ`.
    pub fn gradient_gap(&self) -> f64 {
        (0..4)
            .map(|i| (std::f64::consts::PI / self.n[i] as f64).sin() / self.h[i])
            .fold(f64::INFINITY, f64::min)
    }
}

/// A k-form on the grid: `C(4,k)` component arrays, component-major.
#[derive(Clone, Debug, PartialEq)]
pub struct FormField {
    degree: usize,
    points: usize,
    data: Vec<f64>,
}

impl FormField {
    pub fn zeros(grid: &Grid, degree: usize) -> Self {
        assert!(degree <= 4, "degree {degree} > 4");
        FormField {
            degree,
            points: grid.len(),
            data: vec![0.0; exterior::components(degree) * grid.len()],
        }
    }

    pub fn from_vec(grid: &Grid, degree: usize, data: Vec<f64>) -> Result<Self> {
        if degree > 4 {
            return Err(Error::InvalidDegree { op: "FormField", degree });
        }
        let expected = exterior::components(degree) * grid.len();
        if data.len() != expected {
            return Err(Error::ShapeMismatch {
                expected,
                found: data.len(),
            });
        }
        Ok(FormField {
            degree,
            points: grid.len(),
            data,
        })
    }

    /// Samples `f(position, component)`.
    pub fn from_fn(grid: &Grid, degree: usize, f: impl Fn([f64; 4], usize) -> f64) -> Self {
        let mut out = Self::zeros(grid, degree);
        for c in 0..out.components() {
            for p in 0..grid.len() {
                out.data[c * grid.len() + p] = f(grid.position(p), c);
            }
        }
        out
    }

    /// Constant coefficients at every point.
    pub fn constant(grid: &Grid, degree: usize, coeffs: &[f64]) -> Self {
        assert_eq!(coeffs.len(), exterior::components(degree));
        Self::from_fn(grid, degree, |_, c| coeffs[c])
    }

    pub fn random(grid: &Grid, degree: usize, rng: &mut impl Rng) -> Self {
        let mut out = Self::zeros(grid, degree);
        out.data.iter_mut().for_each(|v| *v = rng.gen_range(-1.0..1.0));
        out
    }

    pub fn degree(&self) -> usize {
        self.degree
    }

    pub fn points(&self) -> usize {
        self.points
    }

    pub fn components(&self) -> usize {
        exterior::components(self.degree)
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.data
    }

    pub fn as_mut_slice(&mut self) -> &mut [f64] {
        &mut self.data
    }

    pub fn into_vec(self) -> Vec<f64> {
        self.data
    }

    pub fn component(&self, c: usize) -> &[f64] {
        &self.data[c * self.points..(c + 1) * self.points]
    }

    pub fn component_mut(&mut self, c: usize) -> &mut [f64] {
        &mut self.data[c * self.points..(c + 1) * self.points]
    }

    pub fn get(&self, point: usize, c: usize) -> f64 {
        self.data[c * self.points + point]
    }

    pub fn set(&mut self, point: usize, c: usize, v: f64) {
        self.data[c * self.points + point] = v;
    }

    /// Coefficients of a 2-form at one point.
    pub fn fiber2(&self, point: usize) -> Fiber2Form {
        assert_eq!(self.degree, 2);
        Fiber2Form(std::array::from_fn(|c| self.get(point, c)))
    }

    pub fn set_fiber2(&mut self, point: usize, v: &Fiber2Form) {
        assert_eq!(self.degree, 2);
        for c in 0..6 {
            self.set(point, c, v.0[c]);
        }
    }

    /// Applies a pointwise map to a 2-form field.
    pub fn map_fiber2(&self, f: impl Fn(usize, &Fiber2Form) -> Fiber2Form) -> FormField {
        let mut out = self.clone();
        for p in 0..self.points {
            out.set_fiber2(p, &f(p, &self.fiber2(p)));
        }
        out
    }

    pub fn max_abs(&self) -> f64 {
        self.data.iter().fold(0.0, |m, v| m.max(v.abs()))
    }

    /// Euclidean norm of the coefficient vector.
    pub fn l2(&self) -> f64 {
        self.data.iter().map(|v| v * v).sum::<f64>().sqrt()
    }

    pub fn dot(&self, other: &FormField) -> f64 {
        self.data.iter().zip(&other.data).map(|(a, b)| a * b).sum()
    }

    pub fn scaled(&self, s: f64) -> FormField {
        let mut out = self.clone();
        out.data.iter_mut().for_each(|v| *v *= s);
        out
    }

    /// `self += s · other`.
    pub fn axpy(&mut self, s: f64, other: &FormField) {
        assert_eq!(self.degree, other.degree);
        for (a, b) in self.data.iter_mut().zip(&other.data) {
            *a += s * b;
        }
    }

    pub fn add(&self, other: &FormField) -> FormField {
        let mut out = self.clone();
        out.axpy(1.0, other);
        out
    }

    pub fn sub(&self, other: &FormField) -> FormField {
        let mut out = self.clone();
        out.axpy(-1.0, other);
        out
    }

    /// Periodic translation by whole grid steps: `out(x) = self(x − shift)`.
    pub fn translate(&self, grid: &Grid, shift: [isize; 4]) -> FormField {
        let mut out = self.clone();
        for p in 0..grid.len() {
            let c = grid.coords(p);
            let target = grid.index(std::array::from_fn(|i| {
                (c[i] as isize + shift[i]).rem_euclid(grid.n[i] as isize) as usize
            }));
            for comp in 0..self.components() {
                out.data[comp * self.points + target] = self.data[comp * self.points + p];
            }
        }
        out
    }

    fn check(&self, grid: &Grid) -> Result<()> {
        if self.points != grid.len() {
            return Err(Error::ShapeMismatch {
                expected: grid.len(),
                found: self.points,
            });
        }
        Ok(())
    }
}

/// Exterior derivative with centered differences.
pub fn ext_d(grid: &Grid, a: &FormField) -> Result<FormField> {
    a.check(grid)?;
    let k = a.degree;
    if k >= 4 {
        return Err(Error::InvalidDegree { op: "ext_d", degree: k });
    }
    let mut out = FormField::zeros(grid, k + 1);
    for DTerm { out: o, axis, input, sign } in exterior::d_terms(k) {
        let n = grid.len();
        let (src, dst) = (&a.data[input * n..(input + 1) * n], &mut out.data[o * n..(o + 1) * n]);
        grid.centered_diff_add(axis, src, sign, dst);
    }
    Ok(out)
}

/// Transpose of [`ext_d`] in the Euclidean coefficient inner product,
/// mapping (k+1)-forms to k-forms. Centered differences are skew-adjoint.
pub fn ext_d_transpose(grid: &Grid, c: &FormField) -> Result<FormField> {
    c.check(grid)?;
    let k1 = c.degree;
    if k1 == 0 {
        return Err(Error::InvalidDegree {
            op: "ext_d_transpose",
            degree: 0,
        });
    }
    let mut out = FormField::zeros(grid, k1 - 1);
    let n = grid.len();
    for DTerm { out: o, axis, input, sign } in exterior::d_terms(k1 - 1) {
        let (src, dst) = (&c.data[o * n..(o + 1) * n], &mut out.data[input * n..(input + 1) * n]);
        grid.centered_diff_add(axis, src, -sign, dst);
    }
    Ok(out)
}

/// Pointwise metric field with cached mass matrices
/// `√det g · Λᵏ(g⁻¹)` and their inverses for every degree.
#[derive(Clone, Debug)]
pub struct MetricField {
    points: Vec<FiberMetric>,
    flat: bool,
    mass: [Vec<f64>; 5],
    mass_inv: [Vec<f64>; 5],
}

impl MetricField {
    /// The Euclidean metric at every point.
    pub fn flat(grid: &Grid) -> Self {
        Self::build(vec![FiberMetric::identity(); grid.len()], true)
    }

    pub fn from_points(grid: &Grid, points: Vec<FiberMetric>) -> Result<Self> {
        if points.len() != grid.len() {
            return Err(Error::ShapeMismatch {
                expected: grid.len(),
                found: points.len(),
            });
        }
        let flat = points.iter().all(|g| *g.matrix() == Matrix4::identity());
        Ok(Self::build(points, flat))
    }

    pub fn from_fn(grid: &Grid, f: impl Fn([f64; 4]) -> Result<FiberMetric>) -> Result<Self> {
        let points = (0..grid.len()).map(|p| f(grid.position(p))).collect::<Result<Vec<_>>>()?;
        Self::from_points(grid, points)
    }

    fn build(points: Vec<FiberMetric>, flat: bool) -> Self {
        let mut mass: [Vec<f64>; 5] = Default::default();
        let mut mass_inv: [Vec<f64>; 5] = Default::default();
        if !flat {
            for k in 0..=4 {
                let c = exterior::components(k);
                let mut m = Vec::with_capacity(points.len() * c * c);
                let mut mi = Vec::with_capacity(points.len() * c * c);
                for g in &points {
                    let gram = exterior::induced_gram(k, g.inverse());
                    let dm = nalgebra::DMatrix::from_row_slice(c, c, &gram) * g.sqrt_det();
                    let inv = dm.clone().try_inverse().expect("induced Gram matrix is SPD");
                    m.extend(dm.transpose().iter());
                    mi.extend(inv.transpose().iter());
                }
                mass[k] = m;
                mass_inv[k] = mi;
            }
        }
        MetricField {
            points,
            flat,
            mass,
            mass_inv,
        }
    }

    pub fn is_flat(&self) -> bool {
        self.flat
    }

    pub fn at(&self, p: usize) -> &FiberMetric {
        &self.points[p]
    }

    pub fn points(&self) -> &[FiberMetric] {
        &self.points
    }

    fn apply_block(&self, table: &[Vec<f64>; 5], a: &FormField) -> FormField {
        if self.flat {
            return a.clone();
        }
        let k = a.degree;
        let c = exterior::components(k);
        let n = a.points;
        let m = &table[k];
        let mut out = FormField {
            degree: k,
            points: n,
            data: vec![0.0; a.data.len()],
        };
        let mut local = [0.0; 6];
        for p in 0..n {
            for (i, slot) in local.iter_mut().enumerate().take(c) {
                *slot = a.data[i * n + p];
            }
            let block = &m[p * c * c..(p + 1) * c * c];
            for i in 0..c {
                let mut s = 0.0;
                for j in 0..c {
                    s += block[i * c + j] * local[j];
                }
                out.data[i * n + p] = s;
            }
        }
        out
    }

    /// `√det g · Λᵏ(g⁻¹) a` pointwise.
    pub fn apply_mass(&self, a: &FormField) -> FormField {
        self.apply_block(&self.mass, a)
    }

    pub fn apply_mass_inv(&self, a: &FormField) -> FormField {
        self.apply_block(&self.mass_inv, a)
    }

    /// Pointwise Hodge star on 2-forms.
    pub fn star2(&self, a: &FormField) -> FormField {
        assert_eq!(a.degree, 2);
        a.map_fiber2(|p, v| fiber::star2(&self.points[p], v))
    }

    /// Pointwise Hodge star in any degree.
    pub fn star(&self, a: &FormField) -> FormField {
        let k = a.degree;
        let n = a.points;
        let mut out = FormField {
            degree: 4 - k,
            points: n,
            data: vec![0.0; exterior::components(4 - k) * n],
        };
        let c = exterior::components(k);
        for p in 0..n {
            let local: Vec<f64> = (0..c).map(|i| a.data[i * n + p]).collect();
            let g = &self.points[p];
            let s = exterior::hodge_star(k, g.inverse(), g.sqrt_det(), &local);
            for (i, v) in s.into_iter().enumerate() {
                out.data[i * n + p] = v;
            }
        }
        out
    }
}

/// `Σₓ ⟨a, b⟩_g(x) √det g(x) Πhᵢ`.
pub fn inner(grid: &Grid, g: &MetricField, a: &FormField, b: &FormField) -> Result<f64> {
    a.check(grid)?;
    b.check(grid)?;
    if a.degree != b.degree {
        return Err(Error::DegreeMismatch {
            expected: a.degree,
            found: b.degree,
        });
    }
    Ok(g.apply_mass(a).dot(b) * grid.cell_volume())
}

pub fn norm(grid: &Grid, g: &MetricField, a: &FormField) -> f64 {
    inner(grid, g, a, a).map(|v| v.max(0.0).sqrt()).unwrap_or(f64::NAN)
}

/// Codifferential: the adjoint of [`ext_d`] for [`inner`].
pub fn codiff(grid: &Grid, g: &MetricField, a: &FormField) -> Result<FormField> {
    if a.degree == 0 {
        return Err(Error::InvalidDegree { op: "codiff", degree: 0 });
    }
    let t = ext_d_transpose(grid, &g.apply_mass(a))?;
    Ok(g.apply_mass_inv(&t))
}
