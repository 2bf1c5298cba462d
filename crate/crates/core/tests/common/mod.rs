#![allow(dead_code)]

use jforms::fiber::{FiberJ, FiberMetric};
use jforms::{Grid, MetricField};
use nalgebra::Matrix4;
use rand::Rng;

/// A well-conditioned orientation-preserving conjugator.
pub fn conjugator(rng: &mut impl Rng) -> Matrix4<f64> {
    loop {
        let mut p = Matrix4::from_fn(|i, k| if i == k { 1.0 } else { 0.0 } + rng.gen_range(-0.8..0.8));
        if p.determinant() < 0.0 {
            p.column_mut(0).neg_mut();
        }
        let cond = p.try_inverse().map_or(f64::INFINITY, |inv| p.norm() * inv.norm());
        if cond < 20.0 {
            return p;
        }
    }
}

pub fn random_j(rng: &mut impl Rng) -> FiberJ {
    FiberJ::conjugated(&conjugator(rng)).unwrap()
}

pub fn random_metric(rng: &mut impl Rng) -> FiberMetric {
    let a = Matrix4::from_fn(|_, _| rng.gen_range(-1.0..1.0));
    FiberMetric::new(a * a.transpose() + Matrix4::identity() * 0.3).unwrap()
}

/// Smooth diagonal metric field with entries in `[1 − amp, 1 + amp]`.
pub fn wavy_metric(grid: &Grid, amp: f64, phase: f64) -> MetricField {
    use std::f64::consts::PI;
    MetricField::from_fn(grid, |x| {
        FiberMetric::diagonal(std::array::from_fn(|i| {
            1.0 + amp * (2.0 * PI * x[(i + 1) % 4] + phase * (i as f64 + 1.0)).sin()
        }))
    })
    .unwrap()
}
