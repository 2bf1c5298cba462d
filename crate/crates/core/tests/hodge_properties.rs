mod common;

use jforms::grid::{ext_d, inner, norm};
use jforms::hodge::{asd_partner, betti_numbers, hodge_decompose, sd_partner};
use jforms::jfield::proj_field_g;
use jforms::{fields, linalg, oracle, FormField, Grid, MetricField};
use proptest::prelude::*;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

proptest! {
    #![proptest_config(ProptestConfig::with_cases(12))]

    #[test]
    fn decomposition_reconstructs_and_is_orthogonal(seed in any::<u64>(), amp in 0.0f64..0.4, k in 0usize..=4) {
        let grid = Grid::cube(3).unwrap();
        let g = common::wavy_metric(&grid, amp, seed as f64 * 1e-3);
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let a = FormField::random(&grid, k, &mut rng);
        let d = hodge_decompose(&grid, &g, &a).unwrap();
        let sum = d.exact.add(&d.coexact).add(&d.harmonic);
        let an = norm(&grid, &g, &a);
        prop_assert!(norm(&grid, &g, &sum.sub(&a)) <= 1e-8 * an);
        for (x, y) in [(&d.exact, &d.coexact), (&d.exact, &d.harmonic), (&d.coexact, &d.harmonic)] {
            prop_assert!(inner(&grid, &g, x, y).unwrap().abs() <= 1e-8 * an * an);
        }
        // agreement with explicit dense projectors
        let [ex, co, ha] = oracle::hodge_parts(&grid, &g, &a).unwrap();
        for (x, y) in [(&d.exact, &ex), (&d.coexact, &co), (&d.harmonic, &ha)] {
            prop_assert!(x.sub(y).max_abs() <= 1e-8 * a.max_abs());
        }
    }

    #[test]
    fn partners_keep_d_and_flip_duality(seed in any::<u64>(), amp in 0.0f64..0.4) {
        let grid = Grid::cube(5).unwrap();
        let g = common::wavy_metric(&grid, amp, seed as f64 * 1e-3);
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let (sd, asd) = proj_field_g(&g, &fields::band_limited_form(&grid, 2, 4, 2, &mut rng));
        for (a, self_dual) in [(sd, true), (asd, false)] {
            let p = if self_dual { asd_partner(&grid, &g, &a) } else { sd_partner(&grid, &g, &a) }.unwrap();
            let da = ext_d(&grid, &a).unwrap();
            let db = ext_d(&grid, &p.beta).unwrap();
            prop_assert!(norm(&grid, &g, &db.sub(&da)) <= 1e-8 * norm(&grid, &g, &da));
            let sign = if self_dual { 1.0 } else { -1.0 };
            let defect = g.star2(&p.beta).scaled(sign).add(&p.beta);
            prop_assert!(norm(&grid, &g, &defect) <= 1e-6 * norm(&grid, &g, &p.beta));
        }
    }
}

#[test]
fn partner_rejects_wrong_duality() {
    let grid = Grid::cube(3).unwrap();
    let g = MetricField::flat(&grid);
    let asd = FormField::constant(&grid, 2, &[1.0, 0.0, 0.0, 0.0, 0.0, -1.0]);
    assert!(asd_partner(&grid, &g, &asd).is_err());
    assert!(sd_partner(&grid, &g, &asd).is_ok());
}

/// Dense rank of `d` on the span of pointwise projections of all unit fields.
fn rank_of_d_on(grid: &Grid, project: impl Fn(&FormField) -> FormField) -> usize {
    let n = grid.len();
    let cols = 6 * n;
    let m = linalg::dense_from_columns(4 * n, cols, |c| {
        let mut e = FormField::zeros(grid, 2);
        e.as_mut_slice()[c] = 1.0;
        ext_d(grid, &project(&e)).unwrap().into_vec()
    });
    linalg::dense_rank(&m).unwrap().rank
}

#[test]
fn self_dual_and_anti_self_dual_fields_have_the_same_image() {
    let grid = Grid::cube(3).unwrap();
    let g = common::wavy_metric(&grid, 0.3, 0.4);
    let full = rank_of_d_on(&grid, |e| e.clone());
    let plus = rank_of_d_on(&grid, |e| proj_field_g(&g, e).0);
    let minus = rank_of_d_on(&grid, |e| proj_field_g(&g, e).1);
    // rank–nullity on 3⁴: rank d₁ = 4N − b₁ − rank d₀ = 324 − 4 − 80, rank d₂ = 6N − b₂ − rank d₁
    assert_eq!(full, 486 - 6 - 240);
    assert_eq!(plus, full);
    assert_eq!(minus, full);
}

#[test]
fn betti_numbers_with_a_curved_metric() {
    for n in [3, 5] {
        let grid = Grid::cube(n).unwrap();
        let r = betti_numbers(&grid, &common::wavy_metric(&grid, 0.25, 0.1), 8).unwrap();
        assert_eq!(r.b, [1, 4, 6, 4, 1]);
        assert_eq!((r.bplus, r.bminus), (3, 3));
    }
}
