use jforms::cone::{self, SolverOptions};
use jforms::fiber::positivity_margin_relative;
use jforms::grid::ext_d;
use jforms::jfield::{make_recipe_j, proj_field_j, JRecipe, JSetting};
use jforms::{Grid, MetricField};
use proptest::prelude::*;

fn setting(amplitude: f64, seed: u64) -> JSetting {
    let grid = Grid::cube(5).unwrap();
    let j = make_recipe_j(&grid, &JRecipe::Conjugated { amplitude, modes: 2, seed }).unwrap();
    JSetting::new(&grid, j, MetricField::flat(&grid)).unwrap()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(8))]

    /// A feasible `tame(α)` exhibits `d ω⁺ = −dα`, is independently a taming
    /// form, and (since `compat` is feasible) `tame(−α)` is feasible too.
    #[test]
    fn tame_certificates(amplitude in 0.0f64..0.3, seed in any::<u64>(), amp in 0.05f64..0.4) {
        let s = setting(amplitude, seed);
        let opts = SolverOptions::default();
        prop_assume!(cone::compat(&s, opts).unwrap().is_feasible());
        let alpha = cone::band_limited_anti_invariant(&s, amp, 3, seed ^ 1);
        let r = cone::tame(&s, &alpha, opts).unwrap();
        prop_assume!(r.is_feasible());
        let plus = r.plus.as_ref().unwrap();
        let omega = r.omega.as_ref().unwrap();
        let d_plus = ext_d(&s.grid, plus).unwrap();
        let d_alpha = ext_d(&s.grid, &alpha).unwrap();
        prop_assert!(d_plus.add(&d_alpha).l2() <= 1e-6 * d_alpha.l2().max(1e-12) + 1e-12);
        prop_assert!(proj_field_j(&s.j, omega).1.sub(&alpha).max_abs() <= 1e-10);
        for p in 0..s.grid.len() {
            let m = positivity_margin_relative(s.j.at(p), s.cache.g_j.at(p), &omega.fiber2(p));
            prop_assert!(m >= opts.epsilon / 2.0);
        }
        prop_assert!(cone::tame(&s, &alpha.scaled(-1.0), opts).unwrap().is_feasible());
    }
}

#[test]
fn compatible_forms_have_no_anti_invariant_part() {
    let s = setting(0.2, 3);
    let r = cone::compat(&s, SolverOptions::default()).unwrap();
    assert!(r.is_feasible());
    let omega = r.omega.unwrap();
    assert!(proj_field_j(&s.j, &omega).1.max_abs() <= 1e-10);
    assert!(ext_d(&s.grid, &omega).unwrap().l2() <= 1e-6 * omega.l2());
    let c = cone::tamed_to_compatible(&s, &omega, SolverOptions::default()).unwrap();
    assert!(c.is_feasible());
}
