//! Statistical and closed-form oracles for the stochastic components.

mod common;

use common::{instance, s1};
use harness_core::dynamics::{generate_epochs, SamplingPlan};
use harness_core::gibbs::{build_gaussian, conditional_check, sample_exact};
use harness_core::ground_state::{
    decay_bound_check, ground_state_infinite, kernel_row_exact, kernel_row_mc, solve_exact,
};
use harness_core::verify::{
    check_ergodic_forgetting, check_stationary_law, check_survival_mass, check_thermo_limit,
    check_variance_bound, compare_samples, Boundary, Z_THRESHOLD,
};
use harness_core::{HeightField, Kernel, LatticeBox, ModelParams, Site};

#[test]
fn monte_carlo_rows_match_exact_rows() {
    let bx = LatticeBox::interval(-3, 3, 1).unwrap();
    let kernel = Kernel::nearest_neighbor(1);
    let params = ModelParams::with_alpha(0.7).unwrap();
    let n = 100_000;
    for start in [s1(0), s1(2), s1(-3)] {
        let exact = kernel_row_exact(&bx, &params, &kernel, &start).unwrap();
        let mc = kernel_row_mc(&bx, &params, &kernel, &start, n, 17).unwrap();
        for (e, m) in exact.killed.iter().chain(&exact.absorbed).zip(mc.killed.iter().chain(&mc.absorbed)) {
            assert_eq!(e.site, m.site);
            let se = (e.mass * (1.0 - e.mass) / n as f64).sqrt();
            assert!(
                (m.mass - e.mass).abs() <= Z_THRESHOLD * se.max(1e-12),
                "{}: {} vs {}",
                e.site,
                m.mass,
                e.mass
            );
        }
        assert!((mc.total() - 1.0).abs() < 1e-12);
    }
}

#[test]
fn exact_rows_respect_the_decay_bound() {
    let bx = LatticeBox::new(Site::new([-4, -4]), Site::new([4, 4]), 1).unwrap();
    let kernel = Kernel::nearest_neighbor(2);
    for alpha in [0.3, 0.6, 0.9] {
        let params = ModelParams::with_alpha(alpha).unwrap();
        let row = kernel_row_exact(&bx, &params, &kernel, &Site::new([0, 1])).unwrap();
        let report = decay_bound_check(&row, &params, &kernel).unwrap();
        assert!(report.worst_slack >= 0.0, "alpha {alpha}: {report:?}");
    }
}

#[test]
fn epoch_counts_follow_the_poisson_rate() {
    let bx = LatticeBox::interval(0, 9, 1).unwrap();
    let params = ModelParams::with_alpha(0.5).unwrap();
    let seeds = 10_000u64;
    let total: usize = (0..seeds)
        .map(|s| generate_epochs(&bx, (2.0, 5.0), &params, s).unwrap().len())
        .sum();
    let mean = total as f64 / seeds as f64;
    assert!((mean - 30.0).abs() <= 5.0 * (30.0 / seeds as f64).sqrt(), "mean count {mean}");
}

#[test]
fn exact_samples_reproduce_the_gaussian() {
    let bx = LatticeBox::interval(0, 3, 1).unwrap();
    let kernel = Kernel::nearest_neighbor(1);
    let params = ModelParams::with_alpha(0.6).unwrap();
    let y = HeightField::constant(bx.shell(), 1.5);
    let d = HeightField::from_fn(bx.sites(), |x| -(x.coords()[0] as f64));
    let spec = build_gaussian(&bx, &y, &d, &params, &kernel).unwrap();
    let samples = sample_exact(&spec, 100_000, 5).unwrap();
    let report = compare_samples("exact_samples", &samples, &spec);
    assert!(report.passed, "{}", report.to_json_line());
}

#[test]
fn single_site_dynamics_has_the_closed_form_law() {
    // Λ = {0}, y = 0, d = 2: stationary law N(1, 1/2)
    let bx = LatticeBox::interval(0, 0, 1).unwrap();
    let kernel = Kernel::nearest_neighbor(1);
    let params = ModelParams::with_alpha(0.5).unwrap();
    let y = HeightField::constant(bx.shell(), 0.0);
    let d = HeightField::constant([s1(0)], 2.0);
    let plan = SamplingPlan {
        burn_in: 20.0,
        thin: 5.0,
        n_samples: 20_000,
    };
    let report = check_stationary_law(&bx, &y, &d, &params, &kernel, &plan, 9).unwrap();
    assert!(report.passed, "{}", report.to_json_line());
}

#[test]
fn asymmetric_kernel_breaks_the_conditionals() {
    let bx = LatticeBox::interval(0, 3, 1).unwrap();
    let params = ModelParams::with_alpha(0.5).unwrap();
    let bad = Kernel::from_raw_unchecked(1, 2, vec![(s1(1), 0.8), (s1(-1), 0.2)]);
    let y = HeightField::constant(bx.shell(), 0.0);
    let d = HeightField::constant(bx.sites(), 1.0);
    let x = HeightField::from_fn(bx.sites(), |s| 0.5 * s.coords()[0] as f64);
    let spec = build_gaussian(&bx, &y, &d, &params, &bad).unwrap();
    let worst = bx
        .sites()
        .iter()
        .map(|k| conditional_check(&spec, k, &x, &y, &d, &params, &bad).unwrap())
        .fold(0.0f64, f64::max);
    assert!(worst > 1e-3, "asymmetric kernel went undetected: {worst}");

    let good = Kernel::nearest_neighbor(1);
    let spec = build_gaussian(&bx, &y, &d, &params, &good).unwrap();
    for k in bx.sites() {
        assert!(conditional_check(&spec, &k, &x, &y, &d, &params, &good).unwrap() <= 1e-9);
    }
}

#[test]
fn coupled_runs_forget_their_initial_condition() {
    let inst = instance(LatticeBox::interval(-5, 5, 1).unwrap(), 0.5, 3);
    let zp = inst.z.map(|v| v + 4.0);
    let seeds: Vec<u64> = (0..2000).collect();
    let report = check_ergodic_forgetting(
        &inst.bx,
        &inst.y,
        &inst.d,
        &inst.params,
        &inst.kernel,
        (&inst.z, &zp),
        &[0.0, 1.0, 2.0, 4.0, 8.0],
        &seeds,
    )
    .unwrap();
    assert!(report.passed, "{}", report.to_json_line());
}

#[test]
fn survival_and_variance_on_a_small_batch() {
    let bx = LatticeBox::interval(-30, 30, 1).unwrap();
    let kernel = Kernel::nearest_neighbor(1);
    let params = ModelParams::with_alpha(0.5).unwrap();
    let seeds: Vec<u64> = (0..2000).collect();
    let s = check_survival_mass(&bx, &params, &kernel, 2.0, &seeds).unwrap();
    assert!(s.passed, "{}", s.to_json_line());
    let v = check_variance_bound(&bx, &params, &kernel, &[1.0, 5.0, 20.0], &seeds).unwrap();
    assert!(v.passed, "{}", v.to_json_line());
}

#[test]
fn thermodynamic_limit_with_harmonic_and_constant_boundaries() {
    let kernel = Kernel::nearest_neighbor(1);
    let params = ModelParams::with_alpha(0.5).unwrap();
    let d = HeightField::constant([s1(0)], 1.0);
    let m_inf = ground_state_infinite(&d, &params, &kernel, 1e-14).unwrap();
    let boxes: Vec<LatticeBox> = [2, 4, 8, 16]
        .into_iter()
        .map(|h| LatticeBox::interval(-h, h, 1).unwrap())
        .collect();
    let choices = [Boundary::Constant(0.0), Boundary::Constant(7.0), Boundary::Field(m_inf.clone())];
    let report = check_thermo_limit(&d, &choices, &params, &kernel, &boxes, 1e-6).unwrap();
    assert!(report.passed, "{}", report.to_json_line());

    // the infinite-volume state as boundary is reproduced exactly on every box
    for bx in &boxes {
        let y = m_inf.restricted(&bx.shell()).unwrap();
        let d_box = HeightField::from_fn(bx.sites(), |s| d.get_or(s, 0.0));
        let m = solve_exact(bx, &d_box, &y, &params, &kernel).unwrap().m;
        assert!((m.get(&s1(0)).unwrap() - 1.0 / 3f64.sqrt()).abs() < 1e-12);
    }
}
