use orlicz_core::conditions::LowerOrder;
use orlicz_core::degiorgi::{
    caccioppoli_fit, degiorgi_constants, oscillation_decay_analysis, CaccioppoliSampling, ChainConstants, DecayParams,
};
use orlicz_core::modular::{gradient, holder_pairing_check, luxemburg_norm};
use orlicz_core::variational::{local_min_test, minimize, BoundaryData, EnergyDensity, SolverOptions};
use orlicz_core::{
    check_conditions, derive_growth, DomainSpec, Error, GridFunction, GrowthFunction, NFunction, SamplePlan,
};

#[test]
fn power_case_from_conditions_to_exponent() {
    let d = DomainSpec::unit_cube(3, 5).unwrap();
    let a = NFunction::power(2.0, 3).unwrap();
    let g = GrowthFunction::power(2.0).unwrap();
    let b = NFunction::scaled_power(1.5, 0.25, 3).unwrap();
    let bg = GrowthFunction::power(1.5).unwrap();
    let lower = LowerOrder { b: &b, growth: &bg };
    let report = check_conditions(&a, &g, Some(lower), &d, &SamplePlan::default()).unwrap();
    assert!(report.all_pass);

    let ladder = orlicz_core::numeric::geometric_ladder(1e-3, 1e3, 10);
    let dg = derive_growth(&g, 3, &ladder).unwrap();
    let c = degiorgi_constants(&dg, 1.0, 1.0, ChainConstants { m3: 1e-6, ..Default::default() }).unwrap();
    assert!(c.alpha > 0.0 && c.alpha < 1.0);
    assert!(c.theta <= c.theta_cap);
    // a tiny theta pushes s so high that 2^-s underflows
    let e = degiorgi_constants(&dg, 1.0, 1.0, ChainConstants { m3: 1e-3, ..Default::default() });
    assert!(matches!(e, Err(Error::Infeasible(_))));
}

#[test]
fn minimizer_is_local_and_holder() {
    let d = DomainSpec::unit_cube(2, 129).unwrap();
    let f = EnergyDensity::p_dirichlet(2.0, 2).unwrap();
    let bd = BoundaryData::expression("x1*x1 - x2*x2 + 0.3*x1*x2", 2).unwrap();
    let out = minimize(&f, &bd, &bd.with_interior(&d, 0.0).unwrap(), &SolverOptions::default()).unwrap();
    assert!(out.converged);
    let report = local_min_test(&f, &out.solution, 20, 1e-12, 3).unwrap();
    assert!(report.violations.is_empty());

    let params = DecayParams { r0: 0.4, b: 2.0, theta: 0.5, c1: 10.0, eps: 1.0 };
    let r = oscillation_decay_analysis(&out.solution, &[0.5, 0.5], &params).unwrap();
    assert!(r.alpha_hat >= 0.9, "{}", r.alpha_hat);

    let a = NFunction::power(2.0, 2).unwrap();
    let fit =
        caccioppoli_fit(&a, &out.solution, out.solution.sup_norm(), 1.0, &CaccioppoliSampling::default()).unwrap();
    assert_eq!(fit.violations, 0);
}

#[test]
fn norms_pair_through_holder() {
    let d = DomainSpec::unit_cube(2, 17).unwrap();
    let u = GridFunction::from_fn(d.clone(), |x| (3.0 * x[0]).sin() + x[1]).unwrap();
    let v = GridFunction::from_fn(d.clone(), |x| x[0] * x[1] - 0.2).unwrap();
    for a in [NFunction::power(3.0, 2).unwrap(), NFunction::double_phase(2.0, 3.0, "x2", 2).unwrap()] {
        let r = holder_pairing_check(&a, &u, &v).unwrap();
        assert!(r.pass, "{r:?}");
        assert!(luxemburg_norm(&a, &u).unwrap() > 0.0);
    }
    let g = gradient(&u);
    assert_eq!(g.magnitude().len(), d.node_count());
}

#[test]
fn mismatched_boundary_is_a_contract_error() {
    let d = DomainSpec::unit_cube(2, 9).unwrap();
    let f = EnergyDensity::p_dirichlet(2.0, 2).unwrap();
    let bd = BoundaryData::expression("x1", 2).unwrap();
    let init = GridFunction::zeros(d);
    assert!(matches!(minimize(&f, &bd, &init, &SolverOptions::default()), Err(Error::Contract(_))));
}
