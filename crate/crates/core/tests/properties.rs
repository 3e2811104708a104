use std::collections::BTreeSet;

use merglift::backend::{approx_to_tolerance, taylor_approx, validation_axes, BackendConfig, GridSpec};
use merglift::chordal::{chi, chordal_approx, conformal, ChordalOptions, SphereValue};
use merglift::domain::{PlanarDomain, ProductDomain};
use merglift::expr::{parse, Compiled, Expr, MultiOrder};
use merglift::lift::{expansion_terms, lift, t_on_poly, top_derivative, LiftOptions, LiftRequest};
use merglift::mobius::Mobius;
use merglift::poly::{eval_tensor, Monomial};
use merglift::tail::{
    counterexample_directional, restrict_to_finite, select_finite_support, Anchor, BoundRule, SeriesFunction,
};
use merglift::{CPoly, Complex64, Var};
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn c(re: f64, im: f64) -> Complex64 {
    Complex64::new(re, im)
}

fn vars(m: usize) -> Vec<Var> {
    (1..=m as u32).map(Var).collect()
}

fn arb_coef() -> impl Strategy<Value = Complex64> {
    (-1.0..1.0f64, -1.0..1.0f64).prop_map(|(re, im)| c(re, im))
}

/// Polynomials in `z1..zm` with degree ≤ 3 per variable.
fn arb_poly(m: usize) -> impl Strategy<Value = CPoly> {
    let mono = proptest::collection::vec(0u32..=3, m);
    proptest::collection::vec((mono, arb_coef()), 1..8).prop_map(move |terms| {
        CPoly::from_terms(terms.into_iter().map(|(exps, coef)| {
            (Monomial::from_pairs(exps.into_iter().enumerate().map(|(i, e)| (Var(i as u32 + 1), e))), coef)
        }))
    })
}

fn arb_sphere() -> impl Strategy<Value = SphereValue> {
    prop_oneof![
        1 => Just(SphereValue::Infinity),
        8 => (-6.0..6.0f64, 0.0..std::f64::consts::TAU)
            .prop_map(|(l, t)| SphereValue::Finite(Complex64::from_polar(10f64.powf(l), t))),
        1 => Just(SphereValue::Finite(c(0.0, 0.0))),
    ]
}

fn quarter_discs(m: usize) -> ProductDomain {
    ProductDomain::power(PlanarDomain::disc(c(0.0, 0.0), 0.25).unwrap(), m as u32).assume_normalized()
}

fn grid_sup(p: &CPoly, pd: &ProductDomain) -> f64 {
    let vs = pd.vars();
    let axes = validation_axes(pd, &vs, 8, &GridSpec::default());
    eval_tensor(p, &vs, &axes).unwrap().iter().map(|z| z.norm()).fold(0.0, f64::max)
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    #[test]
    fn derive_undoes_antiderive(p in arb_poly(3), v in 1u32..=3, times in 1u32..=3) {
        let v = Var(v);
        let mut back = p.antiderive_from_zero(v, times);
        for _ in 0..times {
            back = back.derive(v);
        }
        prop_assert!((&back - &p).max_coeff() <= 1e-12);
    }

    #[test]
    fn antiderive_undoes_derive_up_to_the_constant(p in arb_poly(2), v in 1u32..=2) {
        let v = Var(v);
        let back = p.derive(v).antiderive_from_zero(v, 1);
        let expect = &p - &p.restrict(v, c(0.0, 0.0));
        prop_assert!((&back - &expect).max_coeff() <= 1e-12);
    }

    #[test]
    fn print_parse_round_trip_of_polynomial_expressions(p in arb_poly(2)) {
        let e = p.to_expr();
        prop_assert_eq!(parse(&e.to_string()).unwrap(), e);
    }

    #[test]
    fn mixed_derivatives_commute(a in 1u32..=2, b in 1u32..=2, k in 0usize..4) {
        let catalog = ["exp(z1*z2)", "sin(z1+2*z2)/(3 - z1)", "z1^3*cos(z2)", "exp(z1)*exp(z2)^2"];
        let e = parse(catalog[k]).unwrap();
        let one = e.differentiate(&MultiOrder::single(Var(1), a)).differentiate(&MultiOrder::single(Var(2), b));
        let other = e.differentiate(&MultiOrder::single(Var(2), b)).differentiate(&MultiOrder::single(Var(1), a));
        let pt = [(Var(1), c(0.2, -0.1)), (Var(2), c(-0.3, 0.05))];
        let (x, y) = (one.eval(&pt).unwrap(), other.eval(&pt).unwrap());
        prop_assert!((x - y).norm() <= 1e-12 * (1.0 + x.norm()));
    }

    #[test]
    fn t_contracts_on_normalized_discs(p in arb_poly(2), n in 1u32..=2) {
        let pd = quarter_discs(2);
        let t = t_on_poly(&p, &pd.vars(), n);
        prop_assert!(grid_sup(&t, &pd) <= grid_sup(&p, &pd) + 1e-9);
    }

    #[test]
    fn chi_is_a_metric(a in arb_sphere(), b in arb_sphere(), d in arb_sphere()) {
        prop_assert_eq!(chi(a, b), chi(b, a));
        prop_assert!(chi(a, b) >= 0.0 && chi(a, b) <= 1.0);
        prop_assert!(chi(a, d) <= chi(a, b) + chi(b, d) + 1e-12);
        prop_assert_eq!(chi(a, a), 0.0);
        if a != b {
            prop_assert!(chi(a, b) > 0.0);
        }
    }

    #[test]
    fn chi_is_invariant_under_inversion_and_below_euclidean(x in arb_coef(), y in arb_coef(), s in -3.0..3.0f64) {
        let (x, y) = (x * 10f64.powf(s), y);
        prop_assume!(x.norm() > 1e-9 && y.norm() > 1e-9);
        let direct = chi(SphereValue::Finite(x), SphereValue::Finite(y));
        let inverted = chi(SphereValue::Finite(x.inv()), SphereValue::Finite(y.inv()));
        prop_assert!((direct - inverted).abs() <= 1e-12);
        prop_assert!(direct <= (x - y).norm() + 1e-15);
    }

    #[test]
    fn normalization_lands_in_a_half_path_bound(
        cx in -5.0..5.0f64, cy in -5.0..5.0f64, r in 0.1..4.0f64, w in 0.2..3.0f64, h in 0.2..3.0f64,
    ) {
        let pd = ProductDomain::new(vec![
            (Var(1), PlanarDomain::disc(c(cx, cy), r).unwrap()),
            (Var(2), PlanarDomain::rect(cx, cy, cx + w, cy + h).unwrap()),
        ]).unwrap();
        let (n, _) = pd.normalize(0.05).unwrap();
        for f in n.factors() {
            prop_assert!(f.domain.contains(c(0.0, 0.0)));
            prop_assert!(f.domain.exact_path_bound().unwrap() <= 0.5 + 1e-12);
        }
    }

    #[test]
    fn reduction_stays_within_the_tail_bound(eps in 0.02..1.0f64, seed in 0u64..1000) {
        let f = SeriesFunction::from_template("z_n^n/n^2", BoundRule::PSeries { scale: 1.0, p: 2.0 }, 30).unwrap();
        let support = select_finite_support(&f, eps).unwrap();
        let bound = f.tail_bound(&support);
        prop_assert!(bound < eps / 2.0);
        let reduced = restrict_to_finite(&f, &support, &Anchor::default()).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        for _ in 0..20 {
            let z: Vec<Complex64> = (0..30).map(|_| unit_disc_point(&mut rng)).collect();
            let env: Vec<(Var, Complex64)> = support.iter().map(|v| (*v, z[v.0 as usize - 1])).collect();
            let err = (f.eval(&z).unwrap() - reduced.eval(&env).unwrap()).norm();
            prop_assert!(err <= bound + 1e-12);
        }
    }
}

fn unit_disc_point<R: Rng>(rng: &mut R) -> Complex64 {
    PlanarDomain::unit_disc().sample_point(rng)
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(12))]

    #[test]
    fn lift_is_exact_on_polynomials(
        (m, p) in (1usize..=3).prop_flat_map(|m| (Just(m), arb_poly(m))),
        n in 0u32..=2,
    ) {
        let req = LiftRequest { f: p.to_expr(), domain: quarter_discs(m), n, epsilon: 1e-6 };
        let r = lift(&req, &LiftOptions::default()).unwrap();
        prop_assert!(r.max_error <= 1e-10, "{}", r.max_error);
        prop_assert!(r.tree.max_depth <= m);
        prop_assert_eq!(r.alpha_errors.len(), (n as usize + 1).pow(m as u32));
        let alphas: BTreeSet<String> = r.alpha_errors.iter().map(|a| a.alpha.to_string()).collect();
        prop_assert_eq!(alphas.len(), r.alpha_errors.len());
    }
}

#[test]
fn budget_shares_add_up_to_epsilon() {
    for (text, m, n) in [("exp(z1+z2)", 2, 1), ("sin(z1)*exp(z2)", 2, 2), ("exp(z1)", 1, 2), ("exp(z1*z2*z3)", 3, 1)] {
        let eps = 1e-5;
        let req = LiftRequest { f: parse(text).unwrap(), domain: quarter_discs(m), n, epsilon: eps };
        let r = lift(&req, &LiftOptions::default()).unwrap();
        let total: f64 = r.ledger.iter().map(|l| l.allocated).sum();
        assert!((total - eps).abs() <= 1e-12 * eps, "{text}: {total}");
        assert!(r.ledger.iter().all(|l| l.success && l.achieved <= l.allocated));
        assert!(r.within_epsilon, "{text}: {}", r.max_error);
    }
}

/// `∂^α(A − B)` never exceeds the error of `Q` on normalized discs.
#[test]
fn top_level_block_error_is_bounded_by_q_error() {
    let pd = quarter_discs(2);
    let vs = pd.vars();
    let cfg = BackendConfig::default();
    for (text, n) in [("exp(z1+z2)", 1), ("exp(z1*z2)", 2), ("sin(z1)*z2", 1), ("1/(2 - z1 - z2)", 2)] {
        let f = parse(text).unwrap();
        let g = top_derivative(&f, &vs, n);
        // A loose tolerance leaves a visible error to propagate.
        let q = approx_to_tolerance(&g, &pd, 1e-3, &cfg).unwrap();
        let a = t_on_poly(&q.poly, &vs, n);
        let mut b = f.clone();
        for term in expansion_terms(&f, &vs, n) {
            b = Expr::add(b, Expr::mul(Expr::mul(Expr::real(term.sign), term.monomial.to_expr()), term.coefficient));
        }
        let axes = validation_axes(&pd, &vs, 8, &GridSpec::default());
        let q_err = {
            let qv = eval_tensor(&q.poly, &vs, &axes).unwrap();
            let gv = Compiled::new(&g, &vs).unwrap().eval_tensor(&axes).unwrap();
            qv.iter().zip(&gv).map(|(x, y)| (x - y).norm()).fold(0.0, f64::max)
        };
        for alpha in MultiOrder::boxed(&vs, n) {
            let av = eval_tensor(&a.derive_by(&alpha), &vs, &axes).unwrap();
            let bv = Compiled::new(&b.differentiate(&alpha), &vs).unwrap().eval_tensor(&axes).unwrap();
            let err = av.iter().zip(&bv).map(|(x, y)| (x - y).norm()).fold(0.0, f64::max);
            assert!(err <= q_err + 1e-9, "{text} {alpha}: {err} > {q_err}");
        }
    }
}

#[test]
fn order_zero_lift_equals_backend() {
    let pd = quarter_discs(2);
    for text in ["exp(z1*z2)", "cos(z1) + z2^5", "1/(2 - z1)"] {
        let f = parse(text).unwrap();
        let r = lift(&LiftRequest { f: f.clone(), domain: pd.clone(), n: 0, epsilon: 1e-8 }, &LiftOptions::default()).unwrap();
        let direct = approx_to_tolerance(&f, &pd, 1e-8, &BackendConfig::default()).unwrap();
        assert_eq!(r.poly, direct.poly, "{text}");
    }
}

#[test]
fn directional_values_grow() {
    let values: Vec<f64> = [10, 100, 1000, 10_000].iter().map(|&m| counterexample_directional(m)).collect();
    assert!(values.windows(2).all(|w| w[1] > w[0]), "{values:?}");
}

#[test]
fn conformal_pairs_round_trip() {
    let shapes = [
        PlanarDomain::unit_disc(),
        PlanarDomain::disc(c(-1.0, 2.0), 0.3).unwrap(),
        PlanarDomain::mobius_disc(Mobius::new(c(1.0, 0.5), c(0.2, 0.0), c(0.3, 0.1), c(1.0, 0.0))).unwrap(),
    ];
    for d in shapes {
        let (round, circle) = conformal(Var(1), &d).unwrap().check(500);
        assert!(round <= 1e-10 && circle <= 1e-10, "{d:?}: {round} {circle}");
    }
}

/// On the unit disc the chordal construction is the backend fit of the
/// dilated function.
#[test]
fn pullback_matches_backend_on_the_identity_map() {
    let pd = ProductDomain::power(PlanarDomain::unit_disc(), 1);
    let f = parse("exp(z1)/(3 - z1)").unwrap();
    let opts = ChordalOptions { steps: 4, boundary: Some(256), ..ChordalOptions::default() };
    let seq = chordal_approx(&f, &pd, &opts).unwrap();
    for (step, p) in seq.steps.iter().zip(&seq.polys) {
        let dilated = f.substitute_affine(Var(1), c(step.r, 0.0), c(0.0, 0.0));
        let direct = taylor_approx(&dilated, &[Var(1)], &[step.degree], &[1.0]).unwrap();
        assert!((p - &direct).max_coeff() <= 1e-10, "step {}", step.n);
    }
}

#[test]
fn composition_with_tail_reduction() {
    let series = SeriesFunction::from_template("z_n^n/n^2", BoundRule::PSeries { scale: 1.0, p: 2.0 }, 3).unwrap();
    let eps = 1.0;
    let support = select_finite_support(&series, eps).unwrap();
    assert_eq!(support, BTreeSet::from([Var(1), Var(2)]));
    let reduced = restrict_to_finite(&series, &support, &Anchor::default()).unwrap();
    let pd = ProductDomain::power(PlanarDomain::unit_disc(), 2);
    let r = lift(&LiftRequest { f: reduced, domain: pd, n: 1, epsilon: eps / 2.0 }, &LiftOptions::default()).unwrap();
    let full = series.to_expr();
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    for _ in 0..200 {
        let z: Vec<Complex64> = (0..3).map(|_| unit_disc_point(&mut rng)).collect();
        let env: Vec<(Var, Complex64)> = vars(3).into_iter().zip(z.iter().copied()).collect();
        for alpha in MultiOrder::boxed(&[Var(1), Var(2)], 1) {
            let exact = full.differentiate(&alpha).eval(&env).unwrap();
            let approx = r.poly.derive_by(&alpha).eval(&env).unwrap();
            assert!((exact - approx).norm() <= eps, "{alpha}");
        }
    }
}
