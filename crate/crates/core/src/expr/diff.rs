use num_complex::Complex64;

use super::{Expr, MultiOrder, Var};

pub(super) fn differentiate(e: &Expr, d: &MultiOrder) -> Expr {
    let mut out = e.clone();
    for (v, k) in d.iter() {
        for _ in 0..k {
            out = diff1(&out, v);
        }
    }
    out
}

fn diff1(e: &Expr, v: Var) -> Expr {
    if !e.depends_on(v) {
        return Expr::Const(Complex64::new(0.0, 0.0));
    }
    match e {
        Expr::Const(_) => unreachable!("constants do not depend on variables"),
        Expr::Var(_) => Expr::real(1.0),
        Expr::Add(a, b) => Expr::add(diff1(a, v), diff1(b, v)),
        Expr::Neg(a) => Expr::neg(diff1(a, v)),
        Expr::Mul(a, b) => Expr::add(
            Expr::mul(diff1(a, v), (**b).clone()),
            Expr::mul((**a).clone(), diff1(b, v)),
        ),
        Expr::Div(a, b) => {
            // d(a/b) = a'/b - a·b'/b²
            let first = Expr::div(diff1(a, v), (**b).clone());
            let db = diff1(b, v);
            if db.as_const() == Some(Complex64::new(0.0, 0.0)) {
                return first;
            }
            Expr::sub(
                first,
                Expr::div(Expr::mul((**a).clone(), db), Expr::pow((**b).clone(), 2)),
            )
        }
        Expr::Pow(a, k) => Expr::mul(
            Expr::mul(Expr::real(*k as f64), Expr::pow((**a).clone(), k - 1)),
            diff1(a, v),
        ),
        Expr::Exp(a) => Expr::mul(Expr::exp((**a).clone()), diff1(a, v)),
        Expr::Sin(a) => Expr::mul(Expr::cos((**a).clone()), diff1(a, v)),
        Expr::Cos(a) => Expr::mul(Expr::neg(Expr::sin((**a).clone())), diff1(a, v)),
    }
}

#[cfg(test)]
mod tests {
    use super::super::{parse, Env};
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn at(e: &Expr, env: &impl Env) -> Complex64 {
        e.eval(env).unwrap()
    }

    #[test]
    fn derivative_examples() {
        let x = [(Var(1), Complex64::new(0.3, -0.2)), (Var(2), Complex64::new(-0.1, 0.4))];
        let e = parse("z1^3").unwrap().differentiate(&MultiOrder::single(Var(1), 1));
        let z = x[0].1;
        assert!((at(&e, &x) - 3.0 * z * z).norm() < 1e-15);

        let e = parse("exp(2*z1)").unwrap().differentiate(&MultiOrder::single(Var(1), 1));
        assert!((at(&e, &x) - 2.0 * (2.0 * z).exp()).norm() < 1e-14);

        let e = parse("z1*z2")
            .unwrap()
            .differentiate(&MultiOrder::from_pairs([(Var(1), 1), (Var(2), 1)]));
        assert_eq!(e, Expr::real(1.0));
    }

    #[test]
    fn quotient_and_trig() {
        let z = Complex64::new(0.2, 0.1);
        let env = [(Var(1), z)];
        let e = parse("1/(1 - z1)").unwrap().differentiate(&MultiOrder::single(Var(1), 2));
        let expect = 2.0 / (1.0 - z).powu(3);
        assert!((at(&e, &env) - expect).norm() < 1e-13);

        let e = parse("sin(z1)*cos(z1)").unwrap().differentiate(&MultiOrder::single(Var(1), 1));
        let expect = (2.0 * z).cos();
        assert!((at(&e, &env) - expect).norm() < 1e-14);
    }

    fn random_env(rng: &mut ChaCha8Rng) -> Vec<(Var, Complex64)> {
        (1..=3)
            .map(|i| (Var(i), Complex64::new(rng.gen_range(-0.5..0.5), rng.gen_range(-0.5..0.5))))
            .collect()
    }

    fn rel_close(a: Complex64, b: Complex64, tol: f64) -> bool {
        (a - b).norm() <= tol * (1.0 + a.norm().max(b.norm()))
    }

    #[test]
    fn derivatives_commute_across_variables() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let catalog = ["exp(z1*z2)", "sin(z1 + 2*z2)*z3", "z1^3*z2^2 + z1*z2*z3", "cos(z1)/(2 + z2)"];
        for text in catalog {
            let e = parse(text).unwrap();
            for (a, b) in [(1, 2), (2, 1), (3, 2)] {
                let (i, j) = (Var(1), Var(2));
                let two_step = e
                    .differentiate(&MultiOrder::single(i, a))
                    .differentiate(&MultiOrder::single(j, b));
                let other_way = e
                    .differentiate(&MultiOrder::single(j, b))
                    .differentiate(&MultiOrder::single(i, a));
                let joint = e.differentiate(&MultiOrder::from_pairs([(i, a), (j, b)]));
                for _ in 0..100 {
                    let env = random_env(&mut rng);
                    let r = at(&joint, &env);
                    assert!(rel_close(at(&two_step, &env), r, 1e-12), "{text}");
                    assert!(rel_close(at(&other_way, &env), r, 1e-12), "{text}");
                }
            }
        }
    }

    #[test]
    fn restrict_commutes_with_disjoint_differentiation() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let catalog = ["exp(z1*z2)", "sin(z1 + 2*z2)*z3", "z1^3*z2^2 + z1*z2*z3"];
        for text in catalog {
            let e = parse(text).unwrap();
            let d = MultiOrder::single(Var(1), 2);
            let value = Complex64::new(0.25, -0.1);
            let a = e.restrict(Var(2), value).differentiate(&d);
            let b = e.differentiate(&d).restrict(Var(2), value);
            for _ in 0..100 {
                let env = random_env(&mut rng);
                assert!(rel_close(at(&a, &env), at(&b, &env), 1e-12));
            }
        }
    }
}
