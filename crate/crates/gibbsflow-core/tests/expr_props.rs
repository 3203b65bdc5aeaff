use gibbsflow_core::expr::{parse, Expr, Func};
use proptest::prelude::*;

fn leaf() -> impl Strategy<Value = Expr> {
    prop_oneof![(-3.0f64..3.0).prop_map(Expr::num), Just(Expr::x()), Just(Expr::Pi)]
}

/// Random smooth expressions on `[0, 1]`; `log` and division only see
/// arguments bounded away from zero.
fn smooth() -> impl Strategy<Value = Expr> {
    leaf().prop_recursive(5, 32, 2, |inner| {
        prop_oneof![
            (inner.clone(), inner.clone()).prop_map(|(a, b)| Expr::add(a, b)),
            (inner.clone(), inner.clone()).prop_map(|(a, b)| Expr::sub(a, b)),
            (inner.clone(), inner.clone()).prop_map(|(a, b)| Expr::mul(a, b)),
            inner.clone().prop_map(Expr::neg),
            (inner.clone(), 0i32..4).prop_map(|(a, k)| Expr::pow(a, k)),
            inner.clone().prop_map(|a| Expr::call(Func::Sin, a)),
            inner.clone().prop_map(|a| Expr::call(Func::Cos, a)),
            inner.clone().prop_map(|a| Expr::call(Func::Exp, Expr::call(Func::Sin, a))),
            inner.clone().prop_map(|a| Expr::call(Func::Log, Expr::add(Expr::num(2.0), Expr::call(Func::Cos, a)))),
            inner.clone().prop_map(|a| Expr::div(Expr::num(1.0), Expr::add(Expr::num(3.0), Expr::call(Func::Sin, a)))),
        ]
    })
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(256))]

    #[test]
    fn derivative_matches_central_difference(e in smooth(), x in 0.05f64..0.95) {
        let d = e.differentiate();
        let h = 1e-5;
        let (Ok(fp), Ok(fm), Ok(exact)) = (e.eval(x + h), e.eval(x - h), d.eval(x)) else {
            return Ok(());
        };
        prop_assume!(fp.abs() < 1e6 && fm.abs() < 1e6 && exact.abs() < 1e6);
        let fd = (fp - fm) / (2.0 * h);
        prop_assert!((fd - exact).abs() <= 1e-4 * (1.0 + exact.abs()), "{}: fd {} vs {}", e, fd, exact);
    }

    #[test]
    fn print_parse_round_trip(e in smooth()) {
        let printed = e.to_string();
        let back = parse(&printed).unwrap();
        prop_assert_eq!(back.to_string(), printed);
        for x in [0.1, 0.5, 0.9] {
            match (e.eval(x), back.eval(x)) {
                (Ok(a), Ok(b)) => prop_assert!(a == b || (a.is_nan() && b.is_nan())),
                (a, b) => prop_assert_eq!(a.is_ok(), b.is_ok()),
            }
        }
    }

    #[test]
    fn compiled_program_agrees(e in smooth(), x in 0.0f64..1.0) {
        if let Ok(v) = e.eval(x) {
            let c = e.compile().eval(x);
            prop_assert!(v == c || (v - c).abs() <= 1e-12 * (1.0 + v.abs()));
        }
    }

    #[test]
    fn parser_is_total(src in "[-+*/^() x0-9.piecosnlgxu]{0,40}") {
        let _ = parse(&src);
    }

    #[test]
    fn parser_survives_arbitrary_bytes(src in any::<String>()) {
        let _ = parse(&src);
    }
}

#[test]
fn deep_parentheses_error_instead_of_overflow() {
    let src = format!("{}x{}", "(".repeat(100_000), ")".repeat(100_000));
    assert!(parse(&src).is_err());
    let src = format!("{}x", "-".repeat(100_000));
    assert!(parse(&src).is_err());
}
