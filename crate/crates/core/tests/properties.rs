use approx::assert_relative_eq;
use nll_core::iteration::fixed_point;
use nll_core::*;
use proptest::prelude::*;

fn gaussian(n: usize, width: f64) -> ScalarField {
    ScalarField::new(n, "gaussian", move |x: &[f64]| {
        (-x.iter().map(|v| v * v).sum::<f64>() / (width * width)).exp()
    })
    .with_decay(3.0, (3.0 * width).powi(3))
}

#[test]
fn operator_is_linear() {
    let k = make_fractional_kernel(1, 0.4).unwrap();
    let cfg = QuadratureConfig::default().with_tol(1e-9);
    let (u, v) = (gaussian(1, 1.0), make_bump(1).unwrap());
    let combo = {
        let (u, v) = (u.clone(), v.clone());
        ScalarField::new(1, "2u - 3v", move |x: &[f64]| {
            2.0 * u.eval(x) - 3.0 * v.eval(x)
        })
        .with_decay(3.0, 2.0 * 27.0 + 3.0 * 3f64.powi(3))
    };
    for x in [0.0, 0.7, 2.5] {
        let lu = pv_integrate(&u, &k, &[x], &cfg).unwrap().value;
        let lv = pv_integrate(&v, &k, &[x], &cfg).unwrap().value;
        let lc = pv_integrate(&combo, &k, &[x], &cfg).unwrap().value;
        assert_relative_eq!(lc, 2.0 * lu - 3.0 * lv, epsilon = 1e-6);
    }
}

#[test]
fn cutoff_image_scales_like_r_to_minus_2s() {
    let s = 0.3;
    let k = make_fractional_kernel(2, s).unwrap();
    let cfg = QuadratureConfig::default().with_tol(1e-8);
    let one = CutoffFamily::new(2, 1.0).unwrap().phi();
    let three = CutoffFamily::new(2, 3.0).unwrap().phi();
    for x in [[0.0, 0.0], [1.1, 0.4], [2.0, -2.0]] {
        let a = pv_integrate(&one, &k, &x, &cfg).unwrap().value;
        let b = pv_integrate(&three, &k, &[3.0 * x[0], 3.0 * x[1]], &cfg)
            .unwrap()
            .value;
        assert_relative_eq!(
            b,
            3f64.powf(-2.0 * s) * a,
            max_relative = 1e-5,
            epsilon = 1e-9
        );
    }
}

#[test]
fn radial_fields_give_rotation_invariant_images() {
    let k = make_fractional_kernel(2, 0.6).unwrap();
    let cfg = QuadratureConfig::default();
    let u = bubble(2, 0.6).unwrap();
    let a = pv_integrate(&u, &k, &[1.3, 0.0], &cfg).unwrap();
    let t = 0.9f64;
    let b = pv_integrate(&u, &k, &[1.3 * t.cos(), 1.3 * t.sin()], &cfg).unwrap();
    assert!((a.value - b.value).abs() <= a.error_estimate + b.error_estimate);
}

#[test]
fn table_kernel_between_bounds_orders_operator_values() {
    // on a nonnegative field with a maximum at x, L u(x) >= 0 and is monotone in K
    let params = KernelParams::new(1, 0.5, 0.5, 2.0).unwrap();
    let low = make_table_kernel(params, &[(0.1, 0.5), (10.0, 0.5)]).unwrap();
    let high = make_table_kernel(params, &[(0.1, 2.0), (10.0, 2.0)]).unwrap();
    let u = make_bump(1).unwrap();
    let cfg = QuadratureConfig::default();
    let a = pv_integrate(&u, &low, &[0.0], &cfg).unwrap().value;
    let b = pv_integrate(&u, &high, &[0.0], &cfg).unwrap().value;
    assert!(a > 0.0);
    assert_relative_eq!(b, 4.0 * a, max_relative = 1e-6);
}

#[test]
fn supercritical_profile_is_a_supersolution_at_small_c() {
    let profile = SharpnessProfile::new(2, 0.5, 3.0, 0.05).unwrap();
    let k = make_fractional_kernel(2, 0.5).unwrap();
    let cfg = QuadratureConfig::default().with_r_out(1e7);
    let report = pointwise_margin(&profile, &k, &[0.0, 0.5, 2.0, 8.0], &cfg).unwrap();
    assert!(report.skipped.is_empty(), "{:?}", report.skipped);
    assert!(report.certified, "{:?}", report.rows);
}

#[test]
fn report_types_round_trip_through_json() {
    let r = classify(&RegimeInput::new(3, 0.5, 1.2).unwrap()).unwrap();
    let text = serde_json::to_string(&r).unwrap();
    assert!(text.contains("\"subcritical-trivial\""));
    let back: RegimeReport = serde_json::from_str(&text).unwrap();
    assert_eq!(back, r);
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn closed_form_tracks_iteration(a in -3.0f64..0.0, q in 1.05f64..8.0, g0 in 0.5f64..3.0) {
        let t = iterate_recurrence(a, q, g0, 1.0, 1.0, 200).unwrap();
        prop_assert!(t.max_closed_form_error <= 1e-12);
        prop_assert_eq!(t.gamma_inf, fixed_point(a, q));
        if let Some(m) = t.first_negative {
            prop_assert!(t.gammas[m] < 0.0 || t.tie_zone);
            prop_assert!(m == 0 || t.gammas[m - 1] >= 0.0);
        }
    }

    #[test]
    fn regime_matches_serrin_comparison(n in 1usize..4, s in 0.05f64..0.95, q in 1.01f64..6.0) {
        let input = RegimeInput::new(n, s, q).unwrap();
        let r = classify(&input).unwrap();
        let nf = n as f64;
        let want = if nf <= 2.0 * s {
            Regime::LowDimensionTrivial
        } else if q > nf / (nf - 2.0 * s) {
            Regime::SupercriticalSharpness
        } else if q < nf / (nf - 2.0 * s) {
            Regime::SubcriticalTrivial
        } else {
            Regime::CriticalTrivial
        };
        prop_assert_eq!(r.regime, want);
        prop_assert_eq!(r.trace.is_some(), want.is_trivial());
    }

    #[test]
    fn fractional_kernel_is_even_and_homogeneous(
        s in 0.05f64..0.95,
        x in -5.0f64..5.0,
        y in -5.0f64..5.0,
        t in 0.1f64..10.0,
    ) {
        prop_assume!(x.abs() + y.abs() > 1e-3);
        let k = make_fractional_kernel(2, s).unwrap();
        prop_assert_eq!(k.eval(&[x, y]), k.eval(&[-x, -y]));
        let scaled = k.eval(&[t * x, t * y]) * t.powf(2.0 + 2.0 * s);
        prop_assert!((scaled / k.eval(&[x, y]) - 1.0).abs() < 1e-12);
    }

    #[test]
    fn second_difference_vanishes_on_affine_fields(
        c0 in -3.0f64..3.0,
        c1 in -3.0f64..3.0,
        x in -4.0f64..4.0,
        z in -4.0f64..4.0,
    ) {
        let u = ScalarField::new(1, "affine", move |p: &[f64]| c0 + c1 * p[0]);
        let d = second_difference(&u, &[x], &[z]).unwrap();
        prop_assert!(d.abs() <= 1e-12 * (1.0 + c0.abs() + c1.abs() * (x.abs() + z.abs())));
    }
}

#[test]
fn halving_tol_never_loosens_the_estimate() {
    // steep edge of a narrow bump, where evaluation noise is well above eps |u|
    let cases = [
        (1, 0.5, vec![0.47]),
        (1, 0.25, vec![-0.9]),
        (2, 0.5, vec![-0.1725, 0.6887]),
        (2, 0.5, vec![0.3, 0.5575]),
        (2, 0.75, vec![1.2, 0.3]),
    ];
    for (n, s, x) in cases {
        let k = make_fractional_kernel(n, s).unwrap();
        let mut centre = vec![0.0; n];
        centre[0] = 0.5;
        let u = make_bump(n).unwrap().dilated(0.5).shifted(&centre);
        let mut prev: Option<QuadResult> = None;
        let mut tol = 1e-6;
        while tol >= 1e-10 {
            let cfg = QuadratureConfig::default().with_tol(tol);
            let r = pv_integrate(&u, &k, &x, &cfg).unwrap();
            if let Some(p) = prev {
                assert!(
                    r.error_estimate <= p.error_estimate,
                    "{n} {s} {x:?} tol {tol}: {p:?} -> {r:?}"
                );
                assert!(
                    (r.value - p.value).abs() <= r.error_estimate + p.error_estimate,
                    "{n} {s} {x:?} tol {tol}: {p:?} -> {r:?}"
                );
            }
            prev = Some(r);
            tol *= 0.5;
        }
    }
}
