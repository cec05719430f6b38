mod common;

use nalgebra::DMatrix;
use proptest::prelude::*;
use xcosw_core::{
    compile, rk4_step, sample_schedule, simulate, Diagram, SimError, SimOptions, SolverKind,
};

use common::{add, driven_lag, interp, load, wire};

fn opts(tf: f64) -> SimOptions {
    SimOptions {
        tf,
        ..SimOptions::default()
    }
}

fn adaptive(tf: f64, rtol: f64) -> SimOptions {
    SimOptions {
        tf,
        solver: SolverKind::Adaptive,
        rtol,
        ..SimOptions::default()
    }
}

fn step_lag() -> (Diagram, String) {
    driven_lag(
        (
            "STEP_FUNCTION",
            &[("step_time", "0"), ("initial", "0"), ("final", "1")],
        ),
        "1",
        "0.5*s+1",
    )
}

fn max_lag_error(solver: SimOptions) -> f64 {
    let (d, sc) = step_lag();
    let r = simulate(&compile(&d).unwrap(), &solver).unwrap();
    let y = r.signal(&sc).unwrap();
    r.times
        .iter()
        .zip(y)
        .map(|(t, y)| (y - (1.0 - (-2.0 * t).exp())).abs())
        .fold(0.0, f64::max)
}

#[test]
fn rk4_step_on_decay() {
    let (d, _) = driven_lag(("CONST_m", &[("value", "0")]), "1", "s+1");
    let sys = compile(&d).unwrap();
    let h: f64 = 0.1;
    let x = rk4_step(&sys, 0.0, h, &[1.0]).unwrap();
    let by_hand = 1.0 - h + h.powi(2) / 2.0 - h.powi(3) / 6.0 + h.powi(4) / 24.0;
    assert!((x[0] - by_hand).abs() < 1e-15);
    assert!((x[0] - 0.9048375).abs() < 1e-7);
}

#[test]
fn rk4_step_trivial_fields() {
    let mut d = Diagram::default();
    let c = add(&mut d, "CONST_m", &[("value", "0")]);
    let i = add(&mut d, "INTEGRAL_f", &[]);
    let sc = add(&mut d, "CSCOPE", &[]);
    wire(&mut d, &c, 0, &i, 0);
    wire(&mut d, &i, 0, &sc, 0);
    let sys = compile(&d).unwrap();
    assert_eq!(rk4_step(&sys, 0.0, 0.3, &[2.5]).unwrap(), vec![2.5]);

    d.set_param(&c, "value", "1").unwrap();
    let sys = compile(&d).unwrap();
    assert_eq!(rk4_step(&sys, 0.0, 0.5, &[0.0]).unwrap(), vec![0.5]);
    assert!(matches!(
        rk4_step(&sys, 0.0, 0.0, &[0.0]),
        Err(SimError::InvalidOptions(_))
    ));
}

#[test]
fn lag_fixed_step_oracle() {
    assert!(max_lag_error(opts(3.0)) < 1e-7);
    let (d, sc) = step_lag();
    let r = simulate(&compile(&d).unwrap(), &opts(3.0)).unwrap();
    let at_one = r.value_at(&sc, 1.0).unwrap();
    assert!((at_one - 0.8646647).abs() < 1e-7, "{at_one}");
}

#[test]
fn lag_adaptive_oracle() {
    assert!(max_lag_error(adaptive(3.0, 1e-6)) < 1e-5);
}

#[test]
fn tighter_tolerance_means_smaller_error() {
    let loose = max_lag_error(adaptive(3.0, 1e-6));
    let tight = max_lag_error(adaptive(3.0, 1e-8));
    assert!(tight * 10.0 <= loose, "loose {loose:e} tight {tight:e}");
}

#[test]
fn result_shape() {
    let (d, sc) = step_lag();
    for o in [opts(3.0), adaptive(3.0, 1e-6)] {
        let r = simulate(&compile(&d).unwrap(), &o).unwrap();
        assert_eq!(r.times[0], 0.0);
        assert_eq!(*r.times.last().unwrap(), 3.0);
        assert!(r.times.windows(2).all(|w| w[0] < w[1]));
        assert_eq!(r.signal(&sc).unwrap().len(), r.times.len());
        assert!(r.metadata.steps_accepted > 0);
        assert_eq!(r.metadata.solver, o.solver);
    }
}

#[test]
fn integrator_of_one_is_exact() {
    let mut d = Diagram::default();
    let c = add(&mut d, "CONST_m", &[("value", "1")]);
    let i = add(&mut d, "INTEGRAL_f", &[]);
    let sc = add(&mut d, "CSCOPE", &[]);
    wire(&mut d, &c, 0, &i, 0);
    wire(&mut d, &i, 0, &sc, 0);
    let r = simulate(&compile(&d).unwrap(), &opts(2.0)).unwrap();
    assert_eq!(*r.signal(&sc).unwrap().last().unwrap(), 2.0);
}

#[test]
fn zero_derivative_adaptive_takes_few_steps() {
    let (d, sc) = driven_lag(("CONST_m", &[("value", "0")]), "1", "s+1");
    let r = simulate(&compile(&d).unwrap(), &adaptive(10.0, 1e-6)).unwrap();
    assert!(r.metadata.steps_accepted <= 20, "{:?}", r.metadata);
    assert!(r.signal(&sc).unwrap().iter().all(|&v| v == 0.0));
}

#[test]
fn unit_delay_recurrence() {
    let d = load("dollar.xml");
    let sys = compile(&d).unwrap();
    let scope = sys.probes()[0].id.clone();
    let r = simulate(&sys, &opts(1.0)).unwrap();
    for hit in [0.0, 0.5, 1.0] {
        assert_eq!(r.times.iter().filter(|&&t| t == hit).count(), 1, "{hit}");
    }
    for (t, y) in r.times.iter().zip(r.signal(&scope).unwrap()) {
        let expected = if *t < 0.5 { 0.0 } else { 3.0 };
        assert_eq!(*y, expected, "t={t}");
    }
}

#[test]
fn sample_and_hold_of_ramp() {
    let mut d = Diagram::default();
    let c = add(&mut d, "CONST_m", &[("value", "1")]);
    let i = add(&mut d, "INTEGRAL_f", &[]);
    let zoh = add(&mut d, "SAMPHOLD", &[("Ts", "0.25")]);
    let sc = add(&mut d, "CSCOPE", &[]);
    wire(&mut d, &c, 0, &i, 0);
    wire(&mut d, &i, 0, &zoh, 0);
    wire(&mut d, &zoh, 0, &sc, 0);
    let r = simulate(&compile(&d).unwrap(), &opts(1.0)).unwrap();
    for (t, y) in r.times.iter().zip(r.signal(&sc).unwrap()) {
        let held = (t / 0.25 + 1e-9).floor() * 0.25;
        assert!((y - held).abs() < 1e-12, "t={t} y={y}");
    }
}

#[test]
fn schedule_examples() {
    let d = load("dollar.xml");
    let sys = compile(&d).unwrap();
    assert_eq!(sample_schedule(&sys, 0.0, 1.0), vec![0.0, 0.5, 1.0]);

    let mut d = Diagram::default();
    let c = add(&mut d, "CONST_m", &[]);
    let a = add(&mut d, "DOLLAR", &[("Ts", "0.5")]);
    let b = add(&mut d, "DOLLAR", &[("Ts", "0.75")]);
    let sa = add(&mut d, "CSCOPE", &[]);
    let sb = add(&mut d, "CSCOPE", &[]);
    wire(&mut d, &c, 0, &a, 0);
    wire(&mut d, &c, 0, &b, 0);
    wire(&mut d, &a, 0, &sa, 0);
    wire(&mut d, &b, 0, &sb, 0);
    let sys = compile(&d).unwrap();
    assert_eq!(
        sample_schedule(&sys, 0.0, 1.5),
        vec![0.0, 0.5, 0.75, 1.0, 1.5]
    );

    let (d, _) = step_lag();
    assert!(sample_schedule(&compile(&d).unwrap(), 0.0, 10.0).is_empty());
}

/// Global error at t = 1 of RK4 on x' = -x, x(0) = 1.
fn decay_error(dt: f64) -> f64 {
    let mut d = Diagram::default();
    let c = add(&mut d, "CONST_m", &[("value", "0")]);
    let i = add(&mut d, "INTEGRAL_f", &[("x0", "1")]);
    let g = add(&mut d, "GAINBLK", &[("gain", "-1")]);
    let s = add(&mut d, "SUMMATION", &[("signs", "[+1;+1]")]);
    let sc = add(&mut d, "CSCOPE", &[]);
    wire(&mut d, &c, 0, &s, 0);
    wire(&mut d, &g, 0, &s, 1);
    wire(&mut d, &s, 0, &i, 0);
    wire(&mut d, &i, 0, &g, 0);
    wire(&mut d, &i, 0, &sc, 0);
    let o = SimOptions {
        tf: 1.0,
        dt,
        ..SimOptions::default()
    };
    let r = simulate(&compile(&d).unwrap(), &o).unwrap();
    (r.signal(&sc).unwrap().last().unwrap() - (-1.0f64).exp()).abs()
}

#[test]
fn rk4_is_fourth_order() {
    let e: Vec<f64> = [0.1, 0.05, 0.025].into_iter().map(decay_error).collect();
    for w in e.windows(2) {
        let ratio = w[0] / w[1];
        assert!((12.0..=20.0).contains(&ratio), "errors {e:?}");
    }
}

/// Hand-assembled closed loop: x = [i, w],
/// L i' = V - R i - K w,  J w' = K i - b w.
fn motor_oracle(t: f64) -> f64 {
    let (r, l, k, j, b, v) = (1.0, 0.5, 0.01, 0.01, 0.1, 1.0);
    #[rustfmt::skip]
    let m = DMatrix::from_row_slice(3, 3, &[
        -r / l, -k / l, v / l,
         k / j, -b / j, 0.0,
         0.0,    0.0,   0.0,
    ]);
    // exp of the augmented matrix carries the forced response in its last column
    (m * t).exp()[(1, 2)]
}

#[test]
fn dc_motor_against_matrix_exponential() {
    let d = load("dc_motor.xml");
    let sys = compile(&d).unwrap();
    let r = simulate(&sys, &d.settings).unwrap();
    let w = r.signal("speed").unwrap();
    let worst = r
        .times
        .iter()
        .zip(w)
        .map(|(&t, &y)| (y - motor_oracle(t)).abs())
        .fold(0.0, f64::max);
    assert!(worst < 1e-6, "{worst:e}");

    let steady = 0.01 * 1.0 / (1.0 * 0.1 + 0.01 * 0.01);
    let last = *w.last().unwrap();
    assert!(
        ((last - steady) / steady).abs() < 1e-3,
        "{last} vs {steady}"
    );
}

#[test]
fn adaptive_and_fixed_agree() {
    let cases: Vec<(Diagram, String, f64)> = vec![
        (step_lag().0, step_lag().1, 3.0),
        (load("dc_motor.xml"), "speed".into(), 10.0),
    ];
    for (d, probe, tf) in cases {
        let sys = compile(&d).unwrap();
        let fine = simulate(
            &sys,
            &SimOptions {
                tf,
                dt: 1e-4,
                ..SimOptions::default()
            },
        )
        .unwrap();
        let ad = simulate(&sys, &adaptive(tf, 1e-6)).unwrap();
        let (atol, rtol) = (1e-9, 1e-6);
        for (&t, &y) in ad.times.iter().zip(ad.signal(&probe).unwrap()) {
            let reference = interp(&fine.times, fine.signal(&probe).unwrap(), t);
            assert!(
                (y - reference).abs() <= 10.0 * (atol + rtol * reference.abs()),
                "{probe} t={t} adaptive={y} fixed={reference}"
            );
        }
    }
}

#[test]
fn step_time_is_hit_exactly() {
    let (d, sc) = driven_lag(
        (
            "STEP_FUNCTION",
            &[("step_time", "0.3337"), ("initial", "0"), ("final", "1")],
        ),
        "1",
        "0.5*s+1",
    );
    let sys = compile(&d).unwrap();
    for o in [opts(2.0), adaptive(2.0, 1e-8)] {
        let r = simulate(&sys, &o).unwrap();
        assert!(r.times.contains(&0.3337));
        for (&t, &y) in r.times.iter().zip(r.signal(&sc).unwrap()) {
            let exact = if t < 0.3337 {
                0.0
            } else {
                1.0 - (-2.0 * (t - 0.3337)).exp()
            };
            assert!((y - exact).abs() < 1e-6, "{:?} t={t}", o.solver);
        }
    }
}

#[test]
fn blow_up_is_reported() {
    let mut d = Diagram::default();
    let c = add(&mut d, "CONST_m", &[("value", "1")]);
    let s = add(&mut d, "SUMMATION", &[("signs", "[+1;+1]")]);
    let g = add(&mut d, "GAINBLK", &[("gain", "1e300")]);
    let i = add(&mut d, "INTEGRAL_f", &[]);
    let sc = add(&mut d, "CSCOPE", &[]);
    wire(&mut d, &c, 0, &s, 0);
    wire(&mut d, &g, 0, &s, 1);
    wire(&mut d, &s, 0, &i, 0);
    wire(&mut d, &i, 0, &g, 0);
    wire(&mut d, &i, 0, &sc, 0);
    let err = simulate(&compile(&d).unwrap(), &opts(1.0)).unwrap_err();
    assert!(matches!(err, SimError::NonFinite { .. }), "{err:?}");
}

#[test]
fn bad_options_rejected() {
    let (d, _) = step_lag();
    let sys = compile(&d).unwrap();
    for o in [
        SimOptions {
            t0: 1.0,
            tf: 1.0,
            ..SimOptions::default()
        },
        SimOptions {
            dt: 0.0,
            ..SimOptions::default()
        },
        SimOptions {
            rtol: -1.0,
            ..SimOptions::default()
        },
        SimOptions {
            tf: f64::NAN,
            ..SimOptions::default()
        },
        SimOptions {
            tf: 1e9,
            dt: 1e-6,
            ..SimOptions::default()
        },
    ] {
        assert!(
            matches!(simulate(&sys, &o), Err(SimError::InvalidOptions(_))),
            "{o:?}"
        );
    }
}

#[test]
fn nonzero_start_time() {
    let (d, sc) = step_lag();
    let o = SimOptions {
        t0: 1.0,
        tf: 2.0,
        ..SimOptions::default()
    };
    let r = simulate(&compile(&d).unwrap(), &o).unwrap();
    assert_eq!(r.times[0], 1.0);
    // the lag starts at rest at t0 with the step already high
    let y = r.value_at(&sc, 2.0).unwrap();
    assert!((y - (1.0 - (-2.0f64).exp())).abs() < 1e-7);
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn simulation_is_linear(alpha in -5.0f64..5.0) {
        let base = load("dc_motor.xml");
        let mut scaled = base.clone();
        let step = base.blocks().iter().find(|b| b.kind.name() == "STEP_FUNCTION").unwrap().id.clone();
        scaled.set_param(&step, "final", &format!("{alpha:?}")).unwrap();
        let o = opts(2.0);
        let r1 = simulate(&compile(&base).unwrap(), &o).unwrap();
        let ra = simulate(&compile(&scaled).unwrap(), &o).unwrap();
        prop_assert_eq!(&r1.times, &ra.times);
        for (a, b) in r1.signal("speed").unwrap().iter().zip(ra.signal("speed").unwrap()) {
            prop_assert!((alpha * a - b).abs() <= 1e-12 * (1.0 + b.abs()));
        }
    }

    #[test]
    fn equilibrium_is_preserved(u in -10.0f64..10.0, k in 0.1f64..20.0, adaptive_solver in any::<bool>()) {
        // x' = k (u - x) started at x = u
        let mut d = Diagram::default();
        let c = add(&mut d, "CONST_m", &[("value", &format!("{u:?}"))]);
        let s = add(&mut d, "SUMMATION", &[("signs", "[+1;-1]")]);
        let g = add(&mut d, "GAINBLK", &[("gain", &format!("{k:?}"))]);
        let i = add(&mut d, "INTEGRAL_f", &[("x0", &format!("{u:?}"))]);
        let sc = add(&mut d, "CSCOPE", &[]);
        wire(&mut d, &c, 0, &s, 0);
        wire(&mut d, &i, 0, &s, 1);
        wire(&mut d, &s, 0, &g, 0);
        wire(&mut d, &g, 0, &i, 0);
        wire(&mut d, &i, 0, &sc, 0);
        let o = if adaptive_solver { adaptive(10.0, 1e-6) } else { SimOptions { dt: 1e-2, ..opts(10.0) } };
        let r = simulate(&compile(&d).unwrap(), &o).unwrap();
        for y in r.signal(&sc).unwrap() {
            prop_assert!((y - u).abs() <= 1e-9);
        }
    }

    #[test]
    fn every_sample_hit_recorded_once(
        periods in proptest::collection::vec(1u32..40, 1..4),
        tf in 0.5f64..4.0,
        adaptive_solver in any::<bool>(),
    ) {
        let mut d = Diagram::default();
        let c = add(&mut d, "CONST_m", &[]);
        let mut ts = Vec::new();
        for p in &periods {
            let period = *p as f64 * 0.05;
            ts.push(period);
            let z = add(&mut d, "DOLLAR", &[("Ts", &format!("{period:?}"))]);
            let sc = add(&mut d, "CSCOPE", &[]);
            wire(&mut d, &c, 0, &z, 0);
            wire(&mut d, &z, 0, &sc, 0);
        }
        let sys = compile(&d).unwrap();
        let o = if adaptive_solver { adaptive(tf, 1e-6) } else { SimOptions { dt: 0.01, ..opts(tf) } };
        let r = simulate(&sys, &o).unwrap();
        let schedule = sample_schedule(&sys, 0.0, tf);
        for period in ts {
            let mut k = 0u32;
            while k as f64 * period <= tf + 1e-9 * period {
                let hit = k as f64 * period;
                let matches = r.times.iter().filter(|&&t| (t - hit).abs() <= 1e-9 * period.max(1.0)).count();
                prop_assert_eq!(matches, 1, "hit {} of Ts={}", hit, period);
                prop_assert!(schedule.iter().any(|&t| (t - hit).abs() <= 1e-9 * period.max(1.0)));
                k += 1;
            }
        }
    }
}
