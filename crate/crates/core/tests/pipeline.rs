use nalgebra::DMatrix;
use num_complex::Complex64;
use proptest::prelude::*;
use ssolab::netmodel::powerflow::run_power_flow;
use ssolab::netmodel::spec::{bundled, parse_system, BusKind};
use ssolab::netmodel::initialize_states;
use ssolab::report::{read_numeric_csv, timeseries_csv};
use ssolab::smallsignal::{
    classify_grouping, delay_sweep, linearize, log_grid, modes_at, sigma_max_response, ShapeComponent, SsoBand, GROUPING_THRESHOLD,
};
use ssolab::timedomain::{simulate, Scenario};
use ssolab::{Framework, SystemSpec};

fn spec(case: &str) -> SystemSpec {
    parse_system(bundled::by_name(case).unwrap()).unwrap()
}

/// σ_max of C (jωI − A)⁻¹ B + D by a plain dense solve.
fn sigma_direct(a: &DMatrix<f64>, b: &DMatrix<f64>, c: &DMatrix<f64>, d: &DMatrix<f64>, f: f64) -> f64 {
    let cx = |m: &DMatrix<f64>| m.map(|v| Complex64::new(v, 0.0));
    let n = a.nrows();
    let jw = Complex64::new(0.0, 2.0 * std::f64::consts::PI * f);
    let m = DMatrix::from_fn(n, n, |i, j| if i == j { jw } else { Complex64::new(0.0, 0.0) }) - cx(a);
    let x = m.lu().solve(&cx(b)).unwrap();
    let g = cx(c) * x + cx(d);
    g.svd(false, false).singular_values.max()
}

#[test]
fn sigma_max_matches_direct_resolvent() {
    for fw in [Framework::Spc, Framework::Qpc] {
        let mut s = spec("case4");
        s.framework = fw;
        s.set_tau_p(2e-3);
        let p = initialize_states(&s).unwrap();
        let lin = linearize(&p.model, &p.op, 2).unwrap();
        let grid = log_grid(2.0, 90.0, 7);
        for (f, sv) in sigma_max_response(&lin, &grid).unwrap() {
            let direct = sigma_direct(&lin.a, &lin.b, &lin.c, &lin.d, f);
            assert!((sv / direct - 1.0).abs() < 1e-8, "{fw:?} {f} Hz: {sv} vs {direct}");
        }
    }
}

#[test]
fn sweep_points_are_eigenvalues_at_their_delay() {
    let p = initialize_states(&spec("case3")).unwrap();
    let taus = [0.0, 2e-3, 4e-3];
    let sweep = delay_sweep(&p.model, &p.op, &taus, 2, SsoBand::default(), 2).unwrap();
    assert!(!sweep.points.is_empty());
    for pt in &sweep.points {
        let modes = modes_at(&p.model, &p.op, pt.tau, 2).unwrap();
        let hit = modes.iter().any(|m| (m.sigma - pt.sigma).abs() < 1e-9 && (m.omega - pt.omega).abs() < 1e-9);
        assert!(hit, "{pt:?}");
    }
    for id in sweep.mode_ids() {
        let taus_seen: Vec<f64> = sweep.track(id).iter().map(|p| p.tau).collect();
        assert_eq!(taus_seen, taus);
    }
}

#[test]
fn timeseries_csv_round_trips() {
    let p = initialize_states(&spec("case2")).unwrap();
    let ts = simulate(&p.model, &p.op, &Scenario::pulse(0.1, "GFC2", 0.01, 0.01, 0.01)).unwrap();
    let text = timeseries_csv(&ts, "abc").unwrap();
    let cols = read_numeric_csv(&text).unwrap();
    assert_eq!(cols.len(), ts.channels.len() + 1);
    for (k, c) in ts.channels.iter().enumerate() {
        assert!(cols[k + 1].0.starts_with(&c.name));
        for (a, b) in cols[k + 1].1.iter().zip(&c.values) {
            assert!((a - b).abs() <= 1e-11 * b.abs().max(1e-300), "{}: {a} vs {b}", c.name);
        }
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn power_flow_balances_under_load_scaling(k in 0.7f64..1.1, case in 0usize..4) {
        let name = bundled::all()[case].0;
        let mut s = spec(name);
        for l in &mut s.loads {
            l.p_mw *= k;
            l.q_mvar *= k;
        }
        let slack: Vec<u32> = s.buses.iter().filter(|b| b.kind == BusKind::Slack).map(|b| b.id).collect();
        for m in &mut s.machines {
            if !slack.contains(&m.bus) {
                m.p_mw *= k;
            }
        }
        let pf = run_power_flow(&s).unwrap();
        prop_assert!(pf.mismatch <= s.defaults.pf_tolerance);
        let rep = pf.report();
        let generation: f64 = rep.machines.iter().map(|m| m.p).sum();
        let load: f64 = s.loads.iter().map(|l| l.p_mw).sum::<f64>() / s.defaults.s_base_mva;
        let losses: f64 = rep.branches.iter().map(|b| b.p_from + b.p_to).sum();
        prop_assert!(losses >= 0.0);
        prop_assert!((generation - load - losses).abs() < 1e-6, "{} {} {}", generation, load, losses);
    }

    #[test]
    fn grouping_ignores_machine_order(
        angles in prop::collection::vec(-180.0f64..180.0, 4),
        mags in prop::collection::vec(0.0f64..1.0, 4),
        shift in 0usize..4,
    ) {
        let names = ["GFC1", "GFC2", "GFC3", "GFC4"];
        let areas = [1, 1, 2, 2];
        let shape: Vec<ShapeComponent> = (0..4)
            .map(|i| ShapeComponent {
                machine: names[i].into(),
                area: areas[i],
                value: Complex64::from_polar(mags[i] + if i == 0 { 1.0 } else { 0.0 }, angles[i].to_radians()),
            })
            .collect();
        let mut moved = shape.clone();
        moved.rotate_left(shift);
        let (a, b) = (classify_grouping(&shape, GROUPING_THRESHOLD), classify_grouping(&moved, GROUPING_THRESHOLD));
        prop_assert_eq!(a.kind, b.kind);
        let sorted = |mut v: Vec<String>| { v.sort(); v };
        prop_assert_eq!(sorted(a.group_a), sorted(b.group_a));
        prop_assert_eq!(sorted(a.group_b), sorted(b.group_b));
    }
}
