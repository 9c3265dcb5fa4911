use dtemt::scenario::{
    parse_config, parse_config_str, shipped_two_area, Dispatch, EventConfig, LoadConfig, MatrixValue, NodeConfig,
    Phasor, Scenario, ScenarioConfig, ShuntConfig, SteadyState, DERIVATIVE_TOL, KCL_TOL,
};
use dtemt::solvers::{simulate, Method, OdeSystem, SolverConfig};
use dtemt::Error;
use num_complex::Complex64;

fn config_error_id(r: dtemt::Result<ScenarioConfig>) -> String {
    match r {
        Err(Error::Config { id, .. }) => id,
        other => panic!("expected a config error, got {other:?}"),
    }
}

#[test]
fn shipped_dataset_shape() {
    let c = shipped_two_area();
    assert_eq!(c.machines.len(), 4);
    assert_eq!(c.nodes.len(), 11);
    assert_eq!(c.events.len(), 1);
    assert_eq!(c.frequency_hz, 60.0);
    let EventConfig::ThreePhaseFault { time, node, duration, .. } = &c.events[0];
    assert_eq!(*time, 1.0);
    assert_eq!(node, "bus7");
    assert!((duration - 5.0 / 60.0).abs() < 1e-15);
    let sc = Scenario::build(&c, 0.0).unwrap();
    // 14 states per generator, 3 per node and branch, plus the fault slot
    let n_branches = c.branches.len() + c.loads.len() + 1;
    assert_eq!(sc.system.dim(), 4 * 14 + 3 * (11 + n_branches));
    let names = sc.system.state_names();
    for n in ["gen2.i_a", "gen1.delta", "gen4.e_fd", "bus7.v_a", "line7_8a.i_b"] {
        assert!(names.iter().any(|m| m == n), "missing {n}");
    }
}

#[test]
fn round_trip_preserves_the_config() {
    let c = shipped_two_area();
    let text = c.to_json();
    let back = parse_config_str(&text).unwrap();
    assert_eq!(back, c);
    assert_eq!(back.to_json(), text);
}

#[test]
fn file_round_trip_and_missing_file() {
    let dir = std::path::Path::new(env!("CARGO_TARGET_TMPDIR"));
    let path = dir.join("scenario_round_trip.json");
    std::fs::write(&path, shipped_two_area().to_json()).unwrap();
    assert_eq!(parse_config(&path).unwrap(), shipped_two_area());
    let err = parse_config(dir.join("no_such_scenario.json")).unwrap_err();
    assert!(matches!(err, Error::Io { .. }), "{err}");
}

#[test]
fn syntax_errors_report_line_and_column() {
    let text = "{\n  \"name\": \"x\",\n  \"frequency_hz\": 60,\n    oops\n}";
    match parse_config_str(text) {
        Err(Error::Parse { line, column, .. }) => {
            assert_eq!(line, 4);
            assert_eq!(column, 5);
        }
        other => panic!("expected a parse error, got {other:?}"),
    }
}

#[test]
fn unknown_fields_are_rejected() {
    let mut v: serde_json::Value = serde_json::from_str(&shipped_two_area().to_json()).unwrap();
    v["machines"][0]["params"]["x_d"] = serde_json::json!(1.8);
    assert!(matches!(parse_config_str(&v.to_string()), Err(Error::Parse { .. })));
}

#[test]
fn missing_dispatch_names_the_machine() {
    let mut c = shipped_two_area();
    c.machines[2].dispatch = None;
    assert_eq!(config_error_id(parse_config_str(&c.to_json())), "gen3");
}

#[test]
fn duplicate_node_is_rejected() {
    let mut c = shipped_two_area();
    let dup = c.nodes[4].clone();
    c.nodes.push(dup);
    assert_eq!(config_error_id(parse_config_str(&c.to_json())), "bus5");
}

#[test]
fn references_must_resolve() {
    let mut c = shipped_two_area();
    c.branches[0].to_node = "bus99".into();
    assert_eq!(config_error_id(parse_config_str(&c.to_json())), c.branches[0].id);

    let mut c = shipped_two_area();
    c.machines[1].node = "bus42".into();
    assert_eq!(config_error_id(parse_config_str(&c.to_json())), "gen2");

    let mut c = shipped_two_area();
    let EventConfig::ThreePhaseFault { time, .. } = &mut c.events[0];
    *time = 10.0;
    assert!(config_error_id(parse_config_str(&c.to_json())).contains("bus7"));
}

#[test]
fn shipped_initialization_is_an_equilibrium() {
    let sc = Scenario::build(&shipped_two_area(), 0.0).unwrap();
    assert!(sc.report.kcl_residual < KCL_TOL, "{}", sc.report.kcl_residual);
    assert!(sc.report.derivative_residual < DERIVATIVE_TOL, "{:?}", sc.report.worst);
    // the initial point lies on the recorded steady-state trajectory
    assert_eq!(sc.x0, sc.steady_state.at(0.0));
    let mut f = vec![0.0; sc.x0.len()];
    sc.system.rhs(0.0, &sc.x0, &mut f).unwrap();
    let rate = sc.steady_state.rate(0.0);
    let worst = f.iter().zip(&rate).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
    assert!(worst < DERIVATIVE_TOL, "{worst:e}");
}

#[test]
fn initialization_at_a_later_time_is_consistent() {
    let a = Scenario::build(&shipped_two_area(), 0.0).unwrap();
    let b = Scenario::build(&shipped_two_area(), 0.37).unwrap();
    assert!(b.report.derivative_residual < DERIVATIVE_TOL);
    // same operating point seen at a different instant
    let want = a.steady_state.at(0.37);
    let names = a.system.state_names();
    for (i, (x, y)) in b.x0.iter().zip(&want).enumerate() {
        let theta = names[i].ends_with(".theta");
        let tol = if theta { 1e-9 * y.abs() } else { 1e-12 };
        assert!((x - y).abs() <= tol, "{}: {x} vs {y}", names[i]);
    }
}

#[test]
fn perturbed_operating_point_is_rejected() {
    let mut c = shipped_two_area();
    c.nodes[6].voltage.magnitude *= 1.01;
    let err = Scenario::build(&c, 0.0).unwrap_err();
    assert!(matches!(err, Error::Init(ref m) if m.contains("current balance")), "{err}");

    let mut c = shipped_two_area();
    c.machines[0].dispatch.as_mut().unwrap().p *= 1.01;
    assert!(matches!(Scenario::build(&c, 0.0), Err(Error::Init(_))));
}

#[test]
fn operating_points_outside_control_limits_are_rejected() {
    let mut c = shipped_two_area();
    c.machines[0].governor.v_max = 5.0;
    let err = Scenario::build(&c, 0.0).unwrap_err();
    assert!(matches!(err, Error::Init(ref m) if m.contains("gen1")), "{err}");

    let mut c = shipped_two_area();
    c.machines[3].exciter.e_max = 0.5;
    let err = Scenario::build(&c, 0.0).unwrap_err();
    assert!(matches!(err, Error::Init(ref m) if m.contains("gen4")), "{err}");
}

/// One machine feeding an RL load and a shunt capacitor at its terminal,
/// dispatched so that the node balances.
fn single_machine(v: Complex64, r: f64, x: f64, c: f64) -> (ScenarioConfig, Complex64) {
    let mut cfg = shipped_two_area();
    let z = Complex64::new(r, x);
    // S = V conj(I_load + I_cap) with I_cap = j c V
    let i = v / z + Complex64::new(0.0, c) * v;
    let s = v * i.conj();
    cfg.nodes = vec![NodeConfig {
        id: "bus1".into(),
        voltage: Phasor {
            magnitude: v.norm(),
            angle: v.arg(),
        },
    }];
    cfg.shunts = vec![ShuntConfig {
        node: "bus1".into(),
        c: MatrixValue::Scalar(c),
    }];
    cfg.branches.clear();
    cfg.loads = vec![LoadConfig {
        id: "load1".into(),
        node: "bus1".into(),
        r: MatrixValue::Scalar(r),
        l: MatrixValue::Scalar(x),
    }];
    cfg.machines.truncate(1);
    cfg.machines[0].dispatch = Some(Dispatch { p: s.re, q: s.im });
    cfg.events.clear();
    (cfg, s)
}

#[test]
fn single_machine_rotor_angle_matches_the_phasor_solution() {
    for (v, r, x, c) in [
        (Complex64::from_polar(1.0, 0.2), 0.13, 0.04, 2.0),
        (Complex64::from_polar(1.02, -0.4), 0.2, 0.05, 2.5),
        (Complex64::from_polar(0.98, 1.1), 0.25, 0.02, 1.0),
    ] {
        let (cfg, s) = single_machine(v, r, x, c);
        let sc = Scenario::build(&cfg, 0.0).unwrap();
        let p = &cfg.machines[0].params;
        let MatrixValue::Scalar(r_s) = p.r_s else { panic!("scalar stator resistance") };
        let x_q = p.l_al + p.l_aq;
        // internal angle from E = V + (r_s + j x_q) I, written in real terms
        let vm = v.norm();
        let want = v.arg() + (x_q * s.re - r_s * s.im).atan2(vm * vm + r_s * s.re + x_q * s.im);
        let delta = sc.x0[0];
        assert!((delta - want).abs() < 1e-12, "delta {delta} vs {want}");
        assert!(sc.report.derivative_residual < DERIVATIVE_TOL);

        // and it holds as an equilibrium
        let run = simulate(
            &sc.system,
            &sc.x0,
            &SolverConfig::new(Method::Dt { order: 20 }, 1e-4, 0.0, 0.2).with_record_every(100),
        )
        .unwrap();
        for i in 0..run.len() {
            let want = sc.steady_state.at(run.times[i]);
            for (a, b) in run.row(i).iter().zip(&want) {
                assert!((a - b).abs() < 1e-6, "t = {}: {a} vs {b}", run.times[i]);
            }
        }
    }
}

#[test]
fn steady_state_kinds_match_the_state_roles() {
    let sc = Scenario::build(&shipped_two_area(), 0.0).unwrap();
    let names = sc.system.state_names();
    for (n, s) in names.iter().zip(&sc.steady_state.states) {
        let (owner, role) = n.split_once('.').unwrap();
        let ok = match role {
            // an open fault slot carries no current
            _ if owner.starts_with("fault_") => *s == SteadyState::Constant(0.0),
            "theta" => matches!(s, SteadyState::Ramp(_)),
            "i_a" | "i_b" | "i_c" | "v_a" | "v_b" | "v_c" => matches!(s, SteadyState::Sinusoid(_)),
            _ => matches!(s, SteadyState::Constant(_)),
        };
        assert!(ok, "{n}: {s:?}");
    }
}
