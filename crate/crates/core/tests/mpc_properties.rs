use nmpc_core::dynamics::{CstrModel, PlantModel};
use nmpc_core::experiment::CSTR_INITIAL_STATE;
use nmpc_core::mpc::{discretized_cost, fixed_schedule, mpc_closed_loop, solve_ocp, OcpSpec};

fn reactor() -> (CstrModel, OcpSpec) {
    (CstrModel::default(), OcpSpec::cstr(0.3).unwrap())
}

#[test]
fn value_at_initial_state_is_pinned() {
    let (model, spec) = reactor();
    let sol = solve_ocp(&model, &spec, &CSTR_INITIAL_STATE, None).unwrap();
    assert!(sol.converged);
    assert!((sol.value - 5815.979).abs() <= 5815.979 * 1e-5, "{}", sol.value);
}

#[test]
fn value_grows_with_prediction_horizon() {
    let model = CstrModel::default();
    let x0 = [0.42, 362.0];
    let values: Vec<f64> = [0.1, 0.2, 0.3, 0.4]
        .iter()
        .map(|t| solve_ocp(&model, &OcpSpec::cstr(*t).unwrap(), &x0, None).unwrap().value)
        .collect();
    for w in values.windows(2) {
        assert!(w[1] >= w[0] * (1.0 - 1e-6), "{values:?}");
    }
}

#[test]
fn no_single_cell_change_improves_the_solution() {
    let (model, spec) = reactor();
    let x0 = CSTR_INITIAL_STATE;
    let sol = solve_ocp(&model, &spec, &x0, None).unwrap();
    let limits = model.input_constraints()[0];
    let base = discretized_cost(&model, &spec, &x0, &sol.control).unwrap();
    assert!((base - sol.value).abs() <= 1e-9 * base);
    for k in 0..sol.control.num_cells() {
        for step in [-1.0, -0.1, 0.1, 1.0] {
            let mut u = sol.control.clone();
            let v = u.values_mut();
            v[k] = limits.project(v[k] + step);
            let cost = discretized_cost(&model, &spec, &x0, &u).unwrap();
            assert!(cost >= base - 1e-6 * base, "cell {k}, step {step}: {cost} < {base}");
        }
    }
}

#[test]
fn solutions_respect_input_bounds() {
    let (model, spec) = reactor();
    let sol = solve_ocp(&model, &spec, &[0.2, 390.0], None).unwrap();
    let limits = model.input_constraints()[0];
    assert!(sol.control.values().iter().all(|u| limits.contains(*u)));
}

#[test]
fn equilibrium_is_nearly_free() {
    let (model, spec) = reactor();
    let sol = solve_ocp(&model, &spec, model.equilibrium_state(), None).unwrap();
    assert!(sol.value <= 1e-3, "{}", sol.value);
}

#[test]
fn solving_is_deterministic() {
    let (model, spec) = reactor();
    let a = solve_ocp(&model, &spec, &CSTR_INITIAL_STATE, None).unwrap();
    let b = solve_ocp(&model, &spec, &CSTR_INITIAL_STATE, None).unwrap();
    assert_eq!(a.control.values(), b.control.values());
    assert_eq!(a.value.to_bits(), b.value.to_bits());
}

#[test]
fn prediction_matches_closed_loop_without_disturbance() {
    let (model, spec) = reactor();
    let sol = solve_ocp(&model, &spec, &CSTR_INITIAL_STATE, None).unwrap();
    let run = mpc_closed_loop(&model, &spec, &CSTR_INITIAL_STATE, &fixed_schedule(0.1, 0.3), 0.3).unwrap();
    let predicted = sol.predicted_trajectory.dense_eval(0.1);
    for (p, x) in predicted.iter().zip(&run.steps[1].state) {
        assert!((p - x).abs() <= 1e-5 * (1.0 + x.abs()), "{p} vs {x}");
    }
    assert_eq!(run.steps[0].value.to_bits(), sol.value.to_bits());
}

#[test]
fn closed_loop_reaches_equilibrium() {
    let (model, spec) = reactor();
    let run = mpc_closed_loop(&model, &spec, &CSTR_INITIAL_STATE, &fixed_schedule(0.2, 1.0), 1.0).unwrap();
    let x = &run.terminal_state;
    assert!((x[0] - 0.5).abs() < 0.05 && (x[1] - 350.0).abs() < 5.0, "{x:?}");
    assert!(run.terminal_value < run.steps[0].value);
    assert!((run.end_time() - 1.0).abs() < 1e-9);
}

#[test]
fn rejects_control_horizon_off_grid_or_too_long() {
    let (model, spec) = reactor();
    assert!(mpc_closed_loop(&model, &spec, &CSTR_INITIAL_STATE, &[0.105; 10], 1.0).is_err());
    assert!(mpc_closed_loop(&model, &spec, &CSTR_INITIAL_STATE, &[0.4; 3], 1.0).is_err());
    assert!(mpc_closed_loop(&model, &spec, &CSTR_INITIAL_STATE, &[0.1; 3], 1.0).is_err());
}
