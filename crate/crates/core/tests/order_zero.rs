//! Order-zero solve against values frozen from an independent collocation
//! solve (tests/oracles/order_zero_bvp.py).

use endoguide::cli::MissionConfig;
use endoguide::homotopy::{order_zero_guess, solve_order_zero, HomotopyOptions};

const CONFIG: &str = include_str!("../../../configs/mission1.toml");

const T_REF: f64 = 48.631888671;
const P_R_REF: f64 = 7.90528890;
const P_LAT_REF: f64 = 2.6854070018 * 6_378_137.0;
const P_V_REF: f64 = 188.357815;
const P_GAMMA_REF: f64 = 29318.7513;
const V_T_REF: f64 = 203.512178;

fn rel(a: f64, b: f64) -> f64 {
    (a - b).abs() / b.abs()
}

#[test]
fn order_zero_matches_collocation_oracle() {
    let cfg = MissionConfig::from_toml_str(CONFIG).unwrap();
    let problem = cfg.problem();
    let (rep, stage) = solve_order_zero(&problem, &HomotopyOptions::default()).unwrap();
    assert_eq!((stage.lambda1, stage.lambda2), (0.0, 0.0));
    assert!(rep.residual_norm < 1e-8);
    let p = rep.unknowns.p0;
    let t = rep.unknowns.final_time(&stage).unwrap();
    assert!(rel(t, T_REF) < 1e-6, "T = {t}");
    assert!(rel(p[0], P_R_REF) < 1e-6, "p_r = {}", p[0]);
    assert!(rel(p[1], P_LAT_REF) < 1e-6, "p_L = {}", p[1]);
    assert!(rel(p[3], P_V_REF) < 1e-6, "p_v = {}", p[3]);
    assert!(rel(p[4], P_GAMMA_REF) < 1e-6, "p_gamma = {}", p[4]);
    // planar problem: no crossrange or heading costate
    assert!(p[2].abs() < 1e-6 * p[1].abs() && p[5].abs() < 1e-6 * p[4].abs());

    let (traj, _) = problem.evaluate(&rep.unknowns, &stage, &problem.report_options(&rep)).unwrap();
    assert!(rel(traj.final_state.v, V_T_REF) < 1e-6, "v(T) = {}", traj.final_state.v);
    // lateral control stays inside the cone, so both laws give the same extremal
    let sin_a = problem.model.sin_alpha_max();
    assert!(traj.samples.iter().all(|s| s.control.lateral2().sqrt() < sin_a));
}

#[test]
fn heuristic_guess_is_close_to_the_oracle() {
    let cfg = MissionConfig::from_toml_str(CONFIG).unwrap();
    let g = order_zero_guess(&cfg.problem());
    let t = g.t_final.unwrap();
    assert!(rel(t, T_REF) < 0.25, "T guess {t}");
    assert!(rel(g.p0[3], P_V_REF) < 0.5, "p_v guess {}", g.p0[3]);
    assert!(g.p0[0] > 0.0 && g.p0[1] > 0.0 && g.p0[4] > 0.0);
}
