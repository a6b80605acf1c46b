use endoguide::charts::{to_cartesian, ChartId};
use endoguide::cli::{run_mission, MissionConfig};
use endoguide::pmp::{extract_control, hamiltonian};

const MISSION1: &str = include_str!("../../../configs/mission1.toml");
const MISSION2: &str = include_str!("../../../configs/mission2.toml");

#[test]
fn mission1_continuation_history() {
    let cfg = MissionConfig::from_toml_str(MISSION1).unwrap();
    let o = run_mission(&cfg).unwrap();
    assert!(o.residual_norm < 1e-8);

    // the full λ₁ step fails and is halved
    assert_eq!(o.history[0].lambda1, 1.0);
    assert!(!o.history[0].success);
    assert_eq!(o.history[1].lambda1, 0.5);

    let accepted: Vec<_> = o.history.iter().filter(|h| h.success).collect();
    for pair in accepted.windows(2) {
        assert!(pair[1].lambda1 >= pair[0].lambda1 && pair[1].lambda2 >= pair[0].lambda2);
    }
    let last = accepted.last().unwrap();
    assert_eq!((last.lambda1, last.lambda2), (1.0, 1.0));
    assert!(last.iterations < cfg.solver.max_iter);
    assert_eq!(o.nonregular_count, 0);
}

#[test]
fn mission2_switches_are_continuous() {
    let cfg = MissionConfig::from_toml_str(MISSION2).unwrap();
    let o = run_mission(&cfg).unwrap();
    let m = cfg.vehicle;
    assert_eq!(o.trajectory.final_state.chart, ChartId::A);
    assert!(o.switches >= 1);
    for sw in &o.trajectory.switches {
        let after = o.trajectory.samples.iter().find(|s| s.t == sw.t && s.state.chart == sw.to).unwrap();
        let a = to_cartesian(&sw.state_before).unwrap();
        let b = to_cartesian(&after.state).unwrap();
        assert!((a.position - b.position).norm() <= 1e-10 * a.position.norm());
        assert!((a.velocity - b.velocity).norm() <= 1e-10 * a.velocity.norm());
        let (u, _) = extract_control(&m, sw.t, &sw.state_before, &sw.costate_before, 1.0, Default::default()).unwrap();
        let h_before = hamiltonian(&m, sw.t, &sw.state_before, &sw.costate_before, &u, 1.0).unwrap();
        assert!((h_before - after.hamiltonian).abs() <= 1e-8 * h_before.abs().max(1.0));
    }
}
