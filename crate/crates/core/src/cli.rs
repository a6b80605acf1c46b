//! Mission configuration, single solves, the Monte-Carlo batch and the
//! fixed-time comparison scenarios, plus trajectory and history output.
//!
//! Configurations are TOML files with `[vehicle]`, `[initial]`,
//! `[order_zero_target]`, `[target]` and `[solver]` sections.

use std::io::Write;
use std::path::Path;
use std::time::Instant;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::charts::{ChartId, ChartState};
use crate::error::{GuidanceError, Result};
use crate::homotopy::{run_continuation, solve_order_zero, HistoryEntry, HomotopyOptions};
use crate::pmp::{TargetPoint, TerminalSpec, TimeMode};
use crate::propagate::{ExtremalTrajectory, PropagationOptions, Scheme, DEFAULT_STEPS, MIN_STEPS};
use crate::shooting::{ShootingProblem, SolverOptions};
use crate::vehicle::VehicleModel;

/// Trajectory columns, in output order.
pub const CSV_COLUMNS: [&str; 20] = [
    "t", "chart", "r_minus_rT", "L_rT", "l_rT", "v", "ang1", "ang2", "u1", "u2", "u3", "c1", "c2", "p_r", "p_L",
    "p_l", "p_v", "p_ang1", "p_ang2", "H",
];

/// Initial point in chart A: (r − r_T, L·r_T, l·r_T, v, γ, χ).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct InitialState {
    pub altitude: f64,
    pub downrange: f64,
    pub crossrange: f64,
    pub v: f64,
    pub gamma: f64,
    pub chi: f64,
}

impl Default for InitialState {
    fn default() -> Self {
        Self { altitude: 1000.0, downrange: 0.0, crossrange: 0.0, v: 500.0, gamma: 0.0, chi: 0.0 }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SolverConfig {
    pub steps: usize,
    pub scheme: Scheme,
    pub tol: f64,
    pub max_iter: usize,
    pub fd_step: f64,
    /// Chart switching threshold on |γ| [deg].
    pub switch_deg: f64,
    pub k_max: usize,
    pub delta_min: f64,
    pub restarts: usize,
}

impl Default for SolverConfig {
    fn default() -> Self {
        let s = SolverOptions::default();
        let h = HomotopyOptions::default();
        Self {
            steps: DEFAULT_STEPS,
            scheme: Scheme::Rk4,
            tol: s.tol,
            max_iter: s.max_iter,
            fd_step: s.fd_step,
            switch_deg: 60.0,
            k_max: h.k_max,
            delta_min: h.delta_min,
            restarts: h.restarts,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MissionConfig {
    #[serde(default)]
    pub vehicle: VehicleModel,
    #[serde(default)]
    pub initial: InitialState,
    pub order_zero_target: TargetPoint,
    pub target: TargetPoint,
    /// Final-time weight, in units of `speed_unit`.
    #[serde(default)]
    pub c1: f64,
    /// Speed unit of the cost [m/s]; the SI weight is c1·speed_unit².
    #[serde(default = "default_speed_unit")]
    pub speed_unit: f64,
    /// Prescribed final time [s]; the final time is free when absent.
    #[serde(default)]
    pub final_time: Option<f64>,
    #[serde(default)]
    pub solver: SolverConfig,
    #[serde(default)]
    pub seed: u64,
}

fn default_speed_unit() -> f64 {
    1000.0
}

fn invalid(field: &str, msg: impl std::fmt::Display) -> GuidanceError {
    GuidanceError::InvalidInput(format!("{field}: {msg}"))
}

fn check_target(name: &str, t: &TargetPoint) -> Result<()> {
    for (field, value) in [
        ("altitude", t.altitude),
        ("downrange", t.downrange),
        ("crossrange", t.crossrange),
        ("gamma", t.gamma),
        ("chi", t.chi),
    ] {
        if !value.is_finite() {
            return Err(invalid(&format!("{name}.{field}"), "must be finite"));
        }
    }
    if t.gamma.abs() >= std::f64::consts::FRAC_PI_2 {
        return Err(invalid(&format!("{name}.gamma"), "must satisfy |gamma| < pi/2"));
    }
    Ok(())
}

impl MissionConfig {
    pub fn from_toml_str(text: &str) -> Result<Self> {
        let cfg: MissionConfig = toml::from_str(text).map_err(|e| GuidanceError::InvalidInput(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| GuidanceError::InvalidInput(format!("{}: {e}", path.display())))?;
        Self::from_toml_str(&text)
    }

    pub fn validate(&self) -> Result<()> {
        self.vehicle.validate()?;
        let i = &self.initial;
        for (field, value) in [
            ("altitude", i.altitude),
            ("downrange", i.downrange),
            ("crossrange", i.crossrange),
            ("gamma", i.gamma),
            ("chi", i.chi),
        ] {
            if !value.is_finite() {
                return Err(invalid(&format!("initial.{field}"), "must be finite"));
            }
        }
        if !(i.v > 0.0 && i.v.is_finite()) {
            return Err(invalid("initial.v", "speed must be > 0"));
        }
        if i.gamma.abs() >= std::f64::consts::FRAC_PI_2 {
            return Err(invalid("initial.gamma", "must satisfy |gamma| < pi/2"));
        }
        check_target("order_zero_target", &self.order_zero_target)?;
        check_target("target", &self.target)?;
        if !(self.c1 >= 0.0 && self.c1.is_finite()) {
            return Err(invalid("c1", "must be >= 0"));
        }
        if !(self.speed_unit > 0.0 && self.speed_unit.is_finite()) {
            return Err(invalid("speed_unit", "must be > 0"));
        }
        if let Some(t) = self.final_time {
            if !(t > 0.0 && t.is_finite()) {
                return Err(invalid("final_time", "must be > 0"));
            }
        }
        let s = &self.solver;
        if s.steps < MIN_STEPS {
            return Err(invalid("solver.steps", format!("must be >= {MIN_STEPS}")));
        }
        if !(s.tol > 0.0) {
            return Err(invalid("solver.tol", "must be > 0"));
        }
        if s.max_iter == 0 {
            return Err(invalid("solver.max_iter", "must be >= 1"));
        }
        if !(s.fd_step > 0.0 && s.fd_step < 1e-2) {
            return Err(invalid("solver.fd_step", "must be in (0, 1e-2)"));
        }
        if !(s.switch_deg > 0.0 && s.switch_deg < 70.0) {
            return Err(invalid("solver.switch_deg", "must be in (0, 70)"));
        }
        if s.k_max == 0 {
            return Err(invalid("solver.k_max", "must be >= 1"));
        }
        if !(s.delta_min > 0.0 && s.delta_min <= 1.0) {
            return Err(invalid("solver.delta_min", "must be in (0, 1]"));
        }
        Ok(())
    }

    pub fn time_mode(&self) -> TimeMode {
        self.final_time.map_or(TimeMode::Free, TimeMode::Fixed)
    }

    pub fn problem(&self) -> ShootingProblem {
        let m = self.vehicle;
        let i = &self.initial;
        let x0 = ChartState::new(
            ChartId::A,
            [m.rt + i.altitude, i.downrange / m.rt, i.crossrange / m.rt, i.v, i.gamma, i.chi],
        );
        let terminal = TerminalSpec {
            order_zero: self.order_zero_target,
            target: self.target,
            c1: self.c1 * self.speed_unit * self.speed_unit,
            time_mode: self.time_mode(),
            v_ref: i.v,
            h_scale: 2.0 * i.v * m.ft0,
        };
        let s = &self.solver;
        let prop = PropagationOptions {
            steps: s.steps,
            scheme: s.scheme,
            switch_angle: s.switch_deg.to_radians(),
            ..PropagationOptions::default()
        };
        let solver = SolverOptions { tol: s.tol, max_iter: s.max_iter, fd_step: s.fd_step };
        ShootingProblem { model: m, x0, terminal, prop, solver }
    }

    pub fn homotopy_options(&self) -> HomotopyOptions {
        HomotopyOptions {
            k_max: self.solver.k_max,
            delta_min: self.solver.delta_min,
            restarts: self.solver.restarts,
            seed: self.seed,
        }
    }
}

/// Result of one solved mission.
#[derive(Debug, Clone)]
pub struct MissionOutcome {
    pub final_time: f64,
    pub final_speed: f64,
    pub switches: usize,
    pub wall_s: f64,
    pub residual_norm: f64,
    pub nonregular_count: usize,
    pub lambda1_attempts: usize,
    pub lambda2_attempts: usize,
    pub max_c1: f64,
    pub max_c2: f64,
    pub history: Vec<HistoryEntry>,
    pub trajectory: ExtremalTrajectory,
}

impl MissionOutcome {
    pub fn summary_line(&self) -> String {
        format!(
            "T = {:.4} s, |v(T)| = {:.2} m/s, switches = {}, wall = {:.2} s",
            self.final_time, self.final_speed, self.switches, self.wall_s
        )
    }
}

/// Order-zero solve followed by the continuation, then a recorded final propagation.
pub fn run_mission(config: &MissionConfig) -> Result<MissionOutcome> {
    config.validate()?;
    let clock = Instant::now();
    let problem = config.problem();
    let hopts = config.homotopy_options();
    let (seed, seed_stage) = solve_order_zero(&problem, &hopts)?;
    let state = run_continuation(&problem, &seed, &seed_stage, &hopts)?;
    let opts = problem.report_options(&state.last_report);
    let (trajectory, residual) = problem.evaluate(&state.unknowns, &state.stage, &opts)?;
    let residual_norm = residual.iter().fold(0.0f64, |a, r| a.max(r.abs()));
    let sin_a = problem.model.sin_alpha_max();
    Ok(MissionOutcome {
        final_time: trajectory.final_time,
        final_speed: trajectory.final_state.v,
        switches: trajectory.switches.len(),
        wall_s: clock.elapsed().as_secs_f64(),
        residual_norm,
        nonregular_count: trajectory.nonregular_count,
        lambda1_attempts: state.lambda1_attempts,
        lambda2_attempts: state.lambda2_attempts,
        max_c1: trajectory.max_c1(),
        max_c2: trajectory.max_c2(sin_a),
        history: state.history,
        trajectory,
    })
}

/// Sampling box of the batch targets: (r − r_T, L·r_T, l·r_T, γ, χ).
pub const BATCH_BOX: [(f64, f64); 5] = [
    (4000.0, 8000.0),
    (14000.0, 18000.0),
    (-4000.0, 4000.0),
    (-std::f64::consts::FRAC_PI_3, std::f64::consts::FRAC_PI_3),
    (-std::f64::consts::FRAC_PI_3, std::f64::consts::FRAC_PI_3),
];

pub fn sample_targets(n: usize, seed: u64) -> Vec<TargetPoint> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..n)
        .map(|_| {
            let v: [f64; 5] = std::array::from_fn(|k| rng.gen_range(BATCH_BOX[k].0..=BATCH_BOX[k].1));
            TargetPoint::new(v[0], v[1], v[2], v[3], v[4])
        })
        .collect()
}

/// Per-mission line of a batch.
#[derive(Debug, Clone, Serialize)]
pub struct BatchEntry {
    pub target: TargetPoint,
    pub success: bool,
    pub final_time: Option<f64>,
    pub final_speed: Option<f64>,
    pub switches: usize,
    pub nonregular_count: usize,
    /// Largest constraint values along the accepted trajectory.
    pub max_c1: Option<f64>,
    pub max_c2: Option<f64>,
    pub lambda1_attempts: Option<usize>,
    pub lambda2_attempts: Option<usize>,
    pub wall_s: f64,
    pub error: Option<String>,
}

#[derive(Debug, Clone, Serialize)]
pub struct BatchReport {
    pub n: usize,
    pub seed: u64,
    pub successes: usize,
    pub success_rate: f64,
    /// Mean wall time of the successful missions [s].
    pub mean_wall_s: f64,
    pub mean_lambda2_iterations: f64,
    /// Fraction of successful missions whose solution switches chart.
    pub switch_fraction: f64,
    pub nonregular_count: usize,
    /// Distinct λ₁-phase step counts over the successful missions.
    pub lambda1_iterations: Vec<usize>,
    pub entries: Vec<BatchEntry>,
}

impl BatchReport {
    pub fn lambda1_constant(&self) -> bool {
        self.lambda1_iterations.len() <= 1
    }

    pub fn summary_line(&self) -> String {
        format!(
            "success {}/{} ({:.1}%), mean wall {:.2} s, mean lambda2 steps {:.2}, switch fraction {:.1}%, nonregular {}, lambda1 steps {:?}",
            self.successes,
            self.n,
            100.0 * self.success_rate,
            self.mean_wall_s,
            self.mean_lambda2_iterations,
            100.0 * self.switch_fraction,
            self.nonregular_count,
            self.lambda1_iterations
        )
    }
}

/// Free-time, zero-weight missions towards seeded uniform targets, solved in parallel.
pub fn run_batch(config: &MissionConfig, n: usize, seed: u64) -> Result<BatchReport> {
    if n == 0 {
        return Err(invalid("n", "must be >= 1"));
    }
    config.validate()?;
    let entries: Vec<BatchEntry> = sample_targets(n, seed)
        .into_par_iter()
        .map(|target| {
            let cfg = MissionConfig { target, c1: 0.0, final_time: None, ..config.clone() };
            let clock = Instant::now();
            match run_mission(&cfg) {
                Ok(o) => BatchEntry {
                    target,
                    success: true,
                    final_time: Some(o.final_time),
                    final_speed: Some(o.final_speed),
                    switches: o.switches,
                    nonregular_count: o.nonregular_count,
                    max_c1: Some(o.max_c1),
                    max_c2: Some(o.max_c2),
                    lambda1_attempts: Some(o.lambda1_attempts),
                    lambda2_attempts: Some(o.lambda2_attempts),
                    wall_s: o.wall_s,
                    error: None,
                },
                Err(e) => BatchEntry {
                    target,
                    success: false,
                    final_time: None,
                    final_speed: None,
                    switches: 0,
                    nonregular_count: usize::from(matches!(e, GuidanceError::UnsupportedNonregularArc { .. })),
                    max_c1: None,
                    max_c2: None,
                    lambda1_attempts: None,
                    lambda2_attempts: None,
                    wall_s: clock.elapsed().as_secs_f64(),
                    error: Some(e.to_string()),
                },
            }
        })
        .collect();

    let ok: Vec<&BatchEntry> = entries.iter().filter(|e| e.success).collect();
    let mean = |f: &dyn Fn(&BatchEntry) -> f64| {
        if ok.is_empty() {
            f64::NAN
        } else {
            ok.iter().map(|e| f(e)).sum::<f64>() / ok.len() as f64
        }
    };
    let mut lambda1_iterations: Vec<usize> = ok.iter().filter_map(|e| e.lambda1_attempts).collect();
    lambda1_iterations.sort_unstable();
    lambda1_iterations.dedup();
    Ok(BatchReport {
        n,
        seed,
        successes: ok.len(),
        success_rate: ok.len() as f64 / n as f64,
        mean_wall_s: mean(&|e| e.wall_s),
        mean_lambda2_iterations: mean(&|e| e.lambda2_attempts.unwrap_or(0) as f64),
        switch_fraction: mean(&|e| f64::from(u8::from(e.switches > 0))),
        nonregular_count: entries.iter().map(|e| e.nonregular_count).sum(),
        lambda1_iterations,
        entries,
    })
}

/// Fixed-time comparison scenarios.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Scenario {
    Sc1,
    Sc2,
    Sc3,
}

impl Scenario {
    pub const ALL: [Scenario; 3] = [Scenario::Sc1, Scenario::Sc2, Scenario::Sc3];

    pub fn parse(name: &str) -> Option<Self> {
        match name.to_ascii_lowercase().as_str() {
            "sc1" => Some(Scenario::Sc1),
            "sc2" => Some(Scenario::Sc2),
            "sc3" => Some(Scenario::Sc3),
            _ => None,
        }
    }

    /// Target and prescribed final time; both target angles share one value.
    pub fn definition(self) -> (TargetPoint, f64) {
        let (alt, down, cross, angle, t) = match self {
            Scenario::Sc1 => (7030.0, 9450.0, 1400.0, -0.55, 20.0),
            Scenario::Sc2 => (7465.0, 8475.0, 1700.0, -0.67, 23.0),
            Scenario::Sc3 => (7900.0, 7500.0, 2000.0, -0.79, 29.0),
        };
        (TargetPoint::new(alt, down, cross, angle, angle), t)
    }

    /// Final speed reported by the reference indirect method [m/s].
    pub fn reference_speed(self) -> f64 {
        match self {
            Scenario::Sc1 => 763.1,
            Scenario::Sc2 => 609.8,
            Scenario::Sc3 => 480.0,
        }
    }

    /// Fixed time, zero weight, midpoint rule on 80 steps.
    pub fn configure(self, base: &MissionConfig) -> MissionConfig {
        let (target, t) = self.definition();
        MissionConfig {
            target,
            c1: 0.0,
            final_time: Some(t),
            solver: SolverConfig { steps: 80, scheme: Scheme::Rk2, ..base.solver },
            ..base.clone()
        }
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct CompareReport {
    pub scenario: Scenario,
    pub final_time: f64,
    pub final_speed: f64,
    pub reference_speed: f64,
    pub relative_error: f64,
    pub switches: usize,
    pub wall_s: f64,
}

impl CompareReport {
    pub fn summary_line(&self) -> String {
        format!(
            "{:?}: T = {:.3} s, |v(T)| = {:.2} m/s (reference {:.1}, error {:.2}%), switches = {}, wall = {:.2} s",
            self.scenario,
            self.final_time,
            self.final_speed,
            self.reference_speed,
            100.0 * self.relative_error,
            self.switches,
            self.wall_s
        )
    }
}

/// Solves a configuration already prepared by [`Scenario::configure`].
pub fn run_prepared_compare(config: &MissionConfig, scenario: Scenario) -> Result<(CompareReport, MissionOutcome)> {
    let outcome = run_mission(config)?;
    let reference_speed = scenario.reference_speed();
    let report = CompareReport {
        scenario,
        final_time: outcome.final_time,
        final_speed: outcome.final_speed,
        reference_speed,
        relative_error: (outcome.final_speed - reference_speed).abs() / reference_speed,
        switches: outcome.switches,
        wall_s: outcome.wall_s,
    };
    Ok((report, outcome))
}

pub fn run_compare(config: &MissionConfig, scenario: Scenario) -> Result<CompareReport> {
    run_prepared_compare(&scenario.configure(config), scenario).map(|(r, _)| r)
}

/// One trajectory row in [`CSV_COLUMNS`] order.
pub fn trajectory_rows(traj: &ExtremalTrajectory, model: &VehicleModel) -> Vec<[f64; 20]> {
    let sin_a = model.sin_alpha_max();
    traj.samples
        .iter()
        .map(|s| {
            let x = &s.state;
            let u = s.control.u;
            let p = s.costate.p;
            [
                s.t,
                if x.chart == ChartId::A { 0.0 } else { 1.0 },
                x.r - model.rt,
                x.lat * model.rt,
                x.lon * model.rt,
                x.v,
                x.ang1,
                x.ang2,
                u[0],
                u[1],
                u[2],
                s.control.c1(),
                s.control.c2(sin_a),
                p[0],
                p[1],
                p[2],
                p[3],
                p[4],
                p[5],
                s.hamiltonian,
            ]
        })
        .collect()
}

fn chart_label(code: f64) -> &'static str {
    if code == 0.0 {
        ChartId::A.label()
    } else {
        ChartId::B.label()
    }
}

pub fn write_trajectory_csv<W: Write>(out: &mut W, traj: &ExtremalTrajectory, model: &VehicleModel) -> std::io::Result<()> {
    writeln!(out, "{}", CSV_COLUMNS.join(","))?;
    for row in trajectory_rows(traj, model) {
        let mut fields = Vec::with_capacity(row.len());
        for (k, value) in row.iter().enumerate() {
            fields.push(if k == 1 { chart_label(*value).to_string() } else { format!("{value:.12e}") });
        }
        writeln!(out, "{}", fields.join(","))?;
    }
    Ok(())
}

pub fn trajectory_json(traj: &ExtremalTrajectory, model: &VehicleModel) -> serde_json::Value {
    let rows = trajectory_rows(traj, model)
        .into_iter()
        .map(|row| {
            let mut obj = serde_json::Map::new();
            for (k, (name, value)) in CSV_COLUMNS.iter().zip(row).enumerate() {
                let v = if k == 1 { serde_json::json!(chart_label(value)) } else { serde_json::json!(value) };
                obj.insert((*name).to_string(), v);
            }
            serde_json::Value::Object(obj)
        })
        .collect();
    serde_json::Value::Array(rows)
}

pub fn history_json(history: &[HistoryEntry]) -> serde_json::Value {
    serde_json::to_value(history).unwrap_or(serde_json::Value::Null)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum OutputFormat {
    Csv,
    Json,
}

/// Writes the trajectory and `history.json` into `dir`.
pub fn write_outputs(dir: &Path, outcome: &MissionOutcome, model: &VehicleModel, format: OutputFormat) -> std::io::Result<()> {
    std::fs::create_dir_all(dir)?;
    match format {
        OutputFormat::Csv => {
            let mut f = std::io::BufWriter::new(std::fs::File::create(dir.join("trajectory.csv"))?);
            write_trajectory_csv(&mut f, &outcome.trajectory, model)?;
            f.flush()?;
        }
        OutputFormat::Json => {
            let text = serde_json::to_string_pretty(&trajectory_json(&outcome.trajectory, model))?;
            std::fs::write(dir.join("trajectory.json"), text)?;
        }
    }
    std::fs::write(dir.join("history.json"), serde_json::to_string_pretty(&history_json(&outcome.history))?)
}

/// Process exit status for a failure.
pub fn exit_code(err: &GuidanceError) -> i32 {
    match err {
        GuidanceError::InvalidInput(_) => 2,
        GuidanceError::UnsupportedNonregularArc { .. } => 4,
        _ => 3,
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    const MINIMAL: &str = r#"
[order_zero_target]
altitude = 5000.0
downrange = 14000.0
crossrange = 0.0
gamma = -0.5235987755982988
chi = 0.0

[target]
altitude = 5000.0
downrange = 14000.0
crossrange = -2000.0
gamma = -0.5235987755982988
chi = 0.5235987755982988
"#;

    #[test]
    fn minimal_config_uses_defaults() {
        let cfg = MissionConfig::from_toml_str(MINIMAL).unwrap();
        assert_eq!(cfg.initial, InitialState::default());
        assert_eq!(cfg.vehicle, VehicleModel::default());
        assert_eq!(cfg.time_mode(), TimeMode::Free);
        let p = cfg.problem();
        assert_eq!(p.x0.r, p.model.rt + 1000.0);
        assert_eq!(p.terminal.c1, 0.0);
        assert_eq!(p.prop.steps, DEFAULT_STEPS);
    }

    #[test]
    fn weight_is_scaled_by_speed_unit() {
        let text = format!("c1 = 1.0\nspeed_unit = 1000.0\nfinal_time = 20.0\n{MINIMAL}");
        let cfg = MissionConfig::from_toml_str(&text).unwrap();
        let p = cfg.problem();
        assert_eq!(p.terminal.c1, 1e6);
        assert_eq!(p.terminal.time_mode, TimeMode::Fixed(20.0));
    }

    fn error_of(text: &str) -> String {
        match MissionConfig::from_toml_str(text) {
            Err(GuidanceError::InvalidInput(msg)) => msg,
            other => panic!("expected a parse error, got {other:?}"),
        }
    }

    #[test]
    fn errors_name_the_field() {
        let msg = error_of(&format!("[initial]\nv = -3.0\naltitude = 0.0\ndownrange = 0.0\ncrossrange = 0.0\ngamma = 0.0\nchi = 0.0\n{MINIMAL}"));
        assert!(msg.contains("initial.v"), "{msg}");

        let msg = error_of(&MINIMAL.replace("chi = 0.5235987755982988", "chi = \"east\""));
        assert!(msg.contains("chi"), "{msg}");

        let msg = error_of(&MINIMAL.replace("crossrange = -2000.0", "crossrange = -2000.0\nbearing = 1.0"));
        assert!(msg.contains("bearing"), "{msg}");

        let msg = error_of(&MINIMAL.replace("gamma = -0.5235987755982988\nchi = 0.5235987755982988", "gamma = 1.6\nchi = 0.0"));
        assert!(msg.contains("target.gamma"), "{msg}");

        let msg = error_of(&format!("[solver]\nsteps = 3\n{MINIMAL}"));
        assert!(msg.contains("solver.steps"), "{msg}");

        let msg = error_of(&format!("[vehicle]\nd0 = -1.0\n{MINIMAL}"));
        assert!(msg.contains("vehicle") && msg.contains("d0"), "{msg}");
    }

    #[test]
    fn batch_targets_are_reproducible_and_inside_the_box() {
        let a = sample_targets(50, 7);
        assert_eq!(a, sample_targets(50, 7));
        assert_ne!(a, sample_targets(50, 8));
        for t in &a {
            for (value, (lo, hi)) in t.as_array().iter().zip(BATCH_BOX) {
                assert!((lo..=hi).contains(value));
            }
        }
    }

    #[test]
    fn scenario_configuration_pins_the_comparison_setup() {
        let base = MissionConfig::from_toml_str(&format!("c1 = 1.0\n{MINIMAL}")).unwrap();
        let cfg = Scenario::Sc2.configure(&base);
        assert_eq!(cfg.c1, 0.0);
        assert_eq!(cfg.final_time, Some(23.0));
        assert_eq!(cfg.solver.steps, 80);
        assert_eq!(cfg.solver.scheme, Scheme::Rk2);
        assert_eq!(cfg.target.gamma, cfg.target.chi);
        assert_eq!(Scenario::parse("SC3"), Some(Scenario::Sc3));
        assert_eq!(Scenario::parse("sc4"), None);
    }

    #[test]
    fn exit_codes() {
        assert_eq!(exit_code(&GuidanceError::InvalidInput("x".into())), 2);
        assert_eq!(exit_code(&GuidanceError::SingularJacobian), 3);
        assert_eq!(exit_code(&GuidanceError::ContinuationStalled { lambda1: 1.0, lambda2: 0.0, delta: 1e-7 }), 3);
        assert_eq!(exit_code(&GuidanceError::UnsupportedNonregularArc { c: -1.0, d: 0.0 }), 4);
    }
}
