use rand::Rng;
use rand_distr::StandardNormal;

use super::config::{AttackScheme, ScenarioConfig, ScenarioKind};
use super::trace::Trace;
use crate::angle::wrap;
use crate::bits::BitString;
use crate::detector::DetectorSpec;
use crate::error::{Error, Result};
use crate::estimator::{kf_predict, kf_update, GaussianBelief, Innovation};
use crate::exfil::{
    encode_scheme1, encode_scheme2, encode_trajectory, PerturbationSchedule, StealthBudget, TrajectoryPlan,
};
use crate::linalg::{psd_sqrt, Mat, Vector};
use crate::plant::{
    arm_forward_kinematics, arm_model, measure, ArmPlant, Drone, LinearSystemModel, PlantState, Setpoint,
};
use crate::rng::{stream_rng, Stream};

/// Joint and effector XY of the two-link arm.
type GatePoints = [[f64; 2]; 2];

const DRONE_AXES: [&str; 4] = ["x", "y", "z", "yaw"];

/// Everything the evaluation stage needs from one simulated run.
pub(crate) struct Simulated {
    pub trace: Trace,
    pub innovations: Vec<Innovation>,
    /// Normalized estimation error squared at the last step.
    pub nees_final: f64,
    pub schedule: Option<PerturbationSchedule>,
    /// Name of the trace column the attacker watches.
    pub observed: &'static str,
    /// Time the first symbol starts.
    pub message_start: f64,
    /// Defender's view of the attacked channel relative to its reference.
    pub defender_signal: Vec<f64>,
    /// Endpoint gate inputs for the arm: `(estimate, actual)` pairs.
    pub waypoints: Vec<(GatePoints, GatePoints)>,
    /// Channels compared by the variance detector.
    pub error_channels: Vec<(&'static str, Vec<f64>)>,
}

fn gaussian_vec<R: Rng>(n: usize, rng: &mut R) -> Vector {
    Vector::from_iterator(n, (0..n).map(|_| rng.sample::<f64, _>(StandardNormal)))
}

/// Prior belief and a true initial state drawn from it.
fn initial(
    model: &LinearSystemModel,
    mean: Vector,
    t: f64,
    rng: &mut impl Rng,
) -> Result<(GaussianBelief, PlantState)> {
    let belief = GaussianBelief::initial(model, &mean, t);
    let root = psd_sqrt(&belief.cov).ok_or(Error::EstimatorDegenerate)?;
    let x0 = &mean + root * gaussian_vec(mean.len(), rng);
    Ok((belief, PlantState::new(x0, t)))
}

fn nees(x: &Vector, belief: &GaussianBelief, angles: &[usize]) -> f64 {
    let mut e = x - &belief.mean;
    for &i in angles {
        e[i] = wrap(e[i]);
    }
    match belief.cov.clone().cholesky() {
        Some(c) => e.dot(&c.solve(&e)),
        None => f64::NAN,
    }
}

pub(crate) fn message_schedule(cfg: &ScenarioConfig, bits: &BitString) -> Result<Option<PerturbationSchedule>> {
    let a = &cfg.attacker;
    let s = match a.scheme {
        AttackScheme::None | AttackScheme::Trajectory => return Ok(None),
        AttackScheme::DeflectReturn => encode_scheme1(bits, a.amplitude_rad(), a.rate_hz, a.channel, cfg.dt_s)?,
        AttackScheme::HoldDuration => encode_scheme2(bits, a.amplitude_rad(), a.hold_s, a.channel, cfg.dt_s)?,
    };
    Ok(Some(s.shifted(a.start_s)))
}

fn steps(duration: f64, dt: f64) -> usize {
    (duration / dt).round().max(1.0) as usize
}

fn symbol_index(schedule: Option<&PerturbationSchedule>, t: f64) -> f64 {
    match schedule {
        Some(s) if s.in_span(t) => ((t - s.start()) / s.symbol_period).floor(),
        _ => -1.0,
    }
}

pub(crate) fn simulate_drone(cfg: &ScenarioConfig, trial_seed: u64, bits: &BitString) -> Result<Simulated> {
    let pv = cfg.process_var();
    let mv = cfg.measurement_var();
    let drone = Drone::new(
        cfg.drone,
        [pv[0], pv[1], pv[2], pv[3]],
        [mv[0], mv[1], mv[2], mv[3]],
        cfg.dt_s,
    )?;
    let schedule = if cfg.is_attacked() {
        message_schedule(cfg, bits)?
    } else {
        None
    };
    let message_end = schedule.as_ref().map_or(0.0, |s| s.end() + 1.0);
    let duration = cfg.duration(message_end);
    if schedule.as_ref().is_some_and(|s| s.end() > duration) {
        return Err(Error::config("duration_s", "shorter than the attack schedule"));
    }
    let legit = |t: f64| match cfg.scenario {
        ScenarioKind::DroneCircle => cfg.drone.circle_setpoint(t),
        _ => cfg.drone.hover_setpoint(),
    };
    let mut process = stream_rng(trial_seed, Stream::Process);
    let mut sensor = stream_rng(trial_seed, Stream::Measurement);
    let mut drift_rng = stream_rng(trial_seed, Stream::Drift);

    let open = drone.open_loop();
    let filter = drone.closed_loop();
    let (mut belief, mut state) = initial(filter, drone.state_at(&legit(0.0), 0.0).x, 0.0, &mut process)?;

    let sigma = cfg.noise.yaw_drift_sigma_rad;
    let decay = (-cfg.dt_s / cfg.drift_tau()).exp();
    let mut drift = sigma * drift_rng.sample::<f64, _>(StandardNormal);

    let mut columns: Vec<String> = Vec::new();
    for prefix in ["", "est_", "ref_", "cmd_", "meas_", "res_"] {
        columns.extend(DRONE_AXES.iter().map(|a| format!("{prefix}{a}")));
        if prefix.is_empty() {
            columns.extend(["vx", "vy", "vz", "yaw_rate"].map(String::from));
        }
    }
    columns.extend(["nis", "attack_active", "symbol"].map(String::from));
    let mut trace = Trace::new(columns);
    let mut innovations = Vec::new();
    let mut prev_ff: Option<Vector> = None;
    let n = steps(duration, cfg.dt_s);
    let mut row = Vec::with_capacity(trace.columns().len());
    for k in 0..n {
        let t = k as f64 * cfg.dt_s;
        let sp = legit(t);
        let mut actual: Setpoint = sp;
        actual.pose[3] += drift;
        if let Some(s) = &schedule {
            let ch = cfg.attacker.channel;
            actual.pose[ch.pose_index().expect("validated drone channel")] += s.offset_at(t, ch);
        }
        let z = measure(open, &state, &mut sensor)?;
        if let Some(u) = &prev_ff {
            belief = kf_predict(&belief, filter, u)?;
        }
        let (post, inn) = kf_update(&belief, filter, &z)?;
        belief = post;

        row.clear();
        row.extend(state.x.iter());
        row.extend(belief.mean.iter().take(4));
        row.extend(sp.pose);
        row.extend(actual.pose);
        row.extend(z.iter());
        row.extend(inn.r.iter());
        row.push(inn.nis()?);
        row.push(schedule.as_ref().map_or(0.0, |s| s.is_active(t) as u8 as f64));
        row.push(symbol_index(schedule.as_ref(), t));
        trace.push(t, &row)?;
        innovations.push(Innovation { t, ..inn });

        if k + 1 < n {
            state = drone.step(&state, &actual, &mut process)?;
            prev_ff = Some(drone.feedforward(&sp));
            drift = decay * drift + sigma * (1.0 - decay * decay).sqrt() * drift_rng.sample::<f64, _>(StandardNormal);
        }
    }
    let nees_final = nees(&state.x, &belief, filter.angle_states());

    let yaw = trace.column("meas_yaw")?;
    let ref_yaw = trace.column("ref_yaw")?;
    let ch = cfg.attacker.channel.pose_index().unwrap_or(3);
    let defender_signal: Vec<f64> = if ch == 3 {
        yaw.iter().zip(ref_yaw).map(|(a, b)| wrap(a - b)).collect()
    } else {
        let m = trace.column(&format!("meas_{}", DRONE_AXES[ch]))?;
        let r = trace.column(&format!("ref_{}", DRONE_AXES[ch]))?;
        m.iter().zip(r).map(|(a, b)| a - b).collect()
    };
    let mut error_channels = Vec::new();
    for (i, name) in ["x", "y", "z"].into_iter().enumerate() {
        let p = trace.column(DRONE_AXES[i])?;
        let r = trace.column(&format!("ref_{}", DRONE_AXES[i]))?;
        error_channels.push((name, p.iter().zip(r).map(|(a, b)| a - b).collect()));
    }
    let message_start = schedule.as_ref().map_or(cfg.attacker.start_s, |s| s.start());
    Ok(Simulated {
        trace,
        innovations,
        nees_final,
        schedule,
        observed: "yaw",
        message_start,
        defender_signal,
        waypoints: Vec::new(),
        error_channels,
    })
}

pub(crate) fn arm_plan(cfg: &ScenarioConfig, bits: &BitString) -> Result<TrajectoryPlan> {
    let arm = &cfg.arm;
    let geometry = arm.geometry()?;
    let budget = StealthBudget::new(
        DetectorSpec::Euclidean {
            epsilon_m: arm.epsilon_m,
        },
        0.05,
        arm.epsilon_m,
    )?;
    let mut plan = encode_trajectory(
        bits,
        arm.start_m,
        arm.end_m,
        cfg.attacker.deviation_m,
        cfg.attacker.rate_hz,
        arm.lead_s,
        &budget,
        &geometry,
        arm.waypoint_only,
        cfg.dt_s,
    )?;
    if !cfg.is_attacked() {
        plan.schedule.entries.clear();
    }
    Ok(plan)
}

pub(crate) fn simulate_arm(cfg: &ScenarioConfig, trial_seed: u64, bits: &BitString) -> Result<Simulated> {
    let geometry = cfg.arm.geometry()?;
    let pv = cfg.process_var();
    let mv = cfg.measurement_var();
    let mut model = arm_model(cfg.arm.tracking_gain, pv[0], mv[0], cfg.dt_s)?;
    if pv[0] != pv[1] || mv[0] != mv[1] {
        model = model.with_noise(
            Mat::from_diagonal(&Vector::from_row_slice(&pv)),
            Mat::from_diagonal(&Vector::from_row_slice(&mv)),
        )?;
    }
    let plant = ArmPlant::new(geometry, model)?;
    let plan = arm_plan(cfg, bits)?;
    let mut legit_plan = plan.clone();
    legit_plan.schedule.entries.clear();
    let duration = cfg.duration(plan.end_time() + cfg.arm.lead_s);

    let mut process = stream_rng(trial_seed, Stream::Process);
    let mut sensor = stream_rng(trial_seed, Stream::Measurement);
    let home = plant.command_for(plan.start)?;
    let (mut belief, mut state) = initial(&plant.model, home, 0.0, &mut process)?;

    let columns = [
        "theta1",
        "theta2",
        "est_theta1",
        "est_theta2",
        "cmd_theta1",
        "cmd_theta2",
        "ex",
        "ey",
        "ref_ex",
        "ref_ey",
        "deviation",
        "meas_theta1",
        "meas_theta2",
        "res_theta1",
        "res_theta2",
        "nis",
        "attack_active",
        "symbol",
    ];
    let mut trace = Trace::new(columns);
    let mut innovations = Vec::new();
    let mut defender_signal = Vec::new();
    let mut prev_cmd: Option<Vector> = None;
    let schedule = cfg.is_attacked().then(|| plan.schedule.clone());
    let n = steps(duration, cfg.dt_s);
    let mut row = Vec::with_capacity(columns.len());
    for k in 0..n {
        let t = k as f64 * cfg.dt_s;
        let cmd = plant.command_for(plan.setpoint(t))?;
        let reference = legit_plan.setpoint(t);
        let z = measure(&plant.model, &state, &mut sensor)?;
        if let Some(u) = &prev_cmd {
            belief = kf_predict(&belief, &plant.model, u)?;
        }
        let (post, inn) = kf_update(&belief, &plant.model, &z)?;
        belief = post;
        let (_, eff) = plant.effector(&state);
        let (_, seen) = arm_forward_kinematics(&geometry, z[0], z[1]);
        defender_signal.push(plan.deviation_of(seen));

        row.clear();
        row.extend(state.x.iter());
        row.extend(belief.mean.iter());
        row.extend(cmd.iter());
        row.extend(eff);
        row.extend(reference);
        row.push(plan.deviation_of(eff));
        row.extend(z.iter());
        row.extend(inn.r.iter());
        row.push(inn.nis()?);
        row.push(schedule.as_ref().map_or(0.0, |s| s.is_active(t) as u8 as f64));
        row.push(symbol_index(schedule.as_ref(), t));
        trace.push(t, &row)?;
        innovations.push(Innovation { t, ..inn });

        if k + 1 < n {
            state = plant.step(&state, &cmd, &mut process)?;
            prev_cmd = Some(cmd);
        }
    }
    let nees_final = nees(&state.x, &belief, &[]);

    // endpoint checks: just before the traverse starts, and at the end
    let check_at = |target: [f64; 2], idx: usize| -> Result<(GatePoints, GatePoints)> {
        let e1 = trace.column("est_theta1")?[idx];
        let e2 = trace.column("est_theta2")?[idx];
        let (ej, ee) = arm_forward_kinematics(&geometry, e1, e2);
        let c = plant.command_for(target)?;
        let (aj, ae) = arm_forward_kinematics(&geometry, c[0], c[1]);
        Ok(([ej, ee], [aj, ae]))
    };
    let start_idx = ((plan.lead_s / cfg.dt_s).floor() as usize).min(n - 1);
    let waypoints = vec![check_at(plan.start, start_idx)?, check_at(plan.end, n - 1)?];
    let error_channels = vec![("deviation", trace.column("deviation")?.to_vec())];
    Ok(Simulated {
        trace,
        innovations,
        nees_final,
        schedule,
        observed: "deviation",
        message_start: plan.lead_s,
        defender_signal,
        waypoints,
        error_channels,
    })
}
