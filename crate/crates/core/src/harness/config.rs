use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::bits::BitString;
use crate::detector::DetectorSpec;
use crate::error::{Error, Result};
use crate::exfil::Channel;
use crate::observer::{ObserverParams, Viewpoint};
use crate::plant::{ArmGeometry, DroneParams};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ScenarioKind {
    ArmWaypoint,
    DroneHover,
    DroneCircle,
}

impl ScenarioKind {
    pub fn is_drone(self) -> bool {
        !matches!(self, ScenarioKind::ArmWaypoint)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AttackScheme {
    #[default]
    None,
    DeflectReturn,
    HoldDuration,
    Trajectory,
}

/// Noise levels. Vectors are per channel: `[x, y, z, yaw]` for drones,
/// `[joint1, joint2]` for the arm. Absent entries take scenario defaults.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct NoiseConfig {
    /// Per-step variance of the velocity increment (drone) or joint
    /// vibration (arm).
    #[serde(skip_serializing_if = "Option::is_none")]
    pub process_var: Option<Vec<f64>>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub measurement_var: Option<Vec<f64>>,
    /// Slow heading disturbance on the yaw setpoint (Ornstein-Uhlenbeck).
    pub yaw_drift_sigma_rad: f64,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub yaw_drift_tau_s: Option<f64>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ArmConfig {
    pub l1_m: f64,
    pub l2_m: f64,
    pub step_deg: f64,
    /// Fraction of the command error closed per control step.
    pub tracking_gain: f64,
    pub start_m: [f64; 2],
    pub end_m: [f64; 2],
    /// Hold at the start before the traverse, and at the end after it.
    pub lead_s: f64,
    /// Waypoint tolerance of the task.
    pub epsilon_m: f64,
    /// Defender only checks the endpoints.
    pub waypoint_only: bool,
}

impl Default for ArmConfig {
    fn default() -> Self {
        let g = ArmGeometry::default();
        Self {
            l1_m: g.l1,
            l2_m: g.l2,
            step_deg: g.step_quantum.to_degrees(),
            tracking_gain: 0.8,
            start_m: [0.20, -0.10],
            end_m: [0.20, 0.10],
            lead_s: 0.5,
            epsilon_m: 0.004,
            waypoint_only: true,
        }
    }
}

impl ArmConfig {
    pub fn geometry(&self) -> Result<ArmGeometry> {
        ArmGeometry::new(self.l1_m, self.l2_m, self.step_deg.to_radians())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct AttackerConfig {
    pub scheme: AttackScheme,
    pub channel: Channel,
    /// Angular deflection for drone schemes.
    pub amplitude_deg: f64,
    /// Perpendicular deflection for the arm trajectory scheme.
    pub deviation_m: f64,
    pub rate_hz: f64,
    pub hold_s: f64,
    /// Explicit message; takes precedence over the other sources.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub bits: Option<BitString>,
    /// Fresh uniformly random message of this length per trial.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub random_bits: Option<usize>,
    /// Payload bytes (hex) sent inside a preamble/CRC frame.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub payload_hex: Option<String>,
    pub crc: bool,
    /// When the first symbol is commanded (drone schemes).
    pub start_s: f64,
}

impl Default for AttackerConfig {
    fn default() -> Self {
        Self {
            scheme: AttackScheme::None,
            channel: Channel::Yaw,
            amplitude_deg: 5.0,
            deviation_m: 0.01,
            rate_hz: 1.0,
            hold_s: 0.75,
            bits: None,
            random_bits: None,
            payload_hex: None,
            crc: true,
            start_s: 1.0,
        }
    }
}

impl AttackerConfig {
    pub fn payload(&self) -> Result<Option<Vec<u8>>> {
        self.payload_hex
            .as_deref()
            .map(|h| hex::decode(h.trim()).map_err(|e| Error::config("attacker.payload_hex", e.to_string())))
            .transpose()
    }

    pub fn amplitude_rad(&self) -> f64 {
        self.amplitude_deg.to_radians()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ObserverConfig {
    pub fps: f64,
    pub quantization: f64,
    pub noise_sigma: f64,
    pub dropout_prob: f64,
    pub latency_s: f64,
    pub viewpoint: Viewpoint,
    /// Actuation delay assumed by the matched decoder; one control step
    /// when absent.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub decode_delay_s: Option<f64>,
}

impl Default for ObserverConfig {
    fn default() -> Self {
        let p = ObserverParams::default();
        Self {
            fps: p.fps,
            quantization: p.quantization,
            noise_sigma: p.noise_sigma,
            dropout_prob: p.dropout_prob,
            latency_s: p.latency,
            viewpoint: Viewpoint::default(),
            decode_delay_s: None,
        }
    }
}

impl ObserverConfig {
    pub fn params(&self) -> ObserverParams {
        ObserverParams {
            fps: self.fps,
            quantization: self.quantization,
            noise_sigma: self.noise_sigma,
            dropout_prob: self.dropout_prob,
            latency: self.latency_s,
        }
    }
}

/// A complete experiment description.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScenarioConfig {
    pub scenario: ScenarioKind,
    pub seed: u64,
    #[serde(default = "default_trials")]
    pub n_trials: usize,
    #[serde(default = "default_dt")]
    pub dt_s: f64,
    /// Simulated span; scenario default when absent.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub duration_s: Option<f64>,
    #[serde(default)]
    pub drone: DroneParams,
    #[serde(default)]
    pub arm: ArmConfig,
    #[serde(default)]
    pub noise: NoiseConfig,
    #[serde(default)]
    pub attacker: AttackerConfig,
    #[serde(default)]
    pub observer: ObserverConfig,
    #[serde(default)]
    pub detectors: Vec<DetectorSpec>,
}

fn default_trials() -> usize {
    1
}

fn default_dt() -> f64 {
    0.02
}

const DRONE_PROCESS_VAR: [f64; 4] = [6.0e-4, 5.0e-4, 5.0e-5, 3.6e-3];
const DRONE_MEASUREMENT_VAR: [f64; 4] = [1.0e-6, 1.0e-6, 1.0e-6, 1.0e-6];
const ARM_PROCESS_VAR: [f64; 2] = [9.0e-8, 9.0e-8];
const ARM_MEASUREMENT_VAR: [f64; 2] = [1.0e-6, 1.0e-6];
const HOVER_SECONDS: f64 = 60.0;
const CIRCLE_LAPS: f64 = 10.0;
const DRIFT_TAU_S: f64 = 10.0;

fn parse_err(e: serde_path_to_error::Error<toml::de::Error>) -> Error {
    let path = e.path().to_string();
    let inner = e.into_inner();
    let message = inner.message().to_string();
    Error::config(if path == "." { "<root>".to_string() } else { path }, message)
}

impl ScenarioConfig {
    pub fn from_toml(text: &str) -> Result<Self> {
        let de = toml::Deserializer::parse(text).map_err(|e| Error::config("<root>", e.message().to_string()))?;
        let cfg: Self = serde_path_to_error::deserialize(de).map_err(parse_err)?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn from_path(path: &std::path::Path) -> Result<Self> {
        Self::from_toml(&std::fs::read_to_string(path)?)
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("config serializes")
    }

    /// SHA-256 of the canonical TOML rendering.
    pub fn hash(&self) -> String {
        hex::encode(Sha256::digest(self.to_toml().as_bytes()))
    }

    pub fn process_var(&self) -> Vec<f64> {
        self.noise.process_var.clone().unwrap_or_else(|| {
            if self.scenario.is_drone() {
                DRONE_PROCESS_VAR.to_vec()
            } else {
                ARM_PROCESS_VAR.to_vec()
            }
        })
    }

    pub fn measurement_var(&self) -> Vec<f64> {
        self.noise.measurement_var.clone().unwrap_or_else(|| {
            if self.scenario.is_drone() {
                DRONE_MEASUREMENT_VAR.to_vec()
            } else {
                ARM_MEASUREMENT_VAR.to_vec()
            }
        })
    }

    pub fn drift_tau(&self) -> f64 {
        self.noise.yaw_drift_tau_s.unwrap_or(DRIFT_TAU_S)
    }

    pub fn is_attacked(&self) -> bool {
        self.attacker.scheme != AttackScheme::None
    }

    /// Copy with the attacker switched off.
    pub fn baseline(&self) -> Self {
        let mut c = self.clone();
        c.attacker.scheme = AttackScheme::None;
        c
    }

    /// Shift applied to the attacker's bit windows. Defaults to the
    /// low-frequency lag of the attacked loop: kd/kp for the drone's PD
    /// axes, one control step for the arm.
    pub fn decode_delay(&self) -> f64 {
        self.observer.decode_delay_s.unwrap_or_else(|| {
            if !self.scenario.is_drone() {
                return self.dt_s;
            }
            let d = &self.drone;
            match self.attacker.channel.pose_index() {
                Some(3) => d.kd_yaw / d.kp_yaw,
                _ => d.kd / d.kp,
            }
        })
    }

    /// Simulated span, stretched when needed so the whole message fits.
    pub fn duration(&self, message_end_s: f64) -> f64 {
        let default = match self.scenario {
            ScenarioKind::DroneHover => HOVER_SECONDS,
            ScenarioKind::DroneCircle => CIRCLE_LAPS * self.drone.circle_period,
            ScenarioKind::ArmWaypoint => 0.0,
        };
        self.duration_s.unwrap_or_else(|| default.max(message_end_s))
    }

    pub fn validate(&self) -> Result<()> {
        let need = |ok: bool, path: &str, msg: &str| if ok { Ok(()) } else { Err(Error::config(path, msg)) };
        need(self.n_trials >= 1, "n_trials", "must be >= 1")?;
        need(self.dt_s > 0.0 && self.dt_s.is_finite(), "dt_s", "must be > 0")?;
        if let Some(d) = self.duration_s {
            need(d > 0.0 && d.is_finite(), "duration_s", "must be > 0")?;
        }
        let (np, nm) = if self.scenario.is_drone() { (4, 4) } else { (2, 2) };
        let pv = self.process_var();
        need(pv.len() == np, "noise.process_var", &format!("needs {np} entries"))?;
        need(
            pv.iter().all(|v| *v >= 0.0 && v.is_finite()),
            "noise.process_var",
            "entries must be >= 0",
        )?;
        let mv = self.measurement_var();
        need(mv.len() == nm, "noise.measurement_var", &format!("needs {nm} entries"))?;
        need(
            mv.iter().all(|v| *v > 0.0 && v.is_finite()),
            "noise.measurement_var",
            "entries must be > 0",
        )?;
        need(
            self.noise.yaw_drift_sigma_rad >= 0.0,
            "noise.yaw_drift_sigma_rad",
            "must be >= 0",
        )?;
        need(self.drift_tau() > 0.0, "noise.yaw_drift_tau_s", "must be > 0")?;
        self.observer.params().validate()?;
        need(self.decode_delay() >= 0.0, "observer.decode_delay_s", "must be >= 0")?;
        for (i, d) in self.detectors.iter().enumerate() {
            d.validate(&format!("detectors[{i}]"))?;
        }

        let a = &self.attacker;
        if let Some(n) = a.random_bits {
            need(n >= 1, "attacker.random_bits", "must be >= 1")?;
        }
        let payload = a.payload()?;
        if let Some(p) = &payload {
            need(
                (1..=crate::protocol::MAX_PAYLOAD_BYTES).contains(&p.len()),
                "attacker.payload_hex",
                "must hold 1..=8 bytes",
            )?;
        }
        if self.is_attacked() {
            need(
                a.bits.is_some() || a.random_bits.is_some() || payload.is_some(),
                "attacker",
                "one of `bits`, `random_bits` or `payload_hex` is required",
            )?;
            need(a.start_s >= 0.0, "attacker.start_s", "must be >= 0")?;
            match a.scheme {
                AttackScheme::DeflectReturn | AttackScheme::HoldDuration => {
                    need(
                        self.scenario.is_drone(),
                        "attacker.scheme",
                        "drone schemes need a drone scenario",
                    )?;
                    need(
                        a.channel.pose_index().is_some(),
                        "attacker.channel",
                        "must be x, y, z or yaw",
                    )?;
                    need(a.amplitude_deg > 0.0, "attacker.amplitude_deg", "must be > 0")?;
                }
                AttackScheme::Trajectory => {
                    need(
                        !self.scenario.is_drone(),
                        "attacker.scheme",
                        "trajectory encoding needs the arm scenario",
                    )?;
                    need(a.deviation_m > 0.0, "attacker.deviation_m", "must be > 0")?;
                }
                AttackScheme::None => {}
            }
            match a.scheme {
                AttackScheme::HoldDuration => need(a.hold_s > 0.0, "attacker.hold_s", "must be > 0")?,
                _ => need(a.rate_hz > 0.0, "attacker.rate_hz", "must be > 0")?,
            }
        }
        if !self.scenario.is_drone() {
            self.arm.geometry()?;
            need(
                self.arm.tracking_gain > 0.0 && self.arm.tracking_gain <= 1.0,
                "arm.tracking_gain",
                "must be in (0, 1]",
            )?;
            need(self.arm.lead_s >= 0.0, "arm.lead_s", "must be >= 0")?;
            need(self.arm.epsilon_m > 0.0, "arm.epsilon_m", "must be > 0")?;
        }
        Ok(())
    }

    /// Sets the value at a dotted path (`attacker.rate_hz`,
    /// `detectors.0.alpha`) and revalidates.
    pub fn with_field(&self, path: &str, value: toml::Value) -> Result<Self> {
        let mut root = toml::Value::try_from(self).map_err(|e| Error::config(path, e.to_string()))?;
        let mut node = &mut root;
        let parts: Vec<&str> = path.split('.').collect();
        for (i, part) in parts.iter().enumerate() {
            let last = i + 1 == parts.len();
            node = match node {
                toml::Value::Table(t) => {
                    if last {
                        t.insert((*part).to_string(), value);
                        break;
                    }
                    t.entry((*part).to_string())
                        .or_insert_with(|| toml::Value::Table(Default::default()))
                }
                toml::Value::Array(a) => {
                    let idx: usize = part.parse().map_err(|_| Error::InvalidAxis(path.to_string()))?;
                    let slot = a.get_mut(idx).ok_or_else(|| Error::InvalidAxis(path.to_string()))?;
                    if last {
                        *slot = value;
                        break;
                    }
                    slot
                }
                _ => return Err(Error::InvalidAxis(path.to_string())),
            };
        }
        let text = toml::to_string(&root).map_err(|e| Error::config(path, e.to_string()))?;
        Self::from_toml(&text).map_err(|e| match e {
            Error::Config { path: p, message } if message.contains("unknown field") => {
                Error::InvalidAxis(format!("{path} ({p}: {message})"))
            }
            other => other,
        })
    }
}
