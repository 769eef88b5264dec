use serde::{Deserialize, Serialize};

use crate::bits::BitString;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Scheme {
    DeflectReturn,
    HoldDuration,
    Trajectory,
}

/// Physical channel a perturbation acts on.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Channel {
    X,
    Y,
    Z,
    Yaw,
    /// Arm effector offset normal to the commanded straight line.
    Perpendicular,
}

impl Channel {
    /// Pose index for drone channels.
    pub fn pose_index(self) -> Option<usize> {
        match self {
            Channel::X => Some(0),
            Channel::Y => Some(1),
            Channel::Z => Some(2),
            Channel::Yaw => Some(3),
            Channel::Perpendicular => None,
        }
    }
}

/// Tolerance for comparing sample times against entry boundaries (s).
pub const TIME_EPS: f64 = 1e-9;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ScheduleEntry {
    pub t_start: f64,
    pub t_end: f64,
    pub channel: Channel,
    pub offset: f64,
}

/// Time-ordered setpoint offsets. Outside every entry the offset is zero.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PerturbationSchedule {
    pub entries: Vec<ScheduleEntry>,
    pub bits: BitString,
    pub scheme: Scheme,
    /// Nominal duration of one symbol slot (bit period, or hold interval).
    pub symbol_period: f64,
    pub amplitude: f64,
}

impl PerturbationSchedule {
    pub fn empty(scheme: Scheme, symbol_period: f64, amplitude: f64) -> Self {
        Self {
            entries: Vec::new(),
            bits: BitString::default(),
            scheme,
            symbol_period,
            amplitude,
        }
    }

    /// Offset commanded on `channel` at time `t`; entries are half-open.
    /// Times within [`TIME_EPS`] of a boundary count as on it, so control
    /// ticks computed as `k * dt` land on the intended side.
    pub fn offset_at(&self, t: f64, channel: Channel) -> f64 {
        let t = t + TIME_EPS;
        let i = self.entries.partition_point(|e| e.t_end <= t);
        self.entries[i..]
            .iter()
            .take_while(|e| e.t_start <= t)
            .find(|e| e.channel == channel && t < e.t_end)
            .map_or(0.0, |e| e.offset)
    }

    pub fn start(&self) -> f64 {
        self.entries.first().map_or(0.0, |e| e.t_start)
    }

    pub fn end(&self) -> f64 {
        self.entries.last().map_or(0.0, |e| e.t_end)
    }

    /// True while any nonzero offset is commanded.
    pub fn is_active(&self, t: f64) -> bool {
        let t = t + TIME_EPS;
        self.entries
            .iter()
            .any(|e| e.offset != 0.0 && e.t_start <= t && t < e.t_end)
    }

    /// True inside the span covered by encoded symbols.
    pub fn in_span(&self, t: f64) -> bool {
        let t = t + TIME_EPS;
        !self.entries.is_empty() && t >= self.start() && t < self.end()
    }

    pub fn shifted(&self, by: f64) -> Self {
        let mut s = self.clone();
        for e in &mut s.entries {
            e.t_start += by;
            e.t_end += by;
        }
        s
    }

    pub fn channels(&self) -> Vec<Channel> {
        let mut c: Vec<Channel> = self.entries.iter().map(|e| e.channel).collect();
        c.sort_by_key(|c| *c as u8);
        c.dedup();
        c
    }
}
