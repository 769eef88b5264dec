use serde::{Deserialize, Serialize};

use super::ObservationSequence;
use crate::angle::wrap;
use crate::error::{Error, Result};
use crate::exfil::PerturbationSchedule;

/// Reported in place of an infinite ratio when the noise floor is zero.
pub const SNR_CAP_DB: f64 = 99.0;

/// Canned camera placements around a drone facing +x.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Viewpoint {
    Front,
    Side,
    Oblique,
    #[default]
    Top,
}

impl Viewpoint {
    pub const ALL: [Viewpoint; 4] = [Viewpoint::Front, Viewpoint::Side, Viewpoint::Oblique, Viewpoint::Top];

    /// `(azimuth, elevation)` of the camera, radians.
    pub fn placement(self) -> (f64, f64) {
        let d = f64::to_radians;
        match self {
            Viewpoint::Front => (0.0, d(30.0)),
            Viewpoint::Side => (d(90.0), d(30.0)),
            Viewpoint::Oblique => (d(45.0), d(45.0)),
            Viewpoint::Top => (0.0, d(90.0)),
        }
    }

    /// Image-plane angle of a body-fixed marker bar at heading `yaw`.
    fn image_angle(self, yaw: f64) -> f64 {
        let (az, el) = self.placement();
        let d = yaw - az;
        (-el.sin() * d.cos()).atan2(d.sin())
    }
}

/// Apparent marker-bar rotation seen from `view`, relative to heading 0.
/// Overhead views reproduce yaw exactly; lower cameras stretch or compress
/// it depending on where the bar points.
pub fn viewpoint_project(yaw: &[f64], view: Viewpoint) -> Vec<f64> {
    let zero = view.image_angle(0.0);
    yaw.iter().map(|&y| wrap(view.image_angle(y) - zero)).collect()
}

/// Small-angle gain of [`viewpoint_project`] around heading 0.
pub fn viewpoint_gain(view: Viewpoint) -> f64 {
    let (az, el) = view.placement();
    let s = el.sin();
    let d = -az;
    s / (d.sin().powi(2) + s * s * d.cos().powi(2))
}

/// Signal-to-noise ratio of an observation in dB. Frames inside the
/// schedule's encoding span are signal; the rest define the noise floor.
/// Both are taken relative to the mean outside the span. Frames within one
/// frame period of either span edge are ambiguous and left out.
pub fn snr(obs: &ObservationSequence, schedule: &PerturbationSchedule) -> Result<f64> {
    let n = obs.frames.len();
    let guard = if n >= 2 {
        (obs.frames[n - 1].t - obs.frames[0].t) / (n - 1) as f64
    } else {
        0.0
    };
    let near_edge = |t: f64| (t - schedule.start()).abs() < guard || (t - schedule.end()).abs() < guard;
    let (inside, outside): (Vec<_>, Vec<_>) = obs
        .valid()
        .filter(|(t, _)| !near_edge(*t))
        .partition(|(t, _)| schedule.in_span(*t));
    if outside.len() < 2 {
        return Err(Error::UndefinedNoiseFloor);
    }
    if inside.is_empty() {
        return Err(Error::EmptyTrace);
    }
    let base = outside.iter().map(|p| p.1).sum::<f64>() / outside.len() as f64;
    let power = |s: &[(f64, f64)]| s.iter().map(|p| (p.1 - base).powi(2)).sum::<f64>() / s.len() as f64;
    let noise = power(&outside);
    let signal = power(&inside);
    if noise == 0.0 {
        return Ok(SNR_CAP_DB);
    }
    if signal == 0.0 {
        return Ok(-SNR_CAP_DB);
    }
    Ok((10.0 * (signal / noise).log10()).clamp(-SNR_CAP_DB, SNR_CAP_DB))
}
