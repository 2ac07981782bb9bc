//! Periodic 24-parameter gait controller.
//!
//! Every leg carries two amplitude/phase pairs. The first pair drives the
//! horizontal (coxa) joint, the second pair drives both elevation joints so
//! the tibia stays vertical. Each parameter lives on a five-level grid
//! `{0, 0.25, 0.5, 0.75, 1}`, stored internally as a level index.

use std::fmt;
use std::str::FromStr;

use rand::Rng;
use serde::de::Error as _;
use serde::{Deserialize, Deserializer, Serialize, Serializer};

use crate::error::{Error, Result};
use crate::scalar::Scalar;

pub const LEGS: usize = 6;
pub const PARAMS_PER_LEG: usize = 4;
pub const PARAM_COUNT: usize = LEGS * PARAMS_PER_LEG;
pub const JOINT_COUNT: usize = LEGS * 3;

/// Highest grid level; level `k` encodes the value `k / MAX_LEVEL`.
pub const MAX_LEVEL: u8 = 4;

/// Slot of a parameter inside a leg block, in serialization order.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Param {
    /// Amplitude of the horizontal joint.
    Swing = 0,
    /// Phase of the horizontal joint.
    SwingPhase = 1,
    /// Amplitude of the two elevation joints.
    Lift = 2,
    /// Phase of the two elevation joints.
    LiftPhase = 3,
}

/// `α·tanh(4·sin(2π(t + φ)))`, with `t` and `φ` as fractions of a period.
#[inline]
pub fn control_signal<S: Scalar>(t: S, alpha: S, phi: S) -> S {
    alpha * (S::lit(4.0) * (S::TAU() * (t + phi)).sin()).tanh()
}

/// Timing and joint scaling shared by every leg.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(bound = "S: Scalar", deny_unknown_fields, default)]
pub struct GaitConfig<S> {
    /// Gait frequency in Hz.
    pub frequency: S,
    /// Angle in radians reached by the horizontal joint at full amplitude.
    pub swing_range: S,
    /// Angle in radians reached by the elevation joints at full amplitude.
    pub lift_range: S,
}

impl<S: Scalar> Default for GaitConfig<S> {
    fn default() -> Self {
        Self {
            frequency: S::one(),
            swing_range: S::FRAC_PI_4(),
            lift_range: S::FRAC_PI_4(),
        }
    }
}

/// Commanded joint angles, ordered leg-major as (swing, femur, tibia).
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct JointTargets<S> {
    pub angles: [S; JOINT_COUNT],
}

impl<S: Scalar> JointTargets<S> {
    pub fn zero() -> Self {
        Self {
            angles: [S::zero(); JOINT_COUNT],
        }
    }

    #[inline]
    pub fn leg(&self, leg: usize) -> [S; 3] {
        [
            self.angles[3 * leg],
            self.angles[3 * leg + 1],
            self.angles[3 * leg + 2],
        ]
    }

    #[inline]
    pub fn set_leg(&mut self, leg: usize, angles: [S; 3]) {
        self.angles[3 * leg..3 * leg + 3].copy_from_slice(&angles);
    }
}

/// A gait: 24 grid-valued parameters in leg-major order.
#[derive(Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct Controller {
    levels: [u8; PARAM_COUNT],
}

impl Controller {
    /// Builds a controller from grid levels in `0..=4`.
    pub fn from_levels(levels: [u8; PARAM_COUNT]) -> Result<Self> {
        if let Some(bad) = levels.iter().find(|&&l| l > MAX_LEVEL) {
            return Err(Error::InvalidController(format!(
                "grid level {bad} exceeds {MAX_LEVEL}"
            )));
        }
        Ok(Self { levels })
    }

    /// Builds a controller from parameter values, each of which must sit on
    /// the five-value grid.
    pub fn from_values(values: &[f64]) -> Result<Self> {
        if values.len() != PARAM_COUNT {
            return Err(Error::DimensionMismatch {
                expected: PARAM_COUNT,
                actual: values.len(),
            });
        }
        let mut levels = [0u8; PARAM_COUNT];
        for (slot, &v) in levels.iter_mut().zip(values) {
            let scaled = v * f64::from(MAX_LEVEL);
            let level = scaled.round();
            if !(0.0..=f64::from(MAX_LEVEL)).contains(&level) || (scaled - level).abs() > 1e-9 {
                return Err(Error::InvalidController(format!(
                    "value {v} is not on the grid {{0, 0.25, 0.5, 0.75, 1}}"
                )));
            }
            *slot = level as u8;
        }
        Ok(Self { levels })
    }

    /// Controller whose parameters are all at the same grid level.
    pub fn uniform(level: u8) -> Self {
        Self::from_levels([level.min(MAX_LEVEL); PARAM_COUNT]).expect("clamped level")
    }

    pub fn levels(&self) -> &[u8; PARAM_COUNT] {
        &self.levels
    }

    #[inline]
    pub fn level(&self, leg: usize, param: Param) -> u8 {
        self.levels[leg * PARAMS_PER_LEG + param as usize]
    }

    #[inline]
    pub fn get<S: Scalar>(&self, leg: usize, param: Param) -> S {
        level_value(self.level(leg, param))
    }

    pub fn set_level(&mut self, leg: usize, param: Param, level: u8) {
        self.levels[leg * PARAMS_PER_LEG + param as usize] = level.min(MAX_LEVEL);
    }

    /// Parameter values as a dense vector (used by the diversity objective).
    pub fn values<S: Scalar>(&self) -> [S; PARAM_COUNT] {
        self.levels.map(level_value)
    }

    /// Serializes as one CSV line of 24 numbers.
    pub fn to_csv_line(&self) -> String {
        self.values::<f64>()
            .iter()
            .map(|v| format!("{v}"))
            .collect::<Vec<_>>()
            .join(",")
    }

    pub fn from_csv_line(line: &str) -> Result<Self> {
        let values = line
            .trim()
            .split(',')
            .map(|field| {
                field
                    .trim()
                    .parse::<f64>()
                    .map_err(|e| Error::InvalidController(format!("`{field}`: {e}")))
            })
            .collect::<Result<Vec<_>>>()?;
        Self::from_values(&values)
    }
}

#[inline]
fn level_value<S: Scalar>(level: u8) -> S {
    S::from_u8(level).expect("small integer") / S::from_u8(MAX_LEVEL).expect("small integer")
}

impl fmt::Debug for Controller {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "Controller[{}]", self.to_csv_line())
    }
}

impl fmt::Display for Controller {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.to_csv_line())
    }
}

impl FromStr for Controller {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Self::from_csv_line(s)
    }
}

impl Serialize for Controller {
    fn serialize<Ser: Serializer>(&self, serializer: Ser) -> Result<Ser::Ok, Ser::Error> {
        self.values::<f64>().serialize(serializer)
    }
}

impl<'de> Deserialize<'de> for Controller {
    fn deserialize<D: Deserializer<'de>>(deserializer: D) -> Result<Self, D::Error> {
        let values = Vec::<f64>::deserialize(deserializer)?;
        Controller::from_values(&values).map_err(D::Error::custom)
    }
}

/// Joint angles commanded at time `t` (seconds).
pub fn joint_targets<S: Scalar>(c: &Controller, t: S, config: &GaitConfig<S>) -> JointTargets<S> {
    let phase = (t * config.frequency).fract();
    let phase = if phase < S::zero() { phase + S::one() } else { phase };
    let mut targets = JointTargets::zero();
    for leg in 0..LEGS {
        let swing = control_signal(phase, c.get(leg, Param::Swing), c.get(leg, Param::SwingPhase));
        let lift = control_signal(phase, c.get(leg, Param::Lift), c.get(leg, Param::LiftPhase));
        let lift = lift * config.lift_range;
        targets.set_leg(leg, [swing * config.swing_range, lift, lift]);
    }
    targets
}

/// The hand-designed tripod gait: legs 0, 2, 4 alternate with legs 1, 3, 5.
pub fn reference_controller() -> Controller {
    const SWING_PHASE: [f64; LEGS] = [0.0, 0.5, 0.0, 0.0, 0.5, 0.0];
    const LIFT_PHASE: [f64; LEGS] = [0.25, 0.75, 0.25, 0.75, 0.25, 0.75];
    let mut values = Vec::with_capacity(PARAM_COUNT);
    for leg in 0..LEGS {
        values.extend_from_slice(&[1.0, SWING_PHASE[leg], 0.25, LIFT_PHASE[leg]]);
    }
    Controller::from_values(&values).expect("reference table is on the grid")
}

pub fn random_controller<R: Rng + ?Sized>(rng: &mut R) -> Controller {
    let mut levels = [0u8; PARAM_COUNT];
    for level in levels.iter_mut() {
        *level = rng.random_range(0..=MAX_LEVEL);
    }
    Controller { levels }
}

/// Per-parameter probability of a one-step move under [`mutate`].
pub const MUTATION_RATE: f64 = 0.1;

/// Each parameter moves one grid step up or down with probability 0.05 each;
/// moves past the ends of the grid are clamped.
pub fn mutate<R: Rng + ?Sized>(c: &Controller, rng: &mut R) -> Controller {
    let mut out = *c;
    for level in out.levels.iter_mut() {
        let u: f64 = rng.random();
        if u < MUTATION_RATE / 2.0 {
            *level = (*level + 1).min(MAX_LEVEL);
        } else if u < MUTATION_RATE {
            *level = level.saturating_sub(1);
        }
    }
    out
}

/// Adds an independent deviation drawn uniformly from `{-0.25, 0, +0.25}` to
/// every parameter, clamped to `[0, 1]`.
pub fn perturb<R: Rng + ?Sized>(c: &Controller, rng: &mut R) -> Controller {
    let mut out = *c;
    for level in out.levels.iter_mut() {
        let u: f64 = rng.random();
        if u < 1.0 / 3.0 {
            *level = level.saturating_sub(1);
        } else if u >= 2.0 / 3.0 {
            *level = (*level + 1).min(MAX_LEVEL);
        }
    }
    out
}
