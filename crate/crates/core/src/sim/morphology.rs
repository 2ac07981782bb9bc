//! Hexapod geometry and damage operators.
//!
//! Legs are numbered around the body starting at the front right:
//! 0 front-right, 1 middle-right, 2 hind-right, 3 hind-left, 4 middle-left,
//! 5 front-left. Body frame: x forward, y left, z up.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::gait::LEGS;
use crate::scalar::Scalar;

/// Mounting angle of each leg around the body, in degrees.
const MOUNT_ANGLE_DEG: [f64; LEGS] = [-30.0, -90.0, -150.0, 150.0, 90.0, 30.0];

/// Leg index obtained by reflecting the body through its sagittal plane.
pub const fn mirror_leg(leg: usize) -> usize {
    LEGS - 1 - leg
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(bound = "S: Scalar", deny_unknown_fields, default)]
pub struct Geometry<S> {
    /// Distance from the body center to each hip, meters.
    pub attachment_radius: S,
    pub coxa: S,
    pub femur: S,
    pub tibia: S,
}

impl<S: Scalar> Default for Geometry<S> {
    fn default() -> Self {
        Self {
            attachment_radius: S::lit(0.12),
            coxa: S::lit(0.04),
            femur: S::lit(0.08),
            tibia: S::lit(0.12),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(bound = "S: Scalar")]
pub struct Leg<S> {
    /// Hip position in the body frame, meters.
    pub attachment: [S; 2],
    /// Outward direction of the leg at zero swing angle, radians.
    pub yaw: S,
    pub coxa: S,
    pub femur: S,
    pub tibia: S,
    pub tibia_scale: S,
    /// Swing, femur and tibia joints.
    pub powered: [bool; 3],
    pub present: bool,
}

impl<S: Scalar> Leg<S> {
    #[inline]
    pub fn effective_tibia(&self) -> S {
        self.tibia * self.tibia_scale
    }

    /// A leg carries weight only if it exists and both elevation joints hold
    /// torque; an unpowered femur or tibia servo folds under load.
    #[inline]
    pub fn bears_load(&self) -> bool {
        self.present && self.powered[1] && self.powered[2]
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(bound = "S: Scalar")]
pub struct Morphology<S> {
    pub legs: [Leg<S>; LEGS],
    /// Horizontal offset of the mass center from the body center, meters.
    pub com_offset: [S; 2],
}

impl<S: Scalar> Morphology<S> {
    pub fn hexapod(geometry: &Geometry<S>) -> Self {
        let legs = std::array::from_fn(|i| {
            let yaw = S::lit(MOUNT_ANGLE_DEG[i].to_radians());
            Leg {
                attachment: [
                    geometry.attachment_radius * yaw.cos(),
                    geometry.attachment_radius * yaw.sin(),
                ],
                yaw,
                coxa: geometry.coxa,
                femur: geometry.femur,
                tibia: geometry.tibia,
                tibia_scale: S::one(),
                powered: [true; 3],
                present: true,
            }
        });
        Self {
            legs,
            com_offset: [S::zero(); 2],
        }
    }

    pub fn present_legs(&self) -> usize {
        self.legs.iter().filter(|l| l.present).count()
    }

    /// Returns a damaged copy.
    pub fn damaged(&self, scenario: &DamageScenario) -> Result<Self> {
        apply_damage(self, scenario)
    }
}

impl<S: Scalar> Default for Morphology<S> {
    fn default() -> Self {
        Self::hexapod(&Geometry::default())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "op", rename_all = "kebab-case")]
pub enum DamageOp {
    RemoveLeg { leg: usize },
    UnpowerLeg { leg: usize },
    ScaleTibia { leg: usize, scale: f64 },
}

impl DamageOp {
    fn leg(&self) -> usize {
        match *self {
            DamageOp::RemoveLeg { leg }
            | DamageOp::UnpowerLeg { leg }
            | DamageOp::ScaleTibia { leg, .. } => leg,
        }
    }
}

/// One of the six named test cases or an explicit list of operators.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum DamageScenario {
    Tag(ScenarioTag),
    Custom(Vec<DamageOp>),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum ScenarioTag {
    /// Undamaged.
    A,
    /// Middle-left leg no longer powered.
    B,
    /// Front-right tibia shortened by half.
    C,
    /// Hind-right leg lost.
    D,
    /// Middle-right leg lost.
    E,
    /// Middle-right and front-left legs lost.
    F,
}

impl ScenarioTag {
    pub const ALL: [ScenarioTag; 6] = [
        ScenarioTag::A,
        ScenarioTag::B,
        ScenarioTag::C,
        ScenarioTag::D,
        ScenarioTag::E,
        ScenarioTag::F,
    ];

    pub fn ops(self) -> Vec<DamageOp> {
        match self {
            ScenarioTag::A => vec![],
            ScenarioTag::B => vec![DamageOp::UnpowerLeg { leg: 4 }],
            ScenarioTag::C => vec![DamageOp::ScaleTibia { leg: 0, scale: 0.5 }],
            ScenarioTag::D => vec![DamageOp::RemoveLeg { leg: 2 }],
            ScenarioTag::E => vec![DamageOp::RemoveLeg { leg: 1 }],
            ScenarioTag::F => vec![
                DamageOp::RemoveLeg { leg: 1 },
                DamageOp::RemoveLeg { leg: 5 },
            ],
        }
    }
}

impl fmt::Display for ScenarioTag {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{self:?}")
    }
}

impl FromStr for ScenarioTag {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_uppercase().as_str() {
            "A" => Ok(ScenarioTag::A),
            "B" => Ok(ScenarioTag::B),
            "C" => Ok(ScenarioTag::C),
            "D" => Ok(ScenarioTag::D),
            "E" => Ok(ScenarioTag::E),
            "F" => Ok(ScenarioTag::F),
            other => Err(Error::UnknownScenario(other.to_string())),
        }
    }
}

impl From<ScenarioTag> for DamageScenario {
    fn from(tag: ScenarioTag) -> Self {
        DamageScenario::Tag(tag)
    }
}

impl DamageScenario {
    pub fn ops(&self) -> Vec<DamageOp> {
        match self {
            DamageScenario::Tag(tag) => tag.ops(),
            DamageScenario::Custom(ops) => ops.clone(),
        }
    }
}

impl FromStr for DamageScenario {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        s.parse::<ScenarioTag>().map(DamageScenario::Tag)
    }
}

pub fn apply_damage<S: Scalar>(m: &Morphology<S>, scenario: &DamageScenario) -> Result<Morphology<S>> {
    let mut out = m.clone();
    for op in scenario.ops() {
        let leg = op.leg();
        if leg >= LEGS {
            return Err(Error::InvalidLeg(leg));
        }
        let target = &mut out.legs[leg];
        match op {
            DamageOp::RemoveLeg { .. } => target.present = false,
            DamageOp::UnpowerLeg { .. } => target.powered = [false; 3],
            DamageOp::ScaleTibia { scale, .. } => {
                if !(scale >= 0.0) {
                    return Err(Error::InvalidConfig(format!("tibia scale {scale} must be >= 0")));
                }
                target.tibia_scale = target.tibia_scale * S::lit(scale);
            }
        }
    }
    Ok(out)
}
