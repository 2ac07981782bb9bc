//! Deterministic hexapod simulator used both as self-model and as the
//! damaged "real" robot.

pub mod engine;
pub mod export;
pub mod kinematics;
pub mod morphology;

pub use engine::{
    contact_descriptor, forward_displacement, orientation_outcome, pose_orientation, simulate,
    simulate_from, Descriptor, Pose, SimConfig, Trajectory,
};
pub use export::{svg_top_view, trajectory_csv, TraceStyle};
pub use morphology::{apply_damage, mirror_leg, DamageOp, DamageScenario, Geometry, Leg, Morphology, ScenarioTag};
