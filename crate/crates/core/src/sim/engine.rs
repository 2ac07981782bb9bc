//! Quasi-static gait simulation.
//!
//! Every control tick the commanded joint angles place the feet; the body
//! rests on the lower-hull facet of the feet under its mass center; feet
//! within the contact tolerance of that plane are in stance. Stance feet do
//! not slip, so the planar body motion between two ticks is the inverse of
//! the rigid registration of their body-frame positions.

use serde::{Deserialize, Serialize};

use crate::algorithms::bongard::BongardAction;
use crate::gait::{joint_targets, Controller, GaitConfig, LEGS};
use crate::scalar::Scalar;

use super::kinematics::{feet, fit_plane, register, resting_plane, Plane, Point3, Rigid2};
use super::morphology::Morphology;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(bound = "S: Scalar", deny_unknown_fields, default)]
pub struct SimConfig<S> {
    pub gait: GaitConfig<S>,
    /// Control period in seconds.
    pub dt: S,
    /// Number of control ticks after the initial one.
    pub ticks: usize,
    /// Feet closer than this to the resting plane are in contact, meters.
    pub contact_tolerance: S,
    /// Body tilt beyond which the robot is considered fallen, radians.
    pub max_tilt: S,
}

impl<S: Scalar> Default for SimConfig<S> {
    fn default() -> Self {
        Self {
            gait: GaitConfig::default(),
            dt: S::lit(0.03),
            ticks: 100,
            contact_tolerance: S::lit(0.005),
            max_tilt: S::lit(0.5),
        }
    }
}

/// Body pose in the world frame at one tick.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
#[serde(bound = "S: Scalar")]
pub struct Pose<S> {
    pub x: S,
    pub y: S,
    pub heading: S,
    pub roll: S,
    pub pitch: S,
}

impl<S: Scalar> Pose<S> {
    fn planar(&self) -> Rigid2<S> {
        Rigid2 {
            angle: self.heading,
            translation: [self.x, self.y],
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(bound = "S: Scalar")]
pub struct Trajectory<S> {
    pub dt: S,
    /// Poses for ticks `0..=ticks`.
    pub poses: Vec<Pose<S>>,
    pub contacts: Vec<[bool; LEGS]>,
    /// Joint angles actually applied, leg-major (swing, femur, tibia).
    pub joints: Vec<[[S; 3]; LEGS]>,
    /// RMS registration residual of the stance feet between tick `k-1` and
    /// `k`; zero at tick 0.
    pub slip: Vec<S>,
    pub fall_tick: Option<usize>,
}

impl<S: Scalar> Trajectory<S> {
    pub fn ticks(&self) -> usize {
        self.poses.len().saturating_sub(1)
    }

    pub fn fallen(&self) -> bool {
        self.fall_tick.is_some()
    }
}

/// Binary contact matrix flattened leg-major, tick-minor.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(transparent)]
pub struct Descriptor(pub Vec<u8>);

impl Descriptor {
    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn to_scalars<S: Scalar>(&self) -> Vec<S> {
        self.0.iter().map(|&b| if b != 0 { S::one() } else { S::zero() }).collect()
    }
}

/// Angles held by each joint given the morphology's power state: unpowered
/// joints keep `frozen`.
fn applied_angles<S: Scalar>(m: &Morphology<S>, commanded: [[S; 3]; LEGS], frozen: &[[S; 3]; LEGS]) -> [[S; 3]; LEGS] {
    std::array::from_fn(|leg| {
        std::array::from_fn(|dof| {
            if m.legs[leg].powered[dof] {
                commanded[leg][dof]
            } else {
                frozen[leg][dof]
            }
        })
    })
}

fn commanded_angles<S: Scalar>(c: &Controller, t: S, gait: &GaitConfig<S>) -> [[S; 3]; LEGS] {
    let targets = joint_targets(c, t, gait);
    std::array::from_fn(|leg| targets.leg(leg))
}

struct Stance<S> {
    plane: Plane<S>,
    contacts: [bool; LEGS],
}

fn settle<S: Scalar>(
    m: &Morphology<S>,
    feet: &[Option<Point3<S>>; LEGS],
    config: &SimConfig<S>,
) -> Option<Stance<S>> {
    let facet = resting_plane(feet, m.com_offset)?;
    let mut contacts = [false; LEGS];
    let mut support = Vec::with_capacity(LEGS);
    for (leg, foot) in feet.iter().enumerate() {
        if let Some(p) = foot {
            if facet.clearance(p) <= config.contact_tolerance {
                contacts[leg] = true;
                support.push(*p);
            }
        }
    }
    let plane = fit_plane(&support).unwrap_or(facet);
    let (roll, pitch) = plane.orientation();
    if roll.abs() > config.max_tilt || pitch.abs() > config.max_tilt {
        return None;
    }
    Some(Stance { plane, contacts })
}

pub fn simulate<S: Scalar>(m: &Morphology<S>, c: &Controller, config: &SimConfig<S>) -> Trajectory<S> {
    simulate_from(m, c, config, Pose::default())
}

/// Runs a trial starting from `start` (only its planar part is used).
pub fn simulate_from<S: Scalar>(
    m: &Morphology<S>,
    c: &Controller,
    config: &SimConfig<S>,
    start: Pose<S>,
) -> Trajectory<S> {
    let ticks = config.ticks;
    let mut tr = Trajectory {
        dt: config.dt,
        poses: Vec::with_capacity(ticks + 1),
        contacts: Vec::with_capacity(ticks + 1),
        joints: Vec::with_capacity(ticks + 1),
        slip: Vec::with_capacity(ticks + 1),
        fall_tick: None,
    };
    let frozen = commanded_angles(c, S::zero(), &config.gait);
    let mut pose = Pose {
        roll: S::zero(),
        pitch: S::zero(),
        ..start
    };
    let mut previous: Option<([Option<Point3<S>>; LEGS], [bool; LEGS])> = None;

    for k in 0..=ticks {
        let t = S::from_usize(k).expect("tick count") * config.dt;
        let angles = applied_angles(m, commanded_angles(c, t, &config.gait), &frozen);
        tr.joints.push(angles);
        if tr.fall_tick.is_some() {
            tr.poses.push(pose);
            tr.contacts.push([false; LEGS]);
            tr.slip.push(S::zero());
            continue;
        }
        let current = feet(m, &angles);
        let Some(stance) = settle(m, &current, config) else {
            tr.fall_tick = Some(k);
            tr.poses.push(pose);
            tr.contacts.push([false; LEGS]);
            tr.slip.push(S::zero());
            continue;
        };
        let mut slip = S::zero();
        if let Some((prev_feet, prev_contacts)) = &previous {
            let both: Vec<usize> = (0..LEGS).filter(|&l| prev_contacts[l] && stance.contacts[l]).collect();
            let anchors: Vec<usize> = if both.is_empty() {
                (0..LEGS).filter(|&l| prev_contacts[l] && current[l].is_some()).collect()
            } else {
                both
            };
            let from: Vec<[S; 2]> = anchors.iter().filter_map(|&l| prev_feet[l].map(|p| [p[0], p[1]])).collect();
            let to: Vec<[S; 2]> = anchors.iter().filter_map(|&l| current[l].map(|p| [p[0], p[1]])).collect();
            let (motion, residual) = register(&from, &to);
            slip = residual;
            // World foot positions are fixed: T_k(p) = T_{k+1}(q) with q ≈ M(p).
            let body = pose.planar().compose(&motion.inverse());
            pose.x = body.translation[0];
            pose.y = body.translation[1];
            pose.heading = body.angle;
        }
        let (roll, pitch) = stance.plane.orientation();
        pose.roll = roll;
        pose.pitch = pitch;
        tr.poses.push(pose);
        tr.contacts.push(stance.contacts);
        tr.slip.push(slip);
        previous = Some((current, stance.contacts));
    }
    tr
}

/// Forward displacement over the trial; fallen trials score zero.
pub fn forward_displacement<S: Scalar>(tr: &Trajectory<S>) -> S {
    if tr.fallen() {
        return S::zero();
    }
    match (tr.poses.first(), tr.poses.last()) {
        (Some(first), Some(last)) => last.x - first.x,
        _ => S::zero(),
    }
}

pub fn contact_descriptor<S: Scalar>(tr: &Trajectory<S>) -> Descriptor {
    let mut bits = Vec::with_capacity(LEGS * tr.contacts.len());
    for leg in 0..LEGS {
        bits.extend(tr.contacts.iter().map(|row| u8::from(row[leg])));
    }
    Descriptor(bits)
}

/// Body orientation (roll, pitch) when one leg is posed with `angles` and
/// the others stay neutral. Unpowered joints of the posed leg stay at zero.
pub fn pose_orientation<S: Scalar>(m: &Morphology<S>, leg: usize, angles: [S; 3], config: &SimConfig<S>) -> (S, S) {
    let mut all = [[S::zero(); 3]; LEGS];
    if leg < LEGS {
        all[leg] = std::array::from_fn(|dof| {
            if m.legs[leg].powered[dof] {
                angles[dof]
            } else {
                S::zero()
            }
        });
    }
    let current = feet(m, &all);
    match settle(m, &current, config) {
        Some(stance) => stance.plane.orientation(),
        None => tipped_orientation(m, &current, config.max_tilt),
    }
}

/// Orientation reported when no stable resting plane exists: the body lies
/// tilted by `max_tilt` towards its mass center.
fn tipped_orientation<S: Scalar>(m: &Morphology<S>, feet: &[Option<Point3<S>>; LEGS], max_tilt: S) -> (S, S) {
    let pts: Vec<&Point3<S>> = feet.iter().flatten().collect();
    if pts.is_empty() {
        return (S::zero(), S::zero());
    }
    let n = S::from_usize(pts.len()).expect("small count");
    let cx = pts.iter().map(|p| p[0]).sum::<S>() / n;
    let cy = pts.iter().map(|p| p[1]).sum::<S>() / n;
    let (dx, dy) = (m.com_offset[0] - cx, m.com_offset[1] - cy);
    let norm = (dx * dx + dy * dy).sqrt();
    if norm <= S::epsilon() {
        return (max_tilt, S::zero());
    }
    (max_tilt * dy / norm, max_tilt * dx / norm)
}

/// Simulated accelerometer reading after executing a single-leg action.
pub fn orientation_outcome<S: Scalar>(m: &Morphology<S>, action: &BongardAction, config: &SimConfig<S>) -> (S, S) {
    pose_orientation(m, action.leg, action.joint_angles(), config)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::gait::{random_controller, reference_controller, Param};
    use crate::sim::morphology::{apply_damage, mirror_leg, ScenarioTag};
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn cfg() -> SimConfig<f64> {
        SimConfig::default()
    }

    fn still_controller() -> Controller {
        let mut c = reference_controller();
        for leg in 0..LEGS {
            c.set_level(leg, Param::Swing, 0);
            c.set_level(leg, Param::Lift, 0);
        }
        c
    }

    fn damaged(tag: ScenarioTag) -> Morphology<f64> {
        apply_damage(&Morphology::default(), &tag.into()).unwrap()
    }

    #[test]
    fn still_controller_does_not_move() {
        let tr = simulate(&Morphology::default(), &still_controller(), &cfg());
        assert_eq!(tr.ticks(), 100);
        assert!(!tr.fallen());
        assert_eq!(forward_displacement(&tr), 0.0);
        assert!(tr.contacts.iter().all(|row| *row == tr.contacts[0]));
    }

    #[test]
    fn reference_walks_forward_on_alternating_tripods() {
        let tr = simulate(&Morphology::default(), &reference_controller(), &cfg());
        assert!(!tr.fallen());
        let d = forward_displacement(&tr);
        assert!(d > 0.1, "displacement {d}");
        let a = [true, false, true, false, true, false];
        let b = [false, true, false, true, false, true];
        assert!(tr.contacts.contains(&a));
        assert!(tr.contacts.contains(&b));
    }

    #[test]
    fn losing_the_hind_leg_slows_the_reference() {
        let base = forward_displacement(&simulate(&Morphology::default(), &reference_controller(), &cfg()));
        let hurt = forward_displacement(&simulate(&damaged(ScenarioTag::D), &reference_controller(), &cfg()));
        assert!(hurt < base, "{hurt} vs {base}");
    }

    #[test]
    fn descriptor_layout() {
        let tr = simulate(&damaged(ScenarioTag::E), &reference_controller(), &cfg());
        let d = contact_descriptor(&tr);
        assert_eq!(d.len(), 606);
        assert!(d.0[101..202].iter().all(|&b| b == 0));
        let still = contact_descriptor(&simulate(&Morphology::default(), &still_controller(), &cfg()));
        for leg in 0..LEGS {
            let row = &still.0[leg * 101..(leg + 1) * 101];
            assert!(row.iter().all(|&b| b == row[0]));
        }
    }

    #[test]
    fn unpowered_leg_holds_its_joints() {
        let tr = simulate(&damaged(ScenarioTag::B), &reference_controller(), &cfg());
        let first = tr.joints[0][4];
        assert!(tr.joints.iter().all(|j| j[4] == first));
    }

    #[test]
    fn no_legs_falls_immediately() {
        let mut m = Morphology::<f64>::default();
        for leg in m.legs.iter_mut() {
            leg.present = false;
        }
        let tr = simulate(&m, &reference_controller(), &cfg());
        assert_eq!(tr.fall_tick, Some(0));
        assert_eq!(forward_displacement(&tr), 0.0);
    }

    #[test]
    fn translation_invariance() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let m = Morphology::default();
        for _ in 0..10 {
            let c = random_controller(&mut rng);
            let a = simulate(&m, &c, &cfg());
            let start = Pose { x: 1.5, y: -0.7, ..Pose::default() };
            let b = simulate_from(&m, &c, &cfg(), start);
            assert_eq!(a.contacts, b.contacts);
            for (p, q) in a.poses.iter().zip(&b.poses) {
                assert!((q.x - p.x - 1.5).abs() < 1e-9 && (q.y - p.y + 0.7).abs() < 1e-9);
            }
            assert!((forward_displacement(&a) - forward_displacement(&b)).abs() < 1e-9);
        }
    }

    #[test]
    fn deterministic() {
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let c = random_controller(&mut rng);
        let m = damaged(ScenarioTag::C);
        assert_eq!(simulate(&m, &c, &cfg()), simulate(&m, &c, &cfg()));
    }

    #[test]
    fn contacts_never_exceed_present_legs() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        for tag in ScenarioTag::ALL {
            let m = damaged(tag);
            for _ in 0..5 {
                let tr = simulate(&m, &random_controller(&mut rng), &cfg());
                for row in &tr.contacts {
                    assert!(row.iter().filter(|&&c| c).count() <= m.present_legs());
                }
            }
        }
    }

    #[test]
    fn neutral_pose_is_level_and_mirror_actions_mirror_roll() {
        let m = Morphology::<f64>::default();
        let (r, p) = pose_orientation(&m, 0, [0.0; 3], &cfg());
        assert!(r.abs() < 1e-12 && p.abs() < 1e-12);
        for leg in 0..LEGS {
            for swing in [-0.5, 0.5] {
                let (r1, p1) = pose_orientation(&m, leg, [swing, -0.7, 0.0], &cfg());
                let (r2, p2) = pose_orientation(&m, mirror_leg(leg), [-swing, -0.7, 0.0], &cfg());
                assert!((r1 + r2).abs() < 1e-9 && (p1 - p2).abs() < 1e-9);
            }
        }
    }

    #[test]
    fn f32_tracks_f64() {
        let c = reference_controller();
        let d64 = forward_displacement(&simulate(&Morphology::<f64>::default(), &c, &SimConfig::default()));
        let d32 = forward_displacement(&simulate(&Morphology::<f32>::default(), &c, &SimConfig::default()));
        assert!((d64 - d32 as f64).abs() < 1e-3, "{d64} vs {d32}");
    }

    /// Stance feet sweep arcs about different hips, so the tick-to-tick
    /// registration is not exact; the residual stays small on typical ticks.
    #[test]
    fn slip_residual_is_small() {
        let still = simulate(&Morphology::default(), &still_controller(), &cfg());
        assert!(still.slip.iter().all(|&s| s <= 1e-12));
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(9);
        let mut all: Vec<f64> = (0..200)
            .flat_map(|_| simulate(&Morphology::default(), &crate::gait::random_controller(&mut rng), &cfg()).slip)
            .collect();
        all.sort_by(f64::total_cmp);
        let n = all.len();
        assert!(all[n / 2] < 0.003, "median {}", all[n / 2]);
        assert!(all[n * 99 / 100] < 0.04, "p99 {}", all[n * 99 / 100]);
        assert!(all[n - 1] < 0.07, "max {}", all[n - 1]);
    }
}
