//! Surrogate dynamics for a robot towing a caster-wheeled chair.
//!
//! The robot is a kinematic, holonomic base that moves toward each commanded pose under
//! velocity limits. While the grasp holds, the chair's grasp point is dragged toward the
//! gripper. Each caster resists motion in proportion to its misalignment with the local
//! rolling direction, and swivels toward that direction at a fixed relaxation rate. The
//! portion of the drag the chair fails to follow loads the grasp; a leaky integral of that
//! load (the grasp stress) breaks the grasp permanently once it crosses a threshold.

use std::f64::consts::PI;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::{angle_diff, normalize_angle, Pose2};
use crate::map::{CollisionChecker, FootprintModel, OccupancyMap};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SimParams {
    pub n_casters: usize,
    /// First-order swivel rate of each caster toward its rolling direction (1/s).
    pub caster_relax_rate: f64,
    pub friction_coeff: f64,
    pub grasp_break_stress: f64,
    /// Grasp point in the chair frame.
    pub grasp_offset: Pose2,
    pub robot_max_lin_vel: f64,
    pub robot_max_ang_vel: f64,
    pub dt: f64,
    /// Gripper point ahead of the robot center when the grasp is nominal.
    pub gripper_reach: f64,
    /// Radius of the caster ring in the chair frame.
    pub caster_ring_radius: f64,
    /// Resistance of aligned casters, as a multiple of `friction_coeff`.
    pub rolling_resistance: f64,
    /// Resistance per unit caster misalignment, as a multiple of `friction_coeff`.
    pub misalignment_gain: f64,
    /// Upper bound on the fraction of the drag the chair can refuse per step.
    pub max_resistance: f64,
    /// Fraction of the relative-yaw error about the grasp the chair corrects per step.
    pub yaw_compliance: f64,
    /// Lever arm converting heading error and heading change into grasp displacement (m).
    pub yaw_lever: f64,
    pub stress_gain: f64,
    /// Gripper/grasp-point gap the grasp absorbs elastically without loading.
    pub grasp_compliance: f64,
    /// Gap between gripper and grasp point beyond which a pinned chair stalls the base.
    pub grasp_slack: f64,
    /// Exponential decay rate of the grasp stress (1/s).
    pub stress_decay: f64,
    /// Radius of the chair's physical contact disc; the planning circle is the footprint's.
    pub contact_radius: f64,
}

impl SimParams {
    pub fn validate(&self) -> Result<()> {
        let positive = [
            ("caster_relax_rate", self.caster_relax_rate),
            ("friction_coeff", self.friction_coeff),
            ("grasp_break_stress", self.grasp_break_stress),
            ("robot_max_lin_vel", self.robot_max_lin_vel),
            ("robot_max_ang_vel", self.robot_max_ang_vel),
            ("dt", self.dt),
            ("gripper_reach", self.gripper_reach),
            ("caster_ring_radius", self.caster_ring_radius),
            ("stress_gain", self.stress_gain),
            ("yaw_lever", self.yaw_lever),
            ("grasp_slack", self.grasp_slack),
            ("stress_decay", self.stress_decay),
            ("contact_radius", self.contact_radius),
        ];
        for (name, v) in positive {
            if !(v > 0.0 && v.is_finite()) {
                return Err(Error::Config(format!("sim.{name} must be positive, got {v}")));
            }
        }
        if self.n_casters == 0 {
            return Err(Error::Config("sim.n_casters must be at least 1".into()));
        }
        if !(self.grasp_compliance >= 0.0) {
            return Err(Error::Config("sim.grasp_compliance must be non-negative".into()));
        }
        if !(0.0..1.0).contains(&self.max_resistance) {
            return Err(Error::Config("sim.max_resistance must lie in [0, 1)".into()));
        }
        if !(0.0..=1.0).contains(&self.yaw_compliance) {
            return Err(Error::Config("sim.yaw_compliance must lie in [0, 1]".into()));
        }
        Ok(())
    }

    /// Stable content hash used in trajectory metadata.
    pub fn content_hash(&self) -> String {
        crate::config::hash_json(self)
    }

    /// Robot pose whose gripper holds the chair at `grasp_offset` with the nominal reach.
    pub fn robot_for_object(&self, object: &Pose2) -> Pose2 {
        object.compose(&self.grasp_offset).compose(&Pose2::new(-self.gripper_reach, 0.0, 0.0))
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SimState {
    pub robot: Pose2,
    pub object: Pose2,
    /// Swivel angle of each caster in the chair frame.
    pub caster_angles: Vec<f64>,
    pub grasp_stress: f64,
    pub grasp_held: bool,
    pub time: f64,
    /// Grasp frame expressed in the robot frame, fixed when the grasp is taken.
    pub grasp_mount: Pose2,
    pub steps: u64,
}

impl SimState {
    /// Current chair pose relative to the robot.
    pub fn object_in_robot(&self) -> Pose2 {
        self.object.relative_to(&self.robot)
    }
}

/// Read-only physics context for one map and parameter set.
#[derive(Clone, Debug)]
pub struct Simulator<'a> {
    params: SimParams,
    checker: CollisionChecker<'a>,
    /// Physical collision geometry: the footprint with the contact radius.
    contact: CollisionChecker<'a>,
    caster_positions: Vec<(f64, f64)>,
}

impl<'a> Simulator<'a> {
    pub fn new(params: SimParams, map: &'a OccupancyMap, footprint: FootprintModel) -> Result<Self> {
        params.validate()?;
        footprint.validate()?;
        let n = params.n_casters;
        let caster_positions = (0..n)
            .map(|i| {
                let a = 2.0 * PI * i as f64 / n as f64;
                (params.caster_ring_radius * a.cos(), params.caster_ring_radius * a.sin())
            })
            .collect();
        let physical = FootprintModel { chair_radius: params.contact_radius, ..footprint };
        physical.validate()?;
        Ok(Simulator {
            contact: CollisionChecker::new(map, physical),
            params,
            checker: CollisionChecker::new(map, footprint),
            caster_positions,
        })
    }

    pub fn params(&self) -> &SimParams {
        &self.params
    }

    pub fn checker(&self) -> &CollisionChecker<'a> {
        &self.checker
    }

    pub fn map(&self) -> &OccupancyMap {
        self.checker.map()
    }

    /// Takes the grasp where the chair currently is; caster angles are drawn from `rng_seed`.
    pub fn reset(&self, robot: Pose2, object: Pose2, rng_seed: u64) -> Result<SimState> {
        if self.contact.chair_collides(&object) {
            return Err(Error::InitialCollision(format!("chair at {object}")));
        }
        if self.contact.robot_collides(&robot) {
            return Err(Error::InitialCollision(format!("robot at {robot}")));
        }
        let mut rng = ChaCha8Rng::seed_from_u64(rng_seed);
        let caster_angles = (0..self.params.n_casters).map(|_| rng.gen_range(-PI..PI)).collect();
        let grasp = object.compose(&self.params.grasp_offset);
        Ok(SimState {
            robot,
            object,
            caster_angles,
            grasp_stress: 0.0,
            grasp_held: true,
            time: 0.0,
            grasp_mount: grasp.relative_to(&robot),
            steps: 0,
        })
    }

    /// Advances one `dt`. Failures are reported through the returned state.
    pub fn step(&self, state: &SimState, command: &Pose2) -> SimState {
        let p = &self.params;
        let dt = p.dt;
        let mut next = state.clone();
        next.time = state.time + dt;
        next.steps = state.steps + 1;

        let robot = self.move_robot(&state.robot, command);
        next.robot = robot;

        if !state.grasp_held {
            return next;
        }

        // Kinematic target: the chair pose that puts its grasp point on the gripper.
        let gripper = robot.compose(&state.grasp_mount);
        let target = gripper.compose(&p.grasp_offset.inverse());
        let yaw_step = p.yaw_compliance * angle_diff(target.theta, state.object.theta);
        let heading = normalize_angle(state.object.theta + yaw_step);
        let (gx, gy) = (p.grasp_offset.x, p.grasp_offset.y);
        let (s, c) = heading.sin_cos();
        let desired_x = gripper.x - (c * gx - s * gy);
        let desired_y = gripper.y - (s * gx + c * gy);
        let (dx, dy) = (desired_x - state.object.x, desired_y - state.object.y);

        let resistance = self.caster_resistance(&state.object, &state.caster_angles, dx, dy, yaw_step);
        let follow = 1.0 - resistance;
        let (mut mx, mut my) = (follow * dx, follow * dy);
        let rot = follow * yaw_step;

        let mut object = Pose2::new(state.object.x + mx, state.object.y + my, state.object.theta + rot);
        let contact = self.contact.chair_collides(&object);
        if contact {
            // Slide along the obstacle: repeatedly remove the motion component along the
            // mean contact normal, then shorten what is left. A move is acceptable when it
            // touches no more sampled obstacle points than the current pose does.
            let limit = self.contact.chair_contacts(&state.object).len();
            let acceptable = |o: &Pose2| self.contact.chair_contacts(o).len() <= limit;
            for _ in 0..4 {
                let contacts = self.contact.chair_contacts(&object);
                let (nx, ny) =
                    contacts.iter().fold((0.0, 0.0), |acc, &(x, y)| (acc.0 + x - object.x, acc.1 + y - object.y));
                let norm = nx.hypot(ny);
                let into = if norm > 1e-12 { (mx * nx + my * ny) / norm } else { 0.0 };
                if into <= 0.0 {
                    break;
                }
                mx -= into * nx / norm;
                my -= into * ny / norm;
                object = Pose2::new(state.object.x + mx, state.object.y + my, state.object.theta + rot);
                if acceptable(&object) {
                    break;
                }
            }
            let mut shrink = 0;
            while !acceptable(&object) && shrink < 4 {
                mx *= 0.5;
                my *= 0.5;
                shrink += 1;
                object = Pose2::new(state.object.x + mx, state.object.y + my, state.object.theta + rot);
            }
            if !acceptable(&object) {
                mx = 0.0;
                my = 0.0;
                object = Pose2::new(state.object.x, state.object.y, state.object.theta + rot);
            }
        }
        next.object = object;

        // Casters swivel toward the direction they actually rolled.
        let relax = 1.0 - (-p.caster_relax_rate * dt).exp();
        let (ls, lc) = (-state.object.theta).sin_cos();
        let (bx, by) = (lc * mx - ls * my, ls * mx + lc * my);
        for (angle, &(qx, qy)) in next.caster_angles.iter_mut().zip(&self.caster_positions) {
            let (ux, uy) = (bx - rot * qy, by + rot * qx);
            if ux.hypot(uy) > 1e-9 {
                let dir = uy.atan2(ux);
                *angle = normalize_angle(*angle + relax * angle_diff(dir, *angle));
            }
        }

        // Load on the grasp: residual tracking error times the gripper's travel this step.
        // Heading terms act through a lever arm, so spinning against the chair counts too.
        let held = object.compose(&p.grasp_offset);
        let yaw_gap = p.yaw_lever * angle_diff(target.theta, object.theta).abs();
        let prev_gripper = state.robot.compose(&state.grasp_mount);
        let travel = (gripper.x - prev_gripper.x).hypot(gripper.y - prev_gripper.y)
            + p.yaw_lever * angle_diff(robot.theta, state.robot.theta).abs();
        let mut gap = (gripper.x - held.x).hypot(gripper.y - held.y) + yaw_gap;
        if contact && gap > p.grasp_slack {
            // A chair pinned against an obstacle stalls the base; the base keeps straining.
            next.robot = state.robot;
            gap = (prev_gripper.x - held.x).hypot(prev_gripper.y - held.y) + yaw_gap;
        }
        let load = p.stress_gain * ((gap - p.grasp_compliance).max(0.0) / dt) * travel;
        next.grasp_stress = state.grasp_stress * (-p.stress_decay * dt).exp() + load;
        if next.grasp_stress > p.grasp_break_stress {
            next.grasp_held = false;
        }
        next
    }

    fn move_robot(&self, robot: &Pose2, command: &Pose2) -> Pose2 {
        let p = &self.params;
        let (mut dx, mut dy) = (command.x - robot.x, command.y - robot.y);
        let dist = dx.hypot(dy);
        let max_lin = p.robot_max_lin_vel * p.dt;
        let lin_clipped = dist > max_lin;
        if lin_clipped {
            dx *= max_lin / dist;
            dy *= max_lin / dist;
        }
        let mut dth = angle_diff(command.theta, robot.theta);
        let max_ang = p.robot_max_ang_vel * p.dt;
        let ang_clipped = dth.abs() > max_ang;
        if ang_clipped {
            dth = dth.signum() * max_ang;
        }
        let next = if lin_clipped || ang_clipped {
            Pose2::new(robot.x + dx, robot.y + dy, robot.theta + dth)
        } else {
            *command
        };
        // The base refuses to walk into obstacles.
        if self.contact.robot_collides(&next) && !self.contact.robot_collides(robot) {
            *robot
        } else {
            next
        }
    }

    /// Fraction of the requested chair motion refused by the casters.
    fn caster_resistance(&self, object: &Pose2, casters: &[f64], dx: f64, dy: f64, rot: f64) -> f64 {
        let p = &self.params;
        let (s, c) = (-object.theta).sin_cos();
        let (bx, by) = (c * dx - s * dy, s * dx + c * dy);
        let mut misalignment = 0.0;
        let mut moving = 0usize;
        for (&angle, &(qx, qy)) in casters.iter().zip(&self.caster_positions) {
            let (ux, uy) = (bx - rot * qy, by + rot * qx);
            if ux.hypot(uy) > 1e-9 {
                misalignment += (angle - uy.atan2(ux)).sin().abs();
                moving += 1;
            }
        }
        if moving == 0 {
            return 0.0;
        }
        let mean = misalignment / casters.len() as f64;
        (p.friction_coeff * (p.rolling_resistance + p.misalignment_gain * mean)).min(p.max_resistance)
    }
}

pub fn sim_reset(sim: &Simulator<'_>, robot: Pose2, object: Pose2, rng_seed: u64) -> Result<SimState> {
    sim.reset(robot, object, rng_seed)
}

pub fn sim_step(sim: &Simulator<'_>, state: &SimState, command: &Pose2) -> SimState {
    sim.step(state, command)
}

pub fn check_lost_grasp(state: &SimState) -> bool {
    !state.grasp_held
}
