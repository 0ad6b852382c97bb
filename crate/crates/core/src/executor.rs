//! The hierarchical execution loop and the baseline executors that share its
//! reached / stuck / lost-grasp logic.
//!
//! Every method drives the same simulator one step at a time. Methods that plan first
//! get a waypoint queue from the downsampled A* path; the others aim at the final goal
//! directly. After each step the loop checks, in order: lost grasp, success, waypoint
//! reached, stuck, and the step budget.

use std::fmt;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::config::{Config, RrtParams};
use crate::demo::{Sample, Trajectory, TrajectoryMeta};
use crate::diffusion::{DiffusionPolicy, PolicyKind};
use crate::error::{Error, Result};
use crate::geometry::{pose_distance, transform_to_frame, Pose2};
use crate::planner::{sample_intermediate_goals, PosePair, Roadmap};
use crate::rrt::RrtPlanner;
use crate::sim::{SimState, Simulator};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Method {
    #[serde(rename = "popi")]
    PoPi,
    LocalDiffusionOnly,
    GlobalDiffusion,
    #[serde(rename = "astar_follow")]
    AStarFollow,
    RrtFollow,
}

impl Method {
    pub const ALL: [Method; 5] =
        [Method::PoPi, Method::LocalDiffusionOnly, Method::GlobalDiffusion, Method::AStarFollow, Method::RrtFollow];

    pub fn name(self) -> &'static str {
        match self {
            Method::PoPi => "popi",
            Method::LocalDiffusionOnly => "local_diffusion_only",
            Method::GlobalDiffusion => "global_diffusion",
            Method::AStarFollow => "astar_follow",
            Method::RrtFollow => "rrt_follow",
        }
    }

    pub fn parse(s: &str) -> Result<Self> {
        Method::ALL
            .into_iter()
            .find(|m| m.name() == s || m.short_name() == s)
            .ok_or_else(|| Error::Config(format!("unknown method {s:?}")))
    }

    pub fn short_name(self) -> &'static str {
        match self {
            Method::PoPi => "popi",
            Method::LocalDiffusionOnly => "local",
            Method::GlobalDiffusion => "global",
            Method::AStarFollow => "astar",
            Method::RrtFollow => "rrt",
        }
    }

    /// Whether the method works through a waypoint queue from the roadmap.
    pub fn uses_planner(self) -> bool {
        matches!(self, Method::PoPi | Method::AStarFollow | Method::RrtFollow)
    }

    /// Which trained policy the method needs, if any.
    pub fn policy_kind(self) -> Option<PolicyKind> {
        match self {
            Method::PoPi | Method::LocalDiffusionOnly => Some(PolicyKind::Local),
            Method::GlobalDiffusion => Some(PolicyKind::Global),
            Method::AStarFollow | Method::RrtFollow => None,
        }
    }
}

impl fmt::Display for Method {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Outcome {
    Success,
    FailLostGrasp,
    FailStuck,
    FailTimeout,
    /// No roadmap path between start and goal; nothing was executed.
    FailNoPath,
}

impl Outcome {
    pub const ALL: [Outcome; 5] =
        [Outcome::Success, Outcome::FailLostGrasp, Outcome::FailStuck, Outcome::FailTimeout, Outcome::FailNoPath];

    pub fn name(self) -> &'static str {
        match self {
            Outcome::Success => "success",
            Outcome::FailLostGrasp => "fail_lost_grasp",
            Outcome::FailStuck => "fail_stuck",
            Outcome::FailTimeout => "fail_timeout",
            Outcome::FailNoPath => "fail_no_path",
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ExecutorConfig {
    pub method: Method,
    pub obs_horizon: usize,
    pub action_horizon: usize,
    pub exec_horizon: usize,
    pub waypoint_tolerance: f64,
    pub waypoint_heading_tolerance: f64,
    pub success_tolerance: f64,
    pub stuck_window: f64,
    pub stuck_epsilon: f64,
    pub max_steps: usize,
    pub max_stuck_skips: usize,
    pub projection_radius: f64,
    pub command_tolerance: f64,
    pub angular_weight: f64,
    pub downsample_factor: usize,
    pub rrt: RrtParams,
}

impl ExecutorConfig {
    pub fn from_config(cfg: &Config, method: Method) -> Self {
        let e = &cfg.executor;
        ExecutorConfig {
            method,
            obs_horizon: cfg.policy.obs_horizon,
            action_horizon: cfg.policy.action_horizon,
            exec_horizon: e.exec_horizon,
            waypoint_tolerance: e.waypoint_tolerance,
            waypoint_heading_tolerance: e.waypoint_heading_tolerance_deg.to_radians(),
            success_tolerance: e.success_tolerance,
            stuck_window: e.stuck_window,
            stuck_epsilon: e.stuck_epsilon,
            max_steps: e.max_steps,
            max_stuck_skips: e.max_stuck_skips,
            projection_radius: e.projection_radius,
            command_tolerance: e.command_tolerance,
            angular_weight: cfg.policy.angular_weight,
            downsample_factor: cfg.planner.downsample_factor,
            rrt: cfg.planner.rrt.clone(),
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.exec_horizon == 0 || self.exec_horizon > self.action_horizon {
            return Err(Error::Config(format!(
                "exec horizon {} must lie in 1..={}",
                self.exec_horizon, self.action_horizon
            )));
        }
        if !(self.waypoint_tolerance > 0.0 && self.success_tolerance > 0.0 && self.stuck_window > 0.0) {
            return Err(Error::Config("executor tolerances must be positive".into()));
        }
        Ok(())
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EpisodeResult {
    pub outcome: Outcome,
    pub steps: usize,
    /// State after reset followed by the state after every step.
    pub path: Vec<Sample>,
    /// `grasp_held` for each entry of `path`.
    pub held: Vec<bool>,
    /// Command issued at each step; `commands[i]` moved `path[i]` to `path[i + 1]`.
    pub commands: Vec<Pose2>,
    pub waypoints_reached: usize,
    pub waypoints_total: usize,
}

impl EpisodeResult {
    pub fn final_object(&self) -> Pose2 {
        self.path.last().map(|s| s.object).unwrap_or_default()
    }

    pub fn to_trajectory(&self, seed: u64, sim_hash: &str, start: &Pose2, goal: &Pose2) -> Trajectory {
        Trajectory {
            meta: TrajectoryMeta { seed, sim_hash: sim_hash.to_string(), start: *start, goal: *goal },
            samples: self.path.clone(),
        }
    }
}

/// Final success: chair position within `tol` of the goal, heading ignored.
pub fn reached(pose: &Pose2, goal: &Pose2, tol: f64) -> bool {
    pose.position_distance(goal) <= tol
}

/// Intermediate waypoint: position within `tol` and heading within `heading_tol`.
pub fn reached_waypoint(pose: &Pose2, goal: &Pose2, tol: f64, heading_tol: f64) -> bool {
    pose.position_distance(goal) <= tol && pose.heading_distance(goal) <= heading_tol
}

/// True when the chair moved less than `epsilon` (pose distance) from the first entry of
/// the trailing window. `window` counts steps; shorter logs are never stuck.
pub fn stuck(log: &[Sample], window: usize, epsilon: f64, angular_weight: f64) -> bool {
    if window == 0 || log.len() <= window {
        return false;
    }
    let tail = &log[log.len() - window - 1..];
    let last = tail.last().unwrap().object;
    tail.iter().map(|s| pose_distance(&s.object, &last, angular_weight)).fold(0.0, f64::max) < epsilon
}

/// Shared, read-only resources for running episodes.
pub struct EpisodeContext<'a> {
    pub sim: &'a Simulator<'a>,
    /// Roadmap for the planner-based methods.
    pub roadmap: Option<&'a Roadmap>,
    /// Policy for the diffusion methods.
    pub policy: Option<&'a DiffusionPolicy>,
}

/// Command generator for one method.
enum Driver<'a> {
    Diffusion { policy: &'a DiffusionPolicy, rng: ChaCha8Rng },
    Follow { poses: Vec<Pose2>, cursor: usize },
    Rrt { planner: RrtPlanner<'a>, poses: Vec<Pose2>, cursor: usize, seed: u64, plans: u64 },
}

struct Run<'c, 'a> {
    cfg: &'c ExecutorConfig,
    ctx: &'c EpisodeContext<'a>,
    goal: Pose2,
    /// Remaining waypoints; the last one is the final goal.
    queue: Vec<PosePair>,
    /// Path index of each waypoint, for planner-following skip-ahead.
    queue_index: Vec<usize>,
    head: usize,
    state: SimState,
    out: EpisodeResult,
    window: usize,
    /// Log index from which stuck detection looks back.
    stuck_from: usize,
    skips: usize,
}

impl Run<'_, '_> {
    fn current(&self) -> &PosePair {
        &self.queue[self.head]
    }

    fn at_final(&self) -> bool {
        self.head + 1 == self.queue.len()
    }

    fn advance_waypoint(&mut self) {
        self.head += 1;
        self.stuck_from = self.out.path.len() - 1;
    }

    /// Executes one command and applies the per-step checks.
    fn step(&mut self, command: Pose2) -> Option<Outcome> {
        debug_assert!(self.state.grasp_held, "never command a released chair");
        self.state = self.ctx.sim.step(&self.state, &command);
        self.out.steps += 1;
        self.out.commands.push(command);
        self.out.path.push(Sample { time: self.state.time, robot: self.state.robot, object: self.state.object });
        self.out.held.push(self.state.grasp_held);
        let object = self.state.object;
        // A chair that arrives counts as delivered even if the grasp slips on that step.
        if reached(&object, &self.goal, self.cfg.success_tolerance) {
            return Some(Outcome::Success);
        }
        if !self.state.grasp_held {
            return Some(Outcome::FailLostGrasp);
        }
        while !self.at_final()
            && reached_waypoint(
                &object,
                &self.current().object,
                self.cfg.waypoint_tolerance,
                self.cfg.waypoint_heading_tolerance,
            )
        {
            self.out.waypoints_reached += 1;
            self.skips = 0;
            self.advance_waypoint();
        }
        if stuck(&self.out.path[self.stuck_from..], self.window, self.cfg.stuck_epsilon, self.cfg.angular_weight) {
            if self.at_final() || self.skips >= self.cfg.max_stuck_skips {
                return Some(Outcome::FailStuck);
            }
            self.skips += 1;
            self.advance_waypoint();
        }
        if self.out.steps >= self.cfg.max_steps {
            return Some(Outcome::FailTimeout);
        }
        None
    }

    fn history(&self) -> (Vec<Pose2>, Vec<Pose2>) {
        let h = self.cfg.obs_horizon;
        let log = &self.out.path;
        // Before enough history exists, the earliest pose is repeated.
        let idx = |j: usize| (log.len() + j).saturating_sub(h).min(log.len() - 1);
        let robot = (0..h).map(|j| log[idx(j)].robot).collect();
        let object = (0..h).map(|j| log[idx(j)].object).collect();
        (robot, object)
    }

    fn diffusion_chunk(&self, policy: &DiffusionPolicy, rng: &mut ChaCha8Rng) -> Result<Vec<Pose2>> {
        let frame = self.current().object;
        let (robot, object) = self.history();
        let robot = transform_to_frame(&robot, &frame);
        let object = transform_to_frame(&object, &frame);
        let actions = if self.cfg.method == Method::GlobalDiffusion {
            let map = self.ctx.sim.map();
            let radius = self.cfg.projection_radius;
            let mut project = |poses: &mut [Pose2]| project_out_of_obstacles(map, &frame, poses, radius);
            policy.sample(&robot, &object, rng, Some(&mut project))?
        } else {
            policy.sample(&robot, &object, rng, None)?
        };
        Ok(actions.iter().take(self.cfg.exec_horizon).map(|a| frame.compose(a)).collect())
    }

    /// Follow cursor after a stuck-skip: never behind the start of the current segment.
    fn skip_cursor(&self, cursor: usize) -> usize {
        match self.head {
            0 => cursor,
            h => cursor.max(self.queue_index[h - 1] + 1),
        }
    }
}

/// Pushes goal-relative robot positions that fall in obstacle cells to the nearest free
/// cell within `radius`; poses with no free cell in range are left alone.
pub fn project_out_of_obstacles(map: &crate::map::OccupancyMap, frame: &Pose2, poses: &mut [Pose2], radius: f64) {
    for p in poses.iter_mut() {
        let g = frame.compose(p);
        if !map.point_occupied(g.x, g.y) {
            continue;
        }
        if let Some((x, y)) = map.nearest_free(g.x, g.y, radius) {
            *p = Pose2::new(x, y, g.theta).relative_to(frame);
        }
    }
}

/// Runs one episode of `cfg.method` moving the chair from `start` to `goal`.
///
/// Planning failures are reported as [`Outcome::FailNoPath`] with no steps; snapping
/// failures and missing resources are errors.
pub fn run_episode(
    cfg: &ExecutorConfig,
    ctx: &EpisodeContext<'_>,
    start: &Pose2,
    goal: &Pose2,
    seed: u64,
) -> Result<EpisodeResult> {
    cfg.validate()?;
    let sim = ctx.sim;
    let robot = sim.params().robot_for_object(start);
    let state = sim.reset(robot, *start, seed)?;
    let mut out = EpisodeResult {
        outcome: Outcome::FailTimeout,
        steps: 0,
        path: vec![Sample { time: state.time, robot: state.robot, object: state.object }],
        held: vec![state.grasp_held],
        commands: Vec::new(),
        waypoints_reached: 0,
        waypoints_total: 0,
    };
    if reached(start, goal, cfg.success_tolerance) {
        out.outcome = Outcome::Success;
        return Ok(out);
    }

    let final_pair = PosePair { robot: sim.params().robot_for_object(goal), object: *goal };
    let (queue, queue_index, path_robot) = if cfg.method.uses_planner() {
        let roadmap = ctx.roadmap.ok_or_else(|| Error::Config(format!("{} needs a roadmap", cfg.method)))?;
        let fp = sim.checker().footprint();
        let path = match roadmap.plan(fp, start, goal) {
            Ok(p) => p,
            Err(Error::NoPath { .. }) => {
                out.outcome = Outcome::FailNoPath;
                return Ok(out);
            }
            Err(e) => return Err(e),
        };
        let f = cfg.downsample_factor.max(1);
        let mut queue = sample_intermediate_goals(&path, f);
        let n = path.len();
        let mut index: Vec<usize> = (1..=n / f).map(|k| k * f - 1).collect();
        if n % f != 0 {
            index.push(n - 1);
        }
        // The last waypoint is the exact goal rather than its snapped node.
        *queue.last_mut().unwrap() = final_pair;
        let robots: Vec<Pose2> = path.poses.iter().map(|p| p.robot).collect();
        (queue, index, robots)
    } else {
        (vec![final_pair], vec![0], Vec::new())
    };

    let mut driver = match cfg.method {
        Method::PoPi | Method::LocalDiffusionOnly | Method::GlobalDiffusion => {
            let policy = ctx.policy.ok_or_else(|| Error::Config(format!("{} needs a trained policy", cfg.method)))?;
            let want = cfg.method.policy_kind().unwrap();
            if policy.header.kind != want {
                return Err(Error::Config(format!("{} needs a {want:?} policy", cfg.method)));
            }
            if policy.header.obs_horizon != cfg.obs_horizon || policy.header.action_horizon != cfg.action_horizon {
                return Err(Error::Config("policy horizons differ from the executor config".into()));
            }
            Driver::Diffusion { policy, rng: ChaCha8Rng::seed_from_u64(seed ^ 0xd1ff_u64.rotate_left(40)) }
        }
        Method::AStarFollow => Driver::Follow { poses: path_robot, cursor: 0 },
        Method::RrtFollow => Driver::Rrt {
            planner: RrtPlanner::new(sim.map(), *sim.checker().footprint(), cfg.rrt.clone()),
            poses: Vec::new(),
            cursor: 0,
            seed,
            plans: 0,
        },
    };

    out.waypoints_total = queue.len();
    let window = (cfg.stuck_window / sim.params().dt).round() as usize;
    let mut run =
        Run { cfg, ctx, goal: *goal, queue, queue_index, head: 0, state, out, window, stuck_from: 0, skips: 0 };

    let outcome = loop {
        let outcome = match &mut driver {
            Driver::Diffusion { policy, rng } => {
                let chunk = run.diffusion_chunk(policy, rng)?;
                chunk.into_iter().find_map(|c| run.step(c))
            }
            Driver::Follow { poses, cursor } => {
                *cursor = run.skip_cursor(*cursor);
                let target = poses[(*cursor).min(poses.len() - 1)];
                let result = run.step(target);
                if run.state.robot.position_distance(&target) <= cfg.command_tolerance
                    && run.state.robot.heading_distance(&target) <= cfg.command_tolerance
                {
                    *cursor += 1;
                }
                result
            }
            Driver::Rrt { planner, poses, cursor, seed, plans } => {
                if *cursor >= poses.len() {
                    let wp = run.current().object;
                    *plans += 1;
                    let plan_seed = seed.wrapping_mul(0x9e37_79b9_7f4a_7c15).wrapping_add(*plans);
                    *poses = planner.plan(&run.state.robot, &run.state.object, &wp, plan_seed, cfg.rrt.max_iters);
                    // The first pose is the current one.
                    *cursor = 1.min(poses.len());
                    if poses.len() <= 1 {
                        // No usable plan: hold position and let stuck detection move on.
                        poses.clear();
                        *cursor = 0;
                    }
                }
                let (target, planned) = match poses.get(*cursor) {
                    Some(p) => (*p, true),
                    None => (run.state.robot, false),
                };
                let head = run.head;
                let result = run.step(target);
                if planned
                    && run.state.robot.position_distance(&target) <= cfg.command_tolerance
                    && run.state.robot.heading_distance(&target) <= cfg.command_tolerance
                {
                    *cursor += 1;
                }
                if run.head != head {
                    // New waypoint: plan toward it next step.
                    poses.clear();
                    *cursor = 0;
                }
                result
            }
        };
        if let Some(o) = outcome {
            break o;
        }
    };
    run.out.outcome = outcome;
    Ok(run.out)
}

/// Checks a logged episode against its claimed outcome: success exactly when the final
/// chair pose is within `success_tolerance`, and no command after the grasp was lost.
pub fn audit_episode(result: &EpisodeResult, goal: &Pose2, success_tolerance: f64) -> Result<()> {
    if result.path.len() != result.steps + 1
        || result.commands.len() != result.steps
        || result.held.len() != result.path.len()
    {
        return Err(Error::Invariant("episode log lengths are inconsistent".into()));
    }
    let ok = reached(&result.final_object(), goal, success_tolerance);
    if ok != (result.outcome == Outcome::Success) {
        return Err(Error::Invariant(format!(
            "outcome {:?} but final distance {:.3} m",
            result.outcome,
            result.final_object().position_distance(goal)
        )));
    }
    if let Some(i) = (0..result.commands.len()).find(|&i| !result.held[i]) {
        return Err(Error::Invariant(format!("command {i} issued after the grasp was lost")));
    }
    Ok(())
}
