//! Online RRT over chair poses with the robot held at its current offset.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::config::RrtParams;
use crate::geometry::{angle_diff, pose_distance, Pose2};
use crate::map::{CollisionChecker, FootprintModel, OccupancyMap};

pub struct RrtPlanner<'a> {
    checker: CollisionChecker<'a>,
    params: RrtParams,
}

impl<'a> RrtPlanner<'a> {
    pub fn new(map: &'a OccupancyMap, fp: FootprintModel, params: RrtParams) -> Self {
        RrtPlanner { checker: CollisionChecker::new(map, fp), params }
    }

    pub fn params(&self) -> &RrtParams {
        &self.params
    }

    fn pose_free(&self, object: &Pose2, robot_from_object: &Pose2) -> bool {
        !self.checker.pair_collides(&object.compose(robot_from_object), object)
    }

    /// Interpolated collision check with spacing no coarser than half a map cell.
    fn segment_free(&self, a: &Pose2, b: &Pose2, robot_from_object: &Pose2) -> bool {
        let res = self.checker.map().resolution() / 2.0;
        // Rotation sweeps the robot's far corner, ~1.3 m from the chair center.
        let reach = self.checker.footprint().center_offset + self.checker.footprint().robot_length / 2.0;
        let dth = angle_diff(b.theta, a.theta);
        let span = a.position_distance(b).max(dth.abs() * reach);
        let n = (span / res).ceil().max(1.0) as usize;
        (1..=n).all(|i| {
            let s = i as f64 / n as f64;
            let p = Pose2::new(a.x + s * (b.x - a.x), a.y + s * (b.y - a.y), a.theta + s * dth);
            self.pose_free(&p, robot_from_object)
        })
    }

    fn at_goal(&self, p: &Pose2, goal: &Pose2) -> bool {
        p.position_distance(goal) <= self.params.goal_tolerance
            && p.heading_distance(goal) <= self.params.goal_heading_tolerance_deg.to_radians()
    }

    fn steer(&self, from: &Pose2, to: &Pose2) -> Pose2 {
        let (dx, dy) = (to.x - from.x, to.y - from.y);
        let d = dx.hypot(dy);
        let scale = if d > self.params.step_length { self.params.step_length / d } else { 1.0 };
        let max_rot = self.params.step_rotation_deg.to_radians();
        let dth = angle_diff(to.theta, from.theta).clamp(-max_rot, max_rot);
        Pose2::new(from.x + scale * dx, from.y + scale * dy, from.theta + dth)
    }

    /// Robot pose commands from the current robot pose to one that places the chair at
    /// `goal`. Empty when no path is found within `max_iters`.
    pub fn plan(&self, robot: &Pose2, object: &Pose2, goal: &Pose2, seed: u64, max_iters: usize) -> Vec<Pose2> {
        let robot_from_object = robot.relative_to(object);
        if self.at_goal(object, goal) {
            return vec![*robot];
        }
        if !self.pose_free(goal, &robot_from_object) {
            return Vec::new();
        }
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let (w, h) = self.checker.map().extent();
        let origin = self.checker.map().origin();
        let lo_goal = goal.relative_to(&origin);
        let lo_start = object.relative_to(&origin);
        let m = self.params.sample_margin;
        let x0 = (lo_goal.x.min(lo_start.x) - m).max(0.0);
        let x1 = (lo_goal.x.max(lo_start.x) + m).min(w);
        let y0 = (lo_goal.y.min(lo_start.y) - m).max(0.0);
        let y1 = (lo_goal.y.max(lo_start.y) + m).min(h);

        let mut nodes = vec![*object];
        let mut parent = vec![usize::MAX];
        let mut reached = None;
        for _ in 0..max_iters {
            let sample = if rng.gen::<f64>() < self.params.goal_bias {
                *goal
            } else {
                let local = Pose2::new(
                    rng.gen_range(x0..x1.max(x0 + 1e-9)),
                    rng.gen_range(y0..y1.max(y0 + 1e-9)),
                    rng.gen_range(-std::f64::consts::PI..std::f64::consts::PI),
                );
                origin.compose(&local)
            };
            let w = self.params.angular_weight;
            let near = (0..nodes.len())
                .min_by(|&a, &b| pose_distance(&nodes[a], &sample, w).total_cmp(&pose_distance(&nodes[b], &sample, w)))
                .expect("tree is never empty");
            let new = self.steer(&nodes[near], &sample);
            if !self.segment_free(&nodes[near], &new, &robot_from_object) {
                continue;
            }
            nodes.push(new);
            parent.push(near);
            let idx = nodes.len() - 1;
            if self.at_goal(&new, goal) {
                reached = Some(idx);
                break;
            }
            // Try to connect straight to the goal.
            if new.position_distance(goal) <= 2.0 * self.params.step_length
                && self.segment_free(&new, goal, &robot_from_object)
            {
                nodes.push(*goal);
                parent.push(idx);
                reached = Some(nodes.len() - 1);
                break;
            }
        }
        let Some(mut cur) = reached else {
            return Vec::new();
        };
        let mut chain = vec![nodes[cur]];
        while parent[cur] != usize::MAX {
            cur = parent[cur];
            chain.push(nodes[cur]);
        }
        chain.reverse();
        let smoothed = self.shortcut(&chain, &robot_from_object);
        smoothed.iter().map(|p| p.compose(&robot_from_object)).collect()
    }

    /// Greedy shortcutting: from each kept pose jump to the farthest visible one.
    fn shortcut(&self, chain: &[Pose2], robot_from_object: &Pose2) -> Vec<Pose2> {
        let mut out = vec![chain[0]];
        let mut i = 0;
        while i + 1 < chain.len() {
            let mut j = chain.len() - 1;
            while j > i + 1 && !self.segment_free(&chain[i], &chain[j], robot_from_object) {
                j -= 1;
            }
            out.push(chain[j]);
            i = j;
        }
        out
    }
}

pub fn plan_rrt_local(
    map: &OccupancyMap,
    fp: &FootprintModel,
    params: &RrtParams,
    robot: &Pose2,
    object: &Pose2,
    goal: &Pose2,
    rng_seed: u64,
    max_iters: usize,
) -> Vec<Pose2> {
    RrtPlanner::new(map, *fp, params.clone()).plan(robot, object, goal, rng_seed, max_iters)
}
