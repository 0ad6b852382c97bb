//! Scripted expert demonstrations and the trajectory text format.

use std::fmt::Write as _;
use std::path::Path;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::config::{ExpertParams, PlannerParams};
use crate::error::{Error, Result};
use crate::geometry::{angle_diff, pose_distance, Pose2};
use crate::layouts::Region;
use crate::map::{CollisionChecker, FootprintModel, OccupancyMap};
use crate::planner::{PlannedPath, Roadmap};
use crate::sim::{SimState, Simulator};

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Sample {
    pub time: f64,
    pub robot: Pose2,
    pub object: Pose2,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TrajectoryMeta {
    pub seed: u64,
    pub sim_hash: String,
    pub start: Pose2,
    pub goal: Pose2,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Trajectory {
    pub meta: TrajectoryMeta,
    pub samples: Vec<Sample>,
}

const HEADER: &str = "# popi-trajectory 1";

fn pose_fields(p: &Pose2) -> String {
    format!("{} {} {}", p.x, p.y, p.theta)
}

fn parse_pose(fields: &[&str], line: usize) -> Result<Pose2> {
    let v: Vec<f64> = fields
        .iter()
        .map(|f| f.parse::<f64>().map_err(|e| Error::parse(line, format!("{f:?}: {e}"))))
        .collect::<Result<_>>()?;
    if v.len() != 3 {
        return Err(Error::parse(line, "expected three pose fields"));
    }
    // Stored headings are already normalized; keep the bits as written.
    Ok(Pose2 { x: v[0], y: v[1], theta: v[2] })
}

impl Trajectory {
    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    pub fn duration(&self) -> f64 {
        match (self.samples.first(), self.samples.last()) {
            (Some(a), Some(b)) => b.time - a.time,
            _ => 0.0,
        }
    }

    /// Distance travelled by the chair.
    pub fn object_path_length(&self) -> f64 {
        self.samples.windows(2).map(|w| w[0].object.position_distance(&w[1].object)).sum()
    }

    pub fn validate(&self) -> Result<()> {
        if self.samples.is_empty() {
            return Err(Error::Invariant("trajectory is empty".into()));
        }
        if self.samples.windows(2).any(|w| !(w[1].time > w[0].time)) {
            return Err(Error::Invariant("trajectory times must increase strictly".into()));
        }
        Ok(())
    }

    pub fn to_text(&self) -> String {
        let m = &self.meta;
        let mut out = String::new();
        writeln!(out, "{HEADER}").unwrap();
        writeln!(out, "# seed {}", m.seed).unwrap();
        writeln!(out, "# sim {}", m.sim_hash).unwrap();
        writeln!(out, "# start {}", pose_fields(&m.start)).unwrap();
        writeln!(out, "# goal {}", pose_fields(&m.goal)).unwrap();
        writeln!(out, "# t x_r y_r th_r x_o y_o th_o").unwrap();
        for s in &self.samples {
            writeln!(out, "{} {} {}", s.time, pose_fields(&s.robot), pose_fields(&s.object)).unwrap();
        }
        out
    }

    pub fn parse(text: &str) -> Result<Self> {
        let mut lines = text.lines().enumerate();
        match lines.next() {
            Some((_, l)) if l.trim_end() == HEADER => {}
            _ => return Err(Error::parse(1, "missing trajectory header")),
        }
        let (mut seed, mut sim_hash, mut start, mut goal) = (None, None, None, None);
        let mut samples = Vec::new();
        for (i, raw) in lines {
            let n = i + 1;
            let line = raw.trim_end();
            if line.is_empty() {
                continue;
            }
            if let Some(rest) = line.strip_prefix("# ") {
                let fields: Vec<&str> = rest.split_whitespace().collect();
                match fields.first().copied() {
                    Some("seed") if fields.len() == 2 => {
                        seed = Some(fields[1].parse::<u64>().map_err(|e| Error::parse(n, e.to_string()))?)
                    }
                    Some("sim") if fields.len() == 2 => sim_hash = Some(fields[1].to_string()),
                    Some("start") => start = Some(parse_pose(&fields[1..], n)?),
                    Some("goal") => goal = Some(parse_pose(&fields[1..], n)?),
                    _ => {}
                }
                continue;
            }
            let fields: Vec<&str> = line.split_whitespace().collect();
            if fields.len() != 7 {
                return Err(Error::parse(n, format!("expected 7 fields, got {}", fields.len())));
            }
            let time = fields[0].parse::<f64>().map_err(|e| Error::parse(n, e.to_string()))?;
            samples.push(Sample { time, robot: parse_pose(&fields[1..4], n)?, object: parse_pose(&fields[4..7], n)? });
        }
        let missing = |what: &str| Error::parse(0, format!("missing metadata field {what}"));
        let traj = Trajectory {
            meta: TrajectoryMeta {
                seed: seed.ok_or_else(|| missing("seed"))?,
                sim_hash: sim_hash.ok_or_else(|| missing("sim"))?,
                start: start.ok_or_else(|| missing("start"))?,
                goal: goal.ok_or_else(|| missing("goal"))?,
            },
            samples,
        };
        traj.validate()?;
        Ok(traj)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::parse(&text)
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        std::fs::write(path, self.to_text()).map_err(|e| Error::io(path, e))
    }
}

/// Stable hash of a demonstration set, used to key snippet caches.
pub fn demo_set_hash(demos: &[Trajectory]) -> String {
    let texts: Vec<String> = demos.iter().map(Trajectory::to_text).collect();
    crate::config::hash_json(&texts)
}

/// Loads every `*.traj` file in a directory, sorted by file name.
pub fn load_demo_dir(dir: impl AsRef<Path>) -> Result<Vec<Trajectory>> {
    let dir = dir.as_ref();
    let mut paths: Vec<_> = std::fs::read_dir(dir)
        .map_err(|e| Error::io(dir, e))?
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| p.extension().is_some_and(|x| x == "traj"))
        .collect();
    paths.sort();
    paths.iter().map(Trajectory::load).collect()
}

pub fn save_demo_dir(dir: impl AsRef<Path>, demos: &[Trajectory]) -> Result<()> {
    let dir = dir.as_ref();
    std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    for (i, d) in demos.iter().enumerate() {
        d.save(dir.join(format!("demo_{i:03}.traj")))?;
    }
    Ok(())
}

/// Roadmap the expert plans on: the regular grid with the footprint inflated by the
/// expert's clearance, so demonstrations keep some distance from furniture.
pub fn expert_roadmap(
    map: &OccupancyMap,
    fp: &FootprintModel,
    planner: &PlannerParams,
    expert: &ExpertParams,
) -> Result<Roadmap> {
    Roadmap::build(map, &fp.inflated(expert.clearance), planner.xy_step, planner.theta_step(), planner.rotation_weight)
}

/// Pure-pursuit tracker of a planned chair path with rate limits and correlated noise.
pub struct Expert<'p> {
    params: &'p ExpertParams,
    path: &'p PlannedPath,
    /// Cumulative pose distance along the path.
    arc: Vec<f64>,
    cursor: usize,
    angular_weight: f64,
    noise: (f64, f64),
}

impl<'p> Expert<'p> {
    pub fn new(params: &'p ExpertParams, path: &'p PlannedPath, angular_weight: f64) -> Self {
        let mut arc = vec![0.0];
        for w in path.poses.windows(2) {
            let d = pose_distance(&w[0].object, &w[1].object, angular_weight);
            arc.push(arc.last().unwrap() + d);
        }
        Expert { params, path, arc, cursor: 0, angular_weight, noise: (0.0, 0.0) }
    }

    /// Lookahead chair pose on the path. The lookahead shrinks when heading straight for
    /// it would sweep the system through an obstacle.
    fn target(&mut self, state: &SimState, checker: &CollisionChecker<'_>) -> Pose2 {
        let poses = &self.path.poses;
        let object = state.object;
        // Search a short window ahead of the cursor so progress never runs backwards.
        let end = poses.len().min(self.cursor + 40);
        let mut best = self.cursor;
        let mut best_d = f64::INFINITY;
        for (i, pp) in poses.iter().enumerate().take(end).skip(self.cursor) {
            let d = pose_distance(&pp.object, &object, self.angular_weight);
            if d < best_d {
                best_d = d;
                best = i;
            }
        }
        self.cursor = best;
        let robot_from_object = state.robot.relative_to(&object);
        for div in [1.0, 2.0, 4.0] {
            let want = self.arc[best] + self.params.lookahead / div;
            let j = self.arc[best..].iter().position(|&a| a >= want).map_or(poses.len() - 1, |k| best + k);
            if sweep_free(checker, &object, &poses[j].object, &robot_from_object) {
                return poses[j].object;
            }
        }
        poses[(best + 1).min(poses.len() - 1)].object
    }

    /// Next robot command: step the chair toward the lookahead pose under speed and
    /// turn-rate limits, then place the robot at its current offset from that chair pose.
    pub fn command(&mut self, state: &SimState, checker: &CollisionChecker<'_>, dt: f64, rng: &mut impl Rng) -> Pose2 {
        let p = self.params;
        let target = self.target(state, checker);
        let object = state.object;

        let heading_err = angle_diff(target.theta, object.theta);
        let slow = p.slowdown_heading_deg.to_radians();
        let speed = (p.cruise_speed * (1.0 - heading_err.abs() / slow)).max(p.min_speed);
        let (dx, dy) = (target.x - object.x, target.y - object.y);
        let dist = dx.hypot(dy);
        let step = (speed * dt).min(dist);
        let (ux, uy) = if dist > 1e-12 { (dx / dist, dy / dist) } else { (0.0, 0.0) };
        let max_turn = p.turn_rate_limit * dt;
        let turn = (p.heading_gain * heading_err * dt).clamp(-max_turn, max_turn);
        let next_object = Pose2::new(object.x + step * ux, object.y + step * uy, object.theta + turn);

        // Ornstein-Uhlenbeck positional noise with stationary deviation `noise_sigma`.
        let a = (-dt / p.noise_correlation_time).exp();
        let b = p.noise_sigma * (1.0 - a * a).sqrt();
        let n1: f64 = rng.sample(StandardNormal);
        let n2: f64 = rng.sample(StandardNormal);
        let prev = self.noise;
        self.noise = (a * prev.0 + b * n1, a * prev.1 + b * n2);

        // Commands are relative to the current state, so only the change of the offset is
        // applied; the accumulated deviation from the noise-free track is the OU process.
        let robot_from_object = state.robot.relative_to(&object);
        let cmd = next_object.compose(&robot_from_object);
        Pose2::new(cmd.x + self.noise.0 - prev.0, cmd.y + self.noise.1 - prev.1, cmd.theta)
    }
}

/// Straight chair motion from `a` to `b`, with the robot at a fixed offset, stays free.
fn sweep_free(checker: &CollisionChecker<'_>, a: &Pose2, b: &Pose2, robot_from_object: &Pose2) -> bool {
    let dth = angle_diff(b.theta, a.theta);
    let span = a.position_distance(b).max(1.3 * dth.abs());
    let n = (span / 0.05).ceil().max(1.0) as usize;
    (1..=n).all(|i| {
        let s = i as f64 / n as f64;
        let p = Pose2::new(a.x + s * (b.x - a.x), a.y + s * (b.y - a.y), a.theta + s * dth);
        !checker.pair_collides(&p.compose(robot_from_object), &p)
    })
}

/// Why a demonstration attempt was rejected.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Rejection {
    LostGrasp,
    Timeout,
}

/// One expert rollout along `path`; `Err` reports why it failed.
pub fn rollout_expert(
    sim: &Simulator<'_>,
    params: &ExpertParams,
    path: &PlannedPath,
    angular_weight: f64,
    start: &Pose2,
    goal: &Pose2,
    seed: u64,
) -> Result<std::result::Result<Trajectory, Rejection>> {
    let robot = sim.params().robot_for_object(start);
    let mut state = sim.reset(robot, *start, seed)?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0x5eed_0f_e4be_47);
    let mut expert = Expert::new(params, path, angular_weight);
    let dt = sim.params().dt;
    let mut samples = vec![Sample { time: state.time, robot: state.robot, object: state.object }];
    let mut settle = 0usize;
    for _ in 0..params.max_steps {
        let done = state.object.position_distance(goal) <= params.goal_tolerance;
        if done {
            settle += 1;
            if settle > params.settle_steps {
                break;
            }
        }
        let cmd = if done { state.robot } else { expert.command(&state, sim.checker(), dt, &mut rng) };
        state = sim.step(&state, &cmd);
        if !state.grasp_held {
            return Ok(Err(Rejection::LostGrasp));
        }
        samples.push(Sample { time: state.time, robot: state.robot, object: state.object });
    }
    if settle == 0 {
        return Ok(Err(Rejection::Timeout));
    }
    Ok(Ok(Trajectory {
        meta: TrajectoryMeta { seed, sim_hash: sim.params().content_hash(), start: *start, goal: *goal },
        samples,
    }))
}

/// Plans with A* and retries the expert with fresh seeds until one attempt succeeds.
pub fn generate_demo(
    sim: &Simulator<'_>,
    roadmap: &Roadmap,
    params: &ExpertParams,
    angular_weight: f64,
    start: &Pose2,
    goal: &Pose2,
    rng_seed: u64,
) -> Result<Trajectory> {
    let fp = sim.checker().footprint();
    let path = roadmap.plan(fp, start, goal)?;
    let mut reasons = Vec::new();
    for attempt in 0..params.max_attempts.max(1) {
        let seed = rng_seed.wrapping_add(attempt as u64 * 0x9e37_79b9);
        match rollout_expert(sim, params, &path, angular_weight, start, goal, seed)? {
            Ok(t) => return Ok(t),
            Err(r) => reasons.push(r),
        }
    }
    Err(Error::Demo(format!(
        "no successful demonstration from {start} to {goal} in {} attempts ({reasons:?})",
        reasons.len()
    )))
}

/// `n` demonstrations between distinct regions. Start/goal pairs whose chair poses do not
/// snap onto the roadmap, or whose route is shorter than `min_length`, are redrawn.
pub fn generate_demo_set(
    sim: &Simulator<'_>,
    roadmap: &Roadmap,
    params: &ExpertParams,
    angular_weight: f64,
    regions: &[Region],
    n: usize,
    min_length: f64,
    rng_seed: u64,
) -> Result<Vec<Trajectory>> {
    if n > 0 && regions.len() < 2 {
        return Err(Error::Demo("need at least two regions".into()));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(rng_seed);
    let fp = *sim.checker().footprint();
    let mut demos = Vec::with_capacity(n);
    let mut draws = 0usize;
    while demos.len() < n {
        draws += 1;
        if draws > 200 * n.max(1) {
            return Err(Error::Demo(format!("regions exhausted after {draws} draws")));
        }
        let a = rng.gen_range(0..regions.len());
        let mut b = rng.gen_range(0..regions.len() - 1);
        if b >= a {
            b += 1;
        }
        let start = regions[a].sample(&mut rng);
        let goal = regions[b].sample(&mut rng);
        let seed: u64 = rng.gen();
        let (Some(s), Some(g)) = (roadmap.snap(&start), roadmap.snap(&goal)) else {
            continue;
        };
        // Start exactly on a node so the initial state is known to be collision free.
        let (start, goal) = (roadmap.node(s), roadmap.node(g));
        let robot = sim.params().robot_for_object(&start);
        if sim.checker().pair_collides(&robot, &start) {
            continue;
        }
        let path = match roadmap.plan(&fp, &start, &goal) {
            Ok(p) => p,
            Err(Error::NoPath { .. }) => continue,
            Err(e) => return Err(e),
        };
        if path.translation_length() < min_length {
            continue;
        }
        match generate_demo(sim, roadmap, params, angular_weight, &start, &goal, seed) {
            Ok(t) => demos.push(t),
            Err(Error::Demo(_)) => continue,
            Err(e) => return Err(e),
        }
    }
    Ok(demos)
}
