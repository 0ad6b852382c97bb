//! Goal-relative training snippets cut from demonstrations, and their pose encoding.
//!
//! Each snippet pairs a start index `t'` with a later goal index `t`: the observation
//! window starts at `t'`, the action window follows it, both are clipped at `t` and
//! tail-padded by repeating the boundary pose, and everything is expressed in the frame
//! of the chair pose at `t`.

use std::io::{Read, Write};
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::demo::{demo_set_hash, Sample, Trajectory};
use crate::error::{Error, Result};
use crate::geometry::{pose_distance, transform_to_frame, Pose2};

/// Scalars per encoded pose.
pub const POSE_DIM: usize = 4;

/// `(x / scale, y / scale, cos θ, sin θ)`.
pub fn encode_pose(p: &Pose2, scale: f64) -> [f64; POSE_DIM] {
    let (s, c) = p.theta.sin_cos();
    [p.x / scale, p.y / scale, c, s]
}

pub fn decode_pose(v: &[f64], scale: f64) -> Pose2 {
    Pose2::new(v[0] * scale, v[1] * scale, v[3].atan2(v[2]))
}

pub fn encode_poses(poses: &[Pose2], scale: f64, out: &mut [f64]) {
    for (p, chunk) in poses.iter().zip(out.chunks_exact_mut(POSE_DIM)) {
        chunk.copy_from_slice(&encode_pose(p, scale));
    }
}

pub fn decode_poses(v: &[f64], scale: f64) -> Vec<Pose2> {
    v.chunks_exact(POSE_DIM).map(|c| decode_pose(c, scale)).collect()
}

/// Actions as offsets from `anchor` (same frame): `((x − x_a) / scale, (y − y_a) / scale,
/// cos Δθ, sin Δθ)`.
pub fn encode_actions(actions: &[Pose2], anchor: &Pose2, scale: f64, out: &mut [f64]) {
    for (p, chunk) in actions.iter().zip(out.chunks_exact_mut(POSE_DIM)) {
        let offset = Pose2::new(p.x - anchor.x, p.y - anchor.y, p.theta - anchor.theta);
        chunk.copy_from_slice(&encode_pose(&offset, scale));
    }
}

pub fn decode_actions(v: &[f64], anchor: &Pose2, scale: f64) -> Vec<Pose2> {
    v.chunks_exact(POSE_DIM)
        .map(|c| {
            let d = decode_pose(c, scale);
            Pose2::new(anchor.x + d.x, anchor.y + d.y, anchor.theta + d.theta)
        })
        .collect()
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Snippet {
    pub obs_robot: Vec<Pose2>,
    pub obs_object: Vec<Pose2>,
    pub actions: Vec<Pose2>,
    /// Observation entries first, then actions; `false` marks padding.
    pub pad_mask: Vec<bool>,
}

impl Snippet {
    /// Encoded observation context: robot history then chair history.
    pub fn encode_context(&self, scale: f64, out: &mut [f64]) {
        let split = self.obs_robot.len() * POSE_DIM;
        encode_poses(&self.obs_robot, scale, &mut out[..split]);
        encode_poses(&self.obs_object, scale, &mut out[split..]);
    }

    /// Encoded actions, anchored at the latest observed robot pose.
    pub fn encode_actions(&self, scale: f64, out: &mut [f64]) {
        encode_actions(&self.actions, self.obs_robot.last().unwrap(), scale, out);
    }
}

/// Which chair pose anchors the snippet frame.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum GoalMode {
    /// Every nearby later chair pose (distance-thresholded pairs).
    Local,
    /// The final chair pose of the demonstration, for every start index.
    Final,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct SnippetSpec {
    pub obs_horizon: usize,
    pub action_horizon: usize,
    pub distance: f64,
    pub angular_weight: f64,
    pub mode: GoalMode,
}

/// Builds the snippet for start index `start` and goal index `goal` (`start <= goal`).
pub fn build_snippet(samples: &[Sample], start: usize, goal: usize, h_o: usize, h_a: usize) -> Snippet {
    debug_assert!(start <= goal && goal < samples.len());
    let frame = samples[goal].object;
    let mut obs_robot = Vec::with_capacity(h_o);
    let mut obs_object = Vec::with_capacity(h_o);
    let mut pad_mask = Vec::with_capacity(h_o + h_a);
    for j in 0..h_o {
        let idx = (start + j).min(goal);
        obs_robot.push(samples[idx].robot);
        obs_object.push(samples[idx].object);
        pad_mask.push(start + j <= goal);
    }
    // Padding repeats the robot pose at the goal index, which is also the last observed
    // pose when the action window is fully padded.
    let mut actions = Vec::with_capacity(h_a);
    for j in 0..h_a {
        let idx = start + h_o + j;
        let real = idx <= goal;
        actions.push(samples[if real { idx } else { goal }].robot);
        pad_mask.push(real);
    }
    Snippet {
        obs_robot: transform_to_frame(&obs_robot, &frame),
        obs_object: transform_to_frame(&obs_object, &frame),
        actions: transform_to_frame(&actions, &frame),
        pad_mask,
    }
}

/// `(t', t)` pairs with `t' <= t` and robot pose distance below `distance`, ordered by `t`
/// then `t'`.
pub fn local_pairs(samples: &[Sample], distance: f64, angular_weight: f64) -> Vec<(usize, usize)> {
    let mut out = Vec::new();
    for t in 0..samples.len() {
        for tp in 0..=t {
            if pose_distance(&samples[tp].robot, &samples[t].robot, angular_weight) < distance {
                out.push((tp, t));
            }
        }
    }
    out
}

pub fn extract_snippets(traj: &Trajectory, distance: f64, h_o: usize, h_a: usize, angular_weight: f64) -> Vec<Snippet> {
    local_pairs(&traj.samples, distance, angular_weight)
        .into_iter()
        .map(|(tp, t)| build_snippet(&traj.samples, tp, t, h_o, h_a))
        .collect()
}

/// Snippets anchored at the demonstration's final chair pose, one per start index.
pub fn extract_global_snippets(traj: &Trajectory, h_o: usize, h_a: usize) -> Vec<Snippet> {
    let last = traj.samples.len() - 1;
    (0..=last).map(|tp| build_snippet(&traj.samples, tp, last, h_o, h_a)).collect()
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct SnippetRef {
    pub demo: u32,
    pub start: u32,
    pub goal: u32,
}

/// Snippets stored as index triples into a demonstration set and built on demand.
#[derive(Clone, Debug)]
pub struct SnippetSet {
    pub spec: SnippetSpec,
    pub demos: Vec<Trajectory>,
    pub refs: Vec<SnippetRef>,
}

const SNIPPET_MAGIC: &[u8; 8] = b"POPISNIP";
const SNIPPET_VERSION: u32 = 1;

impl SnippetSet {
    pub fn build(demos: Vec<Trajectory>, spec: SnippetSpec) -> Self {
        let mut refs = Vec::new();
        for (d, traj) in demos.iter().enumerate() {
            match spec.mode {
                GoalMode::Local => {
                    for (tp, t) in local_pairs(&traj.samples, spec.distance, spec.angular_weight) {
                        refs.push(SnippetRef { demo: d as u32, start: tp as u32, goal: t as u32 });
                    }
                }
                GoalMode::Final => {
                    let last = traj.samples.len() - 1;
                    for tp in 0..=last {
                        refs.push(SnippetRef { demo: d as u32, start: tp as u32, goal: last as u32 });
                    }
                }
            }
        }
        SnippetSet { spec, demos, refs }
    }

    pub fn len(&self) -> usize {
        self.refs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.refs.is_empty()
    }

    pub fn get(&self, i: usize) -> Snippet {
        let r = self.refs[i];
        build_snippet(
            &self.demos[r.demo as usize].samples,
            r.start as usize,
            r.goal as usize,
            self.spec.obs_horizon,
            self.spec.action_horizon,
        )
    }

    /// Cache key over the demonstration content and the snippet parameters.
    pub fn cache_key(demos: &[Trajectory], spec: &SnippetSpec) -> String {
        let mut h = Sha256::new();
        h.update(demo_set_hash(demos).as_bytes());
        h.update(serde_json::to_vec(spec).expect("spec serializes"));
        hex::encode(&h.finalize()[..8])
    }

    pub fn write_index(&self, mut w: impl Write) -> std::io::Result<()> {
        w.write_all(SNIPPET_MAGIC)?;
        w.write_all(&SNIPPET_VERSION.to_le_bytes())?;
        w.write_all(&(self.refs.len() as u64).to_le_bytes())?;
        for r in &self.refs {
            for v in [r.demo, r.start, r.goal] {
                w.write_all(&v.to_le_bytes())?;
            }
        }
        Ok(())
    }

    fn read_index(mut r: impl Read) -> std::io::Result<Vec<SnippetRef>> {
        let bad = |m: &str| std::io::Error::new(std::io::ErrorKind::InvalidData, m.to_string());
        let mut magic = [0u8; 8];
        r.read_exact(&mut magic)?;
        if &magic != SNIPPET_MAGIC {
            return Err(bad("not a snippet index"));
        }
        let mut b4 = [0u8; 4];
        r.read_exact(&mut b4)?;
        if u32::from_le_bytes(b4) != SNIPPET_VERSION {
            return Err(bad("unsupported snippet index version"));
        }
        let mut b8 = [0u8; 8];
        r.read_exact(&mut b8)?;
        let n = u64::from_le_bytes(b8) as usize;
        let mut refs = Vec::with_capacity(n);
        for _ in 0..n {
            let mut v = [0u32; 3];
            for slot in &mut v {
                r.read_exact(&mut b4)?;
                *slot = u32::from_le_bytes(b4);
            }
            refs.push(SnippetRef { demo: v[0], start: v[1], goal: v[2] });
        }
        Ok(refs)
    }

    /// Loads the index from `cache_dir` when present and valid, otherwise builds and stores it.
    pub fn build_cached(demos: Vec<Trajectory>, spec: SnippetSpec, cache_dir: Option<&Path>) -> Result<Self> {
        let Some(dir) = cache_dir else {
            return Ok(Self::build(demos, spec));
        };
        let path: PathBuf = dir.join(format!("snippets-{}.bin", Self::cache_key(&demos, &spec)));
        if let Ok(file) = std::fs::File::open(&path) {
            if let Ok(refs) = Self::read_index(std::io::BufReader::new(file)) {
                let set = SnippetSet { spec, demos, refs };
                if set.refs_in_bounds() {
                    return Ok(set);
                }
                return Ok(Self::build(set.demos, spec));
            }
        }
        let set = Self::build(demos, spec);
        std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
        let file = std::fs::File::create(&path).map_err(|e| Error::io(&path, e))?;
        set.write_index(std::io::BufWriter::new(file)).map_err(|e| Error::io(&path, e))?;
        Ok(set)
    }

    fn refs_in_bounds(&self) -> bool {
        self.refs.iter().all(|r| {
            self.demos.get(r.demo as usize).is_some_and(|d| (r.goal as usize) < d.samples.len() && r.start <= r.goal)
        })
    }
}
