//! SE(2) roadmap over chair poses, A* search and waypoint downsampling.

use std::cmp::Ordering;
use std::collections::BinaryHeap;
use std::f64::consts::TAU;
use std::io::{Read, Write};
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::{angle_diff, pose_distance, Pose2};
use crate::map::{CollisionChecker, FootprintModel, OccupancyMap};

const NO_NODE: u32 = u32::MAX;

/// Discretization of chair poses.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct GridSpec {
    pub xy_step: f64,
    pub theta_step: f64,
    pub nx: usize,
    pub ny: usize,
    pub ntheta: usize,
}

impl GridSpec {
    pub fn for_map(map: &OccupancyMap, xy_step: f64, theta_step: f64) -> Result<Self> {
        if !(xy_step > 0.0 && theta_step > 0.0) {
            return Err(Error::Config("grid steps must be positive".into()));
        }
        let ntheta = (TAU / theta_step).round() as usize;
        if ntheta == 0 || (ntheta as f64 * theta_step - TAU).abs() > 1e-9 {
            return Err(Error::Config(format!("theta step {theta_step} rad does not divide a full turn")));
        }
        let (w, h) = map.extent();
        Ok(GridSpec {
            xy_step,
            theta_step,
            nx: (w / xy_step + 1e-9).floor() as usize,
            ny: (h / xy_step + 1e-9).floor() as usize,
            ntheta,
        })
    }

    pub fn slot_count(&self) -> usize {
        self.nx * self.ny * self.ntheta
    }

    pub fn slot(&self, i: usize, j: usize, k: usize) -> usize {
        (j * self.nx + i) * self.ntheta + k
    }

    pub fn unslot(&self, slot: usize) -> (usize, usize, usize) {
        let k = slot % self.ntheta;
        let cell = slot / self.ntheta;
        (cell % self.nx, cell / self.nx, k)
    }

    /// Chair pose at grid coordinates, in the map's parent frame.
    pub fn pose(&self, origin: &Pose2, i: usize, j: usize, k: usize) -> Pose2 {
        origin.compose(&Pose2::new(
            (i as f64 + 0.5) * self.xy_step,
            (j as f64 + 0.5) * self.xy_step,
            k as f64 * self.theta_step,
        ))
    }

    /// Continuous grid coordinates of a world pose.
    fn coords(&self, origin: &Pose2, pose: &Pose2) -> (f64, f64, f64) {
        let local = pose.relative_to(origin);
        (local.x / self.xy_step - 0.5, local.y / self.xy_step - 0.5, local.theta.rem_euclid(TAU) / self.theta_step)
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct Roadmap {
    spec: GridSpec,
    origin: Pose2,
    rotation_weight: f64,
    nodes: Vec<Pose2>,
    node_slots: Vec<u32>,
    slot_nodes: Vec<u32>,
    adj_offsets: Vec<u32>,
    adjacency: Vec<u32>,
}

/// One step of a planned path: the rigid robot pose and the chair pose.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct PosePair {
    pub robot: Pose2,
    pub object: Pose2,
}

#[derive(Clone, Debug, PartialEq)]
pub struct PlannedPath {
    pub poses: Vec<PosePair>,
    pub nodes: Vec<u32>,
    /// Sum of edge costs.
    pub total_length: f64,
}

impl PlannedPath {
    pub fn len(&self) -> usize {
        self.poses.len()
    }

    pub fn is_empty(&self) -> bool {
        self.poses.is_empty()
    }

    /// Distance travelled by the chair center.
    pub fn translation_length(&self) -> f64 {
        self.poses.windows(2).map(|w| w[0].object.position_distance(&w[1].object)).sum()
    }
}

impl Roadmap {
    pub fn build(
        map: &OccupancyMap,
        fp: &FootprintModel,
        xy_step: f64,
        theta_step: f64,
        rotation_weight: f64,
    ) -> Result<Self> {
        let spec = GridSpec::for_map(map, xy_step, theta_step)?;
        let origin = map.origin();
        let checker = CollisionChecker::new(map, *fp);
        let mut slot_nodes = vec![NO_NODE; spec.slot_count()];
        let mut nodes = Vec::new();
        let mut node_slots = Vec::new();
        for j in 0..spec.ny {
            for i in 0..spec.nx {
                for k in 0..spec.ntheta {
                    let pose = spec.pose(&origin, i, j, k);
                    if !checker.system_collides(&pose) {
                        let slot = spec.slot(i, j, k);
                        slot_nodes[slot] = nodes.len() as u32;
                        nodes.push(pose);
                        node_slots.push(slot as u32);
                    }
                }
            }
        }
        let mut adj_offsets = Vec::with_capacity(nodes.len() + 1);
        let mut adjacency = Vec::with_capacity(nodes.len() * 6);
        adj_offsets.push(0);
        for &slot in &node_slots {
            let (i, j, k) = spec.unslot(slot as usize);
            let mut push = |s: usize| {
                let n = slot_nodes[s];
                if n != NO_NODE {
                    adjacency.push(n);
                }
            };
            if i > 0 {
                push(spec.slot(i - 1, j, k));
            }
            if i + 1 < spec.nx {
                push(spec.slot(i + 1, j, k));
            }
            if j > 0 {
                push(spec.slot(i, j - 1, k));
            }
            if j + 1 < spec.ny {
                push(spec.slot(i, j + 1, k));
            }
            if spec.ntheta > 1 {
                push(spec.slot(i, j, (k + spec.ntheta - 1) % spec.ntheta));
                if spec.ntheta > 2 {
                    push(spec.slot(i, j, (k + 1) % spec.ntheta));
                }
            }
            adj_offsets.push(adjacency.len() as u32);
        }
        Ok(Roadmap { spec, origin, rotation_weight, nodes, node_slots, slot_nodes, adj_offsets, adjacency })
    }

    pub fn spec(&self) -> &GridSpec {
        &self.spec
    }

    pub fn rotation_weight(&self) -> f64 {
        self.rotation_weight
    }

    pub fn node_count(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn node(&self, idx: u32) -> Pose2 {
        self.nodes[idx as usize]
    }

    pub fn nodes(&self) -> &[Pose2] {
        &self.nodes
    }

    pub fn neighbors(&self, idx: u32) -> &[u32] {
        let a = self.adj_offsets[idx as usize] as usize;
        let b = self.adj_offsets[idx as usize + 1] as usize;
        &self.adjacency[a..b]
    }

    pub fn is_rotation_edge(&self, a: u32, b: u32) -> bool {
        let (ia, ja, _) = self.spec.unslot(self.node_slots[a as usize] as usize);
        let (ib, jb, _) = self.spec.unslot(self.node_slots[b as usize] as usize);
        ia == ib && ja == jb
    }

    pub fn rotation_cost(&self) -> f64 {
        self.rotation_weight * self.spec.theta_step
    }

    pub fn edge_cost(&self, a: u32, b: u32) -> f64 {
        if self.is_rotation_edge(a, b) {
            self.rotation_cost()
        } else {
            self.spec.xy_step
        }
    }

    pub fn node_at(&self, i: usize, j: usize, k: usize) -> Option<u32> {
        if i >= self.spec.nx || j >= self.spec.ny || k >= self.spec.ntheta {
            return None;
        }
        let n = self.slot_nodes[self.spec.slot(i, j, k)];
        (n != NO_NODE).then_some(n)
    }

    /// Nearest free node within one grid step in each dimension.
    pub fn snap(&self, pose: &Pose2) -> Option<u32> {
        let (fi, fj, fk) = self.spec.coords(&self.origin, pose);
        let (ri, rj, rk) = (fi.round() as i64, fj.round() as i64, fk.round() as i64);
        let mut best: Option<(f64, u32)> = None;
        for dj in -1..=1 {
            for di in -1..=1 {
                for dk in -1..=1 {
                    let (i, j) = (ri + di, rj + dj);
                    if i < 0 || j < 0 {
                        continue;
                    }
                    let k = (rk + dk).rem_euclid(self.spec.ntheta as i64) as usize;
                    let Some(n) = self.node_at(i as usize, j as usize, k) else {
                        continue;
                    };
                    let d = pose_distance(pose, &self.node(n), self.rotation_weight);
                    if best.map_or(true, |(bd, bn)| d < bd || (d == bd && n < bn)) {
                        best = Some((d, n));
                    }
                }
            }
        }
        best.map(|(_, n)| n)
    }

    fn heuristic(&self, a: u32, goal: &Pose2) -> f64 {
        // Slightly deflated so floating-point rounding cannot make it inadmissible.
        pose_distance(&self.node(a), goal, self.rotation_weight) * (1.0 - 1e-9)
    }

    /// Minimum-cost search; ties in f are broken toward the lower node index.
    pub fn astar_nodes(&self, start: u32, goal: u32) -> Option<Vec<u32>> {
        let goal_pose = self.node(goal);
        let n = self.nodes.len();
        // Path costs are kept as step counts so equal-cost paths compare bit-identically.
        let mut trans = vec![u32::MAX; n];
        let mut rots = vec![u32::MAX; n];
        let mut parent = vec![NO_NODE; n];
        let mut closed = vec![false; n];
        let cost_of = |t: u32, r: u32| t as f64 * self.spec.xy_step + r as f64 * self.rotation_cost();
        let mut open = BinaryHeap::new();
        trans[start as usize] = 0;
        rots[start as usize] = 0;
        open.push(OpenEntry { f: self.heuristic(start, &goal_pose), node: start });
        while let Some(OpenEntry { node, .. }) = open.pop() {
            let u = node as usize;
            if closed[u] {
                continue;
            }
            if node == goal {
                let mut path = vec![goal];
                let mut cur = goal;
                while parent[cur as usize] != NO_NODE {
                    cur = parent[cur as usize];
                    path.push(cur);
                }
                path.reverse();
                return Some(path);
            }
            closed[u] = true;
            for &v in self.neighbors(node) {
                let vi = v as usize;
                if closed[vi] {
                    continue;
                }
                let (t, r) =
                    if self.is_rotation_edge(node, v) { (trans[u], rots[u] + 1) } else { (trans[u] + 1, rots[u]) };
                let cand = cost_of(t, r);
                let better = trans[vi] == u32::MAX || cand < cost_of(trans[vi], rots[vi]);
                if better {
                    trans[vi] = t;
                    rots[vi] = r;
                    parent[vi] = node;
                    open.push(OpenEntry { f: cand + self.heuristic(v, &goal_pose), node: v });
                }
            }
        }
        None
    }

    pub fn path_cost(&self, nodes: &[u32]) -> f64 {
        let (mut t, mut r) = (0u32, 0u32);
        for w in nodes.windows(2) {
            if self.is_rotation_edge(w[0], w[1]) {
                r += 1;
            } else {
                t += 1;
            }
        }
        t as f64 * self.spec.xy_step + r as f64 * self.rotation_cost()
    }

    pub fn plan(&self, fp: &FootprintModel, start: &Pose2, goal: &Pose2) -> Result<PlannedPath> {
        let s = self.snap(start).ok_or(Error::SnapFailure(*start))?;
        let g = self.snap(goal).ok_or(Error::SnapFailure(*goal))?;
        let nodes = self.astar_nodes(s, g).ok_or(Error::NoPath { start: *start, goal: *goal })?;
        let poses = nodes
            .iter()
            .map(|&n| {
                let object = self.node(n);
                PosePair { robot: fp.robot_for_chair(&object), object }
            })
            .collect();
        Ok(PlannedPath { total_length: self.path_cost(&nodes), poses, nodes })
    }

    const BLOB_MAGIC: &'static [u8; 8] = b"POPIRMAP";

    /// Binary serialization; nodes are stored as grid slots so reloading is exact.
    pub fn write_blob(&self, out: &mut impl Write) -> std::io::Result<()> {
        out.write_all(Self::BLOB_MAGIC)?;
        out.write_all(&1u32.to_le_bytes())?;
        for v in [self.spec.xy_step, self.spec.theta_step, self.rotation_weight] {
            out.write_all(&v.to_le_bytes())?;
        }
        for v in [self.spec.nx, self.spec.ny, self.spec.ntheta] {
            out.write_all(&(v as u64).to_le_bytes())?;
        }
        for v in [self.origin.x, self.origin.y, self.origin.theta] {
            out.write_all(&v.to_le_bytes())?;
        }
        out.write_all(&(self.nodes.len() as u64).to_le_bytes())?;
        for p in &self.nodes {
            for v in [p.x, p.y, p.theta] {
                out.write_all(&v.to_le_bytes())?;
            }
        }
        for &s in &self.node_slots {
            out.write_all(&s.to_le_bytes())?;
        }
        out.write_all(&(self.adjacency.len() as u64).to_le_bytes())?;
        for &o in &self.adj_offsets {
            out.write_all(&o.to_le_bytes())?;
        }
        for &a in &self.adjacency {
            out.write_all(&a.to_le_bytes())?;
        }
        Ok(())
    }

    pub fn read_blob(input: &mut impl Read) -> Result<Self> {
        let bad = |m: &str| Error::Invariant(format!("roadmap blob: {m}"));
        let mut r = BlobReader(input);
        let mut magic = [0u8; 8];
        r.bytes(&mut magic).map_err(|_| bad("truncated"))?;
        if &magic != Self::BLOB_MAGIC {
            return Err(bad("bad magic"));
        }
        if r.u32().map_err(|_| bad("truncated"))? != 1 {
            return Err(bad("unsupported version"));
        }
        let io = |_| bad("truncated");
        let xy_step = r.f64().map_err(io)?;
        let theta_step = r.f64().map_err(io)?;
        let rotation_weight = r.f64().map_err(io)?;
        let nx = r.u64().map_err(io)? as usize;
        let ny = r.u64().map_err(io)? as usize;
        let ntheta = r.u64().map_err(io)? as usize;
        let origin = Pose2 { x: r.f64().map_err(io)?, y: r.f64().map_err(io)?, theta: r.f64().map_err(io)? };
        let spec = GridSpec { xy_step, theta_step, nx, ny, ntheta };
        let n = r.u64().map_err(io)? as usize;
        if n > spec.slot_count() {
            return Err(bad("node count exceeds grid"));
        }
        let mut nodes = Vec::with_capacity(n);
        for _ in 0..n {
            nodes.push(Pose2 { x: r.f64().map_err(io)?, y: r.f64().map_err(io)?, theta: r.f64().map_err(io)? });
        }
        let mut node_slots = Vec::with_capacity(n);
        let mut slot_nodes = vec![NO_NODE; spec.slot_count()];
        for idx in 0..n {
            let s = r.u32().map_err(io)?;
            if s as usize >= slot_nodes.len() {
                return Err(bad("slot out of range"));
            }
            slot_nodes[s as usize] = idx as u32;
            node_slots.push(s);
        }
        let m = r.u64().map_err(io)? as usize;
        let mut adj_offsets = Vec::with_capacity(n + 1);
        for _ in 0..=n {
            adj_offsets.push(r.u32().map_err(io)?);
        }
        let mut adjacency = Vec::with_capacity(m);
        for _ in 0..m {
            let a = r.u32().map_err(io)?;
            if a as usize >= n {
                return Err(bad("neighbor out of range"));
            }
            adjacency.push(a);
        }
        if adj_offsets.last().copied() != Some(m as u32) {
            return Err(bad("adjacency size mismatch"));
        }
        Ok(Roadmap { spec, origin, rotation_weight, nodes, node_slots, slot_nodes, adj_offsets, adjacency })
    }
}

struct BlobReader<'a, R: Read>(&'a mut R);

impl<R: Read> BlobReader<'_, R> {
    fn bytes(&mut self, buf: &mut [u8]) -> std::io::Result<()> {
        self.0.read_exact(buf)
    }
    fn u32(&mut self) -> std::io::Result<u32> {
        let mut b = [0u8; 4];
        self.0.read_exact(&mut b)?;
        Ok(u32::from_le_bytes(b))
    }
    fn u64(&mut self) -> std::io::Result<u64> {
        let mut b = [0u8; 8];
        self.0.read_exact(&mut b)?;
        Ok(u64::from_le_bytes(b))
    }
    fn f64(&mut self) -> std::io::Result<f64> {
        let mut b = [0u8; 8];
        self.0.read_exact(&mut b)?;
        Ok(f64::from_le_bytes(b))
    }
}

#[derive(Debug, Clone, Copy)]
struct OpenEntry {
    f: f64,
    node: u32,
}

impl PartialEq for OpenEntry {
    fn eq(&self, other: &Self) -> bool {
        self.cmp(other) == Ordering::Equal
    }
}

impl Eq for OpenEntry {}

impl PartialOrd for OpenEntry {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

impl Ord for OpenEntry {
    // Max-heap: the smallest f, then the smallest node index, compares greatest.
    fn cmp(&self, other: &Self) -> Ordering {
        other.f.total_cmp(&self.f).then_with(|| other.node.cmp(&self.node))
    }
}

pub fn build_roadmap(
    map: &OccupancyMap,
    fp: &FootprintModel,
    xy_step: f64,
    theta_step: f64,
    rotation_weight: f64,
) -> Result<Roadmap> {
    Roadmap::build(map, fp, xy_step, theta_step, rotation_weight)
}

pub fn plan_astar(roadmap: &Roadmap, fp: &FootprintModel, start: &Pose2, goal: &Pose2) -> Result<PlannedPath> {
    roadmap.plan(fp, start, goal)
}

/// Every `f`-th pose pair (1-based), always ending with the final one.
pub fn sample_intermediate_goals(path: &PlannedPath, f: usize) -> Vec<PosePair> {
    let f = f.max(1);
    let n = path.poses.len();
    let mut out: Vec<PosePair> = (1..=n / f).map(|k| path.poses[k * f - 1]).collect();
    if n > 0 && (n % f != 0) {
        out.push(path.poses[n - 1]);
    }
    out
}

/// Cache key for a roadmap: (map content, footprint, steps).
pub fn roadmap_cache_key(
    map: &OccupancyMap,
    fp: &FootprintModel,
    xy_step: f64,
    theta_step: f64,
    rotation_weight: f64,
) -> String {
    let key = serde_json::json!({
        "map": map.content_hash(),
        "footprint": fp,
        "xy_step": xy_step,
        "theta_step": theta_step,
        "rotation_weight": rotation_weight,
    });
    crate::config::hash_json(&key)
}

/// Builds a roadmap, reusing a cached blob from `cache_dir` when present.
pub fn build_roadmap_cached(
    map: &OccupancyMap,
    fp: &FootprintModel,
    xy_step: f64,
    theta_step: f64,
    rotation_weight: f64,
    cache_dir: Option<&Path>,
) -> Result<Roadmap> {
    let Some(dir) = cache_dir else {
        return Roadmap::build(map, fp, xy_step, theta_step, rotation_weight);
    };
    let key = roadmap_cache_key(map, fp, xy_step, theta_step, rotation_weight);
    let path: PathBuf = dir.join(format!("roadmap-{key}.bin"));
    if let Ok(file) = std::fs::File::open(&path) {
        let mut reader = std::io::BufReader::new(file);
        if let Ok(rm) = Roadmap::read_blob(&mut reader) {
            return Ok(rm);
        }
    }
    let rm = Roadmap::build(map, fp, xy_step, theta_step, rotation_weight)?;
    std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    let tmp = path.with_extension("tmp");
    {
        let file = std::fs::File::create(&tmp).map_err(|e| Error::io(&tmp, e))?;
        let mut w = std::io::BufWriter::new(file);
        rm.write_blob(&mut w).map_err(|e| Error::io(&tmp, e))?;
        w.flush().map_err(|e| Error::io(&tmp, e))?;
    }
    std::fs::rename(&tmp, &path).map_err(|e| Error::io(&path, e))?;
    Ok(rm)
}

/// Heading change along a path, in radians (signed sum of rotation edges).
pub fn total_rotation(path: &PlannedPath) -> f64 {
    path.poses.windows(2).map(|w| angle_diff(w[1].object.theta, w[0].object.theta)).sum()
}
