//! Independent oracles shared by the integration tests and the acceptance suite.
#![allow(dead_code)]

use std::cmp::Reverse;
use std::collections::BinaryHeap;

use popi_core::demo::Sample;
use popi_core::geometry::{pose_distance, Pose2};
use popi_core::map::{FootprintModel, OccupancyMap};
use popi_core::snippet::Snippet;
use rand::Rng;

pub mod numerics;

pub type Mat3 = [[f64; 3]; 3];

pub fn homogeneous(p: &Pose2) -> Mat3 {
    let (s, c) = p.theta.sin_cos();
    [[c, -s, p.x], [s, c, p.y], [0.0, 0.0, 1.0]]
}

pub fn mat_mul(a: &Mat3, b: &Mat3) -> Mat3 {
    let mut out = [[0.0; 3]; 3];
    for i in 0..3 {
        for j in 0..3 {
            out[i][j] = (0..3).map(|k| a[i][k] * b[k][j]).sum();
        }
    }
    out
}

/// General 3×3 inverse by cofactors; does not assume a rigid transform.
pub fn mat_inverse(m: &Mat3) -> Mat3 {
    let cof = |r: usize, c: usize| {
        let rows: Vec<usize> = (0..3).filter(|&i| i != r).collect();
        let cols: Vec<usize> = (0..3).filter(|&j| j != c).collect();
        let d = m[rows[0]][cols[0]] * m[rows[1]][cols[1]] - m[rows[0]][cols[1]] * m[rows[1]][cols[0]];
        if (r + c) % 2 == 0 {
            d
        } else {
            -d
        }
    };
    let det: f64 = (0..3).map(|j| m[0][j] * cof(0, j)).sum();
    let mut out = [[0.0; 3]; 3];
    for i in 0..3 {
        for j in 0..3 {
            out[i][j] = cof(j, i) / det;
        }
    }
    out
}

/// Largest deviation between a pose and a homogeneous matrix, comparing the rotation
/// block entrywise so heading wrap-around does not matter.
pub fn mat_pose_error(m: &Mat3, p: &Pose2) -> f64 {
    let q = homogeneous(p);
    let mut worst: f64 = 0.0;
    for i in 0..2 {
        for j in 0..3 {
            worst = worst.max((m[i][j] - q[i][j]).abs());
        }
    }
    worst
}

pub fn random_pose(rng: &mut impl Rng, span: f64) -> Pose2 {
    Pose2::new(
        rng.gen_range(-span..span),
        rng.gen_range(-span..span),
        rng.gen_range(-std::f64::consts::PI..std::f64::consts::PI),
    )
}

/// Collision sample points of each footprint, enumerated from the footprint description:
/// a lattice at half the map resolution clipped to the chair disc and the robot rectangle.
pub struct FootprintSamples {
    pub chair: Vec<(f64, f64)>,
    pub robot: Vec<(f64, f64)>,
}

impl FootprintSamples {
    pub fn new(fp: &FootprintModel, resolution: f64) -> Self {
        let h = resolution / 2.0;
        let axis = |half: f64| {
            let n = (half / h + 1e-9).floor() as i64;
            (-n..=n).map(|k| k as f64 * h).collect::<Vec<_>>()
        };
        let r = fp.chair_radius;
        let mut chair = Vec::new();
        for &x in &axis(r) {
            for &y in &axis(r) {
                if x * x + y * y <= r * r + 1e-12 {
                    chair.push((x, y));
                }
            }
        }
        let mut robot = Vec::new();
        for &x in &axis(fp.robot_length / 2.0) {
            for &y in &axis(fp.robot_width / 2.0) {
                robot.push((x, y));
            }
        }
        FootprintSamples { chair, robot }
    }
}

fn body_free(map: &OccupancyMap, pose: &Pose2, pts: &[(f64, f64)]) -> bool {
    let (s, c) = pose.theta.sin_cos();
    let res = map.resolution();
    pts.iter().all(|&(px, py)| {
        let x = pose.x + c * px - s * py;
        let y = pose.y + s * px + c * py;
        let col = (x / res).floor();
        let row = (y / res).floor();
        col >= 0.0
            && row >= 0.0
            && col < map.width() as f64
            && row < map.height() as f64
            && !map.cell_occupied(col as usize, row as usize)
    })
}

/// Chair poses of the lattice, in (j, i, k) order, for a map at the world origin.
pub fn lattice_poses(map: &OccupancyMap, xy_step: f64, ntheta: usize) -> (usize, usize, Vec<Pose2>) {
    let nx = (map.width() as f64 * map.resolution() / xy_step + 1e-9).floor() as usize;
    let ny = (map.height() as f64 * map.resolution() / xy_step + 1e-9).floor() as usize;
    let dth = std::f64::consts::TAU / ntheta as f64;
    let mut poses = Vec::with_capacity(nx * ny * ntheta);
    for j in 0..ny {
        for i in 0..nx {
            for k in 0..ntheta {
                poses.push(Pose2::new((i as f64 + 0.5) * xy_step, (j as f64 + 0.5) * xy_step, k as f64 * dth));
            }
        }
    }
    (nx, ny, poses)
}

/// Free flags for every lattice pose: chair disc and the robot directly behind it.
pub fn lattice_free(map: &OccupancyMap, fp: &FootprintModel, poses: &[Pose2]) -> Vec<bool> {
    let samples = FootprintSamples::new(fp, map.resolution());
    poses
        .iter()
        .map(|p| {
            let robot = p.compose(&Pose2::new(-fp.center_offset, 0.0, 0.0));
            body_free(map, p, &samples.chair) && body_free(map, &robot, &samples.robot)
        })
        .collect()
}

/// Dijkstra over the lattice with 4-connected translation moves and ±1 heading moves.
/// Returns the optimal `(translation steps, rotation steps)`, compared by total cost.
pub fn dijkstra_steps(
    nx: usize,
    ny: usize,
    ntheta: usize,
    free: &[bool],
    start: usize,
    goal: usize,
    xy_step: f64,
    rotation_cost: f64,
) -> Option<(u32, u32)> {
    let cost = |t: u32, r: u32| t as f64 * xy_step + r as f64 * rotation_cost;
    let mut best: Vec<Option<(u32, u32)>> = vec![None; free.len()];
    let mut heap = BinaryHeap::new();
    best[start] = Some((0, 0));
    heap.push(Reverse((OrdF(0.0), 0u32, 0u32, start)));
    while let Some(Reverse((_, t, r, s))) = heap.pop() {
        if best[s] != Some((t, r)) {
            continue;
        }
        if s == goal {
            return Some((t, r));
        }
        let k = s % ntheta;
        let cell = s / ntheta;
        let (i, j) = (cell % nx, cell / nx);
        let slot = |i: usize, j: usize, k: usize| (j * nx + i) * ntheta + k;
        let mut moves: Vec<(usize, bool)> = Vec::new();
        if i > 0 {
            moves.push((slot(i - 1, j, k), false));
        }
        if i + 1 < nx {
            moves.push((slot(i + 1, j, k), false));
        }
        if j > 0 {
            moves.push((slot(i, j - 1, k), false));
        }
        if j + 1 < ny {
            moves.push((slot(i, j + 1, k), false));
        }
        if ntheta > 1 {
            moves.push((slot(i, j, (k + 1) % ntheta), true));
            moves.push((slot(i, j, (k + ntheta - 1) % ntheta), true));
        }
        for (n, rot) in moves {
            if !free[n] {
                continue;
            }
            let (nt, nr) = if rot { (t, r + 1) } else { (t + 1, r) };
            let nc = cost(nt, nr);
            if best[n].is_none_or(|(bt, br)| nc < cost(bt, br)) {
                best[n] = Some((nt, nr));
                heap.push(Reverse((OrdF(nc), nt, nr, n)));
            }
        }
    }
    None
}

#[derive(Clone, Copy, PartialEq, PartialOrd)]
pub struct OrdF(pub f64);

impl Eq for OrdF {}

impl Ord for OrdF {
    fn cmp(&self, other: &Self) -> std::cmp::Ordering {
        self.0.total_cmp(&other.0)
    }
}

fn relative(p: &Pose2, g: &Pose2) -> Pose2 {
    // Through the matrix oracle so the check does not reuse the library transform.
    let m = mat_mul(&mat_inverse(&homogeneous(g)), &homogeneous(p));
    Pose2::new(m[0][2], m[1][2], m[1][0].atan2(m[0][0]))
}

/// Snippets by direct double loop over `(t', t)`, windows built from their index ranges.
pub fn brute_force_snippets(
    samples: &[Sample],
    d: f64,
    w: f64,
    h_o: usize,
    h_a: usize,
) -> Vec<(usize, usize, Snippet)> {
    let n = samples.len();
    let mut out = Vec::new();
    for t in 0..n {
        for tp in 0..n {
            if tp > t || pose_distance(&samples[tp].robot, &samples[t].robot, w) >= d {
                continue;
            }
            let g = samples[t].object;
            let obs_end = (tp + h_o - 1).min(t);
            let mut obs_idx: Vec<usize> = (tp..=obs_end).collect();
            let mut mask: Vec<bool> = vec![true; obs_idx.len()];
            while obs_idx.len() < h_o {
                obs_idx.push(obs_end);
                mask.push(false);
            }
            let act_start = (tp + h_o).min(t + 1);
            let act_end = tp + h_o + h_a - 1;
            let mut act_idx: Vec<usize> = (act_start..=act_end.min(t)).collect();
            mask.extend(std::iter::repeat_n(true, act_idx.len()));
            while act_idx.len() < h_a {
                act_idx.push(t);
                mask.push(false);
            }
            let snip = Snippet {
                obs_robot: obs_idx.iter().map(|&i| relative(&samples[i].robot, &g)).collect(),
                obs_object: obs_idx.iter().map(|&i| relative(&samples[i].object, &g)).collect(),
                actions: act_idx.iter().map(|&i| relative(&samples[i].robot, &g)).collect(),
                pad_mask: mask,
            };
            out.push((tp, t, snip));
        }
    }
    out
}

/// Random-walk trajectory: the robot drives with a wandering heading, the chair trails.
pub fn synthetic_trajectory(rng: &mut impl Rng, len: usize) -> Vec<Sample> {
    let mut robot = random_pose(rng, 3.0);
    let speed = rng.gen_range(0.0..0.15);
    (0..len)
        .map(|i| {
            let s = Sample {
                time: i as f64 * 0.1,
                robot,
                object: robot.compose(&Pose2::new(0.7, rng.gen_range(-0.05..0.05), rng.gen_range(-0.2..0.2))),
            };
            let turn = if rng.gen_bool(0.1) { rng.gen_range(-1.5..1.5) } else { rng.gen_range(-0.1..0.1) };
            robot = robot.compose(&Pose2::new(speed, 0.0, turn));
            s
        })
        .collect()
}

pub fn poses_close(a: &[Pose2], b: &[Pose2], tol: f64) -> bool {
    a.len() == b.len() && a.iter().zip(b).all(|(p, q)| p.approx_eq(q, tol))
}

/// Outcome of one acceptance check: a short measurement summary or the failure reason.
pub type Check = Result<String, String>;

/// Compose, inverse and frame transforms against the matrix oracle.
pub fn check_geometry(cases: usize, seed: u64) -> Check {
    use popi_core::geometry::{transform_from_frame, transform_to_frame};
    use rand::SeedableRng;
    let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
    let mut worst: f64 = 0.0;
    let mut worst_round_trip: f64 = 0.0;
    for _ in 0..cases {
        let (a, b, g) = (random_pose(&mut rng, 20.0), random_pose(&mut rng, 20.0), random_pose(&mut rng, 20.0));
        let (ma, mb, mg) = (homogeneous(&a), homogeneous(&b), homogeneous(&g));
        worst = worst.max(mat_pose_error(&mat_mul(&ma, &mb), &a.compose(&b)));
        worst = worst.max(mat_pose_error(&mat_inverse(&ma), &a.inverse()));
        let rel = transform_to_frame(&[a, b], &g);
        let minv = mat_inverse(&mg);
        worst = worst.max(mat_pose_error(&mat_mul(&minv, &ma), &rel[0]));
        worst = worst.max(mat_pose_error(&mat_mul(&minv, &mb), &rel[1]));
        let back = transform_from_frame(&rel, &g);
        for (p, q) in back.iter().zip([a, b]) {
            worst_round_trip = worst_round_trip.max(mat_pose_error(&homogeneous(p), &q));
            if p.theta <= -std::f64::consts::PI || p.theta > std::f64::consts::PI {
                return Err(format!("heading {} outside (-pi, pi]", p.theta));
            }
        }
    }
    if worst < 1e-9 && worst_round_trip < 1e-9 {
        Ok(format!("{cases} cases, max error {worst:.1e}, round trip {worst_round_trip:.1e}"))
    } else {
        Err(format!("max error {worst:.1e}, round trip {worst_round_trip:.1e}"))
    }
}

/// Random `w × h`-cell map with a few rectangular obstacles.
pub fn random_map(rng: &mut impl Rng, max_cells: usize) -> OccupancyMap {
    let (w, h) = (rng.gen_range(20..=max_cells), rng.gen_range(20..=max_cells));
    let mut map = OccupancyMap::new(w, h, 0.1, Pose2::IDENTITY).unwrap();
    for _ in 0..rng.gen_range(0..4) {
        let (x, y) = (rng.gen_range(0.0..w as f64 * 0.1), rng.gen_range(0.0..h as f64 * 0.1));
        let (dx, dy) = (rng.gen_range(0.1..0.6), rng.gen_range(0.1..0.6));
        map.fill_rect(x, y, x + dx, y + dy, true);
    }
    map
}

/// A* path costs against the Dijkstra oracle on random maps, plus path validity.
pub fn check_planner(maps: usize, seed: u64) -> Check {
    use popi_core::planner::{plan_astar, Roadmap};
    use rand::SeedableRng;
    let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
    let fp = FootprintModel::default();
    let (xy, ntheta, rw) = (0.1, 36, 0.3);
    let th = std::f64::consts::TAU / ntheta as f64;
    let (mut solved, mut unreachable, mut queries) = (0, 0, 0);
    for m in 0..maps {
        let map = random_map(&mut rng, 30);
        let (nx, ny, poses) = lattice_poses(&map, xy, ntheta);
        let free = lattice_free(&map, &fp, &poses);
        let free_slots: Vec<usize> = (0..free.len()).filter(|&i| free[i]).collect();
        let rm = Roadmap::build(&map, &fp, xy, th, rw).map_err(|e| e.to_string())?;
        if rm.node_count() != free_slots.len() {
            return Err(format!("map {m}: {} nodes, oracle {}", rm.node_count(), free_slots.len()));
        }
        if free_slots.len() < 2 {
            continue;
        }
        for _ in 0..3 {
            let s = free_slots[rng.gen_range(0..free_slots.len())];
            let g = free_slots[rng.gen_range(0..free_slots.len())];
            queries += 1;
            let oracle = dijkstra_steps(nx, ny, ntheta, &free, s, g, xy, rw * th);
            match (plan_astar(&rm, &fp, &poses[s], &poses[g]), oracle) {
                (Ok(path), Some((t, r))) => {
                    let expect = t as f64 * xy + r as f64 * (rw * th);
                    if path.total_length != expect {
                        return Err(format!("map {m}: A* cost {} vs Dijkstra {expect}", path.total_length));
                    }
                    for p in &path.poses {
                        if popi_core::map::system_collides(&map, &fp, &p.object) {
                            return Err(format!("map {m}: path pose {} collides", p.object));
                        }
                    }
                    if !path.poses[0].object.approx_eq(&poses[s], 1e-9)
                        || !path.poses.last().unwrap().object.approx_eq(&poses[g], 1e-9)
                    {
                        return Err(format!("map {m}: path endpoints differ from the query"));
                    }
                    solved += 1;
                }
                (Err(popi_core::Error::NoPath { .. }), None) => unreachable += 1,
                (got, want) => {
                    return Err(format!("map {m}: planner {:?} vs oracle {want:?}", got.map(|p| p.total_length)))
                }
            }
        }
    }
    Ok(format!("{maps} maps, {queries} queries: {solved} equal-cost paths, {unreachable} agreed unreachable"))
}

/// Node counts on obstacle-free maps against direct lattice enumeration, and spacing.
pub fn check_roadmap_count() -> Check {
    use popi_core::planner::Roadmap;
    let fp = FootprintModel::default();
    let (xy, ntheta) = (0.1, 36);
    let th = 10f64.to_radians();
    let mut report = Vec::new();
    for (w, h) in [(30, 30), (40, 25), (60, 60)] {
        let map = OccupancyMap::new(w, h, 0.1, Pose2::IDENTITY).unwrap();
        let (_, _, poses) = lattice_poses(&map, xy, ntheta);
        let expect = lattice_free(&map, &fp, &poses).iter().filter(|f| **f).count();
        let rm = Roadmap::build(&map, &fp, xy, th, 0.3).map_err(|e| e.to_string())?;
        if rm.node_count() != expect {
            return Err(format!("{w}x{h}: {} nodes, enumeration {expect}", rm.node_count()));
        }
        // Every node lies on the 10 cm / 10° lattice.
        for n in rm.nodes() {
            let fi = n.x / xy - 0.5;
            let fj = n.y / xy - 0.5;
            let fk = n.theta.rem_euclid(std::f64::consts::TAU) / th;
            let off = |v: f64| (v - v.round()).abs();
            if off(fi) > 1e-9 || off(fj) > 1e-9 || off(fk).min((fk - 36.0).abs()) > 1e-6 {
                return Err(format!("node {n} is off the lattice"));
            }
        }
        // Translation neighbors are 0.1 m apart, rotation neighbors 10°.
        for idx in 0..rm.node_count() as u32 {
            let a = rm.node(idx);
            for &b in rm.neighbors(idx) {
                let b = rm.node(b);
                let (d, r) = (a.position_distance(&b), a.heading_distance(&b));
                let ok = ((d - 0.1).abs() < 1e-9 && r < 1e-9) || (d < 1e-9 && (r - th).abs() < 1e-9);
                if !ok {
                    return Err(format!("edge {a} -> {b} is not a lattice step"));
                }
            }
        }
        report.push(format!("{w}x{h}: {expect}"));
    }
    if (FootprintModel::default().chair_radius, xy, th.to_degrees().round()) != (0.3, 0.1, 10.0) {
        return Err("unexpected lattice spacing".into());
    }
    Ok(format!("node counts {}", report.join(", ")))
}

/// `extract_snippets` against the brute-force double loop on random trajectories.
pub fn check_snippets(trajectories: usize, seed: u64) -> Check {
    use popi_core::demo::{Trajectory, TrajectoryMeta};
    use popi_core::snippet::extract_snippets;
    use rand::SeedableRng;
    let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
    let mut total = 0;
    for n in 0..trajectories {
        let len = rng.gen_range(1..80);
        let samples = synthetic_trajectory(&mut rng, len);
        let d = rng.gen_range(0.2..2.0);
        let w = rng.gen_range(0.0..1.0);
        let (h_o, h_a) = (rng.gen_range(1..4), rng.gen_range(1..10));
        let traj = Trajectory {
            meta: TrajectoryMeta {
                seed: n as u64,
                sim_hash: String::new(),
                start: samples[0].object,
                goal: samples[len - 1].object,
            },
            samples,
        };
        let got = extract_snippets(&traj, d, h_o, h_a, w);
        let want = brute_force_snippets(&traj.samples, d, w, h_o, h_a);
        if got.len() != want.len() {
            return Err(format!("trajectory {n}: {} snippets, oracle {}", got.len(), want.len()));
        }
        for (i, (g, (tp, t, o))) in got.iter().zip(&want).enumerate() {
            let same = g.pad_mask == o.pad_mask
                && poses_close(&g.obs_robot, &o.obs_robot, 1e-9)
                && poses_close(&g.obs_object, &o.obs_object, 1e-9)
                && poses_close(&g.actions, &o.actions, 1e-9);
            if !same {
                return Err(format!("trajectory {n}: snippet {i} (t'={tp}, t={t}) differs from the oracle"));
            }
            // The goal is the chair pose at t, so it maps to the identity.
            let goal = popi_core::geometry::transform_to_frame(&[traj.samples[*t].object], &traj.samples[*t].object);
            if !goal[0].approx_eq(&Pose2::IDENTITY, 1e-12) {
                return Err(format!("trajectory {n}: goal of snippet {i} is not the identity"));
            }
        }
        total += got.len();
    }
    Ok(format!("{trajectories} trajectories, {total} snippets identical to the oracle"))
}
