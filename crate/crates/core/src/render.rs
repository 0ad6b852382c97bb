//! Static PNG rendering of maps and logged episodes.

use std::path::Path;

use image::{Rgb, RgbImage};

use crate::error::{Error, Result};
use crate::geometry::Pose2;
use crate::map::{FootprintModel, OccupancyMap};

const FREE: Rgb<u8> = Rgb([250, 250, 250]);
const WALL: Rgb<u8> = Rgb([40, 40, 40]);
const ROBOT: Rgb<u8> = Rgb([200, 60, 40]);
const CHAIR: Rgb<u8> = Rgb([40, 90, 200]);
const GOAL: Rgb<u8> = Rgb([30, 160, 60]);
const WAYPOINT: Rgb<u8> = Rgb([230, 160, 20]);

/// Drawing surface in world coordinates, `scale` pixels per map cell.
pub struct Canvas<'m> {
    map: &'m OccupancyMap,
    scale: u32,
    pub image: RgbImage,
}

impl<'m> Canvas<'m> {
    pub fn new(map: &'m OccupancyMap, scale: u32) -> Self {
        let scale = scale.max(1);
        let (w, h) = (map.width() as u32 * scale, map.height() as u32 * scale);
        let mut image = RgbImage::from_pixel(w, h, FREE);
        for row in 0..map.height() {
            for col in 0..map.width() {
                if map.cell_occupied(col, row) {
                    for dy in 0..scale {
                        for dx in 0..scale {
                            // Row 0 is the bottom of the map and the top of the image is y max.
                            let py = h - 1 - (row as u32 * scale + dy);
                            image.put_pixel(col as u32 * scale + dx, py, WALL);
                        }
                    }
                }
            }
        }
        Canvas { map, scale, image }
    }

    fn to_pixel(&self, x: f64, y: f64) -> (f64, f64) {
        let (lx, ly) = self.map.to_local(x, y);
        let px_per_m = self.scale as f64 / self.map.resolution();
        (lx * px_per_m, self.image.height() as f64 - ly * px_per_m)
    }

    fn put(&mut self, px: f64, py: f64, color: Rgb<u8>) {
        if px >= 0.0 && py >= 0.0 && (px as u32) < self.image.width() && (py as u32) < self.image.height() {
            self.image.put_pixel(px as u32, py as u32, color);
        }
    }

    pub fn line(&mut self, a: (f64, f64), b: (f64, f64), color: Rgb<u8>) {
        let (ax, ay) = self.to_pixel(a.0, a.1);
        let (bx, by) = self.to_pixel(b.0, b.1);
        let n = (bx - ax).abs().max((by - ay).abs()).ceil().max(1.0) as usize;
        for i in 0..=n {
            let t = i as f64 / n as f64;
            self.put(ax + t * (bx - ax), ay + t * (by - ay), color);
        }
    }

    pub fn polyline(&mut self, points: &[(f64, f64)], color: Rgb<u8>) {
        for w in points.windows(2) {
            self.line(w[0], w[1], color);
        }
    }

    pub fn circle(&mut self, cx: f64, cy: f64, r: f64, color: Rgb<u8>) {
        let n = 48;
        let pts: Vec<(f64, f64)> = (0..=n)
            .map(|i| {
                let a = std::f64::consts::TAU * i as f64 / n as f64;
                (cx + r * a.cos(), cy + r * a.sin())
            })
            .collect();
        self.polyline(&pts, color);
    }

    /// Robot rectangle and chair disc at one instant.
    pub fn system(&mut self, fp: &FootprintModel, robot: &Pose2, chair: &Pose2) {
        let (hl, hw) = (fp.robot_length / 2.0, fp.robot_width / 2.0);
        let corners: Vec<(f64, f64)> = [(-hl, -hw), (hl, -hw), (hl, hw), (-hl, hw), (-hl, -hw)]
            .iter()
            .map(|&(x, y)| robot.transform_point(x, y))
            .collect();
        self.polyline(&corners, ROBOT);
        self.circle(chair.x, chair.y, fp.chair_radius, CHAIR);
    }

    pub fn marker(&mut self, pose: &Pose2, color: Rgb<u8>) {
        self.circle(pose.x, pose.y, 0.1, color);
        self.line((pose.x, pose.y), pose.transform_point(0.3, 0.0), color);
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        self.image.save(path).map_err(|e| Error::io(path, std::io::Error::other(e.to_string())))
    }
}

/// Trace of both paths with the start and final footprints, goal and waypoints.
pub fn render_episode(
    map: &OccupancyMap,
    fp: &FootprintModel,
    robot_path: &[Pose2],
    chair_path: &[Pose2],
    goal: &Pose2,
    waypoints: &[Pose2],
    scale: u32,
) -> RgbImage {
    let mut c = Canvas::new(map, scale);
    for w in waypoints {
        c.marker(w, WAYPOINT);
    }
    c.marker(goal, GOAL);
    c.circle(goal.x, goal.y, 0.3, GOAL);
    let pts = |p: &[Pose2]| p.iter().map(|q| (q.x, q.y)).collect::<Vec<_>>();
    c.polyline(&pts(robot_path), ROBOT);
    c.polyline(&pts(chair_path), CHAIR);
    if let (Some(r), Some(o)) = (robot_path.first(), chair_path.first()) {
        c.system(fp, r, o);
    }
    if let (Some(r), Some(o)) = (robot_path.last(), chair_path.last()) {
        c.system(fp, r, o);
    }
    c.image
}

/// Frame `k` of an animation: paths up to sample `k` and the footprint there.
pub fn render_frame(
    map: &OccupancyMap,
    fp: &FootprintModel,
    robot_path: &[Pose2],
    chair_path: &[Pose2],
    goal: &Pose2,
    k: usize,
    scale: u32,
) -> RgbImage {
    let k = k.min(robot_path.len().saturating_sub(1));
    let mut c = Canvas::new(map, scale);
    c.marker(goal, GOAL);
    let pts = |p: &[Pose2]| p.iter().map(|q| (q.x, q.y)).collect::<Vec<_>>();
    c.polyline(&pts(&robot_path[..=k]), ROBOT);
    c.polyline(&pts(&chair_path[..=k]), CHAIR);
    c.system(fp, &robot_path[k], &chair_path[k]);
    c.image
}
