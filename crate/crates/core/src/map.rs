//! Occupancy grid, robot/chair footprint geometry and collision predicates.

use std::fmt::Write as _;
use std::path::Path;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};
use crate::geometry::Pose2;

/// Row-major obstacle grid. Row 0 is the minimum-y row of the map frame.
#[derive(Clone, Debug, PartialEq)]
pub struct OccupancyMap {
    width: usize,
    height: usize,
    resolution: f64,
    origin: Pose2,
    cells: Vec<bool>,
}

impl OccupancyMap {
    /// An obstacle-free map.
    pub fn new(width: usize, height: usize, resolution: f64, origin: Pose2) -> Result<Self> {
        Self::from_cells(width, height, resolution, origin, vec![false; width * height])
    }

    pub fn from_cells(width: usize, height: usize, resolution: f64, origin: Pose2, cells: Vec<bool>) -> Result<Self> {
        if !(resolution > 0.0 && resolution.is_finite()) {
            return Err(Error::Dimension(format!("resolution must be positive, got {resolution}")));
        }
        if cells.len() != width * height {
            return Err(Error::Dimension(format!(
                "{width}x{height} map needs {} cells, got {}",
                width * height,
                cells.len()
            )));
        }
        Ok(OccupancyMap { width, height, resolution, origin, cells })
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn resolution(&self) -> f64 {
        self.resolution
    }

    pub fn origin(&self) -> Pose2 {
        self.origin
    }

    pub fn cells(&self) -> &[bool] {
        &self.cells
    }

    /// Map extent in meters along the map frame axes.
    pub fn extent(&self) -> (f64, f64) {
        (self.width as f64 * self.resolution, self.height as f64 * self.resolution)
    }

    pub fn obstacle_count(&self) -> usize {
        self.cells.iter().filter(|&&c| c).count()
    }

    pub fn cell_occupied(&self, col: usize, row: usize) -> bool {
        self.cells[row * self.width + col]
    }

    pub fn set_cell(&mut self, col: usize, row: usize, occupied: bool) {
        self.cells[row * self.width + col] = occupied;
    }

    /// Marks every cell whose center lies inside the map-frame rectangle.
    pub fn fill_rect(&mut self, x0: f64, y0: f64, x1: f64, y1: f64, occupied: bool) {
        for row in 0..self.height {
            let cy = (row as f64 + 0.5) * self.resolution;
            if cy < y0 || cy > y1 {
                continue;
            }
            for col in 0..self.width {
                let cx = (col as f64 + 0.5) * self.resolution;
                if cx >= x0 && cx <= x1 {
                    self.set_cell(col, row, occupied);
                }
            }
        }
    }

    /// World point to map-frame coordinates in meters.
    pub fn to_local(&self, x: f64, y: f64) -> (f64, f64) {
        self.origin.inverse().transform_point(x, y)
    }

    /// Cell containing a world point, if inside the map.
    pub fn world_to_cell(&self, x: f64, y: f64) -> Option<(usize, usize)> {
        let (lx, ly) = self.to_local(x, y);
        self.local_to_cell(lx, ly)
    }

    fn local_to_cell(&self, lx: f64, ly: f64) -> Option<(usize, usize)> {
        let c = (lx / self.resolution).floor();
        let r = (ly / self.resolution).floor();
        if c < 0.0 || r < 0.0 || c >= self.width as f64 || r >= self.height as f64 {
            None
        } else {
            Some((c as usize, r as usize))
        }
    }

    /// World coordinates of a cell center.
    pub fn cell_center(&self, col: usize, row: usize) -> (f64, f64) {
        self.origin.transform_point((col as f64 + 0.5) * self.resolution, (row as f64 + 0.5) * self.resolution)
    }

    /// Obstacle or outside the map.
    pub fn point_occupied(&self, x: f64, y: f64) -> bool {
        match self.world_to_cell(x, y) {
            Some((c, r)) => self.cell_occupied(c, r),
            None => true,
        }
    }

    fn local_point_occupied(&self, lx: f64, ly: f64) -> bool {
        match self.local_to_cell(lx, ly) {
            Some((c, r)) => self.cell_occupied(c, r),
            None => true,
        }
    }

    /// Center of the nearest free cell within `max_dist` of a world point.
    pub fn nearest_free(&self, x: f64, y: f64, max_dist: f64) -> Option<(f64, f64)> {
        let (lx, ly) = self.to_local(x, y);
        let reach = (max_dist / self.resolution).ceil() as i64 + 1;
        let c0 = (lx / self.resolution).floor() as i64;
        let r0 = (ly / self.resolution).floor() as i64;
        let mut best: Option<(f64, usize, usize)> = None;
        for r in (r0 - reach)..=(r0 + reach) {
            for c in (c0 - reach)..=(c0 + reach) {
                if r < 0 || c < 0 || r >= self.height as i64 || c >= self.width as i64 {
                    continue;
                }
                let (c, r) = (c as usize, r as usize);
                if self.cell_occupied(c, r) {
                    continue;
                }
                let cx = (c as f64 + 0.5) * self.resolution;
                let cy = (r as f64 + 0.5) * self.resolution;
                let d = (cx - lx).hypot(cy - ly);
                if d <= max_dist && best.map_or(true, |(bd, _, _)| d < bd) {
                    best = Some((d, c, r));
                }
            }
        }
        best.map(|(_, c, r)| self.cell_center(c, r))
    }

    pub fn parse(text: &str) -> Result<Self> {
        let mut lines = text.lines();
        let header = lines.next().ok_or_else(|| Error::parse(1, "empty map file"))?;
        let fields: Vec<&str> = header.split_whitespace().collect();
        if fields.len() != 6 {
            return Err(Error::parse(1, format!("expected 6 header fields, got {}", fields.len())));
        }
        let width: usize = fields[0].parse().map_err(|e| Error::parse(1, format!("width: {e}")))?;
        let height: usize = fields[1].parse().map_err(|e| Error::parse(1, format!("height: {e}")))?;
        let mut nums = [0.0f64; 4];
        for (i, slot) in nums.iter_mut().enumerate() {
            *slot = fields[i + 2].parse().map_err(|e| Error::parse(1, format!("field {}: {e}", i + 3)))?;
        }
        let [resolution, ox, oy, oth] = nums;
        let mut cells = Vec::with_capacity(width * height);
        let mut rows = 0;
        for (i, line) in lines.enumerate() {
            let line = line.trim_end();
            if line.is_empty() {
                continue;
            }
            let lineno = i + 2;
            if rows == height {
                return Err(Error::Dimension(format!("more than {height} rows (line {lineno})")));
            }
            if line.chars().count() != width {
                return Err(Error::Dimension(format!(
                    "line {lineno}: expected {width} columns, got {}",
                    line.chars().count()
                )));
            }
            for ch in line.chars() {
                match ch {
                    '.' => cells.push(false),
                    '#' => cells.push(true),
                    other => return Err(Error::parse(lineno, format!("unexpected character {other:?}"))),
                }
            }
            rows += 1;
        }
        if rows != height {
            return Err(Error::Dimension(format!("expected {height} rows, got {rows}")));
        }
        // Keep the header heading verbatim so save() reproduces the file.
        let origin = Pose2 { x: ox, y: oy, theta: oth };
        Self::from_cells(width, height, resolution, origin, cells)
    }

    pub fn to_text(&self) -> String {
        let mut out = String::with_capacity((self.width + 1) * self.height + 64);
        let _ = writeln!(
            out,
            "{} {} {} {} {} {}",
            self.width, self.height, self.resolution, self.origin.x, self.origin.y, self.origin.theta
        );
        for row in 0..self.height {
            for col in 0..self.width {
                out.push(if self.cell_occupied(col, row) { '#' } else { '.' });
            }
            out.push('\n');
        }
        out
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

    /// Content hash of the canonical text form, hex encoded.
    pub fn content_hash(&self) -> String {
        hex::encode(Sha256::digest(self.to_text().as_bytes()))
    }
}

/// Planar footprint of the robot rectangle and the chair disc.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct FootprintModel {
    pub robot_length: f64,
    pub robot_width: f64,
    pub chair_radius: f64,
    /// Robot center to chair center along the robot heading.
    pub center_offset: f64,
}

impl Default for FootprintModel {
    fn default() -> Self {
        FootprintModel { robot_length: 1.1, robot_width: 0.5, chair_radius: 0.3, center_offset: 0.7 }
    }
}

impl FootprintModel {
    pub fn validate(&self) -> Result<()> {
        let ok = [self.robot_length, self.robot_width, self.chair_radius, self.center_offset]
            .iter()
            .all(|v| *v > 0.0 && v.is_finite());
        if ok {
            Ok(())
        } else {
            Err(Error::Config(format!("footprint dimensions must be positive: {self:?}")))
        }
    }

    /// Every dimension grown by `margin` on each side; the center offset is unchanged.
    pub fn inflated(&self, margin: f64) -> FootprintModel {
        FootprintModel {
            robot_length: self.robot_length + 2.0 * margin,
            robot_width: self.robot_width + 2.0 * margin,
            chair_radius: self.chair_radius + margin,
            center_offset: self.center_offset,
        }
    }

    /// Chair pose relative to the robot when rigidly attached.
    pub fn nominal_chair_in_robot(&self) -> Pose2 {
        Pose2::new(self.center_offset, 0.0, 0.0)
    }

    /// Robot pose directly behind a chair pose.
    pub fn robot_for_chair(&self, chair: &Pose2) -> Pose2 {
        chair.compose(&Pose2::new(-self.center_offset, 0.0, 0.0))
    }

    pub fn chair_for_robot(&self, robot: &Pose2) -> Pose2 {
        robot.compose(&self.nominal_chair_in_robot())
    }
}

/// Lattice offsets `k·spacing` covering `[-half, half]`; nested as `half` shrinks.
fn lattice(half: f64, spacing: f64) -> Vec<f64> {
    let n = (half / spacing + 1e-9).floor() as i64;
    (-n..=n).map(|k| k as f64 * spacing).collect()
}

/// Interior sample points of both footprints at half-resolution spacing.
#[derive(Clone, Debug)]
pub struct CollisionChecker<'a> {
    map: &'a OccupancyMap,
    footprint: FootprintModel,
    chair_pts: Vec<(f64, f64)>,
    robot_pts: Vec<(f64, f64)>,
}

impl<'a> CollisionChecker<'a> {
    pub fn new(map: &'a OccupancyMap, footprint: FootprintModel) -> Self {
        let h = map.resolution() / 2.0;
        let r = footprint.chair_radius;
        let mut chair_pts = Vec::new();
        for &x in &lattice(r, h) {
            for &y in &lattice(r, h) {
                if x * x + y * y <= r * r + 1e-12 {
                    chair_pts.push((x, y));
                }
            }
        }
        let mut robot_pts = Vec::new();
        for &x in &lattice(footprint.robot_length / 2.0, h) {
            for &y in &lattice(footprint.robot_width / 2.0, h) {
                robot_pts.push((x, y));
            }
        }
        // Center samples first: they hit obstacles most often.
        chair_pts.sort_by(|a, b| (a.0.hypot(a.1)).total_cmp(&b.0.hypot(b.1)));
        robot_pts.sort_by(|a, b| (a.0.hypot(a.1)).total_cmp(&b.0.hypot(b.1)));
        CollisionChecker { map, footprint, chair_pts, robot_pts }
    }

    pub fn map(&self) -> &OccupancyMap {
        self.map
    }

    pub fn footprint(&self) -> &FootprintModel {
        &self.footprint
    }

    fn any_occupied(&self, pose: &Pose2, pts: &[(f64, f64)]) -> bool {
        let local = pose.relative_to(&self.map.origin);
        let (s, c) = local.theta.sin_cos();
        pts.iter().any(|&(px, py)| self.map.local_point_occupied(local.x + c * px - s * py, local.y + s * px + c * py))
    }

    pub fn chair_collides(&self, chair: &Pose2) -> bool {
        self.any_occupied(chair, &self.chair_pts)
    }

    pub fn robot_collides(&self, robot: &Pose2) -> bool {
        self.any_occupied(robot, &self.robot_pts)
    }

    /// Chair and robot at independent poses.
    pub fn pair_collides(&self, robot: &Pose2, chair: &Pose2) -> bool {
        self.chair_collides(chair) || self.robot_collides(robot)
    }

    /// Rigid system with the robot directly behind the chair.
    pub fn system_collides(&self, chair: &Pose2) -> bool {
        self.pair_collides(&self.footprint.robot_for_chair(chair), chair)
    }

    /// Chair sample points (world frame) that land in occupied space.
    pub fn chair_contacts(&self, chair: &Pose2) -> Vec<(f64, f64)> {
        self.chair_pts
            .iter()
            .map(|&(px, py)| chair.transform_point(px, py))
            .filter(|&(x, y)| self.map.point_occupied(x, y))
            .collect()
    }
}

pub fn point_occupied(map: &OccupancyMap, x: f64, y: f64) -> bool {
    map.point_occupied(x, y)
}

pub fn system_collides(map: &OccupancyMap, fp: &FootprintModel, chair_pose: &Pose2) -> bool {
    CollisionChecker::new(map, *fp).system_collides(chair_pose)
}
