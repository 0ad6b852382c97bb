//! Bundled room layouts, evaluation routes and demonstration regions.
//!
//! Both rooms are 12 m × 8 m at 10 cm resolution. A central island and a divider wall
//! below it split the south half into an east and a west bay; the bays connect around
//! the island's north side and through a narrow doorway in the divider, which the
//! center block closes.

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::Pose2;
use crate::map::OccupancyMap;

pub const TRAINING_MAP: &str = include_str!("../assets/training.map");
pub const CARPET_MAP: &str = include_str!("../assets/carpet.map");

const WIDTH: usize = 120;
const HEIGHT: usize = 80;
const RES: f64 = 0.1;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Layout {
    Training,
    Carpet,
}

impl Layout {
    pub fn name(self) -> &'static str {
        match self {
            Layout::Training => "training",
            Layout::Carpet => "carpet",
        }
    }

    pub fn parse(name: &str) -> Result<Self> {
        match name.trim_end_matches(".map") {
            "training" => Ok(Layout::Training),
            "carpet" => Ok(Layout::Carpet),
            other => Err(Error::Config(format!("unknown layout {other:?}"))),
        }
    }

    /// The bundled map for this layout.
    pub fn map(self) -> OccupancyMap {
        let text = match self {
            Layout::Training => TRAINING_MAP,
            Layout::Carpet => CARPET_MAP,
        };
        OccupancyMap::parse(text).expect("bundled map parses")
    }

    pub fn map_with_block(self, block_center: bool) -> OccupancyMap {
        let mut map = self.map();
        if block_center {
            add_center_block(&mut map);
        }
        map
    }
}

fn walls(map: &mut OccupancyMap) {
    let (w, h) = map.extent();
    map.fill_rect(0.0, 0.0, w, RES, true);
    map.fill_rect(0.0, h - RES, w, h, true);
    map.fill_rect(0.0, 0.0, RES, h, true);
    map.fill_rect(w - RES, 0.0, w, h, true);
}

/// Central island with a divider wall running from it to the south wall; the divider
/// has a doorway at y ∈ [0.8, 1.8].
fn island(map: &mut OccupancyMap) {
    map.fill_rect(5.2, 2.3, 7.3, 3.7, true);
    map.fill_rect(5.2, 0.0, 5.6, 0.8, true);
    map.fill_rect(5.2, 1.8, 5.6, 2.3, true);
}

/// Builds the open layout from scratch; the bundled file is this output.
pub fn generate_training() -> OccupancyMap {
    let mut map = OccupancyMap::new(WIDTH, HEIGHT, RES, Pose2::IDENTITY).expect("valid size");
    walls(&mut map);
    island(&mut map);
    // Desk row along the north side and a cabinet in the west bay.
    map.fill_rect(3.0, 6.6, 9.0, 7.9, true);
    map.fill_rect(0.0, 0.0, 1.2, 1.0, true);
    map
}

/// Same room with extra furniture narrowing the corridors.
pub fn generate_carpet() -> OccupancyMap {
    let mut map = generate_training();
    map.fill_rect(3.0, 5.9, 9.0, 6.6, true);
    map.fill_rect(10.4, 0.0, 12.0, 1.6, true);
    map.fill_rect(0.0, 3.8, 1.0, 6.2, true);
    map.fill_rect(9.8, 5.0, 10.6, 5.8, true);
    map.fill_rect(2.4, 0.0, 3.2, 0.9, true);
    map
}

/// Closes the doorway through the divider.
pub fn add_center_block(map: &mut OccupancyMap) {
    map.fill_rect(5.2, 0.8, 5.6, 1.8, true);
}

/// One evaluation goal along the route.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct RouteGoal {
    /// Route length in meters.
    pub distance: f64,
    pub turns: u32,
    pub goal: Pose2,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TestRoute {
    pub start: Pose2,
    pub goals: Vec<RouteGoal>,
}

/// Route from the east bay around the island into the west bay. The goals lie about 2,
/// 6 and 10 m along it and need one, two and three 90° left turns.
pub fn test_route() -> TestRoute {
    use std::f64::consts::{FRAC_PI_2, PI};
    TestRoute {
        start: Pose2::new(7.05, 1.55, 0.0),
        goals: vec![
            RouteGoal { distance: 2.0, turns: 1, goal: Pose2::new(8.05, 2.55, FRAC_PI_2) },
            RouteGoal { distance: 6.0, turns: 2, goal: Pose2::new(5.25, 4.55, PI) },
            RouteGoal { distance: 10.0, turns: 3, goal: Pose2::new(3.65, 1.35, -FRAC_PI_2) },
        ],
    }
}

/// Axis-aligned region of chair positions with free heading.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Region {
    pub x0: f64,
    pub y0: f64,
    pub x1: f64,
    pub y1: f64,
}

impl Region {
    pub fn sample(&self, rng: &mut impl Rng) -> Pose2 {
        Pose2::new(
            rng.gen_range(self.x0..self.x1),
            rng.gen_range(self.y0..self.y1),
            rng.gen_range(-std::f64::consts::PI..std::f64::consts::PI),
        )
    }

    pub fn contains(&self, x: f64, y: f64) -> bool {
        (self.x0..=self.x1).contains(&x) && (self.y0..=self.y1).contains(&y)
    }
}

/// Start/goal regions for demonstrations: the two bays, the north corridor and the
/// east end of the room.
pub fn demo_regions() -> Vec<Region> {
    vec![
        Region { x0: 6.2, y0: 1.0, x1: 9.5, y1: 3.0 },
        Region { x0: 1.6, y0: 1.6, x1: 4.4, y1: 3.2 },
        Region { x0: 2.0, y0: 4.4, x1: 8.5, y1: 5.4 },
        Region { x0: 9.8, y0: 2.0, x1: 11.0, y1: 6.2 },
    ]
}
