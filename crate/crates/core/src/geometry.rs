//! SE(2) poses and the frame algebra shared by planning, training and execution.

use std::f64::consts::{PI, TAU};
use std::fmt;

use serde::{Deserialize, Serialize};

/// Wraps an angle into `(-π, π]`.
pub fn normalize_angle(theta: f64) -> f64 {
    let mut a = theta % TAU;
    if a <= -PI {
        a += TAU;
    } else if a > PI {
        a -= TAU;
    }
    a
}

/// Signed shortest rotation taking `from` onto `to`.
pub fn angle_diff(to: f64, from: f64) -> f64 {
    normalize_angle(to - from)
}

/// A planar rigid pose: position in meters, heading in radians.
#[derive(Clone, Copy, Debug, PartialEq, Default, Serialize, Deserialize)]
pub struct Pose2 {
    pub x: f64,
    pub y: f64,
    pub theta: f64,
}

impl Pose2 {
    pub const IDENTITY: Pose2 = Pose2 { x: 0.0, y: 0.0, theta: 0.0 };

    /// Builds a pose, wrapping the heading.
    pub fn new(x: f64, y: f64, theta: f64) -> Self {
        Pose2 { x, y, theta: normalize_angle(theta) }
    }

    /// `self` followed by `other`, with `other` expressed in `self`'s frame.
    pub fn compose(&self, other: &Pose2) -> Pose2 {
        let (s, c) = self.theta.sin_cos();
        Pose2::new(self.x + c * other.x - s * other.y, self.y + s * other.x + c * other.y, self.theta + other.theta)
    }

    pub fn inverse(&self) -> Pose2 {
        let (s, c) = self.theta.sin_cos();
        Pose2::new(-c * self.x - s * self.y, s * self.x - c * self.y, -self.theta)
    }

    /// `self` expressed in the frame of `frame`, i.e. `frame⁻¹ ∘ self`.
    pub fn relative_to(&self, frame: &Pose2) -> Pose2 {
        frame.inverse().compose(self)
    }

    /// Maps a point given in this pose's frame into the parent frame.
    pub fn transform_point(&self, px: f64, py: f64) -> (f64, f64) {
        let (s, c) = self.theta.sin_cos();
        (self.x + c * px - s * py, self.y + s * px + c * py)
    }

    pub fn position_distance(&self, other: &Pose2) -> f64 {
        (self.x - other.x).hypot(self.y - other.y)
    }

    pub fn heading_distance(&self, other: &Pose2) -> f64 {
        angle_diff(self.theta, other.theta).abs()
    }

    /// Homogeneous 3×3 matrix, row-major.
    pub fn to_matrix(&self) -> [[f64; 3]; 3] {
        let (s, c) = self.theta.sin_cos();
        [[c, -s, self.x], [s, c, self.y], [0.0, 0.0, 1.0]]
    }

    pub fn from_matrix(m: &[[f64; 3]; 3]) -> Pose2 {
        Pose2::new(m[0][2], m[1][2], m[1][0].atan2(m[0][0]))
    }

    /// True when positions agree within `tol` and headings agree within `tol` radians.
    pub fn approx_eq(&self, other: &Pose2, tol: f64) -> bool {
        (self.x - other.x).abs() <= tol && (self.y - other.y).abs() <= tol && self.heading_distance(other) <= tol
    }
}

impl fmt::Display for Pose2 {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "({:.3}, {:.3}, {:.1}°)", self.x, self.y, self.theta.to_degrees())
    }
}

impl std::str::FromStr for Pose2 {
    type Err = String;

    /// Parses `x,y,theta` with theta in radians.
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let parts: Vec<&str> = s.split(',').map(str::trim).collect();
        if parts.len() != 3 {
            return Err(format!("expected x,y,theta but got {s:?}"));
        }
        let mut v = [0.0; 3];
        for (slot, p) in v.iter_mut().zip(&parts) {
            *slot = p.parse().map_err(|e| format!("bad number {p:?}: {e}"))?;
        }
        Ok(Pose2::new(v[0], v[1], v[2]))
    }
}

/// Re-expresses every pose relative to `goal`.
pub fn transform_to_frame(poses: &[Pose2], goal: &Pose2) -> Vec<Pose2> {
    let inv = goal.inverse();
    poses.iter().map(|p| inv.compose(p)).collect()
}

/// Maps goal-relative poses back into the global frame.
pub fn transform_from_frame(poses: &[Pose2], goal: &Pose2) -> Vec<Pose2> {
    poses.iter().map(|p| goal.compose(p)).collect()
}

/// Euclidean distance plus `angular_weight` meters per radian of wrapped heading error.
pub fn pose_distance(a: &Pose2, b: &Pose2, angular_weight: f64) -> f64 {
    a.position_distance(b) + angular_weight * a.heading_distance(b)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn mat_mul(a: &[[f64; 3]; 3], b: &[[f64; 3]; 3]) -> [[f64; 3]; 3] {
        let mut out = [[0.0; 3]; 3];
        for i in 0..3 {
            for j in 0..3 {
                out[i][j] = (0..3).map(|k| a[i][k] * b[k][j]).sum();
            }
        }
        out
    }

    fn pose() -> impl Strategy<Value = Pose2> {
        (-50.0..50.0f64, -50.0..50.0f64, -10.0..10.0f64).prop_map(|(x, y, t)| Pose2::new(x, y, t))
    }

    #[test]
    fn quarter_turn_compose() {
        let a = Pose2::new(0.0, 0.0, PI / 2.0);
        let b = Pose2::new(1.0, 0.0, 0.0);
        assert!(a.compose(&b).approx_eq(&Pose2::new(0.0, 1.0, PI / 2.0), 1e-12));
        let p = Pose2::new(1.5, -2.0, 0.3);
        assert_eq!(Pose2::IDENTITY.compose(&p), p);
    }

    #[test]
    fn inverse_of_translation() {
        assert_eq!(Pose2::IDENTITY.inverse(), Pose2::IDENTITY);
        let inv = Pose2::new(1.0, 0.0, 0.0).inverse();
        assert!(inv.approx_eq(&Pose2::new(-1.0, 0.0, 0.0), 1e-15));
    }

    #[test]
    fn normalization_range() {
        assert_eq!(normalize_angle(PI), PI);
        assert_eq!(normalize_angle(-PI), PI);
        assert!((normalize_angle(3.0 * PI) - PI).abs() < 1e-12);
        assert!((normalize_angle(-0.5) + 0.5).abs() < 1e-15);
    }

    #[test]
    fn distance_examples() {
        let o = Pose2::IDENTITY;
        assert_eq!(pose_distance(&o, &o, 0.5), 0.0);
        assert_eq!(pose_distance(&o, &Pose2::new(3.0, 4.0, 0.0), 7.0), 5.0);
        assert!((pose_distance(&o, &Pose2::new(0.0, 0.0, PI), 0.5) - 0.5 * PI).abs() < 1e-15);
    }

    #[test]
    fn frame_edge_cases() {
        let g = Pose2::new(2.0, -1.0, 1.2);
        assert!(transform_to_frame(&[], &g).is_empty());
        let rel = transform_to_frame(&[g], &g);
        assert!(rel[0].approx_eq(&Pose2::IDENTITY, 1e-12));
    }

    #[test]
    fn parse_pose() {
        let p: Pose2 = "1,2.5,-0.5".parse().unwrap();
        assert_eq!(p, Pose2::new(1.0, 2.5, -0.5));
        assert!("1,2".parse::<Pose2>().is_err());
    }

    proptest! {
        #[test]
        fn compose_matches_matrix_product(a in pose(), b in pose()) {
            let oracle = Pose2::from_matrix(&mat_mul(&a.to_matrix(), &b.to_matrix()));
            prop_assert!(a.compose(&b).approx_eq(&oracle, 1e-9));
        }

        #[test]
        fn compose_with_inverse_is_identity(a in pose()) {
            prop_assert!(a.compose(&a.inverse()).approx_eq(&Pose2::IDENTITY, 1e-9));
            prop_assert!(a.compose(&Pose2::IDENTITY).approx_eq(&a, 1e-12));
        }

        #[test]
        fn transform_round_trips(poses in proptest::collection::vec(pose(), 0..20), g in pose()) {
            let rel = transform_to_frame(&poses, &g);
            prop_assert_eq!(rel.len(), poses.len());
            for (r, p) in rel.iter().zip(&poses) {
                prop_assert!(g.compose(r).approx_eq(p, 1e-9));
                prop_assert!(r.theta > -PI && r.theta <= PI);
            }
        }

        #[test]
        fn distance_triangle_and_symmetry(a in pose(), b in pose(), c in pose(), w in 0.0..2.0f64) {
            let ab = pose_distance(&a, &b, w);
            prop_assert!((ab - pose_distance(&b, &a, w)).abs() < 1e-12);
            prop_assert!(pose_distance(&a, &c, w) <= ab + pose_distance(&b, &c, w) + 1e-9);
        }
    }
}
