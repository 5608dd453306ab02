use serde::{Deserialize, Serialize};
use thiserror::Error;

use super::Vec2;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Error)]
pub enum GeometryError {
    #[error("formation has no members")]
    EmptyFormation,
}

/// A formation seen as a disc moving with its leader's velocity.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FormationGeometry {
    pub center: Vec2,
    pub radius: f64,
    pub velocity: Vec2,
}

impl FormationGeometry {
    /// Center and equivalent radius of `positions`, moving at `velocity`.
    pub fn of(positions: &[Vec2], velocity: Vec2) -> Result<Self, GeometryError> {
        let center = formation_center(positions)?;
        let radius = formation_radius(center, positions)?;
        Ok(Self { center, radius, velocity })
    }
}

/// Arithmetic mean of member positions.
pub fn formation_center(positions: &[Vec2]) -> Result<Vec2, GeometryError> {
    if positions.is_empty() {
        return Err(GeometryError::EmptyFormation);
    }
    let sum: Vec2 = positions.iter().copied().sum();
    Ok(sum / positions.len() as f64)
}

/// Largest member distance from `center`.
pub fn formation_radius(center: Vec2, positions: &[Vec2]) -> Result<f64, GeometryError> {
    if positions.is_empty() {
        return Err(GeometryError::EmptyFormation);
    }
    Ok(positions.iter().map(|p| p.distance(center)).fold(0.0, f64::max))
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn triangle_center_and_radius() {
        let pts = [Vec2::new(0.0, 0.0), Vec2::new(2.0, 0.0), Vec2::new(1.0, 3.0)];
        let c = formation_center(&pts).unwrap();
        assert_eq!(c, Vec2::new(1.0, 1.0));
        // max(√2, √2, 2)
        assert!((formation_radius(c, &pts).unwrap() - 2.0).abs() < 1e-12);
    }

    #[test]
    fn singleton() {
        let pts = [Vec2::new(5.0, 5.0)];
        let c = formation_center(&pts).unwrap();
        assert_eq!(c, Vec2::new(5.0, 5.0));
        assert_eq!(formation_radius(c, &pts).unwrap(), 0.0);
    }

    #[test]
    fn empty_is_an_error() {
        assert_eq!(formation_center(&[]), Err(GeometryError::EmptyFormation));
        assert_eq!(formation_radius(Vec2::ZERO, &[]), Err(GeometryError::EmptyFormation));
    }

    fn points(n: std::ops::Range<usize>) -> impl Strategy<Value = Vec<Vec2>> {
        prop::collection::vec((-5e4..5e4f64, -5e4..5e4f64).prop_map(|(x, y)| Vec2::new(x, y)), n)
    }

    fn diameter(p: &[Vec2]) -> f64 {
        let mut d: f64 = 0.0;
        for a in p {
            for b in p {
                d = d.max(a.distance(*b));
            }
        }
        d
    }

    proptest! {
        #[test]
        fn radius_bounded_by_diameter(p in points(1..40)) {
            let c = formation_center(&p).unwrap();
            let r = formation_radius(c, &p).unwrap();
            let d = diameter(&p);
            prop_assert!(r <= d + 1e-9);
            prop_assert!(r >= d / 2.0 - 1e-9);
        }

        #[test]
        fn translation_equivariance(p in points(1..40), tx in -1e4..1e4f64, ty in -1e4..1e4f64) {
            let t = Vec2::new(tx, ty);
            let moved: Vec<Vec2> = p.iter().map(|q| *q + t).collect();
            let c0 = formation_center(&p).unwrap();
            let c1 = formation_center(&moved).unwrap();
            prop_assert!((c1 - (c0 + t)).norm() < 1e-9);
            let r0 = formation_radius(c0, &p).unwrap();
            let r1 = formation_radius(c1, &moved).unwrap();
            prop_assert!((r0 - r1).abs() < 1e-9);
        }
    }
}
