use nalgebra::DVector;
use serde::{Deserialize, Serialize};

/// A state-space region: a closed ball, a closed axis-aligned box, or everything.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "shape", rename_all = "snake_case")]
pub enum RegionDescriptor {
    Ball { center: Vec<f64>, radius: f64 },
    #[serde(rename = "interval_box")]
    Box { lows: Vec<f64>, highs: Vec<f64> },
    All,
}

impl RegionDescriptor {
    /// Symmetric interval `[-r, r]` in one dimension.
    pub fn interval(r: f64) -> Self {
        Self::Box { lows: vec![-r], highs: vec![r] }
    }

    pub fn symmetric_box(half: &[f64]) -> Self {
        Self::Box { lows: half.iter().map(|h| -h).collect(), highs: half.to_vec() }
    }

    pub fn contains(&self, x: &DVector<f64>) -> bool {
        match self {
            Self::Ball { center, radius } => {
                let d2: f64 = x.iter().zip(center).map(|(a, c)| (a - c) * (a - c)).sum();
                d2.sqrt() <= *radius
            }
            Self::Box { lows, highs } => x
                .iter()
                .zip(lows.iter().zip(highs))
                .all(|(v, (lo, hi))| *lo <= *v && *v <= *hi),
            Self::All => x.iter().all(|v| v.is_finite()),
        }
    }

    /// `sup { |x| : x in region }`; infinite for `All`.
    pub fn max_norm(&self) -> f64 {
        match self {
            Self::Ball { center, radius } => center.iter().map(|c| c * c).sum::<f64>().sqrt() + radius,
            Self::Box { lows, highs } => lows
                .iter()
                .zip(highs)
                .map(|(lo, hi)| lo.abs().max(hi.abs()).powi(2))
                .sum::<f64>()
                .sqrt(),
            Self::All => f64::INFINITY,
        }
    }

    /// Radius of the largest origin-centred ball contained in the region.
    pub fn inner_radius(&self) -> f64 {
        match self {
            Self::Ball { center, radius } => {
                (radius - center.iter().map(|c| c * c).sum::<f64>().sqrt()).max(0.0)
            }
            Self::Box { lows, highs } => lows
                .iter()
                .zip(highs)
                .map(|(lo, hi)| (-lo).min(*hi))
                .fold(f64::INFINITY, f64::min)
                .max(0.0),
            Self::All => f64::INFINITY,
        }
    }

    pub fn is_bounded(&self) -> bool {
        !matches!(self, Self::All)
    }

    /// Coordinate-wise bounding box, if bounded.
    pub fn bounding_box(&self) -> Option<(Vec<f64>, Vec<f64>)> {
        match self {
            Self::Ball { center, radius } => Some((
                center.iter().map(|c| c - radius).collect(),
                center.iter().map(|c| c + radius).collect(),
            )),
            Self::Box { lows, highs } => Some((lows.clone(), highs.clone())),
            Self::All => None,
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn interval_membership_is_closed() {
        let r = RegionDescriptor::interval(2.0);
        assert!(r.contains(&DVector::from_vec(vec![2.0])));
        assert!(!r.contains(&DVector::from_vec(vec![2.0 + 1e-12])));
        assert_eq!(r.max_norm(), 2.0);
        assert_eq!(RegionDescriptor::All.max_norm(), f64::INFINITY);
    }
}
