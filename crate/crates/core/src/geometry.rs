use serde::{Deserialize, Serialize};

/// Axis-aligned box, one `[lo, hi]` interval per axis.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CorridorBox {
    pub lo: Vec<f64>,
    pub hi: Vec<f64>,
}

impl CorridorBox {
    pub fn new(lo: Vec<f64>, hi: Vec<f64>) -> Self {
        assert_eq!(lo.len(), hi.len(), "box bounds must share a dimension");
        Self { lo, hi }
    }

    pub fn unbounded(axes: usize) -> Self {
        Self {
            lo: vec![f64::NEG_INFINITY; axes],
            hi: vec![f64::INFINITY; axes],
        }
    }

    pub fn axes(&self) -> usize {
        self.lo.len()
    }

    pub fn is_bounded(&self) -> bool {
        self.lo.iter().chain(&self.hi).all(|v| v.is_finite())
    }

    pub fn contains(&self, point: &[f64], tol: f64) -> bool {
        point
            .iter()
            .enumerate()
            .all(|(a, &p)| p >= self.lo[a] - tol && p <= self.hi[a] + tol)
    }

    #[inline]
    pub fn clamp_axis(&self, axis: usize, value: f64) -> f64 {
        value.clamp(self.lo[axis], self.hi[axis])
    }

    /// Distance by which `point` leaves the box (0 inside).
    pub fn violation(&self, point: &[f64]) -> f64 {
        point
            .iter()
            .enumerate()
            .map(|(a, &p)| (self.lo[a] - p).max(p - self.hi[a]).max(0.0))
            .fold(0.0, f64::max)
    }

    /// Intersection, or `None` when the boxes are disjoint.
    pub fn intersection(&self, other: &Self) -> Option<Self> {
        let lo: Vec<f64> = self.lo.iter().zip(&other.lo).map(|(a, b)| a.max(*b)).collect();
        let hi: Vec<f64> = self.hi.iter().zip(&other.hi).map(|(a, b)| a.min(*b)).collect();
        if lo.iter().zip(&hi).all(|(l, h)| l <= h) {
            Some(Self { lo, hi })
        } else {
            None
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn containment_and_violation() {
        let b = CorridorBox::new(vec![0.0, 0.0], vec![2.0, 1.0]);
        assert!(b.contains(&[1.0, 0.5], 0.0));
        assert!(!b.contains(&[2.5, 0.5], 0.0));
        assert_eq!(b.violation(&[2.5, -1.0]), 1.0);
        assert_eq!(b.violation(&[1.0, 1.0]), 0.0);
        assert!(CorridorBox::unbounded(2).contains(&[1e9, -1e9], 0.0));
        assert!(!CorridorBox::unbounded(3).is_bounded());
    }

    #[test]
    fn overlap() {
        let a = CorridorBox::new(vec![0.0, 0.0], vec![2.0, 2.0]);
        let b = CorridorBox::new(vec![2.0, 1.0], vec![3.0, 3.0]);
        let c = CorridorBox::new(vec![2.5, 0.0], vec![3.0, 3.0]);
        assert_eq!(a.intersection(&b).unwrap(), CorridorBox::new(vec![2.0, 1.0], vec![2.0, 2.0]));
        assert!(a.intersection(&c).is_none());
    }
}
