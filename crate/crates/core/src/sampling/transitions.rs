//! Basin-to-basin transition counting with hysteresis cores.

use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq)]
pub struct Basin {
    pub center: Vec<f64>,
    pub core_radius: f64,
}

/// Disjoint basin cores under a Euclidean or minimum-image metric.
#[derive(Debug, Clone, PartialEq)]
pub struct BasinSet {
    basins: Vec<Basin>,
    period: Option<f64>,
}

impl BasinSet {
    pub fn new(basins: Vec<Basin>, period: Option<f64>) -> Result<Self> {
        if basins.is_empty() {
            return Err(Error::argument("no basins defined"));
        }
        let dim = basins[0].center.len();
        if basins.iter().any(|b| b.center.len() != dim || !(b.core_radius > 0.0)) {
            return Err(Error::argument("basins need a common dimension and positive core radii"));
        }
        let set = Self { basins, period };
        for i in 0..set.basins.len() {
            for j in i + 1..set.basins.len() {
                let (a, b) = (&set.basins[i], &set.basins[j]);
                if set.distance(&a.center, &b.center) < a.core_radius + b.core_radius {
                    return Err(Error::argument(format!("cores of basins {i} and {j} overlap")));
                }
            }
        }
        Ok(set)
    }

    pub fn len(&self) -> usize {
        self.basins.len()
    }

    pub fn is_empty(&self) -> bool {
        self.basins.is_empty()
    }

    pub fn distance(&self, a: &[f64], b: &[f64]) -> f64 {
        a.iter()
            .zip(b)
            .map(|(x, y)| {
                let mut d = (x - y).abs();
                if let Some(p) = self.period {
                    d %= p;
                    d = d.min(p - d);
                }
                d * d
            })
            .sum::<f64>()
            .sqrt()
    }

    /// Index of the core containing `point`, if any.
    pub fn core_of(&self, point: &[f64]) -> Option<usize> {
        self.basins
            .iter()
            .position(|b| self.distance(point, &b.center) < b.core_radius)
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct TransitionCounts {
    /// `matrix[a][b]` counts entries into core `b` whose previous core was `a`.
    pub matrix: Vec<Vec<usize>>,
    /// Entries into each core, including the first.
    pub visits: Vec<usize>,
}

impl TransitionCounts {
    pub fn total(&self) -> usize {
        self.matrix.iter().flatten().sum()
    }

    /// Completed `a -> b -> a` cycles.
    pub fn round_trips(&self, a: usize, b: usize) -> usize {
        self.matrix[a][b].min(self.matrix[b][a])
    }
}

/// A transition into core `b` is counted only when the last core occupied
/// was a different one, so chatter at a boundary never counts.
pub fn count_transitions<P: AsRef<[f64]>>(points: &[P], basins: &BasinSet) -> TransitionCounts {
    let n = basins.len();
    let mut matrix = vec![vec![0; n]; n];
    let mut visits = vec![0; n];
    let mut last: Option<usize> = None;
    for p in points {
        if let Some(k) = basins.core_of(p.as_ref()) {
            if last != Some(k) {
                visits[k] += 1;
                if let Some(prev) = last {
                    matrix[prev][k] += 1;
                }
                last = Some(k);
            }
        }
    }
    TransitionCounts { matrix, visits }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn two() -> BasinSet {
        BasinSet::new(
            vec![
                Basin { center: vec![-1.0], core_radius: 0.3 },
                Basin { center: vec![1.0], core_radius: 0.3 },
            ],
            None,
        )
        .unwrap()
    }

    #[test]
    fn there_and_back() {
        let trace = [[-1.0], [0.0], [1.0], [0.2], [-0.9]];
        let c = count_transitions(&trace, &two());
        assert_eq!(c.total(), 2);
        assert_eq!(c.round_trips(0, 1), 1);
        assert_eq!(c.visits, vec![2, 1]);
    }

    #[test]
    fn boundary_touch_is_not_a_transition() {
        let trace = [[-1.0], [0.0], [0.69], [0.0], [-1.0], [0.7]];
        assert_eq!(count_transitions(&trace, &two()).total(), 0);
    }

    #[test]
    fn overlapping_cores_rejected() {
        let b = vec![
            Basin { center: vec![0.0], core_radius: 0.6 },
            Basin { center: vec![1.0], core_radius: 0.6 },
        ];
        assert!(BasinSet::new(b, None).is_err());
    }

    #[test]
    fn periodic_metric_wraps() {
        let set = BasinSet::new(
            vec![
                Basin { center: vec![3.0], core_radius: 0.3 },
                Basin { center: vec![0.0], core_radius: 0.3 },
            ],
            Some(2.0 * std::f64::consts::PI),
        )
        .unwrap();
        assert_eq!(set.core_of(&[-3.2]), Some(0));
    }
}
