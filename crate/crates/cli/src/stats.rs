use serde::Serialize;

/// Summary of a sample. `stdev` uses the `n - 1` denominator.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Summary {
    pub count: usize,
    pub mean: f64,
    pub stdev: f64,
    pub median: f64,
    pub min: f64,
    pub max: f64,
}

impl Summary {
    /// `None` for an empty sample.
    pub fn of(values: &[f64]) -> Option<Summary> {
        let count = values.len();
        if count == 0 {
            return None;
        }
        let mean = values.iter().sum::<f64>() / count as f64;
        let stdev = if count > 1 {
            (values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (count - 1) as f64).sqrt()
        } else {
            0.0
        };
        let mut sorted = values.to_vec();
        sorted.sort_by(f64::total_cmp);
        let median = if count % 2 == 1 {
            sorted[count / 2]
        } else {
            0.5 * (sorted[count / 2 - 1] + sorted[count / 2])
        };
        Some(Summary {
            count,
            mean,
            stdev,
            median,
            min: sorted[0],
            max: sorted[count - 1],
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn small_sample() {
        let s = Summary::of(&[3.0, 1.0, 2.0, 6.0]).unwrap();
        assert_eq!(s.count, 4);
        assert_eq!(s.mean, 3.0);
        assert_eq!(s.median, 2.5);
        assert_eq!((s.min, s.max), (1.0, 6.0));
        assert!((s.stdev - (14.0f64 / 3.0).sqrt()).abs() < 1e-15);
    }

    #[test]
    fn singleton_and_empty() {
        let s = Summary::of(&[-0.5]).unwrap();
        assert_eq!((s.mean, s.stdev, s.median), (-0.5, 0.0, -0.5));
        assert!(Summary::of(&[]).is_none());
    }
}
