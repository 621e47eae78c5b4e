//! Keypoint evaluation: MAE, PCKh (normalized by cube hull size), MAEc
//! (inlier MAE), and the false-negative rate over cube detections.

use serde::{Deserialize, Serialize};
use thiserror::Error;

pub const DEFAULT_EPSILON: f64 = 0.5;

#[derive(Debug, Error)]
pub enum MetricsError {
    #[error("empty sample list")]
    EmptyInput,
}

/// One vertex error observation: pixel distance `d` to ground truth and the
/// hull area `A` of the vertex's own cube.
#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct MetricSample {
    pub d: f64,
    pub hull_area: f64,
}

impl MetricSample {
    pub fn new(predicted: (f64, f64), truth: (f64, f64), hull_area: f64) -> Self {
        let du = predicted.0 - truth.0;
        let dv = predicted.1 - truth.1;
        MetricSample { d: (du * du + dv * dv).sqrt(), hull_area }
    }

    /// Correct iff d / sqrt(A) <= epsilon.
    pub fn correct(&self, epsilon: f64) -> bool {
        self.d / self.hull_area.sqrt() <= epsilon
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct MetricReport {
    pub mae: f64,
    pub pckh: f64,
    /// Absent when no sample passes the PCKh test.
    pub maec: Option<f64>,
    pub fnr_missed: usize,
    pub fnr_total: usize,
    pub epsilon: f64,
    pub n: usize,
}

/// Aggregate vertex samples of detected cubes; undetected cubes feed
/// `fnr`, not the error statistics.
pub fn aggregate(samples: &[MetricSample], epsilon: f64) -> Result<MetricReport, MetricsError> {
    if samples.is_empty() {
        return Err(MetricsError::EmptyInput);
    }
    let n = samples.len();
    let mut sum_d = 0.0;
    let mut sum_c = 0usize;
    let mut sum_cd = 0.0;
    for s in samples {
        sum_d += s.d;
        if s.correct(epsilon) {
            sum_c += 1;
            sum_cd += s.d;
        }
    }
    Ok(MetricReport {
        mae: sum_d / n as f64,
        pckh: sum_c as f64 / n as f64,
        maec: if sum_c > 0 { Some(sum_cd / sum_c as f64) } else { None },
        fnr_missed: 0,
        fnr_total: 0,
        epsilon,
        n,
    })
}

/// (missed, total) over per-cube detection flags.
pub fn fnr(detections: &[bool]) -> (usize, usize) {
    (detections.iter().filter(|&&d| !d).count(), detections.len())
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    fn samples(ds: &[f64], area: f64) -> Vec<MetricSample> {
        ds.iter().map(|&d| MetricSample { d, hull_area: area }).collect()
    }

    #[test]
    fn aggregate_hand_case_all_inliers() {
        // d = [0, 0, 3, 4], A = 100, eps = 0.5 -> threshold 5 px
        let r = aggregate(&samples(&[0.0, 0.0, 3.0, 4.0], 100.0), 0.5).unwrap();
        assert_relative_eq!(r.mae, 1.75);
        assert_relative_eq!(r.pckh, 1.0);
        assert_relative_eq!(r.maec.unwrap(), 1.75);
    }

    #[test]
    fn aggregate_hand_case_with_outlier() {
        // d = [0, 12], A = 100 -> c = [1, 0]
        let r = aggregate(&samples(&[0.0, 12.0], 100.0), 0.5).unwrap();
        assert_relative_eq!(r.mae, 6.0);
        assert_relative_eq!(r.pckh, 0.5);
        assert_relative_eq!(r.maec.unwrap(), 0.0);
    }

    #[test]
    fn aggregate_perfect_detection() {
        let r = aggregate(&samples(&[0.0, 0.0, 0.0], 64.0), 0.5).unwrap();
        assert_relative_eq!(r.mae, 0.0);
        assert_relative_eq!(r.pckh, 1.0);
        assert_relative_eq!(r.maec.unwrap(), 0.0);
    }

    #[test]
    fn aggregate_all_outliers_has_no_maec() {
        let r = aggregate(&samples(&[50.0, 60.0], 100.0), 0.5).unwrap();
        assert_relative_eq!(r.pckh, 0.0);
        assert!(r.maec.is_none());
    }

    #[test]
    fn aggregate_rejects_empty() {
        assert!(matches!(aggregate(&[], 0.5), Err(MetricsError::EmptyInput)));
    }

    #[test]
    fn fnr_counts() {
        assert_eq!(fnr(&[true, true, false]), (1, 3));
        assert_eq!(fnr(&[true; 5]), (0, 5));
        let mut det = vec![true; 219];
        for flag in det.iter_mut().take(3) {
            *flag = false;
        }
        assert_eq!(fnr(&det), (3, 219));
    }

    #[test]
    fn scale_consistency() {
        let base = samples(&[1.0, 2.0, 7.0, 11.0], 100.0);
        let r1 = aggregate(&base, 0.5).unwrap();
        let k = 3.7;
        let scaled: Vec<MetricSample> = base
            .iter()
            .map(|s| MetricSample { d: s.d * k, hull_area: s.hull_area * k * k })
            .collect();
        let r2 = aggregate(&scaled, 0.5).unwrap();
        assert_relative_eq!(r1.pckh, r2.pckh);
        assert_relative_eq!(r2.mae, k * r1.mae, epsilon = 1e-12);
        assert_relative_eq!(r2.maec.unwrap(), k * r1.maec.unwrap(), epsilon = 1e-12);
    }

    #[test]
    fn pckh_monotone_in_epsilon() {
        let s = samples(&[1.0, 3.0, 5.0, 8.0, 12.0], 100.0);
        let mut prev = f64::INFINITY;
        for eps in [1.2, 0.8, 0.5, 0.3, 0.1, 0.05] {
            let r = aggregate(&s, eps).unwrap();
            assert!(r.pckh <= prev);
            prev = r.pckh;
        }
    }

    #[test]
    fn maec_bounded_by_threshold() {
        let s = samples(&[1.0, 3.0, 4.9, 8.0], 100.0);
        let r = aggregate(&s, 0.5).unwrap();
        assert!(r.maec.unwrap() <= 0.5 * 100.0_f64.sqrt());
    }

    #[test]
    fn report_serializes_to_json() {
        let r = aggregate(&samples(&[0.0, 12.0], 100.0), 0.5).unwrap();
        let json = serde_json::to_value(&r).unwrap();
        assert!(json.get("mae").is_some());
        assert!(json.get("pckh").is_some());
        assert!(json.get("fnrMissed").is_some());
    }
}
