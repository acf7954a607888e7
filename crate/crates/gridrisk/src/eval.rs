//! Alarm-to-ground-truth matching and detection metrics.

use std::fs;
use std::path::Path;

use crate::error::{Error, Result};
use crate::synth::AnomalySpec;

#[derive(Debug, Clone, PartialEq)]
pub struct DetectionMetrics {
    pub method: String,
    pub tdr: f64,
    pub far: f64,
    pub act_seconds: f64,
    pub n_cr: usize,
    pub n_gt: usize,
    pub n_al: usize,
}

/// Greedy earliest-first one-to-one matching. An anomaly counts as detected
/// when some alarm's window, dilated by `slack_windows * n_s` ticks on each
/// side, intersects the anomaly interval.
pub fn match_alarms(
    alarms: &[usize],
    truth: &[AnomalySpec],
    n_w: usize,
    n_s: usize,
    slack_windows: usize,
) -> usize {
    let slack = slack_windows * n_s;
    let mut sorted_truth: Vec<&AnomalySpec> = truth.iter().collect();
    sorted_truth.sort_by_key(|a| (a.start_tick, a.end_tick));
    let mut used = vec![false; alarms.len()];
    let mut n_cr = 0;
    for anomaly in sorted_truth {
        for (i, &end_tick) in alarms.iter().enumerate() {
            if used[i] {
                continue;
            }
            let window_start = end_tick.saturating_sub(n_w - 1).saturating_sub(slack).max(1);
            let window_end = end_tick + slack;
            if window_start <= anomaly.end_tick && anomaly.start_tick <= window_end {
                used[i] = true;
                n_cr += 1;
                break;
            }
        }
    }
    n_cr
}

/// TDR = N_cr / N_gt, FAR = (N_al - N_cr) / N_al (0 when no alarms),
/// ACT = elapsed / windows processed.
pub fn compute_metrics(
    method: &str,
    n_cr: usize,
    n_gt: usize,
    n_al: usize,
    total_elapsed_seconds: f64,
    windows_processed: usize,
) -> Result<DetectionMetrics> {
    if n_gt == 0 {
        return Err(Error::InvalidArgument(
            "TDR undefined with zero ground-truth anomalies".into(),
        ));
    }
    if n_cr > n_gt || n_cr > n_al {
        return Err(Error::InvalidArgument(format!(
            "inconsistent counts: n_cr {n_cr}, n_gt {n_gt}, n_al {n_al}"
        )));
    }
    let far = if n_al == 0 {
        0.0
    } else {
        (n_al - n_cr) as f64 / n_al as f64
    };
    let act_seconds = if windows_processed == 0 {
        0.0
    } else {
        total_elapsed_seconds / windows_processed as f64
    };
    Ok(DetectionMetrics {
        method: method.to_string(),
        tdr: n_cr as f64 / n_gt as f64,
        far,
        act_seconds,
        n_cr,
        n_gt,
        n_al,
    })
}

pub const METRICS_HEADER: &str = "method,TDR,FAR,ACT_seconds,N_cr,N_gt,N_al";

pub fn write_metrics_csv(metrics: &[DetectionMetrics], path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    let mut out = String::from(METRICS_HEADER);
    out.push('\n');
    for m in metrics {
        out.push_str(&format!(
            "{},{:.9e},{:.9e},{:.9e},{},{},{}\n",
            m.method, m.tdr, m.far, m.act_seconds, m.n_cr, m.n_gt, m.n_al
        ));
    }
    fs::write(path, out).map_err(|e| Error::io(path.display().to_string(), e))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::synth::AnomalyKind;

    fn anomaly(start: usize, end: usize) -> AnomalySpec {
        AnomalySpec {
            channels: vec![0],
            start_tick: start,
            end_tick: end,
            kind: AnomalyKind::Step,
            magnitude: 0.1,
        }
    }

    #[test]
    fn alarm_window_intersects_anomaly() {
        // Alarm window 251..=260 overlaps the 251..=255 anomaly even with
        // zero slack.
        assert_eq!(match_alarms(&[260], &[anomaly(251, 255)], 10, 10, 0), 1);
        assert_eq!(match_alarms(&[260], &[anomaly(251, 255)], 10, 10, 1), 1);
    }

    #[test]
    fn no_alarms_no_matches() {
        assert_eq!(match_alarms(&[], &[anomaly(10, 20)], 10, 10, 1), 0);
    }

    #[test]
    fn one_alarm_certifies_one_anomaly() {
        let truth = [anomaly(95, 100), anomaly(101, 105)];
        assert_eq!(match_alarms(&[100], &truth, 10, 10, 1), 1);
    }

    #[test]
    fn slack_is_monotone() {
        let truth = [anomaly(300, 305)];
        let alarms = [260];
        let mut prev = 0;
        for slack in 0..6 {
            let n = match_alarms(&alarms, &truth, 10, 10, slack);
            assert!(n >= prev);
            prev = n;
        }
        assert_eq!(prev, 1); // slack 5 dilates by 50 ticks and reaches 300
    }

    #[test]
    fn metrics_arithmetic() {
        let m = compute_metrics("bigan", 3, 4, 5, 10.0, 20).unwrap();
        assert!((m.tdr - 0.75).abs() < 1e-15);
        assert!((m.far - 0.40).abs() < 1e-15);
        assert!((m.act_seconds - 0.5).abs() < 1e-15);
    }

    #[test]
    fn metrics_perfect_detection() {
        let m = compute_metrics("x", 4, 4, 4, 1.0, 4).unwrap();
        assert_eq!(m.tdr, 1.0);
        assert_eq!(m.far, 0.0);
    }

    #[test]
    fn metrics_no_alarm_convention() {
        let m = compute_metrics("x", 0, 3, 0, 1.0, 4).unwrap();
        assert_eq!(m.tdr, 0.0);
        assert_eq!(m.far, 0.0);
    }

    #[test]
    fn metrics_reject_zero_ground_truth() {
        assert!(compute_metrics("x", 0, 0, 2, 1.0, 4).is_err());
    }

    #[test]
    fn extra_false_alarm_raises_far_only() {
        let truth = [anomaly(50, 55)];
        let base_cr = match_alarms(&[55], &truth, 10, 10, 0);
        let more_cr = match_alarms(&[55, 400], &truth, 10, 10, 0);
        assert_eq!(base_cr, more_cr);
        let base = compute_metrics("x", base_cr, 1, 1, 0.0, 1).unwrap();
        let more = compute_metrics("x", more_cr, 1, 2, 0.0, 1).unwrap();
        assert_eq!(base.tdr, more.tdr);
        assert!(more.far > base.far);
    }
}
