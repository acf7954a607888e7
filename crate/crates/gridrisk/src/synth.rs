//! Labeled synthetic spatio-temporal matrices with injected anomalies.

use std::fs;
use std::path::Path;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

use crate::error::{Error, Result};
use crate::ingest::SpatioTemporalMatrix;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum AnomalyKind {
    /// Constant offset over the interval.
    Step,
    /// Alternating-sign offset per tick.
    Burst,
    /// Pins the channels to baseline + magnitude.
    Violation,
}

impl std::fmt::Display for AnomalyKind {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            AnomalyKind::Step => "step",
            AnomalyKind::Burst => "burst",
            AnomalyKind::Violation => "violation",
        })
    }
}

impl std::str::FromStr for AnomalyKind {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "step" => Ok(AnomalyKind::Step),
            "burst" => Ok(AnomalyKind::Burst),
            "violation" => Ok(AnomalyKind::Violation),
            other => Err(Error::InvalidArgument(format!("unknown anomaly kind {other:?}"))),
        }
    }
}

/// Ground-truth anomaly: channel indices (0-based) and a 1-based, inclusive
/// tick interval.
#[derive(Debug, Clone, PartialEq)]
pub struct AnomalySpec {
    pub channels: Vec<usize>,
    pub start_tick: usize,
    pub end_tick: usize,
    pub kind: AnomalyKind,
    pub magnitude: f64,
}

#[derive(Debug, Clone)]
pub struct GeneratorConfig {
    pub channels: usize,
    pub ticks: usize,
    pub baseline: f64,
    pub noise_sigma: f64,
    /// Weight of the shared mean-centered random walk added to every channel.
    pub coupling: f64,
    pub tick_seconds: f64,
}

impl Default for GeneratorConfig {
    fn default() -> Self {
        GeneratorConfig {
            channels: 1,
            ticks: 1,
            baseline: 1.0,
            noise_sigma: 0.005,
            coupling: 0.0,
            tick_seconds: 900.0,
        }
    }
}

#[derive(Debug, Clone)]
pub struct LabeledDataset {
    pub matrix: SpatioTemporalMatrix,
    pub anomalies: Vec<AnomalySpec>,
    pub seed: u64,
}

/// Deterministic synthetic matrix: per channel baseline plus a shared
/// mean-centered gaussian walk plus independent noise, with anomalies applied
/// afterwards so the base series does not depend on the anomaly list.
pub fn generate(
    config: &GeneratorConfig,
    anomalies: &[AnomalySpec],
    seed: u64,
) -> Result<LabeledDataset> {
    if config.channels == 0 || config.ticks == 0 {
        return Err(Error::InvalidArgument("need at least one channel and tick".into()));
    }
    if config.noise_sigma < 0.0 {
        return Err(Error::InvalidArgument("noise_sigma must be >= 0".into()));
    }
    for a in anomalies {
        if a.start_tick < 1 || a.end_tick > config.ticks || a.start_tick > a.end_tick {
            return Err(Error::InvalidArgument(format!(
                "anomaly interval [{}, {}] outside [1, {}]",
                a.start_tick, a.end_tick, config.ticks
            )));
        }
        if a.channels.is_empty() {
            return Err(Error::InvalidArgument("anomaly channel set is empty".into()));
        }
        if let Some(&c) = a.channels.iter().find(|&&c| c >= config.channels) {
            return Err(Error::InvalidArgument(format!(
                "anomaly channel {c} outside 0..{}",
                config.channels
            )));
        }
    }

    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let t = config.ticks;

    // Shared walk, mean-centered so channel means stay at the baseline.
    let mut walk = Vec::with_capacity(t);
    let mut level = 0.0;
    for _ in 0..t {
        let step: f64 = StandardNormal.sample(&mut rng);
        level += step * config.noise_sigma;
        walk.push(level);
    }
    let walk_mean = walk.iter().sum::<f64>() / t as f64;
    for w in &mut walk {
        *w -= walk_mean;
    }

    let mut rows: Vec<Vec<f64>> = Vec::with_capacity(config.channels);
    for _ in 0..config.channels {
        let row = (0..t)
            .map(|j| {
                let noise: f64 = StandardNormal.sample(&mut rng);
                config.baseline + config.coupling * walk[j] + noise * config.noise_sigma
            })
            .collect();
        rows.push(row);
    }

    for a in anomalies {
        for tick in a.start_tick..=a.end_tick {
            for &c in &a.channels {
                let cell = &mut rows[c][tick - 1];
                match a.kind {
                    AnomalyKind::Step => *cell += a.magnitude,
                    AnomalyKind::Burst => {
                        let sign = if (tick - a.start_tick) % 2 == 0 { 1.0 } else { -1.0 };
                        *cell += sign * a.magnitude;
                    }
                    AnomalyKind::Violation => *cell = config.baseline + a.magnitude,
                }
            }
        }
    }

    let channel_ids = (0..config.channels).map(|c| format!("ch{c}")).collect();
    let matrix = SpatioTemporalMatrix::new(channel_ids, rows, config.tick_seconds)?;
    Ok(LabeledDataset {
        matrix,
        anomalies: anomalies.to_vec(),
        seed,
    })
}

pub const TRUTH_HEADER: &str = "channel_set,start_tick,end_tick,kind,magnitude";

/// Ground-truth CSV: `channel_set,start_tick,end_tick,kind,magnitude` with
/// `;`-separated channel indices.
pub fn write_truth_csv(anomalies: &[AnomalySpec], path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    let mut out = String::from(TRUTH_HEADER);
    out.push('\n');
    for a in anomalies {
        let channels: Vec<String> = a.channels.iter().map(|c| c.to_string()).collect();
        out.push_str(&format!(
            "{},{},{},{},{:.12}\n",
            channels.join(";"),
            a.start_tick,
            a.end_tick,
            a.kind,
            a.magnitude
        ));
    }
    fs::write(path, out).map_err(|e| Error::io(path.display().to_string(), e))
}

pub fn read_truth_csv(path: impl AsRef<Path>) -> Result<Vec<AnomalySpec>> {
    let path = path.as_ref();
    let text = fs::read_to_string(path).map_err(|e| Error::io(path.display().to_string(), e))?;
    let mut lines = text.lines().enumerate();
    match lines.next() {
        Some((_, header)) if header.trim() == TRUTH_HEADER => {}
        _ => {
            return Err(Error::Parse {
                row: 1,
                col: 1,
                msg: format!("expected ground-truth header {TRUTH_HEADER:?}"),
            })
        }
    }
    let mut anomalies = Vec::new();
    for (idx, line) in lines {
        if line.trim().is_empty() {
            continue;
        }
        let row = idx + 1;
        let cells: Vec<&str> = line.split(',').collect();
        if cells.len() != 5 {
            return Err(Error::Parse {
                row,
                col: cells.len(),
                msg: "expected 5 cells".into(),
            });
        }
        let parse_err = |col: usize, msg: String| Error::Parse { row, col, msg };
        let channels = cells[0]
            .split(';')
            .map(|c| c.trim().parse::<usize>())
            .collect::<std::result::Result<Vec<_>, _>>()
            .map_err(|_| parse_err(1, format!("bad channel set {:?}", cells[0])))?;
        let start_tick = cells[1]
            .trim()
            .parse()
            .map_err(|_| parse_err(2, format!("bad start tick {:?}", cells[1])))?;
        let end_tick = cells[2]
            .trim()
            .parse()
            .map_err(|_| parse_err(3, format!("bad end tick {:?}", cells[2])))?;
        let kind = cells[3].trim().parse()?;
        let magnitude = cells[4]
            .trim()
            .parse()
            .map_err(|_| parse_err(5, format!("bad magnitude {:?}", cells[4])))?;
        anomalies.push(AnomalySpec {
            channels,
            start_tick,
            end_tick,
            kind,
            magnitude,
        });
    }
    Ok(anomalies)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn step_on(channel: usize, start: usize, end: usize, magnitude: f64) -> AnomalySpec {
        AnomalySpec {
            channels: vec![channel],
            start_tick: start,
            end_tick: end,
            kind: AnomalyKind::Step,
            magnitude,
        }
    }

    #[test]
    fn noiseless_clean_matrix_is_flat() {
        let cfg = GeneratorConfig {
            channels: 3,
            ticks: 20,
            noise_sigma: 0.0,
            ..GeneratorConfig::default()
        };
        let ds = generate(&cfg, &[], 1).unwrap();
        for p in 0..3 {
            for t in 1..=20 {
                assert_eq!(ds.matrix.value(p, t), 1.0);
            }
        }
    }

    #[test]
    fn case1_analog_step() {
        let cfg = GeneratorConfig {
            channels: 118,
            ticks: 500,
            ..GeneratorConfig::default()
        };
        let ds = generate(&cfg, &[step_on(20, 251, 255, 0.1)], 7).unwrap();
        assert_eq!(ds.matrix.n_channels(), 118);
        assert_eq!(ds.matrix.n_ticks(), 500);
        // Stepped region sits clearly above the noisy baseline.
        for t in 251..=255 {
            assert!(ds.matrix.value(20, t) > 1.05);
        }
        assert!(ds.matrix.value(20, 250) < 1.05);
    }

    #[test]
    fn deterministic_given_seed() {
        let cfg = GeneratorConfig {
            channels: 5,
            ticks: 50,
            coupling: 0.5,
            ..GeneratorConfig::default()
        };
        let a = generate(&cfg, &[step_on(2, 10, 12, 0.05)], 99).unwrap();
        let b = generate(&cfg, &[step_on(2, 10, 12, 0.05)], 99).unwrap();
        assert_eq!(a.matrix, b.matrix);
    }

    #[test]
    fn anomaly_only_touches_its_interval() {
        let cfg = GeneratorConfig {
            channels: 4,
            ticks: 60,
            coupling: 0.7,
            ..GeneratorConfig::default()
        };
        let clean = generate(&cfg, &[], 5).unwrap();
        let spec = AnomalySpec {
            channels: vec![1, 3],
            start_tick: 20,
            end_tick: 30,
            kind: AnomalyKind::Burst,
            magnitude: 0.05,
        };
        let dirty = generate(&cfg, &[spec], 5).unwrap();
        for p in 0..4 {
            for t in 1..=60 {
                let inside = (20..=30).contains(&t) && (p == 1 || p == 3);
                if inside {
                    assert_ne!(clean.matrix.value(p, t), dirty.matrix.value(p, t));
                } else {
                    assert_eq!(clean.matrix.value(p, t), dirty.matrix.value(p, t));
                }
            }
        }
    }

    #[test]
    fn channel_means_near_baseline() {
        let cfg = GeneratorConfig {
            channels: 6,
            ticks: 400,
            noise_sigma: 0.01,
            coupling: 0.8,
            ..GeneratorConfig::default()
        };
        let ds = generate(&cfg, &[], 31).unwrap();
        let bound = 4.0 * cfg.noise_sigma / (cfg.ticks as f64).sqrt();
        for p in 0..6 {
            let mean: f64 =
                ds.matrix.channel(p).iter().sum::<f64>() / cfg.ticks as f64;
            assert!((mean - 1.0).abs() < bound, "channel {p} mean {mean}");
        }
    }

    #[test]
    fn violation_pins_channel() {
        let cfg = GeneratorConfig {
            channels: 2,
            ticks: 10,
            ..GeneratorConfig::default()
        };
        let spec = AnomalySpec {
            channels: vec![0],
            start_tick: 3,
            end_tick: 5,
            kind: AnomalyKind::Violation,
            magnitude: 0.1,
        };
        let ds = generate(&cfg, &[spec], 2).unwrap();
        for t in 3..=5 {
            assert_eq!(ds.matrix.value(0, t), 1.1);
        }
    }

    #[test]
    fn interval_bounds_checked() {
        let cfg = GeneratorConfig {
            channels: 2,
            ticks: 10,
            ..GeneratorConfig::default()
        };
        assert!(generate(&cfg, &[step_on(0, 5, 11, 0.1)], 1).is_err());
        assert!(generate(&cfg, &[step_on(0, 0, 5, 0.1)], 1).is_err());
        assert!(generate(&cfg, &[step_on(9, 1, 5, 0.1)], 1).is_err());
    }

    #[test]
    fn truth_csv_round_trip() {
        let specs = vec![
            step_on(4, 10, 20, 0.05),
            AnomalySpec {
                channels: vec![1, 2, 7],
                start_tick: 30,
                end_tick: 31,
                kind: AnomalyKind::Violation,
                magnitude: -0.08,
            },
        ];
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("truth.csv");
        write_truth_csv(&specs, &path).unwrap();
        let back = read_truth_csv(&path).unwrap();
        assert_eq!(back.len(), 2);
        assert_eq!(back[0].channels, vec![4]);
        assert_eq!(back[1].channels, vec![1, 2, 7]);
        assert_eq!(back[1].kind, AnomalyKind::Violation);
        assert!((back[1].magnitude + 0.08).abs() < 1e-12);
    }
}
