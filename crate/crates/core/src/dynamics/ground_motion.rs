use std::f64::consts::PI;
use std::path::Path;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};

/// Seed of the bundled synthetic accelerogram.
pub const SYNTHETIC_SEED: u64 = 1940;

/// Uniformly sampled ground acceleration starting at `t = 0`.
#[derive(Clone, Debug, PartialEq)]
pub struct GroundMotionRecord {
    /// Sampling interval in seconds.
    pub dt: f64,
    /// Accelerations in m/s².
    pub accelerations: Vec<f64>,
}

impl GroundMotionRecord {
    pub fn new(dt: f64, accelerations: Vec<f64>) -> Result<Self> {
        if !(dt > 0.0 && dt.is_finite()) {
            return Err(Error::invalid(
                "record",
                format!("time step must be positive, got {dt}"),
            ));
        }
        if accelerations.is_empty() {
            return Err(Error::invalid("record", "no samples"));
        }
        if let Some(i) = accelerations.iter().position(|a| !a.is_finite()) {
            return Err(Error::invalid("record", format!("sample {i} is not finite")));
        }
        Ok(GroundMotionRecord { dt, accelerations })
    }

    pub fn duration(&self) -> f64 {
        (self.accelerations.len() - 1) as f64 * self.dt
    }

    /// Peak absolute acceleration.
    pub fn pga(&self) -> f64 {
        self.accelerations.iter().fold(0.0, |m, a| m.max(a.abs()))
    }

    /// Linear interpolation, zero outside the record.
    pub fn acceleration_at(&self, t: f64) -> f64 {
        if t < 0.0 {
            return 0.0;
        }
        let s = t / self.dt;
        let i = s.floor() as usize;
        if i + 1 >= self.accelerations.len() {
            return if i + 1 == self.accelerations.len() && s == i as f64 {
                self.accelerations[i]
            } else {
                0.0
            };
        }
        let f = s - i as f64;
        self.accelerations[i] * (1.0 - f) + self.accelerations[i + 1] * f
    }

    /// Reads a `t,accel` CSV with a uniform time column.
    pub fn read_csv(path: &Path) -> Result<Self> {
        let mut reader = csv::Reader::from_path(path)?;
        let mut times = Vec::new();
        let mut acc = Vec::new();
        for row in reader.records() {
            let row = row?;
            if row.len() != 2 {
                return Err(Error::invalid("record", "expected two columns `t,accel`"));
            }
            let parse = |s: &str| {
                s.trim()
                    .parse::<f64>()
                    .map_err(|e| Error::invalid("record", format!("bad number `{s}`: {e}")))
            };
            times.push(parse(&row[0])?);
            acc.push(parse(&row[1])?);
        }
        if times.len() < 2 {
            return Err(Error::invalid("record", "need at least two samples"));
        }
        let dt = times[1] - times[0];
        for (i, w) in times.windows(2).enumerate() {
            if ((w[1] - w[0]) - dt).abs() > 1e-6 * dt {
                return Err(Error::invalid(
                    "record",
                    format!("non-uniform time step at row {}", i + 1),
                ));
            }
        }
        if times[0].abs() > 1e-9 * dt {
            return Err(Error::invalid("record", "time column must start at 0"));
        }
        Self::new(dt, acc)
    }

    pub fn write_csv(&self, path: &Path) -> Result<()> {
        let mut w = csv::Writer::from_path(path)?;
        w.write_record(["t", "accel"])?;
        for (i, a) in self.accelerations.iter().enumerate() {
            w.write_record([format!("{}", i as f64 * self.dt), format!("{a:e}")])?;
        }
        w.flush()?;
        Ok(())
    }
}

/// Times at which the cumulative Arias intensity `∫ a² dt` reaches the
/// fractions `lower` and `upper` of its total.
pub fn arias_window(record: &GroundMotionRecord, lower: f64, upper: f64) -> (f64, f64) {
    let mut cumulative = Vec::with_capacity(record.accelerations.len());
    let mut total = 0.0;
    cumulative.push(0.0);
    for w in record.accelerations.windows(2) {
        total += 0.5 * (w[0] * w[0] + w[1] * w[1]) * record.dt;
        cumulative.push(total);
    }
    let find = |fraction: f64| {
        let level = fraction * total;
        cumulative
            .iter()
            .position(|&c| c >= level)
            .unwrap_or(cumulative.len() - 1) as f64
            * record.dt
    };
    (find(lower), find(upper))
}

/// Band-limited synthetic accelerogram: 40 sinusoids between 0.5 and 8 Hz
/// with random phases, shaped by a build-up / plateau / decay envelope, on
/// `Δt = 0.02 s` over 20 s, normalized to a peak of 2 m/s².
pub fn synthetic_record(seed: u64) -> GroundMotionRecord {
    let dt = 0.02;
    let n = 1001;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let waves: Vec<(f64, f64, f64)> = (0..40)
        .map(|_| {
            let f: f64 = rng.random_range(0.5..8.0);
            let phase = rng.random_range(0.0..2.0 * PI);
            (f, phase, 1.0 / f.sqrt())
        })
        .collect();
    let envelope = |t: f64| {
        if t < 2.0 {
            (t / 2.0).powi(2)
        } else if t < 8.0 {
            1.0
        } else {
            (-0.3 * (t - 8.0)).exp()
        }
    };
    let raw: Vec<f64> = (0..n)
        .map(|i| {
            let t = i as f64 * dt;
            envelope(t)
                * waves
                    .iter()
                    .map(|&(f, p, a)| a * (2.0 * PI * f * t + p).sin())
                    .sum::<f64>()
        })
        .collect();
    let peak = raw.iter().fold(0.0f64, |m, a| m.max(a.abs()));
    GroundMotionRecord {
        dt,
        accelerations: raw.into_iter().map(|a| 2.0 * a / peak).collect(),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    #[test]
    fn synthetic_record_shape() {
        let r = synthetic_record(SYNTHETIC_SEED);
        assert_eq!(r.accelerations.len(), 1001);
        assert_relative_eq!(r.duration(), 20.0, epsilon = 1e-12);
        assert_relative_eq!(r.pga(), 2.0, epsilon = 1e-12);
        assert_eq!(r, synthetic_record(SYNTHETIC_SEED));
        let (a, b) = arias_window(&r, 0.05, 0.95);
        assert!(a > 0.5 && a < 4.0 && b > 6.0 && b < 16.0, "{a} {b}");
    }

    #[test]
    fn interpolation() {
        let r = GroundMotionRecord::new(0.5, vec![0.0, 1.0, -1.0]).unwrap();
        assert_eq!(r.acceleration_at(0.25), 0.5);
        assert_eq!(r.acceleration_at(0.75), 0.0);
        assert_eq!(r.acceleration_at(1.0), -1.0);
        assert_eq!(r.acceleration_at(1.2), 0.0);
        assert_eq!(r.acceleration_at(-0.1), 0.0);
    }

    #[test]
    fn csv_round_trip_and_validation() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("r.csv");
        let r = synthetic_record(3);
        r.write_csv(&path).unwrap();
        let back = GroundMotionRecord::read_csv(&path).unwrap();
        assert_relative_eq!(back.dt, r.dt, epsilon = 1e-12);
        assert_eq!(back.accelerations, r.accelerations);
        std::fs::write(&path, "t,accel\n0,1\n0.02,2\n0.05,3\n").unwrap();
        assert!(GroundMotionRecord::read_csv(&path).is_err());
        assert!(GroundMotionRecord::new(0.02, vec![f64::NAN]).is_err());
    }
}
