use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

use nalgebra::DVector;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::MixtureModel;
use crate::error::{Error, Result};

/// Magic bytes at the start of a binary density grid.
pub const GRID_MAGIC: &[u8; 8] = b"MESOGRID";
/// Current binary layout version.
pub const GRID_VERSION: u32 = 1;

/// One grid axis: `count` equally spaced nodes from `min` to `max`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Axis {
    pub min: f64,
    pub max: f64,
    pub count: usize,
}

impl Axis {
    pub fn new(min: f64, max: f64, count: usize) -> Self {
        Axis { min, max, count }
    }

    /// Single node at `value`.
    pub fn point(value: f64) -> Self {
        Axis {
            min: value,
            max: value,
            count: 1,
        }
    }

    /// Nodes from `min` to `max` spaced by (approximately) `step`.
    pub fn with_step(min: f64, max: f64, step: f64) -> Self {
        let count = ((max - min) / step).round() as usize + 1;
        Axis { min, max, count }
    }

    /// Node spacing; 1 for a single-node axis so that cell measures reduce
    /// to the remaining axes.
    pub fn step(&self) -> f64 {
        if self.count > 1 {
            (self.max - self.min) / (self.count - 1) as f64
        } else {
            1.0
        }
    }

    pub fn coordinate(&self, i: usize) -> f64 {
        if self.count > 1 {
            self.min + i as f64 * self.step()
        } else {
            self.min
        }
    }

    pub fn coordinates(&self) -> Vec<f64> {
        (0..self.count).map(|i| self.coordinate(i)).collect()
    }
}

/// Tensor-product evaluation grid.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GridSpec {
    pub axes: Vec<Axis>,
}

impl GridSpec {
    pub fn new(axes: Vec<Axis>) -> Result<Self> {
        let spec = GridSpec { axes };
        spec.validate()?;
        Ok(spec)
    }

    /// The same axis repeated `dimension` times.
    pub fn cube(dimension: usize, min: f64, max: f64, count: usize) -> Result<Self> {
        Self::new(vec![Axis::new(min, max, count); dimension])
    }

    /// Axes need finite bounds and at least two nodes, except a single node
    /// with `min == max`.
    pub fn validate(&self) -> Result<()> {
        if self.axes.is_empty() {
            return Err(Error::invalid("grid", "no axes"));
        }
        for (j, a) in self.axes.iter().enumerate() {
            let ok = a.min.is_finite()
                && a.max.is_finite()
                && ((a.count >= 2 && a.max > a.min) || (a.count == 1 && a.min == a.max));
            if !ok {
                return Err(Error::invalid("grid", format!("axis {j} is invalid: {a:?}")));
            }
        }
        Ok(())
    }

    pub fn dimension(&self) -> usize {
        self.axes.len()
    }

    pub fn len(&self) -> usize {
        self.axes.iter().map(|a| a.count).product()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn cell_volume(&self) -> f64 {
        self.axes.iter().map(Axis::step).product()
    }

    /// Multi-index of flat index `flat`, with the last axis varying fastest.
    pub fn unravel(&self, mut flat: usize) -> Vec<usize> {
        let mut idx = vec![0; self.axes.len()];
        for (j, a) in self.axes.iter().enumerate().rev() {
            idx[j] = flat % a.count;
            flat /= a.count;
        }
        idx
    }

    pub fn ravel(&self, idx: &[usize]) -> usize {
        idx.iter().zip(&self.axes).fold(0, |acc, (&i, a)| acc * a.count + i)
    }

    pub fn point(&self, flat: usize) -> DVector<f64> {
        let idx = self.unravel(flat);
        DVector::from_iterator(
            self.axes.len(),
            idx.iter().zip(&self.axes).map(|(&i, a)| a.coordinate(i)),
        )
    }

    /// Evaluates `f` at every node in parallel; values come back in
    /// row-major order regardless of scheduling.
    pub fn evaluate<F>(&self, f: F) -> DensityGrid
    where
        F: Fn(&DVector<f64>) -> f64 + Sync,
    {
        let values = (0..self.len()).into_par_iter().map(|i| f(&self.point(i))).collect();
        DensityGrid {
            spec: self.clone(),
            values,
        }
    }
}

/// Density values on a [`GridSpec`], row-major.
#[derive(Clone, Debug, PartialEq)]
pub struct DensityGrid {
    pub spec: GridSpec,
    pub values: Vec<f64>,
}

impl DensityGrid {
    pub fn new(spec: GridSpec, values: Vec<f64>) -> Result<Self> {
        spec.validate()?;
        if values.len() != spec.len() {
            return Err(Error::GridMismatch(format!(
                "{} values for a grid of {} nodes",
                values.len(),
                spec.len()
            )));
        }
        Ok(DensityGrid { spec, values })
    }

    /// Riemann sum `Σ p · cell volume`.
    pub fn integral(&self) -> f64 {
        self.values.iter().sum::<f64>() * self.spec.cell_volume()
    }

    pub fn max(&self) -> f64 {
        self.values.iter().copied().fold(f64::NEG_INFINITY, f64::max)
    }

    pub fn scaled(&self, factor: f64) -> DensityGrid {
        DensityGrid {
            spec: self.spec.clone(),
            values: self.values.iter().map(|v| v * factor).collect(),
        }
    }

    /// Writes `x1,…,xn,density` rows in row-major order.
    pub fn write_csv(&self, path: &Path) -> Result<()> {
        let mut w = csv::Writer::from_writer(BufWriter::new(File::create(path)?));
        let n = self.spec.dimension();
        let mut header: Vec<String> = (1..=n).map(|j| format!("x{j}")).collect();
        header.push("density".into());
        w.write_record(&header)?;
        for (i, v) in self.values.iter().enumerate() {
            let mut row: Vec<String> = self.spec.point(i).iter().map(|x| format!("{x:e}")).collect();
            row.push(format!("{v:e}"));
            w.write_record(&row)?;
        }
        w.flush()?;
        Ok(())
    }

    /// Reads a CSV grid; the axes are recovered from the node coordinates.
    pub fn read_csv(path: &Path) -> Result<Self> {
        let mut r = csv::Reader::from_path(path)?;
        let n = r.headers()?.len().saturating_sub(1);
        if n == 0 {
            return Err(Error::invalid("grid", "CSV has no coordinate columns"));
        }
        let mut coords: Vec<Vec<f64>> = vec![Vec::new(); n];
        let mut values = Vec::new();
        for record in r.records() {
            let record = record?;
            let row = record
                .iter()
                .map(|s| s.trim().parse::<f64>())
                .collect::<std::result::Result<Vec<_>, _>>()
                .map_err(|e| Error::invalid("grid", format!("bad number: {e}")))?;
            for j in 0..n {
                coords[j].push(row[j]);
            }
            values.push(row[n]);
        }
        let axes = coords
            .into_iter()
            .map(|mut c| {
                c.sort_by(f64::total_cmp);
                c.dedup();
                Axis::new(c[0], c[c.len() - 1], c.len())
            })
            .collect();
        DensityGrid::new(GridSpec { axes }, values)
    }

    /// Binary layout: magic `MESOGRID`, `u32` version, `u32` dimension, then
    /// per axis `f64 min, f64 max, u64 count`, then `u64` value count and the
    /// values as `f64`. All integers and floats are little-endian.
    pub fn write_binary(&self, path: &Path) -> Result<()> {
        let mut w = BufWriter::new(File::create(path)?);
        w.write_all(GRID_MAGIC)?;
        w.write_all(&GRID_VERSION.to_le_bytes())?;
        w.write_all(&(self.spec.dimension() as u32).to_le_bytes())?;
        for a in &self.spec.axes {
            w.write_all(&a.min.to_le_bytes())?;
            w.write_all(&a.max.to_le_bytes())?;
            w.write_all(&(a.count as u64).to_le_bytes())?;
        }
        w.write_all(&(self.values.len() as u64).to_le_bytes())?;
        for v in &self.values {
            w.write_all(&v.to_le_bytes())?;
        }
        w.flush()?;
        Ok(())
    }

    pub fn read_binary(path: &Path) -> Result<Self> {
        let mut r = BufReader::new(File::open(path)?);
        let mut magic = [0u8; 8];
        r.read_exact(&mut magic)?;
        if &magic != GRID_MAGIC {
            return Err(Error::invalid("grid", "bad magic bytes"));
        }
        let version = read_u32(&mut r)?;
        if version != GRID_VERSION {
            return Err(Error::invalid("grid", format!("unsupported version {version}")));
        }
        let n = read_u32(&mut r)? as usize;
        let axes = (0..n)
            .map(|_| {
                Ok(Axis::new(
                    read_f64(&mut r)?,
                    read_f64(&mut r)?,
                    read_u64(&mut r)? as usize,
                ))
            })
            .collect::<Result<Vec<_>>>()?;
        let len = read_u64(&mut r)? as usize;
        let values = (0..len).map(|_| read_f64(&mut r)).collect::<Result<Vec<_>>>()?;
        DensityGrid::new(GridSpec { axes }, values)
    }
}

fn read_u32(r: &mut impl Read) -> Result<u32> {
    let mut b = [0u8; 4];
    r.read_exact(&mut b)?;
    Ok(u32::from_le_bytes(b))
}

fn read_u64(r: &mut impl Read) -> Result<u64> {
    let mut b = [0u8; 8];
    r.read_exact(&mut b)?;
    Ok(u64::from_le_bytes(b))
}

fn read_f64(r: &mut impl Read) -> Result<f64> {
    let mut b = [0u8; 8];
    r.read_exact(&mut b)?;
    Ok(f64::from_le_bytes(b))
}

/// Evaluates the mixture density at every node of `grid`.
pub fn density_grid(model: &MixtureModel, grid: &GridSpec) -> Result<DensityGrid> {
    grid.validate()?;
    if grid.dimension() != model.dimension() {
        return Err(Error::DimensionMismatch {
            expected: model.dimension(),
            actual: grid.dimension(),
        });
    }
    Ok(grid.evaluate(|x| model.log_density(x).exp()))
}
