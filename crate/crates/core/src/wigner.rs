//! Wigner-function grids, negativity and bootstrap significance.

use std::fmt::Write as _;
use std::fs;
use std::io::Write as _;
use std::path::Path;

use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::fock::{wigner_eval, wigner_origin, wigner_radial, PhotonNumberDistribution};
use crate::pipeline::comment_lines;
use crate::recon::{EmOptions, FockDesign};
use crate::rng::{domain, substream};

pub const DEFAULT_REPLICAS: usize = 400;
pub const DEFAULT_EXTENT: f64 = 4.0;
pub const DEFAULT_RESOLUTION: usize = 201;

const RADIAL_STEP: f64 = 1e-3;
const RADIAL_MAX: f64 = 6.0;

/// `W(x_i, y_j)` on the square `[−extent, extent]²`, row-major in `i`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WignerGrid {
    pub extent: f64,
    pub resolution: usize,
    pub values: Vec<f64>,
}

impl WignerGrid {
    /// Grid coordinate of index `i`; exactly zero at the centre and exactly
    /// antisymmetric about it.
    pub fn axis(&self, i: usize) -> f64 {
        axis_point(self.extent, self.resolution, i)
    }

    pub fn value(&self, i: usize, j: usize) -> f64 {
        self.values[i * self.resolution + j]
    }

    pub fn center(&self) -> f64 {
        let c = self.resolution / 2;
        self.value(c, c)
    }

    pub fn min(&self) -> f64 {
        self.values.iter().copied().fold(f64::INFINITY, f64::min)
    }

    pub fn max(&self) -> f64 {
        self.values
            .iter()
            .copied()
            .fold(f64::NEG_INFINITY, f64::max)
    }

    pub fn spacing(&self) -> f64 {
        2.0 * self.extent / (self.resolution - 1) as f64
    }

    /// Trapezoid-rule double integral.
    pub fn integral(&self) -> f64 {
        let n = self.resolution;
        let edge = |i: usize| if i == 0 || i == n - 1 { 0.5 } else { 1.0 };
        let mut total = 0.0;
        for i in 0..n {
            for j in 0..n {
                total += edge(i) * edge(j) * self.value(i, j);
            }
        }
        total * self.spacing() * self.spacing()
    }

    /// Matrix CSV: a header row of y coordinates, then one row per x.
    pub fn write_csv(&self, path: impl AsRef<Path>, metadata: &[(&str, String)]) -> Result<()> {
        let n = self.resolution;
        let mut out = comment_lines(metadata);
        out.push_str("x\\y");
        for j in 0..n {
            write!(out, ",{:e}", self.axis(j)).unwrap();
        }
        out.push('\n');
        for i in 0..n {
            write!(out, "{:e}", self.axis(i)).unwrap();
            for j in 0..n {
                write!(out, ",{:e}", self.value(i, j)).unwrap();
            }
            out.push('\n');
        }
        fs::write(path, out)?;
        Ok(())
    }

    /// Binary (P5) 8-bit PGM heatmap, `[min, max]` mapped linearly onto
    /// `[0, 255]`; x runs down the rows.
    pub fn write_pgm(&self, path: impl AsRef<Path>, metadata: &[(&str, String)]) -> Result<()> {
        let n = self.resolution;
        let (lo, hi) = (self.min(), self.max());
        let span = if hi > lo { hi - lo } else { 1.0 };
        let mut out = Vec::with_capacity(n * n + 128);
        write!(
            out,
            "P5\n# wigner min={lo:e} max={hi:e} extent={:e}\n{}{n} {n}\n255\n",
            self.extent,
            comment_lines(metadata)
        )?;
        out.extend(
            self.values
                .iter()
                .map(|v| (((v - lo) / span) * 255.0).round().clamp(0.0, 255.0) as u8),
        );
        fs::write(path, out)?;
        Ok(())
    }
}

fn axis_point(extent: f64, resolution: usize, i: usize) -> f64 {
    let c = (resolution / 2) as f64;
    extent * (i as f64 - c) / c
}

pub fn wigner_grid(
    p: &PhotonNumberDistribution,
    extent: f64,
    resolution: usize,
) -> Result<WignerGrid> {
    if !(extent > 0.0 && extent.is_finite()) {
        return Err(Error::InvalidArgument(format!(
            "grid extent {extent} must be positive"
        )));
    }
    if resolution < 11 || resolution.is_multiple_of(2) {
        return Err(Error::InvalidArgument(format!(
            "grid resolution {resolution} must be odd and at least 11 so the origin is sampled"
        )));
    }
    let values = (0..resolution)
        .into_par_iter()
        .flat_map_iter(|i| {
            let x = axis_point(extent, resolution, i);
            (0..resolution).map(move |j| wigner_eval(p, x, axis_point(extent, resolution, j)))
        })
        .collect();
    Ok(WignerGrid {
        extent,
        resolution,
        values,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct NegativityReport {
    pub origin: f64,
    pub grid_min: f64,
    pub min_radius: f64,
}

/// Origin value plus the minimum of the radial profile on `[0, 6]`.
pub fn negativity_report(p: &PhotonNumberDistribution) -> NegativityReport {
    let steps = (RADIAL_MAX / RADIAL_STEP).round() as usize;
    let (mut grid_min, mut min_radius) = (f64::INFINITY, 0.0);
    for i in 0..=steps {
        let r = i as f64 * RADIAL_STEP;
        let w = wigner_radial(p, r * r);
        if w < grid_min {
            grid_min = w;
            min_radius = r;
        }
    }
    NegativityReport {
        origin: wigner_origin(p),
        grid_min,
        min_radius,
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BootstrapReport {
    pub replicas: usize,
    pub cutoff: usize,
    /// EM reconstruction from the full dataset.
    pub estimate_p: PhotonNumberDistribution,
    /// W(0,0) of `estimate_p`.
    pub origin_estimate: f64,
    pub origin_mean: f64,
    /// Unbiased standard deviation of W(0,0) over replicas.
    pub origin_std: f64,
    /// `|origin_estimate| / origin_std` if the estimate is negative, else 0.
    pub significance: f64,
    pub per_replica_origin: Vec<f64>,
    pub per_replica_p: Vec<PhotonNumberDistribution>,
    pub unconverged_replicas: Vec<usize>,
    pub rng_seed: u64,
}

impl BootstrapReport {
    /// `W(0,0) = a ± b (s sigma)`.
    pub fn verdict(&self) -> String {
        format!(
            "W(0,0) = {:.4} ± {:.4} ({:.1} sigma)",
            self.origin_estimate, self.origin_std, self.significance
        )
    }

    pub fn write_json(&self, path: impl AsRef<Path>) -> Result<()> {
        let mut json = serde_json::to_string_pretty(self)?;
        json.push('\n');
        fs::write(path, json)?;
        Ok(())
    }
}

/// Nonparametric bootstrap of W(0,0): each replica resamples the data with
/// replacement from its own substream and reruns EM.
pub fn bootstrap_negativity(
    data: &[f64],
    cutoff: usize,
    replicas: usize,
    rng_seed: u64,
) -> Result<BootstrapReport> {
    bootstrap_negativity_with(data, cutoff, replicas, rng_seed, EmOptions::default())
}

pub fn bootstrap_negativity_with(
    data: &[f64],
    cutoff: usize,
    replicas: usize,
    rng_seed: u64,
    options: EmOptions,
) -> Result<BootstrapReport> {
    if data.is_empty() {
        return Err(Error::InvalidArgument("bootstrap needs data".into()));
    }
    if replicas < 2 {
        return Err(Error::InvalidArgument(format!(
            "bootstrap needs at least 2 replicas, got {replicas}"
        )));
    }
    if cutoff < 1 {
        return Err(Error::InvalidArgument("bootstrap needs cutoff ≥ 1".into()));
    }
    let design = FockDesign::new(data, cutoff);
    let full = design.em_reconstruct(options)?;
    let origin_estimate = wigner_origin(&full.p_hat);

    let k = data.len();
    let runs: Vec<(PhotonNumberDistribution, bool)> = (0..replicas)
        .into_par_iter()
        .map(|r| {
            let mut rng = substream(rng_seed, domain::BOOTSTRAP, r as u64);
            let mut counts = vec![0u32; k];
            for _ in 0..k {
                counts[rng.random_range(0..k)] += 1;
            }
            design
                .resample(&counts)
                .and_then(|d| d.em_reconstruct(options))
                .map(|res| (res.p_hat, res.converged))
                .map_err(|e| Error::Replica {
                    replica: r,
                    source: Box::new(e),
                })
        })
        .collect::<Result<_>>()?;

    let per_replica_origin: Vec<f64> = runs.iter().map(|(p, _)| wigner_origin(p)).collect();
    let mean = per_replica_origin.iter().sum::<f64>() / replicas as f64;
    let var = per_replica_origin
        .iter()
        .map(|w| (w - mean) * (w - mean))
        .sum::<f64>()
        / (replicas - 1) as f64;
    let std = var.sqrt();
    let significance = if origin_estimate < 0.0 && std > 0.0 {
        origin_estimate.abs() / std
    } else {
        0.0
    };
    let unconverged_replicas = runs
        .iter()
        .enumerate()
        .filter(|(_, (_, c))| !c)
        .map(|(i, _)| i)
        .collect();
    Ok(BootstrapReport {
        replicas,
        cutoff,
        estimate_p: full.p_hat,
        origin_estimate,
        origin_mean: mean,
        origin_std: std,
        significance,
        per_replica_origin,
        per_replica_p: runs.into_iter().map(|(p, _)| p).collect(),
        unconverged_replicas,
        rng_seed,
    })
}
