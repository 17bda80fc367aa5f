//! Synthetic landscapes, score maps, and run tables with known ground truth.
//!
//! The run-table model is a plumbing stand-in for a trained simulator: each
//! box gets a midpoint `m` near 0.5 and every run draws a gap
//! `d = planted_offset + score_noise · √(c_min / c) · N(0, 1)`, then reports
//! `ppv = m + d/2`, `npv = m − d/2` (clamped to [0, 1]). Noise shrinking like
//! `c^(−1/2)` mimics a learning curve; it is not calibrated to anything.

use std::fs;
use std::path::{Path, PathBuf};

use rand::seq::SliceRandom;
use rand::Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::convergence::RunRecord;
use crate::raster::{write_grid, BinaryGrid, Cell, ScoreGrid, DEFAULT_NODATA};
use crate::rng::derived_rng;
use crate::sampling::Group;
use crate::{Error, Result};

/// Half-width of the uniform jitter on each box's PPV/NPV midpoint.
pub const MIDPOINT_JITTER: f64 = 0.1;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SynthConfig {
    pub rows: usize,
    pub cols: usize,
    pub seed: u64,
    pub change_fraction: f64,
    pub exclusion_fraction: f64,
    pub score_noise: f64,
    pub planted_offset: f64,
}

impl Default for SynthConfig {
    fn default() -> Self {
        SynthConfig {
            rows: 50,
            cols: 50,
            seed: 1,
            change_fraction: 0.1,
            exclusion_fraction: 0.2,
            score_noise: 0.3,
            planted_offset: 0.25,
        }
    }
}

impl SynthConfig {
    pub fn validate(&self) -> Result<()> {
        if self.rows == 0 || self.cols == 0 {
            return Err(Error::invalid("grid must have at least one row and column"));
        }
        for (name, v) in [
            ("change_fraction", self.change_fraction),
            ("exclusion_fraction", self.exclusion_fraction),
        ] {
            if !(0.0..=1.0).contains(&v) {
                return Err(Error::invalid(format!("{name} {v} outside [0, 1]")));
            }
        }
        if self.change_fraction + self.exclusion_fraction > 1.0 {
            return Err(Error::invalid(format!(
                "change_fraction + exclusion_fraction = {} exceeds 1",
                self.change_fraction + self.exclusion_fraction
            )));
        }
        if !(self.score_noise >= 0.0 && self.score_noise.is_finite()) {
            return Err(Error::invalid(format!(
                "score_noise {} must be finite and nonnegative",
                self.score_noise
            )));
        }
        if !(-1.0..=1.0).contains(&self.planted_offset) {
            return Err(Error::invalid(format!(
                "planted_offset {} outside [-1, 1]",
                self.planted_offset
            )));
        }
        Ok(())
    }

    fn cells(&self) -> usize {
        self.rows * self.cols
    }

    pub fn n_change(&self) -> usize {
        (self.change_fraction * self.cells() as f64).floor() as usize
    }

    pub fn n_excluded(&self) -> usize {
        (self.exclusion_fraction * self.cells() as f64).floor() as usize
    }
}

fn layout(cfg: &SynthConfig, label: &str) -> Result<BinaryGrid> {
    let mut order: Vec<usize> = (0..cfg.cells()).collect();
    order.shuffle(&mut derived_rng(cfg.seed, label));
    let mut cells = vec![Cell::Zero; cfg.cells()];
    let (n_ex, n_ch) = (cfg.n_excluded(), cfg.n_change());
    for &i in &order[..n_ex] {
        cells[i] = Cell::Excluded;
    }
    for &i in &order[n_ex..n_ex + n_ch] {
        cells[i] = Cell::One;
    }
    BinaryGrid::new(cfg.rows, cfg.cols, cells)
}

fn noisy_scores(obs: &BinaryGrid, noise: f64, seed: u64, label: &str) -> Result<ScoreGrid> {
    let mut rng = derived_rng(seed, label);
    let values = obs
        .cells()
        .iter()
        .map(|c| {
            let truth = match c {
                Cell::Excluded => return None,
                Cell::One => 1.0,
                Cell::Zero => 0.0,
            };
            let e: f64 = rng.sample(StandardNormal);
            Some((truth + noise * e).clamp(0.0, 1.0))
        })
        .collect();
    ScoreGrid::new(obs.rows(), obs.cols(), values)
}

/// Observed change map and a noisy score surface over the same cells.
pub fn generate_pair(cfg: &SynthConfig) -> Result<(BinaryGrid, ScoreGrid)> {
    cfg.validate()?;
    let obs = layout(cfg, "layout")?;
    let scores = noisy_scores(&obs, cfg.score_noise, cfg.seed, "scores")?;
    Ok((obs, scores))
}

/// 1 where `obs` is excluded, 0 elsewhere.
pub fn exclusion_mask(obs: &BinaryGrid) -> BinaryGrid {
    let cells = obs
        .cells()
        .iter()
        .map(|c| if *c == Cell::Excluded { Cell::One } else { Cell::Zero })
        .collect();
    BinaryGrid::new(obs.rows(), obs.cols(), cells).expect("same shape")
}

/// Run table with a planted PPV − NPV gap, one row per (box, cycle).
///
/// Box `b` belongs to group `A`, `B`, `C` cyclically and draws from its own
/// `(seed, "box-b")` stream, so boxes are generated in parallel.
pub fn generate_run_table(
    cfg: &SynthConfig,
    n_boxes: usize,
    cycles: &[u64],
) -> Result<Vec<RunRecord>> {
    cfg.validate()?;
    if cycles.contains(&0) {
        return Err(Error::invalid("training cycles must be positive"));
    }
    let Some(&c_min) = cycles.iter().min() else {
        return Ok(Vec::new());
    };
    let per_box: Vec<Vec<RunRecord>> = (0..n_boxes)
        .into_par_iter()
        .map(|b| {
            let mut rng = derived_rng(cfg.seed, &format!("box-{b}"));
            let mid = 0.5 + rng.random_range(-MIDPOINT_JITTER..=MIDPOINT_JITTER);
            cycles
                .iter()
                .map(|&cycle| {
                    let sd = cfg.score_noise * (c_min as f64 / cycle as f64).sqrt();
                    let e: f64 = rng.sample(StandardNormal);
                    let d = cfg.planted_offset + sd * e;
                    RunRecord {
                        box_id: b,
                        group: Group::ALL[b % 3],
                        cycle,
                        ppv: (mid + d / 2.0).clamp(0.0, 1.0),
                        npv: (mid - d / 2.0).clamp(0.0, 1.0),
                    }
                })
                .collect()
        })
        .collect();
    Ok(per_box.into_iter().flatten().collect())
}

/// 44 distinct training-cycle counts, multiples of 100, log-spaced from 100
/// to 500,000.
pub fn default_cycles() -> Vec<u64> {
    const N: usize = 44;
    let (lo, hi) = (100f64, 500_000f64);
    let mut out: Vec<u64> = Vec::with_capacity(N);
    for i in 0..N {
        let x = lo * (hi / lo).powf(i as f64 / (N - 1) as f64);
        let mut c = ((x / 100.0).round() as u64) * 100;
        if let Some(&prev) = out.last() {
            c = c.max(prev + 100);
        }
        out.push(c);
    }
    out
}

/// Score noise of a fixture map: `score_noise · (1 + 2√(c_min / c))`, so
/// maps improve over cycles but never become perfect.
fn fixture_noise(score_noise: f64, c_min: u64, cycle: u64) -> f64 {
    score_noise * (1.0 + 2.0 * (c_min as f64 / cycle.max(1) as f64).sqrt())
}

/// Writes a complete report job under `dir`: per-box observed and exclusion
/// grids, one score grid per (box, cycle), `inputs.csv`, and `job.toml`.
/// Returns the path of `job.toml`.
pub fn write_job_fixture(
    dir: &Path,
    cfg: &SynthConfig,
    n_boxes: usize,
    cycles: &[u64],
) -> Result<PathBuf> {
    cfg.validate()?;
    let grids = dir.join("grids");
    fs::create_dir_all(&grids).map_err(|e| Error::io(&grids, e))?;
    let c_min = cycles.iter().copied().min().unwrap_or(1).max(1);

    let mut inputs = csv::Writer::from_writer(Vec::new());
    inputs.write_record(["box_id", "group", "cycle", "prediction", "kind", "obs", "exclusion"])?;
    for b in 0..n_boxes {
        let obs = layout(cfg, &format!("layout-box-{b}"))?;
        let obs_name = format!("grids/obs_{b}.asc");
        let ex_name = format!("grids/exclusion_{b}.asc");
        write_grid(&obs.to_grid(DEFAULT_NODATA), dir.join(&obs_name))?;
        write_grid(&exclusion_mask(&obs).to_grid(DEFAULT_NODATA), dir.join(&ex_name))?;
        for &cycle in cycles {
            let noise = fixture_noise(cfg.score_noise, c_min, cycle);
            let scores = noisy_scores(&obs, noise, cfg.seed, &format!("scores-box-{b}-cycle-{cycle}"))?;
            let name = format!("grids/score_{b}_{cycle}.asc");
            write_grid(&scores.to_grid(DEFAULT_NODATA), dir.join(&name))?;
            inputs.write_record([
                b.to_string(),
                Group::ALL[b % 3].to_string(),
                cycle.to_string(),
                name,
                "score".into(),
                obs_name.clone(),
                ex_name.clone(),
            ])?;
        }
    }
    let bytes = inputs
        .into_inner()
        .map_err(|e| Error::invalid(format!("flushing inputs.csv: {e}")))?;
    let inputs_path = dir.join("inputs.csv");
    fs::write(&inputs_path, bytes).map_err(|e| Error::io(&inputs_path, e))?;

    let job = crate::report::JobConfig {
        inputs: PathBuf::from("inputs.csv"),
        output_dir: PathBuf::from("out"),
        seed: cfg.seed,
        ..Default::default()
    };
    let job_path = dir.join("job.toml");
    fs::write(&job_path, job.to_toml()?).map_err(|e| Error::io(&job_path, e))?;
    Ok(job_path)
}
