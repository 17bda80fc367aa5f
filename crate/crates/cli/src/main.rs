//! `changeval` command-line front end.
//!
//! Common flags (`--seed`, `--out`, `--convention`, `--alpha-grid`,
//! `--bandwidth`) override the matching keys of the `--config` file. For
//! `report` the config file is the job TOML; for every other subcommand it
//! is an optional defaults file with the same five keys plus a `[synth]`
//! table.

use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::Deserialize;

use changeval_core::bayes_metrics::{prevalence_sweep, uniform_grid};
use changeval_core::convergence::{CbForm, RobustnessGroup, DEFAULT_ALPHA_GRID};
use changeval_core::fmt::{sig6, sig6_opt};
use changeval_core::kde::{density_intersection, fit_kde};
use changeval_core::raster::{load_grid, threshold_scores, to_binary, write_grid, DEFAULT_NODATA};
use changeval_core::report::{self, assess, JobConfig};
use changeval_core::sampling::{draw_pools, tile_region, PoolSet, DEFAULT_QUANTILES};
use changeval_core::synth::{self, default_cycles, generate_pair, generate_run_table};
use changeval_core::{BinaryGrid, Convention, ScoreGrid, SynthConfig, Threshold};

#[derive(Parser)]
#[command(name = "changeval", version, about = "Accuracy assessment of binary land-change predictions")]
struct Cli {
    #[command(flatten)]
    common: Common,
    #[command(subcommand)]
    cmd: Cmd,
}

#[derive(Args, Default)]
struct Common {
    /// Config file (job TOML for `report`, defaults file otherwise).
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Output directory.
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    /// paper | standard
    #[arg(long, global = true)]
    convention: Option<Convention>,
    /// Comma-separated asymmetry levels, e.g. 0,0.25,0.5.
    #[arg(long, global = true, value_delimiter = ',')]
    alpha_grid: Option<Vec<f64>>,
    /// KDE bandwidth (Silverman's rule when absent).
    #[arg(long, global = true)]
    bandwidth: Option<f64>,
}

#[derive(Subcommand)]
enum Cmd {
    /// Confusion metrics, likelihood ratios, DOR and PPV/NPV for one map pair.
    Assess(PairArgs),
    /// PPV/NPV over a prevalence grid for one map pair.
    Sweep {
        #[command(flatten)]
        pair: PairArgs,
        #[arg(long, default_value_t = 101)]
        points: usize,
    },
    /// Epanechnikov densities of labelled values and their crossing.
    Kde {
        /// CSV with columns `label` (pos or neg) and `value`.
        #[arg(long)]
        input: PathBuf,
        #[arg(long, value_delimiter = ',', default_value = "0,1")]
        interval: Vec<f64>,
    },
    /// Convergence-factor fits, dominance scores and P-P curves of a run table.
    Converge {
        /// CSV with columns box_id, group, cycle, ppv, npv.
        #[arg(long)]
        runs: PathBuf,
    },
    /// Tile a region into boxes, build the A/B/C pools and draw quantile samples.
    Sample {
        /// 0/1 grid of observed urban change.
        #[arg(long)]
        change: PathBuf,
        /// 0/1 grid of exclusionary land.
        #[arg(long)]
        exclusion: PathBuf,
        #[arg(long)]
        box_side: usize,
        #[arg(long, default_value_t = DEFAULT_QUANTILES)]
        quantiles: usize,
    },
    /// Write a synthetic map pair, a run table, and optionally a report job.
    Synth(SynthArgs),
    /// Run a batch assessment job.
    Report,
}

#[derive(Clone, Copy, ValueEnum)]
enum Kind {
    Binary,
    Score,
}

#[derive(Args)]
struct PairArgs {
    /// Simulated map: 0/1 grid, or scores in [0, 1] with `--kind score`.
    #[arg(long)]
    prediction: PathBuf,
    #[arg(long, value_enum, default_value = "binary")]
    kind: Kind,
    /// Observed 0/1 change grid.
    #[arg(long)]
    obs: PathBuf,
    /// Grid whose nonzero cells are excluded from the assessment.
    #[arg(long)]
    exclusion: Option<PathBuf>,
    /// Score cut for `--kind score`.
    #[arg(long, default_value_t = 0.5)]
    threshold: f64,
    /// Cut scores so predicted change matches the observed change count.
    #[arg(long)]
    match_observed: bool,
    /// Prevalence for PPV/NPV; the observed prevalence when absent.
    #[arg(long)]
    prevalence: Option<f64>,
}

#[derive(Args)]
struct SynthArgs {
    #[arg(long)]
    rows: Option<usize>,
    #[arg(long)]
    cols: Option<usize>,
    #[arg(long)]
    change_fraction: Option<f64>,
    #[arg(long)]
    exclusion_fraction: Option<f64>,
    #[arg(long)]
    score_noise: Option<f64>,
    #[arg(long)]
    planted_offset: Option<f64>,
    /// Boxes in the run table.
    #[arg(long, default_value_t = 90)]
    boxes: usize,
    /// Also write a report job (grids, inputs.csv, job.toml) under `job/`.
    #[arg(long)]
    job: bool,
    /// Boxes in the report job.
    #[arg(long, default_value_t = 6)]
    job_boxes: usize,
    /// Cycles in the report job.
    #[arg(long, value_delimiter = ',', default_value = "100,1000,10000,100000")]
    job_cycles: Vec<u64>,
}

#[derive(Deserialize, Default)]
#[serde(default, deny_unknown_fields)]
struct Defaults {
    seed: Option<u64>,
    out: Option<PathBuf>,
    convention: Option<Convention>,
    alpha_grid: Option<Vec<f64>>,
    bandwidth: Option<f64>,
    synth: Option<SynthConfig>,
}

/// Flags merged over the defaults file.
struct Settings {
    seed: u64,
    out: Option<PathBuf>,
    convention: Convention,
    alpha_grid: Vec<f64>,
    bandwidth: Option<f64>,
    synth: SynthConfig,
}

fn settings(common: &Common) -> Result<Settings> {
    let defaults: Defaults = match &common.config {
        Some(path) => {
            let text = fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
            toml::from_str(&text).with_context(|| format!("parsing {}", path.display()))?
        }
        None => Defaults::default(),
    };
    Ok(Settings {
        seed: common.seed.or(defaults.seed).unwrap_or(1),
        out: common.out.clone().or(defaults.out),
        convention: common.convention.or(defaults.convention).unwrap_or(Convention::PaperLiteral),
        alpha_grid: common
            .alpha_grid
            .clone()
            .or(defaults.alpha_grid)
            .unwrap_or_else(|| DEFAULT_ALPHA_GRID.to_vec()),
        bandwidth: common.bandwidth.or(defaults.bandwidth),
        synth: defaults.synth.unwrap_or_default(),
    })
}

fn prepare_dir(dir: &Path) -> Result<()> {
    fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))
}

fn write(dir: &Path, name: &str, bytes: &[u8]) -> Result<()> {
    let path = dir.join(name);
    fs::write(&path, bytes).with_context(|| format!("writing {}", path.display()))
}

/// Writes `bytes` to `out/name`, or to stdout without `--out`.
fn emit(out: Option<&Path>, name: &str, bytes: &[u8]) -> Result<()> {
    match out {
        Some(dir) => {
            prepare_dir(dir)?;
            write(dir, name, bytes)
        }
        None => Ok(std::io::stdout().write_all(bytes)?),
    }
}

fn load_pair(a: &PairArgs) -> Result<(BinaryGrid, BinaryGrid)> {
    let exclusion = a.exclusion.as_deref().map(load_grid).transpose()?;
    let obs = to_binary(&load_grid(&a.obs)?, 1.0, 0.0, exclusion.as_ref())
        .with_context(|| format!("classifying {}", a.obs.display()))?;
    let pred = load_grid(&a.prediction)?;
    let sim = match a.kind {
        Kind::Binary => to_binary(&pred, 1.0, 0.0, exclusion.as_ref())?,
        Kind::Score => {
            let scores = ScoreGrid::from_grid(&pred, exclusion.as_ref())?;
            let mode = if a.match_observed {
                Threshold::Quantity(obs.count(changeval_core::Cell::One))
            } else {
                Threshold::Value(a.threshold)
            };
            threshold_scores(&scores, mode)?
        }
    };
    Ok((sim, obs))
}

fn cmd_assess(s: &Settings, a: &PairArgs) -> Result<()> {
    let (sim, obs) = load_pair(a)?;
    let result = assess(&sim, &obs, s.convention, a.prevalence)?;
    let run = report::RunMetrics {
        box_id: 0,
        group: changeval_core::Group::A,
        cycle: 0,
        assessment: result,
    };
    let (head, rows) = report::metrics_rows(std::slice::from_ref(&run));
    // Drop the box/group/cycle columns; a single pair has none.
    let head: Vec<String> = head[3..].to_vec();
    let rows: Vec<Vec<String>> = rows.into_iter().map(|r| r[3..].to_vec()).collect();
    emit(s.out.as_deref(), "metrics.csv", &report::to_csv(&head, &rows)?)
}

fn cmd_sweep(s: &Settings, a: &PairArgs, points: usize) -> Result<()> {
    let (sim, obs) = load_pair(a)?;
    let rates = assess(&sim, &obs, s.convention, Some(0.5))?.rates;
    let rows: Vec<Vec<String>> = prevalence_sweep(&rates, &uniform_grid(points), s.convention)?
        .into_iter()
        .map(|pv| vec![sig6(pv.prevalence), sig6_opt(pv.ppv), sig6_opt(pv.npv)])
        .collect();
    let head = ["prevalence", "ppv", "npv"].map(String::from);
    emit(s.out.as_deref(), "bayes.csv", &report::to_csv(&head, &rows)?)
}

fn cmd_kde(s: &Settings, input: &Path, interval: &[f64]) -> Result<()> {
    let [lo, hi] = interval else {
        bail!("--interval takes two values, got {}", interval.len());
    };
    #[derive(Deserialize)]
    struct Row {
        label: String,
        value: f64,
    }
    let (mut pos, mut neg) = (Vec::new(), Vec::new());
    let mut rdr = csv::Reader::from_path(input).with_context(|| format!("reading {}", input.display()))?;
    for row in rdr.deserialize::<Row>() {
        let row = row?;
        match row.label.trim() {
            "pos" => pos.push(row.value),
            "neg" => neg.push(row.value),
            other => bail!("unknown label {other:?} (expected pos or neg)"),
        }
    }
    let f_pos = fit_kde(&pos, s.bandwidth).context("fitting pos density")?;
    let f_neg = fit_kde(&neg, s.bandwidth).context("fitting neg density")?;
    let (head, rows) = report::kde_rows(&f_pos, &f_neg, *lo, *hi);
    emit(s.out.as_deref(), "kde.csv", &report::to_csv(&head, &rows)?)?;
    let hit = density_intersection(&f_pos, &f_neg, (*lo, *hi))?;
    let all: Vec<String> = hit.crossings.iter().map(|c| sig6(c.x)).collect();
    let line = format!(
        "prevalence* = {} (h_pos = {}, h_neg = {}; crossings: {})",
        sig6(hit.prevalence),
        sig6(f_pos.bandwidth()),
        sig6(f_neg.bandwidth()),
        all.join(" ")
    );
    if s.out.is_some() {
        println!("{line}");
    } else {
        eprintln!("{line}");
    }
    Ok(())
}

fn cmd_converge(s: &Settings, runs: &Path) -> Result<()> {
    let records = report::read_runs(runs)?;
    if records.is_empty() {
        bail!("{} has no runs", runs.display());
    }
    let out = s.out.clone().unwrap_or_else(|| PathBuf::from("converge-out"));
    prepare_dir(&out)?;
    let mut forms = vec![CbForm::Triangular, CbForm::AdjustedNormal];
    forms.extend(changeval_core::convergence::alpha_forms(&s.alpha_grid)?);

    let (h, r) = report::cb_rows(&records, &forms)?;
    write(&out, "cb_values.csv", &report::to_csv(&h, &r)?)?;
    let (h, r) = report::timeline_rows(&records, &forms)?;
    write(&out, "timeline.csv", &report::to_csv(&h, &r)?)?;

    let mut warnings = Vec::new();
    let analyses = report::converge_scopes(&records, &s.alpha_grid, &RobustnessGroup::defaults(), &mut warnings);
    let (h, r) = report::fits_rows(&analyses);
    write(&out, "fits.csv", &report::to_csv(&h, &r)?)?;
    let (h, r) = report::dominance_rows(&analyses);
    write(&out, "dominance.csv", &report::to_csv(&h, &r)?)?;
    let mut scopes = serde_json::Map::new();
    for a in &analyses {
        let (h, r) = report::ppcurve_rows(a);
        write(&out, &format!("ppcurve_{}.csv", a.scope), &report::to_csv(&h, &r)?)?;
        scopes.insert(a.scope.clone(), report::scope_summary(a));
    }
    let summary = serde_json::json!({ "scopes": scopes, "warnings": warnings });
    let mut bytes = serde_json::to_vec_pretty(&summary)?;
    bytes.push(b'\n');
    write(&out, "summary.json", &bytes)?;
    for a in &analyses {
        println!(
            "{}: selected alpha {} ({}), prevalence {}, net gain {}",
            a.scope,
            sig6(a.selected_alpha()),
            if a.dominance.selection.is_uniform() { "uniform dominator" } else { "no uniform dominator" },
            sig6_opt(a.pp.prevalence),
            sig6(a.pp.net_gain)
        );
    }
    for w in &warnings {
        eprintln!("warning: {w}");
    }
    Ok(())
}

fn cmd_sample(s: &Settings, change: &Path, exclusion: &Path, box_side: usize, quantiles: usize) -> Result<()> {
    let change = to_binary(&load_grid(change)?, 1.0, 0.0, None)?;
    let exclusion = to_binary(&load_grid(exclusion)?, 1.0, 0.0, None)?;
    let boxes = tile_region(&change, &exclusion, box_side)?;
    let out = s.out.clone().unwrap_or_else(|| PathBuf::from("sample-out"));
    prepare_dir(&out)?;
    let head = ["box_id", "row_start", "col_start", "pct_urban_change", "pct_exclusionary", "index", "pools"]
        .map(String::from);
    let rows: Vec<Vec<String>> = boxes
        .iter()
        .map(|b| {
            vec![
                b.box_id.to_string(),
                b.rows.start.to_string(),
                b.cols.start.to_string(),
                sig6(b.pct_urban_change),
                sig6(b.pct_exclusionary),
                sig6(b.index),
                PoolSet::from_index(b.index).label(),
            ]
        })
        .collect();
    write(&out, "boxes.csv", &report::to_csv(&head, &rows)?)?;
    let draws = draw_pools(&boxes, quantiles, s.seed)?;
    let (h, r) = report::sample_rows(&draws);
    write(&out, "samples.csv", &report::to_csv(&h, &r)?)?;
    println!("{} boxes; drew {} per pool with seed {}", boxes.len(), quantiles, s.seed);
    Ok(())
}

fn cmd_synth(s: &Settings, a: &SynthArgs) -> Result<()> {
    let mut cfg = s.synth.clone();
    cfg.seed = s.seed;
    cfg.rows = a.rows.unwrap_or(cfg.rows);
    cfg.cols = a.cols.unwrap_or(cfg.cols);
    cfg.change_fraction = a.change_fraction.unwrap_or(cfg.change_fraction);
    cfg.exclusion_fraction = a.exclusion_fraction.unwrap_or(cfg.exclusion_fraction);
    cfg.score_noise = a.score_noise.unwrap_or(cfg.score_noise);
    cfg.planted_offset = a.planted_offset.unwrap_or(cfg.planted_offset);
    let out = s.out.clone().unwrap_or_else(|| PathBuf::from("synth-out"));
    prepare_dir(&out)?;

    let (obs, scores) = generate_pair(&cfg)?;
    write_grid(&obs.to_grid(DEFAULT_NODATA), out.join("obs.asc"))?;
    write_grid(&synth::exclusion_mask(&obs).to_grid(DEFAULT_NODATA), out.join("exclusion.asc"))?;
    write_grid(&scores.to_grid(DEFAULT_NODATA), out.join("scores.asc"))?;
    let runs = generate_run_table(&cfg, a.boxes, &default_cycles())?;
    write(&out, "runs.csv", &report::runs_csv(&runs)?)?;
    if a.job {
        let job = synth::write_job_fixture(&out.join("job"), &cfg, a.job_boxes, &a.job_cycles)?;
        println!("job written to {}", job.display());
    }
    println!("wrote {} grid cells and {} runs to {}", cfg.rows * cfg.cols, runs.len(), out.display());
    Ok(())
}

fn cmd_report(common: &Common) -> Result<()> {
    let Some(path) = &common.config else {
        bail!("report needs --config pointing at a job TOML");
    };
    let mut job = JobConfig::load(path).with_context(|| format!("loading {}", path.display()))?;
    if let Some(seed) = common.seed {
        job.seed = seed;
    }
    if let Some(out) = &common.out {
        job.output_dir = out.clone();
    }
    if let Some(c) = common.convention {
        job.convention = c;
    }
    if let Some(grid) = &common.alpha_grid {
        job.alpha_grid = grid.clone();
    }
    if common.bandwidth.is_some() {
        job.bandwidth = common.bandwidth;
    }
    let manifest = report::run_job(&job)?;
    println!(
        "{} of {} runs assessed, {} failed; {} files in {}",
        manifest.n_assessed,
        manifest.n_inputs,
        manifest.failures.len(),
        manifest.files.len() + 1,
        job.output_dir.display()
    );
    for f in &manifest.failures {
        eprintln!("failed: box {} cycle {}: {}", f.box_id, f.cycle, f.reason);
    }
    Ok(())
}

fn main() -> Result<()> {
    let cli = Cli::parse();
    if let Cmd::Report = cli.cmd {
        return cmd_report(&cli.common);
    }
    let s = settings(&cli.common)?;
    match &cli.cmd {
        Cmd::Assess(a) => cmd_assess(&s, a),
        Cmd::Sweep { pair, points } => cmd_sweep(&s, pair, *points),
        Cmd::Kde { input, interval } => cmd_kde(&s, input, interval),
        Cmd::Converge { runs } => cmd_converge(&s, runs),
        Cmd::Sample { change, exclusion, box_side, quantiles } => {
            cmd_sample(&s, change, exclusion, *box_side, *quantiles)
        }
        Cmd::Synth(a) => cmd_synth(&s, a),
        Cmd::Report => unreachable!("handled above"),
    }
}
