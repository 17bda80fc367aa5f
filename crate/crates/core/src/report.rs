//! Batch assessment jobs and their CSV/JSON artifacts.
//!
//! A job is a TOML file pointing at an inputs CSV with one row per
//! (box, cycle) prediction:
//!
//! ```text
//! box_id,group,cycle,prediction,kind,obs,exclusion
//! 0,A,100,grids/score_0_100.asc,score,grids/obs_0.asc,grids/exclusion_0.asc
//! ```
//!
//! `kind` is `binary` (0/1 grid) or `score` (values in [0, 1], cut by the
//! job's threshold policy). `exclusion` may be empty. Relative paths in the
//! TOML resolve against the TOML's directory, paths in the CSV against the
//! CSV's directory.
//!
//! Every referenced file must exist before any work starts. After that a
//! run that fails (unreadable grid, shape mismatch, ...) is recorded in the
//! manifest and the rest of the job continues. Every float is written with
//! six significant digits, and `manifest.json` lists each output with its
//! SHA-256, so identical inputs give a byte-identical output tree.

use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use serde_json::{json, Value};
use sha2::{Digest, Sha256};

use crate::bayes_metrics::{
    diagnostic_odds_ratio, likelihood_ratios, predictive_values, prevalence_sweep, uniform_grid,
    Convention, LikelihoodRatios, PredictiveValues, Ratio,
};
use crate::confusion::{agreement_rates, build_confusion, AgreementRates, ConfusionMatrix};
use crate::convergence::{
    analyze_scope, cb_timeline, CbForm, RobustnessGroup, RunRecord, ScopeAnalysis, Scope,
    DEFAULT_ALPHA_GRID,
};
use crate::fmt::{round6, sig6, sig6_opt};
use crate::kde::{density_intersection, fit_kde, Intersection, KdeModel, SCAN_POINTS};
use crate::raster::{load_grid, threshold_scores, to_binary, BinaryGrid, Cell, ScoreGrid, Threshold};
use crate::sampling::{Group, SampleBox};
use crate::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "mode", rename_all = "snake_case")]
pub enum ThresholdPolicy {
    /// Score ≥ `value` is a predicted change.
    Value { value: f64 },
    /// As many predicted changes as observed changes.
    ObservedCount,
}

impl Default for ThresholdPolicy {
    fn default() -> Self {
        ThresholdPolicy::Value { value: 0.5 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct JobConfig {
    pub inputs: PathBuf,
    pub output_dir: PathBuf,
    pub seed: u64,
    pub convention: Convention,
    pub alpha_grid: Vec<f64>,
    /// KDE bandwidth; Silverman's rule when absent.
    pub bandwidth: Option<f64>,
    pub threshold: ThresholdPolicy,
    /// Prevalence for the per-run PPV/NPV.
    pub prevalence: f64,
    /// Use each run's observed prevalence instead of `prevalence`.
    pub observed_prevalence: bool,
    /// Points in the per-run prevalence sweep.
    pub sweep_points: usize,
    /// KDE search interval.
    pub kde_interval: [f64; 2],
    pub robustness_groups: Vec<RobustnessGroup>,
}

impl Default for JobConfig {
    fn default() -> Self {
        JobConfig {
            inputs: PathBuf::from("inputs.csv"),
            output_dir: PathBuf::from("out"),
            seed: 0,
            convention: Convention::PaperLiteral,
            alpha_grid: DEFAULT_ALPHA_GRID.to_vec(),
            bandwidth: None,
            threshold: ThresholdPolicy::default(),
            prevalence: 0.5,
            observed_prevalence: false,
            sweep_points: 21,
            kde_interval: [0.0, 1.0],
            robustness_groups: RobustnessGroup::defaults(),
        }
    }
}

impl JobConfig {
    /// Parses `path` and resolves its relative paths against its directory.
    pub fn load(path: &Path) -> Result<JobConfig> {
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let mut cfg: JobConfig = toml::from_str(&text)?;
        let base = path.parent().unwrap_or(Path::new(""));
        cfg.inputs = base.join(&cfg.inputs);
        cfg.output_dir = base.join(&cfg.output_dir);
        Ok(cfg)
    }

    pub fn to_toml(&self) -> Result<String> {
        toml::to_string(self).map_err(|e| Error::invalid(format!("serializing job: {e}")))
    }

    pub fn validate(&self) -> Result<()> {
        if !(0.0..=1.0).contains(&self.prevalence) {
            return Err(Error::invalid(format!("prevalence {} outside [0, 1]", self.prevalence)));
        }
        if let ThresholdPolicy::Value { value } = self.threshold {
            if !(0.0..=1.0).contains(&value) {
                return Err(Error::invalid(format!("threshold {value} outside [0, 1]")));
            }
        }
        if self.alpha_grid.is_empty() {
            return Err(Error::invalid("alpha_grid is empty"));
        }
        crate::convergence::alpha_forms(&self.alpha_grid)?;
        if self.robustness_groups.len() < 2 {
            return Err(Error::invalid("need at least two robustness groups"));
        }
        let [lo, hi] = self.kde_interval;
        if !(0.0 <= lo && lo < hi && hi <= 1.0) {
            return Err(Error::invalid(format!("kde_interval [{lo}, {hi}] not inside [0, 1]")));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PredictionKind {
    Binary,
    Score,
}

#[derive(Debug, Clone, PartialEq)]
pub struct JobInput {
    pub box_id: usize,
    pub group: Group,
    pub cycle: u64,
    pub prediction: PathBuf,
    pub kind: PredictionKind,
    pub obs: PathBuf,
    pub exclusion: Option<PathBuf>,
}

#[derive(Debug, Deserialize)]
struct RawInput {
    box_id: usize,
    group: String,
    cycle: u64,
    prediction: PathBuf,
    kind: PredictionKind,
    obs: PathBuf,
    exclusion: Option<PathBuf>,
}

/// Reads an inputs CSV, resolving paths against its directory.
pub fn load_inputs(path: &Path) -> Result<Vec<JobInput>> {
    let base = path.parent().unwrap_or(Path::new(""));
    let file = fs::File::open(path).map_err(|e| Error::io(path, e))?;
    let mut rdr = csv::Reader::from_reader(file);
    let mut out = Vec::new();
    for row in rdr.deserialize::<RawInput>() {
        let r = row?;
        out.push(JobInput {
            box_id: r.box_id,
            group: r.group.parse()?,
            cycle: r.cycle,
            prediction: base.join(r.prediction),
            kind: r.kind,
            obs: base.join(r.obs),
            exclusion: r
                .exclusion
                .filter(|p| !p.as_os_str().is_empty())
                .map(|p| base.join(p)),
        });
    }
    Ok(out)
}

/// Every metric for one simulated/observed pair.
#[derive(Debug, Clone, PartialEq)]
pub struct Assessment {
    pub confusion: ConfusionMatrix,
    pub rates: AgreementRates,
    pub lr: LikelihoodRatios,
    pub dor: Ratio,
    pub pv: PredictiveValues,
}

/// Assesses `sim` against `obs` at `prevalence`, or at the observed
/// prevalence when `None`.
pub fn assess(
    sim: &BinaryGrid,
    obs: &BinaryGrid,
    convention: Convention,
    prevalence: Option<f64>,
) -> Result<Assessment> {
    let confusion = build_confusion(sim, obs)?;
    let rates = agreement_rates(&confusion);
    let p = match prevalence {
        Some(p) => p,
        None => rates.prevalence_observed.expect("nonempty matrix has a prevalence"),
    };
    let lr = likelihood_ratios(&rates, convention);
    Ok(Assessment {
        confusion,
        rates,
        dor: diagnostic_odds_ratio(&lr),
        lr,
        pv: predictive_values(&rates, p, convention)?,
    })
}

#[derive(Debug, Clone, PartialEq)]
pub struct RunMetrics {
    pub box_id: usize,
    pub group: Group,
    pub cycle: u64,
    pub assessment: Assessment,
}

impl RunMetrics {
    /// The convergence record, when both predictive values are defined.
    pub fn record(&self) -> Option<RunRecord> {
        let pv = &self.assessment.pv;
        Some(RunRecord {
            box_id: self.box_id,
            group: self.group,
            cycle: self.cycle,
            ppv: pv.ppv?,
            npv: pv.npv?,
        })
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct Failure {
    pub box_id: usize,
    pub group: Group,
    pub cycle: u64,
    pub reason: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct ManifestEntry {
    pub path: String,
    pub sha256: String,
    pub bytes: u64,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct Manifest {
    pub n_inputs: usize,
    pub n_assessed: usize,
    pub files: Vec<ManifestEntry>,
    pub failures: Vec<Failure>,
}

fn assess_input(input: &JobInput, cfg: &JobConfig) -> Result<RunMetrics> {
    let exclusion = input.exclusion.as_deref().map(load_grid).transpose()?;
    let obs = to_binary(&load_grid(&input.obs)?, 1.0, 0.0, exclusion.as_ref())?;
    let pred = load_grid(&input.prediction)?;
    let sim = match input.kind {
        PredictionKind::Binary => to_binary(&pred, 1.0, 0.0, exclusion.as_ref())?,
        PredictionKind::Score => {
            let scores = ScoreGrid::from_grid(&pred, exclusion.as_ref())?;
            let mode = match cfg.threshold {
                ThresholdPolicy::Value { value } => Threshold::Value(value),
                ThresholdPolicy::ObservedCount => Threshold::Quantity(obs.count(Cell::One)),
            };
            threshold_scores(&scores, mode)?
        }
    };
    let prevalence = (!cfg.observed_prevalence).then_some(cfg.prevalence);
    Ok(RunMetrics {
        box_id: input.box_id,
        group: input.group,
        cycle: input.cycle,
        assessment: assess(&sim, &obs, cfg.convention, prevalence)?,
    })
}

fn validate_inputs(inputs: &[JobInput]) -> Result<()> {
    let mut seen = BTreeMap::new();
    for input in inputs {
        let paths = [Some(&input.prediction), Some(&input.obs), input.exclusion.as_ref()];
        for p in paths.into_iter().flatten() {
            if !p.is_file() {
                return Err(Error::MissingInput(p.clone()));
            }
        }
        if let Some(prev) = seen.insert((input.box_id, input.cycle), input.group) {
            return Err(Error::invalid(format!(
                "box {} cycle {} listed twice (groups {prev} and {})",
                input.box_id, input.cycle, input.group
            )));
        }
    }
    Ok(())
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CycleSummary {
    pub cycle: u64,
    pub n: usize,
    pub mean_ppv: f64,
    pub mean_npv: f64,
    /// Sign of `mean_ppv − mean_npv`: 1, −1, or 0.
    pub dominance_sign: i8,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct GroupSummary {
    pub scope: String,
    pub n_runs: usize,
    pub cycles: Vec<CycleSummary>,
    pub mean_cb_triangular: f64,
    pub mean_cb_adjusted_normal: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct GroupSummaries {
    pub groups: Vec<GroupSummary>,
    pub notes: Vec<String>,
}

/// Per-cycle PPV/NPV means and dominance signs for groups A, B, C and all
/// runs. Groups without runs are omitted with a note.
pub fn group_summaries(records: &[RunRecord]) -> Result<GroupSummaries> {
    if records.is_empty() {
        return Err(Error::invalid("no run records to summarize"));
    }
    let mut groups = Vec::new();
    let mut notes = Vec::new();
    let scopes = Group::ALL.map(Scope::Group).into_iter().chain([Scope::All]);
    for scope in scopes {
        let rs = scope.select(records);
        if rs.is_empty() {
            notes.push(format!("group {scope} has no runs; omitted"));
            continue;
        }
        let owned: Vec<RunRecord> = rs.iter().map(|r| **r).collect();
        let timeline = cb_timeline(&owned, &[CbForm::Triangular, CbForm::AdjustedNormal])?;
        let mut by_cycle: BTreeMap<u64, (usize, f64, f64)> = BTreeMap::new();
        for r in &rs {
            let e = by_cycle.entry(r.cycle).or_default();
            e.0 += 1;
            e.1 += r.ppv;
            e.2 += r.npv;
        }
        let cycles = by_cycle
            .into_iter()
            .map(|(cycle, (n, p, q))| {
                let (mean_ppv, mean_npv) = (p / n as f64, q / n as f64);
                CycleSummary {
                    cycle,
                    n,
                    mean_ppv,
                    mean_npv,
                    dominance_sign: match mean_ppv.partial_cmp(&mean_npv) {
                        Some(std::cmp::Ordering::Greater) => 1,
                        Some(std::cmp::Ordering::Less) => -1,
                        _ => 0,
                    },
                }
            })
            .collect();
        let weighted = |k: usize| {
            timeline.iter().map(|t| t.means[k] * t.n as f64).sum::<f64>() / rs.len() as f64
        };
        groups.push(GroupSummary {
            scope: scope.to_string(),
            n_runs: rs.len(),
            cycles,
            mean_cb_triangular: weighted(0),
            mean_cb_adjusted_normal: weighted(1),
        });
    }
    Ok(GroupSummaries { groups, notes })
}

fn ratio_str(r: Ratio) -> String {
    r.to_string()
}

fn json_num(x: f64) -> Value {
    if x.is_finite() {
        json!(round6(x))
    } else {
        Value::Null
    }
}

fn json_opt(x: Option<f64>) -> Value {
    x.map_or(Value::Null, json_num)
}

fn csv_bytes(header: &[String], rows: &[Vec<String>]) -> Result<Vec<u8>> {
    let mut w = csv::WriterBuilder::new()
        .terminator(csv::Terminator::Any(b'\n'))
        .from_writer(Vec::new());
    w.write_record(header)?;
    for r in rows {
        w.write_record(r)?;
    }
    w.into_inner()
        .map_err(|e| Error::invalid(format!("flushing csv: {e}")))
}

fn header(cols: &[&str]) -> Vec<String> {
    cols.iter().map(|s| s.to_string()).collect()
}

struct OutputTree {
    dir: PathBuf,
    files: Vec<ManifestEntry>,
}

impl OutputTree {
    fn write(&mut self, name: &str, bytes: &[u8]) -> Result<()> {
        let path = self.dir.join(name);
        fs::write(&path, bytes).map_err(|e| Error::io(&path, e))?;
        self.files.push(ManifestEntry {
            path: name.to_string(),
            sha256: hex::encode(Sha256::digest(bytes)),
            bytes: bytes.len() as u64,
        });
        Ok(())
    }
}

/// Rows of `metrics.csv`.
pub fn metrics_rows(runs: &[RunMetrics]) -> (Vec<String>, Vec<Vec<String>>) {
    let head = header(&[
        "box_id", "group", "cycle", "tp", "fp", "fn", "tn", "sensitivity", "tn_rate",
        "prevalence_observed", "pcm", "convention", "prevalence", "lr_pos", "lr_neg", "dor",
        "ppv", "npv",
    ]);
    let rows = runs
        .iter()
        .map(|m| {
            let a = &m.assessment;
            let c = &a.confusion;
            vec![
                m.box_id.to_string(),
                m.group.to_string(),
                m.cycle.to_string(),
                c.tp.to_string(),
                c.fp.to_string(),
                c.fn_.to_string(),
                c.tn.to_string(),
                sig6_opt(a.rates.sensitivity),
                sig6_opt(a.rates.tn_rate),
                sig6_opt(a.rates.prevalence_observed),
                sig6_opt(a.rates.pcm),
                a.pv.convention.to_string(),
                sig6(a.pv.prevalence),
                ratio_str(a.lr.lr_pos),
                ratio_str(a.lr.lr_neg),
                ratio_str(a.dor),
                sig6_opt(a.pv.ppv),
                sig6_opt(a.pv.npv),
            ]
        })
        .collect();
    (head, rows)
}

/// Rows of a sampled-boxes CSV.
pub fn sample_rows(draws: &[(Group, Vec<SampleBox>)]) -> (Vec<String>, Vec<Vec<String>>) {
    let head = header(&[
        "pool", "quantile", "box_id", "row_start", "col_start", "pct_urban_change",
        "pct_exclusionary", "index",
    ]);
    let mut rows = Vec::new();
    for (g, boxes) in draws {
        for (q, b) in boxes.iter().enumerate() {
            rows.push(vec![
                g.to_string(),
                q.to_string(),
                b.box_id.to_string(),
                b.rows.start.to_string(),
                b.cols.start.to_string(),
                sig6(b.pct_urban_change),
                sig6(b.pct_exclusionary),
                sig6(b.index),
            ]);
        }
    }
    (head, rows)
}

/// `x, f_pos, f_neg` on the scan grid.
pub fn kde_rows(pos: &KdeModel, neg: &KdeModel, lo: f64, hi: f64) -> (Vec<String>, Vec<Vec<String>>) {
    let rows = crate::kde::linspace(lo, hi, SCAN_POINTS)
        .into_iter()
        .map(|x| vec![sig6(x), sig6(pos.evaluate(x)), sig6(neg.evaluate(x))])
        .collect();
    (header(&["x", "f_pos", "f_neg"]), rows)
}

pub fn cb_rows(records: &[RunRecord], forms: &[CbForm]) -> Result<(Vec<String>, Vec<Vec<String>>)> {
    let mut head = header(&["box_id", "group", "cycle", "ppv", "npv"]);
    head.extend(forms.iter().map(|f| f.to_string()));
    let rows = records
        .iter()
        .map(|r| {
            let mut row = vec![
                r.box_id.to_string(),
                r.group.to_string(),
                r.cycle.to_string(),
                sig6(r.ppv),
                sig6(r.npv),
            ];
            for &f in forms {
                row.push(sig6(r.cb(f)?));
            }
            Ok(row)
        })
        .collect::<Result<Vec<_>>>()?;
    Ok((head, rows))
}

/// Rows of `fits.csv` for several scopes.
pub fn fits_rows(analyses: &[ScopeAnalysis]) -> (Vec<String>, Vec<Vec<String>>) {
    let head = header(&["scope", "form", "alpha", "robustness_group", "mu", "sigma", "n", "degenerate"]);
    let mut rows = Vec::new();
    for a in analyses {
        for f in &a.fits {
            rows.push(vec![
                a.scope.clone(),
                f.form.kind().to_string(),
                f.form.alpha().map_or_else(String::new, sig6),
                f.robustness_group.clone(),
                sig6(f.fit.mu),
                sig6(f.fit.sigma),
                f.fit.n.to_string(),
                f.fit.degenerate.to_string(),
            ]);
        }
    }
    (head, rows)
}

/// Rows of `dominance.csv`: one per (scope, form), one score column per
/// ordered pair of robustness groups.
pub fn dominance_rows(analyses: &[ScopeAnalysis]) -> (Vec<String>, Vec<Vec<String>>) {
    let mut head = header(&["scope", "form", "alpha"]);
    if let Some(first) = analyses.first() {
        for s in &first.dominance.rows[0].scores {
            head.push(format!("{}-{}", s.m, s.k));
        }
    }
    head.extend(header(&["location", "scale", "robustness", "selected", "uniform_dominator"]));
    let mut rows = Vec::new();
    for a in analyses {
        let t = &a.dominance;
        for (i, r) in t.rows.iter().enumerate() {
            let mut row = vec![
                a.scope.clone(),
                r.form.kind().to_string(),
                r.form.alpha().map_or_else(String::new, sig6),
            ];
            row.extend(r.scores.iter().map(|s| sig6(s.score)));
            row.extend([
                sig6(r.location),
                sig6(r.scale),
                sig6(r.robustness),
                (i == t.selection.index()).to_string(),
                t.selection.is_uniform().to_string(),
            ]);
            rows.push(row);
        }
    }
    (head, rows)
}

pub fn ppcurve_rows(a: &ScopeAnalysis) -> (Vec<String>, Vec<Vec<String>>) {
    let rows = a
        .pp
        .points
        .iter()
        .map(|(p, f)| vec![sig6(*p), sig6(*f)])
        .collect();
    (header(&["p", "fitted_cdf"]), rows)
}

pub fn timeline_rows(records: &[RunRecord], forms: &[CbForm]) -> Result<(Vec<String>, Vec<Vec<String>>)> {
    let mut head = header(&["cycle", "n"]);
    head.extend(forms.iter().map(|f| f.to_string()));
    let rows = cb_timeline(records, forms)?
        .into_iter()
        .map(|t| {
            let mut row = vec![t.cycle.to_string(), t.n.to_string()];
            row.extend(t.means.iter().map(|&m| sig6(m)));
            row
        })
        .collect();
    Ok((head, rows))
}

fn group_summary_rows(s: &GroupSummaries) -> (Vec<String>, Vec<Vec<String>>) {
    let head = header(&["scope", "cycle", "n", "mean_ppv", "mean_npv", "dominance_sign"]);
    let mut rows = Vec::new();
    for g in &s.groups {
        for c in &g.cycles {
            rows.push(vec![
                g.scope.clone(),
                c.cycle.to_string(),
                c.n.to_string(),
                sig6(c.mean_ppv),
                sig6(c.mean_npv),
                c.dominance_sign.to_string(),
            ]);
        }
    }
    (head, rows)
}

/// Convergence analysis of one run table over every populated scope.
/// Scopes that cannot be analysed are reported in `warnings`.
pub fn converge_scopes(
    records: &[RunRecord],
    alpha_grid: &[f64],
    groups: &[RobustnessGroup],
    warnings: &mut Vec<String>,
) -> Vec<ScopeAnalysis> {
    Scope::ALL
        .iter()
        .filter(|s| !s.select(records).is_empty())
        .filter_map(|&s| match analyze_scope(records, s, alpha_grid, groups) {
            Ok(a) => Some(a),
            Err(e) => {
                warnings.push(format!("scope {s}: convergence skipped: {e}"));
                None
            }
        })
        .collect()
}

/// JSON summary of one scope.
pub fn scope_summary(a: &ScopeAnalysis) -> Value {
    json!({
        "n_runs": a.n_runs,
        "selected_alpha": json_num(a.selected_alpha()),
        "uniform_dominator": a.dominance.selection.is_uniform(),
        "prevalence_estimate": json_opt(a.pp.prevalence),
        "net_gain": json_num(a.pp.net_gain),
        "coarse_pp_curve": a.pp.coarse,
    })
}

fn kde_summary(hit: &Intersection) -> Value {
    json!({
        "prevalence": json_num(hit.prevalence),
        "density": json_num(hit.selected.height()),
        "crossings": hit.crossings.iter().map(|c| json_num(c.x)).collect::<Vec<_>>(),
    })
}

/// Reads a run table with columns `box_id, group, cycle, ppv, npv`.
pub fn read_runs(path: &Path) -> Result<Vec<RunRecord>> {
    #[derive(Deserialize)]
    struct Raw {
        box_id: usize,
        group: String,
        cycle: u64,
        ppv: f64,
        npv: f64,
    }
    let file = fs::File::open(path).map_err(|e| Error::io(path, e))?;
    let mut out = Vec::new();
    for row in csv::Reader::from_reader(file).deserialize::<Raw>() {
        let r = row?;
        for (name, v) in [("ppv", r.ppv), ("npv", r.npv)] {
            if !(0.0..=1.0).contains(&v) {
                return Err(Error::invalid(format!(
                    "box {} cycle {}: {name} {v} outside [0, 1]",
                    r.box_id, r.cycle
                )));
            }
        }
        out.push(RunRecord {
            box_id: r.box_id,
            group: r.group.parse()?,
            cycle: r.cycle,
            ppv: r.ppv,
            npv: r.npv,
        });
    }
    Ok(out)
}

/// Run table as CSV bytes, the format [`read_runs`] accepts.
pub fn runs_csv(records: &[RunRecord]) -> Result<Vec<u8>> {
    let rows: Vec<Vec<String>> = records
        .iter()
        .map(|r| {
            vec![
                r.box_id.to_string(),
                r.group.to_string(),
                r.cycle.to_string(),
                sig6(r.ppv),
                sig6(r.npv),
            ]
        })
        .collect();
    csv_bytes(&header(&["box_id", "group", "cycle", "ppv", "npv"]), &rows)
}

/// Runs a whole job and writes its artifacts under `cfg.output_dir`.
pub fn run_job(cfg: &JobConfig) -> Result<Manifest> {
    cfg.validate()?;
    if !cfg.inputs.is_file() {
        return Err(Error::MissingInput(cfg.inputs.clone()));
    }
    let inputs = load_inputs(&cfg.inputs)?;
    validate_inputs(&inputs)?;
    fs::create_dir_all(&cfg.output_dir).map_err(|e| Error::io(&cfg.output_dir, e))?;

    let results: Vec<Result<RunMetrics>> =
        inputs.par_iter().map(|i| assess_input(i, cfg)).collect();
    let mut metrics = Vec::new();
    let mut failures = Vec::new();
    for (input, r) in inputs.iter().zip(results) {
        match r {
            Ok(m) => metrics.push(m),
            Err(e) => failures.push(Failure {
                box_id: input.box_id,
                group: input.group,
                cycle: input.cycle,
                reason: e.to_string(),
            }),
        }
    }

    let mut warnings = Vec::new();
    if cfg.convention == Convention::PaperLiteral {
        warnings.push(
            "likelihood ratios and DOR follow the paper-literal convention and are not \
             comparable with standard-convention values"
                .to_string(),
        );
    }
    let mut records = Vec::new();
    for m in &metrics {
        match m.record() {
            Some(r) => records.push(r),
            None => warnings.push(format!(
                "box {} cycle {}: undefined PPV or NPV, left out of convergence",
                m.box_id, m.cycle
            )),
        }
    }

    let mut out = OutputTree {
        dir: cfg.output_dir.clone(),
        files: Vec::new(),
    };
    let (h, rows) = metrics_rows(&metrics);
    out.write("metrics.csv", &csv_bytes(&h, &rows)?)?;

    let grid = uniform_grid(cfg.sweep_points);
    let mut sweep = Vec::new();
    for m in &metrics {
        for pv in prevalence_sweep(&m.assessment.rates, &grid, cfg.convention)? {
            sweep.push(vec![
                m.box_id.to_string(),
                m.group.to_string(),
                m.cycle.to_string(),
                sig6(pv.prevalence),
                sig6_opt(pv.ppv),
                sig6_opt(pv.npv),
            ]);
        }
    }
    out.write(
        "bayes.csv",
        &csv_bytes(&header(&["box_id", "group", "cycle", "prevalence", "ppv", "npv"]), &sweep)?,
    )?;

    let mut kde = serde_json::Map::new();
    let [lo, hi] = cfg.kde_interval;
    for scope in Scope::ALL {
        let rs = scope.select(&records);
        if rs.is_empty() {
            continue;
        }
        let ppv: Vec<f64> = rs.iter().map(|r| r.ppv).collect();
        let npv: Vec<f64> = rs.iter().map(|r| r.npv).collect();
        let fitted = fit_kde(&ppv, cfg.bandwidth).and_then(|p| Ok((p, fit_kde(&npv, cfg.bandwidth)?)));
        match fitted {
            Ok((pos, neg)) => {
                let (h, rows) = kde_rows(&pos, &neg, lo, hi);
                out.write(&format!("kde_{scope}.csv"), &csv_bytes(&h, &rows)?)?;
                match density_intersection(&pos, &neg, (lo, hi)) {
                    Ok(hit) => {
                        kde.insert(scope.to_string(), kde_summary(&hit));
                    }
                    Err(e) => warnings.push(format!("scope {scope}: {e}")),
                }
            }
            Err(e) => warnings.push(format!("scope {scope}: KDE skipped: {e}")),
        }
    }

    let mut forms = vec![CbForm::Triangular, CbForm::AdjustedNormal];
    forms.extend(crate::convergence::alpha_forms(&cfg.alpha_grid)?);
    let (h, rows) = cb_rows(&records, &forms)?;
    out.write("cb_values.csv", &csv_bytes(&h, &rows)?)?;

    let analyses = converge_scopes(&records, &cfg.alpha_grid, &cfg.robustness_groups, &mut warnings);
    let (h, rows) = fits_rows(&analyses);
    out.write("fits.csv", &csv_bytes(&h, &rows)?)?;
    let (h, rows) = dominance_rows(&analyses);
    out.write("dominance.csv", &csv_bytes(&h, &rows)?)?;
    for a in &analyses {
        let (h, rows) = ppcurve_rows(a);
        out.write(&format!("ppcurve_{}.csv", a.scope), &csv_bytes(&h, &rows)?)?;
    }

    let mut notes = Vec::new();
    if !records.is_empty() {
        let s = group_summaries(&records)?;
        let (h, rows) = group_summary_rows(&s);
        out.write("group_summary.csv", &csv_bytes(&h, &rows)?)?;
        notes = s.notes;
        let (h, rows) = timeline_rows(&records, &forms)?;
        out.write("timeline.csv", &csv_bytes(&h, &rows)?)?;
    }

    let scopes: serde_json::Map<String, Value> = analyses
        .iter()
        .map(|a| (a.scope.clone(), scope_summary(a)))
        .collect();
    let summary = json!({
        "convention": cfg.convention.to_string(),
        "seed": cfg.seed,
        "n_inputs": inputs.len(),
        "n_assessed": metrics.len(),
        "n_failed": failures.len(),
        "alpha_grid": cfg.alpha_grid.iter().map(|&a| json_num(a)).collect::<Vec<_>>(),
        "bandwidth": cfg.bandwidth.map_or(Value::Null, json_num),
        "scopes": scopes,
        "kde": kde,
        "notes": notes,
        "warnings": warnings,
    });
    out.write("summary.json", &pretty(&summary)?)?;

    let manifest = Manifest {
        n_inputs: inputs.len(),
        n_assessed: metrics.len(),
        files: out.files.clone(),
        failures,
    };
    let path = cfg.output_dir.join("manifest.json");
    fs::write(&path, pretty(&manifest)?).map_err(|e| Error::io(&path, e))?;
    Ok(manifest)
}

fn pretty<T: Serialize>(value: &T) -> Result<Vec<u8>> {
    let mut bytes = serde_json::to_vec_pretty(value)?;
    bytes.push(b'\n');
    Ok(bytes)
}

/// Serializes CSV rows (header first) to bytes with `\n` line endings.
pub fn to_csv(head: &[String], rows: &[Vec<String>]) -> Result<Vec<u8>> {
    csv_bytes(head, rows)
}
