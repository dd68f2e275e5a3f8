//! PSNR, acceptance/excellence ratios, the Calinski–Harabasz index, and
//! benchmark report assembly.
//!
//! Scores are higher-is-better. A model *meets* a baseline on a task when its
//! score is greater than or equal to the baseline's score.

use std::fmt::Write as _;
use std::fs;
use std::io::Write as _;
use std::path::{Path, PathBuf};

use indexmap::IndexMap;
use rayon::prelude::*;

use crate::datasetgen::Manifest;
use crate::error::{Error, Result};
use crate::imaging::{load_image, ImageF32};

/// PSNR in dB over every RGB sample with a peak of 1. Identical images give
/// `f64::INFINITY`.
pub fn psnr(a: &ImageF32, b: &ImageF32) -> Result<f64> {
    if a.dims() != b.dims() {
        return Err(Error::DimensionMismatch {
            expected: a.dims(),
            actual: b.dims(),
        });
    }
    let sse: f64 = a
        .data()
        .iter()
        .zip(b.data())
        .map(|(&x, &y)| {
            let d = x as f64 - y as f64;
            d * d
        })
        .sum();
    let mse = sse / a.data().len() as f64;
    Ok(if mse == 0.0 {
        f64::INFINITY
    } else {
        -10.0 * mse.log10()
    })
}

/// Per-task scores in insertion order.
#[derive(Clone, Debug, PartialEq)]
pub struct ScoreTable {
    pub label: String,
    rows: IndexMap<String, f64>,
}

impl ScoreTable {
    pub fn new(label: impl Into<String>) -> Self {
        ScoreTable {
            label: label.into(),
            rows: IndexMap::new(),
        }
    }

    /// Builds a table, rejecting duplicate task ids and NaN scores.
    pub fn from_pairs<I, S>(label: impl Into<String>, pairs: I) -> Result<Self>
    where
        I: IntoIterator<Item = (S, f64)>,
        S: Into<String>,
    {
        let mut t = ScoreTable::new(label);
        for (id, score) in pairs {
            t.insert(id, score)?;
        }
        Ok(t)
    }

    pub fn insert(&mut self, task_id: impl Into<String>, score: f64) -> Result<()> {
        let task_id = task_id.into();
        if score.is_nan() || score == f64::NEG_INFINITY {
            return Err(Error::InvalidParam(format!("score for task '{task_id}' is not a valid PSNR")));
        }
        if self.rows.contains_key(&task_id) {
            return Err(Error::parse(format!("duplicate task_id '{task_id}'")));
        }
        self.rows.insert(task_id, score);
        Ok(())
    }

    pub fn get(&self, task_id: &str) -> Option<f64> {
        self.rows.get(task_id).copied()
    }

    pub fn len(&self) -> usize {
        self.rows.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rows.is_empty()
    }

    pub fn iter(&self) -> impl Iterator<Item = (&str, f64)> {
        self.rows.iter().map(|(k, &v)| (k.as_str(), v))
    }

    pub fn task_ids(&self) -> impl Iterator<Item = &str> {
        self.rows.keys().map(String::as_str)
    }

    /// Mean over finite scores (`NaN` when there are none).
    pub fn mean_finite(&self) -> f64 {
        let finite: Vec<f64> = self.rows.values().copied().filter(|v| v.is_finite()).collect();
        if finite.is_empty() {
            f64::NAN
        } else {
            finite.iter().sum::<f64>() / finite.len() as f64
        }
    }
}

fn check_same_tasks(model: &ScoreTable, baseline: &ScoreTable) -> Result<()> {
    let missing: Vec<&str> = baseline.task_ids().filter(|id| model.get(id).is_none()).collect();
    let extra: Vec<&str> = model.task_ids().filter(|id| baseline.get(id).is_none()).collect();
    if missing.is_empty() && extra.is_empty() {
        return Ok(());
    }
    let mut msg = format!("'{}' vs '{}':", model.label, baseline.label);
    if !missing.is_empty() {
        let _ = write!(msg, " missing from model [{}]", missing.join(", "));
    }
    if !extra.is_empty() {
        let _ = write!(msg, " not in baseline [{}]", extra.join(", "));
    }
    Err(Error::TaskSetMismatch(msg))
}

fn meets_ratio(model: &ScoreTable, baseline: &ScoreTable) -> Result<f64> {
    check_same_tasks(model, baseline)?;
    if baseline.is_empty() {
        return Err(Error::InvalidParam("score tables are empty".into()));
    }
    let met = baseline
        .iter()
        .filter(|&(id, b)| model.get(id).is_some_and(|m| m >= b))
        .count();
    Ok(met as f64 / baseline.len() as f64)
}

/// Fraction of tasks where the model reaches the acceptance line.
pub fn acceptance_ratio(model: &ScoreTable, acceptance: &ScoreTable) -> Result<f64> {
    meets_ratio(model, acceptance)
}

/// Fraction of tasks where the model reaches the excellence line.
pub fn excellence_ratio(model: &ScoreTable, excellence: &ScoreTable) -> Result<f64> {
    meets_ratio(model, excellence)
}

#[derive(Clone, Debug, PartialEq)]
pub struct TaskResult {
    pub task_id: String,
    pub model: f64,
    pub acceptance: f64,
    pub excellence: f64,
    pub meets_acceptance: bool,
    pub meets_excellence: bool,
}

#[derive(Clone, Debug, PartialEq)]
pub struct MetricReport {
    pub model_label: String,
    pub per_task: Vec<TaskResult>,
    pub ar: f64,
    pub er: f64,
    /// Mean over finite per-task scores.
    pub avg_psnr: f64,
    pub task_count: usize,
    /// Tasks whose model score is `+inf` (excluded from `avg_psnr`).
    pub infinite_count: usize,
}

pub fn build_report(model: &ScoreTable, acceptance: &ScoreTable, excellence: &ScoreTable) -> Result<MetricReport> {
    let ar = acceptance_ratio(model, acceptance)?;
    let er = excellence_ratio(model, excellence)?;
    let per_task: Vec<TaskResult> = acceptance
        .iter()
        .map(|(id, acc)| {
            let m = model.get(id).expect("task sets checked");
            let exc = excellence.get(id).expect("task sets checked");
            TaskResult {
                task_id: id.to_string(),
                model: m,
                acceptance: acc,
                excellence: exc,
                meets_acceptance: m >= acc,
                meets_excellence: m >= exc,
            }
        })
        .collect();
    Ok(MetricReport {
        model_label: model.label.clone(),
        task_count: per_task.len(),
        infinite_count: model.iter().filter(|(_, v)| v.is_infinite()).count(),
        per_task,
        ar,
        er,
        avg_psnr: model.mean_finite(),
    })
}

/// Calinski–Harabasz index: between-cluster over within-cluster dispersion,
/// each divided by its degrees of freedom. Zero within-dispersion gives
/// `f64::INFINITY`.
pub fn calinski_harabasz(features: &[Vec<f64>], labels: &[usize]) -> Result<f64> {
    if features.len() != labels.len() {
        return Err(Error::LengthMismatch(features.len(), labels.len()));
    }
    let n = features.len();
    let k = labels.iter().copied().max().map_or(0, |m| m + 1);
    if k < 2 {
        return Err(Error::InvalidParam("need at least two clusters".into()));
    }
    if n <= k {
        return Err(Error::InvalidParam(format!("need more points ({n}) than clusters ({k})")));
    }
    let dim = features[0].len();
    if features.iter().any(|f| f.len() != dim) {
        return Err(Error::InvalidParam("feature vectors differ in length".into()));
    }
    let mut counts = vec![0usize; k];
    let mut centroids = vec![vec![0.0; dim]; k];
    let mut mean = vec![0.0; dim];
    for (f, &l) in features.iter().zip(labels) {
        counts[l] += 1;
        for d in 0..dim {
            centroids[l][d] += f[d];
            mean[d] += f[d];
        }
    }
    if let Some(c) = counts.iter().position(|&c| c == 0) {
        return Err(Error::InvalidParam(format!("cluster {c} is empty")));
    }
    for (c, centroid) in centroids.iter_mut().enumerate() {
        centroid.iter_mut().for_each(|v| *v /= counts[c] as f64);
    }
    mean.iter_mut().for_each(|v| *v /= n as f64);
    let sq = |a: &[f64], b: &[f64]| a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum::<f64>();
    let between: f64 = centroids.iter().zip(&counts).map(|(c, &nc)| nc as f64 * sq(c, &mean)).sum();
    let within: f64 = features.iter().zip(labels).map(|(f, &l)| sq(f, &centroids[l])).sum();
    if within == 0.0 {
        return Ok(f64::INFINITY);
    }
    Ok((between / (k - 1) as f64) / (within / (n - k) as f64))
}

fn parse_score(text: &str) -> Option<f64> {
    match text.trim() {
        "inf" | "+inf" | "Infinity" => Some(f64::INFINITY),
        t => t.parse::<f64>().ok().filter(|v| v.is_finite()),
    }
}

fn csv_error(e: &csv::Error) -> Error {
    let line = e.position().map_or(0, |p| p.line() as usize);
    Error::Parse {
        line,
        column: 0,
        message: e.to_string(),
    }
}

fn read_csv(path: &Path) -> Result<(csv::StringRecord, Vec<csv::StringRecord>)> {
    let text = fs::read_to_string(path).map_err(|e| match e.kind() {
        std::io::ErrorKind::NotFound => Error::FileNotFound(path.to_path_buf()),
        _ => Error::Io(e),
    })?;
    let mut reader = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(text.as_bytes());
    let header = reader.headers().map_err(|e| csv_error(&e))?.clone();
    let records = reader
        .records()
        .collect::<std::result::Result<Vec<_>, _>>()
        .map_err(|e| csv_error(&e))?;
    Ok((header, records))
}

fn table_from_records(
    label: String,
    records: &[csv::StringRecord],
    arity: usize,
    column: usize,
) -> Result<ScoreTable> {
    let mut table = ScoreTable::new(label);
    for rec in records {
        let line = rec.position().map_or(0, |p| p.line() as usize);
        let err = |column: usize, message: String| Error::Parse { line, column, message };
        if rec.len() != arity {
            return Err(err(0, format!("expected {arity} fields, found {}", rec.len())));
        }
        let id = rec[0].to_string();
        let score = parse_score(&rec[column])
            .ok_or_else(|| err(column + 1, format!("score '{}' for task '{id}' is not a number", &rec[column])))?;
        if table.get(&id).is_some() {
            return Err(err(1, format!("duplicate task_id '{id}'")));
        }
        table.insert(id, score)?;
    }
    Ok(table)
}

/// Loads a two-column `task_id,score` CSV.
pub fn load_score_table(path: impl AsRef<Path>) -> Result<ScoreTable> {
    let path = path.as_ref();
    let (header, records) = read_csv(path)?;
    if header.len() != 2 || &header[0] != "task_id" {
        return Err(Error::Parse {
            line: 1,
            column: 0,
            message: format!("expected header 'task_id,score', found '{}'", header.iter().collect::<Vec<_>>().join(",")),
        });
    }
    let label = path.file_stem().map_or_else(|| "scores".into(), |s| s.to_string_lossy().into_owned());
    table_from_records(label, &records, 2, 1)
}

/// Loads one named column of a wide CSV whose first column is `task_id`.
pub fn load_score_column(path: impl AsRef<Path>, column: &str) -> Result<ScoreTable> {
    let (header, records) = read_csv(path.as_ref())?;
    if header.get(0) != Some("task_id") {
        return Err(Error::Parse {
            line: 1,
            column: 1,
            message: "first column must be 'task_id'".into(),
        });
    }
    let idx = header.iter().position(|h| h == column).filter(|&i| i > 0).ok_or_else(|| Error::Parse {
        line: 1,
        column: 0,
        message: format!("no column named '{column}'"),
    })?;
    table_from_records(column.to_string(), &records, header.len(), idx)
}

/// Loads `path` or, with the `path#column` form, one column of a wide CSV.
pub fn load_scores(spec: &str) -> Result<ScoreTable> {
    match spec.rsplit_once('#') {
        Some((path, column)) if !column.is_empty() => load_score_column(path, column),
        _ => load_score_table(spec),
    }
}

fn fmt_score(v: f64) -> String {
    if v.is_infinite() {
        "inf".into()
    } else {
        format!("{v:.4}")
    }
}

fn write_atomic(path: &Path, bytes: &[u8]) -> Result<()> {
    let mut tmp = path.as_os_str().to_owned();
    tmp.push(".tmp");
    let tmp = PathBuf::from(tmp);
    {
        let mut f = fs::File::create(&tmp)?;
        f.write_all(bytes)?;
        f.sync_all()?;
    }
    fs::rename(&tmp, path).inspect_err(|_| {
        let _ = fs::remove_file(&tmp);
    })?;
    Ok(())
}

/// Human-readable summary used for the `.txt` companion of a report.
pub fn report_summary(report: &MetricReport) -> String {
    let mut s = String::new();
    let _ = writeln!(s, "model {}", report.model_label);
    let _ = writeln!(s, "AR {:.4}", report.ar);
    let _ = writeln!(s, "ER {:.4}", report.er);
    let _ = writeln!(s, "avg_psnr {}", fmt_score(report.avg_psnr));
    let _ = writeln!(s, "tasks {}", report.task_count);
    if report.infinite_count > 0 {
        let _ = writeln!(s, "infinite_scores {} (excluded from avg_psnr)", report.infinite_count);
    }
    let _ = writeln!(s, "# PSNR over RGB samples, peak 1.0, full image; meets = score >= line");
    for t in &report.per_task {
        let _ = writeln!(
            s,
            "{:>6}  {:>9}  AC {:>8} {}  EX {:>8} {}",
            t.task_id,
            fmt_score(t.model),
            fmt_score(t.acceptance),
            if t.meets_acceptance { "pass" } else { "fail" },
            fmt_score(t.excellence),
            if t.meets_excellence { "pass" } else { "fail" },
        );
    }
    s
}

/// Writes the per-task CSV at `path` and a text summary next to it
/// (`path` with a `.txt` extension). Each file is written to a temporary
/// name and renamed into place.
pub fn write_report(report: &MetricReport, path: impl AsRef<Path>) -> Result<PathBuf> {
    let path = path.as_ref();
    let mut w = csv::Writer::from_writer(Vec::new());
    let csv_io = |e: csv::Error| Error::Io(std::io::Error::other(e));
    w.write_record(["task_id", "model", "acceptance", "excellence", "meets_acceptance", "meets_excellence"])
        .map_err(csv_io)?;
    for t in &report.per_task {
        w.write_record([
            t.task_id.clone(),
            fmt_score(t.model),
            fmt_score(t.acceptance),
            fmt_score(t.excellence),
            t.meets_acceptance.to_string(),
            t.meets_excellence.to_string(),
        ])
        .map_err(csv_io)?;
    }
    let bytes = w.into_inner().map_err(|e| Error::Io(std::io::Error::other(e.to_string())))?;
    let summary_path = path.with_extension("txt");
    write_atomic(path, &bytes)?;
    write_atomic(&summary_path, report_summary(report).as_bytes())?;
    Ok(summary_path)
}

/// Scores restored outputs laid out as `<outputs_dir>/<task_id>/<gt_id>.png`
/// against the ground-truth images listed in the manifest. Each task's score
/// is the mean PSNR over its images (`+inf` only if every image is exact).
pub fn evaluate_model(
    outputs_dir: impl AsRef<Path>,
    gt_dir: impl AsRef<Path>,
    manifest: &Manifest,
    acceptance: &ScoreTable,
    excellence: &ScoreTable,
) -> Result<MetricReport> {
    let outputs_dir = outputs_dir.as_ref();
    let gt_dir = gt_dir.as_ref();
    let pairs: Vec<(&str, &str, PathBuf, PathBuf)> = manifest
        .entries
        .iter()
        .map(|e| {
            let gt = manifest
                .gt_images
                .iter()
                .find(|g| g.id == e.gt_id)
                .ok_or_else(|| Error::InvalidParam(format!("manifest entry references unknown image '{}'", e.gt_id)))?;
            Ok((
                e.task_id.as_str(),
                e.gt_id.as_str(),
                outputs_dir.join(&e.task_id).join(format!("{}.png", e.gt_id)),
                gt_dir.join(&gt.path),
            ))
        })
        .collect::<Result<_>>()?;

    let missing: Vec<PathBuf> = pairs.iter().filter(|p| !p.2.is_file()).map(|p| p.2.clone()).collect();
    if !missing.is_empty() {
        return Err(Error::MissingOutput(missing));
    }

    let scores: Vec<f64> = pairs
        .par_iter()
        .map(|(_, _, out, gt)| psnr(&load_image(gt)?, &load_image(out)?))
        .collect::<Result<_>>()?;

    let mut per_task: IndexMap<&str, Vec<f64>> = IndexMap::new();
    for task in &manifest.tasks {
        per_task.insert(task.task_id.as_str(), Vec::new());
    }
    for ((task, ..), s) in pairs.iter().zip(scores) {
        per_task.entry(task).or_default().push(s);
    }
    let mut model = ScoreTable::new("model");
    for (task, s) in per_task {
        let finite: Vec<f64> = s.iter().copied().filter(|v| v.is_finite()).collect();
        let score = if finite.is_empty() {
            f64::INFINITY
        } else {
            finite.iter().sum::<f64>() / finite.len() as f64
        };
        model.insert(task, score)?;
    }
    build_report(&model, acceptance, excellence)
}
