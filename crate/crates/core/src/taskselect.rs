//! Representative-task selection.
//!
//! Candidate recipes are rendered on a set of ground-truth crops, compared by
//! colour-histogram intersection, and grouped by normalized spectral
//! clustering; the medoid of each cluster represents it in the task bank.

use std::path::{Path, PathBuf};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::datasetgen::write_atomic;
use crate::degradations::DegradationKind;
use crate::error::{Error, Result};
use crate::imaging::{ImageF32, CHANNELS};
use crate::parallel::with_threads;
use crate::pipeline::{apply_recipe_lane, sample_recipe, to_json_pretty, DepthSource, TaskMode, TaskSpec};
use crate::rng::{derive_rng, RngStream};

pub const DEFAULT_BINS: usize = 32;
pub const DEFAULT_CROP: usize = 256;
pub const DEFAULT_CANDIDATES: usize = 200;
pub const DEFAULT_PER_ORDER: usize = 10;
pub const KMEANS_RESTARTS: usize = 10;
pub const KMEANS_MAX_ITERS: usize = 300;
const JACOBI_TOL: f64 = 1e-10;
const JACOBI_MAX_SWEEPS: usize = 100;
const SYMMETRY_TOL: f64 = 1e-9;
const SELECT_LANE: u64 = 0x7365_6c65_6374; // "select"

/// Per-channel histograms over `[0, 1]` with `bins` equal buckets (the last
/// one closed on the right), each channel normalized to 1/3 and concatenated.
pub fn histogram_features(img: &ImageF32, bins: usize) -> Result<Vec<f64>> {
    if bins < 2 {
        return Err(Error::InvalidParam(format!("histogram needs at least 2 bins, got {bins}")));
    }
    let mut counts = vec![0u64; CHANNELS * bins];
    for px in img.data().chunks_exact(CHANNELS) {
        for (c, &v) in px.iter().enumerate() {
            let b = ((v as f64 * bins as f64) as usize).min(bins - 1);
            counts[c * bins + b] += 1;
        }
    }
    let per_channel = (img.width() * img.height()) as f64 * CHANNELS as f64;
    Ok(counts.into_iter().map(|n| n as f64 / per_channel).collect())
}

/// Mean histogram intersection over paired renders.
pub fn task_similarity(a: &[Vec<f64>], b: &[Vec<f64>]) -> Result<f64> {
    if a.len() != b.len() {
        return Err(Error::LengthMismatch(a.len(), b.len()));
    }
    if a.is_empty() {
        return Err(Error::InvalidParam("no renders to compare".into()));
    }
    let mut total = 0.0;
    for (u, v) in a.iter().zip(b) {
        if u.len() != v.len() {
            return Err(Error::LengthMismatch(u.len(), v.len()));
        }
        total += u.iter().zip(v).map(|(x, y)| x.min(*y)).sum::<f64>();
    }
    Ok((total / a.len() as f64).clamp(0.0, 1.0))
}

/// Square row-major matrix.
#[derive(Clone, Debug, PartialEq)]
pub struct DenseMatrix {
    n: usize,
    data: Vec<f64>,
}

impl DenseMatrix {
    pub fn zeros(n: usize) -> Self {
        DenseMatrix { n, data: vec![0.0; n * n] }
    }

    pub fn identity(n: usize) -> Self {
        Self::from_fn(n, |i, j| if i == j { 1.0 } else { 0.0 })
    }

    pub fn from_fn(n: usize, mut f: impl FnMut(usize, usize) -> f64) -> Self {
        let mut data = Vec::with_capacity(n * n);
        for i in 0..n {
            for j in 0..n {
                data.push(f(i, j));
            }
        }
        DenseMatrix { n, data }
    }

    pub fn from_rows(rows: &[Vec<f64>]) -> Result<Self> {
        let n = rows.len();
        if let Some(r) = rows.iter().find(|r| r.len() != n) {
            return Err(Error::LengthMismatch(n, r.len()));
        }
        Ok(DenseMatrix { n, data: rows.concat() })
    }

    pub fn n(&self) -> usize {
        self.n
    }

    #[inline]
    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.data[i * self.n + j]
    }

    #[inline]
    pub fn set(&mut self, i: usize, j: usize, v: f64) {
        self.data[i * self.n + j] = v;
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.data[i * self.n..(i + 1) * self.n]
    }

    pub fn transpose(&self) -> Self {
        Self::from_fn(self.n, |i, j| self.get(j, i))
    }

    pub fn matmul(&self, other: &DenseMatrix) -> Self {
        assert_eq!(self.n, other.n, "matrix sizes differ");
        let n = self.n;
        let mut out = Self::zeros(n);
        for i in 0..n {
            for k in 0..n {
                let a = self.get(i, k);
                if a == 0.0 {
                    continue;
                }
                for j in 0..n {
                    out.data[i * n + j] += a * other.get(k, j);
                }
            }
        }
        out
    }

    pub fn frobenius(&self) -> f64 {
        self.data.iter().map(|v| v * v).sum::<f64>().sqrt()
    }

    /// Simultaneous row/column permutation: `out[i][j] = self[p[i]][p[j]]`.
    pub fn permuted(&self, p: &[usize]) -> Self {
        Self::from_fn(self.n, |i, j| self.get(p[i], p[j]))
    }

    fn check_symmetric(&self, tol: f64) -> Result<()> {
        for i in 0..self.n {
            for j in i + 1..self.n {
                let diff = (self.get(i, j) - self.get(j, i)).abs();
                if diff > tol || diff.is_nan() {
                    return Err(Error::NotSymmetric { i, j, diff });
                }
            }
        }
        Ok(())
    }
}

/// Eigen-decomposition of a symmetric matrix by cyclic Jacobi rotations.
/// Returns eigenvalues ascending and the matching orthonormal eigenvectors
/// as the columns of the second matrix.
pub fn jacobi_eigh(m: &DenseMatrix) -> Result<(Vec<f64>, DenseMatrix)> {
    let n = m.n;
    if m.data.iter().any(|v| !v.is_finite()) {
        return Err(Error::InvalidParam("matrix has non-finite entries".into()));
    }
    m.check_symmetric(SYMMETRY_TOL)?;
    let mut a = DenseMatrix::from_fn(n, |i, j| 0.5 * (m.get(i, j) + m.get(j, i)));
    let mut v = DenseMatrix::identity(n);
    let stop = JACOBI_TOL * a.frobenius().max(1.0);
    let off_norm = |a: &DenseMatrix| {
        let mut s = 0.0;
        for i in 0..n {
            for j in 0..n {
                if i != j {
                    s += a.get(i, j) * a.get(i, j);
                }
            }
        }
        s.sqrt()
    };

    let mut converged = false;
    for _ in 0..JACOBI_MAX_SWEEPS {
        if off_norm(&a) < stop {
            converged = true;
            break;
        }
        for p in 0..n {
            for q in p + 1..n {
                let apq = a.get(p, q);
                if apq == 0.0 {
                    continue;
                }
                let theta = (a.get(q, q) - a.get(p, p)) / (2.0 * apq);
                let t = if theta == 0.0 {
                    1.0
                } else {
                    theta.signum() / (theta.abs() + (theta * theta + 1.0).sqrt())
                };
                let c = 1.0 / (t * t + 1.0).sqrt();
                let s = t * c;
                for k in 0..n {
                    let (akp, akq) = (a.get(k, p), a.get(k, q));
                    a.set(k, p, c * akp - s * akq);
                    a.set(k, q, s * akp + c * akq);
                }
                for k in 0..n {
                    let (apk, aqk) = (a.get(p, k), a.get(q, k));
                    a.set(p, k, c * apk - s * aqk);
                    a.set(q, k, s * apk + c * aqk);
                }
                for k in 0..n {
                    let (vkp, vkq) = (v.get(k, p), v.get(k, q));
                    v.set(k, p, c * vkp - s * vkq);
                    v.set(k, q, s * vkp + c * vkq);
                }
            }
        }
    }
    if !converged && off_norm(&a) >= stop {
        return Err(Error::DegenerateMatrix(format!("Jacobi iteration did not converge in {JACOBI_MAX_SWEEPS} sweeps")));
    }

    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&i, &j| a.get(i, i).total_cmp(&a.get(j, j)));
    let values = order.iter().map(|&i| a.get(i, i)).collect();
    let vectors = DenseMatrix::from_fn(n, |r, c| v.get(r, order[c]));
    Ok((values, vectors))
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct ClusterAssignment {
    pub labels: Vec<usize>,
    pub k: usize,
    /// `centers[c]` is the medoid of cluster `c`.
    pub centers: Vec<usize>,
}

impl ClusterAssignment {
    pub fn cluster_sizes(&self) -> Vec<usize> {
        let mut sizes = vec![0; self.k];
        for &l in &self.labels {
            sizes[l] += 1;
        }
        sizes
    }
}

fn sq_dist(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum()
}

fn nearest(point: &[f64], centroids: &[Vec<f64>]) -> (usize, f64) {
    // strict < keeps the lowest index on ties
    let mut best = (0, f64::INFINITY);
    for (c, mu) in centroids.iter().enumerate() {
        let d = sq_dist(point, mu);
        if d < best.1 {
            best = (c, d);
        }
    }
    best
}

fn kmeans_pp_init(points: &[Vec<f64>], k: usize, rng: &mut RngStream) -> Vec<Vec<f64>> {
    let n = points.len();
    let mut chosen = vec![rng.below(n as u64) as usize];
    let mut d2: Vec<f64> = points.iter().map(|p| sq_dist(p, &points[chosen[0]])).collect();
    while chosen.len() < k {
        let total: f64 = d2.iter().sum();
        let next = if total > 0.0 {
            let target = rng.next_f64() * total;
            let mut acc = 0.0;
            let mut pick = None;
            for (i, &w) in d2.iter().enumerate() {
                acc += w;
                if w > 0.0 && acc > target {
                    pick = Some(i);
                    break;
                }
            }
            // rounding can leave the target just past the last positive weight
            pick.unwrap_or_else(|| d2.iter().rposition(|&w| w > 0.0).expect("total > 0"))
        } else {
            (0..n).find(|i| !chosen.contains(i)).expect("k <= n")
        };
        chosen.push(next);
        for (i, p) in points.iter().enumerate() {
            d2[i] = d2[i].min(sq_dist(p, &points[next]));
        }
    }
    chosen.into_iter().map(|i| points[i].clone()).collect()
}

fn centroids_of(points: &[Vec<f64>], labels: &[usize], k: usize, old: &[Vec<f64>]) -> Vec<Vec<f64>> {
    let dim = points[0].len();
    let mut sums = vec![vec![0.0; dim]; k];
    let mut counts = vec![0usize; k];
    for (p, &l) in points.iter().zip(labels) {
        counts[l] += 1;
        for (s, v) in sums[l].iter_mut().zip(p) {
            *s += v;
        }
    }
    sums.into_iter()
        .zip(counts)
        .enumerate()
        .map(|(c, (s, n))| if n == 0 { old[c].clone() } else { s.into_iter().map(|v| v / n as f64).collect() })
        .collect()
}

/// Lloyd iterations from one seeding; empty clusters are refilled with the
/// point farthest from its centroid (taken from a cluster of size ≥ 2).
fn kmeans_once(points: &[Vec<f64>], k: usize, rng: &mut RngStream) -> (Vec<usize>, f64) {
    let mut centroids = kmeans_pp_init(points, k, rng);
    let mut labels: Vec<usize> = points.iter().map(|p| nearest(p, &centroids).0).collect();
    for _ in 0..KMEANS_MAX_ITERS {
        centroids = centroids_of(points, &labels, k, &centroids);
        let next: Vec<usize> = points.iter().map(|p| nearest(p, &centroids).0).collect();
        if next == labels {
            break;
        }
        labels = next;
    }
    loop {
        let mut sizes = vec![0usize; k];
        for &l in &labels {
            sizes[l] += 1;
        }
        let Some(empty) = sizes.iter().position(|&s| s == 0) else { break };
        let mut donor = None;
        let mut far = -1.0;
        for (i, p) in points.iter().enumerate() {
            if sizes[labels[i]] < 2 {
                continue;
            }
            let d = sq_dist(p, &centroids[labels[i]]);
            if d > far {
                far = d;
                donor = Some(i);
            }
        }
        let i = donor.expect("k <= n guarantees a cluster with two members");
        labels[i] = empty;
        centroids = centroids_of(points, &labels, k, &centroids);
    }
    let inertia = points.iter().zip(&labels).map(|(p, &l)| sq_dist(p, &centroids[l])).sum();
    (labels, inertia)
}

/// k-means++ with [`KMEANS_RESTARTS`] restarts; the lowest inertia wins
/// (earliest restart on ties).
pub fn kmeans(points: &[Vec<f64>], k: usize, seed: u64) -> Result<Vec<usize>> {
    if k == 0 || k > points.len() {
        return Err(Error::InvalidParam(format!("k = {k} must be in [1, {}]", points.len())));
    }
    let mut rng = RngStream::from_seed(seed);
    let mut best: Option<(Vec<usize>, f64)> = None;
    for _ in 0..KMEANS_RESTARTS {
        let (labels, inertia) = kmeans_once(points, k, &mut rng);
        if best.as_ref().is_none_or(|b| inertia < b.1) {
            best = Some((labels, inertia));
        }
    }
    Ok(best.expect("at least one restart").0)
}

/// Relabels clusters by first appearance so equal partitions compare equal.
fn canonical_labels(labels: &[usize], k: usize) -> Vec<usize> {
    let mut map = vec![usize::MAX; k];
    let mut next = 0;
    labels
        .iter()
        .map(|&l| {
            if map[l] == usize::MAX {
                map[l] = next;
                next += 1;
            }
            map[l]
        })
        .collect()
}

/// Normalized spectral clustering of similarity matrix `s` into `k` groups.
pub fn spectral_cluster(s: &DenseMatrix, k: usize, seed: u64) -> Result<ClusterAssignment> {
    let n = s.n();
    if k < 2 || k > n {
        return Err(Error::InvalidParam(format!("cluster count {k} must be in [2, {n}]")));
    }
    if s.data.iter().any(|v| !v.is_finite() || *v < 0.0) {
        return Err(Error::InvalidParam("similarities must be finite and non-negative".into()));
    }
    s.check_symmetric(SYMMETRY_TOL)?;
    let degree: Vec<f64> = (0..n).map(|i| s.row(i).iter().sum()).collect();
    if let Some(i) = degree.iter().position(|&d| d <= 0.0) {
        return Err(Error::DegenerateMatrix(format!("row {i} has zero degree")));
    }
    let inv_sqrt: Vec<f64> = degree.iter().map(|d| 1.0 / d.sqrt()).collect();
    let lap = DenseMatrix::from_fn(n, |i, j| {
        let a = 0.5 * (s.get(i, j) + s.get(j, i)) * inv_sqrt[i] * inv_sqrt[j];
        if i == j { 1.0 - a } else { -a }
    });
    let (_, vectors) = jacobi_eigh(&lap)?;
    let embedding: Vec<Vec<f64>> = (0..n)
        .map(|i| {
            let row: Vec<f64> = (0..k).map(|c| vectors.get(i, c)).collect();
            let norm = row.iter().map(|v| v * v).sum::<f64>().sqrt();
            if norm > 0.0 { row.into_iter().map(|v| v / norm).collect() } else { row }
        })
        .collect();
    let labels = canonical_labels(&kmeans(&embedding, k, seed)?, k);

    let mut centers = vec![usize::MAX; k];
    let mut best = vec![f64::NEG_INFINITY; k];
    for i in 0..n {
        let c = labels[i];
        let within: f64 = (0..n).filter(|&j| labels[j] == c).map(|j| s.get(i, j)).sum();
        if within > best[c] {
            best[c] = within;
            centers[c] = i;
        }
    }
    if let Some(c) = centers.iter().position(|&m| m == usize::MAX) {
        return Err(Error::DegenerateMatrix(format!("cluster {c} ended up empty")));
    }
    Ok(ClusterAssignment { labels, k, centers })
}

fn task_order(t: &TaskSpec) -> usize {
    match &t.mode {
        TaskMode::FixedRecipe { recipe } => recipe.order(),
        TaskMode::Sampler { order, .. } => *order,
    }
}

/// Renders every candidate on every image: `renders[candidate][image]`.
/// Image `i` uses RNG lane `i`; sampler candidates bind their recipe from `seed`.
pub fn render_features(
    candidates: &[TaskSpec],
    gt_images: &[ImageF32],
    bins: usize,
    seed: u64,
) -> Result<Vec<Vec<Vec<f64>>>> {
    let jobs: Vec<(usize, usize)> = (0..candidates.len())
        .flat_map(|c| (0..gt_images.len()).map(move |i| (c, i)))
        .collect();
    let feats: Vec<Vec<f64>> = jobs
        .par_iter()
        .map(|&(c, i)| {
            let lane = i as u64;
            let recipe = candidates[c].bind_recipe(seed, lane)?;
            let out = apply_recipe_lane(&gt_images[i], DepthSource::Procedural, &recipe, lane)?;
            histogram_features(&out, bins)
        })
        .collect::<Result<_>>()?;
    let mut it = feats.into_iter();
    Ok((0..candidates.len()).map(|_| it.by_ref().take(gt_images.len()).collect()).collect())
}

/// Pairwise task similarity over the given images, diagonal fixed at 1.
pub fn build_similarity_matrix(
    candidates: &[TaskSpec],
    gt_images: &[ImageF32],
    bins: usize,
    seed: u64,
) -> Result<DenseMatrix> {
    if candidates.len() < 2 {
        return Err(Error::InvalidParam("need at least two candidate tasks".into()));
    }
    if gt_images.is_empty() {
        return Err(Error::InvalidParam("need at least one ground-truth image".into()));
    }
    let renders = render_features(candidates, gt_images, bins, seed)?;
    let n = candidates.len();
    let mut s = DenseMatrix::identity(n);
    for i in 0..n {
        for j in i + 1..n {
            let v = task_similarity(&renders[i], &renders[j])?;
            s.set(i, j, v);
            s.set(j, i, v);
        }
    }
    Ok(s)
}

/// Clusters same-order candidates into `per_order_count` groups and returns
/// each group's medoid, largest group first (ties by task id).
pub fn select_representatives(
    candidates: &[TaskSpec],
    s: &DenseMatrix,
    per_order_count: usize,
    seed: u64,
) -> Result<Vec<TaskSpec>> {
    let n = candidates.len();
    if s.n() != n {
        return Err(Error::LengthMismatch(n, s.n()));
    }
    if per_order_count == 0 || per_order_count > n {
        return Err(Error::InvalidParam(format!("cannot pick {per_order_count} representatives from {n} candidates")));
    }
    if let Some(t) = candidates.iter().find(|t| task_order(t) != task_order(&candidates[0])) {
        return Err(Error::InvalidParam(format!(
            "candidate '{}' has order {}, expected {}",
            t.task_id,
            task_order(t),
            task_order(&candidates[0])
        )));
    }
    let assignment = if per_order_count == 1 {
        let medoid = (0..n)
            .max_by(|&a, &b| {
                let (sa, sb): (f64, f64) = (s.row(a).iter().sum(), s.row(b).iter().sum());
                sa.total_cmp(&sb).then(b.cmp(&a))
            })
            .expect("n >= 1");
        ClusterAssignment { labels: vec![0; n], k: 1, centers: vec![medoid] }
    } else {
        spectral_cluster(s, per_order_count, seed)?
    };
    let sizes = assignment.cluster_sizes();
    let mut clusters: Vec<usize> = (0..assignment.k).collect();
    clusters.sort_by(|&a, &b| {
        sizes[b].cmp(&sizes[a]).then_with(|| {
            let (ta, tb) = (&candidates[assignment.centers[a]].task_id, &candidates[assignment.centers[b]].task_id);
            ta.cmp(tb)
        })
    });
    Ok(clusters.into_iter().map(|c| candidates[assignment.centers[c]].clone()).collect())
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SelectOptions {
    pub orders: Vec<usize>,
    pub candidates_per_order: usize,
    pub per_order: usize,
    pub bins: usize,
    pub crop_size: usize,
    pub seed: u64,
    pub allow_weather: bool,
}

impl Default for SelectOptions {
    fn default() -> Self {
        SelectOptions {
            orders: vec![2, 3, 4, 5],
            candidates_per_order: DEFAULT_CANDIDATES,
            per_order: DEFAULT_PER_ORDER,
            bins: DEFAULT_BINS,
            crop_size: DEFAULT_CROP,
            seed: 0,
            allow_weather: true,
        }
    }
}

/// How a bank was selected; written next to it.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Provenance {
    pub options: SelectOptions,
    pub gt_images: usize,
    pub similarity: String,
    pub clustering: String,
}

#[derive(Clone, Debug, PartialEq)]
pub struct Selection {
    pub tasks: Vec<TaskSpec>,
    pub provenance: Provenance,
}

fn provenance(options: SelectOptions, gt_images: usize) -> Provenance {
    Provenance {
        options,
        gt_images,
        similarity: "per-channel histogram intersection, mean over center-cropped renders".into(),
        clustering: format!(
            "normalized spectral clustering; k-means++ with {KMEANS_RESTARTS} restarts, at most {KMEANS_MAX_ITERS} iterations"
        ),
    }
}

fn crops(gt_images: &[ImageF32], size: usize) -> Vec<ImageF32> {
    gt_images
        .iter()
        .map(|img| if img.width() > size || img.height() > size { img.crop_center(size) } else { img.clone() })
        .collect()
}

/// Clusters an explicit candidate pool, grouped by order.
pub fn select_from_pool(
    pool: &[TaskSpec],
    gt_images: &[ImageF32],
    options: &SelectOptions,
    threads: Option<usize>,
) -> Result<Selection> {
    let crops = crops(gt_images, options.crop_size);
    let mut orders: Vec<usize> = pool.iter().map(task_order).collect();
    orders.sort_unstable();
    orders.dedup();
    let mut tasks = Vec::new();
    for k in orders {
        let group: Vec<TaskSpec> = pool.iter().filter(|t| task_order(t) == k).cloned().collect();
        let s = with_threads(threads, || build_similarity_matrix(&group, &crops, options.bins, options.seed))??;
        tasks.extend(select_representatives(&group, &s, options.per_order.min(group.len()), options.seed ^ k as u64)?);
    }
    let mut opts = options.clone();
    opts.orders = pool.iter().map(task_order).collect::<std::collections::BTreeSet<_>>().into_iter().collect();
    opts.candidates_per_order = 0;
    Ok(Selection { tasks, provenance: provenance(opts, gt_images.len()) })
}

/// Samples `candidates_per_order` random recipes for each order and keeps
/// `per_order` representatives of each. Candidate ids are `k<order>-<index>`.
pub fn select_task_bank(gt_images: &[ImageF32], options: &SelectOptions, threads: Option<usize>) -> Result<Selection> {
    let mut pool = Vec::new();
    for &k in &options.orders {
        let mut rng = derive_rng(options.seed, SELECT_LANE, k as u64);
        for i in 0..options.candidates_per_order {
            let recipe = sample_recipe(k, &mut rng, options.allow_weather)?;
            let desc = recipe.kinds().iter().map(|k: &DegradationKind| k.name()).collect::<Vec<_>>().join(" + ");
            pool.push(TaskSpec::fixed(format!("k{k}-{i:03}"), desc, recipe));
        }
    }
    if options.per_order > options.candidates_per_order {
        return Err(Error::InvalidParam(format!(
            "cannot pick {} representatives from {} candidates",
            options.per_order, options.candidates_per_order
        )));
    }
    let mut sel = select_from_pool(&pool, gt_images, options, threads)?;
    sel.provenance.options = options.clone();
    Ok(sel)
}

/// Sidecar path for a bank file: `bank.json` → `bank.provenance.json`.
pub fn provenance_path(bank_path: &Path) -> PathBuf {
    let stem = bank_path.file_stem().and_then(|s| s.to_str()).unwrap_or("bank");
    bank_path.with_file_name(format!("{stem}.provenance.json"))
}

/// Writes the bank and its provenance sidecar; returns the sidecar path.
pub fn write_selection(selection: &Selection, bank_path: impl AsRef<Path>) -> Result<PathBuf> {
    let bank_path = bank_path.as_ref();
    let side = provenance_path(bank_path);
    write_atomic(&side, to_json_pretty(&selection.provenance)?.as_bytes())?;
    write_atomic(bank_path, to_json_pretty(&selection.tasks)?.as_bytes())?;
    Ok(side)
}

/// Partitions are equal up to renaming of labels.
pub fn same_partition(a: &[usize], b: &[usize]) -> bool {
    let k = a.iter().chain(b).max().map_or(0, |m| m + 1);
    a.len() == b.len() && canonical_labels(a, k) == canonical_labels(b, k)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::degradations::{representative_params, DegradationParams, NoiseParams};
    use crate::pipeline::Recipe;
    use proptest::prelude::*;

    fn planted(sizes: &[usize], within: f64, cross: f64, jitter: f64, seed: u64) -> (DenseMatrix, Vec<usize>) {
        let truth: Vec<usize> = sizes.iter().enumerate().flat_map(|(g, &n)| std::iter::repeat_n(g, n)).collect();
        let n = truth.len();
        let mut rng = RngStream::from_seed(seed);
        let mut s = DenseMatrix::identity(n);
        for i in 0..n {
            for j in i + 1..n {
                let base = if truth[i] == truth[j] { within } else { cross };
                let v = (base + jitter * (2.0 * rng.next_f64() - 1.0)).clamp(0.0, 1.0);
                s.set(i, j, v);
                s.set(j, i, v);
            }
        }
        (s, truth)
    }

    #[test]
    fn histogram_examples() {
        let f = histogram_features(&ImageF32::filled(5, 3, [0.0; 3]), 32).unwrap();
        assert_eq!(f.len(), 96);
        for c in 0..3 {
            assert!((f[c * 32] - 1.0 / 3.0).abs() < 1e-12);
            assert!(f[c * 32 + 1..(c + 1) * 32].iter().all(|&v| v == 0.0));
        }
        let two = ImageF32::new(2, 1, vec![0.0, 0.0, 0.0, 1.0, 1.0, 1.0]).unwrap();
        let f = histogram_features(&two, 2).unwrap();
        assert!(f.iter().all(|&v| (v - 1.0 / 6.0).abs() < 1e-12));
        assert!(histogram_features(&two, 1).is_err());
    }

    #[test]
    fn similarity_examples() {
        let mut u = vec![0.0; 8];
        let mut v = vec![0.0; 8];
        u[0] = 0.5;
        u[1] = 0.5;
        v[0] = 0.25;
        v[1] = 0.25;
        v[2] = 0.5;
        assert!((task_similarity(&[u.clone()], &[v.clone()]).unwrap() - 0.5).abs() < 1e-12);
        assert_eq!(task_similarity(&[u.clone()], &[u.clone()]).unwrap(), 1.0);
        let mut w = vec![0.0; 8];
        w[7] = 1.0;
        assert_eq!(task_similarity(&[u.clone()], &[w]).unwrap(), 0.0);
        assert!(matches!(task_similarity(&[u.clone()], &[u.clone(), v]), Err(Error::LengthMismatch(1, 2))));
    }

    #[test]
    fn jacobi_small_cases() {
        let (vals, _) = jacobi_eigh(&DenseMatrix::identity(4)).unwrap();
        assert!(vals.iter().all(|&v| (v - 1.0).abs() < 1e-12));
        let d = DenseMatrix::from_rows(&[vec![3.0, 0.0, 0.0], vec![0.0, 1.0, 0.0], vec![0.0, 0.0, 2.0]]).unwrap();
        let (vals, vecs) = jacobi_eigh(&d).unwrap();
        assert_eq!(vals, [1.0, 2.0, 3.0]);
        for (c, axis) in [1usize, 2, 0].into_iter().enumerate() {
            assert!((vecs.get(axis, c).abs() - 1.0).abs() < 1e-12);
        }
        let asym = DenseMatrix::from_rows(&[vec![1.0, 0.5], vec![0.4, 1.0]]).unwrap();
        assert!(matches!(jacobi_eigh(&asym), Err(Error::NotSymmetric { i: 0, j: 1, .. })));
    }

    fn random_symmetric(n: usize, seed: u64) -> DenseMatrix {
        let mut rng = RngStream::from_seed(seed);
        let mut m = DenseMatrix::zeros(n);
        for i in 0..n {
            for j in i..n {
                let v = rng.uniform(-1.0, 1.0);
                m.set(i, j, v);
                m.set(j, i, v);
            }
        }
        m
    }

    #[test]
    fn jacobi_reconstructs_random_matrices() {
        for seed in 0..10 {
            let m = random_symmetric(20, seed);
            let (vals, v) = jacobi_eigh(&m).unwrap();
            assert!(vals.windows(2).all(|w| w[0] <= w[1]));
            let lambda = DenseMatrix::from_fn(20, |i, j| if i == j { vals[i] } else { 0.0 });
            let recon = v.matmul(&lambda).matmul(&v.transpose());
            let err = DenseMatrix::from_fn(20, |i, j| recon.get(i, j) - m.get(i, j)).frobenius();
            assert!(err < 1e-7, "seed {seed}: {err}");
            let gram = v.transpose().matmul(&v);
            let ortho = DenseMatrix::from_fn(20, |i, j| gram.get(i, j) - if i == j { 1.0 } else { 0.0 });
            assert!(ortho.data.iter().all(|x| x.abs() < 1e-8));
            for (c, &lambda) in vals.iter().enumerate() {
                for r in 0..20 {
                    let mv: f64 = (0..20).map(|k| m.get(r, k) * v.get(k, c)).sum();
                    assert!((mv - lambda * v.get(r, c)).abs() < 1e-8);
                }
            }
        }
    }

    #[test]
    fn disconnected_blocks_split() {
        let s = DenseMatrix::from_rows(&[
            vec![1.0, 1.0, 0.0, 0.0],
            vec![1.0, 1.0, 0.0, 0.0],
            vec![0.0, 0.0, 1.0, 1.0],
            vec![0.0, 0.0, 1.0, 1.0],
        ])
        .unwrap();
        let a = spectral_cluster(&s, 2, 0).unwrap();
        assert_eq!(a.labels, [0, 0, 1, 1]);
        for c in 0..2 {
            assert_eq!(a.labels[a.centers[c]], c);
        }
    }

    #[test]
    fn k_equals_n_gives_singletons() {
        let (s, _) = planted(&[3, 3], 0.8, 0.2, 0.05, 1);
        let a = spectral_cluster(&s, 6, 3).unwrap();
        assert_eq!(a.cluster_sizes(), [1; 6]);
        for c in 0..6 {
            assert_eq!(a.labels[a.centers[c]], c);
        }
    }

    #[test]
    fn planted_three_blocks_recovered() {
        for seed in 0..100 {
            let (s, truth) = planted(&[5, 5, 5], 0.9, 0.1, 0.0, seed);
            let a = spectral_cluster(&s, 3, seed).unwrap();
            assert!(same_partition(&a.labels, &truth), "seed {seed}");
            let (s, truth) = planted(&[5, 5, 5], 0.9, 0.1, 0.05, seed);
            let a = spectral_cluster(&s, 3, seed).unwrap();
            assert!(same_partition(&a.labels, &truth), "jittered seed {seed}");
        }
    }

    #[test]
    fn invalid_inputs() {
        let (s, _) = planted(&[2, 2], 0.9, 0.1, 0.0, 0);
        assert!(matches!(spectral_cluster(&s, 1, 0), Err(Error::InvalidParam(_))));
        assert!(matches!(spectral_cluster(&s, 5, 0), Err(Error::InvalidParam(_))));
        let mut z = s.clone();
        for j in 0..4 {
            z.set(2, j, 0.0);
            z.set(j, 2, 0.0);
        }
        assert!(matches!(spectral_cluster(&z, 2, 0), Err(Error::DegenerateMatrix(_))));
    }

    fn noise_task(id: &str, sigma: f64, seed: u64) -> TaskSpec {
        let r = Recipe::new(vec![DegradationParams::Noise(NoiseParams { sigma255: sigma })], seed).unwrap();
        TaskSpec::fixed(id, "noise", r)
    }

    #[test]
    fn similarity_matrix_matches_nested_loop() {
        let imgs: Vec<ImageF32> = (0..2)
            .map(|s| {
                let mut rng = RngStream::from_seed(s);
                ImageF32::from_fn(24, 24, |_, _, _| rng.next_f64() as f32)
            })
            .collect();
        let tasks = vec![noise_task("a", 5.0, 1), noise_task("b", 40.0, 2), noise_task("c", 5.0, 1)];
        let s = build_similarity_matrix(&tasks, &imgs, 16, 7).unwrap();
        for i in 0..3 {
            for j in 0..3 {
                let mut total = 0.0;
                for (lane, img) in imgs.iter().enumerate() {
                    let ri = tasks[i].bind_recipe(7, lane as u64).unwrap();
                    let rj = tasks[j].bind_recipe(7, lane as u64).unwrap();
                    let hi = histogram_features(&apply_recipe_lane(img, DepthSource::Procedural, &ri, lane as u64).unwrap(), 16).unwrap();
                    let hj = histogram_features(&apply_recipe_lane(img, DepthSource::Procedural, &rj, lane as u64).unwrap(), 16).unwrap();
                    total += hi.iter().zip(&hj).map(|(a, b)| a.min(*b)).sum::<f64>();
                }
                let want = if i == j { 1.0 } else { total / 2.0 };
                assert!((s.get(i, j) - want).abs() < 1e-12);
                assert_eq!(s.get(i, j), s.get(j, i));
            }
        }
        assert!((s.get(0, 2) - 1.0).abs() < 1e-9);
    }

    #[test]
    fn thirty_candidates_in_ten_groups() {
        let tasks: Vec<TaskSpec> = (0..30).map(|i| noise_task(&format!("t{i:02}"), 1.0, i)).collect();
        let (s, truth) = planted(&[3; 10], 0.95, 0.1, 0.04, 11);
        let picked = select_representatives(&tasks, &s, 10, 5).unwrap();
        let mut groups: Vec<usize> =
            picked.iter().map(|t| truth[tasks.iter().position(|c| c.task_id == t.task_id).unwrap()]).collect();
        groups.sort_unstable();
        assert_eq!(groups, (0..10).collect::<Vec<_>>());
        assert_eq!(select_representatives(&tasks, &s, 10, 5).unwrap(), picked);
        let all = select_representatives(&tasks, &s, 30, 5).unwrap();
        let mut ids: Vec<_> = all.iter().map(|t| t.task_id.clone()).collect();
        ids.sort();
        assert_eq!(ids, tasks.iter().map(|t| t.task_id.clone()).collect::<Vec<_>>());
    }

    #[test]
    fn mixed_orders_rejected() {
        let two = Recipe::new(
            vec![representative_params(DegradationKind::Blur), representative_params(DegradationKind::Noise)],
            0,
        )
        .unwrap();
        let tasks = vec![noise_task("a", 1.0, 0), TaskSpec::fixed("b", "", two)];
        assert!(select_representatives(&tasks, &DenseMatrix::identity(2), 2, 0).is_err());
    }

    #[test]
    fn selection_end_to_end_is_deterministic() {
        let imgs: Vec<ImageF32> = (0..2)
            .map(|s| {
                let mut rng = RngStream::from_seed(s + 10);
                ImageF32::from_fn(40, 40, |x, y, _| ((x + y) as f64 / 80.0 + 0.1 * rng.next_f64()) as f32)
            })
            .collect();
        let opts = SelectOptions { orders: vec![1, 2], candidates_per_order: 8, per_order: 3, seed: 4, crop_size: 32, ..Default::default() };
        let a = select_task_bank(&imgs, &opts, Some(1)).unwrap();
        let b = select_task_bank(&imgs, &opts, Some(4)).unwrap();
        assert_eq!(a, b);
        assert_eq!(a.tasks.len(), 6);
        let dir = tempfile::tempdir().unwrap();
        let side = write_selection(&a, dir.path().join("bank.json")).unwrap();
        assert_eq!(side, dir.path().join("bank.provenance.json"));
        let text = std::fs::read_to_string(dir.path().join("bank.json")).unwrap();
        assert_eq!(crate::pipeline::parse_task_bank(&text).unwrap(), a.tasks);
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(64))]
        #[test]
        fn features_sum_to_one_and_survive_upsampling(seed in any::<u64>(), w in 1usize..12, h in 1usize..12) {
            let mut rng = RngStream::from_seed(seed);
            let img = ImageF32::from_fn(w, h, |_, _, _| rng.next_f64() as f32);
            let f = histogram_features(&img, 32).unwrap();
            prop_assert!((f.iter().sum::<f64>() - 1.0).abs() < 1e-9);
            let big = ImageF32::from_fn(2 * w, 2 * h, |x, y, c| img.get(x / 2, y / 2, c));
            let g = histogram_features(&big, 32).unwrap();
            for (a, b) in f.iter().zip(&g) {
                prop_assert!((a - b).abs() < 1e-9);
            }
        }

        #[test]
        fn clustering_is_permutation_equivariant(seed in any::<u64>()) {
            let (s, truth) = planted(&[4, 5, 6], 0.85, 0.15, 0.05, seed);
            let n = truth.len();
            let mut perm: Vec<usize> = (0..n).collect();
            let mut rng = RngStream::from_seed(seed ^ 1);
            for i in (1..n).rev() {
                perm.swap(i, rng.below(i as u64 + 1) as usize);
            }
            let a = spectral_cluster(&s, 3, seed).unwrap();
            let b = spectral_cluster(&s.permuted(&perm), 3, seed).unwrap();
            let a_perm: Vec<usize> = perm.iter().map(|&p| a.labels[p]).collect();
            prop_assert!(same_partition(&a_perm, &b.labels));
            for c in 0..3 {
                prop_assert_eq!(b.labels[b.centers[c]], c);
            }
        }
    }
}
