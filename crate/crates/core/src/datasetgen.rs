//! Test-set construction: task banks, the build driver, and manifests.
//!
//! A build renders every (task, ground-truth image) pair to
//! `<out>/<task_id>/<gt_id>.png` and records the binding in `manifest.json`.
//! Each image gets its own RNG lane, derived from the build seed and its id,
//! so the output tree is a pure function of (images, bank, seed).

use std::collections::{BTreeMap, HashSet};
use std::fs;
use std::path::{Path, PathBuf};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::degradations::{representative_params, DegradationKind};
use crate::error::{Error, Result};
use crate::imaging::{load_image, save_image, ImageF32};
use crate::parallel::with_threads;
use crate::pipeline::{
    apply_recipe_lane, recipe_hash, sample_recipe, to_json_pretty, DepthSource, Recipe, TaskSpec,
};
use crate::rng::{derive_rng, mix64};

pub const MANIFEST_VERSION: u32 = 1;
pub const MANIFEST_FILE: &str = "manifest.json";

/// Scene categories of the benchmark's ground-truth collection.
pub const SCENE_LABELS: [&str; 10] = [
    "animal",
    "vegetation",
    "mountain view",
    "scenery",
    "texture",
    "portrait",
    "food",
    "daily scenes",
    "art",
    "architecture",
];

const SINGLE_TASKS: [DegradationKind; 10] = [
    DegradationKind::Resize,
    DegradationKind::Blur,
    DegradationKind::Noise,
    DegradationKind::Compression,
    DegradationKind::Damage,
    DegradationKind::Ringing,
    DegradationKind::AlgArtifact,
    DegradationKind::Rain,
    DegradationKind::Haze,
    DegradationKind::Snow,
];

/// Representative mixture chains, tasks 11–50.
pub const REPRESENTATIVE_CHAINS: [&[DegradationKind]; 40] = {
    use DegradationKind::{
        AlgArtifact as Alg, Blur, Compression as Comp, Damage, Haze, Noise, Rain, Resize, Ringing, Snow,
    };
    [
        &[Rain, Ringing],
        &[Ringing, Ringing],
        &[Noise, Resize],
        &[Comp, Alg],
        &[Haze, Noise],
        &[Comp, Damage],
        &[Damage, Alg],
        &[Snow, Comp],
        &[Noise, Blur],
        &[Noise, Ringing],
        &[Comp, Damage, Resize],
        &[Alg, Alg, Damage],
        &[Alg, Noise, Alg],
        &[Snow, Comp, Ringing],
        &[Haze, Resize, Resize],
        &[Rain, Resize, Resize],
        &[Noise, Damage, Damage],
        &[Alg, Ringing, Blur],
        &[Snow, Blur, Noise],
        &[Noise, Comp, Resize],
        &[Resize, Ringing, Damage, Resize],
        &[Haze, Resize, Resize, Resize],
        &[Noise, Damage, Resize, Ringing],
        &[Rain, Resize, Resize, Resize],
        &[Snow, Ringing, Alg, Ringing],
        &[Blur, Ringing, Noise, Damage],
        &[Haze, Resize, Blur, Noise],
        &[Snow, Noise, Noise, Noise],
        &[Blur, Blur, Blur, Blur],
        &[Blur, Ringing, Ringing, Alg],
        &[Alg, Resize, Blur, Comp, Damage],
        &[Noise, Resize, Damage, Alg, Resize],
        &[Snow, Ringing, Damage, Resize, Resize],
        &[Haze, Blur, Alg, Noise, Ringing],
        &[Resize, Resize, Resize, Resize, Resize],
        &[Rain, Ringing, Ringing, Noise, Comp],
        &[Snow, Ringing, Blur, Noise, Ringing],
        &[Comp, Noise, Noise, Ringing, Noise],
        &[Blur, Resize, Comp, Ringing, Blur],
        &[Haze, Comp, Damage, Comp, Noise],
    ]
};

const BANK_LANE: u64 = 0x6261_6e6b; // "bank"
const RANDOM_TASKS_PER_ORDER: usize = 10;

fn describe(kinds: &[DegradationKind]) -> String {
    kinds.iter().map(|k| k.name()).collect::<Vec<_>>().join(" + ")
}

/// The 100-task benchmark bank: ten single tasks, the forty published
/// mixture chains (representative parameters throughout), and fifty random
/// recipes, ten for each order 1–5, drawn from `master_seed`.
pub fn default_task_bank(master_seed: u64) -> Vec<TaskSpec> {
    let recipe_seed = |index: usize| derive_rng(master_seed, BANK_LANE, index as u64).next_u64();
    let mut tasks = Vec::with_capacity(100);
    let fixed_chains = SINGLE_TASKS
        .iter()
        .map(std::slice::from_ref)
        .chain(REPRESENTATIVE_CHAINS.iter().copied());
    for (i, chain) in fixed_chains.enumerate() {
        let params = chain.iter().map(|&k| representative_params(k)).collect();
        let recipe = Recipe::new(params, recipe_seed(i)).expect("published chains are valid");
        tasks.push(TaskSpec::fixed((i + 1).to_string(), describe(chain), recipe));
    }
    let mut rng = derive_rng(master_seed, BANK_LANE, u64::MAX);
    for k in 1..=5 {
        for _ in 0..RANDOM_TASKS_PER_ORDER {
            let recipe = sample_recipe(k, &mut rng, true).expect("orders 1..=5 are valid");
            let id = tasks.len() + 1;
            tasks.push(TaskSpec::fixed(id.to_string(), format!("random: {}", describe(&recipe.kinds())), recipe));
        }
    }
    tasks
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GtImage {
    pub id: String,
    /// Relative to the ground-truth directory.
    pub path: String,
    pub width: usize,
    pub height: usize,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub scene_label: Option<String>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ManifestEntry {
    pub task_id: String,
    pub gt_id: String,
    /// Relative to the output directory.
    pub lq_path: String,
    pub recipe_hash: String,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Manifest {
    pub version: u32,
    pub master_seed: u64,
    pub gt_images: Vec<GtImage>,
    pub tasks: Vec<TaskSpec>,
    pub entries: Vec<ManifestEntry>,
}

impl Manifest {
    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = fs::read_to_string(path).map_err(|e| match e.kind() {
            std::io::ErrorKind::NotFound => Error::FileNotFound(path.to_path_buf()),
            _ => Error::Io(e),
        })?;
        let m: Manifest = serde_json::from_str(&text).map_err(|e| Error::from_json(&e))?;
        if m.version != MANIFEST_VERSION {
            return Err(Error::SchemaVersionMismatch {
                found: m.version,
                expected: MANIFEST_VERSION,
            });
        }
        Ok(m)
    }

    pub fn to_json(&self) -> Result<String> {
        to_json_pretty(self)
    }
}

/// Lane for one ground-truth image: depends on the build seed and the id only.
pub fn image_lane(master_seed: u64, gt_id: &str) -> u64 {
    let digest = Sha256::digest(gt_id.as_bytes());
    mix64(master_seed) ^ u64::from_le_bytes(digest[..8].try_into().expect("8 bytes"))
}

fn is_image_file(p: &Path) -> bool {
    matches!(
        p.extension().and_then(|e| e.to_str()).map(str::to_ascii_lowercase).as_deref(),
        Some("png" | "ppm")
    )
}

fn scene_for_dir(name: &str) -> Option<String> {
    let norm = name.replace(['_', '-'], " ").to_ascii_lowercase();
    SCENE_LABELS.iter().find(|s| **s == norm).map(|s| s.to_string())
}

fn sorted_entries(dir: &Path) -> Result<Vec<PathBuf>> {
    let mut v = fs::read_dir(dir)?.map(|e| e.map(|e| e.path())).collect::<std::io::Result<Vec<_>>>()?;
    v.sort();
    Ok(v)
}

/// Lists the PNG/PPM files of `gt_dir`, sorted by name. Files inside a
/// subdirectory named after a scene (`daily_scenes/`, `art/`, …) carry that
/// scene label and the id `<dir>-<stem>`.
pub fn scan_gt_dir(gt_dir: impl AsRef<Path>) -> Result<Vec<(GtImage, ImageF32)>> {
    let gt_dir = gt_dir.as_ref();
    if !gt_dir.is_dir() {
        return Err(Error::FileNotFound(gt_dir.to_path_buf()));
    }
    let mut found: Vec<(String, String, Option<String>)> = Vec::new();
    for p in sorted_entries(gt_dir)? {
        let name = p.file_name().and_then(|n| n.to_str()).unwrap_or_default().to_string();
        if p.is_file() && is_image_file(&p) {
            let stem = p.file_stem().and_then(|s| s.to_str()).unwrap_or_default().to_string();
            found.push((stem, name, None));
        } else if p.is_dir() {
            if let Some(scene) = scene_for_dir(&name) {
                for q in sorted_entries(&p)? {
                    if q.is_file() && is_image_file(&q) {
                        let stem = q.file_stem().and_then(|s| s.to_str()).unwrap_or_default();
                        let file = q.file_name().and_then(|s| s.to_str()).unwrap_or_default();
                        found.push((format!("{name}-{stem}"), format!("{name}/{file}"), Some(scene.clone())));
                    }
                }
            }
        }
    }
    if found.is_empty() {
        return Err(Error::InvalidParam(format!("no PNG or PPM images in {}", gt_dir.display())));
    }
    let mut seen = HashSet::new();
    for (id, ..) in &found {
        if !seen.insert(id.clone()) {
            return Err(Error::InvalidParam(format!("two ground-truth images share the id '{id}'")));
        }
    }
    found
        .into_par_iter()
        .map(|(id, path, scene_label)| {
            let img = load_image(gt_dir.join(&path))?;
            let (width, height) = img.dims();
            Ok((GtImage { id, path, width, height, scene_label }, img))
        })
        .collect()
}

fn check_bank(tasks: &[TaskSpec]) -> Result<()> {
    if tasks.is_empty() {
        return Err(Error::InvalidParam("task bank is empty".into()));
    }
    let mut seen = HashSet::new();
    for t in tasks {
        let id = t.task_id.as_str();
        if id.is_empty() || id == "." || id == ".." || id.contains(['/', '\\']) {
            return Err(Error::InvalidParam(format!("task id '{id}' is not usable as a directory name")));
        }
        if !seen.insert(id) {
            return Err(Error::InvalidParam(format!("duplicate task id '{id}'")));
        }
        if let Some(r) = t.recipe() {
            r.validate()?;
        }
    }
    Ok(())
}

#[derive(Clone, Copy, Debug, Default)]
pub struct BuildOptions {
    /// Worker threads; `None` uses the global pool.
    pub threads: Option<usize>,
}

/// Renders every (task, image) pair and writes the manifest last. On failure
/// everything this call created is removed again.
pub fn build_testset(
    gt_dir: impl AsRef<Path>,
    tasks: &[TaskSpec],
    out_dir: impl AsRef<Path>,
    master_seed: u64,
    options: BuildOptions,
) -> Result<Manifest> {
    let out_dir = out_dir.as_ref();
    let gt_dir = gt_dir.as_ref();
    check_bank(tasks)?;
    let gt = with_threads(options.threads, || scan_gt_dir(gt_dir))??;

    let out_existed = out_dir.exists();
    fs::create_dir_all(out_dir)?;
    let mut created_dirs = Vec::new();
    let cleanup = |dirs: &[PathBuf]| {
        for d in dirs {
            let _ = fs::remove_dir_all(d);
        }
        if !out_existed {
            let _ = fs::remove_dir_all(out_dir);
        }
    };
    for t in tasks {
        let d = out_dir.join(&t.task_id);
        if !d.exists() {
            if let Err(e) = fs::create_dir(&d) {
                cleanup(&created_dirs);
                return Err(e.into());
            }
            created_dirs.push(d);
        }
    }

    let jobs: Vec<(&TaskSpec, &GtImage, &ImageF32)> = tasks
        .iter()
        .flat_map(|t| gt.iter().map(move |(meta, img)| (t, meta, img)))
        .collect();
    let render = |(task, meta, img): &(&TaskSpec, &GtImage, &ImageF32)| -> Result<ManifestEntry> {
        let lane = image_lane(master_seed, &meta.id);
        let recipe = task.bind_recipe(master_seed, lane)?;
        let lq = apply_recipe_lane(img, DepthSource::Procedural, &recipe, lane)?;
        let lq_path = format!("{}/{}.png", task.task_id, meta.id);
        save_image(&lq, out_dir.join(&lq_path))?;
        Ok(ManifestEntry {
            task_id: task.task_id.clone(),
            gt_id: meta.id.clone(),
            lq_path,
            recipe_hash: recipe_hash(&recipe),
        })
    };
    let rendered = with_threads(options.threads, || jobs.par_iter().map(render).collect::<Result<Vec<_>>>())
        .and_then(|r| r);
    let entries = match rendered {
        Ok(e) => e,
        Err(e) => {
            cleanup(&created_dirs);
            return Err(e);
        }
    };

    let manifest = Manifest {
        version: MANIFEST_VERSION,
        master_seed,
        gt_images: gt.into_iter().map(|(meta, _)| meta).collect(),
        tasks: tasks.to_vec(),
        entries,
    };
    let written = manifest.to_json().and_then(|text| write_atomic(&out_dir.join(MANIFEST_FILE), text.as_bytes()));
    if let Err(e) = written {
        cleanup(&created_dirs);
        return Err(e);
    }
    Ok(manifest)
}

/// Writes through a sibling temporary file and renames it into place.
pub fn write_atomic(path: &Path, bytes: &[u8]) -> Result<()> {
    let mut tmp = path.as_os_str().to_owned();
    tmp.push(".tmp");
    let tmp = PathBuf::from(tmp);
    fs::write(&tmp, bytes)?;
    fs::rename(&tmp, path).map_err(|e| {
        let _ = fs::remove_file(&tmp);
        Error::Io(e)
    })
}

#[derive(Clone, Debug, PartialEq)]
pub enum Violation {
    MissingFile { task_id: String, gt_id: String, path: PathBuf },
    Unreadable { path: PathBuf, message: String },
    DimensionMismatch { task_id: String, gt_id: String, expected: (usize, usize), actual: (usize, usize) },
    /// The stored hashes of these entries no longer match the task's recipe.
    HashMismatch { task_id: String, gt_ids: Vec<String> },
    UnknownReference { task_id: String, gt_id: String },
    EntryCount { expected: usize, actual: usize },
}

#[derive(Clone, Debug, Default, PartialEq)]
pub struct ValidationReport {
    pub violations: Vec<Violation>,
}

impl ValidationReport {
    pub fn is_clean(&self) -> bool {
        self.violations.is_empty()
    }
}

/// Checks a built test set in `dir` against its manifest and lists every
/// problem found; never stops at the first.
pub fn validate_manifest(manifest: &Manifest, dir: impl AsRef<Path>) -> ValidationReport {
    let dir = dir.as_ref();
    let mut violations = Vec::new();
    let expected = manifest.tasks.len() * manifest.gt_images.len();
    if manifest.entries.len() != expected {
        violations.push(Violation::EntryCount {
            expected,
            actual: manifest.entries.len(),
        });
    }
    let gts: BTreeMap<&str, &GtImage> = manifest.gt_images.iter().map(|g| (g.id.as_str(), g)).collect();
    let tasks: BTreeMap<&str, &TaskSpec> = manifest.tasks.iter().map(|t| (t.task_id.as_str(), t)).collect();
    let mut bad_hashes: BTreeMap<&str, Vec<String>> = BTreeMap::new();

    for e in &manifest.entries {
        let (Some(gt), Some(task)) = (gts.get(e.gt_id.as_str()), tasks.get(e.task_id.as_str())) else {
            violations.push(Violation::UnknownReference {
                task_id: e.task_id.clone(),
                gt_id: e.gt_id.clone(),
            });
            continue;
        };
        let rehash = task
            .bind_recipe(manifest.master_seed, image_lane(manifest.master_seed, &e.gt_id))
            .map(|r| recipe_hash(&r));
        if rehash.as_deref().ok() != Some(e.recipe_hash.as_str()) {
            bad_hashes.entry(e.task_id.as_str()).or_default().push(e.gt_id.clone());
        }
        let path = dir.join(&e.lq_path);
        if !path.is_file() {
            violations.push(Violation::MissingFile {
                task_id: e.task_id.clone(),
                gt_id: e.gt_id.clone(),
                path,
            });
            continue;
        }
        match load_image(&path) {
            Ok(img) if img.dims() != (gt.width, gt.height) => violations.push(Violation::DimensionMismatch {
                task_id: e.task_id.clone(),
                gt_id: e.gt_id.clone(),
                expected: (gt.width, gt.height),
                actual: img.dims(),
            }),
            Ok(_) => {}
            Err(err) => violations.push(Violation::Unreadable {
                path,
                message: err.to_string(),
            }),
        }
    }
    for (task_id, gt_ids) in bad_hashes {
        violations.push(Violation::HashMismatch {
            task_id: task_id.to_string(),
            gt_ids,
        });
    }
    ValidationReport { violations }
}
