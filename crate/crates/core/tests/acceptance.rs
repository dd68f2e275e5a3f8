//! Acceptance suite: one PASS/FAIL line per criterion.
//!
//! Run with `cargo test -p gir-core --test acceptance -- --test-threads 1` to
//! get the report lines in order.

use std::collections::BTreeMap;
use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::time::{Duration, Instant};

use gir_core::datasetgen::{build_testset, default_task_bank, BuildOptions};
use gir_core::degradations::{
    degrade_haze, degrade_noise, degrade_snow_with_density, gaussian_kernel, representative_params,
    richardson_lucy_step, sinc_kernel, DegradationKind, HazeParams, NoiseParams, SnowParams,
};
use gir_core::evaluation::{build_report, calinski_harabasz, load_score_column, psnr};
use gir_core::imaging::{convolve2d_unclamped, DepthMap, ImageF32, Kernel2D};
use gir_core::jpeg::{self, entropy, fdct8x8, idct8x8, quality_to_tables};
use gir_core::pipeline::{sample_recipe, TaskSpec};
use gir_core::taskselect::{jacobi_eigh, spectral_cluster, DenseMatrix};
use gir_core::RngStream;

/// Collects sub-checks and prints the criterion's single report line.
struct Criterion {
    id: u32,
    title: &'static str,
    budget: Duration,
    start: Instant,
    checks: Vec<(String, bool)>,
}

impl Criterion {
    fn new(id: u32, title: &'static str, budget_secs: f64) -> Self {
        Criterion {
            id,
            title,
            budget: Duration::from_secs_f64(budget_secs),
            start: Instant::now(),
            checks: Vec::new(),
        }
    }

    fn check(&mut self, ok: bool, detail: impl Into<String>) {
        self.checks.push((detail.into(), ok));
    }

    fn finish(mut self) {
        let elapsed = self.start.elapsed();
        self.check(
            elapsed < self.budget,
            format!("runtime {:.2}s < {:.0}s", elapsed.as_secs_f64(), self.budget.as_secs_f64()),
        );
        let failed: Vec<&str> = self.checks.iter().filter(|c| !c.1).map(|c| c.0.as_str()).collect();
        let verdict = if failed.is_empty() { "PASS" } else { "FAIL" };
        let summary: Vec<String> =
            self.checks.iter().map(|(d, ok)| format!("{}{d}", if *ok { "" } else { "✗ " })).collect();
        // Straight to the handle so the line shows up even under output capture.
        let _ = writeln!(
            std::io::stderr().lock(),
            "criterion {} {verdict}: {} — {}",
            self.id,
            self.title,
            summary.join("; ")
        );
        assert!(failed.is_empty(), "criterion {} failed: {}", self.id, failed.join("; "));
    }
}

fn fixture(name: &str) -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("fixtures").join(name)
}

fn random_image(w: usize, h: usize, rng: &mut RngStream) -> ImageF32 {
    ImageF32::from_fn(w, h, |_, _, _| rng.next_f64() as f32)
}

fn smooth_image(w: usize, h: usize, seed: u64) -> ImageF32 {
    let mut rng = RngStream::from_seed(seed);
    let (fx, fy, phase) = (rng.uniform(1.0, 4.0), rng.uniform(1.0, 4.0), rng.uniform(0.0, 6.0));
    ImageF32::from_fn(w, h, |x, y, c| {
        let u = x as f64 / w as f64;
        let v = y as f64 / h as f64;
        let s = (std::f64::consts::TAU * (fx * u + 0.3 * c as f64) + phase).sin() * (std::f64::consts::TAU * fy * v).cos();
        (0.5 + 0.35 * s + 0.1 * (u - v)).clamp(0.0, 1.0) as f32
    })
}

#[test]
fn criterion_1_ar_er_fixture_reproduction() {
    let mut c = Criterion::new(1, "AR/ER fixture reproduction", 1.0);
    let baseline = fixture("appendix_baseline.csv");
    let models = fixture("appendix_models.csv");
    let acc = load_score_column(&baseline, "acceptance").unwrap();
    let exc = load_score_column(&baseline, "excellence").unwrap();
    c.check(acc.len() == 100 && exc.len() == 100, format!("baseline rows {}/{}", acc.len(), exc.len()));

    let rrdb = build_report(&load_score_column(&models, "df2k_all").unwrap(), &acc, &exc).unwrap();
    c.check((rrdb.ar - 0.46).abs() <= 0.03 + 1e-12, format!("RRDB AR {:.2} (0.46±0.03)", rrdb.ar));
    c.check(rrdb.er == 0.0, format!("RRDB ER {:.2} (0.00 exact)", rrdb.er));
    c.check((rrdb.avg_psnr - 25.67).abs() <= 0.02, format!("RRDB avg {:.3} (25.67±0.02)", rrdb.avg_psnr));

    let b32 = build_report(&load_score_column(&models, "batch32").unwrap(), &acc, &exc).unwrap();
    c.check((b32.ar - 0.57).abs() <= 0.03 + 1e-12, format!("batch32 AR {:.2} (0.57±0.03)", b32.ar));
    c.check((b32.er - 0.03).abs() <= 0.02 + 1e-12, format!("batch32 ER {:.2} (0.03±0.02)", b32.er));
    c.check((b32.avg_psnr - 26.39).abs() <= 0.02, format!("batch32 avg {:.3} (26.39±0.02)", b32.avg_psnr));
    c.finish();
}

#[test]
fn criterion_2_psnr_exactness() {
    let mut c = Criterion::new(2, "PSNR exactness", 1.0);
    let zero = ImageF32::filled(17, 11, [0.0; 3]);
    let tenth = ImageF32::filled(17, 11, [0.1; 3]);
    let p = psnr(&zero, &tenth).unwrap();
    c.check((p - 20.0).abs() < 1e-6, format!("offset 0.1 → {p:.7} dB"));

    let mut rng = RngStream::from_seed(2024);
    let mut worst = 0.0f64;
    for _ in 0..100 {
        let w = 1 + rng.below(40) as usize;
        let h = 1 + rng.below(40) as usize;
        let a = random_image(w, h, &mut rng);
        let b = random_image(w, h, &mut rng);
        let mut sse = 0.0f64;
        for y in 0..h {
            for x in 0..w {
                for ch in 0..3 {
                    let d = a.get(x, y, ch) as f64 - b.get(x, y, ch) as f64;
                    sse += d * d;
                }
            }
        }
        let want = 10.0 * (1.0 / (sse / (w * h * 3) as f64)).log10();
        worst = worst.max((psnr(&a, &b).unwrap() - want).abs());
    }
    c.check(worst < 1e-9, format!("brute-force oracle max |Δ| {worst:.1e} dB over 100 pairs"));
    c.finish();
}

fn tree_bytes(root: &Path) -> BTreeMap<PathBuf, Vec<u8>> {
    let mut out = BTreeMap::new();
    let mut stack = vec![root.to_path_buf()];
    while let Some(dir) = stack.pop() {
        for e in fs::read_dir(&dir).unwrap() {
            let p = e.unwrap().path();
            if p.is_dir() {
                stack.push(p);
            } else {
                out.insert(p.strip_prefix(root).unwrap().to_path_buf(), fs::read(&p).unwrap());
            }
        }
    }
    out
}

#[test]
fn criterion_3_determinism() {
    let mut c = Criterion::new(3, "build determinism (3 tasks × 2 images, 256²)", 30.0);
    let tmp = tempfile::tempdir().unwrap();
    let gt = tmp.path().join("gt");
    fs::create_dir(&gt).unwrap();
    for i in 0..2 {
        gir_core::imaging::save_image(&smooth_image(256, 256, i), gt.join(format!("scene{i}.png"))).unwrap();
    }
    let bank: Vec<TaskSpec> =
        default_task_bank(0).into_iter().filter(|t| ["15", "39", "50"].contains(&t.task_id.as_str())).collect();
    let runs = [("a", None), ("b", None), ("threads8", Some(8))];
    let mut trees = Vec::new();
    for (name, threads) in runs {
        let out = tmp.path().join(name);
        let m = build_testset(&gt, &bank, &out, 77, BuildOptions { threads }).unwrap();
        c.check(m.entries.len() == 6, format!("{name}: {} entries", m.entries.len()));
        trees.push(tree_bytes(&out));
    }
    c.check(trees[0].len() == 7, format!("{} files per tree", trees[0].len()));
    c.check(trees[0] == trees[1], "rebuild byte-identical");
    c.check(trees[0] == trees[2], "8-thread build byte-identical");
    c.finish();
}

fn reflect101(i: isize, n: usize) -> usize {
    let n = n as isize;
    if n == 1 {
        return 0;
    }
    let period = 2 * (n - 1);
    let mut m = i.rem_euclid(period);
    if m >= n {
        m = period - m;
    }
    m as usize
}

#[test]
fn criterion_4_degradation_analytics() {
    let mut c = Criterion::new(4, "degradation analytic suite", 10.0);
    let mut rng = RngStream::from_seed(4);
    let img = random_image(32, 24, &mut rng);

    let haze = HazeParams { a: 0.9, beta: 1.8 };
    let zero_depth = DepthMap::constant(32, 24, 0.0);
    c.check(degrade_haze(&img, &zero_depth, &haze).unwrap() == img, "haze d≡0 identity");

    let half = ImageF32::filled(16, 16, [0.5; 3]);
    let out = degrade_haze(&half, &DepthMap::constant(16, 16, 1.0), &HazeParams { a: 1.0, beta: std::f64::consts::LN_2 }).unwrap();
    c.check(out.data().iter().all(|&v| v == 0.75), "haze(d≡1, β=ln2, A=1) on 0.5 → 0.75");

    let depth = gir_core::pipeline::synth_depth(32, 24, &mut RngStream::from_seed(1));
    let snow = SnowParams { a: 0.9, beta: 0.75 };
    let s = degrade_snow_with_density(&img, &depth, &snow, 0.0, &mut RngStream::from_seed(3)).unwrap();
    let h = degrade_haze(&img, &depth, &HazeParams { a: 0.9, beta: 0.75 }).unwrap();
    c.check(s == h, "zero-flake snow ≡ haze");

    let n0 = degrade_noise(&img, &NoiseParams { sigma255: 0.0 }, &mut RngStream::from_seed(5));
    c.check(n0 == img, "noise σ=0 identity");

    let obs: Vec<f64> = img.data().iter().map(|&v| v as f64).collect();
    let u = richardson_lucy_step(&obs, &obs, 32, 24, &Kernel2D::identity());
    let rl_err = u.iter().zip(&obs).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
    c.check(rl_err < 1e-12, format!("R–L δ-PSF identity (max |Δ| {rl_err:.1e})"));

    let mut worst_sum = 0.0f64;
    for ksize in (7..=23).step_by(2) {
        for sigma in [0.2, 1.0, 2.0, 3.0] {
            let k = gaussian_kernel(ksize, sigma).unwrap();
            worst_sum = worst_sum.max((k.weights().iter().sum::<f64>() - 1.0).abs());
        }
        for omega in [std::f64::consts::FRAC_PI_3, 1.2, 2.0, std::f64::consts::PI] {
            let k = sinc_kernel(ksize, omega).unwrap();
            worst_sum = worst_sum.max((k.weights().iter().sum::<f64>() - 1.0).abs());
        }
    }
    c.check(worst_sum < 1e-6, format!("kernel sums within {worst_sum:.1e} of 1"));

    let src = random_image(32, 32, &mut rng);
    let mut worst_conv = 0.0f64;
    for (ksize, weights) in [(3usize, None), (5, None), (7, Some(gaussian_kernel(7, 1.3).unwrap()))] {
        let k = weights.unwrap_or_else(|| {
            let w: Vec<f64> = (0..ksize * ksize).map(|_| rng.next_f64()).collect();
            let total: f64 = w.iter().sum();
            Kernel2D::new(ksize, w.into_iter().map(|v| v / total).collect()).unwrap()
        });
        let fast = convolve2d_unclamped(&src, &k);
        let r = (ksize / 2) as isize;
        for y in 0..32 {
            for x in 0..32 {
                for ch in 0..3 {
                    let mut acc = 0.0;
                    for j in 0..ksize {
                        for i in 0..ksize {
                            let sx = reflect101(x as isize + i as isize - r, 32);
                            let sy = reflect101(y as isize + j as isize - r, 32);
                            acc += k.at(j, i) * src.get(sx, sy, ch) as f64;
                        }
                    }
                    worst_conv = worst_conv.max((fast[(y * 32 + x) * 3 + ch] - acc).abs());
                }
            }
        }
    }
    c.check(worst_conv < 1e-6, format!("convolution vs brute force max |Δ| {worst_conv:.1e}"));
    c.finish();
}

/// Annex K base tables in natural (row-major) order.
const ANNEX_K_LUMA: [u16; 64] = [
    16, 11, 10, 16, 24, 40, 51, 61, 12, 12, 14, 19, 26, 58, 60, 55, 14, 13, 16, 24, 40, 57, 69, 56, 14, 17, 22, 29, 51,
    87, 80, 62, 18, 22, 37, 56, 68, 109, 103, 77, 24, 35, 55, 64, 81, 104, 113, 92, 49, 64, 78, 87, 103, 121, 120, 101,
    72, 92, 95, 98, 112, 100, 103, 99,
];
const ANNEX_K_CHROMA: [u16; 64] = [
    17, 18, 24, 47, 99, 99, 99, 99, 18, 21, 26, 66, 99, 99, 99, 99, 24, 26, 56, 99, 99, 99, 99, 99, 47, 66, 99, 99, 99,
    99, 99, 99, 99, 99, 99, 99, 99, 99, 99, 99, 99, 99, 99, 99, 99, 99, 99, 99, 99, 99, 99, 99, 99, 99, 99, 99, 99, 99,
    99, 99, 99, 99, 99, 99,
];

/// Zig-zag scan generated by walking anti-diagonals.
fn zigzag_order() -> Vec<usize> {
    let mut order = Vec::with_capacity(64);
    for s in 0..15usize {
        let cells: Vec<(usize, usize)> = (0..8).filter_map(|r| s.checked_sub(r).filter(|&c| c < 8).map(|c| (r, c))).collect();
        if s % 2 == 0 {
            order.extend(cells.iter().rev().map(|&(r, c)| r * 8 + c));
        } else {
            order.extend(cells.iter().map(|&(r, c)| r * 8 + c));
        }
    }
    order
}

#[test]
fn criterion_5_jpeg_codec() {
    let mut c = Criterion::new(5, "JPEG codec suite", 30.0);
    let mut rng = RngStream::from_seed(5);

    let mut worst = 0.0f64;
    for _ in 0..500 {
        let block: [f64; 64] = std::array::from_fn(|_| rng.uniform(-128.0, 127.0));
        let back = idct8x8(&fdct8x8(&block));
        worst = worst.max(block.iter().zip(&back).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max));
    }
    c.check(worst < 1e-4, format!("DCT round trip max |Δ| {worst:.1e}"));

    let blocks: Vec<[i32; 64]> = (0..400)
        .map(|_| {
            std::array::from_fn(|i| {
                let r = rng.next_f64();
                if i == 0 {
                    rng.int_inclusive(-1023, 1023) as i32
                } else if r < 0.7 {
                    0
                } else {
                    rng.int_inclusive(-1023, 1023) as i32
                }
            })
        })
        .collect();
    let decoded = entropy::decode_blocks(&entropy::encode_blocks(&blocks), blocks.len()).unwrap();
    c.check(decoded == blocks, "Huffman lossless on 400 random blocks");

    let q50 = quality_to_tables(50).unwrap();
    let zz = zigzag_order();
    let luma_ok = (0..64).all(|i| q50.luma[i] == ANNEX_K_LUMA[zz[i]]);
    let chroma_ok = (0..64).all(|i| q50.chroma[i] == ANNEX_K_CHROMA[zz[i]]);
    c.check(luma_ok && chroma_ok, "quality-50 tables equal Annex K");

    let corpus: Vec<ImageF32> = (0..10).map(|i| smooth_image(64 + 8 * i, 48 + 4 * i, 100 + i as u64)).collect();
    let mut means = Vec::new();
    for q in [30u8, 50, 70, 90, 95] {
        let total: f64 = corpus
            .iter()
            .map(|img| psnr(img, &jpeg::decode(&jpeg::encode(img, q).unwrap()).unwrap()).unwrap())
            .sum();
        means.push(total / corpus.len() as f64);
    }
    let monotone = means.windows(2).all(|w| w[1] >= w[0]);
    let shown: Vec<String> = means.iter().map(|m| format!("{m:.2}")).collect();
    c.check(monotone, format!("mean PSNR over q{{30,50,70,90,95}} = [{}] non-decreasing", shown.join(", ")));
    c.finish();
}

fn planted_three_blocks() -> (DenseMatrix, Vec<usize>) {
    let truth: Vec<usize> = (0..15).map(|i| i / 5).collect();
    let s = DenseMatrix::from_fn(15, |i, j| {
        if i == j {
            1.0
        } else if truth[i] == truth[j] {
            0.9
        } else {
            0.1
        }
    });
    (s, truth)
}

fn same_partition(a: &[usize], b: &[usize]) -> bool {
    (0..a.len()).all(|i| (0..a.len()).all(|j| (a[i] == a[j]) == (b[i] == b[j])))
}

#[test]
fn criterion_6_clustering() {
    let mut c = Criterion::new(6, "clustering suite", 10.0);
    let (s, truth) = planted_three_blocks();
    let mut recovered = 0;
    for seed in 0..100u64 {
        // shuffle the points too, so recovery is not an artefact of ordering
        let mut perm: Vec<usize> = (0..15).collect();
        let mut rng = RngStream::from_seed(seed);
        for i in (1..15).rev() {
            perm.swap(i, rng.below(i as u64 + 1) as usize);
        }
        let a = spectral_cluster(&s.permuted(&perm), 3, seed).unwrap();
        let want: Vec<usize> = perm.iter().map(|&p| truth[p]).collect();
        if same_partition(&a.labels, &want) {
            recovered += 1;
        }
    }
    c.check(recovered == 100, format!("planted 3-block recovery {recovered}/100"));

    let mut rng = RngStream::from_seed(6);
    let mut m = DenseMatrix::zeros(20);
    for i in 0..20 {
        for j in i..20 {
            let v = rng.uniform(-1.0, 1.0);
            m.set(i, j, v);
            m.set(j, i, v);
        }
    }
    let (vals, v) = jacobi_eigh(&m).unwrap();
    let lambda = DenseMatrix::from_fn(20, |i, j| if i == j { vals[i] } else { 0.0 });
    let recon = v.matmul(&lambda).matmul(&v.transpose());
    let err = DenseMatrix::from_fn(20, |i, j| recon.get(i, j) - m.get(i, j)).frobenius();
    c.check(err < 1e-7, format!("Jacobi 20×20 reconstruction {err:.1e}"));

    let chi = calinski_harabasz(&[vec![0.0], vec![1.0], vec![10.0], vec![11.0]], &[0, 0, 1, 1]).unwrap();
    c.check((chi - 200.0).abs() < 1e-9, format!("CHI [0,1,10,11] = {chi}"));
    c.finish();
}

#[test]
fn criterion_7_protocol_structure() {
    let mut c = Criterion::new(7, "protocol structure", 10.0);
    let bank = default_task_bank(0);
    c.check(bank.len() == 100, format!("{} tasks", bank.len()));
    let orders: Vec<usize> = bank.iter().map(|t| t.recipe().map_or(0, |r| r.order())).collect();
    let single = bank[..10]
        .iter()
        .all(|t| t.recipe().is_some_and(|r| r.order() == 1 && r.steps[0].params == representative_params(r.kinds()[0])));
    c.check(single, "tasks 1–10 single, representative params");
    let rep_ok = (2..=5).all(|k| orders[10..50].iter().filter(|&&o| o == k).count() == 10);
    c.check(rep_ok, "tasks 11–50: 10 per order 2…5");
    let rnd_ok = (1..=5).all(|k| orders[50..].iter().filter(|&&o| o == k).count() == 10);
    c.check(rnd_ok, "tasks 51–100: 10 per order 1…5");

    use DegradationKind::*;
    let expected: [(usize, &[DegradationKind]); 4] = [
        (11, &[Rain, Ringing]),
        (15, &[Haze, Noise]),
        (39, &[Blur, Blur, Blur, Blur]),
        (50, &[Haze, Compression, Damage, Compression, Noise]),
    ];
    for (row, kinds) in expected {
        let got = bank[row - 1].recipe().unwrap().kinds();
        c.check(got == kinds, format!("row {row} chain"));
    }

    let mut rng = RngStream::from_seed(7);
    let mut violations = 0;
    for i in 0..10_000 {
        let r = sample_recipe(1 + i % 5, &mut rng, true).unwrap();
        let kinds = r.kinds();
        let weather = |k: &DegradationKind| matches!(k, Rain | Haze | Snow);
        if kinds.iter().skip(1).any(weather) || kinds.iter().filter(|k| weather(k)).count() > 1 {
            violations += 1;
        }
    }
    c.check(violations == 0, format!("weather-first violations {violations}/10000"));
    c.finish();
}
