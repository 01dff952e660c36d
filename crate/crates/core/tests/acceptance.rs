//! End-to-end acceptance suite. Each test covers one numbered criterion and
//! prints a single PASS line with the measured values. Tolerances are pinned;
//! every expected number was frozen from an independent oracle (brute-force
//! DFT, per-window SSIM, finite differences) or a seeded reference run.

use std::collections::HashMap;
use std::f64::consts::PI;
use std::path::Path;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use mcmr::data::{self, generate_phantom_pair, SlicePair};
use mcmr::fourier::{fft2_centered, ifft2_centered, zero_filled_recon};
use mcmr::masks::{
    acceleration, equidistant_mask, gaussian_mask, lowres_mask, mask_from_probabilities,
};
use mcmr::metrics::{mae, psnr, ssim};
use mcmr::sampler::{
    acquire_soft, acquire_soft_backward, acquire_soft_cached, chain_probs_to_logits, soft_mask,
    SamplerParams,
};
use mcmr::train::{evaluate, train_stage1, train_stage2, TrainConfig};
use mcmr::{unet, ImageSlice};

fn random_image(h: usize, w: usize, seed: u64) -> ImageSlice {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    ImageSlice::new(h, w, (0..h * w).map(|_| rng.random::<f64>()).collect()).unwrap()
}

/// Brute-force centered orthonormal 2D DFT, written independently of the
/// library's FFT path.
fn dft2_centered_oracle(img: &ImageSlice) -> (Vec<f64>, Vec<f64>) {
    let (h, w) = (img.height(), img.width());
    let (ch, cw) = (h / 2, w / 2);
    let norm = 1.0 / ((h * w) as f64).sqrt();
    let mut re = vec![0.0; h * w];
    let mut im = vec![0.0; h * w];
    for ky in 0..h {
        for kx in 0..w {
            let (mut sr, mut si) = (0.0, 0.0);
            for y in 0..h {
                for x in 0..w {
                    let phase = -2.0 * PI
                        * ((ky as f64 - ch as f64) * y as f64 / h as f64
                            + (kx as f64 - cw as f64) * x as f64 / w as f64);
                    let v = img.get(y, x);
                    sr += v * phase.cos();
                    si += v * phase.sin();
                }
            }
            re[ky * w + kx] = sr * norm;
            im[ky * w + kx] = si * norm;
        }
    }
    (re, im)
}

#[test]
fn criterion_1_fft_contracts() {
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let mut worst_round_trip = 0.0f64;
    let mut worst_parseval = 0.0f64;
    for case in 0..100 {
        let h = rng.random_range(2..=64);
        let w = rng.random_range(2..=64);
        let img = random_image(h, w, 1000 + case);
        let k = fft2_centered(&img).unwrap();
        let back = ifft2_centered(&k).unwrap();
        for (i, &p) in img.pixels().iter().enumerate() {
            worst_round_trip = worst_round_trip
                .max((back.real[i] - p).abs())
                .max(back.imag[i].abs());
        }
        let image_energy: f64 = img.pixels().iter().map(|v| v * v).sum();
        worst_parseval = worst_parseval.max((k.energy() - image_energy).abs() / image_energy);
    }
    assert!(worst_round_trip < 1e-6, "round trip {worst_round_trip}");
    assert!(worst_parseval < 1e-6, "parseval {worst_parseval}");

    let mut worst_dft = 0.0f64;
    for seed in 0..5 {
        let img = random_image(4, 4, 2000 + seed);
        let k = fft2_centered(&img).unwrap();
        let (re, im) = dft2_centered_oracle(&img);
        for i in 0..16 {
            worst_dft = worst_dft
                .max((k.real_plane()[i] - re[i]).abs())
                .max((k.imag_plane()[i] - im[i]).abs());
        }
    }
    assert!(worst_dft < 1e-9, "dft oracle {worst_dft}");
    println!(
        "criterion 1: PASS — round-trip {worst_round_trip:.2e}, parseval {worst_parseval:.2e}, 4x4 DFT {worst_dft:.2e}"
    );
}

#[test]
fn criterion_2_mask_invariants() {
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    let mut cases = 0;
    for _ in 0..200 {
        let n = rng.random_range(1..=256);
        let budget = rng.random_range(1..=n);
        let sigma = n as f64 / 6.0 + 0.5;
        let probs: Vec<f64> = (0..n).map(|_| rng.random::<f64>()).collect();
        let masks = [
            lowres_mask(n, budget).unwrap(),
            equidistant_mask(n, budget, 2.0 / 3.0).unwrap(),
            gaussian_mask(n, budget, sigma, rng.random()).unwrap(),
            mask_from_probabilities(&probs, budget).unwrap(),
        ];
        for mask in &masks {
            assert_eq!(mask.indices().len(), budget, "n={n} budget={budget}");
            assert!(mask.indices().windows(2).all(|p| p[0] < p[1]), "distinct sorted");
            assert!(mask.indices().iter().all(|&i| i < n), "in range");
            cases += 1;
        }
    }

    let lowres = lowres_mask(240, 22).unwrap();
    let expected: Vec<usize> = (109..=130).collect();
    assert_eq!(lowres.indices(), &expected[..], "lowres(240,22) span");

    let r = acceleration(240, 22).unwrap();
    assert!((r - 240.0 / 22.0).abs() < 1e-9, "acceleration {r}");
    assert!((r * 1000.0).round() / 1000.0 == 10.909, "acceleration rounds to 10.909");
    println!(
        "criterion 2: PASS — {cases} fuzz cases, lowres(240,22) = 109..=130, R = {r:.6}"
    );
}

#[test]
fn criterion_3_gradient_correctness() {
    // Sampler logits through the soft-masked acquisition, MAE objective.
    let mut worst_sampler = 0.0f64;
    for case in 0..20 {
        let seed = 300 + case;
        let img = random_image(8, 8, seed);
        let target = random_image(8, 8, seed + 50);
        let mut params = SamplerParams::init(8, 5.0, 0.0, seed).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(seed + 100);
        for w in &mut params.logits {
            *w += rng.random_range(-0.3..0.3);
        }

        let loss_of = |p: &SamplerParams| -> f64 {
            let recon = acquire_soft(&img, &soft_mask(p)).unwrap();
            mae(&recon, &target).unwrap()
        };

        let mask = soft_mask(&params);
        let (recon, cache) = acquire_soft_cached(&img, &mask).unwrap();
        let n_px = (recon.height() * recon.width()) as f64;
        let upstream: Vec<f64> = recon
            .pixels()
            .iter()
            .zip(target.pixels())
            .map(|(&p, &t)| (p - t).signum() / n_px)
            .collect();
        let grad_probs = acquire_soft_backward(&cache, &upstream).unwrap();
        let analytic = chain_probs_to_logits(&params, &mask, &grad_probs);

        let step = 1e-5;
        let mut num = 0.0;
        let mut den = 0.0;
        for i in 0..8 {
            let mut plus = params.clone();
            plus.logits[i] += step;
            let mut minus = params.clone();
            minus.logits[i] -= step;
            let fd = (loss_of(&plus) - loss_of(&minus)) / (2.0 * step);
            num += (analytic[i] - fd) * (analytic[i] - fd);
            den += fd * fd;
        }
        let rel = (num / den.max(1e-24)).sqrt();
        assert!(rel < 1e-3, "sampler case {case}: rel {rel}");
        worst_sampler = worst_sampler.max(rel);
    }

    // U-net parameters under the MAE objective.
    let mut worst_net = 0.0f64;
    for case in 0..20 {
        let seed = 400 + case;
        let cfg = unet::NetConfig {
            depth: 2,
            base_channels: 4,
            in_channels: 2,
            seed,
            residual: false,
        };
        let weights = unet::init(&cfg).unwrap();
        let zf = random_image(16, 16, seed + 30);
        let reference = random_image(16, 16, seed + 60);
        let target = random_image(16, 16, seed + 90);
        let input = unet::stack_channels(&[&zf, &reference]).unwrap();

        let loss_of = |w: &unet::NetWeights| -> f64 {
            mae(&unet::forward(w, &input).unwrap(), &target).unwrap()
        };

        let (out, cache) = unet::forward_cached(&weights, &input).unwrap();
        let n_px = 256.0;
        let mut upstream = out.clone();
        for (gv, &t) in upstream.iter_mut().zip(target.pixels()) {
            *gv = (*gv - t).signum() / n_px;
        }
        let (grads, _) = unet::backward(&weights, &cache, &upstream).unwrap();

        let mut rng = ChaCha8Rng::seed_from_u64(seed + 7);
        let step = 1e-5;
        for _ in 0..5 {
            let ti = rng.random_range(0..weights.tensors.len());
            let pi = rng.random_range(0..weights.tensors[ti].len());
            let mut plus = weights.clone();
            plus.tensors[ti].data[pi] += step;
            let mut minus = weights.clone();
            minus.tensors[ti].data[pi] -= step;
            let fd = (loss_of(&plus) - loss_of(&minus)) / (2.0 * step);
            let a = grads[ti].data[pi];
            let rel = (a - fd).abs() / fd.abs().max(1e-6);
            assert!(rel < 1e-3, "net case {case} tensor {ti} param {pi}: {a} vs {fd}");
            worst_net = worst_net.max(rel);
        }
    }
    println!(
        "criterion 3: PASS — worst rel err sampler {worst_sampler:.2e}, u-net {worst_net:.2e}"
    );
}

/// Direct per-window SSIM, written independently of the library's separable
/// filtering implementation.
fn ssim_window_oracle(x: &ImageSlice, y: &ImageSlice, data_range: f64) -> f64 {
    let (h, w) = (x.height(), x.width());
    let win = 11usize;
    let sigma = 1.5f64;
    let c = win / 2;
    let mut kernel = [0.0f64; 11];
    for (i, k) in kernel.iter_mut().enumerate() {
        let d = i as f64 - c as f64;
        *k = (-d * d / (2.0 * sigma * sigma)).exp();
    }
    let s: f64 = kernel.iter().sum();
    for k in &mut kernel {
        *k /= s;
    }
    let c1 = (0.01 * data_range) * (0.01 * data_range);
    let c2 = (0.03 * data_range) * (0.03 * data_range);
    let mut total = 0.0;
    let mut count = 0usize;
    for wy in 0..=(h - win) {
        for wx in 0..=(w - win) {
            let (mut mx, mut my) = (0.0, 0.0);
            for dy in 0..win {
                for dx in 0..win {
                    let wgt = kernel[dy] * kernel[dx];
                    mx += wgt * x.get(wy + dy, wx + dx);
                    my += wgt * y.get(wy + dy, wx + dx);
                }
            }
            let (mut vx, mut vy, mut cov) = (0.0, 0.0, 0.0);
            for dy in 0..win {
                for dx in 0..win {
                    let wgt = kernel[dy] * kernel[dx];
                    let ex = x.get(wy + dy, wx + dx) - mx;
                    let ey = y.get(wy + dy, wx + dx) - my;
                    vx += wgt * ex * ex;
                    vy += wgt * ey * ey;
                    cov += wgt * ex * ey;
                }
            }
            total += ((2.0 * mx * my + c1) * (2.0 * cov + c2))
                / ((mx * mx + my * my + c1) * (vx + vy + c2));
            count += 1;
        }
    }
    total / count as f64
}

#[test]
fn criterion_4_metric_oracles() {
    // Closed-form PSNR: uniform |diff| d on range 1 gives -20·log10(d).
    let base = random_image(16, 16, 4);
    for (d, expected) in [(0.01, 40.0), (0.1, 20.0)] {
        let shifted =
            ImageSlice::new(16, 16, base.pixels().iter().map(|v| v + d).collect()).unwrap();
        let p = psnr(&base, &shifted, 1.0).unwrap();
        assert!((p - expected).abs() < 1e-9, "psnr {p} vs {expected}");
    }

    let x = random_image(16, 16, 41);
    assert_eq!(ssim(&x, &x, 1.0).unwrap(), 1.0, "ssim(x,x)");

    let mut worst = 0.0f64;
    for seed in 0..10 {
        let a = random_image(16, 16, 500 + seed);
        let b = random_image(16, 16, 600 + seed);
        let lib = ssim(&a, &b, 1.0).unwrap();
        let oracle = ssim_window_oracle(&a, &b, 1.0);
        worst = worst.max((lib - oracle).abs());
    }
    assert!(worst < 1e-9, "ssim oracle {worst}");
    println!("criterion 4: PASS — psnr closed-form exact, ssim(x,x)=1, oracle gap {worst:.2e}");
}

/// Rebuilds the desk-scale dataset exactly as `mcmr synth --pairs 300
/// --size 64 --seed 0` does.
fn desk_dataset() -> (Vec<SlicePair>, Vec<SlicePair>, Vec<SlicePair>) {
    let pairs: Vec<SlicePair> =
        (0..300).map(|i| generate_phantom_pair(64, 64, i).unwrap()).collect();
    let ids: Vec<String> = pairs.iter().map(|p| p.id.clone()).collect();
    let (train_ids, val_ids, test_ids) =
        data::split(&ids, (0.6667, 0.1333, 0.2), 0).unwrap();
    let mut by_id: HashMap<String, SlicePair> =
        pairs.into_iter().map(|p| (p.id.clone(), p)).collect();
    let take = |ids: &[String], by_id: &mut HashMap<String, SlicePair>| {
        ids.iter().map(|id| by_id.remove(id).unwrap()).collect::<Vec<_>>()
    };
    let train = take(&train_ids, &mut by_id);
    let val = take(&val_ids, &mut by_id);
    let test = take(&test_ids, &mut by_id);
    (train, val, test)
}

#[test]
fn criterion_5_pipeline_identity() {
    // Full mask leaves k-space untouched: the zero-filled recon is exact.
    let full = vec![1.0; 64];
    let mut worst_zf = f64::INFINITY;
    for seed in 0..10 {
        let pair = generate_phantom_pair(64, 64, 10_000 + seed).unwrap();
        let zf = zero_filled_recon(&pair.t2, &full).unwrap();
        worst_zf = worst_zf.min(psnr(&zf, &pair.t2, 1.0).unwrap());
    }
    assert!(worst_zf >= 100.0, "zero-filled PSNR {worst_zf}");

    // Identity-capable (residual) training with the full mask converges far
    // below the pinned bound; direct-output training reaches ~0.014 in 500
    // steps and is deliberately not used here.
    let (train, val, test) = desk_dataset();
    let mask = lowres_mask(64, 64).unwrap();
    let cfg = TrainConfig { budget: 64, residual: true, ..TrainConfig::default() };
    let (net, log) = train_stage2(&train, &val, &mask, &cfg).unwrap();
    let val_mae = log.last_val_mae().unwrap();
    assert!(val_mae < 0.01, "full-mask val MAE {val_mae}");

    let report = evaluate(&net, &mask, &test, true, "full").unwrap();
    assert!(report.mean_psnr_db >= 40.0, "identity test PSNR {}", report.mean_psnr_db);
    println!(
        "criterion 5: PASS — zero-filled PSNR {worst_zf:.1} dB, full-mask val MAE {val_mae:.2e}, test PSNR {:.1} dB",
        report.mean_psnr_db
    );
}

#[test]
fn criterion_6_learning_trends() {
    let (train, val, test) = desk_dataset();
    let cfg = TrainConfig::default();

    let (_, net_learned_s1, log1) = train_stage1(&train, &val, &cfg).unwrap();
    let _ = net_learned_s1;
    let first = log1.first_loss().unwrap();
    let last = log1.last_loss().unwrap();
    assert!(last <= 0.5 * first, "stage-1 loss {first} -> {last}");

    let learned = log1.final_mask.clone().unwrap();
    let equi = equidistant_mask(64, 6, 2.0 / 3.0).unwrap();

    let (net_learned, _) = train_stage2(&train, &val, &learned, &cfg).unwrap();
    let (net_equi, _) = train_stage2(&train, &val, &equi, &cfg).unwrap();
    let learned_report = evaluate(&net_learned, &learned, &test, true, "learned").unwrap();
    let equi_report = evaluate(&net_equi, &equi, &test, true, "equidistant").unwrap();
    assert!(
        learned_report.mean_psnr_db >= equi_report.mean_psnr_db,
        "learned {} dB < equidistant {} dB",
        learned_report.mean_psnr_db,
        equi_report.mean_psnr_db
    );

    let single_cfg = TrainConfig { multi_contrast: false, ..cfg };
    let (net_single, _) = train_stage2(&train, &val, &learned, &single_cfg).unwrap();
    let single_report = evaluate(&net_single, &learned, &test, false, "learned").unwrap();
    assert!(
        learned_report.mean_psnr_db >= single_report.mean_psnr_db,
        "multi {} dB < single {} dB",
        learned_report.mean_psnr_db,
        single_report.mean_psnr_db
    );

    println!(
        "criterion 6: PASS — loss {first:.4}->{last:.4}, learned {:.2} dB ≥ equidistant {:.2} dB, multi {:.2} dB ≥ single {:.2} dB",
        learned_report.mean_psnr_db,
        equi_report.mean_psnr_db,
        learned_report.mean_psnr_db,
        single_report.mean_psnr_db
    );
}

#[test]
fn criterion_7_scale_documentation() {
    let root = Path::new(env!("CARGO_MANIFEST_DIR")).join("../..");
    let cfg = mcmr::cli::RunConfig::load(&root.join("configs/full_scale.json")).unwrap();
    assert_eq!(cfg.budget, Some(22));
    assert_eq!(cfg.depth, Some(4));
    assert_eq!(cfg.base_channels, Some(64));
    assert!(cfg.steps.unwrap() >= 10_000);

    let readme = std::fs::read_to_string(root.join("README.md")).unwrap();
    assert!(readme.contains("configs/full_scale.json"), "README links the full-scale config");
    assert!(readme.contains("35 dB"), "README states the full-scale quality target");
    assert!(
        readme.contains("not reproducible"),
        "README documents that full-scale results need real data"
    );
    println!("criterion 7: PASS — full-scale config parses; README documents the scale gap");
}

#[test]
fn criterion_8_reproducibility() {
    let run_pipeline = |dir: &Path| {
        let d = |s: &str| dir.join(s).to_string_lossy().into_owned();
        let steps = "60";
        let calls: Vec<Vec<String>> = vec![
            vec!["synth".into(), "--out".into(), d("data"), "--pairs".into(), "30".into(), "--size".into(), "64".into(), "--seed".into(), "7".into()],
            vec!["train-acq".into(), "--data".into(), d("data"), "--out".into(), d("acq"), "--steps".into(), steps.into(), "--budget".into(), "6".into()],
            vec!["extract-mask".into(), "--sampler".into(), d("acq/sampler"), "--budget".into(), "6".into(), "--out".into(), d("mask.json")],
            vec!["train-recon".into(), "--data".into(), d("data"), "--mask".into(), d("mask.json"), "--out".into(), d("recon"), "--steps".into(), steps.into(), "--budget".into(), "6".into()],
            vec!["eval".into(), "--data".into(), d("data"), "--mask".into(), d("mask.json"), "--weights".into(), d("recon/recon"), "--out".into(), d("eval")],
        ];
        for call in calls {
            let mut argv = vec!["mcmr".to_string()];
            argv.extend(call);
            assert_eq!(mcmr::cli::run(argv.clone()), 0, "failed: {argv:?}");
        }
    };

    let a = tempfile::tempdir().unwrap();
    let b = tempfile::tempdir().unwrap();
    run_pipeline(a.path());
    run_pipeline(b.path());

    let artifacts = [
        "acq/sampler.json",
        "acq/sampler.blob",
        "acq/recon_stage1.json",
        "acq/recon_stage1.blob",
        "acq/learned_mask.json",
        "acq/log_stage1.csv",
        "mask.json",
        "recon/recon.json",
        "recon/recon.blob",
        "recon/log_stage2.csv",
        "eval/report.csv",
        "eval/report.json",
    ];
    for rel in artifacts {
        let bytes_a = std::fs::read(a.path().join(rel)).unwrap();
        let bytes_b = std::fs::read(b.path().join(rel)).unwrap();
        assert_eq!(bytes_a, bytes_b, "artifact differs between runs: {rel}");
    }
    println!("criterion 8: PASS — {} artifacts byte-identical across two runs", artifacts.len());
}
