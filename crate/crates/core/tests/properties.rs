use proptest::prelude::*;

use uvrecon::fourier::{fft2, fft2_real, ifft2};
use uvrecon::losses::{contrastive_accuracy, contrastive_loss, idr_loss, mse};
use uvrecon::metrics::{evaluate, psnr, ssim};
use uvrecon::nets::{
    decode, encode, init_params, predict_cross, Architecture, DEC_IMG, DEC_VIS, ENC_IMG, ENC_VIS, PRED_I2V, PRED_V2I,
    RECON,
};
use uvrecon::numerics::{ComplexGrid, RealGrid, RngStream, Tape, Tensor};
use uvrecon::observation::{
    apply_mask, generate_dataset, sample_visibility, synth_sky, synth_uv_mask, ArrayConfig, DatasetConfig, SkyImage,
    SkyRecipe, UvMask,
};
use uvrecon::tokenizer::{band_tokenize, BandSpec};
use uvrecon::trainer::{run_idr, run_scm, split_indices, TrainConfig};

fn random_complex(h: usize, w: usize, seed: u64) -> ComplexGrid {
    let mut rng = RngStream::named(seed, "prop-grid", 0);
    let re = (0..h * w).map(|_| rng.normal()).collect();
    let im = (0..h * w).map(|_| rng.normal()).collect();
    ComplexGrid::new(h, w, re, im).unwrap()
}

fn random_real(h: usize, w: usize, seed: u64) -> RealGrid {
    let mut rng = RngStream::named(seed, "prop-image", 0);
    RealGrid::new(h, w, (0..h * w).map(|_| rng.uniform()).collect()).unwrap()
}

fn rel_diff(a: &ComplexGrid, b: &ComplexGrid) -> f64 {
    let scale = a.re.iter().chain(&a.im).map(|v| v.abs()).fold(1e-300, f64::max);
    a.re.iter()
        .zip(&b.re)
        .chain(a.im.iter().zip(&b.im))
        .map(|(x, y)| (x - y).abs())
        .fold(0.0, f64::max)
        / scale
}

fn side() -> impl Strategy<Value = usize> {
    prop::sample::select(vec![1usize, 2, 4, 8, 16, 32, 64])
}

fn unit_rows(n: usize, d: usize, rng: &mut RngStream) -> Tensor {
    let rows: Vec<Vec<f64>> = (0..n)
        .map(|_| {
            let v: Vec<f64> = (0..d).map(|_| rng.normal()).collect();
            let norm = v.iter().map(|x| x * x).sum::<f64>().sqrt();
            v.into_iter().map(|x| x / norm).collect()
        })
        .collect();
    Tensor::from_rows(&rows).unwrap()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn transform_round_trip_and_energy(h in side(), w in side(), seed in any::<u64>()) {
        let x = random_complex(h, w, seed);
        let f = fft2(&x).unwrap();
        prop_assert!(rel_diff(&x, &ifft2(&f).unwrap()) <= 1e-10);
        prop_assert!(rel_diff(&x, &fft2(&ifft2(&x).unwrap()).unwrap()) <= 1e-10);
        let (ex, ef) = (x.norm_sq(), f.norm_sq());
        prop_assert!((ex - ef).abs() <= 1e-10 * ex);
    }

    #[test]
    fn transform_is_linear(h in side(), w in side(), seed in any::<u64>(), a in -3.0f64..3.0, b in -3.0f64..3.0) {
        let x = random_complex(h, w, seed);
        let y = random_complex(h, w, seed ^ 0x5555);
        let mut combo = x.clone();
        for i in 0..combo.len() {
            combo.re[i] = a * x.re[i] + b * y.re[i];
            combo.im[i] = a * x.im[i] + b * y.im[i];
        }
        let (fx, fy) = (fft2(&x).unwrap(), fft2(&y).unwrap());
        let mut expected = fx.clone();
        for i in 0..expected.len() {
            expected.re[i] = a * fx.re[i] + b * fy.re[i];
            expected.im[i] = a * fx.im[i] + b * fy.im[i];
        }
        let got = fft2(&combo).unwrap();
        let scale = fx.norm_sq().sqrt().max(fy.norm_sq().sqrt()) * (a.abs() + b.abs()).max(1.0);
        let diff = got.re.iter().zip(&expected.re).chain(got.im.iter().zip(&expected.im))
            .map(|(p, q)| (p - q).abs()).fold(0.0, f64::max);
        prop_assert!(diff <= 1e-10 * scale);
    }

    #[test]
    fn real_input_gives_conjugate_symmetric_spectrum(h in side(), w in side(), seed in any::<u64>()) {
        let img = random_real(h, w, seed);
        let f = fft2_real(&img).unwrap();
        let scale = f.re.iter().chain(&f.im).map(|v| v.abs()).fold(1e-300, f64::max);
        for i in 0..f.len() {
            let j = f.mirror_index(i);
            prop_assert!((f.re[i] - f.re[j]).abs() <= 1e-10 * scale);
            prop_assert!((f.im[i] + f.im[j]).abs() <= 1e-10 * scale);
        }
    }

    #[test]
    fn masking_is_idempotent(seed in any::<u64>(), density in 0.0f64..1.0) {
        let g = random_complex(16, 16, seed);
        let mut rng = RngStream::named(seed, "prop-mask", 0);
        let mask = UvMask::new(16, 16, (0..256).map(|_| rng.uniform() < density).collect()).unwrap();
        let once = apply_mask(&g, &mask).unwrap();
        prop_assert_eq!(apply_mask(&once, &mask).unwrap(), once);
    }

    #[test]
    fn band_tokenization_accounts_for_every_sample(seed in any::<u64>(), density in 0.05f64..0.6, bands in 2usize..12, capacity in 1usize..8) {
        let mut rng = RngStream::named(seed, "prop-bands", 0);
        let mut mask = UvMask::new(16, 16, (0..256).map(|_| rng.uniform() < density).collect()).unwrap();
        mask.set(0, true);
        let sky = synth_sky(&SkyRecipe::default(), 16, &mut rng).unwrap();
        let (_, sparse) = sample_visibility(&sky, &mask, 0.0, &mut rng).unwrap();
        let spec = BandSpec::equal_area(16, 16, bands, capacity).unwrap();
        let (tok, layout) = band_tokenize(&sparse, &spec, &mut RngStream::new(seed, 9)).unwrap();
        let (tok2, layout2) = band_tokenize(&sparse, &spec, &mut RngStream::new(seed, 9)).unwrap();
        prop_assert_eq!(&tok.tokens, &tok2.tokens);
        prop_assert_eq!(&layout, &layout2);
        prop_assert_eq!(tok.tokens.shape(), [bands, 4 * capacity]);
        prop_assert_eq!(layout.sampled_per_band.iter().sum::<usize>(), mask.popcount());
        let kept: usize = layout.cells.iter().map(|c| c.len()).sum();
        prop_assert_eq!(kept + layout.discarded(), mask.popcount());
        let mut seen = vec![false; 256];
        for (b, cells) in layout.cells.iter().enumerate() {
            prop_assert!(cells.len() <= capacity);
            for &c in cells {
                prop_assert!(mask.is_set(c));
                prop_assert!(!seen[c]);
                prop_assert_eq!(spec.band_of(c), b);
                seen[c] = true;
            }
        }
    }

    #[test]
    fn contrastive_direction_symmetry_and_bounds(seed in any::<u64>(), n in 1usize..9, d in 2usize..6, tau in 0.05f64..2.0) {
        let mut rng = RngStream::named(seed, "prop-contrastive", 0);
        let a = unit_rows(n, d, &mut rng);
        let b = unit_rows(n, d, &mut rng);
        let ab = contrastive_loss(&a, &b, tau).unwrap();
        let ba = contrastive_loss(&b, &a, tau).unwrap();
        prop_assert_eq!(ab.l_v2i, ba.l_i2v);
        prop_assert_eq!(ab.l_i2v, ba.l_v2i);
        prop_assert!(ab.l_v2i >= 0.0 && ab.l_i2v >= 0.0 && ab.l_c >= 0.0);
        prop_assert!((0.0..=1.0).contains(&ab.acc));
    }

    #[test]
    fn contrastive_is_permutation_equivariant(seed in any::<u64>(), n in 2usize..9) {
        let mut rng = RngStream::named(seed, "prop-perm", 0);
        let a = unit_rows(n, 4, &mut rng);
        let b = unit_rows(n, 4, &mut rng);
        let mut perm: Vec<usize> = (0..n).collect();
        rng.shuffle(&mut perm);
        let base = contrastive_loss(&a, &b, 0.3).unwrap();
        let moved = contrastive_loss(&a.gather_rows(&perm).unwrap(), &b.gather_rows(&perm).unwrap(), 0.3).unwrap();
        prop_assert!((base.l_c - moved.l_c).abs() <= 1e-12 * base.l_c.max(1.0));
        prop_assert_eq!(base.acc, moved.acc);
    }

    #[test]
    fn accuracy_ignores_positive_scaling(seed in any::<u64>(), n in 1usize..9, k in 0.01f64..100.0) {
        let mut rng = RngStream::named(seed, "prop-acc", 0);
        let sim = Tensor::new(n, n, (0..n * n).map(|_| rng.normal()).collect()).unwrap();
        prop_assert_eq!(contrastive_accuracy(&sim).unwrap(), contrastive_accuracy(&sim.scale(k)).unwrap());
    }

    #[test]
    fn weighted_loss_scales_cubically(seed in any::<u64>(), t in 0.1f64..10.0) {
        let truth = random_complex(8, 8, seed);
        let delta = random_complex(8, 8, seed ^ 0xabc);
        let shifted = |s: f64| {
            let mut p = truth.clone();
            for i in 0..p.len() {
                p.re[i] += s * delta.re[i];
                p.im[i] += s * delta.im[i];
            }
            p
        };
        let base = idr_loss(&shifted(1.0), &truth).unwrap();
        let scaled = idr_loss(&shifted(t), &truth).unwrap();
        prop_assert!(base > 0.0);
        prop_assert!((scaled - t.powi(3) * base).abs() <= 1e-12 * scaled.max(1e-300) * 10.0);
    }

    #[test]
    fn losses_are_non_negative(seed in any::<u64>()) {
        let a = random_complex(4, 4, seed);
        let b = random_complex(4, 4, seed ^ 1);
        prop_assert!(idr_loss(&a, &b).unwrap() >= 0.0);
        prop_assert!(mse(&a.re, &b.im).unwrap() >= 0.0);
    }

    #[test]
    fn ssim_is_symmetric_and_pure(seed in any::<u64>()) {
        let x = random_real(16, 16, seed);
        let y = random_real(16, 16, seed ^ 7);
        let s = ssim(&x, &y).unwrap();
        prop_assert!((s - ssim(&y, &x).unwrap()).abs() <= 1e-12);
        prop_assert_eq!(s, ssim(&x, &y).unwrap());
        prop_assert_eq!(psnr(&x, &y).unwrap(), psnr(&x, &y).unwrap());
    }

    #[test]
    fn networks_respect_shape_contract(n_side in 1usize..4, d in 1usize..9, hidden in 1usize..9, rows_mult in 1usize..3, seed in any::<u64>()) {
        let patch = 4;
        let size = 4 * n_side.next_power_of_two();
        let arch = Architecture {
            height: size,
            width: size,
            n_tok: (size / patch) * (size / patch),
            patch,
            band_k: 3,
            d_model: d,
            hidden,
            recon_hidden: hidden,
        };
        let params = init_params(&arch, seed).unwrap();
        let n = arch.n_tok;
        let mut tape = Tape::new();
        let v = tape.constant(Tensor::zeros(rows_mult * n, arch.vis_width())).unwrap();
        let i = tape.constant(Tensor::zeros(rows_mult * n, arch.img_width())).unwrap();
        let xi = encode(&mut tape, &params, &arch, ENC_VIS, v).unwrap();
        let eta = encode(&mut tape, &params, &arch, ENC_IMG, i).unwrap();
        prop_assert_eq!(tape.value(xi).shape(), [rows_mult * n, d]);
        prop_assert_eq!(tape.value(eta).shape(), [rows_mult * n, d]);
        let vis_idx: Vec<usize> = (0..n).filter(|k| k % 2 == 0).collect();
        let hidden_idx: Vec<usize> = (0..n).filter(|k| k % 2 == 1).collect();
        if !hidden_idx.is_empty() {
            let xi0 = tape.gather_rows(xi, &vis_idx).unwrap();
            let pred = predict_cross(&mut tape, &params, PRED_V2I, xi0, &hidden_idx).unwrap();
            prop_assert_eq!(tape.value(pred).shape(), [hidden_idx.len(), d]);
            let eta0 = tape.gather_rows(eta, &hidden_idx).unwrap();
            let pred = predict_cross(&mut tape, &params, PRED_I2V, eta0, &vis_idx).unwrap();
            prop_assert_eq!(tape.value(pred).shape(), [vis_idx.len(), d]);
        }
        let dv = decode(&mut tape, &params, DEC_VIS, xi).unwrap();
        let di = decode(&mut tape, &params, DEC_IMG, eta).unwrap();
        prop_assert_eq!(tape.value(dv).shape(), [rows_mult * n, arch.vis_width()]);
        prop_assert_eq!(tape.value(di).shape(), [rows_mult * n, arch.img_width()]);
    }
}

#[test]
fn backward_is_linear_in_the_loss() {
    let arch = Architecture {
        height: 8,
        width: 8,
        n_tok: 4,
        patch: 4,
        band_k: 2,
        d_model: 5,
        hidden: 6,
        recon_hidden: 3,
    };
    let params = init_params(&arch, 21).unwrap();
    let mut rng = RngStream::new(21, 1);
    let input = Tensor::new(8, arch.vis_width(), (0..8 * arch.vis_width()).map(|_| rng.normal()).collect()).unwrap();
    let (a, b) = (0.7, -2.3);
    // which: 0 -> L1, 1 -> L2, 2 -> a L1 + b L2
    let grads = |which: u8| {
        let mut tape = Tape::new();
        let x = tape.constant(input.clone()).unwrap();
        let z = encode(&mut tape, &params, &arch, ENC_VIS, x).unwrap();
        let out = decode(&mut tape, &params, DEC_VIS, z).unwrap();
        let l1 = tape.sum(out).unwrap();
        let sq = tape.mul(out, out).unwrap();
        let l2 = tape.mean(sq).unwrap();
        let loss = match which {
            0 => l1,
            1 => l2,
            _ => {
                let s1 = tape.scale(l1, a).unwrap();
                let s2 = tape.scale(l2, b).unwrap();
                tape.add(s1, s2).unwrap()
            }
        };
        tape.backward(loss, &params).unwrap()
    };
    let (g1, g2, g) = (grads(0), grads(1), grads(2));
    let mut checked = 0;
    for s in 0..g.sections.len() {
        for i in 0..g.sections[s].len() {
            let want = a * g1.sections[s][i] + b * g2.sections[s][i];
            let got = g.sections[s][i];
            assert!((got - want).abs() <= 1e-12 * want.abs().max(1.0), "section {s} entry {i}: {got} vs {want}");
            checked += 1;
        }
    }
    assert!(checked > 100);
}

#[test]
fn hermitian_symmetry_of_dense_visibilities() {
    for k in 0..10 {
        let mut rng = RngStream::named(5, "prop-hermitian", k);
        let sky = synth_sky(&SkyRecipe::default(), 32, &mut rng).unwrap();
        let mask = UvMask::full(32, 32);
        let (dense, _) = sample_visibility(&sky, &mask, 0.0, &mut rng).unwrap();
        let scale = dense.re.iter().chain(&dense.im).map(|v| v.abs()).fold(0.0, f64::max);
        for i in 0..dense.len() {
            let j = dense.mirror_index(i);
            assert!((dense.re[i] - dense.re[j]).abs() <= 1e-10 * scale);
            assert!((dense.im[i] + dense.im[j]).abs() <= 1e-10 * scale);
        }
    }
}

#[test]
fn noise_has_requested_standard_deviation() {
    let sigma = 0.03;
    let sky = SkyImage::new(RealGrid::new(128, 128, vec![0.5; 128 * 128]).unwrap()).unwrap();
    let mask = UvMask::full(128, 128);
    let (dense, sparse) = sample_visibility(&sky, &mask, sigma, &mut RngStream::named(1, "prop-noise", 0)).unwrap();
    let std = |xs: Vec<f64>| {
        let m = xs.iter().sum::<f64>() / xs.len() as f64;
        (xs.iter().map(|x| (x - m).powi(2)).sum::<f64>() / (xs.len() - 1) as f64).sqrt()
    };
    let g = sparse.grid();
    let re = std((0..g.len()).map(|i| g.re[i] - dense.re[i]).collect());
    let im = std((0..g.len()).map(|i| g.im[i] - dense.im[i]).collect());
    for s in [re, im] {
        assert!((s - sigma).abs() <= 0.05 * sigma, "empirical {s} vs {sigma}");
    }
}

#[test]
fn psnr_falls_as_noise_grows() {
    let clean = random_real(32, 32, 3);
    let levels = [0.01, 0.03, 0.1, 0.3];
    for seed in 0..5 {
        let mut rng = RngStream::named(seed, "prop-psnr", 0);
        let noise: Vec<f64> = (0..clean.data.len()).map(|_| rng.normal()).collect();
        let values: Vec<f64> = levels
            .iter()
            .map(|&s| {
                let noisy = RealGrid::new(32, 32, clean.data.iter().zip(&noise).map(|(c, n)| c + s * n).collect()).unwrap();
                psnr(&clean, &noisy).unwrap()
            })
            .collect();
        assert!(values.windows(2).all(|w| w[0] > w[1]), "{values:?}");
    }
}

#[test]
fn canonical_sampling_pattern_is_frozen() {
    let mask = synth_uv_mask(&ArrayConfig::default(), 32).unwrap();
    assert_eq!(mask.popcount(), 135);
    assert_eq!(mask.coverage(), 0.1318359375);
    assert!(mask.is_symmetric());
}

fn small_run() -> (uvrecon::observation::Dataset, TrainConfig) {
    let mut dc = DatasetConfig::canonical();
    dc.count = 12;
    dc.size = 16;
    let ds = generate_dataset(&dc).unwrap();
    let mut cfg = TrainConfig::default();
    cfg.scm.steps = 2;
    cfg.scm.batch_size = 4;
    cfg.idr.steps = 2;
    cfg.idr.batch_size = 2;
    cfg.model.d_model = 6;
    cfg.model.hidden = 6;
    cfg.model.recon_hidden = 4;
    (ds, cfg)
}

#[test]
fn fine_tuning_touches_only_encoder_and_reconstruction() {
    let (ds, cfg) = small_run();
    let scm = run_scm(&cfg, &ds).unwrap();
    let idr = run_idr(&cfg, &ds, Some(&scm.checkpoint)).unwrap();
    let names: Vec<&str> = idr.checkpoint.params.sections().iter().map(|s| s.name.as_str()).collect();
    assert_eq!(names.len(), 2);
    assert!(names.contains(&ENC_VIS) && names.contains(&RECON));
    // Pretraining leaves the reconstruction network at its initial values.
    let init = init_params(&scm.checkpoint.arch, cfg.seed).unwrap();
    assert_eq!(scm.checkpoint.params.section(RECON), init.section(RECON));
}

#[test]
fn every_ablation_is_a_config_flag() {
    let (ds, cfg) = small_run();
    let test = split_indices(ds.len(), cfg.seed).test;
    let no_task1 = TrainConfig {
        task1_contrastive: false,
        ..cfg.clone()
    };
    let no_task2 = TrainConfig {
        task2_masking: false,
        ..cfg.clone()
    };
    let a = run_scm(&no_task1, &ds).unwrap();
    let b = run_scm(&no_task2, &ds).unwrap();
    assert_ne!(a.checkpoint.params, b.checkpoint.params);
    let no_scm = TrainConfig {
        scm_stage: false,
        ..cfg.clone()
    };
    run_idr(&no_scm, &ds, None).unwrap();
    // No fine-tuning: the pretrained checkpoint is scored on the dirty image.
    let full = run_scm(&cfg, &ds).unwrap();
    let report = evaluate(&full.checkpoint, &ds, &test).unwrap();
    assert!(!report.reconstructed);
    for r in &report.rows {
        assert_eq!((r.dirty_psnr, r.dirty_ssim), (r.recon_psnr, r.recon_ssim));
    }
}
