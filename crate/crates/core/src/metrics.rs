//! Image quality metrics, held-out evaluation and embedding export.

use std::fs;
use std::io::Write as _;
use std::path::Path;

use crate::error::{Error, Result};
use crate::fourier::ifft2;
use crate::losses::scm_loss;
use crate::nets::{self, encode, require_sections, Checkpoint, DEC_IMG, DEC_VIS, ENC_IMG, ENC_VIS, PRED_I2V, PRED_V2I};
use crate::numerics::{RealGrid, RngStream, Tape, Tensor};
use crate::observation::{dirty_image, Dataset};
use crate::tokenizer::{band_tokenize, patchify};
use crate::trainer::{fmt_f64, subsample_stream, scm_forward, TrainConfig};

pub const SSIM_WINDOW: usize = 11;
pub const SSIM_SIGMA: f64 = 1.5;
pub const SSIM_C1: f64 = 0.01 * 0.01;
pub const SSIM_C2: f64 = 0.03 * 0.03;

/// Peak signal-to-noise ratio in dB for images with unit dynamic range;
/// `+inf` for identical images.
pub fn psnr(reference: &RealGrid, test: &RealGrid) -> Result<f64> {
    if !reference.same_shape(test) {
        return Err(Error::shape(
            "psnr",
            format!(
                "{}x{} against {}x{}",
                reference.height, reference.width, test.height, test.width
            ),
        ));
    }
    let mse = crate::losses::mse(&reference.data, &test.data)?;
    if mse == 0.0 {
        return Ok(f64::INFINITY);
    }
    Ok(10.0 * (1.0 / mse).log10())
}

/// Normalized 1-D Gaussian taps; the 2-D window is their outer product.
pub fn gaussian_taps(size: usize, sigma: f64) -> Vec<f64> {
    let c = (size as f64 - 1.0) / 2.0;
    let raw: Vec<f64> = (0..size)
        .map(|i| (-((i as f64 - c).powi(2)) / (2.0 * sigma * sigma)).exp())
        .collect();
    let s: f64 = raw.iter().sum();
    raw.into_iter().map(|v| v / s).collect()
}

/// Valid-mode separable filtering: `h x w -> (h-k+1) x (w-k+1)`.
fn filter_valid(data: &[f64], h: usize, w: usize, taps: &[f64]) -> Vec<f64> {
    let k = taps.len();
    let ow = w - k + 1;
    let oh = h - k + 1;
    let mut rows = vec![0.0; h * ow];
    for r in 0..h {
        for c in 0..ow {
            rows[r * ow + c] = (0..k).map(|t| taps[t] * data[r * w + c + t]).sum();
        }
    }
    let mut out = vec![0.0; oh * ow];
    for r in 0..oh {
        for c in 0..ow {
            out[r * ow + c] = (0..k).map(|t| taps[t] * rows[(r + t) * ow + c]).sum();
        }
    }
    out
}

/// Mean SSIM over every position where the 11x11 Gaussian window fits.
pub fn ssim(reference: &RealGrid, test: &RealGrid) -> Result<f64> {
    if !reference.same_shape(test) {
        return Err(Error::shape("ssim", "images differ in shape"));
    }
    let (h, w) = (reference.height, reference.width);
    if h < SSIM_WINDOW || w < SSIM_WINDOW {
        return Err(Error::invalid(format!(
            "{h}x{w} image is smaller than the {SSIM_WINDOW}x{SSIM_WINDOW} window"
        )));
    }
    let taps = gaussian_taps(SSIM_WINDOW, SSIM_SIGMA);
    let x = &reference.data;
    let y = &test.data;
    let prod = |f: &dyn Fn(usize) -> f64| (0..x.len()).map(f).collect::<Vec<f64>>();
    let mx = filter_valid(x, h, w, &taps);
    let my = filter_valid(y, h, w, &taps);
    let mxx = filter_valid(&prod(&|i| x[i] * x[i]), h, w, &taps);
    let myy = filter_valid(&prod(&|i| y[i] * y[i]), h, w, &taps);
    let mxy = filter_valid(&prod(&|i| x[i] * y[i]), h, w, &taps);
    let total: f64 = (0..mx.len())
        .map(|i| {
            let (ux, uy) = (mx[i], my[i]);
            let vx = mxx[i] - ux * ux;
            let vy = myy[i] - uy * uy;
            let cxy = mxy[i] - ux * uy;
            ((2.0 * ux * uy + SSIM_C1) * (2.0 * cxy + SSIM_C2))
                / ((ux * ux + uy * uy + SSIM_C1) * (vx + vy + SSIM_C2))
        })
        .sum();
    Ok(total / mx.len() as f64)
}

/// Reconstructed image: real part of the inverse transform, min-max
/// normalized.
pub fn image_of(vis: &crate::numerics::ComplexGrid) -> Result<RealGrid> {
    Ok(ifft2(vis)?.real_part().min_max_normalized())
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct EvalRow {
    pub id: usize,
    pub dirty_psnr: f64,
    pub dirty_ssim: f64,
    pub recon_psnr: f64,
    pub recon_ssim: f64,
}

#[derive(Clone, Debug, PartialEq)]
pub struct EvalReport {
    pub rows: Vec<EvalRow>,
    pub mean: EvalRow,
    /// False for pretraining checkpoints, whose reconstructed columns repeat
    /// the dirty image.
    pub reconstructed: bool,
}

pub const EVAL_HEADER: &str = "id,dirty_psnr,dirty_ssim,recon_psnr,recon_ssim";

impl EvalReport {
    pub fn to_csv(&self) -> String {
        let mut out = String::from(EVAL_HEADER);
        out.push('\n');
        let line = |id: String, r: &EvalRow| {
            [r.dirty_psnr, r.dirty_ssim, r.recon_psnr, r.recon_ssim]
                .iter()
                .fold(id, |s, v| s + "," + &fmt_f64(*v))
        };
        for r in &self.rows {
            out += &line(r.id.to_string(), r);
            out.push('\n');
        }
        out += &line("mean".into(), &self.mean);
        out.push('\n');
        out
    }

    pub fn write(&self, path: &Path) -> Result<()> {
        fs::write(path, self.to_csv())?;
        Ok(())
    }
}

/// Dirty-image and reconstruction quality on `indices`. Checkpoints that
/// were not fine-tuned are scored on the dirty image in both columns.
pub fn evaluate(ck: &Checkpoint, ds: &Dataset, indices: &[usize]) -> Result<EvalReport> {
    if indices.is_empty() {
        return Err(Error::invalid("no samples to evaluate"));
    }
    let reconstructed = nets::is_finetuned(&ck.params);
    let mut rows = Vec::with_capacity(indices.len());
    for &i in indices {
        let s = &ds.samples[i];
        let truth = s.sky.grid().min_max_normalized();
        let dirty = dirty_image(&s.sparse)?;
        let recon = if reconstructed {
            let (_, dc) = nets::reconstruct_dense(&ck.params, &ck.arch, &s.sparse, &mut subsample_stream(ck.token_seed))?;
            image_of(&dc)?
        } else {
            dirty.clone()
        };
        rows.push(EvalRow {
            id: s.id,
            dirty_psnr: psnr(&truth, &dirty)?,
            dirty_ssim: ssim(&truth, &dirty)?,
            recon_psnr: psnr(&truth, &recon)?,
            recon_ssim: ssim(&truth, &recon)?,
        });
    }
    let n = rows.len() as f64;
    let m = |f: fn(&EvalRow) -> f64| rows.iter().map(f).sum::<f64>() / n;
    let mean = EvalRow {
        id: usize::MAX,
        dirty_psnr: m(|r| r.dirty_psnr),
        dirty_ssim: m(|r| r.dirty_ssim),
        recon_psnr: m(|r| r.recon_psnr),
        recon_ssim: m(|r| r.recon_ssim),
    };
    Ok(EvalReport {
        rows,
        mean,
        reconstructed,
    })
}

/// Pretext-task numbers of a pretrained checkpoint on held-out samples.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct ScmEval {
    pub acc: f64,
    pub l_c: f64,
    pub l_rec_v: f64,
    pub l_rec_i: f64,
    pub l_scm: f64,
}

pub const SCM_EVAL_HEADER: &str = "acc,l_c,l_rec_v,l_rec_i,l_scm";

impl ScmEval {
    pub fn to_csv(&self) -> String {
        let vals = [self.acc, self.l_c, self.l_rec_v, self.l_rec_i, self.l_scm];
        let body: Vec<String> = vals.iter().map(|v| fmt_f64(*v)).collect();
        format!("{SCM_EVAL_HEADER}\n{}\n", body.join(","))
    }
}

/// Evaluates both pretext tasks with `indices` as one batch.
pub fn scm_metrics(ck: &Checkpoint, ds: &Dataset, indices: &[usize], cfg: &TrainConfig) -> Result<ScmEval> {
    require_sections(&ck.params, &[ENC_VIS, ENC_IMG, PRED_V2I, PRED_I2V, DEC_VIS, DEC_IMG])?;
    if indices.is_empty() {
        return Err(Error::invalid("no samples to evaluate"));
    }
    let mut tape = Tape::new();
    let ids: Vec<usize> = indices.iter().map(|&i| ds.samples[i].id).collect();
    let g = scm_forward(
        &mut tape,
        &ck.params,
        &ck.arch,
        ds,
        indices,
        cfg,
        |_| subsample_stream(ck.token_seed),
        |slot| RngStream::named(cfg.seed, "eval-mask", ids[slot] as u64),
    )?;
    let l_c = tape.value(g.l_c).item()?;
    let l_rec_v = tape.value(g.l_rec_v).item()?;
    let l_rec_i = tape.value(g.l_rec_i).item()?;
    Ok(ScmEval {
        acc: g.acc,
        l_c,
        l_rec_v,
        l_rec_i,
        l_scm: scm_loss(l_rec_v, l_rec_i, l_c, cfg.kappa),
    })
}

/// Pooled, unit-normalized latents of both modalities for every sample.
pub fn embeddings(ck: &Checkpoint, ds: &Dataset) -> Result<Vec<(usize, Vec<f64>, Vec<f64>)>> {
    require_sections(&ck.params, &[ENC_VIS, ENC_IMG])?;
    let arch = &ck.arch;
    if ds.size() != arch.height {
        return Err(Error::Config(format!(
            "checkpoint is for {}x{} grids, dataset is {}x{}",
            arch.height,
            arch.width,
            ds.size(),
            ds.size()
        )));
    }
    let spec = arch.band_spec()?;
    let pooled_unit = |t: &Tensor| {
        let mut m = vec![0.0; t.cols()];
        for r in 0..t.rows() {
            for (a, v) in m.iter_mut().zip(t.row_slice(r)) {
                *a += v;
            }
        }
        m.iter_mut().for_each(|v| *v /= t.rows() as f64);
        let norm = m.iter().map(|v| v * v).sum::<f64>().sqrt().max(1e-12);
        m.into_iter().map(|v| v / norm).collect::<Vec<f64>>()
    };
    let mut out = Vec::with_capacity(ds.len());
    for s in &ds.samples {
        let (vt, _) = band_tokenize(&s.sparse, &spec, &mut subsample_stream(ck.token_seed))?;
        let it = patchify(s.sky.grid(), arch.patch)?;
        let mut tape = Tape::new();
        let v = tape.constant(vt.tokens)?;
        let i = tape.constant(it.tokens)?;
        let xi = encode(&mut tape, &ck.params, arch, ENC_VIS, v)?;
        let eta = encode(&mut tape, &ck.params, arch, ENC_IMG, i)?;
        out.push((s.id, pooled_unit(tape.value(xi)), pooled_unit(tape.value(eta))));
    }
    Ok(out)
}

pub fn export_embeddings(ck: &Checkpoint, ds: &Dataset, path: &Path) -> Result<()> {
    let rows = embeddings(ck, ds)?;
    let d = ck.arch.d_model;
    let mut buf = Vec::new();
    let header: Vec<String> = std::iter::once("id".to_string())
        .chain((0..d).map(|k| format!("xi_{k}")))
        .chain((0..d).map(|k| format!("eta_{k}")))
        .collect();
    writeln!(buf, "{}", header.join(","))?;
    for (id, xi, eta) in rows {
        let vals: Vec<String> = xi.iter().chain(&eta).map(|v| fmt_f64(*v)).collect();
        writeln!(buf, "{id},{}", vals.join(","))?;
    }
    fs::write(path, buf)?;
    Ok(())
}
