//! Pretraining with the two pretext tasks, fine-tuning of the reconstruction
//! network, and the contrastive-weight sweep.

use std::fs;
use std::io::Write as _;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::losses::{contrastive_tape, idr_loss, idr_tape, recon_img_tape, recon_vis_tape, VisReconTarget};
use crate::nets::{
    self, cell_features, decode, encode, init_sections, predict_cross, recon_forward, require_sections, Architecture,
    Checkpoint, DEC_IMG, DEC_VIS, ENC_IMG, ENC_VIS, PRED_I2V, PRED_V2I, RECON,
};
use crate::numerics::{adam_step, AdamConfig, AdamState, ModelParams, NodeId, RngStream, Tape, Tensor};
use crate::observation::Dataset;
use crate::tokenizer::{band_tokenize, patchify, sample_mask, BandSpec};

/// Optimizer budget of one stage.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct StageConfig {
    pub steps: usize,
    pub batch_size: usize,
    pub lr: f64,
}

/// Network widths. `band_k = 0` sizes the band capacity from the mask
/// coverage of the dataset.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ModelConfig {
    pub patch: usize,
    pub band_k: usize,
    pub d_model: usize,
    pub hidden: usize,
    pub recon_hidden: usize,
}

impl Default for ModelConfig {
    fn default() -> Self {
        ModelConfig {
            patch: 8,
            band_k: 0,
            d_model: 64,
            hidden: 128,
            recon_hidden: 64,
        }
    }
}

impl ModelConfig {
    pub fn architecture(&self, size: usize, coverage: f64) -> Result<Architecture> {
        if self.patch == 0 || size % self.patch != 0 {
            return Err(Error::Config(format!(
                "patch {} does not divide grid size {size}",
                self.patch
            )));
        }
        let n_tok = (size / self.patch) * (size / self.patch);
        let band_k = if self.band_k == 0 {
            BandSpec::default_capacity(size, size, n_tok, coverage)
        } else {
            self.band_k
        };
        let arch = Architecture {
            height: size,
            width: size,
            n_tok,
            patch: self.patch,
            band_k,
            d_model: self.d_model,
            hidden: self.hidden,
            recon_hidden: self.recon_hidden,
        };
        arch.validate()?;
        Ok(arch)
    }
}

/// Run configuration shared by both stages. Every field is a key of the
/// TOML run-config file.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainConfig {
    pub seed: u64,
    pub mask_ratio: f64,
    pub temperature: f64,
    pub kappa: f64,
    /// Contrastive pretext task.
    pub task1_contrastive: bool,
    /// Complementary masked prediction pretext task.
    pub task2_masking: bool,
    pub scm_stage: bool,
    pub idr_stage: bool,
    /// Number of trailing steps averaged for summary numbers.
    pub window: usize,
    pub scm: StageConfig,
    pub idr: StageConfig,
    pub model: ModelConfig,
    /// Dataset used for pretraining, if different from the one given on the
    /// command line.
    pub pretrain_data: Option<PathBuf>,
    pub finetune_data: Option<PathBuf>,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            seed: 42,
            mask_ratio: 0.5,
            temperature: 0.07,
            kappa: 0.1,
            task1_contrastive: true,
            task2_masking: true,
            scm_stage: true,
            idr_stage: true,
            window: 50,
            scm: StageConfig {
                steps: 500,
                batch_size: 16,
                lr: 1e-3,
            },
            idr: StageConfig {
                steps: 1000,
                batch_size: 8,
                lr: 2e-3,
            },
            model: ModelConfig::default(),
            pretrain_data: None,
            finetune_data: None,
        }
    }
}

impl TrainConfig {
    pub fn from_toml(text: &str) -> Result<Self> {
        let cfg: TrainConfig = toml::from_str(text).map_err(|e| Error::Config(format!("run config: {e}")))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path)
            .map_err(|e| Error::Config(format!("cannot read {}: {e}", path.display())))?;
        TrainConfig::from_toml(&text)
    }

    pub fn to_toml(&self) -> Result<String> {
        toml::to_string(self).map_err(|e| Error::Config(format!("run config: {e}")))
    }

    pub fn validate(&self) -> Result<()> {
        if !self.scm_stage && !self.idr_stage {
            return Err(Error::Config("at least one of scm_stage and idr_stage must be on".into()));
        }
        if !(self.mask_ratio > 0.0 && self.mask_ratio < 1.0) {
            return Err(Error::Config(format!("mask_ratio must be in (0, 1), got {}", self.mask_ratio)));
        }
        crate::losses::LossConfig {
            temperature: self.temperature,
            kappa: self.kappa,
        }
        .validate()?;
        for (name, s) in [("scm", &self.scm), ("idr", &self.idr)] {
            if s.steps == 0 || s.batch_size == 0 {
                return Err(Error::Config(format!("{name}: steps and batch_size must be positive")));
            }
            if !(s.lr >= 0.0 && s.lr.is_finite()) {
                return Err(Error::Config(format!("{name}: lr must be finite and >= 0")));
            }
        }
        if self.window == 0 {
            return Err(Error::Config("window must be positive".into()));
        }
        Ok(())
    }

    pub fn architecture(&self, ds: &Dataset) -> Result<Architecture> {
        self.model.architecture(ds.size(), ds.mask.coverage())
    }
}

/// Index sets of the 80/10/10 split.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Split {
    pub train: Vec<usize>,
    pub val: Vec<usize>,
    pub test: Vec<usize>,
}

/// Shuffles `0..count` with a seeded stream, then cuts 80/10/10.
pub fn split_indices(count: usize, seed: u64) -> Split {
    let mut idx: Vec<usize> = (0..count).collect();
    RngStream::named(seed, "split", 0).shuffle(&mut idx);
    let n_train = count * 8 / 10;
    let n_val = count / 10;
    let test = idx.split_off(n_train + n_val);
    let val = idx.split_off(n_train);
    Split { train: idx, val, test }
}

fn batch_for_step(pool: &[usize], batch: usize, seed: u64, label: &str, step: usize) -> Vec<usize> {
    let k = batch.min(pool.len());
    RngStream::named(seed, label, step as u64)
        .choose_k(pool.len(), k)
        .into_iter()
        .map(|i| pool[i])
        .collect()
}

fn sample_stream(seed: u64, label: &str, step: usize, slot: usize) -> RngStream {
    RngStream::named(seed, label, ((step as u64) << 20) | slot as u64)
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct ScmRow {
    pub step: usize,
    pub l_c: f64,
    pub l_rec_v: f64,
    pub l_rec_i: f64,
    pub l_scm: f64,
    pub acc: f64,
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct IdrRow {
    pub step: usize,
    pub l_idr: f64,
}

pub struct ScmOutcome {
    pub checkpoint: Checkpoint,
    pub log: Vec<ScmRow>,
}

pub struct IdrOutcome {
    pub checkpoint: Checkpoint,
    pub log: Vec<IdrRow>,
}

fn sum_nodes(tape: &mut Tape, nodes: &[NodeId]) -> Result<NodeId> {
    let mut acc = nodes[0];
    for &n in &nodes[1..] {
        acc = tape.add(acc, n)?;
    }
    Ok(acc)
}

fn mean_nodes(tape: &mut Tape, nodes: &[NodeId]) -> Result<NodeId> {
    let s = sum_nodes(tape, nodes)?;
    tape.scale(s, 1.0 / nodes.len() as f64)
}

/// Loss terms of one pretraining batch recorded on a tape.
pub struct ScmGraph {
    pub l_c: NodeId,
    pub l_rec_v: NodeId,
    pub l_rec_i: NodeId,
    pub acc: f64,
}

/// Records the forward pass of both pretext tasks for `samples`.
///
/// `rng_for(slot)` supplies the tokenization stream and `mask_for(slot)` the
/// token mask stream of the sample at in-batch position `slot`.
pub fn scm_forward(
    tape: &mut Tape,
    params: &ModelParams,
    arch: &Architecture,
    ds: &Dataset,
    samples: &[usize],
    cfg: &TrainConfig,
    mut rng_for: impl FnMut(usize) -> RngStream,
    mut mask_for: impl FnMut(usize) -> RngStream,
) -> Result<ScmGraph> {
    let spec = arch.band_spec()?;
    let n = arch.n_tok;
    let mut vis_rows = Vec::with_capacity(samples.len() * n * arch.vis_width());
    let mut img_rows = Vec::with_capacity(samples.len() * n * arch.img_width());
    let mut targets = Vec::with_capacity(samples.len());
    let mut patches = Vec::with_capacity(samples.len());
    for (slot, &i) in samples.iter().enumerate() {
        let s = &ds.samples[i];
        let (tok, layout) = band_tokenize(&s.sparse, &spec, &mut rng_for(slot))?;
        targets.push(VisReconTarget::new(&s.sparse, &layout, arch.vis_width())?);
        vis_rows.extend_from_slice(tok.tokens.data());
        let p = patchify(s.sky.grid(), arch.patch)?;
        if p.len() != n {
            return Err(Error::shape("scm", "image patch count differs from band count"));
        }
        img_rows.extend_from_slice(p.tokens.data());
        patches.push(p.tokens);
    }
    let b = samples.len();
    let vis = tape.constant(Tensor::new(b * n, arch.vis_width(), vis_rows)?)?;
    let img = tape.constant(Tensor::new(b * n, arch.img_width(), img_rows)?)?;
    let xi_all = encode(tape, params, arch, ENC_VIS, vis)?;
    let eta_all = encode(tape, params, arch, ENC_IMG, img)?;

    let mut xi_pools = Vec::with_capacity(b);
    let mut eta_pools = Vec::with_capacity(b);
    let mut rec_v = Vec::with_capacity(b);
    let mut rec_i = Vec::with_capacity(b);
    for slot in 0..b {
        let rows: Vec<usize> = (slot * n..(slot + 1) * n).collect();
        let xi = tape.gather_rows(xi_all, &rows)?;
        let eta = tape.gather_rows(eta_all, &rows)?;
        xi_pools.push(tape.mean_rows(xi)?);
        eta_pools.push(tape.mean_rows(eta)?);

        let omega = sample_mask(n, cfg.mask_ratio, &mut mask_for(slot))?;
        let vis_idx = omega.set_indices();
        let img_idx = omega.clear_indices();
        let xi_vis = tape.gather_rows(xi, &vis_idx)?;
        let eta_vis = tape.gather_rows(eta, &img_idx)?;
        // Image tokens are hidden where visibility tokens are visible, and
        // the other way round.
        let eta_pred = predict_cross(tape, params, PRED_V2I, xi_vis, &vis_idx)?;
        let xi_pred = predict_cross(tape, params, PRED_I2V, eta_vis, &img_idx)?;
        let xi_hat = tape.scatter_rows(n, &[(xi_vis, vis_idx.clone()), (xi_pred, img_idx.clone())])?;
        let eta_hat = tape.scatter_rows(n, &[(eta_vis, img_idx), (eta_pred, vis_idx)])?;
        let v_dec = decode(tape, params, DEC_VIS, xi_hat)?;
        let i_dec = decode(tape, params, DEC_IMG, eta_hat)?;
        rec_v.push(recon_vis_tape(tape, v_dec, &targets[slot])?);
        rec_i.push(recon_img_tape(tape, i_dec, &patches[slot])?);
    }
    let xp = tape.concat_rows(&xi_pools)?;
    let ep = tape.concat_rows(&eta_pools)?;
    let (l_c, acc) = contrastive_tape(tape, xp, ep, cfg.temperature)?;
    Ok(ScmGraph {
        l_c,
        l_rec_v: mean_nodes(tape, &rec_v)?,
        l_rec_i: mean_nodes(tape, &rec_i)?,
        acc,
    })
}

/// Optimized pretraining objective: enabled terms only.
pub fn scm_total(tape: &mut Tape, g: &ScmGraph, cfg: &TrainConfig) -> Result<NodeId> {
    let mut terms = Vec::new();
    if cfg.task2_masking {
        terms.push(g.l_rec_v);
        terms.push(g.l_rec_i);
    }
    if cfg.task1_contrastive {
        terms.push(tape.scale(g.l_c, cfg.kappa)?);
    }
    if terms.is_empty() {
        return Err(Error::Config(
            "both pretext tasks are off; the pretraining objective is empty".into(),
        ));
    }
    sum_nodes(tape, &terms)
}

fn check_scm(cfg: &TrainConfig, ds: &Dataset) -> Result<Architecture> {
    cfg.validate()?;
    if !cfg.scm_stage {
        return Err(Error::Config("scm_stage is off".into()));
    }
    if !cfg.task1_contrastive && !cfg.task2_masking {
        return Err(Error::Config(
            "both pretext tasks are off; the pretraining objective is empty".into(),
        ));
    }
    if ds.is_empty() {
        return Err(Error::invalid("empty dataset"));
    }
    cfg.architecture(ds)
}

/// Pretrains all networks; the reconstruction network keeps its initial
/// values.
pub fn run_scm(cfg: &TrainConfig, ds: &Dataset) -> Result<ScmOutcome> {
    let arch = check_scm(cfg, ds)?;
    let mut params = nets::init_params(&arch, cfg.seed)?;
    let mut state = AdamState::new(&params);
    let adam = AdamConfig::with_lr(cfg.scm.lr);
    let split = split_indices(ds.len(), cfg.seed);
    let pool = if split.train.is_empty() { (0..ds.len()).collect() } else { split.train };
    let mut log = Vec::with_capacity(cfg.scm.steps);
    for step in 0..cfg.scm.steps {
        let batch = batch_for_step(&pool, cfg.scm.batch_size, cfg.seed, "scm-batch", step);
        let mut tape = Tape::new();
        let g = scm_forward(
            &mut tape,
            &params,
            &arch,
            ds,
            &batch,
            cfg,
            |_| subsample_stream(cfg.seed),
            |slot| sample_stream(cfg.seed, "scm-mask", step, slot),
        )?;
        let total = scm_total(&mut tape, &g, cfg)?;
        let row = ScmRow {
            step,
            l_c: tape.value(g.l_c).item()?,
            l_rec_v: tape.value(g.l_rec_v).item()?,
            l_rec_i: tape.value(g.l_rec_i).item()?,
            l_scm: tape.value(total).item()?,
            acc: g.acc,
        };
        let grads = tape.backward(total, &params)?;
        adam_step(&mut params, &grads, &mut state, &adam)?;
        log.push(row);
    }
    Ok(ScmOutcome {
        checkpoint: Checkpoint {
            arch,
            token_seed: cfg.seed,
            params,
        },
        log,
    })
}

/// Mean fine-tuning loss over `samples`, one stacked forward pass.
pub fn idr_forward(
    tape: &mut Tape,
    params: &ModelParams,
    arch: &Architecture,
    ds: &Dataset,
    samples: &[usize],
    mut rng_for: impl FnMut(usize) -> RngStream,
) -> Result<NodeId> {
    let spec = arch.band_spec()?;
    let n = arch.n_tok;
    let mut rows = Vec::with_capacity(samples.len() * n * arch.vis_width());
    for (slot, &i) in samples.iter().enumerate() {
        let (tok, _) = band_tokenize(&ds.samples[i].sparse, &spec, &mut rng_for(slot))?;
        rows.extend_from_slice(tok.tokens.data());
    }
    let vis = tape.constant(Tensor::new(samples.len() * n, arch.vis_width(), rows)?)?;
    let xi_all = encode(tape, params, arch, ENC_VIS, vis)?;
    let mut losses = Vec::with_capacity(samples.len());
    for (slot, &i) in samples.iter().enumerate() {
        let s = &ds.samples[i];
        let dense = s
            .dense
            .as_ref()
            .ok_or_else(|| Error::Config(format!("sample {} has no dense ground truth", s.id)))?;
        let xi = tape.gather_rows(xi_all, &(slot * n..(slot + 1) * n).collect::<Vec<_>>())?;
        let f = tape.constant(cell_features(&s.sparse))?;
        let out = recon_forward(tape, params, xi, f)?;
        losses.push(idr_tape(tape, out, dense)?);
    }
    mean_nodes(tape, &losses)
}

/// Fine-tuning starting point: the pretrained visibility encoder when
/// `init` is given, fresh weights otherwise. Returns the parameters (encoder
/// and reconstruction network only) and their architecture.
pub fn idr_initial(cfg: &TrainConfig, ds: &Dataset, init: Option<&Checkpoint>) -> Result<(Architecture, ModelParams)> {
    let arch = match init {
        Some(ck) => {
            require_sections(&ck.params, &[ENC_VIS])?;
            if ck.arch.height != ds.size() || ck.arch.width != ds.size() {
                return Err(Error::Config(format!(
                    "checkpoint is for {}x{} grids, dataset is {}x{}",
                    ck.arch.height,
                    ck.arch.width,
                    ds.size(),
                    ds.size()
                )));
            }
            ck.arch
        }
        None => cfg.architecture(ds)?,
    };
    let mut params = init_sections(&arch, cfg.seed, &[ENC_VIS, RECON])?;
    if let Some(ck) = init {
        let src = ck.params.section(ENC_VIS).expect("checked above");
        *params.section_mut(ENC_VIS).expect("initialized above") = src.clone();
    }
    Ok((arch, params))
}

/// Fine-tunes the visibility encoder and the reconstruction network against
/// dense ground truth.
pub fn run_idr(cfg: &TrainConfig, ds: &Dataset, init: Option<&Checkpoint>) -> Result<IdrOutcome> {
    cfg.validate()?;
    if !cfg.idr_stage {
        return Err(Error::Config("idr_stage is off".into()));
    }
    if ds.is_empty() {
        return Err(Error::invalid("empty dataset"));
    }
    if !ds.has_dense() {
        return Err(Error::Config(
            "fine-tuning needs dense ground-truth visibilities; regenerate the dataset with include_dense".into(),
        ));
    }
    if cfg.scm_stage && init.is_none() {
        return Err(Error::Config(
            "scm_stage is on but no pretrained checkpoint was given; pass one or turn scm_stage off".into(),
        ));
    }
    let (arch, mut params) = idr_initial(cfg, ds, init)?;
    let token_seed = init.map_or(cfg.seed, |ck| ck.token_seed);
    let mut state = AdamState::new(&params);
    let adam = AdamConfig::with_lr(cfg.idr.lr);
    let split = split_indices(ds.len(), cfg.seed);
    let pool = if split.train.is_empty() { (0..ds.len()).collect() } else { split.train };
    let mut log = Vec::with_capacity(cfg.idr.steps);
    for step in 0..cfg.idr.steps {
        let batch = batch_for_step(&pool, cfg.idr.batch_size, cfg.seed, "idr-batch", step);
        let mut tape = Tape::new();
        let loss = idr_forward(&mut tape, &params, &arch, ds, &batch, |_| subsample_stream(token_seed))?;
        let l_idr = tape.value(loss).item()?;
        let grads = tape.backward(loss, &params)?;
        adam_step(&mut params, &grads, &mut state, &adam)?;
        log.push(IdrRow { step, l_idr });
    }
    Ok(IdrOutcome {
        checkpoint: Checkpoint {
            arch,
            token_seed,
            params,
        },
        log,
    })
}

/// Stream for within-band subsampling. Every tokenization of a run starts
/// from the same state, so under a shared sampling pattern each token slot
/// holds the same uv cell for every sample, in training and at inference.
pub fn subsample_stream(seed: u64) -> RngStream {
    RngStream::named(seed, "band-subsample", 0)
}

/// Mean raw-output fine-tuning loss over `indices`.
pub fn heldout_idr_loss(ck: &Checkpoint, ds: &Dataset, indices: &[usize]) -> Result<f64> {
    if indices.is_empty() {
        return Err(Error::invalid("no held-out samples"));
    }
    let mut total = 0.0;
    for &i in indices {
        let s = &ds.samples[i];
        let dense = s
            .dense
            .as_ref()
            .ok_or_else(|| Error::Config(format!("sample {} has no dense ground truth", s.id)))?;
        let (raw, _) = nets::reconstruct_dense(&ck.params, &ck.arch, &s.sparse, &mut subsample_stream(ck.token_seed))?;
        total += idr_loss(&raw, dense)?;
    }
    Ok(total / indices.len() as f64)
}

/// Averages of the last `window` rows.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct ScmSummary {
    pub acc: f64,
    pub l_c: f64,
    pub l_rec_v: f64,
    pub l_rec_i: f64,
    pub l_scm: f64,
}

pub fn summarize_scm(log: &[ScmRow], window: usize) -> Result<ScmSummary> {
    if log.is_empty() {
        return Err(Error::invalid("empty training log"));
    }
    let tail = &log[log.len().saturating_sub(window.max(1))..];
    let m = |f: fn(&ScmRow) -> f64| tail.iter().map(f).sum::<f64>() / tail.len() as f64;
    Ok(ScmSummary {
        acc: m(|r| r.acc),
        l_c: m(|r| r.l_c),
        l_rec_v: m(|r| r.l_rec_v),
        l_rec_i: m(|r| r.l_rec_i),
        l_scm: m(|r| r.l_scm),
    })
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct SweepRow {
    pub kappa: f64,
    pub summary: ScmSummary,
}

/// One pretraining run per contrastive weight, all with the same seed.
pub fn sweep_kappa(cfg: &TrainConfig, ds: &Dataset, values: &[f64]) -> Result<Vec<SweepRow>> {
    if values.len() < 2 {
        return Err(Error::Config(format!(
            "a sweep needs at least 2 kappa values, got {}",
            values.len()
        )));
    }
    if let Some(k) = values.iter().find(|k| !(**k >= 0.0 && k.is_finite())) {
        return Err(Error::Config(format!("kappa must be finite and >= 0, got {k}")));
    }
    values
        .iter()
        .map(|&kappa| {
            let run_cfg = TrainConfig { kappa, ..cfg.clone() };
            let out = run_scm(&run_cfg, ds)?;
            Ok(SweepRow {
                kappa,
                summary: summarize_scm(&out.log, cfg.window)?,
            })
        })
        .collect()
}

/// Shortest decimal that parses back to the same `f64`; infinities as
/// `inf`/`-inf`.
pub fn fmt_f64(v: f64) -> String {
    if v == f64::INFINITY {
        "inf".into()
    } else if v == f64::NEG_INFINITY {
        "-inf".into()
    } else {
        format!("{v}")
    }
}

fn write_lines(path: &Path, header: &str, lines: impl Iterator<Item = String>) -> Result<()> {
    let mut buf = Vec::new();
    writeln!(buf, "{header}")?;
    for l in lines {
        writeln!(buf, "{l}")?;
    }
    fs::write(path, buf)?;
    Ok(())
}

pub const SCM_LOG_HEADER: &str = "step,l_c,l_rec_v,l_rec_i,l_scm,acc";
pub const IDR_LOG_HEADER: &str = "step,l_idr";
pub const SWEEP_HEADER: &str = "kappa,acc,l_c,l_rec_i,l_rec_v";

pub fn write_scm_log(path: &Path, log: &[ScmRow]) -> Result<()> {
    write_lines(
        path,
        SCM_LOG_HEADER,
        log.iter().map(|r| {
            [r.l_c, r.l_rec_v, r.l_rec_i, r.l_scm, r.acc]
                .iter()
                .fold(r.step.to_string(), |s, v| s + "," + &fmt_f64(*v))
        }),
    )
}

pub fn write_idr_log(path: &Path, log: &[IdrRow]) -> Result<()> {
    write_lines(
        path,
        IDR_LOG_HEADER,
        log.iter().map(|r| format!("{},{}", r.step, fmt_f64(r.l_idr))),
    )
}

pub fn write_sweep(path: &Path, rows: &[SweepRow]) -> Result<()> {
    write_lines(
        path,
        SWEEP_HEADER,
        rows.iter().map(|r| {
            let s = &r.summary;
            [s.acc, s.l_c, s.l_rec_i, s.l_rec_v]
                .iter()
                .fold(fmt_f64(r.kappa), |acc, v| acc + "," + &fmt_f64(*v))
        }),
    )
}
