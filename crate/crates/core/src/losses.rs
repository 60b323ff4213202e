//! Training objectives, each available as a plain function on values and as
//! a recorded computation on a [`Tape`].

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::numerics::tape::log_sum_exp;
use crate::numerics::{ComplexGrid, NodeId, RealGrid, Tape, Tensor};
use crate::observation::SparseVisibility;
use crate::tokenizer::BandLayout;

const UNIT_TOL: f64 = 1e-8;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct LossConfig {
    pub temperature: f64,
    pub kappa: f64,
}

impl Default for LossConfig {
    fn default() -> Self {
        LossConfig {
            temperature: 0.07,
            kappa: 0.1,
        }
    }
}

impl LossConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.temperature > 0.0 && self.temperature.is_finite()) {
            return Err(Error::Config(format!(
                "temperature must be > 0, got {}",
                self.temperature
            )));
        }
        if !(self.kappa >= 0.0 && self.kappa.is_finite()) {
            return Err(Error::Config(format!("kappa must be finite and >= 0, got {}", self.kappa)));
        }
        Ok(())
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct ContrastiveOutput {
    pub l_v2i: f64,
    pub l_i2v: f64,
    pub l_c: f64,
    pub acc: f64,
}

/// Fraction of rows whose largest entry is on the diagonal, averaged over
/// rows and columns. Ties count as misses unless the diagonal comes first.
pub fn contrastive_accuracy(sim: &Tensor) -> Result<f64> {
    let n = sim.rows();
    if n == 0 || sim.cols() != n {
        return Err(Error::shape("contrastive_accuracy", format!("{:?} is not square", sim.shape())));
    }
    let argmax = |vals: &mut dyn Iterator<Item = f64>| {
        let mut best = (0, f64::NEG_INFINITY);
        for (j, v) in vals.enumerate() {
            if v > best.1 {
                best = (j, v);
            }
        }
        best.0
    };
    let mut hits = 0usize;
    for l in 0..n {
        if argmax(&mut (0..n).map(|j| sim.get(l, j))) == l {
            hits += 1;
        }
        if argmax(&mut (0..n).map(|j| sim.get(j, l))) == l {
            hits += 1;
        }
    }
    Ok(hits as f64 / (2 * n) as f64)
}

fn check_unit_rows(name: &str, t: &Tensor) -> Result<()> {
    for r in 0..t.rows() {
        let norm = t.row_slice(r).iter().map(|v| v * v).sum::<f64>().sqrt();
        if (norm - 1.0).abs() > UNIT_TOL {
            return Err(Error::invalid(format!(
                "{name} row {r} has norm {norm}; contrastive inputs must be unit vectors"
            )));
        }
    }
    Ok(())
}

/// Bidirectional InfoNCE over index-paired unit vectors.
pub fn contrastive_loss(xi: &Tensor, eta: &Tensor, temperature: f64) -> Result<ContrastiveOutput> {
    if xi.rows() == 0 {
        return Err(Error::invalid("contrastive loss needs a non-empty batch"));
    }
    if xi.shape() != eta.shape() {
        return Err(Error::shape(
            "contrastive_loss",
            format!("{:?} against {:?}", xi.shape(), eta.shape()),
        ));
    }
    if !(temperature > 0.0) {
        return Err(Error::invalid("temperature must be positive"));
    }
    check_unit_rows("visibility embedding", xi)?;
    check_unit_rows("image embedding", eta)?;
    let sim = xi.matmul(&eta.transpose())?;
    let n = sim.rows();
    let logits = sim.scale(1.0 / temperature);
    let direction = |m: &Tensor| {
        (0..n)
            .map(|l| log_sum_exp(m.row_slice(l)) - m.get(l, l))
            .sum::<f64>()
            / n as f64
    };
    let l_v2i = direction(&logits);
    let l_i2v = direction(&logits.transpose());
    Ok(ContrastiveOutput {
        l_v2i,
        l_i2v,
        l_c: 0.5 * (l_v2i + l_i2v),
        acc: contrastive_accuracy(&sim)?,
    })
}

/// Contrastive loss recorded on the tape. `xi_pool` and `eta_pool` are
/// `n x d` pooled latents; they are L2-normalized here. Returns the loss node
/// and the accuracy of the recorded similarities.
pub fn contrastive_tape(tape: &mut Tape, xi_pool: NodeId, eta_pool: NodeId, temperature: f64) -> Result<(NodeId, f64)> {
    let n = tape.value(xi_pool).rows();
    if n == 0 {
        return Err(Error::invalid("contrastive loss needs a non-empty batch"));
    }
    let xn = tape.l2_normalize_rows(xi_pool)?;
    let en = tape.l2_normalize_rows(eta_pool)?;
    let et = tape.transpose(en)?;
    let sim = tape.affine(xn, et, None)?;
    let acc = contrastive_accuracy(tape.value(sim))?;
    let logits = tape.scale(sim, 1.0 / temperature)?;
    let targets: Vec<usize> = (0..n).collect();
    let a = tape.softmax_xent(logits, &targets)?;
    let lt = tape.transpose(logits)?;
    let b = tape.softmax_xent(lt, &targets)?;
    let s = tape.add(a, b)?;
    Ok((tape.scale(s, 0.5)?, acc))
}

pub fn mse(a: &[f64], b: &[f64]) -> Result<f64> {
    if a.len() != b.len() || a.is_empty() {
        return Err(Error::shape("mse", format!("{} entries against {}", a.len(), b.len())));
    }
    Ok(a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum::<f64>() / a.len() as f64)
}

/// Mean squared error over real and imaginary planes jointly.
pub fn recon_loss_vis(target: &ComplexGrid, pred: &ComplexGrid) -> Result<f64> {
    if !target.same_shape(pred) {
        return Err(Error::shape("recon_loss_vis", "grid shapes differ"));
    }
    let n = 2 * target.len();
    let s: f64 = (0..target.len())
        .map(|i| (target.re[i] - pred.re[i]).powi(2) + (target.im[i] - pred.im[i]).powi(2))
        .sum();
    Ok(s / n as f64)
}

pub fn recon_loss_img(target: &RealGrid, pred: &RealGrid) -> Result<f64> {
    if !target.same_shape(pred) {
        return Err(Error::shape("recon_loss_img", "grid shapes differ"));
    }
    mse(&target.data, &pred.data)
}

pub fn scm_loss(l_rec_v: f64, l_rec_i: f64, l_c: f64, kappa: f64) -> f64 {
    l_rec_v + l_rec_i + kappa * l_c
}

/// What the visibility decoder is compared against, in token space.
///
/// Decoded band tokens are placed back on their source cells; every other
/// cell of the reconstruction is zero. The full-grid mean squared error
/// therefore splits into a weighted token-space sum over kept re/im slots
/// plus the fixed energy of sampled cells that subsampling dropped.
#[derive(Clone, Debug, PartialEq)]
pub struct VisReconTarget {
    pub target: Tensor,
    pub weight: Tensor,
    pub dropped_energy: f64,
    /// Real entries in the full grid (`2 * H * W`).
    pub entries: usize,
}

impl VisReconTarget {
    pub fn new(sparse: &SparseVisibility, layout: &BandLayout, token_width: usize) -> Result<Self> {
        let n = layout.cells.len();
        let grid = sparse.grid();
        let mut target = vec![0.0; n * token_width];
        let mut weight = vec![0.0; n * token_width];
        let mut kept = vec![false; grid.len()];
        for (b, band) in layout.cells.iter().enumerate() {
            if 4 * band.len() > token_width {
                return Err(Error::shape("recon target", "band wider than its token"));
            }
            for (slot, &cell) in band.iter().enumerate() {
                let o = b * token_width + 4 * slot;
                target[o + 2] = grid.re[cell];
                target[o + 3] = grid.im[cell];
                weight[o + 2] = 1.0;
                weight[o + 3] = 1.0;
                kept[cell] = true;
            }
        }
        let dropped_energy = (0..grid.len())
            .filter(|&i| !kept[i])
            .map(|i| grid.re[i] * grid.re[i] + grid.im[i] * grid.im[i])
            .sum();
        Ok(VisReconTarget {
            target: Tensor::new(n, token_width, target)?,
            weight: Tensor::new(n, token_width, weight)?,
            dropped_energy,
            entries: 2 * grid.len(),
        })
    }
}

/// Full-grid visibility reconstruction error of decoded band tokens.
pub fn recon_vis_tape(tape: &mut Tape, decoded: NodeId, target: &VisReconTarget) -> Result<NodeId> {
    let t = tape.constant(target.target.clone())?;
    let w = tape.constant(target.weight.clone())?;
    let diff = tape.sub(decoded, t)?;
    let diff = tape.mul(diff, w)?;
    let sq = tape.mul(diff, diff)?;
    let s = tape.sum(sq)?;
    let dropped = tape.constant(Tensor::scalar(target.dropped_energy))?;
    let s = tape.add(s, dropped)?;
    tape.scale(s, 1.0 / target.entries as f64)
}

/// Image reconstruction error of decoded patch tokens; patchification is a
/// bijection, so the token-space mean equals the grid mean.
pub fn recon_img_tape(tape: &mut Tape, decoded: NodeId, patches: &Tensor) -> Result<NodeId> {
    let t = tape.constant(patches.clone())?;
    let diff = tape.sub(decoded, t)?;
    let sq = tape.mul(diff, diff)?;
    tape.mean(sq)
}

/// Per-cell weight `(rho / max rho + 1) * |delta|`, with `rho` the ground
/// truth amplitude.
pub fn idr_weights(pred: &ComplexGrid, truth: &ComplexGrid) -> Result<Vec<f64>> {
    if !pred.same_shape(truth) {
        return Err(Error::shape("idr_loss", "prediction and truth grids differ"));
    }
    let max_rho = (0..truth.len()).map(|i| truth.amplitude(i)).fold(0.0, f64::max);
    if !(max_rho > 0.0) {
        return Err(Error::invalid("ground-truth visibility is identically zero"));
    }
    Ok((0..truth.len())
        .map(|i| {
            let dr = pred.re[i] - truth.re[i];
            let di = pred.im[i] - truth.im[i];
            (truth.amplitude(i) / max_rho + 1.0) * dr.hypot(di)
        })
        .collect())
}

/// Mean over cells of `w * |delta|^2`.
pub fn idr_loss(pred: &ComplexGrid, truth: &ComplexGrid) -> Result<f64> {
    let w = idr_weights(pred, truth)?;
    let s: f64 = (0..truth.len())
        .map(|i| {
            let dr = pred.re[i] - truth.re[i];
            let di = pred.im[i] - truth.im[i];
            w[i] * (dr * dr + di * di)
        })
        .sum();
    Ok(s / truth.len() as f64)
}

/// [`idr_loss`] on an `HW x 2` output node; the weight is held constant.
pub fn idr_tape(tape: &mut Tape, out: NodeId, truth: &ComplexGrid) -> Result<NodeId> {
    let [rows, cols] = tape.value(out).shape();
    if rows != truth.len() || cols != 2 {
        return Err(Error::shape(
            "idr_loss",
            format!("output {rows}x{cols} for a grid of {} cells", truth.len()),
        ));
    }
    let pred = crate::nets::grid_from_output(tape.value(out), truth.height, truth.width)?;
    let w = idr_weights(&pred, truth)?;
    let wt = Tensor::new(rows, 2, w.iter().flat_map(|&v| [v, v]).collect())?;
    let tt = Tensor::new(
        rows,
        2,
        truth.re.iter().zip(&truth.im).flat_map(|(&r, &i)| [r, i]).collect(),
    )?;
    let t = tape.constant(tt)?;
    let wn = tape.constant(wt)?;
    let diff = tape.sub(out, t)?;
    let sq = tape.mul(diff, diff)?;
    let weighted = tape.mul(sq, wn)?;
    let s = tape.sum(weighted)?;
    tape.scale(s, 1.0 / rows as f64)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::numerics::{ModelParams, RngStream};

    #[test]
    fn single_pair_has_zero_loss() {
        let x = Tensor::row(vec![0.6, 0.8]);
        let out = contrastive_loss(&x, &x, 0.07).unwrap();
        assert_eq!(out.l_c, 0.0);
        assert_eq!(out.acc, 1.0);
    }

    #[test]
    fn orthonormal_pair_closed_form() {
        let e = Tensor::from_rows(&[vec![1.0, 0.0], vec![0.0, 1.0]]).unwrap();
        let out = contrastive_loss(&e, &e, 1.0).unwrap();
        let expected = (1.0 + (-1.0f64).exp()).ln();
        assert!((out.l_v2i - expected).abs() < 1e-12);
        assert!((out.l_i2v - expected).abs() < 1e-12);
        assert!((out.l_c - 0.313_261_687_518_222_8).abs() < 1e-12);
    }

    #[test]
    fn rejects_empty_and_unnormalized() {
        assert!(contrastive_loss(&Tensor::zeros(0, 2), &Tensor::zeros(0, 2), 1.0).is_err());
        let x = Tensor::row(vec![1.0, 1.0]);
        assert!(contrastive_loss(&x, &x, 1.0).is_err());
    }

    #[test]
    fn tape_matches_value_version() {
        let mut rng = RngStream::new(3, 0);
        let raw = |rng: &mut RngStream| Tensor::new(4, 3, (0..12).map(|_| rng.normal()).collect()).unwrap();
        let (a, b) = (raw(&mut rng), raw(&mut rng));
        let norm = |t: &Tensor| {
            let rows: Vec<Vec<f64>> = (0..t.rows())
                .map(|r| {
                    let s = t.row_slice(r);
                    let n = s.iter().map(|v| v * v).sum::<f64>().sqrt();
                    s.iter().map(|v| v / n).collect()
                })
                .collect();
            Tensor::from_rows(&rows).unwrap()
        };
        let direct = contrastive_loss(&norm(&a), &norm(&b), 0.5).unwrap();
        let mut tape = Tape::new();
        let (xa, xb) = (tape.constant(a).unwrap(), tape.constant(b).unwrap());
        let (l, acc) = contrastive_tape(&mut tape, xa, xb, 0.5).unwrap();
        assert!((tape.value(l).item().unwrap() - direct.l_c).abs() < 1e-12);
        assert_eq!(acc, direct.acc);
        tape.backward(l, &ModelParams::new()).unwrap();
    }

    #[test]
    fn mse_offset_and_identity() {
        let a = ComplexGrid::new(2, 2, vec![1.0, 2.0, 3.0, 4.0], vec![0.5; 4]).unwrap();
        assert_eq!(recon_loss_vis(&a, &a).unwrap(), 0.0);
        let mut b = a.clone();
        b.re.iter_mut().chain(b.im.iter_mut()).for_each(|v| *v += 0.3);
        assert!((recon_loss_vis(&a, &b).unwrap() - 0.09).abs() < 1e-12);
    }

    #[test]
    fn scm_combination() {
        assert!((scm_loss(0.0166, 0.0489, 0.0055, 1.0) - 0.0710).abs() < 1e-12);
        assert_eq!(scm_loss(0.2, 0.3, 7.0, 0.0), 0.5);
    }

    #[test]
    fn idr_uniform_case() {
        let truth = ComplexGrid::new(2, 2, vec![1.0; 4], vec![0.0; 4]).unwrap();
        let d = 0.25;
        let pred = ComplexGrid::new(2, 2, vec![1.0; 4], vec![d; 4]).unwrap();
        assert!((idr_loss(&pred, &truth).unwrap() - 2.0 * d * d * d).abs() < 1e-12);
        assert_eq!(idr_loss(&truth, &truth).unwrap(), 0.0);
        let zero = ComplexGrid::zeros(2, 2);
        assert!(idr_loss(&pred, &zero).is_err());
    }
}
