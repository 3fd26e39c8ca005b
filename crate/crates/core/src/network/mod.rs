//! Encoder / decoder / filter / classifier model with hand-derived gradients.
//!
//! ```text
//! x ──Enc──▶ g ──R──▶ f ──W──▶ logits
//!            │
//!            └──Dec──▶ x'
//! ```
//!
//! The composite objective is `α_sfmx·L_sfmx + α_recon·L_recon + α_reg·L_reg`
//! with each term averaged over the batch.

pub mod checkpoint;
pub mod layers;
pub mod loss;
pub mod optim;

use serde::{Deserialize, Serialize};

use crate::error::{check_dim, FtlError, Result};
use crate::numerics::matrix::{axpy, dot, Matrix};
use crate::numerics::SeededRng;

pub use layers::{Dense, Mlp};
pub use loss::{loss_ml2, loss_recon, loss_softmax, softmax};
pub use optim::Adam;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct NetworkConfig {
    pub rich_dim: usize,
    pub feature_dim: usize,
    pub enc_hidden: Vec<usize>,
    pub dec_hidden: Vec<usize>,
    pub filter_hidden: Vec<usize>,
}

impl Default for NetworkConfig {
    fn default() -> Self {
        NetworkConfig {
            rich_dim: 32,
            feature_dim: 32,
            enc_hidden: vec![64],
            dec_hidden: vec![64],
            filter_hidden: vec![64],
        }
    }
}

impl NetworkConfig {
    pub fn validate(&self) -> Result<()> {
        let sizes = self
            .enc_hidden
            .iter()
            .chain(&self.dec_hidden)
            .chain(&self.filter_hidden)
            .chain([&self.rich_dim, &self.feature_dim]);
        if sizes.copied().any(|s| s == 0) {
            return Err(FtlError::ConfigInvalid(
                "network layer sizes must be positive".into(),
            ));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Part {
    Enc,
    Dec,
    Filter,
    Fc,
}

/// Which parts a training step may update.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Trainable {
    pub enc: bool,
    pub dec: bool,
    pub filter: bool,
    pub fc: bool,
}

impl Trainable {
    pub const ALL: Trainable = Trainable {
        enc: true,
        dec: true,
        filter: true,
        fc: true,
    };
    /// Stage 1: encoder and decoder frozen.
    pub const FILTER_FC: Trainable = Trainable {
        enc: false,
        dec: false,
        filter: true,
        fc: true,
    };
    /// Stage 2: classifier frozen.
    pub const ALL_BUT_FC: Trainable = Trainable {
        enc: true,
        dec: true,
        filter: true,
        fc: false,
    };
    pub const NONE: Trainable = Trainable {
        enc: false,
        dec: false,
        filter: false,
        fc: false,
    };
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct LossWeights {
    pub alpha_sfmx: f64,
    pub alpha_recon: f64,
    pub alpha_reg: f64,
}

impl Default for LossWeights {
    fn default() -> Self {
        LossWeights {
            alpha_sfmx: 1.0,
            alpha_recon: 1.0,
            alpha_reg: 0.25,
        }
    }
}

impl LossWeights {
    pub fn new(alpha_sfmx: f64, alpha_recon: f64, alpha_reg: f64) -> Self {
        LossWeights {
            alpha_sfmx,
            alpha_recon,
            alpha_reg,
        }
    }

    pub fn validate(&self) -> Result<()> {
        for (name, v) in [
            ("alpha_sfmx", self.alpha_sfmx),
            ("alpha_recon", self.alpha_recon),
            ("alpha_reg", self.alpha_reg),
        ] {
            if !v.is_finite() || v < 0.0 {
                return Err(FtlError::ConfigInvalid(format!(
                    "{name} must be finite and nonnegative, got {v}"
                )));
            }
        }
        Ok(())
    }
}

/// Batch-mean loss terms (unweighted) and the weighted total.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct LossBreakdown {
    pub total: f64,
    pub softmax: f64,
    pub recon: f64,
    pub reg: f64,
}

impl LossBreakdown {
    pub fn is_finite(&self) -> bool {
        self.total.is_finite() && self.softmax.is_finite() && self.recon.is_finite() && self.reg.is_finite()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct NetworkParams {
    pub enc: Mlp,
    pub dec: Mlp,
    pub filter: Mlp,
    /// Classifier `W` (`n_classes × feature_dim`), no bias; row `j` is `w_j`.
    pub fc: Matrix,
}

impl NetworkParams {
    pub fn init(
        cfg: &NetworkConfig,
        input_dim: usize,
        n_classes: usize,
        rng: &mut SeededRng,
    ) -> Result<Self> {
        cfg.validate()?;
        if input_dim == 0 || n_classes == 0 {
            return Err(FtlError::ConfigInvalid(
                "input_dim and n_classes must be positive".into(),
            ));
        }
        let chain = |a: usize, hidden: &[usize], b: usize| {
            let mut s = vec![a];
            s.extend_from_slice(hidden);
            s.push(b);
            s
        };
        let enc = Mlp::init(&chain(input_dim, &cfg.enc_hidden, cfg.rich_dim), rng);
        let dec = Mlp::init(&chain(cfg.rich_dim, &cfg.dec_hidden, input_dim), rng);
        let filter = Mlp::init(&chain(cfg.rich_dim, &cfg.filter_hidden, cfg.feature_dim), rng);
        let fc = Dense::init(cfg.feature_dim, n_classes, rng).weight;
        Ok(NetworkParams {
            enc,
            dec,
            filter,
            fc,
        })
    }

    /// Checks that the layer dimensions chain and all weights are finite.
    pub fn validate(&self) -> Result<()> {
        for mlp in [&self.enc, &self.dec, &self.filter] {
            if mlp.layers.is_empty() {
                return Err(FtlError::ConfigInvalid("empty layer stack".into()));
            }
            for w in mlp.layers.windows(2) {
                check_dim(w[0].outputs(), w[1].inputs())?;
            }
            for l in &mlp.layers {
                check_dim(l.outputs(), l.bias.len())?;
            }
        }
        check_dim(self.enc.output_dim(), self.dec.input_dim())?;
        check_dim(self.enc.input_dim(), self.dec.output_dim())?;
        check_dim(self.enc.output_dim(), self.filter.input_dim())?;
        check_dim(self.filter.output_dim(), self.fc.cols())?;
        if self.tensors().any(|(_, t)| t.iter().any(|v| !v.is_finite())) {
            return Err(FtlError::NonFinite("network parameters"));
        }
        Ok(())
    }

    pub fn zeros_like(&self) -> Self {
        NetworkParams {
            enc: self.enc.zeros_like(),
            dec: self.dec.zeros_like(),
            filter: self.filter.zeros_like(),
            fc: Matrix::zeros(self.fc.rows(), self.fc.cols()),
        }
    }

    pub fn input_dim(&self) -> usize {
        self.enc.input_dim()
    }

    pub fn rich_dim(&self) -> usize {
        self.enc.output_dim()
    }

    pub fn feature_dim(&self) -> usize {
        self.fc.cols()
    }

    pub fn n_classes(&self) -> usize {
        self.fc.rows()
    }

    /// Every parameter tensor, in a fixed order, tagged by owning part.
    pub fn tensors(&self) -> impl Iterator<Item = (Part, &[f64])> {
        self.enc
            .tensors()
            .map(|t| (Part::Enc, t))
            .chain(self.dec.tensors().map(|t| (Part::Dec, t)))
            .chain(self.filter.tensors().map(|t| (Part::Filter, t)))
            .chain(std::iter::once((Part::Fc, self.fc.as_slice())))
    }

    pub fn tensors_mut(&mut self) -> impl Iterator<Item = (Part, &mut [f64])> {
        self.enc
            .tensors_mut()
            .map(|t| (Part::Enc, t))
            .chain(self.dec.tensors_mut().map(|t| (Part::Dec, t)))
            .chain(self.filter.tensors_mut().map(|t| (Part::Filter, t)))
            .chain(std::iter::once((Part::Fc, self.fc.as_mut_slice())))
    }

    pub fn part_is_zero(&self, part: Part) -> bool {
        self.tensors()
            .filter(|(p, _)| *p == part)
            .all(|(_, t)| t.iter().all(|&v| v == 0.0))
    }

    pub fn param_count(&self) -> usize {
        self.tensors().map(|(_, t)| t.len()).sum()
    }

    pub fn encode(&self, x: &[f64]) -> Result<Vec<f64>> {
        self.enc.forward(x)
    }

    pub fn decode(&self, g: &[f64]) -> Result<Vec<f64>> {
        self.dec.forward(g)
    }

    pub fn filter(&self, g: &[f64]) -> Result<Vec<f64>> {
        self.filter.forward(g)
    }

    /// `W f`
    pub fn logits(&self, f: &[f64]) -> Result<Vec<f64>> {
        self.fc.matvec(f)
    }

    /// Discriminative feature `R(Enc(x))`.
    pub fn features(&self, x: &[f64]) -> Result<Vec<f64>> {
        self.filter(&self.encode(x)?)
    }

    pub fn predict(&self, x: &[f64]) -> Result<usize> {
        let z = self.logits(&self.features(x)?)?;
        Ok(argmax(&z))
    }

    /// L2 norm of each classifier row `w_j`.
    pub fn weight_norms(&self) -> Vec<f64> {
        (0..self.fc.rows())
            .map(|j| dot(self.fc.row(j), self.fc.row(j)).sqrt())
            .collect()
    }
}

pub(crate) fn argmax(z: &[f64]) -> usize {
    let mut best = 0;
    for (i, &v) in z.iter().enumerate() {
        if v > z[best] {
            best = i;
        }
    }
    best
}

/// Gradient of the weighted softmax + m-L2 terms w.r.t. the logits `z = W f`
/// for one example, already divided by the batch size.
fn logit_grad(z: &[f64], label: usize, w: &LossWeights, inv_b: f64) -> Vec<f64> {
    let mut gz = vec![0.0; z.len()];
    if w.alpha_sfmx != 0.0 {
        let p = softmax(z);
        for (j, pj) in p.iter().enumerate() {
            gz[j] += w.alpha_sfmx * inv_b * (pj - if j == label { 1.0 } else { 0.0 });
        }
    }
    if w.alpha_reg != 0.0 {
        axpy(2.0 * w.alpha_reg * inv_b, z, &mut gz);
    }
    gz
}

fn check_labels(batch_labels: impl Iterator<Item = usize>, n_classes: usize) -> Result<()> {
    for label in batch_labels {
        if label >= n_classes {
            return Err(FtlError::LabelOutOfRange { label, n_classes });
        }
    }
    Ok(())
}

/// Composite loss over a batch of `(x, label)` and its gradient for every
/// parameter.
pub fn loss_total(
    params: &NetworkParams,
    batch: &[(&[f64], usize)],
    weights: &LossWeights,
) -> Result<(LossBreakdown, NetworkParams)> {
    if batch.is_empty() {
        return Err(FtlError::EmptyBatch);
    }
    check_labels(batch.iter().map(|b| b.1), params.n_classes())?;
    let inv_b = 1.0 / batch.len() as f64;
    let mut grads = params.zeros_like();
    let mut out = LossBreakdown::default();
    for &(x, label) in batch {
        let enc_t = params.enc.trace(x)?;
        let g = &enc_t.output;
        let dec_t = params.dec.trace(g)?;
        let fil_t = params.filter.trace(g)?;
        let f = &fil_t.output;
        let z = params.fc.matvec(f)?;

        let recon = loss_recon(x, &dec_t.output)?;
        let sfmx = loss_softmax(&z, label)?;
        let reg = dot(&z, &z);
        out.softmax += sfmx * inv_b;
        out.recon += recon * inv_b;
        out.reg += reg * inv_b;

        let gz = logit_grad(&z, label, weights, inv_b);
        grads.fc.add_outer(1.0, &gz, f)?;
        let gf = params.fc.matvec_t(&gz)?;
        let mut gg = params.filter.backward(&fil_t, &gf, &mut grads.filter);

        if weights.alpha_recon != 0.0 {
            let gx: Vec<f64> = dec_t
                .output
                .iter()
                .zip(x)
                .map(|(r, xi)| 2.0 * weights.alpha_recon * inv_b * (r - xi))
                .collect();
            let gg_dec = params.dec.backward(&dec_t, &gx, &mut grads.dec);
            axpy(1.0, &gg_dec, &mut gg);
        }
        params.enc.backward(&enc_t, &gg, &mut grads.enc);
    }
    out.total =
        weights.alpha_sfmx * out.softmax + weights.alpha_recon * out.recon + weights.alpha_reg * out.reg;
    Ok((out, grads))
}

/// Softmax + m-L2 loss for rich features entering at the filter `R`,
/// bypassing the encoder. Gradients of `Enc` and `Dec` are identically zero.
pub fn loss_features(
    params: &NetworkParams,
    batch: &[(&[f64], usize)],
    weights: &LossWeights,
) -> Result<(LossBreakdown, NetworkParams)> {
    if batch.is_empty() {
        return Err(FtlError::EmptyBatch);
    }
    check_labels(batch.iter().map(|b| b.1), params.n_classes())?;
    let inv_b = 1.0 / batch.len() as f64;
    let mut grads = params.zeros_like();
    let mut out = LossBreakdown::default();
    for &(g, label) in batch {
        check_dim(params.rich_dim(), g.len())?;
        let fil_t = params.filter.trace(g)?;
        let f = &fil_t.output;
        let z = params.fc.matvec(f)?;
        out.softmax += loss_softmax(&z, label)? * inv_b;
        out.reg += dot(&z, &z) * inv_b;
        let gz = logit_grad(&z, label, weights, inv_b);
        grads.fc.add_outer(1.0, &gz, f)?;
        let gf = params.fc.matvec_t(&gz)?;
        params.filter.backward(&fil_t, &gf, &mut grads.filter);
    }
    out.total = weights.alpha_sfmx * out.softmax + weights.alpha_reg * out.reg;
    Ok((out, grads))
}

/// One optimiser step on the composite loss over raw inputs.
pub fn train_step(
    params: &mut NetworkParams,
    opt: &mut Adam,
    batch: &[(&[f64], usize)],
    weights: &LossWeights,
    trainable: Trainable,
) -> Result<LossBreakdown> {
    let (loss, grads) = loss_total(params, batch, weights)?;
    opt.apply(params, &grads, trainable);
    Ok(loss)
}

/// One optimiser step on rich-feature inputs through `R` and `FC` only.
pub fn train_step_features(
    params: &mut NetworkParams,
    opt: &mut Adam,
    batch: &[(&[f64], usize)],
    weights: &LossWeights,
) -> Result<LossBreakdown> {
    let (loss, grads) = loss_features(params, batch, weights)?;
    let trainable = Trainable {
        enc: false,
        dec: false,
        ..Trainable::FILTER_FC
    };
    opt.apply(params, &grads, trainable);
    Ok(loss)
}
