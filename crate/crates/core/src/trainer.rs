//! Pretraining and the two-stage alternating schedule.
//!
//! After joint pretraining, each alternation recomputes the transfer
//! statistics and runs
//!
//! * stage 1 (`Enc`, `Dec` frozen): per iteration, a hard regular batch, a UR
//!   batch, and a batch of regular features transferred onto the UR batch's
//!   labels, each as its own update of `R` and `FC` on softmax + m-L2;
//! * stage 2 (`FC` frozen): plain mixed batches on the composite loss.

use log::{debug, info, warn};
use serde::{Deserialize, Serialize};

use crate::dataset::ImbalancedDataset;
use crate::error::{FtlError, Result};
use crate::evaluation::{evaluate, weight_norm_stats, FeatureSpace};
use crate::network::{
    train_step, train_step_features, Adam, LossBreakdown, LossWeights, NetworkConfig, NetworkParams,
    Trainable,
};
use crate::numerics::SeededRng;
use crate::transfer::{transfer_feature, update_stats, TransferConfig, TransferStats};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainConfig {
    pub pretrain_iters: usize,
    /// Iterations per stage within one alternation.
    pub n_iter: usize,
    pub total_alternations: usize,
    pub batch_size: usize,
    pub lr_pretrain: f64,
    pub lr_alternate: f64,
    /// Pretraining is expected to cut the loss by at least this fraction;
    /// falling short is reported, not fatal.
    pub pretrain_min_drop: f64,
    pub loss_weights: LossWeights,
    pub network: NetworkConfig,
    pub transfer: TransferConfig,
    pub seed: u64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            pretrain_iters: 6000,
            n_iter: 200,
            total_alternations: 4,
            batch_size: 64,
            lr_pretrain: 2e-4,
            lr_alternate: 1e-5,
            pretrain_min_drop: 0.5,
            loss_weights: LossWeights::default(),
            network: NetworkConfig::default(),
            transfer: TransferConfig::default(),
            seed: 0,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if self.batch_size == 0 {
            return Err(FtlError::ConfigInvalid("batch_size must be positive".into()));
        }
        for (name, lr) in [("lr_pretrain", self.lr_pretrain), ("lr_alternate", self.lr_alternate)] {
            if !lr.is_finite() || lr < 0.0 {
                return Err(FtlError::ConfigInvalid(format!(
                    "{name} must be finite and nonnegative, got {lr}"
                )));
            }
        }
        self.loss_weights.validate()?;
        self.network.validate()?;
        self.transfer.validate()
    }

    /// Gradient steps taken after pretraining by [`run_ftl`]: three per
    /// stage-1 iteration and one per stage-2 iteration.
    pub fn alternating_steps(&self) -> usize {
        self.total_alternations * 4 * self.n_iter
    }

    /// Stage-1 losses: classification terms only.
    fn stage1_weights(&self) -> LossWeights {
        LossWeights {
            alpha_recon: 0.0,
            ..self.loss_weights
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Phase {
    Pretrain,
    Stage1,
    Stage2,
    Baseline,
}

impl Phase {
    fn name(self) -> &'static str {
        match self {
            Phase::Pretrain => "pretrain",
            Phase::Stage1 => "stage1",
            Phase::Stage2 => "stage2",
            Phase::Baseline => "baseline",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BatchKind {
    Joint,
    Regular,
    Ur,
    Transferred,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LossEvent {
    /// Global gradient-step index, strictly increasing.
    pub step: usize,
    pub phase: Phase,
    pub alternation: usize,
    pub iteration: usize,
    pub batch: BatchKind,
    pub loss: LossBreakdown,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Snapshot {
    pub step: usize,
    pub phase: Phase,
    pub alternation: usize,
    pub weight_norm_cv: f64,
    pub regular_weight_norm_mean: Option<f64>,
    pub ur_weight_norm_mean: Option<f64>,
    pub rank1_regular: Option<f64>,
    pub rank1_ur: Option<f64>,
    pub hard_list_len: Option<usize>,
    pub basis_rank: Option<usize>,
    pub basis_energy: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct TrainReport {
    pub events: Vec<LossEvent>,
    pub snapshots: Vec<Snapshot>,
    pub steps: usize,
    /// Fractional loss reduction over pretraining.
    pub pretrain_drop: Option<f64>,
    pub pretrain_drop_ok: Option<bool>,
    pub hard_list_fallbacks: usize,
}

impl TrainReport {
    fn record(&mut self, phase: Phase, alternation: usize, iteration: usize, batch: BatchKind, loss: LossBreakdown) -> Result<()> {
        let step = self.steps;
        self.steps += 1;
        if !loss.is_finite() {
            return Err(FtlError::Diverged {
                phase: phase.name(),
                iteration,
            });
        }
        self.events.push(LossEvent {
            step,
            phase,
            alternation,
            iteration,
            batch,
            loss,
        });
        Ok(())
    }

    fn snapshot(
        &mut self,
        params: &NetworkParams,
        ds: &ImbalancedDataset,
        phase: Phase,
        alternation: usize,
        stats: Option<&TransferStats>,
    ) -> Result<()> {
        let wn = weight_norm_stats(params);
        let (r1_reg, r1_ur) = if ds.holdout.is_empty() || ds.n_classes < 2 {
            (None, None)
        } else {
            let rep = evaluate(params, ds, FeatureSpace::Discriminative)?;
            (rep.rank1_regular, rep.rank1_ur)
        };
        let snap = Snapshot {
            step: self.steps,
            phase,
            alternation,
            weight_norm_cv: wn.cv,
            regular_weight_norm_mean: wn.mean_over(&ds.regular_ids),
            ur_weight_norm_mean: wn.mean_over(&ds.ur_ids),
            rank1_regular: r1_reg,
            rank1_ur: r1_ur,
            hard_list_len: stats.map(|s| s.hard_list().len()),
            basis_rank: stats.map(|s| s.basis.rank()),
            basis_energy: stats.map(|s| s.basis.energy),
        };
        info!(
            "{} alt={} step={} cv={:.4} rank1 reg={:?} ur={:?}",
            phase.name(),
            alternation,
            snap.step,
            snap.weight_norm_cv,
            snap.rank1_regular,
            snap.rank1_ur
        );
        self.snapshots.push(snap);
        Ok(())
    }

    pub fn is_finite(&self) -> bool {
        self.events.iter().all(|e| e.loss.is_finite())
            && self.snapshots.iter().all(|s| s.weight_norm_cv.is_finite())
    }
}

/// Random-stream ids; fixed so that a run is a pure function of its seed.
mod stream {
    pub const INIT: u64 = 0;
    pub const PRETRAIN: u64 = 1;
    pub const BASELINE: u64 = 2;
    pub const ALTERNATION: u64 = 16;
}

fn batch_of<'a>(ds: &'a ImbalancedDataset, ids: &[usize]) -> Vec<(&'a [f64], usize)> {
    ids.iter()
        .map(|&i| (ds.samples[i].x.as_slice(), ds.samples[i].label))
        .collect()
}

fn uniform_ids(rng: &mut SeededRng, pool: &[usize], n: usize) -> Vec<usize> {
    (0..n).map(|_| pool[rng.index(pool.len())]).collect()
}

pub fn init_params(ds: &ImbalancedDataset, cfg: &TrainConfig) -> Result<NetworkParams> {
    let mut rng = SeededRng::new(cfg.seed).fork(stream::INIT);
    NetworkParams::init(&cfg.network, ds.input_dim, ds.n_classes, &mut rng)
}

/// Joint training of every part on the composite loss, without transfer.
pub fn pretrain(ds: &ImbalancedDataset, cfg: &TrainConfig, report: &mut TrainReport) -> Result<NetworkParams> {
    cfg.validate()?;
    ds.validate()?;
    if ds.samples.is_empty() {
        return Err(FtlError::InsufficientData("dataset has no training samples".into()));
    }
    let mut params = init_params(ds, cfg)?;
    let mut opt = Adam::new(&params, cfg.lr_pretrain);
    let mut rng = SeededRng::new(cfg.seed).fork(stream::PRETRAIN);
    let all: Vec<usize> = (0..ds.samples.len()).collect();
    let first_event = report.events.len();
    for it in 0..cfg.pretrain_iters {
        let ids = uniform_ids(&mut rng, &all, cfg.batch_size);
        let loss = train_step(&mut params, &mut opt, &batch_of(ds, &ids), &cfg.loss_weights, Trainable::ALL)?;
        report.record(Phase::Pretrain, 0, it, BatchKind::Joint, loss)?;
    }
    let losses: Vec<f64> = report.events[first_event..].iter().map(|e| e.loss.total).collect();
    if let Some(&first) = losses.first() {
        let tail = (losses.len() / 10).max(1);
        let end = losses[losses.len() - tail..].iter().sum::<f64>() / tail as f64;
        let drop = if first > 0.0 { 1.0 - end / first } else { 0.0 };
        let ok = drop >= cfg.pretrain_min_drop;
        if !ok {
            warn!(
                "pretraining reduced the loss by {:.1}% (expected >= {:.1}%)",
                100.0 * drop,
                100.0 * cfg.pretrain_min_drop
            );
        }
        report.pretrain_drop = Some(drop);
        report.pretrain_drop_ok = Some(ok);
    }
    report.snapshot(&params, ds, Phase::Pretrain, 0, None)?;
    Ok(params)
}

/// Regular-batch indices drawn with replacement from the hard list; a hard
/// list shorter than the batch is used whole and topped up uniformly from
/// all regular samples.
fn regular_batch_ids(
    rng: &mut SeededRng,
    hard: &[usize],
    regular: &[usize],
    n: usize,
    fallbacks: &mut usize,
) -> Vec<usize> {
    if hard.is_empty() {
        *fallbacks += 1;
        debug!("empty hard list; sampling regular batch uniformly");
        return uniform_ids(rng, regular, n);
    }
    if hard.len() >= n {
        return uniform_ids(rng, hard, n);
    }
    let mut ids = hard.to_vec();
    ids.extend(uniform_ids(rng, regular, n - ids.len()));
    ids
}

/// Moves each regular rich feature onto a UR label drawn, after shuffling,
/// from `ur_labels`.
fn transferred_batch(
    regular: &[(Vec<f64>, usize)],
    ur_labels: &[usize],
    stats: &TransferStats,
    rng: &mut SeededRng,
) -> Result<Vec<(Vec<f64>, usize)>> {
    let mut targets = ur_labels.to_vec();
    rng.shuffle(&mut targets);
    let centers = &stats.classes;
    regular
        .iter()
        .zip(targets.iter().cycle())
        .map(|((g, src), &tgt)| {
            let moved = transfer_feature(g, &centers[*src].center, &centers[tgt].center, &stats.basis)?;
            Ok((moved, tgt))
        })
        .collect()
}

/// Decision-boundary reshaping with `Enc` and `Dec` frozen.
#[allow(clippy::too_many_arguments)]
pub fn stage1(
    params: &mut NetworkParams,
    opt: &mut Adam,
    ds: &ImbalancedDataset,
    stats: &TransferStats,
    cfg: &TrainConfig,
    alternation: usize,
    rng: &mut SeededRng,
    report: &mut TrainReport,
) -> Result<()> {
    let weights = cfg.stage1_weights();
    let by_class = ds.indices_by_class();
    let regular: Vec<usize> = ds.regular_ids.iter().flat_map(|&c| by_class[c].iter().copied()).collect();
    let ur: Vec<usize> = ds.ur_ids.iter().flat_map(|&c| by_class[c].iter().copied()).collect();
    if regular.is_empty() {
        return Err(FtlError::InsufficientData("stage 1 needs regular classes".into()));
    }
    let hard = stats.hard_list();
    for it in 0..cfg.n_iter {
        let reg_ids = regular_batch_ids(rng, &hard, &regular, cfg.batch_size, &mut report.hard_list_fallbacks);
        let reg_g: Vec<(Vec<f64>, usize)> = reg_ids
            .iter()
            .map(|&i| Ok((params.encode(&ds.samples[i].x)?, ds.samples[i].label)))
            .collect::<Result<_>>()?;
        let batch: Vec<(&[f64], usize)> = reg_g.iter().map(|(g, y)| (g.as_slice(), *y)).collect();
        let loss = train_step_features(params, opt, &batch, &weights)?;
        report.record(Phase::Stage1, alternation, it, BatchKind::Regular, loss)?;

        if ur.is_empty() {
            continue;
        }
        let ur_ids = uniform_ids(rng, &ur, cfg.batch_size);
        let ur_g: Vec<(Vec<f64>, usize)> = ur_ids
            .iter()
            .map(|&i| Ok((params.encode(&ds.samples[i].x)?, ds.samples[i].label)))
            .collect::<Result<_>>()?;
        let batch: Vec<(&[f64], usize)> = ur_g.iter().map(|(g, y)| (g.as_slice(), *y)).collect();
        let loss = train_step_features(params, opt, &batch, &weights)?;
        report.record(Phase::Stage1, alternation, it, BatchKind::Ur, loss)?;

        let ur_labels: Vec<usize> = ur_g.iter().map(|(_, y)| *y).collect();
        let transferred = transferred_batch(&reg_g, &ur_labels, stats, rng)?;
        let batch: Vec<(&[f64], usize)> = transferred.iter().map(|(g, y)| (g.as_slice(), *y)).collect();
        let loss = train_step_features(params, opt, &batch, &weights)?;
        report.record(Phase::Stage1, alternation, it, BatchKind::Transferred, loss)?;
    }
    Ok(())
}

/// Compact feature learning with `FC` frozen.
pub fn stage2(
    params: &mut NetworkParams,
    opt: &mut Adam,
    ds: &ImbalancedDataset,
    cfg: &TrainConfig,
    alternation: usize,
    rng: &mut SeededRng,
    report: &mut TrainReport,
) -> Result<()> {
    let all: Vec<usize> = (0..ds.samples.len()).collect();
    for it in 0..cfg.n_iter {
        let ids = uniform_ids(rng, &all, cfg.batch_size);
        let loss = train_step(params, opt, &batch_of(ds, &ids), &cfg.loss_weights, Trainable::ALL_BUT_FC)?;
        report.record(Phase::Stage2, alternation, it, BatchKind::Joint, loss)?;
    }
    Ok(())
}

/// Pretraining followed by `total_alternations` rounds of
/// statistics update, stage 1 and stage 2.
pub fn run_ftl(ds: &ImbalancedDataset, cfg: &TrainConfig) -> Result<(NetworkParams, TrainReport)> {
    let mut report = TrainReport::default();
    let mut params = pretrain(ds, cfg, &mut report)?;
    alternate(&mut params, ds, cfg, &mut report)?;
    Ok((params, report))
}

/// The alternating phase of [`run_ftl`], starting from given parameters.
pub fn alternate(
    params: &mut NetworkParams,
    ds: &ImbalancedDataset,
    cfg: &TrainConfig,
    report: &mut TrainReport,
) -> Result<()> {
    cfg.validate()?;
    let mut opt = Adam::new(params, cfg.lr_alternate);
    let root = SeededRng::new(cfg.seed);
    for a in 0..cfg.total_alternations {
        let mut rng = root.fork(stream::ALTERNATION + a as u64);
        let stats = {
            let p: &NetworkParams = params;
            update_stats(ds, |x| p.encode(x), &cfg.transfer)?
        };
        debug!(
            "alternation {a}: basis rank {} energy {:.4}, {} hard samples",
            stats.basis.rank(),
            stats.basis.energy,
            stats.hard_list().len()
        );
        stage1(params, &mut opt, ds, &stats, cfg, a, &mut rng, report)?;
        report.snapshot(params, ds, Phase::Stage1, a, Some(&stats))?;
        stage2(params, &mut opt, ds, cfg, a, &mut rng, report)?;
        report.snapshot(params, ds, Phase::Stage2, a, None)?;
    }
    Ok(())
}

/// Pretraining followed by plain joint training for the same number of
/// gradient steps as the alternating phase of [`run_ftl`].
pub fn run_baseline(ds: &ImbalancedDataset, cfg: &TrainConfig) -> Result<(NetworkParams, TrainReport)> {
    let mut report = TrainReport::default();
    let mut params = pretrain(ds, cfg, &mut report)?;
    continue_plain(&mut params, ds, cfg, cfg.alternating_steps(), &mut report)?;
    Ok((params, report))
}

/// `steps` joint updates of every part at the alternating learning rate.
pub fn continue_plain(
    params: &mut NetworkParams,
    ds: &ImbalancedDataset,
    cfg: &TrainConfig,
    steps: usize,
    report: &mut TrainReport,
) -> Result<()> {
    let mut opt = Adam::new(params, cfg.lr_alternate);
    let mut rng = SeededRng::new(cfg.seed).fork(stream::BASELINE);
    let all: Vec<usize> = (0..ds.samples.len()).collect();
    for it in 0..steps {
        let ids = uniform_ids(&mut rng, &all, cfg.batch_size);
        let loss = train_step(params, &mut opt, &batch_of(ds, &ids), &cfg.loss_weights, Trainable::ALL)?;
        report.record(Phase::Baseline, 0, it, BatchKind::Joint, loss)?;
    }
    if steps > 0 {
        report.snapshot(params, ds, Phase::Baseline, 0, None)?;
    }
    Ok(())
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum TrainMode {
    #[default]
    Ftl,
    Baseline,
}

pub fn run(ds: &ImbalancedDataset, cfg: &TrainConfig, mode: TrainMode) -> Result<(NetworkParams, TrainReport)> {
    match mode {
        TrainMode::Ftl => run_ftl(ds, cfg),
        TrainMode::Baseline => run_baseline(ds, cfg),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dataset::{generate, GeneratorConfig};
    use crate::evaluation::classifier_accuracy;

    fn small() -> (ImbalancedDataset, TrainConfig) {
        let ds = generate(&GeneratorConfig {
            n_regular: 4,
            n_ur: 3,
            samples_per_regular: 40,
            input_dim: 8,
            shared_cov_rank: 2,
            seed: 3,
            ..Default::default()
        })
        .unwrap();
        let mut cfg = TrainConfig {
            pretrain_iters: 50,
            n_iter: 5,
            total_alternations: 2,
            batch_size: 8,
            seed: 9,
            ..Default::default()
        };
        cfg.network.rich_dim = 6;
        cfg.network.feature_dim = 4;
        cfg.network.enc_hidden = vec![10];
        cfg.network.dec_hidden = vec![10];
        cfg.network.filter_hidden = vec![10];
        (ds, cfg)
    }

    #[test]
    fn zero_learning_rate_leaves_params_unchanged() {
        let (ds, mut cfg) = small();
        cfg.lr_pretrain = 0.0;
        let mut report = TrainReport::default();
        let p = pretrain(&ds, &cfg, &mut report).unwrap();
        assert_eq!(p, init_params(&ds, &cfg).unwrap());
    }

    #[test]
    fn zero_alternations_equals_pretraining() {
        let (ds, mut cfg) = small();
        cfg.total_alternations = 0;
        let (p, report) = run_ftl(&ds, &cfg).unwrap();
        let mut r = TrainReport::default();
        assert_eq!(p, pretrain(&ds, &cfg, &mut r).unwrap());
        assert_eq!(report.steps, cfg.pretrain_iters);
    }

    #[test]
    fn runs_are_deterministic_and_budgets_match() {
        let (ds, cfg) = small();
        let (a, ra) = run_ftl(&ds, &cfg).unwrap();
        let (b, rb) = run_ftl(&ds, &cfg).unwrap();
        assert_eq!(a, b);
        assert_eq!(ra, rb);
        let (_, base) = run_baseline(&ds, &cfg).unwrap();
        assert_eq!(base.steps, ra.steps);
        assert_eq!(ra.steps, cfg.pretrain_iters + cfg.alternating_steps());
        assert!(ra.is_finite());
        assert!(ra.events.windows(2).all(|w| w[1].step == w[0].step + 1));
    }

    #[test]
    fn stage_freeze_contracts() {
        let (ds, cfg) = small();
        let mut report = TrainReport::default();
        let mut p = pretrain(&ds, &cfg, &mut report).unwrap();
        let mut opt = Adam::new(&p, 1e-3);
        let mut rng = SeededRng::new(1);
        let stats = update_stats(&ds, |x| p.encode(x), &cfg.transfer).unwrap();
        let before = p.clone();
        stage1(&mut p, &mut opt, &ds, &stats, &cfg, 0, &mut rng, &mut report).unwrap();
        assert_eq!(p.enc, before.enc);
        assert_eq!(p.dec, before.dec);
        assert_ne!(p.filter, before.filter);
        assert_ne!(p.fc, before.fc);
        let before = p.clone();
        stage2(&mut p, &mut opt, &ds, &cfg, 0, &mut rng, &mut report).unwrap();
        assert_eq!(p.fc, before.fc);
        assert_ne!(p.enc, before.enc);
    }

    #[test]
    fn zero_iterations_leave_params_unchanged() {
        let (ds, mut cfg) = small();
        cfg.n_iter = 0;
        let mut report = TrainReport::default();
        let mut p = pretrain(&ds, &cfg, &mut report).unwrap();
        let before = p.clone();
        alternate(&mut p, &ds, &cfg, &mut report).unwrap();
        assert_eq!(p, before);
    }

    #[test]
    fn transferred_batches_carry_ur_labels() {
        let (ds, cfg) = small();
        let p = init_params(&ds, &cfg).unwrap();
        let stats = update_stats(&ds, |x| p.encode(x), &cfg.transfer).unwrap();
        let mut rng = SeededRng::new(2);
        let regular: Vec<(Vec<f64>, usize)> = ds
            .samples
            .iter()
            .filter(|s| ds.is_regular(s.label))
            .take(20)
            .map(|s| (p.encode(&s.x).unwrap(), s.label))
            .collect();
        let ur_labels: Vec<usize> = ds.ur_ids.iter().copied().cycle().take(20).collect();
        let batch = transferred_batch(&regular, &ur_labels, &stats, &mut rng).unwrap();
        assert_eq!(batch.len(), regular.len());
        assert!(batch.iter().all(|(_, y)| ds.ur_ids.contains(y)));

        let (_, report) = run_ftl(&ds, &cfg).unwrap();
        let n = report
            .events
            .iter()
            .filter(|e| e.batch == BatchKind::Transferred)
            .count();
        assert_eq!(n, cfg.total_alternations * cfg.n_iter);
    }

    #[test]
    fn regular_batch_tops_up_short_hard_list() {
        let mut rng = SeededRng::new(0);
        let mut fallbacks = 0;
        let ids = regular_batch_ids(&mut rng, &[7, 9], &[1, 2, 3], 5, &mut fallbacks);
        assert_eq!(&ids[..2], &[7, 9]);
        assert!(ids[2..].iter().all(|i| [1, 2, 3].contains(i)));
        let ids = regular_batch_ids(&mut rng, &[], &[1, 2, 3], 4, &mut fallbacks);
        assert_eq!(ids.len(), 4);
        assert_eq!(fallbacks, 1);
        let ids = regular_batch_ids(&mut rng, &[4, 5], &[1], 2, &mut fallbacks);
        assert!(ids.iter().all(|i| [4, 5].contains(i)));
    }

    #[test]
    fn separable_toy_pretrains_to_high_accuracy() {
        let ds = generate(&GeneratorConfig {
            n_regular: 2,
            n_ur: 0,
            samples_per_regular: 100,
            input_dim: 4,
            shared_cov_rank: 1,
            class_sep: 2.0,
            nuisance_strength: 0.0,
            noise_std: 0.1,
            seed: 5,
            ..Default::default()
        })
        .unwrap();
        let mut cfg = TrainConfig {
            pretrain_iters: 500,
            batch_size: 16,
            lr_pretrain: 2e-3,
            ..Default::default()
        };
        cfg.network.rich_dim = 4;
        cfg.network.feature_dim = 2;
        let mut report = TrainReport::default();
        let p = pretrain(&ds, &cfg, &mut report).unwrap();
        assert!(classifier_accuracy(&p, &ds.samples).unwrap() >= 0.95);
        assert_eq!(report.pretrain_drop_ok, Some(true));
    }

    #[test]
    fn invalid_config_is_rejected() {
        let (ds, mut cfg) = small();
        cfg.batch_size = 0;
        assert!(matches!(run_ftl(&ds, &cfg), Err(FtlError::ConfigInvalid(_))));
        cfg.batch_size = 8;
        cfg.lr_alternate = f64::NAN;
        assert!(matches!(run_ftl(&ds, &cfg), Err(FtlError::ConfigInvalid(_))));
    }
}
