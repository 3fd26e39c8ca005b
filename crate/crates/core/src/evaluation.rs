//! Identification accuracy and imbalance diagnostics.

use std::collections::BTreeSet;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::dataset::ImbalancedDataset;
use crate::error::{check_dim, FtlError, Result};
use crate::network::NetworkParams;
use crate::numerics::matrix::{distance, mean_vector, squared_distance};
use crate::numerics::SeededRng;
use crate::transfer::{encode_by_class, estimate_center, ClassFeatures, TransferConfig};

/// Normalisation used by the center-estimation study.
pub const CENTER_ERROR_NORMALIZATION: &str = "mean pairwise distance between full-set class centers";

/// Subset sizes of the center-estimation study.
pub const DEFAULT_SUBSET_SIZES: [usize; 4] = [1, 5, 10, 20];

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum FeatureSpace {
    /// Encoder output `g`.
    Rich,
    /// Filter output `f`.
    #[default]
    Discriminative,
}

impl FeatureSpace {
    pub fn extract(self, params: &NetworkParams, x: &[f64]) -> Result<Vec<f64>> {
        match self {
            FeatureSpace::Rich => params.encode(x),
            FeatureSpace::Discriminative => params.features(x),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Rank1 {
    pub regular: Option<f64>,
    pub ur: Option<f64>,
    pub overall: f64,
    pub n_regular: usize,
    pub n_ur: usize,
}

/// Index of the nearest center; ties go to the lowest index.
pub fn nearest_center(centers: &[Vec<f64>], probe: &[f64]) -> usize {
    let mut best = 0;
    let mut best_d = f64::INFINITY;
    for (i, c) in centers.iter().enumerate() {
        let d = squared_distance(c, probe);
        if d < best_d {
            best = i;
            best_d = d;
        }
    }
    best
}

/// Rank-1 nearest-center identification, split by regular / UR probe label.
pub fn nn_identify(
    gallery_centers: &[Vec<f64>],
    probes: &[Vec<f64>],
    labels: &[usize],
    regular_ids: &BTreeSet<usize>,
) -> Result<Rank1> {
    if gallery_centers.len() < 2 {
        return Err(FtlError::EmptyGallery(gallery_centers.len()));
    }
    check_dim(probes.len(), labels.len())?;
    let dim = gallery_centers[0].len();
    for c in gallery_centers {
        check_dim(dim, c.len())?;
    }
    let (mut hit_reg, mut n_reg, mut hit_ur, mut n_ur) = (0usize, 0usize, 0usize, 0usize);
    for (p, &y) in probes.iter().zip(labels) {
        check_dim(dim, p.len())?;
        if y >= gallery_centers.len() {
            return Err(FtlError::LabelOutOfRange {
                label: y,
                n_classes: gallery_centers.len(),
            });
        }
        let hit = nearest_center(gallery_centers, p) == y;
        if regular_ids.contains(&y) {
            n_reg += 1;
            hit_reg += hit as usize;
        } else {
            n_ur += 1;
            hit_ur += hit as usize;
        }
    }
    let frac = |h: usize, n: usize| (n > 0).then(|| h as f64 / n as f64);
    let total = n_reg + n_ur;
    Ok(Rank1 {
        regular: frac(hit_reg, n_reg),
        ur: frac(hit_ur, n_ur),
        overall: if total > 0 {
            (hit_reg + hit_ur) as f64 / total as f64
        } else {
            0.0
        },
        n_regular: n_reg,
        n_ur,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WeightNormStats {
    pub norms: Vec<f64>,
    pub mean: f64,
    /// Population standard deviation.
    pub std: f64,
    /// `std / mean`
    pub cv: f64,
}

impl WeightNormStats {
    pub fn mean_over(&self, ids: &BTreeSet<usize>) -> Option<f64> {
        if ids.is_empty() {
            return None;
        }
        Some(ids.iter().map(|&i| self.norms[i]).sum::<f64>() / ids.len() as f64)
    }
}

pub fn weight_norm_stats(params: &NetworkParams) -> WeightNormStats {
    norm_stats(params.weight_norms())
}

pub fn norm_stats(norms: Vec<f64>) -> WeightNormStats {
    let n = norms.len() as f64;
    let mean = norms.iter().sum::<f64>() / n;
    let var = norms.iter().map(|x| (x - mean) * (x - mean)).sum::<f64>() / n;
    let std = var.sqrt();
    let cv = if mean > 0.0 { std / mean } else { 0.0 };
    WeightNormStats {
        norms,
        mean,
        std,
        cv,
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RadiusProfile {
    pub min: f64,
    pub mean: f64,
    pub max: f64,
}

/// Min / mean / max distance from each sample to its class's arithmetic
/// mean.
pub fn variance_profile(by_class: &[Vec<Vec<f64>>]) -> Result<Vec<RadiusProfile>> {
    by_class
        .iter()
        .enumerate()
        .map(|(i, feats)| {
            let dim = feats.first().ok_or(FtlError::EmptyClass(i))?.len();
            let center = mean_vector(feats.iter().map(Vec::as_slice), dim).unwrap();
            let dists: Vec<f64> = feats.iter().map(|f| distance(f, &center)).collect();
            Ok(RadiusProfile {
                min: dists.iter().copied().fold(f64::INFINITY, f64::min),
                mean: dists.iter().sum::<f64>() / dists.len() as f64,
                max: dists.iter().copied().fold(f64::NEG_INFINITY, f64::max),
            })
        })
        .collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CenterMethod {
    /// One random sample of the subset.
    PickOne,
    /// Plain mean of the subset.
    AvgAll,
    /// Pose-filtered, flip-averaged mean of the subset.
    AvgFlip,
}

impl CenterMethod {
    pub const ALL: [CenterMethod; 3] = [CenterMethod::PickOne, CenterMethod::AvgAll, CenterMethod::AvgFlip];
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CenterErrorCell {
    pub method: CenterMethod,
    pub subset_size: usize,
    pub mean_error: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CenterErrorTable {
    pub cells: Vec<CenterErrorCell>,
    pub normalizer: f64,
    pub normalization: String,
    pub repetitions: usize,
    pub n_classes: usize,
    pub tau: f64,
}

impl CenterErrorTable {
    pub fn get(&self, method: CenterMethod, subset_size: usize) -> Option<f64> {
        self.cells
            .iter()
            .find(|c| c.method == method && c.subset_size == subset_size)
            .map(|c| c.mean_error)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct CenterStudyConfig {
    pub subset_sizes: Vec<usize>,
    pub methods: Vec<CenterMethod>,
    pub repetitions: usize,
    pub seed: u64,
    pub transfer: TransferConfig,
    /// Worker threads; results do not depend on this.
    pub jobs: usize,
}

impl Default for CenterStudyConfig {
    fn default() -> Self {
        CenterStudyConfig {
            subset_sizes: DEFAULT_SUBSET_SIZES.to_vec(),
            methods: CenterMethod::ALL.to_vec(),
            repetitions: 100,
            seed: 0,
            transfer: TransferConfig::default(),
            jobs: 1,
        }
    }
}

impl CenterStudyConfig {
    pub fn validate(&self) -> Result<()> {
        self.transfer.validate()?;
        if self.subset_sizes.is_empty() || self.subset_sizes.contains(&0) || self.repetitions == 0 {
            return Err(FtlError::ConfigInvalid(
                "center study needs positive subset sizes and repetitions".into(),
            ));
        }
        if self.methods.is_empty() {
            return Err(FtlError::ConfigInvalid("center study needs at least one method".into()));
        }
        Ok(())
    }
}

/// Center-estimation error on subsets of the regular classes, relative to
/// the full-set arithmetic mean and normalised by the mean pairwise
/// inter-center distance.
pub fn center_error_study<E>(ds: &ImbalancedDataset, encoder: E, cfg: &CenterStudyConfig) -> Result<CenterErrorTable>
where
    E: Fn(&[f64]) -> Result<Vec<f64>> + Sync,
{
    cfg.validate()?;
    let max_subset = cfg.subset_sizes.iter().copied().max().unwrap_or(0);
    let per_class = encode_by_class(ds, encoder, true)?;
    let classes: Vec<&ClassFeatures> = ds
        .regular_ids
        .iter()
        .map(|&i| &per_class[i])
        .filter(|cf| cf.len() >= max_subset)
        .collect();
    if classes.len() < 2 {
        return Err(FtlError::InsufficientData(format!(
            "center study needs two regular classes with >= {max_subset} samples"
        )));
    }
    let dim = classes[0].features[0].len();
    let truth: Vec<Vec<f64>> = classes
        .iter()
        .map(|cf| mean_vector(cf.features.iter().map(Vec::as_slice), dim).unwrap())
        .collect();
    let mut pair_sum = 0.0;
    let mut pairs = 0usize;
    for i in 0..truth.len() {
        for j in i + 1..truth.len() {
            pair_sum += distance(&truth[i], &truth[j]);
            pairs += 1;
        }
    }
    let normalizer = pair_sum / pairs as f64;
    if !(normalizer > 0.0) {
        return Err(FtlError::InsufficientData("class centers coincide".into()));
    }

    let cells: Vec<(CenterMethod, usize)> = cfg
        .subset_sizes
        .iter()
        .flat_map(|&n| cfg.methods.iter().map(move |&m| (m, n)))
        .collect();
    let root = SeededRng::new(cfg.seed);
    let run_rep = |rep: usize| -> Result<Vec<f64>> {
        let mut rng = root.fork(rep as u64);
        let mut sums = vec![0.0; cells.len()];
        for (cf, truth) in classes.iter().zip(&truth) {
            for &n in &cfg.subset_sizes {
                let subset = rng.sample_without_replacement(cf.len(), n);
                let sub = ClassFeatures {
                    sample_ids: subset.iter().map(|&k| cf.sample_ids[k]).collect(),
                    features: subset.iter().map(|&k| cf.features[k].clone()).collect(),
                    flipped: subset.iter().map(|&k| cf.flipped[k].clone()).collect(),
                    poses: subset.iter().map(|&k| cf.poses[k]).collect(),
                };
                for (cell, sum) in cells.iter().zip(sums.iter_mut()) {
                    if cell.1 != n {
                        continue;
                    }
                    let est = match cell.0 {
                        CenterMethod::PickOne => sub.features[0].clone(),
                        CenterMethod::AvgAll => {
                            mean_vector(sub.features.iter().map(Vec::as_slice), dim).unwrap()
                        }
                        CenterMethod::AvgFlip => estimate_center(
                            &sub,
                            &TransferConfig {
                                use_flip: true,
                                ..cfg.transfer.clone()
                            },
                        )?,
                    };
                    *sum += distance(&est, truth) / normalizer;
                }
            }
        }
        Ok(sums)
    };

    let per_rep: Vec<Vec<f64>> = if cfg.jobs > 1 {
        let pool = rayon::ThreadPoolBuilder::new()
            .num_threads(cfg.jobs)
            .build()
            .map_err(|e| FtlError::ConfigInvalid(format!("thread pool: {e}")))?;
        pool.install(|| (0..cfg.repetitions).into_par_iter().map(run_rep).collect::<Result<_>>())?
    } else {
        (0..cfg.repetitions).map(run_rep).collect::<Result<_>>()?
    };

    let denom = (cfg.repetitions * classes.len()) as f64;
    let mut totals = vec![0.0; cells.len()];
    for sums in &per_rep {
        for (t, s) in totals.iter_mut().zip(sums) {
            *t += s;
        }
    }
    Ok(CenterErrorTable {
        cells: cells
            .iter()
            .zip(totals)
            .map(|(&(method, subset_size), t)| CenterErrorCell {
                method,
                subset_size,
                mean_error: t / denom,
            })
            .collect(),
        normalizer,
        normalization: CENTER_ERROR_NORMALIZATION.to_string(),
        repetitions: cfg.repetitions,
        n_classes: classes.len(),
        tau: cfg.transfer.tau,
    })
}

/// One row of the per-class CSV export.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClassRow {
    pub class_id: usize,
    pub regular: bool,
    pub count: usize,
    pub weight_norm: f64,
    pub radius: RadiusProfile,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub space: FeatureSpace,
    pub rank1_regular: Option<f64>,
    pub rank1_ur: Option<f64>,
    pub rank1_overall: f64,
    pub weight_norm_stats: WeightNormStats,
    pub regular_weight_norm_mean: Option<f64>,
    pub ur_weight_norm_mean: Option<f64>,
    pub variance_profile: Vec<RadiusProfile>,
    pub center_error_table: Option<CenterErrorTable>,
    pub classes: Vec<ClassRow>,
}

/// Center-gallery identification of the held-out probes plus weight-norm
/// and radius diagnostics. Gallery centers are arithmetic means of the
/// training features.
pub fn evaluate(params: &NetworkParams, ds: &ImbalancedDataset, space: FeatureSpace) -> Result<EvalReport> {
    let train_feats: Vec<Vec<f64>> = ds
        .samples
        .par_iter()
        .map(|s| space.extract(params, &s.x))
        .collect::<Result<_>>()?;
    let mut by_class: Vec<Vec<Vec<f64>>> = vec![Vec::new(); ds.n_classes];
    for (s, f) in ds.samples.iter().zip(train_feats) {
        by_class[s.label].push(f);
    }
    if let Some(i) = by_class.iter().position(Vec::is_empty) {
        return Err(FtlError::EmptyClass(i));
    }
    let dim = by_class[0][0].len();
    let centers: Vec<Vec<f64>> = by_class
        .iter()
        .map(|fs| mean_vector(fs.iter().map(Vec::as_slice), dim).unwrap())
        .collect();
    let probes: Vec<Vec<f64>> = ds
        .holdout
        .par_iter()
        .map(|s| space.extract(params, &s.x))
        .collect::<Result<_>>()?;
    let labels: Vec<usize> = ds.holdout.iter().map(|s| s.label).collect();
    let rank1 = nn_identify(&centers, &probes, &labels, &ds.regular_ids)?;
    let wn = weight_norm_stats(params);
    let profile = variance_profile(&by_class)?;
    let classes = (0..ds.n_classes)
        .map(|i| ClassRow {
            class_id: i,
            regular: ds.is_regular(i),
            count: by_class[i].len(),
            weight_norm: wn.norms[i],
            radius: profile[i],
        })
        .collect();
    Ok(EvalReport {
        space,
        rank1_regular: rank1.regular,
        rank1_ur: rank1.ur,
        rank1_overall: rank1.overall,
        regular_weight_norm_mean: wn.mean_over(&ds.regular_ids),
        ur_weight_norm_mean: wn.mean_over(&ds.ur_ids),
        weight_norm_stats: wn,
        variance_profile: profile,
        center_error_table: None,
        classes,
    })
}

/// Fraction of samples whose arg-max logit equals the label.
pub fn classifier_accuracy(params: &NetworkParams, samples: &[crate::dataset::Sample]) -> Result<f64> {
    if samples.is_empty() {
        return Err(FtlError::EmptyBatch);
    }
    let hits: Vec<bool> = samples
        .par_iter()
        .map(|s| Ok(params.predict(&s.x)? == s.label))
        .collect::<Result<_>>()?;
    Ok(hits.iter().filter(|&&h| h).count() as f64 / samples.len() as f64)
}

/// Mean distance from each sample's feature to its class mean, over all
/// classes.
pub fn mean_intra_class_distance(by_class: &[Vec<Vec<f64>>]) -> Result<f64> {
    let profile = variance_profile(by_class)?;
    let mut total = 0.0;
    let mut n = 0usize;
    for (p, feats) in profile.iter().zip(by_class) {
        total += p.mean * feats.len() as f64;
        n += feats.len();
    }
    Ok(total / n as f64)
}
