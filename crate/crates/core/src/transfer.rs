//! Class statistics and the center-based feature transfer operator.
//!
//! A transferred feature for target class `t` is built from a source sample
//! `g` of regular class `s` as `c_t + Q Qᵀ (g − c_s)`, where `Q` holds the
//! leading principal directions of the intra-class scatter pooled over the
//! regular classes.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::dataset::ImbalancedDataset;
use crate::error::{check_dim, FtlError, Result};
use crate::numerics::matrix::{add, axpy, distance, sub, Matrix};
use crate::numerics::{energy_rank, project, sym_eigen};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TransferConfig {
    /// Pose threshold in degrees: a sample enters the center estimate when
    /// `|pose| + |flipped pose| <= tau`.
    pub tau: f64,
    /// Fraction of scatter energy the basis must retain.
    pub energy: f64,
    /// Fixed basis size; overrides `energy` when set.
    pub k_override: Option<usize>,
    /// Average each feature with the feature of its flipped input.
    pub use_flip: bool,
}

impl Default for TransferConfig {
    fn default() -> Self {
        TransferConfig {
            tau: 30.0,
            energy: 0.95,
            k_override: None,
            use_flip: true,
        }
    }
}

impl TransferConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.tau > 0.0) || !self.tau.is_finite() {
            return Err(FtlError::ConfigInvalid(format!(
                "tau must be positive, got {}",
                self.tau
            )));
        }
        if !(self.energy > 0.0 && self.energy <= 1.0) {
            return Err(FtlError::ConfigInvalid(format!(
                "energy must lie in (0, 1], got {}",
                self.energy
            )));
        }
        if self.k_override == Some(0) {
            return Err(FtlError::ConfigInvalid("k_override must be positive".into()));
        }
        Ok(())
    }
}

/// Rich features of one class's training samples.
#[derive(Debug, Clone, Default)]
pub struct ClassFeatures {
    /// Dataset indices of the samples.
    pub sample_ids: Vec<usize>,
    pub features: Vec<Vec<f64>>,
    /// Features of the flipped inputs; empty when flips are not used.
    pub flipped: Vec<Vec<f64>>,
    pub poses: Vec<f64>,
}

impl ClassFeatures {
    pub fn len(&self) -> usize {
        self.features.len()
    }

    pub fn is_empty(&self) -> bool {
        self.features.is_empty()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClassStats {
    pub center: Vec<f64>,
    pub count: usize,
    /// Mean sample-to-center distance; regular classes only.
    pub mean_radius: Option<f64>,
    /// Dataset indices of samples farther than `mean_radius` from the center.
    pub hard_indices: Vec<usize>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct TransferBasis {
    /// `rich_dim × k`, orthonormal columns.
    pub q: Matrix,
    /// Fraction of scatter energy carried by the columns of `q`.
    pub energy: f64,
    /// Number of samples pooled into the scatter matrix.
    pub source_count: usize,
    pub eigenvalues: Vec<f64>,
}

impl TransferBasis {
    pub fn rank(&self) -> usize {
        self.q.cols()
    }

    pub fn dim(&self) -> usize {
        self.q.rows()
    }
}

/// Output of [`update_stats`]: per-class statistics plus the shared basis.
#[derive(Debug, Clone, PartialEq)]
pub struct TransferStats {
    pub classes: Vec<ClassStats>,
    pub basis: TransferBasis,
}

impl TransferStats {
    pub fn centers(&self) -> Vec<Vec<f64>> {
        self.classes.iter().map(|c| c.center.clone()).collect()
    }

    /// All hard sample indices, in class order.
    pub fn hard_list(&self) -> Vec<usize> {
        self.classes
            .iter()
            .flat_map(|c| c.hard_indices.iter().copied())
            .collect()
    }
}

/// Pose-filtered, optionally flip-averaged class center.
///
/// Falls back to all samples when no sample passes the pose filter.
pub fn estimate_center(class: &ClassFeatures, cfg: &TransferConfig) -> Result<Vec<f64>> {
    if class.is_empty() {
        return Err(FtlError::EmptyClass(usize::MAX));
    }
    check_dim(class.len(), class.poses.len())?;
    let use_flip = cfg.use_flip && !class.flipped.is_empty();
    if use_flip {
        check_dim(class.len(), class.flipped.len())?;
    }
    let dim = class.features[0].len();
    // the flipped input's pose is the negated pose
    let mut omega: Vec<usize> = (0..class.len())
        .filter(|&k| class.poses[k].abs() + (-class.poses[k]).abs() <= cfg.tau)
        .collect();
    if omega.is_empty() {
        omega = (0..class.len()).collect();
    }
    let mut acc = vec![0.0; dim];
    for &k in &omega {
        check_dim(dim, class.features[k].len())?;
        axpy(1.0, &class.features[k], &mut acc);
        if use_flip {
            check_dim(dim, class.flipped[k].len())?;
            axpy(1.0, &class.flipped[k], &mut acc);
        }
    }
    let denom = if use_flip { 2.0 } else { 1.0 } * omega.len() as f64;
    acc.iter_mut().for_each(|v| *v /= denom);
    Ok(acc)
}

/// Unnormalised scatter `Σ_i Σ_k (g_ik − c_i)(g_ik − c_i)ᵀ` over the given
/// classes.
pub fn accumulate_covariance(classes: &[(&[Vec<f64>], &[f64])]) -> Result<Matrix> {
    let dim = classes
        .iter()
        .find(|(f, _)| !f.is_empty())
        .map(|(_, c)| c.len())
        .ok_or_else(|| FtlError::InsufficientData("no samples for the scatter matrix".into()))?;
    if !classes.iter().any(|(f, _)| f.len() >= 2) {
        return Err(FtlError::InsufficientData(
            "the scatter matrix needs a class with at least two samples".into(),
        ));
    }
    let mut v = Matrix::zeros(dim, dim);
    for (features, center) in classes {
        check_dim(dim, center.len())?;
        for g in features.iter() {
            check_dim(dim, g.len())?;
            let dev = sub(g, center);
            v.add_outer(1.0, &dev, &dev)?;
        }
    }
    Ok(v)
}

/// Principal directions of the scatter matrix.
pub fn build_basis(v: &Matrix, source_count: usize, cfg: &TransferConfig) -> Result<TransferBasis> {
    cfg.validate()?;
    let eig = sym_eigen(v)?;
    let (k, energy) = match cfg.k_override {
        Some(k) => {
            if k > eig.dim() {
                return Err(FtlError::ConfigInvalid(format!(
                    "k_override {k} exceeds feature dimension {}",
                    eig.dim()
                )));
            }
            // still rejects an all-zero spectrum
            energy_rank(&eig.eigenvalues, 1.0)?;
            let total: f64 = eig.eigenvalues.iter().map(|l| l.max(0.0)).sum();
            let kept: f64 = eig.eigenvalues[..k].iter().map(|l| l.max(0.0)).sum();
            (k, kept / total)
        }
        None => energy_rank(&eig.eigenvalues, cfg.energy)?,
    };
    Ok(TransferBasis {
        q: eig.eigenvectors.leading_columns(k)?,
        energy,
        source_count,
        eigenvalues: eig.eigenvalues,
    })
}

/// `c_tgt + Q Qᵀ (g_src − c_src)`
pub fn transfer_feature(
    g_src: &[f64],
    c_src: &[f64],
    c_tgt: &[f64],
    basis: &TransferBasis,
) -> Result<Vec<f64>> {
    let d = basis.dim();
    check_dim(d, g_src.len())?;
    check_dim(d, c_src.len())?;
    check_dim(d, c_tgt.len())?;
    let dev = project(&basis.q, &sub(g_src, c_src))?;
    Ok(add(c_tgt, &dev))
}

/// Centers for every class; mean radius, hard list and scatter for the
/// regular classes; basis from the pooled scatter.
pub fn compute_stats(
    per_class: &[ClassFeatures],
    is_regular: impl Fn(usize) -> bool,
    cfg: &TransferConfig,
) -> Result<TransferStats> {
    cfg.validate()?;
    let mut classes = Vec::with_capacity(per_class.len());
    for (i, cf) in per_class.iter().enumerate() {
        if cf.is_empty() {
            return Err(FtlError::EmptyClass(i));
        }
        let center = estimate_center(cf, cfg)?;
        let (mean_radius, hard_indices) = if is_regular(i) {
            let dists: Vec<f64> = cf.features.iter().map(|g| distance(g, &center)).collect();
            let d_i = dists.iter().sum::<f64>() / dists.len() as f64;
            let hard = dists
                .iter()
                .zip(&cf.sample_ids)
                .filter(|(&d, _)| d > d_i)
                .map(|(_, &id)| id)
                .collect();
            (Some(d_i), hard)
        } else {
            (None, Vec::new())
        };
        classes.push(ClassStats {
            center,
            count: cf.len(),
            mean_radius,
            hard_indices,
        });
    }
    let regular: Vec<(&[Vec<f64>], &[f64])> = per_class
        .iter()
        .zip(&classes)
        .enumerate()
        .filter(|(i, _)| is_regular(*i))
        .map(|(_, (cf, st))| (cf.features.as_slice(), st.center.as_slice()))
        .collect();
    let source_count = regular.iter().map(|(f, _)| f.len()).sum();
    let v = accumulate_covariance(&regular)?;
    let basis = build_basis(&v, source_count, cfg)?;
    Ok(TransferStats { classes, basis })
}

/// Encodes every training sample (and its flip) and gathers them by class.
pub fn encode_by_class<E>(ds: &ImbalancedDataset, encoder: E, use_flip: bool) -> Result<Vec<ClassFeatures>>
where
    E: Fn(&[f64]) -> Result<Vec<f64>> + Sync,
{
    let encoded: Vec<(Vec<f64>, Option<Vec<f64>>)> = ds
        .samples
        .par_iter()
        .map(|s| {
            let g = encoder(&s.x)?;
            let gf = if use_flip {
                Some(encoder(&ds.flip(s).x)?)
            } else {
                None
            };
            Ok((g, gf))
        })
        .collect::<Result<_>>()?;
    let mut per_class = vec![ClassFeatures::default(); ds.n_classes];
    for (id, (s, (g, gf))) in ds.samples.iter().zip(encoded).enumerate() {
        let cf = &mut per_class[s.label];
        cf.sample_ids.push(id);
        cf.features.push(g);
        cf.poses.push(s.pose);
        if let Some(gf) = gf {
            cf.flipped.push(gf);
        }
    }
    Ok(per_class)
}

/// Recomputes all transfer statistics from scratch with the given encoder.
pub fn update_stats<E>(ds: &ImbalancedDataset, encoder: E, cfg: &TransferConfig) -> Result<TransferStats>
where
    E: Fn(&[f64]) -> Result<Vec<f64>> + Sync,
{
    let per_class = encode_by_class(ds, encoder, cfg.use_flip)?;
    compute_stats(&per_class, |i| ds.is_regular(i), cfg)
}
