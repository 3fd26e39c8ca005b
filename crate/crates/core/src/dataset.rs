//! Synthetic imbalanced datasets with a shared within-class covariance.
//!
//! Class `i` is drawn as `x = μ_i + B z + pose · u (+ σ ε)`. The low-rank
//! factor `B` and nuisance direction `u` are common to every class, so the
//! shared-covariance assumption behind feature transfer holds exactly.
//!
//! The flip augmentation `M` is a fixed linear involution. With
//! [`Augmentation::Mirror`] it reverses coordinate order (the vector analogue
//! of a horizontal image flip); class means are mirror-symmetric, `u` is
//! mirror-antisymmetric and every column of `B` is one or the other, so a
//! flipped sample is distributed like a sample of the same class with the
//! pose negated.

use std::collections::BTreeSet;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::codec::{read_file, Decoder, Encoder};
use crate::error::{check_dim, FtlError, Result};
use crate::numerics::matrix::{axpy, norm};
use crate::numerics::{Matrix, SeededRng};

pub const DATASET_MAGIC: &[u8; 4] = b"FTLD";
pub const DATASET_VERSION: u16 = 1;
pub const DEFAULT_UR_THRESHOLD: usize = 20;
pub const POSE_LIMIT: f64 = 90.0;

#[derive(Debug, Clone, PartialEq)]
pub struct Sample {
    pub x: Vec<f64>,
    pub label: usize,
    /// Synthetic yaw in degrees, within `[-90, 90]`.
    pub pose: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum Augmentation {
    /// `M = I`: only the pose is negated.
    Identity,
    /// `M` reverses coordinate order.
    #[default]
    Mirror,
}

impl Augmentation {
    pub fn apply(self, x: &[f64]) -> Vec<f64> {
        match self {
            Augmentation::Identity => x.to_vec(),
            Augmentation::Mirror => x.iter().rev().copied().collect(),
        }
    }

    /// `(M x, label, −pose)`
    pub fn flip(self, s: &Sample) -> Sample {
        Sample {
            x: self.apply(&s.x),
            label: s.label,
            pose: -s.pose,
        }
    }

    fn code(self) -> u8 {
        match self {
            Augmentation::Identity => 0,
            Augmentation::Mirror => 1,
        }
    }

    fn from_code(c: u8) -> Result<Self> {
        match c {
            0 => Ok(Augmentation::Identity),
            1 => Ok(Augmentation::Mirror),
            _ => Err(FtlError::CorruptRecord(format!("unknown augmentation {c}"))),
        }
    }

    /// Symmetric (`sign = 1`) or antisymmetric (`sign = -1`) part of `v`.
    fn part(self, v: &[f64], sign: f64) -> Vec<f64> {
        let m = self.apply(v);
        v.iter().zip(&m).map(|(a, b)| 0.5 * (a + sign * b)).collect()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct GeneratorConfig {
    pub n_regular: usize,
    pub n_ur: usize,
    pub samples_per_regular: usize,
    pub samples_per_ur: usize,
    pub input_dim: usize,
    /// Class means lie on a sphere of radius `class_sep · √input_dim`.
    pub class_sep: f64,
    pub shared_cov_rank: usize,
    /// Scale of each column of the shared factor `B`.
    pub factor_scale: f64,
    /// Input-space displacement per degree of pose along `u`.
    pub nuisance_strength: f64,
    /// Isotropic noise standard deviation (shared across classes).
    pub noise_std: f64,
    pub ur_threshold: usize,
    /// Held-out probe samples drawn per class for evaluation.
    pub holdout_per_class: usize,
    pub augmentation: Augmentation,
    pub seed: u64,
}

impl Default for GeneratorConfig {
    fn default() -> Self {
        GeneratorConfig {
            n_regular: 50,
            n_ur: 50,
            samples_per_regular: 200,
            samples_per_ur: 5,
            input_dim: 32,
            class_sep: 0.4,
            shared_cov_rank: 8,
            factor_scale: 1.0,
            nuisance_strength: 0.15,
            noise_std: 0.3,
            ur_threshold: DEFAULT_UR_THRESHOLD,
            holdout_per_class: 5,
            augmentation: Augmentation::Mirror,
            seed: 0,
        }
    }
}

impl GeneratorConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(FtlError::ConfigInvalid(m));
        if self.n_regular + self.n_ur == 0 {
            return bad("at least one class is required".into());
        }
        if self.input_dim == 0 {
            return bad("input_dim must be positive".into());
        }
        if self.n_ur > 0 && (self.samples_per_ur == 0 || self.samples_per_ur > self.ur_threshold)
        {
            return bad(format!(
                "samples_per_ur must lie in 1..={} (ur_threshold), got {}",
                self.ur_threshold, self.samples_per_ur
            ));
        }
        if self.n_regular > 0 && self.samples_per_regular <= self.ur_threshold {
            return bad(format!(
                "samples_per_regular must exceed ur_threshold {}, got {}",
                self.ur_threshold, self.samples_per_regular
            ));
        }
        if self.shared_cov_rank > self.input_dim {
            return bad(format!(
                "shared_cov_rank {} exceeds input_dim {}",
                self.shared_cov_rank, self.input_dim
            ));
        }
        if self.augmentation == Augmentation::Mirror
            && self.nuisance_strength != 0.0
            && self.input_dim < 2
        {
            return bad("mirror augmentation with a nuisance needs input_dim >= 2".into());
        }
        for (name, v) in [
            ("class_sep", self.class_sep),
            ("factor_scale", self.factor_scale),
            ("nuisance_strength", self.nuisance_strength),
            ("noise_std", self.noise_std),
        ] {
            if !v.is_finite() || v < 0.0 {
                return bad(format!("{name} must be finite and nonnegative, got {v}"));
            }
        }
        Ok(())
    }
}

/// Labeled samples partitioned into regular and under-represented classes.
#[derive(Debug, Clone, PartialEq)]
pub struct ImbalancedDataset {
    pub samples: Vec<Sample>,
    pub n_classes: usize,
    pub regular_ids: BTreeSet<usize>,
    pub ur_ids: BTreeSet<usize>,
    pub input_dim: usize,
    pub ur_threshold: usize,
    pub augmentation: Augmentation,
    /// Held-out probes; not subject to the per-class count rule.
    pub holdout: Vec<Sample>,
}

impl ImbalancedDataset {
    pub fn flip(&self, s: &Sample) -> Sample {
        self.augmentation.flip(s)
    }

    pub fn class_counts(&self) -> Vec<usize> {
        let mut counts = vec![0; self.n_classes];
        for s in &self.samples {
            counts[s.label] += 1;
        }
        counts
    }

    /// Training-sample indices grouped by class.
    pub fn indices_by_class(&self) -> Vec<Vec<usize>> {
        let mut by = vec![Vec::new(); self.n_classes];
        for (i, s) in self.samples.iter().enumerate() {
            by[s.label].push(i);
        }
        by
    }

    pub fn is_regular(&self, class: usize) -> bool {
        self.regular_ids.contains(&class)
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(FtlError::CorruptRecord(m));
        if self.n_classes == 0 || self.input_dim == 0 {
            return bad("empty dataset header".into());
        }
        if !self.regular_ids.is_disjoint(&self.ur_ids) {
            return bad("regular and UR class sets overlap".into());
        }
        for s in self.samples.iter().chain(&self.holdout) {
            if s.label >= self.n_classes {
                return Err(FtlError::LabelOutOfRange {
                    label: s.label,
                    n_classes: self.n_classes,
                });
            }
            check_dim(self.input_dim, s.x.len())?;
            if !s.pose.is_finite() || s.x.iter().any(|v| !v.is_finite()) {
                return Err(FtlError::NonFinite("sample"));
            }
        }
        for (class, &count) in self.class_counts().iter().enumerate() {
            let reg = self.regular_ids.contains(&class);
            let ur = self.ur_ids.contains(&class);
            if count == 0 {
                continue;
            }
            if !reg && !ur {
                return bad(format!("class {class} is neither regular nor UR"));
            }
            if reg && count <= self.ur_threshold {
                return bad(format!(
                    "regular class {class} has {count} <= {} samples",
                    self.ur_threshold
                ));
            }
            if ur && count > self.ur_threshold {
                return bad(format!(
                    "UR class {class} has {count} > {} samples",
                    self.ur_threshold
                ));
            }
        }
        Ok(())
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        let mut e = Encoder::new(DATASET_MAGIC, DATASET_VERSION);
        e.usize(self.input_dim);
        e.usize(self.n_classes);
        e.usize(self.ur_threshold);
        e.u8(self.augmentation.code());
        for ids in [&self.regular_ids, &self.ur_ids] {
            e.usize(ids.len());
            ids.iter().for_each(|&id| e.usize(id));
        }
        for set in [&self.samples, &self.holdout] {
            e.usize(set.len());
            for s in set {
                e.usize(s.label);
                e.f64(s.pose);
                e.f64s(&s.x);
            }
        }
        e.write_atomic(path)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let bytes = read_file(path)?;
        Self::decode(&bytes)
    }

    pub fn decode(bytes: &[u8]) -> Result<Self> {
        let mut d = Decoder::open(bytes, DATASET_MAGIC, DATASET_VERSION, "dataset")?;
        let input_dim = d.len(0)?;
        let n_classes = d.len(0)?;
        let ur_threshold = d.len(0)?;
        let augmentation = Augmentation::from_code(d.u8()?)?;
        let mut id_sets = Vec::with_capacity(2);
        for _ in 0..2 {
            let n = d.len(8)?;
            let mut ids = BTreeSet::new();
            for _ in 0..n {
                ids.insert(d.len(0)?);
            }
            id_sets.push(ids);
        }
        let mut sets = Vec::with_capacity(2);
        for _ in 0..2 {
            let n = d.len(16 + 8 * input_dim)?;
            let mut set = Vec::with_capacity(n);
            for _ in 0..n {
                let label = d.len(0)?;
                let pose = d.f64()?;
                let x = d.f64s(input_dim)?;
                set.push(Sample { x, label, pose });
            }
            sets.push(set);
        }
        d.finish()?;
        let holdout = sets.pop().unwrap();
        let samples = sets.pop().unwrap();
        let ur_ids = id_sets.pop().unwrap();
        let regular_ids = id_sets.pop().unwrap();
        let ds = ImbalancedDataset {
            samples,
            n_classes,
            regular_ids,
            ur_ids,
            input_dim,
            ur_threshold,
            augmentation,
            holdout,
        };
        ds.validate().map_err(|e| match e {
            FtlError::CorruptRecord(_) => e,
            other => FtlError::CorruptRecord(other.to_string()),
        })?;
        Ok(ds)
    }
}

/// Parameters the generator drew; available to tests and diagnostics only.
#[derive(Debug, Clone)]
pub struct GroundTruth {
    pub means: Vec<Vec<f64>>,
    /// Shared factor `B` (`input_dim × shared_cov_rank`); `None` at rank 0.
    pub factor: Option<Matrix>,
    pub nuisance_dir: Vec<f64>,
    pub nuisance_strength: f64,
    pub noise_std: f64,
}

impl GroundTruth {
    /// Exact within-class covariance `B Bᵀ + s² Var(pose) u uᵀ + σ² I`.
    pub fn within_class_covariance(&self) -> Matrix {
        let d = self.nuisance_dir.len();
        let mut cov = match &self.factor {
            Some(b) => b.matmul(&b.transpose()).expect("square"),
            None => Matrix::zeros(d, d),
        };
        // pose ~ U[-90, 90] has variance 90² / 3
        let pose_var = POSE_LIMIT * POSE_LIMIT / 3.0;
        let s2 = self.nuisance_strength * self.nuisance_strength * pose_var;
        cov.add_outer(s2, &self.nuisance_dir, &self.nuisance_dir)
            .expect("dims");
        for i in 0..d {
            cov[(i, i)] += self.noise_std * self.noise_std;
        }
        cov
    }
}

pub fn generate(cfg: &GeneratorConfig) -> Result<ImbalancedDataset> {
    generate_with_truth(cfg).map(|(ds, _)| ds)
}

pub fn generate_with_truth(cfg: &GeneratorConfig) -> Result<(ImbalancedDataset, GroundTruth)> {
    cfg.validate()?;
    let mut rng = SeededRng::new(cfg.seed);
    let d = cfg.input_dim;
    let aug = cfg.augmentation;

    let nuisance_dir = {
        let raw = rng.normal_vec(d);
        let v = match aug {
            Augmentation::Mirror => aug.part(&raw, -1.0),
            Augmentation::Identity => raw,
        };
        unit(v)
    };

    let factor = if cfg.shared_cov_rank == 0 {
        None
    } else {
        let cols: Vec<Vec<f64>> = (0..cfg.shared_cov_rank)
            .map(|j| {
                let raw = rng.normal_vec(d);
                let v = match aug {
                    Augmentation::Mirror => aug.part(&raw, if j % 2 == 0 { 1.0 } else { -1.0 }),
                    Augmentation::Identity => raw,
                };
                let mut v = unit(v);
                v.iter_mut().for_each(|x| *x *= cfg.factor_scale);
                v
            })
            .collect();
        Some(Matrix::from_columns(&cols)?)
    };

    let n_classes = cfg.n_regular + cfg.n_ur;
    let radius = cfg.class_sep * (d as f64).sqrt();
    let means: Vec<Vec<f64>> = (0..n_classes)
        .map(|_| {
            let raw = rng.normal_vec(d);
            let v = match aug {
                Augmentation::Mirror => aug.part(&raw, 1.0),
                Augmentation::Identity => raw,
            };
            let mut v = unit(v);
            v.iter_mut().for_each(|x| *x *= radius);
            v
        })
        .collect();

    let truth = GroundTruth {
        means,
        factor,
        nuisance_dir,
        nuisance_strength: cfg.nuisance_strength,
        noise_std: cfg.noise_std,
    };

    let draw = |rng: &mut SeededRng, label: usize| -> Sample {
        let mut x = truth.means[label].clone();
        if let Some(b) = &truth.factor {
            let z = rng.normal_vec(b.cols());
            let bz = b.matvec(&z).expect("dims");
            axpy(1.0, &bz, &mut x);
        }
        let pose = rng.uniform(-POSE_LIMIT, POSE_LIMIT);
        axpy(pose * cfg.nuisance_strength, &truth.nuisance_dir, &mut x);
        if cfg.noise_std > 0.0 {
            let eps = rng.normal_vec(d);
            axpy(cfg.noise_std, &eps, &mut x);
        }
        Sample { x, label, pose }
    };

    let mut samples = Vec::new();
    for label in 0..n_classes {
        let count = if label < cfg.n_regular {
            cfg.samples_per_regular
        } else {
            cfg.samples_per_ur
        };
        for _ in 0..count {
            samples.push(draw(&mut rng, label));
        }
    }
    let mut holdout = Vec::with_capacity(n_classes * cfg.holdout_per_class);
    for label in 0..n_classes {
        for _ in 0..cfg.holdout_per_class {
            holdout.push(draw(&mut rng, label));
        }
    }

    let ds = ImbalancedDataset {
        samples,
        n_classes,
        regular_ids: (0..cfg.n_regular).collect(),
        ur_ids: (cfg.n_regular..n_classes).collect(),
        input_dim: d,
        ur_threshold: cfg.ur_threshold,
        augmentation: aug,
        holdout,
    };
    ds.validate()?;
    Ok((ds, truth))
}

fn unit(mut v: Vec<f64>) -> Vec<f64> {
    let n = norm(&v);
    if n > 0.0 {
        v.iter_mut().for_each(|x| *x /= n);
    }
    v
}
