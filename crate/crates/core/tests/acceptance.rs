//! Acceptance criteria 1–9. Each test writes one `criterion N: PASS|FAIL`
//! line straight to stdout, so the verdicts are visible without
//! `--nocapture`.

mod common;

use std::io::Write;
use std::path::Path;
use std::process::Command;
use std::sync::OnceLock;
use std::time::{Duration, Instant};

use rayon::prelude::*;

use common::{bisection_eigenvalues, gradient_check, inverse_iteration, max_principal_sine, random_symmetric, Path as GradPath};
use ftl_core::dataset::{generate, GeneratorConfig, ImbalancedDataset};
use ftl_core::evaluation::{
    center_error_study, classifier_accuracy, evaluate, nearest_center, CenterMethod, CenterStudyConfig,
    EvalReport, FeatureSpace, DEFAULT_SUBSET_SIZES,
};
use ftl_core::network::{Adam, LossWeights, NetworkConfig, NetworkParams};
use ftl_core::numerics::matrix::norm;
use ftl_core::numerics::{project_complement, sym_eigen, SeededRng};
use ftl_core::trainer::{alternate, continue_plain, pretrain, stage1, stage2, Phase, TrainConfig, TrainReport};
use ftl_core::transfer::{transfer_feature, update_stats};

const SEEDS: u64 = 5;

fn verdict(n: u32, pass: bool, detail: &str) {
    let line = format!("criterion {n}: {} {detail}\n", if pass { "PASS" } else { "FAIL" });
    let mut out = std::io::stdout().lock();
    let _ = out.write_all(line.as_bytes());
    let _ = out.flush();
}

fn check(n: u32, pass: bool, elapsed: Duration, limit: Duration, detail: String) {
    let in_time = elapsed <= limit;
    let detail = format!("{detail} ({:.1}s, limit {}s)", elapsed.as_secs_f64(), limit.as_secs());
    verdict(n, pass && in_time, &detail);
    assert!(pass, "criterion {n}: {detail}");
    assert!(in_time, "criterion {n} exceeded its runtime limit: {detail}");
}

#[test]
fn criterion_1_gradients() {
    let t = Instant::now();
    let sets = [
        ("sfmx", LossWeights::new(1.0, 0.0, 0.0)),
        ("recon", LossWeights::new(0.0, 1.0, 0.0)),
        ("ml2", LossWeights::new(0.0, 0.0, 1.0)),
        ("total", LossWeights::default()),
    ];
    let mut worst = 0.0f64;
    let networks = 24;
    for seed in 0..networks {
        let mut rng = SeededRng::new(1000 + seed);
        let input = 2 + rng.index(4);
        let cfg = NetworkConfig {
            rich_dim: 2 + rng.index(3),
            feature_dim: 2 + rng.index(2),
            enc_hidden: vec![2 + rng.index(4)],
            dec_hidden: vec![2 + rng.index(4)],
            filter_hidden: (0..rng.index(3)).map(|_| 2 + rng.index(3)).collect(),
        };
        let classes = 2 + rng.index(4);
        let params = NetworkParams::init(&cfg, input, classes, &mut rng).unwrap();
        let batch: Vec<(Vec<f64>, usize)> =
            (0..1 + rng.index(4)).map(|_| (rng.normal_vec(input), rng.index(classes))).collect();
        for (_, w) in &sets {
            worst = worst.max(gradient_check(&params, &batch, w, GradPath::Inputs, 1e-5));
        }
        let rich: Vec<(Vec<f64>, usize)> =
            batch.iter().map(|(_, y)| (rng.normal_vec(cfg.rich_dim), *y)).collect();
        worst = worst.max(gradient_check(&params, &rich, &sets[3].1, GradPath::Features, 1e-5));
    }
    check(
        1,
        worst <= 1e-4,
        t.elapsed(),
        Duration::from_secs(30),
        format!("{networks} networks, worst relative error {worst:.2e} (tol 1e-4)"),
    );
}

#[test]
fn criterion_2_eigensolver() {
    let t = Instant::now();
    let mut rng = SeededRng::new(2);
    let (mut worst_val, mut worst_angle) = (0.0f64, 0.0f64);
    let mut matrices = 0;
    for n in 1..=8 {
        for _ in 0..25 {
            matrices += 1;
            let a = random_symmetric(n, &mut rng);
            let eig = sym_eigen(&a).unwrap();
            let want = bisection_eigenvalues(&a);
            for (g, w) in eig.eigenvalues.iter().zip(&want) {
                worst_val = worst_val.max((g - w).abs());
            }
            // eigenvalues closer than 1e-4 form one cluster; compare spans
            let mut j = 0;
            while j < n {
                let mut k = j + 1;
                while k < n && want[k - 1] - want[k] < 1e-4 {
                    k += 1;
                }
                let separated = (j == 0 || want[j - 1] - want[j] >= 1e-4) && (k == n || want[k - 1] - want[k] >= 1e-4);
                if separated && k - j == 1 {
                    let v = inverse_iteration(&a, want[j], &mut rng);
                    worst_angle = worst_angle.max(max_principal_sine(&[eig.eigenvector(j)], &[v]));
                }
                j = k;
            }
        }
    }
    check(
        2,
        worst_val <= 1e-8 && worst_angle <= 1e-6,
        t.elapsed(),
        Duration::from_secs(10),
        format!("{matrices} matrices, max eigenvalue error {worst_val:.1e}, max subspace sine {worst_angle:.1e}"),
    );
}

fn pretrained(seed: u64) -> &'static (ImbalancedDataset, NetworkParams, Duration) {
    static CACHE: OnceLock<(ImbalancedDataset, NetworkParams, Duration)> = OnceLock::new();
    assert_eq!(seed, 0);
    CACHE.get_or_init(|| {
        let t = Instant::now();
        let ds = generate(&GeneratorConfig::default()).unwrap();
        let cfg = TrainConfig::default();
        let params = pretrain(&ds, &cfg, &mut TrainReport::default()).unwrap();
        (ds, params, t.elapsed())
    })
}

#[test]
fn criterion_3_transfer_preserves_identity() {
    let (ds, params, train_time) = pretrained(0);
    let t = Instant::now();
    let cfg = TrainConfig::default();
    let stats = update_stats(ds, |x| params.encode(x), &cfg.transfer).unwrap();
    let centers = stats.centers();
    let regular: Vec<usize> = (0..ds.samples.len()).filter(|&i| ds.is_regular(ds.samples[i].label)).collect();
    let ur: Vec<usize> = ds.ur_ids.iter().copied().collect();
    let mut rng = SeededRng::new(3);
    let (mut hits, mut worst_residual) = (0usize, 0.0f64);
    let count = 1000;
    for _ in 0..count {
        let s = &ds.samples[regular[rng.index(regular.len())]];
        let tgt = ur[rng.index(ur.len())];
        let g = params.encode(&s.x).unwrap();
        let moved = transfer_feature(&g, &centers[s.label], &centers[tgt], &stats.basis).unwrap();
        if nearest_center(&centers, &moved) == tgt {
            hits += 1;
        }
        let dev: Vec<f64> = moved.iter().zip(&centers[tgt]).map(|(a, b)| a - b).collect();
        worst_residual = worst_residual.max(norm(&project_complement(&stats.basis.q, &dev).unwrap()));
    }
    let rate = hits as f64 / count as f64;
    let elapsed = t.elapsed();
    check(
        3,
        rate >= 0.95 && worst_residual <= 1e-10,
        elapsed,
        Duration::from_secs(20),
        format!(
            "{hits}/{count} nearest to target, residual outside span(Q) {worst_residual:.1e}, basis rank {} \
             (encoder pretraining {:.1}s not counted)",
            stats.basis.rank(),
            train_time.as_secs_f64()
        ),
    );
}

#[test]
fn criterion_4_center_estimation_ordering() {
    let t = Instant::now();
    let ds = generate(&GeneratorConfig::default()).unwrap();
    let cfg = CenterStudyConfig {
        repetitions: 100,
        seed: 4,
        jobs: rayon::current_num_threads(),
        ..Default::default()
    };
    let table = center_error_study(&ds, |x| Ok(x.to_vec()), &cfg).unwrap();
    let mut pass = true;
    let mut cells = Vec::new();
    for n in DEFAULT_SUBSET_SIZES {
        let p = table.get(CenterMethod::PickOne, n).unwrap();
        let a = table.get(CenterMethod::AvgAll, n).unwrap();
        let f = table.get(CenterMethod::AvgFlip, n).unwrap();
        pass &= f <= a && a <= p;
        cells.push(format!("n={n}: flip {f:.3} <= all {a:.3} <= one {p:.3}"));
    }
    check(4, pass, t.elapsed(), Duration::from_secs(60), cells.join(", "));
}

struct SeedRun {
    seed: u64,
    baseline: EvalReport,
    ftl: EvalReport,
    /// Weight-norm CV after the last stage-1 phase.
    ftl_stage1_cv: f64,
}

fn paired_runs() -> &'static (Vec<SeedRun>, Duration) {
    static CACHE: OnceLock<(Vec<SeedRun>, Duration)> = OnceLock::new();
    CACHE.get_or_init(|| {
        let t = Instant::now();
        let runs = (0..SEEDS)
            .into_par_iter()
            .map(|seed| {
                let ds = generate(&GeneratorConfig { seed, ..Default::default() }).unwrap();
                let cfg = TrainConfig { seed, ..Default::default() };
                let mut report = TrainReport::default();
                let start = pretrain(&ds, &cfg, &mut report).unwrap();

                let mut base = start.clone();
                let mut base_report = TrainReport::default();
                continue_plain(&mut base, &ds, &cfg, cfg.alternating_steps(), &mut base_report).unwrap();

                let mut ftl = start;
                let mut ftl_report = TrainReport::default();
                alternate(&mut ftl, &ds, &cfg, &mut ftl_report).unwrap();
                assert_eq!(base_report.steps, ftl_report.steps, "gradient-step budgets differ");
                let ftl_stage1_cv = ftl_report
                    .snapshots
                    .iter()
                    .rev()
                    .find(|s| s.phase == Phase::Stage1)
                    .unwrap()
                    .weight_norm_cv;
                SeedRun {
                    seed,
                    baseline: evaluate(&base, &ds, FeatureSpace::Discriminative).unwrap(),
                    ftl: evaluate(&ftl, &ds, FeatureSpace::Discriminative).unwrap(),
                    ftl_stage1_cv,
                }
            })
            .collect();
        (runs, t.elapsed())
    })
}

#[test]
fn criterion_5_weight_norm_imbalance() {
    let (runs, elapsed) = paired_runs();
    let mut imbalance_ok = true;
    let mut cv_wins = 0;
    let mut rows = Vec::new();
    for r in runs {
        let reg = r.baseline.regular_weight_norm_mean.unwrap();
        let ur = r.baseline.ur_weight_norm_mean.unwrap();
        imbalance_ok &= reg >= 1.1 * ur;
        let base_cv = r.baseline.weight_norm_stats.cv;
        if r.ftl_stage1_cv < base_cv {
            cv_wins += 1;
        }
        rows.push(format!(
            "seed {}: |w| reg {reg:.3} ur {ur:.3}, cv {base_cv:.4} -> {:.4}",
            r.seed, r.ftl_stage1_cv
        ));
    }
    check(
        5,
        imbalance_ok && cv_wins >= 4,
        *elapsed,
        Duration::from_secs(180),
        format!("CV lower after stage 1 on {cv_wins}/{SEEDS} seeds; {}", rows.join("; ")),
    );
}

#[test]
fn criterion_6_ftl_benefit() {
    let (runs, elapsed) = paired_runs();
    let mut ur_wins = 0;
    let (mut reg_base, mut reg_ftl) = (0.0, 0.0);
    let mut rows = Vec::new();
    for r in runs {
        let (bu, fu) = (r.baseline.rank1_ur.unwrap(), r.ftl.rank1_ur.unwrap());
        let (br, fr) = (r.baseline.rank1_regular.unwrap(), r.ftl.rank1_regular.unwrap());
        if fu >= bu {
            ur_wins += 1;
        }
        reg_base += br / SEEDS as f64;
        reg_ftl += fr / SEEDS as f64;
        rows.push(format!("seed {}: ur {bu:.3} -> {fu:.3}, reg {br:.3} -> {fr:.3}", r.seed));
    }
    let degradation = reg_base - reg_ftl;
    check(
        6,
        ur_wins >= 4 && degradation <= 0.01,
        *elapsed,
        Duration::from_secs(300),
        format!(
            "UR rank-1 >= baseline on {ur_wins}/{SEEDS} seeds, mean regular drop {:.2} points; {}",
            100.0 * degradation,
            rows.join("; ")
        ),
    );
}

fn toy_run(seed: u64, alpha_reg: f64) -> (f64, f64) {
    let ds = generate(&GeneratorConfig {
        n_regular: 10,
        n_ur: 0,
        samples_per_regular: 200,
        input_dim: 8,
        shared_cov_rank: 2,
        class_sep: 1.0,
        nuisance_strength: 0.0,
        noise_std: 0.3,
        holdout_per_class: 100,
        seed,
        ..Default::default()
    })
    .unwrap();
    let mut cfg = TrainConfig {
        pretrain_iters: 4000,
        total_alternations: 0,
        lr_pretrain: 2e-3,
        seed,
        ..Default::default()
    };
    cfg.network = NetworkConfig {
        rich_dim: 8,
        feature_dim: 2,
        enc_hidden: vec![32],
        dec_hidden: vec![8],
        filter_hidden: vec![32],
    };
    cfg.loss_weights = LossWeights::new(1.0, 0.0, alpha_reg);
    let params = pretrain(&ds, &cfg, &mut TrainReport::default()).unwrap();
    let mean_norm = ds.holdout.iter().map(|s| norm(&params.features(&s.x).unwrap())).sum::<f64>()
        / ds.holdout.len() as f64;
    (mean_norm, classifier_accuracy(&params, &ds.holdout).unwrap())
}

#[test]
fn criterion_7_ml2_effect() {
    let t = Instant::now();
    let results: Vec<((f64, f64), (f64, f64))> =
        (0..SEEDS).into_par_iter().map(|s| (toy_run(s, 0.0), toy_run(s, 1e-4))).collect();
    let norms_lower = results.iter().all(|((n0, _), (n1, _))| n1 < n0);
    let acc0 = results.iter().map(|r| r.0 .1).sum::<f64>() / SEEDS as f64;
    let acc1 = results.iter().map(|r| r.1 .1).sum::<f64>() / SEEDS as f64;
    let rows: Vec<String> = results
        .iter()
        .enumerate()
        .map(|(s, ((n0, a0), (n1, a1)))| format!("seed {s}: |f| {n0:.2} -> {n1:.2}, acc {a0:.3} -> {a1:.3}"))
        .collect();
    check(
        7,
        norms_lower && acc1 >= acc0 - 0.002,
        t.elapsed(),
        Duration::from_secs(60),
        format!("mean accuracy sfmx {acc0:.4}, sfmx+m-L2 {acc1:.4}; {}", rows.join("; ")),
    );
}

fn ftl(args: &[&str], cwd: &Path) {
    let out = Command::new(env!("CARGO_BIN_EXE_ftl"))
        .args(args)
        .current_dir(cwd)
        .env("FTL_LOG", "error")
        .output()
        .unwrap();
    assert!(out.status.success(), "{args:?}: {}", String::from_utf8_lossy(&out.stdout));
}

#[test]
fn criterion_8_determinism() {
    let t = Instant::now();
    let tmp = tempfile::tempdir().unwrap();
    let dir = tmp.path();
    ftl(&["generate", "--out", "gen"], dir);
    ftl(&["train", "--dataset", "gen/dataset.ftld", "--out", "train"], dir);
    ftl(&["eval", "--dataset", "gen/dataset.ftld", "--checkpoint", "train/checkpoint.ftlc", "--out", "eval"], dir);
    for stage in ["gen", "train", "eval"] {
        let manifest = format!("{stage}/manifest.json");
        ftl(&["replay", "--manifest", &manifest, "--out", &format!("replay_{stage}")], dir);
    }
    let same = |a: &str| std::fs::read(dir.join(a)).unwrap() == std::fs::read(dir.join(format!("replay_{a}"))).unwrap();
    let checkpoint = same("train/checkpoint.ftlc");
    let report = same("eval/eval_report.json");
    let dataset = same("gen/dataset.ftld");
    check(
        8,
        checkpoint && report && dataset,
        t.elapsed(),
        Duration::from_secs(600),
        format!("dataset identical {dataset}, checkpoint identical {checkpoint}, eval report identical {report}"),
    );
}

#[test]
fn criterion_9_freeze_contracts() {
    let t = Instant::now();
    let ds = generate(&GeneratorConfig {
        n_regular: 10,
        n_ur: 10,
        ..Default::default()
    })
    .unwrap();
    let cfg = TrainConfig {
        pretrain_iters: 200,
        n_iter: 50,
        lr_alternate: 1e-3,
        ..Default::default()
    };
    let mut report = TrainReport::default();
    let mut params = pretrain(&ds, &cfg, &mut report).unwrap();
    let mut opt = Adam::new(&params, cfg.lr_alternate);
    let mut rng = SeededRng::new(9);
    let mut violations = Vec::new();
    for a in 0..2 {
        let stats = update_stats(&ds, |x| params.encode(x), &cfg.transfer).unwrap();
        let before = params.clone();
        stage1(&mut params, &mut opt, &ds, &stats, &cfg, a, &mut rng, &mut report).unwrap();
        if params.enc != before.enc || params.dec != before.dec {
            violations.push(format!("stage 1 of alternation {a} moved Enc/Dec"));
        }
        if params.filter == before.filter || params.fc == before.fc {
            violations.push(format!("stage 1 of alternation {a} left R or FC untouched"));
        }
        let before = params.clone();
        stage2(&mut params, &mut opt, &ds, &cfg, a, &mut rng, &mut report).unwrap();
        if params.fc != before.fc {
            violations.push(format!("stage 2 of alternation {a} moved FC"));
        }
        if params.enc == before.enc || params.filter == before.filter {
            violations.push(format!("stage 2 of alternation {a} left Enc or R untouched"));
        }
    }
    let detail = if violations.is_empty() {
        "stage 1 kept Enc/Dec and stage 2 kept FC bit-identical over 2 alternations".to_string()
    } else {
        violations.join("; ")
    };
    check(9, violations.is_empty(), t.elapsed(), Duration::from_secs(60), detail);
}
