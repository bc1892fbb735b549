//! End-to-end acceptance checks. Each test prints one PASS/FAIL line.

mod common;

use std::collections::BTreeMap;
use std::sync::OnceLock;

use common::{first_order_suite, penalty_suite};
use semcond::condgan::{critic_loss, train, CondGanModel, ConditionedFeature, RealBatch};
use semcond::config::{GanConfig, PipelineConfig};
use semcond::data::{write_feature_file, TaskMode};
use semcond::metrics::{confusion, harmonic, overall_and_per_class, EvalReport};
use semcond::mlp::{Activation, Layer, MlpParams};
use semcond::pipeline::{
    mode_test_set, run_pipeline, run_pipeline_data, run_v2s_data, PipelinePaths, CLASSIFIER_FILE, GAN_FILE,
    GAN_LOG_FILE, REPORT_FILE,
};
use semcond::rng::sample_gaussian;
use semcond::synthbench::{desk_config, make_world, oracle_accuracy_in, WorldSpec};
use semcond::{SeededRng, Tensor};

const SEEDS: [u64; 3] = [0, 1, 2];

fn verdict(id: u32, name: &str, pass: bool, detail: String) {
    println!(
        "criterion {id:>2} {name}: {} ({detail})",
        if pass { "PASS" } else { "FAIL" }
    );
    assert!(pass, "criterion {id} {name} failed: {detail}");
}

fn mean(v: &[f64]) -> f64 {
    v.iter().sum::<f64>() / v.len() as f64
}

/// One pipeline run on a sampled world; the test set is an independent draw
/// of 500 points per class.
struct WorldRun {
    report: EvalReport,
    oracle: f64,
}

fn run_world(spec: &WorldSpec, config: &PipelineConfig, mode: TaskMode) -> WorldRun {
    let train = make_world::<f64>(spec).unwrap();
    let test = make_world::<f64>(&spec.with_seed(spec.seed + 1000).with_samples(500)).unwrap();
    let split = spec.split();
    let out = run_pipeline_data(config, mode, &train.features, &test.features, &train.semantics, &split).unwrap();
    let labels = mode.label_space(&split, &train.catalog).unwrap();
    let eval = mode_test_set(&test.features, &split, mode).unwrap();
    let oracle = oracle_accuracy_in(spec, &eval, &labels).unwrap();
    WorldRun {
        report: out.report,
        oracle,
    }
}

fn v2s_world(spec: &WorldSpec, config: &PipelineConfig, mode: TaskMode) -> EvalReport {
    let train = make_world::<f64>(spec).unwrap();
    let test = make_world::<f64>(&spec.with_seed(spec.seed + 1000).with_samples(500)).unwrap();
    run_v2s_data(
        config,
        mode,
        &train.features,
        &test.features,
        &train.semantics,
        &spec.split(),
    )
    .unwrap()
}

/// Z3DS runs on the default world at the desk configuration, shared by the
/// transfer and capacity checks.
fn default_z3ds_runs() -> &'static Vec<WorldRun> {
    static RUNS: OnceLock<Vec<WorldRun>> = OnceLock::new();
    RUNS.get_or_init(|| {
        SEEDS
            .iter()
            .map(|&s| run_world(&WorldSpec::default_world(s), &desk_config(s), TaskMode::Z3ds))
            .collect()
    })
}

#[test]
fn criterion_01_harmonic_formula() {
    let a = harmonic(49.2, 67.0);
    let b = harmonic(43.1, 24.2);
    let mut identities = true;
    for &(s, u) in &[(12.5, 80.0), (0.0, 33.3), (99.9, 0.1), (50.0, 50.0)] {
        identities &= harmonic(s, u) == harmonic(u, s);
        identities &= harmonic(0.0, u) == 0.0 && harmonic(s, 0.0) == 0.0;
        identities &= harmonic(s, s) == s;
    }
    identities &= harmonic(0.0, 0.0) == 0.0;
    let pass = (a - 56.7).abs() <= 0.1 && (b - 31.0).abs() <= 0.1 && identities;
    verdict(
        1,
        "harmonic formula",
        pass,
        format!("{a:.3}, {b:.3}, identities {identities}"),
    );
}

#[test]
fn criterion_02_autodiff_suite() {
    let (first, name) = first_order_suite(120, 2024);
    let second = penalty_suite(12, 2025);
    let pass = first < 1e-6 && second < 1e-5;
    verdict(
        2,
        "autodiff vs finite differences",
        pass,
        format!("first-order worst {first:.2e} ({name}, 120 cases), penalty worst {second:.2e}"),
    );
}

#[test]
fn criterion_03_penalty_analytic() {
    let mut rng = SeededRng::new(3);
    let generator = MlpParams::<f64>::init(4, &[5], 4, Activation::leaky(), &mut rng);
    let real = RealBatch {
        features: sample_gaussian(&mut rng, 16, 4),
        semantics: sample_gaussian(&mut rng, 16, 2),
    };
    let zero = CondGanModel::from_parts(generator.clone(), MlpParams::zeros(6, &[7], 1), 2).unwrap();
    let p_zero = critic_loss(&zero, &real, 10.0, &mut SeededRng::new(4)).unwrap().penalty;

    // D(x, e) = 0.5 (x0 + x1 + x2 + x3): unit gradient in x everywhere.
    let weight = Tensor::new(1, 6, vec![0.5, 0.5, 0.5, 0.5, 0.0, 0.0]).unwrap();
    let linear = MlpParams::from_layers(vec![Layer {
        weight,
        bias: Tensor::zeros(1, 1),
        activation: Activation::Identity,
    }])
    .unwrap();
    let unit = CondGanModel::from_parts(generator, linear, 2).unwrap();
    let p_unit = critic_loss(&unit, &real, 10.0, &mut SeededRng::new(4)).unwrap().penalty;
    verdict(
        3,
        "gradient penalty analytic values",
        p_zero == 1.0 && p_unit == 0.0,
        format!("zero critic {p_zero}, unit linear critic {p_unit}"),
    );
}

#[test]
fn criterion_04_moment_recovery() {
    let (mu, sigma) = ([3.0, -2.0], 0.5);
    let mut rng = SeededRng::new(40);
    let data: Vec<ConditionedFeature<f64>> = (0..10_000)
        .map(|_| ConditionedFeature {
            feature: mu.iter().map(|m| m + sigma * rng.gaussian::<f64>()).collect(),
            semantic: vec![1.0],
            class: 0,
        })
        .collect();
    let config = GanConfig {
        noise_dim: 16,
        generator_hidden: vec![64],
        discriminator_hidden: vec![64],
        critic_steps: 20,
        ..GanConfig::default()
    };
    let model = train(&data, &config, &mut rng).unwrap();
    let x = model.generate(&[1.0], &mut rng, 10_000).unwrap();
    let n = x.rows() as f64;
    let mut ok = true;
    let mut detail = Vec::new();
    for (c, &target) in mu.iter().enumerate() {
        let m = (0..x.rows()).map(|r| x.get(r, c)).sum::<f64>() / n;
        let s = ((0..x.rows()).map(|r| (x.get(r, c) - m).powi(2)).sum::<f64>() / n).sqrt();
        ok &= (m - target).abs() <= 0.3 && (s - sigma).abs() <= 0.3;
        detail.push(format!("x{c}: mean {m:.3} std {s:.3}"));
    }
    verdict(4, "single-Gaussian moment recovery", ok, detail.join(", "));
}

#[test]
fn criterion_05_zero_shot_transfer() {
    let runs = default_z3ds_runs();
    let macc: Vec<f64> = runs.iter().map(|r| r.report.macc_u.unwrap()).collect();
    let oracle: Vec<f64> = runs.iter().map(|r| r.oracle).collect();
    let (m, o) = (mean(&macc), mean(&oracle));
    verdict(
        5,
        "zero-shot transfer vs Bayes oracle",
        m >= 0.9 * o,
        format!(
            "unseen mACC {macc:.1?} mean {m:.2}, oracle mean {o:.2}, bound {:.2}",
            0.9 * o
        ),
    );
}

#[test]
fn criterion_06_bias_direction() {
    let mut ok = true;
    let mut detail = Vec::new();
    for &s in &SEEDS {
        let spec = WorldSpec::default_world(s);
        let config = desk_config(s);
        let v2s = v2s_world(&spec, &config, TaskMode::Gz3ds);
        let ours = run_world(&spec, &config, TaskMode::Gz3ds).report;
        let (vu, ou, oh) = (v2s.macc_u.unwrap(), ours.macc_u.unwrap(), ours.hacc.unwrap());
        ok &= vu < ou && oh > 0.0;
        detail.push(format!("seed {s}: V2S {vu:.1} vs {ou:.1}, HACC {oh:.1}"));
    }
    verdict(6, "generalized bias direction", ok, detail.join("; "));
}

#[test]
fn criterion_07_mixup_non_inferiority() {
    let mut with = Vec::new();
    let mut without = Vec::new();
    for s in 0..5u64 {
        let spec = WorldSpec::overlap_world(s);
        let mut config = desk_config(s);
        with.push(run_world(&spec, &config, TaskMode::Z3ds).report.macc);
        config.mixup.gamma = 0.0;
        without.push(run_world(&spec, &config, TaskMode::Z3ds).report.macc);
    }
    let (a, b) = (mean(&with), mean(&without));
    verdict(
        7,
        "mixup non-inferiority",
        a >= b - 1.0,
        format!("gamma 0.5 {with:.1?} mean {a:.2}; gamma 0 {without:.1?} mean {b:.2}"),
    );
}

/// Per-class counts straight from the label lists, without a matrix.
fn brute_force(golds: &[u32], preds: &[u32], labels: &[u32]) -> (f64, f64, f64, BTreeMap<(u32, u32), u64>) {
    let mut cells = BTreeMap::new();
    for (&g, &p) in golds.iter().zip(preds) {
        *cells.entry((g, p)).or_insert(0u64) += 1;
    }
    let hits = golds.iter().zip(preds).filter(|(g, p)| g == p).count();
    let (mut acc_sum, mut iou_sum, mut present) = (0.0, 0.0, 0usize);
    for &l in labels {
        let tp = golds.iter().zip(preds).filter(|&(&g, &p)| g == l && p == l).count();
        let gold = golds.iter().filter(|&&g| g == l).count();
        let either = golds.iter().zip(preds).filter(|&(&g, &p)| g == l || p == l).count();
        if gold > 0 {
            present += 1;
            acc_sum += 100.0 * tp as f64 / gold as f64;
            iou_sum += 100.0 * tp as f64 / either as f64;
        }
    }
    let (macc, miou) = if present == 0 {
        (0.0, 0.0)
    } else {
        (acc_sum / present as f64, iou_sum / present as f64)
    };
    (100.0 * hits as f64 / golds.len() as f64, macc, miou, cells)
}

#[test]
fn criterion_08_metric_oracle() {
    let mut rng = SeededRng::new(8);
    let mut mismatches = 0;
    for _ in 0..1000 {
        let classes = 1 + rng.index(8);
        let mut labels: Vec<u32> = (0..20).collect();
        rng.shuffle(&mut labels);
        labels.truncate(classes);
        labels.sort_unstable();
        let n = 1 + rng.index(200);
        let golds: Vec<u32> = (0..n).map(|_| labels[rng.index(classes)]).collect();
        let preds: Vec<u32> = (0..n).map(|_| labels[rng.index(classes)]).collect();

        let cm = confusion(&golds, &preds, &labels).unwrap();
        let rates = overall_and_per_class(&cm).unwrap();
        let (oa, macc, miou, cells) = brute_force(&golds, &preds, &labels);
        let mut same = rates.oa == oa && rates.macc == macc && rates.miou == miou;
        for (i, &g) in labels.iter().enumerate() {
            for (j, &p) in labels.iter().enumerate() {
                same &= cm.get(i, j) == cells.get(&(g, p)).copied().unwrap_or(0);
            }
        }
        if !same {
            mismatches += 1;
        }
    }
    verdict(
        8,
        "metric brute-force equivalence",
        mismatches == 0,
        format!("{mismatches} of 1000 cases differ"),
    );
}

#[test]
fn criterion_09_determinism() {
    let dir = tempfile::tempdir().unwrap();
    let spec = WorldSpec::default_world(9).with_samples(200);
    let train = make_world::<f64>(&spec).unwrap();
    let test = make_world::<f64>(&spec.with_seed(1009).with_samples(100)).unwrap();
    let root = dir.path();
    write_feature_file(&train.features, &root.join("train.scpf")).unwrap();
    write_feature_file(&test.features, &root.join("test.scpf")).unwrap();
    train.semantics.write(&root.join("semantics.txt")).unwrap();
    spec.split().write(&root.join("split.json")).unwrap();

    let mut config = desk_config(9);
    config.gan.epochs = 2;
    config.classifier.epochs = 2;
    config.synthesis.per_class = 200;
    let run = |out: &str| {
        let paths = PipelinePaths {
            features: root.join("train.scpf"),
            test_features: root.join("test.scpf"),
            semantics: root.join("semantics.txt"),
            split: root.join("split.json"),
            out_dir: root.join(out),
        };
        run_pipeline(&config, TaskMode::Gz3ds, &paths).unwrap();
        [REPORT_FILE, GAN_FILE, GAN_LOG_FILE, CLASSIFIER_FILE].map(|f| std::fs::read(root.join(out).join(f)).unwrap())
    };
    let (a, b) = (run("a"), run("b"));
    let same: Vec<bool> = a.iter().zip(&b).map(|(x, y)| x == y).collect();
    verdict(
        9,
        "byte-identical reruns",
        same.iter().all(|&s| s),
        format!("report, gan, gan log, classifier identical: {same:?}"),
    );
}

#[test]
fn criterion_10_capacity_scaling() {
    let large: Vec<f64> = default_z3ds_runs().iter().map(|r| r.report.macc_u.unwrap()).collect();
    let small: Vec<f64> = SEEDS
        .iter()
        .map(|&s| {
            let mut config = desk_config(s);
            config.synthesis.per_class = 50;
            run_world(&WorldSpec::default_world(s), &config, TaskMode::Z3ds)
                .report
                .macc_u
                .unwrap()
        })
        .collect();
    let (a, b) = (mean(&large), mean(&small));
    verdict(
        10,
        "capacity scaling",
        a >= b,
        format!("K=5000 {large:.1?} mean {a:.2}; K=50 {small:.1?} mean {b:.2}"),
    );
}
