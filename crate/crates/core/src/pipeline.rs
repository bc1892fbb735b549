//! End-to-end runs: split, mixup, adversarial training, feature synthesis,
//! classifier training and evaluation.
//!
//! The GAN-only baseline is the same run with `mixup.gamma = 0`.

use std::path::{Path, PathBuf};

use crate::classifier::{
    label_embeddings, synthesize_training_set, train_classifier, v2s_baseline_train, v2s_predict_batch, ClassifierModel,
};
use crate::condgan::{self, CondGanModel, ConditionedFeature};
use crate::config::PipelineConfig;
use crate::data::{
    apply_split, read_feature_file, read_semantic_table, LabeledFeatureSet, SemanticTable, SplitSpec, TaskMode,
};
use crate::error::{Error, Result, StageContext};
use crate::fsio::write_atomic;
use crate::metrics::{evaluate, EvalReport};
use crate::mixup::synthesize_mixup;
use crate::rng::SeededRng;
use crate::scalar::Scalar;

/// Real seen-class pairs followed by `floor(gamma * N)` mixup pairs.
pub fn gan_training_pairs<T: Scalar>(
    seen: &LabeledFeatureSet<T>,
    semantics: &SemanticTable<T>,
    config: &PipelineConfig,
    rng: &mut SeededRng,
) -> Result<Vec<ConditionedFeature<T>>> {
    let mut pairs = Vec::with_capacity(seen.len());
    for (&label, rows) in &seen.indices_by_label() {
        let name = seen.catalog().name(label).expect("labels are in the catalog");
        let e = semantics.resolve(name)?;
        for &r in rows {
            pairs.push((r, label, e.clone()));
        }
    }
    pairs.sort_by_key(|p| p.0);
    let mut out: Vec<ConditionedFeature<T>> = pairs
        .into_iter()
        .map(|(r, class, semantic)| ConditionedFeature {
            feature: seen.feature(r).to_vec(),
            semantic,
            class,
        })
        .collect();
    if config.mixup.gamma > 0.0 {
        out.extend(synthesize_mixup(
            seen,
            semantics,
            config.mixup.neighbors,
            config.mixup.gamma,
            rng,
        )?);
    }
    Ok(out)
}

/// Test points whose gold class is in the mode's label space. Every label
/// must lie on one side of the split.
pub fn mode_test_set<T: Scalar>(
    test: &LabeledFeatureSet<T>,
    split: &SplitSpec,
    mode: TaskMode,
) -> Result<LabeledFeatureSet<T>> {
    let parts = apply_split(test, split)?;
    let picked = match mode {
        TaskMode::C3ds => parts.seen,
        TaskMode::Z3ds => parts.unseen,
        TaskMode::Gz3ds => Some(test.clone()),
    };
    picked.ok_or_else(|| Error::Data(format!("test features hold no points for {mode}")))
}

/// Scores a trained classifier on the test points of the mode's label space.
/// The classifier must predict exactly that label space.
pub fn evaluate_classifier<T: Scalar>(
    classifier: &ClassifierModel<T>,
    test: &LabeledFeatureSet<T>,
    split: &SplitSpec,
    mode: TaskMode,
) -> Result<EvalReport> {
    if classifier.feature_dim() != test.feature_dim() {
        return Err(Error::Shape(format!(
            "classifier expects {}-D features, test features are {}-D",
            classifier.feature_dim(),
            test.feature_dim()
        )));
    }
    let labels = mode.label_space(split, test.catalog())?;
    if classifier.labels() != labels.as_slice() {
        return Err(Error::Data(format!(
            "classifier predicts {:?}, {mode} label space is {labels:?}",
            classifier.labels()
        )));
    }
    let eval_set = mode_test_set(test, split, mode)?;
    let preds = classifier.predict_batch(eval_set.features())?;
    evaluate(eval_set.labels(), &preds, mode, split, test.catalog())
}

/// Independent random streams for each stage, forked from one seed in stage
/// order. Running the stages separately with the same seed reproduces a
/// full run.
pub struct StageRngs {
    pub mixup: SeededRng,
    pub gan: SeededRng,
    pub synth: SeededRng,
    pub classifier: SeededRng,
}

impl StageRngs {
    pub fn new(seed: u64) -> Self {
        let mut root = SeededRng::new(seed);
        StageRngs {
            mixup: root.fork(),
            gan: root.fork(),
            synth: root.fork(),
            classifier: root.fork(),
        }
    }
}

pub struct PipelineOutput<T> {
    pub gan: CondGanModel<T>,
    pub classifier: ClassifierModel<T>,
    pub report: EvalReport,
}

/// Runs every stage in memory with the streams of [`StageRngs`].
pub fn run_pipeline_data<T: Scalar>(
    config: &PipelineConfig,
    mode: TaskMode,
    train: &LabeledFeatureSet<T>,
    test: &LabeledFeatureSet<T>,
    semantics: &SemanticTable<T>,
    split: &SplitSpec,
) -> Result<PipelineOutput<T>> {
    config.validate().stage("config")?;
    if train.catalog() != test.catalog() {
        return Err(Error::Data(
            "train and test feature files list different classes".into(),
        ))
        .stage("data");
    }
    if train.feature_dim() != test.feature_dim() {
        return Err(Error::Shape(format!(
            "train features have dim {}, test features {}",
            train.feature_dim(),
            test.feature_dim()
        )))
        .stage("data");
    }
    let catalog = train.catalog();
    let labels = mode.label_space(split, catalog).stage("split")?;
    let seen = apply_split(train, split)
        .stage("split")?
        .seen
        .ok_or_else(|| Error::Data("no seen-class training features".into()))
        .stage("split")?;

    let mut rngs = StageRngs::new(config.seed);
    let pairs = gan_training_pairs(&seen, semantics, config, &mut rngs.mixup).stage("mixup")?;
    let gan = condgan::train(&pairs, &config.gan, &mut rngs.gan).stage("gan")?;

    let classifier = if labels.len() == 1 {
        ClassifierModel::constant(train.feature_dim(), labels[0])
    } else {
        let synth = synthesize_training_set(
            &gan,
            semantics,
            catalog,
            &labels,
            config.synthesis.per_class,
            &mut rngs.synth,
        )
        .stage("synthesis")?;
        train_classifier(&synth, &config.classifier, &mut rngs.classifier).stage("classifier")?
    };

    let report = evaluate_classifier(&classifier, test, split, mode)
        .stage("evaluate")?
        .with_config(config);
    Ok(PipelineOutput {
        gan,
        classifier,
        report,
    })
}

/// The embedding-regression baseline on the same data: regress seen features
/// onto their class embeddings, then label test points by the nearest
/// candidate embedding in the mode's label space.
pub fn run_v2s_data<T: Scalar>(
    config: &PipelineConfig,
    mode: TaskMode,
    train: &LabeledFeatureSet<T>,
    test: &LabeledFeatureSet<T>,
    semantics: &SemanticTable<T>,
    split: &SplitSpec,
) -> Result<EvalReport> {
    config.validate().stage("config")?;
    let catalog = train.catalog();
    let labels = mode.label_space(split, catalog).stage("split")?;
    let seen = apply_split(train, split)
        .stage("split")?
        .seen
        .ok_or_else(|| Error::Data("no seen-class training features".into()))
        .stage("split")?;
    let mut rng = SeededRng::new(config.seed);
    let model = v2s_baseline_train(&seen, semantics, &config.v2s, &mut rng).stage("v2s")?;
    let candidates = label_embeddings(semantics, catalog, &labels).stage("v2s")?;
    let eval_set = mode_test_set(test, split, mode).stage("evaluate")?;
    let preds = v2s_predict_batch(&model, eval_set.features(), &candidates).stage("evaluate")?;
    Ok(evaluate(eval_set.labels(), &preds, mode, split, catalog)
        .stage("evaluate")?
        .with_config(config))
}

/// Input files of a run.
#[derive(Clone, Debug)]
pub struct PipelinePaths {
    pub features: PathBuf,
    pub test_features: PathBuf,
    pub semantics: PathBuf,
    pub split: PathBuf,
    pub out_dir: PathBuf,
}

pub const GAN_FILE: &str = "gan.scpg";
pub const GAN_LOG_FILE: &str = "gan_log.jsonl";
pub const CLASSIFIER_FILE: &str = "classifier.scpc";
pub const REPORT_FILE: &str = "report.json";

/// Reads the inputs, runs every stage and writes the GAN checkpoint and log,
/// the classifier checkpoint and the report into `out_dir`.
pub fn run_pipeline(config: &PipelineConfig, mode: TaskMode, paths: &PipelinePaths) -> Result<EvalReport> {
    let train = read_feature_file::<f64>(&paths.features).stage("data")?;
    let test = read_feature_file::<f64>(&paths.test_features).stage("data")?;
    let semantics = read_semantic_table::<f64>(&paths.semantics, 0).stage("data")?;
    let split = SplitSpec::read(&paths.split).stage("data")?;
    let out = run_pipeline_data(config, mode, &train, &test, &semantics, &split)?;
    write_outputs(&out, config, &paths.out_dir)?;
    Ok(out.report)
}

pub fn write_outputs<T: Scalar>(out: &PipelineOutput<T>, config: &PipelineConfig, dir: &Path) -> Result<()> {
    std::fs::create_dir_all(dir)
        .map_err(|e| Error::io(dir, e))
        .stage("output")?;
    let hash = config.hash();
    out.gan.save(&dir.join(GAN_FILE), hash).stage("output")?;
    write_atomic(&dir.join(GAN_LOG_FILE), out.gan.log_jsonl().as_bytes()).stage("output")?;
    out.classifier.save(&dir.join(CLASSIFIER_FILE), hash).stage("output")?;
    write_atomic(&dir.join(REPORT_FILE), out.report.to_json().as_bytes()).stage("output")?;
    Ok(())
}
