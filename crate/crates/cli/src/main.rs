use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use semcond::classifier::{synthesize_training_set, train_classifier, ClassifierModel};
use semcond::condgan::{self, CondGanModel};
use semcond::config::PipelineConfig;
use semcond::data::{apply_split, read_feature_file, read_semantic_table, write_feature_file, SplitSpec, TaskMode};
use semcond::fsio::write_atomic;
use semcond::pipeline::{
    evaluate_classifier, gan_training_pairs, run_pipeline, PipelinePaths, StageRngs, CLASSIFIER_FILE, GAN_FILE,
    GAN_LOG_FILE, REPORT_FILE,
};
use semcond::synthbench::{desk_config, make_world, WorldSpec};
use semcond::{Error, Result};

const SYNTH_FILE: &str = "synthetic.scpf";

#[derive(Parser)]
#[command(
    name = "semcond",
    version,
    about = "Semantics-conditioned feature generation for point cloud segmentation"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Sample a Gaussian-mixture world and write train/test features,
    /// semantics, split and a matching config.
    MakeSynthetic(SyntheticArgs),
    /// Train the conditional GAN on seen-class features (plus mixup).
    TrainGan(TrainGanArgs),
    /// Generate pseudo-features for every class of a mode's label space.
    SynthFeatures(SynthArgs),
    /// Train the softmax classifier on a feature file.
    TrainClassifier(TrainClassifierArgs),
    /// Score a classifier on test features.
    Evaluate(EvaluateArgs),
    /// Run every stage and write checkpoints and the report.
    RunPipeline(RunArgs),
}

#[derive(Clone, Copy, ValueEnum)]
enum Mode {
    C3ds,
    Z3ds,
    Gz3ds,
}

impl From<Mode> for TaskMode {
    fn from(m: Mode) -> Self {
        match m {
            Mode::C3ds => TaskMode::C3ds,
            Mode::Z3ds => TaskMode::Z3ds,
            Mode::Gz3ds => TaskMode::Gz3ds,
        }
    }
}

#[derive(Clone, Copy, ValueEnum)]
enum WorldKind {
    Default,
    Overlap,
}

#[derive(Args)]
struct ConfigArgs {
    /// JSON config; defaults apply when omitted.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Overrides the config seed.
    #[arg(long)]
    seed: Option<u64>,
}

impl ConfigArgs {
    fn load(&self) -> Result<PipelineConfig> {
        let mut config = match &self.config {
            Some(path) => PipelineConfig::read(path)?,
            None => PipelineConfig::default(),
        };
        if let Some(seed) = self.seed {
            config.seed = seed;
        }
        config.validate()?;
        Ok(config)
    }
}

#[derive(Args)]
struct SyntheticArgs {
    #[arg(long, value_enum, default_value = "default")]
    world: WorldKind,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Training samples per class.
    #[arg(long)]
    samples: Option<usize>,
    /// Test samples per class.
    #[arg(long, default_value_t = 500)]
    test_samples: usize,
    #[arg(long)]
    out_dir: PathBuf,
}

#[derive(Args)]
struct TrainGanArgs {
    #[arg(long)]
    features: PathBuf,
    #[arg(long)]
    semantics: PathBuf,
    #[arg(long)]
    split: PathBuf,
    #[command(flatten)]
    config: ConfigArgs,
    #[arg(long)]
    out_dir: PathBuf,
}

#[derive(Args)]
struct SynthArgs {
    /// GAN checkpoint.
    #[arg(long)]
    gan: PathBuf,
    /// Any feature file over the same classes; supplies the class names.
    #[arg(long)]
    features: PathBuf,
    #[arg(long)]
    semantics: PathBuf,
    #[arg(long)]
    split: PathBuf,
    #[arg(long, value_enum)]
    mode: Mode,
    #[command(flatten)]
    config: ConfigArgs,
    #[arg(long)]
    out_dir: PathBuf,
}

#[derive(Args)]
struct TrainClassifierArgs {
    #[arg(long)]
    features: PathBuf,
    #[command(flatten)]
    config: ConfigArgs,
    #[arg(long)]
    out_dir: PathBuf,
}

#[derive(Args)]
struct EvaluateArgs {
    /// Classifier checkpoint.
    #[arg(long)]
    classifier: PathBuf,
    #[arg(long)]
    test_features: PathBuf,
    #[arg(long)]
    split: PathBuf,
    #[arg(long, value_enum)]
    mode: Mode,
    /// Where to write the report; printed to standard output otherwise.
    #[arg(long)]
    out_dir: Option<PathBuf>,
}

#[derive(Args)]
struct RunArgs {
    #[arg(long)]
    features: PathBuf,
    #[arg(long)]
    test_features: PathBuf,
    #[arg(long)]
    semantics: PathBuf,
    #[arg(long)]
    split: PathBuf,
    #[arg(long, value_enum)]
    mode: Mode,
    #[command(flatten)]
    config: ConfigArgs,
    #[arg(long)]
    out_dir: PathBuf,
}

fn create_dir(dir: &Path) -> Result<()> {
    std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))
}

fn make_synthetic(args: &SyntheticArgs) -> Result<()> {
    let mut spec = match args.world {
        WorldKind::Default => WorldSpec::default_world(args.seed),
        WorldKind::Overlap => WorldSpec::overlap_world(args.seed),
    };
    if let Some(n) = args.samples {
        spec = spec.with_samples(n);
    }
    let test_spec = spec
        .with_seed(args.seed.wrapping_add(1000))
        .with_samples(args.test_samples);
    let train = make_world::<f64>(&spec)?;
    let test = make_world::<f64>(&test_spec)?;
    let dir = &args.out_dir;
    create_dir(dir)?;
    write_feature_file(&train.features, &dir.join("train.scpf"))?;
    write_feature_file(&test.features, &dir.join("test.scpf"))?;
    train.semantics.write(&dir.join("semantics.txt"))?;
    spec.split().write(&dir.join("split.json"))?;
    desk_config(args.seed).write(&dir.join("config.json"))?;
    let world = serde_json::to_string_pretty(&spec).map_err(Error::from)? + "\n";
    write_atomic(&dir.join("world.json"), world.as_bytes())
}

fn train_gan(args: &TrainGanArgs) -> Result<()> {
    let config = args.config.load()?;
    let train = read_feature_file::<f64>(&args.features)?;
    let semantics = read_semantic_table::<f64>(&args.semantics, 0)?;
    let split = SplitSpec::read(&args.split)?;
    let seen = apply_split(&train, &split)?
        .seen
        .ok_or_else(|| Error::Data("no seen-class training features".into()))?;
    let mut rngs = StageRngs::new(config.seed);
    let pairs = gan_training_pairs(&seen, &semantics, &config, &mut rngs.mixup)?;
    let gan = condgan::train(&pairs, &config.gan, &mut rngs.gan)?;
    create_dir(&args.out_dir)?;
    gan.save(&args.out_dir.join(GAN_FILE), config.hash())?;
    write_atomic(&args.out_dir.join(GAN_LOG_FILE), gan.log_jsonl().as_bytes())
}

fn synth_features(args: &SynthArgs) -> Result<()> {
    let config = args.config.load()?;
    let (gan, _) = CondGanModel::<f64>::load(&args.gan)?;
    let catalog = read_feature_file::<f64>(&args.features)?.catalog().clone();
    let semantics = read_semantic_table::<f64>(&args.semantics, 0)?;
    let split = SplitSpec::read(&args.split)?;
    let labels = TaskMode::from(args.mode).label_space(&split, &catalog)?;
    let mut rngs = StageRngs::new(config.seed);
    let set = synthesize_training_set(
        &gan,
        &semantics,
        &catalog,
        &labels,
        config.synthesis.per_class,
        &mut rngs.synth,
    )?;
    create_dir(&args.out_dir)?;
    write_feature_file(&set, &args.out_dir.join(SYNTH_FILE))
}

fn train_classifier_cmd(args: &TrainClassifierArgs) -> Result<()> {
    let config = args.config.load()?;
    let set = read_feature_file::<f64>(&args.features)?;
    let mut rngs = StageRngs::new(config.seed);
    let labels: Vec<u32> = set.indices_by_label().into_keys().collect();
    let model = if labels.len() == 1 {
        ClassifierModel::constant(set.feature_dim(), labels[0])
    } else {
        train_classifier(&set, &config.classifier, &mut rngs.classifier)?
    };
    create_dir(&args.out_dir)?;
    model.save(&args.out_dir.join(CLASSIFIER_FILE), config.hash())
}

fn evaluate_cmd(args: &EvaluateArgs) -> Result<()> {
    let (model, _) = ClassifierModel::<f64>::load(&args.classifier)?;
    let test = read_feature_file::<f64>(&args.test_features)?;
    let split = SplitSpec::read(&args.split)?;
    let report = evaluate_classifier(&model, &test, &split, args.mode.into())?;
    match &args.out_dir {
        Some(dir) => {
            create_dir(dir)?;
            write_atomic(&dir.join(REPORT_FILE), report.to_json().as_bytes())
        }
        None => {
            print!("{}", report.to_json());
            Ok(())
        }
    }
}

fn run_pipeline_cmd(args: &RunArgs) -> Result<()> {
    let config = args.config.load()?;
    let paths = PipelinePaths {
        features: args.features.clone(),
        test_features: args.test_features.clone(),
        semantics: args.semantics.clone(),
        split: args.split.clone(),
        out_dir: args.out_dir.clone(),
    };
    run_pipeline(&config, args.mode.into(), &paths)?;
    Ok(())
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    let result = match &cli.command {
        Command::MakeSynthetic(a) => make_synthetic(a),
        Command::TrainGan(a) => train_gan(a),
        Command::SynthFeatures(a) => synth_features(a),
        Command::TrainClassifier(a) => train_classifier_cmd(a),
        Command::Evaluate(a) => evaluate_cmd(a),
        Command::RunPipeline(a) => run_pipeline_cmd(a),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(if e.is_numeric() { 3 } else { 2 })
        }
    }
}
