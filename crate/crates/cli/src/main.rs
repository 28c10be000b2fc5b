//! `sitrec` — drive the situation recognition engine from the shell.
//!
//! The subcommands mirror the library's workflow: `simulate` a labeled
//! dataset, `learn` a decision tree from CSV parts, `enhance` a template
//! repository with a learned tree, `recognize` situations in a CSV of
//! sensor images, `evaluate` a repository against labeled data, and
//! `experiment` to run the full incremental loop with reports.
//!
//! All tunables live in one optional TOML config file with `[generation]`,
//! `[learner]`, `[reliability]`, and `[experiment]` sections; every key is
//! optional and unknown keys are rejected. Command-line flags override the
//! file.

use std::fs;
use std::path::{Path, PathBuf};

use anyhow::{Context, Result};
use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::Deserialize;

use sitrec_core::dtree::{train, DecisionNode, LearnerParams, TrainingSet};
use sitrec_core::enhancer::{enhance_repository, ReliabilityParams};
use sitrec_core::eval::{
    run_experiment, score_repository, write_plots, write_reports, EnhancementMode,
    ExperimentParams, Source,
};
use sitrec_core::model::{LabeledImage, TemplateDocument};
use sitrec_core::recognizer::Recognizer;
use sitrec_core::sim::{company, generate, read_part_csv, write_part_csv, GenerationParams};
use sitrec_core::xml::Repository;
use sitrec_core::{data, xml};

#[derive(Parser)]
#[command(
    name = "sitrec",
    version,
    about = "Hybrid situation recognition: simulate, learn, and merge"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Generate a labeled sensor dataset as CSV parts.
    Simulate(SimulateArgs),
    /// Train a decision tree from labeled CSV parts.
    Learn(LearnArgs),
    /// Merge a learned tree into a template repository.
    Enhance(EnhanceArgs),
    /// Recognize situations in a CSV of sensor images.
    Recognize(RecognizeArgs),
    /// Score a repository against a labeled CSV part.
    Evaluate(EvaluateArgs),
    /// Run the full incremental-learning experiment.
    Experiment(ExperimentArgs),
}

#[derive(Args)]
struct SimulateArgs {
    /// Directory for part-*.csv and test.csv (created if missing).
    #[arg(long)]
    out: PathBuf,
    /// TOML config file; uses the [generation] section.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Random seed, overriding the config file.
    #[arg(long)]
    seed: Option<u64>,
}

#[derive(Args)]
struct LearnArgs {
    /// Labeled CSV parts, concatenated in the given order.
    #[arg(long, required = true, num_args = 1..)]
    data: Vec<PathBuf>,
    /// Output file for the tree (JSON).
    #[arg(long)]
    out: PathBuf,
    /// TOML config file; uses the [learner] section.
    #[arg(long)]
    config: Option<PathBuf>,
}

#[derive(Args)]
struct EnhanceArgs {
    /// Template repository (.stpl.xml) to enhance.
    #[arg(long)]
    repo: PathBuf,
    /// Learned tree (JSON) to merge in.
    #[arg(long)]
    tree: PathBuf,
    /// Labeled CSV parts the tree was trained on.
    #[arg(long, required = true, num_args = 1..)]
    data: Vec<PathBuf>,
    /// Write the enhanced repository here instead of updating in place.
    #[arg(long)]
    out: Option<PathBuf>,
    /// TOML config file; uses the [reliability] section.
    #[arg(long)]
    config: Option<PathBuf>,
}

#[derive(Args)]
struct RecognizeArgs {
    /// Template repository (.stpl.xml) to recognize with.
    #[arg(long)]
    repo: PathBuf,
    /// CSV part with the images to recognize.
    #[arg(long)]
    data: PathBuf,
}

#[derive(Args)]
struct EvaluateArgs {
    /// Template repository (.stpl.xml) to score.
    #[arg(long)]
    repo: PathBuf,
    /// Labeled CSV part to score against.
    #[arg(long)]
    data: PathBuf,
}

#[derive(Args)]
struct ExperimentArgs {
    /// Starting template repository; defaults to the built-in
    /// well-calibrated one.
    #[arg(long)]
    repo: Option<PathBuf>,
    /// Directory for metric reports and the enhanced repository.
    #[arg(long)]
    out: PathBuf,
    /// TOML config file; all sections apply.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Random seed, overriding the config file.
    #[arg(long)]
    seed: Option<u64>,
    /// How steps chain, overriding the config file.
    #[arg(long, value_enum)]
    mode: Option<Mode>,
    /// Also write accuracy plots as SVG.
    #[arg(long)]
    plots: bool,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
enum Mode {
    /// Each step enhances the previous step's repository.
    Cumulative,
    /// Each step enhances the starting repository.
    Fresh,
}

impl From<Mode> for EnhancementMode {
    fn from(mode: Mode) -> Self {
        match mode {
            Mode::Cumulative => EnhancementMode::Cumulative,
            Mode::Fresh => EnhancementMode::Fresh,
        }
    }
}

/// The optional TOML config file. Every section and key is optional.
#[derive(Debug, Default, Deserialize)]
#[serde(default, deny_unknown_fields)]
struct FileConfig {
    generation: Option<GenerationParams>,
    learner: Option<LearnerParams>,
    reliability: Option<ReliabilityParams>,
    experiment: Option<ExperimentSection>,
}

#[derive(Debug, Default, Deserialize)]
#[serde(default, deny_unknown_fields)]
struct ExperimentSection {
    /// `cumulative` or `fresh`.
    mode: Option<EnhancementMode>,
    /// Path to a template document to use as ground-truth labeling rules.
    rules: Option<PathBuf>,
}

fn load_config(path: Option<&Path>) -> Result<FileConfig> {
    let Some(path) = path else {
        return Ok(FileConfig::default());
    };
    let text = fs::read_to_string(path)
        .with_context(|| format!("cannot read config file {}", path.display()))?;
    toml::from_str(&text).with_context(|| format!("invalid config file {}", path.display()))
}

fn load_repository(path: &Path) -> Result<(Repository, TemplateDocument)> {
    Repository::open(path).with_context(|| format!("cannot open repository {}", path.display()))
}

fn load_parts(paths: &[PathBuf]) -> Result<Vec<LabeledImage>> {
    let env = company();
    let mut items = Vec::new();
    for path in paths {
        let part = read_part_csv(path, &env)
            .with_context(|| format!("cannot read dataset part {}", path.display()))?;
        items.extend(part);
    }
    Ok(items)
}

fn generation_params(config: &FileConfig, seed: Option<u64>) -> Result<GenerationParams> {
    let mut params = config.generation.clone().unwrap_or_default();
    if let Some(seed) = seed {
        params.seed = seed;
    }
    if let Some(section) = &config.experiment {
        if let Some(rules) = &section.rules {
            let text = fs::read_to_string(rules)
                .with_context(|| format!("cannot read rules {}", rules.display()))?;
            params.ground_truth_rules = xml::parse_templates(&text)
                .with_context(|| format!("invalid rules {}", rules.display()))?;
        }
    }
    Ok(params)
}

fn run_simulate(args: &SimulateArgs) -> Result<()> {
    let config = load_config(args.config.as_deref())?;
    let params = generation_params(&config, args.seed)?;
    let dataset = generate(&params)?;
    fs::create_dir_all(&args.out)
        .with_context(|| format!("cannot create {}", args.out.display()))?;

    let env = company();
    for (i, part) in dataset.train_parts.iter().enumerate() {
        let path = args.out.join(format!("part-{:02}.csv", i + 1));
        write_part_csv(&path, part, &env)?;
        println!("wrote {} ({} images)", path.display(), part.len());
    }
    let path = args.out.join("test.csv");
    write_part_csv(&path, &dataset.test, &env)?;
    println!("wrote {} ({} images)", path.display(), dataset.test.len());
    Ok(())
}

fn run_learn(args: &LearnArgs) -> Result<()> {
    let config = load_config(args.config.as_deref())?;
    let params = config.learner.unwrap_or_default();
    let items = load_parts(&args.data)?;
    let count = items.len();
    let training = TrainingSet::new(items, &company())?;
    let tree = train(&training, &params)?;

    let json = serde_json::to_string_pretty(&tree).context("cannot serialize tree")?;
    fs::write(&args.out, json)
        .with_context(|| format!("cannot write tree to {}", args.out.display()))?;

    fn count_nodes(node: &DecisionNode) -> (usize, usize) {
        match node {
            DecisionNode::Leaf { .. } => (1, 1),
            DecisionNode::Split { pass, fail, .. } => {
                let (np, lp) = count_nodes(pass);
                let (nf, lf) = count_nodes(fail);
                (1 + np + nf, lp + lf)
            }
        }
    }
    let (nodes, leaves) = count_nodes(&tree);
    println!(
        "trained on {count} images: {nodes} nodes, {leaves} leaves -> {}",
        args.out.display()
    );
    Ok(())
}

fn load_tree(path: &Path) -> Result<DecisionNode> {
    let text = fs::read_to_string(path)
        .with_context(|| format!("cannot read tree {}", path.display()))?;
    serde_json::from_str(&text).with_context(|| format!("invalid tree {}", path.display()))
}

fn run_enhance(args: &EnhanceArgs) -> Result<()> {
    let config = load_config(args.config.as_deref())?;
    let reliability = config.reliability.unwrap_or_default();
    let (mut repository, doc) = load_repository(&args.repo)?;
    let tree = load_tree(&args.tree)?;
    let items = load_parts(&args.data)?;
    let training = TrainingSet::new(items, &company())?;

    let (updated, log) = enhance_repository(&doc, &tree, &training, &reliability)?;
    if log.is_empty() {
        println!("no reliable changes; repository left untouched");
        return Ok(());
    }
    print!("{log}");
    match &args.out {
        Some(path) => {
            let mut target = Repository::create(path);
            target.store(&updated)?;
            println!("wrote enhanced repository to {}", path.display());
        }
        None => {
            repository.store(&updated)?;
            println!("updated {} in place", args.repo.display());
        }
    }
    Ok(())
}

fn run_recognize(args: &RecognizeArgs) -> Result<()> {
    let (_, doc) = load_repository(&args.repo)?;
    let recognizer = Recognizer::new(&doc)?;
    let items = load_parts(std::slice::from_ref(&args.data))?;
    let images: Vec<_> = items.iter().map(|i| i.image.clone()).collect();
    for (item, recognized) in items.iter().zip(recognizer.recognize_stream(&images)?) {
        let shown = if recognized.is_empty() {
            "-".to_string()
        } else {
            recognized.iter().cloned().collect::<Vec<_>>().join(",")
        };
        println!("t={} {shown}", item.image.timestamp);
    }
    Ok(())
}

fn percent(value: f64, defined: bool) -> String {
    if defined {
        format!("{:6.2}%", value * 100.0)
    } else {
        "     -".to_string()
    }
}

fn run_evaluate(args: &EvaluateArgs) -> Result<()> {
    let (_, doc) = load_repository(&args.repo)?;
    let test = load_parts(std::slice::from_ref(&args.data))?;
    let count = test.len();
    println!("{count} images from {}", args.data.display());
    println!("{:<14} {:>7} {:>7} {:>7}", "situation", "acc", "prec", "rec");
    for score in score_repository(&doc, &test)? {
        println!(
            "{:<14} {} {} {}",
            score.situation,
            percent(score.accuracy, true),
            percent(score.precision, score.precision_defined),
            percent(score.recall, score.recall_defined),
        );
    }
    Ok(())
}

fn run_experiment_cmd(args: &ExperimentArgs) -> Result<()> {
    let config = load_config(args.config.as_deref())?;
    let start = match &args.repo {
        Some(path) => load_repository(path)?.1,
        None => data::good_start(),
    };
    let mut params = ExperimentParams {
        generation: generation_params(&config, args.seed)?,
        ..ExperimentParams::default()
    };
    if let Some(learner) = config.learner {
        params.learner = learner;
    }
    if let Some(reliability) = config.reliability {
        params.reliability = reliability;
    }
    if let Some(mode) = config.experiment.as_ref().and_then(|s| s.mode) {
        params.mode = mode;
    }
    if let Some(mode) = args.mode {
        params.mode = mode.into();
    }

    let outcome = run_experiment(&start, &params)?;
    fs::create_dir_all(&args.out)
        .with_context(|| format!("cannot create {}", args.out.display()))?;

    for log in &outcome.steps {
        println!("step {} ({} training images):", log.step, log.training_size);
        if log.changes.is_empty() {
            println!("  no changes");
        } else {
            for entry in &log.changes.entries {
                println!("  {entry}");
            }
        }
    }

    let last = outcome.steps.len() as u32;
    println!("\ntest accuracy after step {last}:");
    println!("{:<14} {:>8} {:>8} {:>8}", "situation", "initial", "updated", "tree");
    for template in &start.templates {
        let accuracy = |source: Source| {
            outcome
                .rows
                .iter()
                .find(|r| {
                    r.step == last && r.situation == template.situation && r.source == source
                })
                .map(|r| format!("{:7.2}%", r.accuracy * 100.0))
                .unwrap_or_default()
        };
        println!(
            "{:<14} {} {} {}",
            template.situation,
            accuracy(Source::Initial),
            accuracy(Source::Updated),
            accuracy(Source::Tree),
        );
    }

    for path in write_reports(&outcome, &args.out)? {
        println!("wrote {}", path.display());
    }
    if args.plots {
        for path in write_plots(&outcome, &args.out)? {
            println!("wrote {}", path.display());
        }
    }
    let repo_path = args.out.join("enhanced.stpl.xml");
    let mut target = Repository::create(&repo_path);
    target.store(&outcome.final_repo)?;
    println!("wrote {}", repo_path.display());
    Ok(())
}

fn main() -> Result<()> {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = Cli::parse();
    match &cli.command {
        Command::Simulate(args) => run_simulate(args),
        Command::Learn(args) => run_learn(args),
        Command::Enhance(args) => run_enhance(args),
        Command::Recognize(args) => run_recognize(args),
        Command::Evaluate(args) => run_evaluate(args),
        Command::Experiment(args) => run_experiment_cmd(args),
    }
}
