//! Incremental-learning experiments over a generated dataset.
//!
//! An experiment replays the situation an operator faces when labeled
//! data trickles in: the training parts of a dataset arrive one at a
//! time, after each arrival a decision tree is trained on everything
//! received so far, and the template repository is enhanced with it.
//! Three classifiers are then scored on the held-out test part:
//!
//! - `initial` — the starting repository, untouched, as a baseline;
//! - `updated` — the repository after this step's enhancement;
//! - `tree` — the decision tree alone.
//!
//! Enhancement is either *cumulative* (each step enhances the previous
//! step's repository) or *fresh* (each step enhances the starting
//! repository, so steps are independent).
//!
//! Scoring is one-vs-rest per situation. A repository predicts a
//! situation positively when recognition returns it in the matched set;
//! the tree predicts it positively when its classification equals the
//! situation. Precision and recall are reported as 0 when their
//! denominator is empty, with a flag recording that the value is
//! undefined rather than measured.

use std::collections::BTreeSet;
use std::fmt;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::dtree::{classify, train, DecisionNode, LearnerParams, TrainingSet};
use crate::enhancer::{enhance_repository, ChangeLog, ReliabilityParams};
use crate::error::Error;
use crate::model::{EnvironmentSpec, LabeledImage, TemplateDocument};
use crate::recognizer::Recognizer;
use crate::sim::{generate, GenerationParams};
use crate::Result;

/// How the repository carries over between steps.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum EnhancementMode {
    /// Each step enhances the repository produced by the previous step.
    Cumulative,
    /// Each step enhances the starting repository from scratch.
    Fresh,
}

fn default_learner() -> LearnerParams {
    LearnerParams {
        pruning: true,
        ..LearnerParams::default()
    }
}

fn default_mode() -> EnhancementMode {
    EnhancementMode::Cumulative
}

/// Parameters of one experiment run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ExperimentParams {
    #[serde(default)]
    pub generation: GenerationParams,
    /// Tree learner settings. Experiments prune by default: the label
    /// noise in generated data otherwise grows long noise-isolation
    /// branches that drown the signal paths.
    #[serde(default = "default_learner")]
    pub learner: LearnerParams,
    #[serde(default)]
    pub reliability: ReliabilityParams,
    #[serde(default = "default_mode")]
    pub mode: EnhancementMode,
}

impl Default for ExperimentParams {
    fn default() -> Self {
        ExperimentParams {
            generation: GenerationParams::default(),
            learner: default_learner(),
            reliability: ReliabilityParams::default(),
            mode: default_mode(),
        }
    }
}

/// Which classifier a metrics row scores.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Source {
    Initial,
    Updated,
    Tree,
}

impl fmt::Display for Source {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Source::Initial => "initial",
            Source::Updated => "updated",
            Source::Tree => "tree",
        })
    }
}

/// One-vs-rest scores of one classifier for one situation at one step.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct MetricsRow {
    pub step: u32,
    pub situation: String,
    pub source: Source,
    pub accuracy: f64,
    pub precision: f64,
    pub recall: f64,
    /// False when no positive was predicted, making precision undefined.
    pub precision_defined: bool,
    /// False when the test part holds no positive, making recall undefined.
    pub recall_defined: bool,
}

/// What one step did to the repository.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct StepLog {
    pub step: u32,
    /// Images trained on at this step (all parts received so far).
    pub training_size: usize,
    pub changes: ChangeLog,
}

/// Everything an experiment run produces.
#[derive(Debug, Clone, PartialEq)]
pub struct ExperimentOutcome {
    /// One row per step, situation, and source, in that nesting order.
    pub rows: Vec<MetricsRow>,
    pub steps: Vec<StepLog>,
    /// The repository after the last step.
    pub final_repo: TemplateDocument,
}

/// One-vs-rest confusion counts.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
struct Confusion {
    tp: u32,
    fp: u32,
    tn: u32,
    fn_: u32,
}

impl Confusion {
    fn tally(&mut self, predicted: bool, actual: bool) {
        match (predicted, actual) {
            (true, true) => self.tp += 1,
            (true, false) => self.fp += 1,
            (false, true) => self.fn_ += 1,
            (false, false) => self.tn += 1,
        }
    }

    fn accuracy(&self) -> f64 {
        let total = self.tp + self.fp + self.tn + self.fn_;
        if total == 0 {
            return 0.0;
        }
        f64::from(self.tp + self.tn) / f64::from(total)
    }

    /// Precision and whether it was defined (any positive predicted).
    fn precision(&self) -> (f64, bool) {
        let denom = self.tp + self.fp;
        if denom == 0 {
            (0.0, false)
        } else {
            (f64::from(self.tp) / f64::from(denom), true)
        }
    }

    /// Recall and whether it was defined (any actual positive).
    fn recall(&self) -> (f64, bool) {
        let denom = self.tp + self.fn_;
        if denom == 0 {
            (0.0, false)
        } else {
            (f64::from(self.tp) / f64::from(denom), true)
        }
    }
}

fn row(step: u32, situation: &str, source: Source, confusion: Confusion) -> MetricsRow {
    let (precision, precision_defined) = confusion.precision();
    let (recall, recall_defined) = confusion.recall();
    MetricsRow {
        step,
        situation: situation.to_string(),
        source,
        accuracy: confusion.accuracy(),
        precision,
        recall,
        precision_defined,
        recall_defined,
    }
}

/// The per-image matched sets of one repository over the test part.
fn recognition_sets(
    repo: &TemplateDocument,
    test: &[LabeledImage],
) -> Result<Vec<BTreeSet<String>>> {
    let recognizer = Recognizer::new(repo)?;
    test.iter()
        .map(|item| recognizer.recognize(&item.image))
        .collect()
}

/// The per-image predicted labels of one tree over the test part.
fn tree_labels(tree: &DecisionNode, test: &[LabeledImage]) -> Result<Vec<String>> {
    test.iter()
        .map(|item| classify(tree, &item.image).map(|(label, _, _)| label.to_string()))
        .collect()
}

fn confusion_from_sets(
    sets: &[BTreeSet<String>],
    test: &[LabeledImage],
    situation: &str,
) -> Confusion {
    let mut confusion = Confusion::default();
    for (set, item) in sets.iter().zip(test) {
        confusion.tally(set.contains(situation), item.label == situation);
    }
    confusion
}

fn confusion_from_labels(labels: &[String], test: &[LabeledImage], situation: &str) -> Confusion {
    let mut confusion = Confusion::default();
    for (label, item) in labels.iter().zip(test) {
        confusion.tally(label == situation, item.label == situation);
    }
    confusion
}

/// One-vs-rest scores of a repository for one situation.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SituationScore {
    pub situation: String,
    pub accuracy: f64,
    pub precision: f64,
    pub recall: f64,
    pub precision_defined: bool,
    pub recall_defined: bool,
}

/// Scores a repository against a labeled test part, one-vs-rest per
/// situation, in the repository's document order.
pub fn score_repository(
    repo: &TemplateDocument,
    test: &[LabeledImage],
) -> Result<Vec<SituationScore>> {
    let sets = recognition_sets(repo, test)?;
    Ok(repo
        .templates
        .iter()
        .map(|template| {
            let confusion = confusion_from_sets(&sets, test, &template.situation);
            let (precision, precision_defined) = confusion.precision();
            let (recall, recall_defined) = confusion.recall();
            SituationScore {
                situation: template.situation.clone(),
                accuracy: confusion.accuracy(),
                precision,
                recall,
                precision_defined,
                recall_defined,
            }
        })
        .collect())
}

/// Generates a dataset from the experiment's generation parameters and
/// runs the incremental experiment on it.
pub fn run_experiment(
    start_repo: &TemplateDocument,
    params: &ExperimentParams,
) -> Result<ExperimentOutcome> {
    let data = generate(&params.generation)?;
    run_experiment_with_data(
        start_repo,
        &data.train_parts,
        &data.test,
        &crate::sim::company(),
        params,
    )
}

/// Runs the incremental experiment on an existing dataset: one step per
/// training part, each step training on every part received so far and
/// scoring all three classifiers on the fixed test part.
pub fn run_experiment_with_data(
    start_repo: &TemplateDocument,
    train_parts: &[Vec<LabeledImage>],
    test: &[LabeledImage],
    env: &EnvironmentSpec,
    params: &ExperimentParams,
) -> Result<ExperimentOutcome> {
    if train_parts.is_empty() || train_parts.iter().any(Vec::is_empty) || test.is_empty() {
        return Err(Error::Invalid {
            what: "experiment data",
            message: "need at least one non-empty training part and a non-empty test part"
                .to_string(),
        });
    }
    start_repo.validate_against(env)?;

    let situations: Vec<&str> = start_repo
        .templates
        .iter()
        .map(|t| t.situation.as_str())
        .collect();
    let initial_sets = recognition_sets(start_repo, test)?;

    let mut rows = Vec::new();
    let mut steps = Vec::new();
    let mut current = start_repo.clone();

    for (i, _) in train_parts.iter().enumerate() {
        let step = (i + 1) as u32;
        let training: Vec<LabeledImage> = train_parts[..=i].concat();
        let training_size = training.len();
        let training = TrainingSet::new(training, env)?;
        let tree = train(&training, &params.learner)?;

        let base = match params.mode {
            EnhancementMode::Cumulative => &current,
            EnhancementMode::Fresh => start_repo,
        };
        let (updated, changes) = enhance_repository(base, &tree, &training, &params.reliability)?;
        current = updated;

        let updated_sets = recognition_sets(&current, test)?;
        let labels = tree_labels(&tree, test)?;
        for situation in &situations {
            rows.push(row(
                step,
                situation,
                Source::Initial,
                confusion_from_sets(&initial_sets, test, situation),
            ));
            rows.push(row(
                step,
                situation,
                Source::Updated,
                confusion_from_sets(&updated_sets, test, situation),
            ));
            rows.push(row(
                step,
                situation,
                Source::Tree,
                confusion_from_labels(&labels, test, situation),
            ));
        }
        steps.push(StepLog {
            step,
            training_size,
            changes,
        });
    }

    Ok(ExperimentOutcome {
        rows,
        steps,
        final_repo: current,
    })
}

fn report_io(path: &Path, e: csv::Error) -> Error {
    Error::io(path, std::io::Error::other(e))
}

/// Writes one `metrics-<situation>.csv` per situation into `dir` and
/// returns the written paths. Columns: step, source, accuracy,
/// precision, recall; undefined precision/recall cells are left empty.
pub fn write_reports(outcome: &ExperimentOutcome, dir: impl AsRef<Path>) -> Result<Vec<PathBuf>> {
    let dir = dir.as_ref();
    let mut written = Vec::new();
    for template in &outcome.final_repo.templates {
        let situation = &template.situation;
        let path = dir.join(format!("metrics-{situation}.csv"));
        let mut writer = csv::Writer::from_path(&path).map_err(|e| report_io(&path, e))?;
        writer
            .write_record(["step", "source", "accuracy", "precision", "recall"])
            .map_err(|e| report_io(&path, e))?;
        for row in outcome.rows.iter().filter(|r| &r.situation == situation) {
            let cell = |value: f64, defined: bool| {
                if defined {
                    value.to_string()
                } else {
                    String::new()
                }
            };
            writer
                .write_record([
                    row.step.to_string(),
                    row.source.to_string(),
                    row.accuracy.to_string(),
                    cell(row.precision, row.precision_defined),
                    cell(row.recall, row.recall_defined),
                ])
                .map_err(|e| report_io(&path, e))?;
        }
        writer.flush().map_err(|e| Error::io(&path, e))?;
        written.push(path);
    }
    Ok(written)
}

const PLOT_WIDTH: f64 = 640.0;
const PLOT_HEIGHT: f64 = 400.0;
const MARGIN_LEFT: f64 = 50.0;
const MARGIN_RIGHT: f64 = 110.0;
const MARGIN_TOP: f64 = 40.0;
const MARGIN_BOTTOM: f64 = 40.0;

/// Writes one `accuracy-<situation>.svg` per situation into `dir`: the
/// test accuracy of all three classifiers over the steps.
pub fn write_plots(outcome: &ExperimentOutcome, dir: impl AsRef<Path>) -> Result<Vec<PathBuf>> {
    let dir = dir.as_ref();
    let steps = outcome.steps.len().max(1) as f64;
    let inner_w = PLOT_WIDTH - MARGIN_LEFT - MARGIN_RIGHT;
    let inner_h = PLOT_HEIGHT - MARGIN_TOP - MARGIN_BOTTOM;
    let x = |step: u32| {
        if outcome.steps.len() <= 1 {
            MARGIN_LEFT + inner_w / 2.0
        } else {
            MARGIN_LEFT + (f64::from(step) - 1.0) / (steps - 1.0) * inner_w
        }
    };
    let y = |value: f64| MARGIN_TOP + (1.0 - value) * inner_h;

    let mut written = Vec::new();
    for template in &outcome.final_repo.templates {
        let situation = &template.situation;
        let mut svg = String::new();
        svg.push_str(&format!(
            "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"{PLOT_WIDTH}\" \
             height=\"{PLOT_HEIGHT}\" viewBox=\"0 0 {PLOT_WIDTH} {PLOT_HEIGHT}\">\n"
        ));
        svg.push_str(&format!(
            "  <text x=\"{}\" y=\"24\" font-family=\"sans-serif\" font-size=\"16\" \
             text-anchor=\"middle\">Test accuracy: {situation}</text>\n",
            PLOT_WIDTH / 2.0
        ));
        for tick in 0..=4 {
            let value = f64::from(tick) / 4.0;
            let ty = y(value);
            svg.push_str(&format!(
                "  <line x1=\"{MARGIN_LEFT}\" y1=\"{ty}\" x2=\"{}\" y2=\"{ty}\" \
                 stroke=\"#ddd\"/>\n",
                MARGIN_LEFT + inner_w
            ));
            svg.push_str(&format!(
                "  <text x=\"{}\" y=\"{}\" font-family=\"sans-serif\" font-size=\"11\" \
                 text-anchor=\"end\">{value}</text>\n",
                MARGIN_LEFT - 6.0,
                ty + 4.0
            ));
        }
        for log in &outcome.steps {
            let tx = x(log.step);
            svg.push_str(&format!(
                "  <text x=\"{tx}\" y=\"{}\" font-family=\"sans-serif\" font-size=\"11\" \
                 text-anchor=\"middle\">{}</text>\n",
                MARGIN_TOP + inner_h + 18.0,
                log.step
            ));
        }
        for (source, color) in [
            (Source::Initial, "#888888"),
            (Source::Updated, "#1f77b4"),
            (Source::Tree, "#ff7f0e"),
        ] {
            let points: Vec<String> = outcome
                .rows
                .iter()
                .filter(|r| &r.situation == situation && r.source == source)
                .map(|r| format!("{},{}", x(r.step), y(r.accuracy)))
                .collect();
            svg.push_str(&format!(
                "  <polyline fill=\"none\" stroke=\"{color}\" stroke-width=\"2\" \
                 points=\"{}\"/>\n",
                points.join(" ")
            ));
            let label_y = match source {
                Source::Initial => MARGIN_TOP + 10.0,
                Source::Updated => MARGIN_TOP + 26.0,
                Source::Tree => MARGIN_TOP + 42.0,
            };
            svg.push_str(&format!(
                "  <text x=\"{}\" y=\"{label_y}\" font-family=\"sans-serif\" font-size=\"12\" \
                 fill=\"{color}\">{source}</text>\n",
                MARGIN_LEFT + inner_w + 10.0
            ));
        }
        svg.push_str("</svg>\n");
        let path = dir.join(format!("accuracy-{situation}.svg"));
        std::fs::write(&path, svg).map_err(|e| Error::io(&path, e))?;
        written.push(path);
    }
    Ok(written)
}
