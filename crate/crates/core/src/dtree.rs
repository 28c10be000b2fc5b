//! C4.5-style decision tree learning over labeled sensor images.
//!
//! Splits are chosen by gain ratio. Boolean sensors split on `EQ 1`;
//! continuous sensors split on `GT θ` where θ ranges over the midpoints
//! between sorted adjacent distinct values. Ties are broken by feature
//! order (sorted sensor ids), then by lower threshold. An impure node is
//! split as long as any candidate separates it at all — even at zero gain
//! ratio — so that any dataset with distinct feature vectors trains to
//! full purity; only identical vectors with conflicting labels stop
//! growth early.
//!
//! Leaves carry the majority label together with exact integer counts, so
//! purity times cardinality always reproduces the majority count without
//! rounding drift.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};
use statrs::distribution::{ContinuousCDF, Normal};

use crate::error::Error;
use crate::model::{
    Comparator, Condition, DnfTree, EnvironmentSpec, LabeledImage, SensorImage, ValueKind,
    NONE_LABEL,
};
use crate::Result;

/// Knobs of the learner.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct LearnerParams {
    /// Nodes smaller than this become leaves without splitting.
    pub min_leaf: u32,
    /// Enables pessimistic-error pruning after growth.
    pub pruning: bool,
    /// Confidence factor for the pruning error estimate.
    pub confidence_factor: f64,
}

impl Default for LearnerParams {
    fn default() -> Self {
        LearnerParams {
            min_leaf: 2,
            pruning: false,
            confidence_factor: 0.25,
        }
    }
}

/// A validated, immutable training collection.
///
/// All items are checked against one environment spec: full sensor
/// coverage with no absent values, and labels drawn from the declared
/// situations plus the reserved `"none"`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainingSet {
    items: Vec<LabeledImage>,
    feature_order: Vec<String>,
    env: EnvironmentSpec,
}

impl TrainingSet {
    pub fn new(items: Vec<LabeledImage>, env: &EnvironmentSpec) -> Result<Self> {
        for item in &items {
            crate::model::validate_image(env, &item.image)?;
            for (sensor, value) in &item.image.readings {
                if value.is_none() {
                    return Err(Error::MissingFeature {
                        sensor: sensor.clone(),
                    });
                }
            }
            let known = item.label == NONE_LABEL
                || env.situations.iter().any(|s| s == &item.label);
            if !known {
                return Err(Error::Invalid {
                    what: "training set",
                    message: format!("label `{}` is not a declared situation", item.label),
                });
            }
        }
        Ok(TrainingSet {
            items,
            feature_order: env.feature_order(),
            env: env.clone(),
        })
    }

    /// Concatenates several sets over the same environment, preserving order.
    pub fn concat(sets: &[&TrainingSet]) -> Result<Self> {
        let Some(first) = sets.first() else {
            return Err(Error::EmptyTrainingSet);
        };
        let mut items = Vec::new();
        for set in sets {
            if set.feature_order != first.feature_order || set.env != first.env {
                return Err(Error::Invalid {
                    what: "training set",
                    message: "cannot concatenate sets over different environments".to_string(),
                });
            }
            items.extend(set.items.iter().cloned());
        }
        Ok(TrainingSet {
            items,
            feature_order: first.feature_order.clone(),
            env: first.env.clone(),
        })
    }

    pub fn items(&self) -> &[LabeledImage] {
        &self.items
    }

    pub fn feature_order(&self) -> &[String] {
        &self.feature_order
    }

    pub fn environment(&self) -> &EnvironmentSpec {
        &self.env
    }

    pub fn len(&self) -> usize {
        self.items.len()
    }

    pub fn is_empty(&self) -> bool {
        self.items.is_empty()
    }
}

/// Number of items in `data` annotated with `label`.
pub fn label_cardinality(data: &TrainingSet, label: &str) -> u32 {
    data.items.iter().filter(|i| i.label == label).count() as u32
}

/// Confidence of a label's decision-tree DNF: the minimum purity over its
/// paths. `None` when the label has no paths (or a path carries no purity),
/// leaving the caller to treat the confidence as undefined rather than
/// silently optimistic.
pub fn label_confidence(dnf: &DnfTree) -> Option<f64> {
    if dnf.paths.is_empty() {
        return None;
    }
    let mut min = f64::INFINITY;
    for path in &dnf.paths {
        min = min.min(path.purity?);
    }
    Some(min)
}

/// A learned decision tree.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum DecisionNode {
    Split {
        test: Condition,
        pass: Box<DecisionNode>,
        fail: Box<DecisionNode>,
    },
    Leaf {
        label: String,
        majority_count: u32,
        cardinality: u32,
        class_counts: BTreeMap<String, u32>,
    },
}

impl DecisionNode {
    /// Fraction of the leaf's items carrying its majority label.
    pub fn leaf_purity(majority_count: u32, cardinality: u32) -> f64 {
        f64::from(majority_count) / f64::from(cardinality)
    }

    /// Total number of leaves under this node.
    pub fn leaf_count(&self) -> usize {
        match self {
            DecisionNode::Leaf { .. } => 1,
            DecisionNode::Split { pass, fail, .. } => pass.leaf_count() + fail.leaf_count(),
        }
    }
}

/// Routes an image through the tree and reports the reached leaf's label,
/// purity, and cardinality.
pub fn classify<'t>(tree: &'t DecisionNode, image: &SensorImage) -> Result<(&'t str, f64, u32)> {
    let mut node = tree;
    loop {
        match node {
            DecisionNode::Leaf {
                label,
                majority_count,
                cardinality,
                ..
            } => {
                return Ok((
                    label,
                    DecisionNode::leaf_purity(*majority_count, *cardinality),
                    *cardinality,
                ))
            }
            DecisionNode::Split { test, pass, fail } => {
                let value = image.reading(&test.sensor).ok_or_else(|| Error::MissingFeature {
                    sensor: test.sensor.clone(),
                })?;
                node = if test.holds(value) { pass } else { fail };
            }
        }
    }
}

/// Trains a tree on the full set. Deterministic: the same data and params
/// always produce the identical tree.
pub fn train(data: &TrainingSet, params: &LearnerParams) -> Result<DecisionNode> {
    if data.is_empty() {
        return Err(Error::EmptyTrainingSet);
    }
    let table = Table::build(data);
    let indices: Vec<u32> = (0..table.labels.len() as u32).collect();
    let mut tree = grow(&table, &indices, params);
    if params.pruning {
        tree = prune(tree, params.confidence_factor);
    }
    Ok(tree)
}

/// Column-major view of the training set with interned labels, so node
/// recursion can work on index slices.
struct Table {
    /// `features[f][i]` is the value of feature `f` for item `i`.
    features: Vec<Vec<f64>>,
    feature_conditions: Vec<FeatureKind>,
    feature_names: Vec<String>,
    /// Label id per item; ids index `label_names`.
    labels: Vec<u32>,
    /// Sorted label names, so the lexicographically smallest label wins
    /// majority ties.
    label_names: Vec<String>,
}

#[derive(Clone, Copy, PartialEq)]
enum FeatureKind {
    Boolean,
    Continuous,
}

impl Table {
    fn build(data: &TrainingSet) -> Table {
        let mut label_names: Vec<String> = data
            .items
            .iter()
            .map(|i| i.label.clone())
            .collect::<std::collections::BTreeSet<_>>()
            .into_iter()
            .collect();
        label_names.sort();
        let labels = data
            .items
            .iter()
            .map(|i| label_names.binary_search(&i.label).unwrap() as u32)
            .collect();
        let mut features = Vec::with_capacity(data.feature_order.len());
        let mut feature_conditions = Vec::new();
        for name in &data.feature_order {
            // TrainingSet::new guarantees presence of every reading.
            let column = data
                .items
                .iter()
                .map(|i| i.image.reading(name).unwrap())
                .collect();
            features.push(column);
            let kind = match data.env.sensor(name).unwrap().kind {
                ValueKind::Boolean => FeatureKind::Boolean,
                ValueKind::Continuous => FeatureKind::Continuous,
            };
            feature_conditions.push(kind);
        }
        Table {
            features,
            feature_conditions,
            feature_names: data.feature_order.clone(),
            labels,
            label_names,
        }
    }

    fn count_labels(&self, items: &[u32]) -> Vec<u32> {
        let mut counts = vec![0u32; self.label_names.len()];
        for &i in items {
            counts[self.labels[i as usize] as usize] += 1;
        }
        counts
    }
}

fn entropy(counts: &[u32], total: u32) -> f64 {
    if total == 0 {
        return 0.0;
    }
    let total = f64::from(total);
    counts
        .iter()
        .filter(|&&c| c > 0)
        .map(|&c| {
            let p = f64::from(c) / total;
            -p * p.log2()
        })
        .sum()
}

struct SplitScore {
    // Selection uses only the ratio; the parts stay separate so tests can
    // pin each against hand computations.
    #[cfg_attr(not(test), allow(dead_code))]
    gain: f64,
    #[cfg_attr(not(test), allow(dead_code))]
    split_info: f64,
    gain_ratio: f64,
}

/// Scores a two-way partition given per-side label counts. `None` when a
/// side is empty — such a candidate does not partition the node.
fn score_split(parent_entropy: f64, total: u32, pass: &[u32], fail: &[u32]) -> Option<SplitScore> {
    let n_pass: u32 = pass.iter().sum();
    let n_fail: u32 = fail.iter().sum();
    if n_pass == 0 || n_fail == 0 {
        return None;
    }
    let t = f64::from(total);
    let wp = f64::from(n_pass) / t;
    let wf = f64::from(n_fail) / t;
    let gain =
        (parent_entropy - wp * entropy(pass, n_pass) - wf * entropy(fail, n_fail)).max(0.0);
    let split_info = -wp * wp.log2() - wf * wf.log2();
    Some(SplitScore {
        gain,
        split_info,
        gain_ratio: gain / split_info,
    })
}

struct Candidate {
    test: Condition,
    score: SplitScore,
}

/// Best split of `items`, or `None` when no candidate partitions them
/// (all feature vectors identical). Features are visited in order and
/// thresholds ascending; a later candidate must be strictly better to win,
/// which realizes the feature-index-then-lower-threshold tie-break.
fn best_split(table: &Table, items: &[u32], counts: &[u32], total: u32) -> Option<Candidate> {
    let parent_entropy = entropy(counts, total);
    let mut best: Option<Candidate> = None;
    let mut consider = |test: Condition, score: SplitScore| {
        let better = match &best {
            None => true,
            Some(b) => score.gain_ratio > b.score.gain_ratio,
        };
        if better {
            best = Some(Candidate { test, score });
        }
    };
    for (f, name) in table.feature_names.iter().enumerate() {
        match table.feature_conditions[f] {
            FeatureKind::Boolean => {
                let mut pass = vec![0u32; table.label_names.len()];
                let mut fail = vec![0u32; table.label_names.len()];
                for &i in items {
                    let side = if table.features[f][i as usize] == 1.0 {
                        &mut pass
                    } else {
                        &mut fail
                    };
                    side[table.labels[i as usize] as usize] += 1;
                }
                if let Some(score) = score_split(parent_entropy, total, &pass, &fail) {
                    let test = Condition::exact(name.clone(), Comparator::Eq, 1.0)
                        .expect("EQ 1 is a valid exact condition");
                    consider(test, score);
                }
            }
            FeatureKind::Continuous => {
                let mut ordered: Vec<(f64, u32)> = items
                    .iter()
                    .map(|&i| (table.features[f][i as usize], table.labels[i as usize]))
                    .collect();
                ordered.sort_by(|a, b| a.0.total_cmp(&b.0));
                // Sweep ascending: `below` accumulates the fail side
                // (values <= θ) as the boundary moves up.
                let mut below = vec![0u32; table.label_names.len()];
                for w in 0..ordered.len().saturating_sub(1) {
                    let (value, label) = ordered[w];
                    below[label as usize] += 1;
                    let next = ordered[w + 1].0;
                    if next == value {
                        continue;
                    }
                    let theta = (value + next) / 2.0;
                    let pass: Vec<u32> = counts
                        .iter()
                        .zip(&below)
                        .map(|(c, b)| c - b)
                        .collect();
                    if let Some(score) = score_split(parent_entropy, total, &pass, &below) {
                        let test = Condition::threshold(name.clone(), Comparator::Gt, theta)
                            .expect("midpoint of in-range values stays in range");
                        consider(test, score);
                    }
                }
            }
        }
    }
    best
}

fn make_leaf(table: &Table, counts: &[u32], total: u32) -> DecisionNode {
    // Keep the first maximum: label names are sorted, so ties go to the
    // lexicographically smallest label.
    let mut majority_id = 0;
    let mut majority_count = counts[0];
    for (i, &c) in counts.iter().enumerate().skip(1) {
        if c > majority_count {
            majority_id = i;
            majority_count = c;
        }
    }
    let class_counts = table
        .label_names
        .iter()
        .zip(counts)
        .filter(|(_, c)| **c > 0)
        .map(|(name, c)| (name.clone(), *c))
        .collect();
    DecisionNode::Leaf {
        label: table.label_names[majority_id].clone(),
        majority_count,
        cardinality: total,
        class_counts,
    }
}

fn grow(table: &Table, items: &[u32], params: &LearnerParams) -> DecisionNode {
    let counts = table.count_labels(items);
    let total = items.len() as u32;
    let pure = counts.iter().filter(|&&c| c > 0).count() <= 1;
    if pure || total < params.min_leaf {
        return make_leaf(table, &counts, total);
    }
    let Some(candidate) = best_split(table, items, &counts, total) else {
        // Identical feature vectors with conflicting labels: nothing can
        // separate them, so fall back to the majority.
        log::warn!(
            "degenerate node: {total} items share one feature vector but carry multiple labels"
        );
        return make_leaf(table, &counts, total);
    };
    let f = table
        .feature_names
        .iter()
        .position(|n| *n == candidate.test.sensor)
        .expect("candidate tests a known feature");
    let (pass_items, fail_items): (Vec<u32>, Vec<u32>) = items
        .iter()
        .partition(|&&i| candidate.test.holds(table.features[f][i as usize]));
    DecisionNode::Split {
        test: candidate.test,
        pass: Box::new(grow(table, &pass_items, params)),
        fail: Box::new(grow(table, &fail_items, params)),
    }
}

// ----- pessimistic pruning ------------------------------------------------

/// Upper confidence bound on the number of additional errors expected from
/// a node that misclassified `errors` of `total` training items, following
/// the usual C4.5 continuity-corrected normal approximation.
fn added_errors(total: f64, errors: f64, cf: f64) -> f64 {
    if total <= 0.0 {
        return 0.0;
    }
    if errors < 1e-9 {
        return total * (1.0 - cf.powf(1.0 / total));
    }
    if errors + 0.5 >= total {
        return (total - errors).max(0.0);
    }
    let z = Normal::new(0.0, 1.0)
        .expect("standard normal parameters are valid")
        .inverse_cdf(1.0 - cf);
    let f = (errors + 0.5) / total;
    let z2 = z * z;
    let upper = (f + z2 / (2.0 * total)
        + z * (f / total - f * f / total + z2 / (4.0 * total * total)).sqrt())
        / (1.0 + z2 / total);
    upper * total - errors
}

fn merge_counts(a: &BTreeMap<String, u32>, b: &BTreeMap<String, u32>) -> BTreeMap<String, u32> {
    let mut merged = a.clone();
    for (label, count) in b {
        *merged.entry(label.clone()).or_insert(0) += count;
    }
    merged
}

fn counts_to_leaf(class_counts: BTreeMap<String, u32>) -> DecisionNode {
    let cardinality: u32 = class_counts.values().sum();
    let (label, majority_count) = class_counts
        .iter()
        .max_by(|a, b| a.1.cmp(b.1).then(b.0.cmp(a.0))) // ties: smaller label
        .map(|(l, c)| (l.clone(), *c))
        .expect("pruned node keeps at least one class");
    DecisionNode::Leaf {
        label,
        majority_count,
        cardinality,
        class_counts,
    }
}

/// Replaces subtrees whose estimated error is no better than a single
/// leaf's. Returns the pruned node; the second tuple element of the inner
/// recursion carries (estimated errors, merged class counts).
fn prune(node: DecisionNode, cf: f64) -> DecisionNode {
    fn walk(node: DecisionNode, cf: f64) -> (DecisionNode, f64, BTreeMap<String, u32>) {
        match node {
            DecisionNode::Leaf {
                label,
                majority_count,
                cardinality,
                class_counts,
            } => {
                let errors = f64::from(cardinality - majority_count);
                let estimate = errors + added_errors(f64::from(cardinality), errors, cf);
                (
                    DecisionNode::Leaf {
                        label,
                        majority_count,
                        cardinality,
                        class_counts: class_counts.clone(),
                    },
                    estimate,
                    class_counts,
                )
            }
            DecisionNode::Split { test, pass, fail } => {
                let (pass, pass_est, pass_counts) = walk(*pass, cf);
                let (fail, fail_est, fail_counts) = walk(*fail, cf);
                let counts = merge_counts(&pass_counts, &fail_counts);
                let total: u32 = counts.values().sum();
                let majority = counts.values().max().copied().unwrap_or(0);
                let errors = f64::from(total - majority);
                let leaf_estimate = errors + added_errors(f64::from(total), errors, cf);
                let subtree_estimate = pass_est + fail_est;
                if leaf_estimate <= subtree_estimate {
                    let leaf = counts_to_leaf(counts.clone());
                    (leaf, leaf_estimate, counts)
                } else {
                    (
                        DecisionNode::Split {
                            test,
                            pass: Box::new(pass),
                            fail: Box::new(fail),
                        },
                        subtree_estimate,
                        counts,
                    )
                }
            }
        }
    }
    walk(node, cf).0
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{Room, SensorType};
    use std::collections::BTreeMap as Map;

    fn env2() -> EnvironmentSpec {
        EnvironmentSpec::new(
            vec![
                SensorType::new("light", ValueKind::Continuous),
                SensorType::new("motion", ValueKind::Boolean),
            ],
            vec![Room {
                name: "room".into(),
                sensors: vec!["light".into(), "motion".into()],
            }],
            vec!["Working".to_string()],
            1,
        )
        .unwrap()
    }

    fn item(motion: f64, light: f64, label: &str) -> LabeledImage {
        let mut readings = Map::new();
        readings.insert("motion".to_string(), Some(motion));
        readings.insert("light".to_string(), Some(light));
        LabeledImage {
            image: SensorImage::new(0, readings),
            label: label.to_string(),
        }
    }

    /// Fixed 14-item dataset used for the frozen gain-ratio check.
    fn hand_dataset() -> TrainingSet {
        let rows = [
            (1.0, 0.90, "Working"),
            (1.0, 0.80, "Working"),
            (1.0, 0.72, "Working"),
            (1.0, 0.61, "Working"),
            (1.0, 0.55, "Working"),
            (0.0, 0.85, "none"),
            (0.0, 0.70, "none"),
            (1.0, 0.40, "none"),
            (1.0, 0.30, "none"),
            (0.0, 0.20, "none"),
            (0.0, 0.95, "none"),
            (1.0, 0.52, "Working"),
            (1.0, 0.15, "none"),
            (0.0, 0.45, "none"),
        ];
        let items = rows.iter().map(|(m, l, lab)| item(*m, *l, lab)).collect();
        TrainingSet::new(items, &env2()).unwrap()
    }

    #[test]
    fn gain_ratio_matches_hand_computation() {
        // Expected values computed independently (entropy by hand):
        //   split `light GT 0.485` on the 14-item set →
        //   gain 0.39489509985636528, split_info 0.94028595867063114,
        //   gain ratio 0.41997340938140226.
        let data = hand_dataset();
        let table = Table::build(&data);
        let items: Vec<u32> = (0..14).collect();
        let counts = table.count_labels(&items);
        let parent = entropy(&counts, 14);
        let f = table.feature_names.iter().position(|n| n == "light").unwrap();
        let test = Condition::threshold("light", Comparator::Gt, 0.485).unwrap();
        let mut pass = vec![0u32; table.label_names.len()];
        let mut fail = vec![0u32; table.label_names.len()];
        for &i in &items {
            let side = if test.holds(table.features[f][i as usize]) {
                &mut pass
            } else {
                &mut fail
            };
            side[table.labels[i as usize] as usize] += 1;
        }
        let score = score_split(parent, 14, &pass, &fail).unwrap();
        assert!((score.gain - 0.394_895_099_856_365_28).abs() < 1e-9);
        assert!((score.split_info - 0.940_285_958_670_631_14).abs() < 1e-9);
        assert!((score.gain_ratio - 0.419_973_409_381_402_26).abs() < 1e-9);
    }

    #[test]
    fn tie_between_features_keeps_the_earlier_feature() {
        // On the hand dataset the best light candidate (GT 0.485) and the
        // motion candidate produce the same partition, hence identical gain
        // ratios. Feature order is sorted sensor ids, so light wins.
        let data = hand_dataset();
        let tree = train(&data, &LearnerParams::default()).unwrap();
        match &tree {
            DecisionNode::Split { test, .. } => {
                assert_eq!(test.sensor, "light");
                assert_eq!(test.comparator, Comparator::Gt);
                assert!((test.operand.value() - 0.485).abs() < 1e-12);
            }
            other => panic!("expected a split at the root, got {other:?}"),
        }
    }

    #[test]
    fn single_label_data_yields_a_single_leaf() {
        let items = vec![item(1.0, 0.5, "Working"), item(0.0, 0.7, "Working")];
        let data = TrainingSet::new(items, &env2()).unwrap();
        let tree = train(&data, &LearnerParams::default()).unwrap();
        match tree {
            DecisionNode::Leaf {
                label,
                majority_count,
                cardinality,
                ..
            } => {
                assert_eq!(label, "Working");
                assert_eq!((majority_count, cardinality), (2, 2));
            }
            other => panic!("expected a leaf, got {other:?}"),
        }
    }

    #[test]
    fn xor_shaped_data_grows_to_four_pure_leaves() {
        // Single-feature gains are all zero here; the learner must still
        // separate the node instead of giving up.
        let env = EnvironmentSpec::new(
            vec![
                SensorType::new("a", ValueKind::Boolean),
                SensorType::new("b", ValueKind::Boolean),
            ],
            vec![],
            vec!["On".to_string()],
            1,
        )
        .unwrap();
        let rows = [
            (0.0, 0.0, "none"),
            (0.0, 1.0, "On"),
            (1.0, 0.0, "On"),
            (1.0, 1.0, "none"),
        ];
        let items = rows
            .iter()
            .map(|(a, b, label)| {
                let mut readings = Map::new();
                readings.insert("a".to_string(), Some(*a));
                readings.insert("b".to_string(), Some(*b));
                LabeledImage {
                    image: SensorImage::new(0, readings),
                    label: label.to_string(),
                }
            })
            .collect();
        let data = TrainingSet::new(items, &env).unwrap();
        let tree = train(&data, &LearnerParams::default()).unwrap();
        assert_eq!(tree.leaf_count(), 4);
        for item in data.items() {
            let (label, purity, _) = classify(&tree, &item.image).unwrap();
            assert_eq!(label, item.label);
            assert_eq!(purity, 1.0);
        }
    }

    #[test]
    fn purity_times_cardinality_is_the_majority_count() {
        let data = hand_dataset();
        let tree = train(&data, &LearnerParams::default()).unwrap();
        fn check(node: &DecisionNode) {
            match node {
                DecisionNode::Leaf {
                    majority_count,
                    cardinality,
                    class_counts,
                    label,
                } => {
                    let purity = DecisionNode::leaf_purity(*majority_count, *cardinality);
                    assert_eq!(purity * f64::from(*cardinality), f64::from(*majority_count));
                    assert_eq!(class_counts.values().sum::<u32>(), *cardinality);
                    assert_eq!(class_counts[label], *majority_count);
                }
                DecisionNode::Split { pass, fail, .. } => {
                    check(pass);
                    check(fail);
                }
            }
        }
        check(&tree);
    }

    #[test]
    fn training_is_deterministic() {
        let data = hand_dataset();
        let a = train(&data, &LearnerParams::default()).unwrap();
        let b = train(&data, &LearnerParams::default()).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn empty_training_set_is_an_error() {
        let data = TrainingSet::new(vec![], &env2()).unwrap();
        assert!(matches!(
            train(&data, &LearnerParams::default()),
            Err(Error::EmptyTrainingSet)
        ));
    }

    #[test]
    fn identical_vectors_with_conflicting_labels_become_a_majority_leaf() {
        let items = vec![
            item(1.0, 0.5, "Working"),
            item(1.0, 0.5, "Working"),
            item(1.0, 0.5, "none"),
        ];
        let data = TrainingSet::new(items, &env2()).unwrap();
        let tree = train(&data, &LearnerParams::default()).unwrap();
        match tree {
            DecisionNode::Leaf {
                label,
                majority_count,
                cardinality,
                ..
            } => {
                assert_eq!(label, "Working");
                assert_eq!((majority_count, cardinality), (2, 3));
            }
            other => panic!("expected a majority leaf, got {other:?}"),
        }
    }

    #[test]
    fn classify_reports_missing_features() {
        let data = hand_dataset();
        let tree = train(&data, &LearnerParams::default()).unwrap();
        let mut readings = Map::new();
        readings.insert("motion".to_string(), Some(1.0));
        let image = SensorImage::new(0, readings);
        match classify(&tree, &image) {
            Err(Error::MissingFeature { sensor }) => assert_eq!(sensor, "light"),
            other => panic!("expected MissingFeature, got {other:?}"),
        }
    }

    #[test]
    fn label_cardinality_matches_a_linear_scan() {
        let data = hand_dataset();
        for label in ["Working", "none", "absent-label"] {
            let expected = data.items().iter().filter(|i| i.label == label).count() as u32;
            assert_eq!(label_cardinality(&data, label), expected);
        }
    }

    #[test]
    fn label_confidence_is_the_minimum_path_purity() {
        use crate::model::DnfPath;
        let c = Condition::exact("motion", Comparator::Eq, 1.0).unwrap();
        let p1 = DnfPath::new(vec![c.clone()]).unwrap().with_stats(0.9, 40);
        let p2 = DnfPath::new(vec![c.clone()])
            .unwrap()
            .with_stats(0.7, 12);
        let dnf = DnfTree::new("Working", vec![p1, p2]).unwrap();
        assert_eq!(label_confidence(&dnf), Some(0.7));
        // No paths → undefined.
        let empty = DnfTree::new("Working", vec![]).unwrap();
        assert_eq!(label_confidence(&empty), None);
        // A path without annotations → undefined rather than optimistic.
        let unannotated = DnfTree::new("Working", vec![DnfPath::new(vec![c]).unwrap()]).unwrap();
        assert_eq!(label_confidence(&unannotated), None);
    }

    #[test]
    fn pruning_collapses_noise_splits() {
        // 40 clean majority items with a single mislabeled one: unpruned
        // growth isolates the noise item, pruning folds it back.
        let mut items = Vec::new();
        for i in 0..40 {
            items.push(item(1.0, 0.5 + (i as f64) * 0.01, "Working"));
        }
        items.push(item(1.0, 0.505, "none"));
        let data = TrainingSet::new(items, &env2()).unwrap();
        let unpruned = train(&data, &LearnerParams::default()).unwrap();
        assert!(unpruned.leaf_count() > 1);
        let pruned = train(
            &data,
            &LearnerParams {
                pruning: true,
                ..LearnerParams::default()
            },
        )
        .unwrap();
        match pruned {
            DecisionNode::Leaf {
                label,
                majority_count,
                cardinality,
                ..
            } => {
                assert_eq!(label, "Working");
                assert_eq!((majority_count, cardinality), (40, 41));
            }
            other => panic!("expected pruning to collapse the tree, got {other:?}"),
        }
    }
}
