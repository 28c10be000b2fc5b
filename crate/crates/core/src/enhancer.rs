//! Merging expert template DNFs with learned decision-tree DNFs.
//!
//! The merge walks three operations in a fixed order — add, remove,
//! update — over a similarity set computed once up front:
//!
//! * Every tree path greedily claims the not-yet-claimed template path it
//!   is most similar to, provided the score reaches the similarity floor.
//!   A claimed template path is consumed; tree paths that claim nothing
//!   produce entries without a template path.
//! * **Add**: unclaimed tree paths that are reliable (purity and leaf
//!   cardinality high enough) become new template paths, keeping their
//!   statistics.
//! * **Remove**: template paths that no tree path claimed are deleted,
//!   but only when the label itself is reliable (confident tree, enough
//!   training examples), never when the expert flagged the path rare, and
//!   never down to an empty template.
//! * **Update**: for each claimed pair whose tree path is reliable, the
//!   operands of the threshold conditions that matched during scoring are
//!   overwritten with the tree's operands, pulling expert thresholds
//!   toward the observed boundaries.
//!
//! Similarity between two paths counts how many template conditions find a
//! matching tree condition — same sensor, same comparator, and either both
//! thresholds within the threshold band or both exact values equal —
//! divided by the longer path's length. Each template condition takes the
//! first match in tree-path order and counts at most once; tree conditions
//! may be matched repeatedly, so the score is asymmetric for paths that
//! test one sensor several times.

use std::collections::BTreeSet;
use std::fmt;

use serde::{Deserialize, Serialize};

use crate::dtree::{label_cardinality, label_confidence, DecisionNode, TrainingSet};
use crate::error::Error;
use crate::model::{DnfPath, DnfTree, Operand, TemplateDocument};
use crate::Result;

/// Thresholds gating the merge operations.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ReliabilityParams {
    /// A tree path needs at least this purity to be used.
    pub min_path_purity: f64,
    /// ... and at least this many training items in its leaf.
    pub min_path_cardinality: u32,
    /// A label needs at least this confidence (minimum path purity) for
    /// removals to be trusted.
    pub min_label_confidence: f64,
    /// ... and at least this many training items overall.
    pub min_label_cardinality: u32,
    /// Minimum similarity for a tree path to claim a template path.
    pub similarity_floor: f64,
    /// Maximum absolute threshold difference for two threshold conditions
    /// to match.
    pub threshold_band: f64,
}

impl Default for ReliabilityParams {
    fn default() -> Self {
        ReliabilityParams {
            min_path_purity: 0.65,
            min_path_cardinality: 10,
            min_label_confidence: 0.8,
            min_label_cardinality: 100,
            similarity_floor: 0.6,
            threshold_band: 0.25,
        }
    }
}

/// Whether a decision-tree path is trustworthy on its own: purity and
/// cardinality both at or above their minima. Errors on paths that carry
/// no statistics — reliability is a property of learned paths only.
pub fn path_reliable(path: &DnfPath, params: &ReliabilityParams) -> Result<bool> {
    let (Some(purity), Some(cardinality)) = (path.purity, path.cardinality) else {
        return Err(Error::MissingAnnotation);
    };
    Ok(purity >= params.min_path_purity && cardinality >= params.min_path_cardinality)
}

/// Whether a label as a whole is trustworthy: the tree's confidence in it
/// (its minimum path purity) and the number of training items annotated
/// with it both reach their minima. A label without paths has undefined
/// confidence and is never reliable.
pub fn label_reliable(
    label: &str,
    tree_dnf: &DnfTree,
    data: &TrainingSet,
    params: &ReliabilityParams,
) -> bool {
    debug_assert_eq!(label, tree_dnf.situation);
    let Some(confidence) = label_confidence(tree_dnf) else {
        return false;
    };
    confidence >= params.min_label_confidence
        && label_cardinality(data, label) >= params.min_label_cardinality
}

/// Pairs `(template_condition_index, tree_condition_index)` produced by the
/// greedy condition matching: each template condition scans the tree path
/// in order and takes the first condition with the same sensor, the same
/// comparator, and a compatible operand (thresholds within `band`, exact
/// values equal). Tree conditions are not consumed.
fn matched_pairs(stp: &DnfPath, dtp: &DnfPath, band: f64) -> Vec<(usize, usize)> {
    let mut pairs = Vec::new();
    for (si, sc) in stp.conditions.iter().enumerate() {
        for (di, dc) in dtp.conditions.iter().enumerate() {
            if sc.sensor != dc.sensor || sc.comparator != dc.comparator {
                continue;
            }
            let matched = match (sc.operand, dc.operand) {
                (Operand::Threshold(sv), Operand::Threshold(dv)) => (sv - dv).abs() <= band,
                (Operand::Exact(sv), Operand::Exact(dv)) => sv == dv,
                _ => false,
            };
            if matched {
                pairs.push((si, di));
                break;
            }
        }
    }
    pairs
}

/// Similarity of a template path and a tree path: the number of template
/// conditions with a match, divided by the length of the longer path.
pub fn similarity(stp: &DnfPath, dtp: &DnfPath, band: f64) -> f64 {
    let count = matched_pairs(stp, dtp, band).len();
    let length = stp.conditions.len().max(dtp.conditions.len());
    count as f64 / length as f64
}

/// One row of the similarity set: a tree path, the template path it
/// claimed (if any), and the score. Unclaimed tree paths carry score 0.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SimilarityEntry {
    pub template_path: Option<DnfPath>,
    pub tree_path: DnfPath,
    pub score: f64,
}

/// Index-level similarity entry used internally so paths with identical
/// conditions stay distinguishable.
struct IndexEntry {
    template_idx: Option<usize>,
    tree_idx: usize,
    score: f64,
}

fn similarity_index_set(
    template_dnf: &DnfTree,
    tree_dnf: &DnfTree,
    params: &ReliabilityParams,
) -> Vec<IndexEntry> {
    let mut available: Vec<usize> = (0..template_dnf.paths.len()).collect();
    let mut entries = Vec::with_capacity(tree_dnf.paths.len());
    for (tree_idx, dtp) in tree_dnf.paths.iter().enumerate() {
        let mut max = 0.0;
        let mut claimed: Option<usize> = None; // position within `available`
        for (pos, &s_idx) in available.iter().enumerate() {
            let score = similarity(&template_dnf.paths[s_idx], dtp, params.threshold_band);
            // Strictly greater: on ties the earliest template path wins.
            if score >= params.similarity_floor && score > max {
                max = score;
                claimed = Some(pos);
            }
        }
        let template_idx = claimed.map(|pos| available.remove(pos));
        entries.push(IndexEntry {
            template_idx,
            tree_idx,
            score: max,
        });
    }
    entries
}

/// Builds the similarity set between a template DNF and a tree DNF: one
/// entry per tree path, each template path claimed at most once.
pub fn build_similarity_set(
    template_dnf: &DnfTree,
    tree_dnf: &DnfTree,
    params: &ReliabilityParams,
) -> Vec<SimilarityEntry> {
    similarity_index_set(template_dnf, tree_dnf, params)
        .into_iter()
        .map(|e| SimilarityEntry {
            template_path: e.template_idx.map(|i| template_dnf.paths[i].clone()),
            tree_path: tree_dnf.paths[e.tree_idx].clone(),
            score: e.score,
        })
        .collect()
}

/// What a merge did to one path.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ChangeKind {
    Add,
    Remove,
    Update,
}

impl fmt::Display for ChangeKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            ChangeKind::Add => "ADD",
            ChangeKind::Remove => "REMOVE",
            ChangeKind::Update => "UPDATE",
        })
    }
}

/// One recorded change, with the values that gated it.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ChangeEntry {
    pub kind: ChangeKind,
    pub situation: String,
    /// The path before the change (absent for additions).
    pub before: Option<DnfPath>,
    /// The path after the change (absent for removals).
    pub after: Option<DnfPath>,
    /// Similarity score of the claimed pair (updates only).
    pub score: Option<f64>,
    /// Purity of the gating tree path (additions and updates).
    pub purity: Option<f64>,
    /// Cardinality of the gating tree path (additions and updates).
    pub cardinality: Option<u32>,
    /// Label confidence that allowed a removal.
    pub label_confidence: Option<f64>,
    /// Label cardinality that allowed a removal.
    pub label_cardinality: Option<u32>,
}

impl fmt::Display for ChangeEntry {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{} {}", self.kind, self.situation)?;
        if let Some(score) = self.score {
            write!(f, " score={score}")?;
        }
        if let Some(purity) = self.purity {
            write!(f, " purity={purity}")?;
        }
        if let Some(cardinality) = self.cardinality {
            write!(f, " cardinality={cardinality}")?;
        }
        if let Some(confidence) = self.label_confidence {
            write!(f, " label_confidence={confidence}")?;
        }
        if let Some(card) = self.label_cardinality {
            write!(f, " label_cardinality={card}")?;
        }
        match (&self.before, &self.after) {
            (Some(before), Some(after)) => write!(f, " before={before} after={after}"),
            (Some(before), None) => write!(f, " path={before}"),
            (None, Some(after)) => write!(f, " path={after}"),
            (None, None) => Ok(()),
        }
    }
}

/// All changes of one merge or one enhancement pass, in operation order
/// (adds, then removals, then updates) per situation.
#[derive(Debug, Clone, Default, PartialEq, Serialize)]
pub struct ChangeLog {
    pub entries: Vec<ChangeEntry>,
}

impl ChangeLog {
    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }
}

impl fmt::Display for ChangeLog {
    /// Line-delimited: one change per line.
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for entry in &self.entries {
            writeln!(f, "{entry}")?;
        }
        Ok(())
    }
}

/// Merges one situation's tree DNF into its template DNF.
///
/// The similarity set is computed once, against the original template
/// paths, so paths added during this merge can neither shield stale paths
/// from removal nor be removed themselves.
pub fn merge(
    template_dnf: &DnfTree,
    tree_dnf: &DnfTree,
    data: &TrainingSet,
    params: &ReliabilityParams,
) -> Result<(DnfTree, ChangeLog)> {
    if template_dnf.situation != tree_dnf.situation {
        return Err(Error::LabelMismatch {
            left: template_dnf.situation.clone(),
            right: tree_dnf.situation.clone(),
        });
    }
    let situation = template_dnf.situation.clone();
    let entries = similarity_index_set(template_dnf, tree_dnf, params);
    let mut log = ChangeLog::default();

    // Add: unclaimed, reliable tree paths.
    let mut added: Vec<DnfPath> = Vec::new();
    for entry in &entries {
        if entry.template_idx.is_some() {
            continue;
        }
        let tree_path = &tree_dnf.paths[entry.tree_idx];
        if path_reliable(tree_path, params)? {
            added.push(tree_path.clone());
            log.entries.push(ChangeEntry {
                kind: ChangeKind::Add,
                situation: situation.clone(),
                before: None,
                after: Some(tree_path.clone()),
                score: None,
                purity: tree_path.purity,
                cardinality: tree_path.cardinality,
                label_confidence: None,
                label_cardinality: None,
            });
        }
    }

    // Remove: unclaimed template paths, gated by label reliability, never
    // rare-flagged paths, and never the last path of the situation.
    let claimed: BTreeSet<usize> = entries.iter().filter_map(|e| e.template_idx).collect();
    let mut keep = vec![true; template_dnf.paths.len()];
    if label_reliable(&situation, tree_dnf, data, params) {
        let confidence = label_confidence(tree_dnf);
        let cardinality = label_cardinality(data, &situation);
        let mut remaining = template_dnf.paths.len() + added.len();
        for (idx, path) in template_dnf.paths.iter().enumerate() {
            if claimed.contains(&idx) || path.rare {
                continue;
            }
            if remaining <= 1 {
                log::warn!(
                    "not removing the last remaining path of situation `{situation}`: {path}"
                );
                continue;
            }
            keep[idx] = false;
            remaining -= 1;
            log.entries.push(ChangeEntry {
                kind: ChangeKind::Remove,
                situation: situation.clone(),
                before: Some(path.clone()),
                after: None,
                score: None,
                purity: None,
                cardinality: None,
                label_confidence: confidence,
                label_cardinality: Some(cardinality),
            });
        }
    }

    // Update: claimed pairs with a reliable tree path overwrite the
    // operands of the threshold conditions that matched during scoring.
    let mut paths: Vec<DnfPath> = template_dnf.paths.clone();
    for entry in &entries {
        let Some(s_idx) = entry.template_idx else {
            continue;
        };
        let tree_path = &tree_dnf.paths[entry.tree_idx];
        if !path_reliable(tree_path, params)? {
            continue;
        }
        let before = paths[s_idx].clone();
        let mut conditions = before.conditions.clone();
        let mut changed = false;
        for (si, di) in matched_pairs(&before, tree_path, params.threshold_band) {
            let tree_operand = tree_path.conditions[di].operand;
            if !tree_operand.is_threshold() {
                continue; // exact matches are equal already
            }
            if conditions[si].operand != tree_operand {
                conditions[si].operand = tree_operand;
                changed = true;
            }
        }
        if !changed {
            continue;
        }
        // Rebuilding re-sorts (and may merge now-identical conditions); the
        // path keeps its rare flag and takes the tree path's statistics.
        let after = DnfPath::new(conditions)?
            .with_stats(
                tree_path.purity.ok_or(Error::MissingAnnotation)?,
                tree_path.cardinality.ok_or(Error::MissingAnnotation)?,
            )
            .with_rare(before.rare);
        log.entries.push(ChangeEntry {
            kind: ChangeKind::Update,
            situation: situation.clone(),
            before: Some(before),
            after: Some(after.clone()),
            score: Some(entry.score),
            purity: tree_path.purity,
            cardinality: tree_path.cardinality,
            label_confidence: None,
            label_cardinality: None,
        });
        paths[s_idx] = after;
    }

    let mut final_paths: Vec<DnfPath> = paths
        .into_iter()
        .zip(&keep)
        .filter(|(_, k)| **k)
        .map(|(p, _)| p)
        .collect();
    final_paths.extend(added);
    final_paths.sort_by(crate::dnf::canonical_path_cmp);
    Ok((DnfTree::new(situation, final_paths)?, log))
}

/// Enhances a whole repository against one trained decision tree.
///
/// Each situation is normalized, merged, and rebuilt. Situations the tree
/// grew no paths for — and situations whose merge changed nothing — pass
/// through untouched, so a tree with nothing to say leaves the repository
/// structurally identical.
pub fn enhance_repository(
    repo: &TemplateDocument,
    tree: &DecisionNode,
    data: &TrainingSet,
    params: &ReliabilityParams,
) -> Result<(TemplateDocument, ChangeLog)> {
    let mut templates = Vec::with_capacity(repo.templates.len());
    let mut log = ChangeLog::default();
    for template in &repo.templates {
        let tree_dnf = crate::dnf::decision_tree_to_dnf(tree, &template.situation)?;
        if tree_dnf.paths.is_empty() {
            templates.push(template.clone());
            continue;
        }
        let template_dnf = crate::dnf::template_to_dnf(template)?;
        let (merged, template_log) = merge(&template_dnf, &tree_dnf, data, params)?;
        if template_log.is_empty() {
            templates.push(template.clone());
        } else {
            templates.push(crate::dnf::dnf_to_template(&merged)?);
        }
        log.entries.extend(template_log.entries);
    }
    Ok((TemplateDocument::new(templates)?, log))
}
