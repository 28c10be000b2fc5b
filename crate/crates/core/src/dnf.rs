//! Conversion of templates and decision trees to disjunctive normal form.
//!
//! Both merge inputs are normalized to the same shape — a situation with a
//! flat list of condition conjunctions — before any comparison:
//!
//! * Templates distribute AND over OR. The number of produced paths is
//!   computed up front and capped, duplicate paths are merged, and
//!   conjunctions that contradict themselves on exact values are dropped
//!   (with a warning) since they can never fire.
//! * Decision trees contribute one path per root-to-leaf branch ending in
//!   the requested label. Following a split's fail edge negates its test
//!   by flipping the comparator (GT↔LE, GE↔LT, EQ↔NE). A tree that never
//!   split yields zero paths — a root leaf carries no conditions, and an
//!   unconditional "always true" path would poison any later merge.
//!
//! Path lists are kept in a canonical order (condition count, then the
//! conditions' canonical order) so every downstream consumer sees the same
//! sequence regardless of how a DNF was produced.

use std::cmp::Ordering;

use crate::error::Error;
use crate::model::{Condition, DnfPath, DnfTree, SituationTemplate, TemplateNode};
use crate::Result;

/// Default cap on the number of paths a single template may expand to.
pub const DEFAULT_EXPANSION_LIMIT: usize = 4096;

/// Canonical ordering of DNF paths: fewer conditions first, then the
/// conditions' canonical order element by element.
pub fn canonical_path_cmp(a: &DnfPath, b: &DnfPath) -> Ordering {
    a.conditions
        .len()
        .cmp(&b.conditions.len())
        .then_with(|| {
            for (ca, cb) in a.conditions.iter().zip(&b.conditions) {
                let ord = ca.canonical_cmp(cb);
                if ord != Ordering::Equal {
                    return ord;
                }
            }
            Ordering::Equal
        })
}

/// Converts a template to DNF with the default expansion limit.
pub fn template_to_dnf(template: &SituationTemplate) -> Result<DnfTree> {
    template_to_dnf_with_limit(template, DEFAULT_EXPANSION_LIMIT)
}

/// Converts a template to DNF, failing before materialization if the
/// distribution would produce more than `limit` paths.
pub fn template_to_dnf_with_limit(template: &SituationTemplate, limit: usize) -> Result<DnfTree> {
    if path_count(&template.root) > limit {
        return Err(Error::ExpansionLimit {
            situation: template.situation.clone(),
            limit,
        });
    }
    let mut paths = Vec::new();
    for partial in distribute(&template.root) {
        match DnfPath::new(partial.conditions) {
            Ok(path) => {
                let rare = partial.and_nodes > 0 && partial.all_rare;
                paths.push(path.with_rare(rare));
            }
            Err(err) => {
                log::warn!(
                    "dropping contradictory path of situation `{}`: {err}",
                    template.situation
                );
            }
        }
    }
    // Merge duplicate conjunctions; a duplicate is rare if any of its
    // derivations was.
    let mut deduped: Vec<DnfPath> = Vec::new();
    for path in paths {
        if let Some(existing) = deduped.iter_mut().find(|p| p.same_conditions(&path)) {
            existing.rare |= path.rare;
        } else {
            deduped.push(path);
        }
    }
    deduped.sort_by(canonical_path_cmp);
    DnfTree::new(&template.situation, deduped)
}

/// Number of paths the distribution will produce, saturating on overflow.
fn path_count(node: &TemplateNode) -> usize {
    match node {
        TemplateNode::Condition(_) => 1,
        TemplateNode::Or { children } => children
            .iter()
            .fold(0usize, |acc, c| acc.saturating_add(path_count(c))),
        TemplateNode::And { children, .. } => children
            .iter()
            .fold(1usize, |acc, c| acc.saturating_mul(path_count(c))),
    }
}

/// A conjunction in the making, tracking which AND nodes contributed so the
/// rare flag can be propagated: a path is rare only when every AND node on
/// its derivation carried the flag (and there was at least one).
struct PartialPath {
    conditions: Vec<Condition>,
    and_nodes: usize,
    all_rare: bool,
}

fn distribute(node: &TemplateNode) -> Vec<PartialPath> {
    match node {
        TemplateNode::Condition(c) => vec![PartialPath {
            conditions: vec![c.clone()],
            and_nodes: 0,
            all_rare: true,
        }],
        TemplateNode::Or { children } => children.iter().flat_map(distribute).collect(),
        TemplateNode::And { children, rare } => {
            let mut combos = vec![PartialPath {
                conditions: Vec::new(),
                and_nodes: 1,
                all_rare: *rare,
            }];
            for child in children {
                let child_paths = distribute(child);
                let mut next = Vec::with_capacity(combos.len() * child_paths.len());
                for combo in &combos {
                    for cp in &child_paths {
                        let mut conditions = combo.conditions.clone();
                        conditions.extend(cp.conditions.iter().cloned());
                        next.push(PartialPath {
                            conditions,
                            and_nodes: combo.and_nodes + cp.and_nodes,
                            all_rare: combo.all_rare && cp.all_rare,
                        });
                    }
                }
                combos = next;
            }
            combos
        }
    }
}

/// Extracts the DNF of one label from a decision tree: one path per branch
/// whose leaf predicts `situation`, annotated with the leaf's purity and
/// cardinality.
pub fn decision_tree_to_dnf(tree: &crate::dtree::DecisionNode, situation: &str) -> Result<DnfTree> {
    use crate::dtree::DecisionNode;
    fn walk(
        node: &DecisionNode,
        situation: &str,
        prefix: &mut Vec<Condition>,
        out: &mut Vec<DnfPath>,
    ) -> Result<()> {
        match node {
            DecisionNode::Leaf {
                label,
                majority_count,
                cardinality,
                ..
            } => {
                if label == situation && !prefix.is_empty() {
                    let purity = DecisionNode::leaf_purity(*majority_count, *cardinality);
                    out.push(DnfPath::new(prefix.clone())?.with_stats(purity, *cardinality));
                }
                Ok(())
            }
            DecisionNode::Split { test, pass, fail } => {
                prefix.push(test.clone());
                walk(pass, situation, prefix, out)?;
                prefix.pop();
                let negated = Condition::new(
                    test.sensor.clone(),
                    test.comparator.negate(),
                    test.operand,
                )?;
                prefix.push(negated);
                walk(fail, situation, prefix, out)?;
                prefix.pop();
                Ok(())
            }
        }
    }
    if let crate::dtree::DecisionNode::Leaf { label, .. } = tree {
        if label == situation {
            log::warn!(
                "decision tree never split; situation `{situation}` gets zero paths instead of an unconditional one"
            );
        }
    }
    let mut paths = Vec::new();
    let mut prefix = Vec::new();
    walk(tree, situation, &mut prefix, &mut paths)?;
    paths.sort_by(canonical_path_cmp);
    DnfTree::new(situation, paths)
}

/// Rebuilds a template from a DNF tree: an OR over one AND per path (a
/// single-path DNF collapses to a bare AND root). Purity and cardinality
/// stay behind — the repository stores structure only — while rare flags
/// survive on the AND nodes.
pub fn dnf_to_template(dnf: &DnfTree) -> Result<SituationTemplate> {
    if dnf.paths.is_empty() {
        return Err(Error::EmptyDnf {
            situation: dnf.situation.clone(),
        });
    }
    let mut paths = dnf.paths.clone();
    paths.sort_by(canonical_path_cmp);
    let ands: Vec<TemplateNode> = paths
        .iter()
        .map(|p| TemplateNode::And {
            children: p
                .conditions
                .iter()
                .map(|c| TemplateNode::Condition(c.clone()))
                .collect(),
            rare: p.rare,
        })
        .collect();
    let root = if ands.len() == 1 {
        ands.into_iter().next().unwrap()
    } else {
        TemplateNode::or(ands)
    };
    SituationTemplate::new(&dnf.situation, root)
}
