//! Core domain types: sensors, images, conditions, templates, DNF paths.
//!
//! Everything downstream (parsing, learning, merging, recognition) is built
//! on these types, so their constructors enforce the structural invariants:
//! operand kinds match comparators, thresholds stay in `[0, 1]`, operator
//! nodes have enough children, and the reserved label `"none"` never names
//! a situation.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;

use serde::{Deserialize, Serialize};

use crate::error::Error;
use crate::Result;

/// Reserved label for "no situation recognized". Never a template name.
pub const NONE_LABEL: &str = "none";

/// Value domain of a sensor.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ValueKind {
    /// Emits exactly 0 or 1.
    Boolean,
    /// Emits a normalized reading in the closed interval `[0, 1]`.
    Continuous,
}

/// A declared sensor: identifier plus value domain.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SensorType {
    pub id: String,
    pub kind: ValueKind,
}

impl SensorType {
    pub fn new(id: impl Into<String>, kind: ValueKind) -> Self {
        SensorType {
            id: id.into(),
            kind,
        }
    }

    /// Whether `value` lies in this sensor's domain.
    pub fn admits(&self, value: f64) -> bool {
        match self.kind {
            ValueKind::Boolean => value == 0.0 || value == 1.0,
            ValueKind::Continuous => value.is_finite() && (0.0..=1.0).contains(&value),
        }
    }
}

/// A room groups sensors for documentation and simulation purposes.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Room {
    pub name: String,
    pub sensors: Vec<String>,
}

/// Declares the sensors, rooms, and situations of a monitored environment.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct EnvironmentSpec {
    pub sensors: Vec<SensorType>,
    pub rooms: Vec<Room>,
    pub situations: Vec<String>,
    /// Simulation clock granularity; one image per tick.
    pub tick_seconds: u64,
}

impl EnvironmentSpec {
    /// Builds and validates an environment description.
    ///
    /// Sensor ids and situation names must be unique; `"none"` is reserved
    /// and cannot be declared as a situation; every room sensor must be
    /// declared.
    pub fn new(
        sensors: Vec<SensorType>,
        rooms: Vec<Room>,
        situations: Vec<String>,
        tick_seconds: u64,
    ) -> Result<Self> {
        let mut ids = BTreeSet::new();
        for s in &sensors {
            if !ids.insert(s.id.as_str()) {
                return Err(Error::Invalid {
                    what: "environment",
                    message: format!("duplicate sensor id `{}`", s.id),
                });
            }
        }
        let mut names = BTreeSet::new();
        for s in &situations {
            if s == NONE_LABEL {
                return Err(Error::ReservedLabel { label: s.clone() });
            }
            if !names.insert(s.as_str()) {
                return Err(Error::Invalid {
                    what: "environment",
                    message: format!("duplicate situation `{s}`"),
                });
            }
        }
        for room in &rooms {
            for id in &room.sensors {
                if !ids.contains(id.as_str()) {
                    return Err(Error::Invalid {
                        what: "environment",
                        message: format!("room `{}` lists undeclared sensor `{id}`", room.name),
                    });
                }
            }
        }
        Ok(EnvironmentSpec {
            sensors,
            rooms,
            situations,
            tick_seconds,
        })
    }

    /// Looks up a declared sensor by id.
    pub fn sensor(&self, id: &str) -> Option<&SensorType> {
        self.sensors.iter().find(|s| s.id == id)
    }

    /// Sensor ids in sorted order; the canonical feature order for learning.
    pub fn feature_order(&self) -> Vec<String> {
        let mut ids: Vec<String> = self.sensors.iter().map(|s| s.id.clone()).collect();
        ids.sort();
        ids
    }
}

/// One synchronized snapshot of every sensor at a point in time.
///
/// The map must cover exactly the environment's declared sensors; a sensor
/// that produced no value is recorded as `None` rather than omitted, so
/// silence and absence stay distinguishable.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SensorImage {
    pub timestamp: i64,
    pub readings: BTreeMap<String, Option<f64>>,
}

impl SensorImage {
    pub fn new(timestamp: i64, readings: BTreeMap<String, Option<f64>>) -> Self {
        SensorImage {
            timestamp,
            readings,
        }
    }

    /// The value recorded for `sensor`, if the sensor is present and produced one.
    pub fn reading(&self, sensor: &str) -> Option<f64> {
        self.readings.get(sensor).copied().flatten()
    }
}

/// A sensor image paired with its annotated situation label.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LabeledImage {
    pub image: SensorImage,
    pub label: String,
}

/// Checks that `image` is structurally valid for `env`.
///
/// Every reading must name a declared sensor, every declared sensor must
/// have an entry (possibly the explicit absent marker `None`), and present
/// values must lie in the sensor's domain.
pub fn validate_image(env: &EnvironmentSpec, image: &SensorImage) -> Result<()> {
    for id in image.readings.keys() {
        if env.sensor(id).is_none() {
            return Err(Error::UnknownSensor { sensor: id.clone() });
        }
    }
    for sensor in &env.sensors {
        match image.readings.get(&sensor.id) {
            None => {
                return Err(Error::MissingSensor {
                    sensor: sensor.id.clone(),
                })
            }
            Some(Some(v)) if !sensor.admits(*v) => {
                return Err(Error::OutOfRange {
                    sensor: sensor.id.clone(),
                    value: *v,
                })
            }
            _ => {}
        }
    }
    Ok(())
}

/// Comparison operator of a condition.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Comparator {
    #[serde(rename = "LT")]
    Lt,
    #[serde(rename = "LE")]
    Le,
    #[serde(rename = "GT")]
    Gt,
    #[serde(rename = "GE")]
    Ge,
    #[serde(rename = "EQ")]
    Eq,
    #[serde(rename = "NE")]
    Ne,
}

impl Comparator {
    pub fn as_str(self) -> &'static str {
        match self {
            Comparator::Lt => "LT",
            Comparator::Le => "LE",
            Comparator::Gt => "GT",
            Comparator::Ge => "GE",
            Comparator::Eq => "EQ",
            Comparator::Ne => "NE",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        Some(match s {
            "LT" => Comparator::Lt,
            "LE" => Comparator::Le,
            "GT" => Comparator::Gt,
            "GE" => Comparator::Ge,
            "EQ" => Comparator::Eq,
            "NE" => Comparator::Ne,
            _ => return None,
        })
    }

    /// The comparator accepting exactly the values this one rejects.
    pub fn negate(self) -> Self {
        match self {
            Comparator::Lt => Comparator::Ge,
            Comparator::Le => Comparator::Gt,
            Comparator::Gt => Comparator::Le,
            Comparator::Ge => Comparator::Lt,
            Comparator::Eq => Comparator::Ne,
            Comparator::Ne => Comparator::Eq,
        }
    }

    /// Applies the comparison to a reading (left) and an operand (right).
    pub fn compare(self, reading: f64, operand: f64) -> bool {
        match self {
            Comparator::Lt => reading < operand,
            Comparator::Le => reading <= operand,
            Comparator::Gt => reading > operand,
            Comparator::Ge => reading >= operand,
            Comparator::Eq => reading == operand,
            Comparator::Ne => reading != operand,
        }
    }

    fn rank(self) -> u8 {
        match self {
            Comparator::Lt => 0,
            Comparator::Le => 1,
            Comparator::Gt => 2,
            Comparator::Ge => 3,
            Comparator::Eq => 4,
            Comparator::Ne => 5,
        }
    }
}

impl fmt::Display for Comparator {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

/// Right-hand side of a condition.
///
/// Thresholds compare against continuous readings and take part in the
/// merge's threshold-band matching; exact values compare against boolean
/// (or categorical) readings and must match exactly.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", content = "value", rename_all = "lowercase")]
pub enum Operand {
    Threshold(f64),
    Exact(f64),
}

impl Operand {
    pub fn value(self) -> f64 {
        match self {
            Operand::Threshold(v) | Operand::Exact(v) => v,
        }
    }

    pub fn is_threshold(self) -> bool {
        matches!(self, Operand::Threshold(_))
    }

    fn rank(self) -> u8 {
        match self {
            Operand::Threshold(_) => 0,
            Operand::Exact(_) => 1,
        }
    }
}

/// An atomic test on one sensor: `sensor <comparator> operand`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Condition {
    pub sensor: String,
    pub comparator: Comparator,
    pub operand: Operand,
}

impl Condition {
    /// Builds a condition, enforcing operand invariants: thresholds must be
    /// finite and lie in `[0, 1]`; exact operands only pair with `EQ`/`NE`.
    pub fn new(sensor: impl Into<String>, comparator: Comparator, operand: Operand) -> Result<Self> {
        let sensor = sensor.into();
        match operand {
            Operand::Threshold(v) => {
                if !v.is_finite() || !(0.0..=1.0).contains(&v) {
                    return Err(Error::Invalid {
                        what: "condition",
                        message: format!("threshold {v} for `{sensor}` is outside [0, 1]"),
                    });
                }
            }
            Operand::Exact(v) => {
                if !v.is_finite() {
                    return Err(Error::Invalid {
                        what: "condition",
                        message: format!("exact value for `{sensor}` is not finite"),
                    });
                }
                if !matches!(comparator, Comparator::Eq | Comparator::Ne) {
                    return Err(Error::Invalid {
                        what: "condition",
                        message: format!(
                            "comparator {comparator} on `{sensor}` requires a threshold operand"
                        ),
                    });
                }
            }
        }
        Ok(Condition {
            sensor,
            comparator,
            operand,
        })
    }

    /// Shorthand for a threshold condition.
    pub fn threshold(sensor: impl Into<String>, comparator: Comparator, value: f64) -> Result<Self> {
        Condition::new(sensor, comparator, Operand::Threshold(value))
    }

    /// Shorthand for an exact-value condition.
    pub fn exact(sensor: impl Into<String>, comparator: Comparator, value: f64) -> Result<Self> {
        Condition::new(sensor, comparator, Operand::Exact(value))
    }

    /// Whether the condition holds for a concrete reading.
    pub fn holds(&self, reading: f64) -> bool {
        self.comparator.compare(reading, self.operand.value())
    }

    /// Total ordering used wherever conditions need a canonical sequence:
    /// sensor id, then comparator, then operand kind, then operand value.
    pub fn canonical_cmp(&self, other: &Self) -> std::cmp::Ordering {
        self.sensor
            .cmp(&other.sensor)
            .then(self.comparator.rank().cmp(&other.comparator.rank()))
            .then(self.operand.rank().cmp(&other.operand.rank()))
            .then(self.operand.value().total_cmp(&other.operand.value()))
    }
}

impl fmt::Display for Condition {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{} {} {}", self.sensor, self.comparator, self.operand.value())
    }
}

/// A node of a situation template: AND/OR operators over condition leaves.
///
/// AND nodes carry the rare flag; a flagged AND marks circumstances the
/// expert knows to occur too rarely for learned data to confirm, so paths
/// derived from it are protected from removal during merges.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "op", rename_all = "lowercase")]
pub enum TemplateNode {
    And {
        children: Vec<TemplateNode>,
        #[serde(default, skip_serializing_if = "std::ops::Not::not")]
        rare: bool,
    },
    Or { children: Vec<TemplateNode> },
    Condition(Condition),
}

impl TemplateNode {
    pub fn and(children: Vec<TemplateNode>) -> Self {
        TemplateNode::And {
            children,
            rare: false,
        }
    }

    pub fn rare_and(children: Vec<TemplateNode>) -> Self {
        TemplateNode::And {
            children,
            rare: true,
        }
    }

    pub fn or(children: Vec<TemplateNode>) -> Self {
        TemplateNode::Or { children }
    }

    pub fn cond(c: Condition) -> Self {
        TemplateNode::Condition(c)
    }

    /// Evaluates the node against an image. Errors if a referenced sensor
    /// has no value.
    pub fn evaluate(&self, image: &SensorImage) -> Result<bool> {
        match self {
            TemplateNode::Condition(c) => match image.reading(&c.sensor) {
                Some(v) => Ok(c.holds(v)),
                None => Err(Error::MissingSensorValue {
                    sensor: c.sensor.clone(),
                    situation: None,
                }),
            },
            TemplateNode::And { children, .. } => {
                for child in children {
                    if !child.evaluate(image)? {
                        return Ok(false);
                    }
                }
                Ok(true)
            }
            TemplateNode::Or { children } => {
                for child in children {
                    if child.evaluate(image)? {
                        return Ok(true);
                    }
                }
                Ok(false)
            }
        }
    }

    /// Structural validation shared by the parser and constructors.
    ///
    /// OR nodes need at least two children. AND nodes need at least two as
    /// well, except that an AND over a single condition is allowed: it is
    /// the natural shape of a one-condition DNF path.
    fn validate(&self, situation: &str) -> Result<()> {
        match self {
            TemplateNode::Condition(_) => Ok(()),
            TemplateNode::Or { children } => {
                if children.len() < 2 {
                    return Err(Error::Semantic {
                        situation: situation.to_string(),
                        message: format!("or node has {} child(ren), needs at least 2", children.len()),
                    });
                }
                children.iter().try_for_each(|c| c.validate(situation))
            }
            TemplateNode::And { children, .. } => {
                let single_condition =
                    children.len() == 1 && matches!(children[0], TemplateNode::Condition(_));
                if children.len() < 2 && !single_condition {
                    return Err(Error::Semantic {
                        situation: situation.to_string(),
                        message: format!(
                            "and node has {} child(ren), needs at least 2 (or a single condition)",
                            children.len()
                        ),
                    });
                }
                children.iter().try_for_each(|c| c.validate(situation))
            }
        }
    }
}

/// An expert-authored description of one situation.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SituationTemplate {
    pub situation: String,
    pub root: TemplateNode,
}

impl SituationTemplate {
    /// Builds a template. The root must be an operator node and the whole
    /// tree must pass structural validation; `"none"` is rejected.
    pub fn new(situation: impl Into<String>, root: TemplateNode) -> Result<Self> {
        let situation = situation.into();
        if situation == NONE_LABEL {
            return Err(Error::ReservedLabel { label: situation });
        }
        if situation.is_empty() {
            return Err(Error::Invalid {
                what: "template",
                message: "situation name is empty".to_string(),
            });
        }
        if matches!(root, TemplateNode::Condition(_)) {
            return Err(Error::Semantic {
                situation,
                message: "template root must be an operator node".to_string(),
            });
        }
        root.validate(&situation)?;
        Ok(SituationTemplate { situation, root })
    }
}

/// An ordered collection of templates with unique situation names.
///
/// Document order is meaningful: when the templates act as ground-truth
/// rules, the first matching situation wins.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TemplateDocument {
    pub templates: Vec<SituationTemplate>,
}

impl TemplateDocument {
    pub fn new(templates: Vec<SituationTemplate>) -> Result<Self> {
        let mut names = BTreeSet::new();
        for t in &templates {
            if !names.insert(t.situation.as_str()) {
                return Err(Error::Semantic {
                    situation: t.situation.clone(),
                    message: "duplicate situation name in document".to_string(),
                });
            }
        }
        Ok(TemplateDocument { templates })
    }

    pub fn get(&self, situation: &str) -> Option<&SituationTemplate> {
        self.templates.iter().find(|t| t.situation == situation)
    }

    /// Checks the document against an environment: situations must be
    /// declared, condition sensors must exist, and operand kinds must match
    /// the sensors' value kinds.
    pub fn validate_against(&self, env: &EnvironmentSpec) -> Result<()> {
        fn walk(node: &TemplateNode, situation: &str, env: &EnvironmentSpec) -> Result<()> {
            match node {
                TemplateNode::Condition(c) => {
                    let sensor = env.sensor(&c.sensor).ok_or_else(|| Error::UnknownSensor {
                        sensor: c.sensor.clone(),
                    })?;
                    let kind_ok = match sensor.kind {
                        ValueKind::Boolean => !c.operand.is_threshold(),
                        ValueKind::Continuous => c.operand.is_threshold(),
                    };
                    if !kind_ok {
                        return Err(Error::Semantic {
                            situation: situation.to_string(),
                            message: format!(
                                "operand kind of `{}` does not match the sensor's value kind",
                                c.sensor
                            ),
                        });
                    }
                    Ok(())
                }
                TemplateNode::And { children, .. } | TemplateNode::Or { children } => children
                    .iter()
                    .try_for_each(|ch| walk(ch, situation, env)),
            }
        }
        for t in &self.templates {
            if !env.situations.iter().any(|s| s == &t.situation) {
                return Err(Error::Invalid {
                    what: "document",
                    message: format!("situation `{}` is not declared by the environment", t.situation),
                });
            }
            walk(&t.root, &t.situation, env)?;
        }
        Ok(())
    }
}

/// One conjunction of a DNF tree.
///
/// Conditions are kept in canonical order. Purity and cardinality are
/// present exactly when the path came from (or was overwritten by) the
/// decision tree; the rare flag only ever marks expert-authored paths.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DnfPath {
    pub conditions: Vec<Condition>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub purity: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub cardinality: Option<u32>,
    #[serde(default, skip_serializing_if = "std::ops::Not::not")]
    pub rare: bool,
}

impl DnfPath {
    /// Builds a path from a conjunction of conditions.
    ///
    /// Exact duplicates are dropped, conditions are sorted canonically, and
    /// conjunctions that contradict themselves on exact values (`x EQ 1`
    /// with `x EQ 0`, or `x EQ 1` with `x NE 1`) are rejected.
    pub fn new(conditions: Vec<Condition>) -> Result<Self> {
        if conditions.is_empty() {
            return Err(Error::Invalid {
                what: "path",
                message: "a DNF path needs at least one condition".to_string(),
            });
        }
        let mut conditions = conditions;
        conditions.sort_by(|a, b| a.canonical_cmp(b));
        conditions.dedup();
        if let Some((a, b)) = find_exact_contradiction(&conditions) {
            return Err(Error::Invalid {
                what: "path",
                message: format!("contradictory conditions `{a}` and `{b}`"),
            });
        }
        Ok(DnfPath {
            conditions,
            purity: None,
            cardinality: None,
            rare: false,
        })
    }

    /// Attaches decision-tree statistics to the path.
    pub fn with_stats(mut self, purity: f64, cardinality: u32) -> Self {
        self.purity = Some(purity);
        self.cardinality = Some(cardinality);
        self
    }

    /// Marks the path as expert-flagged rare.
    pub fn with_rare(mut self, rare: bool) -> Self {
        self.rare = rare;
        self
    }

    /// True when the path's conditions equal `other`'s (statistics ignored).
    pub fn same_conditions(&self, other: &DnfPath) -> bool {
        self.conditions == other.conditions
    }
}

impl fmt::Display for DnfPath {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{{")?;
        for (i, c) in self.conditions.iter().enumerate() {
            if i > 0 {
                write!(f, ", ")?;
            }
            write!(f, "{c}")?;
        }
        write!(f, "}}")
    }
}

/// Returns a pair of conditions that cannot hold simultaneously because of
/// their exact values, if any. Threshold conditions are never flagged; an
/// empty overlap between threshold ranges is legal (the path just never
/// fires).
fn find_exact_contradiction(conditions: &[Condition]) -> Option<(&Condition, &Condition)> {
    for (i, a) in conditions.iter().enumerate() {
        for b in &conditions[i + 1..] {
            if a.sensor != b.sensor {
                continue;
            }
            let (Operand::Exact(va), Operand::Exact(vb)) = (a.operand, b.operand) else {
                continue;
            };
            let clash = match (a.comparator, b.comparator) {
                (Comparator::Eq, Comparator::Eq) => va != vb,
                (Comparator::Eq, Comparator::Ne) | (Comparator::Ne, Comparator::Eq) => va == vb,
                _ => false,
            };
            if clash {
                return Some((a, b));
            }
        }
    }
    None
}

/// A situation expressed in disjunctive normal form: the situation holds
/// iff at least one path's conditions all hold. Zero paths are legal (the
/// situation never fires) and arise from decision trees that grew no
/// branch for the label.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DnfTree {
    pub situation: String,
    pub paths: Vec<DnfPath>,
}

impl DnfTree {
    pub fn new(situation: impl Into<String>, paths: Vec<DnfPath>) -> Result<Self> {
        let situation = situation.into();
        if situation == NONE_LABEL {
            return Err(Error::ReservedLabel { label: situation });
        }
        Ok(DnfTree { situation, paths })
    }

    /// Evaluates the DNF against an image: true iff some path holds.
    pub fn evaluate(&self, image: &SensorImage) -> Result<bool> {
        for path in &self.paths {
            if crate::recognizer::eval_path(path, image)? {
                return Ok(true);
            }
        }
        Ok(false)
    }
}

/// Where a metrics row's predictions came from.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Source {
    InitialTemplate,
    UpdatedTemplate,
    DecisionTree,
}

impl Source {
    pub fn as_str(self) -> &'static str {
        match self {
            Source::InitialTemplate => "initial_template",
            Source::UpdatedTemplate => "updated_template",
            Source::DecisionTree => "decision_tree",
        }
    }
}

impl fmt::Display for Source {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

/// One-vs-rest evaluation results for a situation at one step.
///
/// When a denominator is zero the metric is reported as 0.0 and the
/// corresponding `*_defined` flag is false, so "no positives predicted"
/// stays distinguishable from "all predictions wrong".
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricsRow {
    pub situation: String,
    pub step: u8,
    pub source: Source,
    pub accuracy: f64,
    pub precision: f64,
    pub recall: f64,
    pub precision_defined: bool,
    pub recall_defined: bool,
}
