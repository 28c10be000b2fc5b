//! Error type shared by all modules of the crate.

use thiserror::Error;

/// Crate-wide error enum. Variants carry enough context (sensor names,
/// line numbers, situation names) to make failures diagnosable without
/// a debugger.
#[derive(Debug, Error)]
pub enum Error {
    /// An image carries a reading for a sensor the environment does not declare.
    #[error("unknown sensor `{sensor}` in image")]
    UnknownSensor { sensor: String },

    /// A reading violates the sensor's value domain.
    #[error("reading {value} for sensor `{sensor}` is outside its domain")]
    OutOfRange { sensor: String, value: f64 },

    /// An image lacks an entry for a declared sensor.
    #[error("image is missing declared sensor `{sensor}`")]
    MissingSensor { sensor: String },

    /// Malformed XML (not well-formed, bad encoding).
    #[error("XML syntax error at line {line}: {message}")]
    Syntax { line: usize, message: String },

    /// Well-formed XML that does not follow the template schema.
    #[error("schema violation: {message}")]
    Schema { message: String },

    /// Schema-conforming document with inconsistent content.
    #[error("invalid template for situation `{situation}`: {message}")]
    Semantic { situation: String, message: String },

    /// Filesystem failure, annotated with the path involved.
    #[error("I/O error on {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },

    /// The repository file changed on disk since it was loaded.
    #[error("repository {path} was modified since it was loaded")]
    ConcurrentModification { path: String },

    /// Training was requested on zero items.
    #[error("training set is empty")]
    EmptyTrainingSet,

    /// Classification hit a split whose sensor the image does not provide.
    #[error("image has no value for feature `{sensor}` required by the tree")]
    MissingFeature { sensor: String },

    /// DNF expansion would exceed the configured path bound.
    #[error("DNF expansion for situation `{situation}` exceeds the limit of {limit} paths")]
    ExpansionLimit { situation: String, limit: usize },

    /// A DNF tree with zero paths cannot be turned back into a template.
    #[error("situation `{situation}` has no DNF paths left to build a template from")]
    EmptyDnf { situation: String },

    /// Two DNF trees passed to a merge carry different situation labels.
    #[error("situation label mismatch: `{left}` vs `{right}`")]
    LabelMismatch { left: String, right: String },

    /// A path reliability check needs purity/cardinality the path does not carry.
    #[error("path has no purity/cardinality annotations (not a decision-tree path)")]
    MissingAnnotation,

    /// Condition evaluation found no value for a sensor.
    #[error("no value for sensor `{sensor}`{}", situation.as_deref().map(|s| format!(" while evaluating situation `{s}`")).unwrap_or_default())]
    MissingSensorValue {
        sensor: String,
        situation: Option<String>,
    },

    /// A stream of images is not ordered by timestamp.
    #[error("image timestamps out of order: {next} after {prev}")]
    OutOfOrderTimestamp { prev: i64, next: i64 },

    /// Paired inputs (predictions vs. truth) differ in length.
    #[error("length mismatch: {left} vs {right}")]
    LengthMismatch { left: usize, right: usize },

    /// The generator could not produce images satisfying the feasibility rules.
    #[error("feasibility rules and ground-truth rules admit no images")]
    InfeasibleRuleSet,

    /// "none" is the reserved non-situation label and cannot name a template.
    #[error("`{label}` is a reserved label and cannot be used as a situation")]
    ReservedLabel { label: String },

    /// A condition or template violates a structural invariant at construction.
    #[error("invalid {what}: {message}")]
    Invalid { what: &'static str, message: String },

    /// A dataset file (CSV) could not be interpreted.
    #[error("dataset format error at line {line}: {message}")]
    DatasetFormat { line: usize, message: String },
}

impl Error {
    /// Wraps an I/O error with the path it happened on.
    pub fn io(path: impl AsRef<std::path::Path>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.as_ref().display().to_string(),
            source,
        }
    }
}
