//! Bundled template documents for the company environment.
//!
//! Three documents ship with the crate:
//!
//! * [`ground_truth_rules`] — the rules the simulator labels images with.
//!   Document order is the priority order: the first matching situation
//!   wins.
//! * [`good_start`] — a well-calibrated expert repository. It mirrors the
//!   ground truth, with the seldom-exercised branches (management-room
//!   working, openings from the management or rest room) flagged rare so
//!   sparse data cannot argue them away.
//! * [`bad_start`] — a miscalibrated expert repository: thresholds sit
//!   noticeably off their true boundaries (though within updating range),
//!   the `Working` situation carries a spurious rest-room path, and
//!   `Opening` covers only openings from the working room.

use crate::model::TemplateDocument;
use crate::xml::parse_templates;

const GROUND_TRUTH: &str = include_str!("../data/ground-truth.stpl.xml");
const GOOD_START: &str = include_str!("../data/good-start.stpl.xml");
const BAD_START: &str = include_str!("../data/bad-start.stpl.xml");

/// The labeling rules of the company environment, in priority order.
pub fn ground_truth_rules() -> TemplateDocument {
    parse_templates(GROUND_TRUTH).expect("bundled ground-truth document is valid")
}

/// A well-calibrated starting repository.
pub fn good_start() -> TemplateDocument {
    parse_templates(GOOD_START).expect("bundled good-start document is valid")
}

/// A miscalibrated starting repository.
pub fn bad_start() -> TemplateDocument {
    parse_templates(BAD_START).expect("bundled bad-start document is valid")
}
