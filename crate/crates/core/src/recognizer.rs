//! Situation recognition over an immutable template repository.
//!
//! A [`Recognizer`] compiles every template of a document to DNF once and
//! then answers, per sensor image, the set of situations whose DNF has at
//! least one fully satisfied path. It holds no mutable state, so one
//! instance can serve any number of images (or threads).

use std::collections::BTreeSet;

use crate::error::Error;
use crate::model::{DnfPath, DnfTree, SensorImage, TemplateDocument};
use crate::Result;

/// Evaluates one DNF path against an image: true iff every condition holds.
///
/// A sensor that is missing from the image, or present only as the absent
/// marker, is an error — silently treating it as "condition failed" would
/// mask broken data feeds.
pub fn eval_path(path: &DnfPath, image: &SensorImage) -> Result<bool> {
    for condition in &path.conditions {
        match image.reading(&condition.sensor) {
            Some(value) => {
                if !condition.holds(value) {
                    return Ok(false);
                }
            }
            None => {
                return Err(Error::MissingSensorValue {
                    sensor: condition.sensor.clone(),
                    situation: None,
                })
            }
        }
    }
    Ok(true)
}

/// A compiled, read-only view of a template repository.
pub struct Recognizer {
    dnfs: Vec<DnfTree>,
}

impl Recognizer {
    /// Compiles every template in the document to DNF.
    pub fn new(repo: &TemplateDocument) -> Result<Self> {
        let dnfs = repo
            .templates
            .iter()
            .map(crate::dnf::template_to_dnf)
            .collect::<Result<Vec<_>>>()?;
        Ok(Recognizer { dnfs })
    }

    /// Builds a recognizer directly from DNF trees (used for rule oracles).
    pub fn from_dnfs(dnfs: Vec<DnfTree>) -> Self {
        Recognizer { dnfs }
    }

    /// The set of situations recognized in `image`.
    ///
    /// Situations are independent: any subset of the repository, including
    /// the empty set, is a legal answer. Errors name the situation whose
    /// evaluation needed a missing sensor value.
    pub fn recognize(&self, image: &SensorImage) -> Result<BTreeSet<String>> {
        let mut recognized = BTreeSet::new();
        for dnf in &self.dnfs {
            let fired = dnf.evaluate(image).map_err(|e| match e {
                Error::MissingSensorValue { sensor, .. } => Error::MissingSensorValue {
                    sensor,
                    situation: Some(dnf.situation.clone()),
                },
                other => other,
            })?;
            if fired {
                recognized.insert(dnf.situation.clone());
            }
        }
        Ok(recognized)
    }

    /// Recognizes a timestamp-ordered stream of images one by one.
    ///
    /// Equivalent to calling [`Recognizer::recognize`] per image; the
    /// stream form additionally rejects out-of-order timestamps, since a
    /// feed that goes backwards in time indicates a broken data source.
    pub fn recognize_stream(&self, images: &[SensorImage]) -> Result<Vec<BTreeSet<String>>> {
        let mut results = Vec::with_capacity(images.len());
        let mut last: Option<i64> = None;
        for image in images {
            if let Some(prev) = last {
                if image.timestamp <= prev {
                    return Err(Error::OutOfOrderTimestamp {
                        prev,
                        next: image.timestamp,
                    });
                }
            }
            last = Some(image.timestamp);
            results.push(self.recognize(image)?);
        }
        Ok(results)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{Comparator, Condition};
    use rand::{Rng, SeedableRng};
    use std::collections::BTreeMap;

    fn image(pairs: &[(&str, f64)]) -> SensorImage {
        SensorImage::new(
            0,
            pairs
                .iter()
                .map(|(k, v)| (k.to_string(), Some(*v)))
                .collect::<BTreeMap<_, _>>(),
        )
    }

    fn path(conds: Vec<Condition>) -> DnfPath {
        DnfPath::new(conds).unwrap()
    }

    #[test]
    fn all_conditions_must_hold() {
        let p = path(vec![
            Condition::threshold("light", Comparator::Gt, 0.4).unwrap(),
            Condition::exact("motion", Comparator::Eq, 1.0).unwrap(),
        ]);
        assert!(eval_path(&p, &image(&[("light", 0.5), ("motion", 1.0)])).unwrap());
        assert!(!eval_path(&p, &image(&[("light", 0.5), ("motion", 0.0)])).unwrap());
        assert!(!eval_path(&p, &image(&[("light", 0.3), ("motion", 1.0)])).unwrap());
    }

    #[test]
    fn threshold_comparison_is_strict_for_gt() {
        let p = path(vec![Condition::threshold("light", Comparator::Gt, 0.4).unwrap()]);
        assert!(!eval_path(&p, &image(&[("light", 0.4)])).unwrap());
        let p = path(vec![Condition::threshold("light", Comparator::Ge, 0.4).unwrap()]);
        assert!(eval_path(&p, &image(&[("light", 0.4)])).unwrap());
    }

    #[test]
    fn missing_sensor_value_is_an_error() {
        let p = path(vec![Condition::exact("motion", Comparator::Eq, 1.0).unwrap()]);
        // Key absent entirely.
        match eval_path(&p, &image(&[("light", 0.5)])) {
            Err(Error::MissingSensorValue { sensor, .. }) => assert_eq!(sensor, "motion"),
            other => panic!("expected MissingSensorValue, got {other:?}"),
        }
        // Key present with the explicit absent marker.
        let mut readings = BTreeMap::new();
        readings.insert("motion".to_string(), None);
        let img = SensorImage::new(0, readings);
        assert!(matches!(
            eval_path(&p, &img),
            Err(Error::MissingSensorValue { .. })
        ));
    }

    #[test]
    fn random_paths_agree_with_a_direct_conjunction_check() {
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(7);
        let sensors = ["a", "b", "c", "d"];
        for _ in 0..500 {
            let n = rng.gen_range(1..=4);
            let mut conds = Vec::new();
            for _ in 0..n {
                let sensor = sensors[rng.gen_range(0..sensors.len())];
                let c = if rng.gen_bool(0.5) {
                    let cmp = [Comparator::Lt, Comparator::Le, Comparator::Gt, Comparator::Ge]
                        [rng.gen_range(0..4)];
                    Condition::threshold(sensor, cmp, (rng.gen_range(0..=100) as f64) / 100.0)
                        .unwrap()
                } else {
                    let cmp = if rng.gen_bool(0.5) { Comparator::Eq } else { Comparator::Ne };
                    Condition::exact(sensor, cmp, f64::from(rng.gen_range(0..=1u8))).unwrap()
                };
                conds.push(c);
            }
            let Ok(p) = DnfPath::new(conds) else { continue };
            let img = image(&[
                ("a", (rng.gen_range(0..=100) as f64) / 100.0),
                ("b", (rng.gen_range(0..=100) as f64) / 100.0),
                ("c", f64::from(rng.gen_range(0..=1u8))),
                ("d", f64::from(rng.gen_range(0..=1u8))),
            ]);
            let expected = p
                .conditions
                .iter()
                .all(|c| c.holds(img.reading(&c.sensor).unwrap()));
            assert_eq!(eval_path(&p, &img).unwrap(), expected);
        }
    }

    #[test]
    fn stream_results_match_per_image_results() {
        let dnf = DnfTree::new(
            "Working",
            vec![path(vec![Condition::exact("motion", Comparator::Eq, 1.0).unwrap()])],
        )
        .unwrap();
        let rec = Recognizer::from_dnfs(vec![dnf]);
        let images: Vec<SensorImage> = (0..5)
            .map(|t| {
                let mut img = image(&[("motion", f64::from(t % 2))]);
                img.timestamp = i64::from(t);
                img
            })
            .collect();
        let streamed = rec.recognize_stream(&images).unwrap();
        for (img, got) in images.iter().zip(&streamed) {
            assert_eq!(&rec.recognize(img).unwrap(), got);
        }
    }

    #[test]
    fn out_of_order_timestamps_are_rejected() {
        let rec = Recognizer::from_dnfs(vec![]);
        let mut a = image(&[]);
        a.timestamp = 5;
        let mut b = image(&[]);
        b.timestamp = 4;
        match rec.recognize_stream(&[a, b]) {
            Err(Error::OutOfOrderTimestamp { prev, next }) => {
                assert_eq!((prev, next), (5, 4));
            }
            other => panic!("expected OutOfOrderTimestamp, got {other:?}"),
        }
    }

    #[test]
    fn missing_value_error_names_the_situation() {
        let dnf = DnfTree::new(
            "Working",
            vec![path(vec![Condition::exact("motion", Comparator::Eq, 1.0).unwrap()])],
        )
        .unwrap();
        let rec = Recognizer::from_dnfs(vec![dnf]);
        match rec.recognize(&image(&[("light", 0.2)])) {
            Err(Error::MissingSensorValue { sensor, situation }) => {
                assert_eq!(sensor, "motion");
                assert_eq!(situation.as_deref(), Some("Working"));
            }
            other => panic!("expected MissingSensorValue, got {other:?}"),
        }
    }
}
