//! A simulated company office that emits labeled sensor images.
//!
//! The environment has three rooms — a working room (motion, light,
//! noise, TV), a management room (motion, light), and a rest room
//! (motion, light switch) — plus one synthesized reading, `prev-lights`,
//! which reports whether any light was on in the previously emitted
//! image. Labels come from a rule document evaluated in priority order,
//! so transition situations (`Opening`, `Closing`) take precedence over
//! steady ones (`Educating`, `Working`).
//!
//! Generation walks a two-phase scenario. While the office is closed it
//! emits dark, still images; each tick it may open, producing a single
//! transition image with one room's lights coming on. While open, each
//! tick either continues some activity — working at desks, working in the
//! management room, a TV lecture, idling, using the rest room, or an
//! unstructured mix — or closes, producing a lights-out transition image.
//!
//! Every candidate image passes domain feasibility checks before being
//! emitted (a running TV implies a lit, audible working room); a drawing
//! rule set that cannot produce a feasible image within a bounded number
//! of attempts aborts generation. Labels are derived from the clean
//! image; sensor faults, when configured, corrupt the emitted readings
//! afterwards, and a configurable fraction of labels per part is then
//! reassigned to simulate annotation mistakes. The whole stream is split
//! into consecutive parts with a shared clock; the last part is the test
//! part.

use std::collections::BTreeMap;
use std::path::Path;

use rand::seq::index::sample;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::Error;
use crate::model::{
    EnvironmentSpec, LabeledImage, Room, SensorImage, SensorType, TemplateDocument, ValueKind,
    NONE_LABEL,
};
use crate::Result;

/// A light reading above this value counts as "lights on" when the
/// `prev-lights` reading is synthesized.
pub const LIGHTS_ON_MIN: f64 = 0.3;

/// How many times one tick may redraw an infeasible candidate image
/// before generation gives up.
const MAX_REJECTIONS: u32 = 1000;

const WORKING_MOTION: &str = "working-motion";
const WORKING_LIGHT: &str = "working-light";
const WORKING_NOISE: &str = "working-noise";
const WORKING_TV: &str = "working-tv";
const MANAGEMENT_MOTION: &str = "management-motion";
const MANAGEMENT_LIGHT: &str = "management-light";
const REST_MOTION: &str = "rest-motion";
const REST_LIGHT: &str = "rest-light";
const PREV_LIGHTS: &str = "prev-lights";

/// The built-in company environment.
pub fn company() -> EnvironmentSpec {
    EnvironmentSpec::new(
        vec![
            SensorType::new(WORKING_MOTION, ValueKind::Boolean),
            SensorType::new(WORKING_LIGHT, ValueKind::Continuous),
            SensorType::new(WORKING_NOISE, ValueKind::Continuous),
            SensorType::new(WORKING_TV, ValueKind::Boolean),
            SensorType::new(MANAGEMENT_MOTION, ValueKind::Boolean),
            SensorType::new(MANAGEMENT_LIGHT, ValueKind::Continuous),
            SensorType::new(REST_MOTION, ValueKind::Boolean),
            SensorType::new(REST_LIGHT, ValueKind::Boolean),
            SensorType::new(PREV_LIGHTS, ValueKind::Boolean),
        ],
        vec![
            Room {
                name: "working room".to_string(),
                sensors: vec![
                    WORKING_MOTION.to_string(),
                    WORKING_LIGHT.to_string(),
                    WORKING_NOISE.to_string(),
                    WORKING_TV.to_string(),
                ],
            },
            Room {
                name: "management room".to_string(),
                sensors: vec![MANAGEMENT_MOTION.to_string(), MANAGEMENT_LIGHT.to_string()],
            },
            Room {
                name: "rest room".to_string(),
                sensors: vec![REST_MOTION.to_string(), REST_LIGHT.to_string()],
            },
        ],
        vec![
            "Closing".to_string(),
            "Opening".to_string(),
            "Educating".to_string(),
            "Working".to_string(),
        ],
        1,
    )
    .expect("the built-in environment is valid")
}

/// How one sensor misbehaves.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "mode", rename_all = "lowercase")]
pub enum FaultMode {
    /// The sensor is stuck and always reports this value.
    Fixed { value: f64 },
    /// The sensor reports uniform garbage of its value kind.
    Uniform,
    /// A motion-style sensor misses activity: a reading of 1 is dropped
    /// to 0 with this probability.
    MotionMiss { rate: f64 },
}

/// A fault applied to one sensor of every emitted image.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FaultSpec {
    pub sensor: String,
    #[serde(flatten)]
    pub mode: FaultMode,
}

fn default_parts() -> u32 {
    7
}
fn default_part_min() -> u32 {
    200
}
fn default_part_max() -> u32 {
    250
}
fn default_error_rate() -> f64 {
    0.02
}

/// Parameters of one dataset generation run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct GenerationParams {
    pub seed: u64,
    /// Number of consecutive parts; the last one is the test part.
    #[serde(default = "default_parts")]
    pub parts: u32,
    #[serde(default = "default_part_min")]
    pub images_per_part_min: u32,
    #[serde(default = "default_part_max")]
    pub images_per_part_max: u32,
    /// Fraction of each part's labels reassigned to a different label.
    #[serde(default = "default_error_rate")]
    pub error_rate: f64,
    /// The rules that label images, in priority order.
    #[serde(default = "crate::data::ground_truth_rules")]
    pub ground_truth_rules: TemplateDocument,
    #[serde(default)]
    pub faults: Vec<FaultSpec>,
}

impl Default for GenerationParams {
    fn default() -> Self {
        GenerationParams {
            seed: 42,
            parts: default_parts(),
            images_per_part_min: default_part_min(),
            images_per_part_max: default_part_max(),
            error_rate: default_error_rate(),
            ground_truth_rules: crate::data::ground_truth_rules(),
            faults: Vec::new(),
        }
    }
}

impl GenerationParams {
    fn validate(&self, env: &EnvironmentSpec) -> Result<()> {
        let invalid = |message: String| Error::Invalid {
            what: "generation parameters",
            message,
        };
        if self.parts < 2 {
            return Err(invalid(format!(
                "need at least 2 parts (training and test), got {}",
                self.parts
            )));
        }
        if self.images_per_part_min < 1 {
            return Err(invalid("parts must hold at least one image".to_string()));
        }
        if self.images_per_part_min > self.images_per_part_max {
            return Err(invalid(format!(
                "images_per_part_min {} exceeds images_per_part_max {}",
                self.images_per_part_min, self.images_per_part_max
            )));
        }
        if !self.error_rate.is_finite() || !(0.0..=1.0).contains(&self.error_rate) {
            return Err(invalid(format!(
                "error_rate {} is outside [0, 1]",
                self.error_rate
            )));
        }
        self.ground_truth_rules.validate_against(env)?;
        for fault in &self.faults {
            let sensor = env
                .sensor(&fault.sensor)
                .ok_or_else(|| Error::UnknownSensor {
                    sensor: fault.sensor.clone(),
                })?;
            match fault.mode {
                FaultMode::Fixed { value } => {
                    if !sensor.admits(value) {
                        return Err(Error::OutOfRange {
                            sensor: fault.sensor.clone(),
                            value,
                        });
                    }
                }
                FaultMode::MotionMiss { rate } => {
                    if !rate.is_finite() || !(0.0..=1.0).contains(&rate) {
                        return Err(invalid(format!(
                            "motion-miss rate {rate} is outside [0, 1]"
                        )));
                    }
                }
                FaultMode::Uniform => {}
            }
        }
        Ok(())
    }
}

/// A generated dataset: training parts followed by one test part, all on
/// one continuous clock.
#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    pub train_parts: Vec<Vec<LabeledImage>>,
    pub test: Vec<LabeledImage>,
}

/// Evaluates the rule document in priority order; the first matching
/// situation labels the image, and `"none"` labels images no rule claims.
pub fn ground_truth(rules: &TemplateDocument, image: &SensorImage) -> Result<String> {
    for template in &rules.templates {
        if template.root.evaluate(image)? {
            return Ok(template.situation.clone());
        }
    }
    Ok(NONE_LABEL.to_string())
}

type Readings = BTreeMap<String, Option<f64>>;

fn uniform(rng: &mut ChaCha8Rng, lo: f64, hi: f64) -> f64 {
    rng.gen_range(lo..hi)
}

fn coin(rng: &mut ChaCha8Rng, p: f64) -> f64 {
    if rng.gen_bool(p) {
        1.0
    } else {
        0.0
    }
}

fn readings_from(values: [(&str, f64); 8]) -> Readings {
    values
        .iter()
        .map(|(k, v)| (k.to_string(), Some(*v)))
        .collect()
}

/// What one tick of the scenario produces.
#[derive(Debug, Clone, Copy, PartialEq)]
enum TickKind {
    /// Office closed, everything dark and still.
    ClosedIdle,
    /// The office opens; one room's lights come on.
    Opening(Anchor),
    /// The office closes; all lights go out.
    Closing,
    /// People work at desks in the working room.
    WorkingDesks,
    /// Someone works in the management room; the working room is dark.
    WorkingManagement,
    /// A TV lecture in the working room.
    Educating,
    /// The office is open but nothing much happens.
    OpenIdle,
    /// Someone uses the rest room; everything else is dark.
    RestRoom,
    /// Unstructured activity: most sensors drawn freely.
    OpenRandom,
}

/// Which room the first arrival switches on.
#[derive(Debug, Clone, Copy, PartialEq)]
enum Anchor {
    WorkingRoom,
    ManagementRoom,
    RestRoom,
}

const P_OPEN: f64 = 0.5;
const P_CLOSE: f64 = 0.12;

#[derive(Debug, Clone, Copy, PartialEq)]
enum Phase {
    Closed,
    Open,
}

struct Scenario {
    phase: Phase,
}

impl Scenario {
    fn new() -> Self {
        Scenario {
            phase: Phase::Closed,
        }
    }

    /// Advances the phase machine and picks what the next image shows.
    fn decide(&mut self, rng: &mut ChaCha8Rng) -> TickKind {
        match self.phase {
            Phase::Closed => {
                if rng.gen_bool(P_OPEN) {
                    self.phase = Phase::Open;
                    let anchor = match rng.gen_range(0.0..1.0) {
                        x if x < 0.90 => Anchor::WorkingRoom,
                        x if x < 0.97 => Anchor::ManagementRoom,
                        _ => Anchor::RestRoom,
                    };
                    TickKind::Opening(anchor)
                } else {
                    TickKind::ClosedIdle
                }
            }
            Phase::Open => {
                if rng.gen_bool(P_CLOSE) {
                    self.phase = Phase::Closed;
                    TickKind::Closing
                } else {
                    match rng.gen_range(0.0..1.0) {
                        x if x < 0.28 => TickKind::WorkingDesks,
                        x if x < 0.40 => TickKind::WorkingManagement,
                        x if x < 0.65 => TickKind::Educating,
                        x if x < 0.80 => TickKind::OpenIdle,
                        x if x < 0.90 => TickKind::RestRoom,
                        _ => TickKind::OpenRandom,
                    }
                }
            }
        }
    }
}

/// Draws the eight room readings for one tick.
fn draw_readings(kind: TickKind, rng: &mut ChaCha8Rng) -> Readings {
    match kind {
        TickKind::ClosedIdle => readings_from([
            (WORKING_MOTION, 0.0),
            (WORKING_LIGHT, uniform(rng, 0.0, 0.3)),
            (WORKING_NOISE, uniform(rng, 0.0, 0.15)),
            (WORKING_TV, 0.0),
            (MANAGEMENT_MOTION, 0.0),
            (MANAGEMENT_LIGHT, uniform(rng, 0.0, 0.3)),
            (REST_MOTION, 0.0),
            (REST_LIGHT, 0.0),
        ]),
        TickKind::Opening(anchor) => {
            let motion = coin(rng, 0.6);
            match anchor {
                Anchor::WorkingRoom => readings_from([
                    (WORKING_MOTION, motion),
                    (WORKING_LIGHT, uniform(rng, 0.35, 0.9)),
                    (WORKING_NOISE, uniform(rng, 0.0, 0.3)),
                    (WORKING_TV, 0.0),
                    (MANAGEMENT_MOTION, 0.0),
                    (MANAGEMENT_LIGHT, uniform(rng, 0.0, 0.3)),
                    (REST_MOTION, 0.0),
                    (REST_LIGHT, 0.0),
                ]),
                Anchor::ManagementRoom => readings_from([
                    (WORKING_MOTION, 0.0),
                    (WORKING_LIGHT, uniform(rng, 0.0, 0.3)),
                    (WORKING_NOISE, uniform(rng, 0.0, 0.2)),
                    (WORKING_TV, 0.0),
                    (MANAGEMENT_MOTION, motion),
                    (MANAGEMENT_LIGHT, uniform(rng, 0.35, 0.9)),
                    (REST_MOTION, 0.0),
                    (REST_LIGHT, 0.0),
                ]),
                Anchor::RestRoom => readings_from([
                    (WORKING_MOTION, 0.0),
                    (WORKING_LIGHT, uniform(rng, 0.0, 0.3)),
                    (WORKING_NOISE, uniform(rng, 0.0, 0.2)),
                    (WORKING_TV, 0.0),
                    (MANAGEMENT_MOTION, 0.0),
                    (MANAGEMENT_LIGHT, uniform(rng, 0.0, 0.3)),
                    (REST_MOTION, motion),
                    (REST_LIGHT, 1.0),
                ]),
            }
        }
        TickKind::Closing => readings_from([
            (WORKING_MOTION, 0.0),
            (WORKING_LIGHT, uniform(rng, 0.0, 0.3)),
            (WORKING_NOISE, uniform(rng, 0.0, 0.2)),
            (WORKING_TV, 0.0),
            (MANAGEMENT_MOTION, 0.0),
            (MANAGEMENT_LIGHT, uniform(rng, 0.0, 0.3)),
            (REST_MOTION, 0.0),
            (REST_LIGHT, 0.0),
        ]),
        TickKind::WorkingDesks => readings_from([
            (WORKING_MOTION, 1.0),
            (WORKING_LIGHT, uniform(rng, 0.55, 1.0)),
            (WORKING_NOISE, uniform(rng, 0.0, 0.4)),
            (WORKING_TV, 0.0),
            (MANAGEMENT_MOTION, 0.0),
            (MANAGEMENT_LIGHT, uniform(rng, 0.0, 0.3)),
            (REST_MOTION, 0.0),
            (REST_LIGHT, 0.0),
        ]),
        TickKind::WorkingManagement => readings_from([
            (WORKING_MOTION, 0.0),
            (WORKING_LIGHT, uniform(rng, 0.0, 0.3)),
            (WORKING_NOISE, uniform(rng, 0.0, 0.3)),
            (WORKING_TV, 0.0),
            (MANAGEMENT_MOTION, 1.0),
            (MANAGEMENT_LIGHT, uniform(rng, 0.55, 1.0)),
            (REST_MOTION, 0.0),
            (REST_LIGHT, 0.0),
        ]),
        TickKind::Educating => readings_from([
            (WORKING_MOTION, 1.0),
            (WORKING_LIGHT, uniform(rng, 0.35, 1.0)),
            (WORKING_NOISE, uniform(rng, 0.42, 1.0)),
            (WORKING_TV, 1.0),
            (MANAGEMENT_MOTION, 0.0),
            (MANAGEMENT_LIGHT, uniform(rng, 0.0, 0.3)),
            (REST_MOTION, 0.0),
            (REST_LIGHT, 0.0),
        ]),
        TickKind::OpenIdle => readings_from([
            (WORKING_MOTION, 0.0),
            (WORKING_LIGHT, uniform(rng, 0.35, 0.6)),
            (WORKING_NOISE, uniform(rng, 0.0, 0.2)),
            (WORKING_TV, 0.0),
            (MANAGEMENT_MOTION, 0.0),
            (MANAGEMENT_LIGHT, uniform(rng, 0.0, 0.3)),
            (REST_MOTION, 0.0),
            (REST_LIGHT, 0.0),
        ]),
        TickKind::RestRoom => readings_from([
            (WORKING_MOTION, 0.0),
            (WORKING_LIGHT, uniform(rng, 0.0, 0.3)),
            (WORKING_NOISE, uniform(rng, 0.0, 0.2)),
            (WORKING_TV, 0.0),
            (MANAGEMENT_MOTION, 0.0),
            (MANAGEMENT_LIGHT, uniform(rng, 0.0, 0.3)),
            (REST_MOTION, 1.0),
            (REST_LIGHT, 1.0),
        ]),
        TickKind::OpenRandom => readings_from([
            (WORKING_MOTION, coin(rng, 0.5)),
            (WORKING_LIGHT, uniform(rng, 0.35, 1.0)),
            (WORKING_NOISE, uniform(rng, 0.0, 1.0)),
            (WORKING_TV, coin(rng, 0.3)),
            (MANAGEMENT_MOTION, coin(rng, 0.3)),
            (MANAGEMENT_LIGHT, uniform(rng, 0.0, 1.0)),
            (REST_MOTION, coin(rng, 0.3)),
            (REST_LIGHT, coin(rng, 0.2)),
        ]),
    }
}

fn reading(readings: &Readings, sensor: &str) -> f64 {
    readings.get(sensor).copied().flatten().unwrap_or(0.0)
}

/// Domain feasibility of one candidate image: a running TV implies a lit,
/// audible working room.
fn feasible(readings: &Readings) -> bool {
    if reading(readings, WORKING_TV) == 1.0 {
        reading(readings, WORKING_LIGHT) >= 0.2 && reading(readings, WORKING_NOISE) >= 0.05
    } else {
        true
    }
}

/// Redraws candidates until one passes `ok`, erroring after `limit`
/// consecutive rejections.
fn draw_feasible<T>(
    rng: &mut ChaCha8Rng,
    limit: u32,
    mut draw: impl FnMut(&mut ChaCha8Rng) -> T,
    ok: impl Fn(&T) -> bool,
) -> Result<T> {
    for _ in 0..limit {
        let candidate = draw(rng);
        if ok(&candidate) {
            return Ok(candidate);
        }
    }
    Err(Error::InfeasibleRuleSet)
}

/// Whether any light in the emitted image counts as on.
fn lights_on(image: &SensorImage) -> f64 {
    let on = image
        .reading(WORKING_LIGHT)
        .is_some_and(|v| v > LIGHTS_ON_MIN)
        || image
            .reading(MANAGEMENT_LIGHT)
            .is_some_and(|v| v > LIGHTS_ON_MIN)
        || image.reading(REST_LIGHT).is_some_and(|v| v == 1.0);
    if on {
        1.0
    } else {
        0.0
    }
}

fn apply_faults(
    faults: &[FaultSpec],
    env: &EnvironmentSpec,
    image: &mut SensorImage,
    rng: &mut ChaCha8Rng,
) {
    for fault in faults {
        let current = image.reading(&fault.sensor);
        let new = match fault.mode {
            FaultMode::Fixed { value } => Some(value),
            FaultMode::Uniform => {
                let kind = env
                    .sensor(&fault.sensor)
                    .expect("fault sensors are validated")
                    .kind;
                Some(match kind {
                    ValueKind::Boolean => coin(rng, 0.5),
                    ValueKind::Continuous => uniform(rng, 0.0, 1.0),
                })
            }
            FaultMode::MotionMiss { rate } => match current {
                Some(v) if v == 1.0 && rng.gen_bool(rate) => Some(0.0),
                other => other,
            },
        };
        image.readings.insert(fault.sensor.clone(), new);
    }
}

/// Reassigns exactly `round(error_rate * len)` labels of the part to a
/// uniformly chosen different label.
fn inject_label_noise(
    part: &mut [LabeledImage],
    error_rate: f64,
    env: &EnvironmentSpec,
    rng: &mut ChaCha8Rng,
) {
    let count = (error_rate * part.len() as f64).round() as usize;
    if count == 0 {
        return;
    }
    let mut indices: Vec<usize> = sample(rng, part.len(), count).into_vec();
    indices.sort_unstable();
    let mut labels: Vec<&str> = env.situations.iter().map(String::as_str).collect();
    labels.push(NONE_LABEL);
    for idx in indices {
        let alternatives: Vec<&str> = labels
            .iter()
            .copied()
            .filter(|l| *l != part[idx].label)
            .collect();
        part[idx].label = alternatives[rng.gen_range(0..alternatives.len())].to_string();
    }
}

/// Generates a dataset for the company environment.
pub fn generate(params: &GenerationParams) -> Result<Dataset> {
    let env = company();
    params.validate(&env)?;
    let mut rng = ChaCha8Rng::seed_from_u64(params.seed);

    let sizes: Vec<usize> = (0..params.parts)
        .map(|_| rng.gen_range(params.images_per_part_min..=params.images_per_part_max) as usize)
        .collect();

    let mut scenario = Scenario::new();
    let mut prev_lights = 0.0;
    let mut timestamp: i64 = 0;
    let mut parts: Vec<Vec<LabeledImage>> = Vec::with_capacity(sizes.len());

    for &size in &sizes {
        let mut part = Vec::with_capacity(size);
        for _ in 0..size {
            let kind = scenario.decide(&mut rng);
            let mut readings = draw_feasible(
                &mut rng,
                MAX_REJECTIONS,
                |rng| draw_readings(kind, rng),
                feasible,
            )?;
            readings.insert(PREV_LIGHTS.to_string(), Some(prev_lights));
            let mut image = SensorImage::new(timestamp, readings);
            debug_assert!(
                crate::model::validate_image(&env, &image).is_ok(),
                "generated images must validate"
            );
            let label = ground_truth(&params.ground_truth_rules, &image)?;
            apply_faults(&params.faults, &env, &mut image, &mut rng);
            prev_lights = lights_on(&image);
            part.push(LabeledImage { image, label });
            timestamp += env.tick_seconds as i64;
        }
        inject_label_noise(&mut part, params.error_rate, &env, &mut rng);
        parts.push(part);
    }

    let test = parts.pop().expect("at least two parts were generated");
    Ok(Dataset {
        train_parts: parts,
        test,
    })
}

fn csv_io(path: &Path, e: csv::Error) -> Error {
    Error::io(path, std::io::Error::other(e))
}

/// Writes one part as CSV: `timestamp`, one column per sensor (sorted),
/// `label`; absent readings become empty cells.
pub fn write_part_csv(
    path: impl AsRef<Path>,
    part: &[LabeledImage],
    env: &EnvironmentSpec,
) -> Result<()> {
    let path = path.as_ref();
    let mut writer = csv::Writer::from_path(path).map_err(|e| csv_io(path, e))?;
    let sensors = env.feature_order();
    let mut header = vec!["timestamp".to_string()];
    header.extend(sensors.iter().cloned());
    header.push("label".to_string());
    writer.write_record(&header).map_err(|e| csv_io(path, e))?;
    for item in part {
        let mut record = vec![item.image.timestamp.to_string()];
        for sensor in &sensors {
            record.push(match item.image.reading(sensor) {
                Some(v) => v.to_string(),
                None => String::new(),
            });
        }
        record.push(item.label.clone());
        writer.write_record(&record).map_err(|e| csv_io(path, e))?;
    }
    writer.flush().map_err(|e| Error::io(path, e))?;
    Ok(())
}

/// Reads one part back from CSV. The header must match what
/// [`write_part_csv`] produces for this environment.
pub fn read_part_csv(path: impl AsRef<Path>, env: &EnvironmentSpec) -> Result<Vec<LabeledImage>> {
    let path = path.as_ref();
    let mut reader = csv::Reader::from_path(path).map_err(|e| csv_io(path, e))?;
    let sensors = env.feature_order();

    let mut expected = vec!["timestamp".to_string()];
    expected.extend(sensors.iter().cloned());
    expected.push("label".to_string());
    let header = reader.headers().map_err(|e| csv_io(path, e))?;
    let header: Vec<String> = header.iter().map(str::to_string).collect();
    if header != expected {
        return Err(Error::DatasetFormat {
            line: 1,
            message: format!(
                "header mismatch: expected {}, found {}",
                expected.join(","),
                header.join(",")
            ),
        });
    }

    let mut part = Vec::new();
    for (i, record) in reader.records().enumerate() {
        let record = record.map_err(|e| csv_io(path, e))?;
        let line = record
            .position()
            .map(|p| p.line() as usize)
            .unwrap_or(i + 2);
        let bad = |message: String| Error::DatasetFormat { line, message };
        if record.len() != expected.len() {
            return Err(bad(format!(
                "expected {} fields, found {}",
                expected.len(),
                record.len()
            )));
        }
        let timestamp: i64 = record[0]
            .parse()
            .map_err(|_| bad(format!("cannot parse timestamp `{}`", &record[0])))?;
        let mut readings = BTreeMap::new();
        for (j, sensor) in sensors.iter().enumerate() {
            let field = &record[j + 1];
            let value = if field.is_empty() {
                None
            } else {
                Some(field.parse::<f64>().map_err(|_| {
                    bad(format!("cannot parse `{field}` for sensor `{sensor}`"))
                })?)
            };
            readings.insert(sensor.clone(), value);
        }
        let label = record[expected.len() - 1].to_string();
        if label.is_empty() {
            return Err(bad("empty label".to_string()));
        }
        part.push(LabeledImage {
            image: SensorImage::new(timestamp, readings),
            label,
        });
    }
    Ok(part)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::validate_image;

    fn image(values: &[(&str, f64)]) -> SensorImage {
        SensorImage::new(
            0,
            values
                .iter()
                .map(|(k, v)| (k.to_string(), Some(*v)))
                .collect(),
        )
    }

    #[test]
    fn the_company_environment_is_well_formed() {
        let env = company();
        assert_eq!(env.sensors.len(), 9);
        assert_eq!(env.rooms.len(), 3);
        assert_eq!(
            env.situations,
            ["Closing", "Opening", "Educating", "Working"]
        );
        assert_eq!(env.tick_seconds, 1);
        assert_eq!(env.sensor(PREV_LIGHTS).unwrap().kind, ValueKind::Boolean);
        assert_eq!(
            env.sensor(WORKING_LIGHT).unwrap().kind,
            ValueKind::Continuous
        );
    }

    #[test]
    fn rules_label_canonical_scenes_correctly() {
        let rules = crate::data::ground_truth_rules();
        let label = |values: &[(&str, f64)]| ground_truth(&rules, &image(values)).unwrap();

        // Lights just went out after an open phase.
        assert_eq!(
            label(&[
                (PREV_LIGHTS, 1.0),
                (WORKING_LIGHT, 0.1),
                (MANAGEMENT_LIGHT, 0.05),
                (REST_LIGHT, 0.0),
                (WORKING_MOTION, 0.0),
                (WORKING_NOISE, 0.1),
                (WORKING_TV, 0.0),
                (MANAGEMENT_MOTION, 0.0),
                (REST_MOTION, 0.0),
            ]),
            "Closing"
        );

        // Lights just came on in the working room.
        assert_eq!(
            label(&[
                (PREV_LIGHTS, 0.0),
                (WORKING_LIGHT, 0.6),
                (MANAGEMENT_LIGHT, 0.1),
                (REST_LIGHT, 0.0),
                (WORKING_MOTION, 1.0),
                (WORKING_NOISE, 0.1),
                (WORKING_TV, 0.0),
                (MANAGEMENT_MOTION, 0.0),
                (REST_MOTION, 0.0),
            ]),
            "Opening",
            "a transition outranks the steady Working reading"
        );

        // TV lecture.
        assert_eq!(
            label(&[
                (PREV_LIGHTS, 1.0),
                (WORKING_LIGHT, 0.5),
                (MANAGEMENT_LIGHT, 0.1),
                (REST_LIGHT, 0.0),
                (WORKING_MOTION, 1.0),
                (WORKING_NOISE, 0.7),
                (WORKING_TV, 1.0),
                (MANAGEMENT_MOTION, 0.0),
                (REST_MOTION, 0.0),
            ]),
            "Educating"
        );

        // Desk work; TV off distinguishes it from a lecture.
        assert_eq!(
            label(&[
                (PREV_LIGHTS, 1.0),
                (WORKING_LIGHT, 0.8),
                (MANAGEMENT_LIGHT, 0.1),
                (REST_LIGHT, 0.0),
                (WORKING_MOTION, 1.0),
                (WORKING_NOISE, 0.2),
                (WORKING_TV, 0.0),
                (MANAGEMENT_MOTION, 0.0),
                (REST_MOTION, 0.0),
            ]),
            "Working"
        );

        // Management room in use.
        assert_eq!(
            label(&[
                (PREV_LIGHTS, 1.0),
                (WORKING_LIGHT, 0.1),
                (MANAGEMENT_LIGHT, 0.9),
                (REST_LIGHT, 0.0),
                (WORKING_MOTION, 0.0),
                (WORKING_NOISE, 0.1),
                (WORKING_TV, 0.0),
                (MANAGEMENT_MOTION, 1.0),
                (REST_MOTION, 0.0),
            ]),
            "Working"
        );

        // Rest-room usage matches nothing.
        assert_eq!(
            label(&[
                (PREV_LIGHTS, 1.0),
                (WORKING_LIGHT, 0.1),
                (MANAGEMENT_LIGHT, 0.1),
                (REST_LIGHT, 1.0),
                (WORKING_MOTION, 0.0),
                (WORKING_NOISE, 0.1),
                (WORKING_TV, 0.0),
                (MANAGEMENT_MOTION, 0.0),
                (REST_MOTION, 1.0),
            ]),
            NONE_LABEL
        );

        // A lecture also satisfying the management Working path stays a
        // lecture: document order decides.
        assert_eq!(
            label(&[
                (PREV_LIGHTS, 1.0),
                (WORKING_LIGHT, 0.5),
                (MANAGEMENT_LIGHT, 0.9),
                (REST_LIGHT, 0.0),
                (WORKING_MOTION, 1.0),
                (WORKING_NOISE, 0.7),
                (WORKING_TV, 1.0),
                (MANAGEMENT_MOTION, 1.0),
                (REST_MOTION, 0.0),
            ]),
            "Educating"
        );
    }

    #[test]
    fn datasets_have_the_requested_shape() {
        let params = GenerationParams::default();
        let data = generate(&params).unwrap();
        assert_eq!(data.train_parts.len(), 6);
        let mut all: Vec<&LabeledImage> = data.train_parts.iter().flatten().collect();
        all.extend(&data.test);
        for part in data.train_parts.iter().chain([&data.test]) {
            assert!(part.len() >= 200 && part.len() <= 250, "{}", part.len());
        }
        // One continuous clock across parts.
        for (i, item) in all.iter().enumerate() {
            assert_eq!(item.image.timestamp, i as i64);
        }
    }

    #[test]
    fn every_generated_image_is_valid_and_feasible() {
        let env = company();
        let data = generate(&GenerationParams::default()).unwrap();
        let mut prev = 0.0;
        for item in data.train_parts.iter().flatten().chain(&data.test) {
            validate_image(&env, &item.image).unwrap();
            let readings: Readings = item.image.readings.clone();
            assert!(feasible(&readings));
            assert_eq!(
                item.image.reading(PREV_LIGHTS),
                Some(prev),
                "prev-lights must mirror the previous image at t={}",
                item.image.timestamp
            );
            prev = lights_on(&item.image);
        }
    }

    #[test]
    fn label_noise_count_is_exact() {
        let params = GenerationParams::default();
        let data = generate(&params).unwrap();
        let rules = &params.ground_truth_rules;
        for part in data.train_parts.iter().chain([&data.test]) {
            let expected = (params.error_rate * part.len() as f64).round() as usize;
            let flipped = part
                .iter()
                .filter(|item| ground_truth(rules, &item.image).unwrap() != item.label)
                .count();
            assert_eq!(flipped, expected, "part of {} images", part.len());
        }
    }

    #[test]
    fn zero_error_rate_reproduces_the_rules_exactly() {
        let params = GenerationParams {
            error_rate: 0.0,
            ..GenerationParams::default()
        };
        let data = generate(&params).unwrap();
        for item in data.train_parts.iter().flatten().chain(&data.test) {
            assert_eq!(
                item.label,
                ground_truth(&params.ground_truth_rules, &item.image).unwrap()
            );
        }
    }

    #[test]
    fn generation_is_deterministic_in_the_seed() {
        let params = GenerationParams::default();
        assert_eq!(generate(&params).unwrap(), generate(&params).unwrap());
        let other = GenerationParams {
            seed: 43,
            ..GenerationParams::default()
        };
        assert_ne!(generate(&params).unwrap(), generate(&other).unwrap());
    }

    #[test]
    fn all_situations_and_none_appear_in_training_data() {
        let data = generate(&GenerationParams::default()).unwrap();
        let mut counts: BTreeMap<&str, usize> = BTreeMap::new();
        for item in data.train_parts.iter().flatten() {
            *counts.entry(item.label.as_str()).or_default() += 1;
        }
        for label in ["Closing", "Opening", "Educating", "Working", NONE_LABEL] {
            assert!(
                counts.get(label).copied().unwrap_or(0) >= 40,
                "label {label} is underrepresented: {counts:?}"
            );
        }
    }

    #[test]
    fn faults_corrupt_readings_but_not_labels() {
        // A stuck noise sensor: emitted readings are flat, yet lecture
        // labels survive because labeling happened before the fault.
        let params = GenerationParams {
            faults: vec![FaultSpec {
                sensor: WORKING_NOISE.to_string(),
                mode: FaultMode::Fixed { value: 0.0 },
            }],
            ..GenerationParams::default()
        };
        let data = generate(&params).unwrap();
        let all: Vec<&LabeledImage> = data
            .train_parts
            .iter()
            .flatten()
            .chain(&data.test)
            .collect();
        assert!(all
            .iter()
            .all(|i| i.image.reading(WORKING_NOISE) == Some(0.0)));
        assert!(all.iter().any(|i| i.label == "Educating"));

        // Motion misses at rate 1 erase every motion reading.
        let params = GenerationParams {
            faults: vec![FaultSpec {
                sensor: WORKING_MOTION.to_string(),
                mode: FaultMode::MotionMiss { rate: 1.0 },
            }],
            ..GenerationParams::default()
        };
        let data = generate(&params).unwrap();
        let all: Vec<&LabeledImage> = data
            .train_parts
            .iter()
            .flatten()
            .chain(&data.test)
            .collect();
        assert!(all
            .iter()
            .all(|i| i.image.reading(WORKING_MOTION) == Some(0.0)));
        assert!(all.iter().any(|i| i.label == "Working"));

        // Uniform garbage takes more than two distinct values.
        let params = GenerationParams {
            faults: vec![FaultSpec {
                sensor: WORKING_LIGHT.to_string(),
                mode: FaultMode::Uniform,
            }],
            ..GenerationParams::default()
        };
        let data = generate(&params).unwrap();
        let mut values: Vec<f64> = data
            .train_parts
            .iter()
            .flatten()
            .filter_map(|i| i.image.reading(WORKING_LIGHT))
            .collect();
        values.sort_by(f64::total_cmp);
        values.dedup();
        assert!(values.len() > 100);
    }

    #[test]
    fn impossible_draws_are_reported() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let result = draw_feasible(&mut rng, 10, |rng| uniform(rng, 0.0, 1.0), |_| false);
        assert!(matches!(result, Err(Error::InfeasibleRuleSet)));
    }

    #[test]
    fn bad_parameters_are_rejected() {
        let env = company();
        let base = GenerationParams::default();

        let p = GenerationParams { parts: 1, ..base.clone() };
        assert!(matches!(p.validate(&env), Err(Error::Invalid { .. })));

        let p = GenerationParams {
            images_per_part_min: 50,
            images_per_part_max: 40,
            ..base.clone()
        };
        assert!(matches!(p.validate(&env), Err(Error::Invalid { .. })));

        let p = GenerationParams { error_rate: 1.5, ..base.clone() };
        assert!(matches!(p.validate(&env), Err(Error::Invalid { .. })));

        let p = GenerationParams {
            faults: vec![FaultSpec {
                sensor: "no-such-sensor".to_string(),
                mode: FaultMode::Uniform,
            }],
            ..base.clone()
        };
        assert!(matches!(p.validate(&env), Err(Error::UnknownSensor { .. })));

        let p = GenerationParams {
            faults: vec![FaultSpec {
                sensor: WORKING_TV.to_string(),
                mode: FaultMode::Fixed { value: 0.5 },
            }],
            ..base
        };
        assert!(matches!(p.validate(&env), Err(Error::OutOfRange { .. })));
    }

    #[test]
    fn csv_round_trips_parts_exactly() {
        let env = company();
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("part.csv");

        let data = generate(&GenerationParams::default()).unwrap();
        write_part_csv(&path, &data.test, &env).unwrap();
        let back = read_part_csv(&path, &env).unwrap();
        assert_eq!(back, data.test);

        // Absent readings survive as empty cells.
        let mut readings: Readings = data.test[0].image.readings.clone();
        readings.insert(WORKING_NOISE.to_string(), None);
        let part = vec![LabeledImage {
            image: SensorImage::new(7, readings),
            label: "Working".to_string(),
        }];
        write_part_csv(&path, &part, &env).unwrap();
        let back = read_part_csv(&path, &env).unwrap();
        assert_eq!(back, part);
        assert_eq!(back[0].image.reading(WORKING_NOISE), None);
    }

    #[test]
    fn csv_format_errors_name_the_line() {
        let env = company();
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("part.csv");

        // Wrong header.
        std::fs::write(&path, "a,b,c\n1,2,3\n").unwrap();
        assert!(matches!(
            read_part_csv(&path, &env),
            Err(Error::DatasetFormat { line: 1, .. })
        ));

        // Unparseable value on a specific line.
        let data = generate(&GenerationParams::default()).unwrap();
        write_part_csv(&path, &data.test[..2], &env).unwrap();
        let mut text = std::fs::read_to_string(&path).unwrap();
        text = text.replacen("0.", "x.", 1);
        std::fs::write(&path, text).unwrap();
        let err = read_part_csv(&path, &env).unwrap_err();
        assert!(
            matches!(err, Error::DatasetFormat { line, .. } if line >= 2),
            "{err:?}"
        );
    }
}
