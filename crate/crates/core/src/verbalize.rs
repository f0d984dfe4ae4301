//! Language descriptions of observations.
//!
//! House observations render as result sentence, visible receptacle and
//! inventory. Street observations use an egocentric 8-sector scheme: each
//! landmark is placed in a 45 degree sector relative to the agent heading.

use std::collections::BTreeMap;
use std::fmt;
use std::io::BufRead;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::env::house::{room_listing_text, HouseScene};
use crate::env::street::StreetScene;
use crate::env::{join_list, Observation, Scene};

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct VerbalizedObservation {
    pub text: String,
    pub step: usize,
}

/// Egocentric sector, clockwise from straight ahead.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum SectorLabel {
    StraightAhead,
    SlightlyRight,
    Right,
    BehindSlightlyRight,
    Behind,
    BehindSlightlyLeft,
    Left,
    SlightlyLeft,
}

impl SectorLabel {
    /// Clockwise from straight ahead; index k covers relative bearings
    /// [45k - 22.5, 45k + 22.5).
    pub const ALL: [SectorLabel; 8] = [
        SectorLabel::StraightAhead,
        SectorLabel::SlightlyRight,
        SectorLabel::Right,
        SectorLabel::BehindSlightlyRight,
        SectorLabel::Behind,
        SectorLabel::BehindSlightlyLeft,
        SectorLabel::Left,
        SectorLabel::SlightlyLeft,
    ];

    /// Rendering order of scene descriptions: from behind, clockwise.
    pub const RENDER_ORDER: [SectorLabel; 8] = [
        SectorLabel::Behind,
        SectorLabel::BehindSlightlyLeft,
        SectorLabel::Left,
        SectorLabel::SlightlyLeft,
        SectorLabel::StraightAhead,
        SectorLabel::SlightlyRight,
        SectorLabel::Right,
        SectorLabel::BehindSlightlyRight,
    ];

    pub fn text(self) -> &'static str {
        match self {
            SectorLabel::StraightAhead => "straight ahead",
            SectorLabel::SlightlyRight => "slightly to your right",
            SectorLabel::Right => "to your right",
            SectorLabel::BehindSlightlyRight => "behind you, slightly to your right",
            SectorLabel::Behind => "behind you",
            SectorLabel::BehindSlightlyLeft => "behind you, slightly to your left",
            SectorLabel::Left => "to your left",
            SectorLabel::SlightlyLeft => "slightly to your left",
        }
    }

    pub fn index(self) -> usize {
        Self::ALL.iter().position(|&s| s == self).unwrap()
    }
}

impl fmt::Display for SectorLabel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.text())
    }
}

/// Sector of `bearing` seen from `heading` (both in degrees). Boundaries
/// belong to the clockwise-following sector.
pub fn sector_of(heading: f64, bearing: f64) -> SectorLabel {
    let rel = (bearing - heading).rem_euclid(360.0);
    let shifted = (rel + 22.5).rem_euclid(360.0);
    let idx = ((shifted / 45.0).floor() as usize).min(7);
    SectorLabel::ALL[idx]
}

fn capitalize(s: &str) -> String {
    let mut c = s.chars();
    match c.next() {
        Some(first) => first.to_uppercase().chain(c).collect(),
        None => String::new(),
    }
}

/// One line per non-empty sector, e.g. "Straight ahead, you see a white van".
pub fn render_egocentric(landmarks: &[(String, f64)], heading: f64) -> String {
    let mut by_sector: BTreeMap<SectorLabel, Vec<String>> = BTreeMap::new();
    for (phrase, b) in landmarks {
        by_sector
            .entry(sector_of(heading, *b))
            .or_default()
            .push(phrase.clone());
    }
    SectorLabel::RENDER_ORDER
        .iter()
        .filter_map(|s| {
            by_sector
                .get(s)
                .map(|items| format!("{}, you see {}.", capitalize(s.text()), join_list(items)))
        })
        .collect::<Vec<_>>()
        .join("\n")
}

pub fn verbalize_house_scene(result: &str, scene: &HouseScene) -> String {
    let mut parts = vec![result.to_string()];
    if !scene.room_listing.is_empty() {
        parts.push(format!(
            "Looking quickly around you, you see {}.",
            room_listing_text(&scene.room_listing)
        ));
    }
    if let Some(v) = &scene.view {
        let items = |c: &Vec<crate::env::house::ObjectView>| {
            join_list(&c.iter().map(|o| o.describe()).collect::<Vec<_>>())
        };
        let line = match (&v.contents, v.openable) {
            (None, _) => format!("The {} is closed.", v.name),
            (Some(c), true) => format!("The {} is open. In it, you see {}.", v.name, items(c)),
            (Some(c), false) => format!("On the {}, you see {}.", v.name, items(c)),
        };
        parts.push(line);
    }
    if let Some(o) = &scene.inventory {
        parts.push(format!("You are carrying: {}.", o.describe()));
    }
    parts.join(" ")
}

pub fn verbalize_street_scene(result: &str, scene: &StreetScene) -> String {
    let lms: Vec<(String, f64)> = scene
        .landmarks
        .iter()
        .map(|m| (format!("a {}", m.phrase), m.bearing))
        .collect();
    let mut parts = vec![result.to_string()];
    let ego = render_egocentric(&lms, scene.heading);
    if !ego.is_empty() {
        parts.push(ego.replace('\n', " "));
    }
    let dirs: Vec<&str> = scene.edges.iter().map(|e| e.label.as_str()).collect();
    parts.push(format!("Available directions: {}.", dirs.join(" | ")));
    parts.join(" ")
}

/// Render a house observation.
pub fn verbalize_house(obs: &Observation, step: usize) -> VerbalizedObservation {
    match &obs.scene {
        Scene::House(s) => VerbalizedObservation {
            text: verbalize_house_scene(&obs.result, s),
            step,
        },
        Scene::Street(_) => verbalize(obs, step),
    }
}

/// Render any observation with the template of its family.
pub fn verbalize(obs: &Observation, step: usize) -> VerbalizedObservation {
    let text = match &obs.scene {
        Scene::House(s) => verbalize_house_scene(&obs.result, s),
        Scene::Street(s) => verbalize_street_scene(&obs.result, s),
    };
    VerbalizedObservation { text, step }
}

// --- alignment tables ------------------------------------------------------

/// Similarity a candidate must strictly exceed to be retained.
pub const ALIGNMENT_THRESHOLD: f64 = 0.2;

#[derive(Debug, thiserror::Error)]
pub enum AlignmentError {
    #[error("reading alignments: {0}")]
    Io(#[from] std::io::Error),
    #[error("line {line}: malformed alignment row: {message}")]
    Malformed { line: usize, message: String },
    #[error("line {line}: similarity {value} outside [-1, 1]")]
    OutOfRange { line: usize, value: f64 },
}

#[derive(Debug, Deserialize)]
struct AlignmentRow {
    landmark_id: String,
    noun_phrase: String,
    similarity: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AlignmentEntry {
    pub noun_phrase: String,
    pub similarity: f64,
}

/// Best noun phrase per landmark id.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct AlignmentTable {
    pub entries: BTreeMap<String, AlignmentEntry>,
}

impl AlignmentTable {
    pub fn phrase(&self, landmark_id: &str) -> Option<&str> {
        self.entries
            .get(landmark_id)
            .map(|e| e.noun_phrase.as_str())
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }
}

pub fn ingest_alignments_from<R: BufRead>(reader: R) -> Result<AlignmentTable, AlignmentError> {
    let mut best: BTreeMap<String, AlignmentEntry> = BTreeMap::new();
    for (i, line) in reader.lines().enumerate() {
        let line = line?;
        let lineno = i + 1;
        if line.trim().is_empty() {
            continue;
        }
        let row: AlignmentRow =
            serde_json::from_str(&line).map_err(|e| AlignmentError::Malformed {
                line: lineno,
                message: e.to_string(),
            })?;
        if !(-1.0..=1.0).contains(&row.similarity) {
            return Err(AlignmentError::OutOfRange {
                line: lineno,
                value: row.similarity,
            });
        }
        let cand = AlignmentEntry {
            noun_phrase: row.noun_phrase,
            similarity: row.similarity,
        };
        match best.get(&row.landmark_id) {
            Some(cur)
                if cur.similarity > cand.similarity
                    || (cur.similarity == cand.similarity
                        && cur.noun_phrase <= cand.noun_phrase) => {}
            _ => {
                best.insert(row.landmark_id, cand);
            }
        }
    }
    best.retain(|_, e| e.similarity > ALIGNMENT_THRESHOLD);
    Ok(AlignmentTable { entries: best })
}

pub fn ingest_alignments(path: &Path) -> Result<AlignmentTable, AlignmentError> {
    let f = std::fs::File::open(path)?;
    ingest_alignments_from(std::io::BufReader::new(f))
}

/// Replace street landmark phrases by their aligned noun phrases; landmarks
/// without a retained alignment are not described.
pub fn apply_alignments(scene: &StreetScene, table: &AlignmentTable) -> StreetScene {
    let mut out = scene.clone();
    out.landmarks = scene
        .landmarks
        .iter()
        .filter_map(|m| {
            table
                .phrase(&m.id)
                .map(|p| crate::env::street::LandmarkSighting {
                    id: m.id.clone(),
                    phrase: p.to_string(),
                    bearing: m.bearing,
                })
        })
        .collect();
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn sector_examples() {
        assert_eq!(sector_of(0.0, 10.0), SectorLabel::StraightAhead);
        assert_eq!(sector_of(0.0, 45.0), SectorLabel::SlightlyRight);
        assert_eq!(sector_of(90.0, 270.0), SectorLabel::Behind);
        assert_eq!(sector_of(0.0, 337.5), SectorLabel::StraightAhead);
        assert_eq!(sector_of(0.0, 22.5), SectorLabel::SlightlyRight);
        assert_eq!(sector_of(0.0, 90.0), SectorLabel::Right);
        assert_eq!(sector_of(0.0, 270.0), SectorLabel::Left);
        assert_eq!(sector_of(-10.0, 350.0), SectorLabel::StraightAhead);
    }

    #[test]
    fn egocentric_rendering() {
        let text = render_egocentric(&[("a white van".into(), 5.0)], 0.0);
        assert!(text.contains("Straight ahead, you see a white van"));
        assert_eq!(render_egocentric(&[], 123.0), "");
    }

    #[test]
    fn alignment_examples() {
        let rows = r#"{"landmark_id":"L1","noun_phrase":"scaffolding","similarity":0.31}
{"landmark_id":"L1","noun_phrase":"a van","similarity":0.28}
{"landmark_id":"L2","noun_phrase":"a tree","similarity":0.15}
"#;
        let t = ingest_alignments_from(rows.as_bytes()).unwrap();
        assert_eq!(t.phrase("L1"), Some("scaffolding"));
        assert_eq!(t.phrase("L2"), None);
        let bad = r#"{"landmark_id":"L1","noun_phrase":"x","similarity":1.7}"#;
        assert!(matches!(
            ingest_alignments_from(bad.as_bytes()),
            Err(AlignmentError::OutOfRange { line: 1, .. })
        ));
        let broken = "{\"landmark_id\":\"L1\"}\nnot json";
        assert!(matches!(
            ingest_alignments_from(broken.as_bytes()),
            Err(AlignmentError::Malformed { line: 1, .. })
        ));
    }
}
