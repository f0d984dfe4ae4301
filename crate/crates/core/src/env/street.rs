//! Egocentric street navigation on a jittered grid graph.
//!
//! The agent stands at an intersection facing its direction of travel and
//! picks one of the outgoing streets by its egocentric label. Landmarks near
//! the current and adjacent intersections are visible with their bearings.

use std::collections::VecDeque;
use std::sync::Arc;

use rand::Rng;
use serde::{Deserialize, Serialize};

use super::{Action, EnvError, Goal, Instruction, Observation, Scene, TaskFamily};
use crate::verbalize::{sector_of, SectorLabel};

pub const LANDMARK_PHRASES: &[&str] = &[
    "bakery",
    "bank",
    "billboard",
    "blue mailbox",
    "bookstore",
    "brick church",
    "bus stop",
    "clock tower",
    "coffee shop",
    "construction fence",
    "crosswalk sign",
    "delivery truck",
    "flower shop",
    "food truck",
    "fountain",
    "gas station",
    "green awning",
    "hardware store",
    "hotel entrance",
    "laundromat",
    "movie theater",
    "mural",
    "newsstand",
    "park bench",
    "parked bicycle",
    "parking garage",
    "pharmacy",
    "phone booth",
    "pizza place",
    "playground",
    "red fire hydrant",
    "scaffolding",
    "statue",
    "stone archway",
    "street lamp",
    "subway entrance",
    "traffic cone",
    "trash bin",
    "white van",
    "yellow taxi",
];

/// Compass bearing from `a` to `b` in degrees: 0 is +y, 90 is +x.
pub fn bearing(a: [f64; 2], b: [f64; 2]) -> f64 {
    let deg = (b[0] - a[0]).atan2(b[1] - a[1]).to_degrees();
    deg.rem_euclid(360.0)
}

fn angle_gap(a: f64, b: f64) -> f64 {
    let d = (a - b).rem_euclid(360.0);
    d.min(360.0 - d)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StreetLandmark {
    pub id: String,
    pub phrase: String,
    /// Intersection the landmark stands next to.
    pub node: usize,
    pub pos: [f64; 2],
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StreetLayout {
    pub nodes: Vec<[f64; 2]>,
    /// Sorted adjacency lists; the graph is undirected.
    pub edges: Vec<Vec<usize>>,
    pub landmarks: Vec<StreetLandmark>,
    pub start: usize,
    pub start_heading: f64,
    pub target: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StreetGoal {
    pub target_node: usize,
    pub target_landmark: String,
    pub route_landmarks: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StreetStatic {
    pub layout: StreetLayout,
    pub dist_to_target: Vec<Option<u32>>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StreetState {
    pub statics: Arc<StreetStatic>,
    pub node: usize,
    pub heading: f64,
    pub steps: u32,
    pub max_steps: u32,
    pub rng_seed: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LandmarkSighting {
    pub id: String,
    pub phrase: String,
    pub bearing: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EdgeView {
    pub bearing: f64,
    pub label: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StreetScene {
    pub heading: f64,
    pub landmarks: Vec<LandmarkSighting>,
    /// Outgoing streets, ordered by label.
    pub edges: Vec<EdgeView>,
}

fn bfs(edges: &[Vec<usize>], from: usize) -> Vec<Option<u32>> {
    let mut dist = vec![None; edges.len()];
    dist[from] = Some(0);
    let mut queue = VecDeque::from([from]);
    while let Some(u) = queue.pop_front() {
        let d = dist[u].unwrap();
        for &v in &edges[u] {
            if dist[v].is_none() {
                dist[v] = Some(d + 1);
                queue.push_back(v);
            }
        }
    }
    dist
}

impl StreetState {
    pub fn goal_satisfied(&self) -> bool {
        self.node == self.statics.layout.target
    }

    pub fn planning_key(&self) -> String {
        format!("{}|{:016x}", self.node, self.heading.to_bits())
    }

    /// Outgoing moves as (label, neighbour), ordered by label.
    pub fn moves(&self) -> Vec<(String, usize)> {
        let l = &self.statics.layout;
        let here = l.nodes[self.node];
        let mut out: Vec<(String, usize)> = l.edges[self.node]
            .iter()
            .map(|&v| {
                let label = sector_of(self.heading, bearing(here, l.nodes[v]));
                (label.text().to_string(), v)
            })
            .collect();
        out.sort();
        out
    }

    fn observe(&self, result: String) -> Observation {
        let l = &self.statics.layout;
        let here = l.nodes[self.node];
        let near = |n: usize| n == self.node || l.edges[self.node].contains(&n);
        let landmarks = l
            .landmarks
            .iter()
            .filter(|m| near(m.node))
            .map(|m| LandmarkSighting {
                id: m.id.clone(),
                phrase: m.phrase.clone(),
                bearing: bearing(here, m.pos),
            })
            .collect();
        let edges = self
            .moves()
            .into_iter()
            .map(|(label, v)| EdgeView {
                bearing: bearing(here, l.nodes[v]),
                label,
            })
            .collect();
        let success = self.goal_satisfied();
        Observation {
            result,
            scene: Scene::Street(StreetScene {
                heading: self.heading,
                landmarks,
                edges,
            }),
            done: success || self.steps >= self.max_steps,
            success,
        }
    }
}

pub fn plausible_actions(st: &StreetState) -> Vec<Action> {
    st.moves().into_iter().map(|(l, _)| Action(l)).collect()
}

pub fn step(st: &StreetState, action: &Action) -> Result<(StreetState, Observation), EnvError> {
    let (label, v) = st
        .moves()
        .into_iter()
        .find(|(l, _)| l == action.as_str())
        .ok_or_else(|| EnvError::InvalidAction {
            action: action.0.clone(),
        })?;
    let l = &st.statics.layout;
    let mut next = st.clone();
    next.heading = bearing(l.nodes[st.node], l.nodes[v]);
    next.node = v;
    next.steps += 1;
    let obs = next.observe(format!("You head {label}."));
    Ok((next, obs))
}

pub fn remaining_cost(st: &StreetState) -> Option<u32> {
    st.statics.dist_to_target[st.node]
}

/// Lexicographically first label among the moves on a shortest path.
pub fn expert_next_action(st: &StreetState) -> Option<Action> {
    let here = remaining_cost(st)?;
    if here == 0 {
        return None;
    }
    st.moves()
        .into_iter()
        .find(|(_, v)| st.statics.dist_to_target[*v] == Some(here - 1))
        .map(|(l, _)| Action(l))
}

fn landmark_at(layout: &StreetLayout, node: usize) -> Option<&StreetLandmark> {
    layout.landmarks.iter().find(|m| m.node == node)
}

/// Render route instructions by walking the expert path from the start.
fn route(layout: &StreetLayout, statics: &Arc<StreetStatic>) -> (String, StreetGoal) {
    let mut st = StreetState {
        statics: statics.clone(),
        node: layout.start,
        heading: layout.start_heading,
        steps: 0,
        max_steps: u32::MAX,
        rng_seed: 0,
    };
    let mut clauses = Vec::new();
    let mut route_landmarks = Vec::new();
    while let Some(a) = expert_next_action(&st) {
        let (next, _) = step(&st, &a).expect("expert moves are plausible");
        let mut clause = format!("Head {}", a.as_str());
        if next.node != layout.target {
            if let Some(m) = landmark_at(layout, next.node) {
                clause.push_str(&format!(" to the {}", m.phrase));
                route_landmarks.push(m.phrase.clone());
            }
        }
        clause.push('.');
        clauses.push(clause);
        st = next;
    }
    let target_landmark = landmark_at(layout, layout.target)
        .map(|m| m.phrase.clone())
        .unwrap_or_default();
    clauses.push(format!("Stop at the {target_landmark}."));
    (
        clauses.join(" "),
        StreetGoal {
            target_node: layout.target,
            target_landmark,
            route_landmarks,
        },
    )
}

fn build_static(layout: &StreetLayout) -> Arc<StreetStatic> {
    Arc::new(StreetStatic {
        layout: layout.clone(),
        dist_to_target: bfs(&layout.edges, layout.target),
    })
}

pub fn reset(
    layout: &StreetLayout,
    max_steps: u32,
    seed: u64,
) -> Result<(StreetState, Instruction, Observation), EnvError> {
    let statics = build_static(layout);
    let (text, goal) = route(layout, &statics);
    let st = StreetState {
        statics,
        node: layout.start,
        heading: layout.start_heading,
        steps: 0,
        max_steps,
        rng_seed: seed,
    };
    let obs = st.observe("You are standing at an intersection.".to_string());
    let instruction = Instruction {
        text,
        family: TaskFamily::Navigate,
        goal: Goal::Street(goal),
    };
    Ok((st, instruction, obs))
}

/// Brute-force structural checks on a layout.
pub fn validate_layout(layout: &StreetLayout) -> Result<(), EnvError> {
    let bad = |m: &str| Err(EnvError::Unsatisfiable(m.to_string()));
    let n = layout.nodes.len();
    if layout.start >= n || layout.target >= n || layout.start == layout.target {
        return bad("start/target out of range");
    }
    if !(0.0..360.0).contains(&layout.start_heading) {
        return bad("start heading outside [0, 360)");
    }
    for (u, adj) in layout.edges.iter().enumerate() {
        for &v in adj {
            if v >= n || v == u || !layout.edges[v].contains(&u) {
                return bad("edge list is not a simple undirected graph");
            }
        }
        for (i, &a) in adj.iter().enumerate() {
            for &b in &adj[i + 1..] {
                let ga = bearing(layout.nodes[u], layout.nodes[a]);
                let gb = bearing(layout.nodes[u], layout.nodes[b]);
                if angle_gap(ga, gb) < 45.0 {
                    return bad("outgoing streets closer than 45 degrees");
                }
            }
        }
    }
    if landmark_at(layout, layout.target).is_none() {
        return bad("target has no landmark");
    }
    if bfs(&layout.edges, layout.target)[layout.start].is_none() {
        return bad("target unreachable");
    }
    Ok(())
}

/// Knobs for street layout generation.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StreetGenKnobs {
    pub min_side: usize,
    pub max_side: usize,
    pub drop_fraction: f64,
    pub landmark_prob: f64,
    pub min_route: u32,
    pub max_route: u32,
}

impl Default for StreetGenKnobs {
    fn default() -> Self {
        StreetGenKnobs {
            min_side: 5,
            max_side: 6,
            drop_fraction: 0.2,
            landmark_prob: 0.5,
            min_route: 4,
            max_route: 8,
        }
    }
}

fn connected(edges: &[Vec<usize>]) -> bool {
    bfs(edges, 0).iter().all(|d| d.is_some())
}

fn separated(nodes: &[[f64; 2]], edges: &[Vec<usize>], u: usize, v: usize) -> bool {
    let b = bearing(nodes[u], nodes[v]);
    edges[u]
        .iter()
        .all(|&w| angle_gap(b, bearing(nodes[u], nodes[w])) >= 50.0)
}

/// Generate a layout whose target landmark phrase satisfies `accept`.
pub fn generate<R: Rng>(
    rng: &mut R,
    knobs: &StreetGenKnobs,
    accept: &dyn Fn(&str) -> bool,
) -> Result<StreetLayout, EnvError> {
    for _ in 0..200 {
        let w = rng.gen_range(knobs.min_side..=knobs.max_side);
        let h = rng.gen_range(knobs.min_side..=knobs.max_side);
        let id = |x: usize, y: usize| y * w + x;
        let nodes: Vec<[f64; 2]> = (0..w * h)
            .map(|i| {
                let (x, y) = (i % w, i / w);
                [
                    x as f64 + rng.gen_range(-0.12..0.12),
                    y as f64 + rng.gen_range(-0.12..0.12),
                ]
            })
            .collect();
        let mut edges = vec![Vec::new(); w * h];
        for y in 0..h {
            for x in 0..w {
                if x + 1 < w {
                    edges[id(x, y)].push(id(x + 1, y));
                    edges[id(x + 1, y)].push(id(x, y));
                }
                if y + 1 < h {
                    edges[id(x, y)].push(id(x, y + 1));
                    edges[id(x, y + 1)].push(id(x, y));
                }
            }
        }
        // Drop some streets while keeping the grid connected.
        let mut all: Vec<(usize, usize)> = (0..w * h)
            .flat_map(|u| {
                edges[u]
                    .iter()
                    .filter(move |&&v| v > u)
                    .map(move |&v| (u, v))
            })
            .collect();
        all.sort();
        let drops = (all.len() as f64 * knobs.drop_fraction) as usize;
        for _ in 0..drops {
            let (u, v) = all[rng.gen_range(0..all.len())];
            if !edges[u].contains(&v) {
                continue;
            }
            edges[u].retain(|&x| x != v);
            edges[v].retain(|&x| x != u);
            if !connected(&edges) {
                edges[u].push(v);
                edges[v].push(u);
            }
        }
        // A few diagonal avenues where the angles allow.
        for _ in 0..(w * h / 6) {
            let (x, y) = (rng.gen_range(0..w - 1), rng.gen_range(0..h - 1));
            let (u, v) = if rng.gen_bool(0.5) {
                (id(x, y), id(x + 1, y + 1))
            } else {
                (id(x + 1, y), id(x, y + 1))
            };
            if !edges[u].contains(&v)
                && separated(&nodes, &edges, u, v)
                && separated(&nodes, &edges, v, u)
            {
                edges[u].push(v);
                edges[v].push(u);
            }
        }
        for adj in edges.iter_mut() {
            adj.sort_unstable();
        }
        let mut landmarks = Vec::new();
        for (n, p) in nodes.iter().enumerate() {
            if rng.gen_bool(knobs.landmark_prob) {
                let ang: f64 = rng.gen_range(0.0..std::f64::consts::TAU);
                landmarks.push(StreetLandmark {
                    id: format!("L{}", landmarks.len() + 1),
                    phrase: LANDMARK_PHRASES[rng.gen_range(0..LANDMARK_PHRASES.len())].to_string(),
                    node: n,
                    pos: [p[0] + 0.3 * ang.sin(), p[1] + 0.3 * ang.cos()],
                });
            }
        }
        let start = rng.gen_range(0..w * h);
        let dist = bfs(&edges, start);
        let targets: Vec<usize> = (0..w * h)
            .filter(|&t| {
                let d = dist[t].unwrap_or(0);
                d >= knobs.min_route
                    && d <= knobs.max_route
                    && landmark_at_raw(&landmarks, t).is_some_and(|m| accept(&m.phrase))
            })
            .collect();
        if targets.is_empty() {
            continue;
        }
        let target = targets[rng.gen_range(0..targets.len())];
        let start_heading = match edges[start].first() {
            Some(&v) => bearing(nodes[start], nodes[v]),
            None => continue,
        };
        let layout = StreetLayout {
            nodes,
            edges,
            landmarks,
            start,
            start_heading,
            target,
        };
        if validate_layout(&layout).is_ok() {
            return Ok(layout);
        }
    }
    Err(EnvError::Unsatisfiable(
        "no street layout with an acceptable target".into(),
    ))
}

fn landmark_at_raw(landmarks: &[StreetLandmark], node: usize) -> Option<&StreetLandmark> {
    landmarks.iter().find(|m| m.node == node)
}

/// Labels of every sector, used for enumerating street actions in tests.
pub fn all_labels() -> Vec<&'static str> {
    SectorLabel::ALL.iter().map(|s| s.text()).collect()
}
