//! Helpers shared by the integration tests.
#![allow(dead_code)]

pub mod exact;

use std::collections::{HashSet, VecDeque};

use lfm_core::env::house::{self, Attr, HouseGoal, HouseLayout, ObjectSpec, ReceptacleSpec};
use lfm_core::env::{
    plausible_actions, EnvFamily, EnvState, InstanceDescriptor, Layout, Split, TaskFamily,
    SCHEMA_VERSION,
};
use lfm_core::policy::{rollout_steps, RandomPolicy, Trajectory};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

/// Breadth-first search over the full state graph, independent of the
/// closed-form planner.
pub fn bfs_cost(start: &EnvState, limit: u32) -> Option<u32> {
    if start.goal_satisfied() {
        return Some(0);
    }
    let mut seen = HashSet::new();
    seen.insert(start.planning_key());
    let mut frontier = VecDeque::from([(start.clone(), 0u32)]);
    while let Some((s, d)) = frontier.pop_front() {
        if d >= limit {
            continue;
        }
        for a in plausible_actions(&s) {
            let next = match &s {
                EnvState::House(h) => EnvState::House(house::step(h, &a).unwrap().0),
                EnvState::Street(_) => unreachable!(),
            };
            if next.goal_satisfied() {
                return Some(d + 1);
            }
            if seen.insert(next.planning_key()) {
                frontier.push_back((next, d + 1));
            }
        }
    }
    None
}

pub fn small_layout(rng: &mut ChaCha8Rng) -> HouseLayout {
    let pool = [
        "cabinet",
        "countertop",
        "drawer",
        "fridge",
        "microwave",
        "sidetable",
        "sinkbasin",
    ];
    let mut recs: Vec<ReceptacleSpec> = Vec::new();
    for kind in pool {
        let n = match kind {
            "fridge" | "microwave" | "sinkbasin" => 1,
            _ => rng.gen_range(0..=1),
        };
        for i in 1..=n {
            recs.push(ReceptacleSpec {
                kind: kind.into(),
                number: i,
            });
        }
    }
    let family = TaskFamily::HOUSE[rng.gen_range(0..5)];
    let (attr, count) = match family {
        TaskFamily::PutClean => (Attr::Clean, 1),
        TaskFamily::HeatPut => (Attr::Hot, 1),
        TaskFamily::CoolPut => (Attr::Cold, 1),
        TaskFamily::PutTwo => (Attr::None, 2),
        _ => (Attr::None, 1),
    };
    let targets: Vec<&ReceptacleSpec> = recs
        .iter()
        .filter(|r| house::TARGET_KINDS.contains(&r.kind.as_str()))
        .collect();
    let target = if targets.is_empty() {
        recs.push(ReceptacleSpec {
            kind: "sidetable".into(),
            number: 1,
        });
        "sidetable".to_string()
    } else {
        targets[rng.gen_range(0..targets.len())].kind.clone()
    };
    let goal_obj = "apple";
    let mut objects = Vec::new();
    let n_goal = rng.gen_range(count..=count + 1);
    for i in 1..=n_goal {
        objects.push(ObjectSpec {
            kind: goal_obj.into(),
            number: i as u32,
            receptacle: rng.gen_range(0..recs.len()),
        });
    }
    for i in 1..=rng.gen_range(0..=2) {
        objects.push(ObjectSpec {
            kind: "mug".into(),
            number: i,
            receptacle: rng.gen_range(0..recs.len()),
        });
    }
    HouseLayout {
        receptacles: recs,
        objects,
        family,
        goal: HouseGoal {
            object: goal_obj.into(),
            receptacle: target,
            attr,
            count: count as u32,
        },
        template: 0,
        xl_verbs: vec![],
    }
}

pub fn desc_of(layout: HouseLayout) -> InstanceDescriptor {
    InstanceDescriptor {
        schema_version: SCHEMA_VERSION,
        id: "probe".into(),
        family: EnvFamily::House,
        split: Split::Train,
        max_steps: 200,
        layout: Layout::House(layout),
    }
}

pub fn layout_with(
    recs: &[(&str, u32)],
    objects: &[(&str, u32, usize)],
    family: TaskFamily,
    goal: HouseGoal,
) -> HouseLayout {
    HouseLayout {
        receptacles: recs
            .iter()
            .map(|&(k, n)| ReceptacleSpec {
                kind: k.into(),
                number: n,
            })
            .collect(),
        objects: objects
            .iter()
            .map(|&(k, n, r)| ObjectSpec {
                kind: k.into(),
                number: n,
                receptacle: r,
            })
            .collect(),
        family,
        goal,
        template: 0,
        xl_verbs: vec![],
    }
}

/// Random-policy rollouts of at least 20 steps on small layouts.
pub fn random_trajectories(n: usize, seed: u64) -> Vec<Trajectory> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut out = Vec::new();
    while out.len() < n {
        let desc = desc_of(small_layout(&mut rng));
        let t = rollout_steps(
            &RandomPolicy,
            &desc,
            rng.gen(),
            &format!("r{}", out.len()),
            Some(40),
        )
        .unwrap();
        if t.len() >= 20 {
            out.push(t);
        }
    }
    out
}
