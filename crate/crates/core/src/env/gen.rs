//! Instance generation with disjoint train/test pools.
//!
//! Test instances draw from held-out goal combinations (task family,
//! object kind, receptacle kind for the house; target landmark phrase for
//! the street), so the test pool exercises compositional generalization.

use rand::Rng;
use serde::{Deserialize, Serialize};

use super::house::{self, HouseGenKnobs, OBJECT_KINDS, TARGET_KINDS};
use super::street::{self, StreetGenKnobs};
use super::{
    reset, EnvError, EnvFamily, InstanceDescriptor, Layout, Split, TaskFamily, SCHEMA_VERSION,
};
use crate::seeding;

/// Share of goal combinations reserved for the test pool.
const HELD_OUT_SHARE: f64 = 1.0 / 3.0;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GenConfig {
    pub family: EnvFamily,
    pub count: usize,
    pub seed: u64,
    /// Test-pool size; defaults to `count / 3`.
    #[serde(default)]
    pub test_count: Option<usize>,
    #[serde(default)]
    pub max_steps: Option<u32>,
    #[serde(default)]
    pub house: HouseGenKnobs,
    #[serde(default)]
    pub street: StreetGenKnobs,
}

impl GenConfig {
    pub fn new(family: EnvFamily, count: usize, seed: u64) -> Self {
        GenConfig {
            family,
            count,
            seed,
            test_count: None,
            max_steps: None,
            house: HouseGenKnobs {
                xl: family == EnvFamily::HouseXl,
                ..HouseGenKnobs::default()
            },
            street: StreetGenKnobs::default(),
        }
    }
}

fn house_held_out(seed: u64, family: TaskFamily, object: &str, receptacle: &str) -> bool {
    let key = format!("{}|{}|{}", family.tag(), object, receptacle);
    seeding::unit(seed, "held-out-combo", &key) < HELD_OUT_SHARE
}

fn street_held_out(seed: u64, phrase: &str) -> bool {
    seeding::unit(seed, "held-out-landmark", phrase) < HELD_OUT_SHARE
}

fn gen_house<R: Rng>(
    rng: &mut R,
    cfg: &GenConfig,
    split: Split,
) -> Result<house::HouseLayout, EnvError> {
    let want_test = split == Split::Test;
    loop {
        let family = TaskFamily::HOUSE[rng.gen_range(0..TaskFamily::HOUSE.len())];
        let kinds: Vec<_> = OBJECT_KINDS
            .iter()
            .filter(|k| house::family_allows(family, k))
            .collect();
        let object = kinds[rng.gen_range(0..kinds.len())].name;
        let receptacle = TARGET_KINDS[rng.gen_range(0..TARGET_KINDS.len())];
        if house_held_out(cfg.seed, family, object, receptacle) != want_test {
            continue;
        }
        match house::generate(rng, family, object, receptacle, &cfg.house) {
            Ok(layout) => return Ok(layout),
            // Receptacle kinds that happen to be absent are retried with a
            // fresh combination.
            Err(EnvError::Unsatisfiable(_)) => continue,
            Err(e) => return Err(e),
        }
    }
}

/// Generate `cfg.count` solvable instances, train pool first.
pub fn gen_instances_with(cfg: &GenConfig) -> Result<Vec<InstanceDescriptor>, EnvError> {
    let test_count = cfg.test_count.unwrap_or(cfg.count / 3).min(cfg.count);
    let max_steps = cfg.max_steps.unwrap_or(cfg.family.default_max_steps());
    let mut out = Vec::with_capacity(cfg.count);
    for index in 0..cfg.count {
        let split = if index < cfg.count - test_count {
            Split::Train
        } else {
            Split::Test
        };
        let mut rng = seeding::rng(cfg.seed, "instance", index as u64);
        let layout = match cfg.family {
            EnvFamily::House | EnvFamily::HouseXl => {
                Layout::House(gen_house(&mut rng, cfg, split)?)
            }
            EnvFamily::Street => {
                let seed = cfg.seed;
                let accept = move |p: &str| street_held_out(seed, p) == (split == Split::Test);
                Layout::Street(street::generate(&mut rng, &cfg.street, &accept)?)
            }
        };
        let desc = InstanceDescriptor {
            schema_version: SCHEMA_VERSION,
            id: format!("{}-{}-{}", cfg.family.name(), cfg.seed, index),
            family: cfg.family,
            split,
            max_steps,
            layout,
        };
        // Solvability: the expert must reach the goal within the horizon.
        let (state, instruction, _) = reset(&desc, 0)?;
        let cost = super::remaining_cost(&state, &instruction)?;
        if cost == 0 || cost >= max_steps {
            return Err(EnvError::Unsatisfiable(format!(
                "instance {} needs {} steps with horizon {}",
                desc.id, cost, max_steps
            )));
        }
        out.push(desc);
    }
    Ok(out)
}

/// Generate `count` instances of `family` with default knobs.
pub fn gen_instances(
    family: EnvFamily,
    count: usize,
    seed: u64,
) -> Result<Vec<InstanceDescriptor>, EnvError> {
    gen_instances_with(&GenConfig::new(family, count, seed))
}

/// Key of the goal combination an instance exercises.
pub fn combo_key(desc: &InstanceDescriptor) -> String {
    match &desc.layout {
        Layout::House(l) => format!("{}|{}|{}", l.family.tag(), l.goal.object, l.goal.receptacle),
        Layout::Street(l) => l
            .landmarks
            .iter()
            .find(|m| m.node == l.target)
            .map(|m| m.phrase.clone())
            .unwrap_or_default(),
    }
}
