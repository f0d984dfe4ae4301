//! Household object-manipulation world.
//!
//! The agent moves between receptacles, opens and closes containers, picks
//! up one object at a time and can clean, heat or cool what it holds at the
//! matching appliance. Goals ask for an object kind (optionally treated) to
//! end up in a receptacle kind.

use std::sync::Arc;

use rand::seq::SliceRandom;
use rand::Rng;
use serde::{Deserialize, Serialize};

use super::{join_list, Action, EnvError, Goal, Instruction, Observation, Scene, TaskFamily};

/// Per-kind object facts: which treatments make sense for instructions and
/// where such objects are usually found.
pub struct ObjectKind {
    pub name: &'static str,
    pub sliceable: bool,
    pub cleanable: bool,
    pub heatable: bool,
    pub coolable: bool,
    pub homes: &'static [&'static str],
}

macro_rules! kind {
    ($n:expr, $s:expr, $c:expr, $h:expr, $k:expr, [$($home:expr),*]) => {
        ObjectKind { name: $n, sliceable: $s, cleanable: $c, heatable: $h, coolable: $k, homes: &[$($home),*] }
    };
}

pub const OBJECT_KINDS: &[ObjectKind] = &[
    kind!(
        "apple",
        true,
        true,
        true,
        true,
        ["countertop", "diningtable", "fridge"]
    ),
    kind!(
        "egg",
        false,
        false,
        true,
        true,
        ["fridge", "countertop", "diningtable"]
    ),
    kind!(
        "potato",
        true,
        true,
        true,
        true,
        ["fridge", "countertop", "garbagecan"]
    ),
    kind!(
        "lettuce",
        true,
        true,
        false,
        true,
        ["fridge", "countertop", "diningtable"]
    ),
    kind!(
        "tomato",
        true,
        true,
        true,
        true,
        ["fridge", "countertop", "diningtable"]
    ),
    kind!(
        "bread",
        true,
        false,
        true,
        true,
        ["countertop", "diningtable", "cabinet"]
    ),
    kind!(
        "mug",
        false,
        true,
        true,
        true,
        ["cabinet", "countertop", "coffeemachine", "shelf"]
    ),
    kind!(
        "cup",
        false,
        true,
        true,
        true,
        ["cabinet", "countertop", "shelf"]
    ),
    kind!(
        "plate",
        false,
        true,
        true,
        true,
        ["cabinet", "countertop", "diningtable"]
    ),
    kind!(
        "bowl",
        false,
        true,
        true,
        true,
        ["cabinet", "shelf", "diningtable"]
    ),
    kind!(
        "spatula",
        false,
        true,
        false,
        false,
        ["drawer", "countertop"]
    ),
    kind!(
        "spoon",
        false,
        true,
        false,
        false,
        ["drawer", "countertop", "diningtable"]
    ),
    kind!("fork", false, true, false, false, ["drawer", "diningtable"]),
    kind!("knife", false, true, false, false, ["drawer", "countertop"]),
    kind!(
        "soapbar",
        false,
        true,
        false,
        false,
        ["sinkbasin", "countertop", "cabinet"]
    ),
    kind!(
        "sponge",
        false,
        true,
        false,
        false,
        ["sinkbasin", "countertop"]
    ),
    kind!(
        "cloth",
        false,
        true,
        false,
        false,
        ["cabinet", "drawer", "countertop"]
    ),
    kind!(
        "candle",
        false,
        false,
        false,
        false,
        ["drawer", "cabinet", "shelf", "sidetable"]
    ),
    kind!(
        "book",
        false,
        false,
        false,
        false,
        ["sidetable", "shelf", "dresser", "coffeetable"]
    ),
    kind!(
        "keychain",
        false,
        false,
        false,
        false,
        ["drawer", "sidetable", "dresser"]
    ),
    kind!(
        "pen",
        false,
        false,
        false,
        false,
        ["drawer", "sidetable", "shelf"]
    ),
    kind!(
        "creditcard",
        false,
        false,
        false,
        false,
        ["drawer", "sidetable", "dresser"]
    ),
    kind!(
        "vase",
        false,
        false,
        false,
        false,
        ["shelf", "sidetable", "coffeetable"]
    ),
    kind!(
        "winebottle",
        false,
        false,
        false,
        true,
        ["fridge", "cabinet", "countertop"]
    ),
];

pub fn object_kind(name: &str) -> Option<&'static ObjectKind> {
    OBJECT_KINDS.iter().find(|k| k.name == name)
}

/// Receptacle kinds that can hold a goal object.
pub const TARGET_KINDS: &[&str] = &[
    "cabinet",
    "coffeetable",
    "countertop",
    "diningtable",
    "drawer",
    "dresser",
    "garbagecan",
    "shelf",
    "sidetable",
];

pub const OPENABLE_KINDS: &[&str] = &["cabinet", "drawer", "fridge", "microwave"];

/// Unproductive parameterised verbs that inflate the `house-xl` action space.
pub const XL_VERBS: &[&str] = &[
    "admire",
    "dust",
    "inspect",
    "knock on",
    "lean on",
    "listen to",
    "look behind",
    "look under",
    "point at",
    "polish",
    "smell",
    "sniff around",
    "tap",
    "touch",
    "wave at",
    "wipe",
];

pub fn is_openable(kind: &str) -> bool {
    OPENABLE_KINDS.contains(&kind)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Attr {
    None,
    Clean,
    Hot,
    Cold,
}

impl Attr {
    pub fn station(self) -> Option<&'static str> {
        match self {
            Attr::None => None,
            Attr::Clean => Some("sinkbasin"),
            Attr::Hot => Some("microwave"),
            Attr::Cold => Some("fridge"),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HouseGoal {
    pub object: String,
    pub receptacle: String,
    pub attr: Attr,
    pub count: u32,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ReceptacleSpec {
    pub kind: String,
    pub number: u32,
}

impl ReceptacleSpec {
    pub fn name(&self) -> String {
        format!("{} {}", self.kind, self.number)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ObjectSpec {
    pub kind: String,
    pub number: u32,
    /// Index into the layout's receptacle list.
    pub receptacle: usize,
}

impl ObjectSpec {
    pub fn name(&self) -> String {
        format!("{} {}", self.kind, self.number)
    }
}

/// Static description of a house instance.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HouseLayout {
    pub receptacles: Vec<ReceptacleSpec>,
    pub objects: Vec<ObjectSpec>,
    pub family: TaskFamily,
    pub goal: HouseGoal,
    /// Which phrasing of the family's instruction template to render.
    pub template: u32,
    /// Extra no-op verbs applied to every receptacle (empty for house-v0).
    #[serde(default)]
    pub xl_verbs: Vec<String>,
}

/// Episode constants shared by every state of one episode.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HouseStatic {
    pub receptacles: Vec<ReceptacleSpec>,
    pub receptacle_names: Vec<String>,
    pub openable: Vec<bool>,
    /// Cosmetic location numbers shown on arrival; shuffled by the reset seed.
    pub loc_ids: Vec<u32>,
    pub object_kinds: Vec<String>,
    pub object_names: Vec<String>,
    pub goal: HouseGoal,
    pub xl_verbs: Vec<String>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ObjLoc {
    In(usize),
    Held,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct ObjState {
    pub loc: ObjLoc,
    pub clean: bool,
    pub hot: bool,
    pub cold: bool,
    pub sliced: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HouseState {
    pub statics: Arc<HouseStatic>,
    /// Receptacle index the agent stands at; `None` is the middle of the room.
    pub agent: Option<usize>,
    pub open: Vec<bool>,
    pub objects: Vec<ObjState>,
    pub steps: u32,
    pub max_steps: u32,
    pub rng_seed: u64,
}

/// What the agent perceives in the house.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HouseScene {
    pub location: Option<String>,
    pub loc_id: Option<u32>,
    pub view: Option<ReceptacleView>,
    pub inventory: Option<ObjectView>,
    /// Receptacles listed when standing in the middle of the room.
    #[serde(default)]
    pub room_listing: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReceptacleView {
    pub name: String,
    pub openable: bool,
    pub open: bool,
    /// Contents, only when they are visible (open or non-openable).
    pub contents: Option<Vec<ObjectView>>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ObjectView {
    pub name: String,
    pub attributes: Vec<String>,
}

impl ObjectView {
    /// "a sliced clean apple 1"
    pub fn describe(&self) -> String {
        if self.attributes.is_empty() {
            format!("a {}", self.name)
        } else {
            format!("a {} {}", self.attributes.join(" "), self.name)
        }
    }
}

impl HouseState {
    pub fn holding(&self) -> Option<usize> {
        self.objects.iter().position(|o| o.loc == ObjLoc::Held)
    }

    fn accessible(&self, r: usize) -> bool {
        !self.statics.openable[r] || self.open[r]
    }

    fn attr_ok(&self, o: usize, attr: Attr) -> bool {
        let s = &self.objects[o];
        match attr {
            Attr::None => true,
            Attr::Clean => s.clean,
            Attr::Hot => s.hot,
            Attr::Cold => s.cold,
        }
    }

    fn satisfies(&self, o: usize) -> bool {
        let g = &self.statics.goal;
        self.statics.object_kinds[o] == g.object
            && match self.objects[o].loc {
                ObjLoc::In(r) => self.statics.receptacles[r].kind == g.receptacle,
                ObjLoc::Held => false,
            }
            && self.attr_ok(o, g.attr)
    }

    pub fn goal_satisfied(&self) -> bool {
        let have = (0..self.objects.len())
            .filter(|&o| self.satisfies(o))
            .count();
        have as u32 >= self.statics.goal.count
    }

    pub fn planning_key(&self) -> String {
        format!("{:?}|{:?}|{:?}", self.agent, self.open, self.objects)
    }

    fn object_view(&self, o: usize) -> ObjectView {
        let s = &self.objects[o];
        let mut attributes = Vec::new();
        if s.sliced {
            attributes.push("sliced".to_string());
        }
        if s.clean {
            attributes.push("clean".to_string());
        }
        if s.hot {
            attributes.push("hot".to_string());
        }
        if s.cold {
            attributes.push("cold".to_string());
        }
        ObjectView {
            name: self.statics.object_names[o].clone(),
            attributes,
        }
    }

    fn contents(&self, r: usize) -> Vec<usize> {
        (0..self.objects.len())
            .filter(|&o| self.objects[o].loc == ObjLoc::In(r))
            .collect()
    }

    fn receptacle_view(&self, r: usize) -> ReceptacleView {
        let visible = self.accessible(r);
        ReceptacleView {
            name: self.statics.receptacle_names[r].clone(),
            openable: self.statics.openable[r],
            open: self.open[r],
            contents: visible.then(|| {
                self.contents(r)
                    .into_iter()
                    .map(|o| self.object_view(o))
                    .collect()
            }),
        }
    }

    fn observe(&self, result: String) -> Observation {
        let scene = HouseScene {
            location: self.agent.map(|r| self.statics.receptacle_names[r].clone()),
            loc_id: self.agent.map(|r| self.statics.loc_ids[r]),
            view: self.agent.map(|r| self.receptacle_view(r)),
            inventory: self.holding().map(|o| self.object_view(o)),
            room_listing: if self.agent.is_none() {
                self.statics.receptacle_names.clone()
            } else {
                Vec::new()
            },
        };
        let success = self.goal_satisfied();
        Observation {
            result,
            scene: Scene::House(scene),
            done: success || self.steps >= self.max_steps,
            success,
        }
    }
}

/// Structured form of a house action.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Cmd {
    GoTo(usize),
    Open(usize),
    Close(usize),
    Take(usize, usize),
    Put(usize, usize),
    Clean(usize, usize),
    Heat(usize, usize),
    Cool(usize, usize),
    Slice(usize, usize),
    Examine(usize),
    Look,
    Inventory,
    Fidget(usize, usize),
}

fn render(st: &HouseState, cmd: Cmd) -> String {
    let r = |i: usize| st.statics.receptacle_names[i].as_str();
    let o = |i: usize| st.statics.object_names[i].as_str();
    match cmd {
        Cmd::GoTo(x) => format!("go to {}", r(x)),
        Cmd::Open(x) => format!("open {}", r(x)),
        Cmd::Close(x) => format!("close {}", r(x)),
        Cmd::Take(a, x) => format!("take {} from {}", o(a), r(x)),
        Cmd::Put(a, x) => format!("put {} in/on {}", o(a), r(x)),
        Cmd::Clean(a, x) => format!("clean {} with {}", o(a), r(x)),
        Cmd::Heat(a, x) => format!("heat {} with {}", o(a), r(x)),
        Cmd::Cool(a, x) => format!("cool {} with {}", o(a), r(x)),
        Cmd::Slice(a, k) => format!("slice {} with {}", o(a), o(k)),
        Cmd::Examine(x) => format!("examine {}", r(x)),
        Cmd::Look => "look".to_string(),
        Cmd::Inventory => "inventory".to_string(),
        Cmd::Fidget(v, x) => format!("{} {}", st.statics.xl_verbs[v], r(x)),
    }
}

fn commands(st: &HouseState) -> Vec<(String, Cmd)> {
    let n_rec = st.statics.receptacles.len();
    let mut cmds = Vec::new();
    for x in 0..n_rec {
        if st.agent != Some(x) {
            cmds.push(Cmd::GoTo(x));
        }
    }
    let held = st.holding();
    if let Some(here) = st.agent {
        let kind = st.statics.receptacles[here].kind.as_str();
        if st.statics.openable[here] {
            cmds.push(Cmd::Open(here));
            cmds.push(Cmd::Close(here));
        }
        cmds.push(Cmd::Examine(here));
        if st.accessible(here) {
            match held {
                None => {
                    for o in st.contents(here) {
                        cmds.push(Cmd::Take(o, here));
                    }
                }
                Some(h) => cmds.push(Cmd::Put(h, here)),
            }
        }
        if let Some(h) = held {
            match kind {
                "sinkbasin" => cmds.push(Cmd::Clean(h, here)),
                "microwave" => cmds.push(Cmd::Heat(h, here)),
                "fridge" => cmds.push(Cmd::Cool(h, here)),
                _ => {}
            }
            if st.statics.object_kinds[h] == "knife" && st.accessible(here) {
                for o in st.contents(here) {
                    let sliceable = object_kind(&st.statics.object_kinds[o])
                        .map(|k| k.sliceable)
                        .unwrap_or(false);
                    if sliceable && !st.objects[o].sliced {
                        cmds.push(Cmd::Slice(o, h));
                    }
                }
            }
        }
    }
    cmds.push(Cmd::Look);
    cmds.push(Cmd::Inventory);
    for v in 0..st.statics.xl_verbs.len() {
        for x in 0..n_rec {
            cmds.push(Cmd::Fidget(v, x));
        }
    }
    let mut out: Vec<(String, Cmd)> = cmds.into_iter().map(|c| (render(st, c), c)).collect();
    out.sort_by(|a, b| a.0.cmp(&b.0));
    out.dedup_by(|a, b| a.0 == b.0);
    out
}

pub fn plausible_actions(st: &HouseState) -> Vec<Action> {
    commands(st).into_iter().map(|(s, _)| Action(s)).collect()
}

fn apply(st: &HouseState, cmd: Cmd) -> (HouseState, String) {
    let mut n = st.clone();
    n.steps += 1;
    let rname = |i: usize| st.statics.receptacle_names[i].clone();
    let oname = |i: usize| st.statics.object_names[i].clone();
    let result = match cmd {
        Cmd::GoTo(x) => {
            n.agent = Some(x);
            format!("You arrive at loc {}.", st.statics.loc_ids[x])
        }
        Cmd::Open(x) => {
            if st.open[x] {
                format!("The {} is already open.", rname(x))
            } else {
                n.open[x] = true;
                format!("You open the {}.", rname(x))
            }
        }
        Cmd::Close(x) => {
            if st.open[x] {
                n.open[x] = false;
                format!("You close the {}.", rname(x))
            } else {
                format!("The {} is already closed.", rname(x))
            }
        }
        Cmd::Take(o, x) => {
            n.objects[o].loc = ObjLoc::Held;
            format!("You pick up the {} from the {}.", oname(o), rname(x))
        }
        Cmd::Put(o, x) => {
            n.objects[o].loc = ObjLoc::In(x);
            format!("You put the {} in/on the {}.", oname(o), rname(x))
        }
        Cmd::Clean(o, x) => {
            n.objects[o].clean = true;
            format!("You clean the {} using the {}.", oname(o), rname(x))
        }
        Cmd::Heat(o, x) => {
            n.objects[o].hot = true;
            n.objects[o].cold = false;
            format!("You heat the {} using the {}.", oname(o), rname(x))
        }
        Cmd::Cool(o, x) => {
            n.objects[o].cold = true;
            n.objects[o].hot = false;
            format!("You cool the {} using the {}.", oname(o), rname(x))
        }
        Cmd::Slice(o, k) => {
            n.objects[o].sliced = true;
            format!("You slice the {} with the {}.", oname(o), oname(k))
        }
        Cmd::Examine(x) => format!("You examine the {}.", rname(x)),
        Cmd::Look => match st.agent {
            None => "You are in the middle of a room.".to_string(),
            Some(_) => "You look around.".to_string(),
        },
        Cmd::Inventory => "You check your inventory.".to_string(),
        Cmd::Fidget(v, x) => format!(
            "You {} the {}. Nothing happens.",
            st.statics.xl_verbs[v],
            rname(x)
        ),
    };
    (n, result)
}

pub fn step(st: &HouseState, action: &Action) -> Result<(HouseState, Observation), EnvError> {
    let cmd = commands(st)
        .into_iter()
        .find(|(s, _)| s == action.as_str())
        .map(|(_, c)| c)
        .ok_or_else(|| EnvError::InvalidAction {
            action: action.0.clone(),
        })?;
    let (next, result) = apply(st, cmd);
    let obs = next.observe(result);
    Ok((next, obs))
}

pub fn render_instruction(family: TaskFamily, goal: &HouseGoal, template: u32) -> String {
    let (o, r) = (goal.object.as_str(), goal.receptacle.as_str());
    let variants: [String; 2] = match family {
        TaskFamily::Put => [format!("put a {o} in {r}"), format!("put some {o} on {r}")],
        TaskFamily::PutClean => [
            format!("put a clean {o} in {r}"),
            format!("clean some {o} and put it in {r}"),
        ],
        TaskFamily::HeatPut => [
            format!("heat some {o} and put it in {r}"),
            format!("put a hot {o} in {r}"),
        ],
        TaskFamily::CoolPut => [
            format!("cool some {o} and put it in {r}"),
            format!("put a cool {o} in {r}"),
        ],
        TaskFamily::PutTwo => [
            format!("put two {o} in {r}"),
            format!("find two {o} and put them in {r}"),
        ],
        TaskFamily::Navigate => unreachable!("navigate is a street family"),
    };
    variants[(template % 2) as usize].clone()
}

/// Checks that a layout is well formed and its goal is reachable and not
/// already satisfied.
pub fn validate_layout(layout: &HouseLayout) -> Result<(), EnvError> {
    let bad = |m: String| Err(EnvError::Unsatisfiable(m));
    if layout.family == TaskFamily::Navigate {
        return bad("navigate is not a house family".into());
    }
    for o in &layout.objects {
        if o.receptacle >= layout.receptacles.len() {
            return bad(format!(
                "object {} placed in a missing receptacle",
                o.name()
            ));
        }
    }
    let mut names: Vec<String> = layout.receptacles.iter().map(|r| r.name()).collect();
    names.sort();
    names.dedup();
    if names.len() != layout.receptacles.len() {
        return bad("duplicate receptacle names".into());
    }
    let mut onames: Vec<String> = layout.objects.iter().map(|o| o.name()).collect();
    onames.sort();
    onames.dedup();
    if onames.len() != layout.objects.len() {
        return bad("duplicate object names".into());
    }
    let st = initial_state(layout, 50, 0);
    if st.goal_satisfied() {
        return bad("goal already satisfied".into());
    }
    if remaining_cost(&st).is_none() {
        return bad("goal unreachable".into());
    }
    Ok(())
}

fn initial_state(layout: &HouseLayout, max_steps: u32, seed: u64) -> HouseState {
    let mut loc_ids: Vec<u32> = (1..=layout.receptacles.len() as u32 + 20).collect();
    let mut rng = crate::seeding::rng(seed, "house-loc-ids", 0);
    loc_ids.shuffle(&mut rng);
    loc_ids.truncate(layout.receptacles.len());
    let statics = HouseStatic {
        receptacle_names: layout.receptacles.iter().map(|r| r.name()).collect(),
        openable: layout
            .receptacles
            .iter()
            .map(|r| is_openable(&r.kind))
            .collect(),
        receptacles: layout.receptacles.clone(),
        loc_ids,
        object_kinds: layout.objects.iter().map(|o| o.kind.clone()).collect(),
        object_names: layout.objects.iter().map(|o| o.name()).collect(),
        goal: layout.goal.clone(),
        xl_verbs: layout.xl_verbs.clone(),
    };
    HouseState {
        open: vec![false; layout.receptacles.len()],
        objects: layout
            .objects
            .iter()
            .map(|o| ObjState {
                loc: ObjLoc::In(o.receptacle),
                clean: false,
                hot: false,
                cold: false,
                sliced: false,
            })
            .collect(),
        statics: Arc::new(statics),
        agent: None,
        steps: 0,
        max_steps,
        rng_seed: seed,
    }
}

pub fn reset(
    layout: &HouseLayout,
    max_steps: u32,
    seed: u64,
) -> Result<(HouseState, Instruction, Observation), EnvError> {
    let st = initial_state(layout, max_steps, seed);
    let instruction = Instruction {
        text: render_instruction(layout.family, &layout.goal, layout.template),
        family: layout.family,
        goal: Goal::House(layout.goal.clone()),
    };
    let obs = st.observe("You are in the middle of a room.".to_string());
    Ok((st, instruction, obs))
}

// --- planning -------------------------------------------------------------

#[derive(Clone)]
struct Sim {
    pos: Option<usize>,
    hand: Option<usize>,
    open: Vec<bool>,
    obj_loc: Vec<ObjLoc>,
}

struct Planner<'a> {
    st: &'a HouseState,
    targets: Vec<usize>,
    station: Option<usize>,
    attr: Attr,
}

impl Planner<'_> {
    fn openable(&self, r: usize) -> bool {
        self.st.statics.openable[r]
    }

    /// Move to `x` (if needed) and make it accessible.
    fn reach(&self, s: &mut Sim, x: usize) -> u32 {
        let mut c = 0;
        if s.pos != Some(x) {
            c += 1;
            s.pos = Some(x);
        }
        if self.openable(x) && !s.open[x] {
            c += 1;
            s.open[x] = true;
        }
        c
    }

    /// All ways to get `o` delivered to `r`, as (cost, resulting sim).
    fn deliver(&self, sim: &Sim, o: usize, r: usize) -> Vec<(u32, Sim)> {
        let mut holding = Vec::new();
        if sim.hand == Some(o) {
            holding.push((0, sim.clone()));
        } else {
            let lo = match sim.obj_loc[o] {
                ObjLoc::In(x) => x,
                ObjLoc::Held => unreachable!("only one object can be held"),
            };
            let mut emptied = Vec::new();
            match sim.hand {
                None => emptied.push((0, sim.clone())),
                Some(j) => {
                    let mut spots = vec![lo];
                    if let Some(p) = sim.pos {
                        if p != lo {
                            spots.push(p);
                        }
                    }
                    for x in spots {
                        let mut s = sim.clone();
                        let c = self.reach(&mut s, x) + 1;
                        s.hand = None;
                        s.obj_loc[j] = ObjLoc::In(x);
                        emptied.push((c, s));
                    }
                }
            }
            for (c0, mut s) in emptied {
                let c = c0 + self.reach(&mut s, lo) + 1;
                s.hand = Some(o);
                s.obj_loc[o] = ObjLoc::Held;
                holding.push((c, s));
            }
        }
        let needs_treat = !self.st.attr_ok(o, self.attr);
        holding
            .into_iter()
            .map(|(mut c, mut s)| {
                if needs_treat {
                    let t = self.station.expect("station checked before planning");
                    if s.pos != Some(t) {
                        c += 1;
                        s.pos = Some(t);
                    }
                    c += 1;
                }
                c += self.reach(&mut s, r) + 1;
                s.hand = None;
                s.obj_loc[o] = ObjLoc::In(r);
                (c, s)
            })
            .collect()
    }

    fn best(&self, sim: &Sim, avail: &[usize], need: u32) -> Option<u32> {
        if need == 0 {
            return Some(0);
        }
        let mut best: Option<u32> = None;
        for (i, &o) in avail.iter().enumerate() {
            let rest: Vec<usize> = avail
                .iter()
                .enumerate()
                .filter(|&(j, _)| j != i)
                .map(|(_, &x)| x)
                .collect();
            for &r in &self.targets {
                for (c, s) in self.deliver(sim, o, r) {
                    if let Some(tail) = self.best(&s, &rest, need - 1) {
                        let total = c + tail;
                        best = Some(best.map_or(total, |b: u32| b.min(total)));
                    }
                }
            }
        }
        best
    }
}

/// Exact minimum number of actions to satisfy the goal, or `None` if the
/// goal cannot be reached.
pub fn remaining_cost(st: &HouseState) -> Option<u32> {
    let g = &st.statics.goal;
    let have = (0..st.objects.len()).filter(|&o| st.satisfies(o)).count() as u32;
    if have >= g.count {
        return Some(0);
    }
    let need = g.count - have;
    let cands: Vec<usize> = (0..st.objects.len())
        .filter(|&o| st.statics.object_kinds[o] == g.object && !st.satisfies(o))
        .collect();
    let targets: Vec<usize> = (0..st.statics.receptacles.len())
        .filter(|&r| st.statics.receptacles[r].kind == g.receptacle)
        .collect();
    let station = match g.attr.station() {
        None => None,
        Some(kind) => Some(
            (0..st.statics.receptacles.len()).find(|&r| st.statics.receptacles[r].kind == kind)?,
        ),
    };
    if (cands.len() as u32) < need || targets.is_empty() {
        return None;
    }
    let planner = Planner {
        st,
        targets,
        station,
        attr: g.attr,
    };
    let sim = Sim {
        pos: st.agent,
        hand: st.holding(),
        open: st.open.clone(),
        obj_loc: st.objects.iter().map(|o| o.loc).collect(),
    };
    planner.best(&sim, &cands, need)
}

// --- generation -------------------------------------------------------------

/// Knobs for house layout generation.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HouseGenKnobs {
    pub min_distractors: usize,
    pub max_distractors: usize,
    pub xl: bool,
}

impl Default for HouseGenKnobs {
    fn default() -> Self {
        HouseGenKnobs {
            min_distractors: 5,
            max_distractors: 9,
            xl: false,
        }
    }
}

fn receptacle_set<R: Rng>(rng: &mut R, xl: bool) -> Vec<ReceptacleSpec> {
    let mut counts: Vec<(&str, u32)> = vec![
        ("cabinet", rng.gen_range(2..=4)),
        ("coffeemachine", rng.gen_range(0..=1)),
        ("coffeetable", rng.gen_range(0..=1)),
        ("countertop", rng.gen_range(1..=2)),
        ("diningtable", rng.gen_range(0..=1)),
        ("drawer", rng.gen_range(2..=4)),
        ("dresser", rng.gen_range(0..=1)),
        ("fridge", 1),
        ("garbagecan", 1),
        ("microwave", 1),
        ("shelf", rng.gen_range(0..=2)),
        ("sidetable", rng.gen_range(0..=2)),
        ("sinkbasin", 1),
        ("stoveburner", rng.gen_range(0..=2)),
    ];
    if xl {
        // Keep enough receptacles for the inflated verb grid to exceed 200.
        for (kind, n) in counts.iter_mut() {
            if *kind == "cabinet" || *kind == "drawer" {
                *n = (*n).max(3);
            }
        }
    }
    let mut out = Vec::new();
    for (kind, n) in counts {
        for i in 1..=n {
            out.push(ReceptacleSpec {
                kind: kind.to_string(),
                number: i,
            });
        }
    }
    out
}

fn place<R: Rng>(rng: &mut R, kind: &ObjectKind, recs: &[ReceptacleSpec]) -> usize {
    let homes: Vec<usize> = (0..recs.len())
        .filter(|&r| kind.homes.contains(&recs[r].kind.as_str()))
        .collect();
    if !homes.is_empty() && rng.gen_bool(0.8) {
        homes[rng.gen_range(0..homes.len())]
    } else {
        rng.gen_range(0..recs.len())
    }
}

pub fn family_allows(family: TaskFamily, kind: &ObjectKind) -> bool {
    match family {
        TaskFamily::Put | TaskFamily::PutTwo => true,
        TaskFamily::PutClean => kind.cleanable,
        TaskFamily::HeatPut => kind.heatable,
        TaskFamily::CoolPut => kind.coolable,
        TaskFamily::Navigate => false,
    }
}

/// Generate a layout for the given combination; retries placement until the
/// goal is reachable and not already satisfied.
pub fn generate<R: Rng>(
    rng: &mut R,
    family: TaskFamily,
    object: &str,
    receptacle: &str,
    knobs: &HouseGenKnobs,
) -> Result<HouseLayout, EnvError> {
    let goal_kind = object_kind(object)
        .ok_or_else(|| EnvError::Unsatisfiable(format!("unknown object {object}")))?;
    if !family_allows(family, goal_kind) {
        return Err(EnvError::Unsatisfiable(format!(
            "{} cannot be used with {}",
            object,
            family.tag()
        )));
    }
    for _ in 0..64 {
        let recs = receptacle_set(rng, knobs.xl);
        if !recs.iter().any(|r| r.kind == receptacle) {
            continue;
        }
        let goal_count = if family == TaskFamily::PutTwo {
            rng.gen_range(2..=3)
        } else {
            rng.gen_range(1..=2)
        };
        let mut kinds: Vec<&ObjectKind> = vec![goal_kind; goal_count];
        let distractors = rng.gen_range(knobs.min_distractors..=knobs.max_distractors);
        for _ in 0..distractors {
            let k = &OBJECT_KINDS[rng.gen_range(0..OBJECT_KINDS.len())];
            if k.name != object {
                kinds.push(k);
            }
        }
        let mut numbers: std::collections::HashMap<&str, u32> = Default::default();
        let objects: Vec<ObjectSpec> = kinds
            .iter()
            .map(|k| {
                let n = numbers.entry(k.name).or_insert(0);
                *n += 1;
                ObjectSpec {
                    kind: k.name.to_string(),
                    number: *n,
                    receptacle: place(rng, k, &recs),
                }
            })
            .collect();
        let attr = match family {
            TaskFamily::PutClean => Attr::Clean,
            TaskFamily::HeatPut => Attr::Hot,
            TaskFamily::CoolPut => Attr::Cold,
            _ => Attr::None,
        };
        let layout = HouseLayout {
            receptacles: recs,
            objects,
            family,
            goal: HouseGoal {
                object: object.to_string(),
                receptacle: receptacle.to_string(),
                attr,
                count: if family == TaskFamily::PutTwo { 2 } else { 1 },
            },
            template: rng.gen_range(0..2),
            xl_verbs: if knobs.xl {
                XL_VERBS.iter().map(|s| s.to_string()).collect()
            } else {
                Vec::new()
            },
        };
        if validate_layout(&layout).is_ok() {
            return Ok(layout);
        }
    }
    Err(EnvError::Unsatisfiable(format!(
        "could not place {object} for {receptacle}"
    )))
}

/// Human-readable receptacle list, as shown in the middle of the room.
pub fn room_listing_text(names: &[String]) -> String {
    let items: Vec<String> = names.iter().map(|n| format!("a {n}")).collect();
    join_list(&items)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn tiny(family: TaskFamily, attr: Attr, count: u32) -> HouseLayout {
        let rec = |k: &str, n| ReceptacleSpec {
            kind: k.into(),
            number: n,
        };
        HouseLayout {
            receptacles: vec![
                rec("countertop", 1),
                rec("drawer", 1),
                rec("fridge", 1),
                rec("sidetable", 1),
                rec("sinkbasin", 1),
            ],
            objects: vec![
                ObjectSpec {
                    kind: "apple".into(),
                    number: 1,
                    receptacle: 0,
                },
                ObjectSpec {
                    kind: "apple".into(),
                    number: 2,
                    receptacle: 1,
                },
                ObjectSpec {
                    kind: "knife".into(),
                    number: 1,
                    receptacle: 0,
                },
            ],
            family,
            goal: HouseGoal {
                object: "apple".into(),
                receptacle: "sidetable".into(),
                attr,
                count,
            },
            template: 0,
            xl_verbs: vec![],
        }
    }

    #[test]
    fn already_open_leaves_state_alone() {
        let layout = tiny(TaskFamily::Put, Attr::None, 1);
        let (s0, _, _) = reset(&layout, 50, 0).unwrap();
        let (s1, _) = step(&s0, &Action::from("go to drawer 1")).unwrap();
        let (s2, o2) = step(&s1, &Action::from("open drawer 1")).unwrap();
        assert!(o2.result.contains("You open the drawer 1"));
        let (s3, o3) = step(&s2, &Action::from("open drawer 1")).unwrap();
        assert!(o3.result.contains("already open"));
        assert!(!o3.success);
        assert_eq!(s3.planning_key(), s2.planning_key());
        assert_eq!(s3.steps, s2.steps + 1);
    }

    #[test]
    fn invalid_action_is_an_error() {
        let layout = tiny(TaskFamily::Put, Attr::None, 1);
        let (s0, _, _) = reset(&layout, 50, 0).unwrap();
        let err = step(&s0, &Action::from("open drawer 1")).unwrap_err();
        assert!(matches!(err, EnvError::InvalidAction { .. }));
    }

    #[test]
    fn cost_counts_clean_route() {
        // middle -> go countertop, take, go sink, clean, go sidetable, put
        let layout = tiny(TaskFamily::PutClean, Attr::Clean, 1);
        let (s0, _, _) = reset(&layout, 50, 0).unwrap();
        assert_eq!(remaining_cost(&s0), Some(6));
        let two = tiny(TaskFamily::PutTwo, Attr::None, 2);
        let (t0, _, _) = reset(&two, 50, 0).unwrap();
        // go countertop, take, go sidetable, put, go drawer, open, take, go sidetable, put
        assert_eq!(remaining_cost(&t0), Some(9));
    }

    #[test]
    fn instruction_templates() {
        let g = HouseGoal {
            object: "spatula".into(),
            receptacle: "sidetable".into(),
            attr: Attr::Clean,
            count: 1,
        };
        assert_eq!(
            render_instruction(TaskFamily::PutClean, &g, 0),
            "put a clean spatula in sidetable"
        );
        assert_eq!(
            render_instruction(TaskFamily::PutClean, &g, 1),
            "clean some spatula and put it in sidetable"
        );
    }
}
