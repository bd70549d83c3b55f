//! Control vocabulary, the motion and contact rules, and message delivery
//! over spatial names.

use std::collections::HashMap;
use std::sync::{Mutex, OnceLock};

use thiserror::Error;

use crate::bigraph::{atom, elementary_id, ion, merge_prod, nest, one, ppar, Bigraph, Control, Link, Parent};
use crate::builder::{identifiers, resolve, Ambiguous, SpatialName, WorldBigraph, PHYSICAL_REGION, WORLD};
use crate::rewrite::{rewrite_first, ReactionRule, RewriteError};

pub mod controls {
    use crate::bigraph::Control;

    pub fn boundary() -> Control {
        Control::new("Boundary", 1)
    }
    pub fn street() -> Control {
        Control::new("Street", 1)
    }
    pub fn building() -> Control {
        Control::new("Building", 1)
    }
    pub fn junction() -> Control {
        Control::new("Junction", 1)
    }
    pub fn id(ident: &str) -> Control {
        Control::with_param("ID", 1, ident)
    }
    pub fn agent() -> Control {
        Control::new("Agent", 1)
    }
    pub fn contact() -> Control {
        Control::new("Contact", 1)
    }
    /// Carries the message id so rules for different messages never mix.
    pub fn message(message_id: &str) -> Control {
        Control::with_param("Message", 1, message_id)
    }
}

#[derive(Debug, Error)]
pub enum RulesError {
    #[error("no node is named {0}")]
    NotFound(String),
    #[error(transparent)]
    Ambiguous(#[from] Ambiguous),
    #[error("unknown rule {0:?}")]
    UnknownRule(String),
    #[error(transparent)]
    Rewrite(#[from] RewriteError),
}

fn ion1(c: Control, name: &str) -> Bigraph {
    ion(c, &[name]).expect("arity 1")
}

fn atom1(c: Control, name: &str) -> Bigraph {
    atom(c, &[name]).expect("arity 1")
}

fn within(outer: &Bigraph, inner: &Bigraph) -> Bigraph {
    nest(outer, inner).expect("one site, one region")
}

fn rule(name: &str, redex: Bigraph, reactum: Bigraph) -> ReactionRule {
    ReactionRule::linear(name, redex, reactum).expect("well-formed rule")
}

/// `K_x.(id | Agent_y) → K_x | Agent_y`.
fn leave(name: &str, k: Control) -> ReactionRule {
    let (redex, reactum) = leave_pair(k);
    rule(name, redex, reactum)
}

/// `K_x | Agent_y → K_x.(id | Agent_y)`.
fn enter(name: &str, k: Control) -> ReactionRule {
    let (reactum, redex) = leave_pair(k);
    rule(name, redex, reactum)
}

fn leave_pair(k: Control) -> (Bigraph, Bigraph) {
    let agent = ion1(controls::agent(), "y");
    let redex = within(&ion1(k.clone(), "x"), &merge_prod(&elementary_id(), &agent));
    let reactum = merge_prod(&ion1(k, "x"), &agent);
    (redex, reactum)
}

/// `Room_x.(id | Agent_y) → Room_x | Agent_y`.
pub fn leave_room() -> ReactionRule {
    leave("leave_room", Control::new("Room", 1))
}

pub fn leave_building() -> ReactionRule {
    leave("leave_building", controls::building())
}

pub fn leave_street() -> ReactionRule {
    leave("leave_street", controls::street())
}

pub fn enter_building() -> ReactionRule {
    enter("enter_building", controls::building())
}

pub fn enter_street() -> ReactionRule {
    enter("enter_street", controls::street())
}

/// An Agent moves between two Streets whose Junctions share link `w`.
pub fn move_across_linked_streets() -> ReactionRule {
    let j = atom1(controls::junction(), "w");
    let agent = ion1(controls::agent(), "y");
    let redex = ppar(
        &within(
            &ion1(controls::street(), "x1"),
            &merge_prod(&merge_prod(&elementary_id(), &agent), &j),
        ),
        &within(&ion1(controls::street(), "x2"), &merge_prod(&j, &elementary_id())),
    );
    let reactum = ppar(
        &within(&ion1(controls::street(), "x1"), &merge_prod(&elementary_id(), &j)),
        &within(
            &ion1(controls::street(), "x2"),
            &merge_prod(&j, &merge_prod(&agent, &elementary_id())),
        ),
    );
    rule("move_across_linked_streets", redex, reactum)
}

/// `K_x.(id | Building_y | Agent_z) → K_x.(id | Building_y.(id | Agent_z))`.
fn enter_building_from(name: &str, k: Control) -> ReactionRule {
    let b = ion1(controls::building(), "y");
    let agent = ion1(controls::agent(), "z");
    let redex = within(&ion1(k.clone(), "x"), &merge_prod(&merge_prod(&elementary_id(), &b), &agent));
    let reactum = within(
        &ion1(k, "x"),
        &merge_prod(&elementary_id(), &within(&b, &merge_prod(&elementary_id(), &agent))),
    );
    rule(name, redex, reactum)
}

pub fn enter_building_from_street() -> ReactionRule {
    enter_building_from("enter_building_from_street", controls::street())
}

pub fn enter_building_from_boundary() -> ReactionRule {
    enter_building_from("enter_building_from_boundary", controls::boundary())
}

/// leave_building, leave_street, enter_building, enter_street and
/// move_across_linked_streets.
pub fn motion_rules() -> Vec<ReactionRule> {
    vec![
        leave_building(),
        leave_street(),
        enter_building(),
        enter_street(),
        move_across_linked_streets(),
    ]
}

/// Faster replacements for enter_building.
pub fn alternative_enter_rules() -> Vec<ReactionRule> {
    vec![enter_building_from_street(), enter_building_from_boundary()]
}

/// Two agents in one building get a linked pair of Contacts, unless a
/// linked Contact pair already occurs in the parameter.
pub fn connect_rule() -> ReactionRule {
    let building = ion1(controls::building(), "x");
    let ay = ion1(controls::agent(), "y");
    let az = ion1(controls::agent(), "z");
    let redex = within(&building, &merge_prod(&merge_prod(&elementary_id(), &ay), &az));
    let c = atom1(controls::contact(), "w");
    let reactum = within(
        &building,
        &merge_prod(
            &merge_prod(&elementary_id(), &within(&ay, &merge_prod(&elementary_id(), &c))),
            &within(&az, &merge_prod(&elementary_id(), &c)),
        ),
    )
    .close("w");
    let pair = ppar(&c, &c).close("w");
    rule("connect_to_nearby_agent", redex, reactum).with_condition(pair)
}

/// Every named rule the command line can apply.
pub fn all_rules() -> Vec<ReactionRule> {
    let mut rules = motion_rules();
    rules.extend(alternative_enter_rules());
    rules.push(connect_rule());
    rules.push(leave_room());
    rules
}

pub fn rule_by_name(name: &str) -> Result<ReactionRule, RulesError> {
    all_rules()
        .into_iter()
        .find(|r| r.name() == name)
        .ok_or_else(|| RulesError::UnknownRule(name.to_string()))
}

/// Adds `Agent` with identifier `id` under the node named `at`.
pub fn add_agent(wb: &WorldBigraph, at: &SpatialName, id: &str) -> Result<WorldBigraph, RulesError> {
    let host = resolve(wb, at)?.ok_or_else(|| RulesError::NotFound(at.to_string()))?;
    let mut p = wb.bigraph.to_parts();
    let agent = p.controls.len();
    p.controls.push(controls::agent());
    p.node_parents.push(Parent::Node(host));
    p.controls.push(controls::id(id));
    p.node_parents.push(Parent::Region(0));
    p.links.push(Link {
        outer: None,
        ports: [(agent, 0), (agent + 1, 0)].into_iter().collect(),
    });
    let b = Bigraph::from_parts(p).map_err(RewriteError::from)?;
    Ok(WorldBigraph::new(b))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
enum Generated {
    Propagate,
    Copy,
    Cleanup,
    Delete,
}

type RuleKey = (Generated, String, String, String);

fn cached(key: RuleKey, make: impl FnOnce() -> ReactionRule) -> ReactionRule {
    static CACHE: OnceLock<Mutex<HashMap<RuleKey, ReactionRule>>> = OnceLock::new();
    let cache = CACHE.get_or_init(Default::default);
    if let Some(r) = cache.lock().expect("rule cache").get(&key) {
        return r.clone();
    }
    let r = make();
    cache.lock().expect("rule cache").insert(key, r.clone());
    r
}

/// `ID(seg)_x | ID(msg)_m || K_x | Message_m → … || K_x.(id | Message_m)`.
pub fn propagate_rule(segment: &str, message_id: &str, k: Control) -> ReactionRule {
    let key = (Generated::Propagate, segment.to_string(), message_id.to_string(), k.name.clone());
    cached(key, || {
        let ids = merge_prod(&atom1(controls::id(segment), "x"), &atom1(controls::id(message_id), "m"));
        let target = ion1(k.clone(), "x");
        let msg = ion1(controls::message(message_id), "m");
        let redex = ppar(&ids, &merge_prod(&target, &msg));
        let reactum = ppar(&ids, &within(&target, &merge_prod(&elementary_id(), &msg)));
        rule(&format!("propagate_into_{}({segment})", k.name), redex, reactum)
    })
}

/// Removes a Message and its ID node.
pub fn delete_message_rule(message_id: &str) -> ReactionRule {
    let key = (Generated::Delete, String::new(), message_id.to_string(), String::new());
    cached(key, || {
        let redex = ppar(
            &atom1(controls::id(message_id), "m"),
            &ion1(controls::message(message_id), "m"),
        )
        .close("m");
        let reactum = ppar(&one(), &one());
        ReactionRule::new("delete_message", redex, reactum, Vec::new()).expect("well-formed rule")
    })
}

/// Copies a Message into a sibling `K` that holds no copy yet; the copy gets
/// its own ID node.
pub fn copy_rule(message_id: &str, k: Control) -> ReactionRule {
    let key = (Generated::Copy, String::new(), message_id.to_string(), k.name.clone());
    cached(key, || {
        let msg = |l: &str| ion1(controls::message(message_id), l);
        let id = |l: &str| atom1(controls::id(message_id), l);
        let target = ion1(k.clone(), "l");
        let redex = ppar(&id("m"), &merge_prod(&target, &msg("m")));
        let reactum = ppar(
            &merge_prod(&id("m"), &id("n")),
            &merge_prod(&within(&target, &merge_prod(&elementary_id(), &msg("n"))), &msg("m")),
        )
        .close("n");
        ReactionRule::new(format!("copy_message_into_{}", k.name), redex, reactum, vec![0, 1, 1])
            .expect("well-formed rule")
            .with_condition(msg("q"))
    })
}

/// Deletes a Message sitting directly in a `K`.
pub fn cleanup_rule(message_id: &str, k: Control) -> ReactionRule {
    let key = (Generated::Cleanup, String::new(), message_id.to_string(), k.name.clone());
    cached(key, || {
        let target = ion1(k.clone(), "l");
        let redex = ppar(
            &atom1(controls::id(message_id), "m"),
            &within(&target, &merge_prod(&elementary_id(), &ion1(controls::message(message_id), "m"))),
        )
        .close("m");
        let reactum = ppar(&one(), &target);
        ReactionRule::new(format!("delete_message_in_{}", k.name), redex, reactum, vec![0])
            .expect("well-formed rule")
    })
}

/// Places a fresh Message and its ID node at the top of the Physical region,
/// inside a top-level World Boundary when there is one.
fn inject(b: &Bigraph, message_id: &str) -> Bigraph {
    let idents = identifiers(b);
    let world = b
        .child_nodes(Parent::Region(PHYSICAL_REGION))
        .iter()
        .copied()
        .find(|&v| b.control(v).name == "Boundary" && idents[v].as_deref() == Some(WORLD));
    let mut p = b.to_parts();
    let msg = p.controls.len();
    p.controls.push(controls::message(message_id));
    p.node_parents
        .push(world.map_or(Parent::Region(PHYSICAL_REGION), Parent::Node));
    p.controls.push(controls::id(message_id));
    p.node_parents.push(Parent::Region(0));
    p.links.push(Link {
        outer: None,
        ports: [(msg, 0), (msg + 1, 0)].into_iter().collect(),
    });
    Bigraph::from_parts(p).expect("adding a linked pair keeps a bigraph")
}

fn container_kinds() -> [Control; 3] {
    [controls::boundary(), controls::street(), controls::building()]
}

/// Moves the Message down the name's segments, root first. The last
/// segment's node must be one of `last`.
fn propagate(
    mut b: Bigraph,
    message_id: &str,
    name: &SpatialName,
    last: &[Control],
) -> Result<Option<Bigraph>, RulesError> {
    let n = name.segments.len();
    for (i, seg) in name.segments.iter().rev().enumerate() {
        let kinds: &[Control] = if i + 1 == n { last } else { &container_kinds() };
        let mut moved = None;
        for k in kinds {
            if let Some(next) = rewrite_first(&propagate_rule(seg, message_id, k.clone()), &b)? {
                moved = Some(next);
                break;
            }
        }
        match moved {
            Some(next) => b = next,
            None => return Ok(None),
        }
    }
    Ok(Some(b))
}

fn exhaust(mut b: Bigraph, rules: &[ReactionRule]) -> Result<Bigraph, RulesError> {
    'outer: loop {
        for r in rules {
            if let Some(next) = rewrite_first(r, &b)? {
                b = next;
                continue 'outer;
            }
        }
        return Ok(b);
    }
}

/// Sends a message to the Agent named `destination`. On failure the
/// Message is deleted again and `delivered` is false.
pub fn unicast(
    wb: &WorldBigraph,
    message_id: &str,
    destination: &SpatialName,
) -> Result<(WorldBigraph, bool), RulesError> {
    let start = inject(&wb.bigraph, message_id);
    match propagate(start.clone(), message_id, destination, &[controls::agent()])? {
        Some(b) => Ok((WorldBigraph::new(b), true)),
        None => {
            let b = exhaust(start, &[delete_message_rule(message_id)])?;
            Ok((WorldBigraph::new(b), false))
        }
    }
}

/// Sends a message to every Agent inside `area`. Returns the world and the
/// number of Agents holding the message; an unknown area leaves the world
/// unchanged.
pub fn multicast(wb: &WorldBigraph, message_id: &str, area: &SpatialName) -> Result<(WorldBigraph, usize), RulesError> {
    let start = inject(&wb.bigraph, message_id);
    let mut kinds = container_kinds().to_vec();
    kinds.push(controls::agent());
    let Some(b) = propagate(start, message_id, area, &kinds)? else {
        return Ok((wb.clone(), 0));
    };
    let copies: Vec<ReactionRule> = kinds.iter().map(|k| copy_rule(message_id, k.clone())).collect();
    let b = exhaust(b, &copies)?;
    let cleanups: Vec<ReactionRule> = container_kinds()
        .into_iter()
        .map(|k| cleanup_rule(message_id, k))
        .collect();
    let b = exhaust(b, &cleanups)?;
    let recipients = messages(&b, message_id)
        .into_iter()
        .filter(|&v| matches!(b.node_parent(v), Parent::Node(p) if b.control(p).name == "Agent"))
        .count();
    Ok((WorldBigraph::new(b), recipients))
}

/// Nodes carrying Message `message_id`.
pub fn messages(b: &Bigraph, message_id: &str) -> Vec<usize> {
    let want = controls::message(message_id);
    (0..b.node_count()).filter(|&v| *b.control(v) == want).collect()
}
