//! Reaction rules and their application.
//!
//! A match of redex `R` in target `T` decomposes `T` as context ∘ R ∘
//! parameter. Each redex region is placed under one target parent (a region
//! or a node of the context). Children of a matched node that are not
//! images of redex children form the parameter of the redex site beneath
//! it; a redex node without a site only matches a node with exactly as many
//! children.

use std::cell::OnceCell;
use std::collections::{BTreeMap, HashMap};

use thiserror::Error;

use crate::bigraph::{iso_equal, iso_invariant, Bigraph, BigraphError, Link, Parent, Parts, Place};
use crate::sparse::SparseBoolMatrix;

const NONE: usize = usize::MAX;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum RewriteError {
    #[error("rule {rule}: {reason}")]
    InvalidRule { rule: String, reason: String },
    #[error("invalid match: {0}")]
    InvalidMatch(String),
    #[error("parameter of redex site {site} holds a target site and cannot be {action}")]
    SiteInParameter { site: usize, action: &'static str },
    #[error(transparent)]
    Bigraph(#[from] BigraphError),
}

/// The rule fires only if `pattern` does not occur in the parameter.
#[derive(Debug, Clone)]
pub struct NegCondition {
    pub pattern: Bigraph,
}

#[derive(Debug, Clone)]
pub struct ReactionRule {
    name: String,
    redex: Bigraph,
    reactum: Bigraph,
    inst_map: Vec<usize>,
    conditions: Vec<NegCondition>,
}

impl ReactionRule {
    /// `inst_map[s]` is the redex site whose parameter fills reactum site `s`.
    pub fn new(
        name: impl Into<String>,
        redex: Bigraph,
        reactum: Bigraph,
        inst_map: Vec<usize>,
    ) -> Result<Self, RewriteError> {
        let rule = Self {
            name: name.into(),
            redex,
            reactum,
            inst_map,
            conditions: Vec::new(),
        };
        rule.validate()?;
        Ok(rule)
    }

    /// Rule with the identity instantiation map.
    pub fn linear(name: impl Into<String>, redex: Bigraph, reactum: Bigraph) -> Result<Self, RewriteError> {
        let name = name.into();
        if redex.sites() != reactum.sites() {
            return Err(RewriteError::InvalidRule {
                rule: name,
                reason: format!(
                    "identity map needs equal site counts, got {} and {}",
                    redex.sites(),
                    reactum.sites()
                ),
            });
        }
        let map = (0..redex.sites()).collect();
        Self::new(name, redex, reactum, map)
    }

    pub fn with_condition(mut self, pattern: Bigraph) -> Self {
        self.conditions.push(NegCondition { pattern });
        self
    }

    fn validate(&self) -> Result<(), RewriteError> {
        let fail = |reason: String| {
            Err(RewriteError::InvalidRule {
                rule: self.name.clone(),
                reason,
            })
        };
        if self.redex.regions() != self.reactum.regions() {
            return fail(format!(
                "redex has {} regions, reactum {}",
                self.redex.regions(),
                self.reactum.regions()
            ));
        }
        if self.redex.outer_names() != self.reactum.outer_names() {
            return fail("redex and reactum outer names differ".into());
        }
        if self.inst_map.len() != self.reactum.sites() {
            return fail(format!(
                "instantiation map has {} entries for {} reactum sites",
                self.inst_map.len(),
                self.reactum.sites()
            ));
        }
        if let Some(&s) = self.inst_map.iter().find(|&&s| s >= self.redex.sites()) {
            return fail(format!("instantiation map names redex site {s}"));
        }
        if let Some(r) = (0..self.redex.regions()).find(|&r| self.redex.child_nodes(Parent::Region(r)).is_empty()) {
            return fail(format!("redex region {r} has no nodes"));
        }
        Ok(())
    }

    pub fn name(&self) -> &str {
        &self.name
    }

    pub fn redex(&self) -> &Bigraph {
        &self.redex
    }

    pub fn reactum(&self) -> &Bigraph {
        &self.reactum
    }

    pub fn inst_map(&self) -> &[usize] {
        &self.inst_map
    }

    pub fn conditions(&self) -> &[NegCondition] {
        &self.conditions
    }
}

/// One occurrence of a redex in a target.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord)]
pub struct Match {
    /// Redex node → target node.
    pub nodes: Vec<usize>,
    /// Redex region → target parent receiving it.
    pub roots: Vec<Parent>,
    /// Redex site → target children forming its parameter.
    pub params: Vec<Vec<Place>>,
    /// Redex link → target link; `None` for idle redex names.
    pub links: Vec<Option<usize>>,
}

struct Matcher<'a> {
    t: &'a Bigraph,
    r: &'a Bigraph,
    t_ports: Vec<Vec<usize>>,
    r_ports: Vec<Vec<usize>>,
    r_parents: Vec<Parent>,
    t_parents: Vec<Parent>,
    by_control: HashMap<&'a crate::bigraph::Control, Vec<usize>>,
    order: Vec<usize>,
    anchor_region: Vec<Option<usize>>,
    top_region: Vec<Option<usize>>,
    map: Vec<usize>,
    used: Vec<bool>,
    link_map: Vec<usize>,
    trail: Vec<usize>,
    roots: Vec<Option<Parent>>,
    closure: OnceCell<SparseBoolMatrix>,
    out: Vec<Match>,
}

impl<'a> Matcher<'a> {
    fn new(t: &'a Bigraph, r: &'a Bigraph) -> Self {
        let mut by_control: HashMap<_, Vec<usize>> = HashMap::new();
        for (v, c) in t.controls().iter().enumerate() {
            by_control.entry(c).or_default().push(v);
        }
        let count = |v: usize| by_control.get(r.control(v)).map_or(0, Vec::len);
        let rn = r.node_count();
        let mut anchor_region = vec![None; rn];
        let mut top_region = vec![None; rn];
        let mut regions: Vec<(usize, usize, usize)> = Vec::new();
        for reg in 0..r.regions() {
            let tops = r.child_nodes(Parent::Region(reg));
            for &v in tops {
                top_region[v] = Some(reg);
            }
            if let Some(&a) = tops.iter().min_by_key(|&&v| (count(v), v)) {
                regions.push((count(a), reg, a));
            }
        }
        regions.sort_unstable();
        let mut order = Vec::with_capacity(rn);
        for &(_, reg, a) in &regions {
            anchor_region[a] = Some(reg);
            let start = order.len();
            order.push(a);
            order.extend(r.child_nodes(Parent::Region(reg)).iter().filter(|&&v| v != a));
            let mut i = start;
            while i < order.len() {
                let v = order[i];
                order.extend(r.child_nodes(Parent::Node(v)).iter().copied());
                i += 1;
            }
        }
        Self {
            t,
            r,
            t_ports: t.port_links(),
            r_ports: r.port_links(),
            r_parents: r.node_parents(),
            t_parents: t.node_parents(),
            by_control,
            order,
            anchor_region,
            top_region,
            map: vec![NONE; rn],
            used: vec![false; t.node_count()],
            link_map: vec![NONE; r.links().len()],
            trail: Vec::new(),
            roots: vec![None; r.regions()],
            closure: OnceCell::new(),
            out: Vec::new(),
        }
    }

    fn candidates(&self, v: usize) -> Vec<usize> {
        let ctl = self.r.control(v);
        if self.anchor_region[v].is_some() {
            return self.by_control.get(ctl).cloned().unwrap_or_default();
        }
        let parent = match (self.top_region[v], self.r_parents[v]) {
            (Some(reg), _) => self.roots[reg].expect("anchor mapped first"),
            (None, Parent::Node(p)) => Parent::Node(self.map[p]),
            (None, Parent::Region(_)) => unreachable!("top nodes carry a region"),
        };
        self.t
            .child_nodes(parent)
            .iter()
            .copied()
            .filter(|&w| self.t.control(w) == ctl)
            .collect()
    }

    fn undo(&mut self, to: usize) {
        while self.trail.len() > to {
            let l = self.trail.pop().expect("trail entry");
            self.link_map[l] = NONE;
        }
    }

    fn try_map(&mut self, v: usize, w: usize) -> bool {
        if self.used[w] {
            return false;
        }
        let kids = self.r.child_nodes(Parent::Node(v)).len();
        let has_site = !self.r.child_sites(Parent::Node(v)).is_empty();
        let t_kids = self.t.child_count(Parent::Node(w));
        if (!has_site && t_kids != kids) || t_kids < kids {
            return false;
        }
        for (p, &lr) in self.r_ports[v].iter().enumerate() {
            let lt = self.t_ports[w][p];
            if self.link_map[lr] == NONE {
                let rl = &self.r.links()[lr];
                let tl = &self.t.links()[lt];
                if rl.is_closed() && (!tl.is_closed() || tl.ports.len() != rl.ports.len()) {
                    return false;
                }
                self.link_map[lr] = lt;
                self.trail.push(lr);
            } else if self.link_map[lr] != lt {
                return false;
            }
        }
        self.map[v] = w;
        self.used[w] = true;
        if let Some(reg) = self.anchor_region[v] {
            self.roots[reg] = Some(self.t_parents[w]);
        }
        true
    }

    fn unmap(&mut self, v: usize, w: usize) {
        self.map[v] = NONE;
        self.used[w] = false;
        if let Some(reg) = self.anchor_region[v] {
            self.roots[reg] = None;
        }
    }

    fn search(&mut self, depth: usize) {
        if depth == self.order.len() {
            self.complete();
            return;
        }
        let v = self.order[depth];
        for w in self.candidates(v) {
            let mark = self.trail.len();
            if self.try_map(v, w) {
                self.search(depth + 1);
                self.unmap(v, w);
            }
            self.undo(mark);
        }
    }

    fn roots_outside_redex(&self) -> bool {
        if self.r.regions() < 2 {
            return true;
        }
        let closure = self.closure.get_or_init(|| {
            self.t
                .place()
                .nn
                .trans()
                .expect("node matrix is square")
        });
        self.roots.iter().all(|root| match root.expect("all regions rooted") {
            Parent::Region(_) => true,
            Parent::Node(p) => !self.used[p] && self.map.iter().all(|&w| !closure.mem(w, p)),
        })
    }

    fn complete(&mut self) {
        if !self.roots_outside_redex() {
            return;
        }
        let mut params = vec![Vec::new(); self.r.sites()];
        for v in 0..self.r.node_count() {
            let Some(&site) = self.r.child_sites(Parent::Node(v)).first() else {
                continue;
            };
            let images: Vec<usize> = self
                .r
                .child_nodes(Parent::Node(v))
                .iter()
                .map(|&c| self.map[c])
                .collect();
            params[site] = self
                .t
                .children(Parent::Node(self.map[v]))
                .into_iter()
                .filter(|c| !matches!(c, Place::Node(w) if images.contains(w)))
                .collect();
        }
        self.out.push(Match {
            nodes: self.map.clone(),
            roots: self.roots.iter().map(|r| r.expect("all regions rooted")).collect(),
            params,
            links: self
                .link_map
                .iter()
                .map(|&l| (l != NONE).then_some(l))
                .collect(),
        });
    }
}

/// All occurrences of `redex` in `target`, sorted by node images.
pub fn occurrences(target: &Bigraph, redex: &Bigraph) -> Vec<Match> {
    if redex.node_count() == 0 || (0..redex.regions()).any(|r| redex.child_nodes(Parent::Region(r)).is_empty()) {
        return Vec::new();
    }
    let mut m = Matcher::new(target, redex);
    m.search(0);
    let mut out = m.out;
    out.sort();
    out
}

/// Nodes of the subtrees below `roots`, parents before children.
fn subtree_nodes(b: &Bigraph, roots: &[Place]) -> (Vec<usize>, Vec<usize>) {
    let mut nodes: Vec<usize> = Vec::new();
    let mut sites = Vec::new();
    for root in roots {
        match *root {
            Place::Site(s) => sites.push(s),
            Place::Node(v) => {
                let start = nodes.len();
                nodes.push(v);
                let mut i = start;
                while i < nodes.len() {
                    let u = nodes[i];
                    nodes.extend(b.child_nodes(Parent::Node(u)).iter().copied());
                    sites.extend(b.child_sites(Parent::Node(u)).iter().copied());
                    i += 1;
                }
            }
        }
    }
    (nodes, sites)
}

/// The parameter of a match as a standalone bigraph: one region per redex
/// site. A target link stays closed only if it is closed and every port lies
/// inside the parameter; other links get an open name.
pub fn parameter(target: &Bigraph, m: &Match) -> Bigraph {
    let mut index = HashMap::new();
    let mut site_index = HashMap::new();
    let mut controls = Vec::new();
    let mut node_parents = Vec::new();
    let mut site_parents = Vec::new();
    for (region, roots) in m.params.iter().enumerate() {
        let (nodes, sites) = subtree_nodes(target, roots);
        for v in nodes {
            index.insert(v, controls.len());
            controls.push(target.control(v).clone());
            node_parents.push(match target.node_parent(v) {
                Parent::Node(p) if index.contains_key(&p) => Parent::Node(index[&p]),
                _ => Parent::Region(region),
            });
        }
        for s in sites {
            site_index.insert(s, site_parents.len());
            site_parents.push(match target.site_parent(s) {
                Parent::Node(p) if index.contains_key(&p) => Parent::Node(index[&p]),
                _ => Parent::Region(region),
            });
        }
    }
    let mut links = Vec::new();
    for (li, link) in target.links().iter().enumerate() {
        let ports: std::collections::BTreeSet<_> = link
            .ports
            .iter()
            .filter_map(|(v, p)| index.get(v).map(|&nv| (nv, *p)))
            .collect();
        if ports.is_empty() {
            continue;
        }
        let inside = link.is_closed() && ports.len() == link.ports.len();
        links.push(Link {
            outer: (!inside).then(|| format!("#{li}")),
            ports,
        });
    }
    Bigraph::from_parts(Parts {
        regions: m.params.len(),
        sites: site_parents.len(),
        controls,
        node_parents,
        site_parents,
        links,
    })
    .expect("parameter of a valid match is a bigraph")
}

/// True iff no negative condition of `rule` occurs in the match's parameter.
pub fn check_conditions(m: &Match, rule: &ReactionRule, target: &Bigraph) -> bool {
    if rule.conditions.is_empty() {
        return true;
    }
    let param = parameter(target, m);
    rule.conditions
        .iter()
        .all(|c| occurrences(&param, &c.pattern).is_empty())
}

fn place_in(root: Parent, new_id: &[usize]) -> Parent {
    match root {
        Parent::Region(r) => Parent::Region(r),
        Parent::Node(p) => Parent::Node(new_id[p]),
    }
}

/// Replaces the occurrence `m` of `rule`'s redex by its reactum.
///
/// Parameters are moved into the reactum sites that use them; a parameter
/// used more than once is copied (links internal to it get fresh links in
/// each copy, other links are shared) and one used by no site is deleted.
/// Result nodes: surviving target nodes in order, then reactum nodes, then
/// copies.
pub fn apply(rule: &ReactionRule, target: &Bigraph, m: &Match) -> Result<Bigraph, RewriteError> {
    let (redex, reactum) = (&rule.redex, &rule.reactum);
    if m.nodes.len() != redex.node_count()
        || m.roots.len() != redex.regions()
        || m.params.len() != redex.sites()
        || m.links.len() != redex.links().len()
        || m.nodes.iter().any(|&w| w >= target.node_count())
    {
        return Err(RewriteError::InvalidMatch(format!(
            "match does not fit rule {} on a {}-node target",
            rule.name,
            target.node_count()
        )));
    }
    let mut uses = vec![0usize; redex.sites()];
    for &s in &rule.inst_map {
        uses[s] += 1;
    }
    let param_parts: Vec<(Vec<usize>, Vec<usize>)> = m.params.iter().map(|p| subtree_nodes(target, p)).collect();
    let mut removed = vec![false; target.node_count()];
    for &w in &m.nodes {
        removed[w] = true;
    }
    for (s, (nodes, sites)) in param_parts.iter().enumerate() {
        if !sites.is_empty() && uses[s] != 1 {
            return Err(RewriteError::SiteInParameter {
                site: s,
                action: if uses[s] == 0 { "discarded" } else { "duplicated" },
            });
        }
        if uses[s] == 0 {
            for &v in nodes {
                removed[v] = true;
            }
        }
    }

    let mut new_id = vec![NONE; target.node_count()];
    let mut controls = Vec::new();
    for v in 0..target.node_count() {
        if !removed[v] {
            new_id[v] = controls.len();
            controls.push(target.control(v).clone());
        }
    }
    let mut node_parents: Vec<Parent> = (0..target.node_count())
        .filter(|&v| !removed[v])
        .map(|v| match target.node_parent(v) {
            Parent::Node(p) if removed[p] => Parent::Region(0),
            p => place_in(p, &new_id),
        })
        .collect();
    let mut site_parents: Vec<Parent> = (0..target.sites())
        .map(|s| place_in(target.site_parent(s), &new_id))
        .collect();

    let base = controls.len();
    let rx_parents = reactum.node_parents();
    for (v, parent) in rx_parents.iter().enumerate() {
        controls.push(reactum.control(v).clone());
        node_parents.push(match *parent {
            Parent::Region(r) => place_in(m.roots[r], &new_id),
            Parent::Node(p) => Parent::Node(base + p),
        });
    }

    let mut links: Vec<Link> = target
        .links()
        .iter()
        .map(|l| Link {
            outer: l.outer.clone(),
            ports: l
                .ports
                .iter()
                .filter(|(v, _)| !removed[*v])
                .map(|&(v, p)| (new_id[v], p))
                .collect(),
        })
        .collect();
    let redex_names: BTreeMap<&str, usize> = redex
        .links()
        .iter()
        .enumerate()
        .filter_map(|(i, l)| l.outer.as_deref().map(|n| (n, i)))
        .collect();
    for link in reactum.links() {
        let ports = link.ports.iter().map(|&(v, p)| (base + v, p));
        let target_link = link
            .outer
            .as_deref()
            .and_then(|n| m.links[redex_names[n]]);
        match target_link {
            Some(tl) => links[tl].ports.extend(ports),
            None => links.push(Link {
                outer: None,
                ports: ports.collect(),
            }),
        }
    }

    let mut first_use = vec![true; redex.sites()];
    for (rs, &s) in rule.inst_map.iter().enumerate() {
        let dest = match reactum.site_parent(rs) {
            Parent::Region(r) => place_in(m.roots[r], &new_id),
            Parent::Node(p) => Parent::Node(base + p),
        };
        if std::mem::replace(&mut first_use[s], false) {
            for place in &m.params[s] {
                match *place {
                    Place::Node(v) => node_parents[new_id[v]] = dest,
                    Place::Site(ts) => site_parents[ts] = dest,
                }
            }
            continue;
        }
        let nodes = &param_parts[s].0;
        let mut copy_id: HashMap<usize, usize> = HashMap::new();
        for &v in nodes {
            copy_id.insert(v, controls.len());
            controls.push(target.control(v).clone());
            node_parents.push(match target.node_parent(v) {
                Parent::Node(p) if copy_id.contains_key(&p) => Parent::Node(copy_id[&p]),
                _ => dest,
            });
        }
        let mut fresh: HashMap<usize, usize> = HashMap::new();
        for (li, link) in target.links().iter().enumerate() {
            let inside = link.is_closed() && link.ports.iter().all(|(v, _)| copy_id.contains_key(v));
            for &(v, p) in &link.ports {
                let Some(&c) = copy_id.get(&v) else { continue };
                let to = if inside {
                    *fresh.entry(li).or_insert_with(|| {
                        links.push(Link::closed());
                        links.len() - 1
                    })
                } else {
                    li
                };
                links[to].ports.insert((c, p));
            }
        }
    }

    let mut parts = Parts {
        regions: target.regions(),
        sites: target.sites(),
        controls,
        node_parents,
        site_parents,
        links,
    };
    parts.drop_empty_edges();
    Ok(Bigraph::from_parts(parts)?)
}

/// Applies the first match (in [`occurrences`] order) that passes the
/// rule's conditions.
pub fn rewrite_first(rule: &ReactionRule, target: &Bigraph) -> Result<Option<Bigraph>, RewriteError> {
    for m in occurrences(target, &rule.redex) {
        if check_conditions(&m, rule, target) {
            return apply(rule, target, &m).map(Some);
        }
    }
    Ok(None)
}

/// All one-step successors of `state`, deduplicated up to isomorphism.
pub fn step(rules: &[ReactionRule], state: &Bigraph) -> Result<Vec<(String, Bigraph)>, RewriteError> {
    let mut out: Vec<(String, Bigraph)> = Vec::new();
    let mut seen: HashMap<u64, Vec<usize>> = HashMap::new();
    for rule in rules {
        for m in occurrences(state, &rule.redex) {
            if !check_conditions(&m, rule, state) {
                continue;
            }
            let next = apply(rule, state, &m)?;
            let key = iso_invariant(&next);
            let bucket = seen.entry(key).or_default();
            if bucket.iter().any(|&i| iso_equal(&out[i].1, &next)) {
                continue;
            }
            bucket.push(out.len());
            out.push((rule.name.clone(), next));
        }
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::bigraph::{atom, elementary_id, ion, merge_prod, nest, ppar, Control};

    fn k(name: &str) -> Control {
        Control::new(name, 1)
    }

    fn room_with_agents() -> Bigraph {
        let agents = merge_prod(&atom(k("Agent"), &["a"]).unwrap(), &atom(k("Agent"), &["b"]).unwrap());
        nest(&ion(k("Room"), &["r"]).unwrap(), &agents).unwrap()
    }

    fn leave() -> ReactionRule {
        let redex = nest(
            &ion(k("Room"), &["x"]).unwrap(),
            &merge_prod(&elementary_id(), &ion(k("Agent"), &["y"]).unwrap()),
        )
        .unwrap();
        let reactum = merge_prod(&ion(k("Room"), &["x"]).unwrap(), &ion(k("Agent"), &["y"]).unwrap());
        ReactionRule::linear("leave", redex, reactum).unwrap()
    }

    #[test]
    fn absent_control_has_no_match() {
        let redex = atom(k("Building"), &["x"]).unwrap();
        assert!(occurrences(&room_with_agents(), &redex).is_empty());
    }

    #[test]
    fn target_matches_itself_once() {
        let t = room_with_agents();
        let ms = occurrences(&t, &t);
        // Two agents can swap, so two node maps describe the same occurrence.
        assert_eq!(ms.len(), 2);
        let single = atom(k("Agent"), &["a"]).unwrap();
        assert_eq!(occurrences(&single, &single).len(), 1);
    }

    #[test]
    fn leave_twice() {
        let t = room_with_agents();
        let ms = occurrences(&t, leave().redex());
        assert_eq!(ms.len(), 2);
        let next = apply(&leave(), &t, &ms[0]).unwrap();
        assert_eq!(next.node_count(), 3);
        assert_eq!(next.child_nodes(Parent::Region(0)).len(), 2);
        assert_eq!(step(&[leave()], &t).unwrap().len(), 2);
    }

    #[test]
    fn rule_validation() {
        let a = atom(k("Agent"), &["y"]).unwrap();
        let b = atom(k("Agent"), &["z"]).unwrap();
        assert!(ReactionRule::linear("names", a.clone(), b).is_err());
        assert!(ReactionRule::new("map", a.clone(), a.clone(), vec![0]).is_err());
        let two = ppar(&a, &a);
        assert!(ReactionRule::linear("regions", a, two).is_err());
    }

    #[test]
    fn identity_rule_is_identity() {
        let t = room_with_agents();
        let r = leave();
        let id = ReactionRule::linear("id", r.redex().clone(), r.redex().clone()).unwrap();
        let out = rewrite_first(&id, &t).unwrap().unwrap();
        assert!(iso_equal(&out, &t));
    }

    #[test]
    fn mismatched_match_is_rejected() {
        let t = room_with_agents();
        let bad = Match {
            nodes: vec![],
            roots: vec![],
            params: vec![],
            links: vec![],
        };
        assert!(matches!(apply(&leave(), &t, &bad), Err(RewriteError::InvalidMatch(_))));
    }
}
