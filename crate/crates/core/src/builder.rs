//! Construction of the two-perspective bigraph of a region, spatial names,
//! combination with other worlds and contexts, and summary statistics.
//!
//! Region 0 of a world holds the ID perspective (one `ID(identifier)` node
//! per entity), region 1 the Physical perspective (boundaries, streets,
//! buildings, junctions and whatever agents are added later).

use std::collections::{BTreeMap, BTreeSet, HashMap};
use std::fmt;

use log::warn;
use rayon::prelude::*;
use thiserror::Error;

use crate::bigraph::{
    atom, elementary_id, identities, ion, merge_prod, nest, one, ppar, Bigraph, BigraphError, Control,
    Link, Parent, Parts,
};
use crate::osm::{RegionExtract, StreetId};
use crate::rules::controls;

pub const ID_REGION: usize = 0;
pub const PHYSICAL_REGION: usize = 1;
/// A top-level Boundary with this identifier is left out of spatial names.
pub const WORLD: &str = "World";

#[derive(Debug, Error)]
pub enum BuildError {
    #[error("no extract for region {0:?}")]
    MissingExtract(String),
    #[error("region hierarchy is cyclic at {0:?}")]
    Cycle(String),
    #[error("node {0} is not in the bigraph")]
    NoSuchNode(usize),
    #[error("node {0} has no identifier")]
    Anonymous(usize),
    #[error(transparent)]
    Bigraph(#[from] BigraphError),
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
#[error("segment {segment:?} is ambiguous: nodes {candidates:?}")]
pub struct Ambiguous {
    pub segment: String,
    pub candidates: Vec<usize>,
}

/// Region tree with an extract per region.
#[derive(Debug, Clone, Default)]
pub struct RegionHierarchy {
    pub root: String,
    pub children: BTreeMap<String, Vec<String>>,
    pub extracts: BTreeMap<String, RegionExtract>,
}

impl RegionHierarchy {
    pub fn children_of(&self, region: &str) -> &[String] {
        self.children.get(region).map(Vec::as_slice).unwrap_or_default()
    }
}

/// Object-first list of identifiers, rendered joined by ".".
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct SpatialName {
    pub segments: Vec<String>,
}

impl SpatialName {
    pub fn parse(s: &str) -> Self {
        Self {
            segments: s.split('.').map(str::to_string).collect(),
        }
    }
}

impl fmt::Display for SpatialName {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.segments.join("."))
    }
}

/// A world bigraph plus its spatial-name index.
#[derive(Debug, Clone, PartialEq)]
pub struct WorldBigraph {
    pub bigraph: Bigraph,
    pub names: BTreeMap<String, usize>,
}

impl WorldBigraph {
    /// Wraps `bigraph` and builds its name index. Names with a segment
    /// containing "." and names shared by several nodes are left out.
    pub fn new(bigraph: Bigraph) -> Self {
        let idents = identifiers(&bigraph);
        let mut names: BTreeMap<String, usize> = BTreeMap::new();
        let mut clashes = BTreeSet::new();
        for v in 0..bigraph.node_count() {
            if !is_named_kind(bigraph.control(v)) || !in_physical(&bigraph, v) {
                continue;
            }
            let Ok(name) = spatial_name_with(&bigraph, &idents, v) else {
                continue;
            };
            if name.segments.iter().any(|s| s.contains('.')) {
                warn!("spatial name of node {v} has a segment containing '.'; not indexed: {name}");
                continue;
            }
            let key = name.to_string();
            if names.insert(key.clone(), v).is_some() {
                clashes.insert(key);
            }
        }
        for key in clashes {
            warn!("spatial name {key:?} names several nodes; not indexed");
            names.remove(&key);
        }
        Self { bigraph, names }
    }
}

fn is_named_kind(c: &Control) -> bool {
    matches!(c.name.as_str(), "Boundary" | "Street" | "Building" | "Agent")
}

fn in_physical(b: &Bigraph, mut v: usize) -> bool {
    loop {
        match b.node_parent(v) {
            Parent::Region(r) => return r == PHYSICAL_REGION,
            Parent::Node(p) => v = p,
        }
    }
}

/// Identifier of every node: the parameter of an ID node sharing its link.
pub fn identifiers(b: &Bigraph) -> Vec<Option<String>> {
    let mut out = vec![None; b.node_count()];
    for link in b.links() {
        let ids: Vec<&str> = link
            .ports
            .iter()
            .filter(|(v, _)| b.control(*v).name == "ID")
            .filter_map(|(v, _)| b.control(*v).param.as_deref())
            .collect();
        if let [ident] = ids.as_slice() {
            for &(v, _) in &link.ports {
                if b.control(v).name != "ID" {
                    out[v] = Some(ident.to_string());
                }
            }
        }
    }
    out
}

fn spatial_name_with(b: &Bigraph, idents: &[Option<String>], node: usize) -> Result<SpatialName, BuildError> {
    if node >= b.node_count() {
        return Err(BuildError::NoSuchNode(node));
    }
    let mut segments = Vec::new();
    let mut v = node;
    loop {
        let ident = idents[v].clone().ok_or(BuildError::Anonymous(v))?;
        match b.node_parent(v) {
            Parent::Node(p) => {
                segments.push(ident);
                v = p;
            }
            Parent::Region(r) => {
                if r != PHYSICAL_REGION {
                    return Err(BuildError::Anonymous(node));
                }
                let is_world = ident == WORLD && b.control(v).name == "Boundary";
                if !is_world || v == node {
                    segments.push(ident);
                }
                break;
            }
        }
    }
    Ok(SpatialName { segments })
}

/// Identifiers from `node` up to the top of the Physical perspective.
pub fn spatial_name(wb: &WorldBigraph, node: usize) -> Result<SpatialName, BuildError> {
    spatial_name_with(&wb.bigraph, &identifiers(&wb.bigraph), node)
}

/// Walks the Physical perspective from the top, matching segments
/// root-first. `Ok(None)` when some segment matches nothing.
pub fn resolve(wb: &WorldBigraph, name: &SpatialName) -> Result<Option<usize>, Ambiguous> {
    let b = &wb.bigraph;
    let idents = identifiers(b);
    let mut level: Vec<usize> = Vec::new();
    for &v in b.child_nodes(Parent::Region(PHYSICAL_REGION)) {
        if idents[v].as_deref() == Some(WORLD) && b.control(v).name == "Boundary" {
            level.extend(b.child_nodes(Parent::Node(v)).iter().copied());
        }
        level.push(v);
    }
    let mut found = None;
    for seg in name.segments.iter().rev() {
        let hits: Vec<usize> = level
            .iter()
            .copied()
            .filter(|&v| idents[v].as_deref() == Some(seg.as_str()))
            .collect();
        match hits.as_slice() {
            [] => return Ok(None),
            [v] => {
                found = Some(*v);
                level = b.child_nodes(Parent::Node(*v)).iter().copied().collect();
            }
            _ => {
                return Err(Ambiguous {
                    segment: seg.clone(),
                    candidates: hits,
                })
            }
        }
    }
    Ok(found)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Slot {
    Id,
    Physical,
    Node(usize),
}

/// Flat assembly area for one region; all controls here have arity 1.
#[derive(Debug, Default)]
struct Arena {
    controls: Vec<Control>,
    parents: Vec<Slot>,
    links: Vec<(Option<String>, Vec<usize>)>,
    open: HashMap<String, usize>,
}

impl Arena {
    fn node(&mut self, control: Control, parent: Slot) -> usize {
        self.controls.push(control);
        self.parents.push(parent);
        self.controls.len() - 1
    }

    /// An entity node plus its ID node, joined by a closed link.
    fn entity(&mut self, control: Control, ident: &str, parent: Slot) -> usize {
        let v = self.node(control, parent);
        let id = self.node(controls::id(ident), Slot::Id);
        self.links.push((None, vec![v, id]));
        v
    }

    fn junction(&mut self, osm_node: i64, street: usize) {
        let v = self.node(controls::junction(), Slot::Node(street));
        let name = junction_name(osm_node);
        match self.open.get(&name) {
            Some(&l) => self.links[l].1.push(v),
            None => {
                self.open.insert(name.clone(), self.links.len());
                self.links.push((Some(name), vec![v]));
            }
        }
    }

    /// Appends `child`, hanging its Physical top nodes under `under`.
    fn absorb(&mut self, child: Arena, under: usize) {
        let off = self.controls.len();
        self.controls.extend(child.controls);
        self.parents.extend(child.parents.into_iter().map(|p| match p {
            Slot::Id => Slot::Id,
            Slot::Physical => Slot::Node(under),
            Slot::Node(v) => Slot::Node(v + off),
        }));
        for (name, ports) in child.links {
            let ports = ports.into_iter().map(|v| v + off);
            match name.as_ref().and_then(|n| self.open.get(n)) {
                Some(&l) => self.links[l].1.extend(ports),
                None => {
                    if let Some(n) = &name {
                        self.open.insert(n.clone(), self.links.len());
                    }
                    self.links.push((name, ports.collect()));
                }
            }
        }
    }

    /// Closes every junction link whose OSM node is not in `keep`.
    fn close_except(&mut self, keep: &BTreeSet<i64>) {
        let keep: BTreeSet<String> = keep.iter().map(|&n| junction_name(n)).collect();
        let mut open = HashMap::new();
        for (i, (name, _)) in self.links.iter_mut().enumerate() {
            if let Some(n) = name {
                if keep.contains(n) {
                    open.insert(n.clone(), i);
                } else {
                    *name = None;
                }
            }
        }
        self.open = open;
    }

    fn into_bigraph(self) -> Bigraph {
        let node_parents = self
            .parents
            .iter()
            .map(|p| match *p {
                Slot::Id => Parent::Region(ID_REGION),
                Slot::Physical => Parent::Region(PHYSICAL_REGION),
                Slot::Node(v) => Parent::Node(v),
            })
            .collect();
        let links = self
            .links
            .into_iter()
            .map(|(outer, ports)| Link {
                outer,
                ports: ports.into_iter().map(|v| (v, 0)).collect(),
            })
            .collect();
        Bigraph::from_parts(Parts {
            regions: 2,
            sites: 0,
            controls: self.controls,
            node_parents,
            site_parents: Vec::new(),
            links,
        })
        .expect("assembled world is a bigraph")
    }
}

pub fn junction_name(osm_node: i64) -> String {
    format!("node {osm_node}")
}

/// The part of `ex` not covered by any child extract. Child crossing nodes
/// stay junction candidates so parent streets can join child streets there.
pub fn residual_extract(ex: &RegionExtract, children: &[&RegionExtract]) -> RegionExtract {
    let child_ways: BTreeSet<i64> = children
        .iter()
        .flat_map(|c| c.streets.values().flatten().copied())
        .collect();
    let child_buildings: BTreeSet<_> = children
        .iter()
        .flat_map(|c| c.buildings.iter().map(|b| (b.kind, b.id)))
        .collect();
    let mut out = RegionExtract::new(ex.boundary.clone());
    for (sid, ways) in &ex.streets {
        let rest: BTreeSet<i64> = ways.difference(&child_ways).copied().collect();
        if !rest.is_empty() {
            for w in &rest {
                out.way_nodes.insert(*w, ex.way_nodes.get(w).cloned().unwrap_or_default());
            }
            out.streets.insert(sid.clone(), rest);
        }
    }
    out.buildings = ex
        .buildings
        .iter()
        .filter(|b| !child_buildings.contains(&(b.kind, b.id)))
        .cloned()
        .collect();
    out.crossing_nodes = ex.crossing_nodes.clone();
    let mut candidates = ex.crossing_nodes.clone();
    for c in children {
        candidates.extend(c.crossing_nodes.iter().copied());
    }
    out.compute_junctions(&candidates);
    out
}

/// Streets first (by StreetId), then buildings grouped by street name.
fn assemble(arena: &mut Arena, ex: &RegionExtract, boundary: usize) {
    let mut junctions_of: BTreeMap<&StreetId, Vec<i64>> = BTreeMap::new();
    for (&n, streets) in &ex.junctions {
        for s in streets {
            junctions_of.entry(s).or_default().push(n);
        }
    }
    let mut street_nodes: BTreeMap<String, usize> = BTreeMap::new();
    for sid in ex.streets.keys() {
        let label = sid.to_string();
        let v = arena.entity(controls::street(), &label, Slot::Node(boundary));
        street_nodes.entry(label).or_insert(v);
        for &n in junctions_of.get(sid).map(Vec::as_slice).unwrap_or_default() {
            arena.junction(n, v);
        }
    }
    let mut buildings = ex.buildings.clone();
    buildings.sort();
    for b in &buildings {
        let parent = b
            .street
            .as_ref()
            .and_then(|s| street_nodes.get(s))
            .copied()
            .unwrap_or(boundary);
        arena.entity(controls::building(), &b.name, Slot::Node(parent));
    }
}

fn build_arena(h: &RegionHierarchy, region: &str, path: &[String]) -> Result<Arena, BuildError> {
    if path.iter().any(|p| p == region) {
        return Err(BuildError::Cycle(region.to_string()));
    }
    let ex = h
        .extracts
        .get(region)
        .ok_or_else(|| BuildError::MissingExtract(region.to_string()))?;
    let mut sub_path = path.to_vec();
    sub_path.push(region.to_string());
    let kids = h.children_of(region);
    let child_arenas: Vec<Arena> = kids
        .par_iter()
        .map(|c| build_arena(h, c, &sub_path))
        .collect::<Result<_, _>>()?;
    let child_extracts: Vec<&RegionExtract> = kids
        .iter()
        .map(|c| h.extracts.get(c).ok_or_else(|| BuildError::MissingExtract(c.clone())))
        .collect::<Result<_, _>>()?;

    let mut arena = Arena::default();
    let boundary = arena.entity(controls::boundary(), region, Slot::Physical);
    for child in child_arenas {
        arena.absorb(child, boundary);
    }
    if child_extracts.is_empty() {
        assemble(&mut arena, ex, boundary);
    } else {
        assemble(&mut arena, &residual_extract(ex, &child_extracts), boundary);
    }
    arena.close_except(&ex.crossing_nodes);
    Ok(arena)
}

/// Builds the world bigraph of `h.root`, children first (in parallel).
pub fn build(h: &RegionHierarchy) -> Result<WorldBigraph, BuildError> {
    let arena = build_arena(h, &h.root, &[])?;
    Ok(WorldBigraph::new(arena.into_bigraph()))
}

/// The same construction written with ions, nesting and products only.
/// Slow; used to check [`build`] on small inputs.
pub fn build_algebraic(h: &RegionHierarchy) -> Result<Bigraph, BuildError> {
    build_algebraic_region(h, &h.root, &[])
}

fn regroup() -> Bigraph {
    // 4 sites (ID, Physical, ID, Physical) → 2 regions.
    Bigraph::from_parts(Parts {
        regions: 2,
        sites: 4,
        site_parents: vec![
            Parent::Region(0),
            Parent::Region(1),
            Parent::Region(0),
            Parent::Region(1),
        ],
        ..Parts::default()
    })
    .expect("regrouping placing")
}

fn fragment_merge(a: &Bigraph, b: &Bigraph) -> Result<Bigraph, BigraphError> {
    nest(&regroup(), &ppar(a, b))
}

fn empty_fragment() -> Bigraph {
    ppar(&one(), &one())
}

/// `/l (ID(ident)_l | F.ID || K_l.(F.Physical))`.
fn entity_fragment(control: Control, ident: &str, key: &str, inner: &Bigraph) -> Result<Bigraph, BigraphError> {
    let l = format!("id:{key}");
    let id_side = merge_prod(&atom(controls::id(ident), &[&l])?, &elementary_id());
    let wrap = ppar(&id_side, &ion(control, &[&l])?);
    Ok(nest(&wrap, inner)?.close(&l))
}

fn build_algebraic_region(h: &RegionHierarchy, region: &str, path: &[String]) -> Result<Bigraph, BuildError> {
    if path.iter().any(|p| p == region) {
        return Err(BuildError::Cycle(region.to_string()));
    }
    let ex = h
        .extracts
        .get(region)
        .ok_or_else(|| BuildError::MissingExtract(region.to_string()))?;
    let mut sub_path = path.to_vec();
    sub_path.push(region.to_string());
    let key = sub_path.join("/");
    let mut content = empty_fragment();
    let mut child_extracts = Vec::new();
    for c in h.children_of(region) {
        content = fragment_merge(&content, &build_algebraic_region(h, c, &sub_path)?)?;
        child_extracts.push(h.extracts.get(c).ok_or_else(|| BuildError::MissingExtract(c.clone()))?);
    }
    let rest = if child_extracts.is_empty() {
        ex.clone()
    } else {
        residual_extract(ex, &child_extracts)
    };
    let names = rest.street_names();
    for sid in rest.streets.keys() {
        let mut inside = empty_fragment();
        for (&n, streets) in &rest.junctions {
            if streets.contains(sid) {
                let j = ppar(&one(), &atom(controls::junction(), &[&junction_name(n)])?);
                inside = fragment_merge(&inside, &j)?;
            }
        }
        for b in rest.buildings.iter().filter(|b| b.street.as_deref() == Some(&sid.to_string())) {
            let bk = format!("{key}/building/{:?}{}", b.kind, b.id);
            inside = fragment_merge(&inside, &entity_fragment(controls::building(), &b.name, &bk, &empty_fragment())?)?;
        }
        let sk = format!("{key}/street/{sid:?}");
        content = fragment_merge(&content, &entity_fragment(controls::street(), &sid.to_string(), &sk, &inside)?)?;
    }
    for b in &rest.buildings {
        if b.street.as_ref().is_some_and(|s| names.contains(s)) {
            continue;
        }
        let bk = format!("{key}/building/{:?}{}", b.kind, b.id);
        content = fragment_merge(&content, &entity_fragment(controls::building(), &b.name, &bk, &empty_fragment())?)?;
    }
    let mut out = entity_fragment(controls::boundary(), region, &key, &content)?;
    let open: Vec<String> = out.outer_names().into_iter().map(str::to_string).collect();
    let keep: BTreeSet<String> = ex.crossing_nodes.iter().map(|&n| junction_name(n)).collect();
    for name in open {
        if !keep.contains(&name) {
            out = out.close(&name);
        }
    }
    Ok(out)
}

fn regroup_world(b: &Bigraph) -> Result<Bigraph, BigraphError> {
    nest(&regroup(), b)
}

/// `a || b` with the two ID regions and the two Physical regions merged, so
/// the result is again a two-region world. Equal outer names fuse.
pub fn combine_parallel(a: &WorldBigraph, b: &WorldBigraph) -> Result<WorldBigraph, BuildError> {
    let both = ppar(&a.bigraph, &b.bigraph);
    Ok(WorldBigraph::new(regroup_world(&both)?))
}

/// `context.φ.(id || … || id || child)`: `child`'s two regions take the last
/// two argument positions, the identities fill the rest.
pub fn nest_into_context(context: &Bigraph, phi: &Bigraph, child: &WorldBigraph) -> Result<WorldBigraph, BuildError> {
    let k = phi.sites().checked_sub(child.bigraph.regions()).ok_or_else(|| {
        BigraphError::Interface(format!(
            "placing has {} sites, child has {} regions",
            phi.sites(),
            child.bigraph.regions()
        ))
    })?;
    let arg = ppar(&identities(k), &child.bigraph);
    let inner = nest(phi, &arg)?;
    Ok(WorldBigraph::new(nest(context, &inner)?))
}

/// Counts reported for a world.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub struct Stats {
    pub nodes: usize,
    pub edges: usize,
    pub outer_names: usize,
    pub subdivisions: usize,
    pub streets: usize,
    pub buildings: usize,
    pub junctions: usize,
}

impl Stats {
    pub const HEADER: &'static str = "nodes\tedges\touter_names\tsubdivisions\tstreets\tbuildings\tjunctions";

    pub fn tsv_row(&self) -> String {
        format!(
            "{}\t{}\t{}\t{}\t{}\t{}\t{}",
            self.nodes, self.edges, self.outer_names, self.subdivisions, self.streets, self.buildings, self.junctions
        )
    }
}

fn count_control(b: &Bigraph, name: &str) -> usize {
    b.controls().iter().filter(|c| c.name == name).count()
}

pub fn stats(wb: &WorldBigraph) -> Stats {
    let b = &wb.bigraph;
    Stats {
        nodes: b.node_count(),
        edges: b.closed_link_count(),
        outer_names: b.links().len() - b.closed_link_count(),
        subdivisions: count_control(b, "Boundary").saturating_sub(1),
        streets: count_control(b, "Street"),
        buildings: count_control(b, "Building"),
        junctions: count_control(b, "Junction"),
    }
}
