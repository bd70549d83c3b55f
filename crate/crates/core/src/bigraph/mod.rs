//! Bigraphs: a place graph (forest of regions, nodes and sites) and a link
//! graph (hyperedges over node ports), plus the composition algebra.
//!
//! Regions and sites are identified by index. Nodes carry integer ids that
//! are renumbered on composition, left operand first. Inner names are not
//! supported, so an interface is a site count on the inside and a region
//! count plus a set of outer names on the outside.

mod iso;

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::sparse::{SparseBoolMatrix, SparseError};

pub use iso::{iso_equal, iso_invariant};

/// `(node id, port index)`.
pub type Port = (usize, usize);

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum BigraphError {
    #[error("control {control} has arity {arity} but {given} names were given")]
    Arity {
        control: String,
        arity: usize,
        given: usize,
    },
    #[error("outer name {0:?} given twice")]
    DuplicateName(String),
    #[error("interface mismatch: {0}")]
    Interface(String),
    #[error("not a permutation: {0:?}")]
    Placing(Vec<usize>),
    #[error("invalid bigraph: {0}")]
    Invalid(String),
    #[error(transparent)]
    Sparse(#[from] SparseError),
}

/// Node type: a name, a fixed number of ports and an optional string
/// parameter. Equality covers all three, so `ID("Essex")` differs from
/// `ID("Cambridge")`.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct Control {
    pub name: String,
    pub arity: usize,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub param: Option<String>,
}

impl Control {
    pub fn new(name: impl Into<String>, arity: usize) -> Self {
        Self {
            name: name.into(),
            arity,
            param: None,
        }
    }

    pub fn with_param(name: impl Into<String>, arity: usize, param: impl Into<String>) -> Self {
        Self {
            name: name.into(),
            arity,
            param: Some(param.into()),
        }
    }
}

impl fmt::Display for Control {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match &self.param {
            Some(p) => write!(f, "{}({:?})", self.name, p),
            None => f.write_str(&self.name),
        }
    }
}

/// Where a node or site sits.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum Parent {
    Region(usize),
    Node(usize),
}

/// A child in the place graph.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum Place {
    Node(usize),
    Site(usize),
}

/// A hyperedge. `outer: None` is a closed link (an edge) and has at least
/// one port; an open link may be idle.
#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct Link {
    pub outer: Option<String>,
    pub ports: BTreeSet<Port>,
}

impl Link {
    pub fn open(name: impl Into<String>) -> Self {
        Self {
            outer: Some(name.into()),
            ports: BTreeSet::new(),
        }
    }

    pub fn closed() -> Self {
        Self::default()
    }

    pub fn is_closed(&self) -> bool {
        self.outer.is_none()
    }
}

/// The forest part of a bigraph, stored as four sparse relations.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PlaceGraph {
    pub regions: usize,
    pub sites: usize,
    pub nodes: usize,
    pub rn: SparseBoolMatrix,
    pub rs: SparseBoolMatrix,
    pub nn: SparseBoolMatrix,
    pub ns: SparseBoolMatrix,
}

impl PlaceGraph {
    /// Total stored matrix entries; one per parented node or site.
    pub fn entries(&self) -> usize {
        self.rn.entries() + self.rs.entries() + self.nn.entries() + self.ns.entries()
    }
}

/// Flat description of a bigraph, used to build and take apart values.
#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct Parts {
    pub regions: usize,
    pub sites: usize,
    pub controls: Vec<Control>,
    pub node_parents: Vec<Parent>,
    pub site_parents: Vec<Parent>,
    pub links: Vec<Link>,
}

impl Parts {
    /// Removes closed links without ports.
    pub fn drop_empty_edges(&mut self) {
        self.links.retain(|l| !(l.is_closed() && l.ports.is_empty()));
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Bigraph {
    place: PlaceGraph,
    links: Vec<Link>,
    controls: Vec<Control>,
}

impl Bigraph {
    /// Validates `parts` and builds the sparse place graph.
    pub fn from_parts(parts: Parts) -> Result<Self, BigraphError> {
        let Parts {
            regions,
            sites,
            controls,
            node_parents,
            site_parents,
            links,
        } = parts;
        let n = controls.len();
        if node_parents.len() != n {
            return Err(BigraphError::Invalid(format!(
                "{} controls but {} node parents",
                n,
                node_parents.len()
            )));
        }
        if site_parents.len() != sites {
            return Err(BigraphError::Invalid(format!(
                "{} sites but {} site parents",
                sites,
                site_parents.len()
            )));
        }
        let check_parent = |p: Parent| match p {
            Parent::Region(r) if r >= regions => {
                Err(BigraphError::Invalid(format!("region {r} out of range")))
            }
            Parent::Node(v) if v >= n => Err(BigraphError::Invalid(format!("node {v} out of range"))),
            _ => Ok(()),
        };
        let mut place = PlaceGraph {
            regions,
            sites,
            nodes: n,
            rn: SparseBoolMatrix::make(regions, n),
            rs: SparseBoolMatrix::make(regions, sites),
            nn: SparseBoolMatrix::make(n, n),
            ns: SparseBoolMatrix::make(n, sites),
        };
        for (j, &p) in node_parents.iter().enumerate() {
            check_parent(p)?;
            match p {
                Parent::Region(r) => place.rn.add(r, j)?,
                Parent::Node(v) => place.nn.add(v, j)?,
            };
        }
        for (s, &p) in site_parents.iter().enumerate() {
            check_parent(p)?;
            match p {
                Parent::Region(r) => place.rs.add(r, s)?,
                Parent::Node(v) => place.ns.add(v, s)?,
            };
        }
        check_acyclic(&node_parents)?;
        check_links(&controls, &links)?;
        Ok(Self {
            place,
            links,
            controls,
        })
    }

    /// Inverse of [`Self::from_parts`].
    pub fn to_parts(&self) -> Parts {
        Parts {
            regions: self.place.regions,
            sites: self.place.sites,
            controls: self.controls.clone(),
            node_parents: self.node_parents(),
            site_parents: (0..self.place.sites).map(|s| self.site_parent(s)).collect(),
            links: self.links.clone(),
        }
    }

    pub fn place(&self) -> &PlaceGraph {
        &self.place
    }

    pub fn links(&self) -> &[Link] {
        &self.links
    }

    pub fn controls(&self) -> &[Control] {
        &self.controls
    }

    pub fn control(&self, node: usize) -> &Control {
        &self.controls[node]
    }

    pub fn regions(&self) -> usize {
        self.place.regions
    }

    pub fn sites(&self) -> usize {
        self.place.sites
    }

    pub fn node_count(&self) -> usize {
        self.controls.len()
    }

    pub fn node_parent(&self, node: usize) -> Parent {
        match self.place.rn.col(node).first() {
            Some(&r) => Parent::Region(r),
            None => Parent::Node(
                *self
                    .place
                    .nn
                    .col(node)
                    .first()
                    .expect("every node has a parent"),
            ),
        }
    }

    pub fn site_parent(&self, site: usize) -> Parent {
        match self.place.rs.col(site).first() {
            Some(&r) => Parent::Region(r),
            None => Parent::Node(
                *self
                    .place
                    .ns
                    .col(site)
                    .first()
                    .expect("every site has a parent"),
            ),
        }
    }

    pub fn node_parents(&self) -> Vec<Parent> {
        (0..self.node_count()).map(|v| self.node_parent(v)).collect()
    }

    /// Node children of a region or node, ascending.
    pub fn child_nodes(&self, parent: Parent) -> &BTreeSet<usize> {
        match parent {
            Parent::Region(r) => self.place.rn.row(r),
            Parent::Node(v) => self.place.nn.row(v),
        }
    }

    /// Site children of a region or node, ascending.
    pub fn child_sites(&self, parent: Parent) -> &BTreeSet<usize> {
        match parent {
            Parent::Region(r) => self.place.rs.row(r),
            Parent::Node(v) => self.place.ns.row(v),
        }
    }

    /// All children, nodes first.
    pub fn children(&self, parent: Parent) -> Vec<Place> {
        self.child_nodes(parent)
            .iter()
            .map(|&v| Place::Node(v))
            .chain(self.child_sites(parent).iter().map(|&s| Place::Site(s)))
            .collect()
    }

    pub fn child_count(&self, parent: Parent) -> usize {
        self.child_nodes(parent).len() + self.child_sites(parent).len()
    }

    /// For each node, the link index of each of its ports.
    pub fn port_links(&self) -> Vec<Vec<usize>> {
        let mut out: Vec<Vec<usize>> = self
            .controls
            .iter()
            .map(|c| vec![usize::MAX; c.arity])
            .collect();
        for (li, link) in self.links.iter().enumerate() {
            for &(v, p) in &link.ports {
                out[v][p] = li;
            }
        }
        out
    }

    pub fn outer_names(&self) -> BTreeSet<&str> {
        self.links.iter().filter_map(|l| l.outer.as_deref()).collect()
    }

    /// Index of the link carrying outer name `name`.
    pub fn link_by_name(&self, name: &str) -> Option<usize> {
        self.links
            .iter()
            .position(|l| l.outer.as_deref() == Some(name))
    }

    pub fn closed_link_count(&self) -> usize {
        self.links.iter().filter(|l| l.is_closed()).count()
    }

    /// Nodes in breadth-first order from the regions, parents before children.
    pub fn bfs_order(&self) -> Vec<usize> {
        let mut order = Vec::with_capacity(self.node_count());
        for r in 0..self.regions() {
            order.extend(self.child_nodes(Parent::Region(r)).iter().copied());
        }
        let mut i = 0;
        while i < order.len() {
            let v = order[i];
            order.extend(self.child_nodes(Parent::Node(v)).iter().copied());
            i += 1;
        }
        order
    }

    /// Closes outer name `name`. Absent names leave the bigraph unchanged;
    /// an idle name simply disappears.
    pub fn close(&self, name: &str) -> Bigraph {
        let Some(i) = self.link_by_name(name) else {
            return self.clone();
        };
        let mut out = self.clone();
        if out.links[i].ports.is_empty() {
            out.links.remove(i);
        } else {
            out.links[i].outer = None;
        }
        out
    }
}

fn check_acyclic(parents: &[Parent]) -> Result<(), BigraphError> {
    // 0 = unseen, 1 = on the current path, 2 = reaches a region
    let mut state = vec![0u8; parents.len()];
    let mut path = Vec::new();
    for start in 0..parents.len() {
        let mut v = start;
        while state[v] == 0 {
            state[v] = 1;
            path.push(v);
            match parents[v] {
                Parent::Region(_) => break,
                Parent::Node(p) => v = p,
            }
        }
        if state[v] == 1 && matches!(parents[v], Parent::Node(_)) {
            return Err(BigraphError::Invalid(format!("place graph has a cycle through node {v}")));
        }
        for u in path.drain(..) {
            state[u] = 2;
        }
    }
    Ok(())
}

fn check_links(controls: &[Control], links: &[Link]) -> Result<(), BigraphError> {
    let mut seen: Vec<Vec<bool>> = controls.iter().map(|c| vec![false; c.arity]).collect();
    let mut names = BTreeSet::new();
    for link in links {
        match &link.outer {
            Some(name) => {
                if !names.insert(name.as_str()) {
                    return Err(BigraphError::DuplicateName(name.clone()));
                }
            }
            None if link.ports.is_empty() => {
                return Err(BigraphError::Invalid("closed link without ports".into()));
            }
            None => {}
        }
        for &(v, p) in &link.ports {
            let slot = seen
                .get_mut(v)
                .and_then(|ports| ports.get_mut(p))
                .ok_or_else(|| BigraphError::Invalid(format!("port ({v}, {p}) does not exist")))?;
            if *slot {
                return Err(BigraphError::Invalid(format!("port ({v}, {p}) linked twice")));
            }
            *slot = true;
        }
    }
    for (v, ports) in seen.iter().enumerate() {
        if let Some(p) = ports.iter().position(|b| !b) {
            return Err(BigraphError::Invalid(format!("port ({v}, {p}) is not linked")));
        }
    }
    Ok(())
}

fn shift(p: Parent, regions: &dyn Fn(usize) -> Parent, offset: usize) -> Parent {
    match p {
        Parent::Region(r) => regions(r),
        Parent::Node(v) => Parent::Node(v + offset),
    }
}

/// Appends `extra` links (ports shifted by `offset`) to `links`, fusing open
/// links that share an outer name.
fn merge_links(links: &mut Vec<Link>, extra: &[Link], offset: usize) {
    let mut by_name: BTreeMap<String, usize> = links
        .iter()
        .enumerate()
        .filter_map(|(i, l)| l.outer.clone().map(|n| (n, i)))
        .collect();
    for link in extra {
        let ports = link.ports.iter().map(|&(v, p)| (v + offset, p));
        match link.outer.as_ref().and_then(|n| by_name.get(n)) {
            Some(&i) => links[i].ports.extend(ports),
            None => {
                if let Some(n) = &link.outer {
                    by_name.insert(n.clone(), links.len());
                }
                links.push(Link {
                    outer: link.outer.clone(),
                    ports: ports.collect(),
                });
            }
        }
    }
}

fn build(parts: Parts) -> Bigraph {
    Bigraph::from_parts(parts).expect("algebra preserves bigraph invariants")
}

/// One region holding one node holding one site; port `i` is linked to
/// `names[i]`.
pub fn ion(control: Control, names: &[&str]) -> Result<Bigraph, BigraphError> {
    if names.len() != control.arity {
        return Err(BigraphError::Arity {
            control: control.to_string(),
            arity: control.arity,
            given: names.len(),
        });
    }
    let mut links = Vec::with_capacity(names.len());
    for (p, &name) in names.iter().enumerate() {
        if links.iter().any(|l: &Link| l.outer.as_deref() == Some(name)) {
            return Err(BigraphError::DuplicateName(name.to_string()));
        }
        let mut l = Link::open(name);
        l.ports.insert((0, p));
        links.push(l);
    }
    Ok(build(Parts {
        regions: 1,
        sites: 1,
        controls: vec![control],
        node_parents: vec![Parent::Region(0)],
        site_parents: vec![Parent::Node(0)],
        links,
    }))
}

/// An ion with no site: `K_x.1`.
pub fn atom(control: Control, names: &[&str]) -> Result<Bigraph, BigraphError> {
    nest(&ion(control, names)?, &one())
}

/// One region holding one site.
pub fn elementary_id() -> Bigraph {
    placing(&[0]).expect("identity permutation")
}

/// One empty region.
pub fn one() -> Bigraph {
    build(Parts {
        regions: 1,
        ..Parts::default()
    })
}

/// One region holding two sites.
pub fn join() -> Bigraph {
    build(Parts {
        regions: 1,
        sites: 2,
        site_parents: vec![Parent::Region(0), Parent::Region(0)],
        ..Parts::default()
    })
}

/// Two regions swapping two sites.
pub fn symmetry() -> Bigraph {
    placing(&[1, 0]).expect("valid permutation")
}

/// `n` regions and `n` sites where region `i` holds site `perm[i]`.
pub fn placing(perm: &[usize]) -> Result<Bigraph, BigraphError> {
    let n = perm.len();
    let mut seen = vec![false; n];
    for &p in perm {
        if p >= n || std::mem::replace(&mut seen[p], true) {
            return Err(BigraphError::Placing(perm.to_vec()));
        }
    }
    let mut site_parents = vec![Parent::Region(0); n];
    for (i, &p) in perm.iter().enumerate() {
        site_parents[p] = Parent::Region(i);
    }
    Ok(build(Parts {
        regions: n,
        sites: n,
        site_parents,
        ..Parts::default()
    }))
}

/// `n` parallel identities.
pub fn identities(n: usize) -> Bigraph {
    placing(&(0..n).collect::<Vec<_>>()).expect("identity permutation")
}

/// Nesting `g.f`: root `i` of `f` is plugged into site `i` of `g`; outer
/// names of both sides are kept and equal names fuse.
pub fn nest(g: &Bigraph, f: &Bigraph) -> Result<Bigraph, BigraphError> {
    if f.regions() != g.sites() {
        return Err(BigraphError::Interface(format!(
            "inner bigraph has {} regions but outer bigraph has {} sites",
            f.regions(),
            g.sites()
        )));
    }
    let gp = g.to_parts();
    let fp = f.to_parts();
    let off = gp.controls.len();
    let hole = |r: usize| gp.site_parents[r];
    let mut node_parents = gp.node_parents.clone();
    node_parents.extend(fp.node_parents.iter().map(|&p| shift(p, &hole, off)));
    let site_parents = fp.site_parents.iter().map(|&p| shift(p, &hole, off)).collect();
    let mut controls = gp.controls;
    controls.extend(fp.controls);
    let mut links = gp.links;
    merge_links(&mut links, &fp.links, off);
    Ok(build(Parts {
        regions: gp.regions,
        sites: fp.sites,
        controls,
        node_parents,
        site_parents,
        links,
    }))
}

/// Parallel product `g || f`: regions and sites side by side, `g` first;
/// equal outer names fuse.
pub fn ppar(g: &Bigraph, f: &Bigraph) -> Bigraph {
    let gp = g.to_parts();
    let fp = f.to_parts();
    let off = gp.controls.len();
    let (rg, sg) = (gp.regions, gp.sites);
    let region = |r: usize| Parent::Region(r + rg);
    let mut node_parents = gp.node_parents;
    node_parents.extend(fp.node_parents.iter().map(|&p| shift(p, &region, off)));
    let mut site_parents = gp.site_parents;
    site_parents.extend(fp.site_parents.iter().map(|&p| shift(p, &region, off)));
    let mut controls = gp.controls;
    controls.extend(fp.controls);
    let mut links = gp.links;
    merge_links(&mut links, &fp.links, off);
    build(Parts {
        regions: rg + fp.regions,
        sites: sg + fp.sites,
        controls,
        node_parents,
        site_parents,
        links,
    })
}

/// Parallel product of a sequence; `one`-free, so the empty product has no
/// regions.
pub fn ppar_all<'a>(items: impl IntoIterator<Item = &'a Bigraph>) -> Bigraph {
    items
        .into_iter()
        .fold(build(Parts::default()), |acc, b| ppar(&acc, b))
}

/// All regions of `b` merged into a single region.
pub fn merge_regions(b: &Bigraph) -> Bigraph {
    let mut p = b.to_parts();
    let to_zero = |x: &mut Parent| {
        if let Parent::Region(_) = x {
            *x = Parent::Region(0);
        }
    };
    p.node_parents.iter_mut().for_each(to_zero);
    p.site_parents.iter_mut().for_each(to_zero);
    p.regions = 1;
    build(p)
}

/// Merge product `g | f`, i.e. `join.(g || f)` generalised to any number of
/// regions.
pub fn merge_prod(g: &Bigraph, f: &Bigraph) -> Bigraph {
    merge_regions(&ppar(g, f))
}

/// `/name b`.
pub fn close(name: &str, b: &Bigraph) -> Bigraph {
    b.close(name)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn agent() -> Control {
        Control::new("Agent", 1)
    }

    #[test]
    fn ion_shape() {
        let b = ion(Control::new("Junction", 1), &["w"]).unwrap();
        assert_eq!((b.regions(), b.node_count(), b.sites(), b.links().len()), (1, 1, 1, 1));
        let id = ion(Control::with_param("ID", 1, "A"), &["y"]).unwrap();
        assert_eq!(id.control(0).param.as_deref(), Some("A"));
        assert!(matches!(
            ion(agent(), &[]),
            Err(BigraphError::Arity { arity: 1, given: 0, .. })
        ));
    }

    #[test]
    fn elementary_shapes() {
        let o = one();
        assert_eq!((o.regions(), o.sites(), o.node_count()), (1, 0, 0));
        let j = join();
        assert_eq!((j.regions(), j.sites()), (1, 2));
        let s = symmetry();
        assert_eq!(s.site_parent(1), Parent::Region(0));
        assert_eq!(s.site_parent(0), Parent::Region(1));
        assert!(placing(&[0, 0]).is_err());
        assert!(placing(&[2, 0]).is_err());
    }

    #[test]
    fn join_of_ones_is_one() {
        let b = nest(&join(), &ppar(&one(), &one())).unwrap();
        assert_eq!(b, one());
    }

    #[test]
    fn nest_interface_checked() {
        assert!(matches!(nest(&one(), &one()), Err(BigraphError::Interface(_))));
    }

    #[test]
    fn nest_building_agent() {
        let a = atom(agent(), &["x"]).unwrap();
        let b = nest(&ion(Control::new("Building", 1), &["y"]).unwrap(), &a).unwrap();
        assert_eq!(b.node_parent(1), Parent::Node(0));
        assert_eq!(b.sites(), 0);
        assert_eq!(b.outer_names().into_iter().collect::<Vec<_>>(), vec!["x", "y"]);
    }

    #[test]
    fn ppar_fuses_names() {
        let d = atom(Control::new("Device", 1), &["x"]).unwrap();
        let dd = ppar(&d, &d);
        assert_eq!(dd.links().len(), 1);
        assert_eq!(dd.links()[0].ports.len(), 2);
        let closed = dd.close("x");
        assert!(closed.links()[0].is_closed());
        assert_eq!(closed.close("nope"), closed);
    }

    #[test]
    fn close_idle_name_drops_it() {
        let mut p = one().to_parts();
        p.links.push(Link::open("z"));
        let b = Bigraph::from_parts(p).unwrap();
        assert!(b.close("z").links().is_empty());
    }

    #[test]
    fn from_parts_rejects_bad_values() {
        let cycle = Parts {
            regions: 1,
            controls: vec![Control::new("K", 0); 2],
            node_parents: vec![Parent::Node(1), Parent::Node(0)],
            ..Parts::default()
        };
        assert!(Bigraph::from_parts(cycle).is_err());
        let unlinked = Parts {
            regions: 1,
            controls: vec![agent()],
            node_parents: vec![Parent::Region(0)],
            ..Parts::default()
        };
        assert!(Bigraph::from_parts(unlinked).is_err());
        let empty_edge = Parts {
            regions: 1,
            links: vec![Link::closed()],
            ..Parts::default()
        };
        assert!(Bigraph::from_parts(empty_edge).is_err());
    }

    #[test]
    fn merge_prod_single_region() {
        let a = atom(agent(), &["x"]).unwrap();
        let m = merge_prod(&a, &elementary_id());
        assert_eq!((m.regions(), m.sites(), m.node_count()), (1, 1, 1));
        assert_eq!(m.site_parent(0), Parent::Region(0));
    }

    #[test]
    fn place_entries_match_parented_elements() {
        let a = atom(agent(), &["x"]).unwrap();
        let b = nest(&ion(Control::new("Room", 1), &["y"]).unwrap(), &merge_prod(&a, &elementary_id())).unwrap();
        assert_eq!(b.place().entries(), b.node_count() + b.sites());
    }
}
