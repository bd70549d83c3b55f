//! Bigraph isomorphism: colour refinement followed by a backtracking search
//! for a node bijection that preserves controls, placing and linking.
//! Regions and sites are compared by index, outer names by name.

use std::collections::hash_map::DefaultHasher;
use std::collections::HashMap;
use std::hash::{Hash, Hasher};

use super::{Bigraph, Link, Parent};

const NONE: usize = usize::MAX;

fn h<T: Hash + ?Sized>(t: &T) -> u64 {
    let mut s = DefaultHasher::new();
    t.hash(&mut s);
    s.finish()
}

struct View<'a> {
    b: &'a Bigraph,
    parents: Vec<Parent>,
    port_links: Vec<Vec<usize>>,
}

impl<'a> View<'a> {
    fn new(b: &'a Bigraph) -> Self {
        Self {
            b,
            parents: b.node_parents(),
            port_links: b.port_links(),
        }
    }

    fn initial(&self) -> Vec<u64> {
        (0..self.b.node_count())
            .map(|v| {
                let ports: Vec<(Option<&str>, usize)> = self.port_links[v]
                    .iter()
                    .map(|&li| {
                        let l = &self.b.links()[li];
                        (l.outer.as_deref(), l.ports.len())
                    })
                    .collect();
                let parent = match self.parents[v] {
                    Parent::Region(r) => (0u8, r),
                    Parent::Node(_) => (1u8, 0),
                };
                let sites: Vec<usize> = self.b.child_sites(Parent::Node(v)).iter().copied().collect();
                h(&(self.b.control(v), ports, parent, sites))
            })
            .collect()
    }

    fn refine(&self, col: &[u64]) -> Vec<u64> {
        let link_sig: Vec<u64> = self
            .b
            .links()
            .iter()
            .map(|l| {
                let mut ends: Vec<(u64, usize)> = l.ports.iter().map(|&(v, p)| (col[v], p)).collect();
                ends.sort_unstable();
                h(&ends)
            })
            .collect();
        (0..self.b.node_count())
            .map(|v| {
                let parent = match self.parents[v] {
                    Parent::Region(r) => h(&(0u8, r)),
                    Parent::Node(p) => col[p],
                };
                let mut kids: Vec<u64> = self
                    .b
                    .child_nodes(Parent::Node(v))
                    .iter()
                    .map(|&c| col[c])
                    .collect();
                kids.sort_unstable();
                let ports: Vec<u64> = self.port_links[v].iter().map(|&li| link_sig[li]).collect();
                h(&(col[v], parent, kids, ports))
            })
            .collect()
    }
}

fn classes(col: &[u64]) -> usize {
    let mut c = col.to_vec();
    c.sort_unstable();
    c.dedup();
    c.len()
}

fn sorted(col: &[u64]) -> Vec<u64> {
    let mut c = col.to_vec();
    c.sort_unstable();
    c
}

/// Hash that is equal for isomorphic bigraphs; unequal hashes prove
/// non-isomorphism.
pub fn iso_invariant(b: &Bigraph) -> u64 {
    let view = View::new(b);
    let mut col = view.initial();
    for _ in 0..3 {
        col = view.refine(&col);
    }
    let mut names: Vec<&str> = b.outer_names().into_iter().collect();
    names.sort_unstable();
    h(&(b.regions(), b.sites(), sorted(&col), names, b.links().len()))
}

type CanonicalLink<'a> = (Option<&'a str>, Vec<(usize, usize)>);

fn canonical_links(links: &[Link]) -> Vec<CanonicalLink<'_>> {
    let mut v: Vec<_> = links
        .iter()
        .map(|l| (l.outer.as_deref(), l.ports.iter().copied().collect()))
        .collect();
    v.sort();
    v
}

/// True iff `a` and `b` are isomorphic.
pub fn iso_equal(a: &Bigraph, b: &Bigraph) -> bool {
    if a.regions() != b.regions()
        || a.sites() != b.sites()
        || a.node_count() != b.node_count()
        || a.links().len() != b.links().len()
        || a.outer_names() != b.outer_names()
    {
        return false;
    }
    let (pa, pb) = (a.to_parts(), b.to_parts());
    if pa.site_parents.iter().zip(&pb.site_parents).any(|(x, y)| {
        matches!((x, y), (Parent::Region(r), Parent::Region(q)) if r != q)
            || matches!(x, Parent::Region(_)) != matches!(y, Parent::Region(_))
    }) {
        return false;
    }
    if pa.controls == pb.controls
        && pa.node_parents == pb.node_parents
        && pa.site_parents == pb.site_parents
        && canonical_links(&pa.links) == canonical_links(&pb.links)
    {
        return true;
    }

    let (va, vb) = (View::new(a), View::new(b));
    let (mut ca, mut cb) = (va.initial(), vb.initial());
    if sorted(&ca) != sorted(&cb) {
        return false;
    }
    let mut k = classes(&ca);
    loop {
        let (na, nb) = (va.refine(&ca), vb.refine(&cb));
        if sorted(&na) != sorted(&nb) {
            return false;
        }
        let nk = classes(&na);
        ca = na;
        cb = nb;
        if nk == k {
            break;
        }
        k = nk;
    }
    Search::new(&va, &vb, &ca, &cb).run()
}

struct Frame {
    cands: Vec<usize>,
    next: usize,
    chosen: Option<usize>,
    trail: usize,
}

struct Search<'a> {
    a: &'a View<'a>,
    b: &'a View<'a>,
    ca: &'a [u64],
    order: Vec<usize>,
    groups: HashMap<(Parent, u64), Vec<usize>>,
    map: Vec<usize>,
    used: Vec<bool>,
    link_ab: Vec<usize>,
    link_ba: Vec<usize>,
    trail: Vec<usize>,
}

impl<'a> Search<'a> {
    fn new(a: &'a View<'a>, b: &'a View<'a>, ca: &'a [u64], cb: &'a [u64]) -> Self {
        let mut groups: HashMap<(Parent, u64), Vec<usize>> = HashMap::new();
        for (v, &p) in b.parents.iter().enumerate() {
            groups.entry((p, cb[v])).or_default().push(v);
        }
        let n = a.b.node_count();
        Self {
            a,
            b,
            ca,
            order: a.b.bfs_order(),
            groups,
            map: vec![NONE; n],
            used: vec![false; n],
            link_ab: vec![NONE; a.b.links().len()],
            link_ba: vec![NONE; b.b.links().len()],
            trail: Vec::new(),
        }
    }

    fn candidates(&self, v: usize) -> Vec<usize> {
        let parent = match self.a.parents[v] {
            Parent::Region(r) => Parent::Region(r),
            Parent::Node(p) => Parent::Node(self.map[p]),
        };
        self.groups
            .get(&(parent, self.ca[v]))
            .cloned()
            .unwrap_or_default()
    }

    fn undo(&mut self, to: usize) {
        while self.trail.len() > to {
            let la = self.trail.pop().expect("trail entry");
            self.link_ba[self.link_ab[la]] = NONE;
            self.link_ab[la] = NONE;
        }
    }

    fn try_map(&mut self, v: usize, w: usize) -> bool {
        if self.used[w]
            || self.a.b.control(v) != self.b.b.control(w)
            || self.a.b.child_sites(Parent::Node(v)) != self.b.b.child_sites(Parent::Node(w))
        {
            return false;
        }
        for (p, &la) in self.a.port_links[v].iter().enumerate() {
            let lb = self.b.port_links[w][p];
            match (self.link_ab[la], self.link_ba[lb]) {
                (NONE, NONE) => {
                    if self.a.b.links()[la].outer != self.b.b.links()[lb].outer
                        || self.a.b.links()[la].ports.len() != self.b.b.links()[lb].ports.len()
                    {
                        return false;
                    }
                    self.link_ab[la] = lb;
                    self.link_ba[lb] = la;
                    self.trail.push(la);
                }
                (x, y) if x == lb && y == la => {}
                _ => return false,
            }
        }
        self.map[v] = w;
        self.used[w] = true;
        true
    }

    fn run(mut self) -> bool {
        let mut frames: Vec<Frame> = Vec::new();
        let mut depth = 0;
        loop {
            if depth == self.order.len() {
                return true;
            }
            let v = self.order[depth];
            if frames.len() == depth {
                frames.push(Frame {
                    cands: self.candidates(v),
                    next: 0,
                    chosen: None,
                    trail: self.trail.len(),
                });
            }
            let frame = frames.last_mut().expect("frame for depth");
            if let Some(w) = frame.chosen.take() {
                self.map[v] = NONE;
                self.used[w] = false;
            }
            let trail = frame.trail;
            self.undo(trail);
            let mut chosen = None;
            let frame = frames.last_mut().expect("frame for depth");
            let cands = std::mem::take(&mut frame.cands);
            let mut next = frame.next;
            while next < cands.len() {
                let w = cands[next];
                next += 1;
                if self.try_map(v, w) {
                    chosen = Some(w);
                    break;
                }
                self.undo(trail);
            }
            let frame = frames.last_mut().expect("frame for depth");
            frame.cands = cands;
            frame.next = next;
            frame.chosen = chosen;
            if chosen.is_some() {
                depth += 1;
            } else {
                frames.pop();
                if depth == 0 {
                    return false;
                }
                depth -= 1;
            }
        }
    }
}
