use std::collections::BTreeSet;

use bigworld::bigraph::{atom, elementary_id, ion, merge_prod, nest, ppar, Bigraph, Control, Parent};
use rand::Rng;

fn k(name: &str) -> Control {
    Control::new(name, 1)
}

fn a(c: &str, x: &str) -> Bigraph {
    atom(k(c), &[x]).unwrap()
}

fn i(c: &str, x: &str) -> Bigraph {
    ion(k(c), &[x]).unwrap()
}

fn n(outer: &Bigraph, inner: &Bigraph) -> Bigraph {
    nest(outer, inner).unwrap()
}

/// `Building_x.Room_w.(Agent_v | Agent_z.Contact_y)`.
pub fn bigraph_e() -> Bigraph {
    n(
        &i("Building", "x"),
        &n(&i("Room", "w"), &merge_prod(&a("Agent", "v"), &n(&i("Agent", "z"), &a("Contact", "y")))),
    )
}

/// `Building_x.(Room_w.Agent_v | Agent_z.Contact_y)`.
pub fn bigraph_e_prime() -> Bigraph {
    n(
        &i("Building", "x"),
        &merge_prod(&n(&i("Room", "w"), &a("Agent", "v")), &n(&i("Agent", "z"), &a("Contact", "y"))),
    )
}

fn is_desc_or_self(t: &Bigraph, v: usize, anc: usize) -> bool {
    let mut cur = Parent::Node(v);
    while let Parent::Node(u) = cur {
        if u == anc {
            return true;
        }
        cur = t.node_parent(u);
    }
    false
}

/// Every injective node map satisfying the occurrence conditions,
/// found by trying all of them.
pub fn brute_force(t: &Bigraph, r: &Bigraph) -> usize {
    let (rn, tn) = (r.node_count(), t.node_count());
    let t_ports = t.port_links();
    let mut count = 0;
    let mut map = vec![usize::MAX; rn];
    let mut used = vec![false; tn];
    fn rec(
        depth: usize,
        t: &Bigraph,
        r: &Bigraph,
        tp: &[Vec<usize>],
        map: &mut Vec<usize>,
        used: &mut Vec<bool>,
        count: &mut usize,
    ) {
        if depth == map.len() {
            if valid(t, r, tp, map) {
                *count += 1;
            }
            return;
        }
        for w in 0..t.node_count() {
            if !used[w] && t.control(w) == r.control(depth) {
                used[w] = true;
                map[depth] = w;
                rec(depth + 1, t, r, tp, map, used, count);
                used[w] = false;
            }
        }
    }
    rec(0, t, r, &t_ports, &mut map, &mut used, &mut count);
    count
}

fn valid(t: &Bigraph, r: &Bigraph, tp: &[Vec<usize>], map: &[usize]) -> bool {
    for u in 0..r.node_count() {
        let w = map[u];
        if let Parent::Node(p) = r.node_parent(u) {
            if t.node_parent(w) != Parent::Node(map[p]) {
                return false;
            }
        }
        if r.child_sites(Parent::Node(u)).is_empty() && t.child_count(Parent::Node(w)) != r.child_count(Parent::Node(u)) {
            return false;
        }
    }
    for reg in 0..r.regions() {
        let parents: BTreeSet<Parent> = r
            .child_nodes(Parent::Region(reg))
            .iter()
            .map(|&u| t.node_parent(map[u]))
            .collect();
        if parents.len() != 1 {
            return false;
        }
        if let Some(Parent::Node(p)) = parents.into_iter().next() {
            if map.iter().any(|&w| is_desc_or_self(t, p, w)) {
                return false;
            }
        }
    }
    for l in r.links() {
        let targets: BTreeSet<usize> = l.ports.iter().map(|&(u, p)| tp[map[u]][p]).collect();
        if targets.len() > 1 {
            return false;
        }
        if l.is_closed() {
            let tl = &t.links()[*targets.iter().next().unwrap()];
            let mapped: BTreeSet<(usize, usize)> = l.ports.iter().map(|&(u, p)| (map[u], p)).collect();
            if !tl.is_closed() || tl.ports != mapped {
                return false;
            }
        }
    }
    true
}

const CONTROLS: [&str; 2] = ["K", "L"];
const NAMES: [&str; 2] = ["a", "b"];

fn ground(rng: &mut impl Rng, size: usize) -> Bigraph {
    let c = CONTROLS[rng.random_range(0..2)];
    let x = NAMES[rng.random_range(0..2)];
    if size <= 1 {
        return a(c, x);
    }
    if rng.random_bool(0.5) {
        let left = rng.random_range(1..size);
        merge_prod(&ground(rng, left), &ground(rng, size - left))
    } else {
        n(&i(c, x), &ground(rng, size - 1))
    }
}

fn pattern(rng: &mut impl Rng, size: usize) -> Bigraph {
    let c = CONTROLS[rng.random_range(0..2)];
    let x = ["x", "y"][rng.random_range(0..2)];
    if size <= 1 {
        return if rng.random_bool(0.5) { a(c, x) } else { i(c, x) };
    }
    match rng.random_range(0..3) {
        0 => {
            let left = rng.random_range(1..size);
            merge_prod(&pattern(rng, left), &pattern(rng, size - left))
        }
        1 => n(&i(c, x), &pattern(rng, size - 1)),
        _ => n(&i(c, x), &merge_prod(&elementary_id(), &pattern(rng, size - 1))),
    }
}

pub fn instance(rng: &mut impl Rng) -> (Bigraph, Bigraph) {
    let size = rng.random_range(1..=8);
    let mut t = ground(rng, size);
    if rng.random_bool(0.5) {
        t = t.close("a");
    }
    let mut r = if rng.random_bool(0.3) {
        let size = rng.random_range(1..=2);
        ppar(&pattern(rng, 1), &pattern(rng, size))
    } else {
        let size = rng.random_range(1..=3);
        pattern(rng, size)
    };
    if rng.random_bool(0.2) {
        r = r.close("x");
    }
    (t, r)
}

