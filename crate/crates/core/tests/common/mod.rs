#![allow(dead_code)]

use std::collections::{BTreeMap, BTreeSet};
use std::path::PathBuf;

use bigworld::bigraph::{Bigraph, Parent};
use bigworld::builder::{build, RegionHierarchy, SpatialName, WorldBigraph};
use bigworld::osm::{extract_region, parse_osm, BuildingEntry, ElementKind, RegionExtract, StreetId};
use bigworld::rules::add_agent;
use bigworld::sparse::SparseBoolMatrix;
use rand::Rng;

pub mod rewrite_oracle;

pub fn fixture(name: &str) -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("tests/fixtures").join(name)
}

/// Parent-pointer forest with `n` nodes and at most `max_depth` levels;
/// entry (p, c) means p is the parent of c.
pub fn random_forest(rng: &mut impl Rng, n: usize, max_depth: usize) -> SparseBoolMatrix {
    let mut depth = vec![0usize; n];
    let mut entries = Vec::new();
    for c in 1..n {
        let p = rng.random_range(0..c);
        if depth[p] + 1 < max_depth && rng.random_bool(0.85) {
            depth[c] = depth[p] + 1;
            entries.push((p, c));
        }
    }
    SparseBoolMatrix::from_entries(n, n, entries).unwrap()
}

/// Random DAG: edges only from lower to higher index.
pub fn random_dag(rng: &mut impl Rng, n: usize, density: f64) -> SparseBoolMatrix {
    let mut entries = Vec::new();
    for i in 0..n {
        for j in i + 1..n {
            if rng.random_bool(density) {
                entries.push((i, j));
            }
        }
    }
    SparseBoolMatrix::from_entries(n, n, entries).unwrap()
}

/// Dense Floyd–Warshall reachability in one or more steps.
pub fn floyd_warshall(m: &SparseBoolMatrix) -> Vec<Vec<bool>> {
    let n = m.rows();
    let mut r = vec![vec![false; n]; n];
    for (i, j) in m.iter() {
        r[i][j] = true;
    }
    for k in 0..n {
        for i in 0..n {
            if r[i][k] {
                for j in 0..n {
                    if r[k][j] {
                        r[i][j] = true;
                    }
                }
            }
        }
    }
    r
}

pub fn dense(m: &SparseBoolMatrix) -> Vec<Vec<bool>> {
    let mut r = vec![vec![false; m.cols()]; m.rows()];
    for (i, j) in m.iter() {
        r[i][j] = true;
    }
    r
}

pub fn simple_road_network(crossing: &[i64]) -> RegionExtract {
    let xml = std::fs::read(fixture("simple_road_network.osm")).unwrap();
    let doc = parse_osm(&xml).unwrap();
    extract_region(&doc, "West Cambridge", &crossing.iter().copied().collect())
}

pub fn single(extract: RegionExtract) -> RegionHierarchy {
    let root = extract.boundary.clone();
    let mut h = RegionHierarchy {
        root: root.clone(),
        ..Default::default()
    };
    h.extracts.insert(root, extract);
    h
}

/// Streets as chains of ways: street `i` is the way from node `base+i` to
/// `base+i+1`, so neighbouring streets meet at one node.
pub fn chain_extract(boundary: &str, base: i64, streets: &[&str], buildings: &[(&str, Option<&str>)]) -> RegionExtract {
    let mut ex = RegionExtract::new(boundary);
    for (i, s) in streets.iter().enumerate() {
        let way = base * 10 + i as i64;
        ex.streets
            .entry(StreetId::Name(s.to_string()))
            .or_default()
            .insert(way);
        ex.way_nodes.insert(way, vec![base + i as i64, base + i as i64 + 1]);
    }
    for (i, (name, street)) in buildings.iter().enumerate() {
        ex.buildings.push(BuildingEntry {
            kind: ElementKind::Way,
            id: base * 1000 + i as i64,
            name: name.to_string(),
            street: street.map(str::to_string),
        });
    }
    ex.compute_junctions(&BTreeSet::new());
    ex
}

/// Town ⊃ {North, South}, each with two streets of three houses.
pub fn town() -> RegionHierarchy {
    let mut h = RegionHierarchy {
        root: "Town".into(),
        ..Default::default()
    };
    h.children.insert("Town".into(), vec!["North".into(), "South".into()]);
    for (i, area) in ["North", "South"].into_iter().enumerate() {
        let base = 100 * (i as i64 + 1);
        let houses: Vec<(String, &str)> = ["High Street", "Mill Lane"]
            .iter()
            .flat_map(|s| (1..=3).map(move |k| (format!("House {k}"), *s)))
            .collect();
        let houses: Vec<(&str, Option<&str>)> = houses.iter().map(|(n, s)| (n.as_str(), Some(*s))).collect();
        h.extracts
            .insert(area.into(), chain_extract(area, base, &["High Street", "Mill Lane"], &houses));
    }
    let mut top = RegionExtract::new("Town");
    for c in ["North", "South"] {
        let ex = &h.extracts[c];
        top.streets.extend(ex.streets.iter().map(|(k, v)| (k.clone(), v.clone())));
        top.way_nodes.extend(ex.way_nodes.clone());
        top.buildings.extend(ex.buildings.clone());
    }
    h.extracts.insert("Town".into(), top);
    h
}

pub const TOWN_AGENTS: [(&str, &str); 5] = [
    ("a1", "House 1.High Street.North.Town"),
    ("a2", "House 1.High Street.North.Town"),
    ("a3", "House 2.Mill Lane.North.Town"),
    ("a4", "House 3.High Street.South.Town"),
    ("a5", "Mill Lane.South.Town"),
];

pub fn town_with_agents() -> WorldBigraph {
    let mut wb = build(&town()).unwrap();
    for (id, at) in TOWN_AGENTS {
        wb = add_agent(&wb, &SpatialName::parse(at), id).unwrap();
    }
    wb
}

/// Agents strictly below `node`, counted by walking parents.
pub fn agent_descendants(b: &Bigraph, node: usize) -> usize {
    (0..b.node_count())
        .filter(|&v| b.control(v).name == "Agent")
        .filter(|&v| {
            let mut cur = b.node_parent(v);
            while let Parent::Node(p) = cur {
                if p == node {
                    return true;
                }
                cur = b.node_parent(p);
            }
            false
        })
        .count()
}

/// A world of roughly `target` nodes: `districts` children, each holding
/// leaf regions of about 400 nodes.
pub fn synthetic_hierarchy(target: usize) -> RegionHierarchy {
    const STREETS: usize = 50;
    const BUILDINGS: usize = 100;
    let per_leaf = 2 * (STREETS + BUILDINGS + 1) + 2 * (STREETS - 1);
    let leaves = target.div_ceil(per_leaf).max(1);
    let districts = (leaves as f64).sqrt().ceil() as usize;
    let street_names: Vec<String> = (0..STREETS).map(|i| format!("Street {i}")).collect();
    let street_refs: Vec<&str> = street_names.iter().map(String::as_str).collect();
    let building_names: Vec<String> = (0..BUILDINGS).map(|i| format!("Building {i}")).collect();
    let buildings: Vec<(&str, Option<&str>)> = building_names
        .iter()
        .enumerate()
        .map(|(i, b)| (b.as_str(), Some(street_refs[i % STREETS])))
        .collect();
    let mut h = RegionHierarchy {
        root: "Synthetic".into(),
        ..Default::default()
    };
    h.extracts.insert("Synthetic".into(), RegionExtract::new("Synthetic"));
    let mut children: BTreeMap<String, Vec<String>> = BTreeMap::new();
    for leaf in 0..leaves {
        let district = format!("District {}", leaf % districts);
        let name = format!("Leaf {leaf}");
        let ex = chain_extract(&name, 1_000 * (leaf as i64 + 1), &street_refs, &buildings);
        h.extracts.insert(name.clone(), ex);
        children.entry(district).or_default().push(name);
    }
    for (d, mut leaves) in children {
        leaves.sort();
        h.extracts.insert(d.clone(), RegionExtract::new(d.clone()));
        h.children.entry("Synthetic".into()).or_default().push(d.clone());
        h.children.insert(d, leaves);
    }
    h.children.get_mut("Synthetic").unwrap().sort();
    h
}
