mod common;

use std::collections::{BTreeMap, BTreeSet};

use bigworld::bigraph::{ion, iso_equal, placing, ppar, Bigraph, Control, Parent, Parts};
use bigworld::builder::{
    build, build_algebraic, combine_parallel, nest_into_context, resolve, spatial_name, stats, Ambiguous, BuildError,
    RegionHierarchy, SpatialName, Stats, WorldBigraph, ID_REGION, PHYSICAL_REGION,
};
use bigworld::dataset::load_hierarchy;
use bigworld::osm::{RegionExtract, StreetId};
use bigworld::rules::{add_agent, controls};
use common::{chain_extract, fixture, simple_road_network, single, synthetic_hierarchy, town};
use proptest::prelude::*;

fn by_ident(wb: &WorldBigraph, ident: &str) -> usize {
    let ids = bigworld::builder::identifiers(&wb.bigraph);
    let hits: Vec<usize> = (0..wb.bigraph.node_count())
        .filter(|&v| ids[v].as_deref() == Some(ident) && wb.bigraph.control(v).name != "ID")
        .collect();
    assert_eq!(hits.len(), 1, "{ident}: {hits:?}");
    hits[0]
}

fn junction_links(wb: &WorldBigraph) -> BTreeMap<Vec<String>, usize> {
    // Streets joined by each junction link → number of such links.
    let b = &wb.bigraph;
    let ids = bigworld::builder::identifiers(b);
    let mut out = BTreeMap::new();
    for l in b.links() {
        let streets: Vec<String> = l
            .ports
            .iter()
            .filter(|(v, _)| b.control(*v).name == "Junction")
            .map(|(v, _)| match b.node_parent(*v) {
                Parent::Node(s) => ids[s].clone().unwrap(),
                Parent::Region(_) => panic!("junction at top level"),
            })
            .collect();
        if !streets.is_empty() {
            let mut streets = streets;
            streets.sort();
            *out.entry(streets).or_insert(0) += 1;
        }
    }
    out
}

fn node_law(wb: &WorldBigraph) -> bool {
    let s = stats(wb);
    s.nodes == 2 * (s.streets + s.buildings + s.subdivisions + 1) + s.junctions
}

#[test]
fn road_network_matches_hand_count() {
    let wb = build(&single(simple_road_network(&[]))).unwrap();
    assert_eq!(
        stats(&wb),
        Stats {
            nodes: 29,
            edges: 14,
            outer_names: 0,
            subdivisions: 0,
            streets: 6,
            buildings: 2,
            junctions: 11,
        }
    );
    let links = junction_links(&wb);
    let s = |v: &[&str]| v.iter().map(|x| x.to_string()).collect::<Vec<_>>();
    let expected: BTreeMap<Vec<String>, usize> = [
        (s(&["109", "Madingley Road"]), 1),
        (s(&["J J Thomson Ave", "Madingley Road"]), 1),
        (s(&["Ada Lovelace Road", "Charles Babbage Road", "High Cross"]), 1),
        (s(&["109", "Charles Babbage Road"]), 1),
        (s(&["Charles Babbage Road", "J J Thomson Ave"]), 1),
    ]
    .into_iter()
    .collect();
    assert_eq!(links, expected);
    let cb = by_ident(&wb, "Charles Babbage Road");
    let kids = wb.bigraph.child_nodes(Parent::Node(cb));
    let junctions = kids.iter().filter(|&&v| wb.bigraph.control(v).name == "Junction").count();
    assert_eq!(junctions, 3);
    let wgb = by_ident(&wb, "William Gates Building");
    assert_eq!(wb.bigraph.node_parent(wgb), Parent::Node(by_ident(&wb, "J J Thomson Ave")));
    assert!(node_law(&wb));
}

#[test]
fn crossing_nodes_stay_open() {
    let wb = build(&single(simple_road_network(&[0, 4]))).unwrap();
    let names: BTreeSet<&str> = wb.bigraph.outer_names();
    assert_eq!(names, ["node 0", "node 4"].into_iter().collect());
    let s = stats(&wb);
    assert_eq!((s.junctions, s.outer_names), (12, 2));
    assert!(node_law(&wb));
}

#[test]
fn perspectives_hold_the_right_controls() {
    let wb = build(&town()).unwrap();
    let b = &wb.bigraph;
    for v in 0..b.node_count() {
        let mut top = b.node_parent(v);
        while let Parent::Node(p) = top {
            top = b.node_parent(p);
        }
        let is_id = b.control(v).name == "ID";
        assert_eq!(top == Parent::Region(ID_REGION), is_id, "node {v}");
        if !is_id {
            assert_eq!(top, Parent::Region(PHYSICAL_REGION));
        }
    }
    assert!(node_law(&wb));
    assert_eq!(stats(&wb).subdivisions, 2);
}

#[test]
fn empty_world() {
    let wb = build(&single(RegionExtract::new("Nowhere"))).unwrap();
    assert_eq!(stats(&wb), Stats { nodes: 2, edges: 1, ..Stats::default() });
}

#[test]
fn missing_extract_and_cycles() {
    let mut h = town();
    h.extracts.remove("South");
    assert!(matches!(build(&h), Err(BuildError::MissingExtract(s)) if s == "South"));
    let mut h = town();
    h.children.insert("North".into(), vec!["Town".into()]);
    assert!(matches!(build(&h), Err(BuildError::Cycle(_))));
}

#[test]
fn cached_dataset_builds_two_levels() {
    let h = load_hierarchy(&fixture("cache"), "Cambridge").unwrap();
    assert_eq!(h.children_of("Cambridge"), ["West Cambridge".to_string()]);
    let wb = build(&h).unwrap();
    assert_eq!(
        stats(&wb),
        Stats {
            nodes: 37,
            edges: 18,
            outer_names: 0,
            subdivisions: 1,
            streets: 7,
            buildings: 3,
            junctions: 13,
        }
    );
    let churchill = wb.names["Churchill College.Huntingdon Road.Cambridge"];
    assert_eq!(spatial_name(&wb, churchill).unwrap().to_string(), "Churchill College.Huntingdon Road.Cambridge");
    let wgb = spatial_name(&wb, by_ident(&wb, "William Gates Building")).unwrap();
    assert_eq!(wgb.to_string(), "William Gates Building.J J Thomson Ave.West Cambridge.Cambridge");
    // Madingley Road and Huntingdon Road meet at the West Cambridge crossing.
    let links = junction_links(&wb);
    assert_eq!(links.get(&vec!["Huntingdon Road".to_string(), "Madingley Road".to_string()]), Some(&1));
    assert!(node_law(&wb));
}

#[test]
fn builds_are_reproducible() {
    let h = synthetic_hierarchy(5_000);
    let a = build(&h).unwrap();
    let b = build(&h).unwrap();
    assert_eq!(a, b);
    assert!(node_law(&a));
}

#[test]
fn spatial_names_round_trip() {
    let mut wb = build(&town()).unwrap();
    wb = add_agent(&wb, &SpatialName::parse("House 2.Mill Lane.South.Town"), "microphone").unwrap();
    let b = &wb.bigraph;
    let ids = bigworld::builder::identifiers(b);
    for v in 0..b.node_count() {
        let named = matches!(b.control(v).name.as_str(), "Boundary" | "Street" | "Building" | "Agent");
        if !named {
            continue;
        }
        let name = spatial_name(&wb, v).unwrap();
        assert_eq!(name.segments[0], ids[v].clone().unwrap());
        assert_eq!(resolve(&wb, &name), Ok(Some(v)), "{name}");
        assert_eq!(wb.names.get(&name.to_string()), Some(&v));
    }
    let mic = wb.names["microphone.House 2.Mill Lane.South.Town"];
    assert_eq!(spatial_name(&wb, mic).unwrap().segments.len(), 5);
    assert_eq!(resolve(&wb, &SpatialName::parse("House 9.Mill Lane.South.Town")), Ok(None));
    let top = by_ident(&wb, "Town");
    assert_eq!(spatial_name(&wb, top).unwrap().to_string(), "Town");
}

#[test]
fn deep_building_name_has_seven_segments() {
    let chain = [
        "UK",
        "England",
        "Cambridgeshire and Peterborough",
        "Cambridgeshire",
        "Cambridge",
    ];
    let mut h = RegionHierarchy {
        root: chain[0].into(),
        ..Default::default()
    };
    for w in chain.windows(2) {
        h.children.insert(w[0].into(), vec![w[1].into()]);
    }
    for c in chain {
        let ex = if c == "Cambridge" {
            chain_extract(c, 1, &["J J Thomson Ave"], &[("William Gates Building", Some("J J Thomson Ave"))])
        } else {
            RegionExtract::new(c)
        };
        h.extracts.insert(c.into(), ex);
    }
    let mut wb = build(&h).unwrap();
    let name = "William Gates Building.J J Thomson Ave.Cambridge.Cambridgeshire.Cambridgeshire and Peterborough.England.UK";
    let wgb = wb.names[name];
    assert_eq!(spatial_name(&wb, wgb).unwrap().segments.len(), 7);
    wb = add_agent(&wb, &SpatialName::parse(name), "microphone").unwrap();
    let mic = wb.names[&format!("microphone.{name}")];
    assert_eq!(spatial_name(&wb, mic).unwrap().segments.len(), 8);
}

#[test]
fn duplicate_names_are_ambiguous() {
    let ex = chain_extract(
        "Dup",
        1,
        &["Lane"],
        &[("Twin", Some("Lane")), ("Twin", Some("Lane")), ("Solo", Some("Lane"))],
    );
    let wb = build(&single(ex)).unwrap();
    let err = resolve(&wb, &SpatialName::parse("Twin.Lane.Dup")).unwrap_err();
    assert_eq!(err.segment, "Twin");
    assert_eq!(err.candidates.len(), 2);
    assert!(!wb.names.contains_key("Twin.Lane.Dup"));
    assert!(wb.names.contains_key("Solo.Lane.Dup"));
    let _: &Ambiguous = &err;
}

#[test]
fn dotted_segments_are_not_indexed() {
    let ex = chain_extract("Dots", 1, &["St. Andrew's Street"], &[("Hall", Some("St. Andrew's Street"))]);
    let wb = build(&single(ex)).unwrap();
    assert_eq!(stats(&wb).buildings, 1);
    assert!(wb.names.keys().all(|k| !k.contains("Andrew")));
    assert!(wb.names.contains_key("Dots"));
}

fn m11(region: &str, base: i64) -> RegionExtract {
    let mut ex = chain_extract(region, base, &["M11", "Local Road"], &[]);
    ex.way_nodes.get_mut(&(base * 10)).unwrap().push(215742);
    ex.crossing_nodes.insert(215742);
    ex.compute_junctions(&ex.crossing_nodes.clone());
    ex
}

#[test]
fn parallel_product_fuses_crossing_links() {
    let cambs = build(&single(m11("Cambridgeshire", 1))).unwrap();
    let essex = build(&single(m11("Essex", 2))).unwrap();
    assert!(cambs.bigraph.outer_names().contains("node 215742"));
    let both = combine_parallel(&cambs, &essex).unwrap();
    assert_eq!(both.bigraph.regions(), 2);
    let l = both.bigraph.link_by_name("node 215742").unwrap();
    let b = &both.bigraph;
    let ids = bigworld::builder::identifiers(b);
    let streets: Vec<String> = b.links()[l]
        .ports
        .iter()
        .map(|(v, _)| match b.node_parent(*v) {
            Parent::Node(s) => format!("{}/{}", spatial_name(&both, s).unwrap(), ids[s].clone().unwrap()),
            Parent::Region(_) => unreachable!(),
        })
        .collect();
    assert_eq!(streets, ["M11.Cambridgeshire/M11", "M11.Essex/M11"]);
    let sa = stats(&cambs);
    let sb = stats(&essex);
    let s = stats(&both);
    assert_eq!(s.nodes, sa.nodes + sb.nodes);
    assert_eq!(s.outer_names, 1);
}

#[test]
fn parallel_product_with_disjoint_and_empty() {
    let a = build(&single(simple_road_network(&[0]))).unwrap();
    let b = build(&single(simple_road_network(&[3]))).unwrap();
    let ab = combine_parallel(&a, &b).unwrap();
    assert_eq!(ab.bigraph.links().len(), a.bigraph.links().len() + b.bigraph.links().len());
    let empty = WorldBigraph::new(ppar(&bigworld::bigraph::one(), &bigworld::bigraph::one()));
    let same = combine_parallel(&a, &empty).unwrap();
    assert!(iso_equal(&same.bigraph, &a.bigraph));
    assert_eq!(same.names, a.names);
}

/// `Boundary(CaP).(id | ...)` with ID and Physical sites, following the
/// rest-of-the-world context: ID region holds site 0 and the
/// Cambridgeshire-and-Peterborough ID; the Physical region holds the
/// boundary with a site for Cambridgeshire.
fn rest_of_world() -> Bigraph {
    let id = |name: &str, l: &str| ion(controls::id(name), &[l]).unwrap();
    let cap = bigworld::bigraph::atom(controls::id("Cambridgeshire and Peterborough"), &["cap"]).unwrap();
    let id_side = bigworld::bigraph::merge_prod(&bigworld::bigraph::elementary_id(), &cap);
    let boundary = ion(Control::new("Boundary", 1), &["cap"]).unwrap();
    let _ = id;
    ppar(&id_side, &boundary).close("cap")
}

#[test]
fn nesting_into_the_rest_of_the_world() {
    let child = build(&single(m11("Cambridgeshire", 1))).unwrap();
    let ctx = rest_of_world();
    let wb = nest_into_context(&ctx, &placing(&[0, 1]).unwrap(), &child).unwrap();
    let b = &wb.bigraph;
    let cambs = wb.names["Cambridgeshire.Cambridgeshire and Peterborough"];
    let cap = wb.names["Cambridgeshire and Peterborough"];
    assert_eq!(b.node_parent(cambs), Parent::Node(cap));
    let id_node = (0..b.node_count())
        .find(|&v| *b.control(v) == controls::id("Cambridgeshire"))
        .unwrap();
    assert_eq!(b.node_parent(id_node), Parent::Region(ID_REGION));
    assert!(b.outer_names().contains("node 215742"));
    let bad = nest_into_context(&ctx, &placing(&[0, 1, 2]).unwrap(), &child);
    assert!(bad.is_err());
}

#[test]
fn appendix_placing_routes_the_last_two_sites() {
    // Eight-site context: the connector routes argument 6 (the child's ID
    // region) next to argument 0.
    let phi = placing(&[0, 6, 1, 2, 3, 4, 5, 7]).unwrap();
    let child = build(&single(RegionExtract::new("Cambridgeshire"))).unwrap();
    let ctx = Bigraph::from_parts(Parts {
        regions: 2,
        sites: 8,
        site_parents: (0..8).map(|i| Parent::Region(usize::from(i >= 2))).collect(),
        ..Parts::default()
    })
    .unwrap();
    let wb = nest_into_context(&ctx, &phi, &child).unwrap();
    assert_eq!(wb.bigraph.regions(), 2);
    assert_eq!(wb.bigraph.sites(), 6);
    let id_node = (0..wb.bigraph.node_count())
        .find(|&v| wb.bigraph.control(v).name == "ID")
        .unwrap();
    assert_eq!(wb.bigraph.node_parent(id_node), Parent::Region(ID_REGION));
}

#[test]
fn identity_context_embeds() {
    let child = build(&town()).unwrap();
    let id2 = bigworld::bigraph::identities(2);
    let wb = nest_into_context(&id2, &id2, &child).unwrap();
    assert!(iso_equal(&wb.bigraph, &child.bigraph));
}

#[test]
fn shared_crossing_name_fuses_with_context() {
    let child = build(&single(m11("Cambridgeshire", 1))).unwrap();
    let j = bigworld::bigraph::atom(controls::junction(), &["node 215742"]).unwrap();
    let ctx = ppar(
        &bigworld::bigraph::elementary_id(),
        &bigworld::bigraph::merge_prod(&bigworld::bigraph::elementary_id(), &j),
    );
    let wb = nest_into_context(&ctx, &bigworld::bigraph::identities(2), &child).unwrap();
    let l = wb.bigraph.link_by_name("node 215742").unwrap();
    assert_eq!(wb.bigraph.links()[l].ports.len(), 2);
}

fn small_hierarchy(streets: usize, buildings: usize, nodes: &[i64], crossing: bool) -> RegionHierarchy {
    let names: Vec<String> = (0..streets).map(|i| format!("S{i}")).collect();
    let refs: Vec<&str> = names.iter().map(String::as_str).collect();
    let bnames: Vec<String> = (0..buildings).map(|i| format!("B{i}")).collect();
    let bl: Vec<(&str, Option<&str>)> = bnames
        .iter()
        .enumerate()
        .map(|(i, b)| (b.as_str(), (i % 2 == 0).then(|| refs.get(i % streets.max(1)).copied()).flatten()))
        .collect();
    let mut child = chain_extract("Child", 1, &refs, &bl);
    if crossing {
        child.crossing_nodes = nodes.iter().copied().collect();
        let c = child.crossing_nodes.clone();
        child.compute_junctions(&c);
    }
    let mut top = child.clone();
    top.boundary = "Top".into();
    top.crossing_nodes.clear();
    top.streets.insert(StreetId::Name("Outer Road".into()), [77].into_iter().collect());
    top.way_nodes.insert(77, nodes.to_vec());
    top.compute_junctions(&BTreeSet::new());
    let mut h = RegionHierarchy {
        root: "Top".into(),
        ..Default::default()
    };
    h.children.insert("Top".into(), vec!["Child".into()]);
    h.extracts.insert("Top".into(), top);
    h.extracts.insert("Child".into(), child);
    h
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn direct_and_algebraic_builds_agree(
        streets in 0usize..4,
        buildings in 0usize..4,
        nodes in proptest::collection::vec(1i64..6, 0..3),
        crossing in any::<bool>(),
    ) {
        let h = small_hierarchy(streets, buildings, &nodes, crossing);
        let direct = build(&h).unwrap();
        let algebraic = build_algebraic(&h).unwrap();
        prop_assert!(iso_equal(&direct.bigraph, &algebraic));
        prop_assert!(node_law(&direct));
        let leaf = single(h.extracts["Child"].clone());
        prop_assert!(iso_equal(&build(&leaf).unwrap().bigraph, &build_algebraic(&leaf).unwrap()));
    }

    #[test]
    fn open_names_are_root_crossings(crossing in proptest::collection::btree_set(0i64..9, 0..4)) {
        let v: Vec<i64> = crossing.iter().copied().collect();
        let wb = build(&single(simple_road_network(&v))).unwrap();
        let want: BTreeSet<String> = crossing.iter().map(|n| format!("node {n}")).collect();
        let got: BTreeSet<String> = wb.bigraph.outer_names().into_iter().map(str::to_string).collect();
        prop_assert_eq!(got, want);
        prop_assert!(node_law(&wb));
    }
}
