//! JSON save/load of world bigraphs and Graphviz export.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::bigraph::{Bigraph, BigraphError, Control, Link, Parent, Parts};
use crate::builder::WorldBigraph;

pub const SCHEMA_VERSION: u32 = 1;

#[derive(Debug, Error)]
pub enum PersistError {
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error("malformed bigraph JSON: {0}")]
    Parse(#[from] serde_json::Error),
    #[error("unsupported schema version {found} (expected {SCHEMA_VERSION})")]
    Version { found: u32 },
    #[error("control index {0} out of range")]
    ControlIndex(usize),
    #[error(transparent)]
    Invalid(#[from] BigraphError),
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
struct ControlJson {
    name: String,
    arity: usize,
}

/// `[control]` or `[control, param]`.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(untagged)]
enum NodeJson {
    Plain((usize,)),
    Param((usize, String)),
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
struct PlaceJson {
    regions: usize,
    sites: usize,
    rn: Vec<(usize, usize)>,
    nn: Vec<(usize, usize)>,
    rs: Vec<(usize, usize)>,
    ns: Vec<(usize, usize)>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
struct LinkJson {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    outer: Option<String>,
    ports: Vec<(usize, usize)>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
struct BigraphJson {
    version: u32,
    controls: Vec<ControlJson>,
    nodes: Vec<NodeJson>,
    place: PlaceJson,
    links: Vec<LinkJson>,
    names: BTreeMap<String, usize>,
}

fn to_json(wb: &WorldBigraph) -> BigraphJson {
    let b = &wb.bigraph;
    let mut table: BTreeMap<(&str, usize), usize> = BTreeMap::new();
    for c in b.controls() {
        table.entry((c.name.as_str(), c.arity)).or_insert(0);
    }
    let controls: Vec<ControlJson> = table
        .keys()
        .map(|&(name, arity)| ControlJson {
            name: name.to_string(),
            arity,
        })
        .collect();
    for (i, v) in table.values_mut().enumerate() {
        *v = i;
    }
    let nodes = b
        .controls()
        .iter()
        .map(|c| {
            let k = table[&(c.name.as_str(), c.arity)];
            match &c.param {
                Some(p) => NodeJson::Param((k, p.clone())),
                None => NodeJson::Plain((k,)),
            }
        })
        .collect();
    let pg = b.place();
    let place = PlaceJson {
        regions: pg.regions,
        sites: pg.sites,
        rn: pg.rn.iter().collect(),
        nn: pg.nn.iter().collect(),
        rs: pg.rs.iter().collect(),
        ns: pg.ns.iter().collect(),
    };
    let mut links: Vec<LinkJson> = b
        .links()
        .iter()
        .map(|l| LinkJson {
            outer: l.outer.clone(),
            ports: l.ports.iter().copied().collect(),
        })
        .collect();
    links.sort_by(|x, y| {
        (x.outer.is_some(), &x.outer, x.ports.first()).cmp(&(y.outer.is_some(), &y.outer, y.ports.first()))
    });
    BigraphJson {
        version: SCHEMA_VERSION,
        controls,
        nodes,
        place,
        links,
        names: wb.names.clone(),
    }
}

fn from_json(j: BigraphJson) -> Result<WorldBigraph, PersistError> {
    if j.version != SCHEMA_VERSION {
        return Err(PersistError::Version { found: j.version });
    }
    let control = |k: usize, param: Option<String>| -> Result<Control, PersistError> {
        let c = j.controls.get(k).ok_or(PersistError::ControlIndex(k))?;
        Ok(Control {
            name: c.name.clone(),
            arity: c.arity,
            param,
        })
    };
    let controls = j
        .nodes
        .iter()
        .map(|n| match n {
            NodeJson::Plain((k,)) => control(*k, None),
            NodeJson::Param((k, p)) => control(*k, Some(p.clone())),
        })
        .collect::<Result<Vec<_>, _>>()?;
    let n = controls.len();
    let p = &j.place;
    let mut node_parents = vec![None; n];
    let mut site_parents = vec![None; p.sites];
    let set = |slot: Option<&mut Option<Parent>>, parent: Parent, what: &str| -> Result<(), PersistError> {
        match slot {
            Some(s @ None) => {
                *s = Some(parent);
                Ok(())
            }
            Some(Some(_)) => Err(BigraphError::Invalid(format!("{what} has two parents")).into()),
            None => Err(BigraphError::Invalid(format!("{what} out of range")).into()),
        }
    };
    for &(r, v) in &p.rn {
        set(node_parents.get_mut(v), Parent::Region(r), "node")?;
    }
    for &(u, v) in &p.nn {
        set(node_parents.get_mut(v), Parent::Node(u), "node")?;
    }
    for &(r, s) in &p.rs {
        set(site_parents.get_mut(s), Parent::Region(r), "site")?;
    }
    for &(u, s) in &p.ns {
        set(site_parents.get_mut(s), Parent::Node(u), "site")?;
    }
    let missing = || BigraphError::Invalid("place graph leaves a node or site without a parent".into());
    let node_parents = node_parents.into_iter().collect::<Option<Vec<_>>>().ok_or_else(missing)?;
    let site_parents = site_parents.into_iter().collect::<Option<Vec<_>>>().ok_or_else(missing)?;
    let links = j
        .links
        .into_iter()
        .map(|l| Link {
            outer: l.outer,
            ports: l.ports.into_iter().collect(),
        })
        .collect();
    let bigraph = Bigraph::from_parts(Parts {
        regions: p.regions,
        sites: p.sites,
        controls,
        node_parents,
        site_parents,
        links,
    })?;
    Ok(WorldBigraph {
        bigraph,
        names: j.names,
    })
}

/// Compact, deterministic JSON.
pub fn to_string(wb: &WorldBigraph) -> String {
    serde_json::to_string(&to_json(wb)).expect("plain data serialises")
}

pub fn from_str(s: &str) -> Result<WorldBigraph, PersistError> {
    from_json(serde_json::from_str(s)?)
}

pub fn save(wb: &WorldBigraph, path: &Path) -> Result<(), PersistError> {
    fs::write(path, to_string(wb))?;
    Ok(())
}

pub fn load(path: &Path) -> Result<WorldBigraph, PersistError> {
    let bytes = fs::read(path)?;
    from_json(serde_json::from_slice(&bytes)?)
}

fn dot_escape(s: &str) -> String {
    s.replace('\\', "\\\\").replace('"', "\\\"")
}

/// Graphviz rendering: nodes with children become clusters, links become
/// small points joined to their ports, outer names are labelled points.
pub fn to_dot(b: &Bigraph) -> String {
    let mut out = String::from("graph bigraph {\n  compound=true;\n  node [shape=box, style=rounded];\n");
    for r in 0..b.regions() {
        let _ = writeln!(out, "  subgraph cluster_r{r} {{\n    label=\"{r}\";\n    style=dashed;");
        dot_children(b, Parent::Region(r), 2, &mut out);
        out.push_str("  }\n");
    }
    for (i, l) in b.links().iter().enumerate() {
        match &l.outer {
            Some(name) => {
                let _ = writeln!(out, "  l{i} [shape=plaintext, label=\"{}\"];", dot_escape(name));
            }
            None => {
                let _ = writeln!(out, "  l{i} [shape=point];");
            }
        }
        for &(v, _) in &l.ports {
            let _ = writeln!(out, "  n{v} -- l{i};");
        }
    }
    out.push_str("}\n");
    out
}

fn dot_children(b: &Bigraph, parent: Parent, depth: usize, out: &mut String) {
    let pad = "  ".repeat(depth);
    for &s in b.child_sites(parent) {
        let _ = writeln!(out, "{pad}s{s} [label=\"{s}\", style=\"dashed,filled\", fillcolor=lightgrey];");
    }
    for &v in b.child_nodes(parent) {
        let label = dot_escape(&b.control(v).to_string());
        if b.child_count(Parent::Node(v)) == 0 {
            let _ = writeln!(out, "{pad}n{v} [label=\"{label}\"];");
        } else {
            let _ = writeln!(out, "{pad}subgraph cluster_n{v} {{\n{pad}  label=\"\";");
            let _ = writeln!(out, "{pad}  n{v} [label=\"{label}\", shape=plaintext];");
            dot_children(b, Parent::Node(v), depth + 1, out);
            let _ = writeln!(out, "{pad}}}");
        }
    }
}
