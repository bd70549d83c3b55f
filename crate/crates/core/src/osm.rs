//! OpenStreetMap XML documents and the classification of their elements
//! into buildings, streets and administrative boundaries.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;
use std::io::Read;

use log::warn;
use quick_xml::events::{BytesStart, Event};
use quick_xml::Reader;
use serde::{Deserialize, Serialize};
use thiserror::Error;

pub type Tags = BTreeMap<String, String>;

#[derive(Debug, Error)]
pub enum OsmError {
    #[error("line {line}: malformed XML: {message}")]
    Xml { line: usize, message: String },
    #[error("line {line}: {message}")]
    Element { line: usize, message: String },
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error("boundary containment is cyclic at {0:?}")]
    Cycle(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ElementKind {
    Node,
    Way,
    Relation,
}

impl ElementKind {
    fn parse(s: &str) -> Option<Self> {
        match s {
            "node" => Some(Self::Node),
            "way" => Some(Self::Way),
            "relation" => Some(Self::Relation),
            _ => None,
        }
    }

    pub fn as_str(self) -> &'static str {
        match self {
            Self::Node => "node",
            Self::Way => "way",
            Self::Relation => "relation",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct OsmNode {
    pub lat: Option<f64>,
    pub lon: Option<f64>,
    pub tags: Tags,
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct OsmWay {
    pub refs: Vec<i64>,
    pub tags: Tags,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Member {
    pub kind: ElementKind,
    pub id: i64,
    pub role: String,
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct OsmRelation {
    pub members: Vec<Member>,
    pub tags: Tags,
}

/// Parsed OSM data. Each element type has its own id space.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct OsmDocument {
    pub nodes: BTreeMap<i64, OsmNode>,
    pub ways: BTreeMap<i64, OsmWay>,
    pub relations: BTreeMap<i64, OsmRelation>,
    pub warnings: Vec<String>,
}

impl OsmDocument {
    /// Union of two documents; elements of `other` win on id clashes.
    pub fn merge(&mut self, other: OsmDocument) {
        self.nodes.extend(other.nodes);
        self.ways.extend(other.ways);
        self.relations.extend(other.relations);
        self.warnings.extend(other.warnings);
    }

    /// Tags of any element.
    pub fn tags(&self, kind: ElementKind, id: i64) -> Option<&Tags> {
        match kind {
            ElementKind::Node => self.nodes.get(&id).map(|n| &n.tags),
            ElementKind::Way => self.ways.get(&id).map(|w| &w.tags),
            ElementKind::Relation => self.relations.get(&id).map(|r| &r.tags),
        }
    }
}

fn line_of(xml: &[u8], pos: u64) -> usize {
    let end = (pos as usize).min(xml.len());
    xml[..end].iter().filter(|&&b| b == b'\n').count() + 1
}

enum Open {
    Node(i64, OsmNode),
    Way(i64, OsmWay),
    Relation(i64, OsmRelation),
}

struct Attrs(BTreeMap<String, String>);

impl Attrs {
    fn read(e: &BytesStart<'_>, line: usize) -> Result<Self, OsmError> {
        let mut map = BTreeMap::new();
        for attr in e.attributes() {
            let attr = attr.map_err(|err| OsmError::Xml {
                line,
                message: err.to_string(),
            })?;
            let key = String::from_utf8_lossy(attr.key.as_ref()).into_owned();
            let value = attr.unescape_value().map_err(|err| OsmError::Xml {
                line,
                message: err.to_string(),
            })?;
            map.insert(key, value.into_owned());
        }
        Ok(Self(map))
    }

    fn required(&self, key: &str, element: &str, line: usize) -> Result<&str, OsmError> {
        self.0.get(key).map(String::as_str).ok_or_else(|| OsmError::Element {
            line,
            message: format!("<{element}> without {key:?}"),
        })
    }

    fn int(&self, key: &str, element: &str, line: usize) -> Result<i64, OsmError> {
        let raw = self.required(key, element, line)?;
        raw.parse().map_err(|_| OsmError::Element {
            line,
            message: format!("<{element}> {key}={raw:?} is not an integer"),
        })
    }

    fn float(&self, key: &str, line: usize) -> Result<Option<f64>, OsmError> {
        self.0
            .get(key)
            .map(|raw| {
                raw.parse().map_err(|_| OsmError::Element {
                    line,
                    message: format!("<node> {key}={raw:?} is not a number"),
                })
            })
            .transpose()
    }
}

/// Parses OSM XML. Dangling way node references are kept and reported in
/// `warnings`.
pub fn parse_osm(xml: &[u8]) -> Result<OsmDocument, OsmError> {
    let mut reader = Reader::from_reader(xml);
    let mut doc = OsmDocument::default();
    let mut open: Option<Open> = None;
    let mut buf = Vec::new();
    loop {
        let event = reader.read_event_into(&mut buf).map_err(|err| OsmError::Xml {
            line: line_of(xml, reader.error_position()),
            message: err.to_string(),
        })?;
        let line = line_of(xml, reader.buffer_position());
        match event {
            Event::Start(ref e) | Event::Empty(ref e) => {
                let empty = matches!(event, Event::Empty(_));
                let name = String::from_utf8_lossy(e.name().as_ref()).into_owned();
                let attrs = Attrs::read(e, line)?;
                match name.as_str() {
                    "node" => {
                        let id = attrs.int("id", "node", line)?;
                        let node = OsmNode {
                            lat: attrs.float("lat", line)?,
                            lon: attrs.float("lon", line)?,
                            tags: Tags::new(),
                        };
                        open = Some(Open::Node(id, node));
                    }
                    "way" => open = Some(Open::Way(attrs.int("id", "way", line)?, OsmWay::default())),
                    "relation" => {
                        open = Some(Open::Relation(
                            attrs.int("id", "relation", line)?,
                            OsmRelation::default(),
                        ))
                    }
                    "tag" => {
                        let k = attrs.required("k", "tag", line)?.to_string();
                        let v = attrs.required("v", "tag", line)?.to_string();
                        match open.as_mut() {
                            Some(Open::Node(_, n)) => n.tags.insert(k, v),
                            Some(Open::Way(_, w)) => w.tags.insert(k, v),
                            Some(Open::Relation(_, r)) => r.tags.insert(k, v),
                            None => None,
                        };
                    }
                    "nd" => {
                        let r = attrs.int("ref", "nd", line)?;
                        match open.as_mut() {
                            Some(Open::Way(_, w)) => w.refs.push(r),
                            _ => {
                                return Err(OsmError::Element {
                                    line,
                                    message: "<nd> outside a way".into(),
                                })
                            }
                        }
                    }
                    "member" => {
                        let raw = attrs.required("type", "member", line)?;
                        let kind = ElementKind::parse(raw).ok_or_else(|| OsmError::Element {
                            line,
                            message: format!("unknown member type {raw:?}"),
                        })?;
                        let member = Member {
                            kind,
                            id: attrs.int("ref", "member", line)?,
                            role: attrs.0.get("role").cloned().unwrap_or_default(),
                        };
                        match open.as_mut() {
                            Some(Open::Relation(_, r)) => r.members.push(member),
                            _ => {
                                return Err(OsmError::Element {
                                    line,
                                    message: "<member> outside a relation".into(),
                                })
                            }
                        }
                    }
                    _ => {}
                }
                if empty && matches!(name.as_str(), "node" | "way" | "relation") {
                    finish(&mut doc, open.take());
                }
            }
            Event::End(ref e) => {
                if matches!(e.name().as_ref(), b"node" | b"way" | b"relation") {
                    finish(&mut doc, open.take());
                }
            }
            Event::Eof => break,
            _ => {}
        }
        buf.clear();
    }
    for (id, way) in &doc.ways {
        for r in &way.refs {
            if !doc.nodes.contains_key(r) {
                doc.warnings.push(format!("way {id} references missing node {r}"));
            }
        }
    }
    if !doc.warnings.is_empty() {
        warn!("{} dangling node references", doc.warnings.len());
    }
    Ok(doc)
}

fn finish(doc: &mut OsmDocument, open: Option<Open>) {
    match open {
        Some(Open::Node(id, n)) => {
            doc.nodes.insert(id, n);
        }
        Some(Open::Way(id, w)) => {
            doc.ways.insert(id, w);
        }
        Some(Open::Relation(id, r)) => {
            doc.relations.insert(id, r);
        }
        None => {}
    }
}

/// Reads and parses a whole stream.
pub fn parse_osm_reader(mut input: impl Read) -> Result<OsmDocument, OsmError> {
    let mut bytes = Vec::new();
    input.read_to_end(&mut bytes)?;
    parse_osm(&bytes)
}

fn escape(s: &str) -> std::borrow::Cow<'_, str> {
    quick_xml::escape::escape(s)
}

fn write_tags(out: &mut String, tags: &Tags) {
    for (k, v) in tags {
        out.push_str(&format!("    <tag k=\"{}\" v=\"{}\"/>\n", escape(k), escape(v)));
    }
}

/// Serialises the retained fields back to OSM XML.
pub fn write_osm(doc: &OsmDocument) -> String {
    let mut out = String::from("<?xml version=\"1.0\" encoding=\"UTF-8\"?>\n<osm version=\"0.6\">\n");
    for (id, n) in &doc.nodes {
        out.push_str(&format!("  <node id=\"{id}\""));
        if let Some(lat) = n.lat {
            out.push_str(&format!(" lat=\"{lat}\""));
        }
        if let Some(lon) = n.lon {
            out.push_str(&format!(" lon=\"{lon}\""));
        }
        out.push_str(">\n");
        write_tags(&mut out, &n.tags);
        out.push_str("  </node>\n");
    }
    for (id, w) in &doc.ways {
        out.push_str(&format!("  <way id=\"{id}\">\n"));
        for r in &w.refs {
            out.push_str(&format!("    <nd ref=\"{r}\"/>\n"));
        }
        write_tags(&mut out, &w.tags);
        out.push_str("  </way>\n");
    }
    for (id, r) in &doc.relations {
        out.push_str(&format!("  <relation id=\"{id}\">\n"));
        for m in &r.members {
            out.push_str(&format!(
                "    <member type=\"{}\" ref=\"{}\" role=\"{}\"/>\n",
                m.kind.as_str(),
                m.id,
                escape(&m.role)
            ));
        }
        write_tags(&mut out, &r.tags);
        out.push_str("  </relation>\n");
    }
    out.push_str("</osm>\n");
    out
}

/// Highway values that make a way a street.
pub const STREET_HIGHWAYS: [&str; 12] = [
    "motorway",
    "trunk",
    "primary",
    "secondary",
    "tertiary",
    "unclassified",
    "residential",
    "motorway_link",
    "trunk_link",
    "primary_link",
    "secondary_link",
    "tertiary_link",
];

/// How a street is identified: its name, else its ref, else its way id.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum StreetId {
    Name(String),
    Ref(String),
    WayId(i64),
}

impl fmt::Display for StreetId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Self::Name(s) | Self::Ref(s) => f.write_str(s),
            Self::WayId(id) => write!(f, "{id}"),
        }
    }
}

/// Name of a building: its `name`, else "<housenumber> <street>".
pub fn classify_building(tags: &Tags) -> Option<String> {
    if !tags.contains_key("building") {
        return None;
    }
    if let Some(name) = tags.get("name") {
        return Some(name.clone());
    }
    match (tags.get("addr:housenumber"), tags.get("addr:street")) {
        (Some(num), Some(street)) => Some(format!("{num} {street}")),
        _ => None,
    }
}

pub fn classify_street(tags: &Tags, way_id: i64) -> Option<StreetId> {
    let highway = tags.get("highway")?;
    if !STREET_HIGHWAYS.contains(&highway.as_str()) {
        return None;
    }
    Some(if let Some(name) = tags.get("name") {
        StreetId::Name(name.clone())
    } else if let Some(r) = tags.get("ref") {
        StreetId::Ref(r.clone())
    } else {
        StreetId::WayId(way_id)
    })
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct BoundaryTags {
    /// `short_name` when present, else `name`.
    pub name: String,
    pub admin_level: u8,
    /// The `name` tag when `short_name` was chosen.
    pub long_name: Option<String>,
}

pub fn classify_boundary(tags: &Tags) -> Option<BoundaryTags> {
    if tags.get("boundary").map(String::as_str) != Some("administrative") {
        return None;
    }
    let admin_level: u8 = tags.get("admin_level")?.trim().parse().ok()?;
    if !(2..=11).contains(&admin_level) {
        return None;
    }
    match (tags.get("short_name"), tags.get("name")) {
        (Some(short), long) => Some(BoundaryTags {
            name: short.clone(),
            admin_level,
            long_name: long.cloned(),
        }),
        (None, Some(name)) => Some(BoundaryTags {
            name: name.clone(),
            admin_level,
            long_name: None,
        }),
        (None, None) => None,
    }
}

#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord)]
pub struct BuildingEntry {
    pub kind: ElementKind,
    pub id: i64,
    pub name: String,
    pub street: Option<String>,
}

/// The ingredients of one boundary's bigraph.
#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct RegionExtract {
    pub boundary: String,
    pub streets: BTreeMap<StreetId, BTreeSet<i64>>,
    /// Node references of every street way.
    pub way_nodes: BTreeMap<i64, Vec<i64>>,
    pub buildings: Vec<BuildingEntry>,
    /// OSM node → streets holding a junction for it. Non-crossing junctions
    /// join at least two streets; a crossing node gets a junction in every
    /// street through it.
    pub junctions: BTreeMap<i64, BTreeSet<StreetId>>,
    pub crossing_nodes: BTreeSet<i64>,
}

impl RegionExtract {
    pub fn new(boundary: impl Into<String>) -> Self {
        Self {
            boundary: boundary.into(),
            ..Self::default()
        }
    }

    /// Rebuilds `junctions` from `streets`, `way_nodes` and the given
    /// junction candidates (nodes that get a junction even on one street).
    pub fn compute_junctions(&mut self, candidates: &BTreeSet<i64>) {
        let mut through: BTreeMap<i64, BTreeSet<StreetId>> = BTreeMap::new();
        for (sid, ways) in &self.streets {
            for w in ways {
                for &n in self.way_nodes.get(w).map(Vec::as_slice).unwrap_or_default() {
                    through.entry(n).or_default().insert(sid.clone());
                }
            }
        }
        through.retain(|n, streets| streets.len() >= 2 || candidates.contains(n));
        self.junctions = through;
    }

    /// Names of streets that buildings may attach to.
    pub fn street_names(&self) -> BTreeSet<String> {
        self.streets.keys().map(ToString::to_string).collect()
    }
}

/// Groups a boundary's streets and buildings and finds its junctions.
pub fn extract_region(doc: &OsmDocument, boundary: &str, crossing: &BTreeSet<i64>) -> RegionExtract {
    let mut ex = RegionExtract::new(boundary);
    for (&id, way) in &doc.ways {
        if let Some(sid) = classify_street(&way.tags, id) {
            ex.streets.entry(sid).or_default().insert(id);
            ex.way_nodes.insert(id, way.refs.clone());
        }
    }
    let tagged = doc
        .nodes
        .iter()
        .map(|(&id, n)| (ElementKind::Node, id, &n.tags))
        .chain(doc.ways.iter().map(|(&id, w)| (ElementKind::Way, id, &w.tags)))
        .chain(doc.relations.iter().map(|(&id, r)| (ElementKind::Relation, id, &r.tags)));
    for (kind, id, tags) in tagged {
        if let Some(name) = classify_building(tags) {
            ex.buildings.push(BuildingEntry {
                kind,
                id,
                name,
                street: tags.get("addr:street").cloned(),
            });
        }
    }
    ex.crossing_nodes = crossing.clone();
    ex.compute_junctions(crossing);
    ex
}

/// Administrative boundary relations of a document: `(relation id, tags)`.
pub fn boundaries(doc: &OsmDocument) -> Vec<(i64, BoundaryTags)> {
    doc.relations
        .iter()
        .filter_map(|(&id, r)| classify_boundary(&r.tags).map(|b| (id, b)))
        .collect()
}

/// Immediate children per region, from each region's full descendant set.
/// A descendant is immediate when no other descendant of the same region
/// contains it. Children are sorted by name.
pub fn derive_hierarchy(
    descendants: &BTreeMap<String, BTreeSet<String>>,
) -> Result<BTreeMap<String, Vec<String>>, OsmError> {
    let empty = BTreeSet::new();
    let desc = |r: &str| descendants.get(r).unwrap_or(&empty);
    let mut out = BTreeMap::new();
    for (region, ds) in descendants {
        if ds.contains(region) {
            return Err(OsmError::Cycle(region.clone()));
        }
        let mut children = Vec::new();
        for d in ds {
            if desc(d).contains(region) {
                return Err(OsmError::Cycle(d.clone()));
            }
            if !ds.iter().any(|e| e != d && desc(e).contains(d)) {
                children.push(d.clone());
            }
        }
        out.insert(region.clone(), children);
    }
    Ok(out)
}
