//! Overpass QL generation and a caching HTTP client.

use std::fmt;
use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::time::Duration;

use log::{debug, info, warn};
use thiserror::Error;

use crate::osm::STREET_HIGHWAYS;

pub const DEFAULT_ENDPOINT: &str = "https://overpass-api.de/api/interpreter";
pub const ENDPOINT_ENV: &str = "OVERPASS_ENDPOINT";

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum QueryKind {
    Buildings,
    Streets,
    CrossingFirstNodes,
    DescendantBoundaries,
}

impl QueryKind {
    pub const ALL: [QueryKind; 4] = [
        QueryKind::Buildings,
        QueryKind::Streets,
        QueryKind::CrossingFirstNodes,
        QueryKind::DescendantBoundaries,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            Self::Buildings => "buildings",
            Self::Streets => "streets",
            Self::CrossingFirstNodes => "crossings",
            Self::DescendantBoundaries => "boundaries",
        }
    }
}

impl fmt::Display for QueryKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct QuerySpec {
    pub region: String,
    pub kind: QueryKind,
    /// OSM relation id of the boundary, used instead of the name when known.
    pub relation: Option<i64>,
}

impl QuerySpec {
    pub fn new(region: impl Into<String>, kind: QueryKind) -> Self {
        Self {
            region: region.into(),
            kind,
            relation: None,
        }
    }

    pub fn with_relation(mut self, id: i64) -> Self {
        self.relation = Some(id);
        self
    }
}

#[derive(Debug, Error)]
pub enum FetchError {
    #[error("region name is empty")]
    EmptyRegion,
    #[error("no Overpass endpoint configured and {0} is not cached")]
    NoEndpoint(PathBuf),
    #[error("Overpass returned HTTP {status} for {region} {kind}")]
    Http { status: u16, region: String, kind: QueryKind },
    #[error("Overpass request failed: {0}")]
    Transport(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

fn quote(s: &str) -> String {
    let mut out = String::with_capacity(s.len() + 2);
    out.push('"');
    for c in s.chars() {
        if c == '"' || c == '\\' {
            out.push('\\');
        }
        out.push(c);
    }
    out.push('"');
    out
}

fn highway_filter() -> String {
    format!("[\"highway\"~\"^({})$\"]", STREET_HIGHWAYS.join("|"))
}

fn area_clause(spec: &QuerySpec) -> String {
    match spec.relation {
        Some(id) => format!("area(id:{})->.a;\n", 3_600_000_000 + id),
        None => format!(
            "area[\"boundary\"=\"administrative\"][\"name\"={}]->.a;\n",
            quote(&spec.region)
        ),
    }
}

fn relation_clause(spec: &QuerySpec) -> String {
    match spec.relation {
        Some(id) => format!("rel({id})->.r;\n"),
        None => format!(
            "rel[\"boundary\"=\"administrative\"][\"name\"={}]->.r;\n",
            quote(&spec.region)
        ),
    }
}

/// Overpass QL for `spec`. A pure function of its input.
///
/// * Buildings: building-tagged ways and relations whose first member node
///   lies in the area.
/// * Streets: street-valued highway ways in the area, with their nodes.
/// * CrossingFirstNodes: first nodes of street ways touching the boundary
///   line (`around:0`).
/// * DescendantBoundaries: administrative relations, levels 2 to 11, whose
///   nodes all lie inside the area, the region itself excluded.
pub fn render_query(spec: &QuerySpec) -> String {
    let mut q = String::from("[out:xml][timeout:900];\n");
    match spec.kind {
        QueryKind::Buildings => {
            q += &area_clause(spec);
            q += "way[\"building\"](area.a)->.bw;\n";
            q += "foreach.bw->.b(\n";
            q += "  node(w.b:1)->.first;\n";
            q += "  node.first(area.a)->.inside;\n";
            q += "  if (inside.count(nodes) > 0) { .b out tags; }\n";
            q += ");\n";
            q += "relation[\"building\"](area.a)->.br;\n";
            q += "foreach.br->.b(\n";
            q += "  way(r.b)->.members;\n";
            q += "  node(w.members:1)->.first;\n";
            q += "  node.first(area.a)->.inside;\n";
            q += "  if (inside.count(nodes) > 0) { .b out tags; }\n";
            q += ");\n";
        }
        QueryKind::Streets => {
            q += &area_clause(spec);
            q += &format!("way{}(area.a);\n", highway_filter());
            q += "out body;\n>;\nout skel qt;\n";
        }
        QueryKind::CrossingFirstNodes => {
            q += &relation_clause(spec);
            q += "way(r.r)->.bw;\n";
            q += &format!("way{}(around.bw:0)->.cross;\n", highway_filter());
            q += "node(w.cross:1);\n";
            q += "out skel qt;\n";
        }
        QueryKind::DescendantBoundaries => {
            q += &area_clause(spec);
            q += &relation_clause(spec);
            q += "rel[\"boundary\"=\"administrative\"][\"admin_level\"~\"^([2-9]|1[01])$\"](area.a)->.cands;\n";
            q += "(.cands; - .r;)->.cands;\n";
            q += "foreach.cands->.c(\n";
            q += "  way(r.c);\n";
            q += "  node(w)->.all;\n";
            q += "  node.all(area.a)->.inside;\n";
            q += "  if (inside.count(nodes) == all.count(nodes)) { .c out tags; }\n";
            q += ");\n";
        }
    }
    q
}

fn file_safe(region: &str) -> String {
    region
        .chars()
        .map(|c| if matches!(c, '/' | '\\' | '\0') { '_' } else { c })
        .collect()
}

/// `<cache>/<region>.<kind>.osm`.
pub fn cache_path(spec: &QuerySpec, cache_dir: &Path) -> PathBuf {
    cache_dir.join(format!("{}.{}.osm", file_safe(&spec.region), spec.kind))
}

/// Endpoint from `OVERPASS_ENDPOINT`, else the public instance.
pub fn default_endpoint() -> String {
    std::env::var(ENDPOINT_ENV).unwrap_or_else(|_| DEFAULT_ENDPOINT.to_string())
}

/// HTTP client with an on-disk cache.
#[derive(Debug, Clone)]
pub struct Fetcher {
    pub endpoint: String,
    pub cache_dir: PathBuf,
    pub attempts: u32,
    pub backoff: Duration,
    pub timeout: Duration,
}

impl Fetcher {
    pub fn new(endpoint: impl Into<String>, cache_dir: impl Into<PathBuf>) -> Self {
        Self {
            endpoint: endpoint.into(),
            cache_dir: cache_dir.into(),
            attempts: 3,
            backoff: Duration::from_secs(5),
            timeout: Duration::from_secs(1000),
        }
    }

    /// Returns the cached file for `spec`, downloading it first if absent.
    /// Existing cache files are never rewritten.
    pub fn fetch(&self, spec: &QuerySpec) -> Result<PathBuf, FetchError> {
        if spec.region.is_empty() {
            return Err(FetchError::EmptyRegion);
        }
        let path = cache_path(spec, &self.cache_dir);
        if path.exists() {
            debug!("cache hit {}", path.display());
            return Ok(path);
        }
        if self.endpoint.is_empty() {
            return Err(FetchError::NoEndpoint(path));
        }
        let body = self.post(spec)?;
        fs::create_dir_all(&self.cache_dir)?;
        store(&path, &body)?;
        Ok(path)
    }

    fn post(&self, spec: &QuerySpec) -> Result<Vec<u8>, FetchError> {
        let agent: ureq::Agent = ureq::Agent::config_builder()
            .timeout_global(Some(self.timeout))
            .build()
            .into();
        let query = render_query(spec);
        let mut delay = self.backoff;
        for attempt in 1..=self.attempts.max(1) {
            info!("POST {} ({} {}), attempt {attempt}", self.endpoint, spec.region, spec.kind);
            match agent.post(&self.endpoint).send(query.as_str()) {
                Ok(mut resp) => {
                    return resp
                        .body_mut()
                        .with_config()
                        .limit(u64::MAX)
                        .read_to_vec()
                        .map_err(|e| FetchError::Transport(e.to_string()));
                }
                Err(ureq::Error::StatusCode(429)) if attempt < self.attempts => {
                    warn!("rate limited; retrying in {delay:?}");
                    std::thread::sleep(delay);
                    delay *= 2;
                }
                Err(ureq::Error::StatusCode(status)) => {
                    return Err(FetchError::Http {
                        status,
                        region: spec.region.clone(),
                        kind: spec.kind,
                    })
                }
                Err(e) => return Err(FetchError::Transport(e.to_string())),
            }
        }
        unreachable!("the last attempt returns")
    }
}

/// Writes `body` to a temporary file and links it into place, leaving any
/// file that appeared meanwhile untouched.
fn store(path: &Path, body: &[u8]) -> Result<(), FetchError> {
    let tmp = path.with_extension(format!("osm.{}.tmp", std::process::id()));
    {
        let mut f = fs::File::create(&tmp)?;
        f.write_all(body)?;
        f.sync_all()?;
    }
    let linked = fs::hard_link(&tmp, path);
    let cleanup = fs::remove_file(&tmp);
    match linked {
        Ok(()) => {}
        Err(e) if e.kind() == std::io::ErrorKind::AlreadyExists => {}
        Err(e) => return Err(e.into()),
    }
    cleanup?;
    Ok(())
}

/// [`Fetcher::fetch`] with default retry settings.
pub fn fetch(spec: &QuerySpec, endpoint: &str, cache_dir: &Path) -> Result<PathBuf, FetchError> {
    Fetcher::new(endpoint, cache_dir).fetch(spec)
}
