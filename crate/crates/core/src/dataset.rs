//! Fetching a region tree into the cache and reading it back as a
//! [`RegionHierarchy`].

use std::collections::{BTreeMap, BTreeSet};
use std::fs::File;
use std::io::BufReader;
use std::path::{Path, PathBuf};

use log::{info, warn};
use thiserror::Error;

use crate::builder::RegionHierarchy;
use crate::osm::{boundaries, derive_hierarchy, extract_region, parse_osm_reader, OsmDocument, OsmError};
use crate::overpass::{cache_path, FetchError, Fetcher, QueryKind, QuerySpec};

#[derive(Debug, Error)]
pub enum DatasetError {
    #[error(transparent)]
    Fetch(#[from] FetchError),
    #[error("{}: {source}", path.display())]
    Osm { path: PathBuf, source: OsmError },
    #[error("{} is not cached; run fetch first", .0.display())]
    Missing(PathBuf),
    #[error(transparent)]
    Hierarchy(OsmError),
}

/// Fetches all four query kinds for `root` and every descendant boundary.
/// Returns the cache files in fetch order.
pub fn fetch_tree(fetcher: &Fetcher, root: &str) -> Result<Vec<PathBuf>, DatasetError> {
    let mut files = Vec::new();
    for kind in QueryKind::ALL {
        files.push(fetcher.fetch(&QuerySpec::new(root, kind))?);
    }
    let doc = read(&cache_path(&QuerySpec::new(root, QueryKind::DescendantBoundaries), &fetcher.cache_dir))?;
    for (rel, tags) in boundaries(&doc) {
        info!("descendant {} (relation {rel}, level {})", tags.name, tags.admin_level);
        for kind in QueryKind::ALL {
            files.push(fetcher.fetch(&QuerySpec::new(tags.name.clone(), kind).with_relation(rel))?);
        }
    }
    Ok(files)
}

fn read(path: &Path) -> Result<OsmDocument, DatasetError> {
    let f = File::open(path).map_err(|_| DatasetError::Missing(path.to_path_buf()))?;
    parse_osm_reader(BufReader::new(f)).map_err(|source| DatasetError::Osm {
        path: path.to_path_buf(),
        source,
    })
}

fn cached(cache_dir: &Path, region: &str, kind: QueryKind) -> Result<OsmDocument, DatasetError> {
    read(&cache_path(&QuerySpec::new(region, kind), cache_dir))
}

fn descendant_names(cache_dir: &Path, region: &str) -> Result<BTreeSet<String>, DatasetError> {
    let doc = cached(cache_dir, region, QueryKind::DescendantBoundaries)?;
    let mut names = BTreeSet::new();
    for (rel, tags) in boundaries(&doc) {
        if tags.name == region {
            continue;
        }
        if !names.insert(tags.name.clone()) {
            warn!("two descendant boundaries of {region} are named {:?} (relation {rel})", tags.name);
        }
    }
    Ok(names)
}

/// Reads the cached files of `root` and its descendants.
pub fn load_hierarchy(cache_dir: &Path, root: &str) -> Result<RegionHierarchy, DatasetError> {
    let mut descendants = BTreeMap::new();
    let top = descendant_names(cache_dir, root)?;
    for d in &top {
        descendants.insert(d.clone(), descendant_names(cache_dir, d)?);
    }
    descendants.insert(root.to_string(), top);
    let children = derive_hierarchy(&descendants).map_err(DatasetError::Hierarchy)?;
    let mut h = RegionHierarchy {
        root: root.to_string(),
        children,
        extracts: BTreeMap::new(),
    };
    for region in descendants.keys() {
        let mut doc = cached(cache_dir, region, QueryKind::Streets)?;
        doc.merge(cached(cache_dir, region, QueryKind::Buildings)?);
        let crossings: BTreeSet<i64> = cached(cache_dir, region, QueryKind::CrossingFirstNodes)?
            .nodes
            .keys()
            .copied()
            .collect();
        h.extracts.insert(region.clone(), extract_region(&doc, region, &crossings));
    }
    Ok(h)
}
