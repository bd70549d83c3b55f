pub mod bigraph;
pub mod sparse;
pub mod rewrite;
pub mod osm;
pub mod overpass;
pub mod builder;
pub mod rules;
pub mod persist;
pub mod dataset;
