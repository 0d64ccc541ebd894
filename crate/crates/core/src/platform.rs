//! Platform descriptions: compute nodes, network links and static routes.
//!
//! Platforms are stored as JSON documents with three top-level keys:
//!
//! ```json
//! {
//!   "nodes": [{"id": "worker-1", "role": "worker", "cores": 24,
//!              "core_speed_flops": 1e9, "disk_read_bw_bps": 0.0,
//!              "disk_write_bw_bps": 0.0, "storage_capacity_bytes": 0}],
//!   "links": [{"id": "link-storage", "bandwidth_bps": 1.25e8, "latency_s": 1e-4}],
//!   "routes": [{"src": "storage", "dst": "worker-1",
//!               "links": ["link-storage", "link-worker-1"]}]
//! }
//! ```
//!
//! A route is looked up in the stated direction first and falls back to the
//! reverse route with its link order reversed. A disk bandwidth of zero on a
//! non-storage node means the disk is not modeled and never limits a transfer.

use std::collections::{BTreeMap, HashSet};
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::workload::Scenario;

#[derive(Debug, Error, PartialEq)]
pub enum PlatformError {
    #[error("syntax error at line {line}, column {column}: {message}")]
    Syntax {
        line: usize,
        column: usize,
        message: String,
    },
    #[error("invalid platform: {0}")]
    Invalid(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum NodeRole {
    Worker,
    Scheduler,
    Storage,
}

impl fmt::Display for NodeRole {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            NodeRole::Worker => "worker",
            NodeRole::Scheduler => "scheduler",
            NodeRole::Storage => "storage",
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct NodeSpec {
    pub id: String,
    pub role: NodeRole,
    pub cores: u32,
    pub core_speed_flops: f64,
    pub disk_read_bw_bps: f64,
    pub disk_write_bw_bps: f64,
    pub storage_capacity_bytes: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LinkSpec {
    pub id: String,
    pub bandwidth_bps: f64,
    pub latency_s: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct RouteEntry {
    src: String,
    dst: String,
    links: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct PlatformDocument {
    nodes: Vec<NodeSpec>,
    links: Vec<LinkSpec>,
    routes: Vec<RouteEntry>,
}

/// A validated platform. Immutable once built.
#[derive(Debug, Clone, PartialEq)]
pub struct PlatformSpec {
    nodes: Vec<NodeSpec>,
    links: Vec<LinkSpec>,
    routes: BTreeMap<(String, String), Vec<String>>,
}

impl PlatformSpec {
    /// Builds and validates a platform from its parts.
    pub fn new(
        nodes: Vec<NodeSpec>,
        links: Vec<LinkSpec>,
        routes: BTreeMap<(String, String), Vec<String>>,
    ) -> Result<Self, PlatformError> {
        let spec = Self {
            nodes,
            links,
            routes,
        };
        spec.validate()?;
        Ok(spec)
    }

    pub fn nodes(&self) -> &[NodeSpec] {
        &self.nodes
    }

    pub fn links(&self) -> &[LinkSpec] {
        &self.links
    }

    pub fn routes(&self) -> &BTreeMap<(String, String), Vec<String>> {
        &self.routes
    }

    pub fn node(&self, id: &str) -> Option<&NodeSpec> {
        self.nodes.iter().find(|n| n.id == id)
    }

    pub fn link(&self, id: &str) -> Option<&LinkSpec> {
        self.links.iter().find(|l| l.id == id)
    }

    pub fn workers(&self) -> impl Iterator<Item = &NodeSpec> {
        self.nodes.iter().filter(|n| n.role == NodeRole::Worker)
    }

    pub fn storage_nodes(&self) -> impl Iterator<Item = &NodeSpec> {
        self.nodes.iter().filter(|n| n.role == NodeRole::Storage)
    }

    pub fn total_worker_cores(&self) -> u64 {
        self.workers().map(|n| u64::from(n.cores)).sum()
    }

    /// Link ids traversed from `src` to `dst`, falling back to the reversed
    /// `dst -> src` route.
    pub fn route(&self, src: &str, dst: &str) -> Option<Vec<&str>> {
        if let Some(links) = self.routes.get(&(src.to_owned(), dst.to_owned())) {
            return Some(links.iter().map(String::as_str).collect());
        }
        self.routes
            .get(&(dst.to_owned(), src.to_owned()))
            .map(|links| links.iter().rev().map(String::as_str).collect())
    }

    fn validate(&self) -> Result<(), PlatformError> {
        let invalid = |msg: String| Err(PlatformError::Invalid(msg));

        let mut node_ids = HashSet::new();
        for node in &self.nodes {
            if node.id.is_empty() {
                return invalid("node id must not be empty".into());
            }
            if !node_ids.insert(node.id.as_str()) {
                return invalid(format!("duplicate node id `{}`", node.id));
            }
            let is_worker = node.role == NodeRole::Worker;
            if is_worker && node.cores == 0 {
                return invalid(format!("worker `{}`: cores must be positive", node.id));
            }
            if !is_worker && node.cores != 0 {
                return invalid(format!("{} `{}`: only workers may have cores", node.role, node.id));
            }
            if is_worker && !(node.core_speed_flops.is_finite() && node.core_speed_flops > 0.0) {
                return invalid(format!("worker `{}`: core_speed must be positive", node.id));
            }
            if !(node.core_speed_flops.is_finite() && node.core_speed_flops >= 0.0) {
                return invalid(format!("node `{}`: core_speed must be finite and non-negative", node.id));
            }
            for (name, bw) in [("disk_read_bw", node.disk_read_bw_bps), ("disk_write_bw", node.disk_write_bw_bps)] {
                if !(bw.is_finite() && bw >= 0.0) {
                    return invalid(format!("node `{}`: {name} must be finite and non-negative", node.id));
                }
                if node.role == NodeRole::Storage && bw <= 0.0 {
                    return invalid(format!("storage `{}`: {name} must be positive", node.id));
                }
            }
        }

        let mut link_ids = HashSet::new();
        for link in &self.links {
            if !link_ids.insert(link.id.as_str()) {
                return invalid(format!("duplicate link id `{}`", link.id));
            }
            if !(link.bandwidth_bps.is_finite() && link.bandwidth_bps > 0.0) {
                return invalid(format!("link `{}`: bandwidth must be positive", link.id));
            }
            if !(link.latency_s.is_finite() && link.latency_s >= 0.0) {
                return invalid(format!("link `{}`: latency must be non-negative", link.id));
            }
        }

        for ((src, dst), links) in &self.routes {
            for end in [src, dst] {
                if !node_ids.contains(end.as_str()) {
                    return invalid(format!("route {src} -> {dst}: unknown node `{end}`"));
                }
            }
            if src == dst {
                return invalid(format!("route {src} -> {dst}: endpoints must differ"));
            }
            if links.is_empty() {
                return invalid(format!("route {src} -> {dst}: must traverse at least one link"));
            }
            for link in links {
                if !link_ids.contains(link.as_str()) {
                    return invalid(format!("route {src} -> {dst}: dangling link id `{link}`"));
                }
            }
        }

        for storage in self.storage_nodes() {
            for worker in self.workers() {
                if self.route(&storage.id, &worker.id).is_none() {
                    return invalid(format!("no route between storage `{}` and worker `{}`", storage.id, worker.id));
                }
            }
        }
        Ok(())
    }

    fn to_document(&self) -> PlatformDocument {
        PlatformDocument {
            nodes: self.nodes.clone(),
            links: self.links.clone(),
            routes: self
                .routes
                .iter()
                .map(|((src, dst), links)| RouteEntry {
                    src: src.clone(),
                    dst: dst.clone(),
                    links: links.clone(),
                })
                .collect(),
        }
    }

    /// Canonical JSON form; routes are emitted sorted by (src, dst).
    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(&self.to_document()).expect("platform documents always serialize")
    }
}

impl FromStr for PlatformSpec {
    type Err = PlatformError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        parse_platform(s)
    }
}

/// Parses and validates a platform document.
pub fn parse_platform(text: &str) -> Result<PlatformSpec, PlatformError> {
    let doc: PlatformDocument = serde_json::from_str(text).map_err(|e| PlatformError::Syntax {
        line: e.line(),
        column: e.column(),
        message: e.to_string(),
    })?;
    let mut routes = BTreeMap::new();
    for r in doc.routes {
        let key = (r.src, r.dst);
        if routes.contains_key(&key) {
            return Err(PlatformError::Invalid(format!("duplicate route {} -> {}", key.0, key.1)));
        }
        routes.insert(key, r.links);
    }
    PlatformSpec::new(doc.nodes, doc.links, routes)
}

pub const HOMOGENEOUS_PRESET: &str = include_str!("../presets/homogeneous.json");
pub const HETEROGENEOUS_PRESET: &str = include_str!("../presets/heterogeneous.json");

/// The shipped platform for an evaluation scenario.
pub fn builtin_platform(scenario: Scenario) -> PlatformSpec {
    let text = match scenario {
        Scenario::Homogeneous => HOMOGENEOUS_PRESET,
        Scenario::Heterogeneous => HETEROGENEOUS_PRESET,
    };
    parse_platform(text).expect("shipped presets are valid")
}
