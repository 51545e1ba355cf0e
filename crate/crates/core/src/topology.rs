//! Network graph, fixed shortest-path routing and the link utilization matrix.

use std::cmp::Ordering;
use std::collections::{BinaryHeap, HashMap, HashSet};
use std::path::Path;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::traffic::TrafficModel;

#[derive(Debug, Error)]
pub enum TopologyError {
    #[error("invalid topology: {0}")]
    Invalid(String),
    #[error("unknown node `{0}`")]
    UnknownNode(String),
    #[error("no path between `{0}` and `{1}`")]
    NoPath(String, String),
    #[error("dimension mismatch: expected {expected}, found {found}")]
    DimensionMismatch { expected: usize, found: usize },
    #[error("invalid connection {0}: {1}")]
    InvalidConnection(usize, String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

/// A fiber link between two nodes. Links are undirected and carry one
/// spectrum resource of `slots_per_link` frequency slots.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Link {
    pub id: usize,
    pub a: String,
    pub b: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub length: Option<f64>,
}

/// Raw document layout of a topology file.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct TopologyFile {
    pub nodes: Vec<String>,
    pub links: Vec<Link>,
    pub slots_per_link: u32,
}

/// Validated, immutable network graph.
#[derive(Debug, Clone)]
pub struct Topology {
    nodes: Vec<String>,
    links: Vec<Link>,
    slots_per_link: u32,
    node_index: HashMap<String, usize>,
    link_index: HashMap<usize, usize>,
    // adjacency[node] = (link position, neighbour node)
    adjacency: Vec<Vec<(usize, usize)>>,
}

impl Topology {
    pub fn new(
        nodes: Vec<String>,
        links: Vec<Link>,
        slots_per_link: u32,
    ) -> Result<Self, TopologyError> {
        if slots_per_link == 0 {
            return Err(TopologyError::Invalid("slots_per_link must be >= 1".into()));
        }
        let mut node_index = HashMap::with_capacity(nodes.len());
        for (pos, name) in nodes.iter().enumerate() {
            if node_index.insert(name.clone(), pos).is_some() {
                return Err(TopologyError::Invalid(format!("duplicate node `{name}`")));
            }
        }
        let mut link_index = HashMap::with_capacity(links.len());
        let mut adjacency = vec![Vec::new(); nodes.len()];
        for (pos, link) in links.iter().enumerate() {
            if link_index.insert(link.id, pos).is_some() {
                return Err(TopologyError::Invalid(format!("duplicate link id {}", link.id)));
            }
            let a = *node_index
                .get(&link.a)
                .ok_or_else(|| TopologyError::UnknownNode(link.a.clone()))?;
            let b = *node_index
                .get(&link.b)
                .ok_or_else(|| TopologyError::UnknownNode(link.b.clone()))?;
            if a == b {
                return Err(TopologyError::Invalid(format!("link {} is a self-loop", link.id)));
            }
            if let Some(len) = link.length {
                if !(len.is_finite() && len >= 0.0) {
                    return Err(TopologyError::Invalid(format!(
                        "link {} has invalid length {len}",
                        link.id
                    )));
                }
            }
            adjacency[a].push((pos, b));
            adjacency[b].push((pos, a));
        }
        Ok(Self {
            nodes,
            links,
            slots_per_link,
            node_index,
            link_index,
            adjacency,
        })
    }

    pub fn from_file_data(file: TopologyFile) -> Result<Self, TopologyError> {
        Self::new(file.nodes, file.links, file.slots_per_link)
    }

    pub fn from_json(text: &str) -> Result<Self, TopologyError> {
        Self::from_file_data(serde_json::from_str(text)?)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self, TopologyError> {
        Self::from_json(&std::fs::read_to_string(path)?)
    }

    /// The bundled 14-node, 23-link Deutsche Telekom reference network.
    pub fn dt14(slots_per_link: u32) -> Self {
        let mut file: TopologyFile = serde_json::from_str(include_str!("../data/dt14.json"))
            .expect("bundled topology parses");
        file.slots_per_link = slots_per_link;
        Self::from_file_data(file).expect("bundled topology is valid")
    }

    pub fn to_file_data(&self) -> TopologyFile {
        TopologyFile {
            nodes: self.nodes.clone(),
            links: self.links.clone(),
            slots_per_link: self.slots_per_link,
        }
    }

    /// Pretty-printed topology document.
    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(&self.to_file_data()).expect("topology serializes")
    }

    pub fn nodes(&self) -> &[String] {
        &self.nodes
    }

    pub fn links(&self) -> &[Link] {
        &self.links
    }

    pub fn num_links(&self) -> usize {
        self.links.len()
    }

    pub fn slots_per_link(&self) -> u32 {
        self.slots_per_link
    }

    pub fn has_node(&self, name: &str) -> bool {
        self.node_index.contains_key(name)
    }

    /// Column of link `id` in the link utilization matrix.
    pub fn link_position(&self, id: usize) -> Option<usize> {
        self.link_index.get(&id).copied()
    }

    fn node(&self, name: &str) -> Result<usize, TopologyError> {
        self.node_index
            .get(name)
            .copied()
            .ok_or_else(|| TopologyError::UnknownNode(name.to_owned()))
    }

    /// Whether any link carries an explicit length. Without lengths every
    /// link costs one hop.
    pub fn uses_lengths(&self) -> bool {
        self.links.iter().any(|l| l.length.is_some())
    }

    /// Routing cost of the link at `pos`.
    pub fn link_cost(&self, pos: usize) -> f64 {
        if self.uses_lengths() {
            self.links[pos].length.unwrap_or(1.0)
        } else {
            1.0
        }
    }

    /// Endpoints (node positions) of the link at `pos`.
    fn endpoints(&self, pos: usize) -> (usize, usize) {
        let l = &self.links[pos];
        (self.node_index[&l.a], self.node_index[&l.b])
    }

    fn distances_from(&self, origin: usize) -> Vec<f64> {
        let mut dist = vec![f64::INFINITY; self.nodes.len()];
        let mut heap = BinaryHeap::new();
        dist[origin] = 0.0;
        heap.push(HeapEntry { cost: 0.0, node: origin });
        while let Some(HeapEntry { cost, node }) = heap.pop() {
            if cost > dist[node] {
                continue;
            }
            for &(pos, next) in &self.adjacency[node] {
                let c = cost + self.link_cost(pos);
                if c < dist[next] {
                    dist[next] = c;
                    heap.push(HeapEntry { cost: c, node: next });
                }
            }
        }
        dist
    }

    /// Sum of routing costs along `links` (given as link ids).
    pub fn path_cost(&self, links: &[usize]) -> f64 {
        links
            .iter()
            .map(|id| self.link_cost(self.link_index[id]))
            .sum()
    }

    /// Checks that `links` chains from `source` to `destination` without
    /// repeating a link or a node.
    pub fn is_valid_path(&self, source: &str, destination: &str, links: &[usize]) -> bool {
        let (Ok(mut at), Ok(dst)) = (self.node(source), self.node(destination)) else {
            return false;
        };
        let mut seen_nodes = HashSet::from([at]);
        let mut seen_links = HashSet::new();
        for id in links {
            let Some(pos) = self.link_position(*id) else {
                return false;
            };
            if !seen_links.insert(pos) {
                return false;
            }
            let (a, b) = self.endpoints(pos);
            at = if a == at {
                b
            } else if b == at {
                a
            } else {
                return false;
            };
            if !seen_nodes.insert(at) {
                return false;
            }
        }
        at == dst && !links.is_empty()
    }
}

#[derive(Debug, PartialEq)]
struct HeapEntry {
    cost: f64,
    node: usize,
}

impl Eq for HeapEntry {}

impl Ord for HeapEntry {
    fn cmp(&self, other: &Self) -> Ordering {
        other
            .cost
            .total_cmp(&self.cost)
            .then_with(|| other.node.cmp(&self.node))
    }
}

impl PartialOrd for HeapEntry {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

/// A connection request between two nodes with its tidal traffic model.
#[derive(Debug, Clone, PartialEq)]
pub struct ConnectionRequest {
    pub id: usize,
    pub source: String,
    pub destination: String,
    pub traffic: TrafficModel,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct TrafficSpec {
    pub mu: f64,
    pub sigma2: f64,
}

/// One entry of a connections file.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ConnectionEntry {
    pub id: usize,
    pub source: String,
    pub destination: String,
    pub traffic: TrafficSpec,
}

/// Parses a connections document and checks it against `topology`.
/// Connection ids must be exactly `0..n` (in any order); the result is
/// sorted by id. Traffic caps default to the per-link slot count.
pub fn connections_from_json(
    text: &str,
    topology: &Topology,
) -> Result<Vec<ConnectionRequest>, TopologyError> {
    let entries: Vec<ConnectionEntry> = serde_json::from_str(text)?;
    let cap = f64::from(topology.slots_per_link());
    let conns = entries
        .into_iter()
        .map(|e| ConnectionRequest {
            id: e.id,
            source: e.source,
            destination: e.destination,
            traffic: TrafficModel::new(e.traffic.mu, e.traffic.sigma2).with_cap(cap),
        })
        .collect();
    check_connections(conns, topology)
}

pub fn load_connections(
    path: impl AsRef<Path>,
    topology: &Topology,
) -> Result<Vec<ConnectionRequest>, TopologyError> {
    connections_from_json(&std::fs::read_to_string(path)?, topology)
}

pub fn connections_to_json(conns: &[ConnectionRequest]) -> String {
    let entries: Vec<ConnectionEntry> = conns
        .iter()
        .map(|c| ConnectionEntry {
            id: c.id,
            source: c.source.clone(),
            destination: c.destination.clone(),
            traffic: TrafficSpec {
                mu: c.traffic.mu,
                sigma2: c.traffic.sigma2,
            },
        })
        .collect();
    serde_json::to_string_pretty(&entries).expect("connections serialize")
}

pub fn check_connections(
    mut conns: Vec<ConnectionRequest>,
    topology: &Topology,
) -> Result<Vec<ConnectionRequest>, TopologyError> {
    conns.sort_by_key(|c| c.id);
    for (expect, c) in conns.iter().enumerate() {
        if c.id != expect {
            return Err(TopologyError::InvalidConnection(
                c.id,
                format!("ids must be 0..{} without gaps or duplicates", conns.len()),
            ));
        }
        for node in [&c.source, &c.destination] {
            if !topology.has_node(node) {
                return Err(TopologyError::UnknownNode(node.clone()));
            }
        }
        if c.source == c.destination {
            return Err(TopologyError::InvalidConnection(
                c.id,
                "source equals destination".into(),
            ));
        }
        c.traffic
            .validate()
            .map_err(|e| TopologyError::InvalidConnection(c.id, e.to_string()))?;
    }
    Ok(conns)
}

/// Fixed route of one connection, as an ordered list of link ids.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Route {
    pub connection: usize,
    pub links: Vec<usize>,
}

impl Route {
    pub fn hops(&self) -> usize {
        self.links.len()
    }
}

/// Minimum-cost simple path between two nodes. Among equal-cost paths the
/// one with the lexicographically smallest sequence of link ids wins.
pub fn shortest_route(
    topology: &Topology,
    source: &str,
    destination: &str,
) -> Result<Vec<usize>, TopologyError> {
    let src = topology.node(source)?;
    let dst = topology.node(destination)?;
    if src == dst {
        return Err(TopologyError::Invalid(format!(
            "source and destination are both `{source}`"
        )));
    }
    let from_src = topology.distances_from(src);
    let best = from_src[dst];
    if !best.is_finite() {
        return Err(TopologyError::NoPath(source.into(), destination.into()));
    }
    let to_dst = topology.distances_from(dst);
    let tol = 1e-9 * best.max(1.0);

    // Walk the shortest-path DAG, always taking the smallest link id that
    // still lies on some shortest path.
    let mut path = Vec::new();
    let mut at = src;
    let mut spent = 0.0;
    let mut visited = HashSet::from([src]);
    while at != dst {
        let step = topology.adjacency[at]
            .iter()
            .filter(|&&(pos, next)| {
                !visited.contains(&next)
                    && (spent + topology.link_cost(pos) + to_dst[next] - best).abs() <= tol
            })
            .min_by_key(|&&(pos, _)| topology.links[pos].id);
        let Some(&(pos, next)) = step else {
            return Err(TopologyError::NoPath(source.into(), destination.into()));
        };
        spent += topology.link_cost(pos);
        path.push(topology.links[pos].id);
        visited.insert(next);
        at = next;
    }
    Ok(path)
}

/// Routes every connection on its shortest path.
pub fn route_all(
    topology: &Topology,
    conns: &[ConnectionRequest],
) -> Result<Vec<Route>, TopologyError> {
    conns
        .iter()
        .map(|c| {
            shortest_route(topology, &c.source, &c.destination).map(|links| Route {
                connection: c.id,
                links,
            })
        })
        .collect()
}

/// Binary n x k matrix marking which links each connection traverses.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct LinkUtilizationMatrix {
    n: usize,
    k: usize,
    entries: Vec<u8>,
}

impl LinkUtilizationMatrix {
    pub fn from_rows(rows: &[Vec<u8>]) -> Result<Self, TopologyError> {
        let k = rows.first().map_or(0, Vec::len);
        let mut entries = Vec::with_capacity(rows.len() * k);
        for row in rows {
            if row.len() != k {
                return Err(TopologyError::DimensionMismatch {
                    expected: k,
                    found: row.len(),
                });
            }
            if row.iter().any(|&v| v > 1) {
                return Err(TopologyError::Invalid("entries must be 0 or 1".into()));
            }
            entries.extend_from_slice(row);
        }
        Ok(Self {
            n: rows.len(),
            k,
            entries,
        })
    }

    pub fn num_connections(&self) -> usize {
        self.n
    }

    pub fn num_links(&self) -> usize {
        self.k
    }

    pub fn get(&self, connection: usize, link: usize) -> u8 {
        self.entries[connection * self.k + link]
    }

    pub fn row(&self, connection: usize) -> &[u8] {
        &self.entries[connection * self.k..(connection + 1) * self.k]
    }

    /// Link columns used by `connection`, ascending.
    pub fn links_of(&self, connection: usize) -> Vec<usize> {
        self.row(connection)
            .iter()
            .enumerate()
            .filter_map(|(l, &p)| (p == 1).then_some(l))
            .collect()
    }

    pub fn column_sum(&self, link: usize) -> usize {
        (0..self.n).map(|i| usize::from(self.get(i, link))).sum()
    }

    pub fn hops(&self, connection: usize) -> usize {
        self.row(connection).iter().map(|&p| usize::from(p)).sum()
    }

    /// Whether two connections share at least one link.
    pub fn shares_link(&self, a: usize, b: usize) -> bool {
        self.row(a).iter().zip(self.row(b)).any(|(&x, &y)| x == 1 && y == 1)
    }

    /// A connection that shares no link with any other connection.
    pub fn is_non_contending(&self, connection: usize) -> bool {
        (0..self.n).all(|other| other == connection || !self.shares_link(connection, other))
    }
}

/// Builds P from one route per connection; row `i` belongs to connection `i`.
pub fn build_link_utilization(
    routes: &[Route],
    topology: &Topology,
    n: usize,
) -> Result<LinkUtilizationMatrix, TopologyError> {
    if routes.len() != n {
        return Err(TopologyError::DimensionMismatch {
            expected: n,
            found: routes.len(),
        });
    }
    let k = topology.num_links();
    let mut entries = vec![0u8; n * k];
    let mut seen = vec![false; n];
    for route in routes {
        let i = route.connection;
        if i >= n || seen[i] {
            return Err(TopologyError::InvalidConnection(
                i,
                "route does not map to a unique connection row".into(),
            ));
        }
        seen[i] = true;
        for id in &route.links {
            let l = topology.link_position(*id).ok_or_else(|| {
                TopologyError::InvalidConnection(i, format!("unknown link id {id}"))
            })?;
            entries[i * k + l] = 1;
        }
    }
    Ok(LinkUtilizationMatrix { n, k, entries })
}
