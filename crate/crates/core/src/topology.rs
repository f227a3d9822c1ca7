//! Layered datacenter topologies: fat-tree, Clos, shortcut-augmented and
//! random layered graphs, plus node-height assignment and equal-cost
//! shortest-path enumeration.
//!
//! Nodes carry a height: core switches sit at height 1 and every other node
//! at 1 + its hop distance to the nearest core. Heights drive the routing
//! search (see [`crate::search`]); they are assigned by multi-source BFS from
//! the core layer.

use std::collections::{BTreeSet, VecDeque};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub type NodeId = u32;
pub type LinkId = u32;

/// Default link capacity: 1 Gb/s, commodity testbed scale.
pub const DEFAULT_CAPACITY_BPS: f64 = 1e9;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum NodeKind {
    Hypervisor,
    Edge,
    Aggregation,
    Core,
    /// Generic switch in random layered topologies.
    Switch,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Node {
    pub id: NodeId,
    pub kind: NodeKind,
    /// 1 for cores, 1 + hop distance to the nearest core otherwise.
    /// `None` until heights are assigned or when unreachable from any core.
    pub height: Option<u32>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Link {
    pub id: LinkId,
    pub a: NodeId,
    pub b: NodeId,
    pub capacity_bps: f64,
}

impl Link {
    pub fn other_end(&self, node: NodeId) -> NodeId {
        if node == self.a {
            self.b
        } else {
            self.a
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum TopologyKind {
    FatTree { k: u32 },
    Clos,
    Shortcut { base_k: u32, n_extra: u32 },
    RandomLayered,
}

/// An immutable layered topology. Construct through the builders below or by
/// loading the JSON file format; both validate the structural invariants
/// (dense unique ids, no self loops, at most one link per node pair,
/// hypervisors all connected) and assign heights.
#[derive(Debug, Clone, PartialEq)]
pub struct Topology {
    kind: TopologyKind,
    nodes: Vec<Node>,
    links: Vec<Link>,
    /// Per node, incident (neighbor, link) pairs sorted by neighbor id.
    adjacency: Vec<Vec<(NodeId, LinkId)>>,
}

/// Serialized form; adjacency is derived on load.
#[derive(Serialize, Deserialize)]
struct TopologyFile {
    kind: TopologyKind,
    nodes: Vec<Node>,
    links: Vec<Link>,
}

impl Topology {
    fn from_parts(kind: TopologyKind, nodes: Vec<Node>, links: Vec<Link>) -> Result<Self> {
        for (i, n) in nodes.iter().enumerate() {
            if n.id as usize != i {
                return Err(Error::invalid_topology(format!(
                    "node ids must be dense: expected {i}, found {}",
                    n.id
                )));
            }
        }
        let mut seen_pairs = BTreeSet::new();
        for (i, l) in links.iter().enumerate() {
            if l.id as usize != i {
                return Err(Error::invalid_topology(format!(
                    "link ids must be dense: expected {i}, found {}",
                    l.id
                )));
            }
            if l.a == l.b {
                return Err(Error::invalid_topology(format!("self loop on node {}", l.a)));
            }
            if l.a as usize >= nodes.len() || l.b as usize >= nodes.len() {
                return Err(Error::invalid_topology(format!(
                    "link {} references unknown node",
                    l.id
                )));
            }
            if l.capacity_bps <= 0.0 {
                return Err(Error::invalid_topology(format!(
                    "link {} has non-positive capacity",
                    l.id
                )));
            }
            if !seen_pairs.insert((l.a.min(l.b), l.a.max(l.b))) {
                return Err(Error::invalid_topology(format!(
                    "duplicate link between {} and {}",
                    l.a, l.b
                )));
            }
        }
        let mut adjacency = vec![Vec::new(); nodes.len()];
        for l in &links {
            adjacency[l.a as usize].push((l.b, l.id));
            adjacency[l.b as usize].push((l.a, l.id));
        }
        for adj in &mut adjacency {
            adj.sort_unstable();
        }
        let topo = Topology { kind, nodes, links, adjacency };
        topo.check_hypervisor_connectivity()?;
        Ok(topo)
    }

    fn check_hypervisor_connectivity(&self) -> Result<()> {
        let hyps: Vec<NodeId> = self.hypervisors().collect();
        let Some(&first) = hyps.first() else { return Ok(()) };
        let mut seen = vec![false; self.nodes.len()];
        let mut queue = VecDeque::from([first]);
        seen[first as usize] = true;
        while let Some(u) = queue.pop_front() {
            for &(v, _) in &self.adjacency[u as usize] {
                if !seen[v as usize] {
                    seen[v as usize] = true;
                    queue.push_back(v);
                }
            }
        }
        if let Some(h) = hyps.iter().find(|&&h| !seen[h as usize]) {
            return Err(Error::invalid_topology(format!(
                "hypervisor {h} is disconnected from hypervisor {first}"
            )));
        }
        Ok(())
    }

    pub fn kind(&self) -> &TopologyKind {
        &self.kind
    }

    pub fn nodes(&self) -> &[Node] {
        &self.nodes
    }

    pub fn links(&self) -> &[Link] {
        &self.links
    }

    pub fn node_count(&self) -> usize {
        self.nodes.len()
    }

    pub fn link_count(&self) -> usize {
        self.links.len()
    }

    pub fn node(&self, id: NodeId) -> &Node {
        &self.nodes[id as usize]
    }

    pub fn link(&self, id: LinkId) -> &Link {
        &self.links[id as usize]
    }

    pub fn height(&self, id: NodeId) -> Option<u32> {
        self.nodes[id as usize].height
    }

    pub fn is_hypervisor(&self, id: NodeId) -> bool {
        self.nodes[id as usize].kind == NodeKind::Hypervisor
    }

    pub fn hypervisors(&self) -> impl Iterator<Item = NodeId> + '_ {
        self.nodes
            .iter()
            .filter(|n| n.kind == NodeKind::Hypervisor)
            .map(|n| n.id)
    }

    pub fn hypervisor_count(&self) -> usize {
        self.hypervisors().count()
    }

    /// Incident (neighbor, link) pairs, sorted by neighbor id.
    pub fn neighbors(&self, id: NodeId) -> &[(NodeId, LinkId)] {
        &self.adjacency[id as usize]
    }

    pub fn link_between(&self, a: NodeId, b: NodeId) -> Option<LinkId> {
        self.adjacency[a as usize]
            .iter()
            .find(|&&(v, _)| v == b)
            .map(|&(_, l)| l)
    }

    /// Assigns heights by multi-source BFS from all core nodes: cores get 1,
    /// every other reachable node 1 + hop distance to the nearest core.
    /// Unreachable nodes keep `height = None`. Idempotent.
    pub fn assign_heights(&mut self) -> Result<()> {
        let cores: Vec<NodeId> = self
            .nodes
            .iter()
            .filter(|n| n.kind == NodeKind::Core)
            .map(|n| n.id)
            .collect();
        if cores.is_empty() {
            return Err(Error::invalid_topology("no core nodes to anchor heights"));
        }
        for n in &mut self.nodes {
            n.height = None;
        }
        let mut queue = VecDeque::new();
        for c in cores {
            self.nodes[c as usize].height = Some(1);
            queue.push_back(c);
        }
        while let Some(u) = queue.pop_front() {
            let hu = self.nodes[u as usize].height.unwrap();
            for i in 0..self.adjacency[u as usize].len() {
                let (v, _) = self.adjacency[u as usize][i];
                if self.nodes[v as usize].height.is_none() {
                    self.nodes[v as usize].height = Some(hu + 1);
                    queue.push_back(v);
                }
            }
        }
        Ok(())
    }

    /// All simple shortest paths between two distinct hypervisors, each as an
    /// ordered link-id list, sorted lexicographically by node sequence.
    /// Returns an empty list for a disconnected pair.
    pub fn equal_cost_shortest_paths(&self, h1: NodeId, h2: NodeId) -> Result<Vec<Vec<LinkId>>> {
        if h1 == h2 {
            return Err(Error::invalid_argument("endpoints must differ"));
        }
        for h in [h1, h2] {
            if !self.is_hypervisor(h) {
                return Err(Error::invalid_argument(format!("node {h} is not a hypervisor")));
            }
        }
        let dist_from = self.bfs_distances(h1);
        let dist_to = self.bfs_distances(h2);
        let Some(total) = dist_from[h2 as usize] else {
            return Ok(Vec::new());
        };
        // DFS over the shortest-path DAG; sorted adjacency yields paths in
        // lexicographic node order.
        let mut paths = Vec::new();
        let mut links = Vec::new();
        self.collect_shortest(h1, h2, total, &dist_from, &dist_to, &mut links, &mut paths);
        Ok(paths)
    }

    fn collect_shortest(
        &self,
        u: NodeId,
        target: NodeId,
        total: u32,
        dist_from: &[Option<u32>],
        dist_to: &[Option<u32>],
        links: &mut Vec<LinkId>,
        out: &mut Vec<Vec<LinkId>>,
    ) {
        if u == target {
            out.push(links.clone());
            return;
        }
        let d = dist_from[u as usize].unwrap();
        for &(v, l) in &self.adjacency[u as usize] {
            if dist_from[v as usize] == Some(d + 1) && dist_to[v as usize] == Some(total - d - 1) {
                links.push(l);
                self.collect_shortest(v, target, total, dist_from, dist_to, links, out);
                links.pop();
            }
        }
    }

    pub(crate) fn bfs_distances(&self, src: NodeId) -> Vec<Option<u32>> {
        let mut dist = vec![None; self.nodes.len()];
        dist[src as usize] = Some(0);
        let mut queue = VecDeque::from([src]);
        while let Some(u) = queue.pop_front() {
            let du = dist[u as usize].unwrap();
            for &(v, _) in &self.adjacency[u as usize] {
                if dist[v as usize].is_none() {
                    dist[v as usize] = Some(du + 1);
                    queue.push_back(v);
                }
            }
        }
        dist
    }

    pub fn to_json_string(&self) -> String {
        let file = TopologyFile {
            kind: self.kind.clone(),
            nodes: self.nodes.clone(),
            links: self.links.clone(),
        };
        serde_json::to_string_pretty(&file).expect("topology serialization cannot fail")
    }

    pub fn from_json_str(s: &str) -> Result<Self> {
        let file: TopologyFile = serde_json::from_str(s)?;
        Topology::from_parts(file.kind, file.nodes, file.links)
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        Ok(std::fs::write(path, self.to_json_string())?)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        Topology::from_json_str(&std::fs::read_to_string(path)?)
    }
}

struct Builder {
    nodes: Vec<Node>,
    links: Vec<Link>,
}

impl Builder {
    fn new() -> Self {
        Builder { nodes: Vec::new(), links: Vec::new() }
    }

    fn add_node(&mut self, kind: NodeKind) -> NodeId {
        let id = self.nodes.len() as NodeId;
        self.nodes.push(Node { id, kind, height: None });
        id
    }

    fn add_link(&mut self, a: NodeId, b: NodeId, capacity_bps: f64) -> LinkId {
        let id = self.links.len() as LinkId;
        self.links.push(Link { id, a, b, capacity_bps });
        id
    }

    fn build(self, kind: TopologyKind) -> Result<Topology> {
        let mut topo = Topology::from_parts(kind, self.nodes, self.links)?;
        topo.assign_heights()?;
        Ok(topo)
    }
}

/// Builds a standard k-ary fat-tree: k pods of k/2 edge and k/2 aggregation
/// switches, k/2 hypervisors per edge switch, (k/2)^2 cores. Node ids are
/// dense, hypervisors first, then edge, aggregation and core switches.
/// Heights come out as core=1, aggregation=2, edge=3, hypervisor=4.
pub fn build_fat_tree(k: u32, capacity_bps: f64) -> Result<Topology> {
    if k < 4 || k % 2 != 0 {
        return Err(Error::invalid_parameter(format!(
            "fat-tree requires even k >= 4, got {k}"
        )));
    }
    if capacity_bps <= 0.0 {
        return Err(Error::invalid_parameter("capacity must be positive"));
    }
    let half = k / 2;
    let n_hosts = k * k * k / 4;
    let n_edges = k * half;
    let mut b = Builder::new();
    for _ in 0..n_hosts {
        b.add_node(NodeKind::Hypervisor);
    }
    let edge_base = n_hosts;
    for _ in 0..n_edges {
        b.add_node(NodeKind::Edge);
    }
    let agg_base = edge_base + n_edges;
    for _ in 0..n_edges {
        b.add_node(NodeKind::Aggregation);
    }
    let core_base = agg_base + n_edges;
    for _ in 0..half * half {
        b.add_node(NodeKind::Core);
    }
    // Host links.
    for pod in 0..k {
        for e in 0..half {
            let edge = edge_base + pod * half + e;
            for s in 0..half {
                let host = (pod * half + e) * half + s;
                b.add_link(host, edge, capacity_bps);
            }
        }
    }
    // Edge-aggregation: full bipartite within a pod.
    for pod in 0..k {
        for e in 0..half {
            let edge = edge_base + pod * half + e;
            for a in 0..half {
                let agg = agg_base + pod * half + a;
                b.add_link(edge, agg, capacity_bps);
            }
        }
    }
    // Aggregation-core: agg a in each pod owns core group a.
    for pod in 0..k {
        for a in 0..half {
            let agg = agg_base + pod * half + a;
            for j in 0..half {
                let core = core_base + a * half + j;
                b.add_link(agg, core, capacity_bps);
            }
        }
    }
    b.build(TopologyKind::FatTree { k })
}

/// Builds the fixed Clos realization used in the experiments: 4 pods of
/// 4 edge and 4 aggregation switches (full bipartite within a pod, 8
/// hypervisors per edge switch) and 8 cores, aggregation j owning cores
/// {2j, 2j+1}. This yields 128 hypervisors, a 2:1 over-subscription at both
/// tiers, and exactly 8 equal-cost shortest paths between hypervisors in
/// different pods.
pub fn build_clos(capacity_bps: f64) -> Result<Topology> {
    if capacity_bps <= 0.0 {
        return Err(Error::invalid_parameter("capacity must be positive"));
    }
    const PODS: u32 = 4;
    const EDGES_PER_POD: u32 = 4;
    const AGGS_PER_POD: u32 = 4;
    const HOSTS_PER_EDGE: u32 = 8;
    const CORES: u32 = 8;
    let n_hosts = PODS * EDGES_PER_POD * HOSTS_PER_EDGE;
    let mut b = Builder::new();
    for _ in 0..n_hosts {
        b.add_node(NodeKind::Hypervisor);
    }
    let edge_base = n_hosts;
    for _ in 0..PODS * EDGES_PER_POD {
        b.add_node(NodeKind::Edge);
    }
    let agg_base = edge_base + PODS * EDGES_PER_POD;
    for _ in 0..PODS * AGGS_PER_POD {
        b.add_node(NodeKind::Aggregation);
    }
    let core_base = agg_base + PODS * AGGS_PER_POD;
    for _ in 0..CORES {
        b.add_node(NodeKind::Core);
    }
    for pod in 0..PODS {
        for e in 0..EDGES_PER_POD {
            let edge = edge_base + pod * EDGES_PER_POD + e;
            for s in 0..HOSTS_PER_EDGE {
                let host = (pod * EDGES_PER_POD + e) * HOSTS_PER_EDGE + s;
                b.add_link(host, edge, capacity_bps);
            }
        }
    }
    for pod in 0..PODS {
        for e in 0..EDGES_PER_POD {
            let edge = edge_base + pod * EDGES_PER_POD + e;
            for a in 0..AGGS_PER_POD {
                let agg = agg_base + pod * AGGS_PER_POD + a;
                b.add_link(edge, agg, capacity_bps);
            }
        }
    }
    for pod in 0..PODS {
        for a in 0..AGGS_PER_POD {
            let agg = agg_base + pod * AGGS_PER_POD + a;
            for j in 0..2 {
                let core = core_base + a * 2 + j;
                b.add_link(agg, core, capacity_bps);
            }
        }
    }
    b.build(TopologyKind::Clos)
}

/// The small lab topology: two edge switches with two hypervisors each, both
/// edges uplinked to three cores. Search on a host pair across the two edges
/// yields exactly three candidates, one per core.
pub fn build_testbed(capacity_bps: f64) -> Result<Topology> {
    let mut b = Builder::new();
    let hosts: Vec<NodeId> = (0..4).map(|_| b.add_node(NodeKind::Hypervisor)).collect();
    let e1 = b.add_node(NodeKind::Edge);
    let e2 = b.add_node(NodeKind::Edge);
    let cores: Vec<NodeId> = (0..3).map(|_| b.add_node(NodeKind::Core)).collect();
    b.add_link(hosts[0], e1, capacity_bps);
    b.add_link(hosts[1], e1, capacity_bps);
    b.add_link(hosts[2], e2, capacity_bps);
    b.add_link(hosts[3], e2, capacity_bps);
    for &c in &cores {
        b.add_link(e1, c, capacity_bps);
    }
    for &c in &cores {
        b.add_link(e2, c, capacity_bps);
    }
    b.build(TopologyKind::Clos)
}

/// Augments a fat-tree with `n_shortcuts` random links between edge switches
/// of distinct pods. Deterministic for a fixed seed; never duplicates a link.
pub fn build_shortcut(base: &Topology, n_shortcuts: u32, seed: u64) -> Result<Topology> {
    use rand::seq::SliceRandom;
    use rand::SeedableRng;

    let TopologyKind::FatTree { k } = *base.kind() else {
        return Err(Error::invalid_parameter("shortcut base must be a fat-tree"));
    };
    let half = k / 2;
    let n_hosts = k * k * k / 4;
    let edge_base = n_hosts;
    let n_edges = k * half;
    // All edge-switch pairs in distinct pods, in a stable order.
    let mut pairs = Vec::new();
    for i in 0..n_edges {
        for j in (i + 1)..n_edges {
            if i / half != j / half {
                pairs.push((edge_base + i, edge_base + j));
            }
        }
    }
    if n_shortcuts as usize > pairs.len() {
        return Err(Error::invalid_parameter(format!(
            "requested {n_shortcuts} shortcuts but only {} distinct inter-pod edge pairs exist",
            pairs.len()
        )));
    }
    let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
    let (chosen, _) = pairs.partial_shuffle(&mut rng, n_shortcuts as usize);
    let mut chosen: Vec<(u32, u32)> = chosen.to_vec();
    chosen.sort_unstable();

    let capacity = base.links().first().map_or(DEFAULT_CAPACITY_BPS, |l| l.capacity_bps);
    let mut nodes = base.nodes().to_vec();
    let mut links = base.links().to_vec();
    for (a, b) in chosen {
        let id = links.len() as LinkId;
        links.push(Link { id, a, b, capacity_bps: capacity });
    }
    for n in &mut nodes {
        n.height = None;
    }
    let mut topo = Topology::from_parts(
        TopologyKind::Shortcut { base_k: k, n_extra: n_shortcuts },
        nodes,
        links,
    )?;
    topo.assign_heights()?;
    Ok(topo)
}

/// Random layered graph for property tests: `layer_sizes[0]` cores,
/// the last layer hypervisors, generic switches in between. Only
/// adjacent-layer edges are generated (probability `edge_prob` each), so
/// heights are exactly the layer index plus one. Every node is guaranteed at
/// least one uplink, and the first node of layer 1 is connected to every
/// core, which keeps the graph connected.
pub fn build_random_layered(
    layer_sizes: &[usize],
    edge_prob: f64,
    capacity_bps: f64,
    seed: u64,
) -> Result<Topology> {
    use rand::Rng;
    use rand::SeedableRng;

    if layer_sizes.len() < 2 {
        return Err(Error::invalid_parameter("need at least two layers"));
    }
    if layer_sizes.iter().any(|&s| s == 0) {
        return Err(Error::invalid_parameter("layer sizes must be positive"));
    }
    if !(0.0..=1.0).contains(&edge_prob) {
        return Err(Error::invalid_parameter("edge probability must be in [0, 1]"));
    }
    let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
    let mut b = Builder::new();
    let last = layer_sizes.len() - 1;
    let mut layers: Vec<Vec<NodeId>> = Vec::new();
    for (i, &size) in layer_sizes.iter().enumerate() {
        let kind = if i == 0 {
            NodeKind::Core
        } else if i == last {
            NodeKind::Hypervisor
        } else {
            NodeKind::Switch
        };
        layers.push((0..size).map(|_| b.add_node(kind)).collect());
    }
    for i in 1..layer_sizes.len() {
        let (upper, lower) = (&layers[i - 1], &layers[i]);
        for &v in lower {
            let mut connected = false;
            for &u in upper {
                if rng.gen::<f64>() < edge_prob {
                    b.add_link(u, v, capacity_bps);
                    connected = true;
                }
            }
            if !connected {
                let u = upper[rng.gen_range(0..upper.len())];
                b.add_link(u, v, capacity_bps);
            }
        }
    }
    // Tie all cores together through the first layer-1 node.
    if layers[0].len() > 1 {
        let anchor = layers[1][0];
        for &c in &layers[0] {
            if b.links.iter().all(|l| !(l.a == c && l.b == anchor || l.a == anchor && l.b == c)) {
                b.add_link(c, anchor, capacity_bps);
            }
        }
    }
    b.build(TopologyKind::RandomLayered)
}

/// Resolves a topology reference: a file path or one of
/// `builtin:ft4|ft8|ft16|clos|testbed|shortcut:ft<k>:<n>:<seed>`.
pub fn resolve_ref(r: &str) -> Result<Topology> {
    if let Some(name) = r.strip_prefix("builtin:") {
        let parts: Vec<&str> = name.split(':').collect();
        return match parts.as_slice() {
            ["clos"] => build_clos(DEFAULT_CAPACITY_BPS),
            ["testbed"] => build_testbed(DEFAULT_CAPACITY_BPS),
            [ft] if ft.starts_with("ft") => {
                let k: u32 = ft[2..]
                    .parse()
                    .map_err(|_| Error::invalid_parameter(format!("bad builtin ref {r}")))?;
                build_fat_tree(k, DEFAULT_CAPACITY_BPS)
            }
            ["shortcut", ft, n, seed] if ft.starts_with("ft") => {
                let k: u32 = ft[2..]
                    .parse()
                    .map_err(|_| Error::invalid_parameter(format!("bad builtin ref {r}")))?;
                let n: u32 = n
                    .parse()
                    .map_err(|_| Error::invalid_parameter(format!("bad shortcut count in {r}")))?;
                let seed: u64 = seed
                    .parse()
                    .map_err(|_| Error::invalid_parameter(format!("bad shortcut seed in {r}")))?;
                let base = build_fat_tree(k, DEFAULT_CAPACITY_BPS)?;
                build_shortcut(&base, n, seed)
            }
            _ => Err(Error::invalid_parameter(format!("unknown builtin topology {r}"))),
        };
    }
    Topology::load(r)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn fat_tree_counts_match_closed_forms() {
        for k in [4u32, 6, 8, 16] {
            let t = build_fat_tree(k, DEFAULT_CAPACITY_BPS).unwrap();
            assert_eq!(t.hypervisor_count() as u32, k * k * k / 4, "k={k}");
            let cores = t.nodes().iter().filter(|n| n.kind == NodeKind::Core).count() as u32;
            assert_eq!(cores, (k / 2) * (k / 2));
            let edges = t.nodes().iter().filter(|n| n.kind == NodeKind::Edge).count() as u32;
            let aggs = t.nodes().iter().filter(|n| n.kind == NodeKind::Aggregation).count() as u32;
            assert_eq!(edges, k * k / 2);
            assert_eq!(aggs, k * k / 2);
            assert_eq!(t.link_count() as u32, 3 * k * k * k / 4);
        }
    }

    #[test]
    fn fat_tree_k4_layer_counts() {
        let t = build_fat_tree(4, DEFAULT_CAPACITY_BPS).unwrap();
        assert_eq!(t.hypervisor_count(), 16);
        let by_kind = |k: NodeKind| t.nodes().iter().filter(|n| n.kind == k).count();
        assert_eq!(by_kind(NodeKind::Core), 4);
        assert_eq!(by_kind(NodeKind::Edge), 8);
        assert_eq!(by_kind(NodeKind::Aggregation), 8);
    }

    #[test]
    fn fat_tree_heights_by_layer() {
        let t = build_fat_tree(4, DEFAULT_CAPACITY_BPS).unwrap();
        for n in t.nodes() {
            let expected = match n.kind {
                NodeKind::Core => 1,
                NodeKind::Aggregation => 2,
                NodeKind::Edge => 3,
                NodeKind::Hypervisor => 4,
                NodeKind::Switch => unreachable!(),
            };
            assert_eq!(n.height, Some(expected));
        }
    }

    #[test]
    fn fat_tree_rejects_bad_k() {
        assert!(matches!(build_fat_tree(5, 1e9), Err(Error::InvalidParameter(_))));
        assert!(matches!(build_fat_tree(2, 1e9), Err(Error::InvalidParameter(_))));
    }

    #[test]
    fn heights_require_cores() {
        let mut b = Builder::new();
        let a = b.add_node(NodeKind::Hypervisor);
        let c = b.add_node(NodeKind::Switch);
        b.add_link(a, c, 1e9);
        assert!(matches!(
            b.build(TopologyKind::RandomLayered),
            Err(Error::InvalidTopology(_))
        ));
    }

    #[test]
    fn heights_on_single_core_host_chain() {
        let mut b = Builder::new();
        let h = b.add_node(NodeKind::Hypervisor);
        let c = b.add_node(NodeKind::Core);
        b.add_link(h, c, 1e9);
        let t = b.build(TopologyKind::RandomLayered).unwrap();
        assert_eq!(t.height(c), Some(1));
        assert_eq!(t.height(h), Some(2));
    }

    #[test]
    fn height_assignment_is_idempotent() {
        let mut t = build_fat_tree(4, DEFAULT_CAPACITY_BPS).unwrap();
        let before = t.clone();
        t.assign_heights().unwrap();
        assert_eq!(t, before);
    }

    /// Exhaustive simple-path enumeration used as an independent check on
    /// `equal_cost_shortest_paths`.
    fn all_simple_paths(t: &Topology, from: NodeId, to: NodeId) -> Vec<Vec<LinkId>> {
        fn go(
            t: &Topology,
            u: NodeId,
            to: NodeId,
            seen: &mut Vec<bool>,
            path: &mut Vec<LinkId>,
            out: &mut Vec<Vec<LinkId>>,
        ) {
            if u == to {
                out.push(path.clone());
                return;
            }
            for &(v, l) in t.neighbors(u) {
                if !seen[v as usize] {
                    seen[v as usize] = true;
                    path.push(l);
                    go(t, v, to, seen, path, out);
                    path.pop();
                    seen[v as usize] = false;
                }
            }
        }
        let mut seen = vec![false; t.node_count()];
        seen[from as usize] = true;
        let mut out = Vec::new();
        go(t, from, to, &mut seen, &mut Vec::new(), &mut out);
        out
    }

    #[test]
    fn k4_inter_pod_pair_has_four_shortest_paths() {
        let t = build_fat_tree(4, DEFAULT_CAPACITY_BPS).unwrap();
        // Host 0 is in pod 0; host 15 in pod 3.
        let paths = t.equal_cost_shortest_paths(0, 15).unwrap();
        assert_eq!(paths.len(), 4);
        for p in &paths {
            assert_eq!(p.len(), 6);
        }
        // Cross-check against brute-force enumeration.
        let all = all_simple_paths(&t, 0, 15);
        let min = all.iter().map(Vec::len).min().unwrap();
        let brute: Vec<_> = all.into_iter().filter(|p| p.len() == min).collect();
        assert_eq!(paths.len(), brute.len());
        for p in &paths {
            assert!(brute.contains(p));
        }
    }

    #[test]
    fn same_edge_pair_has_one_two_hop_path() {
        let t = build_fat_tree(4, DEFAULT_CAPACITY_BPS).unwrap();
        let paths = t.equal_cost_shortest_paths(0, 1).unwrap();
        assert_eq!(paths.len(), 1);
        assert_eq!(paths[0].len(), 2);
    }

    #[test]
    fn k8_inter_pod_pair_has_sixteen_shortest_paths() {
        let t = build_fat_tree(8, DEFAULT_CAPACITY_BPS).unwrap();
        let h2 = t.hypervisor_count() as NodeId - 1;
        let paths = t.equal_cost_shortest_paths(0, h2).unwrap();
        assert_eq!(paths.len(), 16);
    }

    #[test]
    fn clos_has_128_hypervisors_and_8_inter_pod_paths() {
        let t = build_clos(DEFAULT_CAPACITY_BPS).unwrap();
        assert_eq!(t.hypervisor_count(), 128);
        let paths = t.equal_cost_shortest_paths(0, 127).unwrap();
        assert_eq!(paths.len(), 8);
        // Hosts 0 and 1 share an edge switch: one two-hop path.
        let intra = t.equal_cost_shortest_paths(0, 1).unwrap();
        assert_eq!(intra.len(), 1);
        assert_eq!(intra[0].len(), 2);
    }

    #[test]
    fn shortcut_zero_is_identity() {
        let base = build_fat_tree(8, DEFAULT_CAPACITY_BPS).unwrap();
        let t = build_shortcut(&base, 0, 42).unwrap();
        assert_eq!(t.links(), base.links());
        assert_eq!(t.nodes(), base.nodes());
    }

    #[test]
    fn shortcut_adds_inter_pod_edge_links() {
        let base = build_fat_tree(8, DEFAULT_CAPACITY_BPS).unwrap();
        let t = build_shortcut(&base, 1, 42).unwrap();
        assert_eq!(t.link_count(), base.link_count() + 1);
        let l = t.links().last().unwrap();
        assert_eq!(t.node(l.a).kind, NodeKind::Edge);
        assert_eq!(t.node(l.b).kind, NodeKind::Edge);
        let half = 4;
        let edge_base = 128;
        let pod = |id: NodeId| (id - edge_base) / half;
        assert_ne!(pod(l.a), pod(l.b));
    }

    #[test]
    fn shortcut_is_deterministic_per_seed() {
        let base = build_fat_tree(8, DEFAULT_CAPACITY_BPS).unwrap();
        let a = build_shortcut(&base, 5, 7).unwrap();
        let b = build_shortcut(&base, 5, 7).unwrap();
        assert_eq!(a, b);
        let c = build_shortcut(&base, 5, 8).unwrap();
        assert_ne!(a.links(), c.links());
    }

    #[test]
    fn shortcut_does_not_change_heights() {
        let base = build_fat_tree(8, DEFAULT_CAPACITY_BPS).unwrap();
        let t = build_shortcut(&base, 10, 3).unwrap();
        for n in base.nodes() {
            assert_eq!(t.height(n.id), n.height);
        }
    }

    #[test]
    fn shortcut_rejects_excess_count() {
        let base = build_fat_tree(4, DEFAULT_CAPACITY_BPS).unwrap();
        // 8 edge switches, inter-pod pairs: C(8,2) - 4*C(2,2) = 28 - 4 = 24.
        assert!(build_shortcut(&base, 24, 0).is_ok());
        assert!(matches!(build_shortcut(&base, 25, 0), Err(Error::InvalidParameter(_))));
    }

    #[test]
    fn random_layered_heights_follow_layers() {
        let t = build_random_layered(&[3, 4, 5, 6], 0.4, 1e9, 11).unwrap();
        let mut offset = 0;
        for (i, &size) in [3usize, 4, 5, 6].iter().enumerate() {
            for id in offset..offset + size {
                assert_eq!(t.height(id as NodeId), Some(i as u32 + 1));
            }
            offset += size;
        }
    }

    #[test]
    fn json_round_trip_is_bit_exact() {
        let t = build_fat_tree(4, DEFAULT_CAPACITY_BPS).unwrap();
        let s = t.to_json_string();
        let t2 = Topology::from_json_str(&s).unwrap();
        assert_eq!(t, t2);
        assert_eq!(s, t2.to_json_string());

        let r = build_random_layered(&[2, 3, 4], 0.5, 1e9, 3).unwrap();
        let s = r.to_json_string();
        assert_eq!(s, Topology::from_json_str(&s).unwrap().to_json_string());
    }

    #[test]
    fn resolve_ref_builtins() {
        assert_eq!(resolve_ref("builtin:ft4").unwrap().hypervisor_count(), 16);
        assert_eq!(resolve_ref("builtin:clos").unwrap().hypervisor_count(), 128);
        assert_eq!(resolve_ref("builtin:testbed").unwrap().hypervisor_count(), 4);
        let s = resolve_ref("builtin:shortcut:ft8:3:9").unwrap();
        assert_eq!(s.link_count(), 384 + 3);
        assert!(resolve_ref("builtin:nope").is_err());
    }

    #[test]
    fn duplicate_links_rejected() {
        let nodes = vec![
            Node { id: 0, kind: NodeKind::Core, height: None },
            Node { id: 1, kind: NodeKind::Hypervisor, height: None },
        ];
        let links = vec![
            Link { id: 0, a: 0, b: 1, capacity_bps: 1e9 },
            Link { id: 1, a: 1, b: 0, capacity_bps: 1e9 },
        ];
        assert!(matches!(
            Topology::from_parts(TopologyKind::RandomLayered, nodes, links),
            Err(Error::InvalidTopology(_))
        ));
    }
}
