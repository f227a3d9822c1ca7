//! Exhaustive enumeration of desired routing candidates for a VM placement.
//!
//! A routing is *desired* when traffic between any two hypervisors of the
//! placement never bounces between layers more than once: the tree path
//! between them climbs strictly toward the cores, crosses a single apex and
//! descends strictly. Candidates are found by intersecting per-hypervisor
//! upward graphs to obtain the common nodes, then combining downward straight
//! paths from each common node to every hypervisor.
//!
//! All outputs are canonical: links sorted ascending inside a candidate,
//! candidates ordered by (common node, link list), duplicates collapsed onto
//! the lowest common node. Two runs over the same topology produce identical
//! results.

use std::collections::{BTreeMap, BTreeSet, VecDeque};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::topology::{LinkId, NodeId, Topology};

/// Canonical sorted set of hypervisor ids hosting a tenant's VMs. This is the
/// routing-cache key material, so construction enforces the canonical form.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize)]
#[serde(transparent)]
pub struct VmPlacement {
    hypervisors: Vec<NodeId>,
}

impl VmPlacement {
    /// Sorts and deduplicates; rejects an empty set.
    pub fn new(ids: impl IntoIterator<Item = NodeId>) -> Result<Self> {
        let mut hypervisors: Vec<NodeId> = ids.into_iter().collect();
        hypervisors.sort_unstable();
        hypervisors.dedup();
        if hypervisors.is_empty() {
            return Err(Error::invalid_argument("placement must be non-empty"));
        }
        Ok(VmPlacement { hypervisors })
    }

    pub fn hypervisors(&self) -> &[NodeId] {
        &self.hypervisors
    }

    pub fn len(&self) -> usize {
        self.hypervisors.len()
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    pub fn contains(&self, h: NodeId) -> bool {
        self.hypervisors.binary_search(&h).is_ok()
    }

    pub fn iter(&self) -> impl Iterator<Item = NodeId> + '_ {
        self.hypervisors.iter().copied()
    }

    /// Little-endian byte image of the sorted ids; input to the cache hash.
    pub fn key_bytes(&self) -> Vec<u8> {
        let mut out = Vec::with_capacity(self.hypervisors.len() * 4);
        for h in &self.hypervisors {
            out.extend_from_slice(&h.to_le_bytes());
        }
        out
    }
}

impl<'de> Deserialize<'de> for VmPlacement {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        let ids = Vec::<NodeId>::deserialize(d)?;
        VmPlacement::new(ids).map_err(serde::de::Error::custom)
    }
}

/// The subgraph of all upward straight paths starting at one hypervisor.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct UpwardGraph {
    root: NodeId,
    nodes: BTreeSet<NodeId>,
    links: BTreeSet<LinkId>,
}

impl UpwardGraph {
    pub fn root(&self) -> NodeId {
        self.root
    }

    pub fn nodes(&self) -> &BTreeSet<NodeId> {
        &self.nodes
    }

    pub fn links(&self) -> &BTreeSet<LinkId> {
        &self.links
    }

    pub fn contains_node(&self, n: NodeId) -> bool {
        self.nodes.contains(&n)
    }
}

/// A tree overlay spanning a placement, recorded as a sorted physical link
/// list plus the common node it was assembled from.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct RoutingCandidate {
    common_node: NodeId,
    links: Vec<LinkId>,
    placement: VmPlacement,
}

impl RoutingCandidate {
    pub fn new(mut links: Vec<LinkId>, common_node: NodeId, placement: VmPlacement) -> Self {
        links.sort_unstable();
        links.dedup();
        RoutingCandidate { common_node, links, placement }
    }

    pub fn links(&self) -> &[LinkId] {
        &self.links
    }

    pub fn common_node(&self) -> NodeId {
        self.common_node
    }

    pub fn placement(&self) -> &VmPlacement {
        &self.placement
    }

    /// Nodes touched by the candidate's links, plus the common node (a
    /// zero-link candidate still occupies its single node).
    pub fn node_set(&self, topo: &Topology) -> BTreeSet<NodeId> {
        let mut nodes = BTreeSet::new();
        nodes.insert(self.common_node);
        for &l in &self.links {
            let link = topo.link(l);
            nodes.insert(link.a);
            nodes.insert(link.b);
        }
        nodes
    }

    /// True when the induced subgraph is a tree containing every placement
    /// hypervisor.
    pub fn is_spanning_tree(&self, topo: &Topology) -> bool {
        let nodes = self.node_set(topo);
        if self.links.len() + 1 != nodes.len() {
            return false;
        }
        if !self.placement.iter().all(|h| nodes.contains(&h)) {
            return false;
        }
        // Connectivity over the candidate links.
        let mut adj: BTreeMap<NodeId, Vec<NodeId>> = BTreeMap::new();
        for &l in &self.links {
            let link = topo.link(l);
            adj.entry(link.a).or_default().push(link.b);
            adj.entry(link.b).or_default().push(link.a);
        }
        let start = *nodes.iter().next().unwrap();
        let mut seen = BTreeSet::from([start]);
        let mut queue = VecDeque::from([start]);
        while let Some(u) = queue.pop_front() {
            for &v in adj.get(&u).map(Vec::as_slice).unwrap_or(&[]) {
                if seen.insert(v) {
                    queue.push_back(v);
                }
            }
        }
        seen == nodes
    }

    /// Full desired-routing check: spanning tree, and every hypervisor-pair
    /// tree path has a unique height-minimal apex with strictly monotone
    /// height on each side.
    pub fn validate_desired(&self, topo: &Topology) -> std::result::Result<(), String> {
        if !self.is_spanning_tree(topo) {
            return Err("candidate is not a tree spanning its placement".into());
        }
        let hs = self.placement.hypervisors();
        for (i, &a) in hs.iter().enumerate() {
            for &b in &hs[i + 1..] {
                let path = tree_path_nodes(topo, &self.links, a, b)
                    .ok_or_else(|| format!("no tree path between {a} and {b}"))?;
                let heights: Vec<u32> = path
                    .iter()
                    .map(|&n| topo.height(n).ok_or_else(|| format!("node {n} has no height")))
                    .collect::<std::result::Result<_, _>>()?;
                let min = *heights.iter().min().unwrap();
                let apexes = heights.iter().filter(|&&h| h == min).count();
                if apexes != 1 {
                    return Err(format!(
                        "path {a}-{b} has {apexes} height-minimal apexes"
                    ));
                }
                let apex_pos = heights.iter().position(|&h| h == min).unwrap();
                for w in heights[..=apex_pos].windows(2) {
                    if w[1] >= w[0] {
                        return Err(format!("path {a}-{b} is not strictly upward before apex"));
                    }
                }
                for w in heights[apex_pos..].windows(2) {
                    if w[1] <= w[0] {
                        return Err(format!("path {a}-{b} is not strictly downward after apex"));
                    }
                }
            }
        }
        Ok(())
    }
}

/// Node sequence of the unique tree path between two nodes of a link set, or
/// `None` if they are not connected within it.
fn tree_path_nodes(topo: &Topology, links: &[LinkId], from: NodeId, to: NodeId) -> Option<Vec<NodeId>> {
    if from == to {
        return Some(vec![from]);
    }
    let mut adj: BTreeMap<NodeId, Vec<NodeId>> = BTreeMap::new();
    for &l in links {
        let link = topo.link(l);
        adj.entry(link.a).or_default().push(link.b);
        adj.entry(link.b).or_default().push(link.a);
    }
    let mut prev: BTreeMap<NodeId, NodeId> = BTreeMap::new();
    let mut queue = VecDeque::from([from]);
    while let Some(u) = queue.pop_front() {
        if u == to {
            break;
        }
        for &v in adj.get(&u).map(Vec::as_slice).unwrap_or(&[]) {
            if v != from && !prev.contains_key(&v) {
                prev.insert(v, u);
                queue.push_back(v);
            }
        }
    }
    if !prev.contains_key(&to) {
        return None;
    }
    let mut path = vec![to];
    let mut cur = to;
    while cur != from {
        cur = prev[&cur];
        path.push(cur);
    }
    path.reverse();
    Some(path)
}

/// The graph of all upward straight paths starting at hypervisor `h`: node
/// `n` belongs iff a strictly height-decreasing path `h -> .. -> n` exists,
/// links are exactly those on such paths.
pub fn get_upward_graph(topo: &Topology, h: NodeId) -> Result<UpwardGraph> {
    if !topo.is_hypervisor(h) {
        return Err(Error::invalid_parameter(format!("node {h} is not a hypervisor")));
    }
    if topo.height(h).is_none() {
        return Err(Error::invalid_parameter(format!("hypervisor {h} has no height")));
    }
    let mut nodes = BTreeSet::from([h]);
    let mut links = BTreeSet::new();
    let mut queue = VecDeque::from([h]);
    while let Some(u) = queue.pop_front() {
        let hu = topo.height(u).unwrap();
        for &(v, l) in topo.neighbors(u) {
            if topo.height(v) == Some(hu - 1) {
                links.insert(l);
                if nodes.insert(v) {
                    queue.push_back(v);
                }
            }
        }
    }
    Ok(UpwardGraph { root: h, nodes, links })
}

/// Intersection of the node sets of the given upward graphs.
pub fn common_nodes(graphs: &[UpwardGraph]) -> BTreeSet<NodeId> {
    let mut iter = graphs.iter();
    let Some(first) = iter.next() else {
        return BTreeSet::new();
    };
    let mut common = first.nodes.clone();
    for g in iter {
        common = common.intersection(&g.nodes).copied().collect();
    }
    common
}

/// All strictly height-increasing simple paths from `c` down to hypervisor
/// `h`, each as an ordered link list, in lexicographic node order. `c == h`
/// yields one empty path. An empty result signals that `c` is not actually a
/// common node for `h`.
pub fn get_downward_paths(topo: &Topology, c: NodeId, h: NodeId) -> Vec<Vec<LinkId>> {
    if c == h {
        return vec![Vec::new()];
    }
    let (Some(_), Some(hh)) = (topo.height(c), topo.height(h)) else {
        return Vec::new();
    };
    let mut out = Vec::new();
    let mut path = Vec::new();
    descend(topo, c, h, hh, &mut path, &mut out);
    out
}

fn descend(
    topo: &Topology,
    u: NodeId,
    target: NodeId,
    target_height: u32,
    path: &mut Vec<LinkId>,
    out: &mut Vec<Vec<LinkId>>,
) {
    let hu = topo.height(u).unwrap();
    for &(v, l) in topo.neighbors(u) {
        let Some(hv) = topo.height(v) else { continue };
        if hv != hu + 1 {
            continue;
        }
        if v == target {
            path.push(l);
            out.push(path.clone());
            path.pop();
        } else if hv < target_height {
            path.push(l);
            descend(topo, v, target, target_height, path, out);
            path.pop();
        }
    }
}

const COMBINATION_GUARD: u64 = 5_000_000;

/// Enumerates every desired routing candidate for the placement on a layered
/// topology. For each common node the per-hypervisor downward path choices
/// are combined; unions that are not trees are discarded; duplicates collapse
/// onto the lowest common node. A single-hypervisor placement degenerates to
/// one zero-link candidate.
pub fn search_candidates(topo: &Topology, placement: &VmPlacement) -> Result<Vec<RoutingCandidate>> {
    if placement.len() == 1 {
        let h = placement.hypervisors()[0];
        if !topo.is_hypervisor(h) {
            return Err(Error::invalid_parameter(format!("node {h} is not a hypervisor")));
        }
        return Ok(vec![RoutingCandidate::new(Vec::new(), h, placement.clone())]);
    }
    let ups: Vec<UpwardGraph> = placement
        .iter()
        .map(|h| get_upward_graph(topo, h))
        .collect::<Result<_>>()?;
    let commons = common_nodes(&ups);
    let mut by_links: BTreeMap<Vec<LinkId>, RoutingCandidate> = BTreeMap::new();
    for &c in &commons {
        let path_sets: Vec<Vec<Vec<LinkId>>> = placement
            .iter()
            .map(|h| get_downward_paths(topo, c, h))
            .collect();
        combine_path_sets(topo, c, placement, &path_sets, &mut by_links)?;
    }
    Ok(canonical_order(by_links))
}

/// Cartesian product of per-hypervisor path choices rooted at `c`; keeps the
/// unions that form trees. First writer wins in the dedup map, so iterating
/// common nodes in ascending order records the lowest one.
fn combine_path_sets(
    topo: &Topology,
    c: NodeId,
    placement: &VmPlacement,
    path_sets: &[Vec<Vec<LinkId>>],
    by_links: &mut BTreeMap<Vec<LinkId>, RoutingCandidate>,
) -> Result<()> {
    if path_sets.iter().any(Vec::is_empty) {
        return Ok(());
    }
    let combos = path_sets
        .iter()
        .try_fold(1u64, |acc, s| acc.checked_mul(s.len() as u64))
        .filter(|&n| n <= COMBINATION_GUARD);
    if combos.is_none() {
        return Err(Error::invalid_parameter(
            "downward path combination count exceeds the enumeration guard",
        ));
    }
    let mut choice = vec![0usize; path_sets.len()];
    loop {
        let mut union: BTreeSet<LinkId> = BTreeSet::new();
        for (set, &i) in path_sets.iter().zip(&choice) {
            union.extend(&set[i]);
        }
        // A union of paths all rooted at c is connected; it is a tree iff
        // the link count is one less than the node count.
        let mut nodes = BTreeSet::from([c]);
        for &l in &union {
            let link = topo.link(l);
            nodes.insert(link.a);
            nodes.insert(link.b);
        }
        if union.len() + 1 == nodes.len() {
            let links: Vec<LinkId> = union.into_iter().collect();
            by_links
                .entry(links.clone())
                .or_insert_with(|| RoutingCandidate::new(links, c, placement.clone()));
        }
        // Advance the mixed-radix choice vector.
        let mut pos = 0;
        loop {
            if pos == path_sets.len() {
                return Ok(());
            }
            choice[pos] += 1;
            if choice[pos] < path_sets[pos].len() {
                break;
            }
            choice[pos] = 0;
            pos += 1;
        }
    }
}

fn canonical_order(by_links: BTreeMap<Vec<LinkId>, RoutingCandidate>) -> Vec<RoutingCandidate> {
    let mut out: Vec<RoutingCandidate> = by_links.into_values().collect();
    out.sort_by(|a, b| {
        a.common_node
            .cmp(&b.common_node)
            .then_with(|| a.links.cmp(&b.links))
    });
    out
}

/// Candidate enumeration for random (non-layered) topologies: k shortest
/// loop-free paths per hypervisor pair, one choice per pair, unions that form
/// trees kept. The recorded common node is the height-minimal (then lowest
/// id) node of the tree.
pub fn search_random_topology(
    topo: &Topology,
    placement: &VmPlacement,
    k_paths: usize,
) -> Result<Vec<RoutingCandidate>> {
    if k_paths == 0 {
        return Err(Error::invalid_parameter("k_paths must be at least 1"));
    }
    if placement.len() == 1 {
        return search_candidates(topo, placement);
    }
    let hs = placement.hypervisors();
    let mut pair_paths: Vec<Vec<Vec<LinkId>>> = Vec::new();
    for (i, &a) in hs.iter().enumerate() {
        for &b in &hs[i + 1..] {
            let paths = k_shortest_paths(topo, a, b, k_paths);
            if paths.is_empty() {
                return Ok(Vec::new());
            }
            pair_paths.push(paths);
        }
    }
    let combos = pair_paths
        .iter()
        .try_fold(1u64, |acc, s| acc.checked_mul(s.len() as u64))
        .filter(|&n| n <= COMBINATION_GUARD);
    if combos.is_none() {
        return Err(Error::invalid_parameter(
            "path combination count exceeds the enumeration guard",
        ));
    }
    let mut by_links: BTreeMap<Vec<LinkId>, RoutingCandidate> = BTreeMap::new();
    let mut choice = vec![0usize; pair_paths.len()];
    'outer: loop {
        let mut union: BTreeSet<LinkId> = BTreeSet::new();
        for (set, &i) in pair_paths.iter().zip(&choice) {
            union.extend(&set[i]);
        }
        let mut nodes = BTreeSet::new();
        for &l in &union {
            let link = topo.link(l);
            nodes.insert(link.a);
            nodes.insert(link.b);
        }
        if !nodes.is_empty() && union.len() + 1 == nodes.len() {
            let apex = nodes
                .iter()
                .copied()
                .min_by_key(|&n| (topo.height(n).unwrap_or(u32::MAX), n))
                .unwrap();
            let links: Vec<LinkId> = union.into_iter().collect();
            by_links
                .entry(links.clone())
                .or_insert_with(|| RoutingCandidate::new(links, apex, placement.clone()));
        }
        let mut pos = 0;
        loop {
            if pos == pair_paths.len() {
                break 'outer;
            }
            choice[pos] += 1;
            if choice[pos] < pair_paths[pos].len() {
                break;
            }
            choice[pos] = 0;
            pos += 1;
        }
    }
    // The dedup map may hold candidates keyed by identical links under
    // different apexes; canonical ordering stays by (common node, links).
    Ok(canonical_order(by_links))
}

/// Yen's k shortest loop-free paths with deterministic tie-breaking: among
/// equal-length paths the lexicographically smaller node sequence wins.
pub fn k_shortest_paths(topo: &Topology, src: NodeId, dst: NodeId, k: usize) -> Vec<Vec<LinkId>> {
    if k == 0 || src == dst {
        return Vec::new();
    }
    let Some(first) = lex_shortest_path(topo, src, dst, &BTreeSet::new(), &BTreeSet::new()) else {
        return Vec::new();
    };
    let mut accepted: Vec<Vec<NodeId>> = vec![first];
    let mut pool: BTreeSet<(usize, Vec<NodeId>)> = BTreeSet::new();
    while accepted.len() < k {
        let prev = accepted.last().unwrap().clone();
        for i in 0..prev.len() - 1 {
            let spur = prev[i];
            let root = &prev[..=i];
            let mut banned_links: BTreeSet<LinkId> = BTreeSet::new();
            for p in &accepted {
                if p.len() > i + 1 && p[..=i] == *root {
                    if let Some(l) = topo.link_between(p[i], p[i + 1]) {
                        banned_links.insert(l);
                    }
                }
            }
            let banned_nodes: BTreeSet<NodeId> = root[..i].iter().copied().collect();
            if let Some(spur_path) = lex_shortest_path(topo, spur, dst, &banned_nodes, &banned_links)
            {
                let mut total = root[..i].to_vec();
                total.extend(spur_path);
                if !accepted.contains(&total) {
                    pool.insert((total.len(), total));
                }
            }
        }
        let Some(best) = pool.iter().next().cloned() else {
            break;
        };
        pool.remove(&best);
        accepted.push(best.1);
    }
    accepted
        .iter()
        .map(|nodes| {
            nodes
                .windows(2)
                .map(|w| topo.link_between(w[0], w[1]).expect("consecutive path nodes are adjacent"))
                .collect()
        })
        .collect()
}

/// Shortest path by hop count avoiding the given nodes and links; among
/// shortest paths, the lexicographically smallest node sequence. Returned as
/// the node sequence including both endpoints.
fn lex_shortest_path(
    topo: &Topology,
    src: NodeId,
    dst: NodeId,
    banned_nodes: &BTreeSet<NodeId>,
    banned_links: &BTreeSet<LinkId>,
) -> Option<Vec<NodeId>> {
    if banned_nodes.contains(&src) || banned_nodes.contains(&dst) {
        return None;
    }
    let allowed = |n: NodeId, l: LinkId| !banned_nodes.contains(&n) && !banned_links.contains(&l);
    let dist_to = {
        let mut dist = vec![None; topo.node_count()];
        dist[dst as usize] = Some(0u32);
        let mut queue = VecDeque::from([dst]);
        while let Some(u) = queue.pop_front() {
            let du = dist[u as usize].unwrap();
            for &(v, l) in topo.neighbors(u) {
                if allowed(v, l) && dist[v as usize].is_none() {
                    dist[v as usize] = Some(du + 1);
                    queue.push_back(v);
                }
            }
        }
        dist
    };
    dist_to[src as usize]?;
    // Greedy walk: always the smallest-id neighbor that still lies on a
    // shortest path, which is exactly the lexicographically least path.
    let mut path = vec![src];
    let mut cur = src;
    while cur != dst {
        let d = dist_to[cur as usize].unwrap();
        let next = topo
            .neighbors(cur)
            .iter()
            .find(|&&(v, l)| allowed(v, l) && dist_to[v as usize] == Some(d - 1))
            .map(|&(v, _)| v)
            .expect("distance field guarantees a descent neighbor");
        path.push(next);
        cur = next;
    }
    Some(path)
}

const ORACLE_NODE_LIMIT: usize = 40;

/// Exhaustive oracle, independent of the upward-graph search path: for every
/// hypervisor it enumerates all strictly height-decreasing simple paths to
/// every reachable node, then for each node reached by all hypervisors it
/// combines per-hypervisor paths and keeps the unions that are trees.
/// Refuses topologies above [`ORACLE_NODE_LIMIT`] nodes.
pub fn brute_force_candidates(
    topo: &Topology,
    placement: &VmPlacement,
) -> Result<Vec<RoutingCandidate>> {
    if topo.node_count() > ORACLE_NODE_LIMIT {
        return Err(Error::OracleSizeGuard {
            nodes: topo.node_count(),
            limit: ORACLE_NODE_LIMIT,
        });
    }
    if placement.len() == 1 {
        let h = placement.hypervisors()[0];
        if !topo.is_hypervisor(h) {
            return Err(Error::invalid_parameter(format!("node {h} is not a hypervisor")));
        }
        return Ok(vec![RoutingCandidate::new(Vec::new(), h, placement.clone())]);
    }
    // endpoint -> all decreasing paths from h ending there (the empty path
    // keeps h itself as a potential apex).
    let per_host: Vec<BTreeMap<NodeId, Vec<Vec<LinkId>>>> = placement
        .iter()
        .map(|h| {
            let mut reached: BTreeMap<NodeId, Vec<Vec<LinkId>>> = BTreeMap::new();
            reached.entry(h).or_default().push(Vec::new());
            let mut path = Vec::new();
            enumerate_decreasing(topo, h, &mut path, &mut reached);
            reached
        })
        .collect();
    let mut apexes: BTreeSet<NodeId> = per_host[0].keys().copied().collect();
    for m in &per_host[1..] {
        apexes = apexes.iter().copied().filter(|n| m.contains_key(n)).collect();
    }
    let mut by_links: BTreeMap<Vec<LinkId>, RoutingCandidate> = BTreeMap::new();
    for &c in &apexes {
        let path_sets: Vec<Vec<Vec<LinkId>>> =
            per_host.iter().map(|m| m[&c].clone()).collect();
        combine_path_sets(topo, c, placement, &path_sets, &mut by_links)?;
    }
    Ok(canonical_order(by_links))
}

fn enumerate_decreasing(
    topo: &Topology,
    u: NodeId,
    path: &mut Vec<LinkId>,
    reached: &mut BTreeMap<NodeId, Vec<Vec<LinkId>>>,
) {
    let Some(hu) = topo.height(u) else { return };
    for &(v, l) in topo.neighbors(u) {
        if topo.height(v) == Some(hu - 1) {
            path.push(l);
            reached.entry(v).or_default().push(path.clone());
            enumerate_decreasing(topo, v, path, reached);
            path.pop();
        }
    }
}

/// Candidate dump format for golden tests:
/// `{"placement": [...], "candidates": [{"common_node": n, "links": [...]}]}`.
pub fn candidates_to_json(placement: &VmPlacement, candidates: &[RoutingCandidate]) -> serde_json::Value {
    serde_json::json!({
        "placement": placement.hypervisors(),
        "candidates": candidates
            .iter()
            .map(|c| serde_json::json!({"common_node": c.common_node(), "links": c.links()}))
            .collect::<Vec<_>>(),
    })
}
