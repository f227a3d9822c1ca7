//! Congestion scoring of routing candidates and arg-min selection.
//!
//! A candidate's score is the weighted mean congestion over the tenant's
//! virtual links: sum of lambda_i * F(l_i) divided by the number of virtual
//! links. F defaults to the highest utilization among the physical links
//! carrying the virtual link; bounded-sum and hop-count variants are also
//! provided. Both F and the weights are configurable.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::search::RoutingCandidate;
use crate::topology::{LinkId, NodeId, Topology};

/// A communicating VM pair and the hypervisors hosting the two ends.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VirtualLink {
    pub tenant: u64,
    pub vm_a: u32,
    pub vm_b: u32,
    pub host_a: NodeId,
    pub host_b: NodeId,
    /// lambda weight; 1 means equally weighted.
    pub weight: f64,
}

impl VirtualLink {
    pub fn new(tenant: u64, vm_a: u32, vm_b: u32, host_a: NodeId, host_b: NodeId) -> Self {
        VirtualLink { tenant, vm_a, vm_b, host_a, host_b, weight: 1.0 }
    }

    pub fn is_intra_host(&self) -> bool {
        self.host_a == self.host_b
    }
}

/// Per-link average utilization in [0, 1]; values are clamped on write.
#[derive(Debug, Clone, PartialEq)]
pub struct NetworkSnapshot {
    utilization: Vec<f64>,
}

impl NetworkSnapshot {
    pub fn zeros(topo: &Topology) -> Self {
        NetworkSnapshot { utilization: vec![0.0; topo.link_count()] }
    }

    pub fn utilization(&self, link: LinkId) -> f64 {
        self.utilization[link as usize]
    }

    pub fn set(&mut self, link: LinkId, value: f64) {
        self.utilization[link as usize] = value.clamp(0.0, 1.0);
    }

    /// Adds a delta (may be negative) and clamps back into [0, 1].
    pub fn add(&mut self, link: LinkId, delta: f64) {
        let v = self.utilization[link as usize] + delta;
        self.utilization[link as usize] = v.clamp(0.0, 1.0);
    }

    pub fn len(&self) -> usize {
        self.utilization.len()
    }

    pub fn is_empty(&self) -> bool {
        self.utilization.is_empty()
    }

    pub fn values(&self) -> &[f64] {
        &self.utilization
    }
}

/// The congestion function applied per virtual link.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FVariant {
    /// Highest utilization among the physical links carrying the virtual
    /// link (the default).
    #[default]
    MaxUtil,
    /// Sum of utilizations along the carrying path.
    SumUtil,
    /// Hop count of the carrying path.
    Hops,
}

/// Weight assignment for the virtual links of a request.
#[derive(Debug, Clone, PartialEq, Default)]
pub enum LambdaConfig {
    /// Use each virtual link's own weight (1 unless set otherwise).
    #[default]
    Uniform,
    /// Positional override, aligned with the virtual-link list.
    PerLink(Vec<f64>),
}

impl Serialize for LambdaConfig {
    fn serialize<S: serde::Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        match self {
            LambdaConfig::Uniform => s.serialize_str("uniform"),
            LambdaConfig::PerLink(v) => v.serialize(s),
        }
    }
}

impl<'de> Deserialize<'de> for LambdaConfig {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        #[derive(Deserialize)]
        #[serde(untagged)]
        enum Repr {
            Name(String),
            PerLink(Vec<f64>),
        }
        match Repr::deserialize(d)? {
            Repr::Name(n) if n == "uniform" => Ok(LambdaConfig::Uniform),
            Repr::Name(n) => Err(serde::de::Error::custom(format!("unknown lambda config {n}"))),
            Repr::PerLink(v) => Ok(LambdaConfig::PerLink(v)),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ObjectiveConfig {
    #[serde(default)]
    pub f: FVariant,
    #[serde(default)]
    pub lambda: LambdaConfig,
    /// Intra-hypervisor VM pairs contribute F = 0 and are excluded from the
    /// divisor unless this is set.
    #[serde(default)]
    pub include_intra_host: bool,
}

impl Default for ObjectiveConfig {
    fn default() -> Self {
        ObjectiveConfig {
            f: FVariant::MaxUtil,
            lambda: LambdaConfig::Uniform,
            include_intra_host: false,
        }
    }
}

/// Adjacency view over a candidate's links for repeated path extraction.
struct CandidateTree {
    adj: BTreeMap<NodeId, Vec<(NodeId, LinkId)>>,
}

impl CandidateTree {
    fn new(topo: &Topology, candidate: &RoutingCandidate) -> Self {
        let mut adj: BTreeMap<NodeId, Vec<(NodeId, LinkId)>> = BTreeMap::new();
        for &l in candidate.links() {
            let link = topo.link(l);
            adj.entry(link.a).or_default().push((link.b, l));
            adj.entry(link.b).or_default().push((link.a, l));
        }
        CandidateTree { adj }
    }

    /// The unique path between two spanned nodes, as an ordered link list.
    fn path(&self, from: NodeId, to: NodeId) -> Option<Vec<LinkId>> {
        if from == to {
            return Some(Vec::new());
        }
        let mut prev: BTreeMap<NodeId, (NodeId, LinkId)> = BTreeMap::new();
        let mut queue = std::collections::VecDeque::from([from]);
        while let Some(u) = queue.pop_front() {
            if u == to {
                break;
            }
            for &(v, l) in self.adj.get(&u).map(Vec::as_slice).unwrap_or(&[]) {
                if v != from && !prev.contains_key(&v) {
                    prev.insert(v, (u, l));
                    queue.push_back(v);
                }
            }
        }
        if !prev.contains_key(&to) {
            return None;
        }
        let mut links = Vec::new();
        let mut cur = to;
        while cur != from {
            let (p, l) = prev[&cur];
            links.push(l);
            cur = p;
        }
        links.reverse();
        Some(links)
    }

    fn congestion(&self, path: &[LinkId], snapshot: &NetworkSnapshot, f: FVariant) -> f64 {
        match f {
            FVariant::MaxUtil => path
                .iter()
                .map(|&l| snapshot.utilization(l))
                .fold(0.0, f64::max),
            FVariant::SumUtil => path.iter().map(|&l| snapshot.utilization(l)).sum(),
            FVariant::Hops => path.len() as f64,
        }
    }

    fn check_spanned(&self, candidate: &RoutingCandidate, host: NodeId) -> Result<()> {
        if !candidate.placement().contains(host) {
            return Err(Error::invalid_argument(format!(
                "host {host} is not in the candidate's placement"
            )));
        }
        // Zero-link candidates span exactly their common node.
        if candidate.links().is_empty() && host != candidate.common_node() {
            return Err(Error::invalid_argument(format!("host {host} not spanned")));
        }
        if !candidate.links().is_empty() && !self.adj.contains_key(&host) {
            return Err(Error::invalid_argument(format!("host {host} not spanned")));
        }
        Ok(())
    }
}

/// The unique tree path carrying a virtual link between two hosts of the
/// candidate's placement; empty when both ends share a hypervisor.
pub fn path_for_virtual_link(
    topo: &Topology,
    candidate: &RoutingCandidate,
    host_a: NodeId,
    host_b: NodeId,
) -> Result<Vec<LinkId>> {
    let tree = CandidateTree::new(topo, candidate);
    tree.check_spanned(candidate, host_a)?;
    tree.check_spanned(candidate, host_b)?;
    tree.path(host_a, host_b)
        .ok_or_else(|| Error::invalid_argument("hosts are not connected within the candidate"))
}

/// F(l) for one virtual link under the given variant.
pub fn congestion_of_virtual_link(
    topo: &Topology,
    candidate: &RoutingCandidate,
    vlink: &VirtualLink,
    snapshot: &NetworkSnapshot,
    f: FVariant,
) -> Result<f64> {
    let path = path_for_virtual_link(topo, candidate, vlink.host_a, vlink.host_b)?;
    let tree = CandidateTree::new(topo, candidate);
    Ok(tree.congestion(&path, snapshot, f))
}

/// Weighted mean congestion of the candidate over the virtual links:
/// sum(lambda_i * F(l_i)) / n. The divisor is the virtual-link count, not the
/// weight sum. Intra-host links are dropped from n by default; with every
/// link dropped the score is 0.
pub fn score(
    topo: &Topology,
    candidate: &RoutingCandidate,
    vlinks: &[VirtualLink],
    snapshot: &NetworkSnapshot,
    config: &ObjectiveConfig,
) -> Result<f64> {
    if vlinks.is_empty() {
        return Err(Error::invalid_argument("at least one virtual link is required"));
    }
    if let LambdaConfig::PerLink(ws) = &config.lambda {
        if ws.len() != vlinks.len() {
            return Err(Error::invalid_argument(format!(
                "lambda list has {} entries for {} virtual links",
                ws.len(),
                vlinks.len()
            )));
        }
    }
    let tree = CandidateTree::new(topo, candidate);
    let mut path_memo: BTreeMap<(NodeId, NodeId), Vec<LinkId>> = BTreeMap::new();
    let mut total = 0.0;
    let mut n = 0u64;
    for (i, vl) in vlinks.iter().enumerate() {
        if vl.is_intra_host() && !config.include_intra_host {
            continue;
        }
        tree.check_spanned(candidate, vl.host_a)?;
        tree.check_spanned(candidate, vl.host_b)?;
        let key = (vl.host_a.min(vl.host_b), vl.host_a.max(vl.host_b));
        let path = match path_memo.get(&key) {
            Some(p) => p,
            None => {
                let p = tree.path(key.0, key.1).ok_or_else(|| {
                    Error::invalid_argument("hosts are not connected within the candidate")
                })?;
                path_memo.entry(key).or_insert(p)
            }
        };
        let f = tree.congestion(path, snapshot, config.f);
        let lambda = match &config.lambda {
            LambdaConfig::Uniform => vl.weight,
            LambdaConfig::PerLink(ws) => ws[i],
        };
        total += lambda * f;
        n += 1;
    }
    if n == 0 {
        return Ok(0.0);
    }
    Ok(total / n as f64)
}

/// Arg-min of [`score`] over the candidates. Ties break by canonical
/// candidate order: lowest common node, then lexicographic link list.
pub fn select_best<'a>(
    topo: &Topology,
    candidates: &'a [RoutingCandidate],
    vlinks: &[VirtualLink],
    snapshot: &NetworkSnapshot,
    config: &ObjectiveConfig,
) -> Result<(&'a RoutingCandidate, f64)> {
    if candidates.is_empty() {
        return Err(Error::NoCandidates);
    }
    let mut best: Option<(&RoutingCandidate, f64)> = None;
    for c in candidates {
        let s = score(topo, c, vlinks, snapshot, config)?;
        best = match best {
            None => Some((c, s)),
            Some((bc, bs)) => {
                let ord = s.total_cmp(&bs).then_with(|| {
                    (c.common_node(), c.links()).cmp(&(bc.common_node(), bc.links()))
                });
                if ord.is_lt() {
                    Some((c, s))
                } else {
                    Some((bc, bs))
                }
            }
        };
    }
    Ok(best.unwrap())
}
