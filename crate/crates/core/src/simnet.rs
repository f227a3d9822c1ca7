//! Flow-level network simulation: workload size distributions, background
//! tenant load generation, and a max-min fair fluid model for flow
//! completion times.
//!
//! Background load is a static utilization snapshot: each embedded tenant VM
//! is assumed to drive a fixed fraction of the link capacity (default 1/20,
//! so roughly twenty VMs saturate a hypervisor uplink), split evenly across
//! its inter-host peers and charged to every link on the virtual link's tree
//! path. Flow transfers then share the remaining capacity max-min fairly.

use std::collections::BTreeMap;

use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::objective::{select_best, NetworkSnapshot, ObjectiveConfig, VirtualLink};
use crate::search::{search_candidates, RoutingCandidate, VmPlacement};
use crate::topology::{LinkId, NodeId, Topology};

/// Fraction of link capacity one VM's background traffic occupies.
pub const DEFAULT_RATE_UNIT_FRACTION: f64 = 1.0 / 20.0;

/// Empirical flow-size CDF with strictly increasing (size, probability)
/// points ending at probability 1. Sampling is inverse-transform with
/// log-linear interpolation between points.
#[derive(Debug, Clone, PartialEq)]
pub struct FlowSizeDistribution {
    name: String,
    points: Vec<(f64, f64)>,
}

impl FlowSizeDistribution {
    pub fn new(name: impl Into<String>, points: Vec<(f64, f64)>) -> Result<Self> {
        if points.is_empty() {
            return Err(Error::invalid_parameter("flow size CDF needs at least one point"));
        }
        for w in points.windows(2) {
            if w[1].0 <= w[0].0 || w[1].1 <= w[0].1 {
                return Err(Error::invalid_parameter(
                    "flow size CDF points must strictly increase in size and probability",
                ));
            }
        }
        if points[0].0 <= 0.0 || points[0].1 <= 0.0 {
            return Err(Error::invalid_parameter("flow size CDF points must be positive"));
        }
        let last = points.last().unwrap().1;
        if (last - 1.0).abs() > 1e-9 {
            return Err(Error::invalid_parameter("flow size CDF must end at probability 1"));
        }
        Ok(FlowSizeDistribution { name: name.into(), points })
    }

    pub fn name(&self) -> &str {
        &self.name
    }

    pub fn points(&self) -> &[(f64, f64)] {
        &self.points
    }

    /// Heavy-tailed enterprise-style workload: mostly small flows, most
    /// bytes in the multi-megabyte tail.
    pub fn enterprise() -> Self {
        FlowSizeDistribution::new(
            "enterprise",
            vec![
                (200.0, 0.10),
                (1_000.0, 0.30),
                (5_000.0, 0.50),
                (20_000.0, 0.62),
                (100_000.0, 0.72),
                (500_000.0, 0.82),
                (2_000_000.0, 0.90),
                (10_000_000.0, 0.96),
                (100_000_000.0, 1.0),
            ],
        )
        .expect("builtin CDF is valid")
    }

    /// Heavy-tailed data-mining-style workload: many tiny flows, a tail
    /// reaching gigabyte transfers.
    pub fn data_mining() -> Self {
        FlowSizeDistribution::new(
            "datamining",
            vec![
                (100.0, 0.25),
                (500.0, 0.50),
                (2_000.0, 0.63),
                (10_000.0, 0.72),
                (100_000.0, 0.82),
                (1_000_000.0, 0.90),
                (10_000_000.0, 0.95),
                (100_000_000.0, 0.98),
                (1_000_000_000.0, 1.0),
            ],
        )
        .expect("builtin CDF is valid")
    }

    /// Resolves a workload reference: `enterprise`, `datamining`, or a path
    /// to a JSON file holding a `[[size_bytes, cum_prob], ...]` list.
    pub fn by_ref(r: &str) -> Result<Self> {
        match r {
            "enterprise" => Ok(Self::enterprise()),
            "datamining" | "data_mining" => Ok(Self::data_mining()),
            path => Self::from_json_file(path),
        }
    }

    pub fn from_json_file(path: impl AsRef<std::path::Path>) -> Result<Self> {
        let name = path
            .as_ref()
            .file_stem()
            .map(|s| s.to_string_lossy().into_owned())
            .unwrap_or_else(|| "custom".to_string());
        let raw: Vec<(f64, f64)> = serde_json::from_str(&std::fs::read_to_string(path)?)?;
        FlowSizeDistribution::new(name, raw)
    }

    pub fn to_json_string(&self) -> String {
        serde_json::to_string_pretty(&self.points).expect("CDF serialization cannot fail")
    }

    /// Inverse-transform sample: sizes below the first point saturate to it,
    /// interior draws interpolate log-linearly between neighbors.
    pub fn sample(&self, rng: &mut impl Rng) -> f64 {
        let u: f64 = rng.gen();
        let (first_size, first_p) = self.points[0];
        if u <= first_p {
            return first_size;
        }
        for w in self.points.windows(2) {
            let (s0, p0) = w[0];
            let (s1, p1) = w[1];
            if u <= p1 {
                let t = (u - p0) / (p1 - p0);
                return (s0.ln() + t * (s1.ln() - s0.ln())).exp();
            }
        }
        self.points.last().unwrap().0
    }
}

/// Samples one flow size from the distribution.
pub fn sample_flow_size(dist: &FlowSizeDistribution, rng: &mut impl Rng) -> f64 {
    dist.sample(rng)
}

/// One simulated transfer. `fct` is filled by [`simulate_fct`]; a starved
/// flow (zero sharable capacity on its path) gets `fct = +inf`.
#[derive(Debug, Clone, PartialEq)]
pub struct Flow {
    pub id: u64,
    pub src_host: NodeId,
    pub dst_host: NodeId,
    pub size_bytes: f64,
    pub start: f64,
    pub path: Vec<LinkId>,
    pub fct: Option<f64>,
}

impl Flow {
    pub fn new(id: u64, src_host: NodeId, dst_host: NodeId, size_bytes: f64, start: f64) -> Self {
        Flow { id, src_host, dst_host, size_bytes, start, path: Vec::new(), fct: None }
    }

    pub fn is_starved(&self) -> bool {
        self.fct.is_some_and(f64::is_infinite)
    }
}

/// Background tenant population parameters. The load degree is the VM
/// over-subscription ratio N:1, N = total VMs / hypervisor count.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BackgroundConfig {
    /// Average VMs per tenant; the last tenant absorbs the remainder needed
    /// to hit the load degree.
    pub vms_per_tenant: u32,
    /// Hypervisors per tenant placement.
    pub vtn_scale: u32,
    pub target_load_degree: f64,
    /// Per-VM background rate as a fraction of link capacity.
    pub rate_unit_fraction: f64,
}

impl BackgroundConfig {
    pub fn new(vms_per_tenant: u32, vtn_scale: u32, target_load_degree: f64) -> Self {
        BackgroundConfig {
            vms_per_tenant,
            vtn_scale,
            target_load_degree,
            rate_unit_fraction: DEFAULT_RATE_UNIT_FRACTION,
        }
    }
}

/// A tenant: VM-to-hypervisor map, canonical placement, and the embedded
/// routing once one is chosen.
#[derive(Debug, Clone, PartialEq)]
pub struct Tenant {
    pub id: u64,
    pub vm_hosts: BTreeMap<u32, NodeId>,
    pub placement: VmPlacement,
    pub routing: Option<RoutingCandidate>,
    pub vlan: Option<u16>,
}

impl Tenant {
    pub fn new(id: u64, vm_hosts: BTreeMap<u32, NodeId>) -> Result<Self> {
        let placement = VmPlacement::new(vm_hosts.values().copied())?;
        Ok(Tenant { id, vm_hosts, placement, routing: None, vlan: None })
    }

    /// All VM pairs of the tenant, as virtual links between their hosts
    /// (including intra-host pairs; scoring filters them by config).
    pub fn virtual_links(&self) -> Vec<VirtualLink> {
        let vms: Vec<(u32, NodeId)> = self.vm_hosts.iter().map(|(&v, &h)| (v, h)).collect();
        let mut out = Vec::with_capacity(vms.len() * (vms.len().saturating_sub(1)) / 2);
        for (i, &(va, ha)) in vms.iter().enumerate() {
            for &(vb, hb) in &vms[i + 1..] {
                out.push(VirtualLink::new(self.id, va, vb, ha, hb));
            }
        }
        out
    }

    /// Inter-host virtual links only.
    pub fn fabric_virtual_links(&self) -> Vec<VirtualLink> {
        self.virtual_links().into_iter().filter(|v| !v.is_intra_host()).collect()
    }
}

/// Load degree (VM over-subscription ratio) for a VM total on a topology
/// with `hypervisors` hosts.
pub fn load_degree(total_vms: u64, hypervisors: usize) -> f64 {
    total_vms as f64 / hypervisors.max(1) as f64
}

/// Per-link utilization contribution of one tenant's embedded routing.
/// Each VM spends `rate_unit_fraction` of a link capacity, split evenly over
/// its peers, so an inter-host virtual link charges
/// `rate_unit_fraction / (vm_count - 1)` to every link on its path.
pub fn apply_background_load(
    topo: &Topology,
    tenant: &Tenant,
    routing: &RoutingCandidate,
    rate_unit_fraction: f64,
    snapshot: &mut NetworkSnapshot,
    sign: f64,
) -> Result<()> {
    let vm_count = tenant.vm_hosts.len();
    if vm_count < 2 {
        return Ok(());
    }
    let per_vlink = rate_unit_fraction / (vm_count - 1) as f64;
    let mut path_memo: BTreeMap<(NodeId, NodeId), Vec<LinkId>> = BTreeMap::new();
    for vl in tenant.fabric_virtual_links() {
        let key = (vl.host_a.min(vl.host_b), vl.host_a.max(vl.host_b));
        if !path_memo.contains_key(&key) {
            let p = crate::objective::path_for_virtual_link(topo, routing, key.0, key.1)?;
            path_memo.insert(key, p);
        }
        for &l in &path_memo[&key] {
            snapshot.add(l, sign * per_vlink);
        }
    }
    Ok(())
}

/// Populates the fabric with background tenants at the target load degree.
/// Tenants are placed on random hypervisor sets, embedded one by one via
/// [`select_best`] against the evolving snapshot, and their load accumulated
/// into it. Deterministic for a fixed seed; the achieved load degree must
/// land within 5% of the target.
pub fn generate_background(
    topo: &Topology,
    cfg: &BackgroundConfig,
    seed: u64,
) -> Result<(Vec<Tenant>, NetworkSnapshot)> {
    let hypervisors: Vec<NodeId> = topo.hypervisors().collect();
    let n_hosts = hypervisors.len();
    if cfg.vtn_scale == 0 {
        return Err(Error::invalid_parameter("vtn_scale must be at least 1"));
    }
    if cfg.vtn_scale as usize > n_hosts {
        return Err(Error::invalid_parameter(format!(
            "vtn_scale {} exceeds the {} hypervisors",
            cfg.vtn_scale, n_hosts
        )));
    }
    if cfg.vms_per_tenant < cfg.vtn_scale {
        return Err(Error::invalid_parameter(
            "vms_per_tenant must be at least vtn_scale",
        ));
    }
    if cfg.target_load_degree < 0.0 {
        return Err(Error::invalid_parameter("load degree must be non-negative"));
    }
    if !(cfg.rate_unit_fraction > 0.0 && cfg.rate_unit_fraction <= 1.0) {
        return Err(Error::invalid_parameter("rate_unit_fraction must be in (0, 1]"));
    }

    let total_vms = (cfg.target_load_degree * n_hosts as f64).round() as u64;
    let mut sizes: Vec<u32> = Vec::new();
    let mut remaining = total_vms;
    while remaining >= cfg.vms_per_tenant as u64 {
        sizes.push(cfg.vms_per_tenant);
        remaining -= cfg.vms_per_tenant as u64;
    }
    if remaining > 0 {
        if remaining >= cfg.vtn_scale as u64 {
            sizes.push(remaining as u32);
        } else if let Some(last) = sizes.last_mut() {
            *last += remaining as u32;
        } else {
            return Err(Error::invalid_parameter(format!(
                "target load degree {} is infeasible: {} VMs cannot form a tenant of scale {}",
                cfg.target_load_degree, total_vms, cfg.vtn_scale
            )));
        }
    }
    if cfg.target_load_degree > 0.0 {
        if sizes.is_empty() {
            return Err(Error::invalid_parameter(format!(
                "target load degree {} is infeasible on {} hypervisors",
                cfg.target_load_degree, n_hosts
            )));
        }
        let achieved = load_degree(sizes.iter().map(|&s| s as u64).sum(), n_hosts);
        let rel = (achieved - cfg.target_load_degree).abs() / cfg.target_load_degree;
        if rel > 0.05 {
            return Err(Error::invalid_parameter(format!(
                "achieved load degree {achieved:.3} misses target {} by more than 5%",
                cfg.target_load_degree
            )));
        }
    }

    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut snapshot = NetworkSnapshot::zeros(topo);
    let mut tenants = Vec::with_capacity(sizes.len());
    let objective = ObjectiveConfig::default();
    for (i, &n_vms) in sizes.iter().enumerate() {
        let host_idx = rand::seq::index::sample(&mut rng, n_hosts, cfg.vtn_scale as usize);
        let mut hosts: Vec<NodeId> = host_idx.iter().map(|i| hypervisors[i]).collect();
        hosts.sort_unstable();
        let vm_hosts: BTreeMap<u32, NodeId> = (0..n_vms)
            .map(|v| (v, hosts[v as usize % hosts.len()]))
            .collect();
        let mut tenant = Tenant::new(i as u64, vm_hosts)?;
        let candidates = search_candidates(topo, &tenant.placement)?;
        if candidates.is_empty() {
            return Err(Error::NoCandidates);
        }
        let vlinks = tenant.virtual_links();
        let (best, _) = select_best(topo, &candidates, &vlinks, &snapshot, &objective)?;
        let routing = best.clone();
        apply_background_load(topo, &tenant, &routing, cfg.rate_unit_fraction, &mut snapshot, 1.0)?;
        tenant.routing = Some(routing);
        tenants.push(tenant);
    }
    Ok((tenants, snapshot))
}

/// Max-min fair rates by progressive filling: all unfrozen flows grow at the
/// same rate; when a link saturates its flows freeze. Flows with an empty
/// link list get an infinite rate. `capacities` must be the *sharable*
/// capacities (background already subtracted).
pub fn max_min_rates(capacities: &[f64], flow_links: &[Vec<usize>]) -> Vec<f64> {
    let n = flow_links.len();
    let mut rates = vec![0.0f64; n];
    let mut frozen = vec![false; n];
    let mut remaining: Vec<f64> = capacities.to_vec();
    let mut active_count = vec![0usize; capacities.len()];
    for (f, links) in flow_links.iter().enumerate() {
        if links.is_empty() {
            rates[f] = f64::INFINITY;
            frozen[f] = true;
        } else {
            for &l in links {
                active_count[l] += 1;
            }
        }
    }
    // A flow crossing an already exhausted link is starved at rate 0.
    for (f, links) in flow_links.iter().enumerate() {
        if !frozen[f] && links.iter().any(|&l| capacities[l] <= 0.0) {
            frozen[f] = true;
            for &l in links {
                active_count[l] -= 1;
            }
        }
    }
    loop {
        let mut increment = f64::INFINITY;
        for (l, &cap) in remaining.iter().enumerate() {
            if active_count[l] > 0 {
                increment = increment.min(cap / active_count[l] as f64);
            }
        }
        if !increment.is_finite() {
            break;
        }
        let mut saturated: Vec<usize> = Vec::new();
        for (l, cap) in remaining.iter_mut().enumerate() {
            if active_count[l] > 0 {
                *cap -= increment * active_count[l] as f64;
                if *cap <= 1e-12 * capacities[l].max(1.0) {
                    saturated.push(l);
                }
            }
        }
        for f in 0..n {
            if !frozen[f] {
                rates[f] += increment;
            }
        }
        let mut froze_any = false;
        for (f, links) in flow_links.iter().enumerate() {
            if !frozen[f] && links.iter().any(|&l| saturated.contains(&l)) {
                frozen[f] = true;
                froze_any = true;
                for &l in links {
                    active_count[l] -= 1;
                }
            }
        }
        if !froze_any {
            break;
        }
    }
    rates
}

/// Event-driven progressive-filling simulation. At every flow arrival or
/// completion the max-min fair rates are recomputed over the sharable
/// capacity (capacity times one minus background utilization). Flows whose
/// path crosses a zero-sharable link are flagged starved with infinite fct
/// instead of hanging.
pub fn simulate_fct(
    topo: &Topology,
    flows: &mut [Flow],
    background: &NetworkSnapshot,
) -> Result<()> {
    let sharable: Vec<f64> = topo
        .links()
        .iter()
        .map(|l| l.capacity_bps * (1.0 - background.utilization(l.id)).max(0.0))
        .collect();
    let mut remaining: Vec<f64> = flows.iter().map(|f| f.size_bytes * 8.0).collect();
    let mut done: Vec<bool> = vec![false; flows.len()];

    for (i, f) in flows.iter_mut().enumerate() {
        if f.path.iter().any(|&l| sharable[l as usize] <= 0.0) {
            f.fct = Some(f64::INFINITY);
            done[i] = true;
        } else if f.path.is_empty() {
            // Same-host transfer: no fabric involved, completes immediately.
            f.fct = Some(0.0);
            done[i] = true;
        }
    }

    let mut order: Vec<usize> = (0..flows.len()).filter(|&i| !done[i]).collect();
    order.sort_by(|&a, &b| {
        flows[a]
            .start
            .total_cmp(&flows[b].start)
            .then_with(|| flows[a].id.cmp(&flows[b].id))
    });
    let mut next_arrival = 0usize;
    let mut active: Vec<usize> = Vec::new();
    let mut now = f64::NEG_INFINITY;
    // Every iteration admits an arrival or completes a flow, so this bound
    // is generous; hitting it means the fluid model stalled.
    let mut guard = 4 * order.len() + 16;

    while next_arrival < order.len() || !active.is_empty() {
        if guard == 0 {
            return Err(Error::invalid_argument("fluid simulation made no progress"));
        }
        guard -= 1;
        if active.is_empty() {
            now = flows[order[next_arrival]].start;
            while next_arrival < order.len() && flows[order[next_arrival]].start <= now {
                active.push(order[next_arrival]);
                next_arrival += 1;
            }
        }
        let flow_links: Vec<Vec<usize>> = active
            .iter()
            .map(|&i| flows[i].path.iter().map(|&l| l as usize).collect())
            .collect();
        let rates = max_min_rates(&sharable, &flow_links);
        // Earliest completion under the current rates.
        let mut t_complete = f64::INFINITY;
        for (k, &i) in active.iter().enumerate() {
            if rates[k] > 0.0 {
                t_complete = t_complete.min(now + remaining[i] / rates[k]);
            }
        }
        let t_arrive = if next_arrival < order.len() {
            flows[order[next_arrival]].start
        } else {
            f64::INFINITY
        };
        if !t_complete.is_finite() && !t_arrive.is_finite() {
            // Only zero-rate flows remain; they are starved.
            for &i in &active {
                flows[i].fct = Some(f64::INFINITY);
            }
            break;
        }
        let t_next = t_complete.min(t_arrive);
        for (k, &i) in active.iter().enumerate() {
            remaining[i] -= rates[k] * (t_next - now);
        }
        now = t_next;
        let mut still_active = Vec::with_capacity(active.len());
        for &i in &active {
            // Completion within 1e-9 relative of the transfer size absorbs
            // the float reconstruction error of remaining -= rate * dt.
            let tol = (flows[i].size_bytes * 8.0).max(1.0) * 1e-9;
            if remaining[i] <= tol {
                flows[i].fct = Some(now - flows[i].start);
                done[i] = true;
            } else {
                still_active.push(i);
            }
        }
        active = still_active;
        while next_arrival < order.len() && flows[order[next_arrival]].start <= now {
            active.push(order[next_arrival]);
            next_arrival += 1;
        }
    }
    Ok(())
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FctSummary {
    pub average: f64,
    pub finished: usize,
    pub starved: usize,
}

/// Arithmetic mean FCT over the non-starved flows; starved flows are counted
/// separately. Errors when no flow finished.
pub fn average_fct(flows: &[Flow]) -> Result<FctSummary> {
    let mut sum = 0.0;
    let mut finished = 0usize;
    let mut starved = 0usize;
    for f in flows {
        match f.fct {
            Some(v) if v.is_finite() => {
                sum += v;
                finished += 1;
            }
            Some(_) => starved += 1,
            None => {
                return Err(Error::invalid_argument(format!("flow {} has no fct", f.id)));
            }
        }
    }
    if finished == 0 {
        return Err(Error::AllFlowsStarved);
    }
    Ok(FctSummary { average: sum / finished as f64, finished, starved })
}
