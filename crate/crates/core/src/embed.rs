//! End-to-end routing-update pipeline: cache lookup or search, candidate
//! selection, VLAN allocation and the switch-configuration plan, plus the
//! batch configuration latency model.
//!
//! Enforcing a routing means tagging every switch port on the overlay with
//! the tenant's VLAN. Tasks for one switch execute as a single batch (one
//! base delay plus a small per-task increment) and batches on different
//! switches run in parallel, so the total latency is the per-switch maximum.

use std::collections::{BTreeMap, BTreeSet};

use serde::{Deserialize, Serialize};

use crate::cache::{CacheStats, RoutingCache};
use crate::error::{Error, Result};
use crate::objective::{select_best, NetworkSnapshot, ObjectiveConfig};
use crate::search::{search_candidates, RoutingCandidate, VmPlacement};
use crate::simnet::Tenant;
use crate::topology::{LinkId, NodeId, NodeKind, Topology};

pub const VLAN_MIN: u16 = 1;
pub const VLAN_MAX: u16 = 4094;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum UpdateTrigger {
    NewTenant,
    Congestion,
    Failure,
    Departure,
    Rebalance,
}

#[derive(Debug, Clone, PartialEq)]
pub struct UpdateRequest {
    pub tenant: u64,
    pub placement: VmPlacement,
    pub objective: ObjectiveConfig,
    pub trigger: UpdateTrigger,
}

/// One switch-port configuration task: associate `vlan` with the port that
/// link `port` occupies on `switch`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct ConfigTask {
    pub switch: NodeId,
    pub port: LinkId,
    pub vlan: u16,
}

/// Batch configuration latency: `t_base` per switch batch plus `epsilon` per
/// additional task in the batch.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LatencyModel {
    pub t_base: f64,
    pub epsilon: f64,
}

impl Default for LatencyModel {
    fn default() -> Self {
        // Defaults keep a 576-task single-switch batch under 1.5x the
        // single-task delay.
        LatencyModel { t_base: 10.0, epsilon: 0.005 }
    }
}

impl LatencyModel {
    pub fn validate(&self) -> Result<()> {
        if self.t_base <= 0.0 {
            return Err(Error::invalid_parameter("t_base must be positive"));
        }
        if self.epsilon < 0.0 {
            return Err(Error::invalid_parameter("epsilon must be non-negative"));
        }
        Ok(())
    }
}

/// Lowest-free VLAN tag allocator over 1..=4094. Exhaustion is an error;
/// tag reuse schemes are out of scope and surface as that error.
#[derive(Debug, Clone)]
pub struct VlanAllocator {
    free: BTreeSet<u16>,
}

impl Default for VlanAllocator {
    fn default() -> Self {
        Self::new()
    }
}

impl VlanAllocator {
    pub fn new() -> Self {
        VlanAllocator { free: (VLAN_MIN..=VLAN_MAX).collect() }
    }

    pub fn allocate(&mut self) -> Result<u16> {
        let tag = self.free.iter().next().copied().ok_or(Error::VlanExhausted)?;
        self.free.remove(&tag);
        Ok(tag)
    }

    pub fn release(&mut self, tag: u16) -> Result<()> {
        if !(VLAN_MIN..=VLAN_MAX).contains(&tag) {
            return Err(Error::invalid_argument(format!("vlan tag {tag} out of range")));
        }
        if !self.free.insert(tag) {
            return Err(Error::invalid_argument(format!("vlan tag {tag} is not allocated")));
        }
        Ok(())
    }

    pub fn in_use(&self) -> usize {
        (VLAN_MAX - VLAN_MIN + 1) as usize - self.free.len()
    }
}

/// One task per (switch, incident candidate link) pair; hypervisor endpoints
/// carry no switch configuration. Deterministic order by (switch, port).
pub fn plan_config(topo: &Topology, candidate: &RoutingCandidate, vlan: u16) -> Vec<ConfigTask> {
    let mut tasks = Vec::new();
    for &l in candidate.links() {
        let link = topo.link(l);
        for end in [link.a, link.b] {
            if topo.node(end).kind != NodeKind::Hypervisor {
                tasks.push(ConfigTask { switch: end, port: l, vlan });
            }
        }
    }
    tasks.sort_unstable_by_key(|t| (t.switch, t.port));
    tasks
}

/// Total configuration latency: per-switch batches run in parallel, so the
/// result is the maximum over switches of `t_base + epsilon * (tasks - 1)`.
pub fn batch_latency(tasks: &[ConfigTask], model: &LatencyModel) -> f64 {
    let mut per_switch: BTreeMap<NodeId, usize> = BTreeMap::new();
    for t in tasks {
        *per_switch.entry(t.switch).or_insert(0) += 1;
    }
    per_switch
        .values()
        .map(|&n| model.t_base + model.epsilon * (n as f64 - 1.0))
        .fold(0.0, f64::max)
}

#[derive(Debug, Clone, PartialEq)]
pub struct UpdateOutcome {
    pub routing: RoutingCandidate,
    pub plan: Vec<ConfigTask>,
    pub vlan: u16,
    pub was_cache_hit: bool,
}

/// Serial routing-update pipeline over a shared cache and VLAN pool.
/// Requests funnel through cache -> search -> selection -> plan; only
/// `new_tenant` triggers allocate a VLAN, every other trigger reuses the
/// tenant's tag. The new routing replaces the tenant's previous one.
#[derive(Debug, Default)]
pub struct Pipeline {
    cache: RoutingCache,
    vlans: VlanAllocator,
    tenants: BTreeMap<u64, Tenant>,
    clock: u64,
}

impl Pipeline {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn with_cache(cache: RoutingCache) -> Self {
        Pipeline { cache, ..Default::default() }
    }

    /// Registers a tenant's VM layout. The placement is derived from it.
    pub fn admit_tenant(&mut self, tenant: Tenant) -> Result<()> {
        if self.tenants.contains_key(&tenant.id) {
            return Err(Error::invalid_argument(format!(
                "tenant {} is already admitted",
                tenant.id
            )));
        }
        self.tenants.insert(tenant.id, tenant);
        Ok(())
    }

    /// Removes a tenant and returns its VLAN to the pool.
    pub fn remove_tenant(&mut self, id: u64) -> Result<()> {
        let tenant = self.tenants.remove(&id).ok_or(Error::UnknownTenant(id))?;
        if let Some(tag) = tenant.vlan {
            self.vlans.release(tag)?;
        }
        Ok(())
    }

    pub fn tenant(&self, id: u64) -> Option<&Tenant> {
        self.tenants.get(&id)
    }

    pub fn cache_stats(&self) -> CacheStats {
        self.cache.stats()
    }

    pub fn bump_topology_epoch(&mut self) -> u64 {
        self.cache.bump_topology_epoch()
    }

    pub fn vlans_in_use(&self) -> usize {
        self.vlans.in_use()
    }

    /// Runs one routing update: candidates from the cache or a fresh search,
    /// selection by the request's objective against the snapshot, then the
    /// switch-configuration plan. The tenant's previous routing is released
    /// (replaced) on success.
    pub fn handle_update(
        &mut self,
        request: &UpdateRequest,
        topo: &Topology,
        snapshot: &NetworkSnapshot,
    ) -> Result<UpdateOutcome> {
        let tenant = self
            .tenants
            .get(&request.tenant)
            .ok_or(Error::UnknownTenant(request.tenant))?;
        if tenant.placement != request.placement {
            return Err(Error::invalid_argument(format!(
                "request placement does not match tenant {}'s VM layout",
                request.tenant
            )));
        }
        self.clock += 1;
        let now = self.clock;
        let (candidates, was_cache_hit) =
            self.cache
                .get_or_search(&request.placement, now, || search_candidates(topo, &request.placement))?;
        if candidates.is_empty() {
            return Err(Error::NoCandidates);
        }
        let vlinks = tenant.virtual_links();
        let (best, _) = select_best(topo, &candidates, &vlinks, snapshot, &request.objective)?;
        let routing = best.clone();
        let vlan = match (request.trigger, tenant.vlan) {
            (_, Some(tag)) => tag,
            (UpdateTrigger::NewTenant, None) => self.vlans.allocate()?,
            (_, None) => {
                return Err(Error::invalid_argument(format!(
                    "tenant {} has no vlan; submit a new_tenant update first",
                    request.tenant
                )))
            }
        };
        let plan = plan_config(topo, &routing, vlan);
        let tenant = self.tenants.get_mut(&request.tenant).unwrap();
        tenant.routing = Some(routing.clone());
        tenant.vlan = Some(vlan);
        Ok(UpdateOutcome { routing, plan, vlan, was_cache_hit })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::search::search_candidates;
    use crate::topology::{build_testbed, DEFAULT_CAPACITY_BPS};

    fn testbed_tenant(id: u64) -> Tenant {
        // Two VMs on host 0, two on host 2.
        let vm_hosts: BTreeMap<u32, NodeId> =
            [(0, 0), (1, 0), (2, 2), (3, 2)].into_iter().collect();
        Tenant::new(id, vm_hosts).unwrap()
    }

    #[test]
    fn plan_covers_every_switch_port_on_the_overlay() {
        let t = build_testbed(DEFAULT_CAPACITY_BPS).unwrap();
        let p = VmPlacement::new([0, 2]).unwrap();
        let cands = search_candidates(&t, &p).unwrap();
        // Four links host-E1-C1-E2-host: two ports each on E1, C1, E2.
        let plan = plan_config(&t, &cands[0], 17);
        assert_eq!(plan.len(), 6);
        let mut per_switch: BTreeMap<NodeId, usize> = BTreeMap::new();
        for task in &plan {
            assert_eq!(task.vlan, 17);
            *per_switch.entry(task.switch).or_insert(0) += 1;
        }
        assert_eq!(per_switch, [(4, 2), (5, 2), (6, 2)].into_iter().collect());
        assert_eq!(plan, plan_config(&t, &cands[0], 17));
    }

    #[test]
    fn zero_link_candidate_has_empty_plan() {
        let t = build_testbed(DEFAULT_CAPACITY_BPS).unwrap();
        let p = VmPlacement::new([0]).unwrap();
        let cands = search_candidates(&t, &p).unwrap();
        assert!(plan_config(&t, &cands[0], 1).is_empty());
    }

    #[test]
    fn vlan_allocation_is_lowest_free() {
        let mut v = VlanAllocator::new();
        assert_eq!(v.allocate().unwrap(), 1);
        assert_eq!(v.allocate().unwrap(), 2);
        v.release(1).unwrap();
        assert_eq!(v.allocate().unwrap(), 1);
        assert!(v.release(9).is_err());
        assert!(v.release(0).is_err());
    }

    #[test]
    fn vlan_pool_exhausts_at_4094() {
        let mut v = VlanAllocator::new();
        let mut tags = BTreeSet::new();
        for _ in 0..4094 {
            assert!(tags.insert(v.allocate().unwrap()));
        }
        assert!(matches!(v.allocate(), Err(Error::VlanExhausted)));
        v.release(2000).unwrap();
        assert_eq!(v.allocate().unwrap(), 2000);
    }

    #[test]
    fn batch_latency_model() {
        let m = LatencyModel::default();
        let task = |switch: NodeId, port: LinkId| ConfigTask { switch, port, vlan: 1 };
        assert_eq!(batch_latency(&[], &m), 0.0);
        assert_eq!(batch_latency(&[task(1, 1)], &m), 10.0);
        // 576 tasks on one switch: 10 + 0.005 * 575 = 12.875 s.
        let many: Vec<ConfigTask> = (0..576).map(|i| task(1, i)).collect();
        let lat = batch_latency(&many, &m);
        assert!((lat - 12.875).abs() < 1e-12);
        assert!(lat <= 1.5 * batch_latency(&[task(1, 1)], &m));
        // Ten switches with one task each run in parallel.
        let spread: Vec<ConfigTask> = (0..10).map(|i| task(i, i)).collect();
        assert_eq!(batch_latency(&spread, &m), 10.0);
    }

    #[test]
    fn batch_latency_is_monotone_in_per_switch_tasks() {
        let m = LatencyModel::default();
        let mut last = 0.0;
        for n in 1..50u32 {
            let tasks: Vec<ConfigTask> =
                (0..n).map(|i| ConfigTask { switch: 3, port: i, vlan: 1 }).collect();
            let lat = batch_latency(&tasks, &m);
            assert!(lat >= last);
            last = lat;
        }
    }

    #[test]
    fn pipeline_cold_then_warm_updates() {
        let t = build_testbed(DEFAULT_CAPACITY_BPS).unwrap();
        let snap = NetworkSnapshot::zeros(&t);
        let mut pipe = Pipeline::new();
        pipe.admit_tenant(testbed_tenant(1)).unwrap();
        let req = UpdateRequest {
            tenant: 1,
            placement: VmPlacement::new([0, 2]).unwrap(),
            objective: ObjectiveConfig::default(),
            trigger: UpdateTrigger::NewTenant,
        };
        let out = pipe.handle_update(&req, &t, &snap).unwrap();
        assert!(!out.was_cache_hit);
        assert_eq!(out.vlan, 1);
        assert_eq!(out.plan.len(), 6);
        out.routing.validate_desired(&t).unwrap();
        assert_eq!(pipe.cache_stats().searches_performed, 1);

        // Re-update: cache hit, no new search, same vlan.
        let req2 = UpdateRequest { trigger: UpdateTrigger::Congestion, ..req.clone() };
        let out2 = pipe.handle_update(&req2, &t, &snap).unwrap();
        assert!(out2.was_cache_hit);
        assert_eq!(out2.vlan, 1);
        assert_eq!(pipe.cache_stats().searches_performed, 1);
    }

    #[test]
    fn pipeline_selects_the_testbed_core_routing() {
        let t = build_testbed(DEFAULT_CAPACITY_BPS).unwrap();
        // Load the uplinks through cores 2 and 3; core 1 stays clean.
        let mut snap = NetworkSnapshot::zeros(&t);
        snap.set(5, 0.7);
        snap.set(8, 0.7);
        snap.set(6, 0.5);
        snap.set(9, 0.5);
        let mut pipe = Pipeline::new();
        pipe.admit_tenant(testbed_tenant(9)).unwrap();
        let req = UpdateRequest {
            tenant: 9,
            placement: VmPlacement::new([0, 2]).unwrap(),
            objective: ObjectiveConfig::default(),
            trigger: UpdateTrigger::NewTenant,
        };
        let out = pipe.handle_update(&req, &t, &snap).unwrap();
        assert_eq!(out.routing.common_node(), 6);
        let switches: BTreeSet<NodeId> = out.plan.iter().map(|t| t.switch).collect();
        assert_eq!(switches, BTreeSet::from([4, 5, 6]));
    }

    #[test]
    fn pipeline_rejects_unknown_and_unvlaned_tenants() {
        let t = build_testbed(DEFAULT_CAPACITY_BPS).unwrap();
        let snap = NetworkSnapshot::zeros(&t);
        let mut pipe = Pipeline::new();
        let req = UpdateRequest {
            tenant: 1,
            placement: VmPlacement::new([0, 2]).unwrap(),
            objective: ObjectiveConfig::default(),
            trigger: UpdateTrigger::Congestion,
        };
        assert!(matches!(pipe.handle_update(&req, &t, &snap), Err(Error::UnknownTenant(1))));
        pipe.admit_tenant(testbed_tenant(1)).unwrap();
        // Non-new trigger before any vlan exists.
        assert!(pipe.handle_update(&req, &t, &snap).is_err());
    }

    #[test]
    fn remove_tenant_returns_the_vlan() {
        let t = build_testbed(DEFAULT_CAPACITY_BPS).unwrap();
        let snap = NetworkSnapshot::zeros(&t);
        let mut pipe = Pipeline::new();
        pipe.admit_tenant(testbed_tenant(1)).unwrap();
        let req = UpdateRequest {
            tenant: 1,
            placement: VmPlacement::new([0, 2]).unwrap(),
            objective: ObjectiveConfig::default(),
            trigger: UpdateTrigger::NewTenant,
        };
        pipe.handle_update(&req, &t, &snap).unwrap();
        assert_eq!(pipe.vlans_in_use(), 1);
        pipe.remove_tenant(1).unwrap();
        assert_eq!(pipe.vlans_in_use(), 0);
    }
}
