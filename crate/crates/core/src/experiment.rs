//! Seeded experiment runner.
//!
//! The FCT experiment family sweeps one factor (fabric load, workload,
//! topology, VTN scale, per-tenant VM count) while the others hold their
//! defaults: k=8 fat-tree, 3:1 load, enterprise workload, 20 VMs per tenant,
//! VTN scale 4, at desk scale (5 snapshots x 20 updates per point). Each
//! update routes one random background tenant with all four solutions over
//! the identical flow-size set, simulates the transfers and records average
//! FCTs normalized to the bottomline. The remaining experiments measure
//! cache size, cache hit ratio and batch configuration latency.
//!
//! Runs are reproducible: every random decision derives from the spec seed,
//! snapshots fan out to a worker pool whose results are reassembled in a
//! fixed order, and the CSV output is byte-identical across reruns.

use std::collections::{BTreeMap, BTreeSet};
use std::io::Write;
use std::path::{Path, PathBuf};

use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::baselines::{bottomline, ecmp_assign, local_mst};
use crate::cache::RoutingCache;
use crate::embed::{batch_latency, ConfigTask, LatencyModel};
use crate::error::{Error, Result};
use crate::objective::{path_for_virtual_link, select_best, ObjectiveConfig};
use crate::search::{search_candidates, RoutingCandidate, VmPlacement};
use crate::seeding::{derive_seed, fnv64, mix64};
use crate::simnet::{
    apply_background_load, average_fct, generate_background, simulate_fct, BackgroundConfig,
    Flow, FlowSizeDistribution, DEFAULT_RATE_UNIT_FRACTION,
};
use crate::topology::{resolve_ref, NodeId, Topology};

/// A routing update re-routes the tenant's existing traffic, so the tenant's
/// own background contribution is removed from the snapshot before scoring
/// and simulation. All four solutions see the same ambient state.
const SUBTRACT_UPDATED_TENANT_LOAD: bool = true;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ExperimentKind {
    Exp1Load,
    Exp2Workload,
    Exp3Topology,
    Exp4VtnScale,
    Exp5VmCount,
    CacheSize,
    HitRatio,
    ConfigLatency,
    Suboptimality,
}

impl ExperimentKind {
    pub fn name(&self) -> &'static str {
        match self {
            ExperimentKind::Exp1Load => "exp1_load",
            ExperimentKind::Exp2Workload => "exp2_workload",
            ExperimentKind::Exp3Topology => "exp3_topology",
            ExperimentKind::Exp4VtnScale => "exp4_vtn_scale",
            ExperimentKind::Exp5VmCount => "exp5_vm_count",
            ExperimentKind::CacheSize => "cache_size",
            ExperimentKind::HitRatio => "hit_ratio",
            ExperimentKind::ConfigLatency => "config_latency",
            ExperimentKind::Suboptimality => "suboptimality",
        }
    }

    fn is_fct_family(&self) -> bool {
        matches!(
            self,
            ExperimentKind::Exp1Load
                | ExperimentKind::Exp2Workload
                | ExperimentKind::Exp3Topology
                | ExperimentKind::Exp4VtnScale
                | ExperimentKind::Exp5VmCount
                | ExperimentKind::Suboptimality
        )
    }
}

fn d_topology() -> String {
    "builtin:ft8".to_string()
}
fn d_topologies() -> Vec<String> {
    vec![
        "builtin:clos".to_string(),
        "builtin:ft8".to_string(),
        "builtin:ft16".to_string(),
        "builtin:shortcut:ft8:32:1".to_string(),
    ]
}
fn d_load() -> f64 {
    3.0
}
fn d_loads() -> Vec<f64> {
    (1..=7).map(|l| l as f64).collect()
}
fn d_workload() -> String {
    "enterprise".to_string()
}
fn d_workloads() -> Vec<String> {
    vec!["enterprise".to_string(), "datamining".to_string()]
}
fn d_n_vms() -> u32 {
    20
}
fn d_vm_counts() -> Vec<u32> {
    vec![10, 20, 30]
}
fn d_vtn_scale() -> u32 {
    4
}
fn d_vtn_scales() -> Vec<u32> {
    vec![3, 4, 5]
}
fn d_snapshots() -> u32 {
    5
}
fn d_updates() -> u32 {
    20
}
fn d_rate_unit() -> f64 {
    DEFAULT_RATE_UNIT_FRACTION
}
fn d_pool_size() -> u32 {
    200
}
fn d_requests() -> u32 {
    10_000
}
fn d_window() -> u32 {
    1_000
}
fn d_tenant_counts() -> Vec<u32> {
    vec![2_000, 4_000, 6_000, 8_000, 10_000]
}
fn d_cache_vtn_scales() -> Vec<u32> {
    vec![2, 3, 4, 5]
}
fn d_latency_switches() -> Vec<u32> {
    vec![1, 10, 24]
}
fn d_latency_tasks() -> Vec<u32> {
    vec![1, 24, 576]
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentSpec {
    pub experiment: ExperimentKind,
    /// Topology reference used when the topology is not the swept factor.
    #[serde(default = "d_topology")]
    pub topology: String,
    /// Sweep list for `exp3_topology`.
    #[serde(default = "d_topologies")]
    pub topologies: Vec<String>,
    #[serde(default = "d_load")]
    pub load_degree: f64,
    /// Sweep list for `exp1_load`.
    #[serde(default = "d_loads")]
    pub load_degrees: Vec<f64>,
    #[serde(default = "d_workload")]
    pub workload: String,
    /// Sweep list for `exp2_workload`.
    #[serde(default = "d_workloads")]
    pub workloads: Vec<String>,
    #[serde(default = "d_n_vms")]
    pub n_vms: u32,
    /// Sweep list for `exp5_vm_count`.
    #[serde(default = "d_vm_counts")]
    pub vm_counts: Vec<u32>,
    #[serde(default = "d_vtn_scale")]
    pub vtn_scale: u32,
    /// Sweep list for `exp4_vtn_scale`.
    #[serde(default = "d_vtn_scales")]
    pub vtn_scales: Vec<u32>,
    #[serde(default = "d_snapshots")]
    pub snapshots_per_point: u32,
    #[serde(default = "d_updates")]
    pub updates_per_snapshot: u32,
    #[serde(default)]
    pub seed: u64,
    #[serde(default = "d_rate_unit")]
    pub rate_unit_fraction: f64,
    #[serde(default)]
    pub objective: ObjectiveConfig,
    #[serde(default)]
    pub latency: LatencyModel,
    /// Placement pool size for `hit_ratio`.
    #[serde(default = "d_pool_size")]
    pub pool_size: u32,
    /// Request count for `hit_ratio`.
    #[serde(default = "d_requests")]
    pub requests: u32,
    /// Reporting window for `hit_ratio`.
    #[serde(default = "d_window")]
    pub window: u32,
    /// Checkpoints for `cache_size`.
    #[serde(default = "d_tenant_counts")]
    pub tenant_counts: Vec<u32>,
    /// VTN scales for `cache_size`.
    #[serde(default = "d_cache_vtn_scales")]
    pub cache_vtn_scales: Vec<u32>,
    #[serde(default = "d_latency_switches")]
    pub latency_switches: Vec<u32>,
    #[serde(default = "d_latency_tasks")]
    pub latency_tasks: Vec<u32>,
    /// Write a per-flow trace CSV next to the results.
    #[serde(default)]
    pub emit_trace: bool,
}

impl ExperimentSpec {
    pub fn new(experiment: ExperimentKind) -> Self {
        serde_json::from_value(serde_json::json!({ "experiment": experiment.name() }))
            .expect("defaults always deserialize")
    }

    pub fn from_json_file(path: impl AsRef<Path>) -> Result<Self> {
        Ok(serde_json::from_str(&std::fs::read_to_string(path)?)?)
    }

    /// Kind-dependent defaults: the cache experiments measure the k=16
    /// fat-tree unless the spec names a topology explicitly.
    pub fn normalized(&self) -> Self {
        let mut spec = self.clone();
        if matches!(spec.experiment, ExperimentKind::CacheSize | ExperimentKind::HitRatio)
            && spec.topology == d_topology()
        {
            spec.topology = "builtin:ft16".to_string();
        }
        spec
    }
}

/// One row of an FCT-family experiment. `point` is the swept value.
#[derive(Debug, Clone, Serialize)]
pub struct ResultRow {
    pub experiment: String,
    pub point: String,
    pub topology: String,
    pub workload: String,
    pub load_degree: f64,
    pub n_vms: u32,
    pub vtn_scale: u32,
    pub snapshots: u32,
    pub updates: u32,
    pub avg_fct_sys: f64,
    pub avg_fct_local: f64,
    pub avg_fct_ecmp: f64,
    pub avg_fct_bottomline: f64,
    pub norm_fct_sys: f64,
    pub norm_fct_local: f64,
    pub norm_fct_ecmp: f64,
    pub norm_fct_bottomline: f64,
    /// Fraction of updates where the local tree differs from the optimum.
    pub false_rate: f64,
    pub starved_flows: u64,
    pub cache_hits: u64,
    pub cache_misses: u64,
    pub cache_searches: u64,
    pub cache_bytes: u64,
}

#[derive(Debug, Clone, Serialize)]
pub struct HitRatioRow {
    pub experiment: String,
    pub window: u32,
    pub requests: u64,
    pub hits: u64,
    pub misses: u64,
    pub cumulative_hit_ratio: f64,
    pub window_hit_ratio: f64,
    pub searches: u64,
    /// Searches per request so far; the cost the cache saves.
    pub normalized_search_cost: f64,
    pub bytes: u64,
}

#[derive(Debug, Clone, Serialize)]
pub struct CacheSizeRow {
    pub experiment: String,
    pub vtn_scale: u32,
    pub n_tenants: u32,
    pub entries: u64,
    pub bytes: u64,
    pub bytes_per_tenant: f64,
}

#[derive(Debug, Clone, Serialize)]
pub struct ConfigLatencyRow {
    pub experiment: String,
    pub switches: u32,
    pub tasks_per_switch: u32,
    pub total_tasks: u32,
    pub latency_seconds: f64,
    pub ratio_vs_single_task: f64,
}

#[derive(Debug, Clone)]
pub enum ExperimentOutput {
    Fct(Vec<ResultRow>),
    HitRatio(Vec<HitRatioRow>),
    CacheSize(Vec<CacheSizeRow>),
    ConfigLatency(Vec<ConfigLatencyRow>),
}

#[derive(Debug, Clone)]
pub struct RunSummary {
    pub output: ExperimentOutput,
    pub csv_path: PathBuf,
    pub manifest_path: PathBuf,
    pub runtime_seconds: f64,
}

/// Checks the spec without running anything; collects every problem found.
pub fn validate(spec: &ExperimentSpec) -> Result<()> {
    let spec = spec.normalized();
    let mut errors: Vec<String> = Vec::new();
    fn check_topology(errors: &mut Vec<String>, r: &str, vtn: u32, n_vms: u32) {
        match resolve_ref(r) {
            Ok(t) => {
                let hosts = t.hypervisor_count() as u32;
                if vtn == 0 {
                    errors.push("vtn_scale must be at least 1".into());
                } else if vtn > hosts {
                    errors.push(format!("vtn_scale {vtn} exceeds the {hosts} hypervisors of {r}"));
                }
                if n_vms < vtn {
                    errors.push(format!("n_vms {n_vms} is below vtn_scale {vtn}"));
                }
            }
            Err(e) => errors.push(format!("topology {r}: {e}")),
        }
    }
    match spec.experiment {
        ExperimentKind::Exp3Topology => {
            if spec.topologies.is_empty() {
                errors.push("topologies sweep is empty".into());
            }
            for t in &spec.topologies {
                check_topology(&mut errors, t, spec.vtn_scale, spec.n_vms);
            }
        }
        ExperimentKind::Exp4VtnScale => {
            for &v in &spec.vtn_scales {
                check_topology(&mut errors, &spec.topology, v, spec.n_vms);
            }
        }
        ExperimentKind::Exp5VmCount => {
            for &n in &spec.vm_counts {
                check_topology(&mut errors, &spec.topology, spec.vtn_scale, n);
            }
        }
        _ => check_topology(&mut errors, &spec.topology, spec.vtn_scale, spec.n_vms),
    }
    if spec.experiment.is_fct_family() {
        let loads: Vec<f64> = match spec.experiment {
            ExperimentKind::Exp1Load => spec.load_degrees.clone(),
            _ => vec![spec.load_degree],
        };
        if loads.is_empty() {
            errors.push("load sweep is empty".into());
        }
        for l in loads {
            if !(l > 0.0) {
                errors.push(format!("load degree {l} must be positive"));
            }
        }
        let workloads: Vec<&str> = match spec.experiment {
            ExperimentKind::Exp2Workload => spec.workloads.iter().map(String::as_str).collect(),
            _ => vec![spec.workload.as_str()],
        };
        for w in workloads {
            if let Err(e) = FlowSizeDistribution::by_ref(w) {
                errors.push(format!("workload {w}: {e}"));
            }
        }
        if spec.snapshots_per_point == 0 {
            errors.push("snapshots_per_point must be at least 1".into());
        }
        if spec.updates_per_snapshot == 0 {
            errors.push("updates_per_snapshot must be at least 1".into());
        }
    }
    if spec.experiment == ExperimentKind::HitRatio {
        if spec.pool_size == 0 {
            errors.push("pool_size must be at least 1".into());
        }
        if spec.requests == 0 {
            errors.push("requests must be at least 1".into());
        }
        if spec.window == 0 || spec.window > spec.requests {
            errors.push("window must be in 1..=requests".into());
        }
    }
    if spec.experiment == ExperimentKind::CacheSize && spec.tenant_counts.is_empty() {
        errors.push("tenant_counts is empty".into());
    }
    if !(spec.rate_unit_fraction > 0.0 && spec.rate_unit_fraction <= 1.0) {
        errors.push("rate_unit_fraction must be in (0, 1]".into());
    }
    if let Err(e) = spec.latency.validate() {
        errors.push(e.to_string());
    }
    if errors.is_empty() {
        Ok(())
    } else {
        Err(Error::Validation(errors))
    }
}

/// Runs the experiment, writing `results.csv` and `manifest.json` (plus
/// `trace.csv` when requested) into `out_dir`. `workers` bounds the worker
/// pool; `None` uses the default.
pub fn run(spec: &ExperimentSpec, out_dir: impl AsRef<Path>, workers: Option<usize>) -> Result<RunSummary> {
    let started = std::time::Instant::now();
    let spec = spec.normalized();
    validate(&spec)?;
    let out_dir = out_dir.as_ref();
    std::fs::create_dir_all(out_dir)?;

    let (output, trace) = match workers {
        Some(n) => {
            let pool = rayon::ThreadPoolBuilder::new()
                .num_threads(n)
                .build()
                .map_err(|e| Error::invalid_parameter(format!("worker pool: {e}")))?;
            pool.install(|| dispatch(&spec))?
        }
        None => dispatch(&spec)?,
    };

    let csv_path = out_dir.join("results.csv");
    write_csv(&csv_path, &output)?;
    if spec.emit_trace {
        write_trace(&out_dir.join("trace.csv"), &trace)?;
    }
    let manifest_path = out_dir.join("manifest.json");
    let runtime_seconds = started.elapsed().as_secs_f64();
    let spec_json = serde_json::to_string_pretty(&spec)?;
    let manifest = serde_json::json!({
        "experiment": spec.experiment.name(),
        "seed": spec.seed,
        "content_hash": format!("{:016x}", fnv64(spec_json.as_bytes())),
        "rows": match &output {
            ExperimentOutput::Fct(r) => r.len(),
            ExperimentOutput::HitRatio(r) => r.len(),
            ExperimentOutput::CacheSize(r) => r.len(),
            ExperimentOutput::ConfigLatency(r) => r.len(),
        },
        "runtime_seconds": runtime_seconds,
        "spec": serde_json::from_str::<serde_json::Value>(&spec_json)?,
    });
    std::fs::write(&manifest_path, serde_json::to_string_pretty(&manifest)?)?;
    Ok(RunSummary { output, csv_path, manifest_path, runtime_seconds })
}

fn dispatch(spec: &ExperimentSpec) -> Result<(ExperimentOutput, Vec<TraceRow>)> {
    match spec.experiment {
        k if k.is_fct_family() => {
            let (rows, trace) = run_fct_family(spec)?;
            Ok((ExperimentOutput::Fct(rows), trace))
        }
        ExperimentKind::HitRatio => Ok((ExperimentOutput::HitRatio(run_hit_ratio(spec)?), Vec::new())),
        ExperimentKind::CacheSize => Ok((ExperimentOutput::CacheSize(run_cache_size(spec)?), Vec::new())),
        ExperimentKind::ConfigLatency => {
            Ok((ExperimentOutput::ConfigLatency(run_config_latency(spec)), Vec::new()))
        }
        _ => unreachable!("all kinds dispatched"),
    }
}

#[derive(Debug, Clone)]
struct FctPoint {
    label: String,
    topology: String,
    workload: String,
    load: f64,
    n_vms: u32,
    vtn_scale: u32,
}

fn fct_points(spec: &ExperimentSpec) -> Vec<FctPoint> {
    let base = FctPoint {
        label: String::new(),
        topology: spec.topology.clone(),
        workload: spec.workload.clone(),
        load: spec.load_degree,
        n_vms: spec.n_vms,
        vtn_scale: spec.vtn_scale,
    };
    match spec.experiment {
        ExperimentKind::Exp1Load => spec
            .load_degrees
            .iter()
            .map(|&l| FctPoint { label: format!("{l}:1"), load: l, ..base.clone() })
            .collect(),
        ExperimentKind::Exp2Workload => spec
            .workloads
            .iter()
            .map(|w| FctPoint { label: w.clone(), workload: w.clone(), ..base.clone() })
            .collect(),
        ExperimentKind::Exp3Topology => spec
            .topologies
            .iter()
            .map(|t| FctPoint { label: t.clone(), topology: t.clone(), ..base.clone() })
            .collect(),
        ExperimentKind::Exp4VtnScale => spec
            .vtn_scales
            .iter()
            .map(|&v| FctPoint { label: v.to_string(), vtn_scale: v, ..base.clone() })
            .collect(),
        ExperimentKind::Exp5VmCount => spec
            .vm_counts
            .iter()
            .map(|&n| FctPoint { label: n.to_string(), n_vms: n, ..base.clone() })
            .collect(),
        ExperimentKind::Suboptimality => {
            vec![FctPoint { label: format!("{}:1", spec.load_degree), ..base }]
        }
        _ => Vec::new(),
    }
}

#[derive(Debug, Clone, Serialize)]
struct TraceRow {
    flow_id: u64,
    src: NodeId,
    dst: NodeId,
    size: f64,
    start: f64,
    fct: f64,
    algorithm: &'static str,
    seed: u64,
}

/// Per-snapshot aggregate, combined across the worker pool in index order.
#[derive(Debug, Clone, Default)]
struct SnapshotAgg {
    sum_avg: [f64; 4],
    sum_norm: [f64; 4],
    norm_updates: u64,
    false_count: u64,
    updates: u64,
    starved_flows: u64,
    cache_hits: u64,
    cache_misses: u64,
    cache_searches: u64,
    cache_bytes: u64,
    trace: Vec<TraceRow>,
}

const ALGOS: [&str; 4] = ["sys", "local", "ecmp", "bottomline"];

fn run_fct_family(spec: &ExperimentSpec) -> Result<(Vec<ResultRow>, Vec<TraceRow>)> {
    use rayon::prelude::*;
    let points = fct_points(spec);
    let mut rows = Vec::with_capacity(points.len());
    let mut trace = Vec::new();
    for (point_idx, point) in points.iter().enumerate() {
        let topo = resolve_ref(&point.topology)?;
        let dist = FlowSizeDistribution::by_ref(&point.workload)?;
        let aggs: Vec<SnapshotAgg> = (0..spec.snapshots_per_point)
            .into_par_iter()
            .map(|snap_idx| run_snapshot(spec, point, point_idx as u64, snap_idx as u64, &topo, &dist))
            .collect::<Result<_>>()?;
        let mut total = SnapshotAgg::default();
        for mut a in aggs {
            for i in 0..4 {
                total.sum_avg[i] += a.sum_avg[i];
                total.sum_norm[i] += a.sum_norm[i];
            }
            total.norm_updates += a.norm_updates;
            total.false_count += a.false_count;
            total.updates += a.updates;
            total.starved_flows += a.starved_flows;
            total.cache_hits += a.cache_hits;
            total.cache_misses += a.cache_misses;
            total.cache_searches += a.cache_searches;
            total.cache_bytes = total.cache_bytes.max(a.cache_bytes);
            total.trace.append(&mut a.trace);
        }
        let n = total.norm_updates.max(1) as f64;
        rows.push(ResultRow {
            experiment: spec.experiment.name().to_string(),
            point: point.label.clone(),
            topology: point.topology.clone(),
            workload: point.workload.clone(),
            load_degree: point.load,
            n_vms: point.n_vms,
            vtn_scale: point.vtn_scale,
            snapshots: spec.snapshots_per_point,
            updates: spec.updates_per_snapshot,
            avg_fct_sys: total.sum_avg[0] / n,
            avg_fct_local: total.sum_avg[1] / n,
            avg_fct_ecmp: total.sum_avg[2] / n,
            avg_fct_bottomline: total.sum_avg[3] / n,
            norm_fct_sys: total.sum_norm[0] / n,
            norm_fct_local: total.sum_norm[1] / n,
            norm_fct_ecmp: total.sum_norm[2] / n,
            norm_fct_bottomline: total.sum_norm[3] / n,
            false_rate: total.false_count as f64 / total.updates.max(1) as f64,
            starved_flows: total.starved_flows,
            cache_hits: total.cache_hits,
            cache_misses: total.cache_misses,
            cache_searches: total.cache_searches,
            cache_bytes: total.cache_bytes,
        });
        trace.extend(total.trace);
    }
    Ok((rows, trace))
}

fn run_snapshot(
    spec: &ExperimentSpec,
    point: &FctPoint,
    point_idx: u64,
    snap_idx: u64,
    topo: &Topology,
    dist: &FlowSizeDistribution,
) -> Result<SnapshotAgg> {
    let bg_seed = derive_seed(spec.seed, &[point_idx, snap_idx, 0]);
    let cfg = BackgroundConfig {
        vms_per_tenant: point.n_vms,
        vtn_scale: point.vtn_scale,
        target_load_degree: point.load,
        rate_unit_fraction: spec.rate_unit_fraction,
    };
    let (tenants, snapshot) = generate_background(topo, &cfg, bg_seed)?;
    if tenants.is_empty() {
        return Err(Error::invalid_parameter("no background tenants to update"));
    }
    let mut cache = RoutingCache::new();
    let mut agg = SnapshotAgg::default();
    for update in 0..spec.updates_per_snapshot as u64 {
        let pick = derive_seed(spec.seed, &[point_idx, snap_idx, update, 1]);
        let tenant = &tenants[(mix64(pick) % tenants.len() as u64) as usize];
        let mut ambient = snapshot.clone();
        if SUBTRACT_UPDATED_TENANT_LOAD {
            let routing = tenant.routing.as_ref().expect("background tenants are embedded");
            apply_background_load(topo, tenant, routing, cfg.rate_unit_fraction, &mut ambient, -1.0)?;
        }
        let (candidates, _) = cache.get_or_search(&tenant.placement, update, || {
            search_candidates(topo, &tenant.placement)
        })?;
        if candidates.is_empty() {
            return Err(Error::NoCandidates);
        }
        let vlinks = tenant.virtual_links();
        let fabric: Vec<_> = tenant.fabric_virtual_links();
        if fabric.is_empty() {
            return Err(Error::invalid_parameter(
                "update tenant has no inter-host virtual links",
            ));
        }
        let mut size_rng =
            ChaCha8Rng::seed_from_u64(derive_seed(spec.seed, &[point_idx, snap_idx, update, 2]));
        let sizes: Vec<f64> = fabric.iter().map(|_| dist.sample(&mut size_rng)).collect();
        let base_flows: Vec<Flow> = fabric
            .iter()
            .zip(&sizes)
            .enumerate()
            .map(|(i, (vl, &size))| Flow::new(i as u64, vl.host_a, vl.host_b, size, 0.0))
            .collect();

        let (best, _) = select_best(topo, &candidates, &vlinks, &ambient, &spec.objective)?;
        let local = local_mst(topo, &tenant.placement, &ambient)?;
        let bottom_seed = derive_seed(spec.seed, &[point_idx, snap_idx, update, 3]);
        let bottom = bottomline(&candidates, bottom_seed)?;
        let ecmp_seed = derive_seed(spec.seed, &[point_idx, snap_idx, update, 4]);
        let ecmp_paths = ecmp_assign(topo, &base_flows, ecmp_seed)?;

        if local.links() != best.links() {
            agg.false_count += 1;
        }
        agg.updates += 1;

        let mut averages = [f64::NAN; 4];
        let mut update_trace: Vec<TraceRow> = Vec::new();
        for (a, algo) in ALGOS.iter().enumerate() {
            let mut flows = base_flows.clone();
            match a {
                0 | 1 | 3 => {
                    let cand: &RoutingCandidate = match a {
                        0 => best,
                        1 => &local,
                        _ => &bottom,
                    };
                    let mut memo: BTreeMap<(NodeId, NodeId), Vec<u32>> = BTreeMap::new();
                    for f in &mut flows {
                        let key = (f.src_host.min(f.dst_host), f.src_host.max(f.dst_host));
                        if !memo.contains_key(&key) {
                            memo.insert(key, path_for_virtual_link(topo, cand, key.0, key.1)?);
                        }
                        f.path = memo[&key].clone();
                    }
                }
                _ => {
                    for f in &mut flows {
                        f.path = ecmp_paths[&f.id].clone();
                    }
                }
            }
            simulate_fct(topo, &mut flows, &ambient)?;
            match average_fct(&flows) {
                Ok(summary) => {
                    averages[a] = summary.average;
                    agg.starved_flows += summary.starved as u64;
                }
                Err(Error::AllFlowsStarved) => {
                    averages[a] = f64::INFINITY;
                    agg.starved_flows += flows.len() as u64;
                }
                Err(e) => return Err(e),
            }
            if spec.emit_trace {
                for f in &flows {
                    update_trace.push(TraceRow {
                        flow_id: (point_idx << 40) | (snap_idx << 32) | (update << 16) | f.id,
                        src: f.src_host,
                        dst: f.dst_host,
                        size: f.size_bytes,
                        start: f.start,
                        fct: f.fct.unwrap_or(f64::NAN),
                        algorithm: ALGOS[a],
                        seed: spec.seed,
                    });
                }
            }
            let _ = algo;
        }
        // Normalized FCT uses the bottomline run over the identical flow
        // sizes; updates where any solution starved entirely are skipped in
        // the normalized aggregate (the starved counter still records them).
        if averages.iter().all(|v| v.is_finite()) && averages[3] > 0.0 {
            for i in 0..4 {
                agg.sum_avg[i] += averages[i];
                agg.sum_norm[i] += averages[i] / averages[3];
            }
            agg.norm_updates += 1;
            agg.trace.extend(update_trace);
        }
    }
    let stats = cache.stats();
    agg.cache_hits = stats.hits;
    agg.cache_misses = stats.misses;
    agg.cache_searches = stats.searches_performed;
    agg.cache_bytes = stats.bytes;
    Ok(agg)
}

fn run_hit_ratio(spec: &ExperimentSpec) -> Result<Vec<HitRatioRow>> {
    let topo = resolve_ref(&spec.topology)?;
    let hypervisors: Vec<NodeId> = topo.hypervisors().collect();
    let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(spec.seed, &[101]));
    let pool: Vec<VmPlacement> = (0..spec.pool_size)
        .map(|_| {
            let idx =
                rand::seq::index::sample(&mut rng, hypervisors.len(), spec.vtn_scale as usize);
            VmPlacement::new(idx.iter().map(|i| hypervisors[i]))
        })
        .collect::<Result<_>>()?;
    let mut cache = RoutingCache::new();
    let mut rows = Vec::new();
    let mut window_hits = 0u64;
    let mut window_count = 0u64;
    let mut window_idx = 0u32;
    for r in 0..spec.requests {
        let placement = &pool[rng.gen_range(0..pool.len())];
        let (_, hit) =
            cache.get_or_search(placement, r as u64, || search_candidates(&topo, placement))?;
        if hit {
            window_hits += 1;
        }
        window_count += 1;
        if window_count == spec.window as u64 || r + 1 == spec.requests {
            let stats = cache.stats();
            window_idx += 1;
            rows.push(HitRatioRow {
                experiment: spec.experiment.name().to_string(),
                window: window_idx,
                requests: (r + 1) as u64,
                hits: stats.hits,
                misses: stats.misses,
                cumulative_hit_ratio: stats.hit_ratio(),
                window_hit_ratio: window_hits as f64 / window_count as f64,
                searches: stats.searches_performed,
                normalized_search_cost: stats.searches_performed as f64 / (r + 1) as f64,
                bytes: stats.bytes,
            });
            window_hits = 0;
            window_count = 0;
        }
    }
    Ok(rows)
}

fn run_cache_size(spec: &ExperimentSpec) -> Result<Vec<CacheSizeRow>> {
    use rayon::prelude::*;
    let topo = resolve_ref(&spec.topology)?;
    let hypervisors: Vec<NodeId> = topo.hypervisors().collect();
    let max_tenants = *spec.tenant_counts.iter().max().unwrap() as usize;
    let scales: Vec<u32> = spec.cache_vtn_scales.clone();
    let mut all: Vec<Vec<CacheSizeRow>> = scales
        .par_iter()
        .map(|&scale| -> Result<Vec<CacheSizeRow>> {
            let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(spec.seed, &[202, scale as u64]));
            let mut cache = RoutingCache::new();
            let mut seen: BTreeSet<VmPlacement> = BTreeSet::new();
            let mut rows = Vec::new();
            let mut inserted = 0usize;
            let mut checkpoints = spec.tenant_counts.clone();
            checkpoints.sort_unstable();
            let mut next_cp = 0usize;
            while inserted < max_tenants {
                let idx =
                    rand::seq::index::sample(&mut rng, hypervisors.len(), scale as usize);
                let placement = VmPlacement::new(idx.iter().map(|i| hypervisors[i]))?;
                if !seen.insert(placement.clone()) {
                    continue;
                }
                cache.get_or_search(&placement, 0, || search_candidates(&topo, &placement))?;
                inserted += 1;
                while next_cp < checkpoints.len() && inserted == checkpoints[next_cp] as usize {
                    let stats = cache.stats();
                    rows.push(CacheSizeRow {
                        experiment: spec.experiment.name().to_string(),
                        vtn_scale: scale,
                        n_tenants: checkpoints[next_cp],
                        entries: stats.entries,
                        bytes: stats.bytes,
                        bytes_per_tenant: stats.bytes as f64 / checkpoints[next_cp] as f64,
                    });
                    next_cp += 1;
                }
            }
            Ok(rows)
        })
        .collect::<Result<_>>()?;
    let mut rows = Vec::new();
    for r in all.drain(..) {
        rows.extend(r);
    }
    Ok(rows)
}

fn run_config_latency(spec: &ExperimentSpec) -> Vec<ConfigLatencyRow> {
    let single = batch_latency(
        &[ConfigTask { switch: 0, port: 0, vlan: 1 }],
        &spec.latency,
    );
    let mut rows = Vec::new();
    for &switches in &spec.latency_switches {
        for &tasks_per_switch in &spec.latency_tasks {
            let tasks: Vec<ConfigTask> = (0..switches)
                .flat_map(|s| {
                    (0..tasks_per_switch)
                        .map(move |p| ConfigTask { switch: s, port: p, vlan: 1 })
                })
                .collect();
            let latency = batch_latency(&tasks, &spec.latency);
            rows.push(ConfigLatencyRow {
                experiment: spec.experiment.name().to_string(),
                switches,
                tasks_per_switch,
                total_tasks: switches * tasks_per_switch,
                latency_seconds: latency,
                ratio_vs_single_task: latency / single,
            });
        }
    }
    rows
}

fn fmt_f64(v: f64) -> String {
    if v.is_nan() {
        "nan".to_string()
    } else if v.is_infinite() {
        if v > 0.0 { "inf".to_string() } else { "-inf".to_string() }
    } else {
        format!("{v:.6}")
    }
}

fn write_csv(path: &Path, output: &ExperimentOutput) -> Result<()> {
    let mut f = std::io::BufWriter::new(std::fs::File::create(path)?);
    match output {
        ExperimentOutput::Fct(rows) => {
            writeln!(
                f,
                "experiment,point,topology,workload,load_degree,n_vms,vtn_scale,snapshots,updates,\
                 avg_fct_sys,avg_fct_local,avg_fct_ecmp,avg_fct_bottomline,\
                 norm_fct_sys,norm_fct_local,norm_fct_ecmp,norm_fct_bottomline,\
                 false_rate,starved_flows,cache_hits,cache_misses,cache_searches,cache_bytes"
            )?;
            for r in rows {
                writeln!(
                    f,
                    "{},{},{},{},{},{},{},{},{},{},{},{},{},{},{},{},{},{},{},{},{},{},{}",
                    r.experiment,
                    r.point,
                    r.topology,
                    r.workload,
                    fmt_f64(r.load_degree),
                    r.n_vms,
                    r.vtn_scale,
                    r.snapshots,
                    r.updates,
                    fmt_f64(r.avg_fct_sys),
                    fmt_f64(r.avg_fct_local),
                    fmt_f64(r.avg_fct_ecmp),
                    fmt_f64(r.avg_fct_bottomline),
                    fmt_f64(r.norm_fct_sys),
                    fmt_f64(r.norm_fct_local),
                    fmt_f64(r.norm_fct_ecmp),
                    fmt_f64(r.norm_fct_bottomline),
                    fmt_f64(r.false_rate),
                    r.starved_flows,
                    r.cache_hits,
                    r.cache_misses,
                    r.cache_searches,
                    r.cache_bytes
                )?;
            }
        }
        ExperimentOutput::HitRatio(rows) => {
            writeln!(
                f,
                "experiment,window,requests,hits,misses,cumulative_hit_ratio,window_hit_ratio,\
                 searches,normalized_search_cost,bytes"
            )?;
            for r in rows {
                writeln!(
                    f,
                    "{},{},{},{},{},{},{},{},{},{}",
                    r.experiment,
                    r.window,
                    r.requests,
                    r.hits,
                    r.misses,
                    fmt_f64(r.cumulative_hit_ratio),
                    fmt_f64(r.window_hit_ratio),
                    r.searches,
                    fmt_f64(r.normalized_search_cost),
                    r.bytes
                )?;
            }
        }
        ExperimentOutput::CacheSize(rows) => {
            writeln!(f, "experiment,vtn_scale,n_tenants,entries,bytes,bytes_per_tenant")?;
            for r in rows {
                writeln!(
                    f,
                    "{},{},{},{},{},{}",
                    r.experiment,
                    r.vtn_scale,
                    r.n_tenants,
                    r.entries,
                    r.bytes,
                    fmt_f64(r.bytes_per_tenant)
                )?;
            }
        }
        ExperimentOutput::ConfigLatency(rows) => {
            writeln!(
                f,
                "experiment,switches,tasks_per_switch,total_tasks,latency_seconds,ratio_vs_single_task"
            )?;
            for r in rows {
                writeln!(
                    f,
                    "{},{},{},{},{},{}",
                    r.experiment,
                    r.switches,
                    r.tasks_per_switch,
                    r.total_tasks,
                    fmt_f64(r.latency_seconds),
                    fmt_f64(r.ratio_vs_single_task)
                )?;
            }
        }
    }
    f.flush()?;
    Ok(())
}

fn write_trace(path: &Path, rows: &[TraceRow]) -> Result<()> {
    let mut f = std::io::BufWriter::new(std::fs::File::create(path)?);
    writeln!(f, "flow_id,src,dst,size,start,fct,algorithm,seed")?;
    let mut sorted: Vec<&TraceRow> = rows.iter().collect();
    sorted.sort_by_key(|r| (r.flow_id, r.algorithm));
    for r in sorted {
        writeln!(
            f,
            "{},{},{},{},{},{},{},{}",
            r.flow_id,
            r.src,
            r.dst,
            fmt_f64(r.size),
            fmt_f64(r.start),
            fmt_f64(r.fct),
            r.algorithm,
            r.seed
        )?;
    }
    f.flush()?;
    Ok(())
}
