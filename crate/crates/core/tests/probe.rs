//! Temporary measurement probe (deleted before finalizing).

use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use vtn_core::baselines::local_mst;
use vtn_core::objective::{score, select_best, NetworkSnapshot, ObjectiveConfig};
use vtn_core::search::{search_candidates, VmPlacement};
use vtn_core::simnet::{generate_background, BackgroundConfig};
use vtn_core::topology::{build_fat_tree, DEFAULT_CAPACITY_BPS, LinkId, NodeId};

#[test]
fn probe_local_vs_best() {
    let topo = build_fat_tree(8, DEFAULT_CAPACITY_BPS).unwrap();
    let hyps: Vec<NodeId> = topo.hypervisors().collect();
    let cfg = ObjectiveConfig::default();
    for snapshot_kind in ["bg", "iid"] {
        for size in [2usize, 4] {
            let mut local_wins = 0u32;
            let mut sys_wins = 0u32;
            let mut ties = 0u32;
            let mut link_diff = 0u32;
            let n = 500;
            let mut rng = ChaCha8Rng::seed_from_u64(42);
            for i in 0..n {
                let snap = if snapshot_kind == "bg" {
                    let bc = BackgroundConfig::new(20, 4, 3.0);
                    generate_background(&topo, &bc, 1000 + i as u64).unwrap().1
                } else {
                    let mut s = NetworkSnapshot::zeros(&topo);
                    for l in 0..topo.link_count() as LinkId {
                        s.set(l, rng.gen_range(0.0..0.8));
                    }
                    s
                };
                let idx = rand::seq::index::sample(&mut rng, hyps.len(), size);
                let placement = VmPlacement::new(idx.iter().map(|j| hyps[j])).unwrap();
                let cands = search_candidates(&topo, &placement).unwrap();
                let vlinks: Vec<_> = {
                    // one vlink per host pair
                    let hs = placement.hypervisors();
                    let mut v = Vec::new();
                    for (i, &a) in hs.iter().enumerate() {
                        for &b in &hs[i + 1..] {
                            v.push(vtn_core::objective::VirtualLink::new(1, 0, 1, a, b));
                        }
                    }
                    v
                };
                let (best, best_score) = select_best(&topo, &cands, &vlinks, &snap, &cfg).unwrap();
                let local = local_mst(&topo, &placement, &snap).unwrap();
                let local_score = score(&topo, &local, &vlinks, &snap, &cfg).unwrap();
                if local.links() != best.links() {
                    link_diff += 1;
                }
                if local_score < best_score - 1e-12 {
                    local_wins += 1;
                } else if best_score < local_score - 1e-12 {
                    sys_wins += 1;
                } else {
                    ties += 1;
                }
            }
            println!(
                "snap={snapshot_kind} size={size}: local_strictly_better={local_wins} \
                 sys_strictly_better={sys_wins} ties={ties} link_diff={link_diff} (n={n})"
            );
        }
    }
}
