//! V2V relay cluster formation under the unit-disk + LoS-blocking model,
//! and RSU attachment.
//!
//! Two V2V vehicles can link when their torus distance is at most the
//! communication range `d` and no qualifying blocker obstructs the segment
//! between them. Clusters are the connected components of that link graph.

use crate::error::{Error, Result};
use crate::highway::{blocking_lanes, forward_gap, Snapshot, Vehicle, VehicleKind};

/// A maximal V2V-connected vehicle group.
#[derive(Debug, Clone, PartialEq)]
pub struct Cluster {
    /// Indices into the snapshot's vehicle list, in cyclic position order
    /// starting at the cluster's first member.
    pub member_indices: Vec<usize>,
    /// Member count.
    pub n: usize,
    /// Position of the first member (meters).
    pub first: f64,
    /// Position of the last member (meters); smaller than `first` when the
    /// cluster wraps around the torus seam.
    pub last: f64,
    /// Communication length: first-to-last forward distance plus 2d, capped
    /// at the window length.
    pub span: f64,
    /// Start of the reachable interval `[first - d, last + d]`, wrapped.
    pub footprint_start: f64,
    /// Attached RSU grid indices (filled by [`attach_rsus`]).
    pub rsus: Vec<usize>,
    /// Attached RSU count.
    pub m: usize,
}

impl Cluster {
    fn from_members(members: Vec<usize>, snapshot: &Snapshot, d: f64) -> Cluster {
        let w = snapshot.window;
        let first = snapshot.vehicles[members[0]].position;
        let last = snapshot.vehicles[*members.last().unwrap()].position;
        let extent = if members.len() == 1 { 0.0 } else { forward_gap(first, last, w) };
        let span = (extent + 2.0 * d).min(w);
        Cluster {
            n: members.len(),
            member_indices: members,
            first,
            last,
            span,
            footprint_start: (first - d).rem_euclid(w),
            rsus: Vec::new(),
            m: 0,
        }
    }

    /// Reachable interval as (start, length) on the torus.
    pub fn footprint(&self) -> (f64, f64) {
        (self.footprint_start, self.span)
    }
}

/// Export clusters as CSV with columns `cluster_id,n,first,last,span,m`.
pub fn write_clusters_csv<W: std::io::Write>(clusters: &[Cluster], writer: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(writer);
    w.write_record(["cluster_id", "n", "first", "last", "span", "m"])?;
    for (id, c) in clusters.iter().enumerate() {
        w.write_record([
            id.to_string(),
            c.n.to_string(),
            c.first.to_string(),
            c.last.to_string(),
            c.span.to_string(),
            c.m.to_string(),
        ])?;
    }
    w.flush()?;
    Ok(())
}

/// Single-lane cluster formation.
///
/// Consecutive V2V vehicles are linked iff no vehicle of any kind sits
/// between them and their gap is at most `d`: a legacy vehicle between two
/// V2V vehicles always breaks the link.
pub fn form_clusters_single(snapshot: &Snapshot, d: f64) -> Result<Vec<Cluster>> {
    if snapshot.eta != 1 {
        return Err(Error::usage(format!(
            "form_clusters_single needs a single-lane snapshot, got eta = {}",
            snapshot.eta
        )));
    }
    let vehicles = &snapshot.vehicles;
    let total = vehicles.len();
    let w = snapshot.window;

    let mut runs: Vec<Vec<usize>> = Vec::new();
    let mut current: Vec<usize> = Vec::new();
    for i in 0..total {
        if vehicles[i].kind != VehicleKind::V2v {
            if !current.is_empty() {
                runs.push(std::mem::take(&mut current));
            }
            continue;
        }
        if let Some(&prev) = current.last() {
            let gap = vehicles[i].position - vehicles[prev].position;
            if gap > d {
                runs.push(std::mem::take(&mut current));
            }
        }
        current.push(i);
    }
    if !current.is_empty() {
        runs.push(current);
    }

    // Wrap-around link between the last and first vehicle of the torus.
    if runs.len() > 1 && total >= 2 {
        let first_v = &vehicles[0];
        let last_v = &vehicles[total - 1];
        let joins = first_v.kind == VehicleKind::V2v
            && last_v.kind == VehicleKind::V2v
            && forward_gap(last_v.position, first_v.position, w) <= d;
        if joins
            && runs[0].first() == Some(&0)
            && runs.last().unwrap().last() == Some(&(total - 1))
        {
            let head = runs.remove(0);
            runs.last_mut().unwrap().extend(head);
        }
    }

    Ok(runs.into_iter().map(|members| Cluster::from_members(members, snapshot, d)).collect())
}

/// True iff the open segment between `tx` and `rx` (the shorter arc) is
/// obstructed by some blocker located in a qualifying lane. A blocker at x
/// with length l occupies `(x - l/2, x + l/2)`.
pub fn is_link_blocked(
    tx: &Vehicle,
    rx: &Vehicle,
    blockers: &[Vehicle],
    blocker_length: f64,
    window: f64,
) -> bool {
    let half = blocker_length / 2.0;
    let fwd = forward_gap(tx.position, rx.position, window);
    let (start, gap) =
        if fwd <= window / 2.0 { (tx.position, fwd) } else { (rx.position, window - fwd) };
    let lanes = blocking_lanes(tx.lane, rx.lane);
    blockers.iter().any(|b| {
        b.kind == VehicleKind::Blocker
            && lanes.contains(&b.lane)
            && obstructs(forward_gap(start, b.position, window), gap, half, window)
    })
}

/// Does a blocker at forward offset `g` from the segment start obstruct the
/// open interval `(0, gap)`?
fn obstructs(g: f64, gap: f64, half: f64, window: f64) -> bool {
    if half == 0.0 {
        g > 0.0 && g < gap
    } else {
        g < gap + half || g > window - half
    }
}

/// Multilane cluster formation on the full V2V link graph.
///
/// Cross-lane links can leapfrog same-lane blockers, so connectivity is
/// computed over all pairs within range via a forward sweep, not just
/// adjacent ones.
pub fn form_clusters_multilane(
    snapshot: &Snapshot,
    d: f64,
    blocker_length: f64,
) -> Result<Vec<Cluster>> {
    let w = snapshot.window;
    let half = blocker_length / 2.0;
    let v2v: Vec<usize> = snapshot.v2v_indices();
    let nv = v2v.len();
    if nv == 0 {
        return Ok(Vec::new());
    }

    let blockers: Vec<(f64, u32)> = snapshot
        .vehicles
        .iter()
        .filter(|v| v.kind == VehicleKind::Blocker)
        .map(|v| (v.position, v.lane))
        .collect();

    let mut dsu = DisjointSets::new(nv);
    for i in 0..nv {
        let vi = &snapshot.vehicles[v2v[i]];
        for step in 1..nv {
            let j = (i + step) % nv;
            if j == i {
                break;
            }
            let vj = &snapshot.vehicles[v2v[j]];
            let gap = forward_gap(vi.position, vj.position, w);
            if gap > d {
                break;
            }
            if dsu.find(i) == dsu.find(j) {
                continue;
            }
            if !blocked_forward(vi, vj, gap, &blockers, half, w) {
                dsu.union(i, j);
            }
        }
    }

    // Group members per component, preserving cyclic order; a component that
    // spans the torus seam is rotated so its first member follows the
    // largest gap not covered by the component.
    let mut groups: Vec<Vec<usize>> = vec![Vec::new(); nv];
    for i in 0..nv {
        let root = dsu.find(i);
        groups[root].push(i);
    }
    let mut clusters = Vec::new();
    for members in groups.into_iter().filter(|g| !g.is_empty()) {
        let ordered = rotate_to_start(&members, &v2v, snapshot);
        let idx: Vec<usize> = ordered.into_iter().map(|k| v2v[k]).collect();
        clusters.push(Cluster::from_members(idx, snapshot, d));
    }
    clusters.sort_by(|a, b| a.first.partial_cmp(&b.first).unwrap());
    Ok(clusters)
}

/// One singleton cluster per V2V vehicle; the V2I-only benchmark topology.
pub fn singleton_clusters(snapshot: &Snapshot, d: f64) -> Vec<Cluster> {
    snapshot
        .v2v_indices()
        .into_iter()
        .map(|i| Cluster::from_members(vec![i], snapshot, d))
        .collect()
}

/// Blocking test for a forward-oriented pair (gap already <= d).
fn blocked_forward(
    vi: &Vehicle,
    vj: &Vehicle,
    gap: f64,
    blockers: &[(f64, u32)],
    half: f64,
    window: f64,
) -> bool {
    let lanes = blocking_lanes(vi.lane, vj.lane);
    if lanes.is_empty() {
        return false;
    }
    // Candidate blockers lie in [start - half, start + gap + half] on the
    // torus; scan that range in the sorted blocker list.
    let lo = vi.position - half;
    let hi = vi.position + gap + half;
    let check = |&(pos, lane): &(f64, u32)| {
        lanes.contains(&lane) && obstructs(forward_gap(vi.position, pos, window), gap, half, window)
    };
    let from = blockers.partition_point(|&(p, _)| p < lo);
    let any_main = blockers[from..].iter().take_while(|&&(p, _)| p <= hi).any(|b| check(b));
    if any_main {
        return true;
    }
    // Wrapped portions of the candidate range.
    if lo < 0.0 {
        let from = blockers.partition_point(|&(p, _)| p < lo + window);
        if blockers[from..].iter().any(|b| check(b)) {
            return true;
        }
    }
    if hi > window {
        if blockers
            .iter()
            .take_while(|&&(p, _)| p <= hi - window)
            .any(|b| check(b))
        {
            return true;
        }
    }
    false
}

/// Rotate a sorted component so that it starts right after its largest
/// internal gap (the gap no link crosses).
fn rotate_to_start(members: &[usize], v2v: &[usize], snapshot: &Snapshot) -> Vec<usize> {
    if members.len() == 1 {
        return members.to_vec();
    }
    let w = snapshot.window;
    let pos = |k: usize| snapshot.vehicles[v2v[k]].position;
    let mut best_gap = -1.0;
    let mut start = 0;
    for (idx, pair) in members.windows(2).enumerate() {
        let gap = pos(pair[1]) - pos(pair[0]);
        if gap > best_gap {
            best_gap = gap;
            start = idx + 1;
        }
    }
    let wrap = forward_gap(pos(members[members.len() - 1]), pos(members[0]), w);
    if wrap > best_gap {
        start = 0;
    }
    let mut ordered = Vec::with_capacity(members.len());
    ordered.extend_from_slice(&members[start..]);
    ordered.extend_from_slice(&members[..start]);
    ordered
}

/// Fill in the attached RSU grid indices of each cluster.
///
/// RSUs sit at `rsu_phase + g * rsu_spacing` for grid indices
/// `g = 0..floor((window - rsu_phase) / rsu_spacing)`; a cluster attaches to
/// every RSU inside its footprint.
pub fn attach_rsus(clusters: &mut [Cluster], rsu_spacing: f64, rsu_phase: f64, window: f64) {
    let count = ((window - rsu_phase) / rsu_spacing).ceil().max(0.0) as usize;
    for cluster in clusters.iter_mut() {
        let (start, len) = cluster.footprint();
        let mut rsus = Vec::new();
        let mut push_range = |lo: f64, hi: f64| {
            if hi < lo {
                return;
            }
            let g_lo = ((lo - rsu_phase) / rsu_spacing).ceil().max(0.0) as usize;
            let g_hi = ((hi - rsu_phase) / rsu_spacing).floor();
            if g_hi < 0.0 {
                return;
            }
            let g_hi = (g_hi as usize).min(count.saturating_sub(1));
            for g in g_lo..=g_hi {
                rsus.push(g);
            }
        };
        if start + len <= window {
            push_range(start, start + len);
        } else {
            push_range(start, window);
            push_range(0.0, start + len - window);
        }
        rsus.sort_unstable();
        rsus.dedup();
        cluster.m = rsus.len();
        cluster.rsus = rsus;
    }
}

struct DisjointSets {
    parent: Vec<usize>,
    size: Vec<usize>,
}

impl DisjointSets {
    fn new(len: usize) -> Self {
        DisjointSets { parent: (0..len).collect(), size: vec![1; len] }
    }

    fn find(&mut self, x: usize) -> usize {
        let mut root = x;
        while self.parent[root] != root {
            root = self.parent[root];
        }
        let mut cur = x;
        while self.parent[cur] != root {
            let next = self.parent[cur];
            self.parent[cur] = root;
            cur = next;
        }
        root
    }

    fn union(&mut self, a: usize, b: usize) {
        let (mut ra, mut rb) = (self.find(a), self.find(b));
        if ra == rb {
            return;
        }
        if self.size[ra] < self.size[rb] {
            std::mem::swap(&mut ra, &mut rb);
        }
        self.parent[rb] = ra;
        self.size[ra] += self.size[rb];
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::highway::{sample_single_lane, SingleLaneSpec};
    use approx::assert_relative_eq;

    fn snapshot_from(vehicles: Vec<(f64, VehicleKind, u32)>, eta: usize) -> Snapshot {
        let mut vehicles: Vec<Vehicle> = vehicles
            .into_iter()
            .map(|(position, kind, lane)| Vehicle { position, kind, lane })
            .collect();
        vehicles.sort_by(|a, b| a.position.partial_cmp(&b.position).unwrap());
        Snapshot { window: 20_000.0, eta, rsu_spacing: 1000.0, rsu_phase: 0.0, vehicles }
    }

    #[test]
    fn two_vehicles_in_range_form_one_cluster() {
        let snap = snapshot_from(
            vec![(0.0, VehicleKind::V2v, 1), (100.0, VehicleKind::V2v, 1)],
            1,
        );
        let clusters = form_clusters_single(&snap, 150.0).unwrap();
        assert_eq!(clusters.len(), 1);
        assert_eq!(clusters[0].n, 2);
        assert_relative_eq!(clusters[0].span, 400.0);
    }

    #[test]
    fn a_blocker_between_splits_the_cluster() {
        let snap = snapshot_from(
            vec![
                (0.0, VehicleKind::V2v, 1),
                (50.0, VehicleKind::Blocker, 1),
                (100.0, VehicleKind::V2v, 1),
            ],
            1,
        );
        let clusters = form_clusters_single(&snap, 150.0).unwrap();
        assert_eq!(clusters.len(), 2);
        for c in &clusters {
            assert_eq!(c.n, 1);
            assert_relative_eq!(c.span, 300.0);
        }
    }

    #[test]
    fn clusters_wrap_around_the_torus_seam() {
        let snap = snapshot_from(
            vec![(19_950.0, VehicleKind::V2v, 1), (30.0, VehicleKind::V2v, 1)],
            1,
        );
        let clusters = form_clusters_single(&snap, 150.0).unwrap();
        assert_eq!(clusters.len(), 1);
        assert_eq!(clusters[0].n, 2);
        assert_relative_eq!(clusters[0].first, 19_950.0);
        assert_relative_eq!(clusters[0].last, 30.0);
        assert_relative_eq!(clusters[0].span, 80.0 + 300.0);
    }

    #[test]
    fn single_lane_rejects_multilane_snapshots() {
        let snap = snapshot_from(vec![(0.0, VehicleKind::V2v, 1)], 2);
        assert!(matches!(form_clusters_single(&snap, 150.0), Err(Error::Usage(_))));
    }

    #[test]
    fn link_blocking_lane_rules() {
        let w = 20_000.0;
        let tx = Vehicle { position: 0.0, kind: VehicleKind::V2v, lane: 1 };
        let mid = |lane| Vehicle { position: 60.0, kind: VehicleKind::Blocker, lane };

        // Middle lane between lanes 1 and 3 blocks.
        let rx3 = Vehicle { position: 120.0, kind: VehicleKind::V2v, lane: 3 };
        assert!(is_link_blocked(&tx, &rx3, &[mid(2)], 0.0, w));

        // Adjacent lanes: no lane strictly between, nothing blocks.
        let rx2 = Vehicle { position: 120.0, kind: VehicleKind::V2v, lane: 2 };
        for lane in 1..=3 {
            assert!(!is_link_blocked(&tx, &rx2, &[mid(lane)], 0.0, w));
        }

        // Same lane: a same-lane blocker between them blocks.
        let tx2 = Vehicle { position: 0.0, kind: VehicleKind::V2v, lane: 2 };
        let rx2b = Vehicle { position: 120.0, kind: VehicleKind::V2v, lane: 2 };
        assert!(is_link_blocked(&tx2, &rx2b, &[mid(2)], 0.0, w));
        assert!(!is_link_blocked(&tx2, &rx2b, &[mid(1)], 0.0, w));

        // A blocker outside the segment does not block, but its physical
        // extent can reach into it.
        let outside = Vehicle { position: 121.0, kind: VehicleKind::Blocker, lane: 2 };
        assert!(!is_link_blocked(&tx2, &rx2b, &[outside], 0.0, w));
        assert!(is_link_blocked(&tx2, &rx2b, &[outside], 5.0, w));
    }

    #[test]
    fn multilane_reduces_to_single_lane_on_one_lane_input() {
        let spec = SingleLaneSpec::new(0.02, 0.6, 150.0, 1000.0, 1.0).unwrap();
        for seed in 0..20 {
            let snap = sample_single_lane(&spec, 20_000.0, seed).unwrap();
            let a = form_clusters_single(&snap, 150.0).unwrap();
            let b = form_clusters_multilane(&snap, 150.0, 0.0).unwrap();
            let key = |cs: &[Cluster]| {
                let mut v: Vec<Vec<usize>> = cs
                    .iter()
                    .map(|c| {
                        let mut m = c.member_indices.clone();
                        m.sort_unstable();
                        m
                    })
                    .collect();
                v.sort();
                v
            };
            assert_eq!(key(&a), key(&b), "seed {seed}");
        }
    }

    #[test]
    fn cross_lane_links_leapfrog_same_lane_blockers() {
        // Lane-1 blocker splits lane-1 vehicles, but a lane-2 vehicle within
        // range of both bridges them.
        let snap = snapshot_from(
            vec![
                (0.0, VehicleKind::V2v, 1),
                (50.0, VehicleKind::Blocker, 1),
                (60.0, VehicleKind::V2v, 2),
                (100.0, VehicleKind::V2v, 1),
            ],
            2,
        );
        let clusters = form_clusters_multilane(&snap, 150.0, 0.0).unwrap();
        assert_eq!(clusters.len(), 1);
        assert_eq!(clusters[0].n, 3);
    }

    #[test]
    fn full_penetration_clusters_ignore_lane_split() {
        // Same positions, different lane assignments: identical clusters
        // when there are no blockers.
        let positions = [100.0, 220.0, 900.0, 960.0, 5000.0];
        let lanes_a = [1, 1, 1, 1, 1];
        let lanes_b = [1, 2, 3, 1, 2];
        let to_snap = |lanes: [u32; 5]| {
            snapshot_from(
                positions.iter().zip(lanes).map(|(&p, l)| (p, VehicleKind::V2v, l)).collect(),
                3,
            )
        };
        let a = form_clusters_multilane(&to_snap(lanes_a), 150.0, 0.0).unwrap();
        let b = form_clusters_multilane(&to_snap(lanes_b), 150.0, 0.0).unwrap();
        let sizes = |cs: &[Cluster]| cs.iter().map(|c| c.n).collect::<Vec<_>>();
        assert_eq!(sizes(&a), sizes(&b));
        assert_eq!(a.len(), 3);
    }

    #[test]
    fn attach_rsus_counts_grid_points_in_footprint() {
        let mut snap = snapshot_from(vec![(500.0, VehicleKind::V2v, 1)], 1);
        snap.rsu_phase = 400.0;
        let mut clusters = form_clusters_single(&snap, 150.0).unwrap();
        // Footprint [350, 650] contains the RSU at 400.
        attach_rsus(&mut clusters, 1000.0, snap.rsu_phase, snap.window);
        assert_eq!(clusters[0].m, 1);
        assert_eq!(clusters[0].rsus, vec![0]);

        // Phase far from the footprint: no RSU attached.
        let mut clusters = form_clusters_single(&snap, 150.0).unwrap();
        attach_rsus(&mut clusters, 1000.0, 700.0, snap.window);
        assert_eq!(clusters[0].m, 0);
    }

    #[test]
    fn attach_rsus_over_uniform_phase_matches_footprint_fraction() {
        // Footprint length 300 against spacing 1000: m = 1 for 30% of
        // phases; footprint 1700: m = 2 for 70% of phases, else 1.
        for (extent, len, want_hi, p_hi) in [(0.0, 300.0, 1, 0.3), (1400.0, 1700.0, 2, 0.7)] {
            let snap = snapshot_from(
                vec![(5000.0, VehicleKind::V2v, 1), (5000.0 + extent, VehicleKind::V2v, 1)],
                1,
            );
            let grid = 100_000;
            let mut hits = 0usize;
            for k in 0..grid {
                let phase = (k as f64 + 0.5) * 1000.0 / grid as f64;
                let mut clusters = vec![Cluster {
                    member_indices: vec![0],
                    n: 1,
                    first: 5000.0,
                    last: 5000.0 + extent,
                    span: len,
                    footprint_start: 5000.0 - 150.0,
                    rsus: vec![],
                    m: 0,
                }];
                attach_rsus(&mut clusters, 1000.0, phase, snap.window);
                let m = clusters[0].m;
                assert!(m == want_hi || m == want_hi - 1, "m = {m}");
                if m == want_hi {
                    hits += 1;
                }
            }
            let frac = hits as f64 / grid as f64;
            assert!((frac - p_hi).abs() < 1e-3, "extent {extent}: got {frac}, want {p_hi}");
        }
    }

    #[test]
    fn footprint_covering_the_window_attaches_every_rsu() {
        let snap = snapshot_from(vec![(0.0, VehicleKind::V2v, 1)], 1);
        let mut clusters = vec![Cluster {
            member_indices: vec![0],
            n: 1,
            first: 0.0,
            last: 0.0,
            span: snap.window,
            footprint_start: 150.0,
            rsus: vec![],
            m: 0,
        }];
        attach_rsus(&mut clusters, 1000.0, 321.0, snap.window);
        assert_eq!(clusters[0].m, 20);
    }

    #[test]
    fn partition_every_v2v_vehicle_exactly_once() {
        let spec = SingleLaneSpec::new(0.03, 0.7, 150.0, 1000.0, 1.0).unwrap();
        let snap = sample_single_lane(&spec, 30_000.0, 99).unwrap();
        let clusters = form_clusters_single(&snap, 150.0).unwrap();
        let mut seen: Vec<usize> = clusters.iter().flat_map(|c| c.member_indices.clone()).collect();
        seen.sort_unstable();
        let mut expect = snap.v2v_indices();
        expect.sort_unstable();
        assert_eq!(seen, expect);
    }

    #[test]
    fn maximality_no_two_clusters_can_merge() {
        let spec = SingleLaneSpec::new(0.02, 0.5, 150.0, 1000.0, 1.0).unwrap();
        for seed in 0..10 {
            let snap = sample_single_lane(&spec, 20_000.0, seed).unwrap();
            let clusters = form_clusters_multilane(&snap, 150.0, 0.0).unwrap();
            let blockers: Vec<Vehicle> = snap
                .vehicles
                .iter()
                .copied()
                .filter(|v| v.kind == VehicleKind::Blocker)
                .collect();
            for (a, ca) in clusters.iter().enumerate() {
                for cb in clusters.iter().skip(a + 1) {
                    for &i in &ca.member_indices {
                        for &j in &cb.member_indices {
                            let (vi, vj) = (&snap.vehicles[i], &snap.vehicles[j]);
                            let within =
                                crate::highway::torus_distance(vi.position, vj.position, snap.window)
                                    <= 150.0;
                            assert!(
                                !within || is_link_blocked(vi, vj, &blockers, 0.0, snap.window),
                                "clusters are not maximal: {i} and {j} can link"
                            );
                        }
                    }
                }
            }
        }
    }
}
