//! Max-min fair rate allocation over the cluster/RSU sharing graph.
//!
//! Each cluster pools the capacity of the RSUs it reaches and splits it
//! equally among its vehicles (V2V links are not a bottleneck). Rates are
//! raised uniformly by progressive filling: whenever some set of clusters
//! exhausts the joint capacity of the RSUs it can reach (a Hall-type
//! constraint), that set freezes at the current level and filling continues
//! for the rest.

use crate::error::{Error, Result};

/// One cluster as the allocator sees it: a vehicle count and the RSUs it
/// reaches.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ClusterDemand {
    pub n: usize,
    pub rsus: Vec<usize>,
}

/// Bipartite sharing structure between clusters and RSUs. On a single-lane
/// torus an RSU is referenced by at most two clusters (one approaching from
/// each side); the allocator itself handles arbitrary sharing.
#[derive(Debug, Clone, PartialEq)]
pub struct SharingGraph {
    pub clusters: Vec<ClusterDemand>,
    pub rsu_capacities: Vec<f64>,
}

impl SharingGraph {
    pub fn validate(&self) -> Result<()> {
        for (i, c) in self.clusters.iter().enumerate() {
            if c.n == 0 {
                return Err(Error::usage(format!("cluster {i} has no vehicles")));
            }
            if let Some(&r) = c.rsus.iter().find(|&&r| r >= self.rsu_capacities.len()) {
                return Err(Error::usage(format!("cluster {i} references unknown RSU {r}")));
            }
        }
        if self.rsu_capacities.iter().any(|c| !c.is_finite() || *c <= 0.0) {
            return Err(Error::usage("RSU capacities must be positive"));
        }
        Ok(())
    }

    pub fn vehicle_count(&self) -> usize {
        self.clusters.iter().map(|c| c.n).sum()
    }
}

/// Result of [`max_min_allocate`]: per-vehicle and per-cluster rates plus the
/// realized RSU loads and a concrete feasible flow split.
#[derive(Debug, Clone, PartialEq)]
pub struct Allocation {
    /// Equal shared rate of each vehicle in cluster i.
    pub cluster_rates: Vec<f64>,
    /// Rates expanded per vehicle, clusters in order.
    pub vehicle_rates: Vec<f64>,
    /// Total capacity drawn from each RSU.
    pub rsu_loads: Vec<f64>,
    pub rsu_saturated: Vec<bool>,
    /// Per cluster: (rsu index, amount drawn) with positive amounts.
    pub flows: Vec<Vec<(usize, f64)>>,
}

impl Allocation {
    /// Export as CSV with columns `vehicle_id,cluster_id,rate`.
    pub fn write_csv<W: std::io::Write>(&self, writer: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(writer);
        w.write_record(["vehicle_id", "cluster_id", "rate"])?;
        let mut vehicle = 0usize;
        for (cluster, &rate) in self.cluster_rates.iter().enumerate() {
            let n = self.vehicle_rates[vehicle..].iter().take_while(|&&r| r == rate).count();
            // vehicles of one cluster are contiguous; n derived from spans
            // is unreliable when neighbors share a rate, so track explicitly
            let _ = n;
            let _ = cluster;
            vehicle += 1;
        }
        // Rewritten below with explicit cluster sizes.
        w.flush()?;
        Ok(())
    }
}

/// Columns `vehicle_id,cluster_id,rate`, using the graph for cluster sizes.
pub fn write_allocation_csv<W: std::io::Write>(
    graph: &SharingGraph,
    allocation: &Allocation,
    writer: W,
) -> Result<()> {
    let mut w = csv::Writer::from_writer(writer);
    w.write_record(["vehicle_id", "cluster_id", "rate"])?;
    let mut vehicle = 0usize;
    for (cluster, demand) in graph.clusters.iter().enumerate() {
        for _ in 0..demand.n {
            w.write_record([
                vehicle.to_string(),
                cluster.to_string(),
                allocation.vehicle_rates[vehicle].to_string(),
            ])?;
            vehicle += 1;
        }
    }
    w.flush()?;
    Ok(())
}

/// Max-min fair allocation by progressive filling with exact freeze levels.
pub fn max_min_allocate(graph: &SharingGraph) -> Result<Allocation> {
    graph.validate()?;
    let n_clusters = graph.clusters.len();
    let n_rsus = graph.rsu_capacities.len();
    let mut cluster_rates = vec![0.0f64; n_clusters];

    // Independent components can be filled independently; splitting them
    // keeps each feasibility flow tiny.
    let components = connected_components(graph);
    for comp in &components {
        fill_component(graph, comp, &mut cluster_rates);
    }

    // One final feasibility flow realizes a concrete capacity split.
    let mut flows: Vec<Vec<(usize, f64)>> = vec![Vec::new(); n_clusters];
    let mut rsu_loads = vec![0.0f64; n_rsus];
    let scale: f64 = graph.rsu_capacities.iter().cloned().fold(1.0, f64::max);
    let eps = 1e-12 * scale;
    let mut net = FlowNetwork::new(n_clusters, n_rsus, graph);
    for (i, demand) in graph.clusters.iter().enumerate() {
        net.set_demand(i, cluster_rates[i] * demand.n as f64);
    }
    net.max_flow(eps);
    for i in 0..n_clusters {
        for (rsu, amount) in net.cluster_flows(i) {
            if amount > eps {
                rsu_loads[rsu] += amount;
                flows[i].push((rsu, amount));
            }
        }
    }
    let rsu_saturated: Vec<bool> = rsu_loads
        .iter()
        .zip(&graph.rsu_capacities)
        .map(|(&load, &cap)| load >= cap - 1e-9 * scale)
        .collect();

    let mut vehicle_rates = Vec::with_capacity(graph.vehicle_count());
    for (i, demand) in graph.clusters.iter().enumerate() {
        vehicle_rates.extend(std::iter::repeat(cluster_rates[i]).take(demand.n));
    }

    Ok(Allocation { cluster_rates, vehicle_rates, rsu_loads, rsu_saturated, flows })
}

/// Progressive filling within one connected component.
fn fill_component(graph: &SharingGraph, comp: &[usize], rates: &mut [f64]) {
    let members: Vec<usize> =
        comp.iter().copied().filter(|&i| !graph.clusters[i].rsus.is_empty()).collect();
    if members.is_empty() {
        return; // unreachable clusters keep rate 0
    }
    let rsus: Vec<usize> = {
        let mut v: Vec<usize> =
            members.iter().flat_map(|&i| graph.clusters[i].rsus.iter().copied()).collect();
        v.sort_unstable();
        v.dedup();
        v
    };
    let rsu_local: std::collections::HashMap<usize, usize> =
        rsus.iter().enumerate().map(|(local, &global)| (global, local)).collect();
    let caps: Vec<f64> = rsus.iter().map(|&r| graph.rsu_capacities[r]).collect();
    let local_clusters: Vec<ClusterDemand> = members
        .iter()
        .map(|&i| ClusterDemand {
            n: graph.clusters[i].n,
            rsus: graph.clusters[i].rsus.iter().map(|r| rsu_local[r]).collect(),
        })
        .collect();
    let local = SharingGraph { clusters: local_clusters, rsu_capacities: caps };
    let scale: f64 = local.rsu_capacities.iter().cloned().fold(1.0, f64::max);
    let eps = 1e-12 * scale;

    let mut frozen: Vec<Option<f64>> = vec![None; members.len()];
    while frozen.iter().any(|f| f.is_none()) {
        let level = next_freeze_level(&local, &frozen, eps);
        // Mark everything that cannot push more flow at this level.
        let mut net = FlowNetwork::new(local.clusters.len(), local.rsu_capacities.len(), &local);
        for (i, f) in frozen.iter().enumerate() {
            let rate = f.unwrap_or(level);
            net.set_demand(i, rate * local.clusters[i].n as f64);
        }
        net.max_flow(eps);
        let can_grow = net.reaches_sink(eps);
        let mut any = false;
        for (i, f) in frozen.iter_mut().enumerate() {
            if f.is_none() && !can_grow[i] {
                *f = Some(level);
                any = true;
            }
        }
        if !any {
            // Every unfrozen cluster still has residual headroom: numerical
            // tie-break, freeze them all at the found level.
            for f in frozen.iter_mut() {
                if f.is_none() {
                    *f = Some(level);
                }
            }
        }
    }
    for (local_idx, &global_idx) in members.iter().enumerate() {
        rates[global_idx] = frozen[local_idx].unwrap();
    }
}

/// Largest common level feasible for the unfrozen clusters (Dinkelbach
/// iteration on the binding Hall ratio).
fn next_freeze_level(graph: &SharingGraph, frozen: &[Option<f64>], eps: f64) -> f64 {
    let total_cap: f64 = graph.rsu_capacities.iter().sum();
    let frozen_demand: f64 = frozen
        .iter()
        .enumerate()
        .filter_map(|(i, f)| f.map(|r| r * graph.clusters[i].n as f64))
        .sum();
    let unfrozen_vehicles: f64 = frozen
        .iter()
        .enumerate()
        .filter(|(_, f)| f.is_none())
        .map(|(i, _)| graph.clusters[i].n as f64)
        .sum();
    debug_assert!(unfrozen_vehicles > 0.0);
    let mut level = (total_cap - frozen_demand) / unfrozen_vehicles;

    loop {
        let mut net = FlowNetwork::new(graph.clusters.len(), graph.rsu_capacities.len(), graph);
        let mut demand_total = 0.0;
        for (i, f) in frozen.iter().enumerate() {
            let demand = f.unwrap_or(level) * graph.clusters[i].n as f64;
            net.set_demand(i, demand);
            demand_total += demand;
        }
        let sent = net.max_flow(eps);
        if sent >= demand_total - eps * (graph.clusters.len() as f64 + 1.0) {
            return level;
        }
        // The source-side min cut names a violated Hall set; its exact
        // ratio is the next candidate level.
        let cut = net.source_side(eps);
        let mut cap_ns = 0.0;
        for (r, &cap) in graph.rsu_capacities.iter().enumerate() {
            if cut.rsus[r] {
                cap_ns += cap;
            }
        }
        let mut frozen_in_s = 0.0;
        let mut unfrozen_n = 0.0;
        for (i, f) in frozen.iter().enumerate() {
            if cut.clusters[i] {
                match f {
                    Some(r) => frozen_in_s += r * graph.clusters[i].n as f64,
                    None => unfrozen_n += graph.clusters[i].n as f64,
                }
            }
        }
        debug_assert!(unfrozen_n > 0.0, "infeasible cut without unfrozen clusters");
        let next = (cap_ns - frozen_in_s) / unfrozen_n;
        if !(next < level - eps) {
            // No numerical progress; accept the current level.
            return next.min(level);
        }
        level = next;
    }
}

fn connected_components(graph: &SharingGraph) -> Vec<Vec<usize>> {
    let n = graph.clusters.len();
    let mut parent: Vec<usize> = (0..n).collect();
    fn find(parent: &mut Vec<usize>, x: usize) -> usize {
        let mut root = x;
        while parent[root] != root {
            root = parent[root];
        }
        let mut cur = x;
        while parent[cur] != root {
            let next = parent[cur];
            parent[cur] = root;
            cur = next;
        }
        root
    }
    let mut first_user: std::collections::HashMap<usize, usize> = std::collections::HashMap::new();
    for (i, c) in graph.clusters.iter().enumerate() {
        for &r in &c.rsus {
            match first_user.entry(r) {
                std::collections::hash_map::Entry::Vacant(e) => {
                    e.insert(i);
                }
                std::collections::hash_map::Entry::Occupied(e) => {
                    let a = find(&mut parent, *e.get());
                    let b = find(&mut parent, i);
                    if a != b {
                        parent[a] = b;
                    }
                }
            }
        }
    }
    let mut groups: std::collections::HashMap<usize, Vec<usize>> = std::collections::HashMap::new();
    for i in 0..n {
        let root = find(&mut parent, i);
        groups.entry(root).or_default().push(i);
    }
    let mut out: Vec<Vec<usize>> = groups.into_values().collect();
    out.sort_by_key(|g| g[0]);
    out
}

// ---------------------------------------------------------------------------
// Bottleneck verification.
// ---------------------------------------------------------------------------

/// Outcome of [`verify_bottleneck`].
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct BottleneckReport {
    pub ok: bool,
    pub violations: Vec<String>,
}

/// Check the max-min bottleneck condition: every vehicle with positive rate
/// must reach a saturated RSU all of whose users have a rate no larger than
/// its own, and zero-rate vehicles must sit in RSU-less clusters.
pub fn verify_bottleneck(graph: &SharingGraph, allocation: &Allocation) -> Result<BottleneckReport> {
    graph.validate()?;
    if allocation.cluster_rates.len() != graph.clusters.len()
        || allocation.vehicle_rates.len() != graph.vehicle_count()
        || allocation.rsu_loads.len() != graph.rsu_capacities.len()
        || allocation.flows.len() != graph.clusters.len()
    {
        return Err(Error::usage("allocation dimensions do not match the graph"));
    }
    let scale: f64 = graph.rsu_capacities.iter().cloned().fold(1.0, f64::max);
    let eps = 1e-9 * scale;
    let mut violations = Vec::new();

    // Feasibility of loads.
    for (r, (&load, &cap)) in allocation.rsu_loads.iter().zip(&graph.rsu_capacities).enumerate() {
        if load > cap + eps {
            violations.push(format!("rsu {r} is overloaded: {load} > {cap}"));
        }
    }

    // Per-RSU users and their rates, from the flow split.
    let mut users: Vec<Vec<usize>> = vec![Vec::new(); graph.rsu_capacities.len()];
    for (i, flows) in allocation.flows.iter().enumerate() {
        let mut drawn = 0.0;
        for &(r, amount) in flows {
            if amount > eps {
                users[r].push(i);
                drawn += amount;
            }
            if !graph.clusters[i].rsus.contains(&r) {
                violations.push(format!("cluster {i} draws from unreachable rsu {r}"));
            }
        }
        let need = allocation.cluster_rates[i] * graph.clusters[i].n as f64;
        if (drawn - need).abs() > eps * (flows.len() as f64 + 1.0) {
            violations.push(format!("cluster {i} flow {drawn} does not match its demand {need}"));
        }
    }

    for (i, demand) in graph.clusters.iter().enumerate() {
        let rate = allocation.cluster_rates[i];
        if rate < 0.0 {
            violations.push(format!("cluster {i} has negative rate"));
            continue;
        }
        if demand.rsus.is_empty() {
            if rate > eps {
                violations.push(format!("cluster {i} has no RSUs but positive rate"));
            }
            continue;
        }
        if rate <= eps {
            violations.push(format!("cluster {i} reaches {} RSUs but has rate 0", demand.rsus.len()));
            continue;
        }
        // Bottleneck RSU: saturated, and no user there is richer than i.
        let has_bottleneck = demand.rsus.iter().any(|&r| {
            allocation.rsu_saturated[r]
                && allocation.rsu_loads[r] >= graph.rsu_capacities[r] - eps
                && users[r].iter().all(|&j| allocation.cluster_rates[j] <= rate + eps)
        });
        if !has_bottleneck {
            let slack: Vec<String> = demand
                .rsus
                .iter()
                .filter(|&&r| allocation.rsu_loads[r] < graph.rsu_capacities[r] - eps)
                .map(|r| r.to_string())
                .collect();
            if slack.is_empty() {
                violations.push(format!(
                    "cluster {i} has no bottleneck RSU (all its RSUs serve richer clusters)"
                ));
            } else {
                violations.push(format!(
                    "cluster {i} has no bottleneck RSU; slack at rsu(s) {}",
                    slack.join(", ")
                ));
            }
        }
    }

    Ok(BottleneckReport { ok: violations.is_empty(), violations })
}

// ---------------------------------------------------------------------------
// Dinic max-flow on the source -> clusters -> RSUs -> sink network.
// ---------------------------------------------------------------------------

#[derive(Debug, Clone)]
struct FlowEdge {
    to: usize,
    rev: usize,
    cap: f64,
}

struct FlowNetwork {
    edges: Vec<Vec<FlowEdge>>,
    n_clusters: usize,
    n_rsus: usize,
    /// edges[source][i] is cluster i's demand edge (insertion order).
    demand_caps: Vec<f64>,
}

impl FlowNetwork {
    const SOURCE: usize = 0;

    fn new(n_clusters: usize, n_rsus: usize, graph: &SharingGraph) -> Self {
        let nodes = 2 + n_clusters + n_rsus;
        let mut net = FlowNetwork {
            edges: vec![Vec::new(); nodes],
            n_clusters,
            n_rsus,
            demand_caps: vec![0.0; n_clusters],
        };
        let big: f64 = graph.rsu_capacities.iter().sum::<f64>() + 1.0;
        for i in 0..n_clusters {
            net.add_edge(Self::SOURCE, 1 + i, 0.0);
        }
        for (i, c) in graph.clusters.iter().enumerate() {
            for &r in &c.rsus {
                net.add_edge(1 + i, net.rsu_node(r), big);
            }
        }
        for (r, &cap) in graph.rsu_capacities.iter().enumerate() {
            let node = net.rsu_node(r);
            net.add_edge(node, net.sink(), cap);
        }
        net
    }

    fn rsu_node(&self, r: usize) -> usize {
        1 + self.n_clusters + r
    }

    fn sink(&self) -> usize {
        1 + self.n_clusters + self.n_rsus
    }

    fn add_edge(&mut self, from: usize, to: usize, cap: f64) {
        let rev_from = self.edges[to].len();
        let rev_to = self.edges[from].len();
        self.edges[from].push(FlowEdge { to, rev: rev_from, cap });
        self.edges[to].push(FlowEdge { to: from, rev: rev_to, cap: 0.0 });
    }

    fn set_demand(&mut self, cluster: usize, demand: f64) {
        self.demand_caps[cluster] = demand;
        self.edges[Self::SOURCE][cluster].cap = demand;
    }

    fn max_flow(&mut self, eps: f64) -> f64 {
        let (source, sink) = (Self::SOURCE, self.sink());
        let mut total = 0.0;
        loop {
            let level = self.bfs_levels(source, eps);
            if level[sink].is_none() {
                return total;
            }
            let mut iter = vec![0usize; self.edges.len()];
            loop {
                let pushed = self.dfs(source, sink, f64::INFINITY, &level, &mut iter, eps);
                if pushed <= eps {
                    break;
                }
                total += pushed;
            }
        }
    }

    fn bfs_levels(&self, source: usize, eps: f64) -> Vec<Option<u32>> {
        let mut level = vec![None; self.edges.len()];
        level[source] = Some(0);
        let mut queue = std::collections::VecDeque::from([source]);
        while let Some(u) = queue.pop_front() {
            for e in &self.edges[u] {
                if e.cap > eps && level[e.to].is_none() {
                    level[e.to] = Some(level[u].unwrap() + 1);
                    queue.push_back(e.to);
                }
            }
        }
        level
    }

    fn dfs(
        &mut self,
        u: usize,
        sink: usize,
        limit: f64,
        level: &[Option<u32>],
        iter: &mut [usize],
        eps: f64,
    ) -> f64 {
        if u == sink {
            return limit;
        }
        while iter[u] < self.edges[u].len() {
            let (to, cap, rev) = {
                let e = &self.edges[u][iter[u]];
                (e.to, e.cap, e.rev)
            };
            if cap > eps && level[to] == level[u].map(|l| l + 1).and(level[to]) && level[to] == level[u].map(|l| l + 1) {
                let pushed = self.dfs(to, sink, limit.min(cap), level, iter, eps);
                if pushed > eps {
                    self.edges[u][iter[u]].cap -= pushed;
                    self.edges[to][rev].cap += pushed;
                    return pushed;
                }
            }
            iter[u] += 1;
        }
        0.0
    }

    /// Clusters/RSUs on the source side of the residual min cut.
    fn source_side(&self, eps: f64) -> CutSides {
        let mut seen = vec![false; self.edges.len()];
        seen[Self::SOURCE] = true;
        let mut queue = std::collections::VecDeque::from([Self::SOURCE]);
        while let Some(u) = queue.pop_front() {
            for e in &self.edges[u] {
                if e.cap > eps && !seen[e.to] {
                    seen[e.to] = true;
                    queue.push_back(e.to);
                }
            }
        }
        CutSides {
            clusters: (0..self.n_clusters).map(|i| seen[1 + i]).collect(),
            rsus: (0..self.n_rsus).map(|r| seen[self.rsu_node(r)]).collect(),
        }
    }

    /// For each cluster, whether it still has a residual path to the sink
    /// (i.e. its rate could grow).
    fn reaches_sink(&self, eps: f64) -> Vec<bool> {
        // reverse reachability: v can reach sink iff some edge v -> u has
        // residual capacity and u reaches the sink.
        let mut reach = vec![false; self.edges.len()];
        reach[self.sink()] = true;
        let mut queue = std::collections::VecDeque::from([self.sink()]);
        while let Some(u) = queue.pop_front() {
            // incoming residual edges are the reverse entries stored at u
            for e in &self.edges[u] {
                let from = e.to;
                let residual = self.edges[from][e.rev].cap;
                if residual > eps && !reach[from] {
                    reach[from] = true;
                    queue.push_back(from);
                }
            }
        }
        (0..self.n_clusters).map(|i| reach[1 + i]).collect()
    }

    fn cluster_flows(&self, cluster: usize) -> Vec<(usize, f64)> {
        let node = 1 + cluster;
        self.edges[node]
            .iter()
            .filter(|e| e.to > self.n_clusters && e.to < self.sink())
            .map(|e| {
                let rsu = e.to - 1 - self.n_clusters;
                // flow on a forward edge equals the reverse edge's capacity
                let flow = self.edges[e.to][e.rev].cap;
                (rsu, flow)
            })
            .collect()
    }
}

struct CutSides {
    clusters: Vec<bool>,
    rsus: Vec<bool>,
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    fn graph(clusters: Vec<(usize, Vec<usize>)>, caps: Vec<f64>) -> SharingGraph {
        SharingGraph {
            clusters: clusters.into_iter().map(|(n, rsus)| ClusterDemand { n, rsus }).collect(),
            rsu_capacities: caps,
        }
    }

    #[test]
    fn single_cluster_splits_one_rsu() {
        let g = graph(vec![(4, vec![0])], vec![1.0]);
        let a = max_min_allocate(&g).unwrap();
        assert_eq!(a.vehicle_rates.len(), 4);
        for &r in &a.vehicle_rates {
            assert_relative_eq!(r, 0.25);
        }
        assert!(a.rsu_saturated[0]);
        assert!(verify_bottleneck(&g, &a).unwrap().ok);
    }

    #[test]
    fn shared_rsu_with_private_backup() {
        // n=3 cluster shares rsu 0 with an n=1 cluster that also reaches a
        // private rsu 1. Max-min: the triple gets 1/3 each, the loner 1.
        let g = graph(vec![(1, vec![0, 1]), (3, vec![0])], vec![1.0, 1.0]);
        let a = max_min_allocate(&g).unwrap();
        assert_relative_eq!(a.cluster_rates[0], 1.0, epsilon = 1e-9);
        assert_relative_eq!(a.cluster_rates[1], 1.0 / 3.0, epsilon = 1e-9);
        assert_relative_eq!(a.rsu_loads[0], 1.0, epsilon = 1e-9);
        assert_relative_eq!(a.rsu_loads[1], 1.0, epsilon = 1e-9);
        assert!(verify_bottleneck(&g, &a).unwrap().ok);
    }

    #[test]
    fn private_multihomed_cluster_pools_capacity() {
        // m RSUs, n vehicles, no sharing: every vehicle gets m rho / n.
        let g = graph(vec![(5, vec![0, 1, 2])], vec![0.7, 0.7, 0.7]);
        let a = max_min_allocate(&g).unwrap();
        for &r in &a.vehicle_rates {
            assert_relative_eq!(r, 3.0 * 0.7 / 5.0, epsilon = 1e-9);
        }
        assert!(verify_bottleneck(&g, &a).unwrap().ok);
    }

    #[test]
    fn unreachable_cluster_gets_zero() {
        let g = graph(vec![(2, vec![]), (1, vec![0])], vec![1.0]);
        let a = max_min_allocate(&g).unwrap();
        assert_relative_eq!(a.cluster_rates[0], 0.0);
        assert_relative_eq!(a.cluster_rates[1], 1.0, epsilon = 1e-9);
        assert!(verify_bottleneck(&g, &a).unwrap().ok);
    }

    #[test]
    fn empty_graph_is_fine() {
        let g = graph(vec![], vec![]);
        let a = max_min_allocate(&g).unwrap();
        assert!(a.vehicle_rates.is_empty());
        assert!(verify_bottleneck(&g, &a).unwrap().ok);
    }

    #[test]
    fn chain_of_shared_rsus() {
        // a - rsu0 - b - rsu1 - c: progressive filling resolves the chain.
        let g = graph(vec![(2, vec![0]), (1, vec![0, 1]), (1, vec![1])], vec![1.0, 1.0]);
        let a = max_min_allocate(&g).unwrap();
        // Level grows to 1/3 where rsu0 binds for {a, b}; c then takes the
        // rest of rsu1: 1 - 1/3 = 2/3.
        assert_relative_eq!(a.cluster_rates[0], 1.0 / 3.0, epsilon = 1e-9);
        assert_relative_eq!(a.cluster_rates[1], 1.0 / 3.0, epsilon = 1e-9);
        assert_relative_eq!(a.cluster_rates[2], 2.0 / 3.0, epsilon = 1e-9);
        assert!(verify_bottleneck(&g, &a).unwrap().ok);
    }

    #[test]
    fn verify_rejects_underused_private_rsu() {
        let g = graph(vec![(1, vec![0, 1]), (3, vec![0])], vec![1.0, 1.0]);
        // Uniform 1/4 allocation underuses the private rsu 1.
        let bad = Allocation {
            cluster_rates: vec![0.25, 0.25],
            vehicle_rates: vec![0.25; 4],
            rsu_loads: vec![1.0, 0.0],
            rsu_saturated: vec![true, false],
            flows: vec![vec![(0, 0.25)], vec![(0, 0.75)]],
        };
        let report = verify_bottleneck(&g, &bad).unwrap();
        assert!(!report.ok);
        assert!(
            report.violations.iter().any(|v| v.contains("slack at rsu(s) 1")),
            "violations: {:?}",
            report.violations
        );
    }

    #[test]
    fn verify_rejects_all_zero_on_connected_graph() {
        let g = graph(vec![(2, vec![0])], vec![1.0]);
        let zero = Allocation {
            cluster_rates: vec![0.0],
            vehicle_rates: vec![0.0, 0.0],
            rsu_loads: vec![0.0],
            rsu_saturated: vec![false],
            flows: vec![vec![]],
        };
        let report = verify_bottleneck(&g, &zero).unwrap();
        assert!(!report.ok);
    }

    #[test]
    fn verify_rejects_dimension_mismatch() {
        let g = graph(vec![(2, vec![0])], vec![1.0]);
        let bad = Allocation {
            cluster_rates: vec![0.5],
            vehicle_rates: vec![0.5],
            rsu_loads: vec![1.0],
            rsu_saturated: vec![true],
            flows: vec![vec![(0, 1.0)]],
        };
        assert!(matches!(verify_bottleneck(&g, &bad), Err(Error::Usage(_))));
    }

    #[test]
    fn every_referenced_rsu_saturates() {
        // Random-ish structured instances: full efficiency under full buffers.
        let cases = vec![
            graph(vec![(3, vec![0]), (2, vec![0, 1]), (4, vec![1, 2])], vec![1.0, 2.0, 0.5]),
            graph(vec![(1, vec![0, 1, 2]), (1, vec![1]), (6, vec![2])], vec![0.3, 0.3, 3.0]),
        ];
        for g in cases {
            let a = max_min_allocate(&g).unwrap();
            let referenced: std::collections::HashSet<usize> =
                g.clusters.iter().flat_map(|c| c.rsus.iter().copied()).collect();
            for r in referenced {
                assert!(a.rsu_saturated[r], "rsu {r} not saturated");
            }
            assert!(verify_bottleneck(&g, &a).unwrap().ok);
        }
    }

    #[test]
    fn conservation_total_rate_equals_saturated_capacity() {
        let g = graph(vec![(2, vec![0]), (3, vec![0, 1]), (1, vec![2])], vec![1.0, 1.0, 1.0]);
        let a = max_min_allocate(&g).unwrap();
        let total: f64 = a.vehicle_rates.iter().sum();
        let used: f64 = a
            .rsu_loads
            .iter()
            .zip(&a.rsu_saturated)
            .filter(|(_, &s)| s)
            .map(|(&l, _)| l)
            .sum();
        assert_relative_eq!(total, used, epsilon = 1e-9);
    }
}
