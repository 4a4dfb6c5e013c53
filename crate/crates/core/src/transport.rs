//! Exact Kantorovich W1 distance between discrete measures on manifold
//! nodes, via successive-shortest-path minimum-cost flow on the bipartite
//! transportation network, with optional top-N support compression for
//! node-dense measures.

use crate::error::{QcurvError, Result};

/// Result of a W1 computation.
#[derive(Debug, Clone, Copy)]
pub struct W1Result {
    /// Exact transport cost between the (possibly compressed) measures.
    pub distance: f64,
    /// Upper bound on the error introduced by support compression
    /// (zero when both supports fit the cap).
    pub compression_error_bound: f64,
}

/// Relative mass-balance tolerance between the two measures.
pub const MASS_TOLERANCE: f64 = 1e-9;

fn clean_measure(measure: &[(usize, f64)]) -> Result<Vec<(usize, f64)>> {
    let mut out: Vec<(usize, f64)> = Vec::with_capacity(measure.len());
    for &(node, mass) in measure {
        if mass < 0.0 {
            return Err(QcurvError::Validation(format!(
                "measure has negative mass {mass} at node {node}"
            )));
        }
        if mass > 0.0 {
            out.push((node, mass));
        }
    }
    if out.is_empty() {
        return Err(QcurvError::Validation("measure has no mass".into()));
    }
    // Merge duplicate nodes so the network has one supply per site.
    out.sort_by_key(|&(node, _)| node);
    let mut merged: Vec<(usize, f64)> = Vec::with_capacity(out.len());
    for (node, mass) in out {
        match merged.last_mut() {
            Some((last, m)) if *last == node => *m += mass,
            _ => merged.push((node, mass)),
        }
    }
    Ok(merged)
}

/// Keep the `cap` heaviest atoms and renormalize to the original total.
/// Returns the compressed measure and the dropped mass fraction.
fn compress(measure: Vec<(usize, f64)>, cap: usize) -> (Vec<(usize, f64)>, f64) {
    if measure.len() <= cap {
        return (measure, 0.0);
    }
    let total: f64 = measure.iter().map(|&(_, m)| m).sum();
    let mut sorted = measure;
    // Heaviest first; ties broken by node index for determinism.
    sorted.sort_by(|a, b| b.1.total_cmp(&a.1).then(a.0.cmp(&b.0)));
    sorted.truncate(cap);
    let kept: f64 = sorted.iter().map(|&(_, m)| m).sum();
    let scale = total / kept;
    for (_, m) in &mut sorted {
        *m *= scale;
    }
    sorted.sort_by_key(|&(node, _)| node);
    (sorted, (total - kept) / total)
}

struct Edge {
    to: usize,
    rev: usize,
    cap: f64,
    cost: f64,
}

struct Network {
    graph: Vec<Vec<Edge>>,
}

impl Network {
    fn new(n: usize) -> Self {
        Network {
            graph: (0..n).map(|_| Vec::new()).collect(),
        }
    }

    fn add_edge(&mut self, from: usize, to: usize, cap: f64, cost: f64) {
        let rev_from = self.graph[to].len();
        let rev_to = self.graph[from].len();
        self.graph[from].push(Edge {
            to,
            rev: rev_from,
            cap,
            cost,
        });
        self.graph[to].push(Edge {
            to: from,
            rev: rev_to,
            cap: 0.0,
            cost: -cost,
        });
    }

    /// Minimum-cost maximum flow from `source` to `sink` by successive
    /// shortest paths with Johnson potentials (all costs nonnegative at
    /// entry, so Dijkstra applies throughout).
    fn min_cost_flow(&mut self, source: usize, sink: usize, flow_eps: f64) -> f64 {
        let n = self.graph.len();
        let mut potential = vec![0.0f64; n];
        let mut total_cost = 0.0;
        loop {
            // Dijkstra on reduced costs.
            let mut dist = vec![f64::INFINITY; n];
            let mut prev: Vec<Option<(usize, usize)>> = vec![None; n];
            dist[source] = 0.0;
            let mut heap = std::collections::BinaryHeap::new();
            heap.push(HeapEntry(0.0, source));
            while let Some(HeapEntry(d, u)) = heap.pop() {
                if d > dist[u] + 1e-15 {
                    continue;
                }
                for (ei, e) in self.graph[u].iter().enumerate() {
                    if e.cap <= flow_eps {
                        continue;
                    }
                    let reduced = e.cost + potential[u] - potential[e.to];
                    let nd = d + reduced.max(0.0);
                    if nd < dist[e.to] - 1e-15 {
                        dist[e.to] = nd;
                        prev[e.to] = Some((u, ei));
                        heap.push(HeapEntry(nd, e.to));
                    }
                }
            }
            if !dist[sink].is_finite() {
                break;
            }
            for v in 0..n {
                if dist[v].is_finite() {
                    potential[v] += dist[v];
                }
            }
            // Bottleneck along the path.
            let mut push = f64::INFINITY;
            let mut v = sink;
            while let Some((u, ei)) = prev[v] {
                push = push.min(self.graph[u][ei].cap);
                v = u;
            }
            if push <= flow_eps {
                break;
            }
            let mut v = sink;
            while let Some((u, ei)) = prev[v] {
                let rev = self.graph[u][ei].rev;
                self.graph[u][ei].cap -= push;
                self.graph[v][rev].cap += push;
                total_cost += push * self.graph[u][ei].cost;
                v = u;
            }
        }
        total_cost
    }
}

/// Min-heap entry ordered by distance then node index (deterministic).
struct HeapEntry(f64, usize);

impl PartialEq for HeapEntry {
    fn eq(&self, other: &Self) -> bool {
        self.0 == other.0 && self.1 == other.1
    }
}
impl Eq for HeapEntry {}
impl PartialOrd for HeapEntry {
    fn partial_cmp(&self, other: &Self) -> Option<std::cmp::Ordering> {
        Some(self.cmp(other))
    }
}
impl Ord for HeapEntry {
    fn cmp(&self, other: &Self) -> std::cmp::Ordering {
        other
            .0
            .total_cmp(&self.0)
            .then_with(|| other.1.cmp(&self.1))
    }
}

/// Exact W1 distance between two discrete measures with equal total mass.
///
/// `dist(i, j)` supplies the ground metric between support nodes.
/// Supports larger than `max_support` are compressed to their heaviest
/// atoms and renormalized; the induced error is bounded by
/// `2 * dropped_mass * diameter` per measure and reported in the result.
pub fn w1_distance(
    mu: &[(usize, f64)],
    nu: &[(usize, f64)],
    max_support: usize,
    diameter: f64,
    mut dist: impl FnMut(usize, usize) -> Result<f64>,
) -> Result<W1Result> {
    if max_support < 1 {
        return Err(QcurvError::Config("support cap must be at least 1".into()));
    }
    let mu = clean_measure(mu)?;
    let nu = clean_measure(nu)?;
    let total_mu: f64 = mu.iter().map(|&(_, m)| m).sum();
    let total_nu: f64 = nu.iter().map(|&(_, m)| m).sum();
    if (total_mu - total_nu).abs() > MASS_TOLERANCE * total_mu.max(total_nu).max(1.0) {
        return Err(QcurvError::Validation(format!(
            "transport requires equal total masses: {total_mu} vs {total_nu}"
        )));
    }
    let (mu, dropped_mu) = compress(mu, max_support);
    let (nu, dropped_nu) = compress(nu, max_support);
    let compression_error_bound = 2.0 * (dropped_mu + dropped_nu) * diameter;

    let n1 = mu.len();
    let n2 = nu.len();
    let source = 0usize;
    let sink = n1 + n2 + 1;
    let mut net = Network::new(n1 + n2 + 2);
    for (i, &(_, m)) in mu.iter().enumerate() {
        net.add_edge(source, 1 + i, m, 0.0);
    }
    for (j, &(_, m)) in nu.iter().enumerate() {
        net.add_edge(1 + n1 + j, sink, m, 0.0);
    }
    for (i, &(a, _)) in mu.iter().enumerate() {
        for (j, &(b, _)) in nu.iter().enumerate() {
            let d = dist(a, b)?;
            if !(d >= 0.0) {
                return Err(QcurvError::Numeric {
                    what: format!("ground distance d({a},{b}) is not nonnegative"),
                    residual: d,
                });
            }
            net.add_edge(1 + i, 1 + n1 + j, f64::INFINITY, d);
        }
    }
    let flow_eps = 1e-14 * total_mu.max(1.0);
    let distance = net.min_cost_flow(source, sink, flow_eps);
    Ok(W1Result {
        distance,
        compression_error_bound,
    })
}
