//! Lattice checks: intrinsic path bound, complement connectivity and the
//! interior-of-closure test.

use std::cmp::Reverse;
use std::collections::{BinaryHeap, VecDeque};

use num_complex::Complex64;
use serde::Serialize;

use super::{DomainError, PlanarDomain, Region};

/// Number of farthest-point-sampled sources for the path bound.
pub const PATH_SOURCES: usize = 200;

/// Lattices beyond this many nodes are refused rather than allocated.
const MAX_NODES: usize = 8_000_000;

/// Per-side probe count of the sub-grid used by the interior-of-closure test.
const CLOSURE_PROBES: usize = 32;

/// Neighbour offsets: the 8 king moves plus the 8 knight moves. Knight moves
/// keep the metric within 3% of Euclidean in every direction; king moves
/// alone overestimate by up to 8%.
const OFFSETS: [(i64, i64); 16] = [
    (1, 0),
    (-1, 0),
    (0, 1),
    (0, -1),
    (1, 1),
    (1, -1),
    (-1, 1),
    (-1, -1),
    (2, 1),
    (2, -1),
    (-2, 1),
    (-2, -1),
    (1, 2),
    (1, -2),
    (-1, 2),
    (-1, -2),
];

struct Lattice {
    x0: f64,
    y0: f64,
    h: f64,
    nx: usize,
    ny: usize,
    inside: Vec<bool>,
}

impl Lattice {
    fn new(region: &dyn Region, h: f64, margin: usize) -> Result<Self, DomainError> {
        if !(h > 0.0 && h.is_finite()) {
            return Err(DomainError::BadResolution(h));
        }
        let b = region.bounding_box();
        let m = margin as f64 * h;
        let nx = ((b.width() + 2.0 * m) / h).ceil() as usize + 1;
        let ny = ((b.height() + 2.0 * m) / h).ceil() as usize + 1;
        if nx.saturating_mul(ny) > MAX_NODES {
            return Err(DomainError::InvalidShape(format!(
                "lattice of {nx}×{ny} nodes at resolution {h} is too large"
            )));
        }
        let (x0, y0) = (b.x0 - m, b.y0 - m);
        let mut inside = Vec::with_capacity(nx * ny);
        for j in 0..ny {
            for i in 0..nx {
                inside.push(region.contains(Complex64::new(x0 + i as f64 * h, y0 + j as f64 * h)));
            }
        }
        Ok(Lattice { x0, y0, h, nx, ny, inside })
    }

    fn point(&self, i: usize, j: usize) -> Complex64 {
        Complex64::new(self.x0 + i as f64 * self.h, self.y0 + j as f64 * self.h)
    }

    fn index(&self, i: usize, j: usize) -> usize {
        j * self.nx + i
    }

    fn shifted(&self, i: usize, j: usize, di: i64, dj: i64) -> Option<(usize, usize)> {
        let (a, b) = (i as i64 + di, j as i64 + dj);
        (a >= 0 && b >= 0 && (a as usize) < self.nx && (b as usize) < self.ny)
            .then_some((a as usize, b as usize))
    }
}

/// Grid estimate of the intrinsic path bound.
#[derive(Clone, Debug, Serialize)]
pub struct PathBound {
    pub value: f64,
    pub resolution: f64,
    pub nodes: usize,
    pub sources: usize,
}

/// Interior lattice graph in compressed adjacency form.
struct Graph {
    points: Vec<Complex64>,
    start: Vec<usize>,
    edges: Vec<(u32, f64)>,
}

fn interior_graph(region: &dyn Region, lat: &Lattice) -> Graph {
    let mut id = vec![u32::MAX; lat.inside.len()];
    let mut points = Vec::new();
    for j in 0..lat.ny {
        for i in 0..lat.nx {
            let k = lat.index(i, j);
            if lat.inside[k] {
                id[k] = points.len() as u32;
                points.push(lat.point(i, j));
            }
        }
    }
    let mut start = Vec::with_capacity(points.len() + 1);
    let mut edges = Vec::new();
    for j in 0..lat.ny {
        for i in 0..lat.nx {
            if !lat.inside[lat.index(i, j)] {
                continue;
            }
            start.push(edges.len());
            let p = lat.point(i, j);
            for &(di, dj) in &OFFSETS {
                let Some((a, b)) = lat.shifted(i, j, di, dj) else { continue };
                let k = lat.index(a, b);
                if !lat.inside[k] {
                    continue;
                }
                let q = lat.point(a, b);
                let ok = [0.25, 0.5, 0.75].iter().all(|&t| region.contains(p + (q - p) * t));
                if ok {
                    edges.push((id[k], (q - p).norm()));
                }
            }
        }
    }
    start.push(edges.len());
    Graph { points, start, edges }
}

fn component_count(g: &Graph) -> usize {
    let n = g.points.len();
    let mut seen = vec![false; n];
    let mut count = 0;
    let mut queue = VecDeque::new();
    for s in 0..n {
        if seen[s] {
            continue;
        }
        count += 1;
        seen[s] = true;
        queue.push_back(s);
        while let Some(u) = queue.pop_front() {
            for &(v, _) in &g.edges[g.start[u]..g.start[u + 1]] {
                if !seen[v as usize] {
                    seen[v as usize] = true;
                    queue.push_back(v as usize);
                }
            }
        }
    }
    count
}

/// Single-source shortest paths; returns the farthest node and its distance.
fn dijkstra(g: &Graph, source: usize, dist: &mut [f64]) -> (usize, f64) {
    dist.fill(f64::INFINITY);
    dist[source] = 0.0;
    // Non-negative f64 bit patterns order like the values.
    let mut heap = BinaryHeap::new();
    heap.push(Reverse((0u64, source as u32)));
    let (mut far, mut far_d) = (source, 0.0);
    while let Some(Reverse((bits, u))) = heap.pop() {
        let d = f64::from_bits(bits);
        let u = u as usize;
        if d > dist[u] {
            continue;
        }
        if d > far_d {
            far = u;
            far_d = d;
        }
        for &(v, w) in &g.edges[g.start[u]..g.start[u + 1]] {
            let nd = d + w;
            if nd < dist[v as usize] {
                dist[v as usize] = nd;
                heap.push(Reverse((nd.to_bits(), v)));
            }
        }
    }
    (far, far_d)
}

/// Euclidean farthest-point sampling starting from node 0.
fn farthest_points(points: &[Complex64], count: usize) -> Vec<usize> {
    let mut chosen = vec![0];
    let mut gap: Vec<f64> = points.iter().map(|p| (p - points[0]).norm()).collect();
    while chosen.len() < count.min(points.len()) {
        let (next, &d) = gap
            .iter()
            .enumerate()
            .max_by(|a, b| a.1.total_cmp(b.1))
            .expect("nonempty");
        if d == 0.0 {
            break;
        }
        chosen.push(next);
        for (g, p) in gap.iter_mut().zip(points) {
            *g = g.min((p - points[next]).norm());
        }
    }
    chosen
}

/// Estimates the supremum of in-domain shortest path lengths over point
/// pairs on the interior lattice of spacing `h`. Shortest paths are run from
/// [`PATH_SOURCES`] farthest-point-sampled sources, followed by one extra
/// sweep from the farthest node found.
pub fn estimate_path_bound(region: &dyn Region, h: f64) -> Result<PathBound, DomainError> {
    let lat = Lattice::new(region, h, 0)?;
    let g = interior_graph(region, &lat);
    let n = g.points.len();
    if n == 0 {
        return Err(DomainError::EmptyGrid { resolution: h });
    }
    let components = component_count(&g);
    if components > 1 {
        return Err(DomainError::Disconnected { components, resolution: h });
    }
    let sources = farthest_points(&g.points, PATH_SOURCES);
    let mut dist = vec![0.0; n];
    let (mut best, mut best_node) = (0.0, 0);
    for &s in &sources {
        let (far, d) = dijkstra(&g, s, &mut dist);
        if d > best {
            best = d;
            best_node = far;
        }
    }
    let (_, d) = dijkstra(&g, best_node, &mut dist);
    Ok(PathBound { value: best.max(d), resolution: h, nodes: n, sources: sources.len() + 1 })
}

/// Topological checks at resolution `h`.
#[derive(Clone, Debug, Serialize)]
pub struct TopologyReport {
    pub resolution: f64,
    /// Outside lattice nodes not reachable from the frame; zero means the
    /// complement of the closure is connected at this resolution.
    pub bounded_complement_nodes: usize,
    pub complement_connected: bool,
    /// Outside nodes whose whole `h`-square probes as inside, i.e. points of
    /// the interior of the closure missing from the domain.
    pub closure_violations: usize,
    pub interior_of_closure_ok: bool,
}

pub fn check_topology(region: &dyn Region, h: f64) -> Result<TopologyReport, DomainError> {
    let lat = Lattice::new(region, h, 2)?;

    // 4-connected flood of outside nodes from the frame corner.
    let mut reached = vec![false; lat.inside.len()];
    let mut queue = VecDeque::new();
    reached[0] = true;
    queue.push_back((0usize, 0usize));
    while let Some((i, j)) = queue.pop_front() {
        for (di, dj) in [(1, 0), (-1, 0), (0, 1), (0, -1)] {
            if let Some((a, b)) = lat.shifted(i, j, di, dj) {
                let k = lat.index(a, b);
                if !lat.inside[k] && !reached[k] {
                    reached[k] = true;
                    queue.push_back((a, b));
                }
            }
        }
    }
    let bounded = lat
        .inside
        .iter()
        .zip(&reached)
        .filter(|(&inside, &r)| !inside && !r)
        .count();

    let mut violations = 0;
    for j in 0..lat.ny {
        for i in 0..lat.nx {
            if lat.inside[lat.index(i, j)] {
                continue;
            }
            let touches = OFFSETS[..8].iter().any(|&(di, dj)| {
                lat.shifted(i, j, di, dj).is_some_and(|(a, b)| lat.inside[lat.index(a, b)])
            });
            if touches && square_probes_inside(region, lat.point(i, j), h) {
                violations += 1;
            }
        }
    }

    Ok(TopologyReport {
        resolution: h,
        bounded_complement_nodes: bounded,
        complement_connected: bounded == 0,
        closure_violations: violations,
        interior_of_closure_ok: violations == 0,
    })
}

fn square_probes_inside(region: &dyn Region, center: Complex64, h: f64) -> bool {
    let step = h / CLOSURE_PROBES as f64;
    (0..CLOSURE_PROBES).all(|a| {
        (0..CLOSURE_PROBES).all(|b| {
            let dx = -0.5 * h + (a as f64 + 0.5) * step;
            let dy = -0.5 * h + (b as f64 + 0.5) * step;
            region.contains(center + Complex64::new(dx, dy))
        })
    })
}

/// Per-factor hypothesis report; every verdict holds at `resolution` only.
#[derive(Clone, Debug, Serialize)]
pub struct HypothesisReport {
    pub resolution: f64,
    /// Path bound in length units: closed form for convex shapes, otherwise
    /// the lattice estimate.
    pub path_bound: Option<f64>,
    pub path_bound_method: String,
    pub path_bound_error: Option<String>,
    /// Largest distance between sampled boundary points.
    pub diameter: f64,
    pub complement_connected: bool,
    pub bounded_complement_nodes: usize,
    pub interior_of_closure_ok: bool,
    pub closure_violations: usize,
    pub note: String,
}

impl HypothesisReport {
    pub fn passes(&self) -> bool {
        self.path_bound.is_some() && self.complement_connected && self.interior_of_closure_ok
    }

    /// First failed check, if any.
    pub fn failure(&self) -> Option<String> {
        if let Some(e) = &self.path_bound_error {
            return Some(format!("path bound: {e}"));
        }
        if !self.complement_connected {
            return Some(format!(
                "complement of closure is not connected ({} enclosed nodes)",
                self.bounded_complement_nodes
            ));
        }
        if !self.interior_of_closure_ok {
            return Some(format!(
                "interior of closure exceeds the domain ({} nodes)",
                self.closure_violations
            ));
        }
        None
    }
}

pub fn sampled_diameter(d: &PlanarDomain) -> f64 {
    let pts = d.boundary_points(512);
    let mut best: f64 = 0.0;
    for (k, p) in pts.iter().enumerate() {
        for q in &pts[k + 1..] {
            best = best.max((p - q).norm());
        }
    }
    best
}

pub fn check_hypotheses(d: &PlanarDomain, h: f64) -> Result<HypothesisReport, DomainError> {
    let topo = check_topology(d, h)?;
    let (path_bound, method, err) = match d.exact_path_bound() {
        Some(m) => (Some(m), "closed form (convex)".to_string(), None),
        None => match estimate_path_bound(d, h) {
            Ok(pb) => (Some(pb.value), format!("lattice estimate, {} nodes", pb.nodes), None),
            Err(e) => (None, "lattice estimate".to_string(), Some(e.to_string())),
        },
    };
    Ok(HypothesisReport {
        resolution: h,
        path_bound,
        path_bound_method: method,
        path_bound_error: err,
        diameter: d.exact_path_bound().unwrap_or_else(|| sampled_diameter(d)),
        complement_connected: topo.complement_connected,
        bounded_complement_nodes: topo.bounded_complement_nodes,
        interior_of_closure_ok: topo.interior_of_closure_ok,
        closure_violations: topo.closure_violations,
        note: format!("checked on a lattice of spacing {h}; verdicts hold at this resolution only"),
    })
}
