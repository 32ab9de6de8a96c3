//! Exact s-t maximum flow / minimum cut (Dinic's algorithm).
//!
//! Capacities are `f64`. Integer capacities below 2^53 are therefore handled
//! exactly; for real-valued capacities an arc counts as saturated once its
//! residual drops to `1e-12 * (1 + max capacity)` or below.

use crate::error::{Error, Result};

/// Directed network with paired residual arcs (`e` and `e ^ 1`).
#[derive(Debug, Clone)]
pub struct FlowNetwork {
    source: usize,
    sink: usize,
    adj: Vec<Vec<u32>>,
    to: Vec<u32>,
    cap: Vec<f64>,
}

impl FlowNetwork {
    pub fn new(nodes: usize, source: usize, sink: usize) -> Result<Self> {
        if source >= nodes || sink >= nodes {
            return Err(Error::InvalidParameter(format!(
                "terminals {source}/{sink} out of range for {nodes} nodes"
            )));
        }
        if source == sink {
            return Err(Error::InvalidParameter("source equals sink".into()));
        }
        if nodes > u32::MAX as usize {
            return Err(Error::InvalidParameter("too many nodes".into()));
        }
        Ok(Self {
            source,
            sink,
            adj: vec![Vec::new(); nodes],
            to: Vec::new(),
            cap: Vec::new(),
        })
    }

    pub fn with_capacity(nodes: usize, source: usize, sink: usize, arcs: usize) -> Result<Self> {
        let mut net = Self::new(nodes, source, sink)?;
        net.to.reserve(2 * arcs);
        net.cap.reserve(2 * arcs);
        Ok(net)
    }

    pub fn node_count(&self) -> usize {
        self.adj.len()
    }

    pub fn source(&self) -> usize {
        self.source
    }

    pub fn sink(&self) -> usize {
        self.sink
    }

    /// Adds `u -> v` with `cap_uv` and `v -> u` with `cap_vu` as one residual pair.
    pub fn add_edge(&mut self, u: usize, v: usize, cap_uv: f64, cap_vu: f64) {
        assert!(
            cap_uv >= 0.0 && cap_vu >= 0.0 && cap_uv.is_finite() && cap_vu.is_finite(),
            "capacities must be finite and non-negative ({cap_uv}, {cap_vu})"
        );
        let e = self.to.len() as u32;
        self.to.push(v as u32);
        self.cap.push(cap_uv);
        self.to.push(u as u32);
        self.cap.push(cap_vu);
        self.adj[u].push(e);
        self.adj[v].push(e + 1);
    }

    pub fn add_arc(&mut self, u: usize, v: usize, cap: f64) {
        self.add_edge(u, v, cap, 0.0);
    }

    /// Terminal links for `v`: `source -> v` and `v -> sink`.
    pub fn add_terminal(&mut self, v: usize, source_cap: f64, sink_cap: f64) {
        if source_cap > 0.0 {
            self.add_arc(self.source, v, source_cap);
        }
        if sink_cap > 0.0 {
            self.add_arc(v, self.sink, sink_cap);
        }
    }

    /// All arcs with positive capacity as `(from, to, capacity)`.
    pub fn arcs(&self) -> impl Iterator<Item = (usize, usize, f64)> + '_ {
        (0..self.to.len()).filter(|&e| self.cap[e] > 0.0).map(move |e| {
            (
                self.to[e ^ 1] as usize,
                self.to[e] as usize,
                self.cap[e],
            )
        })
    }

    /// Capacity of arcs leaving the source side.
    pub fn cut_capacity(&self, source_side: &[bool]) -> f64 {
        self.arcs()
            .filter(|&(u, v, _)| source_side[u] && !source_side[v])
            .map(|(_, _, c)| c)
            .sum()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct MinCut {
    pub flow: f64,
    /// `true` for nodes reachable from the source in the final residual
    /// network. This is the minimal source set among all minimum cuts.
    pub source_side: Vec<bool>,
}

struct Dinic<'a> {
    net: &'a FlowNetwork,
    res: Vec<f64>,
    level: Vec<u32>,
    next: Vec<usize>,
    eps: f64,
}

const UNREACHED: u32 = u32::MAX;

impl Dinic<'_> {
    fn bfs(&mut self) -> bool {
        self.level.fill(UNREACHED);
        let mut queue = std::collections::VecDeque::new();
        self.level[self.net.source] = 0;
        queue.push_back(self.net.source);
        while let Some(u) = queue.pop_front() {
            for &e in &self.net.adj[u] {
                let e = e as usize;
                let v = self.net.to[e] as usize;
                if self.res[e] > self.eps && self.level[v] == UNREACHED {
                    self.level[v] = self.level[u] + 1;
                    queue.push_back(v);
                }
            }
        }
        self.level[self.net.sink] != UNREACHED
    }

    /// Blocking flow on the current level graph, iteratively.
    fn blocking_flow(&mut self) -> f64 {
        let (s, t) = (self.net.source, self.net.sink);
        self.next.fill(0);
        let mut total = 0.0;
        let mut path: Vec<usize> = Vec::new();
        let mut u = s;
        loop {
            if u == t {
                let f = path
                    .iter()
                    .map(|&e| self.res[e])
                    .fold(f64::INFINITY, f64::min);
                for &e in &path {
                    self.res[e] -= f;
                    self.res[e ^ 1] += f;
                }
                total += f;
                let first_saturated = path
                    .iter()
                    .position(|&e| self.res[e] <= self.eps)
                    .unwrap_or(0);
                path.truncate(first_saturated);
                u = path
                    .last()
                    .map(|&e| self.net.to[e] as usize)
                    .unwrap_or(s);
                continue;
            }
            let adj = &self.net.adj[u];
            while self.next[u] < adj.len() {
                let e = adj[self.next[u]] as usize;
                let v = self.net.to[e] as usize;
                if self.res[e] > self.eps && self.level[v] == self.level[u] + 1 {
                    break;
                }
                self.next[u] += 1;
            }
            if self.next[u] == adj.len() {
                if u == s {
                    break;
                }
                // Dead end: drop u from the level graph and retreat.
                self.level[u] = UNREACHED;
                let e = path.pop().expect("non-source node has an incoming path arc");
                u = self.net.to[e ^ 1] as usize;
                self.next[u] += 1;
            } else {
                let e = adj[self.next[u]] as usize;
                path.push(e);
                u = self.net.to[e] as usize;
            }
        }
        total
    }
}

/// Maximum flow value and the corresponding minimum cut.
pub fn max_flow(net: &FlowNetwork) -> MinCut {
    let max_cap = net.cap.iter().cloned().fold(0.0, f64::max);
    let n = net.node_count();
    let mut d = Dinic {
        net,
        res: net.cap.clone(),
        level: vec![UNREACHED; n],
        next: vec![0; n],
        eps: 1e-12 * (1.0 + max_cap),
    };
    let mut flow = 0.0;
    while d.bfs() {
        flow += d.blocking_flow();
    }
    // The last BFS failed to reach the sink; its levels mark the source side.
    let source_side = d.level.iter().map(|&l| l != UNREACHED).collect();
    MinCut { flow, source_side }
}
