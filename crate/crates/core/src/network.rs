//! In-package network: topologies with deterministic routes, proportional
//! bandwidth sharing on contended channels, and transfer-stage delays.

use std::collections::BTreeMap;
use std::fmt;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Infeasible, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TopologyKind {
    Mesh,
    Ring,
    Linear,
    AllToAll,
}

impl TopologyKind {
    pub fn name(self) -> &'static str {
        match self {
            TopologyKind::Mesh => "mesh",
            TopologyKind::Ring => "ring",
            TopologyKind::Linear => "linear",
            TopologyKind::AllToAll => "all_to_all",
        }
    }
}

/// A directed channel between two nodes.
pub type Channel = (usize, usize);

/// Chiplet nodes are `0..rows*cols`, numbered down columns first
/// (`id = col * rows + row`). Memory controllers follow as nodes
/// `rows*cols + m`, each attached to one boundary node.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Topology {
    pub kind: TopologyKind,
    pub rows: usize,
    pub cols: usize,
    pub link_bw: f64,
    pub t_s: f64,
    /// Attachment node of each memory controller.
    pub mem_nodes: Vec<usize>,
    /// Bandwidth of each memory-controller link.
    pub mem_bw: f64,
}

/// System topology file: `{kind, rows, cols, link_bw, t_s, mem_nodes}`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TopologyFile {
    pub kind: TopologyKind,
    pub rows: usize,
    pub cols: usize,
    #[serde(default)]
    pub link_bw: Option<f64>,
    #[serde(default)]
    pub t_s: Option<f64>,
    #[serde(default)]
    pub mem_nodes: Option<Vec<usize>>,
}

impl Topology {
    /// Topology with one memory controller per package edge and the
    /// aggregate DRAM bandwidth split evenly between them.
    pub fn new(
        kind: TopologyKind,
        rows: usize,
        cols: usize,
        link_bw: f64,
        t_s: f64,
        dram_bw: f64,
    ) -> Self {
        let mut t = Self {
            kind,
            rows,
            cols,
            link_bw,
            t_s,
            mem_nodes: Vec::new(),
            mem_bw: 0.0,
        };
        t.mem_nodes = t.default_mem_nodes();
        t.mem_bw = dram_bw / t.mem_nodes.len() as f64;
        t
    }

    pub fn linear(n: usize, link_bw: f64) -> Self {
        Self::new(TopologyKind::Linear, 1, n, link_bw, 4.0, 64.0)
    }

    pub fn from_file(
        f: &TopologyFile,
        default_link_bw: f64,
        default_t_s: f64,
        dram_bw: f64,
    ) -> Result<Self> {
        let mut t = Self::new(
            f.kind,
            f.rows,
            f.cols,
            f.link_bw.unwrap_or(default_link_bw),
            f.t_s.unwrap_or(default_t_s),
            dram_bw,
        );
        if let Some(m) = &f.mem_nodes {
            if m.is_empty() {
                return Err(Error::Config("mem_nodes must not be empty".into()));
            }
            t.mem_nodes = m.clone();
            t.mem_bw = dram_bw / m.len() as f64;
        }
        t.validate()?;
        Ok(t)
    }

    pub fn to_file(&self) -> TopologyFile {
        TopologyFile {
            kind: self.kind,
            rows: self.rows,
            cols: self.cols,
            link_bw: Some(self.link_bw),
            t_s: Some(self.t_s),
            mem_nodes: Some(self.mem_nodes.clone()),
        }
    }

    pub fn validate(&self) -> Result<()> {
        let n = self.nodes();
        if n == 0 {
            return Err(Error::Config("topology has no nodes".into()));
        }
        if self.kind == TopologyKind::Ring && n < 3 {
            return Err(Error::Config("a ring needs at least 3 nodes".into()));
        }
        if !(self.link_bw > 0.0) || !(self.mem_bw > 0.0) || !(self.t_s >= 0.0) {
            return Err(Error::Config(
                "bandwidths must be positive and t_s non-negative".into(),
            ));
        }
        for &m in &self.mem_nodes {
            if m >= n || !self.is_boundary(m) {
                return Err(Error::Config(format!(
                    "memory controller on non-boundary node {m}"
                )));
            }
        }
        Ok(())
    }

    pub fn nodes(&self) -> usize {
        self.rows * self.cols
    }

    pub fn mem_node(&self, m: usize) -> usize {
        self.nodes() + m
    }

    pub fn coord(&self, node: usize) -> (usize, usize) {
        (node % self.rows, node / self.rows)
    }

    pub fn node_at(&self, row: usize, col: usize) -> usize {
        col * self.rows + row
    }

    pub fn is_boundary(&self, node: usize) -> bool {
        match self.kind {
            TopologyKind::Mesh => {
                let (r, c) = self.coord(node);
                r == 0 || c == 0 || r + 1 == self.rows || c + 1 == self.cols
            }
            _ => true,
        }
    }

    fn default_mem_nodes(&self) -> Vec<usize> {
        let n = self.nodes();
        let mut m = match self.kind {
            TopologyKind::Mesh => {
                let (mr, mc) = ((self.rows - 1) / 2, (self.cols - 1) / 2);
                vec![
                    self.node_at(mr, 0),
                    self.node_at(mr, self.cols - 1),
                    self.node_at(0, mc),
                    self.node_at(self.rows - 1, mc),
                ]
            }
            TopologyKind::Ring | TopologyKind::AllToAll => vec![0, n / 2],
            TopologyKind::Linear => vec![0, n - 1],
        };
        let mut seen = Vec::new();
        m.retain(|x| {
            let fresh = !seen.contains(x);
            seen.push(*x);
            fresh
        });
        m
    }

    /// Router degree of a chiplet node, not counting memory links.
    pub fn degree(&self, node: usize) -> usize {
        let n = self.nodes();
        match self.kind {
            TopologyKind::Mesh => {
                let (r, c) = self.coord(node);
                usize::from(r > 0)
                    + usize::from(r + 1 < self.rows)
                    + usize::from(c > 0)
                    + usize::from(c + 1 < self.cols)
            }
            TopologyKind::Ring => 2,
            TopologyKind::Linear => usize::from(node > 0) + usize::from(node + 1 < n),
            TopologyKind::AllToAll => n - 1,
        }
    }

    pub fn hops(&self, src: usize, dst: usize) -> usize {
        if src == dst {
            0
        } else {
            self.route(src, dst).len()
        }
    }

    /// Deterministic path between two nodes. Memory controllers reach the
    /// fabric through their attachment node.
    pub fn route(&self, src: usize, dst: usize) -> Vec<Channel> {
        assert_ne!(src, dst, "route needs distinct endpoints");
        let n = self.nodes();
        let mut path = Vec::new();
        let a = if src >= n {
            let at = self.mem_nodes[src - n];
            path.push((src, at));
            at
        } else {
            src
        };
        let b = if dst >= n {
            self.mem_nodes[dst - n]
        } else {
            dst
        };
        if a != b {
            path.extend(self.fabric_route(a, b));
        }
        if dst >= n {
            path.push((b, dst));
        }
        path
    }

    fn fabric_route(&self, a: usize, b: usize) -> Vec<Channel> {
        let n = self.nodes();
        let mut path = Vec::new();
        match self.kind {
            TopologyKind::Mesh => {
                // Row dimension first, then columns.
                let (mut r, mut c) = self.coord(a);
                let (tr, tc) = self.coord(b);
                while r != tr {
                    let nr = if tr > r { r + 1 } else { r - 1 };
                    path.push((self.node_at(r, c), self.node_at(nr, c)));
                    r = nr;
                }
                while c != tc {
                    let nc = if tc > c { c + 1 } else { c - 1 };
                    path.push((self.node_at(r, c), self.node_at(r, nc)));
                    c = nc;
                }
            }
            TopologyKind::Ring => {
                let mut x = a;
                while x != b {
                    let nx = (x + 1) % n;
                    path.push((x, nx));
                    x = nx;
                }
            }
            TopologyKind::Linear => {
                let mut x = a;
                while x != b {
                    let nx = if b > x { x + 1 } else { x - 1 };
                    path.push((x, nx));
                    x = nx;
                }
            }
            TopologyKind::AllToAll => path.push((a, b)),
        }
        path
    }

    pub fn channel_bw(&self, ch: Channel) -> f64 {
        if ch.0 >= self.nodes() || ch.1 >= self.nodes() {
            self.mem_bw
        } else {
            self.link_bw
        }
    }

    pub fn is_memory_channel(&self, ch: Channel) -> bool {
        ch.0 >= self.nodes() || ch.1 >= self.nodes()
    }

    /// Memory controller closest to `node` (fewest hops, then lowest index).
    pub fn nearest_mem(&self, node: usize) -> usize {
        (0..self.mem_nodes.len())
            .min_by_key(|&m| (self.hops(self.mem_nodes[m], node), m))
            .map(|m| self.mem_node(m))
            .expect("at least one memory controller")
    }
}

impl fmt::Display for Topology {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{} {}x{}", self.kind.name(), self.rows, self.cols)
    }
}

/// A communication flow with its bandwidth requirement.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Flow {
    pub name: String,
    pub src: usize,
    pub dst: usize,
    pub bytes: f64,
    /// Required bandwidth, bytes/cycle.
    pub bwr: f64,
}

/// Transfer request between two placed stages.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TransferReq {
    pub name: String,
    pub src: usize,
    pub dst: usize,
    pub bytes: f64,
    /// Compute delays of the producing and consuming stages.
    pub src_delay: f64,
    pub dst_delay: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CommGraph {
    pub nodes: usize,
    pub flows: Vec<Flow>,
}

/// Flow requirement that hides a transfer under the shorter adjacent stage.
pub fn required_bandwidth(bytes: f64, src_delay: f64, dst_delay: f64) -> f64 {
    let d = src_delay.min(dst_delay);
    if bytes <= 0.0 {
        0.0
    } else if d > 0.0 {
        bytes / d
    } else {
        f64::INFINITY
    }
}

/// One flow per request whose endpoints differ; co-located traffic stays on
/// chip.
pub fn build_comm_graph(topo: &Topology, reqs: &[TransferReq]) -> Result<CommGraph> {
    let total = topo.nodes() + topo.mem_nodes.len();
    let mut flows = Vec::new();
    for r in reqs {
        if r.src >= total || r.dst >= total {
            return Err(Error::Design(format!(
                "{} references a nonexistent node",
                r.name
            )));
        }
        if r.src == r.dst {
            continue;
        }
        flows.push(Flow {
            name: r.name.clone(),
            src: r.src,
            dst: r.dst,
            bytes: r.bytes,
            bwr: required_bandwidth(r.bytes, r.src_delay, r.dst_delay),
        });
    }
    Ok(CommGraph {
        nodes: total,
        flows,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FlowShare {
    pub path: Vec<Channel>,
    /// Effective bandwidth on each channel of `path`.
    pub ebw: Vec<f64>,
    /// End-to-end rate: minimum over the path.
    pub rate: f64,
}

impl FlowShare {
    pub fn hops(&self) -> usize {
        self.path.len()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FlowAllocation {
    pub flows: Vec<FlowShare>,
    /// Σ bwr per channel, in channel order.
    pub demand: BTreeMap<Channel, f64>,
}

impl FlowAllocation {
    /// Σ ebw over the flows crossing `ch`.
    pub fn allocated(&self, ch: Channel) -> f64 {
        self.flows
            .iter()
            .flat_map(|f| f.path.iter().zip(&f.ebw))
            .filter(|(c, _)| **c == ch)
            .map(|(_, e)| e)
            .sum()
    }
}

/// Proportional sharing: on a channel whose demand exceeds its bandwidth
/// each flow gets `bw · bwr / Σ bwr`, otherwise its full requirement.
pub fn allocate_bandwidth(flows: &[Flow], topo: &Topology) -> FlowAllocation {
    let paths: Vec<Vec<Channel>> = flows
        .iter()
        .map(|f| {
            if f.src == f.dst {
                Vec::new()
            } else {
                topo.route(f.src, f.dst)
            }
        })
        .collect();
    let mut users: BTreeMap<Channel, Vec<(usize, usize)>> = BTreeMap::new();
    for (i, p) in paths.iter().enumerate() {
        for (k, &ch) in p.iter().enumerate() {
            users.entry(ch).or_default().push((i, k));
        }
    }
    let mut ebw: Vec<Vec<f64>> = paths.iter().map(|p| vec![0.0; p.len()]).collect();
    let mut demand = BTreeMap::new();
    for (&ch, us) in &users {
        let bw = topo.channel_bw(ch);
        let sum: f64 = us.iter().map(|&(i, _)| flows[i].bwr).sum();
        demand.insert(ch, sum);
        if sum <= bw {
            for &(i, k) in us {
                ebw[i][k] = flows[i].bwr;
            }
            continue;
        }
        let share = |i: usize| {
            let b = flows[i].bwr;
            if b.is_infinite() {
                let inf = us
                    .iter()
                    .filter(|&&(j, _)| flows[j].bwr.is_infinite())
                    .count();
                bw / inf as f64
            } else if sum.is_infinite() {
                0.0
            } else {
                (bw * (b / sum)).min(b)
            }
        };
        let mut alloc: Vec<f64> = us.iter().map(|&(i, _)| share(i)).collect();
        // Rounding may overshoot by an ulp; shave until the sum fits.
        while alloc.iter().sum::<f64>() > bw {
            for a in alloc.iter_mut() {
                *a = a.next_down().max(0.0);
            }
        }
        for (&(i, k), a) in us.iter().zip(alloc) {
            ebw[i][k] = a;
        }
    }
    let shares = paths
        .into_iter()
        .zip(ebw)
        .zip(flows)
        .map(|((path, ebw), f)| {
            let rate = ebw.iter().copied().fold(f.bwr, f64::min);
            FlowShare { path, ebw, rate }
        })
        .collect();
    FlowAllocation {
        flows: shares,
        demand,
    }
}

/// Delay of one flow: switch traversal plus serialization at its rate.
pub fn flow_delay(
    flow: &Flow,
    share: &FlowShare,
    t_s: f64,
) -> std::result::Result<f64, Infeasible> {
    let switch = share.hops() as f64 * t_s;
    if flow.bytes <= 0.0 {
        return Ok(switch);
    }
    if !(share.rate > 0.0) {
        return Err(Infeasible::ZeroBandwidth {
            flow: flow.name.clone(),
        });
    }
    Ok(switch + flow.bytes / share.rate)
}

/// `D(e)`: the slowest of the flows forming one transfer stage.
pub fn transfer_delay(
    members: &[usize],
    flows: &[Flow],
    alloc: &FlowAllocation,
    t_s: f64,
) -> std::result::Result<f64, Infeasible> {
    let mut d = 0.0f64;
    for &i in members {
        d = d.max(flow_delay(&flows[i], &alloc.flows[i], t_s)?);
    }
    Ok(d)
}

/// Hotspot rule: the largest per-channel sum of requirements over
/// chiplet-to-chiplet channels, capped, with a floor of one byte per cycle.
pub fn hotspot_link_bw(flows: &[Flow], topo: &Topology, cap: f64) -> f64 {
    let mut per: BTreeMap<Channel, f64> = BTreeMap::new();
    for f in flows {
        if f.src == f.dst || !f.bwr.is_finite() {
            continue;
        }
        for ch in topo.route(f.src, f.dst) {
            if !topo.is_memory_channel(ch) {
                *per.entry(ch).or_default() += f.bwr;
            }
        }
    }
    per.values().copied().fold(1.0, f64::max).min(cap.max(1.0))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn flow(name: &str, src: usize, dst: usize, bytes: f64, bwr: f64) -> Flow {
        Flow {
            name: name.into(),
            src,
            dst,
            bytes,
            bwr,
        }
    }

    #[test]
    fn linear_route_has_two_hops() {
        let t = Topology::linear(3, 8.0);
        assert_eq!(t.route(0, 2), vec![(0, 1), (1, 2)]);
        assert_eq!(t.route(1, 0), vec![(1, 0)]);
    }

    #[test]
    fn mesh_routes_down_then_right() {
        let t = Topology::new(TopologyKind::Mesh, 2, 2, 8.0, 4.0, 64.0);
        assert_eq!(t.route(0, 3), vec![(0, 1), (1, 3)]);
        assert_eq!(t.route(0, 3), t.route(0, 3));
    }

    #[test]
    fn ring_is_clockwise() {
        let t = Topology::new(TopologyKind::Ring, 1, 4, 8.0, 4.0, 64.0);
        assert_eq!(t.route(3, 1), vec![(3, 0), (0, 1)]);
        assert_eq!(t.route(1, 0).len(), 3);
    }

    #[test]
    fn proportional_share() {
        let t = Topology::linear(2, 4.0);
        let flows = [flow("a", 0, 1, 6.0, 6.0), flow("b", 0, 1, 2.0, 2.0)];
        let a = allocate_bandwidth(&flows, &t);
        assert_eq!(a.flows[0].ebw, vec![3.0]);
        assert_eq!(a.flows[1].ebw, vec![1.0]);
        let single = allocate_bandwidth(&flows[1..], &t);
        assert_eq!(single.flows[0].rate, 2.0);
    }

    #[test]
    fn transfer_delay_formula() {
        let t = Topology::linear(3, 2.0);
        let flows = [flow("e", 0, 2, 16.0, 2.0)];
        let a = allocate_bandwidth(&flows, &t);
        assert_eq!(transfer_delay(&[0], &flows, &a, 1.0).unwrap(), 10.0);
        let empty = [flow("z", 0, 2, 0.0, 0.0)];
        let a = allocate_bandwidth(&empty, &t);
        assert_eq!(transfer_delay(&[0], &empty, &a, 1.0).unwrap(), 2.0);
    }

    #[test]
    fn bwr_and_comm_graph() {
        assert_eq!(required_bandwidth(100.0, 20.0, 25.0), 5.0);
        let t = Topology::linear(2, 1.0);
        let reqs = [
            TransferReq {
                name: "local".into(),
                src: 1,
                dst: 1,
                bytes: 10.0,
                src_delay: 1.0,
                dst_delay: 1.0,
            },
            TransferReq {
                name: "e0,1".into(),
                src: 0,
                dst: 1,
                bytes: 100.0,
                src_delay: 20.0,
                dst_delay: 25.0,
            },
        ];
        let g = build_comm_graph(&t, &reqs).unwrap();
        assert_eq!(g.flows.len(), 1);
        assert_eq!(g.flows[0].bwr, 5.0);
    }

    #[test]
    fn hotspot_is_max_channel_sum() {
        let t = Topology::linear(4, 1.0);
        let flows = [
            flow("a", 0, 1, 3.0, 3.0),
            flow("b", 1, 2, 7.0, 7.0),
            flow("c", 2, 3, 2.0, 2.0),
        ];
        assert_eq!(hotspot_link_bw(&flows, &t, 1e9), 7.0);
        assert_eq!(hotspot_link_bw(&flows, &t, 5.0), 5.0);
    }

    #[test]
    fn memory_controllers_sit_on_boundary() {
        let t = Topology::new(TopologyKind::Mesh, 3, 3, 8.0, 4.0, 64.0);
        assert_eq!(t.mem_nodes.len(), 4);
        assert!(t.mem_nodes.iter().all(|&m| t.is_boundary(m)));
        assert_eq!(t.mem_bw, 16.0);
        let mc = t.nearest_mem(0);
        assert_eq!(t.route(mc, 0).first().unwrap().0, mc);
    }
}
