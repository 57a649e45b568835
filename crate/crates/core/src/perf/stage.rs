use serde::{Deserialize, Serialize};

use crate::error::Infeasible;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum StageKind {
    Compute,
    Transfer,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Stage {
    pub name: String,
    pub kind: StageKind,
    /// Cycles per pipeline iteration.
    pub delay: f64,
    /// System chiplets of a computing stage, or `[src, dst]` of a transfer.
    pub chiplets: Vec<usize>,
    pub workloads: Vec<usize>,
}

/// Computing and transfer stages joined by precedence edges.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct StageGraph {
    pub stages: Vec<Stage>,
    pub edges: Vec<(usize, usize)>,
}

impl StageGraph {
    pub fn add(&mut self, stage: Stage) -> usize {
        self.stages.push(stage);
        self.stages.len() - 1
    }

    pub fn connect(&mut self, from: usize, to: usize) {
        if !self.edges.contains(&(from, to)) {
            self.edges.push((from, to));
        }
    }

    pub fn index(&self, name: &str) -> Option<usize> {
        self.stages.iter().position(|s| s.name == name)
    }

    /// Kahn order; `StageCycle` if the edges are not acyclic.
    pub fn topological_order(&self) -> Result<Vec<usize>, Infeasible> {
        let n = self.stages.len();
        let mut indeg = vec![0usize; n];
        for &(_, t) in &self.edges {
            indeg[t] += 1;
        }
        let mut ready: Vec<usize> = (0..n).filter(|&s| indeg[s] == 0).rev().collect();
        let mut order = Vec::with_capacity(n);
        while let Some(s) = ready.pop() {
            order.push(s);
            for &(_, t) in self.edges.iter().filter(|e| e.0 == s) {
                indeg[t] -= 1;
                if indeg[t] == 0 {
                    ready.push(t);
                }
            }
        }
        if order.len() == n {
            Ok(order)
        } else {
            Err(Infeasible::StageCycle)
        }
    }

    /// Latency: the largest sum of delays along a path. Throughput: the
    /// reciprocal of the largest stage delay.
    pub fn latency_throughput(&self) -> Result<(f64, f64), Infeasible> {
        let order = self.topological_order()?;
        let mut finish = vec![0.0f64; self.stages.len()];
        for &s in &order {
            let start = self
                .edges
                .iter()
                .filter(|e| e.1 == s)
                .map(|e| finish[e.0])
                .fold(0.0, f64::max);
            finish[s] = start + self.stages[s].delay;
        }
        let lat = finish.iter().copied().fold(0.0, f64::max);
        let dmax = self.max_delay();
        let thr = if dmax > 0.0 {
            1.0 / dmax
        } else {
            f64::INFINITY
        };
        Ok((lat, thr))
    }

    pub fn max_delay(&self) -> f64 {
        self.stages.iter().map(|s| s.delay).fold(0.0, f64::max)
    }

    /// Stages on one longest path, first to last.
    pub fn critical_path(&self) -> Result<Vec<usize>, Infeasible> {
        let order = self.topological_order()?;
        let n = self.stages.len();
        let mut finish = vec![0.0f64; n];
        let mut prev = vec![None; n];
        for &s in &order {
            let mut start = 0.0;
            for &(f, t) in &self.edges {
                if t == s && finish[f] > start {
                    start = finish[f];
                    prev[s] = Some(f);
                }
            }
            finish[s] = start + self.stages[s].delay;
        }
        let Some(mut s) = (0..n).max_by(|&a, &b| finish[a].total_cmp(&finish[b]).then(b.cmp(&a)))
        else {
            return Ok(Vec::new());
        };
        let mut path = vec![s];
        while let Some(p) = prev[s] {
            path.push(p);
            s = p;
        }
        path.reverse();
        Ok(path)
    }
}

/// `|V| / (U·N) × inner`: the busiest engine processes `|V|/(U·N)`
/// vertices, each taking the lower level's delay.
pub fn compute_delay(
    vertices: u64,
    engines: u64,
    utilization: f64,
    inner: f64,
) -> Result<f64, Infeasible> {
    if engines == 0 {
        return Err(Infeasible::ZeroEngines);
    }
    if !(utilization > 0.0) {
        return Err(Infeasible::ZeroUtilization);
    }
    Ok(vertices as f64 / (utilization * engines as f64) * inner)
}
