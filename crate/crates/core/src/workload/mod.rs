//! Tensor workloads as perfect loop nests, and the dependency graph between them.

mod expr;
mod file;

pub use expr::{IndexExpr, Term};
pub use file::{parse_workload_graph, serialize_workload_graph};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub const ELEMENT_BITS: [u32; 4] = [8, 16, 24, 32];

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Tensor {
    pub name: String,
    pub dims: Vec<u64>,
    pub element_bits: u32,
}

impl Tensor {
    pub fn elements(&self) -> u64 {
        self.dims.iter().product()
    }

    pub fn bytes(&self) -> u64 {
        bits_to_bytes(self.elements(), self.element_bits)
    }

    pub fn element_bytes(&self) -> f64 {
        self.element_bits as f64 / 8.0
    }

    /// Row-major linear index of a coordinate.
    pub fn linear(&self, coord: &[u64]) -> u64 {
        coord
            .iter()
            .zip(&self.dims)
            .fold(0, |acc, (&c, &d)| acc * d + c)
    }

    pub fn unlinear(&self, mut index: u64) -> Vec<u64> {
        let mut coord = vec![0; self.dims.len()];
        for (c, &d) in coord.iter_mut().zip(&self.dims).rev() {
            *c = index % d;
            index /= d;
        }
        coord
    }
}

pub fn bits_to_bytes(elements: u64, bits: u32) -> u64 {
    (elements * bits as u64).div_ceil(8)
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Loop {
    pub name: String,
    pub extent: u64,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TensorAccess {
    pub tensor: String,
    pub index: Vec<IndexExpr>,
}

impl TensorAccess {
    pub fn element(&self, point: &[u64]) -> Vec<u64> {
        self.index.iter().map(|e| e.eval(point)).collect()
    }

    /// Loops referenced by any coordinate expression.
    pub fn loops(&self) -> Vec<usize> {
        let mut vars: Vec<usize> = self
            .index
            .iter()
            .flat_map(|e| e.terms.iter().map(|t| t.var))
            .collect();
        vars.sort_unstable();
        vars.dedup();
        vars
    }

    /// Distinct elements touched by a box of loop sizes anchored at the origin.
    pub fn footprint(&self, sizes: &[u64]) -> u64 {
        let mut used = Vec::new();
        let mut disjoint = true;
        for e in &self.index {
            for t in &e.terms {
                if used.contains(&t.var) {
                    disjoint = false;
                }
            }
            for t in &e.terms {
                used.push(t.var);
            }
        }
        if disjoint {
            return self.index.iter().map(|e| e.distinct(sizes)).product();
        }
        let mut seen = std::collections::HashSet::new();
        let vars = self.loops();
        let mut point = vec![0u64; sizes.len()];
        for_each_point(&vars.iter().map(|&v| sizes[v]).collect::<Vec<_>>(), |sub| {
            for (&v, &x) in vars.iter().zip(sub) {
                point[v] = x;
            }
            seen.insert(self.element(&point));
        });
        seen.len() as u64
    }
}

/// One tensor operation statement over a perfect loop nest.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct LoopNest {
    pub name: String,
    pub loops: Vec<Loop>,
    pub output: TensorAccess,
    pub inputs: Vec<TensorAccess>,
    /// MAC operations per loop instance (2 for a split-weight concat product).
    pub macs_per_instance: u32,
    /// Fused elementwise epilogue operations per output element (e.g. softmax).
    pub epilogue_ops: u32,
    pub pipeline_loop: Option<usize>,
}

impl LoopNest {
    pub fn extents(&self) -> Vec<u64> {
        self.loops.iter().map(|l| l.extent).collect()
    }

    pub fn loop_names(&self) -> Vec<String> {
        self.loops.iter().map(|l| l.name.clone()).collect()
    }

    pub fn loop_index(&self, name: &str) -> Option<usize> {
        self.loops.iter().position(|l| l.name == name)
    }

    pub fn reads(&self, tensor: &str) -> Option<&TensorAccess> {
        self.inputs.iter().find(|a| a.tensor == tensor)
    }

    pub fn writes(&self, tensor: &str) -> bool {
        self.output.tensor == tensor
    }

    pub fn accesses(&self) -> impl Iterator<Item = &TensorAccess> {
        self.inputs.iter().chain(std::iter::once(&self.output))
    }

    pub fn access(&self, tensor: &str) -> Option<&TensorAccess> {
        self.accesses().find(|a| a.tensor == tensor)
    }

    pub fn macs(&self) -> u64 {
        instance_count(self, None) * self.macs_per_instance as u64
    }

    pub fn validate(&self) -> Result<()> {
        let fail = |message: String| Error::Workload {
            workload: self.name.clone(),
            message,
        };
        if self.loops.is_empty() {
            return Err(fail("no loops".into()));
        }
        for (n, l) in self.loops.iter().enumerate() {
            if l.extent == 0 {
                return Err(fail(format!("loop `{}` has zero extent", l.name)));
            }
            if self.loops[..n].iter().any(|o| o.name == l.name) {
                return Err(fail(format!("duplicate loop `{}`", l.name)));
            }
        }
        for a in self.accesses() {
            for e in &a.index {
                if e.terms.iter().any(|t| t.var >= self.loops.len()) {
                    return Err(fail(format!(
                        "`{}` references an undeclared loop",
                        a.tensor
                    )));
                }
            }
        }
        if self.inputs.iter().any(|a| a.tensor == self.output.tensor) {
            return Err(fail("output tensor also listed as input".into()));
        }
        if self.macs_per_instance == 0 {
            return Err(fail("macs per instance must be at least 1".into()));
        }
        Ok(())
    }

    /// Tensor shape implied by this nest's access to `tensor`.
    pub fn implied_dims(&self, tensor: &str) -> Option<Vec<u64>> {
        let ext = self.extents();
        self.access(tensor)
            .map(|a| a.index.iter().map(|e| e.extent(&ext)).collect())
    }

    /// Calls `f` on every point of the iteration domain in lexicographic order.
    pub fn for_each_instance(&self, f: impl FnMut(&[u64])) {
        for_each_point(&self.extents(), f);
    }

    /// Copy with the pipeline-stage loop collapsed to a single iteration.
    pub fn stage_slice(&self) -> LoopNest {
        let mut w = self.clone();
        if let Some(p) = self.pipeline_loop {
            w.loops[p].extent = 1;
        }
        w
    }

    pub fn pipeline_iterations(&self) -> u64 {
        self.pipeline_loop.map_or(1, |p| self.loops[p].extent)
    }
}

/// Odometer over `[0, extents[0]) x ... x [0, extents[n-1])`, last index fastest.
pub fn for_each_point(extents: &[u64], mut f: impl FnMut(&[u64])) {
    if extents.iter().any(|&e| e == 0) {
        return;
    }
    let mut point = vec![0u64; extents.len()];
    loop {
        f(&point);
        let mut d = extents.len();
        loop {
            if d == 0 {
                return;
            }
            d -= 1;
            point[d] += 1;
            if point[d] < extents[d] {
                break;
            }
            point[d] = 0;
        }
    }
}

/// Loop instances of `w`, or the number of tiles when a tiling is given.
/// Tiles that do not divide an extent are clipped, so the last tile is smaller.
pub fn instance_count(w: &LoopNest, tiling: Option<&[u64]>) -> u64 {
    match tiling {
        None | Some([]) => w.loops.iter().map(|l| l.extent).product(),
        Some(tile) => w
            .loops
            .iter()
            .zip(tile)
            .map(|(l, &t)| l.extent.div_ceil(t.clamp(1, l.extent)))
            .product(),
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Dependence {
    pub producer: usize,
    pub consumer: usize,
    pub tensor: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WorkloadGraph {
    pub tensors: Vec<Tensor>,
    pub workloads: Vec<LoopNest>,
    pub edges: Vec<Dependence>,
}

impl WorkloadGraph {
    pub fn tensor(&self, name: &str) -> Option<&Tensor> {
        self.tensors.iter().find(|t| t.name == name)
    }

    pub fn workload_index(&self, name: &str) -> Option<usize> {
        self.workloads.iter().position(|w| w.name == name)
    }

    /// Edges whose consumer is `w`.
    pub fn incoming(&self, w: usize) -> impl Iterator<Item = &Dependence> {
        self.edges.iter().filter(move |e| e.consumer == w)
    }

    pub fn outgoing(&self, w: usize) -> impl Iterator<Item = &Dependence> {
        self.edges.iter().filter(move |e| e.producer == w)
    }

    /// Kahn order; `Err` names a workload on a cycle.
    pub fn topological_order(&self) -> Result<Vec<usize>> {
        let n = self.workloads.len();
        let mut indeg = vec![0usize; n];
        for e in &self.edges {
            indeg[e.consumer] += 1;
        }
        let mut ready: Vec<usize> = (0..n).filter(|&v| indeg[v] == 0).rev().collect();
        let mut order = Vec::with_capacity(n);
        while let Some(v) = ready.pop() {
            order.push(v);
            let mut next: Vec<usize> = Vec::new();
            for e in self.outgoing(v) {
                indeg[e.consumer] -= 1;
                if indeg[e.consumer] == 0 {
                    next.push(e.consumer);
                }
            }
            next.sort_unstable();
            ready.extend(next.into_iter().rev());
        }
        if order.len() != n {
            let stuck = (0..n).find(|&v| indeg[v] > 0).unwrap_or(0);
            return Err(Error::Cycle(self.workloads[stuck].name.clone()));
        }
        Ok(order)
    }

    /// Number of pipeline iterations shared by every workload, or 1.
    pub fn pipeline_iterations(&self) -> u64 {
        let mut its = self.workloads.iter().map(|w| w.pipeline_iterations());
        match its.next() {
            Some(first)
                if its.all(|b| b == first)
                    && self.workloads.iter().all(|w| w.pipeline_loop.is_some()) =>
            {
                first
            }
            _ => 1,
        }
    }

    /// Tensors that are read but produced by no workload (DRAM inputs).
    pub fn is_external_input(&self, tensor: &str) -> bool {
        !self.workloads.iter().any(|w| w.writes(tensor))
    }

    /// Tensors written but never read by another workload (DRAM outputs).
    pub fn is_final_output(&self, tensor: &str) -> bool {
        !self.workloads.iter().any(|w| w.reads(tensor).is_some())
    }

    pub fn validate(&self) -> Result<()> {
        if self.workloads.is_empty() {
            return Err(Error::Workload {
                workload: String::new(),
                message: "workload graph is empty".into(),
            });
        }
        for (n, w) in self.workloads.iter().enumerate() {
            w.validate()?;
            if self.workloads[..n].iter().any(|o| o.name == w.name) {
                return Err(Error::Workload {
                    workload: w.name.clone(),
                    message: "duplicate workload name".into(),
                });
            }
            for a in w.accesses() {
                let t = self.tensor(&a.tensor).ok_or_else(|| Error::Workload {
                    workload: w.name.clone(),
                    message: format!("unknown tensor `{}`", a.tensor),
                })?;
                let implied = w.implied_dims(&a.tensor).unwrap_or_default();
                if implied.len() != t.dims.len() || implied.iter().zip(&t.dims).any(|(i, d)| i > d)
                {
                    return Err(Error::ShapeMismatch {
                        tensor: a.tensor.clone(),
                        first: t.dims.clone(),
                        second: implied,
                    });
                }
            }
        }
        for t in &self.tensors {
            if t.dims.iter().any(|&d| d == 0) {
                return Err(Error::Workload {
                    workload: String::new(),
                    message: format!("tensor `{}` has a zero extent", t.name),
                });
            }
            if !ELEMENT_BITS.contains(&t.element_bits) {
                return Err(Error::Workload {
                    workload: String::new(),
                    message: format!(
                        "tensor `{}` has unsupported width {}",
                        t.name, t.element_bits
                    ),
                });
            }
        }
        let n = self.workloads.len();
        for e in &self.edges {
            if e.producer >= n || e.consumer >= n {
                return Err(Error::Workload {
                    workload: String::new(),
                    message: format!("edge references workload {} / {}", e.producer, e.consumer),
                });
            }
            let (p, c) = (&self.workloads[e.producer], &self.workloads[e.consumer]);
            if !p.writes(&e.tensor) {
                return Err(Error::EdgeNotProduced {
                    producer: p.name.clone(),
                    consumer: c.name.clone(),
                    tensor: e.tensor.clone(),
                });
            }
            if c.reads(&e.tensor).is_none() {
                return Err(Error::EdgeNotConsumed {
                    producer: p.name.clone(),
                    consumer: c.name.clone(),
                    tensor: e.tensor.clone(),
                });
            }
            let (pd, cd) = (
                p.implied_dims(&e.tensor).unwrap_or_default(),
                c.implied_dims(&e.tensor).unwrap_or_default(),
            );
            if pd != cd {
                return Err(Error::ShapeMismatch {
                    tensor: e.tensor.clone(),
                    first: pd,
                    second: cd,
                });
            }
        }
        self.topological_order()?;
        Ok(())
    }
}
