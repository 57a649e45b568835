use std::collections::HashSet;
use std::fmt;

use log::{debug, info};
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::{
    acquisition_pi, arch_features, arch_neighbor, array_dims, balance_pes, decode_arch,
    decode_integration, default_genome, identity_placement, integ_features, network_catalog,
    normalize_high, placement_neighbor, random_genome, random_placement, sa_optimize,
    selected_chiplets, shape_catalog, spatial_pairs, ArchDesign, ArchGenome, ArchHigh, ArchLow,
    Evaluator, GpState, IntegGenome, IntegLow, NetworkOption, Objective, ParetoEntry, ParetoSet,
    SaConfig, Shape, SystemEval,
};
use crate::cost::PackagingKind;
use crate::error::{Error, Infeasible, Result};
use crate::perf::{DesignPoint, Metrics};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Strategy {
    /// Gaussian-process outer loop over the low-dimensional fields with an
    /// annealing inner loop over the rest.
    BayesSa,
    /// Independent uniform samples.
    Random,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SearchConfig {
    pub objective: Objective,
    pub stage1_budget: usize,
    pub stage2_budget: usize,
    pub seed: u64,
    pub pe_budget: u64,
    pub max_chiplets_per_workload: u64,
    /// Outer samples per search (per workload in stage one).
    pub bayes_samples: usize,
    /// Uniform outer samples before the surrogate takes over.
    pub initial_samples: usize,
    /// Cap on annealing evaluations per outer sample.
    pub sa_budget: usize,
    /// Candidates scored by the acquisition function per outer sample.
    pub candidates: usize,
    /// Improvement margin in units of the target standard deviation.
    pub xi: f64,
    pub cooling: f64,
    /// Probability that a stage-one annealing move resizes a tile rather
    /// than swapping two loops.
    pub tile_move_prob: f64,
    pub stage1: Strategy,
    pub stage2: Strategy,
}

impl Default for SearchConfig {
    fn default() -> Self {
        Self {
            objective: Objective::default(),
            stage1_budget: 64 * 300,
            stage2_budget: 64 * 300,
            seed: 0,
            pe_budget: 256,
            max_chiplets_per_workload: 4,
            bayes_samples: 64,
            initial_samples: 4,
            sa_budget: 300,
            candidates: 512,
            xi: 0.01,
            cooling: 0.97,
            tile_move_prob: 0.6,
            stage1: Strategy::BayesSa,
            stage2: Strategy::BayesSa,
        }
    }
}

impl SearchConfig {
    pub fn validate(&self) -> Result<()> {
        let fail = |m: &str| Err(Error::Config(m.into()));
        if self.stage1_budget == 0 || self.stage2_budget == 0 {
            return fail("budgets must be at least 1");
        }
        if self.bayes_samples == 0 || self.sa_budget == 0 || self.candidates == 0 {
            return fail("sample counts must be at least 1");
        }
        if self.max_chiplets_per_workload == 0 {
            return fail("max_chiplets_per_workload must be at least 1");
        }
        if !(self.cooling > 0.0 && self.cooling < 1.0) || !(self.xi >= 0.0) {
            return fail("cooling must lie in (0, 1) and xi must be non-negative");
        }
        if !(0.0..=1.0).contains(&self.tile_move_prob) {
            return fail("tile_move_prob must lie in [0, 1]");
        }
        Ok(())
    }
}

/// One row of the evaluation log.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalRecord {
    pub id: usize,
    /// `arch:<workload>` or `system`.
    pub stage: String,
    /// Compact JSON of the genome.
    pub genome: String,
    pub feasible: bool,
    pub reason: String,
    pub packaging: Option<PackagingKind>,
    pub metrics: Option<Metrics>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SystemDesign {
    pub genome: IntegGenome,
    pub design: DesignPoint,
    pub eval: SystemEval,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Exploration {
    pub objective: Objective,
    pub pe_allocation: Vec<u64>,
    /// Stage-one fronts over (latency, energy, area), one per workload.
    pub arch_fronts: Vec<ParetoSet<ArchDesign>>,
    /// Final front over (latency, energy, area, cost).
    pub front: ParetoSet<SystemDesign>,
    pub log: Vec<EvalRecord>,
}

impl Exploration {
    /// Front member with the lowest scalar objective, earliest on ties.
    pub fn best(&self) -> Option<&ParetoEntry<SystemDesign>> {
        self.front
            .ranked(|e| self.objective.scalar(&e.item.eval.metrics))
            .into_iter()
            .next()
    }

    /// Stage-one front of workload `w` in design-id order.
    pub fn ranked_designs(&self, w: usize) -> Vec<&ParetoEntry<ArchDesign>> {
        self.arch_fronts[w].ranked(|e| self.objective.scalar(&e.item.metrics))
    }
}

/// Stage two could not start; carries everything produced so far.
#[derive(Debug)]
pub struct Aborted {
    pub message: String,
    pub partial: Box<Exploration>,
}

impl fmt::Display for Aborted {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.message)
    }
}

impl std::error::Error for Aborted {}

#[derive(Debug)]
pub enum ExploreError {
    Input(Error),
    Aborted(Aborted),
}

impl fmt::Display for ExploreError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            ExploreError::Input(e) => e.fmt(f),
            ExploreError::Aborted(a) => a.fmt(f),
        }
    }
}

impl std::error::Error for ExploreError {}

impl From<Error> for ExploreError {
    fn from(e: Error) -> Self {
        ExploreError::Input(e)
    }
}

/// Independent generator per search phase and index.
fn phase_rng(seed: u64, phase: u64, index: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(phase << 32 | index);
    rng
}

/// Splits `budget` evaluations into outer samples and annealing budgets.
fn split_budget(budget: usize, outer_max: usize, inner_max: usize) -> Vec<usize> {
    let outer = outer_max.min(budget).max(1).max(budget.div_ceil(inner_max));
    let base = budget / outer;
    let extra = budget % outer;
    (0..outer)
        .map(|k| base + usize::from(k < extra))
        .filter(|&b| b > 0)
        .collect()
}

fn log_score(objective: &Objective, m: &Metrics) -> Option<f64> {
    let s = objective.scalar(m);
    (s > 0.0 && s.is_finite()).then(|| s.ln())
}

/// Surrogate over low-dimensional fields; infeasible samples are recorded
/// one unit (in log objective) above the worst feasible one.
struct Surrogate {
    gp: GpState,
    worst: Option<f64>,
    xi: f64,
}

impl Surrogate {
    fn new(xi: f64) -> Self {
        Self {
            gp: GpState::new(),
            worst: None,
            xi,
        }
    }

    fn observe(&mut self, x: Vec<f64>, y: Option<f64>) {
        let y = match y {
            Some(y) => {
                self.worst = Some(self.worst.map_or(y, |w| w.max(y)));
                y
            }
            None => self.worst.map_or(1.0, |w| w + 1.0),
        };
        self.gp.observe(x, y);
    }

    /// Index of the candidate with the highest probability of improvement.
    fn pick(&self, features: &[Vec<f64>]) -> usize {
        let inc = self.gp.incumbent().unwrap_or(0.0);
        let xi = self.xi * self.gp.y_scale();
        let score = |x: &Vec<f64>| {
            let (m, s) = self.gp.posterior(x);
            acquisition_pi(m, s, inc, xi)
        };
        let scores = par_map(features, score);
        let mut best = 0;
        for (i, s) in scores.iter().enumerate() {
            if *s > scores[best] {
                best = i;
            }
        }
        best
    }
}

#[cfg(feature = "parallel")]
fn par_map<T: Sync, U: Send>(items: &[T], f: impl Fn(&T) -> U + Sync + Send) -> Vec<U> {
    use rayon::prelude::*;
    items.par_iter().map(f).collect()
}

#[cfg(not(feature = "parallel"))]
fn par_map<T: Sync, U: Send>(items: &[T], f: impl Fn(&T) -> U + Sync + Send) -> Vec<U> {
    items.iter().map(f).collect()
}

fn genome_json<T: Serialize>(g: &T) -> String {
    serde_json::to_string(g).expect("genome serializes")
}

struct StageOne {
    front: ParetoSet<ArchDesign>,
    log: Vec<EvalRecord>,
}

fn arch_objectives(m: &Metrics) -> Vec<f64> {
    vec![m.latency_cycles, m.energy_j, m.area_mm2]
}

fn system_objectives(m: &Metrics) -> Vec<f64> {
    vec![m.latency_cycles, m.energy_j, m.area_mm2, m.cost]
}

/// Evaluates one architecture genome, logging it and updating the front.
fn score_arch(
    ev: &dyn Evaluator,
    cfg: &SearchConfig,
    w: usize,
    g: &ArchGenome,
    out: &mut StageOne,
) -> Option<f64> {
    let graph = ev.graph();
    let nest = &graph.workloads[w];
    let id = out.log.len();
    let result = decode_arch(g, nest, &graph.tensors, &ev.buffer_caps())
        .and_then(|(cluster, spec)| ev.arch(w, &cluster, &spec).map(|m| (cluster, spec, m)));
    let mut rec = EvalRecord {
        id,
        stage: format!("arch:{}", nest.name),
        genome: genome_json(g),
        feasible: false,
        reason: String::new(),
        packaging: None,
        metrics: None,
    };
    let value = match result {
        Ok((cluster, spec, metrics)) => {
            rec.feasible = true;
            rec.metrics = Some(metrics);
            out.front.insert(
                id,
                arch_objectives(&metrics),
                ArchDesign {
                    genome: g.clone(),
                    cluster,
                    spec,
                    metrics,
                },
            );
            log_score(&cfg.objective, &metrics)
        }
        Err(e) => {
            rec.reason = e.reason();
            None
        }
    };
    out.log.push(rec);
    value
}

fn low_space_size(catalog: &[Shape], pairs: usize) -> usize {
    catalog.len().saturating_mul(pairs.saturating_pow(3))
}

fn random_low<R: Rng + ?Sized>(catalog: &[Shape], pairs: &[[usize; 2]], rng: &mut R) -> ArchLow {
    ArchLow {
        shape: *catalog.choose(rng).expect("nonempty catalog"),
        spatial: [0; 3].map(|_| *pairs.choose(rng).expect("nonempty")),
    }
}

/// Low-dimensional candidates not sampled yet: the whole space when it is
/// small, otherwise a uniform draw.
fn arch_candidates<R: Rng + ?Sized>(
    catalog: &[Shape],
    pairs: &[[usize; 2]],
    seen: &HashSet<ArchLow>,
    count: usize,
    rng: &mut R,
) -> Vec<ArchLow> {
    if low_space_size(catalog, pairs.len()) <= count {
        let mut v = Vec::new();
        for shape in catalog {
            for a in pairs {
                for b in pairs {
                    for c in pairs {
                        let low = ArchLow {
                            shape: *shape,
                            spatial: [*a, *b, *c],
                        };
                        if !seen.contains(&low) {
                            v.push(low);
                        }
                    }
                }
            }
        }
        return v;
    }
    let mut v = Vec::with_capacity(count);
    let mut local = HashSet::new();
    for _ in 0..count * 4 {
        if v.len() == count {
            break;
        }
        let low = random_low(catalog, pairs, rng);
        if !seen.contains(&low) && local.insert(low.clone()) {
            v.push(low);
        }
    }
    v
}

/// Unsampled genomes differing from `low` in one array dimension or one
/// level's spatial pair.
fn arch_neighbors(
    low: &ArchLow,
    catalog: &HashSet<Shape>,
    dims: &[u32],
    pairs: &[[usize; 2]],
    seen: &HashSet<ArchLow>,
) -> Vec<ArchLow> {
    let mut v = Vec::new();
    for i in 0..6 {
        for &d in dims {
            let mut n = low.clone();
            n.shape[i / 2][i % 2] = d;
            if n != *low && catalog.contains(&n.shape) && !seen.contains(&n) {
                v.push(n);
            }
        }
    }
    for l in 0..3 {
        for p in pairs {
            let mut n = low.clone();
            n.spatial[l] = *p;
            if n != *low && !seen.contains(&n) {
                v.push(n);
            }
        }
    }
    v
}

fn stage_one(
    ev: &dyn Evaluator,
    cfg: &SearchConfig,
    w: usize,
    pe_limit: u64,
    budget: usize,
) -> StageOne {
    let graph = ev.graph();
    let nest = &graph.workloads[w];
    let ext = nest.extents();
    let n = ext.len();
    let catalog = shape_catalog(pe_limit, cfg.max_chiplets_per_workload);
    let pairs = spatial_pairs(n);
    let mut rng = phase_rng(cfg.seed, 1, w as u64);
    let mut out = StageOne {
        front: ParetoSet::new(),
        log: Vec::with_capacity(budget),
    };
    let default = default_genome(nest, &graph.tensors, &ev.buffer_caps(), &catalog);

    if cfg.stage1 == Strategy::Random {
        score_arch(ev, cfg, w, &default, &mut out);
        while out.log.len() < budget {
            let g = random_genome(nest, &catalog, &mut rng);
            score_arch(ev, cfg, w, &g, &mut out);
        }
        return out;
    }

    let mut sur = Surrogate::new(cfg.xi);
    let mut seen: HashSet<ArchLow> = HashSet::new();
    let mut incumbent: Option<(ArchLow, ArchHigh, f64)> = None;
    let shape_set: HashSet<Shape> = catalog.iter().copied().collect();
    let dims = array_dims(pe_limit);
    let sa_base = SaConfig {
        cooling: cfg.cooling,
        ..SaConfig::default()
    };
    for (k, inner) in split_budget(budget, cfg.bayes_samples, cfg.sa_budget)
        .into_iter()
        .enumerate()
    {
        let low = if k == 0 {
            default.low.clone()
        } else {
            let mut cands = arch_candidates(&catalog, &pairs, &seen, cfg.candidates, &mut rng);
            if let Some((l, _, _)) = &incumbent {
                if k >= cfg.initial_samples {
                    let local = arch_neighbors(l, &shape_set, &dims, &pairs, &seen);
                    let known: HashSet<&ArchLow> = cands.iter().collect();
                    let fresh: Vec<ArchLow> =
                        local.into_iter().filter(|c| !known.contains(c)).collect();
                    cands.extend(fresh);
                }
            }
            if cands.is_empty() {
                random_low(&catalog, &pairs, &mut rng)
            } else if k < cfg.initial_samples {
                cands[rng.gen_range(0..cands.len())].clone()
            } else {
                let feats: Vec<Vec<f64>> = cands
                    .iter()
                    .map(|c| arch_features(c, n, pe_limit))
                    .collect();
                cands[sur.pick(&feats)].clone()
            }
        };
        seen.insert(low.clone());
        let mut start = incumbent
            .as_ref()
            .map_or_else(|| default.high.clone(), |(_, h, _)| h.clone());
        normalize_high(&mut start, &ext);
        let sa = sa_optimize(
            start,
            |h, r| arch_neighbor(h, &ext, cfg.tile_move_prob, r),
            |h| {
                let g = ArchGenome {
                    low: low.clone(),
                    high: h.clone(),
                };
                score_arch(ev, cfg, w, &g, &mut out)
            },
            &SaConfig {
                budget: inner,
                ..sa_base
            },
            &mut rng,
        );
        let y = sa.best.as_ref().map(|(_, v)| *v);
        debug!("stage 1 `{}` sample {k}: {:?}", nest.name, y);
        if let Some((h, v)) = sa.best {
            if incumbent.as_ref().is_none_or(|(_, _, b)| v < *b) {
                incumbent = Some((low.clone(), h, v));
            }
        }
        sur.observe(arch_features(&low, n, pe_limit), y);
    }
    out
}

/// Stage-one fronts ranked into design ids.
fn ranked_fronts(objective: &Objective, fronts: &[ParetoSet<ArchDesign>]) -> Vec<Vec<ArchDesign>> {
    fronts
        .iter()
        .map(|f| {
            f.ranked(|e| objective.scalar(&e.item.metrics))
                .into_iter()
                .map(|e| e.item.clone())
                .collect()
        })
        .collect()
}

/// Networks offered for a given chiplet count: enough nodes, and at most
/// twice the chiplets plus two.
fn networks_for(catalog: &[NetworkOption], chiplets: usize) -> Vec<usize> {
    let v: Vec<usize> = (0..catalog.len())
        .filter(|&i| {
            let n = catalog[i].nodes();
            n >= chiplets && n <= 2 * chiplets + 2
        })
        .collect();
    if v.is_empty() {
        (0..catalog.len())
            .filter(|&i| catalog[i].nodes() >= chiplets)
            .collect()
    } else {
        v
    }
}

/// Smallest, squarest mesh holding `chiplets`.
fn default_network(catalog: &[NetworkOption], chiplets: usize) -> Option<usize> {
    (0..catalog.len())
        .filter(|&i| {
            catalog[i].kind == crate::network::TopologyKind::Mesh && catalog[i].nodes() >= chiplets
        })
        .min_by_key(|&i| {
            let n = catalog[i];
            (n.nodes(), n.rows.abs_diff(n.cols), n.cols)
        })
}

fn random_integ_low<R: Rng + ?Sized>(
    catalog: &[NetworkOption],
    fronts: &[Vec<ArchDesign>],
    rng: &mut R,
) -> Option<IntegLow> {
    let selector: Vec<usize> = fronts.iter().map(|f| rng.gen_range(0..f.len())).collect();
    let chips = selected_chiplets(&selector, fronts);
    let nets = networks_for(catalog, chips);
    let network = *nets.choose(rng)?;
    Some(IntegLow {
        packaging: rng.gen_range(0..3),
        network,
        selector,
    })
}

struct StageTwo {
    front: ParetoSet<SystemDesign>,
    log: Vec<EvalRecord>,
    base: usize,
}

fn score_system(
    ev: &dyn Evaluator,
    cfg: &SearchConfig,
    g: &IntegGenome,
    fronts: &[Vec<ArchDesign>],
    catalog: &[NetworkOption],
    out: &mut StageTwo,
) -> Option<f64> {
    let id = out.base + out.log.len();
    let mut rec = EvalRecord {
        id,
        stage: "system".into(),
        genome: genome_json(g),
        feasible: false,
        reason: String::new(),
        packaging: PackagingKind::from_id(g.packaging),
        metrics: None,
    };
    let result = decode_integration(g, fronts, catalog, ev.node())
        .and_then(|dp| ev.system(&dp).map(|e| (dp, e)));
    let value = match result {
        Ok((design, eval)) => {
            rec.feasible = true;
            rec.metrics = Some(eval.metrics);
            let v = log_score(&cfg.objective, &eval.metrics);
            out.front.insert(
                id,
                system_objectives(&eval.metrics),
                SystemDesign {
                    genome: g.clone(),
                    design,
                    eval,
                },
            );
            v
        }
        Err(e) => {
            rec.reason = e.reason();
            None
        }
    };
    out.log.push(rec);
    value
}

fn integ_candidates<R: Rng + ?Sized>(
    catalog: &[NetworkOption],
    fronts: &[Vec<ArchDesign>],
    seen: &HashSet<IntegLow>,
    count: usize,
    rng: &mut R,
) -> Vec<IntegLow> {
    let mut v = Vec::with_capacity(count);
    let mut local = HashSet::new();
    for _ in 0..count * 4 {
        if v.len() == count {
            break;
        }
        if let Some(low) = random_integ_low(catalog, fronts, rng) {
            if !seen.contains(&low) && local.insert(low.clone()) {
                v.push(low);
            }
        }
    }
    v
}

/// Unsampled genomes differing from `low` in packaging, network or one
/// workload's design; a selection that no longer fits moves to the default
/// network.
fn integ_neighbors(
    low: &IntegLow,
    catalog: &[NetworkOption],
    fronts: &[Vec<ArchDesign>],
    seen: &HashSet<IntegLow>,
) -> Vec<IntegLow> {
    let mut v = Vec::new();
    for p in 0..3 {
        v.push(IntegLow {
            packaging: p,
            ..low.clone()
        });
    }
    for net in networks_for(catalog, selected_chiplets(&low.selector, fronts)) {
        v.push(IntegLow {
            network: net,
            ..low.clone()
        });
    }
    for (w, f) in fronts.iter().enumerate() {
        for r in 0..f.len() {
            let mut n = low.clone();
            n.selector[w] = r;
            let chips = selected_chiplets(&n.selector, fronts);
            if catalog[n.network].nodes() < chips {
                match default_network(catalog, chips) {
                    Some(net) => n.network = net,
                    None => continue,
                }
            }
            v.push(n);
        }
    }
    v.retain(|n| n != low && !seen.contains(n));
    v
}

fn stage_two(
    ev: &dyn Evaluator,
    cfg: &SearchConfig,
    fronts: &[Vec<ArchDesign>],
    base: usize,
) -> StageTwo {
    let catalog = network_catalog();
    let sizes: Vec<usize> = fronts.iter().map(Vec::len).collect();
    let budget = cfg.stage2_budget;
    let mut rng = phase_rng(cfg.seed, 2, 0);
    let mut out = StageTwo {
        front: ParetoSet::new(),
        log: Vec::with_capacity(budget),
        base,
    };
    let default_sel = vec![0; fronts.len()];
    let default_chips = selected_chiplets(&default_sel, fronts);
    let Some(default_net) = default_network(&catalog, default_chips) else {
        out.log.push(EvalRecord {
            id: base,
            stage: "system".into(),
            genome: String::new(),
            feasible: false,
            reason: Infeasible::TooManyChiplets {
                chiplets: default_chips,
                nodes: catalog.iter().map(NetworkOption::nodes).max().unwrap_or(0),
            }
            .reason(),
            packaging: None,
            metrics: None,
        });
        return out;
    };
    let default_low = IntegLow {
        packaging: 0,
        network: default_net,
        selector: default_sel,
    };

    if cfg.stage2 == Strategy::Random {
        let mut first = true;
        while out.log.len() < budget {
            let low = if first {
                first = false;
                default_low.clone()
            } else {
                match random_integ_low(&catalog, fronts, &mut rng) {
                    Some(l) => l,
                    None => default_low.clone(),
                }
            };
            let chips = selected_chiplets(&low.selector, fronts);
            let nodes = catalog[low.network].nodes();
            let placement = if out.log.is_empty() {
                identity_placement(chips, nodes)
            } else {
                random_placement(chips, nodes, &mut rng)
            };
            let g = IntegGenome {
                packaging: low.packaging,
                network: low.network,
                selector: low.selector,
                placement,
            };
            score_system(ev, cfg, &g, fronts, &catalog, &mut out);
        }
        return out;
    }

    let mut sur = Surrogate::new(cfg.xi);
    let mut seen: HashSet<IntegLow> = HashSet::new();
    let mut incumbent: Option<(IntegLow, Vec<Option<usize>>, f64)> = None;
    let sa_base = SaConfig {
        cooling: cfg.cooling,
        ..SaConfig::default()
    };
    for (k, inner) in split_budget(budget, cfg.bayes_samples, cfg.sa_budget)
        .into_iter()
        .enumerate()
    {
        let low = if k < 3 {
            IntegLow {
                packaging: k,
                ..default_low.clone()
            }
        } else {
            let mut cands = integ_candidates(&catalog, fronts, &seen, cfg.candidates, &mut rng);
            if let Some((l, _, _)) = &incumbent {
                if k >= cfg.initial_samples {
                    let known: HashSet<&IntegLow> = cands.iter().collect();
                    let fresh: Vec<IntegLow> = integ_neighbors(l, &catalog, fronts, &seen)
                        .into_iter()
                        .filter(|c| !known.contains(c))
                        .collect();
                    cands.extend(fresh);
                }
            }
            if cands.is_empty() {
                default_low.clone()
            } else if k < cfg.initial_samples {
                cands[rng.gen_range(0..cands.len())].clone()
            } else {
                let feats: Vec<Vec<f64>> = cands
                    .iter()
                    .map(|c| integ_features(c, &catalog, &sizes))
                    .collect();
                cands[sur.pick(&feats)].clone()
            }
        };
        seen.insert(low.clone());
        let chips = selected_chiplets(&low.selector, fronts);
        let nodes = catalog[low.network].nodes();
        let start = match &incumbent {
            Some((l, p, _))
                if l.network == low.network && selected_chiplets(&l.selector, fronts) == chips =>
            {
                p.clone()
            }
            _ => identity_placement(chips, nodes),
        };
        let sa = sa_optimize(
            start,
            |p, r| placement_neighbor(p, r),
            |p| {
                let g = IntegGenome {
                    packaging: low.packaging,
                    network: low.network,
                    selector: low.selector.clone(),
                    placement: p.clone(),
                };
                score_system(ev, cfg, &g, fronts, &catalog, &mut out)
            },
            &SaConfig {
                budget: inner,
                ..sa_base
            },
            &mut rng,
        );
        let y = sa.best.as_ref().map(|(_, v)| *v);
        debug!("stage 2 sample {k}: {:?}", y);
        if let Some((p, v)) = sa.best {
            if incumbent.as_ref().is_none_or(|(_, _, b)| v < *b) {
                incumbent = Some((low.clone(), p, v));
            }
        }
        sur.observe(integ_features(&low, &catalog, &sizes), y);
    }
    out
}

#[cfg(feature = "parallel")]
fn run_stage_one(
    ev: &dyn Evaluator,
    cfg: &SearchConfig,
    alloc: &[u64],
    budgets: &[usize],
) -> Vec<StageOne> {
    use rayon::prelude::*;
    (0..alloc.len())
        .into_par_iter()
        .map(|w| stage_one(ev, cfg, w, alloc[w], budgets[w]))
        .collect()
}

#[cfg(not(feature = "parallel"))]
fn run_stage_one(
    ev: &dyn Evaluator,
    cfg: &SearchConfig,
    alloc: &[u64],
    budgets: &[usize],
) -> Vec<StageOne> {
    (0..alloc.len())
        .map(|w| stage_one(ev, cfg, w, alloc[w], budgets[w]))
        .collect()
}

/// Two-stage co-optimization. Stage one explores each workload's
/// architecture and keeps its Pareto set; stage two explores packaging,
/// network, design selection and placement over those sets. Sample ids
/// follow workload order in stage one, then stage two.
pub fn run_two_stage(
    ev: &dyn Evaluator,
    cfg: &SearchConfig,
) -> std::result::Result<Exploration, ExploreError> {
    cfg.validate()?;
    let graph = ev.graph();
    graph.validate()?;
    let nw = graph.workloads.len();
    let macs: Vec<u64> = graph.workloads.iter().map(|w| w.macs()).collect();
    let alloc = balance_pes(&macs, cfg.pe_budget).map_err(|e| Error::Config(e.reason()))?;
    let budgets: Vec<usize> = (0..nw)
        .map(|w| (cfg.stage1_budget / nw + usize::from(w < cfg.stage1_budget % nw)).max(1))
        .collect();
    info!("stage 1: {nw} workloads, PE allocation {alloc:?}, budgets {budgets:?}");

    let mut log = Vec::new();
    let mut arch_fronts = Vec::with_capacity(nw);
    for mut s in run_stage_one(ev, cfg, &alloc, &budgets) {
        let base = log.len();
        for r in &mut s.log {
            r.id += base;
        }
        s.front.offset_ids(base);
        log.append(&mut s.log);
        arch_fronts.push(s.front);
    }
    let mut ex = Exploration {
        objective: cfg.objective,
        pe_allocation: alloc,
        arch_fronts,
        front: ParetoSet::new(),
        log,
    };
    if let Some(w) = ex.arch_fronts.iter().position(ParetoSet::is_empty) {
        let name = &graph.workloads[w].name;
        let reasons: HashSet<&str> = ex
            .log
            .iter()
            .filter(|r| r.stage == format!("arch:{name}"))
            .map(|r| r.reason.as_str())
            .collect();
        let mut reasons: Vec<&str> = reasons.into_iter().collect();
        reasons.sort_unstable();
        return Err(ExploreError::Aborted(Aborted {
            message: format!(
                "no feasible architecture for workload `{name}`: {}",
                reasons.join("; ")
            ),
            partial: Box::new(ex),
        }));
    }
    let fronts = ranked_fronts(&cfg.objective, &ex.arch_fronts);
    info!(
        "stage 2: front sizes {:?}",
        fronts.iter().map(Vec::len).collect::<Vec<_>>()
    );
    let s2 = stage_two(ev, cfg, &fronts, ex.log.len());
    ex.log.extend(s2.log);
    ex.front = s2.front;
    Ok(ex)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn budget_split() {
        assert_eq!(split_budget(1, 64, 300), vec![1]);
        assert_eq!(split_budget(200, 20, 300), vec![10; 20]);
        assert_eq!(split_budget(23, 4, 300), vec![6, 6, 6, 5]);
        assert_eq!(split_budget(1000, 2, 300), vec![250; 4]);
        assert_eq!(split_budget(3, 64, 300), vec![1, 1, 1]);
    }
}
