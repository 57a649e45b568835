use std::collections::HashMap;
use std::hash::Hash;

use rand::Rng;
use serde::{Deserialize, Serialize};

pub const MAX_PROPOSALS_PER_EVAL: usize = 20;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SaConfig {
    /// Distinct states evaluated, including the initial point and
    /// temperature probes.
    pub budget: usize,
    /// Geometric cooling ratio `r` in `T_k = T0 · r^k`.
    pub cooling: f64,
    /// Acceptance rate of uphill probe moves that sets `T0`.
    pub target_acceptance: f64,
    pub probes: usize,
}

impl Default for SaConfig {
    fn default() -> Self {
        Self {
            budget: 300,
            cooling: 0.97,
            target_acceptance: 0.8,
            probes: 50,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SaOutcome<S> {
    /// Best feasible state and its value.
    pub best: Option<(S, f64)>,
    /// Distinct states evaluated.
    pub evaluations: usize,
    /// Moves proposed after the probes, revisits included.
    pub proposals: usize,
    pub t0: f64,
    pub accepted: usize,
}

/// Metropolis rule: downhill and level moves always pass; uphill moves pass
/// with probability `exp(-delta / t)`.
pub fn sa_accept<R: Rng + ?Sized>(delta: f64, t: f64, rng: &mut R) -> bool {
    if delta <= 0.0 {
        return true;
    }
    if !(t > 0.0) || !delta.is_finite() {
        return false;
    }
    rng.gen::<f64>() < (-delta / t).exp()
}

/// Simulated annealing over states `S`. `eval` returns `None` for
/// infeasible states and is called once per distinct state; revisits reuse
/// the stored value and do not count against the budget. Probe moves from
/// `init` (at most a fifth of the budget) calibrate `T0` so uphill moves
/// start near the target acceptance. The walk also stops after
/// `MAX_PROPOSALS_PER_EVAL · budget` proposals, which ends it on small
/// spaces.
pub fn sa_optimize<S: Clone + Eq + Hash, R: Rng + ?Sized>(
    init: S,
    mut neighbor: impl FnMut(&S, &mut R) -> S,
    mut eval: impl FnMut(&S) -> Option<f64>,
    cfg: &SaConfig,
    rng: &mut R,
) -> SaOutcome<S> {
    let budget = cfg.budget.max(1);
    let mut out = SaOutcome {
        best: None,
        evaluations: 0,
        proposals: 0,
        t0: 0.0,
        accepted: 0,
    };
    let consider = |s: &S, v: Option<f64>, best: &mut Option<(S, f64)>| {
        if let Some(v) = v {
            if best.as_ref().is_none_or(|(_, b)| v < *b) {
                *best = Some((s.clone(), v));
            }
        }
    };
    let mut memo: HashMap<S, Option<f64>> = HashMap::new();
    let mut lookup = |s: &S, out: &mut SaOutcome<S>| -> (Option<f64>, bool) {
        if let Some(v) = memo.get(s) {
            return (*v, false);
        }
        let v = eval(s);
        memo.insert(s.clone(), v);
        out.evaluations += 1;
        consider(s, v, &mut out.best);
        (v, true)
    };
    let (f0, _) = lookup(&init, &mut out);
    let f0 = f0.unwrap_or(f64::INFINITY);

    let probes = cfg.probes.min((budget - 1) / 5);
    let mut uphill = Vec::new();
    for _ in 0..probes {
        let s = neighbor(&init, rng);
        let (v, fresh) = lookup(&s, &mut out);
        if let (Some(v), true) = (v, fresh) {
            if f0.is_finite() && v > f0 {
                uphill.push(v - f0);
            }
        }
    }
    out.t0 = if uphill.is_empty() {
        if f0.is_finite() {
            0.01 * f0.abs().max(1e-9)
        } else {
            1.0
        }
    } else {
        uphill.iter().sum::<f64>() / uphill.len() as f64 / (1.0 / cfg.target_acceptance).ln()
    };

    let (mut cur, mut fc) = (init, f0);
    let mut t = out.t0;
    while out.evaluations < budget && out.proposals < MAX_PROPOSALS_PER_EVAL * budget {
        let s = neighbor(&cur, rng);
        let (v, _) = lookup(&s, &mut out);
        out.proposals += 1;
        let fv = v.unwrap_or(f64::INFINITY);
        let accept = match (fc.is_finite(), fv.is_finite()) {
            (false, _) => true,
            (true, false) => false,
            (true, true) => sa_accept(fv - fc, t, rng),
        };
        if accept {
            cur = s;
            fc = fv;
            out.accepted += 1;
        }
        t *= cfg.cooling;
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn step(x: &i64, rng: &mut ChaCha8Rng) -> i64 {
        (x + if rng.gen::<bool>() { 1 } else { -1 }).clamp(0, 100)
    }

    #[test]
    fn zero_delta_always_accepted() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        assert!((0..1000).all(|_| sa_accept(0.0, 1e-9, &mut rng)));
    }

    #[test]
    fn convex_one_dimensional() {
        let f = |x: &i64| Some(((x - 37) * (x - 37)) as f64);
        for seed in 0..10 {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let cfg = SaConfig {
                budget: 500,
                ..SaConfig::default()
            };
            let out = sa_optimize(90, step, f, &cfg, &mut rng);
            let (x, _) = out.best.unwrap();
            assert!((x - 37).abs() <= 1, "seed {seed}: {x}");
            assert!(out.evaluations <= 101);
        }
    }

    #[test]
    fn deterministic_trajectory() {
        let run = || {
            let mut rng = ChaCha8Rng::seed_from_u64(9);
            let mut trace = Vec::new();
            sa_optimize(
                50,
                step,
                |x: &i64| {
                    trace.push(*x);
                    Some((x % 7) as f64)
                },
                &SaConfig::default(),
                &mut rng,
            );
            trace
        };
        assert_eq!(run(), run());
    }

    #[test]
    fn revisits_are_not_reevaluated() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let mut calls = Vec::new();
        let out = sa_optimize(
            5,
            step,
            |x: &i64| {
                calls.push(*x);
                Some(*x as f64)
            },
            &SaConfig {
                budget: 40,
                ..SaConfig::default()
            },
            &mut rng,
        );
        let mut distinct = calls.clone();
        distinct.sort();
        distinct.dedup();
        assert_eq!(distinct.len(), calls.len());
        assert_eq!(out.evaluations, calls.len());
        assert!(out.evaluations <= 40);
    }

    #[test]
    fn infeasible_everywhere() {
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let out = sa_optimize(0, step, |_| None, &SaConfig::default(), &mut rng);
        assert!(out.best.is_none());
    }
}
