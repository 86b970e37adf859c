use std::collections::HashSet;

use rand::Rng;
use serde::{Deserialize, Serialize};

use super::WalkTrace;
use crate::rng::{chunked, stream_rng};
use crate::stats::{Accumulator, MeanEstimate};
use crate::topology::{RootedTree, SiteGraph, TrapField};
use crate::{Error, Result};

/// A vertex visited by a tree walk, with its distance to the root.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize)]
pub struct TreeSite {
    pub vertex: usize,
    pub depth: usize,
}

/// Annealed trap law on the infinite `q`-ary tree: every non-root vertex is a
/// trap with probability `trap_prob`, and a visit to a trap kills with
/// probability `kill_prob`. Traps are sampled lazily, fresh for every walk.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AnnealedTraps {
    pub q: usize,
    pub trap_prob: f64,
    pub kill_prob: f64,
}

impl AnnealedTraps {
    pub fn perfect(q: usize, trap_prob: f64) -> Self {
        AnnealedTraps {
            q,
            trap_prob,
            kill_prob: 1.0,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.q < 2 {
            return Err(Error::param("q", "branching number must be at least 2"));
        }
        if !(0.0..=1.0).contains(&self.trap_prob) {
            return Err(Error::param("trap_prob", format!("{} is not in [0, 1]", self.trap_prob)));
        }
        if !(self.kill_prob > 0.0 && self.kill_prob <= 1.0) {
            return Err(Error::param("kill_prob", format!("{} is not in (0, 1]", self.kill_prob)));
        }
        Ok(())
    }
}

trait TreeEnv {
    fn q(&self) -> usize;
    fn depth(&self, v: usize) -> usize;
    fn parent(&self, v: usize) -> Option<usize>;
    /// `k`-th child of `v`, or `None` past the edge of a finite tree.
    fn child<R: Rng>(&mut self, v: usize, k: usize, rng: &mut R) -> Option<usize>;
    fn kill_prob(&self, v: usize) -> f64;
}

struct Quenched<'a> {
    tree: &'a RootedTree,
    field: &'a TrapField,
}

impl TreeEnv for Quenched<'_> {
    fn q(&self) -> usize {
        self.tree.q()
    }
    fn depth(&self, v: usize) -> usize {
        self.tree.depth(v)
    }
    fn parent(&self, v: usize) -> Option<usize> {
        self.tree.parent(v)
    }
    fn child<R: Rng>(&mut self, v: usize, k: usize, _: &mut R) -> Option<usize> {
        self.tree.children(v).get(k).copied()
    }
    fn kill_prob(&self, v: usize) -> f64 {
        if self.field.traps[v] {
            self.field.kill_prob[v]
        } else {
            0.0
        }
    }
}

/// Lazily grown `q`-ary tree; the `q` children of a vertex are created (and
/// their traps drawn) the first time the walk steps down from it.
struct Arena {
    law: AnnealedTraps,
    parent: Vec<usize>,
    depth: Vec<usize>,
    first_child: Vec<usize>,
    trap: Vec<bool>,
}

const UNEXPANDED: usize = usize::MAX;

impl Arena {
    fn new(law: AnnealedTraps) -> Self {
        let mut a = Arena {
            law,
            parent: Vec::new(),
            depth: Vec::new(),
            first_child: Vec::new(),
            trap: Vec::new(),
        };
        a.reset();
        a
    }

    fn reset(&mut self) {
        self.parent.clear();
        self.depth.clear();
        self.first_child.clear();
        self.trap.clear();
        self.parent.push(UNEXPANDED);
        self.depth.push(0);
        self.first_child.push(UNEXPANDED);
        self.trap.push(false);
    }
}

impl TreeEnv for Arena {
    fn q(&self) -> usize {
        self.law.q
    }
    fn depth(&self, v: usize) -> usize {
        self.depth[v]
    }
    fn parent(&self, v: usize) -> Option<usize> {
        (v != 0).then(|| self.parent[v])
    }
    fn child<R: Rng>(&mut self, v: usize, k: usize, rng: &mut R) -> Option<usize> {
        if self.first_child[v] == UNEXPANDED {
            let first = self.parent.len();
            self.first_child[v] = first;
            for _ in 0..self.law.q {
                self.parent.push(v);
                self.depth.push(self.depth[v] + 1);
                self.first_child.push(UNEXPANDED);
                let p = self.law.trap_prob;
                self.trap.push(p > 0.0 && rng.random_bool(p));
            }
        }
        Some(self.first_child[v] + k)
    }
    fn kill_prob(&self, v: usize) -> f64 {
        if self.trap[v] {
            self.law.kill_prob
        } else {
            0.0
        }
    }
}

struct Outcome {
    survival_time: u64,
    killed: bool,
    escaped: bool,
}

/// Root moves to a uniform child; other vertices pick uniformly among the
/// parent and `q` children. A step onto a trap kills with its kill
/// probability.
fn simulate<E: TreeEnv, R: Rng>(
    env: &mut E,
    horizon: u64,
    rng: &mut R,
    mut record: Option<&mut Vec<TreeSite>>,
) -> Outcome {
    let q = env.q();
    let mut v = 0usize;
    if let Some(r) = record.as_deref_mut() {
        r.push(TreeSite { vertex: 0, depth: 0 });
    }
    for n in 1..=horizon {
        let next = match env.parent(v) {
            None => env.child(v, rng.random_range(0..q), rng),
            Some(p) => {
                let k = rng.random_range(0..=q);
                if k == 0 {
                    Some(p)
                } else {
                    env.child(v, k - 1, rng)
                }
            }
        };
        let Some(next) = next else {
            return Outcome {
                survival_time: n - 1,
                killed: false,
                escaped: true,
            };
        };
        v = next;
        if let Some(r) = record.as_deref_mut() {
            r.push(TreeSite {
                vertex: v,
                depth: env.depth(v),
            });
        }
        let kp = env.kill_prob(v);
        if kp > 0.0 && (kp >= 1.0 || rng.random_bool(kp)) {
            return Outcome {
                survival_time: n,
                killed: true,
                escaped: false,
            };
        }
    }
    Outcome {
        survival_time: horizon,
        killed: false,
        escaped: false,
    }
}

fn trace_from(outcome: Outcome, positions: Vec<TreeSite>, seed: u64) -> WalkTrace<TreeSite> {
    WalkTrace {
        positions,
        survival_time: outcome.survival_time,
        killed: outcome.killed,
        censored: !outcome.killed,
        escaped: outcome.escaped,
        seed,
    }
}

/// Walk from the root of `tree` in the fixed trap field `field`. A walk that
/// tries to step below the deepest generation stops with `escaped` set.
pub fn run_trapped_tree_walk(
    tree: &RootedTree,
    field: &TrapField,
    horizon: u64,
    seed: u64,
) -> Result<WalkTrace<TreeSite>> {
    if field.traps.len() != tree.site_count() {
        return Err(Error::param("field", "trap field does not match the tree"));
    }
    if field.traps[tree.root()] {
        return Err(Error::param("field", "the root must be trapless"));
    }
    if horizon == 0 {
        return Err(Error::param("horizon", "must be at least 1"));
    }
    let mut env = Quenched { tree, field };
    let mut positions = Vec::new();
    let out = simulate(&mut env, horizon, &mut stream_rng(seed, 0), Some(&mut positions));
    Ok(trace_from(out, positions, seed))
}

/// Walk in a freshly sampled annealed trap environment.
pub fn run_annealed_tree_walk(law: &AnnealedTraps, horizon: u64, seed: u64) -> Result<WalkTrace<TreeSite>> {
    law.validate()?;
    let mut arena = Arena::new(*law);
    let mut positions = Vec::new();
    let out = simulate(&mut arena, horizon, &mut stream_rng(seed, 0), Some(&mut positions));
    Ok(trace_from(out, positions, seed))
}

/// Range `R_n` (distinct vertices among `S_0..S_n`) and depth `X_n = d(o, S_n)`
/// for every `n` along the trace.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RangeDepth {
    pub range: Vec<usize>,
    pub depth: Vec<usize>,
}

pub fn range_and_depth(trace: &WalkTrace<TreeSite>) -> RangeDepth {
    let mut seen = HashSet::new();
    let mut range = Vec::with_capacity(trace.positions.len());
    let mut depth = Vec::with_capacity(trace.positions.len());
    for s in &trace.positions {
        seen.insert(s.vertex);
        range.push(seen.len());
        depth.push(s.depth);
    }
    RangeDepth { range, depth }
}

/// Mean of `X_n / n` over `n_walks` trapless walks on the `q`-ary tree.
pub fn depth_drift(q: usize, n: u64, n_walks: usize, seed: u64) -> Result<MeanEstimate> {
    let law = AnnealedTraps {
        q,
        trap_prob: 0.0,
        kill_prob: 1.0,
    };
    law.validate()?;
    if n == 0 || n_walks < 2 {
        return Err(Error::param("n", "need n >= 1 and at least two walks"));
    }
    let parts = chunked(n_walks, |range| {
        let mut arena = Arena::new(law);
        let mut acc = Accumulator::default();
        let mut path = Vec::new();
        for i in range {
            arena.reset();
            path.clear();
            simulate(&mut arena, n, &mut stream_rng(seed, i as u64), Some(&mut path));
            acc.push(path.last().expect("non-empty path").depth as f64 / n as f64);
        }
        acc
    });
    Ok(merge(parts).estimate())
}

fn merge(parts: Vec<Accumulator>) -> Accumulator {
    parts.into_iter().fold(Accumulator::default(), |mut a, b| {
        a.merge(&b);
        a
    })
}

/// Which walk a survival estimate is about.
#[derive(Debug, Clone, Copy)]
pub enum SurvivalModel<'a> {
    /// Fresh trap environment per walk.
    Annealed(AnnealedTraps),
    /// One fixed environment for every walk.
    Quenched {
        tree: &'a RootedTree,
        field: &'a TrapField,
    },
}

/// Survival times of `n_walks` independent walks, censored at `horizon`.
/// Walk `i` uses stream `(seed, i)`.
pub(crate) fn survival_samples(
    model: &SurvivalModel<'_>,
    horizon: u64,
    n_walks: usize,
    seed: u64,
) -> Result<Vec<(u64, bool)>> {
    match model {
        SurvivalModel::Annealed(law) => {
            law.validate()?;
            let parts = chunked(n_walks, |range| {
                let mut arena = Arena::new(*law);
                range
                    .map(|i| {
                        arena.reset();
                        let o = simulate(&mut arena, horizon, &mut stream_rng(seed, i as u64), None);
                        (o.survival_time, o.killed)
                    })
                    .collect::<Vec<_>>()
            });
            Ok(parts.into_iter().flatten().collect())
        }
        SurvivalModel::Quenched { tree, field } => {
            if horizon > tree.max_depth() as u64 {
                return Err(Error::param(
                    "horizon",
                    format!(
                        "horizon {horizon} exceeds tree depth {}; walks could leave the tree",
                        tree.max_depth()
                    ),
                ));
            }
            if field.traps.len() != tree.site_count() || field.traps[tree.root()] {
                return Err(Error::param("field", "trap field must match the tree and spare the root"));
            }
            let parts = chunked(n_walks, |range| {
                let mut env = Quenched { tree, field };
                range
                    .map(|i| {
                        let o = simulate(&mut env, horizon, &mut stream_rng(seed, i as u64), None);
                        (o.survival_time, o.killed)
                    })
                    .collect::<Vec<_>>()
            });
            Ok(parts.into_iter().flatten().collect())
        }
    }
}

/// `Ê(min(T, horizon))` with the number of walks still alive at the horizon.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct SurvivalMean {
    pub estimate: MeanEstimate,
    pub horizon: u64,
    pub censored: usize,
}

pub fn mean_survival_time(
    model: &SurvivalModel<'_>,
    horizon: u64,
    n_walks: usize,
    seed: u64,
) -> Result<SurvivalMean> {
    if horizon == 0 || n_walks < 2 {
        return Err(Error::param("n_walks", "need a positive horizon and at least two walks"));
    }
    let samples = survival_samples(model, horizon, n_walks, seed)?;
    let mut acc = Accumulator::default();
    for &(t, _) in &samples {
        acc.push(t as f64);
    }
    Ok(SurvivalMean {
        estimate: acc.estimate(),
        horizon,
        censored: samples.iter().filter(|s| !s.1).count(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::topology::{build_qary_tree, sample_trap_field, TrapProbability};

    #[test]
    fn all_traps_kill_at_first_step() {
        let t = build_qary_tree(2, 5).unwrap();
        let f = sample_trap_field(&t, &TrapProbability::Uniform(1.0), 1.0, 0).unwrap();
        for seed in 0..20 {
            let w = run_trapped_tree_walk(&t, &f, 10, seed).unwrap();
            assert!(w.killed);
            assert_eq!(w.survival_time, 1);
            assert_eq!(w.positions.len(), 2);
        }
    }

    #[test]
    fn no_traps_censored() {
        let law = AnnealedTraps {
            q: 3,
            trap_prob: 0.0,
            kill_prob: 1.0,
        };
        let w = run_annealed_tree_walk(&law, 50, 1).unwrap();
        assert!(!w.killed && w.censored && !w.escaped);
        assert_eq!(w.survival_time, 50);
        assert_eq!(w.positions.len(), 51);
    }

    #[test]
    fn escape_from_finite_tree() {
        let t = build_qary_tree(2, 2).unwrap();
        let f = TrapField {
            traps: vec![false; 7],
            trap_prob: vec![0.5; 7],
            kill_prob: vec![1.0; 7],
        };
        // from depth 2 the walk eventually tries to go deeper
        let w = run_trapped_tree_walk(&t, &f, 10_000, 3).unwrap();
        assert!(w.escaped);
        assert!(!w.killed);
    }

    #[test]
    fn consecutive_positions_adjacent() {
        let law = AnnealedTraps::perfect(2, 0.2);
        for seed in 0..20 {
            let w = run_annealed_tree_walk(&law, 200, seed).unwrap();
            for pair in w.positions.windows(2) {
                assert_eq!(pair[0].depth.abs_diff(pair[1].depth), 1);
            }
            let rd = range_and_depth(&w);
            for (r, x) in rd.range.iter().zip(&rd.depth) {
                assert!(*r >= x + 1);
            }
        }
    }

    #[test]
    fn degenerate_trace() {
        let trace = WalkTrace {
            positions: vec![TreeSite { vertex: 0, depth: 0 }],
            survival_time: 0,
            killed: false,
            censored: true,
            escaped: false,
            seed: 0,
        };
        let rd = range_and_depth(&trace);
        assert_eq!(rd.range, vec![1]);
        assert_eq!(rd.depth, vec![0]);
    }

    #[test]
    fn survival_samples_are_seeded() {
        let m = SurvivalModel::Annealed(AnnealedTraps::perfect(2, 0.3));
        let a = survival_samples(&m, 100, 5000, 9).unwrap();
        let b = survival_samples(&m, 100, 5000, 9).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn quenched_horizon_bound() {
        let t = build_qary_tree(2, 4).unwrap();
        let f = sample_trap_field(&t, &TrapProbability::Uniform(0.5), 1.0, 0).unwrap();
        let m = SurvivalModel::Quenched { tree: &t, field: &f };
        assert!(survival_samples(&m, 5, 10, 0).is_err());
        assert!(survival_samples(&m, 4, 10, 0).is_ok());
    }
}
