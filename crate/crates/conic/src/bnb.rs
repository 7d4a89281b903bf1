use std::cmp::Ordering;
use std::collections::BinaryHeap;
use std::time::{Duration, Instant};

use log::debug;

use crate::backend::{ConicBackend, RelaxStatus, Relaxation};
use crate::program::{ConicProgram, Var};

#[derive(Debug, Clone)]
pub struct MipOptions {
    /// Relative optimality gap at which the search stops.
    pub mip_gap: f64,
    pub node_limit: usize,
    pub time_limit: Option<Duration>,
    /// Distance from 0/1 still counted as integral.
    pub int_tol: f64,
    /// Run the rounding heuristic every this many nodes (0 disables it
    /// below the root).
    pub heuristic_every: usize,
    /// Activity threshold used by rounding hints.
    pub hint_tol: f64,
}

impl Default for MipOptions {
    fn default() -> Self {
        Self {
            mip_gap: 1e-3,
            node_limit: 2000,
            time_limit: None,
            int_tol: 1e-6,
            heuristic_every: 25,
            hint_tol: 1e-7,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum MipStatus {
    /// Proven within the requested gap.
    Optimal,
    /// Budget exhausted with an incumbent.
    Feasible,
    Infeasible,
    /// Budget exhausted, or the backend failed, without an incumbent.
    NoSolution,
}

#[derive(Debug, Clone)]
pub struct MipSolution {
    pub status: MipStatus,
    pub x: Vec<f64>,
    pub objective: f64,
    /// Best proven lower bound.
    pub bound: f64,
    pub gap: f64,
    /// Relaxations solved inside the tree.
    pub nodes: usize,
    pub root_objective: f64,
    /// True when the root relaxation was already integral.
    pub root_integral: bool,
    /// Rows implicated when the root relaxation is infeasible.
    pub conflict: Vec<String>,
    pub message: String,
}

struct Node {
    bound: f64,
    depth: usize,
    fixings: Vec<(Var, f64)>,
}

impl PartialEq for Node {
    fn eq(&self, other: &Self) -> bool {
        self.cmp(other) == Ordering::Equal
    }
}

impl Eq for Node {}

impl PartialOrd for Node {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

impl Ord for Node {
    // Max-heap on the negated bound; deeper nodes first on ties.
    fn cmp(&self, other: &Self) -> Ordering {
        other
            .bound
            .total_cmp(&self.bound)
            .then(self.depth.cmp(&other.depth))
    }
}

fn relative_gap(incumbent: f64, bound: f64) -> f64 {
    ((incumbent - bound) / incumbent.abs().max(1.0)).max(0.0)
}

struct Search<'a> {
    p: &'a ConicProgram,
    backend: &'a dyn ConicBackend,
    opts: &'a MipOptions,
    base: Vec<(f64, f64)>,
    binaries: Vec<Var>,
    start: Instant,
    incumbent: Option<(f64, Vec<f64>)>,
}

impl<'a> Search<'a> {
    fn remaining(&self) -> Option<f64> {
        self.opts
            .time_limit
            .map(|t| t.saturating_sub(self.start.elapsed()).as_secs_f64())
    }

    fn out_of_time(&self) -> bool {
        matches!(self.remaining(), Some(r) if r <= 0.0)
    }

    fn relax(&self, fixings: &[(Var, f64)], warm: Option<&[f64]>) -> Relaxation {
        let mut bounds = self.base.clone();
        for &(v, val) in fixings {
            bounds[v.0] = (val, val);
        }
        self.backend.solve(self.p, &bounds, warm, self.remaining())
    }

    fn fractional(&self, x: &[f64]) -> Option<Var> {
        let mut best: Option<(u8, f64, Var)> = None;
        for &b in &self.binaries {
            let frac = (x[b.0] - x[b.0].round()).abs();
            if frac <= self.opts.int_tol {
                continue;
            }
            let class = self.p.vars[b.0].binary.as_ref().map_or(0, |i| i.class);
            let better = match best {
                None => true,
                Some((c, f, _)) => class < c || (class == c && frac > f),
            };
            if better {
                best = Some((class, frac, b));
            }
        }
        best.map(|(_, _, v)| v)
    }

    /// Rounds every free binary using its hints.
    fn rounded(&self, x: &[f64], fixings: &[(Var, f64)]) -> Vec<(Var, f64)> {
        let tol = self.opts.hint_tol;
        let active = |vs: &[Var]| vs.iter().any(|v| x[v.0].abs() > tol);
        self.binaries
            .iter()
            .map(|&b| {
                if let Some(&(_, val)) = fixings.iter().find(|(v, _)| *v == b) {
                    return (b, val);
                }
                let info = self.p.vars[b.0].binary.as_ref().unwrap();
                let val = if active(&info.on_if) {
                    1.0
                } else if active(&info.off_if) {
                    0.0
                } else {
                    x[b.0].round().clamp(0.0, 1.0)
                };
                (b, val)
            })
            .collect()
    }

    fn offer(&mut self, r: &Relaxation) -> bool {
        if !r.is_optimal() {
            return false;
        }
        let better = self
            .incumbent
            .as_ref()
            .map_or(true, |(obj, _)| r.objective < *obj);
        if better {
            debug!("incumbent {:.6}", r.objective);
            self.incumbent = Some((r.objective, r.x.clone()));
        }
        better
    }

    fn try_rounding(&mut self, x: &[f64], fixings: &[(Var, f64)]) {
        let fix = self.rounded(x, fixings);
        let r = self.relax(&fix, Some(x));
        self.offer(&r);
    }
}

/// Best-first branch and bound over the binaries of `p`.
pub fn solve_mip(p: &ConicProgram, backend: &dyn ConicBackend, opts: &MipOptions) -> MipSolution {
    let mut base: Vec<(f64, f64)> = p.vars.iter().map(|v| (v.lb, v.ub)).collect();
    let binaries: Vec<Var> = p.binaries().collect();
    for &b in &binaries {
        base[b.0] = (base[b.0].0.max(0.0), base[b.0].1.min(1.0));
    }
    let mut s = Search {
        p,
        backend,
        opts,
        base,
        binaries,
        start: Instant::now(),
        incumbent: None,
    };
    let n = p.vars.len();

    let root = s.relax(&[], None);
    let mut nodes = 1;
    match &root.status {
        RelaxStatus::Optimal => {}
        RelaxStatus::Infeasible => {
            return MipSolution {
                status: MipStatus::Infeasible,
                x: vec![0.0; n],
                objective: f64::INFINITY,
                bound: f64::INFINITY,
                gap: f64::INFINITY,
                nodes,
                root_objective: f64::INFINITY,
                root_integral: false,
                conflict: root.conflict.clone(),
                message: "root relaxation infeasible".into(),
            }
        }
        other => {
            return MipSolution {
                status: MipStatus::NoSolution,
                x: vec![0.0; n],
                objective: f64::NAN,
                bound: f64::NEG_INFINITY,
                gap: f64::INFINITY,
                nodes,
                root_objective: f64::NAN,
                root_integral: false,
                conflict: Vec::new(),
                message: format!("root relaxation: {other:?}"),
            }
        }
    }
    let root_objective = root.objective;
    let root_integral = s.fractional(&root.x).is_none();

    let mut heap = BinaryHeap::new();
    if root_integral {
        s.offer(&root);
    } else {
        s.try_rounding(&root.x, &[]);
        if let Some(v) = s.fractional(&root.x) {
            for val in [0.0, 1.0] {
                heap.push(Node {
                    bound: root.objective,
                    depth: 1,
                    fixings: vec![(v, val)],
                });
            }
        }
    }

    let mut budget_hit = false;
    // Lowest bound among nodes discarded only because they were within the gap.
    let mut pruned_min = f64::INFINITY;
    while let Some(node) = heap.pop() {
        if let Some((inc, _)) = &s.incumbent {
            if relative_gap(*inc, node.bound) <= opts.mip_gap {
                // Best-first: every remaining node is at least as bad.
                pruned_min = pruned_min.min(node.bound);
                heap.clear();
                break;
            }
        }
        if nodes >= opts.node_limit || s.out_of_time() {
            heap.push(node);
            budget_hit = true;
            break;
        }
        let warm = s.incumbent.as_ref().map(|(_, x)| x.clone());
        let r = s.relax(&node.fixings, warm.as_deref());
        nodes += 1;
        if !r.is_optimal() {
            continue;
        }
        if let Some((inc, _)) = &s.incumbent {
            if relative_gap(*inc, r.objective) <= opts.mip_gap {
                pruned_min = pruned_min.min(r.objective);
                continue;
            }
        }
        match s.fractional(&r.x) {
            None => {
                s.offer(&r);
            }
            Some(v) => {
                if opts.heuristic_every > 0 && nodes % opts.heuristic_every == 0 {
                    s.try_rounding(&r.x, &node.fixings);
                }
                for val in [0.0, 1.0] {
                    let mut fixings = node.fixings.clone();
                    fixings.push((v, val));
                    heap.push(Node {
                        bound: r.objective,
                        depth: node.depth + 1,
                        fixings,
                    });
                }
            }
        }
    }

    let open_bound = heap.iter().map(|nd| nd.bound).fold(f64::INFINITY, f64::min);
    match s.incumbent.take() {
        Some((obj, x)) => {
            let bound = open_bound.min(pruned_min).min(obj).max(root_objective.min(obj));
            let gap = relative_gap(obj, bound);
            let status = if budget_hit && gap > opts.mip_gap {
                MipStatus::Feasible
            } else {
                MipStatus::Optimal
            };
            MipSolution {
                status,
                x: snap(&x, &s.binaries),
                objective: obj,
                bound,
                gap,
                nodes,
                root_objective,
                root_integral,
                conflict: Vec::new(),
                message: String::new(),
            }
        }
        None => MipSolution {
            status: if budget_hit {
                MipStatus::NoSolution
            } else {
                MipStatus::Infeasible
            },
            x: vec![0.0; n],
            objective: f64::INFINITY,
            bound: open_bound,
            gap: f64::INFINITY,
            nodes,
            root_objective,
            root_integral,
            conflict: Vec::new(),
            message: if budget_hit {
                "budget exhausted before an integral point was found".into()
            } else {
                "no integral assignment is feasible".into()
            },
        },
    }
}

fn snap(x: &[f64], binaries: &[Var]) -> Vec<f64> {
    let mut out = x.to_vec();
    for b in binaries {
        out[b.0] = out[b.0].round().clamp(0.0, 1.0);
    }
    out
}
