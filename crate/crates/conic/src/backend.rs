use clarabel::algebra::CscMatrix;
use clarabel::solver::{
    DefaultSettingsBuilder, DefaultSolver, IPSolver, SolverStatus, SupportedConeT,
};

use crate::program::{Affine, ConicProgram, Sense};

/// Per-variable (lower, upper) bounds overriding those in the program.
pub type Bounds = [(f64, f64)];

#[derive(Debug, Clone, PartialEq)]
pub enum RelaxStatus {
    Optimal,
    Infeasible,
    Unbounded,
    Failed(String),
}

#[derive(Debug, Clone)]
pub struct Relaxation {
    pub status: RelaxStatus,
    pub x: Vec<f64>,
    pub objective: f64,
    /// Names of the rows carrying the largest infeasibility certificate
    /// weights, when the relaxation is infeasible.
    pub conflict: Vec<String>,
    pub iterations: u32,
}

impl Relaxation {
    pub fn is_optimal(&self) -> bool {
        self.status == RelaxStatus::Optimal
    }
}

/// Solver for the continuous relaxation of a [`ConicProgram`].
pub trait ConicBackend: Send + Sync {
    /// `warm` is a starting point hint; backends may ignore it.
    fn solve(
        &self,
        program: &ConicProgram,
        bounds: &Bounds,
        warm: Option<&[f64]>,
        time_limit_s: Option<f64>,
    ) -> Relaxation;
}

/// Interior-point backend built on Clarabel.
#[derive(Debug, Clone)]
pub struct ClarabelBackend {
    pub tol_gap: f64,
    pub tol_feas: f64,
    pub max_iter: u32,
}

impl Default for ClarabelBackend {
    fn default() -> Self {
        Self {
            tol_gap: 1e-9,
            tol_feas: 1e-9,
            max_iter: 200,
        }
    }
}

/// Column-major triplet builder for the constraint matrix.
#[derive(Default)]
struct Rows {
    i: Vec<usize>,
    j: Vec<usize>,
    v: Vec<f64>,
    b: Vec<f64>,
    names: Vec<String>,
}

impl Rows {
    /// Appends the row `b − a·x` (sign convention of `A x + s = b`).
    fn push(&mut self, terms: &[(crate::Var, f64)], scale: f64, b: f64, name: &str) {
        let r = self.b.len();
        for &(var, c) in terms {
            if c != 0.0 {
                self.i.push(r);
                self.j.push(var.0);
                self.v.push(c * scale);
            }
        }
        self.b.push(b);
        self.names.push(name.to_string());
    }

    /// Appends cone entry `s = expr` for an affine expression.
    fn push_affine(&mut self, a: &Affine, scale: f64, name: &str) {
        // s = b − A x  with  s = scale·(c·x + d)  ⇒  A = −scale·c, b = scale·d.
        self.push(&a.terms, -scale, scale * a.constant, name);
    }

    fn len(&self) -> usize {
        self.b.len()
    }
}

impl ConicBackend for ClarabelBackend {
    fn solve(
        &self,
        p: &ConicProgram,
        bounds: &Bounds,
        _warm: Option<&[f64]>,
        time_limit_s: Option<f64>,
    ) -> Relaxation {
        let n = p.vars.len();
        let mut rows = Rows::default();

        // Zero cone: equalities and fixed variables.
        for c in p.linear.iter().filter(|c| c.sense == Sense::Eq) {
            rows.push(&c.terms, 1.0, c.rhs, &c.name);
        }
        for (k, &(lb, ub)) in bounds.iter().enumerate() {
            if lb == ub {
                rows.push(&[(crate::Var(k), 1.0)], 1.0, lb, &p.vars[k].name);
            }
        }
        let n_zero = rows.len();

        // Nonnegative cone: inequalities and finite bounds.
        for c in p.linear.iter().filter(|c| c.sense != Sense::Eq) {
            match c.sense {
                Sense::Le => rows.push(&c.terms, 1.0, c.rhs, &c.name),
                Sense::Ge => rows.push(&c.terms, -1.0, -c.rhs, &c.name),
                Sense::Eq => unreachable!(),
            }
        }
        for (k, &(lb, ub)) in bounds.iter().enumerate() {
            if lb == ub {
                continue;
            }
            let name = &p.vars[k].name;
            if ub.is_finite() {
                rows.push(&[(crate::Var(k), 1.0)], 1.0, ub, name);
            }
            if lb.is_finite() {
                rows.push(&[(crate::Var(k), -1.0)], 1.0, -lb, name);
            }
        }
        let n_nonneg = rows.len() - n_zero;

        let mut cones: Vec<SupportedConeT<f64>> = Vec::new();
        if n_zero > 0 {
            cones.push(SupportedConeT::ZeroConeT(n_zero));
        }
        if n_nonneg > 0 {
            cones.push(SupportedConeT::NonnegativeConeT(n_nonneg));
        }
        for c in &p.soc {
            rows.push_affine(&c.t, 1.0, &c.name);
            for a in &c.xs {
                rows.push_affine(a, 1.0, &c.name);
            }
            cones.push(SupportedConeT::SecondOrderConeT(1 + c.xs.len()));
        }
        let sqrt2 = std::f64::consts::SQRT_2;
        for c in &p.rotated {
            // 2uw ≥ ‖v‖²  ⇔  ‖(√2·v, u − w)‖ ≤ u + w
            let mut sum = c.u.clone();
            sum.terms.extend(c.w.terms.iter().copied());
            sum.constant += c.w.constant;
            let mut diff = c.u.clone();
            diff.terms.extend(c.w.terms.iter().map(|&(v, k)| (v, -k)));
            diff.constant -= c.w.constant;
            rows.push_affine(&sum, 1.0, &c.name);
            for a in &c.xs {
                rows.push_affine(a, sqrt2, &c.name);
            }
            rows.push_affine(&diff, 1.0, &c.name);
            cones.push(SupportedConeT::SecondOrderConeT(2 + c.xs.len()));
        }

        let m = rows.len();
        let a = CscMatrix::new_from_triplets(m, n, rows.i, rows.j, rows.v);
        let pm = CscMatrix::<f64>::zeros((n, n));
        let mut q = vec![0.0; n];
        for &(v, c) in &p.objective.terms {
            q[v.0] += c;
        }

        let mut builder = DefaultSettingsBuilder::default();
        builder
            .verbose(false)
            .max_iter(self.max_iter)
            .tol_gap_abs(self.tol_gap)
            .tol_gap_rel(self.tol_gap)
            .tol_feas(self.tol_feas)
            .presolve_enable(true);
        if let Some(t) = time_limit_s {
            builder.time_limit(t.max(1e-3));
        }
        let settings = match builder.build() {
            Ok(s) => s,
            Err(e) => return failed(n, format!("settings: {e}")),
        };
        let mut solver = match DefaultSolver::new(&pm, &q, &a, &rows.b, &cones, settings) {
            Ok(s) => s,
            Err(e) => return failed(n, format!("setup: {e:?}")),
        };
        solver.solve();
        let sol = &solver.solution;
        let objective = sol.obj_val + p.objective.constant;
        let status = match sol.status {
            SolverStatus::Solved | SolverStatus::AlmostSolved => RelaxStatus::Optimal,
            SolverStatus::PrimalInfeasible | SolverStatus::AlmostPrimalInfeasible => {
                RelaxStatus::Infeasible
            }
            SolverStatus::DualInfeasible | SolverStatus::AlmostDualInfeasible => {
                RelaxStatus::Unbounded
            }
            other => RelaxStatus::Failed(format!("{other:?}")),
        };
        let conflict = if status == RelaxStatus::Infeasible {
            conflict_rows(&sol.z, &rows.names, 5)
        } else {
            Vec::new()
        };
        Relaxation {
            status,
            x: sol.x.clone(),
            objective,
            conflict,
            iterations: sol.iterations,
        }
    }
}

fn failed(n: usize, msg: String) -> Relaxation {
    Relaxation {
        status: RelaxStatus::Failed(msg),
        x: vec![0.0; n],
        objective: f64::NAN,
        conflict: Vec::new(),
        iterations: 0,
    }
}

/// Distinct row names ranked by certificate weight.
fn conflict_rows(z: &[f64], names: &[String], k: usize) -> Vec<String> {
    let mut idx: Vec<usize> = (0..z.len()).filter(|&i| z[i].abs() > 1e-9).collect();
    idx.sort_by(|&a, &b| z[b].abs().total_cmp(&z[a].abs()));
    let mut out: Vec<String> = Vec::new();
    for i in idx {
        if !out.contains(&names[i]) {
            out.push(names[i].clone());
            if out.len() == k {
                break;
            }
        }
    }
    out
}
