use std::collections::HashMap;

use crate::error::{ConicError, Result};

/// Handle to a declared variable.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct Var(pub usize);

/// Binary variable metadata used by branch and bound.
#[derive(Debug, Clone, PartialEq)]
pub struct BinaryInfo {
    /// Lower classes are branched on first.
    pub class: u8,
    /// Round to 1 when any of these is active in a relaxation.
    pub on_if: Vec<Var>,
    /// Round to 0 when any of these is active (and no `on_if` is).
    pub off_if: Vec<Var>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct VarInfo {
    pub name: String,
    pub lb: f64,
    pub ub: f64,
    pub binary: Option<BinaryInfo>,
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct Affine {
    pub terms: Vec<(Var, f64)>,
    pub constant: f64,
}

impl Affine {
    pub fn new(terms: Vec<(Var, f64)>, constant: f64) -> Self {
        Self { terms, constant }
    }

    pub fn var(v: Var) -> Self {
        Self::new(vec![(v, 1.0)], 0.0)
    }

    pub fn scaled(v: Var, c: f64) -> Self {
        Self::new(vec![(v, c)], 0.0)
    }

    pub fn constant(c: f64) -> Self {
        Self::new(Vec::new(), c)
    }

    pub fn eval(&self, x: &[f64]) -> f64 {
        self.constant + self.terms.iter().map(|&(v, c)| c * x[v.0]).sum::<f64>()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Sense {
    Eq,
    Le,
    Ge,
}

/// `Σ c·x  (sense)  rhs`
#[derive(Debug, Clone, PartialEq)]
pub struct LinearConstraint {
    pub name: String,
    pub terms: Vec<(Var, f64)>,
    pub sense: Sense,
    pub rhs: f64,
}

impl LinearConstraint {
    pub fn lhs(&self, x: &[f64]) -> f64 {
        self.terms.iter().map(|&(v, c)| c * x[v.0]).sum()
    }

    pub fn violation(&self, x: &[f64]) -> f64 {
        let r = self.lhs(x) - self.rhs;
        match self.sense {
            Sense::Eq => r.abs(),
            Sense::Le => r.max(0.0),
            Sense::Ge => (-r).max(0.0),
        }
    }
}

/// `‖xs‖₂ ≤ t`
#[derive(Debug, Clone, PartialEq)]
pub struct SocConstraint {
    pub name: String,
    pub t: Affine,
    pub xs: Vec<Affine>,
}

impl SocConstraint {
    pub fn violation(&self, x: &[f64]) -> f64 {
        let norm = self.xs.iter().map(|a| a.eval(x).powi(2)).sum::<f64>().sqrt();
        (norm - self.t.eval(x)).max(0.0)
    }
}

/// `2·u·w ≥ ‖xs‖₂²`, `u, w ≥ 0`
#[derive(Debug, Clone, PartialEq)]
pub struct RotatedConstraint {
    pub name: String,
    pub u: Affine,
    pub w: Affine,
    pub xs: Vec<Affine>,
}

impl RotatedConstraint {
    /// Violation measured on the equivalent standard cone, so it is in the
    /// units of `u + w`.
    pub fn violation(&self, x: &[f64]) -> f64 {
        let (u, w) = (self.u.eval(x), self.w.eval(x));
        let sq: f64 = self.xs.iter().map(|a| 2.0 * a.eval(x).powi(2)).sum();
        let norm = (sq + (u - w).powi(2)).sqrt();
        (norm - (u + w)).max(0.0)
    }
}

/// Minimize a linear objective over linear, second-order and rotated cone
/// constraints, with optional binary variables.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct ConicProgram {
    pub vars: Vec<VarInfo>,
    pub objective: Affine,
    pub linear: Vec<LinearConstraint>,
    pub soc: Vec<SocConstraint>,
    pub rotated: Vec<RotatedConstraint>,
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct ProgramSize {
    pub vars: usize,
    pub binaries: usize,
    pub equalities: usize,
    pub inequalities: usize,
    pub soc: usize,
    pub rotated: usize,
}

impl ConicProgram {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn add_var(&mut self, name: impl Into<String>, lb: f64, ub: f64) -> Var {
        self.vars.push(VarInfo {
            name: name.into(),
            lb,
            ub,
            binary: None,
        });
        Var(self.vars.len() - 1)
    }

    pub fn add_free(&mut self, name: impl Into<String>) -> Var {
        self.add_var(name, f64::NEG_INFINITY, f64::INFINITY)
    }

    pub fn add_binary(&mut self, name: impl Into<String>, class: u8) -> Var {
        self.vars.push(VarInfo {
            name: name.into(),
            lb: 0.0,
            ub: 1.0,
            binary: Some(BinaryInfo {
                class,
                on_if: Vec::new(),
                off_if: Vec::new(),
            }),
        });
        Var(self.vars.len() - 1)
    }

    /// Attaches rounding hints to a binary.
    pub fn hint_binary(&mut self, b: Var, on_if: &[Var], off_if: &[Var]) {
        if let Some(info) = self.vars[b.0].binary.as_mut() {
            info.on_if.extend_from_slice(on_if);
            info.off_if.extend_from_slice(off_if);
        }
    }

    pub fn fix(&mut self, v: Var, value: f64) {
        self.vars[v.0].lb = value;
        self.vars[v.0].ub = value;
    }

    pub fn add_linear(
        &mut self,
        name: impl Into<String>,
        terms: Vec<(Var, f64)>,
        sense: Sense,
        rhs: f64,
    ) {
        self.linear.push(LinearConstraint {
            name: name.into(),
            terms,
            sense,
            rhs,
        });
    }

    pub fn add_soc(&mut self, name: impl Into<String>, t: Affine, xs: Vec<Affine>) {
        self.soc.push(SocConstraint {
            name: name.into(),
            t,
            xs,
        });
    }

    pub fn add_rotated(&mut self, name: impl Into<String>, u: Affine, w: Affine, xs: Vec<Affine>) {
        self.rotated.push(RotatedConstraint {
            name: name.into(),
            u,
            w,
            xs,
        });
    }

    pub fn add_objective(&mut self, v: Var, c: f64) {
        self.objective.terms.push((v, c));
    }

    pub fn binaries(&self) -> impl Iterator<Item = Var> + '_ {
        self.vars
            .iter()
            .enumerate()
            .filter(|(_, v)| v.binary.is_some())
            .map(|(i, _)| Var(i))
    }

    pub fn size(&self) -> ProgramSize {
        ProgramSize {
            vars: self.vars.len(),
            binaries: self.binaries().count(),
            equalities: self.linear.iter().filter(|c| c.sense == Sense::Eq).count(),
            inequalities: self.linear.iter().filter(|c| c.sense != Sense::Eq).count(),
            soc: self.soc.len(),
            rotated: self.rotated.len(),
        }
    }

    pub fn var_by_name(&self) -> HashMap<&str, Var> {
        self.vars
            .iter()
            .enumerate()
            .map(|(i, v)| (v.name.as_str(), Var(i)))
            .collect()
    }

    pub fn objective_value(&self, x: &[f64]) -> f64 {
        self.objective.eval(x)
    }

    /// Checks references, bounds and coefficients.
    pub fn validate(&self) -> Result<()> {
        let n = self.vars.len();
        let check_terms = |owner: &str, terms: &[(Var, f64)]| -> Result<()> {
            for &(v, c) in terms {
                if v.0 >= n {
                    return Err(ConicError::UnknownVar {
                        owner: owner.to_string(),
                        index: v.0,
                    });
                }
                if !c.is_finite() {
                    return Err(ConicError::NonFinite(owner.to_string()));
                }
            }
            Ok(())
        };
        let check_affine = |owner: &str, a: &Affine| -> Result<()> {
            check_terms(owner, &a.terms)?;
            if !a.constant.is_finite() {
                return Err(ConicError::NonFinite(owner.to_string()));
            }
            Ok(())
        };
        for v in &self.vars {
            if v.lb > v.ub || v.lb.is_nan() || v.ub.is_nan() {
                return Err(ConicError::BadBounds {
                    name: v.name.clone(),
                    lb: v.lb,
                    ub: v.ub,
                });
            }
            if let Some(b) = &v.binary {
                check_terms(&v.name, &b.on_if.iter().map(|&x| (x, 1.0)).collect::<Vec<_>>())?;
                check_terms(&v.name, &b.off_if.iter().map(|&x| (x, 1.0)).collect::<Vec<_>>())?;
            }
        }
        check_affine("objective", &self.objective)?;
        for c in &self.linear {
            check_terms(&c.name, &c.terms)?;
            if !c.rhs.is_finite() {
                return Err(ConicError::NonFinite(c.name.clone()));
            }
        }
        for c in &self.soc {
            check_affine(&c.name, &c.t)?;
            for a in &c.xs {
                check_affine(&c.name, a)?;
            }
        }
        for c in &self.rotated {
            check_affine(&c.name, &c.u)?;
            check_affine(&c.name, &c.w)?;
            for a in &c.xs {
                check_affine(&c.name, a)?;
            }
        }
        Ok(())
    }

    /// Largest violation of any bound, row or cone at `x`, with its name.
    pub fn max_violation(&self, x: &[f64]) -> (f64, String) {
        let mut worst = (0.0, String::new());
        let mut consider = |v: f64, name: &str| {
            if v > worst.0 {
                worst = (v, name.to_string());
            }
        };
        for (i, v) in self.vars.iter().enumerate() {
            consider((v.lb - x[i]).max(x[i] - v.ub).max(0.0), &v.name);
            if v.binary.is_some() {
                consider(x[i].min(1.0 - x[i]).max(0.0), &v.name);
            }
        }
        for c in &self.linear {
            consider(c.violation(x), &c.name);
        }
        for c in &self.soc {
            consider(c.violation(x), &c.name);
        }
        for c in &self.rotated {
            consider(c.violation(x), &c.name);
        }
        worst
    }
}
