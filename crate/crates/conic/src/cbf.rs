//! Writer for the Conic Benchmark Format (CBF, version 3), so a built
//! program can be handed to an external solver.

use std::fmt::Write as _;
use std::io::Write;

use crate::program::{Affine, ConicProgram, Sense, Var};

struct Block {
    cone: &'static str,
    rows: Vec<(Vec<(Var, f64)>, f64)>,
}

fn affine_row(a: &Affine) -> (Vec<(Var, f64)>, f64) {
    (a.terms.clone(), a.constant)
}

/// Renders `p` as CBF text. Variable bounds become linear cone rows.
pub fn to_cbf(p: &ConicProgram) -> String {
    let mut blocks: Vec<Block> = Vec::new();
    for c in &p.linear {
        let cone = match c.sense {
            Sense::Eq => "L=",
            Sense::Le => "L-",
            Sense::Ge => "L+",
        };
        blocks.push(Block {
            cone,
            rows: vec![(c.terms.clone(), -c.rhs)],
        });
    }
    for (i, v) in p.vars.iter().enumerate() {
        if v.lb == v.ub {
            blocks.push(Block {
                cone: "L=",
                rows: vec![(vec![(Var(i), 1.0)], -v.lb)],
            });
            continue;
        }
        if v.lb.is_finite() {
            blocks.push(Block {
                cone: "L+",
                rows: vec![(vec![(Var(i), 1.0)], -v.lb)],
            });
        }
        if v.ub.is_finite() {
            blocks.push(Block {
                cone: "L-",
                rows: vec![(vec![(Var(i), 1.0)], -v.ub)],
            });
        }
    }
    for c in &p.soc {
        let mut rows = vec![affine_row(&c.t)];
        rows.extend(c.xs.iter().map(affine_row));
        blocks.push(Block { cone: "Q", rows });
    }
    for c in &p.rotated {
        let mut rows = vec![affine_row(&c.u), affine_row(&c.w)];
        rows.extend(c.xs.iter().map(affine_row));
        blocks.push(Block { cone: "QR", rows });
    }

    let n_rows: usize = blocks.iter().map(|b| b.rows.len()).sum();
    let mut out = String::new();
    let _ = writeln!(out, "VER\n3\n\nOBJSENSE\nMIN\n");
    let _ = writeln!(out, "VAR\n{} 1\nF {}\n", p.vars.len(), p.vars.len());
    let ints: Vec<usize> = p.binaries().map(|v| v.0).collect();
    if !ints.is_empty() {
        let _ = writeln!(out, "INT\n{}", ints.len());
        for i in &ints {
            let _ = writeln!(out, "{i}");
        }
        out.push('\n');
    }
    let _ = writeln!(out, "CON\n{} {}", n_rows, blocks.len());
    for b in &blocks {
        let _ = writeln!(out, "{} {}", b.cone, b.rows.len());
    }
    out.push('\n');

    let obj: Vec<&(Var, f64)> = p.objective.terms.iter().filter(|t| t.1 != 0.0).collect();
    let _ = writeln!(out, "OBJACOORD\n{}", obj.len());
    for (v, c) in obj {
        let _ = writeln!(out, "{} {:e}", v.0, c);
    }
    out.push('\n');
    if p.objective.constant != 0.0 {
        let _ = writeln!(out, "OBJBCOORD\n{:e}\n", p.objective.constant);
    }

    let mut a = String::new();
    let mut b = String::new();
    let (mut na, mut nb) = (0, 0);
    let mut r = 0;
    for blk in &blocks {
        for (terms, k) in &blk.rows {
            for (v, c) in terms.iter().filter(|t| t.1 != 0.0) {
                let _ = writeln!(a, "{} {} {:e}", r, v.0, c);
                na += 1;
            }
            if *k != 0.0 {
                let _ = writeln!(b, "{} {:e}", r, k);
                nb += 1;
            }
            r += 1;
        }
    }
    let _ = writeln!(out, "ACOORD\n{na}\n{a}");
    let _ = writeln!(out, "BCOORD\n{nb}\n{b}");
    out
}

pub fn write_cbf(p: &ConicProgram, w: &mut impl Write) -> std::io::Result<()> {
    w.write_all(to_cbf(p).as_bytes())
}
