//! Branch and bound against full enumeration on small mixed-binary cone
//! programs whose continuous part has a closed form.

use duostore_conic::*;
use proptest::prelude::*;

/// min Σ c_i b_i + t  s.t.  t ≥ ‖b − a‖, Σ w_i b_i ≤ cap, Σ b_i ≥ 1.
#[derive(Debug)]
struct Instance {
    c: Vec<f64>,
    a: Vec<f64>,
    w: Vec<f64>,
    cap: f64,
}

impl Instance {
    fn program(&self) -> ConicProgram {
        let mut p = ConicProgram::new();
        let b: Vec<Var> = (0..self.c.len()).map(|i| p.add_binary(format!("b{i}"), 0)).collect();
        let t = p.add_var("t", 0.0, f64::INFINITY);
        for (&v, &c) in b.iter().zip(&self.c) {
            p.add_objective(v, c);
        }
        p.add_objective(t, 1.0);
        let xs = b.iter().zip(&self.a).map(|(&v, &a)| Affine::new(vec![(v, 1.0)], -a)).collect();
        p.add_soc("dist", Affine::var(t), xs);
        p.add_linear("cap", b.iter().copied().zip(self.w.iter().copied()).collect(), Sense::Le, self.cap);
        p.add_linear("any", b.iter().map(|&v| (v, 1.0)).collect(), Sense::Ge, 1.0);
        p
    }

    fn enumerate(&self) -> Option<f64> {
        let n = self.c.len();
        (1..1u32 << n)
            .filter_map(|mask| {
                let b: Vec<f64> = (0..n).map(|i| ((mask >> i) & 1) as f64).collect();
                let load: f64 = b.iter().zip(&self.w).map(|(x, w)| x * w).sum();
                if load > self.cap {
                    return None;
                }
                let lin: f64 = b.iter().zip(&self.c).map(|(x, c)| x * c).sum();
                let dist = b.iter().zip(&self.a).map(|(x, a)| (x - a).powi(2)).sum::<f64>().sqrt();
                Some(lin + dist)
            })
            .min_by(f64::total_cmp)
    }
}

fn exact() -> MipOptions {
    MipOptions {
        mip_gap: 1e-7,
        ..Default::default()
    }
}

fn instance() -> impl Strategy<Value = Instance> {
    (2usize..=6).prop_flat_map(|n| {
        (
            prop::collection::vec(-1.0f64..1.0, n),
            prop::collection::vec(-0.5f64..1.5, n),
            prop::collection::vec(0.5f64..3.0, n),
            0.5f64..6.0,
        )
            .prop_map(|(c, a, w, cap)| Instance { c, a, w, cap })
    })
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    #[test]
    fn branch_and_bound_finds_the_enumerated_optimum(inst in instance()) {
        let p = inst.program();
        let s = solve_mip(&p, &ClarabelBackend::default(), &exact());
        match inst.enumerate() {
            None => prop_assert_eq!(s.status, MipStatus::Infeasible),
            Some(best) => {
                prop_assert_eq!(s.status, MipStatus::Optimal);
                prop_assert!((s.objective - best).abs() <= 1e-5 * best.abs().max(1.0), "{} vs {}", s.objective, best);
                prop_assert!(s.root_objective <= s.objective + 1e-6);
                prop_assert!(s.bound <= s.objective + 1e-6);
                let (viol, row) = p.max_violation(&s.x);
                prop_assert!(viol <= 1e-6, "{} on {}", viol, row);
            }
        }
    }
}

#[test]
fn every_weight_too_heavy_is_infeasible() {
    let inst = Instance {
        c: vec![0.1, 0.2, 0.3],
        a: vec![0.5; 3],
        w: vec![2.0, 3.0, 4.0],
        cap: 1.0,
    };
    assert_eq!(inst.enumerate(), None);
    let s = solve_mip(&inst.program(), &ClarabelBackend::default(), &exact());
    assert_eq!(s.status, MipStatus::Infeasible);
}
