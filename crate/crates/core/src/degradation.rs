//! Battery ageing: rainflow cycle counting, the linear damage estimate used
//! while dispatching and the temperature-dependent calendar plus cycle fade
//! used for lifetime.

use serde::{Deserialize, Serialize};

use crate::error::{CoreError, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DegradationParams {
    pub k: [f64; 8],
    /// Boundary between the cold and hot temperature branches, K.
    pub t_split_k: f64,
    pub t_range_k: (f64, f64),
    pub idle_slope: f64,
    pub idle_intercept: f64,
    pub cycle_slope: f64,
    pub cycle_intercept: f64,
    /// Capacity fade at end of life.
    pub end_of_life: f64,
}

impl Default for DegradationParams {
    fn default() -> Self {
        Self {
            k: [
                6.81e-5, 4.02e-5, 3.01e-5, 8.98e-6, 6298.0, 1.214e10, -4665.0, 1.675e-6,
            ],
            t_split_k: 298.0,
            t_range_k: (273.0, 333.0),
            idle_slope: 1.952e-5,
            idle_intercept: 1.85e-5,
            cycle_slope: 4.9e-5,
            cycle_intercept: 1.012e-20,
            end_of_life: 0.2,
        }
    }
}

impl DegradationParams {
    pub fn validate(&self) -> Result<()> {
        if !(self.k[5] > 0.0 && self.k[7] > 0.0) {
            return Err(CoreError::Config("degradation k6 and k8 must be positive".into()));
        }
        if !(self.end_of_life > 0.0 && self.end_of_life < 1.0) {
            return Err(CoreError::Config("end_of_life fade must lie in (0, 1)".into()));
        }
        Ok(())
    }

    pub fn f_soc(&self, soc_avg: f64) -> f64 {
        self.k[0] * soc_avg * soc_avg + self.k[1] * soc_avg
    }

    pub fn f_dod(&self, dod: f64) -> f64 {
        self.k[2] * dod * dod + self.k[3] * dod
    }

    /// Temperature stress factor; the split point belongs to the cold branch.
    pub fn f_t(&self, t_k: f64) -> Result<f64> {
        let (lo, hi) = self.t_range_k;
        if !(lo..=hi).contains(&t_k) {
            return Err(CoreError::Domain(format!(
                "cycle temperature {t_k:.2} K outside [{lo}, {hi}] K"
            )));
        }
        Ok(if t_k <= self.t_split_k {
            (self.k[4] / t_k).exp() / self.k[5]
        } else {
            (self.k[6] / t_k).exp() / self.k[7]
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CycleRecord {
    pub dod: f64,
    pub t_avg: f64,
    pub half: bool,
    /// Index span of the cycle in the input series.
    pub start: usize,
    pub end: usize,
}

impl CycleRecord {
    pub fn weight(&self) -> f64 {
        if self.half {
            0.5
        } else {
            1.0
        }
    }
}

const FLAT: f64 = 1e-12;

/// Reversal points of `values[idx]` as (value, original index).
fn reversals(points: &[(f64, usize)]) -> Vec<(f64, usize)> {
    let mut out: Vec<(f64, usize)> = Vec::new();
    for &p in points {
        if let Some(&last) = out.last() {
            if (p.0 - last.0).abs() <= FLAT {
                continue;
            }
        }
        if out.len() >= 2 {
            let a = out[out.len() - 2].0;
            let b = out[out.len() - 1].0;
            if (b - a) * (p.0 - b) > 0.0 {
                // Same direction: the middle point is not a reversal.
                out.pop();
            }
        }
        out.push(p);
    }
    out
}

fn span_mean(temps: &[f64], a: usize, b: usize) -> f64 {
    let (lo, hi) = if a <= b { (a, b) } else { (b, a) };
    let s = &temps[lo..=hi];
    s.iter().sum::<f64>() / s.len() as f64
}

/// Three-point rainflow count. A series that returns to its starting value
/// is treated as one period of a repeating history and yields full cycles
/// only; otherwise the unclosed residue is reported as half cycles.
///
/// `temps` is aligned with `soc`; each cycle's temperature is the mean over
/// the samples it spans.
pub fn rainflow(soc: &[f64], temps: &[f64]) -> Result<Vec<CycleRecord>> {
    if soc.len() != temps.len() {
        return Err(CoreError::Domain(format!(
            "rainflow series lengths differ ({} vs {})",
            soc.len(),
            temps.len()
        )));
    }
    if soc.len() < 2 {
        return Ok(Vec::new());
    }
    let n = soc.len();
    let periodic = (soc[0] - soc[n - 1]).abs() <= FLAT;

    let (points, temps): (Vec<(f64, usize)>, Vec<f64>) = if periodic {
        // Start the period at the highest sample so every excursion closes.
        let period = n - 1;
        let k = (0..period)
            .max_by(|&a, &b| soc[a].total_cmp(&soc[b]))
            .unwrap_or(0);
        let pts = (0..=period).map(|m| (soc[(k + m) % period], m)).collect();
        let tmp = (0..=period).map(|m| temps[(k + m) % period]).collect();
        (pts, tmp)
    } else {
        (soc.iter().copied().zip(0..).collect(), temps.to_vec())
    };

    let rev = reversals(&points);
    let mut cycles = Vec::new();
    let mut stack: Vec<(f64, usize)> = Vec::new();
    let record = |a: (f64, usize), b: (f64, usize), half: bool| CycleRecord {
        dod: (a.0 - b.0).abs(),
        t_avg: span_mean(&temps, a.1, b.1),
        half,
        start: a.1.min(b.1),
        end: a.1.max(b.1),
    };
    for p in rev {
        stack.push(p);
        while stack.len() >= 3 {
            let l = stack.len();
            let x = (stack[l - 1].0 - stack[l - 2].0).abs();
            let y = (stack[l - 2].0 - stack[l - 3].0).abs();
            if x < y {
                break;
            }
            if l == 3 && !periodic {
                cycles.push(record(stack[0], stack[1], true));
                stack.remove(0);
            } else {
                cycles.push(record(stack[l - 3], stack[l - 2], false));
                let last = stack.pop().unwrap();
                stack.truncate(l - 3);
                stack.push(last);
            }
        }
    }
    for w in stack.windows(2) {
        cycles.push(record(w[0], w[1], true));
    }
    if periodic {
        // Map rotated indices back to the original series.
        let period = n - 1;
        let k = (0..period)
            .max_by(|&a, &b| soc[a].total_cmp(&soc[b]))
            .unwrap_or(0);
        for c in &mut cycles {
            let (s, e) = ((c.start + k) % period, (c.end + k) % period);
            c.start = s.min(e);
            c.end = s.max(e);
        }
    }
    Ok(cycles)
}

/// Linear daily damage from the average SOC and per-hour depth of
/// discharge. The cycle intercept enters once per day.
pub fn linear_daily_damage(soc_avg: f64, dods: &[f64], p: &DegradationParams) -> f64 {
    let idle = p.idle_slope * soc_avg + p.idle_intercept;
    let cyc = p.cycle_slope * dods.iter().sum::<f64>() + p.cycle_intercept;
    idle + 0.5 * cyc
}

/// Daily capacity fade from calendar and cycle ageing.
pub fn daily_degradation(soc_avg: f64, cycles: &[CycleRecord], p: &DegradationParams) -> Result<f64> {
    let mut xi = p.f_soc(soc_avg);
    for c in cycles {
        xi += c.weight() * p.f_dod(c.dod) * p.f_t(c.t_avg)?;
    }
    Ok(xi)
}

/// Time-averaged SOC over one day; the closing sample duplicates the first
/// for periodic trajectories and is left out.
pub fn soc_average(traj: &[f64]) -> f64 {
    let body = if traj.len() > 1 { &traj[..traj.len() - 1] } else { traj };
    if body.is_empty() {
        return 0.0;
    }
    body.iter().sum::<f64>() / body.len() as f64
}

/// Annual damage from (days, daily fade) pairs.
pub fn annual_damage(days_and_fade: &[(f64, f64)]) -> f64 {
    days_and_fade.iter().map(|(d, xi)| d * xi).sum()
}

/// Years until the end-of-life fade is reached. Zero damage is capped at
/// the project horizon.
pub fn lifetime_years(annual_damage: f64, p: &DegradationParams, horizon_years: f64) -> f64 {
    if annual_damage <= 0.0 || !annual_damage.is_finite() {
        return horizon_years;
    }
    p.end_of_life / annual_damage
}
