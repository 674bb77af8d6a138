use nalgebra::{Matrix2, Vector2};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::sbs::{Outcome, N_PARAMS};

/// Damped Gauss-Newton for two-parameter models. `model(p, i)` returns the
/// prediction for point i and its gradient with respect to p.
fn levenberg_marquardt<F>(model: F, y: &[f64], w: &[f64], p0: [f64; 2]) -> ([f64; 2], f64, Option<Matrix2<f64>>)
where
    F: Fn(&[f64; 2], usize) -> (f64, [f64; 2]),
{
    let rss = |p: &[f64; 2]| -> f64 {
        (0..y.len())
            .map(|i| {
                let r = y[i] - model(p, i).0;
                w[i] * r * r
            })
            .sum()
    };
    let mut p = p0;
    let mut cost = rss(&p);
    let mut lambda = 1e-3;
    for _ in 0..500 {
        let mut jtj = Matrix2::zeros();
        let mut jtr = Vector2::zeros();
        for i in 0..y.len() {
            let (f, g) = model(&p, i);
            let gv = Vector2::new(g[0], g[1]);
            jtj += w[i] * gv * gv.transpose();
            jtr += w[i] * (y[i] - f) * gv;
        }
        let mut improved = false;
        for _ in 0..30 {
            let mut a = jtj;
            for k in 0..2 {
                a[(k, k)] += lambda * jtj[(k, k)].max(1e-300);
            }
            let Some(step) = a.lu().solve(&jtr) else {
                lambda *= 10.0;
                continue;
            };
            let trial = [p[0] + step[0], p[1] + step[1]];
            let c = rss(&trial);
            if c.is_finite() && c <= cost {
                let rel = (cost - c) / cost.max(1e-300);
                p = trial;
                cost = c;
                lambda = (lambda * 0.3).max(1e-12);
                improved = rel > 1e-15 && step.norm() > 1e-15 * (p[0].abs() + p[1].abs() + 1e-300);
                break;
            }
            lambda *= 10.0;
        }
        if !improved {
            break;
        }
    }
    let mut jtj = Matrix2::zeros();
    for (i, wi) in w.iter().enumerate().take(y.len()) {
        let g = model(&p, i).1;
        let gv = Vector2::new(g[0], g[1]);
        jtj += *wi * gv * gv.transpose();
    }
    (p, cost, jtj.try_inverse())
}

/// Fitted ⟨P⟩(t) = A·exp(−t/T).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LifetimeFit {
    /// T in the time unit of the series; `None` when the decay over the
    /// window is not resolved (treat as ∞).
    pub lifetime: Option<f64>,
    pub amplitude: f64,
    /// 1/T and its standard error.
    pub rate: f64,
    pub rate_std_err: f64,
    /// Weighted residual sum of squares.
    pub residual: f64,
}

impl LifetimeFit {
    /// T, or +∞ for an unresolved decay.
    pub fn t(&self) -> f64 {
        self.lifetime.unwrap_or(f64::INFINITY)
    }

    pub fn is_resolved(&self) -> bool {
        self.lifetime.is_some()
    }
}

/// Unweighted fit of (t, value) pairs.
pub fn fit_lifetime(series: &[(f64, f64)]) -> Result<LifetimeFit> {
    let pts: Vec<(f64, f64, f64)> = series.iter().map(|&(t, v)| (t, v, 0.0)).collect();
    fit_lifetime_weighted(&pts)
}

/// Fit of (t, mean, std) triples with weights 1/std², or equal weights when
/// no std is positive.
pub fn fit_lifetime_weighted(series: &[(f64, f64, f64)]) -> Result<LifetimeFit> {
    if series.len() < 2 {
        return Err(Error::EmptyBatch);
    }
    if series.iter().any(|p| !(p.0.is_finite() && p.1.is_finite())) {
        return Err(Error::Numerical("non-finite value in lifetime series".into()));
    }
    let t: Vec<f64> = series.iter().map(|p| p.0).collect();
    let y: Vec<f64> = series.iter().map(|p| p.1).collect();
    // Points with zero spread (e.g. t = 0) get the smallest positive spread.
    let floor = series
        .iter()
        .map(|p| p.2)
        .filter(|&s| s > 0.0)
        .fold(f64::INFINITY, f64::min);
    let w: Vec<f64> = if floor.is_finite() {
        series.iter().map(|p| 1.0 / p.2.max(floor).powi(2)).collect()
    } else {
        vec![1.0; series.len()]
    };

    // Log-space initializer on the positive points.
    let pos: Vec<usize> = (0..y.len()).filter(|&i| y[i] > 0.0).collect();
    let (a0, k0) = if pos.len() >= 2 {
        let (mut sw, mut st, mut sl, mut stt, mut stl) = (0.0, 0.0, 0.0, 0.0, 0.0);
        for &i in &pos {
            let wi = w[i] * y[i] * y[i];
            let l = y[i].ln();
            sw += wi;
            st += wi * t[i];
            sl += wi * l;
            stt += wi * t[i] * t[i];
            stl += wi * t[i] * l;
        }
        let det = sw * stt - st * st;
        if det.abs() > 0.0 {
            let slope = (sw * stl - st * sl) / det;
            ((sl - slope * st) / sw, -slope)
        } else {
            (y[0].abs().max(1e-300).ln(), 0.0)
        }
    } else {
        (y[0].abs().max(1e-300).ln(), 0.0)
    };
    let p0 = [a0.exp() * if y[0] < 0.0 { -1.0 } else { 1.0 }, k0];

    let model = |p: &[f64; 2], i: usize| {
        let e = (-p[1] * t[i]).exp();
        (p[0] * e, [e, -p[0] * t[i] * e])
    };
    let (p, rss, inv) = levenberg_marquardt(model, &y, &w, p0);
    let dof = (y.len() as f64 - 2.0).max(1.0);
    let s2 = rss / dof;
    let cov = inv.map(|m| m * s2);

    let (t_lo, t_hi) = t.iter().fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), &x| {
        (lo.min(x), hi.max(x))
    });
    let (a, k) = (p[0], p[1]);
    let decay = a * ((-k * t_lo).exp() - (-k * t_hi).exp());
    let g = [
        (-k * t_lo).exp() - (-k * t_hi).exp(),
        a * (-t_lo * (-k * t_lo).exp() + t_hi * (-k * t_hi).exp()),
    ];
    let (decay_se, rate_se) = match cov {
        Some(c) => {
            let v = g[0] * g[0] * c[(0, 0)] + 2.0 * g[0] * g[1] * c[(0, 1)] + g[1] * g[1] * c[(1, 1)];
            (v.max(0.0).sqrt(), c[(1, 1)].max(0.0).sqrt())
        }
        None => (f64::INFINITY, f64::INFINITY),
    };
    let resolved = k > 0.0 && decay.abs() > 2.0 * decay_se && decay.abs() > 1e-12 * a.abs();
    Ok(LifetimeFit {
        lifetime: resolved.then(|| 1.0 / k),
        amplitude: a,
        rate: k,
        rate_std_err: rate_se,
        residual: rss,
    })
}

/// Fitted exponential saturation of one gate parameter for one outcome.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Saturation {
    /// π∞; `None` when the outcome never drives the parameter.
    pub asymptote: Option<f64>,
    /// γ per half-cycle; `None` when not identifiable (flat segments).
    pub rate: Option<f64>,
    pub residual: f64,
    pub segments: usize,
}

/// Per-parameter saturation fit for runs of g and of e outcomes.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StrategyFit {
    pub parameter: usize,
    pub g: Saturation,
    pub e: Saturation,
}

/// Splits the series at outcome switches and fits every run of identical
/// outcomes to π(t) = π(t̄)e^{−γ(t−t̄)} + π∞(1 − e^{−γ(t−t̄)}), with (π∞, γ)
/// shared by all runs of the same outcome. `params[k]` is the vector applied
/// in half-cycle k, which was chosen after `outcomes[k − 1]`; so
/// `params.len()` must be `outcomes.len() + 1` (the entry at k = 0 opens the
/// first run).
pub fn fit_strategy_saturation(params: &[[f64; N_PARAMS]], outcomes: &[Outcome]) -> Result<Vec<StrategyFit>> {
    if params.len() != outcomes.len() + 1 || outcomes.is_empty() {
        return Err(Error::InvalidParameter {
            name: "params",
            reason: format!(
                "need one more parameter vector than outcomes, got {} and {}",
                params.len(),
                outcomes.len()
            ),
        });
    }
    let runs = split_runs(outcomes);
    Ok((0..N_PARAMS)
        .map(|j| {
            let series: Vec<f64> = params.iter().map(|p| p[j]).collect();
            StrategyFit {
                parameter: j,
                g: fit_runs(&series, &runs, Outcome::G),
                e: fit_runs(&series, &runs, Outcome::E),
            }
        })
        .collect())
}

/// Saturation fit of a single scalar series; see [`fit_strategy_saturation`].
pub fn fit_saturation_series(series: &[f64], outcomes: &[Outcome]) -> Result<(Saturation, Saturation)> {
    if series.len() != outcomes.len() + 1 || outcomes.is_empty() {
        return Err(Error::InvalidParameter {
            name: "series",
            reason: "need one more value than outcomes".into(),
        });
    }
    let runs = split_runs(outcomes);
    Ok((fit_runs(series, &runs, Outcome::G), fit_runs(series, &runs, Outcome::E)))
}

/// Runs of identical outcomes as (outcome, index of the anchor entry, length).
fn split_runs(outcomes: &[Outcome]) -> Vec<(Outcome, usize, usize)> {
    let mut runs: Vec<(Outcome, usize, usize)> = Vec::new();
    for (k, &o) in outcomes.iter().enumerate() {
        match runs.last_mut() {
            Some((prev, _, len)) if *prev == o => *len += 1,
            _ => runs.push((o, k, 1)),
        }
    }
    runs
}

fn fit_runs(series: &[f64], runs: &[(Outcome, usize, usize)], which: Outcome) -> Saturation {
    // Points as (anchor value, elapsed steps, observed value).
    let mut pts: Vec<(f64, f64, f64)> = Vec::new();
    let mut segments = 0;
    for &(o, start, len) in runs {
        if o != which {
            continue;
        }
        segments += 1;
        let anchor = series[start];
        for s in 1..=len {
            pts.push((anchor, s as f64, series[start + s]));
        }
    }
    if pts.is_empty() {
        return Saturation {
            asymptote: None,
            rate: None,
            residual: 0.0,
            segments,
        };
    }
    let scale = pts
        .iter()
        .map(|p| p.0.abs().max(p.2.abs()))
        .fold(0.0, f64::max)
        .max(1e-300);
    let moved = pts.iter().any(|p| (p.2 - p.0).abs() > 1e-12 * scale);
    if !moved {
        return Saturation {
            asymptote: Some(pts[0].0),
            rate: None,
            residual: 0.0,
            segments,
        };
    }
    let y: Vec<f64> = pts.iter().map(|p| p.2).collect();
    let w = vec![1.0; y.len()];
    let last = pts.iter().rev().find(|p| p.1 >= 1.0).map_or(y[0], |p| p.2);
    let model = |p: &[f64; 2], i: usize| {
        let (a, s, _) = pts[i];
        let e = (-p[1] * s).exp();
        (a * e + p[0] * (1.0 - e), [1.0 - e, (p[0] - a) * s * e])
    };
    let mut best: Option<([f64; 2], f64)> = None;
    for g0 in [0.05, 0.2, 0.5, 1.0, 2.0] {
        let (p, rss, _) = levenberg_marquardt(model, &y, &w, [last, g0]);
        if p[1].is_finite() && best.is_none_or(|b| rss < b.1) {
            best = Some((p, rss));
        }
    }
    let (p, rss) = best.expect("at least one start");
    Saturation {
        asymptote: Some(p[0]),
        rate: (p[1] > 0.0).then_some(p[1]),
        residual: rss,
        segments,
    }
}
