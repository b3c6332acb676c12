//! Convergence certificates computed from traces: projection angles,
//! three-point constants, rate fits, transversality and angle-condition probes.

use serde::{Deserialize, Serialize};

use crate::alternator::{Block, Trace};
use crate::error::{Error, Result};
use crate::legendre::Legendre;
use crate::Point;

/// Vectors shorter than this have no direction.
pub const DEGENERATE_NORM: f64 = 1e-14;
pub const TRANSVERSALITY_THRESHOLD: f64 = 1e-3;
/// Divergences below this (relative) count as exact feasibility.
pub const EXACT_FEASIBILITY: f64 = 1e-30;
pub const ERROR_FLOOR: f64 = 1e-13;
pub const MIN_FIT_POINTS: usize = 20;
pub const ELL_MAX_ERROR: f64 = 1e-10;

fn angle_between(u: &Point, v: &Point) -> Option<f64> {
    let (nu, nv) = (u.norm(), v.norm());
    if nu < DEGENERATE_NORM || nv < DEGENERATE_NORM {
        return None;
    }
    Some((u.dot(v) / (nu * nv)).clamp(-1.0, 1.0).acos())
}

/// `∠(b − a⁺, b⁺ − a⁺)`.
pub fn angle_rl(block: &Block) -> Option<f64> {
    angle_between(&(&block.b - &block.a_plus), &(&block.b_plus - &block.a_plus))
}

/// `∠(∇f(a) − ∇f(b), ∇f(a⁺) − ∇f(b))`; undefined without `a`.
pub fn angle_lr(gen: &dyn Legendre, block: &Block) -> Result<Option<f64>> {
    let Some(a) = &block.a else { return Ok(None) };
    let gb = crate::legendre::gradient(gen, &block.b)?;
    let ga = crate::legendre::gradient(gen, a)?;
    let gap = crate::legendre::gradient(gen, &block.a_plus)?;
    Ok(angle_between(&(ga - &gb), &(gap - &gb)))
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Side {
    Rl,
    Lr,
}

/// Largest `ℓ` in the three-point inequality of the block.
///
/// rl: `D(b,a⁺) ≥ D(b⁺,a⁺) + ℓ D(b,b⁺)`; lr: `D(b,a) ≥ D(b,a⁺) + ℓ D(a⁺,a)`.
/// `+∞` when the divergence on the right vanishes, NaN when rounding could move
/// the estimate by more than [`ELL_MAX_ERROR`].
pub fn three_point_ell(gen: &dyn Legendre, block: &Block, side: Side) -> Result<f64> {
    let (gain, denom) = match side {
        Side::Rl => {
            let denom = crate::legendre::divergence(gen, &block.b, &block.b_plus)?;
            (block.d_b_aplus - block.d_bplus_aplus, denom)
        }
        Side::Lr => {
            let a = block.a.as_ref().ok_or_else(|| Error::domain("lr three-point constant needs the point a"))?;
            let denom = crate::legendre::divergence(gen, &block.a_plus, a)?;
            (block.d_b_a - block.d_b_aplus, denom)
        }
    };
    if !gain.is_finite() {
        return Err(Error::domain("block divergences must be finite"));
    }
    if denom == 0.0 {
        return Ok(f64::INFINITY);
    }
    let ell = gain / denom;
    // First-order effect of rounding the coordinates (relative `ε`) and the
    // divergence values on the estimate.
    let (scale, near, far) = match side {
        Side::Rl => (
            block.d_b_aplus.abs() + block.d_bplus_aplus.abs(),
            [&block.b, &block.b_plus],
            (&block.b - &block.a_plus).norm() + (&block.b_plus - &block.a_plus).norm(),
        ),
        Side::Lr => {
            let a = block.a.as_ref().expect("checked above");
            (
                block.d_b_a.abs() + block.d_b_aplus.abs(),
                [&block.a_plus, a],
                (&block.b - a).norm() + (&block.b - &block.a_plus).norm(),
            )
        }
    };
    let spread = (near[0] - near[1]).norm();
    let magnitude = 1.0 + near[0].norm() + near[1].norm();
    let error = 4.0 * f64::EPSILON * (scale / denom + magnitude * (far + ell.abs() * spread) / (spread * spread));
    Ok(if error <= ELL_MAX_ERROR { ell } else { f64::NAN })
}

/// Diagnostic columns of one trace row, NaN where undefined.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct RowDiagnostics {
    pub angle_rl: f64,
    pub angle_lr: f64,
    pub ell_rl: f64,
}

/// Angles and `ℓ_rl` for every row of the trace (row `k` ↔ block `k`).
/// Row 0 of an rl trace is left undefined: its `b` is the seed, not a point of `B`.
pub fn annotate(gen: &dyn Legendre, trace: &Trace) -> Vec<RowDiagnostics> {
    (0..trace.len())
        .map(|k| match trace.block(k).filter(|blk| blk.a.is_some()) {
            Some(blk) => RowDiagnostics {
                angle_rl: angle_rl(&blk).unwrap_or(f64::NAN),
                angle_lr: angle_lr(gen, &blk).ok().flatten().unwrap_or(f64::NAN),
                ell_rl: three_point_ell(gen, &blk, Side::Rl).unwrap_or(f64::NAN),
            },
            None => RowDiagnostics { angle_rl: f64::NAN, angle_lr: f64::NAN, ell_rl: f64::NAN },
        })
        .collect()
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum RateKind {
    FiniteStep,
    RLinear,
    Sublinear,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RateEstimate {
    pub kind: RateKind,
    /// Contraction factor of an R-linear rate.
    pub q: Option<f64>,
    /// Exponent of an `O(k^{−ρ})` rate.
    pub rho: Option<f64>,
    /// Łojasiewicz exponent `θ = (ρ+1)/(2ρ+1)` matching `ρ`.
    pub theta: Option<f64>,
    /// Half-open index range `[start, end)` of the fit.
    pub fit_window: (usize, usize),
    /// `1 − R²` of the chosen fit in log space.
    pub residual: f64,
}

/// Least squares line through `(x, y)`: slope, intercept, `1 − R²`.
fn least_squares(x: &[f64], y: &[f64]) -> (f64, f64, f64) {
    let n = x.len() as f64;
    let mx = x.iter().sum::<f64>() / n;
    let my = y.iter().sum::<f64>() / n;
    let sxx: f64 = x.iter().map(|v| (v - mx).powi(2)).sum();
    let sxy: f64 = x.iter().zip(y).map(|(a, b)| (a - mx) * (b - my)).sum();
    let syy: f64 = y.iter().map(|v| (v - my).powi(2)).sum();
    let slope = if sxx > 0.0 { sxy / sxx } else { 0.0 };
    let intercept = my - slope * mx;
    let sse: f64 = x.iter().zip(y).map(|(a, b)| (b - intercept - slope * a).powi(2)).sum();
    let residual = if syy > 0.0 { (sse / syy).min(1.0) } else { 0.0 };
    (slope, intercept, residual)
}

/// Classify the decay of an error sequence as finite-step, R-linear or
/// sublinear by comparing log-linear and log-log least-squares fits over the
/// tail (last half of the entries above the floor, at least twenty).
pub fn fit_rate(errors: &[f64]) -> Result<RateEstimate> {
    if errors.len() < MIN_FIT_POINTS {
        return Err(Error::TooShort { needed: MIN_FIT_POINTS, got: errors.len() });
    }
    if errors.iter().any(|e| !(e.is_finite() && *e >= 0.0)) {
        return Err(Error::domain("errors must be finite and nonnegative"));
    }
    let usable = errors.iter().position(|&e| e < ERROR_FLOOR).unwrap_or(errors.len());
    if usable < 3 {
        return Ok(RateEstimate {
            kind: RateKind::FiniteStep,
            q: None,
            rho: None,
            theta: None,
            fit_window: (0, usable),
            residual: 0.0,
        });
    }
    let len = (usable / 2).max(MIN_FIT_POINTS.min(usable));
    let start = usable - len;
    let ks: Vec<f64> = (start..usable).map(|k| k as f64).collect();
    let logk: Vec<f64> = (start..usable).map(|k| ((k + 1) as f64).ln()).collect();
    let loge: Vec<f64> = errors[start..usable].iter().map(|e| e.ln()).collect();
    let (s_lin, _, res_lin) = least_squares(&ks, &loge);
    let (s_pow, _, res_pow) = least_squares(&logk, &loge);
    let q = s_lin.exp();
    let rho = -s_pow;
    let linear_ok = q < 1.0;
    let power_ok = rho > 0.0;
    let pick_linear = match (linear_ok, power_ok) {
        (true, true) => res_lin <= 1.05 * res_pow,
        (true, false) => true,
        (false, true) => false,
        (false, false) => return Err(Error::domain("error sequence does not decay over the fit window")),
    };
    Ok(if pick_linear {
        RateEstimate {
            kind: RateKind::RLinear,
            q: Some(q),
            rho: None,
            theta: None,
            fit_window: (start, usable),
            residual: res_lin,
        }
    } else {
        RateEstimate {
            kind: RateKind::Sublinear,
            q: None,
            rho: Some(rho),
            theta: Some((rho + 1.0) / (2.0 * rho + 1.0)),
            fit_window: (start, usable),
            residual: res_pow,
        }
    })
}

/// `‖b_k − b_N‖` against the final left iterate.
pub fn errors_to_final(trace: &Trace) -> Vec<f64> {
    match trace.b.last() {
        Some(last) => trace.b.iter().map(|b| (b - last).norm()).collect(),
        None => Vec::new(),
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SigmaFamily {
    /// Zero gap: `σ(s) = φ′(s)^{−2} s^{−1}`.
    PhiPrimeSqInvTimesSInv,
    /// Positive gap: `σ(s) = φ′(s)^{−2}`.
    PhiPrimeSqInv,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AngleConditionProbe {
    pub sigma_family: SigmaFamily,
    pub theta_grid: Vec<f64>,
    /// `min over tail blocks of (1 − cos α)/σ(s)` for each θ.
    pub gamma_per_theta: Vec<f64>,
    pub best_theta: f64,
    pub gamma_lower: f64,
    /// Tail blocks whose term vanishes at the best θ.
    pub violations: usize,
    pub blocks_used: usize,
}

pub fn default_theta_grid() -> Vec<f64> {
    (0..10).map(|i| 0.5 + 0.05 * i as f64).collect()
}

/// Empirical lower bound for the rl-angle condition with `φ′(s) = s^{−θ}`,
/// where `s = D(b⁺,a⁺) − ½r*²`. A necessary-condition witness, not a proof.
pub fn angle_condition_probe(trace: &Trace, r_star: f64, theta_grid: &[f64]) -> Result<AngleConditionProbe> {
    if theta_grid.is_empty() || theta_grid.iter().any(|t| !(0.5..1.0).contains(t)) {
        return Err(Error::Config("θ grid must be nonempty within [0.5, 1)".into()));
    }
    let feasible = r_star <= crate::alternator::FEASIBILITY_TOL;
    let half_sq = if feasible { 0.0 } else { 0.5 * r_star * r_star };
    let terms: Vec<(f64, f64)> = trace
        .full_blocks()
        .iter()
        .filter_map(|blk| {
            let alpha = angle_rl(blk)?;
            let s = blk.d_bplus_aplus - half_sq;
            (s > 0.0).then_some((s, 1.0 - alpha.cos()))
        })
        .collect();
    let tail = &terms[terms.len() / 2..];
    if tail.len() < 5 {
        return Err(Error::TooShort { needed: 10, got: terms.len() });
    }
    let family = if feasible { SigmaFamily::PhiPrimeSqInvTimesSInv } else { SigmaFamily::PhiPrimeSqInv };
    let term = |theta: f64, s: f64, c: f64| {
        let phi_sq = s.powf(-2.0 * theta);
        match family {
            SigmaFamily::PhiPrimeSqInvTimesSInv => phi_sq * s * c,
            SigmaFamily::PhiPrimeSqInv => phi_sq * c,
        }
    };
    let gammas: Vec<f64> = theta_grid
        .iter()
        .map(|&t| tail.iter().map(|&(s, c)| term(t, s, c)).fold(f64::INFINITY, f64::min))
        .collect();
    let (best_idx, _) = gammas
        .iter()
        .enumerate()
        .fold((0, f64::NEG_INFINITY), |acc, (i, &g)| if g > acc.1 { (i, g) } else { acc });
    let best_theta = theta_grid[best_idx];
    let violations = tail.iter().filter(|&&(s, c)| term(best_theta, s, c) <= 1e-300).count();
    Ok(AngleConditionProbe {
        sigma_family: family,
        theta_grid: theta_grid.to_vec(),
        gamma_per_theta: gammas.clone(),
        best_theta,
        gamma_lower: gammas[best_idx].max(0.0),
        violations,
        blocks_used: tail.len(),
    })
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Transversality {
    Transversal,
    Tangential,
    Undetermined,
}

/// Classify the intersection seen by a feasible trace from its tail rl-angles.
pub fn classify_transversality(trace: &Trace) -> Transversality {
    let scale = 1.0 + trace.d_b_a.first().copied().unwrap_or(0.0);
    if trace.d_b_a.iter().any(|&d| d <= EXACT_FEASIBILITY * scale) {
        return Transversality::Transversal;
    }
    let angles: Vec<(usize, f64)> =
        (0..trace.len()).filter_map(|k| trace.block(k).filter(|b| b.a.is_some()).and_then(|b| angle_rl(&b)).map(|a| (k, a))).collect();
    let tail = &angles[angles.len() / 2..];
    if tail.len() < 10 {
        return Transversality::Undetermined;
    }
    let min = tail.iter().map(|&(_, a)| a).fold(f64::INFINITY, f64::min);
    if min < TRANSVERSALITY_THRESHOLD {
        return Transversality::Tangential;
    }
    let positive: Vec<(f64, f64)> =
        tail.iter().filter(|&&(_, a)| a > 0.0).map(|&(k, a)| (((k + 1) as f64).ln(), a.ln())).collect();
    if positive.len() >= 10 {
        let (x, y): (Vec<f64>, Vec<f64>) = positive.into_iter().unzip();
        let (slope, _, _) = least_squares(&x, &y);
        let ratio = tail.last().unwrap().1 / tail[0].1;
        if slope < -0.1 && ratio < 0.75 {
            return Transversality::Tangential;
        }
    }
    Transversality::Transversal
}
