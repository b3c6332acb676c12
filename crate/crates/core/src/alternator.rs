//! The alternating driver.
//!
//! A trace stores the sequences `a_k` and `b_k` with `b_k ∈ ←P_B(a_k)` and
//! `a_k ∈ →P_A(b_{k−1})`. An rl-start begins from a seed `b_{−1}`, an
//! lr-start from a given `a_0`. Block `k` is `(a_{k−1}, b_{k−1}, a_k, b_k)`,
//! i.e. `a →l→ b →r→ a⁺ →l→ b⁺`; for an rl-start block 0 uses the seed as `b`
//! and has no `a`.

use serde::{Deserialize, Serialize};

use crate::error::{check_dim, Error, Result};
use crate::legendre::{Legendre, Membership};
use crate::sets::{locate_param, left_project_with, right_project_with, ProjectOptions, SetSpec, Shape};
use crate::Point;

/// Which projection the run starts with.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "lowercase")]
pub enum Orientation {
    /// Start from a seed `b_{−1}` and project right onto `A` first.
    #[default]
    Rl,
    /// Start from `a_0 ∈ A` and project left onto `B` first.
    Lr,
}

impl Orientation {
    pub fn flipped(self) -> Self {
        match self {
            Orientation::Rl => Orientation::Lr,
            Orientation::Lr => Orientation::Rl,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum StopReason {
    DivergenceStagnation,
    StepStagnation,
    MaxIterations,
    DomainViolation,
}

impl StopReason {
    pub fn as_str(self) -> &'static str {
        match self {
            StopReason::DivergenceStagnation => "divergence-stagnation",
            StopReason::StepStagnation => "step-stagnation",
            StopReason::MaxIterations => "max-iterations",
            StopReason::DomainViolation => "domain-violation",
        }
    }
}

/// What to do when an iterate comes within the domain margin of `∂G`.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "lowercase")]
pub enum Interiority {
    /// Halt with a domain violation.
    #[default]
    Enforce,
    /// Count the event and continue while the projections stay defined.
    Report,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct StopRule {
    pub max_iters: usize,
    /// `|D_k − D_{k−1}| < div_tol·(1 + D_0)`.
    pub div_tol: f64,
    /// Consecutive iterations the divergence test must hold.
    pub div_patience: usize,
    /// `‖b_k − b_{k−1}‖ + ‖a_k − a_{k−1}‖ < step_tol`.
    pub step_tol: f64,
    /// Iterations performed before any stagnation test may fire.
    pub min_iters: usize,
}

impl Default for StopRule {
    fn default() -> Self {
        StopRule { max_iters: 100_000, div_tol: 1e-14, div_patience: 10, step_tol: 1e-12, min_iters: 0 }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct RunConfig {
    pub orientation: Orientation,
    pub stop: StopRule,
    pub interiority: Interiority,
    pub projection: ProjectOptions,
    /// Re-seed parametric projections from the grid at every step (the warm
    /// start is always one of the candidates).
    pub global_search: bool,
    /// Tolerance of the per-block decrease chain check.
    pub chain_tol: f64,
}

impl Default for RunConfig {
    fn default() -> Self {
        RunConfig {
            orientation: Orientation::Rl,
            stop: StopRule::default(),
            interiority: Interiority::Enforce,
            projection: ProjectOptions::default(),
            global_search: true,
            chain_tol: 1e-10,
        }
    }
}

/// One building block `a →l→ b →r→ a⁺ →l→ b⁺`.
#[derive(Clone, Debug, PartialEq)]
pub struct Block {
    pub a: Option<Point>,
    pub b: Point,
    pub a_plus: Point,
    pub b_plus: Point,
    /// `D(b, a)`; NaN without `a`.
    pub d_b_a: f64,
    pub d_b_aplus: f64,
    pub d_bplus_aplus: f64,
}

impl Block {
    /// Violation of `D(b⁺,a⁺) ≤ D(b,a⁺) ≤ D(b,a)`, zero when the chain holds.
    pub fn chain_excess(&self) -> f64 {
        let first = (self.d_bplus_aplus - self.d_b_aplus).max(0.0);
        let second = if self.d_b_a.is_nan() { 0.0 } else { (self.d_b_aplus - self.d_b_a).max(0.0) };
        first.max(second)
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct Trace {
    pub generator: String,
    pub orientation: Orientation,
    /// `b_{−1}` of an rl-start.
    pub seed: Option<Point>,
    pub a: Vec<Point>,
    pub b: Vec<Point>,
    /// `D(b_k, a_k)`.
    pub d_b_a: Vec<f64>,
    /// `D(b_{k−1}, a_k)`; NaN for `k = 0` of an lr-start.
    pub d_bprev_a: Vec<f64>,
    pub stop_reason: StopReason,
    pub message: Option<String>,
    /// Iterates that came within the domain margin of `∂G`.
    pub boundary_hits: usize,
    /// Largest decrease-chain excess seen during the run.
    pub max_chain_excess: f64,
    pub chain_violations: usize,
}

/// One row of the per-step table.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct StepRow {
    pub k: usize,
    pub d_bk_ak: f64,
    pub d_bkm1_ak: f64,
    pub step_b: f64,
    pub step_a: f64,
}

impl Trace {
    fn empty(generator: String, orientation: Orientation, seed: Option<Point>) -> Self {
        Trace {
            generator,
            orientation,
            seed,
            a: Vec::new(),
            b: Vec::new(),
            d_b_a: Vec::new(),
            d_bprev_a: Vec::new(),
            stop_reason: StopReason::MaxIterations,
            message: None,
            boundary_hits: 0,
            max_chain_excess: 0.0,
            chain_violations: 0,
        }
    }

    /// Number of rows (`a_k` entries).
    pub fn len(&self) -> usize {
        self.a.len()
    }

    pub fn is_empty(&self) -> bool {
        self.a.is_empty()
    }

    fn prev_b(&self, k: usize) -> Option<&Point> {
        if k == 0 {
            self.seed.as_ref()
        } else {
            self.b.get(k - 1)
        }
    }

    pub fn rows(&self) -> Vec<StepRow> {
        (0..self.a.len())
            .map(|k| StepRow {
                k,
                d_bk_ak: self.d_b_a.get(k).copied().unwrap_or(f64::NAN),
                d_bkm1_ak: self.d_bprev_a[k],
                step_b: match (self.b.get(k), self.prev_b(k)) {
                    (Some(b), Some(p)) => (b - p).norm(),
                    _ => f64::NAN,
                },
                step_a: if k == 0 { f64::NAN } else { (&self.a[k] - &self.a[k - 1]).norm() },
            })
            .collect()
    }

    /// Block `k`, defined while `b_k` exists and `b` has a predecessor.
    pub fn block(&self, k: usize) -> Option<Block> {
        let b_plus = self.b.get(k)?.clone();
        let b = self.prev_b(k)?.clone();
        let a = if k == 0 { None } else { Some(self.a[k - 1].clone()) };
        Some(Block {
            d_b_a: if k == 0 { f64::NAN } else { self.d_b_a[k - 1] },
            a,
            b,
            a_plus: self.a[k].clone(),
            b_plus,
            d_b_aplus: self.d_bprev_a[k],
            d_bplus_aplus: self.d_b_a[k],
        })
    }

    pub fn blocks(&self) -> Vec<Block> {
        (0..self.b.len()).filter_map(|k| self.block(k)).collect()
    }

    /// Blocks with all four points present.
    pub fn full_blocks(&self) -> Vec<Block> {
        self.blocks().into_iter().filter(|b| b.a.is_some()).collect()
    }

    pub fn final_pair(&self) -> Option<(Point, Point)> {
        let n = self.b.len();
        if n == 0 {
            return None;
        }
        Some((self.b[n - 1].clone(), self.a[n - 1].clone()))
    }
}

fn membership_ok(gen: &dyn Legendre, x: &Point) -> Membership {
    gen.domain().membership(x)
}

fn parametric_warm(set: &SetSpec, x: &Point, opts: &ProjectOptions) -> Option<Point> {
    if let Shape::Parametric { .. } = set.shape {
        let (g, bounds) = set.parametric_parts().ok()?;
        locate_param(&g, &bounds, x, opts).ok()
    } else {
        None
    }
}

/// One rl building block from `b`: `a⁺ = →P_A(b)`, `b⁺ = ←P_B(a⁺)`.
/// `a` is the previous right iterate, used as warm start and for `D(b, a)`.
pub fn step_rl(
    gen: &dyn Legendre,
    a_set: &SetSpec,
    b_set: &SetSpec,
    a: Option<&Point>,
    b: &Point,
) -> Result<Block> {
    let opts = ProjectOptions::default();
    let warm_a = a.and_then(|a| parametric_warm(a_set, a, &opts));
    let warm_b = parametric_warm(b_set, b, &opts);
    let ra = right_project_with(gen, a_set, b, &opts, warm_a.as_ref())?;
    let rb = left_project_with(gen, b_set, &ra.point, &opts, warm_b.as_ref())?;
    let d_b_a = match a {
        Some(a) => crate::legendre::divergence(gen, b, a)?,
        None => f64::NAN,
    };
    Ok(Block {
        a: a.cloned(),
        b: b.clone(),
        d_b_a,
        d_b_aplus: ra.divergence_value,
        d_bplus_aplus: rb.divergence_value,
        a_plus: ra.point,
        b_plus: rb.point,
    })
}

struct Driver<'a> {
    gen: &'a dyn Legendre,
    a_set: &'a SetSpec,
    b_set: &'a SetSpec,
    cfg: &'a RunConfig,
    local: ProjectOptions,
    warm_a: Option<Point>,
    warm_b: Option<Point>,
}

enum Halt {
    Domain(String),
    Fatal(Error),
}

impl From<Error> for Halt {
    fn from(e: Error) -> Self {
        match e {
            Error::Domain(m) => Halt::Domain(m),
            other => Halt::Fatal(other),
        }
    }
}

impl Driver<'_> {
    fn opts(&self, warm: &Option<Point>) -> &ProjectOptions {
        if self.cfg.global_search || warm.is_none() {
            &self.cfg.projection
        } else {
            &self.local
        }
    }

    fn check_point(&self, x: &Point, trace: &mut Trace, what: &str) -> std::result::Result<(), Halt> {
        match membership_ok(self.gen, x) {
            Membership::Interior => Ok(()),
            Membership::Outside => Err(Halt::Domain(format!("{what} left dom f: {:?}", x.as_slice()))),
            Membership::Boundary => {
                trace.boundary_hits += 1;
                match self.cfg.interiority {
                    Interiority::Enforce => {
                        Err(Halt::Domain(format!("{what} reached the boundary of G: {:?}", x.as_slice())))
                    }
                    Interiority::Report => Ok(()),
                }
            }
        }
    }

    fn right(&mut self, b: &Point) -> std::result::Result<(Point, f64), Halt> {
        let r = right_project_with(self.gen, self.a_set, b, self.opts(&self.warm_a), self.warm_a.as_ref())?;
        self.warm_a = r.param;
        Ok((r.point, r.divergence_value))
    }

    fn left(&mut self, a: &Point) -> std::result::Result<(Point, f64), Halt> {
        let r = left_project_with(self.gen, self.b_set, a, self.opts(&self.warm_b), self.warm_b.as_ref())?;
        self.warm_b = r.param;
        Ok((r.point, r.divergence_value))
    }
}

/// Alternate projections from `start` until a stop rule fires.
///
/// Domain violations end the run and are recorded in the trace; solver
/// failures and invalid inputs are returned as errors.
pub fn run(gen: &dyn Legendre, a_set: &SetSpec, b_set: &SetSpec, start: &Point, cfg: &RunConfig) -> Result<Trace> {
    check_dim(gen.dim(), start.len())?;
    a_set.validate()?;
    b_set.validate()?;
    check_dim(gen.dim(), a_set.dim()?)?;
    check_dim(gen.dim(), b_set.dim()?)?;
    let mut local = cfg.projection.clone();
    local.grid = 0;
    local.multistart = 0;
    let mut drv = Driver { gen, a_set, b_set, cfg, local, warm_a: None, warm_b: None };
    let seed = match cfg.orientation {
        Orientation::Rl => Some(start.clone()),
        Orientation::Lr => None,
    };
    let mut trace = Trace::empty(gen.name(), cfg.orientation, seed);
    match cfg.orientation {
        Orientation::Rl => {
            if !gen.domain().contains(start) {
                return Err(Error::domain("rl seed must lie in dom f"));
            }
            drv.warm_b = parametric_warm(b_set, start, &cfg.projection);
        }
        Orientation::Lr => {
            drv.warm_a = parametric_warm(a_set, start, &cfg.projection);
        }
    }
    let outcome = drive(&mut drv, &mut trace, start);
    match outcome {
        Ok(reason) => trace.stop_reason = reason,
        Err(Halt::Domain(msg)) => {
            trace.stop_reason = StopReason::DomainViolation;
            trace.message = Some(msg);
        }
        Err(Halt::Fatal(e)) => return Err(e),
    }
    Ok(trace)
}

fn drive(drv: &mut Driver<'_>, trace: &mut Trace, start: &Point) -> std::result::Result<StopReason, Halt> {
    let gen = drv.gen;
    let stop = &drv.cfg.stop;
    let chain_tol = drv.cfg.chain_tol;
    let mut prev_b: Option<Point> = None;
    let mut prev_a: Option<Point> = None;
    let mut d0 = f64::NAN;
    let mut quiet_div = 0usize;
    let mut k = 0usize;
    loop {
        if k >= stop.max_iters {
            return Ok(StopReason::MaxIterations);
        }
        // Right step.
        let (a_k, d_prev) = match (k, drv.cfg.orientation) {
            (0, Orientation::Lr) => {
                if !drv.a_set.contains(gen, start) {
                    return Err(Halt::Fatal(Error::Config("lr start must lie in A".into())));
                }
                (start.clone(), f64::NAN)
            }
            (0, Orientation::Rl) => drv.right(start)?,
            _ => drv.right(prev_b.as_ref().expect("b_{k-1} exists for k ≥ 1"))?,
        };
        drv.check_point(&a_k, trace, "right iterate")?;
        // Left step.
        let (b_k, d_k) = drv.left(&a_k)?;
        let b_membership = membership_ok(gen, &b_k);
        if b_membership == Membership::Outside {
            return Err(Halt::Domain(format!("left iterate left dom f: {:?}", b_k.as_slice())));
        }
        if b_membership == Membership::Boundary {
            trace.boundary_hits += 1;
            if drv.cfg.interiority == Interiority::Enforce {
                trace.a.push(a_k.clone());
                trace.d_bprev_a.push(d_prev);
                return Err(Halt::Domain(format!("left iterate reached the boundary of G: {:?}", b_k.as_slice())));
            }
        }

        // Decrease chain D(b_k,a_k) ≤ D(b_{k−1},a_k) ≤ D(b_{k−1},a_{k−1}).
        if k > 0 {
            let prev_d = *trace.d_b_a.last().expect("previous divergence");
            let excess = (d_k - d_prev).max(0.0).max((d_prev - prev_d).max(0.0));
            trace.max_chain_excess = trace.max_chain_excess.max(excess);
            if excess > chain_tol {
                trace.chain_violations += 1;
            }
        }

        trace.a.push(a_k.clone());
        trace.b.push(b_k.clone());
        trace.d_b_a.push(d_k);
        trace.d_bprev_a.push(d_prev);
        if k == 0 {
            d0 = d_k;
        }

        if k >= stop.min_iters.max(1) {
            let step = (&b_k - prev_b.as_ref().unwrap()).norm() + (&a_k - prev_a.as_ref().unwrap()).norm();
            if step < stop.step_tol {
                return Ok(StopReason::StepStagnation);
            }
            let dd = (d_k - trace.d_b_a[k - 1]).abs();
            if dd < stop.div_tol * (1.0 + d0) {
                quiet_div += 1;
            } else {
                quiet_div = 0;
            }
            if quiet_div >= stop.div_patience.max(1) {
                return Ok(StopReason::DivergenceStagnation);
            }
        }
        prev_a = Some(a_k);
        prev_b = Some(b_k);
        k += 1;
    }
}

/// Mirror a trace through `∇f`: the result alternates between `∇f(B)` and
/// `∇f(A)` under the conjugate generator, with rl and lr swapped.
pub fn dual_transform(gen: &dyn Legendre, trace: &Trace) -> Result<Trace> {
    let dom = gen.domain();
    let to_dual = |x: &Point| -> Result<Point> {
        if !dom.is_interior(x) {
            return Err(Error::domain(format!("trace point {:?} is not in G", x.as_slice())));
        }
        Ok(gen.grad(x))
    };
    let orientation = trace.orientation.flipped();
    let name = format!("conj({})", trace.generator);
    let mut out = Trace::empty(name, orientation, None);
    out.stop_reason = trace.stop_reason;
    out.message = trace.message.clone();
    if trace.is_empty() && trace.seed.is_none() {
        return Ok(out);
    }
    // Dual b-points are images of primal a-points and vice versa.
    let (seed, a_src, b_src): (Option<Point>, Vec<&Point>, Vec<&Point>) = match trace.orientation {
        Orientation::Rl => {
            let mut a_src: Vec<&Point> = trace.seed.iter().collect();
            a_src.extend(trace.b.iter());
            (None, a_src, trace.a.iter().collect())
        }
        Orientation::Lr => {
            let seed = trace.a.first().map(&to_dual).transpose()?;
            (seed, trace.b.iter().collect(), trace.a.iter().skip(1).collect())
        }
    };
    out.seed = seed;
    out.a = a_src.into_iter().map(&to_dual).collect::<Result<_>>()?;
    out.b = b_src.into_iter().map(&to_dual).collect::<Result<_>>()?;
    out.b.truncate(out.a.len());
    let conj_div = |x: &Point, y: &Point| gen.raw_conj_divergence(x, y).max(0.0);
    out.d_b_a = (0..out.b.len()).map(|k| conj_div(&out.b[k], &out.a[k])).collect();
    out.d_bprev_a = (0..out.a.len())
        .map(|k| out.prev_b(k).map(|p| conj_div(p, &out.a[k])).unwrap_or(f64::NAN))
        .collect();
    Ok(out)
}

#[derive(Clone, Debug, PartialEq)]
pub struct GapEstimate {
    pub r_star: f64,
    /// Spread of `D(b_k, a_k)` over the tail window.
    pub uncertainty: f64,
    pub limit_pair: Option<(Point, Point)>,
    pub feasible: bool,
    pub tail_len: usize,
}

pub const FEASIBILITY_TOL: f64 = 1e-6;
pub const LIMIT_STEP_TOL: f64 = 1e-8;
const MIN_GAP_ROWS: usize = 10;

/// Gap `r* = √(2·mean D)` over the last tenth of the trace (at least five rows).
pub fn detect_gap(trace: &Trace) -> Result<GapEstimate> {
    let d: Vec<f64> = trace.d_b_a.iter().copied().filter(|v| v.is_finite()).collect();
    if d.len() < MIN_GAP_ROWS {
        return Err(Error::TooShort { needed: MIN_GAP_ROWS, got: d.len() });
    }
    let tail_len = (d.len() / 10).max(5);
    let tail = &d[d.len() - tail_len..];
    let mean = tail.iter().sum::<f64>() / tail_len as f64;
    let spread = tail.iter().cloned().fold(f64::NEG_INFINITY, f64::max) - tail.iter().cloned().fold(f64::INFINITY, f64::min);
    let r_star = (2.0 * mean.max(0.0)).sqrt();
    let rows = trace.rows();
    let last = rows.iter().rev().find(|r| !r.d_bk_ak.is_nan());
    let limit_pair = match last {
        Some(r) if r.step_a <= LIMIT_STEP_TOL && r.step_b <= LIMIT_STEP_TOL => trace.final_pair(),
        _ => None,
    };
    Ok(GapEstimate { r_star, uncertainty: spread, limit_pair, feasible: r_star <= FEASIBILITY_TOL, tail_len })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::legendre::{euclidean, negentropy};
    use crate::sets::SetSpec;
    use approx::assert_abs_diff_eq;
    use nalgebra::DVector;

    fn p(v: &[f64]) -> Point {
        DVector::from_column_slice(v)
    }

    fn line(base: [f64; 2], dir: [f64; 2]) -> SetSpec {
        SetSpec::affine(base.to_vec(), vec![dir.to_vec()])
    }

    #[test]
    fn step_on_crossing_axes() {
        let g = euclidean(2);
        let blk = step_rl(g.as_ref(), &line([0.0, 0.0], [1.0, 0.0]), &line([0.0, 0.0], [0.0, 1.0]), None, &p(&[0.0, 1.0]))
            .unwrap();
        assert_eq!(blk.a_plus, p(&[0.0, 0.0]));
        assert_eq!(blk.b_plus, p(&[0.0, 0.0]));
    }

    #[test]
    fn step_on_parallel_lines() {
        let g = euclidean(2);
        let blk = step_rl(g.as_ref(), &line([0.0, 0.0], [1.0, 0.0]), &line([0.0, 1.0], [1.0, 0.0]), None, &p(&[0.0, 1.0]))
            .unwrap();
        assert_eq!(blk.a_plus, p(&[0.0, 0.0]));
        assert_eq!(blk.b_plus, p(&[0.0, 1.0]));
        assert_abs_diff_eq!(blk.d_bplus_aplus, 0.5);
    }

    #[test]
    fn fixed_block_in_intersection() {
        let g = euclidean(2);
        let x = p(&[0.0, 0.0]);
        let blk = step_rl(g.as_ref(), &line([0.0, 0.0], [1.0, 0.0]), &line([0.0, 0.0], [0.0, 1.0]), Some(&x), &x).unwrap();
        assert_eq!(blk.a_plus, x);
        assert_eq!(blk.b_plus, x);
        assert_eq!(blk.d_b_a + blk.d_b_aplus + blk.d_bplus_aplus, 0.0);
    }

    #[test]
    fn sixty_degree_lines_converge_by_steps() {
        let g = euclidean(2);
        let a = line([0.0, 0.0], [1.0, 0.0]);
        let b = line([0.0, 0.0], [0.5, 3f64.sqrt() / 2.0]);
        let t = run(g.as_ref(), &a, &b, &p(&[1.0, 2.0]), &RunConfig::default()).unwrap();
        assert_eq!(t.stop_reason, StopReason::StepStagnation);
        assert!(t.b.last().unwrap().norm() < 1e-11);
        assert_eq!(t.chain_violations, 0);
    }

    #[test]
    fn start_in_intersection_stops_immediately() {
        let g = euclidean(2);
        let a = line([0.0, 0.0], [1.0, 0.0]);
        let b = line([0.0, 0.0], [0.0, 1.0]);
        let t = run(g.as_ref(), &a, &b, &p(&[0.0, 0.0]), &RunConfig::default()).unwrap();
        assert_eq!(t.len(), 2);
        assert_eq!(t.stop_reason, StopReason::StepStagnation);
    }

    #[test]
    fn domain_violation_is_recorded() {
        // The only point of B sits on ∂G.
        let g = negentropy(2);
        let a = SetSpec::finite(vec![vec![0.5, 0.5]]);
        let b = SetSpec::finite(vec![vec![0.0, 1.0]]);
        let t = run(g.as_ref(), &a, &b, &p(&[0.5, 0.5]), &RunConfig::default()).unwrap();
        assert_eq!(t.stop_reason, StopReason::DomainViolation);
        assert_eq!(t.boundary_hits, 1);
        let cfg = RunConfig { interiority: Interiority::Report, ..Default::default() };
        let t = run(g.as_ref(), &a, &b, &p(&[0.5, 0.5]), &cfg).unwrap();
        assert_eq!(t.stop_reason, StopReason::StepStagnation);
    }

    #[test]
    fn gap_needs_ten_rows() {
        let g = euclidean(2);
        let a = line([0.0, 0.0], [1.0, 0.0]);
        let b = line([0.0, 0.0], [0.0, 1.0]);
        let t = run(g.as_ref(), &a, &b, &p(&[0.0, 0.0]), &RunConfig::default()).unwrap();
        assert!(matches!(detect_gap(&t), Err(Error::TooShort { .. })));
    }

    #[test]
    fn parallel_lines_gap_is_one() {
        let g = euclidean(2);
        let a = line([0.0, 0.0], [1.0, 0.0]);
        let b = line([0.0, 1.0], [1.0, 0.0]);
        let mut cfg = RunConfig::default();
        cfg.stop.min_iters = 12;
        let t = run(g.as_ref(), &a, &b, &p(&[3.0, 1.0]), &cfg).unwrap();
        let gap = detect_gap(&t).unwrap();
        assert_abs_diff_eq!(gap.r_star, 1.0, epsilon = 1e-12);
        assert!(!gap.feasible);
        assert!(gap.limit_pair.is_some());
    }

    #[test]
    fn dual_of_euclidean_trace_swaps_roles() {
        let g = euclidean(2);
        let a = line([0.0, 0.0], [1.0, 0.0]);
        let b = line([0.0, 0.0], [0.5, 3f64.sqrt() / 2.0]);
        let t = run(g.as_ref(), &a, &b, &p(&[1.0, 2.0]), &RunConfig::default()).unwrap();
        let d = dual_transform(g.as_ref(), &t).unwrap();
        assert_eq!(d.orientation, Orientation::Lr);
        assert_eq!(d.a[0], t.seed.clone().unwrap());
        assert_eq!(d.b[0], t.a[0]);
        assert_eq!(d.a[1], t.b[0]);
        // Divergences interleave: D*(b*_k, a*_k) = D(b_{k−1}, a_k).
        for k in 0..d.b.len() {
            assert_abs_diff_eq!(d.d_b_a[k], t.d_bprev_a[k], epsilon = 1e-15);
        }
        let dd = dual_transform(g.as_ref(), &d).unwrap();
        assert_eq!(dd.orientation, Orientation::Rl);
        assert_eq!(dd.seed, t.seed);
        assert_eq!(dd.a, t.a);
        assert_eq!(dd.b, t.b);
    }

    #[test]
    fn empty_trace_dualizes_to_empty() {
        let t = Trace::empty("euclidean".into(), Orientation::Lr, None);
        let d = dual_transform(euclidean(2).as_ref(), &t).unwrap();
        assert!(d.is_empty());
    }
}
