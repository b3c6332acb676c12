//! em-algorithm instances: discrete distributions with a closed-form e-step,
//! steep exponential families through the dual route, and the dSPECT Prony
//! toy problem.
//!
//! Each instance is an alternating run. The e-step is the projection onto the
//! data set and the m-step the projection onto the model, both in KL geometry.

use std::fmt;

use nalgebra::DVector;
use serde::{Deserialize, Serialize};

use crate::alternator::{run, Orientation, RunConfig, Trace};
use crate::error::{check_dim, Error, Result};
use crate::legendre::{self, by_name, negentropy, Generator, GeneratorParams};
use crate::sets::param::ParametricMap;
use crate::sets::{local_right_project, rescale_groups, right_project_with, ProjectOptions, ProjectionResult, SetSpec, Shape};
use crate::Point;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum StepRole {
    Start,
    EStep,
    MStep,
}

impl StepRole {
    pub fn as_str(self) -> &'static str {
        match self {
            StepRole::Start => "start",
            StepRole::EStep => "e-step",
            StepRole::MStep => "m-step",
        }
    }
}

impl fmt::Display for StepRole {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

/// An alternating trace labelled with the role of each projection.
#[derive(Clone, Debug)]
pub struct EmTrace {
    pub trace: Trace,
    /// Role of the projection producing the `a` iterates.
    pub a_role: StepRole,
    /// Role of the projection producing the `b` iterates.
    pub b_role: StepRole,
    /// Change of the e-step output over the last iteration.
    pub fixed_point_residual: f64,
}

impl EmTrace {
    fn new(trace: Trace, a_role: StepRole, b_role: StepRole) -> Self {
        let e_side = if a_role == StepRole::EStep { &trace.a } else { &trace.b };
        let n = e_side.len();
        let fixed_point_residual = if n >= 2 { (&e_side[n - 1] - &e_side[n - 2]).norm() } else { 0.0 };
        EmTrace { trace, a_role, b_role, fixed_point_residual }
    }

    /// `step_role` column value of row `k`: the roles producing `a_k` and `b_k`.
    pub fn row_role(&self, k: usize) -> String {
        let first = if k == 0 && self.trace.orientation == Orientation::Lr { StepRole::Start } else { self.a_role };
        format!("{first}+{}", self.b_role)
    }

    /// The m-step outputs, in iteration order.
    pub fn model_points(&self) -> &[Point] {
        if self.a_role == StepRole::MStep {
            &self.trace.a
        } else {
            &self.trace.b
        }
    }

    /// The e-step outputs, in iteration order.
    pub fn data_points(&self) -> &[Point] {
        if self.a_role == StepRole::EStep {
            &self.trace.a
        } else {
            &self.trace.b
        }
    }
}

fn em_config(cfg: &RunConfig) -> RunConfig {
    let mut cfg = cfg.clone();
    cfg.orientation = Orientation::Lr;
    cfg
}

/// Discrete em: hidden distributions on `I`, observed marginal `p̂` on `J`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DiscreteEmProblem {
    /// `T : I → J` as `t_map[i] = j`.
    pub t_map: Vec<usize>,
    pub p_hat: Vec<f64>,
    /// Parametric model inside the open simplex.
    pub model: SetSpec,
}

impl DiscreteEmProblem {
    pub fn new(t_map: Vec<usize>, p_hat: Vec<f64>, model: SetSpec) -> Result<Self> {
        let problem = DiscreteEmProblem { t_map, p_hat, model };
        problem.validate()?;
        Ok(problem)
    }

    pub fn validate(&self) -> Result<()> {
        self.data_set().validate()?;
        if self.p_hat.iter().any(|&p| !(p > 0.0)) {
            return Err(Error::InvalidModel("observed probabilities must be positive".into()));
        }
        if !matches!(self.model.shape, Shape::Parametric { .. }) {
            return Err(Error::InvalidModel("the model must be a parametric set".into()));
        }
        self.model.validate()?;
        check_dim(self.t_map.len(), self.model.dim()?)
    }

    pub fn dim(&self) -> usize {
        self.t_map.len()
    }

    pub fn data_set(&self) -> SetSpec {
        SetSpec::data_set(self.t_map.clone(), self.p_hat.clone())
    }

    pub fn generator(&self) -> Generator {
        negentropy(self.dim())
    }
}

/// `pᵢ = p̂_{T(i)} qᵢ / Σ_{T(i′)=T(i)} q_{i′}`.
pub fn e_step_discrete(q: &Point, problem: &DiscreteEmProblem) -> Result<Point> {
    check_dim(problem.dim(), q.len())?;
    if let Some(i) = q.iter().position(|&v| !(v > 0.0)) {
        return Err(Error::domain(format!("q must be strictly positive, q[{i}] = {}", q[i])));
    }
    rescale_groups(&problem.t_map, &problem.p_hat, q)
}

/// Right KL projection of `p` onto the model, warm-started from the model
/// parameter `warm` (global search when absent).
pub fn m_step_discrete(p: &Point, problem: &DiscreteEmProblem, warm: Option<&Point>) -> Result<ProjectionResult> {
    check_dim(problem.dim(), p.len())?;
    if p.iter().any(|&v| !(v > 0.0)) {
        return Err(Error::domain("p must be strictly positive"));
    }
    let gen = problem.generator();
    let opts = ProjectOptions::default();
    match warm {
        Some(u) => local_right_project(gen.as_ref(), &problem.model, p, u, &opts),
        None => right_project_with(gen.as_ref(), &problem.model, p, &opts, None),
    }
}

/// Alternate e- and m-steps from the model point `start`.
pub fn run_em_discrete(problem: &DiscreteEmProblem, start: &Point, cfg: &RunConfig) -> Result<EmTrace> {
    problem.validate()?;
    let gen = problem.generator();
    let trace = run(gen.as_ref(), &problem.model, &problem.data_set(), start, &em_config(cfg))?;
    Ok(EmTrace::new(trace, StepRole::MStep, StepRole::EStep))
}

/// Exponential family with natural parameter `θ`, log-normalizer `f` and an
/// observed block of the sufficient statistic pinned to `ŷ`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ExpFamilySpec {
    pub generator: String,
    #[serde(default)]
    pub generator_params: GeneratorParams,
    pub dim: usize,
    /// Coordinates of the observed statistic `t₁`.
    pub observed: Vec<usize>,
    /// Observed sample in expectation coordinates.
    pub y_hat: Vec<f64>,
    /// Model over natural parameters: a parametric set with a finite box.
    pub model: SetSpec,
}

impl ExpFamilySpec {
    pub fn generator(&self) -> Result<Generator> {
        by_name(&self.generator, self.dim, &self.generator_params)
    }

    /// `{θ′ : ∇f(θ′)ᵢ = ŷᵢ for observed i}`.
    pub fn data_set(&self) -> SetSpec {
        SetSpec::dual_affine(self.dim, self.observed.clone(), self.y_hat.clone())
    }

    pub fn validate(&self) -> Result<()> {
        let gen = self.generator()?;
        self.data_set().validate()?;
        self.model.validate()?;
        check_dim(self.dim, self.model.dim()?)?;
        let (_, bounds) = self.model.parametric_parts().map_err(|_| Error::InvalidModel("the model must be a parametric set".into()))?;
        if !bounds.is_finite() {
            return Err(Error::InvalidModel("the model box must be bounded".into()));
        }
        let mut probe = gen.grad(&DVector::zeros(self.dim));
        for (&i, &y) in self.observed.iter().zip(&self.y_hat) {
            probe[i] = y;
        }
        if !gen.conj_domain().is_interior(&probe) {
            return Err(Error::InvalidModel("ŷ lies outside the expectation domain".into()));
        }
        Ok(())
    }
}

/// Independent closed-form `K(p_{θ′} ‖ p_θ)` for the shipped families.
pub fn distributional_kl(spec: &ExpFamilySpec, theta_prime: &Point, theta: &Point) -> Option<f64> {
    match spec.generator.as_str() {
        "poisson" => Some(
            theta_prime
                .iter()
                .zip(theta.iter())
                .map(|(&tp, &t)| {
                    let (lp, l) = (tp.exp(), t.exp());
                    lp * (tp - t) - lp + l
                })
                .sum(),
        ),
        "gaussian" => {
            let s2 = spec.generator_params.sigma.unwrap_or(1.0).powi(2);
            // means μ = σ²θ of N(μ, σ² I)
            let d2: f64 = theta_prime.iter().zip(theta.iter()).map(|(&a, &b)| (s2 * a - s2 * b).powi(2)).sum();
            Some(d2 / (2.0 * s2))
        }
        _ => None,
    }
}

/// `K(p_{θ′} ‖ p_θ) = D_f(θ, θ′)`, cross-checked against the distributional KL
/// where one is available.
pub fn kl_expfam(spec: &ExpFamilySpec, theta_prime: &Point, theta: &Point) -> Result<f64> {
    let gen = spec.generator()?;
    let d = legendre::divergence(gen.as_ref(), theta, theta_prime)?;
    if let Some(kl) = distributional_kl(spec, theta_prime, theta) {
        if (kl - d).abs() > 1e-10 * (1.0 + kl.abs()) {
            return Err(Error::InvalidModel(format!("Bregman divergence {d} disagrees with KL {kl}")));
        }
    }
    Ok(d)
}

/// Algorithm 1: m-step = left projection onto the model, e-step = right
/// projection onto the data set by the dual route.
pub fn run_em_expfam(spec: &ExpFamilySpec, start_theta_prime: &Point, cfg: &RunConfig) -> Result<EmTrace> {
    spec.validate()?;
    let gen = spec.generator()?;
    let trace = run(gen.as_ref(), &spec.data_set(), &spec.model, start_theta_prime, &em_config(cfg))?;
    Ok(EmTrace::new(trace, StepRole::EStep, StepRole::MStep))
}

pub const DSPECT_MAX_VOXELS: usize = 9;
pub const DSPECT_MAX_BINS: usize = 4;
pub const DSPECT_MAX_FRAMES: usize = 8;

/// dSPECT toy: voxel activities follow the Prony recursion, bin `j` in frame
/// `k` records `y_{jk} = Σᵢ c_{ijk} x_{ik}`. Hidden counts are
/// `z_{ijk} = c_{ijk} x_{ik}` and the data set is `{z ≥ 0 : Σᵢ z_{ijk} = y_{jk}}`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DspectProblem {
    pub voxels: usize,
    pub bins: usize,
    pub frames: usize,
    /// `c_{ijk}` at `(i·m + j)·K + k`.
    pub coeffs: Vec<f64>,
    /// `y_{jk}` at `j·K + k`.
    pub counts: Vec<f64>,
    /// Hidden indices kept after eliminating zero counts and zero coefficients.
    pub keep: Vec<usize>,
    pub data_set: SetSpec,
    pub model: SetSpec,
}

impl DspectProblem {
    /// Build from observed counts with the Prony parameter box `[lo, hi]`.
    pub fn from_counts(
        voxels: usize,
        bins: usize,
        frames: usize,
        coeffs: Vec<f64>,
        counts: Vec<f64>,
        lo: Vec<f64>,
        hi: Vec<f64>,
    ) -> Result<Self> {
        if voxels == 0 || voxels > DSPECT_MAX_VOXELS || bins == 0 || bins > DSPECT_MAX_BINS || frames < 2 || frames > DSPECT_MAX_FRAMES {
            return Err(Error::InvalidModel(format!(
                "dSPECT size must satisfy 1 ≤ n ≤ {DSPECT_MAX_VOXELS}, 1 ≤ m ≤ {DSPECT_MAX_BINS}, 2 ≤ K ≤ {DSPECT_MAX_FRAMES}"
            )));
        }
        check_dim(voxels * bins * frames, coeffs.len())?;
        check_dim(bins * frames, counts.len())?;
        if coeffs.iter().chain(&counts).any(|&v| !(v.is_finite() && v >= 0.0)) {
            return Err(Error::InvalidModel("coefficients and counts must be finite and nonnegative".into()));
        }
        let mut keep = Vec::new();
        let mut t_map = Vec::new();
        let mut p_hat = Vec::new();
        for j in 0..bins {
            for k in 0..frames {
                let y = counts[j * frames + k];
                if y == 0.0 {
                    continue;
                }
                let members: Vec<usize> =
                    (0..voxels).map(|i| (i * bins + j) * frames + k).filter(|&f| coeffs[f] > 0.0).collect();
                if members.is_empty() {
                    return Err(Error::InvalidModel(format!("bin {j} frame {k} has counts but no sensitive voxel")));
                }
                for f in members {
                    keep.push(f);
                    t_map.push(p_hat.len());
                }
                p_hat.push(y);
            }
        }
        if keep.is_empty() {
            return Err(Error::InvalidModel("all counts are zero".into()));
        }
        // Hidden coordinates follow the kept order, grouped by (j, k).
        let mut params = vec![voxels as f64, bins as f64, frames as f64];
        params.extend(&coeffs);
        params.push(keep.len() as f64);
        params.extend(keep.iter().map(|&f| f as f64));
        let model = SetSpec::parametric("prony", params, lo, hi);
        model.validate()?;
        let data_set = SetSpec::new(Shape::DataSetKL { t_map, p_hat, normalized: false });
        data_set.validate()?;
        Ok(DspectProblem { voxels, bins, frames, coeffs, counts, keep, data_set, model })
    }

    pub fn dim(&self) -> usize {
        self.keep.len()
    }

    pub fn generator(&self) -> Generator {
        negentropy(self.dim())
    }

    /// Voxel activities `x_{ik}` at `i·K + k`.
    pub fn activities(&self, params: &Point) -> Vec<f64> {
        ParametricMap::prony_activities(self.voxels, self.frames, params)
    }

    /// Expected counts `Σᵢ c_{ijk} x_{ik}` at `j·K + k`.
    pub fn expected_counts(&self, params: &Point) -> Vec<f64> {
        expected_counts(self.voxels, self.bins, self.frames, &self.coeffs, &self.activities(params))
    }

    /// Bin totals `Σᵢ z_{ijk}` of a hidden-count vector over the kept indices.
    pub fn fitted_counts(&self, z: &Point) -> Vec<f64> {
        let mut y = vec![0.0; self.bins * self.frames];
        for (&flat, &v) in self.keep.iter().zip(z.iter()) {
            let (j, k) = ((flat / self.frames) % self.bins, flat % self.frames);
            y[j * self.frames + k] += v;
        }
        y
    }

    /// Model point (kept hidden counts) of a parameter vector.
    pub fn model_point(&self, params: &Point) -> Result<Point> {
        let (map, _) = self.model.parametric_parts()?;
        check_dim(map.param_dim(), params.len())?;
        Ok(map.eval(params))
    }

    pub fn run(&self, start_params: &Point, cfg: &RunConfig) -> Result<EmTrace> {
        let start = self.model_point(start_params)?;
        if start.iter().any(|&v| !(v > 0.0)) {
            return Err(Error::InvalidModel("start parameters give nonpositive activity".into()));
        }
        let gen = self.generator();
        let trace = run(gen.as_ref(), &self.model, &self.data_set, &start, &em_config(cfg))?;
        Ok(EmTrace::new(trace, StepRole::MStep, StepRole::EStep))
    }
}

fn expected_counts(voxels: usize, bins: usize, frames: usize, coeffs: &[f64], x: &[f64]) -> Vec<f64> {
    let mut y = vec![0.0; bins * frames];
    for i in 0..voxels {
        for j in 0..bins {
            for k in 0..frames {
                y[j * frames + k] += coeffs[(i * bins + j) * frames + k] * x[i * frames + k];
            }
        }
    }
    y
}

/// Default Prony box around the scale of the activities.
pub fn default_prony_box(voxels: usize, scale: f64) -> (Vec<f64>, Vec<f64>) {
    let lo_v = [-0.5, -0.5, 0.0, 1e-3 * scale, 1e-3 * scale];
    let hi_v = [0.5, 1.5, scale, 10.0 * scale, 10.0 * scale];
    (lo_v.repeat(voxels), hi_v.repeat(voxels))
}

/// Synthesize noise-free counts from known Prony parameters
/// `(αᵢ, βᵢ, γᵢ, x⁰ᵢ, x¹ᵢ)` and build the em instance over the default box.
pub fn build_dspect_problem(voxels: usize, bins: usize, frames: usize, prony: &[f64], coeffs: &[f64]) -> Result<DspectProblem> {
    check_dim(5 * voxels, prony.len())?;
    check_dim(voxels * bins * frames, coeffs.len())?;
    let u = DVector::from_column_slice(prony);
    let x = ParametricMap::prony_activities(voxels, frames, &u);
    if let Some(idx) = x.iter().position(|&v| !(v > 0.0)) {
        return Err(Error::InvalidModel(format!(
            "Prony recursion gives nonpositive activity {} for voxel {} frame {}",
            x[idx],
            idx / frames,
            idx % frames
        )));
    }
    let counts = expected_counts(voxels, bins, frames, coeffs, &x);
    let scale = x.iter().cloned().fold(0.0, f64::max);
    let (lo, hi) = default_prony_box(voxels, scale);
    DspectProblem::from_counts(voxels, bins, frames, coeffs.to_vec(), counts, lo, hi)
}
