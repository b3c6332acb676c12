//! Set descriptions and their left/right Bregman projection oracles.
//!
//! `left_project` computes `argmin_{b′∈B} D(b′, a)`, `right_project` computes
//! `argmin_{a′∈A} D(b, a′)`. Closed forms are used where they exist; parametric
//! sets fall back to a warm-started local solver over the parameter box.

mod affine;
pub mod param;

use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{check_dim, Error, Result};
use crate::legendre::{ConjView, DomainSpec, Legendre, Membership};
use crate::solver::{minimize_box, Bounds, SolverOptions, SolverReport};
use crate::Point;

pub use param::{ParametricMap, MAP_NAMES};

pub const DEFAULT_SET_TOL: f64 = 1e-9;

fn default_tol() -> f64 {
    DEFAULT_SET_TOL
}

fn yes() -> bool {
    true
}

/// Closed half-space `⟨normal, x⟩ ≤ offset`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Halfspace {
    pub normal: Vec<f64>,
    pub offset: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "variant")]
pub enum Shape {
    /// `base + span(directions)`.
    Affine { base: Vec<f64>, directions: Vec<Vec<f64>> },
    Polyhedron { halfspaces: Vec<Halfspace> },
    /// Image of the box `[lo, hi]` under a registered map.
    Parametric { map: String, params: Vec<f64>, lo: Vec<f64>, hi: Vec<f64> },
    FiniteSet { points: Vec<Vec<f64>> },
    /// `{p ≥ 0 : Σ_{T(i)=j} pᵢ = p̂ⱼ}`. With `normalized = false` the group
    /// totals need not sum to one.
    DataSetKL {
        t_map: Vec<usize>,
        p_hat: Vec<f64>,
        #[serde(default = "yes")]
        normalized: bool,
    },
    /// `{x ∈ G : ∇f(x)ᵢ = valuesᵢ for i ∈ pinned}`.
    DualAffine { dim: usize, pinned: Vec<usize>, values: Vec<f64> },
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SetSpec {
    #[serde(flatten)]
    pub shape: Shape,
    #[serde(default = "default_tol")]
    pub tol: f64,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ProjectionMode {
    GlobalClosedForm,
    GlobalEnumeration,
    LocalSolver,
}

#[derive(Clone, Debug)]
pub struct ProjectionResult {
    pub point: Point,
    pub divergence_value: f64,
    pub mode: ProjectionMode,
    pub solver_report: SolverReport,
    /// Parameter of the returned point for parametric sets.
    pub param: Option<Point>,
    /// The point touches the boundary of `dom f`.
    pub on_boundary: bool,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ProjectOptions {
    pub solver: SolverOptions,
    /// Approximate number of grid points used to seed parametric searches.
    pub grid: usize,
    /// Local solves started from the best grid points.
    pub candidates: usize,
    /// Extra random starts for parametric sets.
    pub multistart: usize,
    pub seed: u64,
    /// Use the generic solver even where a closed form exists.
    pub force_solver: bool,
}

impl Default for ProjectOptions {
    fn default() -> Self {
        ProjectOptions {
            solver: SolverOptions::default(),
            grid: 513,
            candidates: 3,
            multistart: 0,
            seed: 0,
            force_solver: false,
        }
    }
}

impl SetSpec {
    pub fn new(shape: Shape) -> Self {
        SetSpec { shape, tol: DEFAULT_SET_TOL }
    }

    pub fn affine(base: Vec<f64>, directions: Vec<Vec<f64>>) -> Self {
        Self::new(Shape::Affine { base, directions })
    }

    pub fn parametric(map: &str, params: Vec<f64>, lo: Vec<f64>, hi: Vec<f64>) -> Self {
        Self::new(Shape::Parametric { map: map.to_string(), params, lo, hi })
    }

    pub fn finite(points: Vec<Vec<f64>>) -> Self {
        Self::new(Shape::FiniteSet { points })
    }

    pub fn halfspaces(halfspaces: Vec<Halfspace>) -> Self {
        Self::new(Shape::Polyhedron { halfspaces })
    }

    pub fn data_set(t_map: Vec<usize>, p_hat: Vec<f64>) -> Self {
        Self::new(Shape::DataSetKL { t_map, p_hat, normalized: true })
    }

    pub fn dual_affine(dim: usize, pinned: Vec<usize>, values: Vec<f64>) -> Self {
        Self::new(Shape::DualAffine { dim, pinned, values })
    }

    pub fn variant_name(&self) -> &'static str {
        match self.shape {
            Shape::Affine { .. } => "Affine",
            Shape::Polyhedron { .. } => "Polyhedron",
            Shape::Parametric { .. } => "Parametric",
            Shape::FiniteSet { .. } => "FiniteSet",
            Shape::DataSetKL { .. } => "DataSetKL",
            Shape::DualAffine { .. } => "DualAffine",
        }
    }

    /// Ambient dimension.
    pub fn dim(&self) -> Result<usize> {
        Ok(match &self.shape {
            Shape::Affine { base, .. } => base.len(),
            Shape::Polyhedron { halfspaces } => {
                halfspaces.first().map(|h| h.normal.len()).ok_or_else(|| Error::InvalidSet("no halfspaces".into()))?
            }
            Shape::Parametric { map, params, .. } => ParametricMap::from_name(map, params)?.out_dim(),
            Shape::FiniteSet { points } => {
                points.first().map(|p| p.len()).ok_or_else(|| Error::InvalidSet("empty point list".into()))?
            }
            Shape::DataSetKL { t_map, .. } => t_map.len(),
            Shape::DualAffine { dim, .. } => *dim,
        })
    }

    /// Check the structural invariants of the description.
    pub fn validate(&self) -> Result<()> {
        if !(self.tol.is_finite() && self.tol >= 0.0) {
            return Err(Error::InvalidSet(format!("membership tolerance must be nonnegative, got {}", self.tol)));
        }
        let finite = |v: &[f64]| v.iter().all(|x| x.is_finite());
        let d = self.dim()?;
        if d == 0 {
            return Err(Error::InvalidSet("ambient dimension must be positive".into()));
        }
        match &self.shape {
            Shape::Affine { base, directions } => {
                if !finite(base) || directions.iter().any(|v| v.len() != d || !finite(v)) {
                    return Err(Error::InvalidSet("affine directions must be finite and match the base".into()));
                }
            }
            Shape::Polyhedron { halfspaces } => {
                if halfspaces.iter().any(|h| h.normal.len() != d || !finite(&h.normal) || !h.offset.is_finite()) {
                    return Err(Error::InvalidSet("halfspaces must be finite with a common dimension".into()));
                }
            }
            Shape::Parametric { map, params, lo, hi } => {
                let g = ParametricMap::from_name(map, params)?;
                let k = g.param_dim();
                if lo.len() != k || hi.len() != k {
                    return Err(Error::InvalidSet(format!("parameter box must have {k} coordinates")));
                }
                if lo.iter().zip(hi).any(|(l, h)| !(l <= h) || l.is_nan() || h.is_nan()) {
                    return Err(Error::InvalidSet("parameter box needs lo ≤ hi".into()));
                }
                if finite(lo) && finite(hi) {
                    let probe = [DVector::from_column_slice(lo), DVector::from_column_slice(hi)];
                    for u in probe.iter().chain(std::iter::once(&(0.5 * (&probe[0] + &probe[1])))) {
                        if !finite(g.eval(u).as_slice()) || !finite(g.jacobian(u).as_slice()) {
                            return Err(Error::InvalidSet("map or Jacobian is not finite on the box".into()));
                        }
                    }
                }
            }
            Shape::FiniteSet { points } => {
                if points.iter().any(|p| p.len() != d || !finite(p)) {
                    return Err(Error::InvalidSet("points must be finite with a common dimension".into()));
                }
            }
            Shape::DataSetKL { t_map, p_hat, normalized } => {
                if p_hat.iter().any(|&p| !(p > 0.0 && p.is_finite())) {
                    return Err(Error::InvalidSet("p_hat must be strictly positive".into()));
                }
                if *normalized && (p_hat.iter().sum::<f64>() - 1.0).abs() > 1e-12 {
                    return Err(Error::InvalidSet("p_hat must sum to one".into()));
                }
                let mut hit = vec![false; p_hat.len()];
                for &j in t_map {
                    if j >= p_hat.len() {
                        return Err(Error::InvalidSet(format!("T maps into group {j} beyond p_hat")));
                    }
                    hit[j] = true;
                }
                if hit.iter().any(|h| !h) {
                    return Err(Error::InvalidSet("every group needs a preimage under T".into()));
                }
            }
            Shape::DualAffine { pinned, values, .. } => {
                if pinned.len() != values.len() || pinned.iter().any(|&i| i >= d) || !finite(values) {
                    return Err(Error::InvalidSet("pinned indices and values must match and lie in range".into()));
                }
            }
        }
        Ok(())
    }

    /// Parametric map and its box; errors for other variants.
    pub fn parametric_parts(&self) -> Result<(ParametricMap, Bounds)> {
        match &self.shape {
            Shape::Parametric { map, params, lo, hi } => Ok((
                ParametricMap::from_name(map, params)?,
                Bounds::new(DVector::from_column_slice(lo), DVector::from_column_slice(hi)),
            )),
            _ => Err(Error::InvalidSet(format!("{} set has no parametrization", self.variant_name()))),
        }
    }

    /// Convexity as declared by the description (not verified).
    pub fn is_convex(&self) -> bool {
        match &self.shape {
            Shape::Affine { .. } | Shape::Polyhedron { .. } | Shape::DataSetKL { .. } => true,
            Shape::Parametric { map, params, lo, hi } => {
                ParametricMap::from_name(map, params).map(|g| g.declared_convex(lo, hi)).unwrap_or(false)
            }
            Shape::FiniteSet { points } => points.len() == 1,
            Shape::DualAffine { .. } => false,
        }
    }

    /// Membership within the set tolerance.
    pub fn contains(&self, gen: &dyn Legendre, x: &Point) -> bool {
        let tol = self.tol;
        match &self.shape {
            Shape::Affine { base, directions } => {
                let base = DVector::from_column_slice(base);
                let q = affine::span_basis(&dir_matrix(base.len(), directions));
                let r = x - &base;
                (&r - &q * (q.transpose() * &r)).norm() <= tol
            }
            Shape::Polyhedron { halfspaces } => halfspaces
                .iter()
                .all(|h| DVector::from_column_slice(&h.normal).dot(x) <= h.offset + tol),
            Shape::Parametric { .. } => match self.parametric_parts() {
                Ok((g, b)) => locate_param(&g, &b, x, &ProjectOptions::default())
                    .map(|u| (g.eval(&u) - x).norm() <= tol)
                    .unwrap_or(false),
                Err(_) => false,
            },
            Shape::FiniteSet { points } => points.iter().any(|p| (DVector::from_column_slice(p) - x).norm() <= tol),
            Shape::DataSetKL { t_map, p_hat, .. } => {
                x.iter().all(|&v| v >= -tol)
                    && group_sums(t_map, p_hat.len(), x).iter().zip(p_hat).all(|(s, p)| (s - p).abs() <= tol)
            }
            Shape::DualAffine { pinned, values, .. } => {
                gen.domain().is_interior(x) && {
                    let eta = gen.grad(x);
                    pinned.iter().zip(values).all(|(&i, v)| (eta[i] - v).abs() <= tol)
                }
            }
        }
    }
}

fn dir_matrix(dim: usize, directions: &[Vec<f64>]) -> DMatrix<f64> {
    DMatrix::from_fn(dim, directions.len(), |r, c| directions[c][r])
}

fn group_sums(t_map: &[usize], groups: usize, x: &Point) -> Vec<f64> {
    let mut s = vec![0.0; groups];
    for (i, &j) in t_map.iter().enumerate() {
        s[j] += x[i];
    }
    s
}

/// Closed-form conditional-expectation map `bᵢ = p̂_{T(i)} aᵢ / Σ_{T(i′)=T(i)} a_{i′}`.
pub fn rescale_groups(t_map: &[usize], p_hat: &[f64], a: &Point) -> Result<Point> {
    let sums = group_sums(t_map, p_hat.len(), a);
    if let Some(j) = sums.iter().position(|&s| !(s > 0.0)) {
        return Err(Error::domain(format!("group {j} has zero total")));
    }
    Ok(DVector::from_iterator(a.len(), t_map.iter().enumerate().map(|(i, &j)| p_hat[j] * a[i] / sums[j])))
}

fn is_isotropic_quadratic(gen: &dyn Legendre) -> bool {
    if !gen.quadratic() {
        return false;
    }
    let h = gen.hessian(&DVector::zeros(gen.dim()));
    let s = h[(0, 0)];
    h.iter().enumerate().all(|(idx, &v)| {
        let (r, c) = (idx % h.nrows(), idx / h.nrows());
        if r == c {
            (v - s).abs() <= 1e-15 * s.abs()
        } else {
            v == 0.0
        }
    })
}

fn finish(
    gen: &dyn Legendre,
    point: Point,
    divergence_value: f64,
    mode: ProjectionMode,
    solver_report: SolverReport,
    param: Option<Point>,
) -> ProjectionResult {
    let on_boundary = gen.domain().membership(&point) == Membership::Boundary;
    ProjectionResult { point, divergence_value, mode, solver_report, param, on_boundary }
}

fn exact_report() -> SolverReport {
    SolverReport { iterations: 0, grad_norm: 0.0, converged: true }
}

/// Left projection with default options.
pub fn left_project(gen: &dyn Legendre, set: &SetSpec, a: &Point) -> Result<ProjectionResult> {
    left_project_with(gen, set, a, &ProjectOptions::default(), None)
}

/// Right projection with default options.
pub fn right_project(gen: &dyn Legendre, set: &SetSpec, b: &Point) -> Result<ProjectionResult> {
    right_project_with(gen, set, b, &ProjectOptions::default(), None)
}

fn check_left_input(gen: &dyn Legendre, a: &Point) -> Result<()> {
    check_dim(gen.dim(), a.len())?;
    if !gen.domain().is_interior(a) {
        return Err(Error::domain(format!("left projection needs a point of G, got {:?}", a.as_slice())));
    }
    Ok(())
}

fn check_right_input(gen: &dyn Legendre, b: &Point) -> Result<()> {
    check_dim(gen.dim(), b.len())?;
    if !gen.domain().contains(b) {
        return Err(Error::domain(format!("right projection needs a point of dom f, got {:?}", b.as_slice())));
    }
    Ok(())
}

/// `argmin_{b′∈B} D(b′, a)`. For parametric sets `warm` (a parameter) is added
/// to the starting points, so the result is never worse than `g(warm)`.
pub fn left_project_with(
    gen: &dyn Legendre,
    set: &SetSpec,
    a: &Point,
    opts: &ProjectOptions,
    warm: Option<&Point>,
) -> Result<ProjectionResult> {
    check_left_input(gen, a)?;
    check_dim(gen.dim(), set.dim()?)?;
    let dom = gen.domain();
    let div = |x: &Point| gen.raw_divergence(x, a).max(0.0);
    match &set.shape {
        Shape::FiniteSet { points } => {
            let mut best: Option<(usize, f64)> = None;
            for (i, p) in points.iter().enumerate() {
                let p = DVector::from_column_slice(p);
                if !dom.contains(&p) {
                    continue;
                }
                let v = div(&p);
                if best.is_none_or(|(_, bv)| v < bv) {
                    best = Some((i, v));
                }
            }
            let (i, v) = best.ok_or_else(|| Error::domain("no point of the finite set lies in dom f"))?;
            let p = DVector::from_column_slice(&points[i]);
            Ok(finish(gen, p, v, ProjectionMode::GlobalEnumeration, exact_report(), None))
        }
        Shape::Affine { base, directions } => {
            let base = DVector::from_column_slice(base);
            let dirs = dir_matrix(base.len(), directions);
            if is_isotropic_quadratic(gen) && !opts.force_solver {
                let q = affine::span_basis(&dirs);
                let p = &base + &q * (q.transpose() * (a - &base));
                let v = div(&p);
                return Ok(finish(gen, p, v, ProjectionMode::GlobalClosedForm, exact_report(), None));
            }
            let c = affine::complement_rows(base.len(), &dirs);
            let d = &c * &base;
            let (p, report) = affine::project_affine(gen, &c, &d, a)?;
            let v = div(&p);
            Ok(finish(gen, p, v, ProjectionMode::LocalSolver, report, None))
        }
        Shape::Polyhedron { halfspaces } => {
            let n = DMatrix::from_fn(halfspaces.len(), gen.dim(), |r, c| halfspaces[r].normal[c]);
            let beta = DVector::from_iterator(halfspaces.len(), halfspaces.iter().map(|h| h.offset));
            let (p, report) = affine::project_polyhedron(gen, &n, &beta, a, &opts.solver)?;
            let v = div(&p);
            Ok(finish(gen, p, v, ProjectionMode::LocalSolver, report, None))
        }
        Shape::DataSetKL { t_map, p_hat, .. } => {
            let closed = gen.name() == "negentropy" && !opts.force_solver;
            if closed {
                let p = rescale_groups(t_map, p_hat, a)?;
                let v = div(&p);
                return Ok(finish(gen, p, v, ProjectionMode::GlobalClosedForm, exact_report(), None));
            }
            if !matches!(dom, DomainSpec::PositiveOrthant) {
                return Err(Error::Unsupported(format!(
                    "left projection onto a data set under '{}' (nonnegativity is not implied by dom f)",
                    gen.name()
                )));
            }
            let c = DMatrix::from_fn(p_hat.len(), t_map.len(), |j, i| if t_map[i] == j { 1.0 } else { 0.0 });
            let d = DVector::from_column_slice(p_hat);
            let (p, report) = affine::project_affine(gen, &c, &d, a)?;
            let v = div(&p);
            Ok(finish(gen, p, v, ProjectionMode::LocalSolver, report, None))
        }
        Shape::DualAffine { pinned, values, .. } => {
            if !gen.separable() {
                return Err(Error::Unsupported(format!(
                    "left projection onto a dual-affine set under the non-separable '{}'",
                    gen.name()
                )));
            }
            // Coordinatewise: pinned coordinates are forced, the rest stay put.
            let mut eta = gen.grad(a);
            for (&i, &v) in pinned.iter().zip(values) {
                eta[i] = v;
            }
            if !gen.conj_domain().is_interior(&eta) {
                return Err(Error::domain("pinned values lie outside the conjugate domain"));
            }
            let mut p = gen.conj_grad(&eta);
            let free: Vec<usize> = (0..a.len()).filter(|i| !pinned.contains(i)).collect();
            for i in free {
                p[i] = a[i];
            }
            let v = div(&p);
            Ok(finish(gen, p, v, ProjectionMode::GlobalClosedForm, exact_report(), None))
        }
        Shape::Parametric { .. } => {
            let (g, bounds) = set.parametric_parts()?;
            if is_isotropic_quadratic(gen) && !opts.force_solver {
                if let Some(u) = euclidean_param_projection(&g, &bounds, a) {
                    let p = g.eval(&u);
                    let v = div(&p);
                    return Ok(finish(gen, p, v, ProjectionMode::GlobalClosedForm, exact_report(), Some(u)));
                }
            }
            let ga = gen.grad(a);
            let value = |u: &Point| {
                let x = g.eval(u);
                if dom.contains(&x) {
                    gen.raw_divergence(&x, a).max(0.0)
                } else {
                    f64::INFINITY
                }
            };
            let gradient = |u: &Point| {
                let x = g.eval(u);
                let j = g.jacobian(u);
                let diff = gen.grad(&x) - &ga;
                // Zero Jacobian entries annihilate infinite gradient components.
                DVector::from_fn(j.ncols(), |c, _| {
                    (0..j.nrows()).filter(|&r| j[(r, c)] != 0.0).map(|r| j[(r, c)] * diff[r]).sum()
                })
            };
            let (u, val, report) = search_param(&(value, gradient), &g, &bounds, opts, warm)?;
            let p = g.eval(&u);
            Ok(finish(gen, p, val, ProjectionMode::LocalSolver, report, Some(u)))
        }
    }
}

/// `argmin_{a′∈A} D(b, a′)`. For parametric sets `warm` (a parameter) is added
/// to the starting points, so the result is never worse than `g(warm)`.
pub fn right_project_with(
    gen: &dyn Legendre,
    set: &SetSpec,
    b: &Point,
    opts: &ProjectOptions,
    warm: Option<&Point>,
) -> Result<ProjectionResult> {
    check_right_input(gen, b)?;
    check_dim(gen.dim(), set.dim()?)?;
    let dom = gen.domain();
    let div = |x: &Point| gen.raw_divergence(b, x).max(0.0);
    if gen.quadratic() && !matches!(set.shape, Shape::FiniteSet { .. } | Shape::DualAffine { .. }) {
        // Quadratic generators have symmetric divergences.
        return left_project_with(gen, set, b, opts, warm);
    }
    match &set.shape {
        Shape::FiniteSet { points } => {
            let mut best: Option<(usize, f64)> = None;
            for (i, p) in points.iter().enumerate() {
                let p = DVector::from_column_slice(p);
                if !dom.is_interior(&p) {
                    continue;
                }
                let v = div(&p);
                if best.is_none_or(|(_, bv)| v < bv) {
                    best = Some((i, v));
                }
            }
            let (i, v) = best.ok_or_else(|| Error::domain("no point of the finite set lies in G"))?;
            let p = DVector::from_column_slice(&points[i]);
            Ok(finish(gen, p, v, ProjectionMode::GlobalEnumeration, exact_report(), None))
        }
        Shape::DataSetKL { t_map, p_hat, .. } if gen.name() == "negentropy" => {
            // KL(b‖·) over fixed group totals is minimized by rescaling b itself.
            let p = rescale_groups(t_map, p_hat, b)?;
            if !dom.is_interior(&p) {
                return Err(Error::domain("right projection onto the data set leaves G"));
            }
            let v = div(&p);
            Ok(finish(gen, p, v, ProjectionMode::GlobalClosedForm, exact_report(), None))
        }
        Shape::DualAffine { pinned, values, .. } => {
            if !dom.is_interior(b) {
                return Err(Error::domain("dual route needs b in G"));
            }
            // D(b, a) = D*(∇f a, ∇f b): left-project ∇f(b) under f* onto {η_P = values}.
            let conj = ConjView(gen);
            let eta_b = gen.grad(b);
            let (eta, report, mode) = if gen.separable() && !opts.force_solver {
                let mut eta = eta_b.clone();
                for (&i, &v) in pinned.iter().zip(values) {
                    eta[i] = v;
                }
                (eta, exact_report(), ProjectionMode::GlobalClosedForm)
            } else {
                let c = DMatrix::from_fn(pinned.len(), gen.dim(), |r, c| if pinned[r] == c { 1.0 } else { 0.0 });
                let d = DVector::from_column_slice(values);
                let (eta, report) = affine::project_affine(&conj, &c, &d, &eta_b)?;
                (eta, report, ProjectionMode::LocalSolver)
            };
            if !gen.conj_domain().is_interior(&eta) {
                return Err(Error::domain("pinned dual values lie outside G*"));
            }
            let p = gen.conj_grad(&eta);
            let v = div(&p);
            Ok(finish(gen, p, v, mode, report, None))
        }
        Shape::Affine { base, directions } => {
            let base_v = DVector::from_column_slice(base);
            let dirs = dir_matrix(base.len(), directions);
            let g = ParametricMap::Patch { base: base_v.clone(), dirs: dirs.clone() };
            let bounds = Bounds::unbounded(dirs.ncols());
            let ls = dirs.clone().svd(true, true).solve(&(b - &base_v), 1e-12).ok();
            let seed = ls.filter(|u| dom.is_interior(&g.eval(u)));
            let warm = warm.cloned().or(seed);
            let (u, val, report) = right_param_search(gen, &g, &bounds, b, opts, warm.as_ref())?;
            Ok(finish(gen, g.eval(&u), val, ProjectionMode::LocalSolver, report, Some(u)))
        }
        Shape::Parametric { .. } => {
            let (g, bounds) = set.parametric_parts()?;
            let (u, val, report) = right_param_search(gen, &g, &bounds, b, opts, warm)?;
            Ok(finish(gen, g.eval(&u), val, ProjectionMode::LocalSolver, report, Some(u)))
        }
        _ => Err(Error::Unsupported(format!(
            "right projection onto a {} set under '{}'",
            set.variant_name(),
            gen.name()
        ))),
    }
}

fn right_param_search(
    gen: &dyn Legendre,
    g: &ParametricMap,
    bounds: &Bounds,
    b: &Point,
    opts: &ProjectOptions,
    warm: Option<&Point>,
) -> Result<(Point, f64, SolverReport)> {
    let dom = gen.domain();
    let value = |u: &Point| {
        let x = g.eval(u);
        if dom.is_interior(&x) {
            gen.raw_divergence(b, &x).max(0.0)
        } else {
            f64::INFINITY
        }
    };
    let gradient = |u: &Point| {
        let x = g.eval(u);
        let j = g.jacobian(u);
        -(j.transpose() * (gen.hessian(&x) * (b - &x)))
    };
    search_param(&(value, gradient), g, bounds, opts, warm)
}

/// Local right projection from `warm` only: a stationary point reached by
/// descent, with `D(b, result) ≤ D(b, g(warm))`.
pub fn local_right_project(
    gen: &dyn Legendre,
    set: &SetSpec,
    b: &Point,
    warm: &Point,
    opts: &ProjectOptions,
) -> Result<ProjectionResult> {
    check_right_input(gen, b)?;
    let (g, bounds) = set.parametric_parts()?;
    check_dim(g.param_dim(), warm.len())?;
    let dom = gen.domain();
    let value = |u: &Point| {
        let x = g.eval(u);
        if dom.is_interior(&x) {
            gen.raw_divergence(b, &x).max(0.0)
        } else {
            f64::INFINITY
        }
    };
    let gradient = |u: &Point| {
        let x = g.eval(u);
        -(g.jacobian(u).transpose() * (gen.hessian(&x) * (b - &x)))
    };
    let mut sopts = opts.solver.clone();
    if sopts.max_step.is_none() && bounds.is_finite() {
        sopts.max_step = Some(0.02 * (&bounds.hi - &bounds.lo).amax());
    }
    let min = minimize_box(&(value, gradient), &bounds, warm, &sopts)?;
    Ok(finish(gen, g.eval(&min.point), min.value, ProjectionMode::LocalSolver, min.report, Some(min.point)))
}

/// Metric projection onto lines, full circles and full disks.
fn euclidean_param_projection(g: &ParametricMap, bounds: &Bounds, a: &Point) -> Option<Point> {
    let wrap = |phi: f64, lo: f64| lo + (phi - lo).rem_euclid(2.0 * std::f64::consts::PI);
    let full_turn = |i: usize| bounds.hi[i] - bounds.lo[i] >= 2.0 * std::f64::consts::PI;
    match g {
        ParametricMap::Line { base, dir } => {
            let n2 = dir.norm_squared();
            if n2 == 0.0 {
                return None;
            }
            let t = (a - base).dot(dir) / n2;
            Some(DVector::from_element(1, t.clamp(bounds.lo[0], bounds.hi[0])))
        }
        ParametricMap::Circle { center, .. } if full_turn(0) => {
            let (dx, dy) = (a[0] - center[0], a[1] - center[1]);
            if dx == 0.0 && dy == 0.0 {
                return None;
            }
            Some(DVector::from_element(1, wrap(dy.atan2(dx), bounds.lo[0])))
        }
        ParametricMap::Disk { center } if full_turn(1) && bounds.lo[0] <= 0.0 && bounds.hi[0].is_finite() => {
            let (dx, dy) = (a[0] - center[0], a[1] - center[1]);
            let r = dx.hypot(dy);
            let phi = if r == 0.0 { bounds.lo[1] } else { wrap(dy.atan2(dx), bounds.lo[1]) };
            Some(DVector::from_vec(vec![r.min(bounds.hi[0]).max(bounds.lo[0].max(0.0)), phi]))
        }
        _ => None,
    }
}

/// Grid seeds for a finite box; empty for large or unbounded parameter spaces.
fn grid_points(bounds: &Bounds, grid: usize) -> (Vec<Point>, usize) {
    let k = bounds.dim();
    if k == 0 || k > 3 || !bounds.is_finite() || grid < 2 {
        return (Vec::new(), 0);
    }
    let mut per = ((grid as f64).powf(1.0 / k as f64).round() as usize).max(2);
    if per % 2 == 0 {
        per += 1;
    }
    let total = per.pow(k as u32);
    let mut pts = Vec::with_capacity(total);
    for flat in 0..total {
        let mut rem = flat;
        let u = DVector::from_fn(k, |i, _| {
            let idx = rem % per;
            rem /= per;
            let t = idx as f64 / (per - 1) as f64;
            bounds.lo[i] + t * (bounds.hi[i] - bounds.lo[i])
        });
        pts.push(u);
    }
    (pts, per)
}

fn search_param<O: crate::solver::Objective>(
    obj: &O,
    g: &ParametricMap,
    bounds: &Bounds,
    opts: &ProjectOptions,
    warm: Option<&Point>,
) -> Result<(Point, f64, SolverReport)> {
    let k = g.param_dim();
    check_dim(k, bounds.dim())?;
    let mut starts: Vec<Point> = Vec::new();
    if let Some(w) = warm {
        check_dim(k, w.len())?;
        starts.push(bounds.clamp(w));
    }
    let (grid, per) = grid_points(bounds, opts.grid);
    if !grid.is_empty() {
        let mut scored: Vec<(f64, usize)> =
            grid.iter().enumerate().map(|(i, u)| (obj.value(u), i)).filter(|(v, _)| v.is_finite()).collect();
        scored.sort_by(|x, y| x.0.total_cmp(&y.0).then(x.1.cmp(&y.1)));
        let span = &bounds.hi - &bounds.lo;
        let sep = 2.5 / (per - 1) as f64;
        let mut chosen: Vec<Point> = Vec::new();
        for (_, i) in scored {
            if chosen.len() >= opts.candidates.max(1) {
                break;
            }
            let u = &grid[i];
            let far = chosen.iter().all(|c| {
                (0..k).map(|d| if span[d] > 0.0 { ((u[d] - c[d]) / span[d]).abs() } else { 0.0 }).fold(0.0, f64::max)
                    > sep
            });
            if far {
                chosen.push(u.clone());
            }
        }
        starts.extend(chosen);
    } else if warm.is_none() {
        starts.push(bounds.center());
    }
    if opts.multistart > 0 && bounds.is_finite() {
        let mut rng = ChaCha8Rng::seed_from_u64(opts.seed);
        for _ in 0..opts.multistart {
            starts.push(DVector::from_fn(k, |i, _| rng.random_range(bounds.lo[i]..=bounds.hi[i])));
        }
    }
    let mut best: Option<(Point, f64, SolverReport)> = None;
    let mut last_err = None;
    for s in &starts {
        match minimize_box(obj, bounds, s, &opts.solver) {
            Ok(m) => {
                if best.as_ref().is_none_or(|(_, v, _)| m.value < *v) {
                    best = Some((m.point, m.value, m.report));
                }
            }
            Err(e) => last_err = Some(e),
        }
    }
    best.ok_or_else(|| {
        last_err.unwrap_or_else(|| Error::SolverFailure("no admissible starting point in the parameter box".into()))
    })
}

/// Parameter of the point of `g(U)` nearest to `x` in the euclidean sense.
pub fn locate_param(g: &ParametricMap, bounds: &Bounds, x: &Point, opts: &ProjectOptions) -> Result<Point> {
    check_dim(g.out_dim(), x.len())?;
    if let Some(u) = euclidean_param_projection(g, bounds, x) {
        return Ok(u);
    }
    let value = |u: &Point| 0.5 * (g.eval(u) - x).norm_squared();
    let gradient = |u: &Point| g.jacobian(u).transpose() * (g.eval(u) - x);
    let mut o = opts.clone();
    o.solver.grad_tol = 1e-13;
    search_param(&(value, gradient), g, bounds, &o, None).map(|(u, _, _)| u)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::legendre::{euclidean, negentropy, poisson};
    use approx::assert_abs_diff_eq;

    fn p(v: &[f64]) -> Point {
        DVector::from_column_slice(v)
    }

    fn close(x: &Point, want: &[f64], eps: f64) {
        for (a, b) in x.iter().zip(want) {
            assert_abs_diff_eq!(*a, *b, epsilon = eps);
        }
    }

    #[test]
    fn data_set_closed_form_matches_generic_solver() {
        let g = negentropy(3);
        let set = SetSpec::data_set(vec![0, 0, 1], vec![0.6, 0.4]);
        let a = p(&[0.2, 0.2, 0.6]);
        let closed = left_project(g.as_ref(), &set, &a).unwrap();
        close(&closed.point, &[0.3, 0.3, 0.4], 1e-15);
        assert_eq!(closed.mode, ProjectionMode::GlobalClosedForm);
        let opts = ProjectOptions { force_solver: true, ..Default::default() };
        let solved = left_project_with(g.as_ref(), &set, &a, &opts, None).unwrap();
        assert!((solved.point - closed.point).amax() < 1e-12);
    }

    #[test]
    fn euclidean_onto_x_axis() {
        let set = SetSpec::affine(vec![0.0, 0.0], vec![vec![1.0, 0.0]]);
        let r = left_project(euclidean(2).as_ref(), &set, &p(&[1.0, 1.0])).unwrap();
        close(&r.point, &[1.0, 0.0], 1e-15);
        assert_abs_diff_eq!(r.divergence_value, 0.5);
    }

    #[test]
    fn kl_onto_affine_uses_dual_newton() {
        // Simplex-like slice x + y = 1 under KL: scaling a to the slice.
        let set = SetSpec::affine(vec![1.0, 0.0], vec![vec![-1.0, 1.0]]);
        let r = left_project(negentropy(2).as_ref(), &set, &p(&[0.2, 0.6])).unwrap();
        close(&r.point, &[0.25, 0.75], 1e-12);
    }

    #[test]
    fn finite_set_of_one_point() {
        let set = SetSpec::finite(vec![vec![0.3, 0.7]]);
        let a = p(&[0.3, 0.7]);
        let r = left_project(negentropy(2).as_ref(), &set, &a).unwrap();
        assert_eq!(r.point, a);
        assert_eq!(r.divergence_value, 0.0);
    }

    #[test]
    fn finite_set_right_enumeration() {
        let g = negentropy(2);
        let set = SetSpec::finite(vec![vec![0.5, 0.5], vec![0.9, 0.1]]);
        let b = p(&[0.6, 0.4]);
        let r = right_project(g.as_ref(), &set, &b).unwrap();
        let d0 = g.raw_divergence(&b, &p(&[0.5, 0.5]));
        let d1 = g.raw_divergence(&b, &p(&[0.9, 0.1]));
        assert!(d0 < d1);
        close(&r.point, &[0.5, 0.5], 0.0);
    }

    #[test]
    fn finite_set_ties_take_lowest_index() {
        let set = SetSpec::finite(vec![vec![1.0, 0.0], vec![-1.0, 0.0]]);
        let r = left_project(euclidean(2).as_ref(), &set, &p(&[0.0, 0.0])).unwrap();
        close(&r.point, &[1.0, 0.0], 0.0);
    }

    #[test]
    fn unit_circle_radial_projection() {
        let set = SetSpec::parametric("circle", vec![0.0, 0.0, 1.0], vec![-3.2], vec![3.2]);
        let r = right_project(euclidean(2).as_ref(), &set, &p(&[2.0, 0.0])).unwrap();
        close(&r.point, &[1.0, 0.0], 1e-12);
        let opts = ProjectOptions { force_solver: true, ..Default::default() };
        let s = right_project_with(euclidean(2).as_ref(), &set, &p(&[2.0, 0.0]), &opts, None).unwrap();
        close(&s.point, &[1.0, 0.0], 1e-9);
    }

    #[test]
    fn poisson_dual_route_matches_direct_minimization() {
        let g = poisson(2);
        let set = SetSpec::dual_affine(2, vec![0], vec![2.5]);
        let b = p(&[0.3, -0.4]);
        let r = right_project(g.as_ref(), &set, &b).unwrap();
        assert!(set.contains(g.as_ref(), &r.point));
        // Oracle: θ₀ = log 2.5 is forced, scan θ₁ densely.
        let t0 = 2.5f64.ln();
        let mut best = (f64::INFINITY, 0.0);
        for i in 0..=200_000 {
            let t1 = -2.0 + 4.0 * i as f64 / 200_000.0;
            let v = g.raw_divergence(&b, &p(&[t0, t1]));
            if v < best.0 {
                best = (v, t1);
            }
        }
        assert_abs_diff_eq!(r.point[0], t0, epsilon = 1e-12);
        assert_abs_diff_eq!(r.point[1], best.1, epsilon = 1e-4);
        assert!(r.divergence_value <= best.0 + 1e-12);
        let opts = ProjectOptions { force_solver: true, ..Default::default() };
        let s = right_project_with(g.as_ref(), &set, &b, &opts, None).unwrap();
        assert!((s.point - r.point).amax() < 1e-10);
    }

    #[test]
    fn local_right_projection_stays_in_its_basin() {
        // Steep double well; b sits near the right well, warm start in the left well.
        let set = SetSpec::parametric("double_well", vec![5.0, 0.0], vec![-2.0], vec![2.0]);
        let g = euclidean(2);
        let b = p(&[0.9, 0.5]);
        let warm = p(&[-1.2]);
        let map = set.parametric_parts().unwrap().0;
        let start_val = g.raw_divergence(&b, &map.eval(&warm));
        let local = local_right_project(g.as_ref(), &set, &b, &warm, &ProjectOptions::default()).unwrap();
        assert!(local.divergence_value <= start_val);
        assert!(local.param.as_ref().unwrap()[0] < 0.0);
        // Oracle: dense grid restricted to the left basin.
        let mut best = f64::INFINITY;
        for i in 0..=100_000 {
            let u = -2.0 + 2.0 * i as f64 / 100_000.0;
            best = best.min(g.raw_divergence(&b, &map.eval(&p(&[u]))));
        }
        assert!((local.divergence_value - best).abs() < 1e-8);
        let global = right_project(g.as_ref(), &set, &b).unwrap();
        assert!(global.param.unwrap()[0] > 0.0);
    }

    #[test]
    fn point_in_set_projects_to_itself() {
        let set = SetSpec::parametric("double_well", vec![1.0, 0.0], vec![-2.0], vec![2.0]);
        let b = p(&[0.5, 0.5625]);
        let r = local_right_project(euclidean(2).as_ref(), &set, &b, &p(&[0.4]), &Default::default()).unwrap();
        assert!(r.divergence_value < 1e-20);
        close(&r.point, &[0.5, 0.5625], 1e-9);
    }

    #[test]
    fn halfspace_projection_under_kl() {
        let set = SetSpec::halfspaces(vec![Halfspace { normal: vec![1.0, 1.0], offset: 1.0 }]);
        let r = left_project(negentropy(2).as_ref(), &set, &p(&[1.0, 1.0])).unwrap();
        close(&r.point, &[0.5, 0.5], 1e-10);
    }

    #[test]
    fn spec_round_trips_through_json() {
        let set = SetSpec::parametric("circle", vec![0.0, 0.0, 1.0], vec![-3.2], vec![3.2]);
        let js = serde_json::to_string(&set).unwrap();
        assert!(js.contains("\"variant\":\"Parametric\""));
        let back: SetSpec = serde_json::from_str(&js).unwrap();
        assert_eq!(back, set);
        let raw = r#"{"variant":"DataSetKL","t_map":[0,1],"p_hat":[0.5,0.5]}"#;
        let ds: SetSpec = serde_json::from_str(raw).unwrap();
        ds.validate().unwrap();
        assert_eq!(ds.tol, DEFAULT_SET_TOL);
    }

    #[test]
    fn invalid_data_sets_are_rejected() {
        assert!(SetSpec::data_set(vec![0, 0], vec![0.5, 0.5]).validate().is_err());
        assert!(SetSpec::data_set(vec![0, 1], vec![0.7, 0.7]).validate().is_err());
        assert!(SetSpec::data_set(vec![0, 1], vec![1.0, 0.0]).validate().is_err());
    }

    #[test]
    fn left_input_must_be_interior() {
        let set = SetSpec::finite(vec![vec![0.5, 0.5]]);
        let r = left_project(negentropy(2).as_ref(), &set, &p(&[0.0, 1.0]));
        assert!(matches!(r, Err(Error::Domain(_))));
    }
}
