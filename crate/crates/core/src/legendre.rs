//! Legendre-type generators and the Bregman divergences they induce.
//!
//! A generator bundles `f`, `∇f`, `∇²f` on `G = int(dom f)` together with the
//! conjugate pair `f*`, `∇f* = (∇f)⁻¹` on `G*`. All shipped generators are
//! separable with closed-form derivatives:
//!
//! | name         | f(x)                  | dom f            | G*               |
//! |--------------|-----------------------|------------------|------------------|
//! | `euclidean`  | ½‖x‖²                 | ℝᵈ               | ℝᵈ               |
//! | `negentropy` | Σ xᵢ log xᵢ − xᵢ      | ℝᵈ₊ (0 log 0 = 0) | ℝᵈ              |
//! | `poisson`    | Σ exp θᵢ              | ℝᵈ               | ℝᵈ₊₊             |
//! | `gaussian`   | σ²‖θ‖²/2              | ℝᵈ               | ℝᵈ               |
//!
//! `negentropy` and `poisson` are conjugate to each other; [`Conjugate`] wraps
//! any generator to expose its conjugate as a generator in its own right.

use std::fmt;
use std::sync::Arc;

use nalgebra::{DMatrix, DVector, SymmetricEigen};
use serde::{Deserialize, Serialize};

use crate::error::{check_dim, Error, Result};
use crate::Point;

/// Margin used to decide whether a point sits on the boundary of a domain.
pub const DOMAIN_MARGIN: f64 = 1e-12;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Membership {
    Interior,
    Boundary,
    Outside,
}

/// Shape of `dom f`. `Interior` membership is membership in `G`.
#[derive(Clone)]
pub enum DomainSpec {
    AllSpace,
    PositiveOrthant,
    Box { lo: Vec<f64>, hi: Vec<f64> },
    OpenConvex(Arc<dyn Fn(&Point) -> Membership + Send + Sync>),
}

impl fmt::Debug for DomainSpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            DomainSpec::AllSpace => write!(f, "AllSpace"),
            DomainSpec::PositiveOrthant => write!(f, "PositiveOrthant"),
            DomainSpec::Box { lo, hi } => write!(f, "Box {{ lo: {lo:?}, hi: {hi:?} }}"),
            DomainSpec::OpenConvex(_) => write!(f, "OpenConvex(..)"),
        }
    }
}

impl DomainSpec {
    pub fn membership(&self, x: &Point) -> Membership {
        if x.iter().any(|v| !v.is_finite()) {
            return Membership::Outside;
        }
        match self {
            DomainSpec::AllSpace => Membership::Interior,
            DomainSpec::PositiveOrthant => {
                let mut m = Membership::Interior;
                for &v in x.iter() {
                    if v < -DOMAIN_MARGIN {
                        return Membership::Outside;
                    }
                    if v <= DOMAIN_MARGIN {
                        m = Membership::Boundary;
                    }
                }
                m
            }
            DomainSpec::Box { lo, hi } => {
                let mut m = Membership::Interior;
                for ((&v, &l), &h) in x.iter().zip(lo).zip(hi) {
                    if v < l - DOMAIN_MARGIN || v > h + DOMAIN_MARGIN {
                        return Membership::Outside;
                    }
                    if v <= l + DOMAIN_MARGIN || v >= h - DOMAIN_MARGIN {
                        m = Membership::Boundary;
                    }
                }
                m
            }
            DomainSpec::OpenConvex(test) => test(x),
        }
    }

    pub fn is_interior(&self, x: &Point) -> bool {
        self.membership(x) == Membership::Interior
    }

    pub fn contains(&self, x: &Point) -> bool {
        self.membership(x) != Membership::Outside
    }

    /// Signed distance-like margin to the boundary (positive inside); `+∞` for
    /// the whole space. Used to flag iterates creeping towards `∂G`.
    pub fn boundary_margin(&self, x: &Point) -> f64 {
        match self {
            DomainSpec::AllSpace => f64::INFINITY,
            DomainSpec::PositiveOrthant => x.iter().cloned().fold(f64::INFINITY, f64::min),
            DomainSpec::Box { lo, hi } => x
                .iter()
                .zip(lo)
                .zip(hi)
                .map(|((&v, &l), &h)| (v - l).min(h - v))
                .fold(f64::INFINITY, f64::min),
            DomainSpec::OpenConvex(test) => match test(x) {
                Membership::Interior => f64::INFINITY,
                Membership::Boundary => 0.0,
                Membership::Outside => f64::NEG_INFINITY,
            },
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum GeneratorKind {
    Euclidean,
    Negentropy,
    Poisson,
    Gaussian,
    Conjugate,
    Custom,
}

/// A convex function of Legendre type, `C²` on `G` with positive definite Hessian.
///
/// Implementors supply closed forms; nothing here is differentiated numerically.
pub trait Legendre: Send + Sync + fmt::Debug {
    fn name(&self) -> String;
    fn kind(&self) -> GeneratorKind {
        GeneratorKind::Custom
    }
    fn dim(&self) -> usize;
    /// `dom f`; its interior is `G`.
    fn domain(&self) -> DomainSpec;
    /// `dom f*`; its interior is `G* = ∇f(G)`.
    fn conj_domain(&self) -> DomainSpec;

    fn value(&self, x: &Point) -> f64;
    fn grad(&self, x: &Point) -> Point;
    fn hessian(&self, x: &Point) -> DMatrix<f64>;
    fn conj_value(&self, y: &Point) -> f64;
    fn conj_grad(&self, y: &Point) -> Point;

    fn conj_hessian(&self, y: &Point) -> DMatrix<f64> {
        let x = self.conj_grad(y);
        self.hessian(&x)
            .try_inverse()
            .unwrap_or_else(|| DMatrix::from_element(self.dim(), self.dim(), f64::NAN))
    }

    /// Declared, never inferred.
    fn one_coercive(&self) -> bool;
    /// Declarative flag for `C^{2,1}` smoothness; not verified.
    fn lipschitz_hessian(&self) -> bool {
        true
    }
    /// `∇f(x)ᵢ` depends on `xᵢ` only (diagonal Hessian).
    fn separable(&self) -> bool {
        true
    }
    /// Constant Hessian, so that `D` is a symmetric quadratic form.
    fn quadratic(&self) -> bool {
        false
    }

    /// `D(x, y)` without domain checks. Implementors may override with a
    /// cancellation-free closed form.
    fn raw_divergence(&self, x: &Point, y: &Point) -> f64 {
        self.value(x) - self.value(y) - self.grad(y).dot(&(x - y))
    }

    /// `D*(u, v)` without domain checks, computed from `f*` directly.
    fn raw_conj_divergence(&self, u: &Point, v: &Point) -> f64 {
        self.conj_value(u) - self.conj_value(v) - self.conj_grad(v).dot(&(u - v))
    }

    /// For a conjugate wrapper, the generator it wraps.
    fn unwrap_conjugate(&self) -> Option<Generator> {
        None
    }
}

pub type Generator = Arc<dyn Legendre>;

fn diag(v: impl Iterator<Item = f64>, d: usize) -> DMatrix<f64> {
    DMatrix::from_diagonal(&DVector::from_iterator(d, v))
}

#[derive(Clone, Debug)]
pub struct Euclidean {
    pub dim: usize,
}

impl Legendre for Euclidean {
    fn name(&self) -> String {
        "euclidean".into()
    }
    fn kind(&self) -> GeneratorKind {
        GeneratorKind::Euclidean
    }
    fn dim(&self) -> usize {
        self.dim
    }
    fn domain(&self) -> DomainSpec {
        DomainSpec::AllSpace
    }
    fn conj_domain(&self) -> DomainSpec {
        DomainSpec::AllSpace
    }
    fn value(&self, x: &Point) -> f64 {
        0.5 * x.norm_squared()
    }
    fn grad(&self, x: &Point) -> Point {
        x.clone()
    }
    fn hessian(&self, _x: &Point) -> DMatrix<f64> {
        DMatrix::identity(self.dim, self.dim)
    }
    fn conj_value(&self, y: &Point) -> f64 {
        0.5 * y.norm_squared()
    }
    fn conj_grad(&self, y: &Point) -> Point {
        y.clone()
    }
    fn conj_hessian(&self, _y: &Point) -> DMatrix<f64> {
        DMatrix::identity(self.dim, self.dim)
    }
    fn one_coercive(&self) -> bool {
        true
    }
    fn quadratic(&self) -> bool {
        true
    }
    fn raw_divergence(&self, x: &Point, y: &Point) -> f64 {
        0.5 * (x - y).norm_squared()
    }
    fn raw_conj_divergence(&self, u: &Point, v: &Point) -> f64 {
        0.5 * (u - v).norm_squared()
    }
}

/// Boltzmann-Shannon negative entropy; induces the (generalized) Kullback-Leibler divergence.
#[derive(Clone, Debug)]
pub struct NegEntropy {
    pub dim: usize,
}

/// `p log(p/q) − p + q`, written as `q((1+t) log(1+t) − t)` with `t = p/q − 1`
/// when `p ≈ q` so that nearby arguments do not cancel.
fn kl_term(p: f64, q: f64) -> f64 {
    let p = p.max(0.0);
    if p == 0.0 {
        return q;
    }
    let t = (p - q) / q;
    if t.abs() < 1e-2 {
        // Σ_{n≥2} (−t)ⁿ / (n(n−1))
        let mut term = t * t;
        let mut sum = 0.0;
        for n in 2..12 {
            sum += term / (n * (n - 1)) as f64;
            term *= -t;
        }
        q * sum
    } else if t.abs() < 0.5 {
        q * ((1.0 + t) * t.ln_1p() - t)
    } else {
        p * (p / q).ln() - p + q
    }
}

fn xlogx(x: f64) -> f64 {
    if x <= 0.0 {
        0.0
    } else {
        x * x.ln()
    }
}

impl Legendre for NegEntropy {
    fn name(&self) -> String {
        "negentropy".into()
    }
    fn kind(&self) -> GeneratorKind {
        GeneratorKind::Negentropy
    }
    fn dim(&self) -> usize {
        self.dim
    }
    fn domain(&self) -> DomainSpec {
        DomainSpec::PositiveOrthant
    }
    fn conj_domain(&self) -> DomainSpec {
        DomainSpec::AllSpace
    }
    fn value(&self, x: &Point) -> f64 {
        x.iter().map(|&v| xlogx(v) - v.max(0.0)).sum()
    }
    fn grad(&self, x: &Point) -> Point {
        x.map(f64::ln)
    }
    fn hessian(&self, x: &Point) -> DMatrix<f64> {
        diag(x.iter().map(|v| 1.0 / v), self.dim)
    }
    fn conj_value(&self, y: &Point) -> f64 {
        y.iter().map(|v| v.exp()).sum()
    }
    fn conj_grad(&self, y: &Point) -> Point {
        y.map(f64::exp)
    }
    fn conj_hessian(&self, y: &Point) -> DMatrix<f64> {
        diag(y.iter().map(|v| v.exp()), self.dim)
    }
    fn one_coercive(&self) -> bool {
        true
    }
    fn raw_divergence(&self, x: &Point, y: &Point) -> f64 {
        x.iter()
            .zip(y.iter())
            .map(|(&p, &q)| {
                kl_term(p, q)
            })
            .sum()
    }
    fn raw_conj_divergence(&self, u: &Point, v: &Point) -> f64 {
        // Σ e^{vᵢ} (e^{uᵢ−vᵢ} − 1 − (uᵢ − vᵢ))
        u.iter()
            .zip(v.iter())
            .map(|(&a, &b)| {
                let d = a - b;
                b.exp() * (d.exp_m1() - d)
            })
            .sum()
    }
}

/// Log-normalizer of a product of Poisson laws in natural parameters `θ = log λ`.
#[derive(Clone, Debug)]
pub struct PoissonLogNormalizer {
    pub dim: usize,
}

impl Legendre for PoissonLogNormalizer {
    fn name(&self) -> String {
        "poisson".into()
    }
    fn kind(&self) -> GeneratorKind {
        GeneratorKind::Poisson
    }
    fn dim(&self) -> usize {
        self.dim
    }
    fn domain(&self) -> DomainSpec {
        DomainSpec::AllSpace
    }
    fn conj_domain(&self) -> DomainSpec {
        DomainSpec::PositiveOrthant
    }
    fn value(&self, x: &Point) -> f64 {
        x.iter().map(|v| v.exp()).sum()
    }
    fn grad(&self, x: &Point) -> Point {
        x.map(f64::exp)
    }
    fn hessian(&self, x: &Point) -> DMatrix<f64> {
        diag(x.iter().map(|v| v.exp()), self.dim)
    }
    fn conj_value(&self, y: &Point) -> f64 {
        y.iter().map(|&v| xlogx(v) - v.max(0.0)).sum()
    }
    fn conj_grad(&self, y: &Point) -> Point {
        y.map(f64::ln)
    }
    fn conj_hessian(&self, y: &Point) -> DMatrix<f64> {
        diag(y.iter().map(|v| 1.0 / v), self.dim)
    }
    fn one_coercive(&self) -> bool {
        true
    }
    fn raw_divergence(&self, x: &Point, y: &Point) -> f64 {
        x.iter()
            .zip(y.iter())
            .map(|(&a, &b)| {
                let d = a - b;
                b.exp() * (d.exp_m1() - d)
            })
            .sum()
    }
    fn raw_conj_divergence(&self, u: &Point, v: &Point) -> f64 {
        u.iter()
            .zip(v.iter())
            .map(|(&p, &q)| {
                kl_term(p, q)
            })
            .sum()
    }
}

/// Log-normalizer of `N(μ, σ²I)` in natural parameters `θ = μ/σ²`.
#[derive(Clone, Debug)]
pub struct GaussianLogNormalizer {
    pub dim: usize,
    pub sigma: f64,
}

impl Legendre for GaussianLogNormalizer {
    fn name(&self) -> String {
        "gaussian".into()
    }
    fn kind(&self) -> GeneratorKind {
        GeneratorKind::Gaussian
    }
    fn dim(&self) -> usize {
        self.dim
    }
    fn domain(&self) -> DomainSpec {
        DomainSpec::AllSpace
    }
    fn conj_domain(&self) -> DomainSpec {
        DomainSpec::AllSpace
    }
    fn value(&self, x: &Point) -> f64 {
        0.5 * self.sigma * self.sigma * x.norm_squared()
    }
    fn grad(&self, x: &Point) -> Point {
        x * (self.sigma * self.sigma)
    }
    fn hessian(&self, _x: &Point) -> DMatrix<f64> {
        DMatrix::identity(self.dim, self.dim) * (self.sigma * self.sigma)
    }
    fn conj_value(&self, y: &Point) -> f64 {
        0.5 * y.norm_squared() / (self.sigma * self.sigma)
    }
    fn conj_grad(&self, y: &Point) -> Point {
        y / (self.sigma * self.sigma)
    }
    fn conj_hessian(&self, _y: &Point) -> DMatrix<f64> {
        DMatrix::identity(self.dim, self.dim) / (self.sigma * self.sigma)
    }
    fn one_coercive(&self) -> bool {
        true
    }
    fn quadratic(&self) -> bool {
        true
    }
    fn raw_divergence(&self, x: &Point, y: &Point) -> f64 {
        0.5 * self.sigma * self.sigma * (x - y).norm_squared()
    }
    fn raw_conj_divergence(&self, u: &Point, v: &Point) -> f64 {
        0.5 * (u - v).norm_squared() / (self.sigma * self.sigma)
    }
}

/// The conjugate `f*` viewed as a generator: its gradient is `∇f*` and its
/// conjugate gradient is `∇f`.
#[derive(Clone, Debug)]
pub struct Conjugate {
    pub inner: Generator,
}

impl Legendre for Conjugate {
    fn name(&self) -> String {
        format!("conj({})", self.inner.name())
    }
    fn kind(&self) -> GeneratorKind {
        GeneratorKind::Conjugate
    }
    fn dim(&self) -> usize {
        self.inner.dim()
    }
    fn domain(&self) -> DomainSpec {
        self.inner.conj_domain()
    }
    fn conj_domain(&self) -> DomainSpec {
        self.inner.domain()
    }
    fn value(&self, x: &Point) -> f64 {
        self.inner.conj_value(x)
    }
    fn grad(&self, x: &Point) -> Point {
        self.inner.conj_grad(x)
    }
    fn hessian(&self, x: &Point) -> DMatrix<f64> {
        self.inner.conj_hessian(x)
    }
    fn conj_value(&self, y: &Point) -> f64 {
        self.inner.value(y)
    }
    fn conj_grad(&self, y: &Point) -> Point {
        self.inner.grad(y)
    }
    fn conj_hessian(&self, y: &Point) -> DMatrix<f64> {
        self.inner.hessian(y)
    }
    fn one_coercive(&self) -> bool {
        self.inner.one_coercive()
    }
    fn lipschitz_hessian(&self) -> bool {
        self.inner.lipschitz_hessian()
    }
    fn separable(&self) -> bool {
        self.inner.separable()
    }
    fn quadratic(&self) -> bool {
        self.inner.quadratic()
    }
    fn raw_divergence(&self, x: &Point, y: &Point) -> f64 {
        self.inner.raw_conj_divergence(x, y)
    }
    fn raw_conj_divergence(&self, u: &Point, v: &Point) -> f64 {
        self.inner.raw_divergence(u, v)
    }
    fn unwrap_conjugate(&self) -> Option<Generator> {
        Some(self.inner.clone())
    }
}

/// Borrowed conjugate view used internally where only `&dyn Legendre` is at hand.
#[derive(Debug)]
pub(crate) struct ConjView<'a>(pub &'a dyn Legendre);

impl Legendre for ConjView<'_> {
    fn name(&self) -> String {
        format!("conj({})", self.0.name())
    }
    fn kind(&self) -> GeneratorKind {
        GeneratorKind::Conjugate
    }
    fn dim(&self) -> usize {
        self.0.dim()
    }
    fn domain(&self) -> DomainSpec {
        self.0.conj_domain()
    }
    fn conj_domain(&self) -> DomainSpec {
        self.0.domain()
    }
    fn value(&self, x: &Point) -> f64 {
        self.0.conj_value(x)
    }
    fn grad(&self, x: &Point) -> Point {
        self.0.conj_grad(x)
    }
    fn hessian(&self, x: &Point) -> DMatrix<f64> {
        self.0.conj_hessian(x)
    }
    fn conj_value(&self, y: &Point) -> f64 {
        self.0.value(y)
    }
    fn conj_grad(&self, y: &Point) -> Point {
        self.0.grad(y)
    }
    fn conj_hessian(&self, y: &Point) -> DMatrix<f64> {
        self.0.hessian(y)
    }
    fn one_coercive(&self) -> bool {
        self.0.one_coercive()
    }
    fn separable(&self) -> bool {
        self.0.separable()
    }
    fn quadratic(&self) -> bool {
        self.0.quadratic()
    }
    fn raw_divergence(&self, x: &Point, y: &Point) -> f64 {
        self.0.raw_conj_divergence(x, y)
    }
    fn raw_conj_divergence(&self, u: &Point, v: &Point) -> f64 {
        self.0.raw_divergence(u, v)
    }
}

/// Conjugate generator; conjugating a [`Conjugate`] returns the original.
pub fn conjugate(gen: &Generator) -> Generator {
    gen.unwrap_conjugate()
        .unwrap_or_else(|| Arc::new(Conjugate { inner: gen.clone() }))
}

pub fn euclidean(dim: usize) -> Generator {
    Arc::new(Euclidean { dim })
}

pub fn negentropy(dim: usize) -> Generator {
    Arc::new(NegEntropy { dim })
}

pub fn poisson(dim: usize) -> Generator {
    Arc::new(PoissonLogNormalizer { dim })
}

pub fn gaussian(dim: usize, sigma: f64) -> Generator {
    Arc::new(GaussianLogNormalizer { dim, sigma })
}

#[derive(Clone, Debug, Default, Serialize, Deserialize, PartialEq)]
pub struct GeneratorParams {
    #[serde(default)]
    pub sigma: Option<f64>,
}

pub const GENERATOR_NAMES: [&str; 4] = ["euclidean", "negentropy", "poisson", "gaussian"];

/// Look up a shipped generator by its config name.
pub fn by_name(name: &str, dim: usize, params: &GeneratorParams) -> Result<Generator> {
    if dim == 0 {
        return Err(Error::Config("generator dimension must be positive".into()));
    }
    match name {
        "euclidean" => Ok(euclidean(dim)),
        "negentropy" | "kl" => Ok(negentropy(dim)),
        "poisson" => Ok(poisson(dim)),
        "gaussian" => {
            let sigma = params.sigma.unwrap_or(1.0);
            if !(sigma.is_finite() && sigma > 0.0) {
                return Err(Error::Config(format!("gaussian sigma must be positive, got {sigma}")));
            }
            Ok(gaussian(dim, sigma))
        }
        other => Err(Error::Config(format!("unknown generator '{other}'"))),
    }
}

fn require_interior(dom: &DomainSpec, y: &Point, what: &str) -> Result<()> {
    if dom.is_interior(y) {
        Ok(())
    } else {
        Err(Error::domain(format!("{what} must lie in the interior of the domain, got {:?}", y.as_slice())))
    }
}

fn require_domain(dom: &DomainSpec, x: &Point, what: &str) -> Result<()> {
    if dom.contains(x) {
        Ok(())
    } else {
        Err(Error::domain(format!("{what} lies outside the domain: {:?}", x.as_slice())))
    }
}

/// Bregman divergence `D(x, y) = f(x) − f(y) − ⟨∇f(y), x − y⟩`.
///
/// `x` may sit on the boundary of `dom f`; `y` must be in `G`.
pub fn divergence(gen: &dyn Legendre, x: &Point, y: &Point) -> Result<f64> {
    check_dim(gen.dim(), x.len())?;
    check_dim(gen.dim(), y.len())?;
    let dom = gen.domain();
    require_interior(&dom, y, "second argument")?;
    require_domain(&dom, x, "first argument")?;
    Ok(gen.raw_divergence(x, y).max(0.0))
}

/// `D*(u, v)` for the conjugate generator, with `u, v ∈ G*`.
pub fn dual_divergence(gen: &dyn Legendre, u: &Point, v: &Point) -> Result<f64> {
    check_dim(gen.dim(), u.len())?;
    check_dim(gen.dim(), v.len())?;
    let dom = gen.conj_domain();
    require_interior(&dom, u, "first dual argument")?;
    require_interior(&dom, v, "second dual argument")?;
    Ok(gen.raw_conj_divergence(u, v).max(0.0))
}

/// `∇f(x)` with `x ∈ G` checked.
pub fn gradient(gen: &dyn Legendre, x: &Point) -> Result<Point> {
    check_dim(gen.dim(), x.len())?;
    require_interior(&gen.domain(), x, "point")?;
    Ok(gen.grad(x))
}

/// `∇f*(y)` with `y ∈ G*` checked.
pub fn conj_gradient(gen: &dyn Legendre, y: &Point) -> Result<Point> {
    check_dim(gen.dim(), y.len())?;
    require_interior(&gen.conj_domain(), y, "dual point")?;
    Ok(gen.conj_grad(y))
}

/// Hessian-weighted norm `√⟨v, ∇²f(base) v⟩`.
pub fn mobile_norm(gen: &dyn Legendre, base: &Point, v: &Point) -> Result<f64> {
    check_dim(gen.dim(), base.len())?;
    check_dim(gen.dim(), v.len())?;
    require_interior(&gen.domain(), base, "base point")?;
    let h = gen.hessian(base);
    Ok(v.dot(&(h * v)).max(0.0).sqrt())
}

/// Sample-based constants relating divergence, gradients and the euclidean norm.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct NormBounds {
    /// `m² ‖x−y‖² ≤ D(x,y)`, with `m = √(λ_min/2)`.
    pub m: f64,
    /// `D(x,y) ≤ M² ‖x−y‖²`, with `M = √(λ_max/2)`.
    pub big_m: f64,
    /// `l ‖x−y‖ ≤ ‖∇f(x) − ∇f(y)‖`, with `l = λ_min`.
    pub l: f64,
    /// `‖∇f(x) − ∇f(y)‖ ≤ L ‖x−y‖`, with `L = λ_max`.
    pub big_l: f64,
    pub lambda_min: f64,
    pub lambda_max: f64,
}

/// Hessian eigenvalue range over the sample and the divergence/gradient
/// constants derived from it. Valid on the sampled hull only insofar as the
/// extreme eigenvalues are attained at sample points.
pub fn estimate_norm_bounds(gen: &dyn Legendre, samples: &[Point]) -> Result<NormBounds> {
    if samples.is_empty() {
        return Err(Error::EmptySample);
    }
    let dom = gen.domain();
    let mut lo = f64::INFINITY;
    let mut hi = f64::NEG_INFINITY;
    for x in samples {
        check_dim(gen.dim(), x.len())?;
        require_interior(&dom, x, "sample")?;
        let eig = SymmetricEigen::new(gen.hessian(x)).eigenvalues;
        lo = lo.min(eig.min());
        hi = hi.max(eig.max());
    }
    if !(lo > 0.0) {
        return Err(Error::domain("Hessian is not positive definite on the sample"));
    }
    Ok(NormBounds {
        m: (lo / 2.0).sqrt(),
        big_m: (hi / 2.0).sqrt(),
        l: lo,
        big_l: hi,
        lambda_min: lo,
        lambda_max: hi,
    })
}
