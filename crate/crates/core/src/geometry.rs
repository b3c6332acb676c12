//! Bregman balls, geodesics, proximal normals, curvature bounds and reach.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::alternator::Block;
use crate::error::{check_dim, Error, Result};
use crate::legendre::Legendre;
use crate::sets::{left_project, ProjectOptions, SetSpec, Shape};
use crate::solver::{minimize_box, SolverOptions};
use crate::Point;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum BallSide {
    /// `{x : D(x, center) ≤ ½r²}`.
    Left,
    /// `{x : D(center, x) ≤ ½r²}`.
    Right,
}

#[derive(Clone, Debug, PartialEq)]
pub struct BregmanBall {
    pub side: BallSide,
    pub center: Point,
    pub radius: f64,
}

impl BregmanBall {
    pub fn left(center: Point, radius: f64) -> Self {
        BregmanBall { side: BallSide::Left, center, radius }
    }

    pub fn right(center: Point, radius: f64) -> Self {
        BregmanBall { side: BallSide::Right, center, radius }
    }

    /// Divergence level `½r²` of the boundary.
    pub fn level(&self) -> f64 {
        0.5 * self.radius * self.radius
    }

    /// Divergence of `x` measured from the center on the ball's side.
    pub fn divergence_to(&self, gen: &dyn Legendre, x: &Point) -> Result<f64> {
        match self.side {
            BallSide::Left => crate::legendre::divergence(gen, x, &self.center),
            BallSide::Right => crate::legendre::divergence(gen, &self.center, x),
        }
    }

    /// Closed-ball membership with a `1e−12` slack.
    pub fn contains(&self, gen: &dyn Legendre, x: &Point) -> Result<bool> {
        let dom = gen.domain();
        let inside_dom = match self.side {
            BallSide::Left => dom.contains(x),
            BallSide::Right => dom.is_interior(x),
        };
        if !inside_dom {
            return Ok(false);
        }
        Ok(self.divergence_to(gen, x)? <= self.level() + 1e-12)
    }
}

/// `∇f*(λ∇f(a⁺) + (1−λ)∇f(b⁺))`: `b⁺` at `λ = 0`, `a⁺` at `λ = 1`.
pub fn left_geodesic(gen: &dyn Legendre, b_plus: &Point, a_plus: &Point, lambda: f64) -> Result<Point> {
    let gb = crate::legendre::gradient(gen, b_plus)?;
    let ga = crate::legendre::gradient(gen, a_plus)?;
    let y = &ga * lambda + &gb * (1.0 - lambda);
    if !gen.conj_domain().is_interior(&y) {
        return Err(Error::domain(format!("left geodesic leaves G* at λ = {lambda}")));
    }
    Ok(gen.conj_grad(&y))
}

/// `λb + (1−λ)a⁺`.
pub fn right_geodesic(b: &Point, a_plus: &Point, lambda: f64) -> Point {
    b * lambda + a_plus * (1.0 - lambda)
}

/// `n_B = ∇f(a⁺) − ∇f(b⁺)`, a proximal normal to `B` at `b⁺`, and
/// `n_A = ∇²f(a⁺)(b − a⁺)`, a proximal normal to `A` at `a⁺`.
pub fn proximal_normals(gen: &dyn Legendre, block: &Block) -> Result<(Point, Point)> {
    let ga = crate::legendre::gradient(gen, &block.a_plus)?;
    let gb = crate::legendre::gradient(gen, &block.b_plus)?;
    let n_b = ga - gb;
    let n_a = gen.hessian(&block.a_plus) * (&block.b - &block.a_plus);
    Ok((n_b, n_a))
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CurvatureBounds {
    pub kappa_lo: f64,
    pub kappa_hi: f64,
    /// `1/kappa_hi`: a euclidean ball of this radius rolls freely inside.
    pub inner_radius: f64,
    /// `1/kappa_lo`.
    pub outer_radius: f64,
}

pub const TANGENT_DIRECTIONS: usize = 32;

/// Deterministic unit directions: equally spaced in the plane, a
/// golden-angle spiral on the sphere, coordinate mixes beyond.
fn sphere_directions(dim: usize, count: usize) -> Vec<Point> {
    match dim {
        1 => [1.0, -1.0].iter().take(count.max(1)).map(|&s| DVector::from_element(1, s)).collect(),
        2 => (0..count)
            .map(|i| {
                let t = 2.0 * std::f64::consts::PI * i as f64 / count as f64;
                DVector::from_vec(vec![t.cos(), t.sin()])
            })
            .collect(),
        _ => {
            let golden = std::f64::consts::PI * (3.0 - 5f64.sqrt());
            (0..count)
                .map(|i| {
                    let z = 1.0 - 2.0 * (i as f64 + 0.5) / count as f64;
                    let r = (1.0 - z * z).sqrt();
                    let t = golden * i as f64;
                    let mut v = DVector::zeros(dim);
                    v[0] = r * t.cos();
                    v[1] = r * t.sin();
                    v[2] = z;
                    for j in 3..dim {
                        v[j] = ((j * (i + 1)) as f64).sin() * 0.5;
                    }
                    v.normalize()
                })
                .collect()
        }
    }
}

/// Orthonormal basis of the complement of `n` (columns).
fn tangent_basis(n: &Point) -> DMatrix<f64> {
    let d = n.len();
    let unit = n.normalize();
    let proj = DMatrix::<f64>::identity(d, d) - &unit * unit.transpose();
    let eig = nalgebra::SymmetricEigen::new(proj);
    let keep: Vec<usize> = (0..d).filter(|&i| eig.eigenvalues[i] > 0.5).collect();
    DMatrix::from_fn(d, keep.len(), |r, c| eig.eigenvectors[(r, keep[c])])
}

/// Point on the boundary of the left ball along the ray `center + t·dir`.
fn boundary_along(gen: &dyn Legendre, ball: &BregmanBall, dir: &Point) -> Result<Point> {
    let dom = gen.domain();
    let level = ball.level();
    let phi = |t: f64| {
        let x = &ball.center + dir * t;
        if !dom.is_interior(&x) {
            return None;
        }
        Some(gen.raw_divergence(&x, &ball.center))
    };
    let mut hi = ball.radius.max(1e-300);
    let mut lo = 0.0;
    loop {
        match phi(hi) {
            None => return Err(Error::domain("ball is not contained in G")),
            Some(v) if v >= level => break,
            Some(_) => {
                lo = hi;
                hi *= 2.0;
                if hi > 1e12 {
                    return Err(Error::domain("ball boundary not reached along a ray"));
                }
            }
        }
    }
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if mid <= lo || mid >= hi {
            break;
        }
        match phi(mid) {
            Some(v) if v < level => lo = mid,
            _ => hi = mid,
        }
    }
    Ok(&ball.center + dir * (0.5 * (lo + hi)))
}

/// Extreme normal curvatures `⟨v,∇²f(x)v⟩ / ‖∇f(x) − ∇f(center)‖` of a left
/// ball over sampled boundary points and unit tangent directions.
pub fn curvature_bounds(gen: &dyn Legendre, ball: &BregmanBall, boundary_samples: usize) -> Result<CurvatureBounds> {
    if ball.side != BallSide::Left {
        return Err(Error::Unsupported("curvature bounds are defined for left balls".into()));
    }
    if !(ball.radius > 0.0) {
        return Err(Error::DegenerateBall);
    }
    check_dim(gen.dim(), ball.center.len())?;
    if !gen.domain().is_interior(&ball.center) {
        return Err(Error::domain("ball center must lie in G"));
    }
    let d = gen.dim();
    if d < 2 {
        return Err(Error::Unsupported("curvature needs dimension at least two".into()));
    }
    let gc = gen.grad(&ball.center);
    let mut lo = f64::INFINITY;
    let mut hi = f64::NEG_INFINITY;
    for dir in sphere_directions(d, boundary_samples.max(1)) {
        let x = boundary_along(gen, ball, &dir)?;
        let n = gen.grad(&x) - &gc;
        let nn = n.norm();
        let h = gen.hessian(&x);
        let basis = tangent_basis(&n);
        let tangents: Vec<Point> = if basis.ncols() == 1 {
            vec![basis.column(0).into_owned()]
        } else {
            sphere_directions(basis.ncols(), TANGENT_DIRECTIONS).iter().map(|c| &basis * c).collect()
        };
        for v in tangents {
            let k = v.dot(&(&h * &v)) / nn;
            lo = lo.min(k);
            hi = hi.max(k);
        }
    }
    Ok(CurvatureBounds { kappa_lo: lo, kappa_hi: hi, inner_radius: 1.0 / hi, outer_radius: 1.0 / lo })
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ReachMethod {
    BisectionOnGeodesic,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ReachOptions {
    /// Grid points used to search the set for intruders.
    pub grid: usize,
    pub radius_tol: f64,
    pub lambda_cap: f64,
}

impl Default for ReachOptions {
    fn default() -> Self {
        ReachOptions { grid: 1000, radius_tol: 1e-6, lambda_cap: 1e6 }
    }
}

/// One probe along the geodesic: `(λ, r_λ, interior empty)`.
pub type ReachProbe = (f64, f64, bool);

#[derive(Clone, Debug, PartialEq)]
pub struct ReachEstimate {
    /// Largest radius with an empty ball interior; `+∞` past the λ cap.
    pub value: f64,
    /// Geodesic parameter of the reported ball.
    pub lambda: f64,
    /// Unit vector along `∇²f(b⁺)⁻¹(∇f(a⁺) − ∇f(b⁺))`.
    pub direction: Point,
    pub method: ReachMethod,
    pub samples_used: usize,
    pub probes: Vec<ReachProbe>,
}

struct Intruders<'a> {
    gen: &'a dyn Legendre,
    set: &'a SetSpec,
    b_plus: &'a Point,
    opts: &'a ReachOptions,
    evaluations: usize,
}

impl Intruders<'_> {
    /// Smallest `D(x, center)` over the set, searched on a grid plus local
    /// solves started next to `b⁺` and at the best grid points.
    fn min_divergence(&mut self, center: &Point) -> Result<f64> {
        let gen = self.gen;
        let dom = gen.domain();
        match &self.set.shape {
            Shape::FiniteSet { points } => {
                self.evaluations += points.len();
                Ok(points
                    .iter()
                    .map(|p| DVector::from_column_slice(p))
                    .filter(|p| dom.contains(p))
                    .map(|p| gen.raw_divergence(&p, center))
                    .fold(f64::INFINITY, f64::min))
            }
            Shape::Parametric { .. } => {
                let (g, bounds) = self.set.parametric_parts()?;
                let gc = gen.grad(center);
                let value = |u: &Point| {
                    let x = g.eval(u);
                    if dom.contains(&x) {
                        gen.raw_divergence(&x, center)
                    } else {
                        f64::INFINITY
                    }
                };
                let gradient = |u: &Point| {
                    let x = g.eval(u);
                    let j = g.jacobian(u);
                    let diff = gen.grad(&x) - &gc;
                    DVector::from_fn(j.ncols(), |c, _| {
                        (0..j.nrows()).filter(|&r| j[(r, c)] != 0.0).map(|r| j[(r, c)] * diff[r]).sum()
                    })
                };
                let k = g.param_dim();
                let u_plus = crate::sets::locate_param(&g, &bounds, self.b_plus, &ProjectOptions::default())?;
                let span = &bounds.hi - &bounds.lo;
                let mut starts = Vec::new();
                for scale in [1e-4, 1e-3, 1e-2, 1e-1] {
                    for c in 0..k {
                        for s in [-1.0, 1.0] {
                            let mut u = u_plus.clone();
                            let w = if span[c].is_finite() { span[c] } else { 1.0 };
                            u[c] += s * scale * w;
                            starts.push(bounds.clamp(&u));
                        }
                    }
                }
                let per = ((self.opts.grid as f64).powf(1.0 / k as f64).round() as usize).max(2);
                let mut best = f64::INFINITY;
                if bounds.is_finite() && k <= 3 {
                    let total = per.pow(k as u32);
                    let mut scored = Vec::with_capacity(total);
                    for flat in 0..total {
                        let mut rem = flat;
                        let u = DVector::from_fn(k, |i, _| {
                            let idx = rem % per;
                            rem /= per;
                            bounds.lo[i] + span[i] * idx as f64 / (per - 1) as f64
                        });
                        let v = value(&u);
                        best = best.min(v);
                        scored.push((v, u));
                    }
                    self.evaluations += total;
                    scored.sort_by(|x, y| x.0.total_cmp(&y.0));
                    starts.extend(scored.into_iter().take(4).map(|(_, u)| u));
                }
                let sopts = SolverOptions { grad_tol: 1e-12, ..SolverOptions::default() };
                for s in starts {
                    if let Ok(m) = minimize_box(&(value, gradient), &bounds, &s, &sopts) {
                        self.evaluations += m.report.iterations + 1;
                        best = best.min(m.value);
                    }
                }
                Ok(best)
            }
            _ => Err(Error::Unsupported(format!("reach estimation on a {} set", self.set.variant_name()))),
        }
    }

    /// Whether the left ball through `b⁺` centered at `center` has an empty interior.
    fn empty(&mut self, center: &Point) -> Result<(bool, f64)> {
        let level = self.gen.raw_divergence(self.b_plus, center);
        let m = self.min_divergence(center)?;
        Ok((m >= level - 1e-12 * (1.0 + level), level))
    }
}

/// Left Bregman reach of `B` at `b⁺` in the direction fixed by `a⁺`.
///
/// Walks the left geodesic `λ ↦ ∇f*(λ∇f(a⁺) + (1−λ)∇f(b⁺))` for `λ ≥ 1`,
/// doubling `λ` until a point of `B` enters the open ball through `b⁺`, then
/// bisects on `λ` until the radius is resolved to `radius_tol`.
pub fn estimate_reach(
    gen: &dyn Legendre,
    set: &SetSpec,
    b_plus: &Point,
    a_plus: &Point,
    opts: &ReachOptions,
) -> Result<ReachEstimate> {
    check_dim(gen.dim(), b_plus.len())?;
    check_dim(gen.dim(), a_plus.len())?;
    let proj = left_project(gen, set, a_plus)?;
    let d_plus = crate::legendre::divergence(gen, b_plus, a_plus)?;
    if proj.divergence_value < d_plus - 1e-10 * (1.0 + d_plus) || !set.contains(gen, b_plus) {
        return Err(Error::NotProjectedOn(format!(
            "{:?} is not a left projection of {:?}",
            b_plus.as_slice(),
            a_plus.as_slice()
        )));
    }
    let normal = gen.grad(a_plus) - gen.grad(b_plus);
    let dir = gen
        .hessian(b_plus)
        .cholesky()
        .map(|c| c.solve(&normal))
        .unwrap_or_else(|| normal.clone());
    let direction = if dir.norm() > 0.0 { dir.normalize() } else { dir };
    let mut search = Intruders { gen, set, b_plus, opts, evaluations: 0 };
    let mut probes = Vec::new();
    let radius = |level: f64| (2.0 * level.max(0.0)).sqrt();

    let mut lam_ok = 1.0;
    let (_, level_ok) = search.empty(&left_geodesic(gen, b_plus, a_plus, 1.0)?)?;
    probes.push((1.0, radius(level_ok), true));
    let mut r_ok = radius(level_ok);
    let mut lam_bad = f64::NAN;
    let mut lam = 2.0;
    while lam <= opts.lambda_cap {
        let center = left_geodesic(gen, b_plus, a_plus, lam)?;
        let (empty, level) = search.empty(&center)?;
        probes.push((lam, radius(level), empty));
        if empty {
            lam_ok = lam;
            r_ok = radius(level);
            lam *= 2.0;
        } else {
            lam_bad = lam;
            break;
        }
    }
    if lam_bad.is_nan() {
        return Ok(ReachEstimate {
            value: f64::INFINITY,
            lambda: f64::INFINITY,
            direction,
            method: ReachMethod::BisectionOnGeodesic,
            samples_used: search.evaluations,
            probes,
        });
    }
    let mut r_bad = radius(gen.raw_divergence(b_plus, &left_geodesic(gen, b_plus, a_plus, lam_bad)?));
    for _ in 0..200 {
        if r_bad - r_ok <= opts.radius_tol {
            break;
        }
        let mid = 0.5 * (lam_ok + lam_bad);
        let center = left_geodesic(gen, b_plus, a_plus, mid)?;
        let (empty, level) = search.empty(&center)?;
        probes.push((mid, radius(level), empty));
        if empty {
            lam_ok = mid;
            r_ok = radius(level);
        } else {
            lam_bad = mid;
            r_bad = radius(level);
        }
    }
    Ok(ReachEstimate {
        value: r_ok,
        lambda: lam_ok,
        direction,
        method: ReachMethod::BisectionOnGeodesic,
        samples_used: search.evaluations,
        probes,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::legendre::{euclidean, negentropy};
    use approx::assert_abs_diff_eq;

    fn p(v: &[f64]) -> Point {
        DVector::from_column_slice(v)
    }

    #[test]
    fn geodesic_endpoints() {
        let g = negentropy(2);
        let (b, a) = (p(&[0.5, 0.5]), p(&[0.25, 0.75]));
        assert!((left_geodesic(g.as_ref(), &b, &a, 0.0).unwrap() - &b).amax() < 1e-15);
        assert!((left_geodesic(g.as_ref(), &b, &a, 1.0).unwrap() - &a).amax() < 1e-15);
        let e = euclidean(2);
        assert_eq!(left_geodesic(e.as_ref(), &p(&[0.0, 0.0]), &p(&[2.0, 0.0]), 0.5).unwrap(), p(&[1.0, 0.0]));
        assert_eq!(right_geodesic(&p(&[0.0, 2.0]), &p(&[0.0, 0.0]), 0.5), p(&[0.0, 1.0]));
    }

    #[test]
    fn normals() {
        let blk = Block {
            a: None,
            b: p(&[0.3, 0.9]),
            a_plus: p(&[0.25, 0.75]),
            b_plus: p(&[0.5, 0.5]),
            d_b_a: f64::NAN,
            d_b_aplus: 0.0,
            d_bplus_aplus: 0.0,
        };
        let (nb, _) = proximal_normals(negentropy(2).as_ref(), &blk).unwrap();
        assert_abs_diff_eq!(nb[0], 0.5f64.ln(), epsilon = 1e-15);
        assert_abs_diff_eq!(nb[1], 1.5f64.ln(), epsilon = 1e-15);
        let (nb, na) = proximal_normals(euclidean(2).as_ref(), &blk).unwrap();
        assert_eq!(nb, &blk.a_plus - &blk.b_plus);
        assert_eq!(na, &blk.b - &blk.a_plus);
        let fixed = Block { b: blk.a_plus.clone(), ..blk };
        assert_eq!(proximal_normals(euclidean(2).as_ref(), &fixed).unwrap().1, p(&[0.0, 0.0]));
    }

    #[test]
    fn euclidean_ball_curvature_is_inverse_radius() {
        let c = curvature_bounds(euclidean(2).as_ref(), &BregmanBall::left(p(&[1.0, -1.0]), 0.5), 16).unwrap();
        assert_abs_diff_eq!(c.kappa_lo, 2.0, epsilon = 1e-9);
        assert_abs_diff_eq!(c.kappa_hi, 2.0, epsilon = 1e-9);
        let c3 = curvature_bounds(euclidean(3).as_ref(), &BregmanBall::left(p(&[0.0, 0.0, 0.0]), 2.0), 8).unwrap();
        assert_abs_diff_eq!(c3.kappa_lo, 0.5, epsilon = 1e-9);
        assert_abs_diff_eq!(c3.kappa_hi, 0.5, epsilon = 1e-9);
    }

    #[test]
    fn negentropy_ball_flattens_towards_round() {
        let g = negentropy(2);
        let big = curvature_bounds(g.as_ref(), &BregmanBall::left(p(&[1.0, 1.0]), 0.5), 64).unwrap();
        let small = curvature_bounds(g.as_ref(), &BregmanBall::left(p(&[1.0, 1.0]), 0.01), 64).unwrap();
        assert!(big.kappa_hi >= big.kappa_lo);
        assert!(small.kappa_hi / small.kappa_lo < big.kappa_hi / big.kappa_lo);
        assert!(small.kappa_hi / small.kappa_lo < 1.05);
        let one = curvature_bounds(g.as_ref(), &BregmanBall::left(p(&[1.0, 1.0]), 0.5), 1).unwrap();
        assert_eq!(one.kappa_lo, one.kappa_hi);
    }

    #[test]
    fn degenerate_ball() {
        let r = curvature_bounds(euclidean(2).as_ref(), &BregmanBall::left(p(&[0.0, 0.0]), 0.0), 4);
        assert_eq!(r, Err(Error::DegenerateBall));
    }

    #[test]
    fn reach_of_line_is_infinite() {
        let set = SetSpec::parametric("line", vec![0.0, 0.0, 1.0, 0.0], vec![-5.0], vec![5.0]);
        let r = estimate_reach(euclidean(2).as_ref(), &set, &p(&[0.3, 0.0]), &p(&[0.3, 0.5]), &Default::default())
            .unwrap();
        assert_eq!(r.value, f64::INFINITY);
    }

    #[test]
    fn reach_of_unit_circle() {
        let set = SetSpec::parametric("circle", vec![0.0, 0.0, 1.0], vec![-3.2], vec![3.2]);
        let g = euclidean(2);
        let inside = estimate_reach(g.as_ref(), &set, &p(&[1.0, 0.0]), &p(&[0.5, 0.0]), &Default::default()).unwrap();
        assert_abs_diff_eq!(inside.value, 1.0, epsilon = 1e-5);
        assert_abs_diff_eq!(inside.direction[0], -1.0, epsilon = 1e-12);
        let outside = estimate_reach(g.as_ref(), &set, &p(&[1.0, 0.0]), &p(&[2.0, 0.0]), &Default::default()).unwrap();
        assert_eq!(outside.value, f64::INFINITY);
    }

    #[test]
    fn reach_requires_projection() {
        let set = SetSpec::parametric("circle", vec![0.0, 0.0, 1.0], vec![-3.2], vec![3.2]);
        let r = estimate_reach(euclidean(2).as_ref(), &set, &p(&[0.0, 1.0]), &p(&[2.0, 0.0]), &Default::default());
        assert!(matches!(r, Err(Error::NotProjectedOn(_))));
    }
}
