//! Box-constrained local minimization used by every projection that has no
//! closed form.
//!
//! Projected gradient with Barzilai-Borwein trial steps and monotone Armijo
//! backtracking along the projection arc. Once the line search stalls on
//! rounding noise, a projected Newton phase (finite-difference Hessian of the
//! analytic gradient, free variables only) drives the projected gradient down
//! to the requested tolerance. The returned point never has a larger objective
//! than the start.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::Point;

pub trait Objective {
    /// `+∞` outside the objective's domain.
    fn value(&self, u: &Point) -> f64;
    fn gradient(&self, u: &Point) -> Point;
}

impl<F, G> Objective for (F, G)
where
    F: Fn(&Point) -> f64,
    G: Fn(&Point) -> Point,
{
    fn value(&self, u: &Point) -> f64 {
        (self.0)(u)
    }
    fn gradient(&self, u: &Point) -> Point {
        (self.1)(u)
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SolverOptions {
    pub grad_tol: f64,
    pub max_iters: usize,
    pub newton_polish: bool,
    /// Cap on the sup-norm of a single gradient step; keeps descent local.
    #[serde(default)]
    pub max_step: Option<f64>,
}

impl Default for SolverOptions {
    fn default() -> Self {
        SolverOptions {
            grad_tol: 1e-10,
            max_iters: 10_000,
            newton_polish: true,
            max_step: None,
        }
    }
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct SolverReport {
    pub iterations: usize,
    pub grad_norm: f64,
    pub converged: bool,
}

#[derive(Clone, Debug)]
pub struct Minimum {
    pub point: Point,
    pub value: f64,
    pub report: SolverReport,
}

#[derive(Clone, Debug)]
pub struct Bounds {
    pub lo: Point,
    pub hi: Point,
}

impl Bounds {
    pub fn new(lo: Point, hi: Point) -> Self {
        Bounds { lo, hi }
    }

    pub fn unbounded(dim: usize) -> Self {
        Bounds {
            lo: DVector::from_element(dim, f64::NEG_INFINITY),
            hi: DVector::from_element(dim, f64::INFINITY),
        }
    }

    pub fn dim(&self) -> usize {
        self.lo.len()
    }

    pub fn clamp(&self, u: &Point) -> Point {
        DVector::from_iterator(
            u.len(),
            u.iter()
                .zip(self.lo.iter().zip(self.hi.iter()))
                .map(|(&v, (&l, &h))| v.max(l).min(h)),
        )
    }

    pub fn is_finite(&self) -> bool {
        self.lo.iter().chain(self.hi.iter()).all(|v| v.is_finite())
    }

    pub fn center(&self) -> Point {
        DVector::from_iterator(
            self.dim(),
            self.lo.iter().zip(self.hi.iter()).map(|(&l, &h)| match (l.is_finite(), h.is_finite()) {
                (true, true) => 0.5 * (l + h),
                (true, false) => l,
                (false, true) => h,
                (false, false) => 0.0,
            }),
        )
    }
}

fn projected_gradient(bounds: &Bounds, u: &Point, g: &Point) -> Point {
    bounds.clamp(&(u - g)) - u
}

fn active_mask(bounds: &Bounds, u: &Point, g: &Point) -> Vec<bool> {
    (0..u.len())
        .map(|i| {
            let span = 1e-14 * (1.0 + u[i].abs());
            (u[i] <= bounds.lo[i] + span && g[i] > 0.0) || (u[i] >= bounds.hi[i] - span && g[i] < 0.0)
        })
        .collect()
}

/// SPG iterations between damped Newton phases.
const NEWTON_EVERY: usize = 200;
const ARMIJO_C: f64 = 1e-4;

/// Minimize `obj` over the box starting from `start` (clamped into the box).
pub fn minimize_box(obj: &dyn Objective, bounds: &Bounds, start: &Point, opts: &SolverOptions) -> Result<Minimum> {
    let mut u = bounds.clamp(start);
    let mut f = obj.value(&u);
    if !f.is_finite() {
        return Err(Error::SolverFailure(format!(
            "objective is not finite at the start point {:?}",
            u.as_slice()
        )));
    }
    let start_u = u.clone();
    let start_f = f;

    let mut g = obj.gradient(&u);
    let mut pg_norm = projected_gradient(bounds, &u, &g).norm();
    let mut prev: Option<(Point, Point)> = None;
    let mut iterations = 0;
    let mut stalled = false;

    while pg_norm > opts.grad_tol && iterations < opts.max_iters {
        if !g.iter().all(|v| v.is_finite()) {
            stalled = true;
            break;
        }
        iterations += 1;
        let mut t = match &prev {
            Some((s, y)) => {
                let sy = s.dot(y);
                if sy > 0.0 {
                    s.norm_squared() / sy
                } else {
                    1.0 / g.amax().max(1.0)
                }
            }
            None => 1.0 / g.amax().max(1.0),
        }
        .clamp(1e-12, 1e12);
        if let Some(cap) = opts.max_step {
            t = t.min(cap / g.amax().max(f64::MIN_POSITIVE));
        }

        let mut accepted = None;
        for _ in 0..60 {
            let trial = bounds.clamp(&(&u - &g * t));
            let d = &trial - &u;
            if d.amax() == 0.0 {
                break;
            }
            let ft = obj.value(&trial);
            if ft.is_finite() && ft <= f + ARMIJO_C * g.dot(&d) {
                accepted = Some((trial, ft));
                break;
            }
            t *= 0.5;
        }
        if accepted.is_some() && opts.newton_polish && u.len() <= 64 && iterations % NEWTON_EVERY == 0 {
            let (next, fnext) = accepted.take().expect("checked above");
            let gnext = obj.gradient(&next);
            let (nu, nf, ng, steps) = newton_descent(obj, bounds, next, fnext, gnext, opts.grad_tol);
            iterations += steps;
            prev = None;
            u = nu;
            f = nf;
            g = ng;
            pg_norm = projected_gradient(bounds, &u, &g).norm();
            continue;
        }
        match accepted {
            Some((next, fnext)) => {
                let gnext = obj.gradient(&next);
                prev = Some((&next - &u, &gnext - &g));
                u = next;
                f = fnext;
                g = gnext;
                pg_norm = projected_gradient(bounds, &u, &g).norm();
            }
            None => {
                stalled = true;
                break;
            }
        }
    }

    if opts.newton_polish && pg_norm > 0.01 * opts.grad_tol && u.len() <= 64 {
        let (nu, nf, ng, steps) = newton_polish(obj, bounds, u, f, g, opts.grad_tol);
        iterations += steps;
        u = nu;
        f = nf;
        g = ng;
        pg_norm = projected_gradient(bounds, &u, &g).norm();
    }

    if f > start_f {
        u = start_u;
        f = start_f;
        g = obj.gradient(&u);
        pg_norm = projected_gradient(bounds, &u, &g).norm();
    }

    let converged = pg_norm <= opts.grad_tol;
    if !converged && !stalled && iterations >= opts.max_iters {
        return Err(Error::SolverFailure(format!(
            "no stationary point after {iterations} iterations (projected gradient {pg_norm:.3e})"
        )));
    }
    Ok(Minimum {
        point: u,
        value: f,
        report: SolverReport {
            iterations,
            grad_norm: pg_norm,
            converged,
        },
    })
}

fn fd_hessian(obj: &dyn Objective, u: &Point, free: &[usize]) -> DMatrix<f64> {
    let k = free.len();
    let mut h = DMatrix::zeros(k, k);
    for (c, &j) in free.iter().enumerate() {
        let step = 1e-6 * (1.0 + u[j].abs());
        let mut up = u.clone();
        let mut dn = u.clone();
        up[j] += step;
        dn[j] -= step;
        let gu = obj.gradient(&up);
        let gd = obj.gradient(&dn);
        for (r, &i) in free.iter().enumerate() {
            h[(r, c)] = (gu[i] - gd[i]) / (2.0 * step);
        }
    }
    (&h + h.transpose()) * 0.5
}

/// Damped Newton steps on the free variables, accepted by Armijo decrease.
fn newton_descent(
    obj: &dyn Objective,
    bounds: &Bounds,
    mut u: Point,
    mut f: f64,
    mut g: Point,
    tol: f64,
) -> (Point, f64, Point, usize) {
    let mut steps = 0;
    for _ in 0..20 {
        if projected_gradient(bounds, &u, &g).norm() <= tol || !g.iter().all(|v| v.is_finite()) {
            break;
        }
        let active = active_mask(bounds, &u, &g);
        let free: Vec<usize> = (0..u.len()).filter(|&i| !active[i]).collect();
        if free.is_empty() {
            break;
        }
        let h = fd_hessian(obj, &u, &free);
        if !h.iter().all(|v| v.is_finite()) {
            break;
        }
        let gf = DVector::from_iterator(free.len(), free.iter().map(|&i| g[i]));
        let eig_min = nalgebra::SymmetricEigen::new(h.clone()).eigenvalues.min();
        let shift = if eig_min > 0.0 { 0.0 } else { -eig_min + 1e-8 * (1.0 + h.amax()) };
        let hs = &h + DMatrix::identity(free.len(), free.len()) * shift;
        let Some(dir) = hs.cholesky().map(|c| c.solve(&(-&gf))) else {
            break;
        };
        let mut t = 1.0;
        let mut improved = false;
        for _ in 0..30 {
            let mut trial = u.clone();
            for (r, &i) in free.iter().enumerate() {
                trial[i] += t * dir[r];
            }
            let trial = bounds.clamp(&trial);
            let ft = obj.value(&trial);
            if ft.is_finite() && ft <= f + ARMIJO_C * g.dot(&(&trial - &u)) && ft < f {
                g = obj.gradient(&trial);
                u = trial;
                f = ft;
                improved = true;
                break;
            }
            t *= 0.5;
        }
        steps += 1;
        if !improved {
            break;
        }
    }
    (u, f, g, steps)
}

fn newton_polish(
    obj: &dyn Objective,
    bounds: &Bounds,
    mut u: Point,
    mut f: f64,
    mut g: Point,
    tol: f64,
) -> (Point, f64, Point, usize) {
    let mut steps = 0;
    let mut pg = projected_gradient(bounds, &u, &g).norm();
    for _ in 0..50 {
        if pg <= 0.01 * tol || !g.iter().all(|v| v.is_finite()) {
            break;
        }
        let active = active_mask(bounds, &u, &g);
        let free: Vec<usize> = (0..u.len()).filter(|&i| !active[i]).collect();
        if free.is_empty() {
            break;
        }
        let h = fd_hessian(obj, &u, &free);
        if !h.iter().all(|v| v.is_finite()) {
            break;
        }
        let gf = DVector::from_iterator(free.len(), free.iter().map(|&i| g[i]));
        let eig_min = nalgebra::SymmetricEigen::new(h.clone()).eigenvalues.min();
        let shift = if eig_min > 0.0 { 0.0 } else { -eig_min + 1e-8 * (1.0 + h.amax()) };
        let hs = &h + DMatrix::identity(free.len(), free.len()) * shift;
        let Some(dir) = hs.cholesky().map(|c| c.solve(&(-&gf))) else {
            break;
        };
        let mut t = 1.0;
        let mut improved = false;
        for _ in 0..30 {
            let mut trial = u.clone();
            for (r, &i) in free.iter().enumerate() {
                trial[i] += t * dir[r];
            }
            let trial = bounds.clamp(&trial);
            let ft = obj.value(&trial);
            if ft.is_finite() && ft <= f + 4.0 * f64::EPSILON * f.abs().max(1e-300) {
                let gt = obj.gradient(&trial);
                let pgt = projected_gradient(bounds, &trial, &gt).norm();
                if pgt < pg {
                    u = trial;
                    f = ft.min(f);
                    g = gt;
                    pg = pgt;
                    improved = true;
                    break;
                }
            }
            t *= 0.5;
        }
        steps += 1;
        if !improved {
            break;
        }
    }
    (u, f, g, steps)
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    #[test]
    fn quadratic_interior_minimum() {
        let obj = (
            |u: &Point| (u[0] - 1.0).powi(2) + 10.0 * (u[1] + 2.0).powi(2),
            |u: &Point| DVector::from_vec(vec![2.0 * (u[0] - 1.0), 20.0 * (u[1] + 2.0)]),
        );
        let m = minimize_box(&obj, &Bounds::unbounded(2), &DVector::from_vec(vec![5.0, 5.0]), &SolverOptions::default())
            .unwrap();
        assert!(m.report.converged);
        assert_abs_diff_eq!(m.point[0], 1.0, epsilon = 1e-10);
        assert_abs_diff_eq!(m.point[1], -2.0, epsilon = 1e-10);
    }

    #[test]
    fn active_bound() {
        let obj = (|u: &Point| (u[0] - 3.0).powi(2), |u: &Point| DVector::from_vec(vec![2.0 * (u[0] - 3.0)]));
        let b = Bounds::new(DVector::from_vec(vec![-1.0]), DVector::from_vec(vec![1.0]));
        let m = minimize_box(&obj, &b, &DVector::from_vec(vec![0.0]), &SolverOptions::default()).unwrap();
        assert_eq!(m.point[0], 1.0);
        assert!(m.report.converged);
    }

    #[test]
    fn never_worse_than_start() {
        // Start exactly at a local maximum of a double well.
        let obj = (
            |u: &Point| (u[0] * u[0] - 1.0).powi(2),
            |u: &Point| DVector::from_vec(vec![4.0 * u[0] * (u[0] * u[0] - 1.0)]),
        );
        let start = DVector::from_vec(vec![0.3]);
        let m = minimize_box(&obj, &Bounds::unbounded(1), &start, &SolverOptions::default()).unwrap();
        assert!(m.value <= obj.value(&start));
        assert_abs_diff_eq!(m.point[0], 1.0, epsilon = 1e-10);
    }

    #[test]
    fn infinite_start_fails() {
        let obj = (|_: &Point| f64::INFINITY, |u: &Point| u.clone());
        let r = minimize_box(&obj, &Bounds::unbounded(1), &DVector::from_vec(vec![0.0]), &SolverOptions::default());
        assert!(matches!(r, Err(Error::SolverFailure(_))));
    }
}
