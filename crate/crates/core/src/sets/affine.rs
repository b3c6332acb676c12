//! Bregman projections onto affine slices and polyhedra through their duals.
//!
//! For `min D(x, a)` subject to `C x = d` the minimizer is
//! `x = ∇f*(∇f(a) + Cᵀλ)` where `λ` minimizes the smooth convex dual
//! `ψ(λ) = f*(∇f(a) + Cᵀλ) − ⟨λ, d⟩`. Inequalities `N x ≤ β` give the same
//! dual with `λ = −μ`, `μ ≥ 0`, solved on the nonnegative orthant.

use nalgebra::{DMatrix, DVector, SymmetricEigen};

use crate::error::{Error, Result};
use crate::legendre::Legendre;
use crate::solver::{minimize_box, Bounds, SolverOptions, SolverReport};
use crate::Point;

/// Rows spanning the orthogonal complement of the columns of `dirs`.
pub(crate) fn complement_rows(dim: usize, dirs: &DMatrix<f64>) -> DMatrix<f64> {
    let mut proj = DMatrix::<f64>::identity(dim, dim);
    if dirs.ncols() > 0 {
        let svd = dirs.clone().svd(true, false);
        let u = svd.u.expect("left singular vectors requested");
        let smax = svd.singular_values.max();
        for (c, &s) in svd.singular_values.iter().enumerate() {
            if s > 1e-12 * smax.max(1.0) {
                let col = u.column(c);
                proj -= &col * col.transpose();
            }
        }
    }
    let eig = SymmetricEigen::new(proj);
    let keep: Vec<usize> = (0..dim).filter(|&i| eig.eigenvalues[i] > 0.5).collect();
    let mut rows = DMatrix::zeros(keep.len(), dim);
    for (r, &i) in keep.iter().enumerate() {
        rows.set_row(r, &eig.eigenvectors.column(i).transpose());
    }
    rows
}

/// Orthonormal basis (columns) of the span of `dirs`.
pub(crate) fn span_basis(dirs: &DMatrix<f64>) -> DMatrix<f64> {
    if dirs.ncols() == 0 {
        return DMatrix::zeros(dirs.nrows(), 0);
    }
    let svd = dirs.clone().svd(true, false);
    let u = svd.u.expect("left singular vectors requested");
    let smax = svd.singular_values.max();
    let keep: Vec<usize> =
        (0..svd.singular_values.len()).filter(|&c| svd.singular_values[c] > 1e-12 * smax.max(1.0)).collect();
    DMatrix::from_fn(dirs.nrows(), keep.len(), |r, c| u[(r, keep[c])])
}

fn solve_spd(h: &DMatrix<f64>, rhs: &DVector<f64>) -> Option<DVector<f64>> {
    let scale = h.amax().max(1e-300);
    let n = h.nrows();
    for shift in [0.0, 1e-14, 1e-12, 1e-10] {
        let hs = h + DMatrix::<f64>::identity(n, n) * (shift * scale);
        if let Some(ch) = hs.cholesky() {
            return Some(ch.solve(rhs));
        }
    }
    h.clone().svd(true, true).solve(rhs, 1e-14 * scale).ok()
}

/// `argmin { D(x, a) : C x = d }` by Newton's method on the dual.
pub(crate) fn project_affine(
    gen: &dyn Legendre,
    c: &DMatrix<f64>,
    d: &DVector<f64>,
    a: &Point,
) -> Result<(Point, SolverReport)> {
    let m = c.nrows();
    let y0 = gen.grad(a);
    if m == 0 {
        return Ok((a.clone(), SolverReport { iterations: 0, grad_norm: 0.0, converged: true }));
    }
    let conj_dom = gen.conj_domain();
    let psi = |lam: &DVector<f64>| -> (f64, Point) {
        let y = &y0 + c.transpose() * lam;
        if !conj_dom.is_interior(&y) {
            return (f64::INFINITY, y);
        }
        (gen.conj_value(&y) - lam.dot(d), y)
    };
    let tol = 1e-13 * (1.0 + d.amax());
    let mut lam = DVector::zeros(m);
    let (mut val, mut y) = psi(&lam);
    let mut x = gen.conj_grad(&y);
    let mut r = c * &x - d;
    let mut iterations = 0;
    while r.amax() > tol && iterations < 200 {
        iterations += 1;
        let h = c * gen.conj_hessian(&y) * c.transpose();
        let Some(step) = solve_spd(&h, &(-&r)) else { break };
        let slope = r.dot(&step);
        let mut t = 1.0;
        let mut accepted = false;
        for _ in 0..60 {
            let trial = &lam + &step * t;
            let (vt, yt) = psi(&trial);
            if vt.is_finite() {
                let xt = gen.conj_grad(&yt);
                let rt = c * &xt - d;
                let armijo = vt <= val + 1e-4 * t * slope;
                let noise = rt.norm() < r.norm() && vt <= val + 1e-12 * (1.0 + val.abs());
                if armijo || noise {
                    lam = trial;
                    val = vt;
                    y = yt;
                    x = xt;
                    r = rt;
                    accepted = true;
                    break;
                }
            }
            t *= 0.5;
        }
        if !accepted {
            break;
        }
    }
    let grad_norm = r.amax();
    if grad_norm > 1e-9 * (1.0 + d.amax()) {
        return Err(Error::SolverFailure(format!(
            "affine projection residual {grad_norm:.3e} after {iterations} Newton steps"
        )));
    }
    Ok((x, SolverReport { iterations, grad_norm, converged: grad_norm <= tol }))
}

/// `argmin { D(x, a) : N x ≤ β }` through the dual over `μ ≥ 0`.
pub(crate) fn project_polyhedron(
    gen: &dyn Legendre,
    normals: &DMatrix<f64>,
    offsets: &DVector<f64>,
    a: &Point,
    opts: &SolverOptions,
) -> Result<(Point, SolverReport)> {
    let m = normals.nrows();
    let slack = normals * a - offsets;
    if slack.iter().all(|&s| s <= 0.0) {
        return Ok((a.clone(), SolverReport { iterations: 0, grad_norm: 0.0, converged: true }));
    }
    let y0 = gen.grad(a);
    let conj_dom = gen.conj_domain();
    let value = |mu: &Point| {
        let y = &y0 - normals.transpose() * mu;
        if !conj_dom.is_interior(&y) {
            return f64::INFINITY;
        }
        gen.conj_value(&y) + mu.dot(offsets)
    };
    let gradient = |mu: &Point| {
        let y = &y0 - normals.transpose() * mu;
        offsets - normals * gen.conj_grad(&y)
    };
    let bounds = Bounds::new(DVector::zeros(m), DVector::from_element(m, f64::INFINITY));
    let mut sopts = opts.clone();
    sopts.grad_tol = sopts.grad_tol.min(1e-13 * (1.0 + offsets.amax()));
    let min = minimize_box(&(value, gradient), &bounds, &DVector::zeros(m), &sopts)?;
    let y = &y0 - normals.transpose() * &min.point;
    Ok((gen.conj_grad(&y), min.report))
}
