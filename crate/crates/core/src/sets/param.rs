//! Registered parametric maps `g: U ⊂ ℝᵏ → ℝᵈ` with analytic Jacobians.
//!
//! Configs refer to a map by name plus a flat list of numbers; no code goes
//! into config files.

use std::f64::consts::PI;

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};
use crate::Point;

#[derive(Clone, Debug, PartialEq)]
pub enum ParametricMap {
    /// `base + u·dir`.
    Line { base: Point, dir: Point },
    /// `base + Σ uⱼ dirⱼ`; the columns of `dirs` are the directions.
    Patch { base: Point, dirs: DMatrix<f64> },
    /// `center + radius (cos u, sin u)`.
    Circle { center: [f64; 2], radius: f64 },
    /// `center + r (cos φ, sin φ)` with `u = (r, φ)`.
    Disk { center: [f64; 2] },
    /// Graph `(u, offset + scale·|u − shift|^exponent)`.
    GraphPower { shift: f64, exponent: f64, scale: f64, offset: f64 },
    /// Graph `(u, offset + scale·(u² − 1)²)` with two wells at `u = ±1`.
    DoubleWell { scale: f64, offset: f64 },
    /// Surface `(x₁, x₂, amplitude·hat(x₁, x₂))` of the spiralling mexican hat,
    /// zero outside the unit disk.
    MexicanHat { amplitude: f64 },
    /// `softmax(w0 + u·w1)`: a curve in the open simplex.
    SoftmaxLine { w0: Point, w1: Point },
    /// Prony time-activity model `v_{ijk} = c_{ijk} x_{ik}` with
    /// `x_{ik} = αᵢ x_{i,k−2} + βᵢ x_{i,k−1} + γᵢ` and per-voxel parameters
    /// `(αᵢ, βᵢ, γᵢ, x⁰ᵢ, x¹ᵢ)`. Only the output indices in `keep` are emitted.
    Prony { voxels: usize, bins: usize, frames: usize, coeffs: Vec<f64>, keep: Vec<usize> },
}

pub const MAP_NAMES: [&str; 9] = [
    "line",
    "patch",
    "circle",
    "disk",
    "graph_power",
    "double_well",
    "mexican_hat",
    "softmax_line",
    "prony",
];

fn need(params: &[f64], n: usize, name: &str) -> Result<()> {
    if params.len() == n {
        Ok(())
    } else {
        Err(Error::InvalidSet(format!("map '{name}' expects {n} parameters, got {}", params.len())))
    }
}

fn as_count(v: f64, what: &str) -> Result<usize> {
    if v.is_finite() && v >= 0.0 && v.fract() == 0.0 {
        Ok(v as usize)
    } else {
        Err(Error::InvalidSet(format!("{what} must be a nonnegative integer, got {v}")))
    }
}

impl ParametricMap {
    pub fn from_name(name: &str, params: &[f64]) -> Result<Self> {
        if params.iter().any(|v| !v.is_finite()) {
            return Err(Error::InvalidSet(format!("map '{name}' has non-finite parameters")));
        }
        match name {
            "line" => {
                if params.is_empty() || params.len() % 2 != 0 {
                    return Err(Error::InvalidSet("line expects base and direction of equal length".into()));
                }
                let d = params.len() / 2;
                Ok(ParametricMap::Line {
                    base: DVector::from_column_slice(&params[..d]),
                    dir: DVector::from_column_slice(&params[d..]),
                })
            }
            "patch" => {
                if params.len() < 2 {
                    return Err(Error::InvalidSet("patch expects [d, k, base, dirs]".into()));
                }
                let d = as_count(params[0], "patch dimension")?;
                let k = as_count(params[1], "patch directions")?;
                need(params, 2 + d + d * k, name)?;
                Ok(ParametricMap::Patch {
                    base: DVector::from_column_slice(&params[2..2 + d]),
                    dirs: DMatrix::from_column_slice(d, k, &params[2 + d..]),
                })
            }
            "circle" => {
                need(params, 3, name)?;
                Ok(ParametricMap::Circle { center: [params[0], params[1]], radius: params[2] })
            }
            "disk" => {
                need(params, 2, name)?;
                Ok(ParametricMap::Disk { center: [params[0], params[1]] })
            }
            "graph_power" => {
                need(params, 4, name)?;
                if params[1] < 1.0 {
                    return Err(Error::InvalidSet("graph_power exponent must be at least 1".into()));
                }
                Ok(ParametricMap::GraphPower {
                    shift: params[0],
                    exponent: params[1],
                    scale: params[2],
                    offset: params[3],
                })
            }
            "double_well" => {
                need(params, 2, name)?;
                Ok(ParametricMap::DoubleWell { scale: params[0], offset: params[1] })
            }
            "mexican_hat" => {
                need(params, 1, name)?;
                Ok(ParametricMap::MexicanHat { amplitude: params[0] })
            }
            "softmax_line" => {
                if params.is_empty() || params.len() % 2 != 0 {
                    return Err(Error::InvalidSet("softmax_line expects w0 and w1 of equal length".into()));
                }
                let d = params.len() / 2;
                Ok(ParametricMap::SoftmaxLine {
                    w0: DVector::from_column_slice(&params[..d]),
                    w1: DVector::from_column_slice(&params[d..]),
                })
            }
            "prony" => {
                if params.len() < 3 {
                    return Err(Error::InvalidSet("prony expects [n, m, K, c..., (nkeep, keep...)]".into()));
                }
                let n = as_count(params[0], "voxels")?;
                let m = as_count(params[1], "bins")?;
                let k = as_count(params[2], "frames")?;
                if n == 0 || m == 0 || k < 2 {
                    return Err(Error::InvalidSet("prony needs n ≥ 1, m ≥ 1, K ≥ 2".into()));
                }
                let total = n * m * k;
                if params.len() < 3 + total {
                    return Err(Error::InvalidSet("prony coefficient tensor is incomplete".into()));
                }
                let coeffs = params[3..3 + total].to_vec();
                let rest = &params[3 + total..];
                let keep = if rest.is_empty() {
                    (0..total).collect()
                } else {
                    let nk = as_count(rest[0], "keep count")?;
                    need(&rest[1..], nk, "prony keep list")?;
                    let keep = rest[1..]
                        .iter()
                        .map(|&v| as_count(v, "keep index"))
                        .collect::<Result<Vec<_>>>()?;
                    if keep.iter().any(|&i| i >= total) {
                        return Err(Error::InvalidSet("prony keep index out of range".into()));
                    }
                    keep
                };
                Ok(ParametricMap::Prony { voxels: n, bins: m, frames: k, coeffs, keep })
            }
            other => Err(Error::InvalidSet(format!("unknown parametric map '{other}'"))),
        }
    }

    /// Inverse of [`ParametricMap::from_name`].
    pub fn to_name_params(&self) -> (String, Vec<f64>) {
        match self {
            ParametricMap::Line { base, dir } => ("line".into(), base.iter().chain(dir.iter()).cloned().collect()),
            ParametricMap::Patch { base, dirs } => {
                let mut p = vec![base.len() as f64, dirs.ncols() as f64];
                p.extend(base.iter());
                p.extend(dirs.iter());
                ("patch".into(), p)
            }
            ParametricMap::Circle { center, radius } => ("circle".into(), vec![center[0], center[1], *radius]),
            ParametricMap::Disk { center } => ("disk".into(), center.to_vec()),
            ParametricMap::GraphPower { shift, exponent, scale, offset } => {
                ("graph_power".into(), vec![*shift, *exponent, *scale, *offset])
            }
            ParametricMap::DoubleWell { scale, offset } => ("double_well".into(), vec![*scale, *offset]),
            ParametricMap::MexicanHat { amplitude } => ("mexican_hat".into(), vec![*amplitude]),
            ParametricMap::SoftmaxLine { w0, w1 } => {
                ("softmax_line".into(), w0.iter().chain(w1.iter()).cloned().collect())
            }
            ParametricMap::Prony { voxels, bins, frames, coeffs, keep } => {
                let mut p = vec![*voxels as f64, *bins as f64, *frames as f64];
                p.extend(coeffs.iter());
                p.push(keep.len() as f64);
                p.extend(keep.iter().map(|&i| i as f64));
                ("prony".into(), p)
            }
        }
    }

    pub fn param_dim(&self) -> usize {
        match self {
            ParametricMap::Line { .. } => 1,
            ParametricMap::Patch { dirs, .. } => dirs.ncols(),
            ParametricMap::Circle { .. } => 1,
            ParametricMap::Disk { .. } => 2,
            ParametricMap::GraphPower { .. } => 1,
            ParametricMap::DoubleWell { .. } => 1,
            ParametricMap::MexicanHat { .. } => 2,
            ParametricMap::SoftmaxLine { .. } => 1,
            ParametricMap::Prony { voxels, .. } => 5 * voxels,
        }
    }

    pub fn out_dim(&self) -> usize {
        match self {
            ParametricMap::Line { base, .. } => base.len(),
            ParametricMap::Patch { base, .. } => base.len(),
            ParametricMap::Circle { .. } | ParametricMap::Disk { .. } => 2,
            ParametricMap::GraphPower { .. } | ParametricMap::DoubleWell { .. } => 2,
            ParametricMap::MexicanHat { .. } => 3,
            ParametricMap::SoftmaxLine { w0, .. } => w0.len(),
            ParametricMap::Prony { keep, .. } => keep.len(),
        }
    }

    /// Whether the image of the parameter box is convex.
    pub fn declared_convex(&self, lo: &[f64], hi: &[f64]) -> bool {
        match self {
            ParametricMap::Line { .. } | ParametricMap::Patch { .. } => true,
            ParametricMap::Disk { .. } => lo[0] <= 0.0 && hi[1] - lo[1] >= 2.0 * PI,
            _ => false,
        }
    }

    pub fn eval(&self, u: &Point) -> Point {
        match self {
            ParametricMap::Line { base, dir } => base + dir * u[0],
            ParametricMap::Patch { base, dirs } => base + dirs * u,
            ParametricMap::Circle { center, radius } => {
                DVector::from_vec(vec![center[0] + radius * u[0].cos(), center[1] + radius * u[0].sin()])
            }
            ParametricMap::Disk { center } => {
                DVector::from_vec(vec![center[0] + u[0] * u[1].cos(), center[1] + u[0] * u[1].sin()])
            }
            ParametricMap::GraphPower { shift, exponent, scale, offset } => {
                DVector::from_vec(vec![u[0], offset + scale * (u[0] - shift).abs().powf(*exponent)])
            }
            ParametricMap::DoubleWell { scale, offset } => {
                let w = u[0] * u[0] - 1.0;
                DVector::from_vec(vec![u[0], offset + scale * w * w])
            }
            ParametricMap::MexicanHat { amplitude } => {
                DVector::from_vec(vec![u[0], u[1], amplitude * mexican_hat(u[0], u[1])])
            }
            ParametricMap::SoftmaxLine { w0, w1 } => softmax(&(w0 + w1 * u[0])),
            ParametricMap::Prony { .. } => self.prony_eval(u, false).0,
        }
    }

    /// Jacobian, `out_dim × param_dim`.
    pub fn jacobian(&self, u: &Point) -> DMatrix<f64> {
        match self {
            ParametricMap::Line { dir, .. } => DMatrix::from_column_slice(dir.len(), 1, dir.as_slice()),
            ParametricMap::Patch { dirs, .. } => dirs.clone(),
            ParametricMap::Circle { radius, .. } => {
                DMatrix::from_column_slice(2, 1, &[-radius * u[0].sin(), radius * u[0].cos()])
            }
            ParametricMap::Disk { .. } => DMatrix::from_column_slice(
                2,
                2,
                &[u[1].cos(), u[1].sin(), -u[0] * u[1].sin(), u[0] * u[1].cos()],
            ),
            ParametricMap::GraphPower { shift, exponent, scale, .. } => {
                let s = u[0] - shift;
                let dy = if s == 0.0 {
                    if *exponent == 1.0 {
                        0.0
                    } else {
                        0.0
                    }
                } else {
                    scale * exponent * s.abs().powf(exponent - 1.0) * s.signum()
                };
                DMatrix::from_column_slice(2, 1, &[1.0, dy])
            }
            ParametricMap::DoubleWell { scale, .. } => {
                DMatrix::from_column_slice(2, 1, &[1.0, 4.0 * scale * u[0] * (u[0] * u[0] - 1.0)])
            }
            ParametricMap::MexicanHat { amplitude } => {
                let h = 1e-7;
                let dx = (mexican_hat(u[0] + h, u[1]) - mexican_hat(u[0] - h, u[1])) / (2.0 * h);
                let dy = (mexican_hat(u[0], u[1] + h) - mexican_hat(u[0], u[1] - h)) / (2.0 * h);
                DMatrix::from_row_slice(3, 2, &[1.0, 0.0, 0.0, 1.0, amplitude * dx, amplitude * dy])
            }
            ParametricMap::SoftmaxLine { w0, w1 } => {
                let q = softmax(&(w0 + w1 * u[0]));
                let mean = q.dot(w1);
                DMatrix::from_iterator(q.len(), 1, q.iter().zip(w1.iter()).map(|(&qi, &wi)| qi * (wi - mean)))
            }
            ParametricMap::Prony { .. } => self.prony_eval(u, true).1,
        }
    }

    /// Voxel activities `x_{ik}` (row-major, `i·K + k`) for Prony parameters.
    pub fn prony_activities(voxels: usize, frames: usize, u: &Point) -> Vec<f64> {
        let mut x = vec![0.0; voxels * frames];
        for i in 0..voxels {
            let (a, b, c) = (u[5 * i], u[5 * i + 1], u[5 * i + 2]);
            x[i * frames] = u[5 * i + 3];
            x[i * frames + 1] = u[5 * i + 4];
            for k in 2..frames {
                x[i * frames + k] = a * x[i * frames + k - 2] + b * x[i * frames + k - 1] + c;
            }
        }
        x
    }

    fn prony_eval(&self, u: &Point, with_jac: bool) -> (Point, DMatrix<f64>) {
        let ParametricMap::Prony { voxels, bins, frames, coeffs, keep } = self else {
            unreachable!()
        };
        let (n, m, kk) = (*voxels, *bins, *frames);
        let x = Self::prony_activities(n, kk, u);
        // d x_{ik} / d (αᵢ, βᵢ, γᵢ, x⁰ᵢ, x¹ᵢ)
        let mut dx = vec![[0.0f64; 5]; n * kk];
        if with_jac {
            for i in 0..n {
                let (a, b) = (u[5 * i], u[5 * i + 1]);
                dx[i * kk][3] = 1.0;
                dx[i * kk + 1][4] = 1.0;
                for k in 2..kk {
                    let mut d = [0.0; 5];
                    for (p, dp) in d.iter_mut().enumerate() {
                        *dp = a * dx[i * kk + k - 2][p] + b * dx[i * kk + k - 1][p];
                    }
                    d[0] += x[i * kk + k - 2];
                    d[1] += x[i * kk + k - 1];
                    d[2] += 1.0;
                    dx[i * kk + k] = d;
                }
            }
        }
        let mut out = DVector::zeros(keep.len());
        let mut jac = if with_jac { DMatrix::zeros(keep.len(), 5 * n) } else { DMatrix::zeros(0, 0) };
        for (row, &flat) in keep.iter().enumerate() {
            let i = flat / (m * kk);
            let k = flat % kk;
            out[row] = coeffs[flat] * x[i * kk + k];
            if with_jac {
                for p in 0..5 {
                    jac[(row, 5 * i + p)] = coeffs[flat] * dx[i * kk + k][p];
                }
            }
        }
        (out, jac)
    }
}

fn softmax(z: &Point) -> Point {
    let mx = z.max();
    let e = z.map(|v| (v - mx).exp());
    let s = e.sum();
    e / s
}

/// Smooth mexican hat on the unit disk whose valley spirals towards the rim.
pub fn mexican_hat(x: f64, y: f64) -> f64 {
    let r2 = x * x + y * y;
    if r2 >= 1.0 {
        return 0.0;
    }
    let r4 = r2 * r2;
    let w = (1.0 - r2).powi(4);
    let theta = y.atan2(x);
    (1.0 / (r2 - 1.0)).exp() * (1.0 - 4.0 * r4 / (4.0 * r4 + w) * (theta - 1.0 / (1.0 - r2)).sin())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn fd_jac(map: &ParametricMap, u: &Point) -> DMatrix<f64> {
        let h = 1e-6;
        let mut j = DMatrix::zeros(map.out_dim(), map.param_dim());
        for c in 0..map.param_dim() {
            let mut up = u.clone();
            let mut dn = u.clone();
            up[c] += h;
            dn[c] -= h;
            let col = (map.eval(&up) - map.eval(&dn)) / (2.0 * h);
            j.set_column(c, &col);
        }
        j
    }

    #[test]
    fn jacobians_match_finite_differences() {
        let cases: Vec<(ParametricMap, Vec<f64>)> = vec![
            (ParametricMap::from_name("line", &[0.0, 1.0, 1.0, -1.0]).unwrap(), vec![0.3]),
            (ParametricMap::from_name("circle", &[1.0, 2.0, 0.5]).unwrap(), vec![0.7]),
            (ParametricMap::from_name("disk", &[1.0, 1.0]).unwrap(), vec![0.3, 2.0]),
            (ParametricMap::from_name("graph_power", &[0.0, 1.5, 1.0, 0.0]).unwrap(), vec![-0.2]),
            (ParametricMap::from_name("double_well", &[0.5, 0.1]).unwrap(), vec![0.6]),
            (
                ParametricMap::from_name("softmax_line", &[0.1, -0.3, 0.2, 1.0, 0.0, -1.0]).unwrap(),
                vec![0.4],
            ),
            (
                ParametricMap::from_name("prony", &[1.0, 2.0, 3.0, 1.0, 0.5, 0.2, 0.3, 0.7, 0.9]).unwrap(),
                vec![0.2, 0.7, 0.1, 1.0, 2.0],
            ),
        ];
        for (map, u) in cases {
            let u = DVector::from_vec(u);
            let diff = (map.jacobian(&u) - fd_jac(&map, &u)).amax();
            assert!(diff < 1e-6, "{map:?}: {diff}");
        }
    }

    #[test]
    fn prony_constant_when_degenerate() {
        // α = 0, β = 1, γ = 0 keeps the activity constant at x¹.
        let x = ParametricMap::prony_activities(1, 5, &DVector::from_vec(vec![0.0, 1.0, 0.0, 2.0, 2.0]));
        assert!(x.iter().all(|&v| v == 2.0));
    }

    #[test]
    fn name_round_trip() {
        let m = ParametricMap::from_name("prony", &[1.0, 1.0, 3.0, 1.0, 1.0, 1.0]).unwrap();
        let (name, params) = m.to_name_params();
        assert_eq!(ParametricMap::from_name(&name, &params).unwrap(), m);
        assert!(ParametricMap::from_name("circle", &[1.0]).is_err());
        assert!(ParametricMap::from_name("warp", &[]).is_err());
    }

    #[test]
    fn hat_vanishes_on_rim() {
        assert_eq!(mexican_hat(1.0, 0.0), 0.0);
        assert!(mexican_hat(0.0, 0.0) > 0.0);
    }
}
