//! Named experiment fixtures shared by the tests, the CLI and the bindings.

use std::f64::consts::PI;

use nalgebra::DVector;

use crate::alternator::{Interiority, Orientation, RunConfig};
use crate::em::{DiscreteEmProblem, ExpFamilySpec};
use crate::experiment::{DspectConfig, ExperimentConfig, GridSpec, Problem, SweepSpec};
use crate::legendre::GeneratorParams;
use crate::sets::param::ParametricMap;
use crate::sets::{Halfspace, SetSpec};

pub const FIXTURE_NAMES: [&str; 16] = [
    "two_lines_60",
    "perpendicular_lines",
    "parallel_lines",
    "disjoint_balls",
    "halfplane_line",
    "kl_plane_halfspace",
    "parabola_tangent",
    "squeezed_curve",
    "double_well_basins",
    "circle_line",
    "mexican_hat",
    "em_discrete_6x3",
    "em_discrete_infeasible",
    "em_gaussian",
    "em_poisson_box",
    "dspect_toy",
];

fn alternating(name: &str, description: &str, generator: &str, a: SetSpec, b: SetSpec, start: Vec<f64>) -> ExperimentConfig {
    ExperimentConfig {
        name: name.into(),
        description: description.into(),
        problem: Problem::Alternating { generator: generator.into(), generator_params: GeneratorParams::default(), a, b, start },
        run: RunConfig::default(),
        seed: 0,
        diagnostics: Default::default(),
        sweep: None,
    }
}

fn em(name: &str, description: &str, problem: Problem) -> ExperimentConfig {
    ExperimentConfig {
        name: name.into(),
        description: description.into(),
        problem,
        run: RunConfig::default(),
        seed: 0,
        diagnostics: Default::default(),
        sweep: None,
    }
}

fn x_axis() -> SetSpec {
    SetSpec::affine(vec![0.0, 0.0], vec![vec![1.0, 0.0]])
}

/// Discrete em fixture on six cells, three observed groups and a softmax curve.
pub fn discrete_problem(p_hat: Option<Vec<f64>>) -> DiscreteEmProblem {
    let w0 = vec![0.2, -0.1, 0.4, 0.0, -0.3, 0.1];
    let w1 = vec![0.5, -0.4, 0.1, 0.6, -0.2, 0.3];
    let t_map = vec![0, 0, 1, 1, 2, 2];
    let mut params = w0.clone();
    params.extend(&w1);
    let model = SetSpec::parametric("softmax_line", params, vec![-3.0], vec![3.0]);
    let p_hat = p_hat.unwrap_or_else(|| {
        let q = discrete_model_point(0.7);
        vec![q[0] + q[1], q[2] + q[3], q[4] + q[5]]
    });
    DiscreteEmProblem { t_map, p_hat, model }
}

/// Point of the discrete em model at parameter `u`.
pub fn discrete_model_point(u: f64) -> Vec<f64> {
    let map = ParametricMap::SoftmaxLine {
        w0: DVector::from_vec(vec![0.2, -0.1, 0.4, 0.0, -0.3, 0.1]),
        w1: DVector::from_vec(vec![0.5, -0.4, 0.1, 0.6, -0.2, 0.3]),
    };
    map.eval(&DVector::from_element(1, u)).as_slice().to_vec()
}

/// Known Prony parameters of the dSPECT fixture (4 voxels).
pub fn dspect_truth() -> Vec<f64> {
    (0..4).flat_map(|i| {
        let f = i as f64;
        [0.1, 0.6 + 0.05 * f, 0.5 + 0.2 * f, 1.0 + f, 1.5 + 0.5 * f]
    })
    .collect()
}

/// Deterministic sensitivities `c_{ijk}` in `[0.3, 1]` for 4 voxels, 2 bins, 6 frames.
pub fn dspect_coeffs() -> Vec<f64> {
    (0..48).map(|t| 0.3 + 0.7 * (0.5 + 0.5 * (t as f64 * 1.7).sin())).collect()
}

pub fn fixture(name: &str) -> Option<ExperimentConfig> {
    let mut cfg = match name {
        "two_lines_60" => alternating(
            name,
            "euclidean lines through the origin at 60 degrees; transversal, R-linear with q = 1/4",
            "euclidean",
            x_axis(),
            SetSpec::affine(vec![0.0, 0.0], vec![vec![0.5, 0.75f64.sqrt()]]),
            vec![1.0, 2.0],
        ),
        "perpendicular_lines" => alternating(
            name,
            "coordinate axes; one block reaches the intersection",
            "euclidean",
            x_axis(),
            SetSpec::affine(vec![0.0, 0.0], vec![vec![0.0, 1.0]]),
            vec![1.0, 2.0],
        ),
        "parallel_lines" => {
            let mut c = alternating(
                name,
                "parallel lines at distance 1; gap r* = 1",
                "euclidean",
                x_axis(),
                SetSpec::affine(vec![0.0, 1.0], vec![vec![1.0, 0.0]]),
                vec![0.3, 2.0],
            );
            c.run.stop.min_iters = 12;
            c
        }
        "disjoint_balls" => alternating(
            name,
            "unit disks centred at (0,0) and (3,0); boundaries at distance 1",
            "euclidean",
            SetSpec::parametric("disk", vec![0.0, 0.0], vec![0.0, 0.0], vec![1.0, 2.0 * PI]),
            SetSpec::parametric("disk", vec![3.0, 0.0], vec![0.0, 0.0], vec![1.0, 2.0 * PI]),
            vec![0.0, 2.0],
        ),
        "halfplane_line" => alternating(
            name,
            "the line y = x against the half plane y <= -1; convex B",
            "euclidean",
            SetSpec::affine(vec![0.0, 0.0], vec![vec![1.0, 1.0]]),
            SetSpec::halfspaces(vec![Halfspace { normal: vec![0.0, 1.0], offset: -1.0 }]),
            vec![3.0, 2.0],
        ),
        "kl_plane_halfspace" => alternating(
            name,
            "KL geometry: the simplex plane against the half space x0 <= 0.2",
            "negentropy",
            SetSpec::affine(vec![1.0 / 3.0; 3], vec![vec![1.0, -1.0, 0.0], vec![1.0, 0.0, -1.0]]),
            SetSpec::halfspaces(vec![Halfspace { normal: vec![1.0, 0.0, 0.0], offset: 0.2 }]),
            vec![0.7, 0.4, 0.3],
        ),
        "parabola_tangent" => {
            let mut c = alternating(
                name,
                "x-axis tangent to the parabola y = x^2 at the origin; sublinear",
                "euclidean",
                x_axis(),
                SetSpec::parametric("graph_power", vec![0.0, 2.0, 1.0, 0.0], vec![-2.0], vec![2.0]),
                vec![1.0, 1.0],
            );
            c.run.stop.max_iters = 3000;
            c.run.global_search = false;
            c
        }
        "squeezed_curve" => {
            let mut c = alternating(
                name,
                "KL: the curve y = (x-1)^4 meets the boundary of the orthant at (1,0); gap to (1,1) is sqrt 2",
                "negentropy",
                SetSpec::finite(vec![vec![1.0, 1.0]]),
                SetSpec::parametric("graph_power", vec![1.0, 4.0, 1.0, 0.0], vec![0.8], vec![1.2]),
                vec![1.0, 1.0],
            );
            c.run.orientation = Orientation::Lr;
            c.run.interiority = Interiority::Report;
            c.run.stop.min_iters = 12;
            c
        }
        "double_well_basins" => {
            let mut c = alternating(
                name,
                "x-axis against a double well crossing it twice; starts on either side reach different limits",
                "euclidean",
                x_axis(),
                SetSpec::parametric("double_well", vec![1.0, -1.5], vec![-2.5], vec![2.5]),
                vec![-1.0, 0.5],
            );
            c.sweep = Some(SweepSpec {
                starts: [-2.4, -2.0, -1.6, -1.2, 1.2, 1.6, 2.0, 2.4].iter().map(|&x| vec![x, 0.5]).collect(),
                ..Default::default()
            });
            c
        }
        "circle_line" => {
            let mut c = alternating(
                name,
                "unit circle crossing the line y = 1/2 transversally",
                "euclidean",
                SetSpec::parametric("circle", vec![0.0, 0.0, 1.0], vec![0.0], vec![2.0 * PI]),
                SetSpec::affine(vec![0.0, 0.5], vec![vec![1.0, 0.0]]),
                vec![0.9, 0.6],
            );
            c.sweep = Some(SweepSpec {
                grid: Some(GridSpec { lo: vec![0.75, 0.4], hi: vec![0.95, 0.6], points: 3 }),
                ..Default::default()
            });
            c
        }
        "mexican_hat" => {
            let mut c = alternating(
                name,
                "stress fixture: mexican hat surface against a horizontal plane",
                "euclidean",
                SetSpec::parametric("mexican_hat", vec![1.0], vec![-1.5, -1.5], vec![1.5, 1.5]),
                SetSpec::affine(vec![0.0, 0.0, 0.2], vec![vec![1.0, 0.0, 0.0], vec![0.0, 1.0, 0.0]]),
                vec![0.3, 0.4, 1.0],
            );
            c.run.stop.max_iters = 500;
            c.run.global_search = false;
            c
        }
        "em_discrete_6x3" => em(
            name,
            "discrete em, |I| = 6, |J| = 3, one-parameter softmax model meeting the data set",
            Problem::DiscreteEm { problem: discrete_problem(None), start: discrete_model_point(-1.0) },
        ),
        "em_discrete_infeasible" => em(
            name,
            "discrete em with an observed marginal the model cannot reach",
            Problem::DiscreteEm { problem: discrete_problem(Some(vec![0.05, 0.05, 0.9])), start: discrete_model_point(0.0) },
        ),
        "em_gaussian" => em(
            name,
            "Gaussian mean with known variance: euclidean alternating projections",
            Problem::ExpFamilyEm {
                spec: ExpFamilySpec {
                    generator: "gaussian".into(),
                    generator_params: GeneratorParams { sigma: Some(2.0) },
                    dim: 2,
                    observed: vec![0],
                    y_hat: vec![1.2],
                    model: SetSpec::parametric("line", vec![0.0, 0.0, 1.0, 2.0], vec![-5.0], vec![5.0]),
                },
                start: vec![0.3, 0.0],
            },
        ),
        "em_poisson_box" => em(
            name,
            "product Poisson, model a segment in natural parameters meeting the data set",
            Problem::ExpFamilyEm {
                spec: ExpFamilySpec {
                    generator: "poisson".into(),
                    generator_params: GeneratorParams::default(),
                    dim: 2,
                    observed: vec![0],
                    y_hat: vec![2.0],
                    model: SetSpec::parametric("line", vec![0.0, 0.0, 1.0, 1.0], vec![-2.0], vec![2.0]),
                },
                start: vec![2f64.ln(), 1.5],
            },
        ),
        "dspect_toy" => {
            let mut c = em(
                name,
                "dSPECT toy: 4 voxels, 2 bins, 6 frames, noise-free counts from known Prony parameters",
                Problem::Dspect {
                    dspect: DspectConfig {
                        voxels: 4,
                        bins: 2,
                        frames: 6,
                        coeffs: dspect_coeffs(),
                        counts: None,
                        truth: Some(dspect_truth()),
                        lo: None,
                        hi: None,
                    },
                    start: None,
                },
            );
            c.run.stop.max_iters = 5000;
            c
        }
        _ => return None,
    };
    if name.starts_with("em_") || name.starts_with("dspect") {
        // em converges linearly with a factor near one; stop on steps only.
        cfg.run.stop.div_tol = 0.0;
    }
    cfg.name = name.to_owned();
    Some(cfg)
}

pub fn all() -> Vec<ExperimentConfig> {
    FIXTURE_NAMES.iter().filter_map(|n| fixture(n)).collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn every_name_resolves_and_validates() {
        for name in FIXTURE_NAMES {
            let cfg = fixture(name).unwrap_or_else(|| panic!("{name}"));
            cfg.generator().unwrap_or_else(|e| panic!("{name}: {e}"));
            let text = serde_json::to_string(&cfg).unwrap();
            assert_eq!(ExperimentConfig::from_json(&text).unwrap(), cfg, "{name}");
        }
        assert!(fixture("nope").is_none());
    }
}
