//! Experiment configs: a problem, run settings and output toggles, executed
//! into a trace plus a JSON summary.

use nalgebra::DVector;
use serde::{Deserialize, Serialize};

use crate::alternator::{detect_gap, run, GapEstimate, RunConfig, Trace};
use crate::diagnostics::{classify_transversality, Transversality};
use crate::em::{build_dspect_problem, default_prony_box, run_em_discrete, run_em_expfam, DiscreteEmProblem, DspectProblem, EmTrace, ExpFamilySpec};
use crate::error::{Error, Result};
use crate::legendre::{by_name, Generator, GeneratorParams};
use crate::sets::SetSpec;
use crate::Point;

/// dSPECT instance: counts are either given or synthesized from `truth`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DspectConfig {
    pub voxels: usize,
    pub bins: usize,
    pub frames: usize,
    pub coeffs: Vec<f64>,
    #[serde(default)]
    pub counts: Option<Vec<f64>>,
    /// Prony parameters used to synthesize noise-free counts.
    #[serde(default)]
    pub truth: Option<Vec<f64>>,
    #[serde(default)]
    pub lo: Option<Vec<f64>>,
    #[serde(default)]
    pub hi: Option<Vec<f64>>,
}

impl DspectConfig {
    pub fn build(&self) -> Result<DspectProblem> {
        match (&self.counts, &self.truth) {
            (Some(counts), _) => {
                let scale = counts.iter().cloned().fold(0.0, f64::max);
                let (dlo, dhi) = default_prony_box(self.voxels, scale.max(f64::MIN_POSITIVE));
                DspectProblem::from_counts(
                    self.voxels,
                    self.bins,
                    self.frames,
                    self.coeffs.clone(),
                    counts.clone(),
                    self.lo.clone().unwrap_or(dlo),
                    self.hi.clone().unwrap_or(dhi),
                )
            }
            (None, Some(truth)) => {
                let built = build_dspect_problem(self.voxels, self.bins, self.frames, truth, &self.coeffs)?;
                match (&self.lo, &self.hi) {
                    (None, None) => Ok(built),
                    _ => {
                        let (_, bounds) = built.model.parametric_parts()?;
                        DspectProblem::from_counts(
                            self.voxels,
                            self.bins,
                            self.frames,
                            self.coeffs.clone(),
                            built.counts,
                            self.lo.clone().unwrap_or_else(|| bounds.lo.as_slice().to_vec()),
                            self.hi.clone().unwrap_or_else(|| bounds.hi.as_slice().to_vec()),
                        )
                    }
                }
            }
            (None, None) => Err(Error::Config("dSPECT config needs counts or truth".into())),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Problem {
    /// Alternating projections between `a` (right) and `b` (left).
    Alternating {
        generator: String,
        #[serde(default)]
        generator_params: GeneratorParams,
        a: SetSpec,
        b: SetSpec,
        start: Vec<f64>,
    },
    DiscreteEm {
        problem: DiscreteEmProblem,
        /// Model point.
        start: Vec<f64>,
    },
    ExpFamilyEm {
        spec: ExpFamilySpec,
        /// Point of the data set.
        start: Vec<f64>,
    },
    Dspect {
        dspect: DspectConfig,
        /// Prony parameters; the box center when absent.
        #[serde(default)]
        start: Option<Vec<f64>>,
    },
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct DiagnosticsToggles {
    /// Fill the angle and three-point columns of the trace CSV.
    pub angles: bool,
    pub transversality: bool,
}

impl Default for DiagnosticsToggles {
    fn default() -> Self {
        DiagnosticsToggles { angles: true, transversality: true }
    }
}

/// Starts for a sweep: explicit points and/or a regular grid.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SweepSpec {
    pub starts: Vec<Vec<f64>>,
    pub grid: Option<GridSpec>,
    /// Limits closer than this share a cluster.
    pub cluster_tol: Option<f64>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GridSpec {
    pub lo: Vec<f64>,
    pub hi: Vec<f64>,
    pub points: usize,
}

impl SweepSpec {
    pub fn all_starts(&self) -> Result<Vec<Vec<f64>>> {
        let mut out = self.starts.clone();
        if let Some(g) = &self.grid {
            if g.lo.len() != g.hi.len() || g.lo.is_empty() {
                return Err(Error::Config("sweep grid needs lo and hi of equal positive length".into()));
            }
            let d = g.lo.len();
            let n = g.points;
            if n > 0 {
                let total = n.checked_pow(d as u32).filter(|&t| t <= 1_000_000).ok_or_else(|| Error::Config("sweep grid too large".into()))?;
                for flat in 0..total {
                    let mut rem = flat;
                    let p = (0..d)
                        .map(|i| {
                            let idx = rem % n;
                            rem /= n;
                            if n == 1 {
                                0.5 * (g.lo[i] + g.hi[i])
                            } else {
                                g.lo[i] + (g.hi[i] - g.lo[i]) * idx as f64 / (n - 1) as f64
                            }
                        })
                        .collect();
                    out.push(p);
                }
            }
        }
        Ok(out)
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ExperimentConfig {
    #[serde(default)]
    pub name: String,
    #[serde(default)]
    pub description: String,
    pub problem: Problem,
    #[serde(default)]
    pub run: RunConfig,
    /// Seed of the randomized multistart.
    #[serde(default)]
    pub seed: u64,
    #[serde(default)]
    pub diagnostics: DiagnosticsToggles,
    #[serde(default)]
    pub sweep: Option<SweepSpec>,
}

impl ExperimentConfig {
    pub fn from_json(text: &str) -> Result<Self> {
        let cfg: ExperimentConfig = serde_json::from_str(text)?;
        cfg.check_finite()?;
        Ok(cfg)
    }

    fn check_finite(&self) -> Result<()> {
        let value = serde_json::to_value(self)?;
        fn walk(v: &serde_json::Value) -> bool {
            match v {
                serde_json::Value::Number(n) => n.as_f64().is_some_and(f64::is_finite),
                serde_json::Value::Array(a) => a.iter().all(walk),
                serde_json::Value::Object(o) => o.values().all(walk),
                _ => true,
            }
        }
        if walk(&value) {
            Ok(())
        } else {
            Err(Error::Config("all numeric fields must be finite".into()))
        }
    }

    /// Run settings with the config seed applied.
    pub fn run_config(&self) -> RunConfig {
        let mut cfg = self.run.clone();
        cfg.projection.seed = self.seed;
        cfg
    }

    pub fn generator(&self) -> Result<Generator> {
        match &self.problem {
            Problem::Alternating { generator, generator_params, start, .. } => by_name(generator, start.len(), generator_params),
            Problem::DiscreteEm { problem, .. } => {
                problem.validate()?;
                Ok(problem.generator())
            }
            Problem::ExpFamilyEm { spec, .. } => spec.generator(),
            Problem::Dspect { dspect, .. } => Ok(dspect.build()?.generator()),
        }
    }

    /// Orientation of the produced trace; em problems always start lr.
    pub fn orientation(&self) -> crate::alternator::Orientation {
        match self.problem {
            Problem::Alternating { .. } => self.run.orientation,
            _ => crate::alternator::Orientation::Lr,
        }
    }

    pub fn default_start(&self) -> Result<Vec<f64>> {
        match &self.problem {
            Problem::Alternating { start, .. } | Problem::DiscreteEm { start, .. } | Problem::ExpFamilyEm { start, .. } => Ok(start.clone()),
            Problem::Dspect { dspect, start } => match start {
                Some(s) => Ok(s.clone()),
                None => Ok(dspect.build()?.model.parametric_parts()?.1.center().as_slice().to_vec()),
            },
        }
    }

    pub fn execute(&self) -> Result<Outcome> {
        self.execute_from(&self.default_start()?)
    }

    /// Run the problem from an explicit start.
    pub fn execute_from(&self, start: &[f64]) -> Result<Outcome> {
        let cfg = self.run_config();
        let start = DVector::from_column_slice(start);
        let (generator, trace, em) = match &self.problem {
            Problem::Alternating { a, b, .. } => {
                let gen = self.generator()?;
                let trace = run(gen.as_ref(), a, b, &start, &cfg)?;
                (gen, trace, None)
            }
            Problem::DiscreteEm { problem, .. } => {
                let em = run_em_discrete(problem, &start, &cfg)?;
                (problem.generator(), em.trace.clone(), Some(em))
            }
            Problem::ExpFamilyEm { spec, .. } => {
                let em = run_em_expfam(spec, &start, &cfg)?;
                (spec.generator()?, em.trace.clone(), Some(em))
            }
            Problem::Dspect { dspect, .. } => {
                let prob = dspect.build()?;
                let em = prob.run(&start, &cfg)?;
                (prob.generator(), em.trace.clone(), Some(em))
            }
        };
        Ok(Outcome { generator, trace, em })
    }
}

/// Result of executing a config.
#[derive(Clone)]
pub struct Outcome {
    pub generator: Generator,
    pub trace: Trace,
    pub em: Option<EmTrace>,
}

/// JSON summary of one run.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Summary {
    pub name: String,
    pub generator: String,
    pub orientation: crate::alternator::Orientation,
    pub stop_reason: crate::alternator::StopReason,
    pub message: Option<String>,
    pub rows: usize,
    pub start: Vec<f64>,
    pub final_divergence: Option<f64>,
    pub r_star: Option<f64>,
    pub gap_uncertainty: Option<f64>,
    pub feasible: Option<bool>,
    pub final_b: Option<Vec<f64>>,
    pub final_a: Option<Vec<f64>>,
    pub chain_violations: usize,
    pub max_chain_excess: f64,
    pub boundary_hits: usize,
    pub transversality: Option<Transversality>,
    pub fixed_point_residual: Option<f64>,
}

impl Outcome {
    pub fn gap(&self) -> Option<GapEstimate> {
        detect_gap(&self.trace).ok()
    }

    pub fn summary(&self, name: &str, start: &[f64], toggles: &DiagnosticsToggles) -> Summary {
        let t = &self.trace;
        let gap = self.gap();
        let last_d = t.d_b_a.iter().rev().find(|v| v.is_finite()).copied();
        // With too few rows for a tail, an exact zero still certifies feasibility.
        let (r_star, feasible) = match (&gap, last_d) {
            (Some(g), _) => (Some(g.r_star), Some(g.feasible)),
            (None, Some(d)) if d <= 0.5 * crate::alternator::FEASIBILITY_TOL.powi(2) => (Some((2.0 * d).sqrt()), Some(true)),
            _ => (None, None),
        };
        let pair = t.final_pair();
        let transversality = (toggles.transversality && feasible == Some(true)).then(|| classify_transversality(t));
        Summary {
            name: name.to_owned(),
            generator: t.generator.clone(),
            orientation: t.orientation,
            stop_reason: t.stop_reason,
            message: t.message.clone(),
            rows: t.len(),
            start: start.to_vec(),
            final_divergence: last_d,
            r_star,
            gap_uncertainty: gap.as_ref().map(|g| g.uncertainty),
            feasible,
            final_b: pair.as_ref().map(|(b, _)| b.as_slice().to_vec()),
            final_a: pair.as_ref().map(|(_, a)| a.as_slice().to_vec()),
            chain_violations: t.chain_violations,
            max_chain_excess: t.max_chain_excess,
            boundary_hits: t.boundary_hits,
            transversality,
            fixed_point_residual: self.em.as_ref().map(|e| e.fixed_point_residual),
        }
    }
}

/// Cluster labels: each point joins the first representative within `tol`.
pub fn cluster_limits(limits: &[Point], tol: f64) -> Vec<usize> {
    let mut reps: Vec<Point> = Vec::new();
    limits
        .iter()
        .map(|p| match reps.iter().position(|r| (r - p).norm() <= tol) {
            Some(i) => i,
            None => {
                reps.push(p.clone());
                reps.len() - 1
            }
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    const TWO_LINES: &str = r#"{
        "name": "two_lines",
        "problem": {
            "kind": "alternating",
            "generator": "euclidean",
            "a": {"variant": "Affine", "base": [0, 0], "directions": [[1, 0]]},
            "b": {"variant": "Affine", "base": [0, 0], "directions": [[1, 1]]},
            "start": [1, 2]
        }
    }"#;

    #[test]
    fn parses_and_runs() {
        let cfg = ExperimentConfig::from_json(TWO_LINES).unwrap();
        let out = cfg.execute().unwrap();
        let s = out.summary(&cfg.name, &cfg.default_start().unwrap(), &cfg.diagnostics);
        assert_eq!(s.feasible, Some(true));
        assert!(s.r_star.unwrap() < 1e-6);
    }

    #[test]
    fn rejects_malformed() {
        assert!(matches!(ExperimentConfig::from_json("{"), Err(Error::Config(_))));
        assert!(ExperimentConfig::from_json(&TWO_LINES.replace("euclidean", "nope")).unwrap().execute().is_err());
    }

    #[test]
    fn grid_starts() {
        let s = SweepSpec { grid: Some(GridSpec { lo: vec![0.0, 0.0], hi: vec![1.0, 2.0], points: 3 }), ..Default::default() };
        let starts = s.all_starts().unwrap();
        assert_eq!(starts.len(), 9);
        assert_eq!(starts[8], vec![1.0, 2.0]);
    }

    #[test]
    fn clusters() {
        let pts: Vec<Point> = [0.0, 1e-9, 1.0, 1.0 + 1e-9].iter().map(|&v| DVector::from_vec(vec![v])).collect();
        assert_eq!(cluster_limits(&pts, 1e-6), vec![0, 0, 1, 1]);
    }
}
