//! Acceptance suite. Prints one PASS/FAIL line per criterion and exits
//! nonzero if any criterion fails.

use std::f64::consts::PI;
use std::process::ExitCode;
use std::time::Instant;

use bregalt::alternator::{detect_gap, Orientation, Trace};
use bregalt::diagnostics::{classify_transversality, fit_rate, three_point_ell, RateKind, Side, Transversality};
use bregalt::em::{e_step_discrete, kl_expfam, ExpFamilySpec};
use bregalt::experiment::{ExperimentConfig, Outcome, Problem};
use bregalt::fixtures::{dspect_truth, fixture, FIXTURE_NAMES};
use bregalt::geometry::{estimate_reach, left_geodesic, ReachOptions};
use bregalt::legendre::{divergence, dual_divergence, euclidean, gaussian, gradient, negentropy, poisson, Generator, GeneratorParams};
use bregalt::sets::{left_project, left_project_with, ProjectOptions, SetSpec};
use bregalt::Point;
use nalgebra::DVector;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

type Verdict = Result<String, String>;

fn p(v: &[f64]) -> Point {
    DVector::from_column_slice(v)
}

fn run_fixture(name: &str) -> Result<(ExperimentConfig, Outcome), String> {
    let cfg = fixture(name).ok_or_else(|| format!("unknown fixture {name}"))?;
    let out = cfg.execute().map_err(|e| format!("{name}: {e}"))?;
    Ok((cfg, out))
}

fn check(ok: bool, detail: String) -> Verdict {
    if ok {
        Ok(detail)
    } else {
        Err(detail)
    }
}

fn random_point(rng: &mut ChaCha8Rng, dim: usize, lo: f64, hi: f64) -> Point {
    DVector::from_fn(dim, |_, _| rng.random_range(lo..hi))
}

fn duality_identity() -> Verdict {
    let start = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let cases: [(Generator, f64, f64); 4] =
        [(euclidean(3), -5.0, 5.0), (negentropy(3), 0.05, 5.0), (poisson(3), -3.0, 2.0), (gaussian(3, 1.7), -4.0, 4.0)];
    let mut worst = 0.0f64;
    for (gen, lo, hi) in &cases {
        for _ in 0..1000 {
            let x = random_point(&mut rng, 3, *lo, *hi);
            let y = random_point(&mut rng, 3, *lo, *hi);
            let d = divergence(gen.as_ref(), &x, &y).map_err(|e| e.to_string())?;
            let gx = gradient(gen.as_ref(), &x).map_err(|e| e.to_string())?;
            let gy = gradient(gen.as_ref(), &y).map_err(|e| e.to_string())?;
            let dd = dual_divergence(gen.as_ref(), &gy, &gx).map_err(|e| e.to_string())?;
            worst = worst.max((d - dd).abs());
        }
    }
    let secs = start.elapsed().as_secs_f64();
    check(worst <= 1e-10 && secs < 1.0, format!("max |ΔD| = {worst:.2e} over 4×1000 pairs in {secs:.3} s"))
}

fn squeezed_curve_example() -> Verdict {
    let gen = negentropy(2);
    let d = divergence(gen.as_ref(), &p(&[1.0, 0.0]), &p(&[1.0, 1.0])).map_err(|e| e.to_string())?;
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    let mut tangency_ok = true;
    let mut worst_agree = 0.0f64;
    for _ in 0..1000 {
        let z: f64 = rng.random_range(0.1..3.0);
        if z == 1.0 {
            continue;
        }
        let closed = z * z.ln() - z + 2.0;
        let lib = divergence(gen.as_ref(), &p(&[z, 0.0]), &p(&[1.0, 1.0])).map_err(|e| e.to_string())?;
        tangency_ok &= closed > 1.0;
        worst_agree = worst_agree.max((closed - lib).abs());
    }
    let (_, out) = run_fixture("squeezed_curve")?;
    let gap = detect_gap(&out.trace).map_err(|e| e.to_string())?;
    let r_err = (gap.r_star - 2f64.sqrt()).abs();
    check(
        (d - 1.0).abs() <= 1e-12 && tangency_ok && worst_agree <= 1e-12 && r_err <= 1e-6,
        format!("K((1,0)‖(1,1)) = {d:.15}, tangency {tangency_ok}, r* = {:.12} (|r* − √2| = {r_err:.1e})", gap.r_star),
    )
}

fn fixture_runs() -> Result<Vec<(String, Outcome)>, String> {
    let mut runs = Vec::new();
    for name in FIXTURE_NAMES {
        let (cfg, out) = run_fixture(name)?;
        runs.push((name.to_string(), out));
        if let Some(sweep) = &cfg.sweep {
            for (i, s) in sweep.all_starts().map_err(|e| e.to_string())?.iter().enumerate() {
                let out = cfg.execute_from(s).map_err(|e| format!("{name} start {i}: {e}"))?;
                runs.push((format!("{name}#{i}"), out));
            }
        }
    }
    Ok(runs)
}

fn decrease_chain(runs: &[(String, Outcome)]) -> Verdict {
    let mut blocks = 0usize;
    let mut violations = Vec::new();
    for (name, out) in runs {
        let gen = out.generator.as_ref();
        for (k, blk) in out.trace.full_blocks().iter().enumerate() {
            blocks += 1;
            let d_b_ap = divergence(gen, &blk.b, &blk.a_plus).map_err(|e| e.to_string())?;
            let d_bp_ap = divergence(gen, &blk.b_plus, &blk.a_plus).map_err(|e| e.to_string())?;
            let mut ok = d_bp_ap <= d_b_ap + 1e-10;
            if let Some(a) = &blk.a {
                let d_b_a = divergence(gen, &blk.b, a).map_err(|e| e.to_string())?;
                ok &= d_b_ap <= d_b_a + 1e-10;
            }
            if !ok {
                violations.push(format!("{name} block {k}"));
            }
        }
        if out.trace.chain_violations > 0 {
            violations.push(format!("{name}: {} flagged by the run", out.trace.chain_violations));
        }
    }
    check(
        violations.is_empty(),
        format!("{} runs, {blocks} blocks, {} violations {:?}", runs.len(), violations.len(), violations.iter().take(5).collect::<Vec<_>>()),
    )
}

fn geodesic_invariance() -> Verdict {
    let sets = [
        (negentropy(2), SetSpec::parametric("line", vec![1.0, 2.0, 1.0, -0.5], vec![-1.0], vec![1.5]), vec![p(&[2.5, 0.7]), p(&[0.4, 0.3])]),
        (negentropy(2), SetSpec::parametric("disk", vec![2.0, 2.0], vec![0.0, 0.0], vec![1.0, 2.0 * PI]), vec![p(&[4.0, 0.5]), p(&[0.3, 0.2])]),
        (
            negentropy(3),
            SetSpec::parametric("patch", vec![3.0, 2.0, 1.0, 1.0, 1.0, 1.0, -1.0, 0.0, 0.0, 1.0, -1.0], vec![-0.5, -0.5], vec![0.5, 0.5]),
            vec![p(&[2.0, 0.5, 1.0]), p(&[0.2, 0.3, 2.5])],
        ),
    ];
    let mut worst = 0.0f64;
    let mut cases = 0;
    for (gen, set, targets) in &sets {
        if !set.is_convex() {
            return Err(format!("{} is not declared convex", set.variant_name()));
        }
        for a_plus in targets {
            let b_plus = left_project(gen.as_ref(), set, a_plus).map_err(|e| e.to_string())?.point;
            for i in 1..=9 {
                let lambda = i as f64 / 10.0;
                let a_l = left_geodesic(gen.as_ref(), &b_plus, a_plus, lambda).map_err(|e| e.to_string())?;
                let re = left_project(gen.as_ref(), set, &a_l).map_err(|e| e.to_string())?.point;
                worst = worst.max((re - &b_plus).norm());
                cases += 1;
            }
        }
    }
    check(worst <= 1e-8, format!("max ‖P_B(a_λ) − b⁺‖ = {worst:.2e} over {cases} reprojections"))
}

fn project_line(x: &Point, base: &Point, dir: &Point) -> Point {
    base + dir * (dir.dot(&(x - base)) / dir.norm_squared())
}

fn project_disk(x: &Point, c: &Point, r: f64) -> Point {
    let v = x - c;
    if v.norm() <= r {
        x.clone()
    } else {
        let n = v.norm();
        c + v * (r / n)
    }
}

fn project_circle(x: &Point, c: &Point, r: f64) -> Point {
    let v = x - c;
    let n = v.norm();
    c + v * (r / n)
}

fn project_below(x: &Point, level: f64) -> Point {
    p(&[x[0], x[1].min(level)])
}

/// Classical alternating projections from the rl seed: `a_k = P_A(b_{k−1})`, `b_k = P_B(a_k)`.
fn ap_reference(seed: &Point, rows: usize, pa: impl Fn(&Point) -> Point, pb: impl Fn(&Point) -> Point) -> (Vec<Point>, Vec<Point>) {
    let mut a = Vec::new();
    let mut b = Vec::new();
    let mut prev = seed.clone();
    for _ in 0..rows {
        let ak = pa(&prev);
        let bk = pb(&ak);
        prev = bk.clone();
        a.push(ak);
        b.push(bk);
    }
    (a, b)
}

fn trace_gap(trace: &Trace, a: &[Point], b: &[Point]) -> f64 {
    let mut worst = 0.0f64;
    for k in 0..trace.len() {
        worst = worst.max((&trace.a[k] - &a[k]).norm());
        if let Some(bk) = trace.b.get(k) {
            worst = worst.max((bk - &b[k]).norm());
        }
    }
    worst
}

fn euclidean_reduction() -> Verdict {
    let origin = p(&[0.0, 0.0]);
    let ex = p(&[1.0, 0.0]);
    let mut details = Vec::new();
    let mut worst = 0.0f64;
    let mut compare = |name: &str, pa: &dyn Fn(&Point) -> Point, pb: &dyn Fn(&Point) -> Point| -> Result<(), String> {
        let (cfg, out) = run_fixture(name)?;
        let seed = out.trace.seed.clone().ok_or("expected an rl trace")?;
        let _ = cfg;
        let (a, b) = ap_reference(&seed, out.trace.len(), pa, pb);
        let gap = trace_gap(&out.trace, &a, &b);
        worst = worst.max(gap);
        details.push(format!("{name} {gap:.1e}"));
        Ok(())
    };
    let d60 = p(&[0.5, 0.75f64.sqrt()]);
    compare("two_lines_60", &|x| project_line(x, &origin, &ex), &|x| project_line(x, &origin, &d60))?;
    compare("perpendicular_lines", &|x| project_line(x, &origin, &ex), &|x| project_line(x, &origin, &p(&[0.0, 1.0])))?;
    compare("parallel_lines", &|x| project_line(x, &origin, &ex), &|x| project_line(x, &p(&[0.0, 1.0]), &ex))?;
    compare("disjoint_balls", &|x| project_disk(x, &origin, 1.0), &|x| project_disk(x, &p(&[3.0, 0.0]), 1.0))?;
    compare("halfplane_line", &|x| project_line(x, &origin, &p(&[1.0, 1.0])), &|x| project_below(x, -1.0))?;
    compare("circle_line", &|x| project_circle(x, &origin, 1.0), &|x| project_line(x, &p(&[0.0, 0.5]), &ex))?;

    let (_, out) = run_fixture("two_lines_60")?;
    let errors: Vec<f64> = out.trace.b.iter().map(|b| b.norm()).collect();
    let rate = fit_rate(&errors).map_err(|e| e.to_string())?;
    let q = rate.q.unwrap_or(f64::NAN);
    check(
        worst <= 1e-10 && rate.kind == RateKind::RLinear && (q - 0.25).abs() <= 0.05 * 0.25,
        format!("max iterate gap {worst:.1e} [{}]; two_lines_60 q = {q:.5}", details.join(", ")),
    )
}

fn tangential_slowdown() -> Verdict {
    let (_, out) = run_fixture("parabola_tangent")?;
    let class = classify_transversality(&out.trace);
    // The limit of this fixture is the tangency point, the origin.
    let errors: Vec<f64> = out.trace.b.iter().map(|b| b.norm()).collect();
    let rate = fit_rate(&errors).map_err(|e| e.to_string())?;
    let rho = rate.rho.unwrap_or(f64::NAN);
    check(
        class == Transversality::Tangential && rate.kind == RateKind::Sublinear && rho > 0.0 && rate.residual < 0.1,
        format!("{class:?}, {:?} with ρ = {rho:.4}, residual {:.1e}", rate.kind, rate.residual),
    )
}

fn convex_ell(runs: &[(String, Outcome)]) -> Verdict {
    let mut min_ell = f64::INFINITY;
    let mut blocks = 0usize;
    let mut unresolved = 0usize;
    let mut used = Vec::new();
    for (name, out) in runs {
        let b_set = match fixture(name.split('#').next().unwrap_or(name)).map(|c| c.problem) {
            Some(Problem::Alternating { b, .. }) => b,
            _ => continue,
        };
        if !b_set.is_convex() || out.trace.orientation != Orientation::Rl {
            continue;
        }
        used.push(name.clone());
        for blk in out.trace.full_blocks() {
            let ell = three_point_ell(out.generator.as_ref(), &blk, Side::Rl).map_err(|e| e.to_string())?;
            if ell.is_nan() {
                unresolved += 1;
            } else if ell.is_finite() {
                min_ell = min_ell.min(ell);
                blocks += 1;
            }
        }
    }
    check(blocks > 0 && min_ell >= 1.0 - 1e-9, format!("min ℓ = {min_ell:.12} over {blocks} blocks ({unresolved} below rounding resolution) of {} runs", used.len()))
}

fn gap_case() -> Verdict {
    let (_, out) = run_fixture("disjoint_balls")?;
    let gap = detect_gap(&out.trace).map_err(|e| e.to_string())?;
    let n = out.trace.b.len();
    let tail_step = (&out.trace.b[n - 1] - &out.trace.b[n - 2]).norm();
    check(
        (gap.r_star - 1.0).abs() <= 1e-8 && tail_step <= 1e-8,
        format!("r* = {:.12}, tail ‖b_k − b_(k−1)‖ = {tail_step:.1e}", gap.r_star),
    )
}

fn discrete_em() -> Verdict {
    let cfg = fixture("em_discrete_6x3").ok_or("missing fixture")?;
    let problem = match &cfg.problem {
        Problem::DiscreteEm { problem, .. } => problem.clone(),
        _ => return Err("not a discrete em fixture".into()),
    };
    let out = cfg.execute().map_err(|e| e.to_string())?;
    let em = out.em.as_ref().ok_or("no em labels")?;
    let d: Vec<f64> = out.trace.d_b_a.clone();
    let monotone = d.windows(2).all(|w| w[1] <= w[0] + 1e-15 * (1.0 + d[0]));
    let gen = problem.generator();
    let data = problem.data_set();
    let opts = ProjectOptions { force_solver: true, ..Default::default() };
    let mut worst = 0.0f64;
    for q in em.model_points().iter().step_by(5) {
        let closed = e_step_discrete(q, &problem).map_err(|e| e.to_string())?;
        let solved = left_project_with(gen.as_ref(), &data, q, &opts, None).map_err(|e| e.to_string())?.point;
        worst = worst.max((closed - solved).norm());
    }
    check(
        monotone && em.fixed_point_residual <= 1e-8 && worst <= 1e-10,
        format!(
            "monotone {monotone} over {} rows, fixed_point_residual = {:.1e}, e-step vs solver {worst:.1e}",
            d.len(),
            em.fixed_point_residual
        ),
    )
}

fn log_factorials(n: usize) -> Vec<f64> {
    let mut out = vec![0.0; n + 1];
    for k in 1..=n {
        out[k] = out[k - 1] + (k as f64).ln();
    }
    out
}

/// `K(P_{λ′} ‖ P_λ)` by summing the Poisson probability masses.
fn poisson_kl_by_sum(lam_p: f64, lam: f64, log_fact: &[f64]) -> f64 {
    (0..log_fact.len())
        .map(|n| {
            let log_pp = n as f64 * lam_p.ln() - lam_p - log_fact[n];
            let log_pq = n as f64 * lam.ln() - lam - log_fact[n];
            log_pp.exp() * (log_pp - log_pq)
        })
        .sum()
}

fn kl_equals_bregman() -> Verdict {
    let mut rng = ChaCha8Rng::seed_from_u64(10);
    let log_fact = log_factorials(120);
    let spec = |generator: &str, sigma: Option<f64>| ExpFamilySpec {
        generator: generator.into(),
        generator_params: GeneratorParams { sigma },
        dim: 2,
        observed: vec![0],
        y_hat: vec![1.0],
        model: SetSpec::parametric("line", vec![0.0, 0.0, 1.0, 0.0], vec![-1.0], vec![1.0]),
    };
    let pois = spec("poisson", None);
    let gauss = spec("gaussian", Some(1.3));
    let mut worst_p = 0.0f64;
    let mut worst_g = 0.0f64;
    for _ in 0..1000 {
        let tp = random_point(&mut rng, 2, -2.0, 2.0);
        let t = random_point(&mut rng, 2, -2.0, 2.0);
        let reference: f64 = (0..2).map(|i| poisson_kl_by_sum(tp[i].exp(), t[i].exp(), &log_fact)).sum();
        worst_p = worst_p.max((kl_expfam(&pois, &tp, &t).map_err(|e| e.to_string())? - reference).abs());
        let s2 = 1.3f64 * 1.3;
        let (mp, m) = (&tp * s2, &t * s2);
        let reference = (mp - m).norm_squared() / (2.0 * s2);
        worst_g = worst_g.max((kl_expfam(&gauss, &tp, &t).map_err(|e| e.to_string())? - reference).abs());
    }
    check(worst_p <= 1e-10 && worst_g <= 1e-10, format!("max |K − D_f|: Poisson {worst_p:.1e}, Gaussian {worst_g:.1e}"))
}

fn gaussian_em_reduction() -> Verdict {
    let cfg = fixture("em_gaussian").ok_or("missing fixture")?;
    let (spec, start) = match &cfg.problem {
        Problem::ExpFamilyEm { spec, start } => (spec.clone(), p(start)),
        _ => return Err("not an exponential-family fixture".into()),
    };
    let out = cfg.execute().map_err(|e| e.to_string())?;
    let sigma2 = spec.generator_params.sigma.unwrap_or(1.0).powi(2);
    // Data set {θ : σ²θ₀ = ŷ}; model the line through the origin along (1, 2).
    let theta0 = spec.y_hat[0] / sigma2;
    let to_data = |x: &Point| p(&[theta0, x[1]]);
    let to_model = |x: &Point| project_line(x, &p(&[0.0, 0.0]), &p(&[1.0, 2.0]));
    let t = &out.trace;
    let mut worst = (&t.a[0] - &start).norm();
    let mut a = start.clone();
    for k in 0..t.len() {
        if k > 0 {
            a = to_data(&t.b[k - 1]);
            worst = worst.max((&t.a[k] - &a).norm());
        }
        if let Some(bk) = t.b.get(k) {
            worst = worst.max((bk - to_model(&a)).norm());
        }
    }
    check(worst <= 1e-10, format!("max iterate gap {worst:.1e} over {} rows", t.len()))
}

fn reach_scaling() -> Verdict {
    let gen = euclidean(2);
    let set = SetSpec::parametric("graph_power", vec![0.0, 1.5, 1.0, 0.0], vec![-2.0], vec![2.0]);
    let xs: Vec<f64> = (0..8).map(|i| 0.01 * (30f64).powf(i as f64 / 7.0)).collect();
    let mut logx = Vec::new();
    let mut logr = Vec::new();
    for &x in &xs {
        let b_plus = p(&[x, x.powf(1.5)]);
        let slope = 1.5 * x.sqrt();
        let normal = p(&[-slope, 1.0]).normalize();
        let a_plus = &b_plus + normal * 1e-3;
        let reach = estimate_reach(gen.as_ref(), &set, &b_plus, &a_plus, &ReachOptions::default()).map_err(|e| e.to_string())?;
        logx.push(x.ln());
        logr.push(reach.value.ln());
    }
    let n = logx.len() as f64;
    let mx = logx.iter().sum::<f64>() / n;
    let my = logr.iter().sum::<f64>() / n;
    let sxy: f64 = logx.iter().zip(&logr).map(|(a, b)| (a - mx) * (b - my)).sum();
    let sxx: f64 = logx.iter().map(|a| (a - mx).powi(2)).sum();
    let exponent = sxy / sxx;
    check((exponent - 0.5).abs() <= 0.1, format!("exponent {exponent:.4} over x ∈ [0.01, 0.3]"))
}

fn dspect_toy() -> Verdict {
    let start = Instant::now();
    let cfg = fixture("dspect_toy").ok_or("missing fixture")?;
    let problem = match &cfg.problem {
        Problem::Dspect { dspect, .. } => dspect.build().map_err(|e| e.to_string())?,
        _ => return Err("not a dSPECT fixture".into()),
    };
    let out = cfg.execute().map_err(|e| e.to_string())?;
    let secs = start.elapsed().as_secs_f64();
    let gap = detect_gap(&out.trace).map_err(|e| e.to_string())?;
    let em = out.em.as_ref().ok_or("no em labels")?;
    let z = em.model_points().last().ok_or("empty trace")?;
    let fitted = problem.fitted_counts(z);
    let truth_counts = problem.expected_counts(&p(&dspect_truth()));
    let rel_counts = fitted.iter().zip(&truth_counts).map(|(f, t)| ((f - t) / t).abs()).fold(0.0, f64::max);
    // Voxel activities read back from the hidden counts z_ijk = c_ijk x_ik of bin 0.
    let truth_x = problem.activities(&p(&dspect_truth()));
    let mut rel_x = 0.0f64;
    for (&flat, &v) in problem.keep.iter().zip(z.iter()) {
        let (i, j, k) = (flat / (problem.bins * problem.frames), (flat / problem.frames) % problem.bins, flat % problem.frames);
        if j == 0 {
            let x = v / problem.coeffs[flat];
            rel_x = rel_x.max(((x - truth_x[i * problem.frames + k]) / truth_x[i * problem.frames + k]).abs());
        }
    }
    check(
        gap.r_star <= 1e-6 && rel_counts <= 1e-3 && secs < 30.0,
        format!(
            "r* = {:.1e}, {} rows, frame counts rel. error {rel_counts:.1e} (voxel activities {rel_x:.1e}), {secs:.2} s",
            gap.r_star,
            out.trace.len()
        ),
    )
}

fn main() -> ExitCode {
    let start = Instant::now();
    let runs = fixture_runs();
    let mut results: Vec<(usize, &str, Verdict)> = vec![
        (1, "duality identity", duality_identity()),
        (2, "squeezed curve example", squeezed_curve_example()),
        (3, "decrease chain", runs.as_ref().map_err(Clone::clone).and_then(|r| decrease_chain(r))),
        (4, "geodesic projection invariance", geodesic_invariance()),
        (5, "euclidean reduction", euclidean_reduction()),
        (6, "tangential slowdown", tangential_slowdown()),
        (7, "convexity gives ell = 1", runs.as_ref().map_err(Clone::clone).and_then(|r| convex_ell(r))),
        (8, "gap case", gap_case()),
        (9, "discrete em", discrete_em()),
        (10, "KL = Bregman", kl_equals_bregman()),
        (11, "Gaussian em reduction", gaussian_em_reduction()),
        (12, "reach scaling", reach_scaling()),
        (13, "dSPECT toy", dspect_toy()),
    ];
    let secs = start.elapsed().as_secs_f64();
    results.push((
        14,
        "suite runtime",
        check(secs < 120.0, format!("acceptance target ran in {secs:.1} s; full-suite time is recorded in test_output.txt")),
    ));
    let mut failed = 0;
    for (n, title, verdict) in &results {
        match verdict {
            Ok(detail) => println!("criterion {n:>2} PASS  {title}: {detail}"),
            Err(detail) => {
                failed += 1;
                println!("criterion {n:>2} FAIL  {title}: {detail}");
            }
        }
    }
    println!("{} of {} criteria passed", results.len() - failed, results.len());
    if failed == 0 {
        ExitCode::SUCCESS
    } else {
        ExitCode::FAILURE
    }
}
