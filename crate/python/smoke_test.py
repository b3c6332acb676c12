"""Smoke test of the bregalt_py extension."""

import math

import bregalt_py as bp


def main():
    assert "euclidean" in bp.list_generators()
    assert "two_lines_60" in bp.list_fixtures()
    assert bp.list_maps()

    kl = bp.Generator("negentropy", 2)
    x, y = [1.0, 2.0], [0.5, 1.5]
    d = kl.divergence(x, y)
    expected = sum(p * math.log(p / q) - p + q for p, q in zip(x, y))
    assert abs(d - expected) < 1e-12, (d, expected)
    assert abs(d - kl.dual_divergence(kl.gradient(y), kl.gradient(x))) < 1e-12
    assert abs(kl.conjugate().divergence(kl.gradient(y), kl.gradient(x)) - d) < 1e-12

    eu = bp.Generator("euclidean", 2)
    line = bp.SetSpec.affine([0.0, 1.0], [[1.0, 0.0]])
    p, dv = bp.left_project(eu, line, [3.0, 4.0])
    assert max(abs(p[0] - 3.0), abs(p[1] - 1.0)) < 1e-12 and abs(dv - 4.5) < 1e-12

    exp = bp.Experiment.fixture("two_lines_60")
    run = exp.run()
    summary = run.summary()
    assert summary["feasible"] is True, summary
    assert len(run) == len(run.a) == len(run.b)
    assert run.gap()["feasible"]
    assert len(run.diagnostics()) == len(run)
    assert bp.Experiment.from_json(exp.to_json()).name == exp.name

    rate = bp.fit_rate([2.0 ** -k for k in range(40)])
    assert rate["kind"] == "r-linear" and abs(rate["q"] - 0.5) < 1e-9, rate

    try:
        bp.Generator("nope", 2)
    except ValueError:
        pass
    else:
        raise AssertionError("unknown generator accepted")

    print("smoke test ok:", summary["stop_reason"], summary["rows"], "rows")


if __name__ == "__main__":
    main()
