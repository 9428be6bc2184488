"""Smoke test for the `vgc` extension module."""

import json
import math
import tempfile

import vgc


def main():
    t = vgc.Transform([0.1, 0.4, 0.3, 0.2], "exponential")
    assert t.support == "positive"
    x = t.forward(0.3)
    assert abs(t.inverse(x) - 0.3) < 1e-9
    assert t.deriv(0.3) > 0
    u = vgc.Transform([0.25] * 4)
    assert abs(u.forward(1.7) - 1.7) < 1e-9

    p = vgc.project_simplex([0.9, 0.4, -0.2])
    assert abs(sum(p) - 1) < 1e-12 and min(p) >= 0

    model = vgc.Model("gamma", shape=5.0, rate=2.0)
    assert model.dim == 1 and model.supports == ["positive"]
    assert math.isfinite(model.log_joint([2.0]))

    state = vgc.State.initial([vgc.Transform.uniform("positive", 10)])
    fitted, trace, info = vgc.fit(model, state, iterations=2000, samples_per_iter=10, seed=1)
    assert info["iterations"] == 2000 and trace
    value, se = vgc.elbo(model, fitted, n=20000, seed=2)
    # Gamma(5, 2) normalizer: ln Γ(5) - 5 ln 2
    log_z = model.log_normalizer()
    assert abs(log_z - (math.lgamma(5) - 5 * math.log(2))) < 1e-9
    assert value <= log_z + 4 * se and value > log_z - 0.05, (value, log_z)

    draws = fitted.sample(5000, seed=3)
    mean = sum(d[0] for d in draws) / len(draws)
    assert abs(mean - 2.5) < 0.1, mean
    again = vgc.State.from_json(fitted.to_json())
    assert again.mu == fitted.mu and again.c == fitted.c

    ln = vgc.State([0.1, 0.1], [[0.5, 0.0], [0.2, 0.46]], [vgc.Transform.exponential()] * 2)
    assert abs(ln.correlation()[0][1] - 0.2 / math.hypot(0.2, 0.46)) < 1e-12

    with tempfile.TemporaryDirectory() as out:
        summary = vgc.run_experiment("horseshoe", method="mfvb", out=out, config="[output]\ndraws = 100\n")
        assert abs(summary["elbo"] - -1.0778) < 1e-3, summary["elbo"]
        with open(f"{out}/summary.json") as f:
            assert json.load(f)["method"] == "mfvb"

    try:
        vgc.Model("gamma", shape=-1.0, rate=2.0)
    except ValueError:
        pass
    else:
        raise AssertionError("negative shape accepted")

    print("smoke test passed")


if __name__ == "__main__":
    main()
