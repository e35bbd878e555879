"""Quick end-to-end check of the Python bindings.

Build first, e.g. `maturin develop --release` from crates/py, then run
`python python/smoke_test.py`.
"""

import math

import srassim_py as sa


def main():
    model = sa.ModelConfig()
    scenario = sa.Scenario.two_strain()
    truth, observed = scenario.observations(model, seed=3)
    assert len(truth) == len(observed) == model.weeks_per_season
    assert all(z >= 0 for z in observed)

    state, inc = scenario.initial_state.step(0, model)
    assert inc > 0 and 0 < state.get("S") < model.population

    runs = {}
    for sr in (True, False):
        cfg = sa.FilterConfig("EAKF", n_members=100, sr=sr, seed=3)
        runs[sr] = sa.run_filter(observed, cfg, model)
        assert runs[sr].weeks == len(observed)
        assert math.isfinite(runs[sr].rms(observed))
    assert sum(runs[True].reprobed()) > 0
    assert sum(runs[False].reprobed()) == 0
    print("EAKF rms with / without re-probing: %.1f / %.1f" % (runs[True].rms(observed), runs[False].rms(observed)))

    pf = sa.FilterConfig("PF", n_members=500, seed=3)
    again = sa.run_filter(observed, pf, model).posterior_mean()
    assert again == sa.run_filter(observed, pf, model).posterior_mean()

    weeks = [8, 9, 10]
    on = sa.forecast(observed, weeks, sa.FilterConfig("EAKF", n_members=100, seed=3), model)
    off = sa.forecast(observed, weeks, sa.FilterConfig("EAKF", n_members=100, sr=False, seed=3), model)
    assert [f.forecast_week for f in on] == weeks
    cmp = sa.compare(on, off)
    assert cmp["n"] == 3 and set(cmp["per_week"]) == set(weeks)

    t = sa.paired_t([1.0, 2.0, 3.0])
    assert abs(t["mean_diff"] - 2.0) < 1e-12 and t["p_one_sided"] < 0.05

    mif_cfg = sa.FilterConfig("MIF", n_members=300, seed=1)
    mif_cfg.mif_iterations = 2
    est = sa.mif(observed, mif_cfg, model)
    assert math.isfinite(est["R0max"]) and est["R0max"] > 0

    try:
        sa.FilterConfig("nope")
    except ValueError:
        pass
    else:
        raise AssertionError("bad kind accepted")

    print("srassim_py %s smoke test ok" % sa.__version__)


if __name__ == "__main__":
    main()
