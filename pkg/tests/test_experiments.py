import io

import numpy as np
import pytest

from mnlqr.errors import ConfigInvalid, EmptyInput
from mnlqr.experiments import (METRICS, SweepRecord, example_config, loglog_slope, medians,
                               parse_config, quantile_band, read_records, run_sweep, summarize,
                               with_overrides, write_records)


def small(name="toy", **kw):
    return parse_config(with_overrides(example_config(name), sweep=[50], repeats=1, **kw))


def test_quantile_band_examples():
    assert quantile_band([2.5] * 7) == (2.5, 2.5, 2.5)
    lo, med, hi = quantile_band(range(1, 101), 0.1)
    assert (lo, med, hi) == pytest.approx((45.55, 50.5, 55.45))
    with pytest.raises(EmptyInput):
        quantile_band([])
    with pytest.raises(ValueError):
        quantile_band([1.0], 1.0)


def test_quantile_band_widens(rng):
    v = rng.standard_normal(101)
    widths = [np.subtract(*quantile_band(v, q)[::-2]) for q in (0.1, 0.3, 0.6, 0.9)]
    assert all(a <= b for a, b in zip(widths, widths[1:]))


def test_example_configs_parse():
    for name in ("toy", "toy-model-free", "toy-rollout", "toy-single", "structured"):
        exp = parse_config(example_config(name))
        assert exp.sweep == [10, 21, 46, 100, 215, 464, 1000, 2154, 4641, 10000]
    with pytest.raises(ConfigInvalid):
        example_config("nope")


def test_toy_ground_truth():
    exp = parse_config(example_config("toy"))
    np.testing.assert_allclose(np.diag(exp.w_true), [0.0125, 0.0125, 0.0225])
    assert exp.r_w == pytest.approx(0.35)
    mf = parse_config(example_config("toy-model-free"))
    assert mf.r_w == pytest.approx(0.35 * np.sqrt(2))


@pytest.mark.parametrize("path,mutate", [
    ("bogus", lambda c: c.update(bogus=1)),
    ("sweep", lambda c: c.update(sweep=[100, 10])),
    ("sweep", lambda c: c.update(sweep=[])),
    ("repeats", lambda c: c.update(repeats=0)),
    ("delta", lambda c: c.update(delta=1.5)),
    ("lqr.R", lambda c: c["lqr"].update(R=[[1.0, 0.0]])),
    ("lqr", lambda c: c["lqr"].update(Q=[[0.0, 0.0], [0.0, 0.0]])),
    ("system.disturbance.kind", lambda c: c["system"]["disturbance"].update(kind="gauss")),
    ("system.disturbance.center", lambda c: c["system"]["disturbance"].update(center=[0, 0])),
    ("generation.method", lambda c: c.update(generation={"method": "magic"})),
    ("generation.T", lambda c: c.update(generation={"method": "rollout", "x0": [1, 1],
                                                    "K": [[0, 0]], "delta_radius": 1, "T": 1})),
    ("system.truth", lambda c: c["system"].update(truth={"nx": 2})),
    ("seed", lambda c: c.update(seed=-3)),
])
def test_config_errors_name_the_field(path, mutate):
    cfg = example_config("toy")
    mutate(cfg)
    with pytest.raises(ConfigInvalid) as ei:
        parse_config(cfg)
    assert ei.value.path == path


def test_identify_cell_metrics():
    recs = run_sweep(small(), "identify")
    assert sorted(r.metric_name for r in recs) == ["beta_w", "op_rel_err", "w_err"]
    recs = run_sweep(small("structured"), "identify")
    assert {r.metric_name for r in recs} == {"beta_w", "op_rel_err", "w_err", "mu_err", "beta_mu"}


def test_synthesize_records_infeasible_and_trivial():
    exp = parse_config(with_overrides(example_config("toy-model-free"), sweep=[50], repeats=2))
    recs = run_sweep(exp, "synthesize")
    feas = [r for r in recs if r.metric_name == "feasible"]
    assert [r.value for r in feas] == [0.0, 0.0]
    assert not any(r.metric_name == "rel_subopt" and r.experiment_id == "toy-model-free" for r in recs)
    triv = [r for r in recs if r.experiment_id.endswith("/trivial")]
    assert len(triv) == 1


def test_beta_zero_gives_certainty_equivalent():
    exp = small(beta_scale=0.0)
    recs = run_sweep(exp, "synthesize")
    sub = [r.value for r in recs if r.metric_name == "rel_subopt" and r.experiment_id == "toy"]
    assert sub and sub[0] >= 0


def test_determinism_and_parallel_equality():
    exp = parse_config(with_overrides(example_config("toy"), sweep=[30, 60], repeats=3))
    a, b = io.StringIO(), io.StringIO()
    write_records(run_sweep(exp, "identify"), a)
    write_records(run_sweep(exp, "identify"), b)
    assert a.getvalue() == b.getvalue()
    c = io.StringIO()
    write_records(run_sweep(exp, "identify", threads=2), c)
    assert c.getvalue() == a.getvalue()


def test_records_roundtrip(tmp_path):
    recs = run_sweep(small(), "identify")
    p = tmp_path / "out.csv"
    write_records(recs, p)
    lines = p.read_text().splitlines()
    assert lines[0].startswith("# mnlqr-sweep v1") and "0.45/0.55" in lines[0]
    assert read_records(p) == recs
    with pytest.raises(ValueError):
        SweepRecord("x", 1, 0, "nope", 1.0)
    assert set(METRICS) >= {r.metric_name for r in recs}


def test_summaries():
    recs = [SweepRecord("e", n, r, "w_err", 1.0 / np.sqrt(n) * (1 + 0.01 * r))
            for n in (100, 400, 1600) for r in range(5)]
    m = medians(recs, "w_err")
    assert loglog_slope(list(m), list(m.values())) == pytest.approx(-0.5, abs=1e-9)
    s = summarize(recs)
    assert s[("e", 100, "w_err")][3] == 5
