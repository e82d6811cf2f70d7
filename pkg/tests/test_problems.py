import json

import numpy as np
import pytest

from costaware_bo.gp import KernelSpec
from costaware_bo.problems import (
    TabularFormatError,
    initial_design,
    load_tabular,
    make_synthetic,
    synthetic_candidates,
)


def test_synthetic_1d_defaults():
    p = make_synthetic(seed=3)
    assert p.candidates.shape == (10001, 1)
    assert p.true_min == p.objective.min()
    assert p.simple_regret([int(np.argmin(p.objective))]) == 0.0
    q = make_synthetic(seed=3)
    np.testing.assert_array_equal(p.objective, q.objective)


def test_synthetic_zero_scale_is_constant():
    p = make_synthetic(1, 101, KernelSpec(0.1, 1e-14, 0.7), seed=0)
    assert np.ptp(p.objective) < 1e-5 and abs(p.true_min - 0.7) < 1e-5


def test_synthetic_costs_and_candidates():
    p = make_synthetic(2, 256, cost_kind="periodic", lam=0.5, seed=1)
    assert p.candidates.shape == (256, 2)
    assert np.all((p.candidates >= 0) & (p.candidates <= 1))
    # the periodic cost peaks at the objective's minimizer
    assert p.unit_costs[np.argmin(p.objective)] == pytest.approx(p.unit_costs.max())
    np.testing.assert_allclose(p.costs, 0.5 * p.unit_costs)
    np.testing.assert_array_equal(synthetic_candidates(3, 64, 0), synthetic_candidates(3, 64, 0))


def test_initial_design():
    c1 = synthetic_candidates(1, 1001)
    assert len(initial_design(c1)) == 4
    c8 = synthetic_candidates(8, 512)
    d = initial_design(c8, seed=2)
    assert len(d) == 18 and len(set(d.tolist())) == 18
    np.testing.assert_array_equal(d, initial_design(c8, seed=2))
    r = initial_design(c8, 10, "random-ids", 0)
    assert len(set(r.tolist())) == 10
    with pytest.raises(ValueError):
        initial_design(c1[:3], 4)
    # tiny candidate set forces deduplication and top-up
    small = synthetic_candidates(1, 5)
    assert sorted(initial_design(small, 5).tolist()) == [0, 1, 2, 3, 4]


def test_load_toy_fixture(fixtures_dir):
    p = load_tabular(fixtures_dir / "toy3.csv", cost_column="proxy_cost", report_cost_column="runtime", lam=0.01)
    expected = json.loads((fixtures_dir / "toy3.expected.json").read_text())
    assert len(p.candidates) == expected["n_candidates"] and p.dim == expected["dim"]
    np.testing.assert_allclose(p.candidates, expected["scaled_features"])
    assert p.true_min == pytest.approx(expected["true_min"])
    ids = p.meta["ids"]
    for key, regret in expected["regret_by_evaluated_ids"].items():
        idx = [ids.index(i) for i in key.split(",")]
        assert p.simple_regret(idx) == pytest.approx(regret, abs=1e-12)
    assert p.standardize
    np.testing.assert_allclose(p.unit_costs, [expected["proxy_cost"][i] for i in ids])
    np.testing.assert_allclose(p.unit_report_costs, [expected["runtime"][i] for i in ids])
    raw = np.array([[1, 10], [2, 20], [3, 40]], float)
    np.testing.assert_allclose(p.unscale_features(p.candidates), raw, atol=1e-9)


def _write(tmp_path, text):
    f = tmp_path / "bench.csv"
    f.write_text(text)
    return f


def test_tabular_errors(tmp_path):
    with pytest.raises(TabularFormatError, match="test_error"):
        load_tabular(_write(tmp_path, "id,f1,val_error,runtime,proxy_cost\na,1,0.1,1,1\n"))
    with pytest.raises(TabularFormatError, match="row 3"):
        load_tabular(_write(tmp_path, "id,f1,val_error,test_error,runtime\na,1,0.1,0.1,1\nb,x,0.1,0.1,1\n"),
                     cost_column="runtime")
    with pytest.raises(TabularFormatError, match="duplicate id"):
        load_tabular(_write(tmp_path, "id,f1,val_error,test_error,runtime\na,1,0.1,0.1,1\na,2,0.1,0.1,1\n"),
                     cost_column="runtime")
    with pytest.raises(TabularFormatError, match="proxy_cost"):
        load_tabular(_write(tmp_path, "id,f1,val_error,test_error,runtime\na,1,0.1,0.1,1\n"))
    with pytest.raises(TabularFormatError, match="feature"):
        load_tabular(_write(tmp_path, "id,val_error,test_error,runtime\na,0.1,0.1,1\n"), cost_column="runtime")
