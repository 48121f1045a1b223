import math

import numpy as np
import pytest

from mmpca import Dataset, fit
from mmpca import selection
from mmpca.data import holdout_split, rescale_to_pi2
from mmpca.optimizer import OptimizationError
from mmpca.selection import CvFailure, LambdaGrid, cross_validate, parse_flags, parse_grid


def rank_one(seed=0, shape=(12, 8)):
    rng = np.random.default_rng(seed)
    x = np.outer(rng.standard_normal(shape[0]), rng.standard_normal(shape[1]))
    return Dataset.from_arrays(shape, {(0, 1): x})


def test_logspace_grid_spans_e_minus_8_to_one():
    grid = parse_grid("logspace(e^-8,1,10)", (1, 1, 1, 0))
    assert len(grid) == 10
    assert grid.lambda0[0] == pytest.approx(math.exp(-8), rel=1e-12)
    assert grid.lambda0[-1] == pytest.approx(1.0, rel=1e-12)
    ratios = np.diff(np.log(grid.lambda0))
    np.testing.assert_allclose(ratios, 8 / 9, rtol=1e-12)
    assert grid.candidates[3] == (grid.lambda0[3],) * 3 + (0.0,)


def test_grid_forms():
    assert parse_grid("0.1, 0.01").lambda0 == (0.01, 0.1)
    explicit = parse_grid("0.1,0,0,0;1,2,3,4")
    assert explicit.candidates == [(0.1, 0, 0, 0), (1, 2, 3, 4)]
    assert parse_grid("e-2").lambda0 == (math.exp(-2),)
    with pytest.raises(ValueError):
        parse_grid("-1")
    with pytest.raises(ValueError):
        LambdaGrid(())
    with pytest.raises(ValueError):
        LambdaGrid((1.0,), (1, 2, 0, 0))


def test_flags():
    assert parse_flags("1010") == (1, 0, 1, 0)
    for bad in ("101", "1012", "abcd"):
        with pytest.raises(ValueError):
            parse_flags(bad)


def test_single_candidate_reproduces_plain_fit():
    ds = rank_one(1)
    res = cross_validate(ds, 1, LambdaGrid((0.0,)), seed=3)
    plain = fit(ds, 1)
    assert res.chosen_lambdas == (0.0, 0.0, 0.0, 0.0)
    assert np.array_equal(res.solution.params.to_vector(), plain.params.to_vector())


def test_rank_one_chooses_zero_over_huge():
    ds = rank_one(2)
    res = cross_validate(ds, 1, LambdaGrid((0.0, 1e3)), seed=4)
    assert res.chosen == 0
    _, tests = holdout_split(rescale_to_pi2(ds)[0], 0.1, 4)
    held = float(np.sum(ds[0].values[tests[0]] ** 2))
    assert held > 0
    # a huge penalty removes the model, leaving the held-out energy as error
    assert res.test_errors[1] == pytest.approx(held, rel=1e-3)
    assert res.test_errors[0] <= 1e-6 * held


def test_training_copy_hides_test_elements():
    ds = rank_one(3)
    train, tests = holdout_split(ds, 0.2, 5)
    assert tests[0].any()
    assert not train[0].mask[tests[0]].any()
    assert np.all(train[0].values[tests[0]] == 0.0)


def test_held_out_values_only_change_test_errors(monkeypatch):
    ds = rank_one(4)
    # pin the data scale so that altering held-out values cannot change it
    monkeypatch.setattr(selection, "rescale_to_pi2", lambda d: (d, 1.0))
    _, tests = holdout_split(ds, 0.2, 6)
    x = ds[0].values.copy()
    x[tests[0]] += 5.0
    other = Dataset.from_arrays(ds.dims, {(0, 1): x})
    grid = LambdaGrid((0.0, 0.1))
    a = cross_validate(ds, 1, grid, 0.2, seed=6, refit=False)
    b = cross_validate(other, 1, grid, 0.2, seed=6, refit=False)
    assert a.reports == b.reports
    assert a.test_errors != b.test_errors


def test_deterministic_and_parallel_consistent():
    ds = rank_one(5)
    grid = LambdaGrid((0.0, 0.01, 0.1))
    a = cross_validate(ds, 1, grid, seed=7, starts="init")
    b = cross_validate(ds, 1, grid, seed=7, starts="init", jobs=2)
    c = cross_validate(ds, 1, grid, seed=7)
    d = cross_validate(ds, 1, grid, seed=7)
    assert a.test_errors == b.test_errors and a.chosen == b.chosen
    assert c.test_errors == d.test_errors
    assert np.array_equal(c.solution.params.to_vector(), d.solution.params.to_vector())


def test_ties_go_to_the_smaller_penalty():
    ds = rank_one(6)
    res = cross_validate(ds, 1, LambdaGrid(explicit=((0.0,) * 4, (0.0,) * 4)), seed=1, starts="init")
    assert res.chosen == 0


def test_failed_candidates(monkeypatch):
    ds = rank_one(7)
    real = selection.fit

    def flaky(dataset, k, lam, **kw):
        if lam[0] > 0.5:
            raise OptimizationError("boom")
        return real(dataset, k, lam, **kw)

    monkeypatch.setattr(selection, "fit", flaky)
    res = cross_validate(ds, 1, LambdaGrid((0.0, 1.0)), seed=1)
    assert res.failed == [False, True] and math.isnan(res.test_errors[1]) and res.chosen == 0
    rows = res.rows()
    assert rows[1]["failed"] and rows[0]["chosen"]

    monkeypatch.setattr(selection, "fit", lambda *a, **kw: (_ for _ in ()).throw(OptimizationError("boom")))
    with pytest.raises(CvFailure):
        cross_validate(ds, 1, LambdaGrid((0.0, 1.0)), seed=1, refit=False)


def test_invalid_starts():
    with pytest.raises(ValueError):
        cross_validate(rank_one(), 1, LambdaGrid((0.0,)), starts="random")
