import numpy as np
import pytest
from sklearn.metrics import adjusted_rand_score

from mmpca import Dataset, ModelParams, fit
from mmpca.analysis import (
    Solution,
    bicluster,
    component_order,
    directed_r2,
    directed_r2_matrix,
    effective_rank,
    impute,
    joint_components,
    matrix_rank,
    r2_matrix,
)
from mmpca.data import ViewGraph
from mmpca.kframe import invert_kframe
from mmpca.objective import reconstruct
from mmpca.simulation import gen_sim2, gen_sim3

from conftest import random_params


def make_solution(params, links, data=None):
    """Solution for hand-built parameters; norms default to the model's own fit."""
    views = ViewGraph(params.dims, links)
    frames = params.frames()
    if data is None:
        data = [reconstruct(frames, params.d, i, j) for i, j in links]
    return Solution(views, params, data_sq_norms=[float(np.sum(x ** 2)) for x in data], zero_threshold=0.0)


def test_exact_fit_has_unit_r2():
    rng = np.random.default_rng(1)
    params = random_params(rng, (5, 4, 6), 2)
    sol = make_solution(params, [(0, 1), (2, 1)])
    for pair in sol.links:
        per, total = r2_matrix(sol, pair)
        assert total == pytest.approx(1.0, abs=1e-12)
        assert per.sum() == pytest.approx(total, abs=1e-15)


def test_zero_solution_has_zero_r2():
    rng = np.random.default_rng(2)
    params = random_params(rng, (5, 4), 2)
    x = rng.standard_normal((5, 4))
    params.d[:] = 0.0
    sol = make_solution(params, [(0, 1)], [x])
    assert r2_matrix(sol, (0, 1))[1] == 0.0
    assert effective_rank(sol) == 0
    assert np.array_equal(impute(sol, (0, 1)), np.zeros((5, 4)))


def test_r2_matches_dense_oracle():
    rng = np.random.default_rng(3)
    for _ in range(10):
        params = random_params(rng, (6, 5), 2)
        x = rng.standard_normal((6, 5)) * 3
        sol = make_solution(params, [(0, 1)], [x])
        xhat = reconstruct(params.frames(), params.d, 0, 1)
        assert r2_matrix(sol, (0, 1))[1] == pytest.approx(np.sum(xhat ** 2) / np.sum(x ** 2), abs=1e-10)


def test_zero_norm_matrix_is_rejected():
    params = random_params(np.random.default_rng(4), (3, 3), 1)
    sol = make_solution(params, [(0, 1)], [np.zeros((3, 3))])
    with pytest.raises(ValueError):
        r2_matrix(sol, (0, 1))


def shared_and_individual():
    # component 0 is active in all three matrices, component 1 only in (0, 3)
    rng = np.random.default_rng(5)
    params = random_params(rng, (4, 4, 4, 5), 2)
    params.d[:] = [[1.0, 1.0, 1.0, 1.0], [2.0, 0.0, 0.0, 1.0]]
    return make_solution(params, [(0, 3), (1, 3), (2, 3)])


def test_directed_r2_counts_shared_components_only():
    sol = shared_and_individual()
    per, total = r2_matrix(sol, (0, 3))
    np.testing.assert_allclose(per, [1 / 5, 4 / 5])
    assert directed_r2(sol, (0, 3), (1, 3)) == pytest.approx(1 / 5)
    assert directed_r2(sol, (1, 3), (0, 3)) == pytest.approx(1.0)
    M = directed_r2_matrix(sol)
    np.testing.assert_allclose(np.diag(M), [r2_matrix(sol, p)[1] for p in sol.links])
    assert matrix_rank(sol, (0, 3)) == 2 and matrix_rank(sol, (2, 3)) == 1
    assert list(joint_components(sol)) == [0]
    assert list(component_order(sol)) == [1, 0]


def test_directed_r2_from_inactive_source_is_zero():
    sol = shared_and_individual()
    sol.augmented_d[:, 1] = 0.0
    assert directed_r2(sol, (0, 3), (1, 3)) == 0.0


def test_effective_rank_counts_nonzero_rows():
    assert effective_rank(np.zeros((3, 4))) == 0
    assert effective_rank(np.vstack([np.eye(3), np.zeros((2, 3))])) == 3


def test_bicluster_by_sign():
    col = np.array([[1.0], [1.0], [0.0], [-1.0], [-1.0]]) / 2
    params = ModelParams([invert_kframe(col), invert_kframe(np.array([[0.6], [0.8]]))], np.array([[1.0, 1.0]]))
    sol = make_solution(params, [(0, 1)])
    sol = Solution(sol.views, params, data_sq_norms=sol.data_sq_norms, zero_threshold=1e-6)
    bc = bicluster(sol, depth=1)["view0"]
    assert list(bc.clusters[0]) == [0, 0, 1, 2, 2]
    assert sorted(bc.order) == list(range(5))
    assert bc.tree() == {1: [0, 1], 0: [2], -1: [3, 4]}
    assert list(bicluster(sol, depth=1)["view1"].clusters[0]) == [0, 0]
    with pytest.raises(ValueError):
        bicluster(sol, depth=2)


def test_bicluster_recovers_planted_blocks():
    aris = []
    for seed in range(6):
        sim = gen_sim3(4.0, seed=seed)
        sol = fit(sim.dataset, 2, (0.07, 0.07, 0.07, 0.0))
        bc = bicluster(sol, depth=2)
        for name, T in zip(("rows", "columns"), sim.truth["loadings"]):
            truth = [tuple(r) for r in (T != 0)]
            ids = {t: n for n, t in enumerate(sorted(set(truth)))}
            labels = bc[name].clusters[1]
            assert len(set(labels)) <= 9
            aris.append(adjusted_rand_score([ids[t] for t in truth], labels))
    assert np.median(aris) >= 0.9


def test_impute_matches_loss_reconstruction():
    rng = np.random.default_rng(6)
    params = random_params(rng, (5, 4), 2)
    x = reconstruct(params.frames(), params.d, 0, 1)
    x[1, 1] = np.nan
    ds = Dataset.from_arrays((5, 4), {(0, 1): x})
    sol = make_solution(params, [(0, 1)])
    xhat = impute(sol, (0, 1))
    assert np.array_equal(xhat, reconstruct(params.frames(), params.d, 0, 1))
    obs = ds[0].mask.astype(bool)
    np.testing.assert_allclose(xhat[obs], x[obs], atol=1e-12)
    assert impute(sol, (1, 0)).shape == (4, 5)
    with pytest.raises(KeyError):
        impute(sol, (0, 7))


def test_impute_withheld_matrix():
    corrs = []
    for seed in range(5):
        rng = np.random.default_rng(seed)
        U = [rng.standard_normal((p, 2)) for p in (20, 15, 25)]
        signal = {(i, j): U[i] @ U[j].T for i, j in [(0, 1), (1, 2), (0, 2)]}
        blocks = {key: s + 0.3 * np.std(s) * rng.standard_normal(s.shape)
                  for key, s in signal.items() if key != (0, 2)}
        sol = fit(Dataset.from_arrays((20, 15, 25), blocks), 2)
        corrs.append(np.corrcoef(impute(sol, (0, 2)).ravel(), signal[(0, 2)].ravel())[0, 1])
    assert min(corrs) >= 0.8


def test_partially_shared_simulation_has_rank_two_per_matrix():
    ranks = []
    for seed in range(5):
        sim = gen_sim2(100, 25, 0.5, seed=seed)
        sol = fit(sim.dataset, 4, (0.05, 0.05, 0.05, 0.0))
        ranks += [matrix_rank(sol, (i, 3)) for i in range(3)]
    assert np.mean(np.array(ranks) == 2) > 0.5


def test_solution_round_trip():
    sol = shared_and_individual()
    back = Solution.from_dict(sol.to_dict())
    assert np.array_equal(back.augmented_d, sol.augmented_d)
    assert back.to_dict() == sol.to_dict()
