import csv
import io
import math

import numpy as np
import pytest

from mmpca.selection import LambdaGrid
from mmpca.simulation import (
    RESULT_COLUMNS,
    MethodConfig,
    SimSpec,
    angular_distance,
    gen_sim1,
    gen_sim2,
    gen_sim3,
    generate_run,
    joint_direction_accuracy,
    loading_mcc,
    matthews,
    results_csv,
    run_study,
    sim2_joint_rows,
    structure_rmse,
)


def test_sim1_snr_and_shared_directions():
    sim = gen_sim1(2.0, seed=1)
    assert len(sim.dataset) == 4 and sim.dataset.dims == (10,) * 5
    for s, e in zip(sim.signal, sim.noise):
        assert np.linalg.norm(s) / np.linalg.norm(e) == pytest.approx(2.0, rel=1e-12)
    for a, b in ((0, 1), (2, 3)):
        ra = np.linalg.svd(sim.signal[a])[2][0]
        rb = np.linalg.svd(sim.signal[b])[2][0]
        assert abs(abs(ra @ rb) - 1) <= 1e-12
    np.testing.assert_array_equal(sim.truth["d_pattern"], [[1, 1, 0, 0, 1], [0, 0, 1, 1, 1]])
    again = gen_sim1(2.0, seed=1)
    assert all(np.array_equal(a.values, b.values) for a, b in zip(sim.dataset, again.dataset))


def test_sim2_rows_and_angles():
    sim = gen_sim2(100, 25, 0.5, seed=2)
    dirs = sim.truth["directions"]
    for i in range(3):
        for j in range(i + 1, 3):
            assert angular_distance(dirs[:, i], dirs[:, j]) == pytest.approx(math.pi / 3, abs=1e-10)
    assert sim2_joint_rows(25, 0.5) == 13 and sim.truth["n_joint"] == 13
    for s in sim.signal:
        assert s.shape == (25, 100)
        np.testing.assert_allclose(np.abs(s[-13:] @ dirs[:, 3]), np.linalg.norm(s[-13:], axis=1))
    assert sim2_joint_rows(25, 0.0) == 0 and sim2_joint_rows(25, 1.0) == 25
    for noise in sim.noise:
        assert np.std(noise) == pytest.approx(0.05, rel=0.1)
    with pytest.raises(ValueError):
        gen_sim2(100, 25, 1.5)


def test_sim3_sparse_loadings():
    sim = gen_sim3(1.0, seed=3)
    U, V = sim.truth["loadings"]
    assert U.shape == V.shape == (30, 2)
    assert np.all(np.sum(U != 0, axis=0) == 3) and np.all(np.sum(V != 0, axis=0) == 3)
    assert np.linalg.matrix_rank(sim.signal[0]) <= 2
    assert np.linalg.norm(sim.signal[0]) / np.linalg.norm(sim.noise[0]) == pytest.approx(1.0)
    assert np.array_equal(gen_sim3(1.0, seed=3).dataset[0].values, sim.dataset[0].values)


def test_structure_rmse_examples():
    truth = np.array([[1, 1, 0, 0, 1], [0, 0, 1, 1, 1]], dtype=float)
    assert structure_rmse(truth, truth) == 0.0
    assert structure_rmse(truth[::-1] * [[-2.0], [0.5]], truth) == 0.0
    assert structure_rmse(np.zeros((2, 5)), truth) == pytest.approx(math.sqrt(2 / 10), abs=1e-12)
    # zero rows in the estimate do not matter
    assert structure_rmse(np.vstack([truth, np.zeros((1, 5))]), truth) == 0.0


def test_structure_rmse_is_scale_invariant():
    truth = np.array([[1.0, 2.0, 0.0], [0.0, 1.0, 1.0]])
    est = np.array([[0.0, -3.0, -3.0], [2.0, 4.0, 0.0]])
    assert structure_rmse(est, truth) == pytest.approx(0.0, abs=1e-15)
    assert structure_rmse(est + [[0.1, 0, 0], [0, 0, 0]], truth) > 0


def test_binarized_structure_rmse_scores_the_zero_pattern():
    truth = np.array([[1, 1, 0, 0, 1], [0, 0, 1, 1, 1]], dtype=float)
    est = np.array([[0.3, 2.0, 0.0, 0.0, 1.1], [0.0, 0.0, -0.7, -0.2, 0.9]])
    assert structure_rmse(est, truth) > 0
    assert structure_rmse(est, truth, binarize=True) == 0.0
    leaky = est + [[0, 0, 0.01, 0, 0], [0, 0, 0, 0, 0]]
    assert structure_rmse(leaky, truth, binarize=True) > 0


def test_joint_direction_accuracy():
    rng = np.random.default_rng(4)
    dirs = gen_sim2(100, 25, 0.5, seed=4).truth["directions"]
    noise = rng.standard_normal(100)
    assert joint_direction_accuracy(dirs[:, 3], dirs, noise)
    assert not joint_direction_accuracy(dirs[:, 0], dirs, noise)
    assert joint_direction_accuracy(-dirs[:, 3], -dirs, -noise)
    # 10 degrees away from v4 in a direction orthogonal to everything else
    w = rng.standard_normal(100)
    basis = np.column_stack([dirs, noise])
    w -= basis @ np.linalg.lstsq(basis, w, rcond=None)[0]
    w /= np.linalg.norm(w)
    t = math.radians(10)
    est = math.cos(t) * dirs[:, 3] + math.sin(t) * w
    assert angular_distance(est, dirs[:, 3]) == pytest.approx(t)
    assert joint_direction_accuracy(est, dirs, noise)


def test_matthews_hand_example():
    # 6 true positives out of 60, half recovered plus three false alarms
    truth = np.zeros(60, dtype=bool)
    truth[:6] = True
    pred = np.zeros(60, dtype=bool)
    pred[3:9] = True
    mcc, degenerate = matthews(truth, pred)
    tp, fp, fn, tn = 3, 3, 3, 51
    expected = (tp * tn - fp * fn) / math.sqrt((tp + fp) * (tp + fn) * (tn + fp) * (tn + fn))
    assert mcc == pytest.approx(expected) and mcc == pytest.approx(4 / 9)
    assert not degenerate
    assert matthews(truth, truth)[0] == 1.0
    assert matthews(truth, ~truth)[0] == -1.0
    assert matthews(truth, np.ones(60, dtype=bool)) == (0.0, True)


def test_loading_mcc_matches_components():
    U = np.zeros((10, 2))
    U[:3, 0] = 1
    U[5:8, 1] = 1
    V = U[::-1].copy()
    assert loading_mcc([U[:, ::-1] * -2, V[:, ::-1]], [U, V]) == 1.0
    # an estimate with an extra spurious component is judged on the matched ones
    extra = np.hstack([U, np.zeros((10, 1))])
    assert loading_mcc([extra, np.hstack([V, np.zeros((10, 1))])], [U, V]) == 1.0
    assert loading_mcc([np.zeros((10, 2)), np.zeros((10, 2))], [U, V]) == 0.0


def test_simspec_validation():
    with pytest.raises(ValueError):
        SimSpec(4, (1.0,))
    with pytest.raises(ValueError):
        SimSpec(1, (0.0,))
    with pytest.raises(ValueError):
        SimSpec(2, (1.2,))
    with pytest.raises(ValueError):
        SimSpec(1, (1.0,), runs=0)


def test_single_run_gives_single_row_and_is_reproducible():
    spec = SimSpec(3, (4.0,), runs=1, seed=9)
    method = MethodConfig(grid=LambdaGrid((0.01, 0.07), (1, 1, 1, 0)))
    rows = run_study(spec, method)
    assert len(rows) == 1 and rows[0]["status"] == "ok"
    text = results_csv(rows)
    parsed = list(csv.reader(io.StringIO(text)))
    assert parsed[0] == RESULT_COLUMNS
    assert len(parsed) == 1 + 1 + 3
    assert results_csv(run_study(spec, method)) == text
    sim = generate_run(spec, 0, 0)
    assert sim.dataset.dims == (30, 30)
