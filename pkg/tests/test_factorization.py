import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from onmf import (AggregateStats, ConstraintPiece, ConstraintSpec, Dictionary,
                  OnlineNMF, WeightSchedule, ZeroDictionaryError,
                  coding_objective, dictionary_update, ellipsoid_gap,
                  empirical_loss, empirical_weights, growth_check,
                  init_dictionary, kkt_residual, load_aggregates,
                  load_dictionary, save_aggregates, save_dictionary,
                  sparse_code, surrogate_loss, update_aggregates)


# ---------------------------------------------------------------------------
# sparse_code
# ---------------------------------------------------------------------------


def test_identity_dictionary_recovers_data():
    X = np.array([[1.0, 0.0], [0.0, 2.0]])
    H = sparse_code(X, np.eye(2), lam=0.0, tol=1e-12, max_iter=5000)
    assert np.allclose(H, X, atol=1e-9)
    assert coding_objective(X, np.eye(2), H, 0.0) < 1e-16


def test_large_lambda_kills_all_coordinates():
    rng = np.random.default_rng(0)
    X = rng.random((4, 3))
    W = rng.random((4, 2))
    lam = 2.0 * float(np.max(W.T @ X)) + 1e-9
    H = sparse_code(X, W, lam=lam, tol=1e-12, max_iter=1000)
    assert np.all(H == 0.0)
    # KKT at H = 0: the smooth gradient is dominated by the penalty
    assert np.all(-2.0 * (W.T @ X) + lam >= 0.0)


def test_objective_matches_long_run_oracle():
    # frozen value of an independent fixed-step (1e-4) projected-gradient
    # descent run to 3e6 iterations on this exact seeded instance
    oracle = 1.4408377810139197
    rng = np.random.default_rng(1)
    X = rng.random((4, 3))
    W = rng.random((4, 2))
    ours = coding_objective(X, W, sparse_code(X, W, lam=0.1, tol=1e-12,
                                              max_iter=20000), 0.1)
    assert abs(ours - oracle) < 1e-4


def test_objective_nonincreasing_across_iterations():
    rng = np.random.default_rng(2)
    X = rng.random((5, 4))
    W = rng.random((5, 3))
    H = np.zeros((3, 4))
    prev = coding_objective(X, W, H, 0.3, kappa2=0.2)
    for _ in range(50):
        H = sparse_code(X, W, lam=0.3, kappa2=0.2, tol=0.0, max_iter=1, H0=H)
        cur = coding_objective(X, W, H, 0.3, kappa2=0.2)
        assert cur <= prev + 1e-12
        prev = cur


def test_code_norm_respects_penalty_bound():
    # lam*||H||_1 never exceeds the objective at H = 0, so ||H||_F <= R^2/lam
    rng = np.random.default_rng(21)
    for _ in range(20):
        X = rng.random((5, 3))
        W = rng.random((5, 4))
        lam = float(rng.uniform(0.2, 2.0))
        H = sparse_code(X, W, lam=lam, tol=1e-9, max_iter=5000)
        assert np.linalg.norm(H) <= np.sum(X * X) / lam + 1e-9


def test_kkt_residual_below_tolerance():
    rng = np.random.default_rng(3)
    for _ in range(20):
        X = rng.random((4, 2))
        W = rng.random((4, 3))
        lam = float(rng.choice([0.0, 0.1, 1.0]))
        H = sparse_code(X, W, lam=lam, tol=1e-9, max_iter=20000)
        assert kkt_residual(X, W, H, lam) <= 1e-9


def test_zero_dictionary_and_nonfinite_errors():
    X = np.ones((2, 2))
    with pytest.raises(ZeroDictionaryError, match="zero dictionary"):
        sparse_code(X, np.zeros((2, 2)), lam=0.0)
    with pytest.raises(ValueError, match="non-finite"):
        sparse_code(np.array([[np.nan, 0.0]]).T @ np.ones((1, 2)), np.eye(2))
    with pytest.raises(ValueError):
        sparse_code(X, np.ones((3, 2)))


# ---------------------------------------------------------------------------
# aggregates and surrogate
# ---------------------------------------------------------------------------


def test_first_step_overwrites_aggregates():
    rng = np.random.default_rng(4)
    stats = AggregateStats.zeros(2, 3)
    H = rng.random((2, 4))
    X = rng.random((3, 4))
    out = update_aggregates(stats, H, X, WeightSchedule(1.0), lam=0.5)
    assert np.allclose(out.A, H @ H.T)
    assert np.allclose(out.B, H @ X.T)
    assert out.t == 1


def test_zero_code_is_pure_decay():
    rng = np.random.default_rng(5)
    A = rng.random((2, 2))
    A = A @ A.T
    B = rng.random((2, 3))
    stats = AggregateStats(A=A, B=B, r_scalar=1.0, t=3)
    out = update_aggregates(stats, np.zeros((2, 4)), np.zeros((3, 4)),
                            WeightSchedule(0.8), lam=0.5)
    w = 4.0 ** -0.8
    assert np.allclose(out.A, (1 - w) * A)
    assert np.allclose(out.B, (1 - w) * B)


def test_balanced_weights_constant_stream_is_exact_average():
    rng = np.random.default_rng(6)
    H = rng.random((2, 3))
    X = rng.random((4, 3))
    stats = AggregateStats.zeros(2, 4)
    for _ in range(17):
        stats = update_aggregates(stats, H, X, WeightSchedule(1.0))
    assert np.allclose(stats.A, H @ H.T, atol=1e-12)
    assert np.allclose(stats.B, H @ X.T, atol=1e-12)


def test_surrogate_special_cases():
    rng = np.random.default_rng(7)
    stats = AggregateStats(A=np.eye(2), B=np.zeros((2, 3)), r_scalar=0.7, t=1)
    W = rng.random((3, 2))
    assert surrogate_loss(np.zeros((3, 2)), stats) == pytest.approx(0.7)
    stats0 = AggregateStats(A=np.eye(2), B=np.zeros((2, 3)), r_scalar=0.0, t=1)
    assert surrogate_loss(W, stats0) == pytest.approx(np.sum(W * W))


def test_first_step_surrogate_equals_plugin_objective():
    rng = np.random.default_rng(8)
    X = rng.random((3, 2))
    W = rng.random((3, 2))
    H = sparse_code(X, W, lam=0.4, tol=1e-10, max_iter=5000)
    stats = update_aggregates(AggregateStats.zeros(2, 3), H, X,
                              WeightSchedule(1.0), lam=0.4)
    assert surrogate_loss(W, stats) == pytest.approx(
        coding_objective(X, W, H, 0.4), abs=1e-10)


@settings(max_examples=60, deadline=None)
@given(t=st.integers(min_value=1, max_value=60),
       beta=st.floats(min_value=0.7500001, max_value=1.0, exclude_min=True))
def test_empirical_weights_sum_to_one(t, beta):
    w = empirical_weights(t, WeightSchedule(beta))
    assert w.sum() == pytest.approx(1.0, abs=1e-12)
    assert np.all(w > 0)


def test_empirical_loss_single_and_constant_history():
    rng = np.random.default_rng(9)
    X = rng.random((3, 2))
    W = rng.random((3, 2))
    sched = WeightSchedule(1.0)
    H = sparse_code(X, W, lam=0.2, tol=1e-11, max_iter=20000)
    single = empirical_loss(W, [X], sched, lam=0.2)
    assert single == pytest.approx(coding_objective(X, W, H, 0.2), abs=1e-8)
    repeated = empirical_loss(W, [X] * 7, sched, lam=0.2)
    assert repeated == pytest.approx(single, abs=1e-8)


# ---------------------------------------------------------------------------
# dictionary update
# ---------------------------------------------------------------------------


def test_scalar_boundary_clamp():
    spec = ConstraintSpec.nonnegative(2.0)
    prev = Dictionary(np.array([[0.0]]), spec)
    stats = AggregateStats(A=np.array([[1.0]]), B=np.array([[3.0]]),
                           r_scalar=0.0, t=1)
    new = dictionary_update(prev, stats, tol=1e-12, max_iter=300)
    assert new.W[0, 0] == pytest.approx(2.0, abs=1e-9)
    # hand-computed growth margin: g(0) - g(2) - (0-2)*1*(0-2) = 8 - 4
    assert growth_check(prev, new, stats) == pytest.approx(4.0, abs=1e-8)


def test_interior_minimum_is_reached():
    rng = np.random.default_rng(10)
    Wstar = rng.random((4, 3)) * 0.3 + 0.1
    spec = ConstraintSpec.nonnegative(10.0)
    prev = init_dictionary(4, 3, spec, rng)
    stats = AggregateStats(A=np.eye(3), B=Wstar.T.copy(), r_scalar=0.0, t=1)
    new = dictionary_update(prev, stats, tol=1e-14, max_iter=400,
                            enforce_ellipsoid=True)
    assert np.abs(new.W - Wstar).max() < 1e-10


def test_single_piece_matches_plain_block_descent():
    rng = np.random.default_rng(11)
    d, r = 4, 3
    M = rng.random((r, r + 1))
    A = M @ M.T
    B = rng.random((r, d))
    spec = ConstraintSpec.nonnegative(5.0)
    W0 = spec.pieces[0].project(rng.random((d, r)))
    prev = Dictionary(W0.copy(), spec)
    stats = AggregateStats(A=A, B=B, r_scalar=0.0, t=1)
    got = dictionary_update(prev, stats, tol=1e-10, max_iter=150)

    # independent plain BCD with the same damped column step
    W = W0.copy()
    for _ in range(150):
        before = W.copy()
        for j in range(r):
            cand = W[:, j] - (W @ A[:, j] - B[j, :]) / (A[j, j] + 1.0)
            cand = np.maximum(cand, 0.0)
            rest = np.sum(W ** 2) - np.sum(W[:, j] ** 2)
            allowed = np.sqrt(max(25.0 - rest, 0.0))
            nrm = np.linalg.norm(cand)
            if nrm > allowed:
                cand *= allowed / nrm
            W[:, j] = cand
        if np.linalg.norm(W - before) < 1e-10:
            break
    assert np.allclose(got.W, W, atol=1e-12)


def test_objective_nonincreasing_and_feasible():
    rng = np.random.default_rng(12)
    for _ in range(40):
        d, r = int(rng.integers(2, 5)), int(rng.integers(1, 4))
        M = rng.random((r, r + 1))
        A = M @ M.T + 0.01 * np.eye(r)
        B = rng.standard_normal((r, d))
        spec = ConstraintSpec.nonnegative(2.0)
        W0 = spec.pieces[0].project(rng.random((d, r)))
        prev = Dictionary(W0, spec)
        stats = AggregateStats(A=A, B=B, r_scalar=0.0, t=2)
        new = dictionary_update(prev, stats, tol=1e-10, max_iter=100,
                                enforce_ellipsoid=True)

        def g(W):
            return float(np.sum((W @ A) * W) - 2.0 * np.sum(W * B.T))

        assert g(new.W) <= g(W0) + 1e-10
        assert ellipsoid_gap(new, prev, stats) <= 1e-8


def test_multi_piece_switching_and_tie_break():
    # the second piece holds the global minimum; the update should find it
    spec = ConstraintSpec(pieces=(ConstraintPiece(radius=0.5, lower=0.0),
                                  ConstraintPiece(radius=6.0, lower=1.0)))
    prev = Dictionary(np.full((2, 1), 0.3), spec, active_piece=0)
    stats = AggregateStats(A=np.array([[1.0]]), B=np.array([[2.0, 2.0]]),
                           r_scalar=0.0, t=1)
    new = dictionary_update(prev, stats, tol=1e-12, max_iter=200)
    assert new.active_piece == 1
    assert np.allclose(new.W, 2.0, atol=1e-8)


def test_growth_margins_on_random_instances():
    rng = np.random.default_rng(13)
    for _ in range(100):
        d, r = int(rng.integers(1, 4)), int(rng.integers(1, 4))
        M = rng.random((r, r + 2))
        A = M @ M.T + 0.05 * np.eye(r)
        B = rng.standard_normal((r, d))
        spec = ConstraintSpec.nonnegative(1.5)
        prev = Dictionary(spec.pieces[0].project(rng.random((d, r))), spec)
        stats = AggregateStats(A=A, B=B, r_scalar=0.0, t=1)
        new = dictionary_update(prev, stats, tol=1e-10, max_iter=80,
                                enforce_ellipsoid=True)
        assert growth_check(prev, new, stats) >= -1e-8
    # degenerate case: identical dictionaries
    assert growth_check(prev, prev, stats) == 0.0


def test_unused_atom_column_is_left_alone():
    # zero diagonal aggregate row: the atom was never used, so it stays put
    A = np.array([[1.0, 0.0], [0.0, 0.0]])
    B = np.array([[0.5, 0.5], [0.0, 0.0]])
    spec = ConstraintSpec.nonnegative(5.0)
    W0 = np.array([[0.2, 0.7], [0.2, 0.7]])
    prev = Dictionary(W0.copy(), spec)
    stats = AggregateStats(A=A, B=B, r_scalar=0.0, t=1)
    new = dictionary_update(prev, stats, tol=1e-12, max_iter=100)
    assert np.allclose(new.W[:, 1], W0[:, 1])


# ---------------------------------------------------------------------------
# engine
# ---------------------------------------------------------------------------


def test_exactly_representable_stream_drives_surrogate_to_zero():
    rng = np.random.default_rng(14)
    spec = ConstraintSpec.nonnegative(50.0)
    dictionary = init_dictionary(6, 3, spec, rng)
    X = dictionary.W @ rng.random((3, 4))  # exactly representable from the start
    eng = OnlineNMF(dictionary, lam=0.0,
                    code_tol=1e-11, code_max_iter=5000,
                    dict_tol=1e-10, dict_max_iter=200)
    last = np.inf
    for _ in range(50):
        last = eng.step(X).surrogate
    assert last < 1e-6


def test_surrogate_dominates_empirical_loss_and_is_nonnegative():
    rng = np.random.default_rng(15)
    spec = ConstraintSpec.nonnegative(10.0)
    eng = OnlineNMF(init_dictionary(3, 2, spec, rng), lam=0.5,
                    code_tol=1e-10, code_max_iter=3000, track_history=True)
    for _ in range(40):
        res = eng.step(rng.random((3, 2)))
        assert res.surrogate >= -1e-12
        ft = eng.empirical_loss_now()
        assert res.surrogate >= ft - 1e-8


def test_aggregate_bounds_hold_along_runs():
    rng = np.random.default_rng(16)
    lam, radius = 0.7, 2.0
    spec = ConstraintSpec.nonnegative(10.0)
    eng = OnlineNMF(init_dictionary(4, 3, spec, rng), lam=lam)
    for _ in range(60):
        X = rng.random((4, 3))
        nrm = np.linalg.norm(X)
        if nrm > radius:
            X *= radius / nrm
        eng.step(X)
        assert np.linalg.norm(eng.stats.A) <= radius ** 4 / lam ** 2 + 1e-9
        assert np.linalg.norm(eng.stats.B) <= radius ** 3 / lam + 1e-9


def test_step_rejects_bad_data():
    rng = np.random.default_rng(17)
    spec = ConstraintSpec.nonnegative(10.0)
    eng = OnlineNMF(init_dictionary(3, 2, spec, rng))
    with pytest.raises(ValueError, match="nonnegative"):
        eng.step(np.array([[-1.0, 0.0], [0.0, 0.0], [0.0, 0.0]]))
    with pytest.raises(ValueError, match="non-finite"):
        eng.step(np.full((3, 2), np.inf))


def test_iterate_stability_with_ridge():
    rng = np.random.default_rng(18)
    spec = ConstraintSpec.nonnegative(10.0)
    eng = OnlineNMF(init_dictionary(4, 2, spec, rng), lam=1.0, kappa1=0.1)
    ratios = []
    for t in range(1, 300):
        before = eng.W.copy()
        eng.step(rng.random((4, 3)))
        ratios.append(np.linalg.norm(eng.W - before) / eng.schedule.weight(t))
    assert np.isfinite(max(ratios))


def test_weight_schedule_validation():
    with pytest.raises(ValueError):
        WeightSchedule(0.5)
    with pytest.raises(ValueError):
        WeightSchedule(1.2)
    assert WeightSchedule(1.0).weight(4) == pytest.approx(0.25)


# ---------------------------------------------------------------------------
# serialization
# ---------------------------------------------------------------------------


def test_dictionary_roundtrip_exact(tmp_path):
    rng = np.random.default_rng(19)
    W = rng.standard_normal((5, 3)) * np.exp(rng.standard_normal((5, 3)) * 8)
    path = tmp_path / "w.txt"
    save_dictionary(path, W)
    back = load_dictionary(path)
    assert back.shape == (5, 3)
    assert np.array_equal(back, W)
    header = path.read_text().splitlines()[0]
    assert header == "5 3"


@settings(max_examples=30, deadline=None)
@given(st.lists(st.floats(min_value=-1e12, max_value=1e12,
                          allow_nan=False, allow_infinity=False),
                min_size=4, max_size=4))
def test_serialization_roundtrip_property(tmp_path_factory, vals):
    W = np.array(vals).reshape(2, 2)
    path = tmp_path_factory.mktemp("ser") / "w.txt"
    save_dictionary(path, W)
    assert np.array_equal(load_dictionary(path), W)


def test_aggregates_roundtrip_exact(tmp_path):
    rng = np.random.default_rng(20)
    stats = AggregateStats(A=rng.standard_normal((3, 3)),
                           B=rng.standard_normal((3, 4)),
                           r_scalar=float(rng.standard_normal()),
                           t=17, kappa1=0.1)
    path = tmp_path / "agg.txt"
    save_aggregates(path, stats, beta=0.9)
    back, beta = load_aggregates(path)
    assert np.array_equal(back.A, stats.A)
    assert np.array_equal(back.B, stats.B)
    assert back.r_scalar == stats.r_scalar
    assert back.t == 17 and back.kappa1 == 0.1 and beta == 0.9
