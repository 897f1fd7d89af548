import numpy as np
import pytest

from pasim.convex import (ConcaveQuadratic, QuadraticTargets, box_ordered_qp,
                          interior_positions, maxmin_power_budget,
                          maxmin_quadratics_ball, solve_epigraph, split_complex,
                          time_allocation)


def grid_maxmin(quads, p_max, resolution):
    """Brute-force oracle: dense grid over the power ball (dim <= 2)."""
    dim = quads[0].dim
    radius = np.sqrt(p_max)
    axes = [np.arange(-radius, radius + resolution, resolution)] * dim
    mesh = np.meshgrid(*axes, indexing="ij")
    pts = np.stack([m.reshape(-1) for m in mesh], axis=1)
    pts = pts[np.sum(pts ** 2, axis=1) <= p_max]
    vals = np.min([f.const + pts @ f.lin - np.einsum("ni,ij,nj->n", pts, f.quad, pts)
                   for f in quads], axis=0)
    idx = int(np.argmax(vals))
    return vals[idx], pts[idx]


def test_single_quadratic_interior_optimum():
    f = ConcaveQuadratic(lin=np.array([2.0]), quad=np.array([[1.0]]))
    rep = maxmin_quadratics_ball([f], 4.0)
    assert rep.converged
    assert rep.optimizer == pytest.approx([1.0], abs=1e-6)
    assert rep.gamma == pytest.approx(1.0, abs=1e-6)


def test_symmetric_pair_crossing():
    f1 = ConcaveQuadratic(lin=np.array([2.0]), quad=np.array([[1.0]]))
    f2 = ConcaveQuadratic(lin=np.array([-2.0]), quad=np.array([[1.0]]))
    rep = maxmin_quadratics_ball([f1, f2], 4.0)
    assert rep.optimizer == pytest.approx([0.0], abs=1e-6)
    assert rep.gamma == pytest.approx(0.0, abs=1e-6)


def test_random_2d_instances_match_grid():
    rng = np.random.default_rng(3)
    for _ in range(5):
        quads = []
        for _ in range(3):
            m = rng.normal(size=(2, 2))
            quads.append(ConcaveQuadratic(lin=rng.normal(size=2),
                                          quad=m.T @ m + 0.1 * np.eye(2),
                                          const=rng.normal()))
        p_max = 2.0
        rep = maxmin_quadratics_ball(quads, p_max)
        oracle, _ = grid_maxmin(quads, p_max, resolution=1e-3 * np.sqrt(p_max))
        assert rep.converged
        assert rep.gamma == pytest.approx(oracle, abs=1e-3)
        # internal consistency: reported gamma is min_i f_i at the optimizer
        assert rep.gamma == pytest.approx(
            min(f.value(rep.optimizer) for f in quads), abs=1e-9)
        # primal feasibility of the ball
        assert rep.optimizer @ rep.optimizer <= p_max * (1 + 1e-8)


def test_complex_realification_is_psd_and_consistent():
    rng = np.random.default_rng(4)
    m = rng.normal(size=(3, 3)) + 1j * rng.normal(size=(3, 3))
    q = m.conj().T @ m
    a = rng.normal(size=3) + 1j * rng.normal(size=3)
    f = ConcaveQuadratic.from_complex(a, q, 0.5)
    assert np.min(np.linalg.eigvalsh(f.quad)) >= -1e-10
    u = rng.normal(size=3) + 1j * rng.normal(size=3)
    z = np.concatenate([u.real, u.imag])
    expect = 0.5 + 2 * np.real(a.conj() @ u) - np.real(u.conj() @ q @ u)
    assert f.value(z) == pytest.approx(expect, rel=1e-12)
    assert split_complex(z) == pytest.approx(u)


def test_penalized_epigraph_least_squares_limit():
    # a huge penalty pins the optimizer at the penalty minimizer
    rng = np.random.default_rng(5)
    target = rng.normal(size=2)
    f = ConcaveQuadratic(lin=rng.normal(size=2), quad=0.01 * np.eye(2))
    weight = 1e8
    penalty = ConcaveQuadratic(lin=2 * weight * target, quad=weight * np.eye(2),
                               const=-weight * target @ target)
    rep = solve_epigraph([f], extra_objective=penalty)
    assert rep.optimizer == pytest.approx(target, abs=1e-4)


def test_power_budget_symmetric_split():
    mu = np.array([1.0 + 0j, 1.0 + 0j])
    eff = np.array([[1.0, 0.5], [0.5, 1.0]], dtype=complex)
    rep = maxmin_power_budget(mu, eff, np.array([0, 1]), 2.0, 1.0)
    assert rep.optimizer == pytest.approx([1.0, 1.0], abs=1e-5)


def test_power_budget_single_group_uses_all_power():
    mu = np.array([0.8 + 0j])
    eff = np.array([[1.0]], dtype=complex)
    rep = maxmin_power_budget(mu, eff, np.array([0]), 2.0, 1.0)
    assert rep.optimizer == pytest.approx([2.0], rel=1e-6)


def test_power_budget_matches_simplex_grid():
    # one group with a weak own channel; oracle: dense grid over the budget
    rng = np.random.default_rng(6)
    for _ in range(3):
        mu = rng.normal(size=2) + 1j * rng.normal(size=2)
        eff = rng.normal(size=(2, 2)) + 1j * rng.normal(size=(2, 2))
        group = np.array([0, 1])
        # make the desired coefficients nonnegative as the closed-form
        # multipliers always do
        for j in range(2):
            eff[j, group[j]] *= np.exp(-1j * np.angle(mu[j] * np.conj(mu[j])))
            eff[j, group[j]] = abs(eff[j, group[j]]) * mu[j] / abs(mu[j])
        p_max = 1.5
        rep = maxmin_power_budget(mu, eff, group, p_max, 1.0)

        def values(p):  # p: (..., 2) -> min-y over users, vectorized
            ys = []
            for j in range(2):
                kj = group[j]
                des = 2 * np.real(np.conj(mu[j]) * eff[j, kj]) * np.sqrt(p[..., kj])
                cross = np.abs(mu[j]) ** 2 * (np.abs(eff[j]) ** 2 * p).sum(axis=-1) \
                    - np.abs(mu[j]) ** 2 * np.abs(eff[j, kj]) ** 2 * p[..., kj]
                ys.append(des - cross - np.abs(mu[j]) ** 2)
            return np.minimum(*ys)

        grid = np.linspace(0, p_max, 401)
        p1g, p2g = np.meshgrid(grid, grid, indexing="ij")
        pts = np.stack([p1g.reshape(-1), p2g.reshape(-1)], axis=1)
        pts = pts[pts.sum(axis=1) <= p_max]
        best = values(pts).max()
        assert values(rep.optimizer[None, :])[0] >= best - 2e-3 * max(1.0, abs(best))


def test_box_ordered_qp_cases():
    # unconstrained optimum already feasible
    x = box_ordered_qp(QuadraticTargets([2.0, 5.0]), 2, 10.0, 1.0)
    assert x == pytest.approx([2.0, 5.0], abs=1e-6)
    # two positions sharing a target split symmetrically at minimum spacing
    x = box_ordered_qp(QuadraticTargets([4.0, 4.0]), 2, 10.0, 1.0)
    assert x == pytest.approx([3.5, 4.5], abs=1e-5)
    # target below the box clamps with spacing preserved
    x = box_ordered_qp(QuadraticTargets([-3.0, -3.0]), 2, 10.0, 1.0)
    assert x == pytest.approx([0.0, 1.0], abs=1e-5)
    # ordering/box always hold
    rng = np.random.default_rng(7)
    for _ in range(10):
        targets = rng.uniform(-2, 12, size=5)
        x = box_ordered_qp(QuadraticTargets(targets, rng.uniform(0.5, 2.0, 5)),
                           5, 10.0, 0.8)
        assert np.all(np.diff(x) >= 0.8 - 1e-9)
        assert x[0] >= -1e-9 and x[-1] <= 10.0 + 1e-9


def test_box_ordered_qp_matches_grid():
    # 2-D oracle on a shared-target instance with asymmetric weights
    obj = QuadraticTargets([4.0, 4.2], weights=[1.0, 3.0])
    x = box_ordered_qp(obj, 2, 10.0, 1.0)
    grid = np.linspace(0, 10, 2001)
    best, val = None, np.inf
    for x1 in grid:
        x2 = max(x1 + 1.0, 0.0)
        if x2 > 10: continue
        # optimal x2 given x1 is the clamp of its target
        x2 = min(max(4.2, x1 + 1.0), 10.0)
        v = obj.value(np.array([x1, x2]))
        if v < val:
            val, best = v, (x1, x2)
    assert obj.value(x) <= val + 1e-6


def test_box_ordered_infeasible():
    with pytest.raises(ValueError):
        box_ordered_qp(QuadraticTargets([1.0, 2.0, 3.0]), 3, 1.0, 0.6)


def test_interior_positions_strictly_feasible():
    x = interior_positions(8, 10.0, 1.2)
    assert x[0] > 0 and x[-1] < 10.0
    assert np.all(np.diff(x) > 1.2)


def test_time_allocation():
    shares, xi = time_allocation([2.0, 2.0])
    assert shares == pytest.approx([0.5, 0.5]) and xi == pytest.approx(1.0)
    shares, xi = time_allocation([1.0, 3.0])
    assert shares == pytest.approx([0.75, 0.25]) and xi == pytest.approx(0.75)
    shares, xi = time_allocation([5.0])
    assert shares == pytest.approx([1.0]) and xi == pytest.approx(5.0)
    # equalization property and grid cross-check
    rng = np.random.default_rng(8)
    rates = rng.uniform(0.5, 5.0, size=3)
    shares, xi = time_allocation(rates)
    assert shares.sum() == pytest.approx(1.0)
    assert shares * rates == pytest.approx(np.full(3, xi))
    lams = np.random.default_rng(9).dirichlet(np.ones(3), size=20_000)
    oracle = np.max(np.min(lams * rates, axis=1))
    assert xi >= oracle - 1e-6
    # degenerate group
    shares, xi = time_allocation([0.0, 2.0])
    assert xi == 0.0 and shares == pytest.approx([0.5, 0.5])
