"""Self-contained solvers for the small dense convex subproblems.

Everything here is a primal log-barrier interior-point method specialised to
two problem shapes that recur throughout the toolkit:

* epigraph max-min: maximize ``gamma + g(z)`` subject to ``f_i(z) >= gamma``
  for concave quadratics ``f_i`` (plus an optional Euclidean power ball), and
* separable minimization over ordered, box-constrained positions.

Problems are tiny (a few hundred variables at most), so dense Newton steps
with backtracking line search beat any external dependency and give directly
checkable KKT residuals.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np


class NonConvergedError(RuntimeError):
    """Raised when a kernel solve does not reach its target duality gap."""


@dataclass
class ConcaveQuadratic:
    """f(z) = const + lin.z - z.quad.z over real z, with quad symmetric PSD."""

    lin: np.ndarray
    quad: np.ndarray
    const: float = 0.0

    @property
    def dim(self) -> int:
        return self.lin.shape[0]

    def value(self, z: np.ndarray) -> float:
        return float(self.const + self.lin @ z - z @ self.quad @ z)

    def grad(self, z: np.ndarray) -> np.ndarray:
        return self.lin - 2.0 * self.quad @ z

    def scaled(self, factor: float) -> "ConcaveQuadratic":
        return ConcaveQuadratic(self.lin * factor, self.quad * factor,
                                self.const * factor)

    @classmethod
    def from_complex(cls, a: np.ndarray, hermitian: np.ndarray, const: float):
        """Realify f(u) = const + 2*Re{a^H u} - u^H Q u with Q Hermitian PSD.

        The real variable is ``z = [Re(u); Im(u)]``; the realified quadratic
        form stays PSD under this map.
        """
        a = np.asarray(a, dtype=complex).reshape(-1)
        q = np.asarray(hermitian, dtype=complex)
        lin = 2.0 * np.concatenate([a.real, a.imag])
        quad = np.block([[q.real, -q.imag], [q.imag, q.real]])
        quad = 0.5 * (quad + quad.T)  # kill rounding asymmetry
        return cls(lin=lin, quad=quad, const=float(const))


def split_complex(z: np.ndarray) -> np.ndarray:
    """Inverse of the realification used by :meth:`ConcaveQuadratic.from_complex`."""
    n = z.shape[0] // 2
    return z[:n] + 1j * z[n:]


@dataclass
class SolveReport:
    """Outcome of one kernel solve."""

    optimizer: np.ndarray
    gamma: float                 # min_i f_i at the optimizer (raw units)
    objective: float             # gamma + extra objective, when present
    gap: float                   # barrier duality gap in raw objective units
    kkt_residual: float
    iterations: int
    converged: bool


def _solve_psd(h: np.ndarray, rhs: np.ndarray) -> np.ndarray:
    """Newton-system solve with a graded jitter fallback for near-singular H."""
    jitter = 0.0
    scale = np.trace(h) / h.shape[0]
    for _ in range(8):
        try:
            c = np.linalg.cholesky(h + jitter * np.eye(h.shape[0]))
            y = np.linalg.solve(c, rhs)
            return np.linalg.solve(c.T, y)
        except np.linalg.LinAlgError:
            jitter = max(jitter * 100.0, 1e-14 * max(scale, 1.0))
    return np.linalg.lstsq(h, rhs, rcond=None)[0]


def solve_epigraph(quadratics, ball_radius_sq: float = None,
                   extra_objective: ConcaveQuadratic = None,
                   z0: np.ndarray = None, gap_tol: float = 1e-10,
                   max_stages: int = 40, max_newton: int = 12) -> SolveReport:
    """Maximize ``gamma + g(z)`` s.t. ``f_i(z) >= gamma`` and optionally
    ``||z||^2 <= ball_radius_sq``.

    ``g`` (``extra_objective``) must be concave or absent; with no ball the
    problem must be made coercive by ``g`` (all internal callers satisfy one
    of the two).  Values are normalized internally so the duality-gap target
    is relative to the problem's own scale.
    """
    if not quadratics:
        raise ValueError("need at least one constraint quadratic")
    n = quadratics[0].dim
    if ball_radius_sq is None and extra_objective is None:
        raise ValueError("unbounded problem: need a power ball or a concave objective")
    if ball_radius_sq is not None and not ball_radius_sq > 0:
        raise ValueError("power budget must be positive")

    z = np.zeros(n) if z0 is None else np.asarray(z0, dtype=float).copy()
    if ball_radius_sq is not None:
        zz = z @ z
        if zz >= 0.98 * ball_radius_sq:
            z *= np.sqrt(0.9 * ball_radius_sq / zz)

    # normalize objective units by the starting constraint values
    scale = max(1.0, max(abs(f.value(z)) for f in quadratics))
    if extra_objective is not None:
        scale = max(scale, abs(extra_objective.value(z)))
    fs = [f.scaled(1.0 / scale) for f in quadratics]
    g = extra_objective.scaled(1.0 / scale) if extra_objective is not None else None

    m = len(fs) + (1 if ball_radius_sq is not None else 0)
    gamma = min(f.value(z) for f in fs) - 1.0
    v = np.concatenate([[gamma], z])

    def barrier(vv, t):
        gm, zz = vv[0], vv[1:]
        slacks = np.array([f.value(zz) - gm for f in fs])
        if ball_radius_sq is not None:
            sb = ball_radius_sq - zz @ zz
            if sb <= 0 or np.any(slacks <= 0):
                return np.inf
            extra = -np.log(sb)
        else:
            if np.any(slacks <= 0):
                return np.inf
            extra = 0.0
        obj = gm + (g.value(zz) if g is not None else 0.0)
        return -t * obj - np.log(slacks).sum() + extra

    iterations = 0
    t = 1.0
    converged = False
    while True:
        for _ in range(max_newton):
            gm, zz = v[0], v[1:]
            slacks = np.array([f.value(zz) - gm for f in fs])
            grads = np.array([f.grad(zz) for f in fs])  # (m_f, n)

            grad = np.zeros(n + 1)
            grad[0] = -t + np.sum(1.0 / slacks)
            grad[1:] = -(grads / slacks[:, None]).sum(axis=0)
            if g is not None:
                grad[1:] -= t * g.grad(zz)

            h = np.zeros((n + 1, n + 1))
            inv2 = 1.0 / slacks ** 2
            h[0, 0] = inv2.sum()
            h[0, 1:] = h[1:, 0] = -(grads * inv2[:, None]).sum(axis=0)
            h[1:, 1:] = (grads[:, :, None] * grads[:, None, :]
                         * inv2[:, None, None]).sum(axis=0)
            for f, s in zip(fs, slacks):
                h[1:, 1:] += (2.0 / s) * f.quad
            if g is not None:
                h[1:, 1:] += 2.0 * t * g.quad
            if ball_radius_sq is not None:
                sb = ball_radius_sq - zz @ zz
                grad[1:] += 2.0 * zz / sb
                h[1:, 1:] += np.outer(2.0 * zz, 2.0 * zz) / sb ** 2 \
                    + (2.0 / sb) * np.eye(n)

            step = _solve_psd(h, -grad)
            decrement = -grad @ step
            iterations += 1
            # centering accuracy is limited by roundoff that grows with t;
            # a handful of damped steps per stage tracks the central path
            if decrement <= 1e-11 * max(1.0, t * 1e-6):
                break

            base = barrier(v, t)
            alpha = 1.0
            moved = False
            for _ in range(40):
                cand = v + alpha * step
                val = barrier(cand, t)
                if np.isfinite(val) and val <= base + 0.25 * alpha * (grad @ step):
                    v = cand
                    moved = True
                    break
                alpha *= 0.5
            if not moved:
                break  # no productive step at this centering accuracy

        if m / t <= gap_tol:
            converged = True
            break
        if t > m / (gap_tol * 1e-4) or iterations >= max_stages * max_newton:
            break
        t *= 25.0

    gm, zz = v[0], v[1:]
    slacks = np.array([f.value(zz) - gm for f in fs])
    duals = 1.0 / (t * slacks)
    stat = np.zeros(n)
    for f, nu in zip(fs, duals):
        stat += nu * f.grad(zz)
    if g is not None:
        stat += g.grad(zz)
    if ball_radius_sq is not None:
        sb = ball_radius_sq - zz @ zz
        stat -= (1.0 / (t * sb)) * 2.0 * zz
    kkt = max(abs(1.0 - duals.sum()), float(np.linalg.norm(stat, np.inf)))

    gamma_raw = scale * min(f.value(zz) for f in fs)
    obj_raw = gamma_raw + (scale * g.value(zz) if g is not None else 0.0)
    return SolveReport(optimizer=zz, gamma=gamma_raw, objective=obj_raw,
                       gap=scale * m / t, kkt_residual=kkt,
                       iterations=iterations, converged=converged)


def require_converged(report: SolveReport) -> SolveReport:
    if not report.converged:
        raise NonConvergedError(
            f"kernel solve stalled: gap={report.gap:.3e}, kkt={report.kkt_residual:.3e}"
        )
    return report


def maxmin_quadratics_ball(quadratics, p_max: float,
                           z0: np.ndarray = None) -> SolveReport:
    """Maximize the minimum of concave quadratics over ``||z||^2 <= p_max``."""
    return solve_epigraph(quadratics, ball_radius_sq=p_max, z0=z0)


def maxmin_power_budget(mu: np.ndarray, eff: np.ndarray, group_index: np.ndarray,
                        p_max: float, noise_power: float,
                        p0: np.ndarray = None) -> SolveReport:
    """Max-min power allocation over a total budget.

    Substituting ``q_k = sqrt(p_k)`` turns every per-user objective into a
    concave quadratic in q and the simplex-like budget into the Euclidean
    ball ``||q||^2 <= p_max``, so the epigraph kernel applies unchanged.
    ``eff[j]`` is user j's per-waveguide effective channel row and
    ``group_index[j]`` its serving waveguide.
    """
    mu = np.asarray(mu, dtype=complex).reshape(-1)
    eff = np.asarray(eff, dtype=complex)
    k = eff.shape[1]
    quads = []
    for j in range(mu.shape[0]):
        kj = int(group_index[j])
        lin = np.zeros(k)
        # desired term 2*Re{mu* h_k} sqrt(p_k); nonnegative at the optimal mu
        lin[kj] = 2.0 * np.real(np.conj(mu[j]) * eff[j, kj])
        cross = np.abs(mu[j]) ** 2 * np.abs(eff[j]) ** 2
        cross[kj] = 0.0
        quads.append(ConcaveQuadratic(lin=lin, quad=np.diag(cross),
                                      const=-np.abs(mu[j]) ** 2 * noise_power))
    q0 = None if p0 is None else np.sqrt(np.maximum(np.asarray(p0, dtype=float), 0.0))
    report = solve_epigraph(quads, ball_radius_sq=p_max, z0=q0)
    # p = q^2; a sign flip never lowers any objective, so |q| is optimal too
    report.optimizer = np.abs(report.optimizer) ** 2
    return report


def time_allocation(group_rates):
    """Closed-form optimal time shares for max-min of ``share_k * R_k``.

    Equalizing ``share_k * R_k`` across groups is optimal, which gives
    ``share_k = (1/R_k) / sum_j (1/R_j)`` and min rate ``1 / sum_j (1/R_j)``.
    A group with nonpositive rate forces the objective to zero; uniform
    shares are returned in that degenerate case.
    """
    r = np.asarray(group_rates, dtype=float)
    if r.size == 0:
        raise ValueError("need at least one group rate")
    if np.any(r <= 0):
        return np.full(r.shape, 1.0 / r.size), 0.0
    inv = 1.0 / r
    shares = inv / inv.sum()
    return shares, float(1.0 / inv.sum())


class SeparableObjective:
    """Interface for :func:`box_ordered_qp` objectives: a sum of smooth convex
    one-dimensional terms, one per position."""

    def value(self, x: np.ndarray) -> float:
        raise NotImplementedError

    def grad(self, x: np.ndarray) -> np.ndarray:
        raise NotImplementedError

    def hess_diag(self, x: np.ndarray) -> np.ndarray:
        raise NotImplementedError


class QuadraticTargets(SeparableObjective):
    """sum_n weight_n * (x_n - target_n)^2, the simplest placement objective."""

    def __init__(self, targets, weights=None):
        self.targets = np.asarray(targets, dtype=float)
        self.weights = (np.ones_like(self.targets) if weights is None
                        else np.asarray(weights, dtype=float))

    def value(self, x):
        return float(np.sum(self.weights * (x - self.targets) ** 2))

    def grad(self, x):
        return 2.0 * self.weights * (x - self.targets)

    def hess_diag(self, x):
        return 2.0 * self.weights * np.ones_like(x)


def interior_positions(n: int, length: float, spacing: float) -> np.ndarray:
    """Strictly feasible equispaced positions; exists whenever
    ``length > (n - 1) * spacing``."""
    margin = (length - (n - 1) * spacing) / (2.0 * (n + 1))
    if n == 1:
        return np.array([length / 2.0])
    step = (length - 2.0 * margin) / (n - 1)
    return margin + step * np.arange(n)


def box_ordered_qp(objective: SeparableObjective, n: int, length: float,
                   spacing: float, x0: np.ndarray = None,
                   gap_tol: float = 1e-12, max_newton: int = 12) -> np.ndarray:
    """Minimize a separable convex objective over ordered positions in a box.

    Constraints: ``0 <= x_1``, ``x_{i+1} - x_i >= spacing``, ``x_n <= length``.
    Reparameterized through nonnegative gaps ``u = (x_1, x_2-x_1-spacing, ...)``
    so ordering becomes plain nonnegativity plus one budget constraint.
    """
    budget = length - (n - 1) * spacing
    if budget <= 0:
        raise ValueError("box cannot hold the requested spacing")
    offs = spacing * np.arange(n)
    tri = np.tril(np.ones((n, n)))

    def to_x(u):
        return tri @ u + offs

    u_int = np.empty(n)
    x_int = interior_positions(n, length, spacing)
    u_int[0] = x_int[0]
    u_int[1:] = np.diff(x_int) - spacing

    if x0 is None:
        u = u_int.copy()
    else:
        u = np.empty(n)
        u[0] = x0[0]
        u[1:] = np.diff(np.asarray(x0, dtype=float)) - spacing
        # pull boundary starts into the strict interior along the segment
        # toward the equispaced point; theta stays tiny for interior x0
        margin = 1e-9 * max(length, 1.0)
        theta = 0.0
        for a, b in zip(u, u_int):
            if a < margin:
                theta = 1.0 if b - a <= 0 else max(theta, (margin - a) / (b - a))
        slack0 = budget - u.sum()
        slack_int = budget - u_int.sum()
        if slack0 < margin:
            theta = 1.0 if slack_int - slack0 <= 0 else \
                max(theta, (margin - slack0) / (slack_int - slack0))
        theta = min(theta, 1.0)
        if theta > 0:
            u = (1.0 - theta) * u + theta * u_int

    scale = max(1.0, abs(objective.value(to_x(u))))
    m = n + 1
    t = 1.0
    while True:
        for _ in range(max_newton):
            x = to_x(u)
            slack = budget - u.sum()
            gx = objective.grad(x) / scale
            hx = objective.hess_diag(x) / scale

            grad = t * (tri.T @ gx) - 1.0 / u + 1.0 / slack
            h = t * (tri.T * hx) @ tri + np.diag(1.0 / u ** 2) \
                + np.full((n, n), 1.0 / slack ** 2)

            step = _solve_psd(h, -grad)
            if -grad @ step <= 1e-11 * max(1.0, t * 1e-6):
                break

            # constraints are linear in u: the largest feasible step along
            # the Newton direction is available in closed form
            alpha_max = 1.0
            neg = step < 0
            if np.any(neg):
                alpha_max = min(alpha_max, 0.99 * float(np.min(-u[neg] / step[neg])))
            dsum = step.sum()
            if dsum > 0:
                alpha_max = min(alpha_max, 0.99 * slack / dsum)
            if alpha_max <= 0:
                break

            def psi(uu):
                if np.any(uu <= 0) or budget - uu.sum() <= 0:
                    return np.inf
                return t * objective.value(to_x(uu)) / scale \
                    - np.log(uu).sum() - np.log(budget - uu.sum())

            base = psi(u)
            alpha = alpha_max
            moved = False
            for _ in range(40):
                cand = u + alpha * step
                val = psi(cand)
                if np.isfinite(val) and val <= base + 0.25 * alpha * (grad @ step):
                    u = cand
                    moved = True
                    break
                alpha *= 0.5
            if not moved:
                break

        if m / t <= gap_tol:
            break
        t *= 25.0
        if t > m / (gap_tol * 1e-4):
            break

    return to_x(u)
