"""Penalty-dual-decomposition solver for joint baseband and pinching beamforming.

The max-min SINR problem is first rewritten with the quadratic transform: for
fixed multipliers ``mu`` every rate constraint becomes a concave quadratic
``y(mu, ., .)`` whose maximum over ``mu`` recovers the SINR exactly.  Antenna
positions enter the channel through exponential and reciprocal terms, so two
auxiliary blocks decouple them: per-user pinching coefficients ``U`` (one
complex coefficient per antenna) and unwrapped phase variables ``E``, tied to
the positions by equality constraints.  Those constraints are relaxed into an
augmented-Lagrangian penalty; an inner loop block-maximizes the penalized
objective (mu, baseband, U, X, E) and an outer loop alternates dual steps with
penalty tightening until the largest equality residual is driven to zero.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import channel as ch
from . import rates as rates_mod
from .convex import (ConcaveQuadratic, SeparableObjective, box_ordered_qp,
                     maxmin_power_budget, maxmin_quadratics_ball,
                     require_converged, solve_epigraph, split_complex,
                     time_allocation)
from .scenario import Geometry, RfConfig, Scenario, UserLayout


# ---------------------------------------------------------------------------
# quadratic-transform helpers (shared with the fixed-antenna baselines)
# ---------------------------------------------------------------------------

def stream_amplitudes(eff: np.ndarray, w_eff: np.ndarray) -> np.ndarray:
    """Received amplitude of every stream at every user: (J, S)."""
    return eff @ w_eff


def mu_optimal(amps: np.ndarray, stream_of: np.ndarray, noise_power: float):
    """Closed-form multipliers maximizing y: desired amplitude over
    interference-plus-noise power."""
    j = np.arange(amps.shape[0])
    desired = amps[j, stream_of]
    interf = (np.abs(amps) ** 2).sum(axis=1) - np.abs(desired) ** 2
    return desired / (interf + noise_power)


def y_values(mu: np.ndarray, amps: np.ndarray, stream_of: np.ndarray,
             noise_power: float) -> np.ndarray:
    """Quadratic-transform surrogate of the SINR, concave in the amplitudes."""
    j = np.arange(amps.shape[0])
    desired = amps[j, stream_of]
    interf = (np.abs(amps) ** 2).sum(axis=1) - np.abs(desired) ** 2
    return 2.0 * np.real(np.conj(mu) * desired) \
        - np.abs(mu) ** 2 * (interf + noise_power)


def sinr_values(amps: np.ndarray, stream_of: np.ndarray,
                noise_power: float) -> np.ndarray:
    j = np.arange(amps.shape[0])
    desired = np.abs(amps[j, stream_of]) ** 2
    interf = (np.abs(amps) ** 2).sum(axis=1) - desired
    return desired / (interf + noise_power)


def mu_update(layout: ch.PinchingLayout, beamformers: np.ndarray,
              users: UserLayout, geometry: Geometry, rf: RfConfig) -> np.ndarray:
    """Closed-form multipliers for the current layout and beamformers,
    flattened over users group-major."""
    eff = ch.effective_channels(users, layout, geometry, rf)
    k_groups, g = eff.shape[:2]
    eff_flat = eff.reshape(k_groups * g, -1)
    stream_of = np.repeat(np.arange(k_groups), g)
    amps = stream_amplitudes(eff_flat, np.asarray(beamformers, dtype=complex))
    return mu_optimal(amps, stream_of, rf.noise_power_w)


# ---------------------------------------------------------------------------
# problem context and solver state
# ---------------------------------------------------------------------------

@dataclass
class PddConfig:
    """Loop tolerances and schedule for the penalty-dual solver."""

    eps_residual: float = 1e-6        # outer stop: max equality residual
    eps_objective: float = 1e-3       # inner stop: fractional objective gain
    rho0: float = 1e-3                # starting penalty factor
    penalty_shrink: float = 0.85      # rho multiplier when residuals stall
    residual_improvement: float = 0.9 # required shrink for a dual step
    max_outer: int = 200
    max_inner: int = 100
    # how far the coefficient block may roam from the channel manifold at the
    # starting penalty (1 = deviations comparable to the coefficients
    # themselves); sets the internal channel scaling
    exploration_balance: float = 1e-4
    # target weight of the phase-coupling pull relative to the phase-tie
    # stiffness in the phase update; sets the internal scaling of the phase
    # equality constraints (their penalty factor anneals in lockstep)
    phase_tie_balance: float = 0.05
    # layout search: grid pitch (fractions of a wavelength) and stall threshold
    refine_grid_frac: float = 1.0 / 24.0
    refine_rounds: int = 40
    refine_tol: float = 3e-4

    def __post_init__(self):
        if not (self.eps_residual > 0 and self.eps_objective > 0):
            raise ValueError("tolerances must be positive")
        if not 0 < self.penalty_shrink < 1:
            raise ValueError("penalty shrink factor must lie in (0, 1)")
        if not 0 < self.residual_improvement < 1:
            raise ValueError("residual improvement factor must lie in (0, 1)")


@dataclass
class DualState:
    """Dual variables and penalty factors of the augmented Lagrangian.

    The coefficient tie and the phase tie carry separately scaled penalty
    factors (a fixed rescaling of the equality constraints); both shrink by
    the same factor when the penalty tightens.
    """

    lam_u: np.ndarray   # complex (J, K, N)
    lam_e: np.ndarray   # real (J, K, N)
    rho: float          # coefficient-tie penalty factor
    rho_b: float = None # phase-tie penalty factor (defaults to rho)

    def __post_init__(self):
        if self.rho_b is None:
            self.rho_b = self.rho


class PddProblem:
    """Geometry, users, and noise-normalized constants for one solver run.

    Users are flattened to ``j = 0..J-1``; ``stream_of[j]`` names the data
    stream carrying user j's message.
    """

    def __init__(self, positions: np.ndarray, stream_of: np.ndarray,
                 geometry: Geometry, rf: RfConfig, num_streams: int,
                 channel_scale: float = 1.0):
        self.positions = np.asarray(positions, dtype=float)   # (J, 3)
        self.stream_of = np.asarray(stream_of, dtype=int)
        self.geometry = geometry
        self.rf = rf
        self.num_streams = int(num_streams)
        self.num_users = self.positions.shape[0]
        # channel amplitudes and the noise deviation are both multiplied by
        # channel_scale, which leaves every SINR, rate, and beamformer power
        # untouched but sets how hard the quadratic penalty bites relative to
        # the rate term at a given penalty factor
        self.amp_scale = float(channel_scale)
        self.eta = rf.reference_gain * self.amp_scale
        self.noise = rf.noise_power_w * self.amp_scale ** 2
        self.alpha = 2.0 * np.pi / rf.wavelength_m
        self.beta = 2.0 * np.pi / rf.guided_wavelength_m
        self.k = geometry.num_waveguides
        self.n = geometry.antennas_per_waveguide
        # squared horizontal+height offsets, fixed per (user, waveguide)
        dy = self.positions[:, 1][:, None] - np.asarray(geometry.waveguide_y_coords_m)
        self.dsq = dy ** 2 + geometry.height_m ** 2                  # (J, K)

    @property
    def noise_sigma(self) -> float:
        return np.sqrt(self.rf.noise_power_w)

    def distances(self, x: np.ndarray) -> np.ndarray:
        """(J, K, N) antenna-user distances for positions ``x`` (K, N)."""
        dx = self.positions[:, 0][:, None, None] - x[None, :, :]
        return np.sqrt(dx ** 2 + self.dsq[:, :, None])

    def phases(self, x: np.ndarray) -> np.ndarray:
        """(J, K, N) unwrapped propagation-plus-waveguide phases."""
        return self.alpha * self.distances(x) + self.beta * x[None, :, :]

    def consistent_aux(self, x: np.ndarray):
        """U and E exactly on the equality manifold for positions ``x``."""
        e = self.phases(x)
        r = self.distances(x)
        u = self.eta * np.exp(-1j * e) / (np.sqrt(self.n) * r)
        return u, e

    def effective(self, x: np.ndarray) -> np.ndarray:
        """Noise-normalized per-waveguide effective channels (J, K) from X."""
        u, _ = self.consistent_aux(x)
        return u.sum(axis=2)


def effective_from_u(u: np.ndarray) -> np.ndarray:
    """Collapse pinching coefficients over antennas: (J, K, N) -> (J, K)."""
    return u.sum(axis=2)


def residuals(prob: PddProblem, x: np.ndarray, u: np.ndarray, e: np.ndarray):
    """Equality-constraint residual tensors (A for the coefficient tie,
    B for the phase tie), each (J, K, N), in the solver's normalized units."""
    r = prob.distances(x)
    a = u * r - (prob.eta / np.sqrt(prob.n)) * np.exp(-1j * e)
    b = e - (prob.alpha * r + prob.beta * x[None, :, :])
    return a, b


def max_residual(prob: PddProblem, a: np.ndarray, b: np.ndarray) -> float:
    """Largest residual entry in physical units: the coefficient tie scales
    back to raw channel amplitudes, the phase tie is already in radians."""
    return float(max(np.abs(a).max() / prob.amp_scale, np.abs(b).max()))


def al_value(prob: PddProblem, x: np.ndarray, u: np.ndarray, e: np.ndarray,
             duals: DualState) -> float:
    """Augmented-Lagrangian penalty, each tie scaled by 1/(2*rho)."""
    a, b = residuals(prob, x, u, e)
    ta = np.abs(a + duals.rho * duals.lam_u) ** 2
    tb = (b + duals.rho_b * duals.lam_e) ** 2
    return float(ta.sum() / (2.0 * duals.rho) + tb.sum() / (2.0 * duals.rho_b))


# ---------------------------------------------------------------------------
# block updates
# ---------------------------------------------------------------------------

def beamforming_quadratics(eff: np.ndarray, mu: np.ndarray,
                           stream_of: np.ndarray, noise_power: float,
                           num_streams: int):
    """One concave quadratic per user in the stacked stream beamformers.

    The linear part touches only the user's desired stream block; the PSD
    part collects the interfering streams.  Shared by the pinching solver
    (with U-derived effective channels) and the fixed-antenna baselines.
    """
    eff = np.asarray(eff, dtype=complex)
    j_users, a_dim = eff.shape
    dim = a_dim * num_streams
    quads = []
    for j in range(j_users):
        sj = int(stream_of[j])
        a = np.zeros(dim, dtype=complex)
        a[sj * a_dim:(sj + 1) * a_dim] = mu[j] * np.conj(eff[j])
        q = np.zeros((dim, dim), dtype=complex)
        block = np.abs(mu[j]) ** 2 * np.outer(np.conj(eff[j]), eff[j])
        for st in range(num_streams):
            if st != sj:
                q[st * a_dim:(st + 1) * a_dim, st * a_dim:(st + 1) * a_dim] = block
        quads.append(ConcaveQuadratic.from_complex(
            a, q, -np.abs(mu[j]) ** 2 * noise_power))
    return quads


def pack_beamformers(w_eff: np.ndarray) -> np.ndarray:
    """Realify a (A, S) beamformer matrix stream-major for kernel warm starts."""
    w_flat = np.asarray(w_eff, dtype=complex).T.reshape(-1)
    return np.concatenate([w_flat.real, w_flat.imag])


def unpack_beamformers(z: np.ndarray, num_streams: int) -> np.ndarray:
    w_flat = split_complex(z)
    return w_flat.reshape(num_streams, -1).T


def subproblem_w(mu: np.ndarray, u: np.ndarray, stream_of: np.ndarray,
                 noise_power: float, p_max: float, num_streams: int,
                 w_prev: np.ndarray = None):
    """Joint update of (gamma, W) under the total power ball."""
    hhat = effective_from_u(u)                # (J, K)
    quads = beamforming_quadratics(hhat, mu, stream_of, noise_power, num_streams)
    z0 = pack_beamformers(w_prev) if w_prev is not None else None
    report = require_converged(maxmin_quadratics_ball(quads, p_max, z0=z0))
    return report.gamma, unpack_beamformers(report.optimizer, num_streams)


def subproblem_u(prob: PddProblem, mu: np.ndarray, w_eff: np.ndarray,
                 x: np.ndarray, e: np.ndarray, duals: DualState,
                 u_prev: np.ndarray = None):
    """Joint update of (gamma, U): max-min of the y quadratics minus the
    1/(2*rho)-scaled augmented-Lagrangian term, which is concave in U."""
    j_users, k, n = prob.num_users, prob.k, prob.n
    m = k * n
    r = prob.distances(x).reshape(j_users, m)
    zeta = (duals.rho * duals.lam_u
            - (prob.eta / np.sqrt(n)) * np.exp(-1j * e)).reshape(j_users, m)

    # per-antenna stream amplitudes: v[s, m] repeats w_eff[i, s] over block i
    v = np.repeat(np.asarray(w_eff, dtype=complex).T, n, axis=1)   # (S, M)

    dim = j_users * m
    quads = []
    for j in range(j_users):
        sj = int(prob.stream_of[j])
        a = np.zeros(dim, dtype=complex)
        a[j * m:(j + 1) * m] = mu[j] * np.conj(v[sj])
        q = np.zeros((dim, dim), dtype=complex)
        qj = np.zeros((m, m), dtype=complex)
        for st in range(prob.num_streams):
            if st != sj:
                qj += np.abs(mu[j]) ** 2 * np.outer(np.conj(v[st]), v[st])
        q[j * m:(j + 1) * m, j * m:(j + 1) * m] = qj
        quads.append(ConcaveQuadratic.from_complex(a, q, -np.abs(mu[j]) ** 2 * prob.noise))

    # concave penalty: -(1/(2 rho)) * sum_j ||R_j u_j + zeta_j||^2
    kappa = 1.0 / (2.0 * duals.rho)
    a_pen = (-kappa * r * zeta).reshape(-1)
    q_pen = np.diag((kappa * r ** 2).reshape(-1)).astype(complex)
    c_pen = -kappa * float(np.sum(np.abs(zeta) ** 2))
    penalty = ConcaveQuadratic.from_complex(a_pen, q_pen, c_pen)

    z0 = None
    if u_prev is not None:
        u_flat = u_prev.reshape(-1)
        z0 = np.concatenate([u_flat.real, u_flat.imag])
    report = require_converged(solve_epigraph(quads, extra_objective=penalty, z0=z0))
    u_new = split_complex(report.optimizer).reshape(j_users, k, n)
    return report.gamma, u_new


def subproblem_p(prob: PddProblem, mu: np.ndarray, u: np.ndarray,
                 p_max: float, p_prev: np.ndarray = None):
    """Power-allocation update for the division structure."""
    hhat = effective_from_u(u)
    report = require_converged(maxmin_power_budget(
        mu, hhat, prob.stream_of, p_max, prob.noise, p0=p_prev))
    return report.gamma, report.optimizer


class _XRowObjective(SeparableObjective):
    """Convex per-row surrogate of the augmented Lagrangian in the positions.

    Built by expanding the penalty entrywise in ``x``: convex quadratic parts
    are kept; the distance term with a negative coefficient is linearized at
    the expansion point; the positive bilinear position-distance term is upper-
    bounded through the reciprocal-square-root inequality with its concave
    leftover linearized.  The result majorizes the true row contribution and
    touches it (value and slope) at the expansion point.
    """

    def __init__(self, prob: PddProblem, row: int, x_row: np.ndarray,
                 u: np.ndarray, e: np.ndarray, duals: DualState):
        kap_a = 1.0 / (2.0 * duals.rho)
        kap_b = 1.0 / (2.0 * duals.rho_b)
        alpha, beta = prob.alpha, prob.beta
        xu = prob.positions[:, 0][:, None]                     # (J, 1)
        dsq = prob.dsq[:, row][:, None]                        # (J, 1)
        u_row = u[:, row, :]                                   # (J, N)
        e_row = e[:, row, :]
        ccoef = e_row + duals.rho_b * duals.lam_e[:, row, :]
        zeta = duals.rho * duals.lam_u[:, row, :] \
            - (prob.eta / np.sqrt(prob.n)) * np.exp(-1j * e_row)

        x0 = x_row[None, :]                                    # (1, N)
        r0 = np.sqrt((xu - x0) ** 2 + dsq)                     # (J, N)

        self.xu = xu
        self.dsq = dsq
        # exact convex quadratic parts of both tie penalties
        self.qa = kap_a * np.abs(u_row) ** 2 + kap_b * alpha ** 2   # on (xu-x)^2
        self.qb = kap_b * beta ** 2                                 # on x^2 (scalar)
        self.ql = -2.0 * kap_b * beta * ccoef                       # on x

        omega = 2.0 * kap_a * np.real(np.conj(u_row) * zeta) \
            - 2.0 * kap_b * ccoef * alpha
        self.om_keep = np.where(omega >= 0.0, omega, 0.0)
        om_lin = np.where(omega < 0.0, omega, 0.0)
        slope0 = (x0 - xu) / r0
        self.lin_slope = om_lin * slope0
        self.lin_const = om_lin * (r0 - slope0 * x0)

        # position-distance product, coefficient 2*kap_b*alpha*beta > 0:
        # x*r <= x*(r^2 + r0^2)/(2 r0); the -2*xu*x^2 leftover is linearized
        # when xu >= 0 (concave there) and kept when xu < 0 (already convex)
        jc = 2.0 * kap_b * alpha * beta / (2.0 * r0)           # (J, N)
        self.jc = jc
        jl = xu ** 2 + dsq + r0 ** 2
        pos = xu >= 0.0
        self.j_lin = jl + np.where(pos, -4.0 * xu * x0, 0.0)
        self.j_quad = np.where(pos, 0.0, -2.0 * xu) * jc       # on x^2
        self.j_const = np.where(pos, 2.0 * xu * x0 ** 2, 0.0)

        self.const = float(np.sum(
            kap_a * np.abs(zeta) ** 2 + kap_b * ccoef ** 2 + self.qa * dsq)
            + np.sum(jc * self.j_const))

    def _r(self, x):
        return np.sqrt((self.xu - x[None, :]) ** 2 + self.dsq)

    def value(self, x):
        xr = x[None, :]
        dx = self.xu - xr
        r = np.sqrt(dx ** 2 + self.dsq)
        val = np.sum(self.qa * dx ** 2) + self.qb * np.sum(x ** 2) * self.xu.shape[0] \
            + np.sum(self.ql * xr) \
            + np.sum(self.om_keep * r) \
            + np.sum(self.lin_slope * xr + self.lin_const) \
            + np.sum(self.jc * (xr ** 3 + self.j_lin * xr)) \
            + np.sum(self.j_quad * xr ** 2)
        return float(val + self.const)

    def grad(self, x):
        xr = x[None, :]
        dx = self.xu - xr
        r = np.sqrt(dx ** 2 + self.dsq)
        g = (-2.0 * self.qa * dx).sum(axis=0) \
            + 2.0 * self.qb * x * self.xu.shape[0] \
            + self.ql.sum(axis=0) \
            + (self.om_keep * (-dx) / r).sum(axis=0) \
            + self.lin_slope.sum(axis=0) \
            + (self.jc * (3.0 * xr ** 2 + self.j_lin)).sum(axis=0) \
            + (2.0 * self.j_quad * xr).sum(axis=0)
        return g

    def hess_diag(self, x):
        xr = x[None, :]
        dx = self.xu - xr
        r = np.sqrt(dx ** 2 + self.dsq)
        h = (2.0 * self.qa).sum(axis=0) \
            + 2.0 * self.qb * np.ones_like(x) * self.xu.shape[0] \
            + (self.om_keep * self.dsq / r ** 3).sum(axis=0) \
            + (6.0 * self.jc * xr).sum(axis=0) \
            + (2.0 * self.j_quad).sum(axis=0)
        return h


def build_x_surrogate(prob: PddProblem, x: np.ndarray, u: np.ndarray,
                      e: np.ndarray, duals: DualState):
    """Per-row convex majorizers of the augmented Lagrangian at expansion
    point ``x``."""
    return [_XRowObjective(prob, i, x[i], u, e, duals) for i in range(prob.k)]


def surrogate_value(rows, x: np.ndarray) -> float:
    return float(sum(row.value(x[i]) for i, row in enumerate(rows)))


def subproblem_x(prob: PddProblem, u: np.ndarray, e: np.ndarray,
                 duals: DualState, x: np.ndarray) -> np.ndarray:
    """One majorize-minimize pass on the positions: build the convex row
    surrogates at ``x`` and minimize each under ordering/box constraints."""
    rows = build_x_surrogate(prob, x, u, e, duals)
    geo = prob.geometry
    x_new = np.empty_like(x)
    for i, row_obj in enumerate(rows):
        x_new[i] = box_ordered_qp(row_obj, geo.antennas_per_waveguide,
                                  geo.waveguide_length_m,
                                  geo.min_antenna_spacing_m, x0=x[i])
    return x_new


def e_closed_form(prob: PddProblem, u: np.ndarray, x: np.ndarray,
                  duals: DualState, e: np.ndarray) -> np.ndarray:
    """Per-entry phase update: exact minimizer of the convex tie-down term
    plus the Lipschitz-gradient majorizer of the coupling cosine."""
    r = prob.distances(x)
    coef = prob.eta / np.sqrt(prob.n)
    w = duals.lam_u + (u / duals.rho) * r
    grad_exp = coef * np.imag(w * np.exp(1j * e))
    lip = coef * np.abs(w)
    target = prob.alpha * r + prob.beta * x[None, :, :]
    return (lip * e - duals.lam_e + target / duals.rho_b - grad_exp) \
        / (lip + 1.0 / duals.rho_b)


def e_objective(prob: PddProblem, u: np.ndarray, x: np.ndarray,
                duals: DualState, e: np.ndarray) -> np.ndarray:
    """Entrywise E-dependent part of the penalty: the quadratic tie-down plus
    the coupling cosine.  Used by the update's tests."""
    r = prob.distances(x)
    target = prob.alpha * r + prob.beta * x[None, :, :]
    quad = (e - target + duals.rho_b * duals.lam_e) ** 2 / (2.0 * duals.rho_b)
    w = duals.lam_u + (u / duals.rho) * r
    coupling = -(prob.eta / np.sqrt(prob.n)) * np.real(w * np.exp(1j * e))
    return quad + coupling


# ---------------------------------------------------------------------------
# per-structure baseband strategies
# ---------------------------------------------------------------------------

class _WmBaseband:
    name = "wm"

    def __init__(self, prob: PddProblem, p_max: float):
        self.prob = prob
        self.p_max = p_max

    def init(self, u0: np.ndarray) -> np.ndarray:
        # per-stream matched filtering on the group-mean channel, scaled to
        # the full power budget split evenly across streams
        hhat = effective_from_u(u0)
        k, s = self.prob.k, self.prob.num_streams
        w = np.zeros((k, s), dtype=complex)
        for st in range(s):
            rows = hhat[self.prob.stream_of == st]
            direction = np.conj(rows.mean(axis=0))
            w[:, st] = direction / np.linalg.norm(direction)
        return w * np.sqrt(self.p_max / s)

    def update(self, mu, u, w_prev):
        return subproblem_w(mu, u, self.prob.stream_of, self.prob.noise,
                            self.p_max, self.prob.num_streams, w_prev=w_prev)

    def w_eff(self, bb):
        return bb

    def export(self, bb):
        return bb


class _WdBaseband:
    name = "wd"
    # division: each waveguide radiates one group; its antennas serve that
    # group alone and the power split carries the interference tradeoff
    own_group_refine = True

    def __init__(self, prob: PddProblem, p_max: float):
        self.prob = prob
        self.p_max = p_max

    def init(self, u0: np.ndarray) -> np.ndarray:
        return np.full(self.prob.k, self.p_max / self.prob.k)

    def update(self, mu, u, p_prev):
        return subproblem_p(self.prob, mu, u, self.p_max, p_prev=p_prev)

    def w_eff(self, bb):
        return np.diag(np.sqrt(bb)).astype(complex)

    def export(self, bb):
        return bb


class _WsGroupBaseband:
    # single-stream variant used once per group; power cap applies per slot
    name = "ws-group"

    def __init__(self, prob: PddProblem, p_max: float):
        self.prob = prob
        self.p_max = p_max

    def init(self, u0: np.ndarray) -> np.ndarray:
        hhat = effective_from_u(u0)
        direction = np.conj(hhat.mean(axis=0))
        w = direction / np.linalg.norm(direction) * np.sqrt(self.p_max)
        return w.reshape(-1, 1)

    def update(self, mu, u, w_prev):
        return subproblem_w(mu, u, self.prob.stream_of, self.prob.noise,
                            self.p_max, 1, w_prev=w_prev)

    def w_eff(self, bb):
        return bb

    def export(self, bb):
        return bb.reshape(-1)


# ---------------------------------------------------------------------------
# the nested loop
# ---------------------------------------------------------------------------

@dataclass
class PddRun:
    """Raw outcome of one penalty-dual run on one problem instance."""

    x: np.ndarray
    baseband: np.ndarray
    min_rate: float
    sinrs: np.ndarray            # per flattened user
    trace: list                  # rows: (outer, inner_total, min_rate, residual, rho)
    outer_iterations: int
    inner_iterations: int
    converged: bool
    duals: DualState
    aux_u: np.ndarray
    aux_e: np.ndarray


def _true_rates(prob: PddProblem, x: np.ndarray, w_eff: np.ndarray):
    amps = stream_amplitudes(prob.effective(x), w_eff)
    sinr = sinr_values(amps, prob.stream_of, prob.noise)
    return np.log2(1.0 + sinr), sinr


def placement_init(prob: PddProblem) -> np.ndarray:
    """Deterministic starting layout adapted to the served users.

    Spreads each waveguide's antennas across the users' x-range (collapsing
    to a minimally spaced block centered on a lone user), clamped into the
    feasible box.
    """
    geo = prob.geometry
    n, length = geo.antennas_per_waveguide, geo.waveguide_length_m
    xs = prob.positions[:, 0]
    lo, hi = float(xs.min()), float(xs.max())
    if n == 1:
        center = min(max(0.5 * (lo + hi), 0.0), length)
        return np.tile([center], (geo.num_waveguides, 1))
    spacing = (hi - lo) / (n - 1)
    spacing = min(max(spacing, geo.min_antenna_spacing_m), length / (n - 1) * 0.98)
    span = (n - 1) * spacing
    center = min(max(0.5 * (lo + hi), span / 2.0), length - span / 2.0)
    row = center + spacing * (np.arange(n) - (n - 1) / 2.0)
    return np.tile(row, (geo.num_waveguides, 1))


def _entry_terms(prob: PddProblem, xc: np.ndarray, j: int, i: int) -> np.ndarray:
    """Channel contribution of one antenna at candidate positions ``xc`` to
    user j through waveguide i."""
    r = np.sqrt((prob.positions[j, 0] - xc) ** 2 + prob.dsq[j, i])
    phi = prob.alpha * r + prob.beta * xc
    return prob.eta * np.exp(-1j * phi) / (np.sqrt(prob.n) * r)


def coordinate_refine(prob: PddProblem, x: np.ndarray, w_eff: np.ndarray,
                      grid_step: float = None, own_group_only: bool = False) -> np.ndarray:
    """One sweep of exact single-antenna search on the current rate objective.

    The rate's position dependence oscillates on the guided-wavelength scale,
    so local models cannot cross wells; a dense 1-D grid over each antenna's
    feasible slot (its neighbors fixed) finds the globally best position per
    antenna at negligible cost via rank-one channel updates.

    With ``own_group_only`` each waveguide only strengthens the users of its
    own stream (per-waveguide pinching: the division structure radiates one
    group per waveguide and leaves interference to the power allocation).
    """
    geo = prob.geometry
    spacing = geo.min_antenna_spacing_m
    length = geo.waveguide_length_m
    if grid_step is None:
        grid_step = prob.rf.wavelength_m / 24.0
    x = x.copy()
    eff = prob.effective(x)                           # (J, K)
    w = np.asarray(w_eff, dtype=complex)
    amps = eff @ w                                    # (J, S)
    j_idx = np.arange(prob.num_users)

    for i in range(prob.k):
        own = prob.stream_of == i
        if own_group_only and not np.any(own):
            continue
        for nn in range(prob.n):
            lo = 0.0 if nn == 0 else x[i, nn - 1] + spacing
            hi = length if nn == prob.n - 1 else x[i, nn + 1] - spacing
            if hi <= lo:
                continue
            count = max(2, int((hi - lo) / grid_step) + 1)
            cand = np.linspace(lo, hi, min(count, 40_000))
            # keep the incumbent position among the candidates so a sweep
            # never moves to a slightly-worse on-grid point
            cand = np.append(cand, x[i, nn])
            old = np.array([_entry_terms(prob, x[i, nn:nn + 1], j, i)[0]
                            for j in range(prob.num_users)])
            new = np.stack([_entry_terms(prob, cand, j, i)
                            for j in range(prob.num_users)])       # (J, C)
            delta = new - old[:, None]                             # (J, C)
            # candidate amplitudes: rank-one update through waveguide i's row
            amps_c = amps[:, :, None] + delta[:, None, :] * w[i][None, :, None]
            power = np.abs(amps_c) ** 2                            # (J, S, C)
            desired = power[j_idx, prob.stream_of]                 # (J, C)
            if own_group_only:
                # interference-blind max-min over the waveguide's own users
                metric = (desired[own] / prob.noise).min(axis=0)
            else:
                interf = power.sum(axis=1) - desired
                metric = (desired / (interf + prob.noise)).min(axis=0)
            best = int(np.argmax(metric))
            x[i, nn] = cand[best]
            amps = amps + (delta[:, best][:, None] * w[i][None, :])
            eff[:, i] += delta[:, best]
    return x


def group_block_init(prob: PddProblem) -> np.ndarray:
    """Starting layout with waveguide i's antennas spread over the x-range of
    the users riding stream i (falls back to all users when a waveguide
    carries no stream of its own)."""
    geo = prob.geometry
    n, length = geo.antennas_per_waveguide, geo.waveguide_length_m
    x = np.zeros((prob.k, n))
    for i in range(prob.k):
        xs = prob.positions[prob.stream_of == i, 0]
        if xs.size == 0:
            xs = prob.positions[:, 0]
        lo, hi = float(xs.min()), float(xs.max())
        if n == 1:
            x[i, 0] = min(max(0.5 * (lo + hi), 0.0), length)
            continue
        spacing = min(max((hi - lo) / (n - 1), geo.min_antenna_spacing_m),
                      length / (n - 1) * 0.98)
        span = (n - 1) * spacing
        center = min(max(0.5 * (lo + hi), span / 2.0), length - span / 2.0)
        x[i] = center + spacing * (np.arange(n) - (n - 1) / 2.0)
    return x


def _refine_from(prob: PddProblem, strategy, config: PddConfig, x: np.ndarray,
                 rounds: int = None, grid_step: float = None,
                 bb0: np.ndarray = None):
    rounds = config.refine_rounds if rounds is None else rounds
    if grid_step is None:
        grid_step = prob.rf.wavelength_m * config.refine_grid_frac
    bb = strategy.init(prob.consistent_aux(x)[0]) if bb0 is None else bb0
    own_only = getattr(strategy, "own_group_refine", False)

    def score(xx, bbb):
        return float(sinr_values(stream_amplitudes(prob.effective(xx),
                                                   strategy.w_eff(bbb)),
                                 prob.stream_of, prob.noise).min())

    best = (x, bb, score(x, bb))
    prev = None
    for _ in range(rounds):
        w_eff = strategy.w_eff(bb)
        x = coordinate_refine(prob, x, w_eff, grid_step=grid_step,
                              own_group_only=own_only)
        amps = stream_amplitudes(prob.effective(x), w_eff)
        mu = mu_optimal(amps, prob.stream_of, prob.noise)
        u_cons, _ = prob.consistent_aux(x)
        _, bb = strategy.update(mu, u_cons, bb)
        obj = score(x, bb)
        if obj > best[2]:
            best = (x, bb, obj)
        if prev is not None and abs(obj - prev) <= config.refine_tol * max(abs(prev), 1e-12):
            break
        prev = obj
    return best


def rate_driven_layout(prob: PddProblem, strategy, config: PddConfig):
    """Best rate-driven layout over a small set of deterministic starts.

    Alternates exact beamformer updates with per-antenna grid sweeps until
    the min rate stalls; the coordinate landscape is multimodal, so a few
    structurally different starting layouts are refined, the best kept, and
    a finer-grid pass run from the winner.
    """
    coarse = prob.rf.wavelength_m * config.refine_grid_frac
    starts = [placement_init(prob),
              ch.uniform_layout(prob.geometry).x_positions_m.copy(),
              group_block_init(prob)]
    best = None
    for idx, x0 in enumerate(starts):
        if any(np.allclose(x0, starts[j]) for j in range(idx)):
            continue
        cand = _refine_from(prob, strategy, config, x0,
                            rounds=config.refine_rounds, grid_step=coarse)
        if best is None or cand[2] > best[2]:
            best = cand
    polished = _refine_from(prob, strategy, config, best[0].copy(), bb0=best[1],
                            rounds=max(5, config.refine_rounds // 2),
                            grid_step=coarse / 3.0)
    if polished[2] > best[2]:
        best = polished
    return best[0], best[1]


def exploration_scale(prob: PddProblem, x: np.ndarray, w_eff: np.ndarray,
                      config: PddConfig) -> float:
    """Internal channel scaling that puts the starting penalty at the
    exploration/tethering transition.

    At penalty factor rho the coefficient block's unconstrained deviation
    from the channel manifold is about ``2*rho*|a| / r^2`` per entry, where
    ``a`` is the rate term's linear pull.  Choosing the scale so that this
    deviation is ``exploration_balance`` times the coefficient magnitude
    lets early iterations retune phases (the mechanism behind the position
    gains) while the penalty schedule can still rein everything back in.
    ``prob`` must be unscaled (physical units).
    """
    r = prob.distances(x)
    u0, _ = prob.consistent_aux(x)
    amps = stream_amplitudes(prob.effective(x), w_eff)
    mu = mu_optimal(amps, prob.stream_of, prob.noise)
    vmag = np.repeat(np.abs(np.asarray(w_eff, dtype=complex).T), prob.n, axis=1)
    amag = np.abs(mu)[:, None] * vmag[prob.stream_of]     # (J, M)
    active = amag > 0
    if not np.any(active):
        return 1.0
    med_a = float(np.median(amag[active]))
    med_ru = float(np.median((r ** 2 * np.abs(u0)).reshape(prob.num_users, -1)[active]))
    s_sq = 2.0 * config.rho0 * med_a / (config.exploration_balance * med_ru)
    return float(np.sqrt(s_sq)) if s_sq > 0 else 1.0


def phase_tie_factor(prob: PddProblem, x: np.ndarray, config: PddConfig) -> float:
    """Starting penalty factor for the phase ties.

    Scales the phase-tie penalty so the coupling cosine's pull on the phase
    block carries ``phase_tie_balance`` of the tie-down stiffness; with the
    balance below one the phase variables track the physical phases and the
    tie residuals close under the dual updates.  ``prob`` must already carry
    its final channel scale.
    """
    r = prob.distances(x)
    u0, _ = prob.consistent_aux(x)
    lip = (prob.eta / np.sqrt(prob.n)) * float(np.median(np.abs(u0) * r)) / config.rho0
    if lip <= 0:
        return config.rho0
    return config.phase_tie_balance / lip


def _pdd_loop(prob: PddProblem, bb_strategy, config: PddConfig,
              x0: np.ndarray = None, bb0: np.ndarray = None) -> PddRun:
    x = placement_init(prob) if x0 is None else x0.copy()
    u, e = prob.consistent_aux(x)
    bb = bb_strategy.init(u) if bb0 is None else bb0
    duals = DualState(lam_u=np.zeros_like(u), lam_e=np.zeros_like(e),
                      rho=config.rho0, rho_b=phase_tie_factor(prob, x, config))

    trace = []
    inner_total = 0
    prev_res = None
    converged = False
    outer = 0
    for outer in range(1, config.max_outer + 1):
        prev_obj = None
        for _ in range(config.max_inner):
            # multipliers come from the true channel of the current layout;
            # this tethers the auxiliary blocks to the physical rates
            w_eff = bb_strategy.w_eff(bb)
            amps = stream_amplitudes(prob.effective(x), w_eff)
            mu = mu_optimal(amps, prob.stream_of, prob.noise)
            _, bb = bb_strategy.update(mu, u, bb)
            w_eff = bb_strategy.w_eff(bb)
            # refresh the multipliers against the updated beamformers before
            # the coefficient block; a stale mu feeds a marginal global-phase
            # drift that keeps the dual variables from settling
            amps = stream_amplitudes(prob.effective(x), w_eff)
            mu = mu_optimal(amps, prob.stream_of, prob.noise)
            _, u = subproblem_u(prob, mu, w_eff, x, e, duals, u_prev=u)
            x = subproblem_x(prob, u, e, duals, x)
            e = e_closed_form(prob, u, x, duals, e)
            inner_total += 1

            amps = stream_amplitudes(effective_from_u(u), w_eff)
            obj = float(np.min(y_values(mu, amps, prob.stream_of, prob.noise))) \
                - al_value(prob, x, u, e, duals)
            if prev_obj is not None and \
                    abs(obj - prev_obj) <= config.eps_objective * max(abs(prev_obj), 1e-8):
                break
            prev_obj = obj

        a, b = residuals(prob, x, u, e)
        res = max_residual(prob, a, b)
        rates, _ = _true_rates(prob, x, bb_strategy.w_eff(bb))
        trace.append((outer, inner_total, float(rates.min()), res, duals.rho))

        if res <= config.eps_residual:
            converged = True
            break
        if prev_res is None or res <= config.residual_improvement * prev_res:
            duals.lam_u = duals.lam_u + a / duals.rho
            duals.lam_e = duals.lam_e + b / duals.rho_b
        else:
            duals.rho *= config.penalty_shrink
            duals.rho_b *= config.penalty_shrink
        prev_res = res

    rates, sinr = _true_rates(prob, x, bb_strategy.w_eff(bb))
    return PddRun(x=x, baseband=bb_strategy.export(bb), min_rate=float(rates.min()),
                  sinrs=sinr, trace=trace, outer_iterations=outer,
                  inner_iterations=inner_total, converged=converged,
                  duals=duals, aux_u=u, aux_e=e)


@dataclass
class PddResult:
    """Structure-level result: layout(s), baseband state, rates, and trace."""

    structure: str
    layouts: list                # one layout (wm/wd) or one per group (ws)
    beamformers: np.ndarray      # (K, K) for wm, per-group list for ws
    power_allocation: np.ndarray # wd only
    time_shares: np.ndarray      # ws only
    report: rates_mod.RateReport
    trace: list
    outer_iterations: int
    inner_iterations: int
    converged: bool
    runs: list


def _flatten_users(users: UserLayout):
    k_groups, g = users.positions.shape[:2]
    positions = users.positions.reshape(k_groups * g, 3)
    stream_of = np.repeat(np.arange(k_groups), g)
    return positions, stream_of


def _run_structure(positions, stream_of, num_streams, strategy_cls,
                   geo: Geometry, rf: RfConfig, p_max: float,
                   config: PddConfig) -> PddRun:
    """Build the rate-driven starting point on the physical problem, pick the
    internal channel scale there, then run the nested loop rescaled."""
    probe = PddProblem(positions, stream_of, geo, rf, num_streams)
    x0, bb0 = rate_driven_layout(probe, strategy_cls(probe, p_max), config)
    w0 = strategy_cls(probe, p_max).w_eff(bb0)
    scale = exploration_scale(probe, x0, w0, config)
    prob = PddProblem(positions, stream_of, geo, rf, num_streams,
                      channel_scale=scale)
    return _pdd_loop(prob, strategy_cls(prob, p_max), config, x0=x0, bb0=bb0)


def pdd_solve(scenario: Scenario, structure: str, users: UserLayout,
              config: PddConfig = None) -> PddResult:
    """Run the penalty-dual solver for one transmission structure.

    ``structure`` is one of ``wm`` (digital multiplexing), ``wd`` (per-
    waveguide power split), or ``ws`` (time switching; one independent run
    per group followed by the closed-form time allocation).
    """
    config = config or PddConfig()
    geo, rf = scenario.geometry, scenario.rf
    p_max = rf.max_transmit_power_w

    if structure in ("wm", "wd"):
        positions, stream_of = _flatten_users(users)
        strategy_cls = _WmBaseband if structure == "wm" else _WdBaseband
        run = _run_structure(positions, stream_of, geo.num_waveguides,
                             strategy_cls, geo, rf, p_max, config)
        layout = ch.PinchingLayout(x_positions_m=run.x)
        if structure == "wm":
            report = rates_mod.rate_wm(layout, run.baseband, users, geo, rf)
            return PddResult("wm", [layout], run.baseband, None, None, report,
                             run.trace, run.outer_iterations, run.inner_iterations,
                             run.converged, [run])
        report = rates_mod.rate_wd(layout, run.baseband, users, geo, rf)
        return PddResult("wd", [layout], None, run.baseband, None, report,
                         run.trace, run.outer_iterations, run.inner_iterations,
                         run.converged, [run])

    if structure != "ws":
        raise ValueError(f"unknown structure {structure!r}")

    # switching: groups decouple into independent single-stream runs
    k_groups, g = users.positions.shape[:2]
    runs, layouts, beams, group_rates = [], [], [], []
    for k in range(k_groups):
        run = _run_structure(users.positions[k], np.zeros(g, dtype=int), 1,
                             _WsGroupBaseband, geo, rf, p_max, config)
        runs.append(run)
        layouts.append(ch.PinchingLayout(x_positions_m=run.x))
        beams.append(run.baseband)
        group_rates.append(float(np.log2(1.0 + run.sinrs.min())))
    shares, _ = time_allocation(group_rates)
    report = rates_mod.rate_ws(layouts, beams, shares, users, geo, rf)
    return PddResult("ws", layouts, beams, None, shares, report,
                     [row for run in runs for row in run.trace],
                     max(r.outer_iterations for r in runs),
                     sum(r.inner_iterations for r in runs),
                     all(r.converged for r in runs), runs)
