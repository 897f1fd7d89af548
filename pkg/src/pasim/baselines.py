"""Fixed-position MIMO baselines: fully-digital and sub-connected hybrid arrays.

Both use the same free-space LoS physics as the pinching channel, with antenna
positions frozen on a half-wavelength uniform linear array.  The max-min
beamforming reuses the quadratic-transform machinery from the penalty-dual
solver, just without the position/auxiliary blocks.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .convex import maxmin_quadratics_ball, require_converged
from .pdd import (beamforming_quadratics, mu_optimal, pack_beamformers,
                  sinr_values, stream_amplitudes, unpack_beamformers)
from .scenario import Geometry, RfConfig, UserLayout


@dataclass(frozen=True)
class UlaGeometry:
    """Uniform linear array along the x-axis."""

    center: tuple            # (x, y, z) of the array centroid, meters
    element_spacing_m: float
    element_count: int

    def positions(self) -> np.ndarray:
        m = self.element_count
        x = self.center[0] + self.element_spacing_m * (np.arange(m) - (m - 1) / 2.0)
        pos = np.tile(np.asarray(self.center, dtype=float), (m, 1))
        pos[:, 0] = x
        return pos


def default_ula(geometry: Geometry, rf: RfConfig, element_count: int) -> UlaGeometry:
    """Array centered over the deployment area at waveguide height."""
    return UlaGeometry(center=(geometry.waveguide_length_m / 2.0, 0.0,
                               geometry.height_m),
                       element_spacing_m=rf.wavelength_m / 2.0,
                       element_count=element_count)


def ula_channel(user_pos: np.ndarray, ula: UlaGeometry, rf: RfConfig) -> np.ndarray:
    """Free-space LoS channel row from the array to one user."""
    delta = ula.positions() - np.asarray(user_pos, dtype=float)
    r = np.linalg.norm(delta, axis=1)
    return rf.reference_gain * np.exp(-1j * 2.0 * np.pi * r / rf.wavelength_m) / r


def _user_channels(users: UserLayout, ula: UlaGeometry, rf: RfConfig):
    k_groups, g = users.positions.shape[:2]
    eff = np.zeros((k_groups * g, ula.element_count), dtype=complex)
    for k in range(k_groups):
        for gi in range(g):
            eff[k * g + gi] = ula_channel(users.positions[k, gi], ula, rf)
    stream_of = np.repeat(np.arange(k_groups), g)
    return eff, stream_of


def maxmin_beamforming(eff: np.ndarray, stream_of: np.ndarray, noise_power: float,
                       p_max: float, num_streams: int, eps_objective: float = 1e-3,
                       max_iter: int = 300):
    """Alternate closed-form multipliers with the epigraph kernel until the
    min-SINR stalls.  ``eff`` holds one channel row per user; channels are
    noise-normalized internally for kernel conditioning only."""
    sigma = np.sqrt(noise_power)
    effn = np.asarray(eff, dtype=complex) / sigma
    j_users, a = effn.shape

    w = np.zeros((a, num_streams), dtype=complex)
    for st in range(num_streams):
        direction = np.conj(effn[stream_of == st].mean(axis=0))
        w[:, st] = direction / np.linalg.norm(direction)
    w *= np.sqrt(p_max / num_streams)

    prev = None
    for _ in range(max_iter):
        amps = stream_amplitudes(effn, w)
        mu = mu_optimal(amps, stream_of, 1.0)
        quads = beamforming_quadratics(effn, mu, stream_of, 1.0, num_streams)
        report = require_converged(
            maxmin_quadratics_ball(quads, p_max, z0=pack_beamformers(w)))
        w = unpack_beamformers(report.optimizer, num_streams)

        obj = float(sinr_values(stream_amplitudes(effn, w), stream_of, 1.0).min())
        if prev is not None and abs(obj - prev) <= eps_objective * max(abs(prev), 1e-8):
            break
        prev = obj

    sinr = sinr_values(stream_amplitudes(effn, w), stream_of, 1.0)
    return w, sinr


def fulldigital_mmf(users: UserLayout, ula: UlaGeometry, p_max: float,
                    rf: RfConfig):
    """Max-min beamforming on a fully-digital array (one RF chain per element).

    Handles unicast and multicast alike; a group's users simply share a
    stream.  Returns the beamformer matrix and the achieved min rate."""
    eff, stream_of = _user_channels(users, ula, rf)
    num_streams = users.positions.shape[0]
    w, sinr = maxmin_beamforming(eff, stream_of, rf.noise_power_w, p_max,
                                 num_streams)
    min_rate = float(np.log2(1.0 + sinr).min())
    return w, min_rate


def _phase_only_rank1(block: np.ndarray, iters: int = 20):
    """min ||block - v d^T||_F with |v_i| = 1: alternating phase extraction
    and least squares, seeded by the dominant singular pair."""
    n = block.shape[0]
    u_sv, s_sv, vh = np.linalg.svd(block, full_matrices=False)
    d = s_sv[0] * np.conj(vh[0]) / np.sqrt(n)
    v = np.exp(1j * np.angle(u_sv[:, 0])) if s_sv[0] > 0 else np.ones(n, dtype=complex)
    for _ in range(iters):
        v = np.exp(1j * np.angle(block @ np.conj(d)))
        d = (np.conj(v) @ block) / n
    return v, d


def hybrid_mmf(users: UserLayout, ula: UlaGeometry, p_max: float, rf: RfConfig,
               rf_chains: int):
    """Sub-connected hybrid beamforming toward the fully-digital solution.

    Unit-modulus analog blocks are fitted to the fully-digital max-min
    beamformer (phase extraction against a per-block rank-one least-squares
    digital seed); the digital stage is then re-optimized with the same
    max-min kernel on the channel seen through the analog stage, which
    restores the interference handling a plain Frobenius fit gives up.
    ``ula.element_count`` antennas split into ``rf_chains`` contiguous
    blocks, one phase-shifter bank per RF chain."""
    m = ula.element_count
    if m % rf_chains != 0:
        raise ValueError("antennas must split evenly across RF chains")
    n_block = m // rf_chains

    eff, stream_of = _user_channels(users, ula, rf)
    num_streams = users.positions.shape[0]
    target, _ = maxmin_beamforming(eff, stream_of, rf.noise_power_w, p_max,
                                   num_streams)

    w_rf = np.zeros((m, rf_chains), dtype=complex)
    w_d = np.zeros((rf_chains, num_streams), dtype=complex)
    for b in range(rf_chains):
        rows = slice(b * n_block, (b + 1) * n_block)
        v, d = _phase_only_rank1(target[rows])
        w_rf[rows, b] = v
        w_d[b] = d

    if n_block > 1:
        # alternate: re-fit the analog phases against the current digital
        # stage, then re-optimize the digital stage on the channel seen
        # through the analog one.  The sub-connected structure makes
        # ||W_RF w||^2 = n_block * ||w||^2, so the power ball shrinks by the
        # block size.
        best = None
        for _ in range(4):
            for b in range(rf_chains):
                rows = slice(b * n_block, (b + 1) * n_block)
                pivot = target[rows] @ np.conj(w_d[b])
                if np.any(pivot == 0):
                    continue
                w_rf[rows, b] = np.exp(1j * np.angle(pivot))
            eff_eq = eff @ w_rf
            w_d, sinr_d = maxmin_beamforming(eff_eq, stream_of, rf.noise_power_w,
                                             p_max / n_block, num_streams)
            score = float(sinr_d.min())
            if best is None or score > best[0]:
                best = (score, w_rf.copy(), w_d.copy())
        _, w_rf, w_d = best

    combined = w_rf @ w_d
    power = float(np.sum(np.abs(combined) ** 2))
    w_d *= np.sqrt(p_max / power)
    combined = w_rf @ w_d

    sinr = sinr_values(stream_amplitudes(eff, combined), stream_of,
                       rf.noise_power_w)
    min_rate = float(np.log2(1.0 + sinr).min())
    return w_rf, w_d, min_rate
