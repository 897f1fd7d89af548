"""Low-complexity switching pipeline for unicast users.

Serving one user per slot removes all interference, so the slot design
decouples: put the antennas where path loss is smallest, snap them onto the
phase-coherent grid so the per-waveguide signals add constructively, matched-
filter at baseband, and split time between users in closed form.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import channel as ch
from .convex import time_allocation
from .rates import RateReport, rate_ws
from .scenario import Geometry, RfConfig, Scenario, UserLayout


class PlacementError(RuntimeError):
    """No phase-aligned position exists inside the waveguide."""


@dataclass
class PlacementResult:
    """Per-user antenna placement with its alignment diagnostics."""

    layout: ch.PinchingLayout
    phase_residual_rad: float    # max wrapped deviation from the reference antenna
    pathloss_objective: float    # sum of reciprocal distances


def wrap_phase(phi: np.ndarray) -> np.ndarray:
    """Wrap to (-pi, pi]."""
    return -(np.mod(-np.asarray(phi) + np.pi, 2.0 * np.pi) - np.pi)


def mrt_beamformer(eff_row: np.ndarray, p_max: float) -> np.ndarray:
    """Full-power matched filter: conjugate direction scaled to the budget."""
    eff_row = np.asarray(eff_row, dtype=complex).reshape(-1)
    norm = np.linalg.norm(eff_row)
    if norm == 0.0:
        raise ValueError("matched filtering is undefined for a zero channel")
    return np.sqrt(p_max) * np.conj(eff_row) / norm


def _phase_1d(x: float, x_u: float, dsq: float, rf: RfConfig) -> float:
    r = np.sqrt((x_u - x) ** 2 + dsq)
    return (2.0 * np.pi / rf.wavelength_m) * r \
        + (2.0 * np.pi / rf.guided_wavelength_m) * x


def _phase_slope(x: float, x_u: float, dsq: float, rf: RfConfig) -> float:
    r = np.sqrt((x_u - x) ** 2 + dsq)
    return (2.0 * np.pi / rf.wavelength_m) * (x - x_u) / r \
        + 2.0 * np.pi / rf.guided_wavelength_m


def _solve_phase(target: float, x_init: float, x_u: float, dsq: float,
                 rf: RfConfig, tol: float = 1e-9) -> float:
    """Solve phase(x) = target for the monotone total phase.

    The slope is at least 2*pi*(n_eff - 1)/lambda > 0, so a bracketing
    expansion around the initial guess followed by safeguarded Newton steps
    always converges.
    """
    lo = hi = float(x_init)
    step = rf.guided_wavelength_m
    f_init = _phase_1d(x_init, x_u, dsq, rf) - target
    if f_init > 0:
        for _ in range(200):
            lo -= step
            if _phase_1d(lo, x_u, dsq, rf) - target <= 0:
                break
            step *= 2.0
        else:
            raise PlacementError("no bracketing interval for the phase target")
    else:
        for _ in range(200):
            hi += step
            if _phase_1d(hi, x_u, dsq, rf) - target >= 0:
                break
            step *= 2.0
        else:
            raise PlacementError("no bracketing interval for the phase target")

    x = min(max(x_init, lo), hi)
    for _ in range(200):
        f = _phase_1d(x, x_u, dsq, rf) - target
        if abs(f) <= tol:
            return x
        if f > 0:
            hi = x
        else:
            lo = x
        slope = _phase_slope(x, x_u, dsq, rf)
        x_newton = x - f / slope if slope > 0 else None
        x = x_newton if x_newton is not None and lo < x_newton < hi \
            else 0.5 * (lo + hi)
    return x


def _align_row(x_row: np.ndarray, x_u: float, dsq: float, geometry: Geometry,
               rf: RfConfig) -> np.ndarray:
    """Stage-2 refinement of one waveguide: shift every antenna to the nearest
    position whose total phase matches the reference antenna modulo 2*pi,
    resolving spacing conflicts outward from the reference."""
    n = x_row.shape[0]
    if n == 1:
        return x_row.copy()
    ref = int(np.argmin(np.abs(x_row - np.median(x_row))))
    phi_ref = _phase_1d(x_row[ref], x_u, dsq, rf)
    two_pi = 2.0 * np.pi
    spacing = geometry.min_antenna_spacing_m
    out = x_row.copy()

    def aligned(x_guess, wind):
        # nearest phase-coherent position at winding number `wind`
        return _solve_phase(phi_ref + two_pi * wind, x_guess, x_u, dsq, rf)

    # walk right of the reference, keeping each antenna at least one spacing
    # beyond its left neighbor
    for idx in range(ref + 1, n):
        lower = out[idx - 1] + spacing
        wind = round((_phase_1d(out[idx], x_u, dsq, rf) - phi_ref) / two_pi)
        x_new = aligned(out[idx], wind)
        for _ in range(10_000):
            if x_new >= lower - 1e-12:
                break
            wind += 1
            x_new = aligned(max(x_new, lower), wind)
        else:
            raise PlacementError("could not clear the spacing conflict")
        if x_new > geometry.waveguide_length_m + 1e-12:
            raise PlacementError("phase-aligned position beyond the waveguide end")
        out[idx] = x_new
    # then left of the reference
    for idx in range(ref - 1, -1, -1):
        upper = out[idx + 1] - spacing
        wind = round((_phase_1d(out[idx], x_u, dsq, rf) - phi_ref) / two_pi)
        x_new = aligned(out[idx], wind)
        for _ in range(10_000):
            if x_new <= upper + 1e-12:
                break
            wind -= 1
            x_new = aligned(min(x_new, upper), wind)
        else:
            raise PlacementError("could not clear the spacing conflict")
        if x_new < -1e-12:
            raise PlacementError("phase-aligned position before the waveguide start")
        out[idx] = x_new
    return np.clip(out, 0.0, geometry.waveguide_length_m)


def two_stage_placement(user_pos: np.ndarray, geometry: Geometry,
                        rf: RfConfig) -> PlacementResult:
    """Per-user antenna placement.

    Stage 1 centers a minimally-spaced block on the user's x-coordinate
    (clamped so the block fits), which minimizes the summed path loss to
    first order.  Stage 2 nudges every antenna onto the nearest position
    whose phase agrees with the block's reference antenna modulo 2*pi, so
    the per-waveguide contributions combine coherently.
    """
    n = geometry.antennas_per_waveguide
    length = geometry.waveguide_length_m
    spacing = geometry.min_antenna_spacing_m
    half_span = (n - 1) * spacing / 2.0
    x_u, y_u = float(user_pos[0]), float(user_pos[1])

    x = np.zeros((geometry.num_waveguides, n))
    for i, y_wg in enumerate(geometry.waveguide_y_coords_m):
        center = min(max(x_u, half_span), length - half_span)
        row = center + spacing * (np.arange(n) - (n - 1) / 2.0)
        dsq = (y_u - y_wg) ** 2 + geometry.height_m ** 2
        x[i] = _align_row(row, x_u, dsq, geometry, rf)

    layout = ch.PinchingLayout(x_positions_m=x)
    layout.validate(geometry)
    phi = ch.phase_matrix(user_pos, layout, geometry, rf)
    resid = 0.0
    for i in range(geometry.num_waveguides):
        ref = phi[i, int(np.argmin(np.abs(x[i] - np.median(x[i]))))] if n > 1 else phi[i, 0]
        resid = max(resid, float(np.abs(wrap_phase(phi[i] - ref)).max()))
    r = ch.user_distances(user_pos, layout, geometry)
    return PlacementResult(layout=layout, phase_residual_rad=resid,
                           pathloss_objective=float((1.0 / r).sum()))


@dataclass
class UnicastWsResult:
    layouts: list
    beamformers: list
    time_shares: np.ndarray
    report: RateReport
    placements: list


def solve_unicast_ws(scenario: Scenario, users: UserLayout) -> UnicastWsResult:
    """Placement, matched filtering, and time allocation for unicast users."""
    if users.users_per_group != 1:
        raise ValueError("the low-complexity pipeline serves one user per group")
    geo, rf = scenario.geometry, scenario.rf
    p_max = rf.max_transmit_power_w

    placements, layouts, beams, group_rates = [], [], [], []
    for k in range(users.group_count):
        pos = users.positions[k, 0]
        placement = two_stage_placement(pos, geo, rf)
        eff = ch.effective_channel(pos, placement.layout, geo, rf)
        w = mrt_beamformer(eff, p_max)
        snr = np.abs(eff @ w) ** 2 / rf.noise_power_w
        placements.append(placement)
        layouts.append(placement.layout)
        beams.append(w)
        group_rates.append(float(np.log2(1.0 + snr)))
    shares, _ = time_allocation(group_rates)
    report = rate_ws(layouts, beams, shares, users, geo, rf)
    return UnicastWsResult(layouts=layouts, beamformers=beams,
                           time_shares=shares, report=report,
                           placements=placements)
