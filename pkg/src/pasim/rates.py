"""Achievable rates and the min-rate objective for the three transmission modes.

``wm``  multiplexing: every stream uses all waveguides through a digital
        beamformer, users see inter-group interference.
``wd``  division: stream k rides waveguide k alone, baseband reduces to a
        power split.
``ws``  switching: groups are served in time slots with per-slot layouts and
        beamformers, no inter-group interference.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .channel import PinchingLayout, effective_channels
from .scenario import Geometry, RfConfig, UserLayout


@dataclass(frozen=True)
class RateReport:
    """Per-user rates/SINRs plus the max-min objective value."""

    rates: np.ndarray          # (K_groups, G) bps/Hz
    sinrs: np.ndarray          # (K_groups, G)
    min_rate: float
    interference: np.ndarray = None  # (K_groups, G) watts, where applicable


def min_rate(report: RateReport) -> float:
    """Minimum rate across all users."""
    return float(np.min(report.rates))


def _report(rates: np.ndarray, sinrs: np.ndarray, interference=None) -> RateReport:
    return RateReport(rates=rates, sinrs=sinrs, min_rate=float(np.min(rates)),
                      interference=interference)


def sinr_wm(eff: np.ndarray, beamformers: np.ndarray, noise_power_w: float):
    """SINRs and interference powers from effective channels.

    ``eff`` is (K_groups, G, K) and ``beamformers`` is (K, K) with column k
    serving group k.  Works for any effective-channel source (pinching layout
    or fixed array), which lets the baselines share this code path.
    """
    # received amplitude of every stream at every user: (K_groups, G, K)
    amps = eff @ beamformers
    powers = np.abs(amps) ** 2
    k_groups = eff.shape[0]
    desired = powers[np.arange(k_groups), :, np.arange(k_groups)]  # (K_groups, G)
    interference = powers.sum(axis=2) - desired
    sinr = desired / (interference + noise_power_w)
    return sinr, interference


def rate_wm(layout: PinchingLayout, beamformers: np.ndarray, users: UserLayout,
            geometry: Geometry, rf: RfConfig) -> RateReport:
    """Multiplexing rates: log2(1 + desired / (inter-group interference + noise))."""
    eff = effective_channels(users, layout, geometry, rf)
    sinr, interference = sinr_wm(eff, beamformers, rf.noise_power_w)
    return _report(np.log2(1.0 + sinr), sinr, interference)


def rate_wd(layout: PinchingLayout, power_allocation: np.ndarray,
            users: UserLayout, geometry: Geometry, rf: RfConfig) -> RateReport:
    """Division rates: stream k radiates only from waveguide k with power p_k.

    Identical to :func:`rate_wm` with the diagonal beamformer
    ``w_k = sqrt(p_k) * e_k``.
    """
    p = np.asarray(power_allocation, dtype=float)
    if np.any(p < 0):
        raise ValueError("power allocation must be nonnegative")
    return rate_wm(layout, np.diag(np.sqrt(p)).astype(complex), users, geometry, rf)


def rate_ws(layouts, beamformers, time_shares, users: UserLayout,
            geometry: Geometry, rf: RfConfig) -> RateReport:
    """Switching rates: group k gets an interference-free slot of length
    ``time_shares[k]`` with its own layout and beamformer."""
    shares = np.asarray(time_shares, dtype=float)
    k_groups, g = users.positions.shape[:2]
    sinr = np.zeros((k_groups, g))
    for k in range(k_groups):
        eff = effective_channels(users, layouts[k], geometry, rf)  # (K_groups, G, K)
        amps = eff[k] @ np.asarray(beamformers[k]).reshape(-1)     # (G,)
        sinr[k] = np.abs(amps) ** 2 / rf.noise_power_w
    rates = shares[:, None] * np.log2(1.0 + sinr)
    return _report(rates, sinr)
