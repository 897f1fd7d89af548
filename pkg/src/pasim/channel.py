"""In-waveguide responses, free-space channels, and end-to-end effective channels.

Conventions used across the toolkit:

* Antenna ``(i, n)`` is the n-th pinching antenna on waveguide ``i``; flat
  antenna indices run waveguide-major, i.e. ``m = i * N + n``.
* The per-antenna power split ``1/sqrt(N)`` lives in the waveguide response
  and nowhere else, so rate expressions divide by the plain noise power.
* Phases are never wrapped; wrapping happens only inside alignment checks.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .scenario import Geometry, RfConfig


@dataclass(frozen=True)
class PinchingLayout:
    """Antenna x-positions, one ascending row per waveguide."""

    x_positions_m: np.ndarray  # (K, N)

    @property
    def num_waveguides(self) -> int:
        return self.x_positions_m.shape[0]

    @property
    def antennas_per_waveguide(self) -> int:
        return self.x_positions_m.shape[1]

    def validate(self, geometry: Geometry, tol: float = 1e-9) -> None:
        """Raise if any position leaves the waveguide or violates spacing."""
        x = self.x_positions_m
        if x.shape != (geometry.num_waveguides, geometry.antennas_per_waveguide):
            raise ValueError("layout shape does not match geometry")
        if np.any(x < -tol) or np.any(x > geometry.waveguide_length_m + tol):
            raise ValueError("antenna position outside the waveguide")
        if x.shape[1] > 1:
            gaps = np.diff(x, axis=1)
            if np.any(gaps < geometry.min_antenna_spacing_m - tol):
                raise ValueError("antenna spacing below the minimum")


def uniform_layout(geometry: Geometry) -> PinchingLayout:
    """Deterministic feasible layout: equispaced antennas centered on the
    waveguide, at the larger of the minimum spacing and L/N."""
    n = geometry.antennas_per_waveguide
    spacing = max(geometry.min_antenna_spacing_m, geometry.waveguide_length_m / n)
    span = (n - 1) * spacing
    start = (geometry.waveguide_length_m - span) / 2.0
    row = start + spacing * np.arange(n)
    x = np.tile(row, (geometry.num_waveguides, 1))
    return PinchingLayout(x_positions_m=x)


def waveguide_response(x_row: np.ndarray, rf: RfConfig, length_m: float = None):
    """Feed-point to antenna response along one waveguide.

    Entry n is ``exp(-j*2*pi*x_n/lambda_g) / sqrt(N)``; every entry has
    magnitude ``1/sqrt(N)`` because each antenna radiates an equal share of
    the waveguide's power.
    """
    x_row = np.asarray(x_row, dtype=float)
    if length_m is not None and (np.any(x_row < 0) or np.any(x_row > length_m)):
        raise ValueError("antenna position outside the waveguide")
    n = x_row.shape[-1]
    phase = 2.0 * np.pi * x_row / rf.guided_wavelength_m
    return np.exp(-1j * phase) / np.sqrt(n)


def stacked_response(layout: PinchingLayout, rf: RfConfig) -> np.ndarray:
    """Block-diagonal (M, K) response over all waveguides; column k carries
    waveguide k's response and is zero elsewhere."""
    k, n = layout.x_positions_m.shape
    g = np.zeros((k * n, k), dtype=complex)
    for i in range(k):
        g[i * n:(i + 1) * n, i] = waveguide_response(layout.x_positions_m[i], rf)
    return g


def user_distances(user_pos: np.ndarray, layout: PinchingLayout,
                   geometry: Geometry) -> np.ndarray:
    """(K, N) Euclidean distances from every antenna to one user."""
    x_u, y_u = user_pos[0], user_pos[1]
    dy = y_u - np.asarray(geometry.waveguide_y_coords_m)  # (K,)
    dx = x_u - layout.x_positions_m                       # (K, N)
    return np.sqrt(dx ** 2 + dy[:, None] ** 2 + geometry.height_m ** 2)


def antenna_user_distance(user_pos: np.ndarray, layout: PinchingLayout,
                          geometry: Geometry, i: int, n: int) -> float:
    """Distance from antenna (i, n) to the user."""
    return float(user_distances(user_pos, layout, geometry)[i, n])


def user_channel(user_pos: np.ndarray, layout: PinchingLayout,
                 geometry: Geometry, rf: RfConfig) -> np.ndarray:
    """Free-space LoS channel row from all M antennas to one user.

    Entry (i, n) is ``eta * exp(-j*2*pi*r/lambda) / r``, flattened
    waveguide-major to match :func:`stacked_response`.
    """
    r = user_distances(user_pos, layout, geometry)
    h = rf.reference_gain * np.exp(-1j * 2.0 * np.pi * r / rf.wavelength_m) / r
    return h.reshape(-1)


def phase_matrix(user_pos: np.ndarray, layout: PinchingLayout,
                 geometry: Geometry, rf: RfConfig) -> np.ndarray:
    """(K, N) total phases: free-space propagation plus in-waveguide travel."""
    r = user_distances(user_pos, layout, geometry)
    return (2.0 * np.pi / rf.wavelength_m) * r \
        + (2.0 * np.pi / rf.guided_wavelength_m) * layout.x_positions_m


def phase_phi(user_pos: np.ndarray, layout: PinchingLayout,
              geometry: Geometry, rf: RfConfig, i: int, n: int) -> float:
    """Total (unwrapped) phase seen at the user from antenna (i, n)."""
    return float(phase_matrix(user_pos, layout, geometry, rf)[i, n])


def effective_channel(user_pos: np.ndarray, layout: PinchingLayout,
                      geometry: Geometry, rf: RfConfig) -> np.ndarray:
    """Per-waveguide end-to-end channel row of length K.

    Equals ``user_channel @ stacked_response``; entry i collapses waveguide
    i's antennas into ``sum_n eta * exp(-j*phi) / (sqrt(N) * r)``.
    """
    return user_channel(user_pos, layout, geometry, rf) @ stacked_response(layout, rf)


def effective_channel_direct(user_pos: np.ndarray, layout: PinchingLayout,
                             geometry: Geometry, rf: RfConfig) -> np.ndarray:
    """Scalar double-sum form of :func:`effective_channel`, kept as an
    independent cross-check of the matrix form."""
    r = user_distances(user_pos, layout, geometry)
    phi = phase_matrix(user_pos, layout, geometry, rf)
    n = layout.antennas_per_waveguide
    terms = rf.reference_gain * np.exp(-1j * phi) / (np.sqrt(n) * r)
    return terms.sum(axis=1)


def effective_channels(users, layout: PinchingLayout, geometry: Geometry,
                       rf: RfConfig) -> np.ndarray:
    """Stack effective channels for a (K_groups, G, 3) user array into a
    (K_groups, G, K) complex array."""
    pos = users.positions
    out = np.zeros(pos.shape[:2] + (layout.num_waveguides,), dtype=complex)
    for k in range(pos.shape[0]):
        for g in range(pos.shape[1]):
            out[k, g] = effective_channel(pos[k, g], layout, geometry, rf)
    return out
