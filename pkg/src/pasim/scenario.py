"""Physical constants, geometry, and user placement for pinching-antenna scenarios.

All internal quantities are SI (meters, watts, Hz).  Powers given in dBm are
converted at the configuration boundary and never used internally.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field

import numpy as np

SPEED_OF_LIGHT = 2.99792458e8  # m/s


def dbm_to_watts(p_dbm: float) -> float:
    """Convert a power level in dBm to watts."""
    return 10.0 ** ((p_dbm - 30.0) / 10.0)


def watts_to_dbm(p_w: float) -> float:
    """Convert a power level in watts to dBm."""
    return 10.0 * np.log10(p_w) + 30.0


@dataclass(frozen=True)
class RfConfig:
    """Carrier, waveguide dispersion, and power budget.

    The free-space wavelength, guided wavelength, and reference gain are pure
    functions of the inputs and exposed as properties so they can never drift
    out of sync with the carrier frequency.
    """

    carrier_frequency_hz: float
    effective_refractive_index: float
    noise_power_w: float
    max_transmit_power_w: float

    def __post_init__(self):
        if not self.carrier_frequency_hz > 0:
            raise ValueError("carrier frequency must be positive")
        if self.effective_refractive_index < 1.0:
            raise ValueError("effective refractive index must be >= 1")
        if not self.noise_power_w > 0:
            raise ValueError("noise power must be positive")
        if not self.max_transmit_power_w > 0:
            raise ValueError("max transmit power must be positive")

    @property
    def wavelength_m(self) -> float:
        return SPEED_OF_LIGHT / self.carrier_frequency_hz

    @property
    def guided_wavelength_m(self) -> float:
        # in-waveguide wavelength: free-space wavelength over refractive index
        return self.wavelength_m / self.effective_refractive_index

    @property
    def reference_gain(self) -> float:
        # free-space amplitude gain at 1 m
        return self.wavelength_m / (4.0 * np.pi)


@dataclass(frozen=True)
class Geometry:
    """Waveguide deployment geometry."""

    num_waveguides: int
    antennas_per_waveguide: int
    waveguide_length_m: float
    height_m: float
    waveguide_y_coords_m: tuple
    min_antenna_spacing_m: float

    def __post_init__(self):
        if self.num_waveguides < 1 or self.antennas_per_waveguide < 1:
            raise ValueError("need at least one waveguide and one antenna per waveguide")
        if len(self.waveguide_y_coords_m) != self.num_waveguides:
            raise ValueError("waveguide y coordinates must have one entry per waveguide")
        if not self.height_m > 0:
            raise ValueError("deployment height must be positive")
        span = (self.antennas_per_waveguide - 1) * self.min_antenna_spacing_m
        if not self.waveguide_length_m > span:
            raise ValueError(
                f"waveguide length {self.waveguide_length_m} m cannot hold "
                f"{self.antennas_per_waveguide} antennas at spacing "
                f"{self.min_antenna_spacing_m} m"
            )

    @property
    def total_antennas(self) -> int:
        return self.num_waveguides * self.antennas_per_waveguide


@dataclass(frozen=True)
class PlacementRegions:
    """Axis-aligned user placement rectangles, one per group.

    ``rects`` holds (x_lo, x_hi, y_lo, y_hi) tuples in meters.
    """

    rects: tuple

    def __post_init__(self):
        for x_lo, x_hi, y_lo, y_hi in self.rects:
            if not (x_hi > x_lo and y_hi > y_lo):
                raise ValueError("placement rectangles must have positive area")


@dataclass(frozen=True)
class UserLayout:
    """User positions on the ground plane, indexed (group, user-in-group)."""

    positions: np.ndarray  # (K_groups, G, 3), z == 0

    @property
    def group_count(self) -> int:
        return self.positions.shape[0]

    @property
    def users_per_group(self) -> int:
        return self.positions.shape[1]


@dataclass(frozen=True)
class Scenario:
    """Immutable bundle of everything a solver needs except the user draw."""

    rf: RfConfig
    geometry: Geometry
    regions: PlacementRegions
    users_per_group: int

    @property
    def group_count(self) -> int:
        return self.geometry.num_waveguides


# §V-A style defaults; every entry can be overridden through the config file.
DEFAULT_CONFIG = {
    "f_c_ghz": 28.0,
    "n_eff": 1.4,
    "k_waveguides": 2,
    "n_pas": 8,
    "l_m": 10.0,
    "d_m": 3.0,
    "delta_over_lambda": 0.5,
    "w_m": 5.0,
    "s_x_m": 6.0,
    "s_y_m": 5.0,
    "p_max_dbm_list": [0.0, 5.0, 10.0, 15.0, 20.0],
    "noise_dbm": -90.0,
    "g_users": 2,
    "seeds": 50,
}


def load_config(path=None) -> dict:
    """Read a JSON config file and fill unspecified keys with defaults."""
    cfg = dict(DEFAULT_CONFIG)
    if path is not None:
        with open(path) as fh:
            user_cfg = json.load(fh)
        unknown = set(user_cfg) - set(DEFAULT_CONFIG)
        if unknown:
            raise ValueError(f"unknown config keys: {sorted(unknown)}")
        cfg.update(user_cfg)
    return cfg


def build_scenario(config: dict = None, *, p_max_dbm: float = None,
                   n_pas: int = None, w_m: float = None, s_x_m: float = None,
                   g_users: int = None) -> Scenario:
    """Build a validated scenario from a config dict plus sweep overrides.

    Keyword overrides exist so experiment sweeps can vary one axis without
    mutating the shared config dict.
    """
    cfg = dict(DEFAULT_CONFIG if config is None else config)
    if p_max_dbm is not None:
        cfg["p_max_dbm_list"] = [p_max_dbm]
    if n_pas is not None:
        cfg["n_pas"] = n_pas
    if w_m is not None:
        cfg["w_m"] = w_m
    if s_x_m is not None:
        cfg["s_x_m"] = s_x_m
    if g_users is not None:
        cfg["g_users"] = g_users

    rf = RfConfig(
        carrier_frequency_hz=cfg["f_c_ghz"] * 1e9,
        effective_refractive_index=cfg["n_eff"],
        noise_power_w=dbm_to_watts(cfg["noise_dbm"]),
        max_transmit_power_w=dbm_to_watts(cfg["p_max_dbm_list"][0]),
    )
    k = int(cfg["k_waveguides"])
    w = float(cfg["w_m"])
    # waveguides parallel to the x-axis, centered around y = 0 at spacing w
    y_coords = tuple((i - (k - 1) / 2.0) * w for i in range(k))
    geometry = Geometry(
        num_waveguides=k,
        antennas_per_waveguide=int(cfg["n_pas"]),
        waveguide_length_m=float(cfg["l_m"]),
        height_m=float(cfg["d_m"]),
        waveguide_y_coords_m=y_coords,
        min_antenna_spacing_m=cfg["delta_over_lambda"] * rf.wavelength_m,
    )
    regions = make_regions(geometry, s_x_m=float(cfg["s_x_m"]), s_y_m=float(cfg["s_y_m"]))
    return Scenario(rf=rf, geometry=geometry, regions=regions,
                    users_per_group=int(cfg["g_users"]))


def make_regions(geometry: Geometry, s_x_m: float, s_y_m: float) -> PlacementRegions:
    """One rectangle per waveguide: an x-band centered mid-deployment and a
    y-band of width ``s_y_m`` centered on the waveguide."""
    if not (s_x_m > 0 and s_y_m > 0):
        raise ValueError("region extents must be positive")
    cx = geometry.waveguide_length_m / 2.0
    rects = tuple(
        (cx - s_x_m / 2.0, cx + s_x_m / 2.0, y - s_y_m / 2.0, y + s_y_m / 2.0)
        for y in geometry.waveguide_y_coords_m
    )
    return PlacementRegions(rects=rects)


def sample_users(regions: PlacementRegions, users_per_group: int,
                 rng_seed: int) -> UserLayout:
    """Draw users independently and uniformly inside their group rectangle.

    Deterministic for a given seed; group k draws from rectangle k.
    """
    rng = np.random.default_rng(rng_seed)
    k = len(regions.rects)
    positions = np.zeros((k, users_per_group, 3))
    for gi, (x_lo, x_hi, y_lo, y_hi) in enumerate(regions.rects):
        positions[gi, :, 0] = rng.uniform(x_lo, x_hi, size=users_per_group)
        positions[gi, :, 1] = rng.uniform(y_lo, y_hi, size=users_per_group)
    return UserLayout(positions=positions)
