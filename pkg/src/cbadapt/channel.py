"""Seeded geometric multipath channels for a cross-polarized 2D port array.

Port flattening is polarization-major, then the vertical index ``p2``, then
the horizontal index ``p1``::

    port = pol * (n1 * n2) + p2 * n1 + p1

Every per-polarization vector of length ``n1 * n2`` (steering vectors, DFT
beams) uses the same ``p2 * n1 + p1`` ordering.

Channel model
-------------
Each realization is a sum of ``num_rays`` plane waves::

    h[r, port(p1, p2, pol), f, t] = sum_p g[p, pol, r] * a_p[p1, p2]
                                    * exp(-2j pi f rb_spacing tau_p)
                                    * exp(+2j pi t slot_duration nu_p)

Delays are exponential with mean ``delay_spread_s`` and Dopplers uniform in
``[-doppler_max_hz, doppler_max_hz]``. With a finite Rician factor K, ray 0
is the line-of-sight ray: zero delay, angle at the cluster centre, power
K/(K+1) and unit-modulus gains. The other rays share 1/(K+1) equally and
carry circular Gaussian gains drawn independently per (polarization, rx).
In ``rank1_gains`` mode the per-ray gains factor as ``a[p, r] * b[p, pol]``
so a single ray yields a rank-1 channel matrix. The tensor is finally scaled
so that its mean power is exactly one.
"""

import dataclasses
import math
from dataclasses import dataclass

import numpy as np

from .errors import ConfigError, NumericalError
from .seeding import make_rng

# angle draws for the cluster centre (radians)
_CENTER_AZIMUTH_HALF_RANGE = math.pi / 3
_CENTER_ZENITH_HALF_RANGE = math.pi / 18


@dataclass(frozen=True)
class ArrayGeometry:
    """Cross-polarized ``n1 x n2`` port array with ``P = 2 * n1 * n2`` ports."""

    n1: int = 4
    n2: int = 2
    d_h: float = 0.5
    d_v: float = 0.5
    num_pol: int = 2

    def __post_init__(self):
        if self.n1 < 1 or self.n2 < 1:
            raise ConfigError(f"port counts must be >= 1, got n1={self.n1}, n2={self.n2}")
        if not (self.d_h > 0 and self.d_v > 0):
            raise ConfigError("port spacings must be positive")
        if self.num_pol != 2:
            raise ConfigError("only dual-polarized arrays are supported (num_pol=2)")

    @property
    def ports_per_pol(self) -> int:
        return self.n1 * self.n2

    @property
    def num_ports(self) -> int:
        return 2 * self.n1 * self.n2


@dataclass(frozen=True)
class ScenarioConfig:
    num_rays: int = 12
    rician_k_db: float = -math.inf
    delay_spread_s: float = 200e-9
    azimuth_spread_deg: float = 10.0
    zenith_spread_deg: float = 5.0
    doppler_max_hz: float = 20.0
    num_rx: int = 2
    rb_spacing_hz: float = 360e3
    slot_duration_s: float = 0.5e-3
    num_rb: int = 24
    num_slot: int = 8
    rank1_gains: bool = False

    def __post_init__(self):
        if self.num_rays < 1:
            raise ConfigError("num_rays must be >= 1")
        if self.num_rx < 1 or self.num_rb < 1 or self.num_slot < 1:
            raise ConfigError("num_rx, num_rb and num_slot must be >= 1")
        spreads = (self.delay_spread_s, self.azimuth_spread_deg,
                   self.zenith_spread_deg, self.doppler_max_hz)
        if any(not (s >= 0) or math.isinf(s) for s in spreads):
            raise ConfigError("spreads and doppler_max_hz must be finite and >= 0")
        if not (self.rb_spacing_hz > 0 and self.slot_duration_s > 0):
            raise ConfigError("rb_spacing_hz and slot_duration_s must be positive")
        if math.isnan(self.rician_k_db) or self.rician_k_db == math.inf:
            raise ConfigError("rician_k_db must be finite or -inf")

    @property
    def has_los(self) -> bool:
        return self.rician_k_db != -math.inf

    def replace(self, **changes) -> "ScenarioConfig":
        return dataclasses.replace(self, **changes)


@dataclass(frozen=True, eq=False)
class ChannelRealization:
    """Channel tensor of shape ``(num_rx, P, num_rb, num_slot)``."""

    samples: np.ndarray
    geometry: ArrayGeometry
    scenario: ScenarioConfig
    seed: int

    def __post_init__(self):
        self.samples.setflags(write=False)

    @property
    def num_slot(self) -> int:
        return self.samples.shape[-1]

    def port_grid(self) -> np.ndarray:
        """View of the samples as ``(num_rx, pol, n2, n1, num_rb, num_slot)``."""
        g = self.geometry
        r, _, f, t = self.samples.shape
        return self.samples.reshape(r, 2, g.n2, g.n1, f, t)


def steering_vector(geometry: ArrayGeometry, azimuth_rad: float, zenith_rad: float) -> np.ndarray:
    """Unit-modulus plane-wave response of one polarization group.

    Entry ``p2 * n1 + p1`` is
    ``exp(2j pi (d_h p1 sin(zenith) sin(azimuth) + d_v p2 cos(zenith)))``.
    """
    p1 = np.arange(geometry.n1)
    p2 = np.arange(geometry.n2)
    u = geometry.d_h * np.sin(zenith_rad) * np.sin(azimuth_rad)
    v = geometry.d_v * np.cos(zenith_rad)
    phase = v * p2[:, None] + u * p1[None, :]
    return np.exp(2j * np.pi * phase).reshape(-1)


def _steering_matrix(geometry, azimuth, zenith):
    # (rays, n1*n2)
    p1 = np.arange(geometry.n1)
    p2 = np.arange(geometry.n2)
    u = geometry.d_h * np.sin(zenith) * np.sin(azimuth)
    v = geometry.d_v * np.cos(zenith)
    phase = v[:, None, None] * p2[None, :, None] + u[:, None, None] * p1[None, None, :]
    return np.exp(2j * np.pi * phase).reshape(len(azimuth), -1)


def _crandn(rng, shape):
    return (rng.standard_normal(shape) + 1j * rng.standard_normal(shape)) / math.sqrt(2.0)


def generate_channel(geometry: ArrayGeometry, scenario: ScenarioConfig, seed: int) -> ChannelRealization:
    """Draw one channel realization; bit-identical for equal arguments."""
    rng = make_rng(seed, "channel")
    sc = scenario
    num_rays = sc.num_rays
    num_rx = sc.num_rx

    # the draw order below is part of the determinism contract
    az_center = rng.uniform(-_CENTER_AZIMUTH_HALF_RANGE, _CENTER_AZIMUTH_HALF_RANGE)
    zen_center = math.pi / 2 + rng.uniform(-_CENTER_ZENITH_HALF_RANGE, _CENTER_ZENITH_HALF_RANGE)
    azimuth = az_center + np.deg2rad(sc.azimuth_spread_deg) * rng.standard_normal(num_rays)
    zenith = zen_center + np.deg2rad(sc.zenith_spread_deg) * rng.standard_normal(num_rays)
    zenith = np.clip(zenith, 1e-3, math.pi - 1e-3)
    delays = rng.exponential(1.0, num_rays) * sc.delay_spread_s
    dopplers = rng.uniform(-sc.doppler_max_hz, sc.doppler_max_hz, num_rays)
    los_doppler = sc.doppler_max_hz * math.cos(rng.uniform(0.0, 2 * math.pi))
    if sc.rank1_gains:
        rx_part = _crandn(rng, (num_rays, 1, num_rx))
        pol_part = _crandn(rng, (num_rays, 2, 1))
        gains = rx_part * pol_part
    else:
        gains = _crandn(rng, (num_rays, 2, num_rx))
    los_phase = rng.uniform(0.0, 2 * math.pi, (2, num_rx))

    powers = np.full(num_rays, 1.0 / num_rays)
    if sc.has_los:
        k_lin = 10.0 ** (sc.rician_k_db / 10.0)
        powers[0] = k_lin / (k_lin + 1.0)
        if num_rays > 1:
            powers[1:] = 1.0 / (k_lin + 1.0) / (num_rays - 1)
        azimuth[0] = az_center
        zenith[0] = zen_center
        delays[0] = 0.0
        dopplers[0] = los_doppler
        if sc.rank1_gains:
            gains[0] = np.exp(1j * (los_phase[:, :1] + los_phase[:1, :]))
        else:
            gains[0] = np.exp(1j * los_phase)
    gains = gains * np.sqrt(powers)[:, None, None]

    steer = _steering_matrix(geometry, azimuth, zenith)  # (rays, N)
    freq = np.exp(-2j * np.pi * np.outer(delays, np.arange(sc.num_rb)) * sc.rb_spacing_hz)
    time = np.exp(2j * np.pi * np.outer(dopplers, np.arange(sc.num_slot)) * sc.slot_duration_s)
    h = np.einsum("pqr,pn,pf,pt->rqnft", gains, steer, freq, time, optimize=True)
    h = h.reshape(num_rx, geometry.num_ports, sc.num_rb, sc.num_slot)

    power = np.mean(np.abs(h) ** 2)
    if not power > 0 or not np.isfinite(power):
        raise NumericalError("generated channel has zero or non-finite power")
    h = h / math.sqrt(power)
    return ChannelRealization(np.ascontiguousarray(h), geometry, scenario, int(seed))


def lag_view(channel: ChannelRealization, delta_slots: int) -> tuple[np.ndarray, np.ndarray]:
    """Aligned ``(stale, fresh)`` slot windows separated by ``delta_slots``."""
    n = channel.num_slot
    if delta_slots < 0 or delta_slots >= n:
        raise ConfigError(f"delta_slots={delta_slots} outside [0, {n})")
    h = channel.samples
    return h[..., : n - delta_slots], h[..., delta_slots:]
