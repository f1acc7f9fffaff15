"""UE assistance information: normalized spatial, frequency and time correlation.

Each correlation sums ``h[x + offset] * conj(h[x])`` over every index pair
that fits inside the array/grid, divides by the number of such pairs
(overlap normalization), and is normalized by the zero-offset value. The
averages run over rx antennas, both polarization groups, all RBs and all
slots. A pure plane wave therefore reports magnitude 1 at every offset.

Feature ordering is ``[sdcp row-major over (dp1, dp2), fdcp, tdcp]``; in
complex mode every entry expands to an adjacent ``(re, im)`` pair.
"""

from dataclasses import dataclass, field

import numpy as np

from .channel import ChannelRealization
from .errors import ConfigError, NumericalError

GROUPS = ("sdcp", "fdcp", "tdcp")


@dataclass(frozen=True, eq=False)
class AssistanceReport:
    sdcp: np.ndarray          # (n1, n2) indexed [dp1, dp2]
    fdcp: np.ndarray          # (F,)
    tdcp: np.ndarray          # (Q,)
    feature_mask: np.ndarray = field(default=None)
    complex_mode: bool = False

    def __post_init__(self):
        n = self.sdcp.size + self.fdcp.size + self.tdcp.size
        if self.feature_mask is None:
            object.__setattr__(self, "feature_mask", np.ones(n, dtype=bool))
        elif len(self.feature_mask) != n:
            raise ConfigError(f"feature_mask has length {len(self.feature_mask)}, expected {n}")

    @property
    def n_entries(self) -> int:
        return self.sdcp.size + self.fdcp.size + self.tdcp.size

    def with_mask(self, mask) -> "AssistanceReport":
        return AssistanceReport(self.sdcp, self.fdcp, self.tdcp,
                                np.asarray(mask, dtype=bool), self.complex_mode)


def _ratio(num: np.ndarray, zero: complex, complex_mode: bool) -> np.ndarray:
    if not zero.real > 0:
        raise NumericalError("zero-offset correlation vanishes (all-zero channel)")
    if complex_mode:
        return num / zero.real
    return np.abs(num) / zero.real


def _lag_corr(h: np.ndarray, axis: int, lags: int) -> np.ndarray:
    n = h.shape[axis]
    out = np.empty(lags, dtype=complex)
    for d in range(lags):
        a = np.take(h, np.arange(d, n), axis=axis)
        b = np.take(h, np.arange(0, n - d), axis=axis)
        out[d] = np.mean(a * b.conj())
    return out


def compute_sdcp(channel: ChannelRealization, complex_mode: bool = False) -> np.ndarray:
    """Normalized port-offset correlation, shape ``(n1, n2)`` over ``(dp1, dp2)``."""
    g = channel.geometry
    hg = channel.port_grid()  # (r, pol, n2, n1, f, t)
    c = np.empty((g.n1, g.n2), dtype=complex)
    for d1 in range(g.n1):
        for d2 in range(g.n2):
            a = hg[:, :, d2:, d1:]
            b = hg[:, :, : g.n2 - d2, : g.n1 - d1]
            c[d1, d2] = np.mean(a * b.conj())
    return _ratio(c, c[0, 0], complex_mode)


def compute_fdcp(channel: ChannelRealization, F: int, complex_mode: bool = False) -> np.ndarray:
    """Normalized RB-offset correlation for offsets ``0..F-1``."""
    num_rb = channel.samples.shape[2]
    if not 1 <= F <= num_rb:
        raise ConfigError(f"F={F} outside [1, num_rb={num_rb}]")
    c = _lag_corr(channel.samples, 2, F)
    return _ratio(c, c[0], complex_mode)


def compute_tdcp(channel: ChannelRealization, Q: int, complex_mode: bool = False) -> np.ndarray:
    """Normalized slot-delay correlation for delays ``0..Q-1``."""
    num_slot = channel.samples.shape[3]
    if not 1 <= Q <= num_slot:
        raise ConfigError(f"Q={Q} outside [1, num_slot={num_slot}]")
    c = _lag_corr(channel.samples, 3, Q)
    return _ratio(c, c[0], complex_mode)


def compute_report(channel: ChannelRealization, F: int = 8, Q: int = 4, complex_mode: bool = False,
                   noise_std: float = 0.0, rng: np.random.Generator | None = None) -> AssistanceReport:
    """All three reports for one channel.

    ``noise_std > 0`` adds circular Gaussian measurement noise (per complex
    sample, relative to the unit mean channel power) before correlating.
    """
    if noise_std > 0:
        if rng is None:
            raise ConfigError("noise injection needs an rng")
        h = channel.samples
        noise = (rng.standard_normal(h.shape) + 1j * rng.standard_normal(h.shape)) * (noise_std / np.sqrt(2))
        channel = ChannelRealization(h + noise, channel.geometry, channel.scenario, channel.seed)
    return AssistanceReport(
        compute_sdcp(channel, complex_mode),
        compute_fdcp(channel, F, complex_mode),
        compute_tdcp(channel, Q, complex_mode),
        complex_mode=complex_mode,
    )


def _expand_complex(values: np.ndarray) -> np.ndarray:
    out = np.empty(2 * values.size)
    out[0::2] = values.real
    out[1::2] = values.imag
    return out


def assemble_features(report: AssistanceReport) -> np.ndarray:
    """Flat feature vector ``[sdcp, fdcp, tdcp]`` with masked entries dropped."""
    full = np.concatenate([report.sdcp.reshape(-1), report.fdcp, report.tdcp])
    mask = np.asarray(report.feature_mask, dtype=bool)
    if report.complex_mode:
        return _expand_complex(full[mask])
    return np.asarray(full.real[mask], dtype=float)


def feature_names(n1: int, n2: int, F: int, Q: int, complex_mode: bool = False) -> list[str]:
    names = [f"sdcp[{d1},{d2}]" for d1 in range(n1) for d2 in range(n2)]
    names += [f"fdcp[{d}]" for d in range(F)]
    names += [f"tdcp[{d}]" for d in range(Q)]
    if complex_mode:
        names = [f"{n}.{part}" for n in names for part in ("re", "im")]
    return names


def group_mask(names, groups) -> np.ndarray:
    """Boolean mask selecting features whose group (name prefix) is in ``groups``."""
    groups = {g.lower() for g in groups}
    unknown = groups - set(GROUPS)
    if unknown:
        raise ConfigError(f"unknown feature groups: {sorted(unknown)}")
    return np.array([n.split("[", 1)[0] in groups for n in names], dtype=bool)


def parse_groups(spec: str) -> tuple[str, ...]:
    """``"SDCP+FDCP"`` -> ``("sdcp", "fdcp")``."""
    parts = tuple(p.strip().lower() for p in spec.split("+") if p.strip())
    if not parts:
        raise ConfigError("empty feature group list")
    group_mask([], parts)
    return parts
