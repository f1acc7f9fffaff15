"""Ideal precoders and the aging-aware generalized cosine similarity (AGCS).

For a delay of ``delta`` slots the quantizer sees the stale window
``samples[..., :n - delta]`` while the metric compares against the ideal
precoders of the fresh window ``samples[..., delta:]``. Both windows are
trimmed to the leading ``Nf * N_RB`` RBs and ``Nt * Ns`` slots.
"""

from dataclasses import dataclass, field

import numpy as np

from .channel import ArrayGeometry, ChannelRealization, ScenarioConfig, generate_channel, lag_view
from .codebook import CodebookConfig, GridConfig, quantize_precoder, reconstruct
from .errors import ConfigError, NumericalError


@dataclass(frozen=True, eq=False)
class PrecoderField:
    """Unit-norm ideal precoders, shape ``(Nf, Nt, N_RB, Ns, P)``."""

    vectors: np.ndarray
    layer: int = 0


@dataclass
class AgcsResult:
    codebook_id: int
    delta_slots: int
    mean: float
    sample_count: int
    per_realization: list = field(default_factory=list)


def _canonical_phase(v: np.ndarray) -> np.ndarray:
    # first entry of largest magnitude becomes real-positive
    idx = np.argmax(np.abs(v), axis=-1)
    ref = np.take_along_axis(v, idx[..., None], axis=-1)
    return v * (ref.conj() / np.abs(ref))


def precoder_grid(h: np.ndarray, num_layers: int = 1) -> np.ndarray:
    """Per-(RB, slot) ideal precoders of a ``(num_rx, P, num_rb, num_slot)`` tensor.

    Returns ``(num_layers, num_rb, num_slot, P)``; layer i is the i-th right
    singular vector of the ``num_rx x P`` channel matrix.
    """
    num_rx, P = h.shape[:2]
    if not 1 <= num_layers <= min(num_rx, P):
        raise ConfigError(f"num_layers={num_layers} must be in [1, min(num_rx, P)={min(num_rx, P)}]")
    mats = np.moveaxis(h, (0, 1), (2, 3))  # (f, t, r, P)
    _, s, vh = np.linalg.svd(mats, full_matrices=False)
    if np.any(s[..., 0] == 0):
        raise NumericalError("zero channel matrix at some (RB, slot)")
    v = vh[..., :num_layers, :].conj()  # (f, t, layers, P)
    v = _canonical_phase(v)
    return np.moveaxis(v, 2, 0)


def tile_field(grid_vectors: np.ndarray, grid: GridConfig, layer: int = 0) -> PrecoderField:
    """Cut a ``(num_rb, num_slot, P)`` precoder grid into ``(Nf, Nt, N_RB, Ns, P)`` tiles."""
    grid.check_fits(grid_vectors.shape[0], grid_vectors.shape[1])
    v = grid_vectors[: grid.num_rb, : grid.num_slot]
    P = v.shape[-1]
    v = v.reshape(grid.Nf, grid.N_RB, grid.Nt, grid.Ns, P).transpose(0, 2, 1, 3, 4)
    return PrecoderField(np.ascontiguousarray(v), layer)


def ideal_precoders(h_view: np.ndarray, grid: GridConfig, num_layers: int = 1) -> list[PrecoderField]:
    """Ideal precoder field of each layer for a channel window."""
    h_view = h_view.samples if isinstance(h_view, ChannelRealization) else np.asarray(h_view)
    grid.check_fits(h_view.shape[2], h_view.shape[3])
    h_view = h_view[:, :, : grid.num_rb, : grid.num_slot]
    pre = precoder_grid(h_view, num_layers)
    return [tile_field(pre[i], grid, i) for i in range(num_layers)]


def _align(v: np.ndarray, ref: np.ndarray) -> np.ndarray:
    """Rotate each vector in ``v`` so its inner product with ``ref`` is real-positive."""
    ip = np.sum(ref.conj() * v, axis=-1, keepdims=True)
    mag = np.abs(ip)
    rot = np.where(mag > 0, ip.conj() / np.where(mag > 0, mag, 1.0), 1.0)
    return v * rot


def representative_precoders(pf: PrecoderField) -> np.ndarray:
    """One unit-norm vector per (subband, slot group), shape ``(Nf, Nt, P)``.

    Each tile's precoders are phase-aligned to the tile's first precoder,
    averaged and renormalized. Tiles are then rotated, in ``k * Nt + l``
    order, to line up with the previous tile; this is a per-tile phase only,
    which leaves cosine similarities untouched but keeps the field smooth
    across subbands for the DFT compression.
    """
    v = pf.vectors
    Nf, Nt, nrb, ns, P = v.shape
    tiles = v.reshape(Nf, Nt, nrb * ns, P)
    first = tiles[:, :, :1, :]
    mean = _align(tiles, first).mean(axis=2)
    norms = np.linalg.norm(mean, axis=-1, keepdims=True)
    degenerate = norms[..., 0] <= 1e-12
    mean = np.where(degenerate[..., None], first[:, :, 0, :], mean / np.where(norms > 1e-12, norms, 1.0))
    flat = mean.reshape(Nf * Nt, P)
    for i in range(1, len(flat)):
        flat[i] = _align(flat[i], flat[i - 1])
    return flat.reshape(Nf, Nt, P)


def compute_agcs(ideal: PrecoderField, quantized: np.ndarray, grid: GridConfig | None = None) -> float:
    """Mean of ``|v^H w| / (|v| |w|)`` over every (k, l, m, n) sample."""
    v = ideal.vectors
    w = np.asarray(quantized)
    if w.shape != (v.shape[0], v.shape[1], v.shape[-1]):
        raise ConfigError(f"quantized field {w.shape} does not match ideal field {v.shape}")
    if grid is not None and v.shape[:4] != (grid.Nf, grid.Nt, grid.N_RB, grid.Ns):
        raise ConfigError("ideal field does not match grid")
    ip = np.abs(np.einsum("klmnp,klp->klmn", v.conj(), w))
    denom = np.linalg.norm(v, axis=-1) * np.linalg.norm(w, axis=-1)[:, :, None, None]
    return float(np.mean(ip / denom))


def quantized_field(stale: PrecoderField, codebook: CodebookConfig, geometry: ArrayGeometry,
                    grid: GridConfig) -> np.ndarray:
    """Quantize the stale field with one codebook and rebuild ``w(k, l)``."""
    qp = quantize_precoder(representative_precoders(stale), codebook, geometry, grid)
    return reconstruct(qp, grid)


def agcs_table(channel: ChannelRealization, codebooks, deltas, grid: GridConfig,
               num_layers: int = 1) -> np.ndarray:
    """Per-realization AGCS, shape ``(len(deltas), len(codebooks))``, layer-averaged."""
    n = channel.num_slot
    need = max(deltas) + grid.num_slot
    if need > n:
        raise ConfigError(f"channel has {n} slots; max delta + Nt*Ns needs {need}")
    for d in deltas:
        if d < 0:
            raise ConfigError("delays must be >= 0")
    pre = precoder_grid(channel.samples[:, :, : grid.num_rb], num_layers)  # (layers, rb, slot, P)
    out = np.zeros((len(deltas), len(codebooks)))
    for layer in range(num_layers):
        stale = tile_field(pre[layer], grid, layer)
        quantized = [quantized_field(stale, cb, channel.geometry, grid) for cb in codebooks]
        for i, d in enumerate(deltas):
            fresh = tile_field(pre[layer][:, d:], grid, layer)
            for j, w in enumerate(quantized):
                out[i, j] += compute_agcs(fresh, w, grid)
    return out / num_layers


def agcs_over_dataset(seeds, codebooks, deltas, geometry: ArrayGeometry, scenario, grid: GridConfig,
                      num_layers: int = 1) -> list[AgcsResult]:
    """AGCS per (codebook, delta) averaged over seeded realizations.

    ``scenario`` is a :class:`ScenarioConfig` or a callable mapping a seed to
    one. Results are ordered codebook-major, then by delta.
    """
    seeds = list(seeds)
    codebooks = list(codebooks)
    deltas = list(deltas)
    if not seeds or not codebooks or not deltas:
        raise ConfigError("seeds, codebooks and deltas must be non-empty")
    tables = []
    for s in seeds:
        sc = scenario(s) if callable(scenario) else scenario
        if not isinstance(sc, ScenarioConfig):
            raise ConfigError("scenario must resolve to a ScenarioConfig")
        tables.append(agcs_table(generate_channel(geometry, sc, s), codebooks, deltas, grid, num_layers))
    tables = np.stack(tables)  # (seeds, deltas, codebooks)
    n_samples = grid.Nf * grid.Nt * grid.N_RB * grid.Ns
    results = []
    for j, cb in enumerate(codebooks):
        for i, d in enumerate(deltas):
            per = tables[:, i, j]
            results.append(AgcsResult(cb.id, d, float(per.mean()), n_samples * len(seeds), per.tolist()))
    return results


def stale_fresh_fields(channel: ChannelRealization, delta: int, grid: GridConfig, num_layers: int = 1):
    """``(stale, fresh)`` precoder fields per layer, computed from the lagged views."""
    stale_h, fresh_h = lag_view(channel, delta)
    return ideal_precoders(stale_h, grid, num_layers), ideal_precoders(fresh_h, grid, num_layers)
