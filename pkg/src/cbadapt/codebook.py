"""Generalized DFT codebook: ``W = W1 W2 (Wf kron Wd)^H``.

Shapes used throughout:

* a precoder field is ``(Nf, Nt, P)``: one P-vector per (subband, slot group);
  column ``k * Nt + l`` of ``W`` holds the vector for subband k, group l.
* ``W1`` is ``(P, 2L)`` block diagonal with the same L unit-norm spatial beams
  on both polarizations; rows 0..L-1 of ``W2`` belong to polarization 0.
* ``Wf`` is ``(Nf, M)`` and ``Wd`` is ``(Nt, T)``, unit-norm DFT columns;
  column ``m * T + t`` of ``W2`` pairs frequency basis m with time basis t.

Oversampled 2D DFT beams are indexed ``q2 * (O1 * n1) + q1``; their port
entries follow the ``p2 * n1 + p1`` order of :mod:`cbadapt.channel`.
"""

import dataclasses
import math
from dataclasses import dataclass, field

import numpy as np

from .channel import ArrayGeometry
from .errors import ConfigError, NumericalError


@dataclass(frozen=True)
class GridConfig:
    """Reporting granularity: ``Nf`` subbands of ``N_RB`` RBs, ``Nt`` groups of ``Ns`` slots."""

    Nf: int = 6
    N_RB: int = 4
    Nt: int = 1
    Ns: int = 4

    def __post_init__(self):
        if min(self.Nf, self.N_RB, self.Nt, self.Ns) < 1:
            raise ConfigError("grid extents must be >= 1")

    @property
    def num_rb(self) -> int:
        return self.Nf * self.N_RB

    @property
    def num_slot(self) -> int:
        return self.Nt * self.Ns

    def check_fits(self, num_rb: int, num_slot: int) -> None:
        if self.num_rb > num_rb:
            raise ConfigError(f"grid needs {self.num_rb} RBs, channel has {num_rb}")
        if self.num_slot > num_slot:
            raise ConfigError(f"grid needs {self.num_slot} slots, view has {num_slot}")


@dataclass(frozen=True)
class CodebookConfig:
    id: int
    L: int
    M: int = 1
    T: int = 1
    K: int = 2
    O1: int = 4
    O2: int = 4
    Of: int = 1
    Ot: int = 1
    amp_bits: int = 4
    phase_bits: int = 4
    name: str = ""

    def __post_init__(self):
        if min(self.L, self.M, self.T, self.K) < 1:
            raise ConfigError(f"codebook {self.id}: L, M, T, K must be >= 1")
        if self.K > 2 * self.L * self.M * self.T:
            raise ConfigError(f"codebook {self.id}: K={self.K} exceeds 2LMT={2 * self.L * self.M * self.T}")
        if min(self.O1, self.O2, self.Of, self.Ot) < 1:
            raise ConfigError(f"codebook {self.id}: oversampling factors must be >= 1")
        if self.amp_bits < 0 or self.phase_bits < 0:
            raise ConfigError(f"codebook {self.id}: bit depths must be >= 0")

    @property
    def num_coeffs(self) -> int:
        return 2 * self.L * self.M * self.T

    def check_fits(self, geometry: ArrayGeometry, grid: GridConfig) -> None:
        if self.L > geometry.ports_per_pol:
            raise ConfigError(f"codebook {self.id}: L={self.L} > n1*n2={geometry.ports_per_pol}")
        if self.M > grid.Nf:
            raise ConfigError(f"codebook {self.id}: M={self.M} > Nf={grid.Nf}")
        if self.T > grid.Nt:
            raise ConfigError(f"codebook {self.id}: T={self.T} > Nt={grid.Nt}")

    def replace(self, **changes) -> "CodebookConfig":
        return dataclasses.replace(self, **changes)


@dataclass(frozen=True, eq=False)
class QuantizedPrecoder:
    """Report content: basis indices plus at most K sparse W2 coefficients."""

    spatial_beam_indices: np.ndarray
    freq_indices: np.ndarray
    time_indices: np.ndarray
    coeff_rows: np.ndarray
    coeff_cols: np.ndarray
    coeff_values: np.ndarray
    geometry: ArrayGeometry
    O1: int = 1
    O2: int = 1
    Of: int = 1
    Ot: int = 1
    extra: dict = field(default_factory=dict)

    @property
    def L(self) -> int:
        return len(self.spatial_beam_indices)

    @property
    def M(self) -> int:
        return len(self.freq_indices)

    @property
    def T(self) -> int:
        return len(self.time_indices)

    def w2_matrix(self) -> np.ndarray:
        w2 = np.zeros((2 * self.L, self.M * self.T), dtype=complex)
        w2[self.coeff_rows, self.coeff_cols] = self.coeff_values
        return w2


# ---------------------------------------------------------------- bases

def spatial_dft_grid(geometry: ArrayGeometry, O1: int, O2: int) -> np.ndarray:
    """All ``n1 n2 O1 O2`` oversampled beams as rows, unit-modulus entries."""
    if O1 < 1 or O2 < 1:
        raise ConfigError("oversampling factors must be >= 1")
    n1, n2 = geometry.n1, geometry.n2
    q1 = np.arange(n1 * O1)
    q2 = np.arange(n2 * O2)
    p1 = np.arange(n1)
    p2 = np.arange(n2)
    # phase[q2, q1, p2, p1]
    phase = (q1[None, :, None, None] * p1[None, None, None, :] / (O1 * n1)
             + q2[:, None, None, None] * p2[None, None, :, None] / (O2 * n2))
    return np.exp(2j * np.pi * phase).reshape(n1 * O1 * n2 * O2, n1 * n2)


def beam_families(geometry: ArrayGeometry, O1: int, O2: int) -> list[np.ndarray]:
    """Beam indices of each orthogonal family, ordered by offset ``r2 * O1 + r1``."""
    n1, n2 = geometry.n1, geometry.n2
    fams = []
    for r2 in range(O2):
        for r1 in range(O1):
            q1 = r1 + O1 * np.arange(n1)
            q2 = r2 + O2 * np.arange(n2)
            fams.append((q2[:, None] * (O1 * n1) + q1[None, :]).reshape(-1))
    return fams


def dft_basis(n: int, oversampling: int = 1) -> np.ndarray:
    """``(n, n * oversampling)`` matrix of unit-norm oversampled DFT columns."""
    k = np.arange(n)
    q = np.arange(n * oversampling)
    return np.exp(2j * np.pi * np.outer(k, q) / (n * oversampling)) / math.sqrt(n)


def spatial_basis(geometry: ArrayGeometry, beam_indices, O1: int, O2: int) -> np.ndarray:
    """Block-diagonal ``W1`` of shape ``(P, 2L)`` with unit-norm columns."""
    beams = spatial_dft_grid(geometry, O1, O2)[np.asarray(beam_indices)]
    beams = beams.T / math.sqrt(geometry.ports_per_pol)
    N, L = beams.shape
    w1 = np.zeros((2 * N, 2 * L), dtype=complex)
    w1[:N, :L] = beams
    w1[N:, L:] = beams
    return w1


def beam_powers(precoders: np.ndarray, geometry: ArrayGeometry, O1: int, O2: int) -> np.ndarray:
    """Total power captured by each grid beam over both polarization halves."""
    N = geometry.ports_per_pol
    x = np.asarray(precoders).reshape(-1, 2, N)
    beams = spatial_dft_grid(geometry, O1, O2) / math.sqrt(N)
    proj = x @ beams.conj().T
    return np.sum(np.abs(proj) ** 2, axis=(0, 1))


def select_spatial_beams(precoders, L: int, geometry: ArrayGeometry, O1: int = 4, O2: int = 4) -> np.ndarray:
    """Pick L orthogonal beams from one offset family maximizing projected power.

    Within a family the beams are orthogonal, so the greedy choice is simply
    the L strongest; the family with the largest total wins. Ties resolve to
    the lowest index. Returned indices are sorted ascending.
    """
    if L > geometry.ports_per_pol:
        raise ConfigError(f"L={L} exceeds beams per family ({geometry.ports_per_pol})")
    power = beam_powers(precoders, geometry, O1, O2)
    best, best_total = None, -np.inf
    for fam in beam_families(geometry, O1, O2):
        order = np.lexsort((fam, -power[fam]))[:L]
        chosen = fam[order]
        total = power[chosen].sum()
        if total > best_total:
            best, best_total = chosen, total
    return np.sort(best)


def _greedy_dft_select(x: np.ndarray, count: int, n: int, oversampling: int) -> np.ndarray:
    """Greedy basis pursuit over DFT columns with column 0 forced first.

    ``x`` has shape ``(n, D)``. Each step adds the column whose component
    orthogonal to the current span captures the most power of ``x``.
    """
    if count > n:
        raise ConfigError(f"cannot select {count} independent DFT columns of length {n}")
    basis = dft_basis(n, oversampling)
    x = np.asarray(x).reshape(n, -1)
    chosen = [0]
    q = basis[:, :1].copy()
    while len(chosen) < count:
        resid = basis - q @ (q.conj().T @ basis)
        rnorm = np.sum(np.abs(resid) ** 2, axis=0)
        gain = np.sum(np.abs(resid.conj().T @ x) ** 2, axis=1)
        ok = rnorm > 1e-10
        gain = np.where(ok, gain / np.where(ok, rnorm, 1.0), -np.inf)
        gain[chosen] = -np.inf
        c = int(np.argmax(gain))
        if not np.isfinite(gain[c]):
            raise NumericalError("no linearly independent DFT column left")
        chosen.append(c)
        u = resid[:, c] / math.sqrt(rnorm[c])
        q = np.column_stack([q, u])
    return np.array(sorted(chosen), dtype=int)


def select_freq_basis(field: np.ndarray, M: int, Nf: int, Of: int = 1) -> np.ndarray:
    """M frequency basis indices for a field whose leading axis is the subband."""
    return _greedy_dft_select(np.asarray(field).reshape(Nf, -1), M, Nf, Of)


def select_time_basis(field: np.ndarray, T: int, Nt: int, Ot: int = 1) -> np.ndarray:
    """T time basis indices for a field whose leading axis is the slot group."""
    return _greedy_dft_select(np.asarray(field).reshape(Nt, -1), T, Nt, Ot)


# ---------------------------------------------------------- coefficients

def _field_matrix(field: np.ndarray) -> np.ndarray:
    Nf, Nt, P = field.shape
    return field.reshape(Nf * Nt, P).T


def _gram(a: np.ndarray) -> np.ndarray:
    gram = a.conj().T @ a
    if np.linalg.cond(gram) > 1e12:
        raise NumericalError("basis Gram matrix is singular")
    return gram


def compute_w2(field: np.ndarray, w1: np.ndarray, wf: np.ndarray, wd: np.ndarray) -> np.ndarray:
    """Least-squares ``W2`` fitting the ``(Nf, Nt, P)`` field to the bases.

    Solves ``min ||V - W1 W2 B^H||_F`` with ``B = Wf kron Wd`` through the two
    separable normal equations::

        W2 = (W1^H W1)^-1 W1^H V B (B^H B)^-1

    which reduces to ``W1^H V B`` for orthonormal bases.
    """
    v = _field_matrix(np.asarray(field))
    b = np.kron(wf, wd)
    left = np.linalg.solve(_gram(w1), w1.conj().T @ v)           # (2L, NfNt)
    # X G = Y  <=>  G^T X^T = Y^T
    return np.linalg.solve(_gram(b).T, (left @ b).T).T          # (2L, MT)


def prune_top_k(w2: np.ndarray, K: int) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Keep the K largest-magnitude entries as ``(rows, cols, values)``.

    Ties go to the lexicographically smaller ``(row, col)``; the result is in
    row-major order.
    """
    if K < 1:
        raise ConfigError("K must be >= 1")
    flat = np.asarray(w2).reshape(-1)
    order = np.argsort(-np.abs(flat), kind="stable")[:K]
    keep = np.sort(order)
    rows, cols = np.unravel_index(keep, w2.shape)
    return rows.astype(int), cols.astype(int), flat[keep].copy()


def amplitude_levels(amp_bits: int) -> np.ndarray:
    """Geometric amplitude grid ``2**(-i/2)``; code ``2**bits - 1 - i`` maps to level i."""
    return 2.0 ** (-np.arange(2 ** amp_bits) / 2.0)


def quantize_coeffs(values: np.ndarray, amp_bits: int, phase_bits: int) -> np.ndarray:
    """Quantize amplitude (relative to the strongest entry) and phase.

    A depth of zero bits passes that component through unchanged. Exact
    zeros stay zero.
    """
    values = np.asarray(values, dtype=complex)
    if amp_bits < 0 or phase_bits < 0:
        raise ConfigError("bit depths must be >= 0")
    if values.size == 0 or amp_bits == phase_bits == 0:
        return values.copy()
    amp = np.abs(values)
    phase = np.angle(values)
    ref = amp.max()
    if ref == 0:
        return values.copy()
    if amp_bits > 0:
        nz = amp > 0
        steps = np.zeros_like(amp)
        steps[nz] = np.clip(np.rint(-2.0 * np.log2(amp[nz] / ref)), 0, 2 ** amp_bits - 1)
        amp = np.where(nz, ref * 2.0 ** (-steps / 2.0), 0.0)
    if phase_bits > 0:
        step = 2 * np.pi / 2 ** phase_bits
        phase = np.mod(np.rint(phase / step), 2 ** phase_bits) * step
    return amp * np.exp(1j * phase)


def amplitude_codes(values: np.ndarray, amp_bits: int) -> np.ndarray:
    """Integer amplitude codes (strongest coefficient gets ``2**amp_bits - 1``)."""
    amp = np.abs(np.asarray(values))
    ref = amp.max()
    steps = np.clip(np.rint(-2.0 * np.log2(np.maximum(amp, 1e-300) / ref)), 0, 2 ** amp_bits - 1)
    return (2 ** amp_bits - 1 - steps).astype(int)


# ------------------------------------------------------------ end-to-end

def quantize_precoder(field: np.ndarray, config: CodebookConfig, geometry: ArrayGeometry,
                      grid: GridConfig) -> QuantizedPrecoder:
    """Quantize a ``(Nf, Nt, P)`` representative-precoder field with one codebook."""
    config.check_fits(geometry, grid)
    field = np.asarray(field)
    if field.shape != (grid.Nf, grid.Nt, geometry.num_ports):
        raise ConfigError(f"field shape {field.shape} does not match grid/geometry")
    beams = select_spatial_beams(field, config.L, geometry, config.O1, config.O2)
    w1 = spatial_basis(geometry, beams, config.O1, config.O2)
    beam_coeffs = field @ w1.conj()                    # (Nf, Nt, 2L)
    f_idx = select_freq_basis(beam_coeffs, config.M, grid.Nf, config.Of)
    t_idx = select_time_basis(np.swapaxes(beam_coeffs, 0, 1), config.T, grid.Nt, config.Ot)
    wf = dft_basis(grid.Nf, config.Of)[:, f_idx]
    wd = dft_basis(grid.Nt, config.Ot)[:, t_idx]
    w2 = compute_w2(field, w1, wf, wd)
    rows, cols, vals = prune_top_k(w2, config.K)
    vals = quantize_coeffs(vals, config.amp_bits, config.phase_bits)
    return QuantizedPrecoder(beams, f_idx, t_idx, rows, cols, vals, geometry,
                             config.O1, config.O2, config.Of, config.Ot)


def reconstruct(qp: QuantizedPrecoder, grid: GridConfig) -> np.ndarray:
    """Rebuild the unit-norm ``(Nf, Nt, P)`` field ``w(k, l)`` from a report.

    A column whose coefficients were all pruned falls back to the first
    spatial beam on polarization 0.
    """
    w1 = spatial_basis(qp.geometry, qp.spatial_beam_indices, qp.O1, qp.O2)
    wf = dft_basis(grid.Nf, qp.Of)[:, qp.freq_indices]
    wd = dft_basis(grid.Nt, qp.Ot)[:, qp.time_indices]
    w = w1 @ qp.w2_matrix() @ np.kron(wf, wd).conj().T   # (P, NfNt)
    norms = np.linalg.norm(w, axis=0)
    dead = norms <= 1e-12
    if dead.any():
        w[:, dead] = w1[:, :1]
        norms[dead] = 1.0
    w = w / norms
    return w.T.reshape(grid.Nf, grid.Nt, -1)


def _bits(n: int) -> int:
    return math.ceil(math.log2(n)) if n > 1 else 0


def overhead_bits(config: CodebookConfig, geometry: ArrayGeometry, grid: GridConfig) -> int:
    """Report size in bits.

    ``L*ceil(log2(n1 n2 O1 O2)) + M*ceil(log2(Nf Of)) + T*ceil(log2(Nt Ot))
    + K*(amp_bits + phase_bits) + K*ceil(log2(2 L M T))``, with
    ``ceil(log2(1)) = 0``.
    """
    c = config
    return (c.L * _bits(geometry.ports_per_pol * c.O1 * c.O2)
            + c.M * _bits(grid.Nf * c.Of)
            + c.T * _bits(grid.Nt * c.Ot)
            + c.K * (c.amp_bits + c.phase_bits)
            + c.K * _bits(2 * c.L * c.M * c.T))


# ---------------------------------------------------------------- presets

TABLE1_GEOMETRY = ArrayGeometry(n1=16, n2=8, d_h=0.5, d_v=0.5)
TABLE1_GRID = GridConfig(Nf=18, N_RB=15, Nt=1, Ns=1)
TABLE1_CODEBOOKS = (
    CodebookConfig(0, L=1, M=1, K=2, name="Type-1"),
    CodebookConfig(1, L=2, M=5, K=10, name="eType-2"),
    CodebookConfig(2, L=2, M=5, K=20, name="eType-2"),
    CodebookConfig(3, L=12, M=5, K=60, name="eType-2 (256 ports)"),
    CodebookConfig(4, L=12, M=9, K=216, name="eType-2 (256 ports)"),
)

DESK_GEOMETRY = ArrayGeometry(n1=4, n2=2, d_h=0.5, d_v=0.5)
DESK_GRID = GridConfig(Nf=6, N_RB=4, Nt=1, Ns=4)
DESK_CODEBOOKS = (
    CodebookConfig(0, L=1, M=1, K=2, name="type1-like"),
    CodebookConfig(1, L=2, M=2, K=4, name="L2-M2-K4"),
    CodebookConfig(2, L=2, M=2, K=8, name="L2-M2-K8"),
    CodebookConfig(3, L=4, M=3, K=12, name="L4-M3-K12"),
    CodebookConfig(4, L=8, M=4, K=32, name="L8-M4-K32"),
)

CODEBOOK_PRESETS = {
    "table1": (TABLE1_GEOMETRY, TABLE1_GRID, TABLE1_CODEBOOKS),
    "desk": (DESK_GEOMETRY, DESK_GRID, DESK_CODEBOOKS),
}
