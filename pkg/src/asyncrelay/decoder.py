"""Coherent whitened maximum-likelihood decoding, exhaustive and group-wise.

After the destination front-end, subcarrier k obeys the flat model

    y_k = gain * X_k(s_k) @ h_k + n_k,

with h_k the equivalent per-relay channel (source fading, conjugated for
conjugated columns, times destination fading and a delay phase) and n_k
zero-mean complex Gaussian with covariance ``noise_cov``: one unit of
destination noise plus the forwarded relay noise of every relay active in
the slot. Whitening by noise_cov^{-1/2} turns ML into a nearest-point
search.

The code word is linear in the real symbol coordinates, so the whitened
metric splits into independent per-group problems whenever the dispersion
vectors of different groups are orthogonal under the real inner product.
``ml_decode_grouped`` verifies that orthogonality for the channel at hand
(tolerance 1e-9) and falls back to the exhaustive search with a warning if
it fails, so grouping is an optimisation, never an approximation.
"""

from __future__ import annotations

import itertools
import warnings
from dataclasses import dataclass

import numpy as np

from .codebook import CodeDefinition, RelaySchedule
from .relaysim import ChannelRealization, LinkConfig

__all__ = [
    "SubcarrierModel",
    "build_model",
    "decomposition_gap",
    "delay_phases",
    "dispersion_basis",
    "group_candidates",
    "full_candidates",
    "ml_decode_exhaustive",
    "ml_decode_grouped",
    "whitening_matrix",
]

_ORTHOGONALITY_TOL = 1e-9


@dataclass(frozen=True)
class SubcarrierModel:
    """Flat per-subcarrier channel description used by the ML decoders."""

    channel: np.ndarray  # (R,) equivalent channel vector
    noise_cov: np.ndarray  # (T, T) Hermitian positive definite
    gain: float  # cascaded signal coefficient

    def __post_init__(self):
        h = np.asarray(self.channel, dtype=complex)
        cov = np.asarray(self.noise_cov, dtype=complex)
        if h.ndim != 1:
            raise ValueError("channel vector must be 1-D")
        if cov.ndim != 2 or cov.shape[0] != cov.shape[1]:
            raise ValueError("noise covariance must be square")
        if not np.allclose(cov, cov.conj().T, atol=1e-12):
            raise ValueError("noise covariance must be Hermitian")
        if np.any(np.real(np.diag(cov)) <= 0):
            raise ValueError("noise covariance must be positive definite")
        h.setflags(write=False)
        cov.setflags(write=False)
        object.__setattr__(self, "channel", h)
        object.__setattr__(self, "noise_cov", cov)

    @property
    def num_slots(self) -> int:
        return self.noise_cov.shape[0]


def delay_phases(n_fft: int, delays: np.ndarray) -> np.ndarray:
    """Per-subcarrier delay rotations, shape (N, R): exp(-2j pi k tau / N)."""
    delays = np.asarray(delays)
    k = np.arange(n_fft)[:, None]
    return np.exp(-2j * np.pi * k * delays[None, :] / n_fft)


def equivalent_channel_matrix(
    code: CodeDefinition, channel: ChannelRealization, n_fft: int
) -> np.ndarray:
    """Equivalent channel vectors for every subcarrier, shape (N, R)."""
    f = channel.source_to_relay.copy()
    conj_cols = sorted(code.conjugated_columns)
    f[conj_cols] = np.conj(f[conj_cols])
    return (f * channel.relay_to_dest)[None, :] * delay_phases(n_fft, channel.delays)


def noise_covariance(
    schedule: RelaySchedule, channel: ChannelRealization, cfg: LinkConfig
) -> np.ndarray:
    """Structural (T, T) noise covariance: diagonal, one entry per slot.

    Slot m collects unit destination noise plus the amplified, forwarded
    noise of each relay active in that slot; forwarding permutes white noise
    samples without reuse, so cross-slot terms vanish for any code whose
    relays forward distinct blocks in distinct slots.
    """
    boost = cfg.power.relay_noise_power
    g_sq = np.abs(channel.relay_to_dest) ** 2
    diag = np.ones(schedule.num_slots)
    for slot in range(schedule.num_slots):
        active = schedule.active_relays(slot)
        if active:
            diag[slot] += boost * g_sq[list(active)].sum()
    return np.diag(diag.astype(complex))


def build_model(
    channel: ChannelRealization,
    schedule: RelaySchedule,
    code: CodeDefinition,
    cfg: LinkConfig,
    subcarrier: int,
) -> SubcarrierModel:
    """Assemble the flat model for one subcarrier index."""
    if not 0 <= subcarrier < cfg.n_fft:
        raise ValueError(f"subcarrier {subcarrier} out of range [0, {cfg.n_fft})")
    h_all = equivalent_channel_matrix(code, channel, cfg.n_fft)
    return SubcarrierModel(
        channel=h_all[subcarrier],
        noise_cov=noise_covariance(schedule, channel, cfg),
        gain=cfg.power.cascade_gain,
    )


def whitening_matrix(noise_cov: np.ndarray) -> np.ndarray:
    """Inverse Hermitian square root of the noise covariance."""
    cov = np.asarray(noise_cov, dtype=complex)
    off_diag = cov - np.diag(np.diag(cov))
    if not np.any(off_diag):
        return np.diag(1.0 / np.sqrt(np.real(np.diag(cov))).astype(complex))
    eigenvalues, eigenvectors = np.linalg.eigh(cov)
    if np.any(eigenvalues <= 0):
        raise ValueError("noise covariance must be positive definite")
    return (eigenvectors / np.sqrt(eigenvalues)) @ eigenvectors.conj().T


def real_to_complex(coords: np.ndarray) -> np.ndarray:
    """Fold a (..., 2*nu) real coordinate array into (..., nu) complex symbols."""
    coords = np.asarray(coords, dtype=float)
    return coords[..., 0::2] + 1j * coords[..., 1::2]


def complex_to_real(symbols: np.ndarray) -> np.ndarray:
    """Interleave real and imaginary parts into (..., 2*nu) coordinates."""
    symbols = np.asarray(symbols, dtype=complex)
    out = np.empty(symbols.shape[:-1] + (2 * symbols.shape[-1],), dtype=float)
    out[..., 0::2] = symbols.real
    out[..., 1::2] = symbols.imag
    return out


def dispersion_basis(code: CodeDefinition, h: np.ndarray) -> np.ndarray:
    """Derivatives of X(s) @ h with respect to each real coordinate, (2*nu, T).

    X(s) @ h = G @ s + Hc @ conj(s) with G (Hc) summing plain (conjugated)
    columns, so coordinate 2j gives G[:, j] + Hc[:, j] and coordinate 2j+1
    gives i * (G[:, j] - Hc[:, j]).
    """
    h = np.asarray(h, dtype=complex)
    nu = code.symbol_count
    plain = np.zeros((nu, nu), dtype=complex)
    conj = np.zeros((nu, nu), dtype=complex)
    for i, a in enumerate(code.relay_matrices):
        if i in code.conjugated_columns:
            conj = conj + h[i] * a
        else:
            plain = plain + h[i] * a
    basis = np.empty((2 * nu, nu), dtype=complex)
    basis[0::2] = (plain + conj).T
    basis[1::2] = (1j * (plain - conj)).T
    return basis


def decomposition_gap(code: CodeDefinition, model: SubcarrierModel) -> float:
    """Largest cross-group real inner product of whitened dispersion vectors."""
    whitener = whitening_matrix(model.noise_cov)
    vectors = dispersion_basis(code, model.channel) @ whitener.T
    gram = np.real(vectors @ vectors.conj().T)
    group_of = np.empty(vectors.shape[0], dtype=int)
    for g, coords in enumerate(code.group_partition):
        group_of[list(coords)] = g
    cross = group_of[:, None] != group_of[None, :]
    return float(np.max(np.abs(gram[cross]))) if cross.any() else 0.0


def group_candidates(code: CodeDefinition) -> list[np.ndarray]:
    """Per group, the (K_g, nu) complex partial symbol vectors with all other
    groups' coordinates at zero, in alphabet (bit-label) order."""
    out = []
    for coords, table in zip(code.group_partition, code.alphabet):
        real = np.zeros((table.shape[0], 2 * code.symbol_count))
        real[:, list(coords)] = table
        out.append(real_to_complex(real))
    return out


def full_candidates(code: CodeDefinition) -> tuple[np.ndarray, np.ndarray]:
    """All code word symbol vectors as (C, nu) complex, plus the (C, G) table
    of per-group alphabet indices, enumerated with the last group fastest so
    row order is lexicographic in the group indices."""
    sizes = [table.shape[0] for table in code.alphabet]
    partials = group_candidates(code)
    index_table = np.array(list(itertools.product(*(range(k) for k in sizes))), dtype=int)
    symbols = np.zeros((len(index_table), code.symbol_count), dtype=complex)
    for g, partial in enumerate(partials):
        symbols += partial[index_table[:, g]]
    return symbols, index_table


def candidate_fields(code: CodeDefinition, candidates: np.ndarray) -> np.ndarray:
    """Code words for a batch of symbol vectors, shape (C, T, R)."""
    candidates = np.asarray(candidates, dtype=complex)
    out = np.empty((candidates.shape[0], code.slot_count, code.num_relays), dtype=complex)
    for i, a in enumerate(code.relay_matrices):
        v = np.conj(candidates) if i in code.conjugated_columns else candidates
        out[:, :, i] = v @ a.T
    return out


def _whitened_metrics(y: np.ndarray, fields: np.ndarray, model: SubcarrierModel) -> np.ndarray:
    whitener = whitening_matrix(model.noise_cov)
    predicted = model.gain * (fields @ model.channel)
    residual = (y[None, :] - predicted) @ whitener.T
    return np.einsum("ct,ct->c", residual, residual.conj()).real


def ml_decode_exhaustive(y: np.ndarray, model: SubcarrierModel, code: CodeDefinition) -> np.ndarray:
    """Whitened-ML symbol vector over the full product alphabet.

    Ties resolve to the lexicographically first candidate in group-index
    order (np.argmin picks the first minimum, and candidates are enumerated
    lexicographically).
    """
    y = np.asarray(y, dtype=complex)
    candidates, _ = full_candidates(code)
    metrics = _whitened_metrics(y, candidate_fields(code, candidates), model)
    return candidates[int(np.argmin(metrics))]


def ml_decode_grouped(y: np.ndarray, model: SubcarrierModel, code: CodeDefinition) -> np.ndarray:
    """Whitened-ML search run independently per coordinate group.

    Each group is minimised with every other group's coordinates at zero,
    which equals the joint minimiser exactly when the cross-group dispersion
    products vanish; that premise is checked and a failed check falls back
    to the exhaustive search.
    """
    y = np.asarray(y, dtype=complex)
    if decomposition_gap(code, model) > _ORTHOGONALITY_TOL:
        warnings.warn(
            f"code {code.name!r}: group decomposition invalid for this channel; "
            "falling back to exhaustive search",
            stacklevel=2,
        )
        return ml_decode_exhaustive(y, model, code)
    out = np.zeros(code.symbol_count, dtype=complex)
    for partial in group_candidates(code):
        metrics = _whitened_metrics(y, candidate_fields(code, partial), model)
        out = out + partial[int(np.argmin(metrics))]
    return out
