"""Error-variance model of the CMA output and the resulting classification accuracy."""

from __future__ import annotations

import csv
from dataclasses import asdict, dataclass
from pathlib import Path

import numpy as np

from .channel import ChannelRealization, complex_normal, toeplitz_channel_matrix
from .classifier import rck_classify_batch
from .distributions import ReferenceTables, extract_feature
from .equalizer import ZfEqualizer, zf_taps
from .signals import Constellation, draw_symbols


class SingularChannelError(np.linalg.LinAlgError):
    pass


@dataclass(frozen=True)
class VarianceBreakdown:
    emse: float
    residual_isi: float
    noise_enhancement: float

    @property
    def total(self) -> float:
        return self.emse + self.residual_isi + self.noise_enhancement

    @property
    def snr_db(self) -> float:
        return -10.0 * np.log10(self.total)


def emse_term(c: Constellation, mu: float, H: np.ndarray) -> float:
    """Steady-state CMA excess MSE ``mu * (m6 - 2 m4 + m2) / (4 m2 - 2) * Tr(H H^H)``."""
    m2, m4, m6 = (c.moments[p] for p in (2, 4, 6))
    # exact rational arithmetic keeps constant-modulus alphabets at exactly zero
    ratio = float((m6 - 2 * m4 + m2) / (4 * m2 - 2))
    return mu * ratio * float(np.sum(np.abs(H) ** 2))


def residual_isi_term(zf: ZfEqualizer, L: int, h: ChannelRealization) -> float:
    """Power of the ISI left by keeping only the first ``L`` ZF taps.

    The tail ``[w(L), ..., w(L_zf - 1), 0]`` is passed through an
    ``(L_zf - L + 1)``-row channel matrix; zero when nothing is truncated.
    """
    if L >= zf.L_zf:
        return 0.0
    tail = np.concatenate([zf.taps[L:], [0.0]])
    Hp = toeplitz_channel_matrix(h, zf.L_zf - L + 1)
    return float(np.sum(np.abs(tail.conj() @ Hp) ** 2))


def noise_enhancement_term(H: np.ndarray, noise_variance: float, D: int) -> float:
    """``sigma_v^2 * [(H H^H)^-1]_{DD}`` by a Hermitian linear solve.

    Raises
    ------
    SingularChannelError
        If ``H H^H`` is numerically singular.
    """
    G = H @ H.conj().T
    L = G.shape[0]
    if not 0 <= D < L:
        raise ValueError(f"delay {D} outside the equalizer span 0..{L - 1}")
    cond = np.linalg.cond(G)
    if not cond < 1e12:
        raise SingularChannelError(f"H H^H is singular (condition number {cond:.3g})")
    e = np.zeros(L)
    e[D] = 1.0
    return noise_variance * float(np.linalg.solve(G, e)[D].real)


def error_variance(
    c: Constellation,
    mu: float,
    h: ChannelRealization,
    L: int,
    noise_variance: float,
    tolerance: float = 1e-5,
    *,
    L_zf: int | None = None,
    include_isi: bool = True,
) -> VarianceBreakdown:
    """Model variance of the CMA output error, split into its three terms.

    ``L_zf`` fixes the ZF approximation length instead of deriving it
    from ``tolerance``. ``include_isi=False`` drops the truncation term.
    """
    zf = zf_taps(h, tolerance, length=L_zf, max_delay=L - 1)
    H = toeplitz_channel_matrix(h, L)
    D = min(zf.delay, L - 1)
    return VarianceBreakdown(
        emse=emse_term(c, mu, H),
        residual_isi=residual_isi_term(zf, L, h) if include_isi else 0.0,
        noise_enhancement=noise_enhancement_term(H, noise_variance, D),
    )


def per_level_accuracy(
    c: Constellation,
    error_var: float,
    tables: ReferenceTables,
    M: int,
    n_batches: int,
    rng: np.random.Generator,
    chunk: int = 1000,
) -> float:
    """Monte Carlo probability that rcK picks ``c`` for features of ``s + eps``.

    ``eps ~ CN(0, error_var)`` and the tables are read at the grid SNR
    nearest ``1 / error_var``.
    """
    snr_db, _ = tables.nearest_snr(1.0 / error_var if error_var > 0 else np.inf)
    correct = 0
    done = 0
    while done < n_batches:
        n = min(chunk, n_batches - done)
        y = draw_symbols(c, n * M, rng) + complex_normal(rng, n * M, error_var)
        feats = extract_feature(y.reshape(n, M), tables.kind)
        correct += int(np.sum(rck_classify_batch(feats, snr_db, tables) == c.order))
        done += n
    return correct / n_batches


def analytic_pc(
    h: ChannelRealization,
    tables: ReferenceTables,
    noise_variance: float,
    mu: float = 1e-4,
    L: int = 20,
    M: int = 200,
    priors=None,
    *,
    n_batches: int = 10_000,
    tolerance: float = 1e-5,
    rng: np.random.Generator | None = None,
    error_vars: dict | None = None,
) -> float:
    """Probability of correct classification predicted by the error model.

    Parameters
    ----------
    error_vars : dict, optional
        Override ``{level: sigma_eps^2}``; computed with :func:`error_variance`
        otherwise.
    """
    levels = tables.levels
    if priors is None:
        priors = np.full(len(levels), 1.0 / len(levels))
    priors = np.asarray(priors, dtype=float)
    if priors.shape != (len(levels),) or not np.isclose(priors.sum(), 1.0):
        raise ValueError("priors must hold one probability per level and sum to one")
    rng = np.random.default_rng() if rng is None else rng
    pc = 0.0
    for prior, level in zip(priors, levels):
        c = tables.constellations[level]
        if error_vars is not None:
            var = error_vars[level]
        else:
            var = error_variance(c, mu, h, L, noise_variance, tolerance).total
        # the phase-difference feature loses one sample
        n = M + 1 if tables.kind.value == "phase_diff" else M
        pc += prior * per_level_accuracy(c, var, tables, n, n_batches, rng)
    return pc


def write_breakdowns(rows, path: str | Path) -> None:
    """Write ``(channel_id, level, VarianceBreakdown)`` triples as CSV."""
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["channel_id", "level", "emse", "residual_isi", "noise_enh", "total"])
        for channel_id, level, b in rows:
            d = asdict(b)
            writer.writerow([channel_id, level, d["emse"], d["residual_isi"], d["noise_enhancement"], b.total])


def aligned_error_power(y_eq: np.ndarray, symbols: np.ndarray, zf: ZfEqualizer, L: int) -> float:
    """Mean ``|y_eq(i) - e^{j theta} s(iL - 1 - D)|^2`` over the equalized outputs.

    ``symbols`` holds the transmitted symbols aligned with the received
    samples (``Received.symbols``); the delay and phase come from ``zf``,
    with the delay capped to the equalizer span.
    """
    y_eq = np.asarray(y_eq)
    M = y_eq.size
    D = min(zf.delay, L - 1)
    ref = np.asarray(symbols)[: M * L].reshape(M, L)[:, L - 1 - D]
    return float(np.mean(np.abs(y_eq - np.exp(1j * zf.phase) * ref) ** 2))
