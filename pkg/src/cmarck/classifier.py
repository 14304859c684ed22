"""Reduced-complexity Kuiper (rcK) classifier and the baseline classifiers."""

from __future__ import annotations

from dataclasses import dataclass, field
from functools import lru_cache

import numpy as np

from .channel import ChannelRealization
from .distributions import FeatureKind, ReferenceTables, extract_feature
from .equalizer import GAMMA_FLOOR, estimate_snr, zf_equalize, zf_taps
from .signals import ConfigurationError, ModClass, build_constellation


class UnsupportedError(ConfigurationError):
    """Requested classifier cannot handle the modulation class."""


@dataclass
class ClassificationResult:
    """Outcome of one classification.

    ``distances[i]`` belongs to ``levels[i]``; ``chosen_level`` attains the
    minimum, with ties going to the lower order.
    """

    chosen_level: int
    levels: tuple
    distances: np.ndarray = field(repr=False)
    gamma_used_db: float | None = None
    low_confidence: bool = False


def _argmin_low_order(levels, distances) -> int:
    # levels are sorted ascending, argmin returns the first minimum
    return levels[int(np.argmin(distances))]


@dataclass(frozen=True)
class _PairPoints:
    """Testpoints of candidate ``level`` against one rival, with the candidate's CDF there."""

    level: int
    t0: float
    t1: float
    f0: float
    f1: float


def _pair_points(tables: ReferenceTables, snr_db: float) -> list[list[_PairPoints]]:
    tp = tables.testpoints[snr_db]
    out = []
    for l in tables.levels:
        cdf = tables.cdfs[snr_db][l]
        pairs = []
        for p in tables.levels:
            if p == l:
                continue
            # t_lp^(d) = t_pl^(1-d); only l < p is stored
            if l < p:
                t0, t1 = tp.points[(l, p, 0)], tp.points[(l, p, 1)]
            else:
                t0, t1 = tp.points[(p, l, 1)], tp.points[(p, l, 0)]
            pairs.append(_PairPoints(l, t0, t1, float(cdf(t0)), float(cdf(t1))))
        out.append(pairs)
    return out


def kuiper_distances(ecdf, pairs: list[list[_PairPoints]]) -> np.ndarray:
    """rcK distance of every candidate level.

    For candidate ``l`` and rival ``p`` the reduced Kuiper distance is
    ``|D0 + D1|`` with ``D0 = F_emp(t0) - F_l(t0)`` at the point of largest
    positive gap ``F_l - F_p`` and ``D1 = F_l(t1) - F_emp(t1)`` at the point
    of largest negative gap. A candidate's distance is the largest over
    its rivals. ``ecdf`` maps a scalar testpoint to the empirical CDF and
    may return a batch array; the level axis is appended last.
    """
    out = []
    for level_pairs in pairs:
        v = [np.abs((ecdf(pp.t0) - pp.f0) + (pp.f1 - ecdf(pp.t1))) for pp in level_pairs]
        out.append(np.max(np.stack(v, axis=-1), axis=-1) if v else np.zeros_like(ecdf(0.0)))
    return np.stack(out, axis=-1)


def rck_classify(
    y_eq: np.ndarray,
    gamma_hat: float,
    tables: ReferenceTables,
    kind: FeatureKind | str | None = None,
) -> ClassificationResult:
    """Classify equalized symbols by the smallest rcK distance.

    The tables at the grid SNR nearest ``gamma_hat`` are used. Estimates
    below the grid (or below ``GAMMA_FLOOR``) are classified at the lowest
    grid SNR and marked ``low_confidence``.
    """
    kind = tables.kind if kind is None else FeatureKind(kind)
    if kind is not tables.kind:
        raise ValueError(f"tables hold {tables.kind.value} CDFs, not {kind.value}")
    snr_db, below = tables.nearest_snr(gamma_hat)
    low = below or not gamma_hat >= GAMMA_FLOOR
    feats = np.sort(extract_feature(y_eq, kind))
    ecdf = lambda t: np.searchsorted(feats, t, side="right") / feats.size  # noqa: E731
    V = kuiper_distances(ecdf, _pair_points(tables, snr_db))
    return ClassificationResult(
        _argmin_low_order(tables.levels, V), tables.levels, V, snr_db, low
    )


def rck_classify_batch(features: np.ndarray, snr_db: float, tables: ReferenceTables) -> np.ndarray:
    """Vectorized rcK decisions for a ``(batch, n)`` array of feature samples."""
    features = np.asarray(features, dtype=float)
    ecdf = lambda t: np.mean(features <= t, axis=1)  # noqa: E731
    V = kuiper_distances(ecdf, _pair_points(tables, snr_db))
    return np.asarray(tables.levels)[np.argmin(V, axis=-1)]


# -- sixth-order cumulant -------------------------------------------------


def _set_partitions(items):
    if not items:
        yield []
        return
    first, rest = items[0], items[1:]
    for part in _set_partitions(rest):
        yield [[first]] + part
        for i in range(len(part)):
            yield part[:i] + [[first] + part[i]] + part[i + 1 :]


@lru_cache(maxsize=None)
def _cumulant_terms(p: int, q: int):
    """Partition expansion of the cumulant of ``p - q`` copies of x and ``q`` of x*.

    Each term is ``(coefficient, ((a1, b1), (a2, b2), ...))`` with block
    moments ``E[x^a conj(x)^b]``; blocks of size one are dropped (zero mean).
    """
    conj = [False] * (p - q) + [True] * q
    terms = {}
    for part in _set_partitions(list(range(p))):
        if any(len(b) == 1 for b in part):
            continue
        k = len(part)
        coef = (-1) ** (k - 1) * float(np.prod(np.arange(1, k)))
        blocks = tuple(sorted((sum(not conj[i] for i in b), sum(conj[i] for i in b)) for b in part))
        terms[blocks] = terms.get(blocks, 0.0) + coef
    return tuple(terms.items())


def _cumulant_from_moments(moment, p: int, q: int) -> complex:
    total = 0j
    for blocks, coef in _cumulant_terms(p, q):
        prod = 1 + 0j
        for a, b in blocks:
            prod *= moment(a, b)
        total += coef * prod
    return total


def cumulant_c63(x: np.ndarray) -> float:
    """Sample C63 of the power-normalized sequence (real part).

    Raises
    ------
    ValueError
        If the input has zero power.
    """
    x = np.asarray(x, dtype=complex)
    power = np.mean(np.abs(x) ** 2)
    if not power > 0:
        raise ValueError("C63 of a zero-power sequence is undefined")
    z = x / np.sqrt(power)
    zc = z.conj()
    cache = {}

    def moment(a, b):
        if (a, b) not in cache:
            cache[(a, b)] = np.mean(z**a * zc**b)
        return cache[(a, b)]

    return float(_cumulant_from_moments(moment, 6, 3).real)


@lru_cache(maxsize=None)
def theoretical_c63(mod_class: ModClass | str, order: int) -> float:
    """C63 of an equiprobable constellation, from its exact moments."""
    pts = build_constellation(mod_class, order).points

    def moment(a, b):
        return np.mean(pts**a * pts.conj() ** b)

    return float(_cumulant_from_moments(moment, 6, 3).real)


def cumulant_classify(x: np.ndarray, levels, mod_class: ModClass | str = ModClass.QAM) -> ClassificationResult:
    """Pick the QAM level whose theoretical C63 is nearest the sample C63.

    Raises
    ------
    UnsupportedError
        For PSK, whose higher orders share one C63 value.
    """
    if ModClass(mod_class) is not ModClass.QAM:
        raise UnsupportedError("the C63 cumulant classifier supports QAM only")
    levels = tuple(sorted(levels))
    c63 = cumulant_c63(x)
    dist = np.array([abs(c63 - theoretical_c63(ModClass.QAM, l)) for l in levels])
    return ClassificationResult(_argmin_low_order(levels, dist), levels, dist)


def zf_rck_classify(
    x: np.ndarray,
    h: ChannelRealization,
    noise_variance: float,
    L: int,
    M: int,
    tables: ReferenceTables,
    tolerance: float = 1e-5,
) -> ClassificationResult:
    """Genie baseline: truncated ZF equalization with known taps, then rcK."""
    zf = zf_taps(h, tolerance, max_delay=L - 1)
    w = np.zeros(L, dtype=complex)
    n = min(L, zf.L_zf)
    w[:n] = zf.taps[:n]
    y = zf_equalize(x, zf, L, M)
    gamma = max(estimate_snr(y, w, noise_variance), GAMMA_FLOOR)
    return rck_classify(y, gamma, tables)
