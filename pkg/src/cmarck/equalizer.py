"""Block-processing CMA blind equalizer and zero-forcing reference equalizer.

Block ``i`` (1-based) of an input sequence ``x`` is the length-``L`` vector
``[x(iL-1), x(iL-2), ..., x(iL-L)]``: newest sample first, and no sample is
shared between consecutive blocks. Tap vectors follow the ``y = w^H x``
convention throughout, so the combined channel-equalizer response is
``w^H H`` with ``H`` from :func:`cmarck.channel.toeplitz_channel_matrix`.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, field

import numpy as np

from .channel import ChannelRealization, toeplitz_channel_matrix

logger = logging.getLogger(__name__)

GAMMA_FLOOR = 1e-3
DIVERGENCE_NORM = 1e6
LZF_MAX = 4096
# least-squares fallback is O(L_zf^3); longer inverses add nothing for L <= 64
LZF_LS_MAX = 256


class InsufficientSamplesError(ValueError):
    pass


class DivergenceError(RuntimeError):
    """CMA tap norm exceeded the divergence guard."""

    def __init__(self, iteration: int, norm: float):
        super().__init__(f"CMA diverged at iteration {iteration} (|w| = {norm:.3g})")
        self.iteration = iteration
        self.norm = norm


@dataclass(frozen=True)
class CmaConfig:
    L: int = 20
    mu: float = 1e-4
    M: int = 200
    w0: np.ndarray | None = None

    def __post_init__(self):
        if self.L < 1 or self.M < 1:
            raise ValueError("L and M must be positive")
        if not self.mu > 0:
            raise ValueError("step size must be positive")
        if self.w0 is not None:
            w0 = np.asarray(self.w0, dtype=complex)
            if w0.shape != (self.L,) or not np.any(w0):
                raise ValueError("w0 must be a nonzero vector of length L")

    def initial_taps(self) -> np.ndarray:
        if self.w0 is not None:
            return np.array(self.w0, dtype=complex)
        w0 = np.zeros(self.L, dtype=complex)
        w0[0] = 1.0
        return w0


@dataclass
class EqualizerRun:
    """Result of :func:`cma_run`.

    Attributes
    ----------
    w_M : ndarray
        Taps after the last update.
    y_eq : ndarray
        Outputs of the frozen taps ``w_M`` applied to every block.
    gamma_hat : float
        Estimated output SNR (linear), clamped below at ``GAMMA_FLOOR``.
    gamma_raw : float
        The unclamped estimate.
    cost : ndarray
        ``(|y(i)|^2 - 1)^2`` during adaptation.
    taps_history : ndarray or None
        ``(M + 1, L)`` tap trajectory including ``w0``, if requested.
    """

    w_M: np.ndarray
    y_eq: np.ndarray
    gamma_hat: float
    gamma_raw: float
    cost: np.ndarray = field(repr=False)
    taps_history: np.ndarray | None = field(default=None, repr=False)


def blocks(x: np.ndarray, L: int, M: int) -> np.ndarray:
    """Return the ``(M, L)`` matrix whose row ``i-1`` is block ``i``."""
    x = np.asarray(x)
    if x.size < M * L:
        raise InsufficientSamplesError(f"need {M * L} samples for M={M}, L={L}; got {x.size}")
    return x[: M * L].reshape(M, L)[:, ::-1]


def estimate_snr(y_eq: np.ndarray, w: np.ndarray, noise_variance: float) -> float:
    """Output SNR estimate ``mean|y|^2 / (|w|^2 sigma_v^2) - 1`` (unclamped)."""
    noise_power = float(np.vdot(w, w).real) * noise_variance
    if noise_power == 0:
        return np.inf
    return float(np.mean(np.abs(y_eq) ** 2)) / noise_power - 1.0


def cma_run(
    x: np.ndarray,
    cfg: CmaConfig,
    noise_variance: float,
    *,
    store_taps: bool = False,
) -> EqualizerRun:
    """Adapt a CMA equalizer (``R = 1``) over ``M`` disjoint blocks, then re-equalize.

    Raises
    ------
    InsufficientSamplesError
        If ``x`` holds fewer than ``M * L`` samples.
    DivergenceError
        If the tap norm exceeds ``DIVERGENCE_NORM``.
    """
    X = blocks(np.asarray(x, dtype=complex), cfg.L, cfg.M)
    w = cfg.initial_taps()
    mu = cfg.mu
    cost = np.empty(cfg.M)
    history = np.empty((cfg.M + 1, cfg.L), dtype=complex) if store_taps else None
    if store_taps:
        history[0] = w
    for i in range(cfg.M):
        xi = X[i]
        y = np.vdot(w, xi)
        e = y.real * y.real + y.imag * y.imag - 1.0
        cost[i] = e * e
        w = w - (mu * e * y.conjugate()) * xi
        if store_taps:
            history[i + 1] = w
        norm = np.sqrt(np.vdot(w, w).real)
        if not norm <= DIVERGENCE_NORM:
            raise DivergenceError(i + 1, norm)

    y_eq = X @ w.conj()
    gamma_raw = estimate_snr(y_eq, w, noise_variance)
    gamma_hat = max(gamma_raw, GAMMA_FLOOR)
    return EqualizerRun(w, y_eq, gamma_hat, gamma_raw, cost, history)


@dataclass(frozen=True)
class ZfEqualizer:
    """Zero-forcing reference equalizer.

    Attributes
    ----------
    taps : ndarray
        Tap vector of length ``L_zf`` in the ``y = w^H x`` convention, i.e. the
        complex conjugate of the inverse-channel impulse response.
    delay : int
        Index ``D`` of the dominant entry of ``w^H H``.
    phase : float
        Phase ``theta`` of that entry.
    approximate : bool
        True when the least-squares fallback was used.
    """

    taps: np.ndarray
    delay: int
    phase: float
    approximate: bool = False

    @property
    def L_zf(self) -> int:
        return self.taps.size

    def response(self, h: ChannelRealization) -> np.ndarray:
        """Combined response ``w^H H`` as a 1-D array."""
        return self.taps.conj() @ toeplitz_channel_matrix(h, self.L_zf)


def _inverse_series(taps: np.ndarray, tolerance: float, length: int | None):
    Q = taps.size
    cap = length if length is not None else LZF_MAX
    r = np.zeros(cap, dtype=complex)
    r[0] = 1.0 / taps[0]
    energy = abs(r[0]) ** 2
    for n in range(1, cap):
        q = np.arange(1, min(n, Q - 1) + 1)
        r[n] = -np.dot(taps[q], r[n - q]) / taps[0]
        energy += abs(r[n]) ** 2
        if length is None and n >= Q - 1:
            window = np.sum(np.abs(r[n - Q + 1 : n + 1]) ** 2)
            if window / energy < tolerance:
                return r[: n + 1]
    if length is None:
        return None
    return r


def _ls_equalizer(taps: np.ndarray, length: int, max_delay: int | None):
    H = toeplitz_channel_matrix(taps, length)
    # w^H H = e_D^T  <=>  H^T conj(w) = e_D; least squares for every D at once
    P = np.linalg.pinv(H.T)
    fit = np.real(np.diag(H.T @ P))
    candidates = fit if max_delay is None else fit[: max_delay + 1]
    D = int(np.argmax(candidates))
    return P[:, D].conj()


def _lzf_guess(taps: np.ndarray, tolerance: float) -> int:
    roots = np.roots(taps) if taps.size > 1 else np.array([])
    if roots.size == 0:
        return 1
    mags = np.abs(roots)
    rho = np.max(np.minimum(mags, 1.0 / np.maximum(mags, 1e-300)))
    if rho >= 1.0 - 1e-9:
        return LZF_MAX
    return int(min(LZF_MAX, np.ceil(np.log(tolerance) / (2 * np.log(rho))) + taps.size))


def zf_taps(
    h: ChannelRealization,
    tolerance: float = 1e-5,
    *,
    length: int | None = None,
    max_delay: int | None = None,
) -> ZfEqualizer:
    """FIR approximation of the zero-forcing equalizer ``1/H(z)``.

    For minimum-phase channels the causal power series of ``1/H(z)`` is
    truncated at the first length where the energy of the latest ``Q`` taps
    drops below ``tolerance`` times the accumulated energy (or at ``length``
    when given). Otherwise a least-squares equalizer of the same length
    is returned and flagged ``approximate``.

    Parameters
    ----------
    h : ChannelRealization
        Channel to invert.
    tolerance : float
        Trailing-energy ratio that ends the series.
    length : int, optional
        Fixed ``L_zf``; overrides ``tolerance``.
    max_delay : int, optional
        Largest delay considered by the least-squares fallback.
    """
    taps = h.taps
    minimum_phase = taps[0] != 0 and (
        taps.size == 1 or np.max(np.abs(np.roots(taps))) < 1.0
    )
    series = _inverse_series(taps, tolerance, length) if minimum_phase else None
    if series is not None:
        w = series.conj()
        approximate = False
    else:
        L_zf = length if length is not None else min(_lzf_guess(taps, tolerance), LZF_LS_MAX)
        logger.debug("channel %s is not minimum phase; least-squares ZF with %d taps", taps, L_zf)
        w = _ls_equalizer(taps, L_zf, max_delay)
        approximate = True
    g = w.conj() @ toeplitz_channel_matrix(taps, w.size)
    span = g if max_delay is None else g[: max_delay + 1]
    D = int(np.argmax(np.abs(span)))
    w.setflags(write=False)
    return ZfEqualizer(w, D, float(np.angle(g[D])), approximate)


def zf_equalize(x: np.ndarray, zf: ZfEqualizer, L: int, M: int | None = None) -> np.ndarray:
    """Apply the first ``L`` ZF taps to consecutive disjoint blocks of ``x``."""
    x = np.asarray(x, dtype=complex)
    if M is None:
        M = x.size // L
    w = np.zeros(L, dtype=complex)
    n = min(L, zf.L_zf)
    w[:n] = zf.taps[:n]
    return blocks(x, L, M) @ w.conj()


def normalize_output(y_eq: np.ndarray, w: np.ndarray, noise_variance: float) -> np.ndarray:
    """Scale ``y_eq`` to unit signal power using the SNR estimator's power split.

    Signal power is estimated as ``mean|y|^2 - |w|^2 sigma_v^2``; it is
    floored at ``GAMMA_FLOOR`` times the noise power.
    """
    noise_power = float(np.vdot(w, w).real) * noise_variance
    signal_power = max(float(np.mean(np.abs(y_eq) ** 2)) - noise_power, GAMMA_FLOOR * noise_power, 1e-300)
    return y_eq / np.sqrt(signal_power)
