"""Multipath channel models, transmission and Toeplitz channel matrices."""

from __future__ import annotations

import enum
from dataclasses import dataclass
from pathlib import Path

import numpy as np


class ChannelModel(str, enum.Enum):
    CH1 = "ch1"
    CH2 = "ch2"
    CH3 = "ch3"
    CUSTOM = "custom"


# tap variances; CH1 has a fixed unit first tap
CH1_TAP_VARIANCE = 0.05
CH2_TAP_VARIANCES = (0.95, 0.28, 0.11)
CH3_TAPS = (1.0, 0.0, 0.9)


@dataclass(frozen=True)
class ChannelRealization:
    taps: np.ndarray
    model_id: ChannelModel = ChannelModel.CUSTOM

    def __post_init__(self):
        taps = np.atleast_1d(np.asarray(self.taps, dtype=complex))
        if taps.ndim != 1 or taps.size < 1:
            raise ValueError("channel needs at least one tap")
        taps.setflags(write=False)
        object.__setattr__(self, "taps", taps)

    @property
    def Q(self) -> int:
        return self.taps.size

    @property
    def energy(self) -> float:
        return float(np.sum(np.abs(self.taps) ** 2))


@dataclass(frozen=True)
class NoiseSpec:
    """Total complex noise variance ``E|v|^2``."""

    variance: float

    def __post_init__(self):
        if not self.variance >= 0:
            raise ValueError("noise variance must be non-negative")

    @classmethod
    def from_snr_db(cls, snr_db: float) -> "NoiseSpec":
        # transmit SNR: symbol power is one
        return cls(10.0 ** (-snr_db / 10.0))


@dataclass(frozen=True)
class Received:
    """Output of :func:`transmit`.

    ``x[n] = sum_q h[q] * symbols[n - q] + v[n]`` where negative symbol
    indices refer to the warm-up prefix that was consumed.
    """

    x: np.ndarray
    x_clean: np.ndarray
    symbols: np.ndarray
    noise_variance: float


def complex_normal(rng: np.random.Generator, size, variance: float = 1.0) -> np.ndarray:
    """Circular complex Gaussian samples with total variance ``variance``."""
    scale = np.sqrt(variance / 2.0)
    return scale * (rng.standard_normal(size) + 1j * rng.standard_normal(size))


def sample_channel(model_id: ChannelModel | str, rng: np.random.Generator) -> ChannelRealization:
    """Draw one block-fading channel from the named model.

    Taps are not power normalized.
    """
    model_id = ChannelModel(model_id)
    if model_id is ChannelModel.CH1:
        taps = np.concatenate(([1.0 + 0j], complex_normal(rng, 3, CH1_TAP_VARIANCE)))
    elif model_id is ChannelModel.CH2:
        taps = complex_normal(rng, 3) * np.sqrt(CH2_TAP_VARIANCES)
    elif model_id is ChannelModel.CH3:
        taps = np.array(CH3_TAPS, dtype=complex)
    else:
        raise ValueError("custom channels are loaded with load_channel, not sampled")
    return ChannelRealization(taps, model_id)


def transmit(
    s: np.ndarray,
    h: ChannelRealization,
    noise: NoiseSpec,
    rng: np.random.Generator | None = None,
) -> Received:
    """Pass symbols through the channel and add white Gaussian noise.

    The first ``Q - 1`` entries of ``s`` are a warm-up prefix, so the
    returned sequences have ``len(s) - Q + 1`` fully loaded samples.

    Raises
    ------
    ValueError
        If ``s`` is shorter than the channel.
    """
    s = np.asarray(s, dtype=complex)
    if s.size < h.Q:
        raise ValueError(f"need at least {h.Q} symbols for a {h.Q}-tap channel, got {s.size}")
    x_clean = np.convolve(s, h.taps, mode="valid") if h.Q > 1 else s * h.taps[0]
    if noise.variance > 0:
        if rng is None:
            raise ValueError("a random generator is required when noise variance > 0")
        x = x_clean + complex_normal(rng, x_clean.size, noise.variance)
    else:
        x = x_clean.copy()
    return Received(x, x_clean, s[h.Q - 1 :], noise.variance)


def toeplitz_channel_matrix(h: ChannelRealization | np.ndarray, rows: int) -> np.ndarray:
    """Return the ``rows x (rows + Q - 1)`` banded Toeplitz channel matrix.

    Row ``r`` holds ``h[q]`` at column ``r + q``.
    """
    taps = h.taps if isinstance(h, ChannelRealization) else np.asarray(h, dtype=complex)
    if rows < 1:
        raise ValueError("rows must be at least 1")
    Q = taps.size
    H = np.zeros((rows, rows + Q - 1), dtype=complex)
    for r in range(rows):
        H[r, r : r + Q] = taps
    return H


def load_channel(path: str | Path) -> ChannelRealization:
    """Read a custom channel, one ``re im`` tap per line (``#`` comments allowed)."""
    taps = []
    for lineno, line in enumerate(Path(path).read_text().splitlines(), 1):
        line = line.split("#", 1)[0].strip()
        if not line:
            continue
        parts = line.split()
        if len(parts) != 2:
            raise ValueError(f"{path}:{lineno}: expected 're im', got {line!r}")
        taps.append(complex(float(parts[0]), float(parts[1])))
    if not taps:
        raise ValueError(f"{path}: no taps found")
    return ChannelRealization(np.array(taps), ChannelModel.CUSTOM)


def save_channel(h: ChannelRealization, path: str | Path) -> None:
    lines = [f"{float(t.real)!r} {float(t.imag)!r}" for t in h.taps]
    Path(path).write_text("\n".join(lines) + "\n")
