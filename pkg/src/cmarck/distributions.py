"""Signal features, theoretical feature CDFs, ECDFs and rcK testpoints."""

from __future__ import annotations

import csv
import enum
import hashlib
import itertools
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
from scipy import special, stats

from .signals import Constellation, ModClass, build_constellation

GRID_SIZE = 4096
# oversampling of the phase-difference convolution grid relative to the table grid
PHASE_OVERSAMPLE = 8


class FeatureKind(str, enum.Enum):
    MAGNITUDE = "magnitude"
    PHASE_DIFF = "phase_diff"

    @classmethod
    def for_class(cls, mod_class: ModClass | str) -> "FeatureKind":
        return cls.MAGNITUDE if ModClass(mod_class) is ModClass.QAM else cls.PHASE_DIFF


def wrap_phase(phi: np.ndarray) -> np.ndarray:
    """Wrap angles into ``[-pi, pi)``."""
    return np.mod(np.asarray(phi) + np.pi, 2 * np.pi) - np.pi


def extract_feature(y: np.ndarray, kind: FeatureKind | str) -> np.ndarray:
    """Magnitude ``|y(i)|`` or consecutive phase difference of ``y``.

    Phase differences are taken along the last axis, so a 2-D input is
    treated as a batch of sequences.
    """
    y = np.asarray(y)
    kind = FeatureKind(kind)
    if y.size == 0:
        raise ValueError("cannot extract features from an empty sequence")
    if kind is FeatureKind.MAGNITUDE:
        return np.abs(y)
    if y.shape[-1] < 2:
        raise ValueError("phase-difference feature needs at least two samples")
    phase = np.angle(y)
    return wrap_phase(phase[..., 1:] - phase[..., :-1])


def ecdf_at(samples: np.ndarray, t) -> np.ndarray | float:
    """Fraction of ``samples`` that are ``<= t`` (``t`` scalar or array)."""
    samples = np.sort(np.asarray(samples, dtype=float).ravel())
    if samples.size == 0:
        raise ValueError("ECDF of an empty sample")
    out = np.searchsorted(samples, t, side="right") / samples.size
    return float(out) if np.ndim(out) == 0 else out


def snr_to_noise_variance(snr_db: float) -> float:
    return 10.0 ** (-snr_db / 10.0)


@dataclass(frozen=True)
class FeatureCdfTable:
    """Tabulated CDF of the feature of ``s + g`` for one level and SNR.

    ``values[j]`` is ``Pr(f(s + g) <= grid[j])``.
    """

    level: int
    snr_db: float
    kind: FeatureKind
    grid: np.ndarray = field(repr=False)
    values: np.ndarray = field(repr=False)
    method: str = ""

    def __post_init__(self):
        grid, values = np.asarray(self.grid, float), np.asarray(self.values, float)
        if grid.shape != values.shape or grid.ndim != 1:
            raise ValueError("grid and values must be 1-D arrays of equal length")
        if np.any(np.diff(grid) <= 0):
            raise ValueError("grid must be strictly increasing")
        if np.any(np.diff(values) < 0) or values[0] < 0 or values[-1] > 1:
            raise ValueError("CDF values must be nondecreasing within [0, 1]")

    def __call__(self, t) -> np.ndarray:
        """Linear interpolation between grid points, clamped at the ends."""
        return np.interp(t, self.grid, self.values)


def magnitude_grid(constellations, snr_db: float, grid_size: int = GRID_SIZE) -> np.ndarray:
    """Common magnitude grid ``[0, max|c| + 5 sigma_g]`` for a level set."""
    sigma = np.sqrt(snr_to_noise_variance(snr_db))
    rmax = max(np.max(np.abs(c.points)) for c in constellations)
    return np.linspace(0.0, rmax + 5.0 * sigma, grid_size)


def phase_grid(grid_size: int = GRID_SIZE) -> np.ndarray:
    return -np.pi + 2 * np.pi * np.arange(grid_size) / grid_size


def magnitude_cdf(c: Constellation, noise_var: float, grid) -> np.ndarray:
    """``Pr(|s + g| <= t)`` for ``g ~ CN(0, noise_var)``, an equal-weight Rician mixture."""
    grid = np.asarray(grid, dtype=float)
    radii, counts = np.unique(np.round(np.abs(c.points), 12), return_counts=True)
    scale = np.sqrt(noise_var / 2.0)
    out = np.zeros_like(grid)
    for r, n in zip(radii, counts):
        if r / scale > 1e4:
            # scipy's Rician CDF breaks down here; the Gaussian limit is exact to ~1e-5
            out += n * stats.norm.cdf(grid, loc=r, scale=scale)
        else:
            out += n * stats.rice.cdf(grid, r / scale, scale=scale)
    return np.clip(out / c.order, 0.0, 1.0)


def noisy_phase_density(phi: np.ndarray, rho: float) -> np.ndarray:
    """Density of ``arg(1 + g)`` for ``g ~ CN(0, 1/rho)``."""
    cos = np.cos(phi)
    sin2 = np.sin(phi) ** 2
    return (
        np.exp(-rho)
        + np.sqrt(np.pi * rho) * cos * np.exp(-rho * sin2) * special.erfc(-np.sqrt(rho) * cos)
    ) / (2 * np.pi)


def _phase_diff_cdf(c: Constellation, noise_var: float, grid_size: int) -> np.ndarray:
    n = grid_size * PHASE_OVERSAMPLE
    step = 2 * np.pi / n
    # point masses at k*step, k = 0..n-1 (angles modulo 2 pi)
    pts = step * np.arange(n)
    if c.mod_class is not ModClass.PSK:
        raise ValueError("phase-difference tables are defined for PSK constellations")
    rho = 1.0 / noise_var
    mass = noisy_phase_density(wrap_phase(pts), rho)
    mass /= mass.sum()
    # difference of two independent noisy phases: circular autocorrelation
    spec = np.fft.fft(mass)
    diff = np.fft.ifft(spec * spec.conj()).real
    # equiprobable symbol differences 2 pi m / M
    shift = n // c.order
    total = np.zeros(n)
    for m in range(c.order):
        total += np.roll(diff, m * shift)
    total = np.clip(total / c.order, 0.0, None)
    total /= total.sum()
    # reorder onto [-pi, pi): index j <-> angle -pi + j*step
    ordered = np.roll(total, n // 2)
    # trapezoid rule: a point mass sitting on a grid point counts half
    cdf_fine = np.cumsum(ordered) - 0.5 * ordered
    cdf = cdf_fine[::PHASE_OVERSAMPLE]
    return np.clip(np.maximum.accumulate(cdf), 0.0, 1.0)


def theoretical_cdf(
    c: Constellation,
    snr_db: float,
    kind: FeatureKind | str,
    grid_size: int = GRID_SIZE,
    *,
    grid: np.ndarray | None = None,
) -> FeatureCdfTable:
    """Tabulate the CDF of the feature of ``s + g``, ``g ~ CN(0, 10^(-snr/10))``.

    The magnitude CDF is an equal-weight mixture of Rician CDFs, one per
    constellation radius. The phase-difference CDF comes from the exact
    density of a noisy symbol's phase, autocorrelated by FFT on an
    oversampled circle and mixed over the symbol-difference lattice.

    Parameters
    ----------
    grid : ndarray, optional
        Magnitude grid to evaluate on; defaults to ``magnitude_grid([c])``.
        Ignored for the phase-difference feature, whose grid is fixed.
    """
    kind = FeatureKind(kind)
    if not np.isfinite(snr_db):
        raise ValueError("snr_db must be finite")
    if grid_size < 256:
        raise ValueError("grid_size must be at least 256")
    noise_var = snr_to_noise_variance(snr_db)
    if kind is FeatureKind.MAGNITUDE:
        if grid is None:
            grid = magnitude_grid([c], snr_db, grid_size)
        values = magnitude_cdf(c, noise_var, grid)
        method = "rician-mixture"
    else:
        grid = phase_grid(grid_size)
        values = _phase_diff_cdf(c, noise_var, grid_size)
        method = f"phase-density-fft-x{PHASE_OVERSAMPLE}"
    return FeatureCdfTable(c.order, float(snr_db), kind, grid, values, method)


@dataclass(frozen=True)
class TestpointTable:
    """Testpoints ``t[(l, p, delta)]`` for ordered level pairs ``l < p`` at one SNR."""

    __test__ = False  # not a pytest class

    snr_db: float
    points: dict

    def for_level(self, level: int, delta: int) -> np.ndarray:
        """Testpoints of ``level`` with sign ``delta`` against every other level.

        ``t_lp^(delta) = t_pl^(1 - delta)``, so pairs stored as ``(p, l)``
        contribute their opposite-sign entry.
        """
        out = []
        for (l, p, d), t in self.points.items():
            if l == level and d == delta:
                out.append(t)
            elif p == level and d == 1 - delta:
                out.append(t)
        return np.array(out)


def compute_testpoints(tables, K: int | None = None) -> TestpointTable:
    """Grid points of maximal positive and negative deviation for every level pair.

    Ties resolve to the smallest grid value.

    Raises
    ------
    ValueError
        If the tables do not share one grid and SNR.
    """
    tables = list(tables)
    if K is not None and K != len(tables):
        raise ValueError(f"expected {K} tables, got {len(tables)}")
    grid = tables[0].grid
    for t in tables[1:]:
        if t.snr_db != tables[0].snr_db or not np.array_equal(t.grid, grid):
            raise ValueError("all tables must share the same grid and SNR point")
    points = {}
    for a, b in itertools.combinations(tables, 2):
        dev = a.values - b.values
        points[(a.level, b.level, 0)] = float(grid[np.argmax(dev)])
        points[(a.level, b.level, 1)] = float(grid[np.argmax(-dev)])
    return TestpointTable(tables[0].snr_db, points)


SNR_GRID_DB = tuple(float(s) for s in range(-5, 26))


class ReferenceTables:
    """Theoretical CDFs and testpoints of a level set over an SNR grid.

    Parameters
    ----------
    mod_class : ModClass or str
        Modulation class shared by all candidate levels.
    levels : sequence of int
        Candidate modulation orders.
    snr_grid_db : sequence of float
        SNR points (dB) at which tables are built.
    grid_size : int
        Number of feature grid points per table.
    """

    def __init__(self, mod_class, levels, snr_grid_db=SNR_GRID_DB, grid_size=GRID_SIZE, *, cdfs=None, testpoints=None):
        self.mod_class = ModClass(mod_class)
        self.levels = tuple(sorted(int(l) for l in levels))
        self.snr_grid_db = np.array(sorted(float(s) for s in snr_grid_db))
        self.grid_size = int(grid_size)
        self.kind = FeatureKind.for_class(self.mod_class)
        self.constellations = {l: build_constellation(self.mod_class, l) for l in self.levels}
        if cdfs is None:
            cdfs, testpoints = self._build()
        self.cdfs = cdfs
        self.testpoints = testpoints

    def _build(self):
        cdfs, testpoints = {}, {}
        consts = list(self.constellations.values())
        for snr in self.snr_grid_db:
            grid = (
                magnitude_grid(consts, snr, self.grid_size)
                if self.kind is FeatureKind.MAGNITUDE
                else None
            )
            per_level = {
                l: theoretical_cdf(c, snr, self.kind, self.grid_size, grid=grid)
                for l, c in self.constellations.items()
            }
            cdfs[float(snr)] = per_level
            testpoints[float(snr)] = compute_testpoints(per_level.values(), len(self.levels))
        return cdfs, testpoints

    def nearest_snr(self, gamma: float) -> tuple[float, bool]:
        """Grid SNR (dB) nearest to linear SNR ``gamma`` and a low-confidence flag.

        The flag is set when ``gamma`` falls below the grid.
        """
        gamma_db = 10.0 * np.log10(gamma) if gamma > 0 else -np.inf
        clipped = np.clip(gamma_db, self.snr_grid_db[0], self.snr_grid_db[-1])
        idx = int(np.argmin(np.abs(self.snr_grid_db - clipped)))
        low = not gamma_db >= self.snr_grid_db[0]
        return float(self.snr_grid_db[idx]), bool(low)

    @property
    def cache_key(self) -> str:
        text = f"{self.mod_class.value}|{self.levels}|{self.snr_grid_db.tolist()}|{self.grid_size}|{PHASE_OVERSAMPLE}"
        digest = hashlib.sha1(text.encode()).hexdigest()[:12]
        return f"{self.mod_class.value}-{'-'.join(map(str, self.levels))}-{digest}"

    # -- persistence -------------------------------------------------------

    def save(self, directory) -> None:
        """Write ``cdf.csv`` and ``testpoints.csv`` into ``directory``."""
        d = Path(directory)
        d.mkdir(parents=True, exist_ok=True)
        with open(d / "cdf.csv", "w") as fh:
            fh.write("mod_class,level,snr_db,kind,tau,cdf\n")
            for snr, per_level in self.cdfs.items():
                for l, tab in per_level.items():
                    prefix = f"{self.mod_class.value},{l},{snr:g},{self.kind.value},"
                    fh.writelines(
                        f"{prefix}{t!r},{v!r}\n" for t, v in zip(tab.grid.tolist(), tab.values.tolist())
                    )
        with open(d / "testpoints.csv", "w") as fh:
            fh.write("mod_class,snr_db,kind,l,p,delta,testpoint\n")
            for snr, tp in self.testpoints.items():
                for (l, p, delta), t in tp.points.items():
                    fh.write(f"{self.mod_class.value},{snr:g},{self.kind.value},{l},{p},{delta},{t!r}\n")

    @classmethod
    def load(cls, directory, mod_class, levels, snr_grid_db=SNR_GRID_DB, grid_size=GRID_SIZE):
        """Read tables written by :meth:`save`; raises ``FileNotFoundError`` or ``ValueError``."""
        d = Path(directory)
        kind = FeatureKind.for_class(mod_class)
        data = np.genfromtxt(d / "cdf.csv", delimiter=",", skip_header=1, usecols=(1, 2, 4, 5))
        data = np.atleast_2d(data)
        cdfs = {}
        for snr in snr_grid_db:
            cdfs[float(snr)] = {}
            for l in sorted(levels):
                rows = data[(data[:, 0] == l) & (data[:, 1] == snr)]
                if rows.shape[0] != grid_size:
                    raise ValueError(f"cache {d} lacks a {grid_size}-point table for level {l} at {snr} dB")
                cdfs[float(snr)][int(l)] = FeatureCdfTable(int(l), float(snr), kind, rows[:, 2], rows[:, 3], "cached")
        testpoints = {float(s): {} for s in snr_grid_db}
        with open(d / "testpoints.csv", newline="") as fh:
            for row in csv.DictReader(fh):
                snr = float(row["snr_db"])
                if snr in testpoints:
                    key = (int(row["l"]), int(row["p"]), int(row["delta"]))
                    testpoints[snr][key] = float(row["testpoint"])
        testpoints = {s: TestpointTable(s, pts) for s, pts in testpoints.items()}
        return cls(mod_class, levels, snr_grid_db, grid_size, cdfs=cdfs, testpoints=testpoints)

    @classmethod
    def cached(cls, cache_dir, mod_class, levels, snr_grid_db=SNR_GRID_DB, grid_size=GRID_SIZE, *, rebuild=False, build=True):
        """Load tables from ``cache_dir/<cache_key>`` or build and store them.

        Raises ``FileNotFoundError`` when the cache is missing and ``build`` is False.
        """
        probe = cls.__new__(cls)
        probe.mod_class, probe.levels = ModClass(mod_class), tuple(sorted(levels))
        probe.snr_grid_db, probe.grid_size = np.array(sorted(map(float, snr_grid_db))), grid_size
        target = Path(cache_dir) / probe.cache_key
        if not rebuild and (target / "cdf.csv").exists() and (target / "testpoints.csv").exists():
            try:
                return cls.load(target, mod_class, levels, snr_grid_db, grid_size)
            except ValueError:
                if not build:
                    raise
        elif not build:
            raise FileNotFoundError(f"no table cache at {target}")
        tables = cls(mod_class, levels, snr_grid_db, grid_size)
        tables.save(target)
        return tables
