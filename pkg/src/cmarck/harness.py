"""Monte Carlo experiments: accuracy sweeps and the CDF-match experiment."""

from __future__ import annotations

import csv
import enum
import json
import logging
from collections import Counter
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, field, replace
from pathlib import Path

import numpy as np
from scipy import stats
from statsmodels.stats.proportion import proportion_confint

from . import __version__
from .analysis import error_variance
from .channel import (
    ChannelModel,
    ChannelRealization,
    NoiseSpec,
    sample_channel,
    transmit,
)
from .classifier import UnsupportedError, cumulant_classify, rck_classify, zf_rck_classify
from .distributions import SNR_GRID_DB, ReferenceTables, magnitude_cdf
from .equalizer import CmaConfig, cma_run, normalize_output
from .signals import ConfigurationError, ModClass, build_constellation, draw_symbols

logger = logging.getLogger(__name__)

DEFAULT_CACHE = Path.home() / ".cache" / "cmarck"
DEFAULT_LEVELS = {ModClass.QAM: (4, 16, 64), ModClass.PSK: (2, 4, 8)}


class Classifier(str, enum.Enum):
    CMA_RCK = "cma-rck"
    ZF_RCK = "zf-rck"
    C63 = "c63"


@dataclass(frozen=True)
class ExperimentConfig:
    """Parameters of an accuracy sweep.

    SNR is transmit SNR, ``1 / sigma_v^2`` with unit symbol power.
    ``custom_taps`` replaces the channel model with fixed taps.
    """

    mod_class: ModClass = ModClass.QAM
    levels: tuple = (4, 16, 64)
    channel_model: ChannelModel = ChannelModel.CH1
    snr_grid_db: tuple = (20.0,)
    L: int = 20
    M: int = 200
    mu: float = 1e-4
    realizations: int = 500
    master_seed: int = 0
    classifiers: tuple = (Classifier.CMA_RCK,)
    output_path: str | None = None
    custom_taps: tuple | None = None
    lzf_tolerance: float = 1e-5
    normalize_power: bool = False
    noiseless: bool = False

    def __post_init__(self):
        set_ = object.__setattr__
        set_(self, "mod_class", ModClass(self.mod_class))
        set_(self, "channel_model", ChannelModel(self.channel_model))
        set_(self, "levels", tuple(sorted(int(l) for l in self.levels)))
        set_(self, "snr_grid_db", tuple(float(s) for s in self.snr_grid_db))
        set_(self, "classifiers", tuple(Classifier(c) for c in self.classifiers))
        if self.custom_taps is not None:
            set_(self, "custom_taps", tuple(complex(t) for t in self.custom_taps))
        if self.realizations < 1:
            raise ConfigurationError("realizations must be at least 1")
        if not self.levels:
            raise ConfigurationError("at least one candidate level is required")
        if not self.snr_grid_db:
            raise ConfigurationError("the SNR grid is empty")
        if not self.classifiers:
            raise ConfigurationError("no classifiers selected")
        for l in self.levels:
            build_constellation(self.mod_class, l)
        if Classifier.C63 in self.classifiers and self.mod_class is not ModClass.QAM:
            raise UnsupportedError("cumulant baseline unsupported for PSK (4- and 8-PSK share one C63)")
        if self.channel_model is ChannelModel.CUSTOM and self.custom_taps is None:
            raise ConfigurationError("custom channel model needs custom_taps")

    def channel(self, rng: np.random.Generator) -> ChannelRealization:
        if self.custom_taps is not None:
            return ChannelRealization(np.array(self.custom_taps), ChannelModel.CUSTOM)
        return sample_channel(self.channel_model, rng)

    def to_json(self) -> dict:
        d = asdict(self)
        d["mod_class"] = self.mod_class.value
        d["channel_model"] = self.channel_model.value
        d["classifiers"] = [c.value for c in self.classifiers]
        if self.custom_taps is not None:
            d["custom_taps"] = [[t.real, t.imag] for t in self.custom_taps]
        return d


def realization_rngs(master_seed: int, index: int, n_snr: int):
    """Independent generators for one realization.

    The first drives channel, level and symbols and is shared by every SNR
    point; the rest drive the noise at each SNR point.
    """
    children = np.random.SeedSequence(entropy=master_seed, spawn_key=(index,)).spawn(n_snr + 1)
    return [np.random.default_rng(c) for c in children]


def simulate_realization(cfg: ExperimentConfig, tables: ReferenceTables | None, index: int) -> list[tuple]:
    """Run every classifier at every SNR on one channel and symbol block.

    Returns ``(snr_db, classifier, true_level, predicted_level)`` tuples.
    """
    rng_sig, *rng_noise = realization_rngs(cfg.master_seed, index, len(cfg.snr_grid_db))
    h = cfg.channel(rng_sig)
    level = cfg.levels[int(rng_sig.integers(len(cfg.levels)))]
    c = build_constellation(cfg.mod_class, level)
    s = draw_symbols(c, cfg.M * cfg.L + h.Q - 1, rng_sig)
    cma_cfg = CmaConfig(L=cfg.L, mu=cfg.mu, M=cfg.M)
    rows = []
    for snr_db, rng in zip(cfg.snr_grid_db, rng_noise):
        noise = NoiseSpec(0.0) if cfg.noiseless else NoiseSpec.from_snr_db(snr_db)
        rx = transmit(s, h, noise, rng)
        for clf in cfg.classifiers:
            if clf is Classifier.CMA_RCK:
                run = cma_run(rx.x, cma_cfg, noise.variance)
                y = normalize_output(run.y_eq, run.w_M, noise.variance) if cfg.normalize_power else run.y_eq
                pred = rck_classify(y, run.gamma_hat, tables).chosen_level
            elif clf is Classifier.ZF_RCK:
                pred = zf_rck_classify(rx.x, h, noise.variance, cfg.L, cfg.M, tables, cfg.lzf_tolerance).chosen_level
            else:
                pred = cumulant_classify(rx.x, cfg.levels, cfg.mod_class).chosen_level
            rows.append((snr_db, clf.value, level, pred))
    return rows


def _simulate_chunk(args):
    cfg, tables, indices = args
    out = []
    for i in indices:
        out.extend(simulate_realization(cfg, tables, i))
    return out


@dataclass
class ExperimentResult:
    """Confusion counts keyed by ``(snr_db, classifier, true_level, predicted_level)``."""

    config: ExperimentConfig
    counts: Counter = field(default_factory=Counter)

    def pc(self, classifier: Classifier | str, snr_db: float) -> float:
        n, correct = self._tally(Classifier(classifier).value, float(snr_db))
        return correct / n if n else float("nan")

    def _tally(self, clf: str, snr: float):
        n = correct = 0
        for (s, c, t, p), k in self.counts.items():
            if s == snr and c == clf:
                n += k
                correct += k if t == p else 0
        return n, correct

    def summary(self) -> list[dict]:
        """Accuracy with Wilson 95% half-width per ``(classifier, snr)``."""
        out = []
        for clf in self.config.classifiers:
            for snr in self.config.snr_grid_db:
                n, correct = self._tally(clf.value, snr)
                lo, hi = proportion_confint(correct, n, alpha=0.05, method="wilson")
                out.append(
                    {"classifier": clf.value, "snr_db": snr, "pc": correct / n, "ci_halfwidth": (hi - lo) / 2, "n": n}
                )
        return out

    def confusion_rows(self) -> list[tuple]:
        cfg = self.config
        rows = []
        for (snr, clf, t, p), k in sorted(self.counts.items()):
            rows.append((cfg.channel_model.value, cfg.mod_class.value, snr, clf, t, p, k))
        return rows

    def write(self, path: str | Path, metadata: bool = True) -> tuple[Path, Path]:
        """Write the confusion CSV, ``<stem>.summary.csv`` and optionally a JSON sidecar."""
        path = Path(path)
        path.parent.mkdir(parents=True, exist_ok=True)
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(["channel_model", "mod_class", "snr_db", "classifier", "true_level", "predicted_level", "count"])
            for row in self.confusion_rows():
                w.writerow([row[0], row[1], f"{row[2]:g}", *row[3:]])
        summary_path = path.with_name(path.stem + ".summary.csv")
        with open(summary_path, "w", newline="") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(["classifier", "snr_db", "pc", "ci_halfwidth", "n"])
            for r in self.summary():
                w.writerow([r["classifier"], f"{r['snr_db']:g}", f"{r['pc']:.6f}", f"{r['ci_halfwidth']:.6f}", r["n"]])
        if metadata:
            meta = {
                "config": self.config.to_json(),
                "snr_definition": "transmit SNR = 1/sigma_v^2 with unit symbol power",
                "version": __version__,
            }
            path.with_name(path.stem + ".meta.json").write_text(json.dumps(meta, indent=2) + "\n")
        return path, summary_path


def load_tables(cfg: ExperimentConfig, cache_dir=DEFAULT_CACHE, *, rebuild=False, build=True) -> ReferenceTables:
    return ReferenceTables.cached(cache_dir, cfg.mod_class, cfg.levels, SNR_GRID_DB, rebuild=rebuild, build=build)


def run_experiment(
    cfg: ExperimentConfig,
    tables: ReferenceTables | None = None,
    *,
    workers: int = 1,
    cache_dir=DEFAULT_CACHE,
) -> ExperimentResult:
    """Monte Carlo accuracy sweep; deterministic in ``cfg.master_seed`` for any ``workers``."""
    needs_tables = any(c is not Classifier.C63 for c in cfg.classifiers)
    if tables is None and needs_tables:
        tables = load_tables(cfg, cache_dir)
    result = ExperimentResult(cfg)
    indices = list(range(cfg.realizations))
    if workers <= 1:
        chunks = [_simulate_chunk((cfg, tables, indices))]
    else:
        parts = [indices[k::workers] for k in range(workers)]
        with ProcessPoolExecutor(max_workers=workers) as pool:
            chunks = list(pool.map(_simulate_chunk, [(cfg, tables, p) for p in parts]))
    for rows in chunks:
        result.counts.update(rows)
    if cfg.output_path:
        result.write(cfg.output_path)
    return result


# -- CDF match experiment -------------------------------------------------


@dataclass
class Fig1Point:
    snr_db: float
    variance_full: float
    variance_no_isi: float
    sup_full: float
    sup_no_isi: float
    model_gap: float
    grid: np.ndarray = field(repr=False)
    empirical: np.ndarray = field(repr=False)
    model_full: np.ndarray = field(repr=False)
    model_no_isi: np.ndarray = field(repr=False)


def run_fig1(
    snr_list=(0.0, 20.0),
    *,
    taps=(1.0, 0.0, 0.9),
    level: int = 16,
    L: int = 20,
    L_zf: int = 90,
    mu: float = 1e-4,
    M: int = 10_000,
    seed: int = 0,
    output_path: str | Path | None = None,
    grid_size: int = 1024,
) -> list[Fig1Point]:
    """Compare the CDF of ``|y_eq|`` with the error-model CDF of ``|s + eps|``.

    The model is evaluated with the full error variance and with the
    residual-ISI term removed; sup-distances are exact KS statistics of
    the equalized magnitudes against each model.
    """
    c = build_constellation(ModClass.QAM, level)
    h = ChannelRealization(np.array(taps, dtype=complex))
    points = []
    for k, snr_db in enumerate(snr_list):
        rng = np.random.default_rng(np.random.SeedSequence(entropy=seed, spawn_key=(k,)))
        noise = NoiseSpec.from_snr_db(snr_db)
        s = draw_symbols(c, M * L + h.Q - 1, rng)
        rx = transmit(s, h, noise, rng)
        run = cma_run(rx.x, CmaConfig(L=L, mu=mu, M=M), noise.variance)
        mags = np.abs(run.y_eq)
        full = error_variance(c, mu, h, L, noise.variance, L_zf=L_zf)
        no_isi = replace(full, residual_isi=0.0)
        def cdf_full(t, var=full.total):
            return magnitude_cdf(c, var, t)

        def cdf_no(t, var=no_isi.total):
            return magnitude_cdf(c, var, t)

        grid = np.linspace(0.0, max(mags.max(), 1.0) * 1.05, grid_size)
        emp = np.searchsorted(np.sort(mags), grid, side="right") / mags.size
        mf, mn = cdf_full(grid), cdf_no(grid)
        points.append(
            Fig1Point(
                snr_db=float(snr_db),
                variance_full=full.total,
                variance_no_isi=no_isi.total,
                sup_full=float(stats.kstest(mags, cdf_full).statistic),
                sup_no_isi=float(stats.kstest(mags, cdf_no).statistic),
                model_gap=float(np.max(np.abs(mf - mn))),
                grid=grid,
                empirical=emp,
                model_full=mf,
                model_no_isi=mn,
            )
        )
    if output_path is not None:
        write_fig1(points, output_path)
    return points


def write_fig1(points: list[Fig1Point], path: str | Path) -> None:
    """Long-format CSV ``snr_db,curve,tau,cdf`` followed by nothing else."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["snr_db", "curve", "tau", "cdf"])
        for p in points:
            for name, values in (("empirical", p.empirical), ("model_full", p.model_full), ("model_no_isi", p.model_no_isi)):
                for t, v in zip(p.grid, values):
                    w.writerow([f"{p.snr_db:g}", name, f"{t:.6g}", f"{v:.6g}"])
