"""
Reference CDFs and the reduced-complexity Kuiper test
=====================================================

The classifier compares the empirical CDF of a feature with
theoretical CDFs at a handful of testpoints. Here we build the tables
for the QAM set, look at a few testpoints and classify clean blocks.
"""

import tempfile

import numpy as np

from cmarck.channel import complex_normal
from cmarck.classifier import rck_classify
from cmarck.distributions import ReferenceTables
from cmarck.signals import build_constellation, draw_symbols

cache = tempfile.mkdtemp()
tables = ReferenceTables.cached(cache, "qam", (4, 16, 64))

# %%
# Testpoints are where two level CDFs are furthest apart, one on each
# side of their difference.

tp = tables.testpoints[15.0]
for (l, p, delta), t in sorted(tp.points.items()):
    print(f"levels {l:2d} vs {p:2d}  delta={delta}  tau={t:.3f}")

# %%
# Classify 200 equalized-looking samples of each level at 15 dB.

rng = np.random.default_rng(0)
for level in tables.levels:
    y = draw_symbols(build_constellation("qam", level), 200, rng) + complex_normal(rng, 200, 10**-1.5)
    result = rck_classify(y, 10**1.5, tables)
    print(level, "->", result.chosen_level, np.round(result.distances, 3))
