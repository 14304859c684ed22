"""Blind modulation-level classification with a CMA equalizer and rcK tests."""

__version__ = "0.1.0"

from .signals import Constellation, ModClass, build_constellation, draw_symbols  # noqa: E402
from .channel import (  # noqa: E402
    ChannelModel,
    ChannelRealization,
    NoiseSpec,
    sample_channel,
    toeplitz_channel_matrix,
    transmit,
)
from .equalizer import CmaConfig, EqualizerRun, ZfEqualizer, cma_run, zf_equalize, zf_taps  # noqa: E402
from .distributions import (  # noqa: E402
    FeatureCdfTable,
    FeatureKind,
    ReferenceTables,
    compute_testpoints,
    ecdf_at,
    extract_feature,
    theoretical_cdf,
)
from .classifier import (  # noqa: E402
    ClassificationResult,
    cumulant_c63,
    cumulant_classify,
    rck_classify,
    zf_rck_classify,
)
from .analysis import VarianceBreakdown, analytic_pc, error_variance  # noqa: E402
