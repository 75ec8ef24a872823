"""Node regression on latent position graphs.

Graphical Nadaraya-Watson (GNW) averages the labels of graph neighbours;
estimated-distance Nadaraya-Watson (ENW) first recovers latent positions from
the adjacency matrix and then runs ordinary kernel smoothing on them.
"""
from .estimators import (
    AveragingKernel,
    BandwidthGrid,
    Prediction,
    enw_predict,
    gnw_predict,
    loocv_bandwidth,
    nw_predict,
)
from .model import (
    DensitySpec,
    Graph,
    LabelVector,
    LatentSample,
    LinkKernel,
    NoiseSpec,
    RegressionFunction,
    sample_graph,
    sample_labels,
    sample_positions,
)
from .recovery import DisconnectedGraphError, SpectralConfig, recover

__version__ = "0.1.0"
