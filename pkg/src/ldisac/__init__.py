"""Near-field ISAC simulation with scatterer-based location deception.

Subpackages mirror the processing chain: ``scene`` (geometry and scenario
files), ``channel`` (spherical-wave channels), ``txdesign`` (secure
covariance optimization and hybrid beamforming), ``estimation``
(receiver-side estimators), ``analysis`` (KLD / CRB / RMSE security
metrics), and ``harness`` (experiment runner behind the CLI).
"""

from . import analysis, channel, estimation, harness, scene, txdesign
from .channel import ChannelSet, build_channels, steering_vector
from .estimation import EchoFrame, EstimationResult, GridSpec, SpectrumGrid
from .harness import ExperimentSpec, run
from .scene import (
    ArrayGeometry,
    PolarLocation,
    Scenario,
    SceneConfig,
    load_scenario,
    validate_scene,
)
from .txdesign import CovarianceDesign, HybridDesign, TradeoffWeights, optimize

__version__ = "0.1.0"

__all__ = [
    "analysis", "channel", "estimation", "harness", "scene", "txdesign",
    "ArrayGeometry", "PolarLocation", "Scenario", "SceneConfig",
    "load_scenario", "validate_scene",
    "ChannelSet", "build_channels", "steering_vector",
    "CovarianceDesign", "HybridDesign", "TradeoffWeights", "optimize",
    "EchoFrame", "EstimationResult", "GridSpec", "SpectrumGrid",
    "ExperimentSpec", "run",
    "__version__",
]
