"""Network momentum for futures trend following.

Lead-lag detection, graph learning, signal construction, costed backtests
and bootstrap comparison against a univariate momentum baseline.
"""

__version__ = "0.1.0"

from .errors import ConfigError, ConvergenceError, DataError, InsufficientHistoryError, NetmomError
from .graph import GraphHyperParams, NetworkMatrix, ensemble_network, learn_graph, normalize_graph
from .leadlag import LeadLagMatrix, Method, dtw_align, leadlag_matrix, levy_area, warp_lag
from .market_data import ContractSpec, PricePanel, assemble_panel, load_panel
from .pipeline import MODEL_NAMES, ModelSpec, StrategyParams, run_model, run_models

__all__ = [
    "__version__",
    "ConfigError",
    "ConvergenceError",
    "DataError",
    "InsufficientHistoryError",
    "NetmomError",
    "GraphHyperParams",
    "NetworkMatrix",
    "ensemble_network",
    "learn_graph",
    "normalize_graph",
    "LeadLagMatrix",
    "Method",
    "dtw_align",
    "leadlag_matrix",
    "levy_area",
    "warp_lag",
    "ContractSpec",
    "PricePanel",
    "assemble_panel",
    "load_panel",
    "MODEL_NAMES",
    "ModelSpec",
    "StrategyParams",
    "run_model",
    "run_models",
]
