"""Matrix-parameter counting distributions and their estimation.

Core objects: the matrix-recursion family (beta, A, B) with terms
p_n = beta P_n 1 (``genab0``), closed forms under commuting parameters
(``commuting``), the PH-Poisson subfamily p_n = beta B^n 1 / n! with its
absorbed-chain interpretation (``phpoisson``), conditioned simulation of
that chain (``simulate``), compound sums (``compound``), and EM fitting
with stationarity diagnostics (``em``).
"""

from . import commuting, compound, em, genab0, linalg, modelio, phpoisson, simulate
from .commuting import CommutingPair
from .compound import PanjerScalarParams, SeverityDensity
from .em import EMParams, SufficientStats
from .errors import ConsistencyError, DivergenceError, SamplingError
from .genab0 import DiscreteDensity, GenAB0Rep, GenAB1Rep
from .phpoisson import PhysicalRep, PHPoissonRep
from .simulate import SimConfig

__all__ = [
    "commuting", "compound", "em", "genab0", "linalg", "modelio",
    "phpoisson", "simulate",
    "CommutingPair", "PanjerScalarParams", "SeverityDensity",
    "EMParams", "SufficientStats",
    "ConsistencyError", "DivergenceError", "SamplingError",
    "DiscreteDensity", "GenAB0Rep", "GenAB1Rep",
    "PhysicalRep", "PHPoissonRep", "SimConfig",
]

__version__ = "0.1.0"
