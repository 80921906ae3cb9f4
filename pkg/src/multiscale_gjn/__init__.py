"""Multi-scale heavy-traffic laboratory for generalized Jackson networks."""

from .errors import (DeadStation, EventOverflow, GJNError, GridMismatch,
                     NegativeStart, NoConvergence, NotMMatrix, NotPSD,
                     SingularBlock, SingularRouting, SpecError, TooFewSamples)
from .network_model import (DistributionSpec, NetworkSpec, ScaleRegime,
                            load_spec, loads_spec, service_rates, solve_traffic,
                            validate)

__version__ = "0.1.0"
