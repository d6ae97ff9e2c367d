"""Exact lifted Bayesian filtering over anonymous and identified entities."""
from .distributions import Categorical, Dirac, Urn
from .engine import FilterConfig, LiftedBeliefState, LiftedFilter, Metrics, predict, query, step, update
from .errors import ExplosionGuard, ImpossibleObservation, LiftedFilterError
from .observations import Observation, SensorSpec
from .state import LiftedState, canonicalize, ground, split_on_slot_value, validate

__version__ = "0.1.0"
