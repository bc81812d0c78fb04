"""Simulator for stochastic gradient coding and straggler-tolerant distributed GD."""
from .assignment import Assignment, DegreeProfile, assign_replicated, replication_degrees
from .datagen import Dataset, SynthConfig, generate_synthetic, load_csv
from .engine import RunTrace, Scheme, SchemeSpec, run_scheme, simulate
from .experiments import ExperimentConfig, error_floor, run_experiment, write_traces
from .straggler import StragglerModel

__version__ = "0.1.0"
