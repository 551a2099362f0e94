"""Flow-level simulator for importance- and deadline-aware transport in
BCube datacenter networks."""

from .engine import SimConfig, SimulationTrace, Simulator, run
from .flowmodel import Flow, ResponseUnit, split_flow
from .kernels import BACKEND
from .topology import build_bcube, disjoint_paths, neighbors

__version__ = "0.1.0"

__all__ = [
    "BACKEND", "Flow", "ResponseUnit", "SimConfig", "SimulationTrace", "Simulator",
    "build_bcube", "disjoint_paths", "neighbors", "run", "split_flow",
]
