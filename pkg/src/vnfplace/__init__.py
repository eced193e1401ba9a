"""Delay-aware VNF placement: topology and SFC generation, a greedy
placement oracle, a multi-output CART learner and evaluation tools."""
from .cart import DecisionTree, Hyperparams, cross_validate, fit, grid_search, predict
from .dataset import Dataset, build_dataset, generate_trial, load_dataset, save_dataset
from .evaluation import bench_latency, evaluate_methods
from .oracle import Placement, place_exhaustive, place_greedy, score_placement
from .sfc import SfcSpec, VnfType, network1_spec, network2_spec
from .topology import TopologyConfig, generate_topology
from .trial import NetworkTrial

__version__ = "0.1.0"
