"""Fair assignment of delivery requests to k servers, offline and online."""

from .errors import KFoodError
from .instance import Instance, Request, gen_partition_instance, gen_synthetic, load_instance
from .metric import MetricSpace, build_metric_space, gen_erdos_renyi
from .metrics import Metrics, evaluate, lorenz_curve

__all__ = [
    "Instance", "KFoodError", "MetricSpace", "Metrics", "Request", "build_metric_space",
    "evaluate", "gen_erdos_renyi", "gen_partition_instance", "gen_synthetic", "load_instance",
    "lorenz_curve",
]
