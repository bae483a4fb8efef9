"""Graph convolution with link attributes, graph kernels and sampled training."""

from .graph import AttributedGraph, Split, load_graph, save_graph, make_split, synth_graph
from .kernels import (KernelConfig, neighbor_feature, neighbor_kernel,
                      neighborhood_kernel, rw_kernel_enumerate, rw_kernel_dp,
                      check_theorem1)
from .layers import LayerStack
from .sampling import SamplePlan, SamplerState
from .training import TrainRun, Model, train, evaluate, contaminate_links

__all__ = [
    "AttributedGraph", "Split", "load_graph", "save_graph", "make_split",
    "synth_graph", "KernelConfig", "neighbor_feature", "neighbor_kernel",
    "neighborhood_kernel", "rw_kernel_enumerate", "rw_kernel_dp",
    "check_theorem1", "LayerStack", "SamplePlan", "SamplerState",
    "TrainRun", "Model", "train", "evaluate", "contaminate_links",
]

__version__ = "0.1.0"
