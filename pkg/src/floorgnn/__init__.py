"""Room classification on floor-plan graphs with from-scratch graph neural networks."""

from .data import Dataset, FloorPlanRecord, RoomRecord, WallRecord, clean_dataset, load_dataset, normalize_plan, split_dataset
from .errors import FloorGNNError
from .graph import BatchedGraph, GraphBuildConfig, RoomGraph, batch_graphs, build_graph
from .models import KINDS, Model, ModelConfig, init_model, model_forward, node_embeddings
from .synth import SynthConfig, generate_synthetic
from .training import TrainConfig, depth_sweep, evaluate_accuracy, train
from .vocab import CategoryVocab

__version__ = "0.1.0"
