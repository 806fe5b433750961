from nets.checkpoint import load_checkpoint, save_checkpoint
from nets.config import ArchitectureConfig
from nets.depth import depth_forward
from nets.gauss_param import gauss_param_forward
from nets.residual_flow import residual_flow_forward
from nets.weights import NetworkWeights, count_parameters, init_weights
