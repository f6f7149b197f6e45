from .derivation import derive_genotype
from .partaware import PartAware, PartAwareConfig, PartAwareParams, part_aware_forward, part_aware_cost
from .operations import MixedEdge, build_op, mixed_edge_forward
from .network import PCBHead, ReIDNetwork, build_head, cell_plan
from .supernet import Supernet
from .resnet import ResNetReID
from .cost import count_params_flops, cost_breakdown, resnet_cost, count_parameters
from .criterion import RetrievalLoss, DivergenceError, softmax_ce, stripe_ce, batch_hard_triplet, mixture_loss
from .sampler import PKSampler, pk_sample
from .retrieval import evaluate, extract_features, split_query_gallery
