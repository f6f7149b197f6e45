from .genotype import (OpKind, BlockSpec, Genotype, GenotypeParseError, SEARCH_SPACES, space_ops,
                       genotype_to_json, genotype_from_json, render_genotype)
from .alpha import AlphaParams, num_edges, edge_index
from .config import MacroConfig, SearchConfig, TrainConfig, DatasetSpec, ExperimentConfig, LossWeights
from .batch import RetrievalBatch
from .evalresult import EvalResult, NoValidQueryError
