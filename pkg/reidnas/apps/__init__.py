from .synthetic import SyntheticReID, generate_synthetic, prepare_data
from .searcher import Searcher, SearchState, run_search
from .trainer import Trainer, train, build_model, load_network, evaluate_network
