from .h5file import SearchHistoryFile
from .dataset import DatasetIndex, ReIDDataset, load_folder, split_dataset, split_identities
from .augment import FlipCrop
from .checkpoint import save_checkpoint, load_checkpoint
from .featdump import write_features, read_features
