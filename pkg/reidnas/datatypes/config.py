from __future__ import annotations

import os
from dataclasses import asdict, dataclass, field, fields

from reidnas.datatypes.genotype import space_ops, OpKind


def _section(cfg: dict, name: str) -> dict:
    section = cfg.get(name, dict()) if cfg else dict()
    return section if section else dict()


def _from_section(cls, section: dict):
    known = {f.name for f in fields(cls)}
    unknown = set(section) - known
    if unknown:
        raise ValueError(f'{cls.__name__}: unknown configuration keys {sorted(unknown)}')
    kwargs = {}
    for key, value in section.items():
        kwargs[key] = tuple(value) if isinstance(value, list) else value
    return cls(**kwargs)


@dataclass(frozen=True)
class MacroConfig:
    '''
    Skeleton of the network: a 3x3 stem with ``C`` channels followed by four
    stages of ``l[k]`` cells. The first cell of stages 2-4 is a reduction cell
    that halves the resolution and doubles the width.

    Configuration
    -------------
    C, l, B, input_hw, num_ids, embed_dim, dropout_f, dropout_g
        As in the search/training configurations.
    stem_stride
        Stride of the stem convolution (1 or 2).
    part_count, part_reduction, part_heads
        Part-aware module settings: M parts, body width ``C_stage // part_reduction``,
        attention heads.
    head, pcb_stripes
        ``global`` (pooled f->g->h) or ``pcb``: ``pcb_stripes`` horizontal
        stripes, each with its own embedding and classifier.
    '''
    C: int = 32
    l: tuple = (2, 2, 2, 2)
    B: int = 4
    input_hw: tuple = (384, 128)
    num_ids: int = 751
    embed_dim: int = 512
    dropout_f: float = 0.5
    dropout_g: float = 0.5
    stem_stride: int = 1
    part_count: int = 4
    part_reduction: int = 4
    part_heads: int = 1
    head: str = 'global'
    pcb_stripes: int = 6

    def __post_init__(self):
        object.__setattr__(self, 'l', tuple(int(v) for v in self.l))
        object.__setattr__(self, 'input_hw', tuple(int(v) for v in self.input_hw))
        if self.C < 1:
            raise ValueError(f'C must be >= 1 (given {self.C})')
        if len(self.l) != 4 or min(self.l) < 1:
            raise ValueError(f'l must hold four stage depths >= 1 (given {self.l})')
        if self.B < 1:
            raise ValueError(f'B must be >= 1 (given {self.B})')
        if len(self.input_hw) != 2:
            raise ValueError(f'input_hw must be (height, width) (given {self.input_hw})')
        if self.num_ids < 1 or self.embed_dim < 1:
            raise ValueError('num_ids and embed_dim must be positive')
        for name in ('dropout_f', 'dropout_g'):
            if not 0. <= getattr(self, name) <= 1.:
                raise ValueError(f'{name} must be in [0,1] (given {getattr(self, name)})')
        if self.stem_stride not in (1, 2):
            raise ValueError(f'stem_stride must be 1 or 2 (given {self.stem_stride})')
        if self.part_count < 1 or self.part_reduction < 1 or self.part_heads < 1:
            raise ValueError('part_count, part_reduction and part_heads must be positive')

        height, width = self.input_hw
        factor = 8 * self.stem_stride
        if height % max(16, factor) != 0:
            raise ValueError(f'input height {height} must be divisible by {max(16, factor)}')
        if width % factor != 0:
            raise ValueError(f'input width {width} must be divisible by {factor}')
        if self.head not in ('global', 'pcb'):
            raise ValueError(f'head must be global or pcb (given {self.head})')
        if self.head == 'pcb' and (self.pcb_stripes < 1 or self.stage_hw[-1][0] % self.pcb_stripes):
            raise ValueError(f'last stage height {self.stage_hw[-1][0]} is not divisible by '
                             f'pcb_stripes={self.pcb_stripes}')

    @property
    def stage_widths(self) -> tuple:
        return tuple(self.C * 2**k for k in range(4))

    @property
    def stage_hw(self) -> tuple:
        '''Spatial size at the output of each stage.'''
        height, width = self.input_hw
        height, width = height // self.stem_stride, width // self.stem_stride
        return tuple((height // 2**k, width // 2**k) for k in range(4))

    @property
    def num_cells(self) -> int:
        return sum(self.l)

    @property
    def feature_dim(self) -> int:
        '''Width of f, the pooled backbone output.'''
        return self.stage_widths[-1]

    @property
    def retrieval_dim(self) -> int:
        '''Width of g, the retrieval feature.'''
        return self.embed_dim * (self.pcb_stripes if self.head == 'pcb' else 1)

    def cell_layout(self) -> list:
        '''
        List of ``(stage, reduction)`` for every cell in forward order.
        '''
        layout = []
        for stage, depth in enumerate(self.l):
            for j in range(depth):
                layout.append((stage, stage > 0 and j == 0))
        return layout

    def part_dim(self, width: int) -> int:
        return max(1, width // self.part_reduction)

    def check_space(self, ops):
        '''Reject shapes the part-aware module cannot split.'''
        if OpKind.PART_AWARE in tuple(ops):
            last_height = self.stage_hw[-1][0]
            if last_height % self.part_count != 0:
                raise ValueError(f'last stage height {last_height} is not divisible by '
                                 f'part_count={self.part_count}')

    def with_updates(self, **kwargs) -> MacroConfig:
        values = asdict(self)
        values.update(kwargs)
        return MacroConfig(**values)

    @classmethod
    def from_cfg(cls, cfg: dict) -> MacroConfig:
        return _from_section(cls, _section(cfg, 'macro'))


@dataclass(frozen=True)
class LossWeights:
    lam: float = 0.5
    margin: float = 0.3

    def __post_init__(self):
        if not 0. <= self.lam <= 1.:
            raise ValueError(f'lambda must be in [0,1] (given {self.lam})')
        if self.margin < 0.:
            raise ValueError(f'margin must be non-negative (given {self.margin})')


@dataclass(frozen=True)
class SearchConfig:
    '''
    Bi-level search settings. Defaults follow the published search
    configuration; ``P=4, K=4`` realizes the batch size of 16.
    '''
    epochs: int = 200
    P: int = 4
    K: int = 4
    space: str = 'reid'
    w_lr: float = 0.1
    w_lr_min: float = 0.001
    w_momentum: float = 0.9
    w_weight_decay: float = 5e-4
    a_lr: float = 0.02
    a_milestones: tuple = (60, 150)
    a_gamma: float = 0.1
    a_betas: tuple = (0.9, 0.999)
    a_weight_decay: float = 5e-4
    margin: float = 0.3
    lam: float = 0.5
    alpha_loss: str = 'mixture'
    reduction: str = 'mean'
    split_fraction: float = 0.5
    grad_clip: float = 5.
    seed: int = 0
    deterministic: bool = False
    dtype: str = 'float32'
    num_workers: int = 0

    def __post_init__(self):
        object.__setattr__(self, 'a_milestones', tuple(self.a_milestones))
        object.__setattr__(self, 'a_betas', tuple(self.a_betas))
        if self.epochs < 0:
            raise ValueError(f'epochs must be non-negative (given {self.epochs})')
        if not 0. < self.split_fraction < 1.:
            raise ValueError(f'split fraction must be in (0,1) (given {self.split_fraction})')
        if min(self.w_lr, self.w_lr_min, self.a_lr) <= 0.:
            raise ValueError('all learning rates must be positive')
        if self.P < 2 or self.K < 2:
            raise ValueError(f'PK sampling needs P >= 2 and K >= 2 (given P={self.P}, K={self.K})')
        if self.alpha_loss not in ('mixture', 'triplet', 'softmax'):
            raise ValueError(f'alpha_loss must be mixture, triplet or softmax (given {self.alpha_loss})')
        if self.reduction not in ('sum', 'mean'):
            raise ValueError(f'reduction must be sum or mean (given {self.reduction})')
        if self.dtype not in ('float32', 'float64'):
            raise ValueError(f'dtype must be float32 or float64 (given {self.dtype})')
        space_ops(self.space)
        LossWeights(self.lam, self.margin)

    @property
    def loss_weights(self) -> LossWeights:
        return LossWeights(self.lam, self.margin)

    @classmethod
    def from_cfg(cls, cfg: dict) -> SearchConfig:
        return _from_section(cls, _section(cfg, 'search'))


@dataclass(frozen=True)
class TrainConfig:
    '''
    Final-model training settings. Defaults follow the published
    from-scratch training configuration.
    '''
    epochs: int = 240
    lr: float = 0.0035
    milestones: tuple = (80, 150)
    gamma: float = 0.1
    betas: tuple = (0.9, 0.999)
    weight_decay: float = 5e-4
    P: int = 8
    K: int = 4
    lam: float = 0.5
    margin: float = 0.3
    loss: str = 'mixture'
    reduction: str = 'mean'
    flip: bool = True
    crop: bool = True
    crop_padding: int = 10
    val_fraction: float = 0.1
    eval_every: int = 10
    max_steps: int = 0
    seed: int = 0
    deterministic: bool = False
    dtype: str = 'float32'
    backbone: str = 'genotype'
    num_workers: int = 0

    def __post_init__(self):
        object.__setattr__(self, 'milestones', tuple(self.milestones))
        object.__setattr__(self, 'betas', tuple(self.betas))
        if self.epochs < 0:
            raise ValueError(f'epochs must be non-negative (given {self.epochs})')
        if self.lr <= 0.:
            raise ValueError('learning rate must be positive')
        if any(b <= a for a, b in zip(self.milestones, self.milestones[1:])):
            raise ValueError(f'decay epochs must be strictly increasing (given {self.milestones})')
        if self.epochs > 0 and self.milestones and self.milestones[-1] >= self.epochs:
            raise ValueError(f'decay epochs {self.milestones} must be below epochs={self.epochs}')
        if self.P < 2 or self.K < 2:
            raise ValueError(f'PK sampling needs P >= 2 and K >= 2 (given P={self.P}, K={self.K})')
        if not 0. <= self.val_fraction < 1.:
            raise ValueError(f'val_fraction must be in [0,1) (given {self.val_fraction})')
        if self.loss not in ('mixture', 'triplet', 'softmax'):
            raise ValueError(f'loss must be mixture, triplet or softmax (given {self.loss})')
        if self.reduction not in ('sum', 'mean'):
            raise ValueError(f'reduction must be sum or mean (given {self.reduction})')
        if self.backbone not in ('genotype', 'resnet18', 'resnet34'):
            raise ValueError(f'backbone must be genotype, resnet18 or resnet34 (given {self.backbone})')
        if self.dtype not in ('float32', 'float64'):
            raise ValueError(f'dtype must be float32 or float64 (given {self.dtype})')
        LossWeights(self.lam, self.margin)

    @property
    def loss_weights(self) -> LossWeights:
        return LossWeights(self.lam, self.margin)

    @classmethod
    def from_cfg(cls, cfg: dict) -> TrainConfig:
        return _from_section(cls, _section(cfg, 'train'))


@dataclass(frozen=True)
class DatasetSpec:
    '''
    Where images come from. ``synthetic`` datasets are generated under
    ``root`` by ``reidnas.apps.SyntheticReID`` when missing; ``folder``
    datasets follow the ``root/<identity>/<image>`` layout.
    '''
    kind: str = 'synthetic'
    root: str = 'data/synthetic'
    test_root: str = ''
    test_fraction: float = 0.5
    num_ids: int = 8
    imgs_per_id: int = 16
    image_hw: tuple = (64, 32)
    noise: float = 0.05
    cameras: int = 0
    camera_filter: bool = True
    seed: int = 0

    def __post_init__(self):
        object.__setattr__(self, 'image_hw', tuple(self.image_hw))
        if self.kind not in ('synthetic', 'folder'):
            raise ValueError(f'dataset kind must be synthetic or folder (given {self.kind})')
        if self.kind == 'synthetic' and (self.num_ids < 2 or self.imgs_per_id < 2):
            raise ValueError('synthetic datasets need num_ids >= 2 and imgs_per_id >= 2')
        if not 0. < self.test_fraction < 1.:
            raise ValueError(f'test_fraction must be in (0,1) (given {self.test_fraction})')

    @classmethod
    def from_cfg(cls, cfg: dict) -> DatasetSpec:
        return _from_section(cls, _section(cfg, 'data'))


@dataclass(frozen=True)
class ExperimentConfig:
    macro: MacroConfig = field(default_factory=MacroConfig)
    search: SearchConfig = field(default_factory=SearchConfig)
    train: TrainConfig = field(default_factory=TrainConfig)
    data: DatasetSpec = field(default_factory=DatasetSpec)
    output_dir: str = 'runs'
    seed: int = 0

    @classmethod
    def from_cfg(cls, cfg: dict) -> ExperimentConfig:
        return cls(macro=MacroConfig.from_cfg(cfg),
                   search=SearchConfig.from_cfg(cfg),
                   train=TrainConfig.from_cfg(cfg),
                   data=DatasetSpec.from_cfg(cfg),
                   output_dir=cfg.get('output_dir', 'runs'),
                   seed=int(cfg.get('seed', 0)))

    def check_output_dir(self):
        os.makedirs(self.output_dir, exist_ok=True)
        if not os.access(self.output_dir, os.W_OK):
            raise ValueError(f'output directory {self.output_dir} is not writable')
