from __future__ import annotations

import torch
import torch.nn as nn

from reidnas.algorithms.network import build_head, init_weights
from reidnas.datatypes.config import MacroConfig

RESNET_LAYERS = {
    'resnet18': (2, 2, 2, 2),
    'resnet34': (3, 4, 6, 3),
}
RESNET_WIDTHS = (64, 128, 256, 512)


class BasicBlock(nn.Module):

    def __init__(self, cin: int, cout: int, stride: int = 1):
        super().__init__()
        self.conv1 = nn.Conv2d(cin, cout, 3, stride=stride, padding=1, bias=False)
        self.bn1 = nn.BatchNorm2d(cout)
        self.conv2 = nn.Conv2d(cout, cout, 3, padding=1, bias=False)
        self.bn2 = nn.BatchNorm2d(cout)
        self.relu = nn.ReLU(inplace=False)
        self.downsample = None
        if stride != 1 or cin != cout:
            self.downsample = nn.Sequential(nn.Conv2d(cin, cout, 1, stride=stride, bias=False),
                                            nn.BatchNorm2d(cout))

    def forward(self, x):
        out = self.relu(self.bn1(self.conv1(x)))
        out = self.bn2(self.conv2(out))
        identity = x if self.downsample is None else self.downsample(x)
        return self.relu(out + identity)


class ResNetReID(nn.Module):
    '''
    Hand-designed reference backbone (7x7 stem, max pool, four BasicBlock
    stages) with the same f->g->h head as the searched networks. Only
    ``input_hw``, ``embed_dim``, ``num_ids`` and the dropout rates of the
    macro configuration are used.
    '''

    def __init__(self, macro: MacroConfig, arch: str = 'resnet18', seed: int = 0):
        super().__init__()
        if arch not in RESNET_LAYERS:
            raise ValueError(f'unknown reference backbone {arch!r}, must be one of {list(RESNET_LAYERS)}')
        self.arch = arch
        self.macro = macro
        with torch.random.fork_rng(devices=[]):
            self.stem = nn.Sequential(nn.Conv2d(3, 64, 7, stride=2, padding=3, bias=False),
                                      nn.BatchNorm2d(64),
                                      nn.ReLU(inplace=False),
                                      nn.MaxPool2d(3, stride=2, padding=1))
            stages = []
            cin = 64
            for k, (depth, width) in enumerate(zip(RESNET_LAYERS[arch], RESNET_WIDTHS)):
                blocks = [BasicBlock(cin, width, stride=1 if k == 0 else 2)]
                blocks += [BasicBlock(width, width) for _ in range(depth - 1)]
                stages.append(nn.Sequential(*blocks))
                cin = width
            self.stages = nn.Sequential(*stages)
            self.head = build_head(RESNET_WIDTHS[-1], macro)
        init_weights(self, seed)

    def backbone(self, x):
        return self.stages(self.stem(x))

    def forward(self, x):
        return self.head(self.backbone(x))
