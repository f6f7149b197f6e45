from __future__ import annotations

from dataclasses import dataclass

import torch


@dataclass
class RetrievalBatch:
    '''
    A batch of images with their identity labels.

    Shapes
    ------
    images: (N,3,H,W)
    labels: (N,) contiguous identity indices
    indices: (N,) positions in the source dataset
    cams: (N,) camera ids, -1 when unknown
    '''
    images: torch.Tensor
    labels: torch.Tensor
    indices: torch.Tensor
    cams: torch.Tensor = None

    def __post_init__(self):
        n = len(self.images)
        if self.cams is None:
            self.cams = torch.full((n,), -1, dtype=torch.long)
        for name in ('labels', 'indices', 'cams'):
            if len(getattr(self, name)) != n:
                raise ValueError(f'{name} has {len(getattr(self, name))} entries for {n} images')

    def __len__(self):
        return len(self.images)

    def to(self, device=None, dtype=None) -> RetrievalBatch:
        images = self.images.to(device=device, dtype=dtype) if dtype else self.images.to(device)
        return RetrievalBatch(images, self.labels.to(device), self.indices.to(device), self.cams.to(device))

    def is_pk(self, P: int, K: int) -> bool:
        '''True when the batch holds exactly K images of each of P identities.'''
        ids, counts = torch.unique(self.labels, return_counts=True)
        return len(ids) == P and bool((counts == K).all()) and len(self) == P * K
