from __future__ import annotations

import torch
import torch.nn.functional as F


class FlipCrop:
    '''
    Batch augmentation with random horizontal flips and pad-then-random-crop
    back to the input size. Randomness comes from the owned generator only.
    '''

    def __init__(self, flip: bool = True, crop: bool = True, padding: int = 10, seed: int = 0):
        if padding < 0:
            raise ValueError(f'crop padding must be non-negative (given {padding})')
        self.flip = flip
        self.crop = crop
        self.padding = padding
        self.generator = torch.Generator().manual_seed(seed)

    @classmethod
    def from_cfg(cls, train_cfg, seed: int) -> FlipCrop:
        return cls(flip=train_cfg.flip, crop=train_cfg.crop, padding=train_cfg.crop_padding, seed=seed)

    def __call__(self, images: torch.Tensor) -> torch.Tensor:
        n, _, h, w = images.shape
        out = images
        if self.flip:
            mask = torch.rand(n, generator=self.generator) < 0.5
            out = torch.where(mask.to(images.device)[:, None, None, None], out.flip(-1), out)
        if self.crop and self.padding > 0:
            p = self.padding
            padded = F.pad(out, (p, p, p, p))
            tops = torch.randint(0, 2 * p + 1, (n,), generator=self.generator).tolist()
            lefts = torch.randint(0, 2 * p + 1, (n,), generator=self.generator).tolist()
            out = torch.stack([padded[i, :, t:t + h, l:l + w] for i, (t, l) in enumerate(zip(tops, lefts))])
        return out

    def state_dict(self) -> dict:
        return dict(generator=self.generator.get_state())

    def load_state_dict(self, state: dict):
        self.generator.set_state(state['generator'])
