from __future__ import annotations

import math
from dataclasses import dataclass
from typing import NamedTuple

import torch
import torch.nn.functional as F


@dataclass(frozen=True)
class PartAwareConfig:
    '''
    Shape of a part-aware operation.

    Configuration
    -------------
    M : int
        number of horizontal body parts the input is split into
    d : int
        width of the per-part body vectors
    heads : int
        attention heads over the M body vectors (must divide d)
    cin, cout : int
        input and output channels
    stride : int
        1, or 2 in reduction cells (applied at the fusion conv)
    '''
    cin: int
    cout: int
    d: int
    M: int = 4
    heads: int = 1
    stride: int = 1

    def __post_init__(self):
        if self.M < 1:
            raise ValueError(f'part count M must be >= 1 (given {self.M})')
        if self.d < 1:
            raise ValueError(f'body width d must be >= 1 (given {self.d})')
        if self.heads < 1 or self.d % self.heads:
            raise ValueError(f'heads={self.heads} must divide d={self.d}')
        if self.cin < 1 or self.cout < 1:
            raise ValueError(f'channel counts must be positive (given cin={self.cin}, cout={self.cout})')
        if self.stride not in (1, 2):
            raise ValueError(f'stride must be 1 or 2 (given {self.stride})')


class PartAwareParams(NamedTuple):
    proj: torch.Tensor  # (d, cin), shared by all parts
    q: torch.Tensor     # (d, d)
    k: torch.Tensor     # (d, d)
    v: torch.Tensor     # (d, d)
    o: torch.Tensor     # (d, d)
    fuse: torch.Tensor  # (cout, cin+d, 1, 1)


def body_vectors(x: torch.Tensor, M: int) -> torch.Tensor:
    '''Average-pool M horizontal bands of ``x`` (N,C,H,W) into (N,M,C).'''
    n, c, h, w = x.shape
    if h % M:
        raise ValueError(f'feature height {h} is not divisible by M={M}')
    return x.reshape(n, c, M, h // M, w).mean(dim=(3, 4)).transpose(1, 2)


def part_attention(body: torch.Tensor, cfg: PartAwareConfig, params: PartAwareParams,
                   attn_mask: torch.Tensor = None) -> torch.Tensor:
    '''
    Scaled dot-product self-attention over the M body vectors, with a residual
    connection. ``attn_mask`` (M,M) is added to the attention logits.
    '''
    n, m, d = body.shape
    dh = d // cfg.heads

    def split(t):
        return t.reshape(n, m, cfg.heads, dh).transpose(1, 2)

    q = split(F.linear(body, params.q))
    k = split(F.linear(body, params.k))
    v = split(F.linear(body, params.v))
    logits = q @ k.transpose(-1, -2) / math.sqrt(dh)
    if attn_mask is not None:
        logits = logits + attn_mask
    attended = (logits.softmax(dim=-1) @ v).transpose(1, 2).reshape(n, m, d)
    return body + F.linear(attended, params.o)


def part_aware_forward(x: torch.Tensor, cfg: PartAwareConfig, params: PartAwareParams,
                       attn_mask: torch.Tensor = None) -> torch.Tensor:
    '''
    Part-aware operation on a feature tensor.

    The input is split into M horizontal bands, each band is pooled into a
    vector and mapped to R^d by a shared linear layer, the M vectors attend to
    each other, and every attended vector is broadcast back over its band. The
    resulting [d,H,W] tensor is concatenated with the input and fused by a 1x1
    convolution with stride ``cfg.stride``. NaN inputs propagate.

    Parameters
    ----------
    x : torch.Tensor
        (cin,H,W) or (N,cin,H,W)
    cfg : PartAwareConfig
    params : PartAwareParams
    attn_mask : torch.Tensor, optional
        (M,M) additive mask on the attention logits

    Returns
    -------
    torch.Tensor
        (cout,H/stride,W/stride), batched if the input was
    '''
    single = x.dim() == 3
    if single:
        x = x.unsqueeze(0)
    if x.dim() != 4 or x.shape[1] != cfg.cin:
        raise ValueError(f'expected input of shape (N,{cfg.cin},H,W), got {tuple(x.shape)}')
    n, _, h, w = x.shape
    if h % cfg.stride or w % cfg.stride:
        raise ValueError(f'feature size {h}x{w} is not divisible by stride {cfg.stride}')

    body = F.linear(body_vectors(x, cfg.M), params.proj)
    attended = part_attention(body, cfg, params, attn_mask)

    band = h // cfg.M
    enhanced = attended.transpose(1, 2)[:, :, :, None, None].expand(n, cfg.d, cfg.M, band, w)
    enhanced = enhanced.reshape(n, cfg.d, h, w)

    out = F.conv2d(torch.cat([x, enhanced], dim=1), params.fuse, stride=cfg.stride)
    return out[0] if single else out


def part_aware_cost(cfg: PartAwareConfig, hw: tuple = None) -> tuple:
    '''
    Closed-form cost of one part-aware op applied to a ``hw`` input.

    Parameters count the shared projection, the four attention matrices and
    the fusion conv (no biases). MACs count the projection, Q/K/V, the two
    attention products, the output projection and the fusion conv at the
    output resolution; pooling and broadcasting are free. Without ``hw`` the
    fusion term is given per output pixel.

    Returns
    -------
    (int, int)
        parameter count, MAC count
    '''
    cin, cout, d, M = cfg.cin, cfg.cout, cfg.d, cfg.M
    out_pixels = 1
    if hw is not None:
        height, width = hw
        if height % M:
            raise ValueError(f'feature height {height} is not divisible by M={M}')
        out_pixels = (height // cfg.stride) * (width // cfg.stride)

    params = cin * d + 4 * d * d + (cin + d) * cout
    macs = M * cin * d + 3 * M * d * d + 2 * M * M * d + M * d * d + (cin + d) * cout * out_pixels
    return params, macs


class PartAware(torch.nn.Module):
    '''
    Module wrapper of `part_aware_forward` holding its own parameters.
    '''

    def __init__(self, cfg: PartAwareConfig):
        super().__init__()
        self.cfg = cfg
        self.proj = torch.nn.Linear(cfg.cin, cfg.d, bias=False)
        self.q = torch.nn.Linear(cfg.d, cfg.d, bias=False)
        self.k = torch.nn.Linear(cfg.d, cfg.d, bias=False)
        self.v = torch.nn.Linear(cfg.d, cfg.d, bias=False)
        self.o = torch.nn.Linear(cfg.d, cfg.d, bias=False)
        self.fuse = torch.nn.Conv2d(cfg.cin + cfg.d, cfg.cout, 1, stride=cfg.stride, bias=False)

    def params(self) -> PartAwareParams:
        return PartAwareParams(self.proj.weight, self.q.weight, self.k.weight,
                               self.v.weight, self.o.weight, self.fuse.weight)

    def forward(self, x, attn_mask=None):
        return part_aware_forward(x, self.cfg, self.params(), attn_mask)

    def extra_repr(self):
        c = self.cfg
        return f'cin={c.cin}, cout={c.cout}, d={c.d}, M={c.M}, heads={c.heads}, stride={c.stride}'
