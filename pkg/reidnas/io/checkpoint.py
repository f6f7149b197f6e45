from __future__ import annotations

import os
from dataclasses import asdict

import torch

from reidnas.datatypes.alpha import AlphaParams
from reidnas.datatypes.config import MacroConfig
from reidnas.datatypes.genotype import Genotype
from reidnas.utils import to_plain

CHECKPOINT_VERSION = 1
CHECKPOINT_KINDS = ('alpha', 'supernet', 'network')


def save_checkpoint(path: str, kind: str, macro: MacroConfig, epoch: int, alpha: AlphaParams = None,
                    genotype: Genotype = None, state_dict: dict = None, optimizers: dict = None,
                    **extra):
    '''
    Write a versioned checkpoint with ``torch.save``.

    Parameters
    ----------
    kind : str
        ``alpha`` (macro + alpha + epoch), ``supernet`` (everything needed to
        resume a search) or ``network`` (a final or reference network)
    extra
        additional plain values stored as is (``backbone``, ``metrics``, ...)
    '''
    if kind not in CHECKPOINT_KINDS:
        raise ValueError(f'unknown checkpoint kind {kind!r}, must be one of {CHECKPOINT_KINDS}')
    payload = dict(format_version=CHECKPOINT_VERSION,
                   kind=kind,
                   macro=to_plain(asdict(macro)),
                   epoch=int(epoch),
                   alpha=alpha.state_dict() if alpha is not None else None,
                   genotype=genotype.to_json() if genotype is not None else None,
                   state_dict=state_dict,
                   optimizers=optimizers or dict())
    payload.update(extra)
    directory = os.path.dirname(path)
    if directory:
        os.makedirs(directory, exist_ok=True)
    torch.save(payload, path)
    return path


def load_checkpoint(path: str, kind: str = None) -> dict:
    '''
    Read a checkpoint written by `save_checkpoint`, turning ``macro``,
    ``alpha`` and ``genotype`` back into their types.
    '''
    if not os.path.isfile(path):
        raise ValueError(f'checkpoint {path} does not exist')
    try:
        payload = torch.load(path, map_location='cpu', weights_only=True)
    except Exception as err:
        raise ValueError(f'{path} is not a readable checkpoint ({err})') from None
    if not isinstance(payload, dict) or 'format_version' not in payload:
        raise ValueError(f'{path} is not a reidnas checkpoint')
    if payload['format_version'] != CHECKPOINT_VERSION:
        raise ValueError(f'{path}: unsupported checkpoint version {payload["format_version"]} '
                         f'(expected {CHECKPOINT_VERSION})')
    if kind is not None and payload['kind'] != kind:
        raise ValueError(f'{path} holds a {payload["kind"]} checkpoint, expected {kind}')

    payload['macro'] = MacroConfig(**payload['macro'])
    if payload.get('alpha') is not None:
        payload['alpha'] = AlphaParams.from_state_dict(payload['alpha'])
    if payload.get('genotype') is not None:
        payload['genotype'] = Genotype.from_json(payload['genotype'])
    return payload
