from __future__ import annotations

import h5py as h5
import numpy as np
import torch

from reidnas.datatypes.alpha import AlphaParams
from reidnas.datatypes.genotype import Genotype


class SearchHistoryFile(object):
    '''
    Class to interface with the HDF5 search history. Each entry is one search
    epoch: the epoch number, mean losses, the flattened alpha logits of both
    cell types (as ragged arrays) and the genotype derived from them.
    '''

    def __init__(self, cfg: dict):
        '''
        Constructor
            history.file_name: string path to the data file to be read/written
            history.mode: h5py.File constructor "mode" (w=write, a=append, r=read)
        '''
        file_cfg = cfg.get('history', dict())
        file_name = file_cfg.get('file_name', 'search_history.h5')
        mode = file_cfg.get('mode', 'w')
        self._open(file_name, mode)

    @classmethod
    def open(cls, file_name: str, mode: str):
        cfg = dict(history=dict(file_name=file_name, mode=mode))
        return cls(cfg)

    def _open(self, file_name: str, mode: str):

        self._file_name = file_name
        self._mode = mode
        dt_float = h5.vlen_dtype(np.dtype('float32'))
        dt_str = h5.string_dtype()
        print(f'[SearchHistoryFile] opening {file_name} in mode {mode}')
        self._f = h5.File(self._file_name, self._mode)
        if self._mode in ['w', 'a'] and 'epoch' not in self._f:
            self._f.create_dataset('epoch', shape=(0,), maxshape=(None,), dtype='int32')
            self._f.create_dataset('loss_train', shape=(0,), maxshape=(None,), dtype='float64')
            self._f.create_dataset('loss_val', shape=(0,), maxshape=(None,), dtype='float64')
            self._f.create_dataset('alpha_normal', shape=(0,), maxshape=(None,), dtype=dt_float)
            self._f.create_dataset('alpha_reduction', shape=(0,), maxshape=(None,), dtype=dt_float)
            self._f.create_dataset('genotype', shape=(0,), maxshape=(None,), dtype=dt_str)
            self._f['alpha_normal'].attrs['note'] = '"alpha_normal": normal-cell logits. Reshape to (edges, ops) using the "num_ops" file attribute.'
            self._f['alpha_reduction'].attrs['note'] = '"alpha_reduction": reduction-cell logits, same layout as "alpha_normal".'
            self._f['genotype'].attrs['note'] = '"genotype": JSON document of the genotype derived at the end of the epoch.'

    @property
    def file_name(self):
        return self._file_name

    @property
    def mode(self):
        return self._mode

    @property
    def f(self):
        return self._f

    def close(self):
        print(f'[SearchHistoryFile] closing {self._file_name}')
        self._f.close()

    def __del__(self):
        try:
            self._f.close()
        except AttributeError:
            pass

    def __len__(self):
        return len(self._f['epoch']) if 'epoch' in self._f else 0

    def __getitem__(self, idx):
        return self.read_one(idx)

    def __str__(self):
        msg = f'{len(self)} entries in this file. Raw hdf5 attribute descriptions below.\n'
        for k in self._f.keys():
            try:
                msg += ' '*2 + self._f[k].attrs['note'] + '\n'
            except KeyError:
                pass
        return msg

    @property
    def epochs(self) -> np.ndarray:
        return self._f['epoch'][:]

    def write_one(self, epoch: int, alpha: AlphaParams, genotype: Genotype,
                  loss_train: float = float('nan'), loss_val: float = float('nan')):
        '''
        Append one epoch to the file.
        '''
        if self._mode not in ['w', 'a']:
            raise ValueError('the file is not opened in the w (write) nor a (append) mode')
        attrs = self._f.attrs
        if 'space' not in attrs:
            attrs['space'] = alpha.space
            attrs['B'] = alpha.B
            attrs['num_ops'] = len(alpha.ops)
        elif attrs['space'] != alpha.space or int(attrs['B']) != alpha.B:
            raise ValueError(f'alpha (space={alpha.space}, B={alpha.B}) does not match the file '
                             f'(space={attrs["space"]}, B={attrs["B"]})')

        idx = len(self)
        for key in ('epoch', 'loss_train', 'loss_val', 'alpha_normal', 'alpha_reduction', 'genotype'):
            self._f[key].resize(idx + 1, axis=0)
        arrays = alpha.numpy()
        self._f['epoch'][idx] = epoch
        self._f['loss_train'][idx] = loss_train
        self._f['loss_val'][idx] = loss_val
        self._f['alpha_normal'][idx] = arrays['normal'].astype(np.float32).ravel()
        self._f['alpha_reduction'][idx] = arrays['reduction'].astype(np.float32).ravel()
        self._f['genotype'][idx] = genotype.to_json()

    def read_one(self, idx: int) -> dict:
        '''
        Read the entry at position ``idx``: epoch, losses, alpha and genotype.
        '''
        if not 0 <= idx < len(self):
            raise IndexError(f'index {idx} out of range (max={len(self)-1})')
        num_ops = int(self._f.attrs['num_ops'])
        space = self._f.attrs['space']
        if isinstance(space, bytes):
            space = space.decode()
        normal = np.array(self._f['alpha_normal'][idx]).reshape(-1, num_ops)
        reduction = np.array(self._f['alpha_reduction'][idx]).reshape(-1, num_ops)
        text = self._f['genotype'][idx]
        if isinstance(text, bytes):
            text = text.decode()
        return dict(epoch=int(self._f['epoch'][idx]),
                    loss_train=float(self._f['loss_train'][idx]),
                    loss_val=float(self._f['loss_val'][idx]),
                    alpha=AlphaParams(torch.from_numpy(normal), torch.from_numpy(reduction), space),
                    genotype=Genotype.from_json(text))

    def read_alpha(self, epoch: int) -> AlphaParams:
        '''Alpha recorded at the end of ``epoch``.'''
        hits = np.flatnonzero(self.epochs == epoch)
        if len(hits) == 0:
            raise KeyError(f'epoch {epoch} is not recorded in {self._file_name}')
        return self.read_one(int(hits[-1]))['alpha']
