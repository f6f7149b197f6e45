from __future__ import annotations

import math
import os
import re
import warnings
from dataclasses import dataclass

import numpy as np
import torch
from PIL import Image, UnidentifiedImageError
from torch.utils.data import Dataset

from reidnas.datatypes.batch import RetrievalBatch

IMAGE_EXTENSIONS = ('.png', '.jpg', '.jpeg', '.bmp')
CAMERA_PATTERN = re.compile(r'_c(\d+)$')
PIXEL_MEAN = (0.485, 0.456, 0.406)
PIXEL_STD = (0.229, 0.224, 0.225)


def parse_camera(file_name: str) -> int:
    '''Camera id from a ``_c<k>`` file name suffix, -1 when absent.'''
    match = CAMERA_PATTERN.search(os.path.splitext(os.path.basename(file_name))[0])
    return int(match.group(1)) if match else -1


@dataclass
class DatasetIndex:
    '''
    Flat index of a labeled image collection.

    Attributes
    ----------
    paths : list
        image file per entry
    labels : np.ndarray
        contiguous identity index per entry
    cams : np.ndarray
        camera id per entry, -1 when unknown
    names : list
        identity (directory) name of every label
    '''
    paths: list
    labels: np.ndarray
    cams: np.ndarray
    names: list

    def __len__(self):
        return len(self.paths)

    @property
    def num_ids(self) -> int:
        return len(np.unique(self.labels))

    def subset(self, positions, relabel: bool = True) -> DatasetIndex:
        '''
        Entries at ``positions``. With ``relabel`` the labels are renumbered
        0..n-1 in order of their previous value.
        '''
        positions = np.asarray(positions, dtype=np.int64)
        labels = self.labels[positions]
        names = self.names
        if relabel:
            kept, labels = np.unique(labels, return_inverse=True)
            names = [self.names[k] for k in kept]
        return DatasetIndex([self.paths[p] for p in positions], labels.astype(np.int64),
                            self.cams[positions], names)


def load_folder(root: str) -> DatasetIndex:
    '''
    Index a ``root/<identity>/<image>`` tree. Identities are numbered in sorted
    directory order; a ``_c<k>`` file name suffix gives the camera id.
    Undecodable images are skipped with a warning.
    '''
    if not os.path.isdir(root):
        raise ValueError(f'dataset root {root} is not a directory')
    identities = sorted(d for d in os.listdir(root) if os.path.isdir(os.path.join(root, d)))
    paths, labels, cams, names = [], [], [], []
    failures = 0
    for name in identities:
        files = sorted(f for f in os.listdir(os.path.join(root, name)) if f.lower().endswith(IMAGE_EXTENSIONS))
        label = len(names)
        kept = 0
        for f in files:
            path = os.path.join(root, name, f)
            try:
                with Image.open(path) as img:
                    img.verify()
            except (UnidentifiedImageError, OSError, SyntaxError) as err:
                failures += 1
                warnings.warn(f'skipping undecodable image {path} ({err})')
                continue
            paths.append(path)
            labels.append(label)
            cams.append(parse_camera(f))
            kept += 1
        if kept:
            names.append(name)

    if not paths:
        if failures:
            raise ValueError(f'none of the {failures} images under {root} could be decoded')
        raise ValueError(f'no images found under {root}')
    print(f'[load_folder] {len(paths)} images of {len(names)} identities under {root}')
    return DatasetIndex(paths, np.array(labels, dtype=np.int64), np.array(cams, dtype=np.int64), names)


def split_dataset(index: DatasetIndex, fraction: float, seed: int) -> tuple:
    '''
    Identity-stratified split of every identity's images into two disjoint
    parts, ``fraction`` of them in the first. Identities with at least two
    images appear on both sides; smaller ones go wholly to the first side with
    a warning.

    Returns
    -------
    (np.ndarray, np.ndarray)
        sorted positions of both sides
    '''
    if not 0. < fraction < 1.:
        raise ValueError(f'split fraction must be in (0,1) (given {fraction})')
    rng = np.random.default_rng(seed)
    first, second = [], []
    for label in np.unique(index.labels):
        pool = rng.permutation(np.flatnonzero(index.labels == label))
        if len(pool) < 2:
            warnings.warn(f'identity {index.names[label]} has {len(pool)} image(s); '
                          'keeping it on the training side only')
            first.extend(pool)
            continue
        n_first = min(max(int(round(fraction * len(pool))), 1), len(pool) - 1)
        first.extend(pool[:n_first])
        second.extend(pool[n_first:])
    return np.sort(np.array(first, dtype=np.int64)), np.sort(np.array(second, dtype=np.int64))


def split_identities(index: DatasetIndex, fraction: float, seed: int) -> tuple:
    '''
    Hold out ``ceil(fraction * #identities)`` whole identities.

    Returns
    -------
    (np.ndarray, np.ndarray)
        sorted positions of kept and held-out identities
    '''
    if not 0. <= fraction < 1.:
        raise ValueError(f'held-out fraction must be in [0,1) (given {fraction})')
    labels = np.unique(index.labels)
    n_out = int(math.ceil(fraction * len(labels)))
    if n_out >= len(labels):
        raise ValueError(f'holding out {n_out} of {len(labels)} identities leaves none')
    held = np.random.default_rng(seed).choice(labels, n_out, replace=False)
    mask = np.isin(index.labels, held)
    return np.flatnonzero(~mask), np.flatnonzero(mask)


def load_image(path: str, hw: tuple) -> torch.Tensor:
    '''Decode, resize to ``hw`` and normalize an image into a (3,H,W) float tensor.'''
    with Image.open(path) as img:
        img = img.convert('RGB')
        if img.size != (hw[1], hw[0]):
            img = img.resize((hw[1], hw[0]), Image.BILINEAR)
        arr = np.asarray(img, dtype=np.float32) / 255.
    arr = (arr - np.array(PIXEL_MEAN, dtype=np.float32)) / np.array(PIXEL_STD, dtype=np.float32)
    return torch.from_numpy(arr.transpose(2, 0, 1).copy())


class ReIDDataset(Dataset):
    """
    Images of a `DatasetIndex` as a torch Dataset, resized to ``input_hw``.
    Decoded images are cached in memory when ``cache`` is set.
    """

    def __init__(self, index: DatasetIndex, input_hw: tuple, cache: bool = True):
        self.index = index
        self.input_hw = tuple(input_hw)
        self._cache = dict() if cache else None

    @property
    def labels(self) -> np.ndarray:
        return self.index.labels

    @property
    def num_ids(self) -> int:
        return self.index.num_ids

    def __len__(self):
        return len(self.index)

    def image(self, idx: int) -> torch.Tensor:
        if self._cache is not None and idx in self._cache:
            return self._cache[idx]
        img = load_image(self.index.paths[idx], self.input_hw)
        if self._cache is not None:
            self._cache[idx] = img
        return img

    def __getitem__(self, idx: int) -> dict:
        """
        Returns
        -------
        dict
            ``image`` (3,H,W), ``label``, ``index`` and ``cam``
        """
        return dict(image=self.image(idx),
                    label=int(self.index.labels[idx]),
                    index=int(idx),
                    cam=int(self.index.cams[idx]))

    @staticmethod
    def collate_fn(batch: list) -> RetrievalBatch:
        """
        Used by torch DataLoader to stack samples into a `RetrievalBatch`.
        """
        return RetrievalBatch(images=torch.stack([data['image'] for data in batch]),
                              labels=torch.as_tensor([data['label'] for data in batch], dtype=torch.long),
                              indices=torch.as_tensor([data['index'] for data in batch], dtype=torch.long),
                              cams=torch.as_tensor([data['cam'] for data in batch], dtype=torch.long))

    def all_images(self) -> torch.Tensor:
        return torch.stack([self.image(i) for i in range(len(self))])
