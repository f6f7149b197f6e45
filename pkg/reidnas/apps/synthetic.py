from __future__ import annotations

import os

import numpy as np
from PIL import Image

from reidnas.datatypes.config import DatasetSpec
from reidnas.io.dataset import DatasetIndex, load_folder, split_identities
from reidnas.utils import sub_seed


class SyntheticReID():
    '''
    Generator of a toy re-identification dataset. Every identity owns a
    signature of horizontal colored stripes; each image is the signature plus
    Gaussian pixel noise, so identities are separable by construction.
    '''

    def __init__(self, cfg: dict):
        self.spec = DatasetSpec.from_cfg(cfg)
        if self.spec.kind != 'synthetic':
            raise ValueError(f'SyntheticReID needs a synthetic dataset spec (given kind={self.spec.kind})')
        self.num_stripes = 4
        self.rng = np.random.default_rng(self.spec.seed)
        self.signatures = self.rng.uniform(0., 1., size=(self.spec.num_ids, self.num_stripes, 3))

    def signature_image(self, pid: int) -> np.ndarray:
        '''Noise-free (H,W,3) image of identity ``pid`` with values in [0,1].'''
        height, width = self.spec.image_hw
        rows = np.arange(height) * self.num_stripes // height
        return np.broadcast_to(self.signatures[pid][rows][:, None, :], (height, width, 3)).copy()

    def make_image(self, pid: int) -> np.ndarray:
        img = self.signature_image(pid)
        if self.spec.noise > 0.:
            img = img + self.rng.normal(0., self.spec.noise, size=img.shape)
        return (np.clip(img, 0., 1.) * 255. + 0.5).astype(np.uint8)

    def file_name(self, n: int) -> str:
        if self.spec.cameras > 0:
            return f'{n:04d}_c{n % self.spec.cameras}.png'
        return f'{n:04d}.png'

    def generate(self, root: str = None) -> str:
        '''
        Write ``root/<identity>/<n>.png`` for every identity and image.

        Returns
        -------
        str
            the dataset root
        '''
        root = root or self.spec.root
        try:
            os.makedirs(root, exist_ok=True)
        except OSError as err:
            raise ValueError(f'cannot create dataset root {root} ({err})') from None
        if not os.access(root, os.W_OK):
            raise ValueError(f'dataset root {root} is not writable')

        print(f'[SyntheticReID] writing {self.spec.num_ids} identities x {self.spec.imgs_per_id} images '
              f'of {self.spec.image_hw[0]}x{self.spec.image_hw[1]} to {root}')
        for pid in range(self.spec.num_ids):
            folder = os.path.join(root, f'{pid:04d}')
            os.makedirs(folder, exist_ok=True)
            for n in range(self.spec.imgs_per_id):
                Image.fromarray(self.make_image(pid)).save(os.path.join(folder, self.file_name(n)))
        return root


def generate_synthetic(cfg: dict, root: str = None) -> str:
    return SyntheticReID(cfg).generate(root)


def prepare_data(cfg: dict) -> dict:
    '''
    Index the configured dataset, generating it first when it is a synthetic
    dataset that does not exist yet. Without ``data.test_root`` the identities
    are partitioned into a training part and a held-out test part.

    Returns
    -------
    dict
        ``train`` and ``test`` `DatasetIndex`, each labeled from 0
    '''
    spec = DatasetSpec.from_cfg(cfg)
    if spec.kind == 'synthetic' and not (os.path.isdir(spec.root) and os.listdir(spec.root)):
        print('[prepare_data] dataset', spec.root, 'not found... generating via SyntheticReID')
        generate_synthetic(cfg)
    index = load_folder(spec.root)

    if spec.test_root:
        return dict(train=index, test=load_folder(spec.test_root))
    train, test = split_identities(index, spec.test_fraction, sub_seed(cfg.get('seed', 0), 'data'))
    return dict(train=index.subset(train), test=index.subset(test))


def nearest_centroid_accuracy(index: DatasetIndex, load) -> float:
    '''
    Identity accuracy of a nearest-centroid classifier in raw pixel space,
    with ``load(path)`` returning an image array.
    '''
    pixels = np.stack([np.asarray(load(p), dtype=np.float64).ravel() for p in index.paths])
    labels = np.unique(index.labels)
    centroids = np.stack([pixels[index.labels == k].mean(axis=0) for k in labels])
    dist = ((pixels[:, None, :] - centroids[None, :, :]) ** 2).sum(axis=-1)
    return float((labels[dist.argmin(axis=1)] == index.labels).mean())
