from __future__ import annotations

import json
import math
import os
import shutil
from time import time

import numpy as np
import torch
from torch.utils.data import DataLoader
from tqdm import tqdm

from reidnas.algorithms import PKSampler, ReIDNetwork, ResNetReID, RetrievalLoss, evaluate, extract_features, split_query_gallery
from reidnas.algorithms.criterion import DivergenceError, check_finite
from reidnas.datatypes import EvalResult, Genotype, MacroConfig, NoValidQueryError, TrainConfig
from reidnas.io import DatasetIndex, FlipCrop, ReIDDataset, load_checkpoint, save_checkpoint, split_identities
from reidnas.utils import (CSVLogger, device_from_cfg, get_lr, optimizer_factory, scheduler_factory,
                           set_deterministic, sub_seed)

TRAIN_LOG_COLUMNS = ['epoch', 'step', 'loss', 'ce', 'tri', 'lr', 'val_map', 'val_rank1']


def build_model(backbone: str, genotype: Genotype, macro: MacroConfig, seed: int = 0) -> torch.nn.Module:
    '''A `ReIDNetwork` of ``genotype``, or a reference `ResNetReID` when ``backbone`` names one.'''
    if backbone == 'genotype':
        if genotype is None:
            raise ValueError('training a searched network needs a genotype')
        return ReIDNetwork(genotype, macro, seed=seed)
    return ResNetReID(macro, backbone, seed=seed)


def load_network(path: str) -> torch.nn.Module:
    '''Rebuild the network stored in a ``network`` checkpoint.'''
    ckpt = load_checkpoint(path, 'network')
    model = build_model(ckpt.get('backbone', 'genotype'), ckpt['genotype'], ckpt['macro'])
    model.load_state_dict(ckpt['state_dict'])
    return model


def load_genotype(path: str) -> Genotype:
    with open(path, 'r') as f:
        return Genotype.from_json(f.read())


def evaluate_network(network: torch.nn.Module, dataset: ReIDDataset, camera_filter: bool = True,
                     batch_size: int = 32) -> EvalResult:
    '''
    Retrieval metrics of ``network`` on a labeled dataset, using the first
    image of every (identity, camera) pair as query and the rest as gallery.
    '''
    feats = extract_features(network, dataset.all_images(), batch_size).double().numpy()
    labels, cams = dataset.labels, dataset.index.cams
    query, gallery = split_query_gallery(labels, cams)
    return evaluate(feats[query], labels[query], cams[query],
                    feats[gallery], labels[gallery], cams[gallery], camera_filter)


class Trainer:
    def __init__(self, cfg: dict, genotype: Genotype = None, index: DatasetIndex = None):
        """Trains a final network from scratch with the mixture objective
        (``train.loss`` selects triplet-only or softmax-only instead).

        ``train.val_fraction`` of the training identities are held out to
        select the best checkpoint by validation mAP.

        Several components are created from the configuration dictionary:
        - `reidnas.datatypes.TrainConfig` (cfg['train'])
        - the network: `ReIDNetwork` of ``genotype`` (or the JSON file at
          cfg['genotype']) or a reference `ResNetReID` (``train.backbone``)
        - Adam with a `MultiStepLR` schedule, via `optimizer_factory` and
          `scheduler_factory`
        - `reidnas.io.FlipCrop` batch augmentation
        - `reidnas.utils.CSVLogger` writing `train_log.csv` (cfg['logger'])

        The main method is `run()`.
        """
        self._cfg = cfg
        self._train_cfg = tc = TrainConfig.from_cfg(cfg)
        self._seed = int(cfg.get('seed', tc.seed))
        self._output_dir = cfg.get('output_dir', 'runs')
        os.makedirs(self._output_dir, exist_ok=True)
        self._device = device_from_cfg(cfg)
        self._dtype = getattr(torch, tc.dtype)
        self._camera_filter = cfg.get('data', dict()).get('camera_filter', True)
        if tc.deterministic:
            set_deterministic(True)
        torch.manual_seed(sub_seed(self._seed, 'dropout'))

        if index is None:
            from reidnas.apps.synthetic import prepare_data
            index = prepare_data(cfg)['train']

        # hold out identities for model selection
        self._val_dataset = None
        if tc.val_fraction > 0.:
            train_pos, val_pos = split_identities(index, tc.val_fraction, sub_seed(self._seed, 'split'))
            train_index = index.subset(train_pos)
        else:
            train_index = index

        macro = MacroConfig.from_cfg(cfg)
        if macro.num_ids != train_index.num_ids:
            print(f'[Trainer] setting num_ids to the {train_index.num_ids} training identities (was {macro.num_ids})')
            macro = macro.with_updates(num_ids=train_index.num_ids)
        self._macro = macro

        self._dataset = ReIDDataset(train_index, macro.input_hw)
        if tc.val_fraction > 0.:
            self._val_dataset = ReIDDataset(index.subset(val_pos), macro.input_hw)
            print(f'[Trainer] {len(self._dataset)} training images, {len(self._val_dataset)} validation images')
        self._sampler = PKSampler(self._dataset.labels, tc.P, tc.K, sub_seed(self._seed, 'sampler'))
        self._dataloader = DataLoader(self._dataset, batch_sampler=self._sampler,
                                      collate_fn=ReIDDataset.collate_fn, num_workers=tc.num_workers)

        if genotype is None and tc.backbone == 'genotype':
            path = cfg.get('genotype') or os.path.join(self._output_dir, 'genotype.json')
            if not os.path.isfile(path):
                raise ValueError(f'no genotype found at {path} (set "genotype" to a genotype.json path)')
            genotype = load_genotype(path)
        self._genotype = genotype if tc.backbone == 'genotype' else None
        self._model = build_model(tc.backbone, self._genotype, macro, seed=sub_seed(self._seed, 'init'))
        self._model = self._model.to(self._device, self._dtype)

        self._criterion = RetrievalLoss(tc.loss_weights, tc.loss, tc.reduction)
        self._opt = optimizer_factory(self._model.parameters(), dict(
            Class='Adam', Param=dict(lr=tc.lr, betas=tc.betas, weight_decay=tc.weight_decay)))
        self._sch = scheduler_factory(self._opt, dict(
            Class='MultiStepLR', Param=dict(milestones=tc.milestones, gamma=tc.gamma)))
        self._augment = FlipCrop.from_cfg(tc, sub_seed(self._seed, 'augment'))

        self._logger = CSVLogger(cfg, TRAIN_LOG_COLUMNS, file_name='train_log.csv')
        self.epoch = 0
        self.step = 0
        self.best_map = -math.inf
        self.metrics = []

    @property
    def model(self) -> torch.nn.Module:
        return self._model

    @property
    def macro(self) -> MacroConfig:
        return self._macro

    @property
    def train_cfg(self) -> TrainConfig:
        return self._train_cfg

    @property
    def optimizer(self):
        return self._opt

    @property
    def scheduler(self):
        return self._sch

    @property
    def dataloader(self):
        return self._dataloader

    @property
    def val_dataset(self):
        return self._val_dataset

    @property
    def output_dir(self) -> str:
        return self._output_dir

    def train_step(self, batch) -> dict:
        self.model.train()
        batch = batch.to(self._device, self._dtype)
        images = self._augment(batch.images)
        self._opt.zero_grad()
        loss, parts = self._criterion(self.model(images), batch.labels)
        check_finite(loss, 'training', self.epoch, self.step)
        loss.backward()
        self._opt.step()
        self.step += 1
        return dict(loss=loss.item(), **parts)

    def validate(self) -> EvalResult:
        '''Metrics on the held-out identities, or None without a validation split.'''
        if self._val_dataset is None:
            return None
        try:
            return evaluate_network(self.model, self._val_dataset, self._camera_filter)
        except NoValidQueryError as err:
            print('[Trainer] validation skipped:', err)
            return None

    def run(self) -> tuple:
        """
        Run the training schedule, evaluating every ``train.eval_every``
        epochs and checkpointing `best.ckpt` and `last.ckpt`.

        Returns
        -------
        (torch.nn.Module, list)
            the trained network and the per-epoch metrics
        """
        tc = self._train_cfg
        self._logger.open()
        try:
            while self.epoch < tc.epochs:
                if tc.max_steps and self.step >= tc.max_steps:
                    print('[Trainer] reached max_steps', tc.max_steps)
                    break
                self._run_epoch()
        except DivergenceError as err:
            print('[Trainer] training diverged:', err)
            print('[Trainer] last good checkpoint kept in', os.path.join(self.output_dir, 'last.ckpt'))
            raise
        finally:
            self._logger.close()

        last = self.save('last.ckpt')
        if self._val_dataset is None or not os.path.isfile(os.path.join(self.output_dir, 'best.ckpt')):
            shutil.copyfile(last, os.path.join(self.output_dir, 'best.ckpt'))
        with open(os.path.join(self.output_dir, 'train_metrics.json'), 'w') as f:
            json.dump(self.metrics, f, indent=2)
        print('[Trainer] Stopped training at step', self.step, 'epoch', self.epoch)
        return self.model, self.metrics

    def _run_epoch(self):
        tc = self._train_cfg
        epoch = self.epoch
        self._sampler.set_epoch(epoch)
        losses = []
        tstart = time()
        for batch in tqdm(self._dataloader, desc='Epoch %-3d' % epoch, unit='step'):
            lr = get_lr(self._opt)
            out = self.train_step(batch)
            losses.append(out['loss'])
            self._logger.record(['epoch', 'step', 'loss', 'ce', 'tri', 'lr'],
                                [epoch, self.step, out['loss'], out.get('ce'), out.get('tri'), lr])
            self._logger.step(self.step)
            if tc.max_steps and self.step >= tc.max_steps:
                break
        self._sch.step()
        self.epoch += 1

        entry = dict(epoch=epoch, step=self.step, loss=float(np.mean(losses)) if losses else float('nan'))
        if self._val_dataset is not None and (self.epoch % tc.eval_every == 0 or self.epoch == tc.epochs):
            result = self.validate()
            if result is not None:
                entry.update(val_map=result.map, val_rank1=result.rank(1))
                self._logger.record(['epoch', 'step', 'val_map', 'val_rank1'],
                                    [epoch, self.step, result.map, result.rank(1)])
                self._logger.write()
                if result.map > self.best_map:
                    self.best_map = result.map
                    self.save('best.ckpt', metrics=result.report())
                    print(f'[Trainer] new best validation mAP {result.map:.4f} at epoch {epoch}')
        self.metrics.append(entry)
        self.save('last.ckpt')
        print(f'[Trainer] epoch {epoch} loss {entry["loss"]:.4f} ({time() - tstart:.1f} s)')

    def save(self, name: str, metrics: dict = None) -> str:
        return save_checkpoint(os.path.join(self.output_dir, name), 'network', self.macro, self.epoch,
                               genotype=self._genotype, state_dict=self.model.state_dict(),
                               optimizers=dict(opt=self._opt.state_dict(), sch=self._sch.state_dict()),
                               backbone=self._train_cfg.backbone, step=self.step, metrics=metrics or dict())


def train(cfg: dict, genotype: Genotype = None, index: DatasetIndex = None) -> tuple:
    '''Build a `Trainer` and run it. Returns ``(network, metrics)``.'''
    return Trainer(cfg, genotype, index).run()
