from __future__ import annotations

import json
import os
import sys

import fire
import numpy as np

from reidnas.algorithms import count_params_flops, derive_genotype, evaluate
from reidnas.datatypes import ExperimentConfig, MacroConfig
from reidnas.utils import load_config, parse_macro_string, save_config, set_by_path

RESOLVED_CONFIG = 'config_resolved.yaml'


def prepare_config(config: str = None, output_dir: str = None, seed: int = None, device: str = None,
                   overrides: dict = None) -> dict:
    '''
    Load a configuration (file path or packaged name), apply flag overrides
    given as ``{'section.key': value}``, validate it and write the result to
    ``<output_dir>/config_resolved.yaml``.
    '''
    cfg = load_config(config) if config else dict()
    if output_dir is not None:
        cfg['output_dir'] = str(output_dir)
    if seed is not None:
        cfg['seed'] = int(seed)
    if device is not None:
        set_by_path(cfg, 'device.type', device)
    for path, value in (overrides or dict()).items():
        if value is not None:
            set_by_path(cfg, path, value)
    exp = ExperimentConfig.from_cfg(cfg)
    exp.check_output_dir()
    cfg.setdefault('output_dir', exp.output_dir)
    save_config(cfg, os.path.join(exp.output_dir, RESOLVED_CONFIG))
    return cfg


def _write_json(path: str, obj):
    with open(path, 'w') as f:
        json.dump(obj, f, indent=2)
    return path


class ReIDNASCommands:
    '''
    reidnas: architecture search, training and evaluation for person
    re-identification.

    Every command accepts ``--config`` (a YAML path or the name of a packaged
    configuration) plus flag overrides, and writes ``config_resolved.yaml`` to
    the output directory.
    '''

    def gen_data(self, config: str = None, root: str = None, seed: int = None, output_dir: str = None):
        """Write the synthetic dataset of ``data`` as PNG images.

        Parameters
        ----------
        config : str
            configuration file or packaged name
        root : str
            dataset root, overrides ``data.root``
        """
        from reidnas.apps.synthetic import generate_synthetic
        cfg = prepare_config(config, output_dir, seed, overrides={'data.root': root, 'data.seed': seed})
        print('[reidnas] dataset written to', generate_synthetic(cfg))

    def search(self, config: str = None, output_dir: str = None, seed: int = None, device: str = None,
               epochs: int = None, space: str = None, alpha_loss: str = None, data_root: str = None):
        """Run the architecture search and write ``genotype.json``.

        Parameters
        ----------
        epochs : int
            overrides ``search.epochs``
        space : str
            ``reid`` (with the part-aware op) or ``classic``
        alpha_loss : str
            objective of the architecture update: mixture, triplet or softmax
        """
        from reidnas.apps.searcher import Searcher
        cfg = prepare_config(config, output_dir, seed, device,
                             {'search.epochs': epochs, 'search.space': space,
                              'search.alpha_loss': alpha_loss, 'data.root': data_root})
        searcher = Searcher(cfg)
        set_by_path(cfg, 'macro.num_ids', searcher.macro.num_ids)
        save_config(cfg, os.path.join(cfg['output_dir'], RESOLVED_CONFIG))
        genotype, _ = searcher.run()
        print('[reidnas] genotype written to', os.path.join(cfg['output_dir'], 'genotype.json'))
        print(genotype)

    def derive(self, alpha: str, output: str = None, output_dir: str = None):
        """Derive a genotype from architecture logits stored in a checkpoint.

        Parameters
        ----------
        alpha : str
            alpha or supernet checkpoint
        output : str
            genotype file, ``<output_dir>/genotype.json`` by default
        """
        from reidnas.apps.searcher import load_alpha
        output_dir = output_dir or (os.path.dirname(output) if output else os.path.dirname(alpha)) or '.'
        prepare_config(None, output_dir)
        genotype = derive_genotype(load_alpha(alpha))
        output = output or os.path.join(output_dir, 'genotype.json')
        with open(output, 'w') as f:
            f.write(genotype.to_json())
        print('[reidnas] genotype written to', output)
        print(genotype)

    def train(self, config: str = None, genotype: str = None, output_dir: str = None, seed: int = None,
              device: str = None, epochs: int = None, backbone: str = None, data_root: str = None):
        """Train a final network from scratch.

        Parameters
        ----------
        genotype : str
            genotype.json of the searched architecture
        backbone : str
            ``genotype`` (default), ``resnet18`` or ``resnet34``
        """
        from reidnas.apps.trainer import Trainer
        overrides = {'train.epochs': epochs, 'train.backbone': backbone, 'data.root': data_root}
        if genotype is not None:
            overrides['genotype'] = str(genotype)
        cfg = prepare_config(config, output_dir, seed, device, overrides)
        trainer = Trainer(cfg)
        set_by_path(cfg, 'macro.num_ids', trainer.macro.num_ids)
        save_config(cfg, os.path.join(cfg['output_dir'], RESOLVED_CONFIG))
        trainer.run()
        print('[reidnas] checkpoints written to', cfg['output_dir'])

    def eval(self, config: str = None, checkpoint: str = None, query: str = None, gallery: str = None,
             dump: str = None, output_dir: str = None, device: str = None, camera_filter: bool = None):
        """Evaluate retrieval (CMC rank-1/5/10 and mAP) and write ``eval_report.json``.

        Either a network checkpoint (``best.ckpt`` of the output directory by
        default) is evaluated on the test identities, or two feature dumps
        given with ``--query`` and ``--gallery`` are compared directly.

        Parameters
        ----------
        dump : str
            write the test features as a feature dump
        """
        cfg = prepare_config(config, output_dir, None, device, {'data.camera_filter': camera_filter})
        use_cams = cfg.get('data', dict()).get('camera_filter', True)
        if (query is None) != (gallery is None):
            raise ValueError('feature evaluation needs both --query and --gallery')

        if query is not None:
            from reidnas.io import read_features
            q, g = read_features(query), read_features(gallery)
            for name, part in (('query', q), ('gallery', g)):
                if part['ids'] is None:
                    raise ValueError(f'{name} feature dump has no identity column')
            q_cams = q['cams'] if q['cams'] is not None else np.full(len(q['feats']), -1)
            g_cams = g['cams'] if g['cams'] is not None else np.full(len(g['feats']), -1)
            result = evaluate(q['feats'], q['ids'], q_cams, g['feats'], g['ids'], g_cams, use_cams)
        else:
            from reidnas.algorithms import extract_features
            from reidnas.apps.synthetic import prepare_data
            from reidnas.apps.trainer import evaluate_network, load_network
            from reidnas.io import ReIDDataset, write_features
            from reidnas.utils import device_from_cfg
            network = load_network(checkpoint or os.path.join(cfg['output_dir'], 'best.ckpt'))
            network = network.to(device_from_cfg(cfg))
            dataset = ReIDDataset(prepare_data(cfg)['test'], network.macro.input_hw)
            result = evaluate_network(network, dataset, use_cams)
            if dump:
                feats = extract_features(network, dataset.all_images())
                write_features(dump, feats.float().numpy(), dataset.labels, dataset.index.cams)

        report = result.report()
        _write_json(os.path.join(cfg['output_dir'], 'eval_report.json'), report)
        print(result)
        print(json.dumps(report))

    def count(self, genotype: str, macro: str = None, config: str = None, output_dir: str = None):
        """Print parameters and multiply-accumulates of a genotype's final network.

        Parameters
        ----------
        genotype : str
            genotype.json
        macro : str
            compact macro override, e.g. ``C=64,l=2.2.2.2,hw=384x128``
        """
        from reidnas.apps.trainer import load_genotype
        overrides = {f'macro.{k}': v for k, v in parse_macro_string(macro or '').items()}
        cfg = prepare_config(config, output_dir, overrides=overrides)
        params, macs = count_params_flops(load_genotype(genotype), MacroConfig.from_cfg(cfg))
        print(json.dumps(dict(params=params, macs=macs)))


COMMANDS = ('gen_data', 'search', 'derive', 'train', 'eval', 'count')


def cli(argv: list = None) -> int:
    '''
    Entry point of the ``reidnas`` command. Returns the exit code; failures
    print one JSON line ``{"error": ..., "message": ...}`` to stderr.
    '''
    argv = list(sys.argv[1:] if argv is None else argv)
    if argv and argv[0].replace('-', '_') in COMMANDS:
        argv[0] = argv[0].replace('-', '_')
    try:
        fire.Fire(ReIDNASCommands, command=argv, name='reidnas')
    except fire.core.FireExit as err:
        if err.code in (0, None):
            return 0
        print(json.dumps(dict(error='UsageError', message=f'invalid command line: {" ".join(argv)}')),
              file=sys.stderr)
        return int(err.code) if isinstance(err.code, int) else 2
    except Exception as err:
        print(json.dumps(dict(error=type(err).__name__, message=str(err))), file=sys.stderr)
        return 1
    return 0


def main():
    sys.exit(cli())


if __name__ == '__main__':
    main()
