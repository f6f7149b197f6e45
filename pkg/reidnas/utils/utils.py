from __future__ import annotations

import copy
import glob
import os
import zlib

import numpy as np
import torch
import yaml


def list_available_devices():

    devs=dict(cpu=torch.device('cpu'))

    if torch.cuda.is_available():
        devs['cuda'] = torch.device('cuda:0')

    if torch.backends.mps.is_available():
        devs['mps'] = torch.device('mps')

    return devs


def get_device(request):

    devs = list_available_devices()

    if not request in devs:
        print('[get_device]',request,'not supported, falling back to cpu')
        return devs['cpu']
    else:
        return devs[request]


def device_from_cfg(cfg: dict):
    '''Device named in ``cfg['device']['type']``, else cuda when available.'''
    if cfg.get('device'):
        return get_device(cfg['device'].get('type', 'cpu'))
    return torch.device('cuda:0' if torch.cuda.is_available() else 'cpu')


def get_config_dir():

    return os.path.join(os.path.dirname(__file__),'../config')


def list_config(full_path=False):

    fs = sorted(glob.glob(os.path.join(get_config_dir(), '*.yaml')))

    if full_path:
        return fs

    return [os.path.basename(f)[:-5] for f in fs]


def get_config(name):
    '''
    Path of a configuration: an existing file path, or the name of a packaged
    configuration with or without the ``.yaml`` suffix.
    '''
    if os.path.isfile(name):
        return name

    options = list_config()
    results = list_config(True)

    if name in options:
        return results[options.index(name)]

    if name.endswith('.yaml') and name[:-5] in options:
        return results[options.index(name[:-5])]

    raise ValueError(f'No configuration file or packaged config named {name!r} (available: {options})')


def load_config(name:str):

    with open(get_config(name),'r') as f:
        cfg = yaml.safe_load(f)
    if cfg is None:
        return dict()
    if not isinstance(cfg, dict):
        raise ValueError(f'configuration {name} must hold a mapping at the top level')
    return cfg


def merge_config(base: dict, override: dict) -> dict:
    '''Recursively merge ``override`` into a copy of ``base``.'''
    out = copy.deepcopy(base) if base else dict()
    for key, value in (override or dict()).items():
        if isinstance(value, dict) and isinstance(out.get(key), dict):
            out[key] = merge_config(out[key], value)
        else:
            out[key] = copy.deepcopy(value)
    return out


def set_by_path(cfg: dict, path: str, value):
    '''Set ``cfg['a']['b']`` from the dotted ``path`` ``a.b``, creating sections.'''
    keys = path.split('.')
    node = cfg
    for key in keys[:-1]:
        if not isinstance(node.get(key, dict()), dict):
            raise ValueError(f'cannot set {path}: {key} is not a section')
        node = node.setdefault(key, dict())
    node[keys[-1]] = value
    return cfg


def to_plain(obj):
    '''Tuples to lists, recursively, so a config can be dumped as YAML.'''
    if isinstance(obj, dict):
        return {k: to_plain(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [to_plain(v) for v in obj]
    return obj


def save_config(cfg: dict, path: str):
    with open(path, 'w') as f:
        yaml.safe_dump(to_plain(cfg), f, sort_keys=True)


def parse_macro_string(text: str) -> dict:
    '''
    Parse a compact macro description such as ``C=64,l=2.2.2.2,hw=384x128``
    into a ``macro`` config section. Also understands ``B``, ``ids`` (number of
    identities) and ``embed``.
    '''
    aliases = dict(C='C', B='B', l='l', hw='input_hw', ids='num_ids', embed='embed_dim')
    section = dict()
    for item in filter(None, (s.strip() for s in str(text).split(','))):
        if '=' not in item:
            raise ValueError(f'macro entry {item!r} is not of the form key=value')
        key, value = (s.strip() for s in item.split('=', 1))
        if key not in aliases:
            raise ValueError(f'unknown macro key {key!r}, must be one of {list(aliases)}')
        try:
            if key == 'l':
                parsed = [int(v) for v in value.split('.')]
            elif key == 'hw':
                parsed = [int(v) for v in value.lower().split('x')]
            else:
                parsed = int(value)
        except ValueError:
            raise ValueError(f'cannot parse macro entry {item!r}') from None
        section[aliases[key]] = parsed
    return section


def sub_seed(seed: int, name: str) -> int:
    '''
    Independent 32-bit seed for the named component (``split``, ``sampler``,
    ``init``, ...) derived from the top-level seed.
    '''
    return int(np.random.SeedSequence([int(seed), zlib.crc32(name.encode())]).generate_state(1)[0])


def set_deterministic(flag: bool = True):
    '''Ask torch for deterministic kernels (bitwise reproducible runs).'''
    torch.use_deterministic_algorithms(flag, warn_only=True)
    torch.backends.cudnn.deterministic = flag
    torch.backends.cudnn.benchmark = not flag


class CSVLogger:
    '''
    Logger class to store search/training progress in a CSV file with a fixed
    set of columns.
    '''

    def __init__(self, cfg, columns, file_name=None):
        '''
        Constructor

        Parameters
        ----------
        cfg : dict
            A collection of configuration parameters. ``logger.dir_name``
            (default: ``output_dir``) and ``logger.file_name`` specify the output
            log file location. ``logger.log_every_nsteps`` thins the rows, and
            ``logger.versioned`` places the file in a fresh ``version-XX``
            sub-directory.
        columns : list
            Column names, written as the header even when no row follows.
        file_name : str, optional
            Overrides ``logger.file_name``.
        '''
        log_cfg = cfg.get('logger',dict()) or dict()
        dir_name = log_cfg.get('dir_name', cfg.get('output_dir', 'logs'))
        self._logdir = self.get_logdir(dir_name) if log_cfg.get('versioned', False) else dir_name
        self._logfile = os.path.join(self._logdir, file_name or log_cfg.get('file_name','log.csv'))
        self._log_every_nsteps = log_cfg.get('log_every_nsteps',1)
        self._columns = list(columns)

        print('[CSVLogger] output log file:',self._logfile)
        if self._log_every_nsteps > 1:
            print(f'[CSVLogger] recording a log every {self._log_every_nsteps} steps')
        self._fout = None
        self._dict = {}

    @property
    def logfile(self):
        return self._logfile

    @property
    def logdir(self):
        return self._logdir

    @property
    def columns(self):
        return list(self._columns)

    def get_logdir(self, dir_name):
        '''
        Get a log directory

        Parameters
        ----------
        dir_name : str
            The directory name for a log file. There will be a sub-directory named version-XX where XX is
            the lowest integer such that a subdirectory does not yet exist.

        Returns
        -------
        str
            The created log directory path.
        '''
        versions = [int(d.split('-')[-1]) for d in glob.glob(os.path.join(dir_name,'version-[0-9][0-9]'))]
        ver = 0
        if len(versions):
            ver = max(versions)+1
        return os.path.join(dir_name,'version-%02d' % ver)

    def open(self):
        '''
        Create the log directory and write the header.
        '''
        if self._fout is not None:
            return
        os.makedirs(self.logdir, exist_ok=True)
        self._fout = open(self._logfile, 'w')
        self._fout.write(','.join(self._columns) + '\n')
        self.flush()

    def record(self, keys : list, vals : list):
        '''
        Function to register key-value pair to be stored

        Parameters
        ----------
        keys : list
            A list of column names.

        vals : list
            A list of values for those columns.
        '''
        for key, val in zip(keys, vals):
            if key not in self._columns:
                raise ValueError(f'[CSVLogger] unknown column {key!r}')
            self._dict[key] = val

    def step(self, iteration):
        '''
        Write the recorded values if ``iteration`` is subject for logging,
        otherwise drop them.
        '''
        if not iteration % self._log_every_nsteps == 0:
            self._dict = {}
            return
        self.write()

    @staticmethod
    def _format(val):
        if val is None:
            return ''
        if isinstance(val, (bool, np.bool_)):
            return str(int(val))
        if isinstance(val, (int, np.integer)):
            return str(int(val))
        if isinstance(val, torch.Tensor):
            val = val.item()
        return repr(float(val))

    def write(self):
        '''
        Function to write the key-value pairs provided through the record function
        to an output log file.
        '''
        self.open()
        self._fout.write(','.join(self._format(self._dict.get(k)) for k in self._columns) + '\n')
        self._dict = {}
        self.flush()

    def flush(self):
        '''
        Flush the output file stream.
        '''
        if self._fout: self._fout.flush()

    def close(self):
        '''
        Close the output file, writing the header if nothing was logged.
        '''
        if self._fout is None and os.path.isfile(self._logfile):
            return
        self.open()
        self._fout.close()
        self._fout = None
