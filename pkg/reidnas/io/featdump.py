from __future__ import annotations

import numpy as np

FEATDUMP_MAGIC = b'RDFD'
FEATDUMP_VERSION = 1
DTYPE_FLOAT32 = 1
FLAG_IDS = 1
FLAG_CAMS = 2

HEADER = np.dtype([('magic', 'S4'),
                   ('version', '<u2'),
                   ('dtype', 'u1'),
                   ('reserved', 'u1'),
                   ('rows', '<u4'),
                   ('cols', '<u4'),
                   ('flags', '<u4')])


def write_features(path: str, feats, ids=None, cams=None):
    '''
    Write a feature matrix as a binary dump: a 20-byte little-endian header
    (magic ``RDFD``, version, dtype tag, rows, cols, flags), the row-major
    float32 matrix, then optional int64 identity and camera columns.
    '''
    feats = np.ascontiguousarray(feats, dtype='<f4')
    if feats.ndim != 2:
        raise ValueError(f'features must be a matrix, got shape {feats.shape}')
    rows, cols = feats.shape
    flags = 0
    tails = []
    for flag, column in ((FLAG_IDS, ids), (FLAG_CAMS, cams)):
        if column is None:
            continue
        column = np.ascontiguousarray(column, dtype='<i8')
        if column.shape != (rows,):
            raise ValueError(f'expected {rows} labels, got shape {column.shape}')
        flags |= flag
        tails.append(column)

    header = np.array([(FEATDUMP_MAGIC, FEATDUMP_VERSION, DTYPE_FLOAT32, 0, rows, cols, flags)], dtype=HEADER)
    with open(path, 'wb') as f:
        f.write(header.tobytes())
        f.write(feats.tobytes())
        for column in tails:
            f.write(column.tobytes())
    return path


def read_features(path: str) -> dict:
    '''
    Read a dump written by `write_features`.

    Returns
    -------
    dict
        ``feats`` (rows,cols) float32, ``ids`` and ``cams`` (rows,) int64 or None
    '''
    with open(path, 'rb') as f:
        raw = f.read()
    if len(raw) < HEADER.itemsize:
        raise ValueError(f'{path}: file too short for a feature dump header')
    header = np.frombuffer(raw[:HEADER.itemsize], dtype=HEADER)[0]
    if header['magic'] != FEATDUMP_MAGIC:
        raise ValueError(f'{path}: bad magic {header["magic"]!r}')
    if header['version'] != FEATDUMP_VERSION:
        raise ValueError(f'{path}: unsupported feature dump version {header["version"]}')
    if header['dtype'] != DTYPE_FLOAT32:
        raise ValueError(f'{path}: unsupported dtype tag {header["dtype"]}')

    rows, cols, flags = int(header['rows']), int(header['cols']), int(header['flags'])
    expected = HEADER.itemsize + rows * cols * 4 + 8 * rows * bin(flags & (FLAG_IDS | FLAG_CAMS)).count('1')
    if len(raw) != expected:
        raise ValueError(f'{path}: expected {expected} bytes, found {len(raw)}')

    offset = HEADER.itemsize
    feats = np.frombuffer(raw, dtype='<f4', count=rows * cols, offset=offset).reshape(rows, cols).copy()
    offset += rows * cols * 4
    out = dict(feats=feats, ids=None, cams=None)
    for flag, key in ((FLAG_IDS, 'ids'), (FLAG_CAMS, 'cams')):
        if flags & flag:
            out[key] = np.frombuffer(raw, dtype='<i8', count=rows, offset=offset).copy()
            offset += rows * 8
    return out
