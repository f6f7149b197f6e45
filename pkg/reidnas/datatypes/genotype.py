from __future__ import annotations

import json
from dataclasses import dataclass
from enum import IntEnum

GENOTYPE_VERSION = '1.0'


class OpKind(IntEnum):
    """
    Candidate operations of a cell edge. The integer value is the ordinal used
    for tie-breaking during derivation.
    """
    PART_AWARE = 0
    MAX_POOL_3x3 = 1
    AVG_POOL_3x3 = 2
    SEP_CONV_3x3 = 3
    DIL_CONV_3x3 = 4
    ZERO = 5
    IDENTITY = 6

    @property
    def tag(self) -> str:
        '''String used in the genotype JSON document.'''
        return self.name.lower()

    @classmethod
    def from_tag(cls, tag: str) -> OpKind:
        for op in cls:
            if op.tag == tag:
                return op
        raise ValueError(f'unknown operation tag {tag!r}')


SEARCH_SPACES = {
    'reid': tuple(OpKind),
    'classic': tuple(op for op in OpKind if op != OpKind.PART_AWARE),
}


def space_ops(space: str) -> tuple:
    '''Ordered operation kinds of a named search space.'''
    if space not in SEARCH_SPACES:
        raise ValueError(f'unknown search space {space!r}, must be one of {list(SEARCH_SPACES)}')
    return SEARCH_SPACES[space]


def num_candidate_inputs(block: int) -> int:
    '''Two previous cell outputs plus every earlier block of the cell.'''
    return 2 + block


@dataclass(frozen=True)
class BlockSpec:
    input1: int
    input2: int
    op1: OpKind
    op2: OpKind

    def validate(self, block: int):
        limit = num_candidate_inputs(block)
        for name in ('input1', 'input2'):
            idx = getattr(self, name)
            if not 0 <= idx < limit:
                raise ValueError(f'block {block}: {name}={idx} must be in [0,{limit})')


class GenotypeParseError(ValueError):
    '''Schema violation in a genotype document, located by a JSONPath-like path.'''

    def __init__(self, path: str, message: str):
        super().__init__(f'{path}: {message}')
        self.path = path


@dataclass(frozen=True)
class Genotype:
    '''
    Discrete architecture: one normal cell and one reduction cell, each a
    sequence of B blocks.
    '''
    normal: tuple
    reduction: tuple
    space: str = 'reid'
    version: str = GENOTYPE_VERSION

    def __post_init__(self):
        object.__setattr__(self, 'normal', tuple(self.normal))
        object.__setattr__(self, 'reduction', tuple(self.reduction))
        if len(self.normal) < 1:
            raise ValueError('a genotype needs at least one block per cell')
        if len(self.normal) != len(self.reduction):
            raise ValueError(f'normal ({len(self.normal)}) and reduction ({len(self.reduction)}) '
                             'cells must have the same number of blocks')
        allowed = space_ops(self.space)
        for cell in (self.normal, self.reduction):
            for i, blk in enumerate(cell):
                blk.validate(i)
                for op in (blk.op1, blk.op2):
                    if op not in allowed:
                        raise ValueError(f'{op.tag} is not part of the {self.space} search space')

    @property
    def B(self) -> int:
        return len(self.normal)

    def cell(self, reduction: bool) -> tuple:
        return self.reduction if reduction else self.normal

    def to_json(self) -> str:
        return genotype_to_json(self)

    @classmethod
    def from_json(cls, text: str) -> Genotype:
        return genotype_from_json(text)

    def __str__(self):
        return render_genotype(self)


_TOP_KEYS = ('version', 'space', 'B', 'normal', 'reduction')
_BLOCK_KEYS = ('i1', 'i2', 'o1', 'o2')


def genotype_to_json(g: Genotype) -> str:
    doc = dict(version=g.version, space=g.space, B=g.B)
    for name in ('normal', 'reduction'):
        doc[name] = [dict(i1=b.input1, i2=b.input2, o1=b.op1.tag, o2=b.op2.tag)
                     for b in g.cell(name == 'reduction')]
    return json.dumps(doc, indent=2)


def _require_int(value, path):
    if isinstance(value, bool) or not isinstance(value, int):
        raise GenotypeParseError(path, f'expected an integer, got {value!r}')
    return value


def _parse_cell(blocks, path, num_blocks, allowed):
    if not isinstance(blocks, list):
        raise GenotypeParseError(path, 'expected an array of blocks')
    if len(blocks) != num_blocks:
        raise GenotypeParseError(path, f'expected {num_blocks} blocks, found {len(blocks)}')
    cell = []
    for i, blk in enumerate(blocks):
        bpath = f'{path}[{i}]'
        if not isinstance(blk, dict):
            raise GenotypeParseError(bpath, 'expected an object')
        for key in blk:
            if key not in _BLOCK_KEYS:
                raise GenotypeParseError(f'{bpath}.{key}', 'unknown field')
        for key in _BLOCK_KEYS:
            if key not in blk:
                raise GenotypeParseError(f'{bpath}.{key}', 'missing field')
        inputs = []
        for key in ('i1', 'i2'):
            idx = _require_int(blk[key], f'{bpath}.{key}')
            if not 0 <= idx < num_candidate_inputs(i):
                raise GenotypeParseError(f'{bpath}.{key}',
                    f'input index {idx} out of range [0,{num_candidate_inputs(i)})')
            inputs.append(idx)
        ops = []
        for key in ('o1', 'o2'):
            tag = blk[key]
            try:
                op = OpKind.from_tag(tag) if isinstance(tag, str) else None
            except ValueError:
                op = None
            if op is None or op not in allowed:
                raise GenotypeParseError(f'{bpath}.{key}', f'invalid operation {tag!r}')
            ops.append(op)
        cell.append(BlockSpec(inputs[0], inputs[1], ops[0], ops[1]))
    return cell


def genotype_from_json(text: str) -> Genotype:
    try:
        doc = json.loads(text)
    except json.JSONDecodeError as err:
        raise GenotypeParseError('$', f'malformed JSON ({err})') from None
    if not isinstance(doc, dict):
        raise GenotypeParseError('$', 'expected an object')
    for key in doc:
        if key not in _TOP_KEYS:
            raise GenotypeParseError(f'$.{key}', 'unknown field')
    for key in _TOP_KEYS:
        if key not in doc:
            raise GenotypeParseError(f'$.{key}', 'missing field')

    if doc['version'] != GENOTYPE_VERSION:
        raise GenotypeParseError('$.version', f'unsupported version {doc["version"]!r} (expected {GENOTYPE_VERSION!r})')
    if doc['space'] not in SEARCH_SPACES:
        raise GenotypeParseError('$.space', f'unknown search space {doc["space"]!r}')
    num_blocks = _require_int(doc['B'], '$.B')
    if num_blocks < 1:
        raise GenotypeParseError('$.B', 'B must be at least 1')

    allowed = space_ops(doc['space'])
    normal = _parse_cell(doc['normal'], '$.normal', num_blocks, allowed)
    reduction = _parse_cell(doc['reduction'], '$.reduction', num_blocks, allowed)
    return Genotype(normal, reduction, space=doc['space'], version=doc['version'])


def render_genotype(g: Genotype) -> str:
    '''
    Plain-text dump of both cells. Inputs are named c_{k-2}, c_{k-1} for the
    previous cells and b<j> for earlier blocks.
    '''
    def name(idx):
        return ('c_{k-2}', 'c_{k-1}')[idx] if idx < 2 else f'b{idx-2}'

    lines = []
    for label in ('normal', 'reduction'):
        lines.append(f'{label} cell (B={g.B}, space={g.space})')
        for i, blk in enumerate(g.cell(label == 'reduction')):
            lines.append(f'  b{i} = {blk.op1.tag}({name(blk.input1)}) + {blk.op2.tag}({name(blk.input2)})')
        lines.append(f'  out = concat(b0..b{g.B-1})')
    return '\n'.join(lines)
