import pytest
import torch

from reidnas.algorithms import ReIDNetwork, ResNetReID, count_params_flops, cost_breakdown, resnet_cost
from reidnas.algorithms.cost import Cost, bn_cost, conv_cost, count_parameters, linear_cost, op_cost
from reidnas.datatypes import BlockSpec, Genotype, MacroConfig, OpKind
from tests.fixtures import rng, tiny_macro, random_genotype


def naive_conv_macs(cin, cout, kernel, out_hw, groups=1):
    macs = 0
    for _ in range(out_hw[0] * out_hw[1]):
        for _ in range(cout):
            macs += cin // groups * kernel * kernel
    return macs


def test_conv_cost():
    cost = conv_cost(3, 64, 3, (32, 32))
    assert cost == Cost(1728, 1769472)
    assert cost.macs == naive_conv_macs(3, 64, 3, (32, 32))
    assert conv_cost(8, 8, 3, (4, 4), groups=8) == Cost(72, 72 * 16)
    assert conv_cost(3, 4, 1, (2, 2), bias=True).params == 16
    assert bn_cost(10) == Cost(20, 0)
    assert linear_cost(4, 3) == Cost(15, 12)
    assert Cost(1, 2) + Cost(3, 4) == Cost(4, 6)


def test_free_ops(tiny_macro):
    for op in (OpKind.ZERO, OpKind.IDENTITY, OpKind.MAX_POOL_3x3, OpKind.AVG_POOL_3x3):
        for stride in (1, 2):
            assert op_cost(op, 16, stride, (8, 4), tiny_macro) == Cost(0, 0)
    sep = op_cost(OpKind.SEP_CONV_3x3, 16, 2, (8, 4), tiny_macro)
    assert sep == conv_cost(16, 16, 3, (4, 2), groups=16) + conv_cost(16, 16, 1, (4, 2)) + bn_cost(16)
    assert op_cost(OpKind.DIL_CONV_3x3, 16, 1, (8, 4), tiny_macro) == \
        op_cost(OpKind.SEP_CONV_3x3, 16, 1, (8, 4), tiny_macro)


def test_breakdown(rng, tiny_macro):
    g = random_genotype(rng, tiny_macro.B)
    rows = cost_breakdown(g, tiny_macro)
    names = [name for name, _ in rows]
    assert names == ['stem', 'cell0', 'cell1', 'cell2', 'cell3', 'head']
    params, macs = count_params_flops(g, tiny_macro)
    assert sum(c.params for _, c in rows) == params
    assert sum(c.macs for _, c in rows) == macs
    head = dict(rows)['head']
    assert head.params == 32 * 16 + 16 + 16 * 4 + 4


def test_cost_invalid(rng, tiny_macro):
    with pytest.raises(ValueError):
        count_params_flops(random_genotype(rng, 3), tiny_macro)
    blk = BlockSpec(0, 1, OpKind.PART_AWARE, OpKind.ZERO)
    with pytest.raises(ValueError):
        count_params_flops(Genotype([blk], [blk]), MacroConfig(B=1, input_hw=(48, 16)))
    with pytest.raises(ValueError):
        resnet_cost(tiny_macro, 'resnet50')


def test_identity_genotype_cost(tiny_macro):
    blk = BlockSpec(0, 1, OpKind.IDENTITY, OpKind.IDENTITY)
    g = Genotype([blk, blk], [blk, blk])
    net = ReIDNetwork(g, tiny_macro)
    ops = sum(count_parameters(op) for cell in net.cells for ops in cell.blocks for op in ops)
    assert ops == 0
    assert count_params_flops(g, tiny_macro)[0] == count_parameters(net)


def test_static_params_match_runtime(rng):
    macro = MacroConfig(C=64, l=(2, 2, 2, 2), B=4, input_hw=(128, 64), num_ids=751)
    for _ in range(20):
        space = 'reid' if rng.random() < 0.5 else 'classic'
        g = random_genotype(rng, macro.B, space)
        params, _ = count_params_flops(g, macro)
        assert params == count_parameters(ReIDNetwork(g, macro))


def hooked_macs(model, input_hw):
    total = [0]

    def conv_hook(module, inputs, output):
        total[0] += module.weight.numel() * output.shape[-2] * output.shape[-1]

    def linear_hook(module, inputs, output):
        total[0] += module.weight.numel() * (output.numel() // output.shape[0] // output.shape[-1])

    handles = []
    for m in model.modules():
        if isinstance(m, torch.nn.Conv2d):
            handles.append(m.register_forward_hook(conv_hook))
        elif isinstance(m, torch.nn.Linear):
            handles.append(m.register_forward_hook(linear_hook))
    model.eval()
    with torch.no_grad():
        model(torch.zeros(1, 3, *input_hw))
    for h in handles:
        h.remove()
    return total[0]


def test_pcb_head_cost(rng):
    macro = MacroConfig(C=8, l=(1, 2, 1, 1), B=3, input_hw=(64, 32), num_ids=10, embed_dim=16,
                        head='pcb', pcb_stripes=4)
    for _ in range(5):
        g = random_genotype(rng, macro.B, 'classic')
        params, macs = count_params_flops(g, macro)
        net = ReIDNetwork(g, macro)
        assert params == count_parameters(net)
        assert macs == hooked_macs(net, macro.input_hw)
    head = dict(cost_breakdown(g, macro))['head']
    single = dict(cost_breakdown(g, macro.with_updates(head='global')))['head']
    assert head == Cost(4 * single.params, 4 * single.macs)


def test_static_macs_match_hooks(rng):
    macro = MacroConfig(C=8, l=(1, 2, 1, 1), B=3, input_hw=(64, 32), num_ids=10, embed_dim=16)
    for _ in range(5):
        g = random_genotype(rng, macro.B, 'classic')
        assert count_params_flops(g, macro)[1] == hooked_macs(ReIDNetwork(g, macro), macro.input_hw)


def test_resnet_anchor():
    macro = MacroConfig()
    params, macs = resnet_cost(macro)
    assert abs(params - 11.6e6) / 11.6e6 < 0.05
    assert abs(macs - 1.7e9) / 1.7e9 < 0.10
    net = ResNetReID(macro)
    assert count_parameters(net) == params
    assert hooked_macs(net, macro.input_hw) == macs
    assert resnet_cost(macro, 'resnet34')[0] > params
