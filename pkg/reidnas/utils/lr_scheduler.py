from __future__ import annotations

import torch


def optimizer_factory(params,
                      cfg : dict,
                      verbose=False):
    '''
    Optimizer factory.

    Arguments
    ---------
    params: iterable
        parameters (or parameter groups) to optimize.

    cfg: dict
        Configuration dictionary

        `Class`: str
            class name of the optimizer from `torch.optim`.

        `Param`: dict
            keyword arguments passed to the optimizer constructor.

    Returns
    -------
    opt: Optimizer
        An instance of the optimizer.
    '''
    opt_class = cfg.get('Class')
    opt_param = dict(cfg.get('Param', {}))

    if opt_class is None or not hasattr(torch.optim, opt_class):
        raise RuntimeError(
            f'torch.optim has no optimizer called {opt_class}'
        )
    if 'betas' in opt_param:
        opt_param['betas'] = tuple(opt_param['betas'])

    opt = getattr(torch.optim, opt_class)(params, **opt_param)

    if verbose:
        print('[optimizer]', opt_class)
        print('[optimizer]', opt_param)

    return opt


def scheduler_factory(opt : torch.optim.Optimizer,
                      cfg : dict,
                      verbose=False):
    '''
    Learning rate factory.

    Arguments
    ---------
    opt: Optimizer
        A `torch.optim.Optimizer` instance.

    cfg: dict
        Configuration dictionary

        `Class`: str
            class name of the scheduler from `torch.optim.lr_scheduler`.

        `Param`: dict
            keyword arguments passed to the scheduler constructor.

    Returns
    -------
    sch: Scheduler
        An instance of the scheduler.
        `None` if `cfg == None`, or `Class` key not found in `cfg`.
    '''
    if cfg is None:
        return None

    sch_class = cfg.get('Class')
    sch_param = dict(cfg.get('Param', {}))

    if sch_class is None:
        return None

    if not hasattr(torch.optim.lr_scheduler, sch_class):
        raise RuntimeError(
            f'torch.optim.lr_scheduler has no scheduler called {sch_class}'
        )
    if 'milestones' in sch_param:
        sch_param['milestones'] = list(sch_param['milestones'])

    sch = getattr(torch.optim.lr_scheduler, sch_class)(opt, **sch_param)

    if verbose:
        print('[lr_scheduler]', sch_class)
        print('[lr_scheduler]', sch_param)

    return sch


def get_lr(opt : torch.optim.Optimizer) -> float:
    '''Learning rate of the first parameter group.'''
    return opt.param_groups[0]['lr']


def lr_at_epochs(opt_cfg : dict, sch_cfg : dict, epochs) -> list:
    '''
    Learning rates a scheduler produces at the start of each requested epoch,
    stepping once per epoch on a throwaway optimizer.
    '''
    dummy = torch.nn.Parameter(torch.zeros(1))
    opt = optimizer_factory([dummy], opt_cfg)
    sch = scheduler_factory(opt, sch_cfg)
    epochs = list(epochs)
    rates = dict()
    for epoch in range(max(epochs) + 1):
        rates[epoch] = get_lr(opt)
        opt.step()
        if sch is not None:
            sch.step()
    return [rates[e] for e in epochs]
