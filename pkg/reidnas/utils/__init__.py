from .utils import *
from .lr_scheduler import scheduler_factory, optimizer_factory, get_lr, lr_at_epochs
