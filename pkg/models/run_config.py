# models/run_config.py
from dataclasses import dataclass, field
from typing import Dict, Optional

from errors import ValidationError
from models.loglinear import METHOD_TAGS

STOCHASTIC_COMMANDS = ('importance', 'fit', 'sample', 'simulate')


@dataclass(frozen=True)
class RunConfig:
    """Everything one CLI invocation needs to reproduce its artifacts"""

    command: str
    inputs: Dict[str, str] = field(default_factory=dict)
    outputs: Dict[str, str] = field(default_factory=dict)
    method: Optional[str] = None
    smax: int = 10
    lam: Optional[float] = None
    s: Optional[float] = None
    folds: int = 10
    seed: Optional[int] = None
    threads: int = 1

    def __post_init__(self):
        if self.method is not None and self.method not in METHOD_TAGS:
            raise ValidationError(f"unknown method tag '{self.method}'")
        if self.command in STOCHASTIC_COMMANDS and self.seed is None:
            raise ValidationError(f"command '{self.command}' is stochastic and requires --seed")
        if self.smax < 2:
            raise ValidationError("smax must be at least 2")
        if self.folds < 2:
            raise ValidationError("cross-validation needs at least 2 folds")
        if self.method == 'dgl' and self.lam is None:
            raise ValidationError("method 'dgl' requires --lam")
        if self.method == 'dsf' and self.s is None:
            raise ValidationError("method 'dsf' requires --s")

    def to_dict(self):
        return {
            'command': self.command,
            'inputs': dict(self.inputs),
            'outputs': dict(self.outputs),
            'method': self.method,
            'smax': self.smax,
            'lam': self.lam,
            's': self.s,
            'folds': self.folds,
            'seed': self.seed,
            'threads': self.threads,
        }
