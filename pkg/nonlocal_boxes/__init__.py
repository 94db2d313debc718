import donfig

config = donfig.Config(
    "nonlocal-boxes",
    defaults=[
        {
            "tolerance": 1e-12,
            "function": {"max-arity": 20, "max-table-bits": 24},
            "exact": {"max-atom-bits": 30, "chunk-rows": 65536},
            "sample": {"batch-size": 2000, "workers": 1, "sigmas": 5.0},
            "ip-decay": {"exact-max-n": 3},
        }
    ],
)

from .core import BooleanFunction, DistributedBit, Transcript  # noqa: E402
from .boxes import (  # noqa: E402
    BoxModel,
    LocalDeterministic,
    LocalMixture,
    Noisy,
    Perfect,
    QuantumStrategy,
)
from .engines import cross_check, exact_success, sample_success  # noqa: E402
from . import analysis, boxes, circuits, core, engines, protocols  # noqa: E402

__version__ = "0.1.0"
