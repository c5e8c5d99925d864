import datetime
import json
import logging
import os
import platform
from typing import Any, Optional

import numpy as np
import psutil
import torch

log = logging.getLogger(__name__)


def make_rng(seed: int, *keys: int) -> np.random.Generator:
    """Build a numpy generator for a named sub-stream of a seed.

    Args:
        seed (int): Root seed of the run
        keys (int): Integers identifying the sub-stream (object id, frame id, ...)
    Returns:
        np.random.Generator: Generator that depends only on (seed, keys)
    """
    return np.random.default_rng(np.random.SeedSequence(entropy=int(seed), spawn_key=tuple(int(k) for k in keys)))


def torch_generator(seed: int, *keys: int) -> torch.Generator:
    """Torch counterpart of make_rng."""
    sub_seed = int(make_rng(seed, *keys).integers(0, 2**62))
    gen = torch.Generator()
    gen.manual_seed(sub_seed)
    return gen


def write_json(path: str, data: Any) -> None:
    with open(path, "w") as file:
        json.dump(data, file, indent=2, sort_keys=True)


def read_json(path: str) -> Any:
    with open(path, "r") as file:
        return json.load(file)


def parse_value(text: str) -> Any:
    """Parse a command line override value.

    Tries JSON first (numbers, booleans, lists), falls back to the raw string.
    """
    try:
        return json.loads(text)
    except ValueError:
        log.debug("Value \"%s\" is not JSON, keeping it as string", text)
        return text


def gather_run_context() -> dict:
    """Collect host and software information for run provenance."""
    memory = psutil.virtual_memory()
    return {
        'hostname': platform.node(),
        'kernel_release': platform.release(),
        'hardware_machine': platform.machine(),
        'cpu_count_logical': psutil.cpu_count(logical=True),
        'cpu_count_physical': psutil.cpu_count(logical=False),
        'memory_total': memory.total,
        'python_version': platform.python_version(),
        'torch_version': torch.__version__,
        'numpy_version': np.__version__,
        'time': datetime.datetime.now().strftime('%Y-%m-%d %H:%M:%S'),
    }


def process_rss_mb(pid: Optional[int] = None) -> float:
    # Resident memory of the current (or given) process, in MiB
    return psutil.Process(pid or os.getpid()).memory_info().rss / 1024 ** 2
