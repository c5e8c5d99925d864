"""Central finite-difference gradient checking at 64-bit precision."""

import logging
from dataclasses import dataclass
from typing import Callable, Optional, Sequence

import numpy as np
import torch

log = logging.getLogger(__name__)


@dataclass
class GradCheckReport:
    passed: bool
    max_rel_error: float
    # input position and flat index of the worst coordinate
    worst_input: int
    worst_index: int
    analytic: float
    numeric: float
    n_checked: int

    def __str__(self) -> str:
        status = "passed" if self.passed else "FAILED"
        return (f"grad check {status}: max relative error {self.max_rel_error:.3e} at input {self.worst_input} "
                f"index {self.worst_index} (analytic {self.analytic:.6e}, numeric {self.numeric:.6e}, "
                f"{self.n_checked} coordinates)")


def grad_check(fn: Callable[..., torch.Tensor], inputs: Sequence[torch.Tensor], tolerance: float = 1e-5,
               eps: float = 1e-5, max_coords: Optional[int] = None, seed: int = 0,
               analytic: Optional[Sequence[torch.Tensor]] = None, floor: float = 1e-3) -> GradCheckReport:
    """Compare autograd gradients of a scalar function with central differences.

    Relative error of a coordinate is ``|a - n| / max(|a|, |n|, floor)``.

    Args:
        fn (callable): Scalar-valued function of ``inputs``
        inputs (list): Float64 tensors; they are perturbed in place and restored
        tolerance (float): Largest accepted relative error
        eps (float): Finite-difference step
        max_coords (int): Check a seeded random subset of at most this many coordinates per input
        seed (int): Seed of the coordinate subset
        analytic (list): Gradients to verify instead of the autograd ones
        floor (float): Denominator floor for near-zero gradients
    Returns:
        GradCheckReport: Worst coordinate and pass/fail
    """
    inputs = [x.detach().clone().to(torch.float64).requires_grad_(True) for x in inputs]
    if analytic is None:
        out = fn(*inputs)
        grads = torch.autograd.grad(out, inputs, allow_unused=True)
        analytic = [torch.zeros_like(x) if g is None else g for g, x in zip(grads, inputs)]
    analytic = [g.detach().to(torch.float64).reshape(-1) for g in analytic]

    rng = np.random.default_rng(seed)
    worst = (0.0, 0, 0, 0.0, 0.0)
    n_checked = 0
    with torch.no_grad():
        for i, x in enumerate(inputs):
            flat = x.view(-1)
            coords = np.arange(flat.numel())
            if max_coords is not None and len(coords) > max_coords:
                coords = np.sort(rng.choice(coords, size=max_coords, replace=False))
            for j in coords:
                original = flat[j].item()
                flat[j] = original + eps
                plus = float(fn(*inputs))
                flat[j] = original - eps
                minus = float(fn(*inputs))
                flat[j] = original
                numeric = (plus - minus) / (2.0 * eps)
                a = float(analytic[i][j])
                err = abs(a - numeric) / max(abs(a), abs(numeric), floor)
                n_checked += 1
                if err > worst[0] or n_checked == 1:
                    worst = (err, i, int(j), a, numeric)

    report = GradCheckReport(worst[0] <= tolerance, worst[0], worst[1], worst[2], worst[3], worst[4], n_checked)
    log.debug("%s", report)
    return report
