"""Adam with bias correction and non-finite gradient detection."""

import logging
from dataclasses import dataclass, field
from typing import Dict, Iterable, Tuple

import torch

from flowshape.exceptions import NonFiniteGradientError, ShapeMismatchError

log = logging.getLogger(__name__)


@dataclass
class AdamState:
    step: int = 0
    exp_avg: Dict[str, torch.Tensor] = field(default_factory=dict)
    exp_avg_sq: Dict[str, torch.Tensor] = field(default_factory=dict)


def adam_step(params: Dict[str, torch.Tensor], grads: Dict[str, torch.Tensor], state: AdamState, lr: float,
              betas: Tuple[float, float] = (0.9, 0.999), eps: float = 1e-8) -> Tuple[Dict[str, torch.Tensor], AdamState]:
    """One Adam update, returning new parameter tensors and the advanced state.

    Raises:
        NonFiniteGradientError: A gradient holds NaN or Inf, the message names the parameter
        ShapeMismatchError: A gradient and its parameter differ in shape
    """
    for name, grad in grads.items():
        if grad.shape != params[name].shape:
            raise ShapeMismatchError(f"Gradient of {name} has shape {tuple(grad.shape)}, "
                                     f"parameter has {tuple(params[name].shape)}")
        if not bool(torch.isfinite(grad).all()):
            raise NonFiniteGradientError(f"Non-finite gradient for parameter \"{name}\"")

    beta1, beta2 = betas
    step = state.step + 1
    new_state = AdamState(step)
    new_params = {}
    for name, value in params.items():
        grad = grads.get(name)
        m = state.exp_avg.get(name, torch.zeros_like(value))
        v = state.exp_avg_sq.get(name, torch.zeros_like(value))
        if grad is None:
            new_params[name], new_state.exp_avg[name], new_state.exp_avg_sq[name] = value, m, v
            continue
        m = beta1 * m + (1.0 - beta1) * grad
        v = beta2 * v + (1.0 - beta2) * grad * grad
        m_hat = m / (1.0 - beta1 ** step)
        v_hat = v / (1.0 - beta2 ** step)
        new_params[name] = value - lr * m_hat / (torch.sqrt(v_hat) + eps)
        new_state.exp_avg[name], new_state.exp_avg_sq[name] = m, v
    return new_params, new_state


class CheckedAdam:
    """Adam over a module's named parameters, refusing non-finite gradients."""

    def __init__(self, named_parameters: Iterable[Tuple[str, torch.nn.Parameter]], lr: float,
                 betas: Tuple[float, float] = (0.9, 0.999), eps: float = 1e-8):
        self.params = {name: p for name, p in named_parameters if p.requires_grad}
        self.lr, self.betas, self.eps = lr, betas, eps
        self.state = AdamState()

    def zero_grad(self) -> None:
        for p in self.params.values():
            p.grad = None

    @torch.no_grad()
    def step(self) -> None:
        values = {name: p.detach() for name, p in self.params.items()}
        grads = {name: p.grad for name, p in self.params.items() if p.grad is not None}
        updated, self.state = adam_step(values, grads, self.state, self.lr, self.betas, self.eps)
        for name, p in self.params.items():
            p.copy_(updated[name])

    def state_tensors(self) -> Dict[str, torch.Tensor]:
        tensors = {f"exp_avg.{k}": v for k, v in self.state.exp_avg.items()}
        tensors.update({f"exp_avg_sq.{k}": v for k, v in self.state.exp_avg_sq.items()})
        return tensors

    def load_state_tensors(self, step: int, tensors: Dict[str, torch.Tensor]) -> None:
        self.state = AdamState(step)
        for key, value in tensors.items():
            kind, name = key.split(".", 1)
            target = self.state.exp_avg if kind == "exp_avg" else self.state.exp_avg_sq
            target[name] = value.to(self.params[name].dtype).clone()
