"""Multi-head scaled dot-product attention with optional key masks."""

import math
from typing import Optional

import torch
import torch.nn as nn
from einops import rearrange

from flowshape.exceptions import ShapeMismatchError


def attention(queries: torch.Tensor, keys: torch.Tensor, values: torch.Tensor, heads: int,
              key_mask: Optional[torch.Tensor] = None) -> torch.Tensor:
    """Scaled dot-product attention over ``heads`` heads.

    Args:
        queries (torch.Tensor): (..., Lq, D)
        keys (torch.Tensor): (..., Lk, D)
        values (torch.Tensor): (..., Lk, Dv)
        heads (int): Number of heads, must divide D and Dv
        key_mask (torch.Tensor): Optional (..., Lk) bool, False marks padding keys
    Returns:
        torch.Tensor: (..., Lq, Dv); queries with no valid key get zeros
    Raises:
        ShapeMismatchError: Widths or lengths disagree
    """
    if queries.shape[-1] != keys.shape[-1]:
        raise ShapeMismatchError(f"Query width {queries.shape[-1]} != key width {keys.shape[-1]}")
    if keys.shape[-2] != values.shape[-2]:
        raise ShapeMismatchError(f"{keys.shape[-2]} keys but {values.shape[-2]} values")
    if queries.shape[-1] % heads or values.shape[-1] % heads:
        raise ShapeMismatchError(f"{heads} heads do not divide widths {queries.shape[-1]}, {values.shape[-1]}")
    if keys.shape[-2] == 0:
        return queries.new_zeros(queries.shape[:-1] + values.shape[-1:])

    q = rearrange(queries, "... n (h d) -> ... h n d", h=heads)
    k = rearrange(keys, "... n (h d) -> ... h n d", h=heads)
    v = rearrange(values, "... n (h d) -> ... h n d", h=heads)
    scores = torch.matmul(q, k.transpose(-1, -2)) / math.sqrt(q.shape[-1])
    if key_mask is not None:
        mask = key_mask[..., None, None, :].to(torch.bool)
        scores = scores.masked_fill(~mask, torch.finfo(scores.dtype).min)
        weights = torch.softmax(scores, dim=-1) * mask
    else:
        weights = torch.softmax(scores, dim=-1)
    return rearrange(torch.matmul(weights, v), "... h n d -> ... n (h d)")


class MultiHeadAttention(nn.Module):
    """Self attention, or cross attention when ``context`` is given."""

    def __init__(self, width: int, heads: int, context_width: Optional[int] = None):
        super().__init__()
        if width % heads:
            raise ShapeMismatchError(f"{heads} heads do not divide width {width}")
        self.heads = heads
        self.to_q = nn.Linear(width, width, bias=False)
        self.to_k = nn.Linear(context_width or width, width, bias=False)
        self.to_v = nn.Linear(context_width or width, width, bias=False)
        self.to_out = nn.Linear(width, width)

    def forward(self, x: torch.Tensor, context: Optional[torch.Tensor] = None,
                key_mask: Optional[torch.Tensor] = None) -> torch.Tensor:
        context = x if context is None else context
        out = attention(self.to_q(x), self.to_k(context), self.to_v(context), self.heads, key_mask)
        return self.to_out(out)
