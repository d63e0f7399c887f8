from __future__ import annotations

import math

import torch
import torch.nn as nn


def causal_mask(size, device=None):
    """Boolean attention mask, True where attention is blocked (strictly future positions)."""
    return torch.triu(torch.ones(size, size, dtype=torch.bool, device=device), diagonal=1)


class TransformerStack(nn.Module):
    """
    Pre-norm transformer layers that also return every layer's hidden state.

    `Args:`
        d: int
            Width
        heads: int
        layers: int
        ff_mult: int
            Feed-forward width multiplier
        dropout: float
    """

    def __init__(self, d, heads, layers, ff_mult=4, dropout=0.0):
        super().__init__()
        self.layers = nn.ModuleList([
            nn.TransformerEncoderLayer(
                d_model=d,
                nhead=heads,
                dim_feedforward=d * ff_mult,
                dropout=dropout,
                activation='gelu',
                batch_first=True,
                norm_first=True,
            )
            for _ in range(layers)
        ])
        self.norm = nn.LayerNorm(d)

    def forward(self, x, causal=False, padding_mask=None):
        """
        `Args:`
            x: tensor (B, S, d)
            causal: bool
                Each position attends to itself and earlier positions only
            padding_mask: bool tensor (B, S), True at padding positions
        `Returns:`
            (tensor (B, S, d), list of per-layer tensors (B, S, d))
        """

        mask = causal_mask(x.shape[1], x.device) if causal else None
        hidden = []
        for layer in self.layers:
            x = layer(x, src_mask=mask, src_key_padding_mask=padding_mask)
            hidden.append(x)
        return self.norm(x), hidden


def init_parameters(module):
    """
    Symmetric uniform initialization scaled by 1/sqrt(fan_in) for every affine map and
    embedding; layer norms at unit gain and zero bias.
    """

    for sub in module.modules():
        if isinstance(sub, nn.Linear):
            bound = 1.0 / math.sqrt(sub.in_features)
            nn.init.uniform_(sub.weight, -bound, bound)
            if sub.bias is not None:
                nn.init.uniform_(sub.bias, -bound, bound)
        elif isinstance(sub, nn.Embedding):
            bound = 1.0 / math.sqrt(sub.num_embeddings)
            nn.init.uniform_(sub.weight, -bound, bound)
            if sub.padding_idx is not None:
                with torch.no_grad():
                    sub.weight[sub.padding_idx].zero_()
        elif isinstance(sub, nn.MultiheadAttention):
            bound = 1.0 / math.sqrt(sub.embed_dim)
            nn.init.uniform_(sub.in_proj_weight, -bound, bound)
            if sub.in_proj_bias is not None:
                nn.init.uniform_(sub.in_proj_bias, -bound, bound)
        elif isinstance(sub, nn.LayerNorm):
            nn.init.ones_(sub.weight)
            nn.init.zeros_(sub.bias)
