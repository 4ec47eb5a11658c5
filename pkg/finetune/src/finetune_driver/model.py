"""Tiny causal transformer with low-rank adapters and a 2-class head.

The desk-scale stand-in for a hub-hosted causal LM: base weights are
frozen (optionally 4-bit quantized, QLoRA-style); training touches only
the adapter matrices, the classification head, and the embedding rows
added by a tokenizer extension. Pooling takes the hidden state of the
last non-pad position, as a causal LM's next-token head would see it.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import torch
import torch.nn as nn
import torch.nn.functional as F


@dataclass(frozen=True)
class ModelSpec:
    d_model: int = 64
    n_heads: int = 4
    n_layers: int = 2
    d_ff: int = 128
    max_seq_len: int = 128
    lora_rank: int = 8
    lora_alpha: float = 32.0
    lora_dropout: float = 0.1
    quantize_4bit: bool = False


def _quantize_4bit(weight: torch.Tensor):
    """Per-output-channel absmax 4-bit quantization (15 signed levels)."""
    scale = weight.abs().amax(dim=1, keepdim=True).clamp(min=1e-8) / 7.0
    codes = torch.clamp(torch.round(weight / scale), -7, 7).to(torch.int8)
    return codes, scale


class FrozenLinear(nn.Module):
    """Linear layer with frozen (optionally 4-bit) weights, bias-free."""

    def __init__(self, d_in: int, d_out: int, quantize: bool):
        super().__init__()
        weight = torch.empty(d_out, d_in)
        nn.init.normal_(weight, std=0.02)
        self.quantized = quantize
        if quantize:
            codes, scale = _quantize_4bit(weight)
            self.register_buffer("codes", codes)
            self.register_buffer("scale", scale)
        else:
            self.register_buffer("weight", weight)

    def effective_weight(self) -> torch.Tensor:
        if self.quantized:
            return self.codes.to(torch.float32) * self.scale
        return self.weight

    def forward(self, x: torch.Tensor) -> torch.Tensor:
        return F.linear(x, self.effective_weight())


class LoRALinear(nn.Module):
    """Frozen base projection plus a trainable low-rank update."""

    def __init__(self, d_in: int, d_out: int, spec: ModelSpec, adapt: bool):
        super().__init__()
        self.base = FrozenLinear(d_in, d_out, spec.quantize_4bit)
        self.adapt = adapt and spec.lora_rank > 0
        if self.adapt:
            self.lora_a = nn.Parameter(torch.randn(spec.lora_rank, d_in) * 0.02)
            self.lora_b = nn.Parameter(torch.zeros(d_out, spec.lora_rank))
            self.scaling = spec.lora_alpha / spec.lora_rank
            self.dropout = nn.Dropout(spec.lora_dropout)

    def forward(self, x: torch.Tensor) -> torch.Tensor:
        out = self.base(x)
        if self.adapt:
            out = out + self.scaling * F.linear(F.linear(self.dropout(x), self.lora_a), self.lora_b)
        return out


class CausalSelfAttention(nn.Module):
    def __init__(self, spec: ModelSpec):
        super().__init__()
        d = spec.d_model
        self.n_heads = spec.n_heads
        self.head_dim = d // spec.n_heads
        # adapters on the query and value projections (bias mode: none)
        self.q_proj = LoRALinear(d, d, spec, adapt=True)
        self.k_proj = LoRALinear(d, d, spec, adapt=False)
        self.v_proj = LoRALinear(d, d, spec, adapt=True)
        self.o_proj = LoRALinear(d, d, spec, adapt=False)

    def forward(self, x: torch.Tensor, pad_mask: torch.Tensor) -> torch.Tensor:
        bsz, seq, d = x.shape

        def heads(t):
            return t.view(bsz, seq, self.n_heads, self.head_dim).transpose(1, 2)

        q, k, v = heads(self.q_proj(x)), heads(self.k_proj(x)), heads(self.v_proj(x))
        scores = (q @ k.transpose(-2, -1)) / math.sqrt(self.head_dim)
        causal = torch.triu(torch.ones(seq, seq, dtype=torch.bool, device=x.device), 1)
        scores = scores.masked_fill(causal, float("-inf"))
        scores = scores.masked_fill(pad_mask[:, None, None, :], float("-inf"))
        out = torch.softmax(scores, dim=-1) @ v
        return self.o_proj(out.transpose(1, 2).reshape(bsz, seq, d))


class Block(nn.Module):
    def __init__(self, spec: ModelSpec):
        super().__init__()
        self.ln1 = nn.LayerNorm(spec.d_model)
        self.attn = CausalSelfAttention(spec)
        self.ln2 = nn.LayerNorm(spec.d_model)
        self.ff_in = LoRALinear(spec.d_model, spec.d_ff, spec, adapt=False)
        self.ff_out = LoRALinear(spec.d_ff, spec.d_model, spec, adapt=False)

    def forward(self, x, pad_mask):
        x = x + self.attn(self.ln1(x), pad_mask)
        return x + self.ff_out(F.gelu(self.ff_in(self.ln2(x))))


class TinyCausalClassifier(nn.Module):
    """Causal LM body with a classification layer sized to the label count."""

    def __init__(self, n_base_vocab: int, n_added: int, spec: ModelSpec, n_labels: int = 2):
        super().__init__()
        self.spec = spec
        self.n_base_vocab = n_base_vocab
        d = spec.d_model
        self.tok_emb = nn.Embedding(n_base_vocab, d)
        nn.init.normal_(self.tok_emb.weight, std=0.02)
        self.tok_emb.weight.requires_grad_(False)
        # extension rows stay trainable: they are new, not pre-trained
        self.added_emb = nn.Embedding(max(n_added, 1), d)
        nn.init.normal_(self.added_emb.weight, std=0.02)
        self.pos_emb = nn.Embedding(spec.max_seq_len, d)
        nn.init.normal_(self.pos_emb.weight, std=0.02)
        self.pos_emb.weight.requires_grad_(False)
        self.blocks = nn.ModuleList(Block(spec) for _ in range(spec.n_layers))
        self.ln_f = nn.LayerNorm(spec.d_model)
        self.head = nn.Linear(spec.d_model, n_labels)
        for module in self.modules():
            if isinstance(module, nn.LayerNorm):
                for p in module.parameters():
                    p.requires_grad_(False)

    def embed(self, ids: torch.Tensor) -> torch.Tensor:
        base = self.tok_emb(ids.clamp(max=self.n_base_vocab - 1))
        extended = ids >= self.n_base_vocab
        if extended.any():
            extra_ids = (ids - self.n_base_vocab).clamp(min=0)
            base = torch.where(extended[..., None], self.added_emb(extra_ids), base)
        return base

    def forward(self, ids: torch.Tensor, pad_mask: torch.Tensor) -> torch.Tensor:
        seq = ids.shape[1]
        x = self.embed(ids) + self.pos_emb.weight[:seq][None, :, :]
        for block in self.blocks:
            x = block(x, pad_mask)
        x = self.ln_f(x)
        # hidden state at the last non-pad position per row
        last = (~pad_mask).sum(dim=1).clamp(min=1) - 1
        pooled = x[torch.arange(x.shape[0]), last]
        return self.head(pooled)

    def trainable_parameters(self):
        return [p for p in self.parameters() if p.requires_grad]

    def n_trainable(self) -> int:
        return sum(p.numel() for p in self.trainable_parameters())

    def n_total(self) -> int:
        return sum(p.numel() for p in self.parameters())
