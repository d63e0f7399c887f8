"""
The anticipation model shared by the text teacher and the frame-feature student.

Both modalities encode every observed step into a d-dimensional clip feature, prepend the
ingredient feature as step 0, run a causal temporal transformer that turns position t into the
anticipated feature of step t+1, and decode that feature into a sentence with a single output
module whose weights are shared by all steps.
"""

from __future__ import annotations

import logging
from dataclasses import asdict, dataclass, field, replace

import torch
import torch.nn as nn
import torch.nn.functional as F

from ccd_anticipation.errors import ConfigError, InputError
from ccd_anticipation.layers import TransformerStack, init_parameters
from ccd_anticipation.vocab import BOS, EOS, N_RESERVED, PAD

logger = logging.getLogger(__name__)

MODALITIES = ('text', 'visual')


@dataclass
class ModelConfig:
    """
    `Args:`
        vocab_size: int
            Filled in from the vocabulary when the model is built
        n_ingredients: int
            Ingredient inventory size; filled in from the corpus grammar
        modality: str
            ``text`` (teacher) or ``visual`` (student)
        d: int
            Hidden width
        temporal_layers: int
            M, layers of the causal temporal module
        output_layers: int
            N, layers of the weight-shared output module
        encoder_layers: int
            Layers of the sentence encoder (text modality only)
        heads: int
        ff_mult: int
        dropout: float
        max_tokens: int
            L_max, longest generated sentence
        max_steps: int
            T_max, longest procedure
        frame_dim: int
            Width of a frame feature (visual modality only)
    """

    vocab_size: int = 0
    n_ingredients: int = 0
    modality: str = 'visual'
    d: int = 768
    temporal_layers: int = 2
    output_layers: int = 3
    encoder_layers: int = 2
    heads: int = 8
    ff_mult: int = 4
    dropout: float = 0.1
    max_tokens: int = 24
    max_steps: int = 16
    frame_dim: int = 64

    def validate(self):
        if self.modality not in MODALITIES:
            raise ConfigError(f'modality must be one of {MODALITIES}, got {self.modality}')
        if self.vocab_size <= N_RESERVED:
            raise ConfigError(f'vocab_size must exceed {N_RESERVED}, got {self.vocab_size}')
        if self.n_ingredients < 1:
            raise ConfigError('n_ingredients must be positive')
        if self.d < 1 or self.heads < 1 or self.d % self.heads:
            raise ConfigError(f'd ({self.d}) must be divisible by heads ({self.heads})')
        if self.temporal_layers < 1 or self.output_layers < 1 or self.encoder_layers < 1:
            raise ConfigError('layer counts must be at least 1')
        if self.max_tokens < 1 or self.max_steps < 1 or self.frame_dim < 1:
            raise ConfigError('max_tokens, max_steps and frame_dim must be positive')
        if not 0 <= self.dropout < 1:
            raise ConfigError('dropout must lie in [0, 1)')
        return self

    def bind(self, **kwargs):
        """A copy with data-dependent fields (vocab size, inventory, modality...) filled in."""
        return replace(self, **kwargs)

    def to_dict(self):
        return asdict(self)


@dataclass
class ForwardTrace:
    """
    Everything one teacher-forced forward pass produces.

    `Args:`
        clip_feats: tensor (B, T+1, d); position 0 is the ingredient feature
        dec_feats: tensor (B, T+1, d); position t is the anticipated feature of step t+1
        temporal_hidden: list of M tensors (B, T+1, d)
        output_hidden: list of N tensors (K, d), token-pooled, one row per target step
        logits: tensor (K, L+1, V)
        targets: tensor (K, L+1), PAD-filled
        position_mask: bool tensor (B, T+1), True at real positions
        target_index: long tensor (K, 2) of (batch row, target step t in 1..T)
    """

    clip_feats: torch.Tensor
    dec_feats: torch.Tensor
    temporal_hidden: list
    output_hidden: list
    logits: torch.Tensor
    targets: torch.Tensor
    position_mask: torch.Tensor
    target_index: torch.Tensor
    sample_ids: list = field(default_factory=list)


class SentenceEncoder(nn.Module):
    """Bidirectional transformer over one step's tokens, mean-pooled and mapped to width d."""

    def __init__(self, cfg):
        super().__init__()
        self.token_embedding = nn.Embedding(cfg.vocab_size, cfg.d, padding_idx=PAD)
        self.token_position = nn.Embedding(cfg.max_tokens + 1, cfg.d)
        self.layers = TransformerStack(cfg.d, cfg.heads, cfg.encoder_layers, cfg.ff_mult,
                                       cfg.dropout)
        self.proj = nn.Linear(cfg.d, cfg.d)

    def forward(self, tokens):
        if tokens.dim() != 2 or tokens.shape[1] == 0:
            raise InputError('encode_text_step needs a non-empty (B, L) token tensor')
        if tokens.shape[1] > self.token_position.num_embeddings:
            raise InputError(f'step text longer than {self.token_position.num_embeddings} tokens')

        valid = tokens != PAD
        if not valid.any(dim=1).all():
            raise InputError('encode_text_step got an empty sequence')

        positions = torch.arange(tokens.shape[1], device=tokens.device)
        x = self.token_embedding(tokens) + self.token_position(positions)
        x, _ = self.layers(x, padding_mask=~valid)

        weights = valid.to(x.dtype).unsqueeze(-1)
        pooled = (x * weights).sum(dim=1) / weights.sum(dim=1)
        return self.proj(pooled)


class OutputModule(nn.Module):
    """
    Causal sentence decoder. The input sequence is ``[dec_feat, BOS, tokens...]``; the
    anticipated feature sits at position 0 as an attended memory token.
    """

    def __init__(self, cfg):
        super().__init__()
        self.max_tokens = cfg.max_tokens
        self.token_embedding = nn.Embedding(cfg.vocab_size, cfg.d, padding_idx=PAD)
        self.token_position = nn.Embedding(cfg.max_tokens + 2, cfg.d)
        self.layers = TransformerStack(cfg.d, cfg.heads, cfg.output_layers, cfg.ff_mult,
                                       cfg.dropout)
        self.vocab_projection = nn.Linear(cfg.d, cfg.vocab_size)

    def forward(self, dec_feat, tokens):
        """
        `Args:`
            dec_feat: tensor (K, d)
            tokens: long tensor (K, L), teacher-forced content tokens, PAD-filled
        `Returns:`
            (logits (K, L+1, V), list of N pooled hidden states (K, d))
        """

        if tokens.shape[1] > self.max_tokens:
            raise InputError(f'{tokens.shape[1]} decoder tokens exceed '
                             f'max_tokens={self.max_tokens}')

        size = tokens.shape[0]
        bos = torch.full((size, 1), BOS, dtype=torch.long, device=tokens.device)
        sequence = torch.cat([bos, tokens], dim=1)
        x = torch.cat([dec_feat.unsqueeze(1), self.token_embedding(sequence)], dim=1)
        x = x + self.token_position(torch.arange(x.shape[1], device=x.device))

        out, hidden = self.layers(x, causal=True)
        logits = self.vocab_projection(out[:, 1:])

        valid = (sequence != PAD).to(x.dtype).unsqueeze(-1)
        pooled = [(h[:, 1:] * valid).sum(dim=1) / valid.sum(dim=1) for h in hidden]
        return logits, pooled


class AnticipationModel(nn.Module):
    """
    Sequence-to-sequence step anticipation model for one modality.

    `Args:`
        config: ModelConfig
        vocab_hash: str
            Hash of the vocabulary the model was built for; checked when loading and evaluating
    """

    def __init__(self, config, vocab_hash=None):
        super().__init__()
        self.config = config.validate()
        self.vocab_hash = vocab_hash
        cfg = config

        if cfg.modality == 'visual':
            self.clip_proj = nn.Linear(cfg.frame_dim, cfg.d)
        else:
            self.sentence_encoder = SentenceEncoder(cfg)

        # N-hot x embedding matrix, then an affine map to width d.
        self.ingredient_embedding = nn.Linear(cfg.n_ingredients, cfg.d, bias=False)
        self.ingredient_proj = nn.Linear(cfg.d, cfg.d)

        self.step_position = nn.Embedding(cfg.max_steps + 1, cfg.d)
        self.temporal = TransformerStack(cfg.d, cfg.heads, cfg.temporal_layers, cfg.ff_mult,
                                         cfg.dropout)
        self.output_module = OutputModule(cfg)

        init_parameters(self)

    @property
    def modality(self):
        return self.config.modality

    def encode_clip(self, frames, frame_mask=None):
        """
        Max-pool frame features over the frame axis and map them to width d.

        `Args:`
            frames: tensor (..., F, D)
            frame_mask: bool tensor (..., F), True for real frames
        `Returns:`
            tensor (..., d)
        """

        if self.modality != 'visual':
            raise InputError('encode_clip is only available on visual models')
        if frames.shape[-2] == 0:
            raise InputError('encode_clip got zero frames')
        if frame_mask is not None:
            frames = frames.masked_fill(~frame_mask.unsqueeze(-1), float('-inf'))
        return self.clip_proj(frames.amax(dim=-2))

    def encode_ingredients(self, ingredients):
        """
        `Args:`
            ingredients: float tensor (..., N_ing) N-hot, or an iterable of ingredient ids
        `Returns:`
            tensor (..., d)
        """

        if not torch.is_tensor(ingredients):
            ingredients = self.ingredient_vector(ingredients)
        return self.ingredient_proj(self.ingredient_embedding(ingredients))

    def ingredient_vector(self, ids):
        """N-hot vector for a set of ingredient ids."""
        weight = self.ingredient_embedding.weight
        vector = torch.zeros(self.config.n_ingredients, dtype=weight.dtype, device=weight.device)
        for i in ids:
            if not 0 <= int(i) < self.config.n_ingredients:
                raise InputError(f'ingredient id {i} out of range [0, {self.config.n_ingredients})')
            vector[int(i)] = 1.0
        return vector

    def encode_text_step(self, tokens):
        """
        `Args:`
            tokens: long tensor (B, L) or (L,), PAD-filled, each row ending in EOS
        `Returns:`
            tensor (B, d) or (d,)
        """

        if self.modality != 'text':
            raise InputError('encode_text_step is only available on text models')
        if tokens.dim() == 1:
            return self.sentence_encoder(tokens.unsqueeze(0)).squeeze(0)
        return self.sentence_encoder(tokens)

    def encode_steps(self, batch):
        """Clip features of every observed step, (B, T, d); zeros at padding steps."""

        weight = self.ingredient_embedding.weight
        feats = torch.zeros(batch.size, batch.n_steps, self.config.d, dtype=weight.dtype,
                            device=weight.device)
        if self.modality == 'visual':
            if batch.frames is None:
                raise InputError('visual model needs frame features')
            encoded = self.encode_clip(batch.frames[batch.step_mask],
                                       batch.frame_mask[batch.step_mask])
        else:
            encoded = self.encode_text_step(batch.step_tokens[batch.step_mask])
        feats[batch.step_mask] = encoded
        return feats

    def temporal_forward(self, step_feats):
        """
        Causal temporal module.

        `Args:`
            step_feats: tensor (B, S, d) or (S, d); position 0 holds the ingredient feature
        `Returns:`
            (dec_feats like ``step_feats``, list of M per-layer hidden states)
        """

        squeeze = step_feats.dim() == 2
        if squeeze:
            step_feats = step_feats.unsqueeze(0)

        length = step_feats.shape[1]
        if not 1 <= length <= self.config.max_steps + 1:
            raise InputError(f'temporal sequence of length {length} outside '
                             f'[1, {self.config.max_steps + 1}]')

        x = step_feats + self.step_position(torch.arange(length, device=step_feats.device))
        dec_feats, hidden = self.temporal(x, causal=True)

        if squeeze:
            return dec_feats.squeeze(0), [h.squeeze(0) for h in hidden]
        return dec_feats, hidden

    def decode_teacher_forcing(self, dec_feat, gt_tokens):
        """
        `Args:`
            dec_feat: tensor (K, d) or (d,)
            gt_tokens: long tensor (K, L) or (L,) of content tokens
        `Returns:`
            (logits (K, L+1, V), list of N pooled hidden states (K, d)); logits[i] scores the
            token that follows gt_tokens[:i]
        """

        if dec_feat.dim() == 1:
            logits, pooled = self.output_module(dec_feat.unsqueeze(0), gt_tokens.unsqueeze(0))
            return logits.squeeze(0), [p.squeeze(0) for p in pooled]
        return self.output_module(dec_feat, gt_tokens)

    @torch.no_grad()
    def generate(self, dec_feat):
        """
        Greedy decoding from BOS until EOS or ``max_tokens`` content tokens. Ties go to the
        lowest token id; PAD and BOS are never emitted.

        `Args:`
            dec_feat: tensor (K, d) or (d,)
        `Returns:`
            list of K token-id lists (content tokens only), or one list for a single feature
        """

        single = dec_feat.dim() == 1
        if single:
            dec_feat = dec_feat.unsqueeze(0)

        size = dec_feat.shape[0]
        tokens = torch.zeros(size, 0, dtype=torch.long, device=dec_feat.device)
        finished = torch.zeros(size, dtype=torch.bool, device=dec_feat.device)
        outputs = [[] for _ in range(size)]

        for _ in range(self.config.max_tokens):
            logits, _ = self.output_module(dec_feat, tokens)
            scores = logits[:, -1].clone()
            scores[:, PAD] = float('-inf')
            scores[:, BOS] = float('-inf')
            next_tokens = scores.argmax(dim=-1)

            for row in range(size):
                if finished[row]:
                    continue
                token = int(next_tokens[row])
                if token == EOS:
                    finished[row] = True
                else:
                    outputs[row].append(token)

            if finished.all():
                break
            next_tokens = next_tokens.masked_fill(finished, PAD)
            tokens = torch.cat([tokens, next_tokens.unsqueeze(1)], dim=1)

        return outputs[0] if single else outputs

    def _dec_feats(self, batch):
        ingredient_feat = self.encode_ingredients(batch.ingredients)
        clip_feats = torch.cat([ingredient_feat.unsqueeze(1), self.encode_steps(batch)], dim=1)
        dec_feats, temporal_hidden = self.temporal_forward(clip_feats)
        return clip_feats, dec_feats, temporal_hidden

    def forward(self, batch):
        """
        Teacher-forced pass over a batch: every step t = 1..T is predicted from dec_feats[t-1].

        `Returns:`
            `ForwardTrace`
        """

        clip_feats, dec_feats, temporal_hidden = self._dec_feats(batch)

        step_mask = batch.step_mask
        target_dec = dec_feats[:, :-1][step_mask]
        logits, output_hidden = self.decode_teacher_forcing(target_dec,
                                                            batch.decoder_inputs[step_mask])

        rows, steps = step_mask.nonzero(as_tuple=True)
        position_mask = torch.cat([torch.ones_like(step_mask[:, :1]), step_mask], dim=1)

        return ForwardTrace(
            clip_feats=clip_feats,
            dec_feats=dec_feats,
            temporal_hidden=temporal_hidden,
            output_hidden=output_hidden,
            logits=logits,
            targets=batch.targets[step_mask],
            position_mask=position_mask,
            target_index=torch.stack([rows, steps + 1], dim=1),
            sample_ids=list(batch.sample_ids),
        )

    @torch.no_grad()
    def anticipate(self, batch):
        """
        Next-step anticipation for every step of every sample: step t is generated after
        observing the ingredients and steps 1..t-1. By causality one pass over the full
        sequence gives every observation length at once.

        `Returns:`
            list (per sample) of lists (per step t = 1..T) of generated token-id lists
        """

        _, dec_feats, _ = self._dec_feats(batch)
        step_mask = batch.step_mask
        generated = self.generate(dec_feats[:, :-1][step_mask])

        results = [[] for _ in range(batch.size)]
        for (row, _), tokens in zip(step_mask.nonzero().tolist(), generated):
            results[row].append(tokens)
        return results


def caption_loss(logits, targets):
    """
    Mean token-level cross-entropy over non-PAD target positions.

    `Args:`
        logits: tensor (..., V)
        targets: long tensor (...), PAD where there is no target
    `Returns:`
        scalar tensor
    """

    if logits.shape[:-1] != targets.shape:
        raise InputError(f'logits {tuple(logits.shape)} and targets {tuple(targets.shape)} '
                         'are not aligned')
    if not (targets != PAD).any():
        raise InputError('caption_loss got an all-PAD target')

    return F.cross_entropy(logits.reshape(-1, logits.shape[-1]), targets.reshape(-1),
                           ignore_index=PAD)


def build_model(config, vocab, n_ingredients, modality, frame_dim=None):
    """
    Bind the data-dependent fields of a config and build the model.

    `Returns:`
        `AnticipationModel`
    """

    bound = config.bind(vocab_size=len(vocab), n_ingredients=n_ingredients, modality=modality,
                        frame_dim=frame_dim or config.frame_dim)
    model = AnticipationModel(bound, vocab_hash=vocab.hash())
    n_params = sum(p.numel() for p in model.parameters())
    logger.info(f'Built {modality} model: d={bound.d} M={bound.temporal_layers} '
                f'N={bound.output_layers}, {n_params} parameters')
    return model
