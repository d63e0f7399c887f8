"""
Turn corpus samples into padded tensors that carry both modalities of every step.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass

import numpy as np
import torch

from ccd_anticipation.errors import DataError, InputError
from ccd_anticipation.vocab import EOS, PAD, UNK_WARNING_RATE, unk_rate

logger = logging.getLogger(__name__)


@dataclass
class EncodedSample:
    """
    One procedure in model-vocabulary ids.

    `Args:`
        id: sample id
        ingredients: tuple of int
        texts: list of list of int
            Content tokens of every step followed by EOS
        frames: list of numpy.ndarray or None
    """

    id: object
    ingredients: tuple
    texts: list
    frames: list = None

    @property
    def n_steps(self):
        return len(self.texts)


@dataclass
class Batch:
    """
    Padded tensors for ``B`` samples with at most ``T`` steps.

    `Args:`
        ingredients: float tensor (B, N_ing), N-hot
        step_tokens: long tensor (B, T, Ls), observed step texts incl. EOS, PAD-filled
        frames: float tensor (B, T, F, D) or None
        frame_mask: bool tensor (B, T, F) or None, True for real frames
        step_mask: bool tensor (B, T), True for real steps
        decoder_inputs: long tensor (B, T, L), content tokens of each step (teacher forcing)
        targets: long tensor (B, T, L + 1), content tokens followed by EOS
        sample_ids: list
    """

    ingredients: torch.Tensor
    step_tokens: torch.Tensor
    frames: torch.Tensor
    frame_mask: torch.Tensor
    step_mask: torch.Tensor
    decoder_inputs: torch.Tensor
    targets: torch.Tensor
    sample_ids: list

    @property
    def size(self):
        return self.step_mask.shape[0]

    @property
    def n_steps(self):
        return self.step_mask.shape[1]


def encode_samples(samples, corpus_vocab, vocab, max_tokens=24):
    """
    Re-encode corpus samples (ids in the corpus lexicon) into the model vocabulary.

    `Args:`
        samples: list of ProcedureSample
        corpus_vocab: Vocab
            The corpus lexicon
        vocab: Vocab
            The model vocabulary
        max_tokens: int
            Content tokens kept per step
    `Returns:`
        list of `EncodedSample`
    """

    same = corpus_vocab == vocab
    encoded = []
    words_seen = []
    for sample in samples:
        texts = []
        frames = []
        for step in sample.steps:
            if same:
                ids = [int(t) for t in step.text if t != EOS][:max_tokens] + [EOS]
            else:
                words = corpus_vocab.decode(step.text)
                words_seen.append(words)
                ids = vocab.encode(words[:max_tokens])
            texts.append(ids)
            frames.append(step.frames)
        has_frames = all(f is not None for f in frames)
        encoded.append(EncodedSample(id=sample.id, ingredients=tuple(sample.ingredients),
                                     texts=texts, frames=frames if has_frames else None))

    rate = unk_rate(words_seen, vocab)
    if rate > UNK_WARNING_RATE:
        logger.warning(f'{rate:.1%} of corpus tokens are unknown to the vocabulary')

    return encoded


def collate(samples, n_ingredients, max_tokens=24):
    """
    Pad a list of encoded samples into a `Batch`.

    `Args:`
        samples: list of EncodedSample
        n_ingredients: int
            Size of the ingredient inventory (width of the N-hot vector)
        max_tokens: int
    `Returns:`
        `Batch`
    """

    if not samples:
        raise InputError('Cannot collate an empty list of samples')

    size = len(samples)
    n_steps = max(s.n_steps for s in samples)
    step_len = max(len(t) for s in samples for t in s.texts)
    content_len = min(step_len - 1, max_tokens)

    ingredients = torch.zeros(size, n_ingredients)
    step_tokens = torch.full((size, n_steps, step_len), PAD, dtype=torch.long)
    decoder_inputs = torch.full((size, n_steps, content_len), PAD, dtype=torch.long)
    targets = torch.full((size, n_steps, content_len + 1), PAD, dtype=torch.long)
    step_mask = torch.zeros(size, n_steps, dtype=torch.bool)

    with_frames = all(s.frames is not None for s in samples)
    frames = frame_mask = None
    if with_frames:
        n_frames = max(f.shape[0] for s in samples for f in s.frames)
        frame_dim = samples[0].frames[0].shape[1]
        frames = torch.zeros(size, n_steps, n_frames, frame_dim)
        frame_mask = torch.zeros(size, n_steps, n_frames, dtype=torch.bool)
        # Padding steps get one all-zero "frame" so pooling stays finite.
        frame_mask[:, :, 0] = True

    for b, sample in enumerate(samples):
        for i in sample.ingredients:
            if not 0 <= i < n_ingredients:
                raise InputError(f'sample {sample.id}: ingredient id {i} out of range')
            ingredients[b, i] = 1.0

        for t, text in enumerate(sample.texts):
            content = [tok for tok in text if tok != EOS][:max_tokens]
            if not content:
                raise DataError(f'sample {sample.id} step {t + 1} has no content tokens')
            full = content + [EOS]
            step_tokens[b, t, :len(full)] = torch.tensor(full)
            decoder_inputs[b, t, :len(content)] = torch.tensor(content)
            targets[b, t, :len(full)] = torch.tensor(full)
            step_mask[b, t] = True

            if with_frames:
                step_frames = np.asarray(sample.frames[t])
                frames[b, t, :step_frames.shape[0]] = torch.from_numpy(step_frames).float()
                frame_mask[b, t, :step_frames.shape[0]] = True

    return Batch(ingredients=ingredients, step_tokens=step_tokens, frames=frames,
                 frame_mask=frame_mask, step_mask=step_mask, decoder_inputs=decoder_inputs,
                 targets=targets, sample_ids=[s.id for s in samples])


def iterate_batches(samples, batch_size, n_ingredients, max_tokens=24, rng=None):
    """
    Yield batches over ``samples``; shuffled with ``rng`` (a numpy Generator) when given.
    """

    order = np.arange(len(samples))
    if rng is not None:
        order = rng.permutation(len(samples))

    for start in range(0, len(samples), batch_size):
        chunk = [samples[i] for i in order[start:start + batch_size]]
        yield collate(chunk, n_ingredients, max_tokens)
