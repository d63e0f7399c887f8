"""
Synthetic per-step frame features: a lossy stand-in for pooled video-frame features.

The frames of a step are a fixed random projection of the bag-of-words of its text, with a
random subset of content tokens masked out, replicated over frames plus i.i.d. noise.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from ccd_anticipation.errors import ConfigError
from ccd_anticipation.vocab import N_RESERVED

_MASK_STREAM = 1
_NOISE_STREAM = 2
_PROJECTION_STREAM = 0x5EED


@dataclass
class NoiseConfig:
    """
    `Args:`
        n_frames: int
            Frames per step
        frame_dim: int
            Width of one frame feature (D_frame)
        sigma: float
            Standard deviation of the per-frame noise
        p_drop: float
            Probability that a content token is masked before embedding
    """

    n_frames: int = 8
    frame_dim: int = 64
    sigma: float = 0.1
    p_drop: float = 0.3

    def validate(self):
        if self.frame_dim <= 0 or self.n_frames <= 0:
            raise ConfigError(f'n_frames and frame_dim must be positive, got '
                              f'{self.n_frames} and {self.frame_dim}')
        if self.sigma < 0:
            raise ConfigError('sigma must be non-negative')
        if not 0 <= self.p_drop <= 1:
            raise ConfigError('p_drop must lie in [0, 1]')
        return self

    def to_dict(self):
        return {'n_frames': self.n_frames, 'frame_dim': self.frame_dim, 'sigma': self.sigma,
                'p_drop': self.p_drop}


def frame_projection(corpus_seed, lexicon_size, frame_dim):
    """
    The global token -> frame-space projection of a corpus.

    `Args:`
        corpus_seed: int
        lexicon_size: int
            Number of token ids the corpus uses (reserved ids included)
        frame_dim: int
    `Returns:`
        numpy.ndarray of shape (lexicon_size, frame_dim)
    """

    if frame_dim <= 0:
        raise ConfigError('frame_dim must be positive')

    rng = np.random.default_rng([int(corpus_seed), _PROJECTION_STREAM])
    return rng.standard_normal((lexicon_size, frame_dim)) / np.sqrt(frame_dim)


def content_mask(step_text, sample_seed, p_drop):
    """
    Which tokens survive the content drop. One uniform draw per position is compared to
    ``p_drop``, so for a fixed seed raising ``p_drop`` only ever removes more tokens.

    `Returns:`
        numpy.ndarray of bool, True where the token is kept
    """

    rng = np.random.default_rng([int(sample_seed), _MASK_STREAM])
    draws = rng.random(len(step_text))
    return draws >= p_drop


def bag_of_words(step_text, lexicon_size, keep=None):
    bow = np.zeros(lexicon_size)
    for position, token in enumerate(step_text):
        if token >= N_RESERVED and (keep is None or keep[position]):
            bow[token] += 1.0
    return bow


def synthesize_frames(step_text, sample_seed, noise_cfg, projection):
    """
    Frame matrix of one step.

    `Args:`
        step_text: sequence of int
            Token ids of the step (reserved ids are ignored)
        sample_seed: int
            Seed for the content mask and the noise of this step
        noise_cfg: NoiseConfig
        projection: numpy.ndarray
            Output of ``frame_projection`` for the corpus
    `Returns:`
        numpy.ndarray of shape (n_frames, frame_dim)
    """

    noise_cfg.validate()
    if projection.shape[1] != noise_cfg.frame_dim:
        raise ConfigError(f'projection width {projection.shape[1]} does not match frame_dim '
                          f'{noise_cfg.frame_dim}')

    keep = content_mask(step_text, sample_seed, noise_cfg.p_drop)
    base = bag_of_words(step_text, projection.shape[0], keep) @ projection

    noise_rng = np.random.default_rng([int(sample_seed), _NOISE_STREAM])
    noise = noise_rng.standard_normal((noise_cfg.n_frames, noise_cfg.frame_dim)) * noise_cfg.sigma

    return np.tile(base, (noise_cfg.n_frames, 1)) + noise
