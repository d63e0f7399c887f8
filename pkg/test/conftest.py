import pytest
import torch

from ccd_anticipation.batching import collate, encode_samples
from ccd_anticipation.corpus import generate_corpus
from ccd_anticipation.frames import NoiseConfig
from ccd_anticipation.grammar import GrammarConfig
from ccd_anticipation.model import ModelConfig, build_model
from ccd_anticipation.train import TrainConfig, pretrain_teacher
from ccd_anticipation.vocab import build_vocab


@pytest.fixture(scope='session')
def tiny_grammar():
    return GrammarConfig(min_steps=4, max_steps=6, n_ingredients=12, min_ingredients=2,
                         max_ingredients=4)


@pytest.fixture(scope='session')
def tiny_noise():
    return NoiseConfig(n_frames=3, frame_dim=8, sigma=0.1, p_drop=0.3)


@pytest.fixture(scope='session')
def tiny_corpus(tiny_grammar, tiny_noise):
    return generate_corpus(7, 24, tiny_grammar, tiny_noise)


@pytest.fixture(scope='session')
def tiny_vocab(tiny_corpus):
    return build_vocab(tiny_corpus)


@pytest.fixture
def model_cfg():
    return ModelConfig(d=16, heads=2, temporal_layers=2, output_layers=2, encoder_layers=1,
                       ff_mult=2, dropout=0.0, max_tokens=24, max_steps=8)


@pytest.fixture
def train_cfg():
    return TrainConfig(lr=1e-3, batch_size=8, pretrain_epochs=1, finetune_epochs=1,
                       student_epochs=1, seed=0, eval_batch_size=8, eval_every=0)


@pytest.fixture
def encoded(tiny_corpus, tiny_vocab):
    return encode_samples(tiny_corpus.train, tiny_corpus.vocab, tiny_vocab)


@pytest.fixture
def batch(encoded, tiny_grammar):
    return collate(encoded[:4], tiny_grammar.n_ingredients)


@pytest.fixture
def make_model(tiny_vocab, tiny_grammar, tiny_noise, model_cfg):
    """Build a tiny model of either modality, optionally in float64."""

    def make(modality='visual', dtype=torch.float32, seed=0, **overrides):
        torch.manual_seed(seed)
        cfg = model_cfg.bind(**overrides) if overrides else model_cfg
        model = build_model(cfg, tiny_vocab, tiny_grammar.n_ingredients, modality,
                            frame_dim=tiny_noise.frame_dim)
        return model.to(dtype).eval()

    return make


@pytest.fixture(scope='session')
def tiny_teacher(tiny_corpus, tiny_vocab):
    cfg = ModelConfig(d=16, heads=2, temporal_layers=2, output_layers=2, encoder_layers=1,
                      ff_mult=2, dropout=0.0, max_tokens=24, max_steps=8)
    train_cfg = TrainConfig(lr=1e-3, batch_size=8, pretrain_epochs=2, seed=0, eval_every=0)
    return pretrain_teacher(tiny_corpus, tiny_vocab, cfg, train_cfg).model


@pytest.fixture(scope='session')
def tiny_experiment():
    """Experiment config (as loaded from a file) small enough to run every command in seconds."""

    return {
        'corpus': {'seed': 0, 'pretrain_samples': 60, 'target_samples': 24},
        'grammar': {'min_steps': 4, 'max_steps': 6, 'n_ingredients': 12, 'min_ingredients': 2,
                    'max_ingredients': 4},
        'noise': {'n_frames': 3, 'frame_dim': 8},
        'teacher_model': {'d': 16, 'heads': 2, 'temporal_layers': 2, 'output_layers': 2,
                          'encoder_layers': 1, 'ff_mult': 2, 'dropout': 0.0, 'max_steps': 8},
        'student_model': {'d': 16, 'heads': 2, 'temporal_layers': 2, 'output_layers': 2,
                          'ff_mult': 2, 'dropout': 0.0, 'max_steps': 8},
        'distill': {'reduction': 'mean'},
        'train': {'lr': 0.001, 'batch_size': 8, 'pretrain_epochs': 1, 'finetune_epochs': 1,
                  'student_epochs': 1, 'eval_batch_size': 8, 'eval_every': 0},
        'ablation': {'dims': [16, 8]},
        'seeds': [0],
    }
