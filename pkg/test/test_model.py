import dataclasses

import numpy as np
import pytest
import torch

from ccd_anticipation.batching import EncodedSample, collate
from ccd_anticipation.checkpoint import load_checkpoint, parameter_hash, save_checkpoint
from ccd_anticipation.errors import ConfigError, DataError, InputError, VersionError
from ccd_anticipation.model import ModelConfig, OutputModule, build_model, caption_loss
from ccd_anticipation.vocab import BOS, EOS, PAD, Vocab


def test_config_validation():
    with pytest.raises(ConfigError):
        ModelConfig(vocab_size=10, n_ingredients=3, d=10, heads=3).validate()
    with pytest.raises(ConfigError):
        ModelConfig(vocab_size=10, n_ingredients=3, modality='audio').validate()
    with pytest.raises(ConfigError):
        ModelConfig(vocab_size=2, n_ingredients=3).validate()


def test_temporal_module_is_causal(make_model):
    model = make_model('visual', dtype=torch.float64)
    gen = torch.Generator().manual_seed(0)
    for _ in range(20):
        length = int(torch.randint(2, 9, (1,), generator=gen))
        x = torch.randn(2, length, 16, generator=gen, dtype=torch.float64)
        out, _ = model.temporal_forward(x)
        t = int(torch.randint(0, length - 1, (1,), generator=gen))
        perturbed = x.clone()
        perturbed[:, t + 1:] += torch.randn(2, length - t - 1, 16, generator=gen,
                                            dtype=torch.float64)
        out_perturbed, _ = model.temporal_forward(perturbed)
        assert (out[:, :t + 1] - out_perturbed[:, :t + 1]).abs().max() <= 1e-6


def test_temporal_prefix_consistency(make_model):
    model = make_model('visual', dtype=torch.float64)
    gen = torch.Generator().manual_seed(1)
    for _ in range(20):
        x = torch.randn(1, 9, 16, generator=gen, dtype=torch.float64)
        full, _ = model.temporal_forward(x)
        t = int(torch.randint(1, 10, (1,), generator=gen))
        prefix, _ = model.temporal_forward(x[:, :t])
        torch.testing.assert_close(prefix, full[:, :t], rtol=0, atol=1e-9)


def test_temporal_length_bounds(make_model):
    model = make_model()
    with pytest.raises(InputError):
        model.temporal_forward(torch.zeros(1, model.config.max_steps + 2, 16))
    with pytest.raises(InputError):
        model.temporal_forward(torch.zeros(1, 0, 16))


def test_output_module_is_causal(make_model):
    model = make_model('visual', dtype=torch.float64)
    gen = torch.Generator().manual_seed(2)
    vocab_size = model.config.vocab_size
    for _ in range(20):
        dec = torch.randn(3, 16, generator=gen, dtype=torch.float64)
        tokens = torch.randint(4, vocab_size, (3, 6), generator=gen)
        logits, _ = model.decode_teacher_forcing(dec, tokens)
        j = int(torch.randint(0, 6, (1,), generator=gen))
        changed = tokens.clone()
        changed[:, j:] = torch.randint(4, vocab_size, (3, 6 - j), generator=gen)
        logits_changed, _ = model.decode_teacher_forcing(dec, changed)
        # logits[i] only sees tokens[:i]
        assert (logits[:, :j + 1] - logits_changed[:, :j + 1]).abs().max() <= 1e-6


def test_single_output_module(make_model):
    model = make_model()
    names = [n for n, _ in model.named_parameters() if n.startswith('output_module.')]
    standalone = OutputModule(model.config)
    assert len(names) == len(list(standalone.parameters()))
    assert len(names) == len(set(names))
    assert not any('output_modules' in n for n, _ in model.named_parameters())


def test_forward_trace_shapes(make_model, batch):
    model = make_model()
    trace = model(batch)
    n_targets = int(batch.step_mask.sum())
    assert trace.clip_feats.shape == (batch.size, batch.n_steps + 1, 16)
    assert trace.dec_feats.shape == trace.clip_feats.shape
    assert len(trace.temporal_hidden) == 2
    assert len(trace.output_hidden) == 2
    assert trace.output_hidden[0].shape == (n_targets, 16)
    assert trace.logits.shape[:2] == trace.targets.shape
    assert trace.logits.shape[0] == n_targets
    assert trace.target_index.shape == (n_targets, 2)
    assert bool(trace.position_mask[:, 0].all())


def test_text_and_visual_traces_align(make_model, batch):
    visual = make_model('visual')(batch)
    text = make_model('text')(batch)
    assert torch.equal(visual.position_mask, text.position_mask)
    assert torch.equal(visual.targets, text.targets)
    assert torch.equal(visual.target_index, text.target_index)


def test_generate_respects_limits(make_model):
    model = make_model(max_tokens=5)
    outputs = model.generate(torch.randn(4, 16))
    assert len(outputs) == 4
    for tokens in outputs:
        assert len(tokens) <= 5
        assert PAD not in tokens and BOS not in tokens
    assert isinstance(model.generate(torch.randn(16)), list)


def test_anticipate_covers_every_step(make_model, batch):
    results = make_model().anticipate(batch)
    assert len(results) == batch.size
    for row, steps in enumerate(results):
        assert len(steps) == int(batch.step_mask[row].sum())


def test_encode_clip_max_pools(make_model):
    model = make_model(dtype=torch.float64)
    frames = torch.randn(2, 3, 8, dtype=torch.float64)
    expected = model.clip_proj(frames.amax(dim=1))
    torch.testing.assert_close(model.encode_clip(frames), expected)
    with pytest.raises(InputError):
        model.encode_clip(torch.zeros(2, 0, 8))


def test_clip_encoding_ignores_frame_order(make_model):
    model = make_model(dtype=torch.float64)
    gen = torch.Generator().manual_seed(4)
    frames = torch.randn(2, 5, 8, generator=gen, dtype=torch.float64)
    shuffled = frames[:, torch.randperm(5, generator=gen)]
    torch.testing.assert_close(model.encode_clip(shuffled), model.encode_clip(frames))


def test_masked_frames_are_ignored(make_model):
    model = make_model(dtype=torch.float64)
    frames = torch.randn(1, 3, 8, dtype=torch.float64)
    mask = torch.tensor([[True, True, False]])
    padded = frames.clone()
    padded[0, 2] = 1e3
    torch.testing.assert_close(model.encode_clip(padded, mask), model.encode_clip(frames[:, :2]))


def test_ingredient_encoding(make_model):
    model = make_model()
    from_ids = model.encode_ingredients([1, 4])
    vector = torch.zeros(model.config.n_ingredients)
    vector[[1, 4]] = 1.0
    torch.testing.assert_close(from_ids, model.encode_ingredients(vector))
    with pytest.raises(InputError):
        model.ingredient_vector([model.config.n_ingredients])


def test_ingredient_encoding_ignores_order(make_model):
    model = make_model(dtype=torch.float64)
    torch.testing.assert_close(model.encode_ingredients([1, 5]), model.encode_ingredients([5, 1]))


def test_text_step_encoding(make_model):
    model = make_model('text')
    tokens = torch.tensor([[5, 6, 2, PAD], [7, 2, PAD, PAD]])
    assert model.encode_text_step(tokens).shape == (2, 16)
    assert model.encode_text_step(tokens[0]).shape == (16,)
    with pytest.raises(InputError):
        model.encode_text_step(torch.full((1, 3), PAD))
    with pytest.raises(InputError):
        make_model('visual').encode_text_step(tokens)


def test_single_token_step_pools_to_its_encoding(make_model):
    model = make_model('text', dtype=torch.float64)
    encoder = model.sentence_encoder
    token = torch.tensor([[EOS]])
    x = encoder.token_embedding(token) + encoder.token_position(torch.arange(1))
    hidden, _ = encoder.layers(x, padding_mask=torch.zeros(1, 1, dtype=torch.bool))
    expected = encoder.proj(hidden[:, 0])
    torch.testing.assert_close(model.encode_text_step(token), expected)
    torch.testing.assert_close(model.encode_text_step(torch.tensor([[EOS, PAD, PAD]])), expected)


def test_word_order_reaches_the_step_encoding(make_model):
    model = make_model('text', dtype=torch.float64)
    forward = model.encode_text_step(torch.tensor([5, 6, 7, EOS]))
    backward = model.encode_text_step(torch.tensor([7, 6, 5, EOS]))
    assert not torch.allclose(forward, backward)


def test_caption_loss():
    logits = torch.zeros(2, 3, 5)
    targets = torch.tensor([[4, 2, PAD], [3, PAD, PAD]])
    assert caption_loss(logits, targets).item() == pytest.approx(torch.log(torch.tensor(5.)).item())
    with pytest.raises(InputError):
        caption_loss(logits, torch.full((2, 3), PAD))
    with pytest.raises(InputError):
        caption_loss(logits, targets[:, :2])


def test_caption_loss_gradients():
    gen = torch.Generator().manual_seed(3)
    logits = torch.randn(2, 4, 6, generator=gen, dtype=torch.float64, requires_grad=True)
    targets = torch.tensor([[4, 5, 2, PAD], [3, 2, PAD, PAD]])
    assert torch.autograd.gradcheck(lambda x: caption_loss(x, targets), (logits,), eps=1e-6,
                                    atol=1e-8, rtol=1e-3)


def gradcheck_batch(rng):
    """Two samples of three equal-length steps, so no PAD token reaches the loss."""

    samples = [
        EncodedSample(id=i, ingredients=(i, 2),
                      texts=[[4 + i, 5, EOS], [6, 7 + i, EOS], [8, 10, EOS]],
                      frames=[rng.normal(size=(2, 4)) for _ in range(3)])
        for i in range(2)
    ]
    batch = collate(samples, n_ingredients=3, max_tokens=4)
    return dataclasses.replace(batch, ingredients=batch.ingredients.double(),
                               frames=batch.frames.double())


@pytest.mark.parametrize('modality', ['visual', 'text'])
def test_caption_loss_gradients_per_parameter_group(modality):
    torch.manual_seed(0)
    cfg = ModelConfig(d=8, heads=2, temporal_layers=1, output_layers=1, encoder_layers=1,
                      ff_mult=2, dropout=0.0, max_tokens=4, max_steps=4)
    vocab = Vocab.from_tokens(['add', 'bowl', 'chop', 'dice', 'heat', 'oil', 'salt'])
    model = build_model(cfg, vocab, 3, modality, frame_dim=4).double().train()
    assert model.config.vocab_size == 11
    batch = gradcheck_batch(np.random.default_rng(0))

    params = dict(model.named_parameters())
    groups = sorted({name.split('.')[0] for name in params})
    assert len(groups) == 6
    for group in groups:
        names = [name for name in params if name.split('.')[0] == group]

        def loss(*tensors, names=names):
            trace = torch.func.functional_call(model, dict(zip(names, tensors)), (batch,))
            return caption_loss(trace.logits, trace.targets)

        inputs = tuple(params[name].detach().clone().requires_grad_() for name in names)
        assert torch.autograd.gradcheck(loss, inputs, eps=1e-6, atol=1e-6, rtol=1e-3), group


def test_checkpoint_round_trip(make_model, tiny_vocab, tmp_path):
    model = make_model('text')
    path = save_checkpoint(model, tmp_path / 'teacher.pt', provenance={'seed': 3})
    loaded = load_checkpoint(path, tiny_vocab, expected_config=model.config)
    assert parameter_hash(loaded) == parameter_hash(model)
    assert loaded.provenance == {'seed': 3}
    assert loaded.modality == 'text'
    assert not loaded.training
    assert loaded.vocab_hash == tiny_vocab.hash()


def test_checkpoint_rejects_other_vocab(make_model, tmp_path):
    path = save_checkpoint(make_model(), tmp_path / 'student.pt')
    with pytest.raises(VersionError):
        load_checkpoint(path, Vocab.from_tokens(['other', 'words']))


def test_checkpoint_rejects_other_config(make_model, tmp_path):
    model = make_model()
    path = save_checkpoint(model, tmp_path / 'student.pt')
    with pytest.raises(VersionError):
        load_checkpoint(path, expected_config=model.config.bind(d=32))


def test_checkpoint_detects_altered_weights(make_model, tmp_path):
    path = save_checkpoint(make_model(), tmp_path / 'student.pt')
    payload = torch.load(path, weights_only=True)
    payload['state_dict']['clip_proj.bias'] += 1.0
    torch.save(payload, path)
    with pytest.raises(DataError):
        load_checkpoint(path)


def test_checkpoint_garbage(tmp_path):
    path = tmp_path / 'bad.pt'
    path.write_bytes(b'not a checkpoint')
    with pytest.raises(DataError):
        load_checkpoint(path)


def test_parameter_hash_changes_with_weights(make_model):
    model = make_model()
    before = parameter_hash(model)
    with torch.no_grad():
        model.clip_proj.bias.add_(1.0)
    assert parameter_hash(model) != before
