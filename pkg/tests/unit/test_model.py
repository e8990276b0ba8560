import math

import numpy as np
import pytest
import torch

from app.datagen.examples import assemble_batch
from app.datagen.pool import build_pool
from app.model.checkpoint import MAGIC, load_checkpoint, save_checkpoint, serialize
from app.model.networks import build_model, parameter_count, point_features
from app.model.training import batch_loss, evaluate_loss, loss_tensor, train
from app.models.ConfigModels import AdamConfig, GeneratorConfig
from app.symbolic import tokens
from app.utils.exceptions import CorruptCheckpointError, VersionMismatchError


@pytest.fixture
def pool():
    return build_pool(GeneratorConfig(), 30, np.random.default_rng(21))


@pytest.fixture
def batch(pool, small_batch_spec, tiny_model_config):
    return assemble_batch(pool, small_batch_spec, np.random.default_rng(8), tiny_model_config.max_target_len)


def features(batch, config):
    return torch.from_numpy(point_features(batch.points, config))


def test_output_shapes(batch, tiny_model_config):
    model = build_model(tiny_model_config, seed=1)
    latent = model.encode(features(batch, tiny_model_config))
    assert latent.shape == (batch.size, tiny_model_config.pma_seeds, tiny_model_config.hidden_dim)
    prefix = torch.from_numpy(batch.targets[:, :-1])
    logits = model.decode_logits(latent, prefix)
    assert logits.shape == (batch.size, prefix.shape[1], tokens.VOCAB_SIZE)
    assert parameter_count(model) > 0


def test_same_seed_gives_same_parameters(tiny_model_config):
    first, second = build_model(tiny_model_config, seed=5), build_model(tiny_model_config, seed=5)
    for (name, left), (_, right) in zip(first.state_dict().items(), second.state_dict().items()):
        assert torch.equal(left, right), name


def test_latent_is_invariant_to_point_order(batch, tiny_model_config):
    model = build_model(tiny_model_config, seed=2)
    encoded = features(batch, tiny_model_config)
    order = torch.from_numpy(np.random.default_rng(0).permutation(encoded.shape[-1]))
    with torch.no_grad():
        original = model.encode(encoded)
        shuffled = model.encode(encoded[:, :, order])
    torch.testing.assert_close(original, shuffled, atol=1e-5, rtol=1e-5)


def test_decoder_is_causal(batch, tiny_model_config):
    model = build_model(tiny_model_config, seed=3)
    with torch.no_grad():
        latent = model.encode(features(batch, tiny_model_config))
        prefix = torch.tensor([[tokens.SOS, tokens.ADD, tokens.X1, tokens.X2]] * batch.size)
        changed = prefix.clone()
        changed[:, 3] = tokens.SIN
        before, after = model.decode_logits(latent, prefix), model.decode_logits(latent, changed)
    torch.testing.assert_close(before[:, :3], after[:, :3])
    assert not torch.allclose(before[:, 3], after[:, 3])


def test_prefix_longer_than_the_limit_is_rejected(tiny_model_config):
    model = build_model(tiny_model_config)
    latent = torch.zeros(1, tiny_model_config.pma_seeds, tiny_model_config.hidden_dim)
    with pytest.raises(ValueError):
        model.decode_logits(latent, torch.ones(1, tiny_model_config.max_target_len + 1, dtype=torch.long))


def test_uniform_logits_cost_log_vocab_per_token(batch, tiny_model_config):
    model = build_model(tiny_model_config)
    with torch.no_grad():
        model.decoder.output_projection.weight.zero_()
        model.decoder.output_projection.bias.zero_()
    result = batch_loss(model, batch, with_gradients=False)
    assert result.token_count == int((batch.targets[:, 1:] != tokens.PAD).sum())
    assert result.per_token == pytest.approx(math.log(tokens.VOCAB_SIZE), rel=1e-5)
    assert not result.gradients


def test_gradients_match_finite_differences(batch, tiny_model_config):
    model = build_model(tiny_model_config, seed=4, precision="float64")
    result = batch_loss(model, batch)
    parameters = dict(model.named_parameters())
    rng = np.random.default_rng(17)
    names = sorted(result.gradients)
    step = 1e-6
    for _ in range(100):
        name = names[int(rng.integers(0, len(names)))]
        parameter = parameters[name]
        index = tuple(int(rng.integers(0, size)) for size in parameter.shape)
        with torch.no_grad():
            original = parameter[index].item()
            parameter[index] = original + step
            upper = loss_tensor(model, batch)[0].item()
            parameter[index] = original - step
            lower = loss_tensor(model, batch)[0].item()
            parameter[index] = original
        numeric = (upper - lower) / (2 * step)
        analytic = result.gradients[name][index].item()
        assert analytic == pytest.approx(numeric, rel=1e-4, abs=1e-7), f"{name}{index}"


def test_training_trace_rows(pool, batch, small_batch_spec, tiny_model_config):
    model = build_model(tiny_model_config, seed=6)
    opt = AdamConfig(log_interval=2, validation_batches=0)
    result = train(model, pool, small_batch_spec, opt, steps=5, fixed_batches=[batch])
    assert [row[0] for row in result.trace] == [2, 4, 5]
    assert result.final_step == 5
    assert all(math.isfinite(row[1]) for row in result.trace)


def test_training_lowers_the_loss_on_a_fixed_batch(pool, batch, small_batch_spec, tiny_model_config):
    model = build_model(tiny_model_config, seed=7)
    before = evaluate_loss(model, [batch])
    train(model, pool, small_batch_spec, AdamConfig(learning_rate=1e-3, validation_batches=0), steps=40,
          fixed_batches=[batch])
    assert evaluate_loss(model, [batch]) < before


def test_fixed_seed_gives_identical_traces(pool, small_batch_spec, tiny_model_config):
    traces = []
    for _ in range(2):
        model = build_model(tiny_model_config, seed=12)
        result = train(model, pool, small_batch_spec, AdamConfig(log_interval=10, validation_batches=0, seed=4),
                       steps=100)
        # 最后一列是耗时 | The last column is wall time
        traces.append(np.array([row[:3] for row in result.trace]))
    assert traces[0].shape == (10, 3)
    np.testing.assert_array_equal(traces[0], traces[1])


def test_loss_falls_across_twenty_step_intervals(pool, batch, small_batch_spec, tiny_model_config):
    model = build_model(tiny_model_config, seed=13)
    opt = AdamConfig(learning_rate=1e-4, log_interval=1, validation_batches=0)
    result = train(model, pool, small_batch_spec, opt, steps=201, fixed_batches=[batch])
    # 第 1、21、...、201 步的损失，共 10 个区间 | Losses at steps 1, 21, ..., 201 give 10 intervals
    losses = [row[1] for row in result.trace][::20]
    assert len(losses) == 11
    falling = sum(later < earlier for earlier, later in zip(losses, losses[1:]))
    assert falling >= 0.95 * (len(losses) - 1)


def test_zero_steps_leave_the_model_unchanged(pool, small_batch_spec, tiny_model_config):
    model = build_model(tiny_model_config, seed=8)
    before = {name: tensor.clone() for name, tensor in model.state_dict().items()}
    result = train(model, pool, small_batch_spec, AdamConfig(validation_batches=0), steps=0, start_step=12)
    assert result.trace == []
    assert result.final_step == 12
    for name, tensor in model.state_dict().items():
        assert torch.equal(before[name], tensor)


def test_checkpoint_round_trip(tmp_path, batch, tiny_model_config):
    model = build_model(tiny_model_config, seed=9)
    path = save_checkpoint(model, str(tmp_path / "model.ckpt"), step=30)
    checkpoint = load_checkpoint(path, expected_dim_x=tiny_model_config.dim_x)
    assert checkpoint.step == 30
    assert checkpoint.config == tiny_model_config
    restored = checkpoint.to_model()
    encoded = features(batch, tiny_model_config)
    prefix = torch.from_numpy(batch.targets[:, :-1])
    with torch.no_grad():
        torch.testing.assert_close(model.eval()(encoded, prefix), restored(encoded, prefix))


def test_checkpoint_rejects_truncation_and_bad_magic(tmp_path, tiny_model_config):
    payload = serialize(build_model(tiny_model_config))
    assert payload.startswith(MAGIC)
    truncated = tmp_path / "truncated.ckpt"
    truncated.write_bytes(payload[:-7])
    with pytest.raises(CorruptCheckpointError):
        load_checkpoint(str(truncated))
    foreign = tmp_path / "foreign.ckpt"
    foreign.write_bytes(b"PK\x03\x04" + payload[4:])
    with pytest.raises(CorruptCheckpointError):
        load_checkpoint(str(foreign))
    with pytest.raises(CorruptCheckpointError):
        load_checkpoint(str(tmp_path / "missing.ckpt"))


def test_checkpoint_rejects_other_input_width(tmp_path, tiny_model_config):
    path = save_checkpoint(build_model(tiny_model_config), str(tmp_path / "model.ckpt"))
    with pytest.raises(VersionMismatchError):
        load_checkpoint(path, expected_dim_x=2)
