import struct

import numpy as np
import pytest
import torch

from app.datagen.encoding import decode_multihot, encode_multihot, encode_points
from app.datagen.examples import (assemble_batch, collate_examples, evaluate_filtered, parameterize, sample_example,
                                  sample_points, target_tokens)
from app.datagen.fingerprint import fingerprint_matrix, make_reference_points, match_any, numeric_fingerprint
from app.datagen.generator import ExpressionGenerator
from app.datagen.pool import SkeletonPool, build_pool, pool_from_expressions
from app.models.ConfigModels import BatchSpec, GeneratorConfig
from app.symbolic import tokens
from app.symbolic.expression import Expression, add, mul, unary, var, variable_order_ok
from app.symbolic.skeleton import Skeleton
from app.utils.exceptions import EmptySupportError, MalformedDataError
from app.utils.file_utils import FileUtils


def half_oracle(value: float) -> int:
    return struct.unpack("<H", struct.pack("<e", value))[0]


def test_half_precision_encoding_matches_struct_oracle():
    rng = np.random.default_rng(3)
    values = rng.uniform(-1000.0, 1000.0, size=10000)
    bits = encode_multihot(values)
    weights = 1 << np.arange(15, -1, -1)
    patterns = (bits.astype(np.int64) * weights).sum(axis=-1)
    expected = np.array([half_oracle(float(value)) for value in values])
    np.testing.assert_array_equal(patterns, expected)


def test_half_precision_known_patterns():
    assert not encode_multihot(0.0).any()
    one = encode_multihot(1.0)
    assert int((one.astype(np.int64) * (1 << np.arange(15, -1, -1))).sum()) == 0x3C00
    # 超出范围的值饱和 | Out-of-range values saturate
    assert decode_multihot(encode_multihot(1e6)) == 65504.0
    assert decode_multihot(encode_multihot(-2.5)) == -2.5


def test_encode_points_layout():
    points = np.zeros((2, 4, 5))
    points[:, 3, :] = 1.0
    encoded = encode_points(points)
    assert encoded.shape == (2, 64, 5)
    # y 是第 4 个维度，其比特位于 48..63 | y is the fourth dimension, its bits are 48..63
    assert encoded[:, :48, :].sum() == 0
    assert encoded[0, 48:, 0].tolist() == encode_multihot(1.0).astype(np.float32).tolist()


def test_operator_frequencies_pass_chi_square():
    generator = ExpressionGenerator(GeneratorConfig())
    draws = generator.sample_operators(200000, np.random.default_rng(5))
    expected = generator.expected_frequencies()
    names = sorted(expected)
    observed = np.array([draws.count(name) for name in names], dtype=np.float64)
    counts = np.array([expected[name] for name in names]) * len(draws)
    statistic = float(((observed - counts) ** 2 / counts).sum())
    dof = len(names) - 1
    p_value = float(torch.special.gammaincc(torch.tensor(dof / 2.0, dtype=torch.float64),
                                            torch.tensor(statistic / 2.0, dtype=torch.float64)))
    assert p_value > 0.01


def test_pool_respects_variable_order():
    pool = build_pool(GeneratorConfig(), 2000, np.random.default_rng(9), workers=2)
    assert len(pool) == 2000
    for skel in pool:
        used = skel.expr.variables_used()
        assert used and variable_order_ok(used)
        assert skel.expr.count_constants() == 0


def test_pool_is_independent_of_worker_count():
    first = build_pool(GeneratorConfig(), 300, np.random.default_rng(2), workers=1)
    second = build_pool(GeneratorConfig(), 300, np.random.default_rng(2), workers=3)
    assert [skel.expr for skel in first] == [skel.expr for skel in second]


def test_pool_save_and_load(tmp_path):
    pool = build_pool(GeneratorConfig(), 50, np.random.default_rng(4))
    path = pool.save(FileUtils(str(tmp_path)), "pool.jsonl")
    loaded = SkeletonPool.load(path)
    assert [skel.expr for skel in loaded] == [skel.expr for skel in pool]
    assert 0.0 < pool.stats.unique_fraction <= 1.0
    assert 1.0 <= pool.stats.mean_length <= 40.0


def test_pool_load_reports_the_bad_line(tmp_path):
    path = tmp_path / "pool.jsonl"
    path.write_text('# nsr-pool v1\n{"prefix": [3]}\n{"prefix": [8, 3]}\n', encoding="utf-8")
    with pytest.raises(MalformedDataError) as error:
        SkeletonPool.load(str(path))
    assert error.value.line_number == 3


def test_parameterize_draws_at_most_three_constants(rng):
    skel = Skeleton.from_expression(add(unary("sin", var(1)), mul(var(1), var(2))))
    spec = BatchSpec()
    for _ in range(50):
        placed, constants = parameterize(skel, spec, rng)
        assert len(constants) == placed.placeholder_count
        varied = constants[constants != 1.0]
        assert len(varied) <= 3
        assert np.all((varied >= 1.0) & (varied <= 5.0))


def test_sample_points_zeroes_unused_variables(rng):
    supports = np.array([[-1.0, 1.0], [2.0, 3.0], [4.0, 5.0]])
    X = sample_points(supports, 100, [1], rng)
    assert np.all(X[:, 1:] == 0.0)
    assert np.all((X[:, 0] >= -1.0) & (X[:, 0] <= 1.0))


def test_evaluate_filtered_drops_invalid_points():
    skel = Skeleton.from_expression(unary("ln", var(1)))
    X = np.array([[-1.0, 0, 0], [1.0, 0, 0], [2.0, 0, 0]])
    kept_X, kept_Y = evaluate_filtered(skel, np.empty(0), X, 1000.0)
    assert kept_X.shape == (2, 3)
    assert np.all(np.isfinite(kept_Y))
    with pytest.raises(EmptySupportError):
        evaluate_filtered(skel, np.empty(0), X[:1], 1000.0)


def test_collate_truncates_to_the_smallest_example(rng):
    spec = BatchSpec(max_points=30)
    small = Skeleton.from_expression(var(1))
    large = Skeleton.from_expression(add(var(1), mul(var(2), var(1))))
    examples = [sample_example(small, spec, rng), sample_example(large, spec, rng)]
    examples[0].X, examples[0].Y = examples[0].X[:10], examples[0].Y[:10]
    batch = collate_examples(examples, rng)
    assert batch.points.shape == (2, 4, 10)
    assert batch.encoded.shape == (2, 64, 10)
    assert batch.targets[0].tolist()[:3] == [tokens.SOS] + [tokens.X1, tokens.EOS]
    assert batch.targets[0, 3:].tolist() == [tokens.PAD] * (batch.targets.shape[1] - 3)
    assert batch.targets[1].tolist() == target_tokens(large)


def test_assemble_batch_is_a_pure_function_of_the_seed():
    pool = build_pool(GeneratorConfig(), 40, np.random.default_rng(1))
    spec = BatchSpec(batch_size=6, max_points=25)
    first = assemble_batch(pool, spec, np.random.default_rng([7, 3]))
    second = assemble_batch(pool, spec, np.random.default_rng([7, 3]))
    np.testing.assert_array_equal(first.points, second.points)
    np.testing.assert_array_equal(first.targets, second.targets)
    assert first.size == 6


def test_numeric_fingerprints_identify_equivalent_skeletons():
    reference = make_reference_points(0)
    doubled = Skeleton.from_expression(add(var(1), var(1)))
    scaled = Skeleton.from_expression(mul(Expression.integer(2), var(1)))
    other = Skeleton.from_expression(mul(var(1), var(1)))
    references = fingerprint_matrix([doubled], reference)
    assert match_any(numeric_fingerprint(scaled, reference), references)
    assert not match_any(numeric_fingerprint(other, reference), references)
    assert not match_any(numeric_fingerprint(other, reference), fingerprint_matrix([], reference))


def test_pool_from_expressions_simplifies():
    pool = pool_from_expressions([add(var(1), Expression.integer(0))])
    assert pool[0].expr == var(1)
