# ==============================================================================
# This file is part of the SkeletonSR project.
#
# This project is licensed under the Apache License 2.0 (the "License");
# you may not use this file except in compliance with the License.
# You may obtain a copy of the License at:
# http://www.apache.org/licenses/LICENSE-2.0
#
# Unless required by applicable law or agreed to in writing, software
# distributed under the License is distributed on an "AS IS" BASIS,
# WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
# See the License for the specific language governing permissions and
# limitations under the License.
# ==============================================================================

"""
训练样本与小批次：常数采样、支撑集采样、过滤和多热编码。

Training examples and mini-batches: constant sampling, support sampling,
filtering and multi-hot encoding.
"""

from dataclasses import dataclass
from typing import List, Optional, Sequence, Tuple

import numpy as np

from app.datagen.encoding import encode_points
from app.models.ConfigModels import BatchSpec
from app.symbolic import tokens
from app.symbolic.evaluator import compile_expression
from app.symbolic.prefix import to_infix_string, to_prefix
from app.symbolic.skeleton import Skeleton, place_constants
from app.utils.exceptions import DataGenerationError, EmptySupportError
from app.utils.file_utils import FileUtils
from app.utils.logging_utils import configure_logging

logger = configure_logging(name=__name__)

# 每个批次样本的最大重采样次数 | Resample budget per batch example
MAX_EXAMPLE_ATTEMPTS = 100

Supports = np.ndarray  # [3, 2]，每行 (lo, hi) | [3, 2], one (lo, hi) row per variable


@dataclass
class Example:
    X: np.ndarray
    Y: np.ndarray
    target: List[int]
    skeleton: Skeleton
    constants: np.ndarray
    supports: Supports


@dataclass
class TrainingBatch:
    """
    一个训练小批次 | One training mini-batch

    points: [B, d_x + d_y, n_min]; encoded: [B, (d_x + d_y) * 16, n_min];
    targets: [B, L_max] padded with pad; target_mask: targets != pad.
    """
    points: np.ndarray
    encoded: np.ndarray
    targets: np.ndarray
    target_mask: np.ndarray
    skeletons: List[Skeleton]

    @property
    def size(self) -> int:
        return self.targets.shape[0]

    @property
    def point_count(self) -> int:
        return self.points.shape[-1]


def target_tokens(skel: Skeleton) -> List[int]:
    # 目标序列只含骨架，不含常数值 | The target holds the skeleton only, never constant values
    return [tokens.SOS] + to_prefix(skel.expr) + [tokens.EOS]


def parameterize(skel: Skeleton, spec: BatchSpec, rng: np.random.Generator,
                 n_constants: Optional[int] = None) -> Tuple[Skeleton, np.ndarray]:
    """
    放置常数占位符并采样常数：随机选 n_c 个占位符取 U(1,5)，其余取 1。

    Place constant placeholders and draw constants: n_c placeholders chosen
    uniformly without replacement get U(constant_range) values, the rest are 1.

    :param skel: 骨架 | Skeleton
    :param spec: 批次配置 | Batch specification
    :param rng: 随机数生成器 | Random generator
    :param n_constants: 固定 n_c，None 时从 0..min(3, N_c) 均匀采样 | Fixed n_c, drawn uniformly when None
    :return: (参数化骨架, 常数向量) | (parameterized skeleton, constants)
    """
    placed = place_constants(skel)
    available = placed.placeholder_count
    upper = min(spec.max_constants, available)
    if n_constants is None:
        n_constants = int(rng.integers(0, upper + 1))
    n_constants = min(n_constants, available)
    constants = np.ones(available)
    chosen = rng.choice(available, size=n_constants, replace=False) if n_constants else np.empty(0, dtype=np.int64)
    low, high = spec.constant_range
    constants[chosen] = rng.uniform(low, high, size=n_constants)
    return placed, constants


def sample_support(spec: BatchSpec, rng: np.random.Generator) -> Supports:
    """
    每个维度独立采样两个端点 S1 < S2 | Draw independent extrema S1 < S2 per dimension
    """
    low, high = spec.support_extrema_range
    supports = np.empty((tokens.MAX_VARIABLES, 2))
    for dim in range(tokens.MAX_VARIABLES):
        first, second = rng.uniform(low, high, size=2)
        while first == second:
            first, second = rng.uniform(low, high, size=2)
        supports[dim] = (min(first, second), max(first, second))
    return supports


def sample_points(supports: Supports, count: int, variables: Sequence[int], rng: np.random.Generator) -> np.ndarray:
    X = rng.uniform(supports[:, 0], supports[:, 1], size=(count, tokens.MAX_VARIABLES))
    for dim in range(tokens.MAX_VARIABLES):
        if dim + 1 not in variables:
            # 表达式未使用的变量置 0 | Variables absent from the expression are set to 0
            X[:, dim] = 0.0
    return X


def evaluate_filtered(placed: Skeleton, constants: np.ndarray, X: np.ndarray,
                      y_abs_cap: float) -> Tuple[np.ndarray, np.ndarray]:
    """
    求值并丢弃 NaN、±inf 和 |y| 超过上限的点。

    Evaluate and drop rows with NaN, ±inf or |y| above the cap.

    :raises EmptySupportError: 所有点都被过滤 | Every row was filtered out
    """
    Y = compile_expression(placed.expr)(X, constants)
    keep = np.isfinite(Y) & (np.abs(Y) <= y_abs_cap)
    if not keep.any():
        raise EmptySupportError(f"All {len(Y)} points of {to_infix_string(placed.expr)} were filtered out.")
    return X[keep], Y[keep]


def sample_example(skel: Skeleton, spec: BatchSpec, rng: np.random.Generator,
                   n_constants: Optional[int] = None, supports: Optional[Supports] = None,
                   constants: Optional[Sequence[float]] = None) -> Example:
    """
    为一个骨架采样训练样本 | Sample one training example for a skeleton

    :param skel: 骨架 | Skeleton
    :param spec: 批次配置 | Batch specification
    :param rng: 随机数生成器 | Random generator
    :param n_constants: 固定非一常数的个数 | Fixed number of non-unit constants
    :param supports: 固定支撑集 [3, 2] | Fixed supports [3, 2]
    :param constants: 直接给定参数化骨架的常数 | Constants for the parameterized skeleton, given directly
    :return: Example
    :raises EmptySupportError: 所有点都被过滤 | Every point was filtered out
    """
    if constants is None:
        placed, values = parameterize(skel, spec, rng, n_constants)
    else:
        placed, values = place_constants(skel), np.asarray(constants, dtype=np.float64)
    supports = sample_support(spec, rng) if supports is None else np.asarray(supports, dtype=np.float64)
    X = sample_points(supports, spec.max_points, skel.expr.variables_used(), rng)
    X, Y = evaluate_filtered(placed, values, X, spec.y_abs_cap)
    return Example(X=X, Y=Y, target=target_tokens(skel), skeleton=skel, constants=values, supports=supports)


def collate_examples(examples: Sequence[Example], rng: np.random.Generator) -> TrainingBatch:
    """
    截断到批内最小点数（均匀随机丢弃多余点），目标序列用 pad 补齐。

    Truncate to the batch minimum point count by dropping surplus points
    uniformly at random, and pad the targets with the pad token.
    """
    n_min = min(len(example.Y) for example in examples)
    length = max(len(example.target) for example in examples)
    points = np.empty((len(examples), tokens.MAX_VARIABLES + 1, n_min))
    targets = np.full((len(examples), length), tokens.PAD, dtype=np.int64)
    for row, example in enumerate(examples):
        keep = np.arange(len(example.Y))
        if len(keep) > n_min:
            keep = np.sort(rng.choice(len(keep), size=n_min, replace=False))
        points[row, :tokens.MAX_VARIABLES] = example.X[keep].T
        points[row, tokens.MAX_VARIABLES] = example.Y[keep]
        targets[row, :len(example.target)] = example.target
    return TrainingBatch(points=points, encoded=encode_points(points), targets=targets,
                         target_mask=targets != tokens.PAD, skeletons=[example.skeleton for example in examples])


def assemble_batch(pool, spec: BatchSpec, rng: np.random.Generator,
                   max_target_len: Optional[int] = None) -> TrainingBatch:
    """
    从骨架池均匀抽取 B 个样本并组成批次，空支撑集的样本换一个骨架重采样。

    Draw B examples uniformly from the pool; examples with an empty support are
    redrawn with another skeleton.

    :param pool: 骨架池 | Skeleton pool
    :param spec: 批次配置 | Batch specification
    :param rng: 随机数生成器 | Random generator
    :param max_target_len: 目标序列最大长度，超长骨架重新抽取 | Longest allowed target, longer skeletons are redrawn
    :return: TrainingBatch
    :raises DataGenerationError: 重采样次数用尽 | Resample budget exhausted
    """
    if len(pool) == 0:
        raise DataGenerationError("Cannot assemble a batch from an empty pool.")
    examples: List[Example] = []
    for _ in range(spec.batch_size):
        for _attempt in range(MAX_EXAMPLE_ATTEMPTS):
            skel = pool[int(rng.integers(0, len(pool)))]
            if max_target_len is not None and len(to_prefix(skel.expr)) + 2 > max_target_len:
                continue
            try:
                examples.append(sample_example(skel, spec, rng))
                break
            except EmptySupportError:
                logger.debug(f"Empty support for {skel}, drawing another skeleton")
        else:
            raise DataGenerationError(f"Could not sample a valid example after {MAX_EXAMPLE_ATTEMPTS} attempts.")
    return collate_examples(examples, rng)


def write_batch_preview(batch: TrainingBatch, file_utils: FileUtils, file_name: str) -> str:
    """
    每个点一行写出 CSV，便于调试 | Dump one CSV row per point for debugging
    """
    rows = []
    for example in range(batch.size):
        target = " ".join(str(token) for token in batch.targets[example] if token != tokens.PAD)
        infix = to_infix_string(batch.skeletons[example].expr)
        for point in range(batch.point_count):
            x1, x2, x3, y = batch.points[example, :, point]
            rows.append([example, repr(float(x1)), repr(float(x2)), repr(float(x3)), repr(float(y)), infix, target])
    return file_utils.write_csv(file_name, ["example", "x1", "x2", "x3", "y", "skeleton", "target"], rows)
