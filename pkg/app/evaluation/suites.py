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
基准集：内置的 AIF 与 Nguyen 方程，以及与训练池不相交的 SOOSE 方程集。

Benchmark suites: the bundled AIF and Nguyen equations and SOOSE suites that
are symbolically and numerically disjoint from a training pool.
"""

import os
from dataclasses import dataclass, field
from typing import Dict, List, Optional

import numpy as np
from pydantic import ValidationError

from app.datagen.examples import MAX_EXAMPLE_ATTEMPTS, evaluate_filtered, parameterize, sample_points, sample_support
from app.datagen.fingerprint import fingerprint_matrix, make_reference_points, match_any, numeric_fingerprint
from app.datagen.pool import SkeletonPool
from app.models.ConfigModels import BatchSpec
from app.models.RecordModels import EquationRecord, SooseVariant
from app.symbolic import tokens
from app.symbolic.expression import Expression, NodeKind
from app.symbolic.prefix import parse_prefix, to_prefix
from app.symbolic.skeleton import Skeleton, instantiate, place_constants
from app.symbolic.sympy_bridge import parse_infix
from app.utils.exceptions import (DataFileMissingError, EmptySupportError, InsufficientDisjointSkeletonsError,
                                  MalformedDataError, MalformedExpressionError)
from app.utils.file_utils import FileUtils, read_jsonl
from app.utils.logging_utils import configure_logging
from config.settings import Settings

logger = configure_logging(name=__name__)

AIF_FILE = "aif.jsonl"
NGUYEN_FILE = "nguyen.jsonl"


@dataclass
class BenchmarkSuite:
    name: str
    records: List[EquationRecord] = field(default_factory=list)
    # 构建信息，例如 SOOSE 的不相交检查 | Build details such as the SOOSE disjointness check
    details: Dict[str, object] = field(default_factory=dict)

    def __len__(self) -> int:
        return len(self.records)

    def __iter__(self):
        return iter(self.records)

    def save(self, file_utils: FileUtils, file_name: str) -> str:
        """
        以 (前缀, 常数) 对写出，常数按先序绑定 | Write (prefix, constants) pairs bound in pre-order
        """
        rows = [{
            "name": record.name,
            "prefix": to_prefix(record.expr),
            "constants": expression_constants(record.expr),
            "supports": [list(interval) if interval is not None else None for interval in record.supports],
            "reachable": record.reachable,
        } for record in self.records]
        return file_utils.write_jsonl(file_name, Settings.FileSettings.suite_header, rows)


def expression_constants(expr: Expression) -> List[float]:
    return [node.value for node in expr.walk() if node.kind is NodeKind.constant]


def is_reachable(expr: Expression) -> bool:
    """
    Pow 的指数不是词表整数时，神经回归器无法生成该方程。

    A Pow whose exponent is not a vocabulary integer cannot be produced by the neural regressor.
    """
    for node in expr.walk():
        if node.kind is NodeKind.operator and node.token == tokens.POW and not node.children[1].is_integer():
            return False
    return True


def _record_expression(row: Dict[str, object]) -> Expression:
    if "infix" in row:
        return parse_infix(str(row["infix"]))
    skel = Skeleton.from_expression(parse_prefix(row["prefix"]))
    return instantiate(skel, row.get("constants", []))


def load_suite(file_path: str, name: Optional[str] = None) -> BenchmarkSuite:
    """
    读取基准集文件，每行包含 infix 或 (prefix, constants) 以及各变量的支撑区间。

    Read a suite file; each line holds either an infix formula or a
    (prefix, constants) pair, plus per-variable supports.

    :param file_path: 文件路径 | File path
    :param name: 基准集名称 | Suite name
    :return: BenchmarkSuite
    :raises DataFileMissingError: 文件不存在 | File missing
    :raises MalformedDataError: 记录无效 | Invalid record
    """
    if not os.path.isfile(file_path):
        raise DataFileMissingError(f"Benchmark data file not found: {file_path}")
    records = []
    for row in read_jsonl(file_path, Settings.FileSettings.suite_header):
        line = row["_line"]
        try:
            expr = _record_expression(row)
            supports = list(row["supports"]) + [None] * (tokens.MAX_VARIABLES - len(row["supports"]))
            records.append(EquationRecord(name=row.get("name", f"eq-{line}"), expr=expr,
                                          supports=tuple(supports[:tokens.MAX_VARIABLES]),
                                          reachable=bool(row.get("reachable", is_reachable(expr)))))
        except (KeyError, TypeError, ValueError, MalformedExpressionError, ValidationError) as error:
            raise MalformedDataError(f"{file_path}: invalid suite record ({error})", line_number=line)
    logger.debug(f"Loaded {len(records)} records from {file_path}")
    return BenchmarkSuite(name=name or os.path.splitext(os.path.basename(file_path))[0], records=records)


def load_aif(data_dir: Optional[str] = None) -> BenchmarkSuite:
    return load_suite(os.path.join(data_dir or Settings.FileSettings.data_dir, AIF_FILE), name="aif")


def load_nguyen(data_dir: Optional[str] = None) -> BenchmarkSuite:
    return load_suite(os.path.join(data_dir or Settings.FileSettings.data_dir, NGUYEN_FILE), name="nguyen")


def _variant_form(skel: Skeleton, variant: SooseVariant, spec: BatchSpec, rng: np.random.Generator):
    if variant is SooseVariant.NC:
        # 已有的占位符取整数 1 | Existing placeholders become the integer 1
        ones = _fill_ones(skel.expr)
        return Skeleton.from_expression(ones), np.empty(0)
    if variant is SooseVariant.WC:
        return parameterize(skel, spec, rng)
    placed = place_constants(skel)
    low, high = spec.constant_range
    return placed, rng.uniform(low, high, size=placed.placeholder_count)


def _fill_ones(expr: Expression) -> Expression:
    if expr.kind is NodeKind.placeholder:
        return Expression.integer(1)
    if expr.is_leaf:
        return expr
    return Expression.operator(expr.token, *(_fill_ones(child) for child in expr.children))


def _instantiate_record(name: str, skel: Skeleton, variant: SooseVariant, spec: BatchSpec,
                        rng: np.random.Generator) -> Optional[EquationRecord]:
    variables = sorted(skel.expr.variables_used())
    for _ in range(MAX_EXAMPLE_ATTEMPTS):
        form, constants = _variant_form(skel, variant, spec, rng)
        supports = sample_support(spec, rng)
        X = sample_points(supports, spec.max_points, variables, rng)
        try:
            evaluate_filtered(form, constants, X, spec.y_abs_cap)
        except EmptySupportError:
            continue
        intervals = tuple((float(supports[dim, 0]), float(supports[dim, 1])) if dim + 1 in variables else None
                          for dim in range(tokens.MAX_VARIABLES))
        return EquationRecord(name=name, expr=instantiate(form, constants), supports=intervals, reachable=True)
    return None


def build_soose(pool: SkeletonPool, train_pool: SkeletonPool, count: int, variant: SooseVariant,
                rng: np.random.Generator, spec: Optional[BatchSpec] = None) -> BenchmarkSuite:
    """
    从 pool 中抽取 count 个骨架，它们在同一组探测点上的数值指纹与训练池中任何骨架都不相同，
    彼此之间也不相同；再按变体实例化常数并采样支撑集。

    Draw count skeletons from pool whose numeric fingerprints on a shared reference
    set match no training skeleton and no other chosen skeleton, then
    instantiate constants per variant and sample supports as in training.

    :param pool: 候选骨架池 | Candidate pool
    :param train_pool: 训练骨架池 | Training pool
    :param count: 方程数 | Number of equations
    :param variant: WC、NC 或 FC | WC, NC or FC
    :param rng: 随机数生成器 | Random generator
    :param spec: 常数与支撑集的采样配置 | Sampling configuration for constants and supports
    :return: BenchmarkSuite
    :raises InsufficientDisjointSkeletonsError: 不相交的骨架不足 | Not enough disjoint skeletons
    """
    spec = spec or BatchSpec()
    variant = SooseVariant(variant)
    reference = make_reference_points(int(rng.integers(0, 2 ** 31 - 1)))
    references = fingerprint_matrix(train_pool.unique(), reference)
    candidates = SkeletonPool(pool.unique())
    order = rng.permutation(len(candidates))

    chosen: List[EquationRecord] = []
    chosen_prints: List[np.ndarray] = []
    rejected = 0
    for index in order:
        skel = candidates[int(index)]
        fingerprint = numeric_fingerprint(skel, reference)
        if match_any(fingerprint, references) or match_any(fingerprint, np.array(chosen_prints).reshape(-1, reference.shape[0])):
            rejected += 1
            continue
        record = _instantiate_record(f"soose-{variant.value.lower()}-{len(chosen) + 1:03d}", skel, variant, spec, rng)
        if record is None:
            logger.debug(f"No finite support found for {skel}, skipping")
            continue
        chosen.append(record)
        chosen_prints.append(fingerprint)
        if len(chosen) == count:
            break
    if len(chosen) < count:
        raise InsufficientDisjointSkeletonsError(
            f"Only {len(chosen)} of {count} requested skeletons are disjoint from the training pool")
    logger.info(f"Built SOOSE-{variant.value} with {count} records ({rejected} overlapping skeletons rejected)")
    return BenchmarkSuite(name=f"soose-{variant.value.lower()}", records=chosen,
                          details={"variant": variant.value, "rejected_overlaps": rejected,
                                   "train_unique": int(references.shape[0]), "disjoint_verified": True})

