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

import math
import time
import traceback
from dataclasses import dataclass, field
from typing import Callable, Dict, List, Optional, Tuple

import numpy as np
from tqdm import tqdm

from app.evaluation.metrics import a1_from_values, a2_from_values, ood_support, sample_on_supports
from app.evaluation.suites import BenchmarkSuite
from app.models.ConfigModels import MetricConfig
from app.models.RecordModels import BenchmarkRow, EquationRecord
from app.symbolic.evaluator import evaluate_batch
from app.symbolic.expression import Expression, mul
from app.symbolic.prefix import to_infix_string
from app.utils.concurrency import ordered_map, spawn_seeds
from app.utils.file_utils import FileUtils
from app.utils.logging_utils import configure_logging

logger = configure_logging(name=__name__)

Regressor = Callable[[np.ndarray, np.ndarray], Expression]

METRICS = ("a1_iid", "a1_ood", "a2_iid", "a2_ood")


class GroundTruthOracle:
    """
    直接返回记录中的真实表达式（可乘以一个系数），用于检验指标本身。

    Returns the record's ground-truth expression, optionally scaled, to sanity-check the metrics.
    """
    record_aware = True
    serial_only = False

    def __init__(self, scale: float = 1.0) -> None:
        self.scale = scale

    def __call__(self, X: np.ndarray, Y: np.ndarray, record: Optional[EquationRecord] = None) -> Expression:
        if record is None:
            raise ValueError("GroundTruthOracle needs the benchmark record")
        if self.scale == 1.0:
            return record.expr
        return mul(Expression.constant(self.scale), record.expr)


@dataclass
class BenchmarkReport:
    suite: str
    rows: List[BenchmarkRow] = field(default_factory=list)

    @property
    def aggregates(self) -> Dict[str, Tuple[float, float]]:
        return summarize_report(self.rows)

    def write(self, file_utils: FileUtils, file_name: str) -> str:
        return file_utils.write_csv(file_name, BenchmarkRow.COLUMNS, [row.as_row() for row in self.rows])

    def summary_row(self, **settings) -> Dict[str, object]:
        row: Dict[str, object] = {"suite": self.suite, "records": len(self.rows), **settings}
        for metric, (mean, sem) in self.aggregates.items():
            row[f"{metric}_mean"] = mean
            row[f"{metric}_sem"] = sem
        return row


def summarize_report(rows: List[BenchmarkRow]) -> Dict[str, Tuple[float, float]]:
    """
    每个指标的均值与均值标准误 | Mean and standard error of the mean per metric
    """
    summary: Dict[str, Tuple[float, float]] = {}
    for metric in METRICS + ("wall_seconds",):
        values = np.array([float(getattr(row, metric)) for row in rows])
        if values.size == 0:
            summary[metric] = (math.nan, math.nan)
            continue
        mean = float(np.sum(values) / values.size)
        sem = float(np.std(values, ddof=1) / math.sqrt(values.size)) if values.size > 1 else 0.0
        summary[metric] = (mean, sem)
    return summary


def _call_regressor(regressor: Regressor, X: np.ndarray, Y: np.ndarray, record: EquationRecord) -> Expression:
    if getattr(regressor, "record_aware", False):
        return regressor(X, Y, record=record)
    return regressor(X, Y)


def evaluate_record(regressor: Regressor, record: EquationRecord, cfg: MetricConfig, test_points: int,
                    rng: np.random.Generator) -> BenchmarkRow:
    """
    在 iid 支撑集上采样测试点交给回归器，再在新采样的 iid 与 ood 点上计算 A1/A2。

    Hand test_points iid samples to the regressor, then score A1/A2 on fresh
    iid and ood samples. Failures produce an all-false row.
    """
    supports = list(record.supports)
    started = time.perf_counter()
    try:
        X = sample_on_supports(supports, test_points, rng)
        Y = evaluate_batch(record.expr, X)
        finite = np.isfinite(Y)
        if not finite.any():
            raise ValueError("The ground truth is not finite at any test point")
        prediction = _call_regressor(regressor, X[finite, :record.dim_x], Y[finite], record)
        wall = time.perf_counter() - started

        scores = {}
        for region, region_supports in (("iid", supports), ("ood", ood_support(supports))):
            points = sample_on_supports(region_supports, cfg.eval_points, rng)
            truth, predicted = evaluate_batch(record.expr, points), evaluate_batch(prediction, points)
            scores[f"a1_{region}"] = a1_from_values(truth, predicted, cfg)
            scores[f"a2_{region}"] = a2_from_values(truth, predicted, cfg)
        return BenchmarkRow(name=record.name, wall_seconds=wall, predicted_infix=to_infix_string(prediction), **scores)
    except Exception as error:
        logger.error(f"Benchmark record {record.name} failed: {error}")
        logger.error(traceback.format_exc())
        return BenchmarkRow(name=record.name, a1_iid=False, a1_ood=False, a2_iid=False, a2_ood=False,
                            wall_seconds=time.perf_counter() - started, predicted_infix="", error=str(error))


def run_benchmark(regressor: Regressor, suite: BenchmarkSuite, cfg: Optional[MetricConfig] = None,
                  test_points: Optional[int] = None, rng: Optional[np.random.Generator] = None,
                  workers: Optional[int] = None, show_progress: bool = False) -> BenchmarkReport:
    """
    在整个基准集上运行回归器。每条记录使用独立的随机流，单条失败不会中断整个基准。

    Run a regressor over a whole suite. Every record gets its own random stream;
    a failing record never aborts the suite.

    :param regressor: regressor(X, Y) -> Expression
    :param suite: 基准集 | Benchmark suite
    :param cfg: 指标配置 | Metric configuration
    :param test_points: 测试时的点数 | Points handed to the regressor
    :param rng: 随机数生成器 | Random generator
    :param workers: 并行线程数 | Parallel workers
    :param show_progress: 是否显示进度条 | Whether to show a progress bar
    :return: BenchmarkReport
    """
    if len(suite) == 0:
        raise ValueError(f"Suite {suite.name} is empty")
    cfg = cfg or MetricConfig()
    test_points = test_points or cfg.test_points
    rng = rng or np.random.default_rng(0)
    seeds = spawn_seeds(rng, len(suite))
    if getattr(regressor, "serial_only", False):
        workers = 1
    progress = tqdm(total=len(suite), disable=not show_progress, desc=suite.name)

    def evaluate(job: Tuple[EquationRecord, int]) -> BenchmarkRow:
        record, seed = job
        row = evaluate_record(regressor, record, cfg, test_points, np.random.default_rng(seed))
        progress.update(1)
        return row

    rows = ordered_map(evaluate, list(zip(suite.records, seeds)), workers)
    progress.close()
    report = BenchmarkReport(suite=suite.name, rows=rows)
    means = {metric: round(mean, 4) for metric, (mean, _) in report.aggregates.items() if metric in METRICS}
    logger.info(f"Benchmark {suite.name}: {len(rows)} records, {means}")
    return report
