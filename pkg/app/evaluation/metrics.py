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
准确率指标：A1（逐点 atol/rtol 接近的比例）与 A2（有限点上的 R²）。

Accuracy metrics: A1 (fraction of pointwise atol/rtol matches) and A2 (R² over finite points).
"""

from typing import Optional, Sequence, Tuple

import numpy as np

from app.models.ConfigModels import MetricConfig
from app.symbolic import tokens
from app.symbolic.evaluator import evaluate_batch
from app.symbolic.expression import Expression

Interval = Tuple[float, float]
SupportList = Sequence[Optional[Interval]]


def pointwise_close(y, yhat, cfg: MetricConfig):
    """
    两者都非有限时，类别相同（NaN/+inf/-inf）才算正确；只有一个非有限时不正确；
    否则 |ŷ - y| ≤ atol + rtol·|y|。rtol 以真实值 y 缩放，因此不对称。

    Both non-finite: correct iff they share the class (NaN, +inf, -inf).
    Exactly one non-finite: incorrect. Otherwise |ŷ - y| ≤ atol + rtol·|y|,
    with rtol scaled by the true value y only.

    :param y: 真实值（标量或数组）| True values (scalar or array)
    :param yhat: 预测值 | Predicted values
    :param cfg: 指标配置 | Metric configuration
    :return: 布尔值或布尔数组 | Boolean or boolean array
    """
    y = np.asarray(y, dtype=np.float64)
    yhat = np.asarray(yhat, dtype=np.float64)
    y_finite = np.isfinite(y)
    yhat_finite = np.isfinite(yhat)
    same_class = (np.isnan(y) & np.isnan(yhat)) | (np.isinf(y) & np.isinf(yhat) & (np.sign(y) == np.sign(yhat)))
    with np.errstate(over="ignore", invalid="ignore"):
        close = np.abs(yhat - y) <= cfg.atol + cfg.rtol * np.abs(y)
    result = np.where(y_finite & yhat_finite, close, np.where(~y_finite & ~yhat_finite, same_class, False))
    return bool(result) if result.ndim == 0 else result


def a1_from_values(y: np.ndarray, yhat: np.ndarray, cfg: MetricConfig) -> bool:
    fraction = float(np.mean(pointwise_close(y, yhat, cfg)))
    return fraction > cfg.point_pass_fraction


def r2_score(y: np.ndarray, yhat: np.ndarray) -> float:
    """
    只在两者都有限的点上计算；有限点少于 2 个或 y 方差为 0 时返回 NaN。

    Computed on points where both values are finite; NaN with fewer than two
    finite pairs or zero variance in y.
    """
    y = np.asarray(y, dtype=np.float64)
    yhat = np.asarray(yhat, dtype=np.float64)
    mask = np.isfinite(y) & np.isfinite(yhat)
    if mask.sum() < 2:
        return np.nan
    y, yhat = y[mask], yhat[mask]
    with np.errstate(over="ignore", invalid="ignore"):
        total = float(np.sum((y - y.mean()) ** 2))
        residual = float(np.sum((y - yhat) ** 2))
    if total == 0.0 or not np.isfinite(total):
        return np.nan
    return 1.0 - residual / total


def a2_from_values(y: np.ndarray, yhat: np.ndarray, cfg: MetricConfig) -> bool:
    score = r2_score(y, yhat)
    return bool(np.isfinite(score) and score > cfg.r2_threshold)


def sample_on_supports(supports: SupportList, count: int, rng: np.random.Generator) -> np.ndarray:
    """
    在各变量的支撑区间上均匀采样，未使用的变量取 0 | Uniform samples per variable, unused variables are 0

    :return: [count, 3]
    """
    X = np.zeros((count, tokens.MAX_VARIABLES))
    for index, interval in enumerate(supports[:tokens.MAX_VARIABLES]):
        if interval is not None:
            X[:, index] = rng.uniform(interval[0], interval[1], size=count)
    return X


def _paired_values(true_expr: Expression, pred_expr: Expression, supports: SupportList, cfg: MetricConfig,
                   rng: np.random.Generator) -> Tuple[np.ndarray, np.ndarray]:
    X = sample_on_supports(supports, cfg.eval_points, rng)
    return evaluate_batch(true_expr, X), evaluate_batch(pred_expr, X)


def a1_accuracy(true_expr: Expression, pred_expr: Expression, supports: SupportList, cfg: MetricConfig,
                rng: np.random.Generator) -> bool:
    """
    在 eval_points 个新采样点上，逐点正确的比例超过 point_pass_fraction 即为正确。

    Correct when more than point_pass_fraction of eval_points fresh points are pointwise close.
    """
    return a1_from_values(*_paired_values(true_expr, pred_expr, supports, cfg, rng), cfg)


def a2_r2(true_expr: Expression, pred_expr: Expression, supports: SupportList, cfg: MetricConfig,
          rng: np.random.Generator) -> bool:
    return a2_from_values(*_paired_values(true_expr, pred_expr, supports, cfg, rng), cfg)


def ood_support(supports: SupportList) -> list:
    """
    每个已用变量的区间向两侧各扩展一个区间宽度：(lo, hi) -> (lo - w, hi + w)。

    Extend every present interval by its own width on each side: (lo, hi) -> (lo - w, hi + w).
    """
    extended = []
    for interval in supports:
        if interval is None:
            extended.append(None)
            continue
        low, high = interval
        if not low < high:
            raise ValueError(f"Support interval must satisfy lo < hi, got {interval}")
        width = high - low
        extended.append((low - width, high + width))
    return extended
