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
候选骨架的常数拟合与模型选择。

Constant fitting of candidate skeletons and penalized model selection.
"""

import dataclasses
import time
from typing import List, Optional, Sequence, Tuple

import numpy as np

from app.inference.beam import Candidate
from app.models.ConfigModels import InferenceConfig
from app.optim.bfgs import BfgsStatus, minimize, numeric_grad
from app.symbolic.evaluator import compile_expression
from app.symbolic.skeleton import Skeleton, instantiate, place_constants
from app.utils.exceptions import FitFailedError, NoValidCandidateError
from app.utils.logging_utils import configure_logging

logger = configure_logging(name=__name__)


def mean_squared_error(Y: np.ndarray, predictions: np.ndarray) -> float:
    """
    任何一个预测不是有限值时返回 inf | Returns inf when any prediction is not finite
    """
    if not np.all(np.isfinite(predictions)):
        return np.inf
    with np.errstate(over="ignore"):
        return float(np.mean((Y - predictions) ** 2))


def fit_skeleton(skel: Skeleton, X: np.ndarray, Y: np.ndarray, config: InferenceConfig,
                 rng: np.random.Generator) -> Optional[Tuple[np.ndarray, float]]:
    """
    多次随机重启 BFGS，返回最好的 (常数, mse)；没有占位符时直接求 mse。

    Fit one skeleton with independent BFGS restarts and return the best
    (constants, mse); skeletons without placeholders are evaluated directly.

    :return: (常数, mse)，所有重启都失败时为 None | (constants, mse), None when every restart failed
    """
    function = compile_expression(skel.expr)
    if skel.placeholder_count == 0:
        mse = mean_squared_error(Y, function(X, ()))
        return (np.empty(0), mse) if np.isfinite(mse) else None

    def objective(constants: np.ndarray) -> float:
        return mean_squared_error(Y, function(X, constants))

    def gradient(constants: np.ndarray) -> np.ndarray:
        return numeric_grad(objective, constants)

    low, high = config.restart_init_range
    best: Optional[Tuple[np.ndarray, float]] = None
    for restart in range(config.bfgs_restarts):
        start = rng.uniform(low, high, size=skel.placeholder_count)
        result = minimize(objective, gradient, start, config.bfgs)
        if result.status is BfgsStatus.non_finite_objective or not np.isfinite(result.objective_value):
            logger.debug(f"Restart {restart} of {skel} failed with {result.status.value}")
            continue
        if best is None or result.objective_value < best[1]:
            best = (result.minimizer, result.objective_value)
    return best


def fit_candidate(cand: Candidate, X: np.ndarray, Y: np.ndarray, config: InferenceConfig,
                  rng: np.random.Generator) -> Candidate:
    """
    拟合候选的常数：分别拟合解码出的骨架本身和 place_constants 之后的形式，mse 更小者胜出，并列时取前者。
    没有占位符的候选直接求 mse，不做优化。

    Fit the candidate's constants. Both the decoded skeleton itself and its
    place_constants form are fitted; the lower mse wins and ties keep the
    decoded form. A candidate without placeholders is scored directly with no
    optimization.

    :param cand: 候选 | Candidate
    :param X: 输入 [n, 3] | Inputs [n, 3]
    :param Y: 输出 [n] | Outputs [n]
    :param config: 推理配置 | Inference configuration
    :param rng: 重启初始化的随机数生成器 | Random generator for restart initialization
    :return: 填充了 fitted/mse/score 的新候选 | New candidate with fitted, mse and score
    :raises FitFailedError: 两种形式的所有重启都失败 | Every restart of both forms failed
    """
    started = time.perf_counter()
    best: Optional[Tuple[Skeleton, np.ndarray, float]] = None
    forms = (cand.skeleton,)
    if cand.skeleton.placeholder_count > 0:
        forms += (place_constants(cand.skeleton),)
    for form in forms:
        fitted = fit_skeleton(form, X, Y, config, rng)
        if fitted is not None and (best is None or fitted[1] < best[2]):
            best = (form, fitted[0], fitted[1])
    millis = (time.perf_counter() - started) * 1000.0
    if best is None:
        raise FitFailedError(f"Constant fitting failed for every restart of {cand.skeleton}")
    form, constants, mse = best
    return dataclasses.replace(
        cand,
        fitted=instantiate(form, constants),
        constants=constants,
        mse=mse,
        score=mse + config.token_penalty * cand.length,
        fit_millis=millis,
    )


def selection_key(cand: Candidate) -> Tuple[float, float, int]:
    return cand.score, -cand.log_likelihood, cand.length


def select_best(cands: Sequence[Candidate]) -> Candidate:
    """
    分数最小者胜出，其次对数似然更高，再次骨架更短。

    Minimal score wins; ties go to the higher log-likelihood, then the shorter skeleton.

    :raises NoValidCandidateError: 没有已拟合的候选 | No fitted candidate
    """
    fitted: List[Candidate] = [cand for cand in cands if cand.is_fitted and not np.isnan(cand.mse)]
    if not fitted:
        raise NoValidCandidateError("No candidate survived constant fitting.")
    return min(fitted, key=selection_key)
