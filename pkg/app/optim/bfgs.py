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
BFGS 拟牛顿法与强 Wolfe 线搜索，用于拟合骨架常数。

Quasi-Newton BFGS minimization with a strong-Wolfe line search, used to fit
skeleton constants. Generic over objective and gradient callables.
"""

import enum
from dataclasses import dataclass
from typing import Callable, Optional

import numpy as np

from app.models.ConfigModels import BfgsConfig
from app.utils.exceptions import NonFiniteObjectiveError
from app.utils.logging_utils import configure_logging

logger = configure_logging(name=__name__)

Objective = Callable[[np.ndarray], float]
Gradient = Callable[[np.ndarray], np.ndarray]

# 曲率条件 sᵀy > CURVATURE_EPS·|s||y| 才更新 | Update only when sᵀy > CURVATURE_EPS·|s||y|
CURVATURE_EPS = 1e-10


class BfgsStatus(str, enum.Enum):
    converged = "Converged"
    max_iterations = "MaxIterations"
    line_search_failed = "LineSearchFailed"
    non_finite_objective = "NonFiniteObjective"


@dataclass
class BfgsResult:
    minimizer: np.ndarray
    objective_value: float
    iterations: int
    status: BfgsStatus

    @property
    def failed(self) -> bool:
        return self.status is BfgsStatus.non_finite_objective


@dataclass
class _Trial:
    alpha: float
    x: np.ndarray
    value: float
    gradient: Optional[np.ndarray] = None
    slope: float = np.nan


def numeric_grad(f: Objective, x: np.ndarray, eps: Optional[float] = None) -> np.ndarray:
    """
    中心差分梯度，步长默认 1e-6·max(1, |x_i|)。

    Central-difference gradient; the default step is 1e-6·max(1, |x_i|).

    :param f: 目标函数 | Objective
    :param x: 求值点 | Evaluation point
    :param eps: 固定步长 | Fixed step size
    :return: 梯度估计 | Gradient estimate
    :raises NonFiniteObjectiveError: 任一探测点的目标值不是有限值 | Objective not finite at a trial point
    """
    x = np.asarray(x, dtype=np.float64)
    gradient = np.empty_like(x)
    for index in range(x.size):
        step = eps if eps is not None else 1e-6 * max(1.0, abs(x[index]))
        forward = x.copy()
        backward = x.copy()
        forward[index] += step
        backward[index] -= step
        upper, lower = f(forward), f(backward)
        if not (np.isfinite(upper) and np.isfinite(lower)):
            raise NonFiniteObjectiveError(f"Objective is not finite around coordinate {index} of {x}")
        gradient[index] = (upper - lower) / (2.0 * step)
    return gradient


class _LineSearch:
    """
    Nocedal–Wright 风格的强 Wolfe 线搜索（扩张阶段 + zoom）。

    Strong-Wolfe line search in the bracketing-then-zoom form.
    """

    def __init__(self, f: Objective, grad: Gradient, x: np.ndarray, value: float,
                 gradient: np.ndarray, direction: np.ndarray, config: BfgsConfig):
        self.f = f
        self.grad = grad
        self.x = x
        self.direction = direction
        self.config = config
        self.origin = _Trial(alpha=0.0, x=x, value=value, gradient=gradient, slope=float(gradient @ direction))

    def armijo(self, trial: _Trial) -> bool:
        origin = self.origin
        return bool(np.isfinite(trial.value)) and trial.value <= origin.value + self.config.wolfe_c1 * trial.alpha * origin.slope

    def curvature(self, trial: _Trial) -> bool:
        return abs(trial.slope) <= -self.config.wolfe_c2 * self.origin.slope

    def strong_wolfe(self, trial: _Trial) -> bool:
        return trial.gradient is not None and self.armijo(trial) and self.curvature(trial)

    def evaluate_at(self, alpha: float) -> _Trial:
        x = self.x + alpha * self.direction
        return _Trial(alpha=alpha, x=x, value=float(self.f(x)))

    def differentiate(self, trial: _Trial) -> bool:
        try:
            gradient = np.asarray(self.grad(trial.x), dtype=np.float64)
        except NonFiniteObjectiveError:
            return False
        if not np.all(np.isfinite(gradient)):
            return False
        trial.gradient = gradient
        trial.slope = float(gradient @ self.direction)
        return True

    def search(self, initial_step: float) -> Optional[_Trial]:
        previous = self.origin
        alpha = initial_step
        for attempt in range(self.config.max_line_search_steps):
            trial = self.evaluate_at(alpha)
            # 非有限值按 Armijo 失败处理 | A non-finite value counts as an Armijo failure
            if not self.armijo(trial) or (attempt > 0 and trial.value >= previous.value):
                return self.zoom(previous, trial)
            if not self.differentiate(trial):
                return self.zoom(previous, trial)
            if self.curvature(trial):
                return trial
            if trial.slope >= 0:
                return self.zoom(trial, previous)
            previous = trial
            alpha *= 2.0
        return None

    def zoom(self, low: _Trial, high: _Trial) -> Optional[_Trial]:
        for _ in range(self.config.max_line_search_steps):
            alpha = self.interpolate(low, high)
            trial = self.evaluate_at(alpha)
            if not self.armijo(trial) or trial.value >= low.value:
                high = trial
                continue
            if not self.differentiate(trial):
                high = trial
                continue
            if self.curvature(trial):
                return trial
            if trial.slope * (high.alpha - low.alpha) >= 0:
                high = low
            low = trial
        return None

    @staticmethod
    def interpolate(low: _Trial, high: _Trial) -> float:
        """
        二次插值求区间内的试探步长，结果太靠近端点时退化为二分。

        Quadratic interpolation from (value, slope) at low and value at high,
        falling back to bisection near the interval ends.
        """
        width = high.alpha - low.alpha
        midpoint = low.alpha + 0.5 * width
        if not np.isfinite(high.value):
            return midpoint
        curvature = high.value - low.value - low.slope * width
        if curvature <= 0:
            return midpoint
        alpha = low.alpha - low.slope * width * width / (2.0 * curvature)
        lower, upper = sorted((low.alpha, high.alpha))
        margin = 0.1 * abs(width)
        if not (lower + margin <= alpha <= upper - margin):
            return midpoint
        return alpha

    def polish(self, accepted: _Trial) -> _Trial:
        """
        用割线法在接受的步长上再走一步：二次目标上恰好得到精确线搜索。

        One secant step on the directional derivative from the accepted point;
        on a quadratic this lands on the exact line minimizer. Kept only when it
        also satisfies strong Wolfe and does not increase the objective.
        """
        denominator = self.origin.slope - accepted.slope
        if denominator == 0:
            return accepted
        alpha = accepted.alpha * self.origin.slope / denominator
        if not np.isfinite(alpha) or alpha <= 0 or alpha == accepted.alpha:
            return accepted
        trial = self.evaluate_at(alpha)
        if not self.armijo(trial) or trial.value > accepted.value or not self.differentiate(trial):
            return accepted
        return trial if self.curvature(trial) else accepted


def minimize(f: Objective, grad: Gradient, x0: np.ndarray, config: Optional[BfgsConfig] = None,
             debug: bool = False) -> BfgsResult:
    """
    用 BFGS 最小化 f。逆 Hessian 近似在第一次更新前按 sᵀy/yᵀy 缩放；
    曲率条件不满足时跳过更新，方向不是下降方向时重置为单位阵。

    Minimize f with BFGS. The inverse-Hessian approximation is scaled by
    sᵀy/yᵀy before the first update; updates are skipped when the curvature
    condition fails, and the approximation is reset when the direction is not a
    descent direction.

    :param f: 目标函数 | Objective
    :param grad: 梯度函数 | Gradient
    :param x0: 初始点 | Starting point
    :param config: BFGS 配置 | BFGS configuration
    :param debug: 每个接受的步长都断言强 Wolfe 条件 | Assert strong Wolfe on every accepted step
    :return: BfgsResult
    """
    config = config or BfgsConfig()
    x = np.array(x0, dtype=np.float64)
    value = float(f(x))
    if not np.isfinite(value):
        return BfgsResult(minimizer=x, objective_value=value, iterations=0, status=BfgsStatus.non_finite_objective)
    try:
        gradient = np.asarray(grad(x), dtype=np.float64)
    except NonFiniteObjectiveError:
        return BfgsResult(minimizer=x, objective_value=value, iterations=0, status=BfgsStatus.non_finite_objective)
    if not np.all(np.isfinite(gradient)):
        return BfgsResult(minimizer=x, objective_value=value, iterations=0, status=BfgsStatus.non_finite_objective)

    identity = np.eye(x.size)
    inverse_hessian = identity.copy()
    scaled = False
    for iteration in range(config.max_iterations):
        if np.max(np.abs(gradient), initial=0.0) <= config.gradient_tolerance:
            return BfgsResult(minimizer=x, objective_value=value, iterations=iteration, status=BfgsStatus.converged)

        direction = -inverse_hessian @ gradient
        if not gradient @ direction < 0:
            logger.debug(f"Iteration {iteration}: not a descent direction, resetting the inverse Hessian")
            inverse_hessian = identity.copy()
            scaled = False
            direction = -gradient

        initial_step = 1.0 if scaled else min(1.0, 1.0 / np.max(np.abs(gradient)))
        search = _LineSearch(f, grad, x, value, gradient, direction, config)
        accepted = search.search(initial_step)
        if accepted is None:
            return BfgsResult(minimizer=x, objective_value=value, iterations=iteration,
                              status=BfgsStatus.line_search_failed)
        accepted = search.polish(accepted)
        if debug:
            assert search.armijo(accepted), f"Armijo condition violated at iteration {iteration}"
            assert search.curvature(accepted), f"Curvature condition violated at iteration {iteration}"

        step = accepted.x - x
        change = accepted.gradient - gradient
        curvature = float(step @ change)
        if curvature > CURVATURE_EPS * np.linalg.norm(step) * np.linalg.norm(change):
            if not scaled:
                inverse_hessian = (curvature / float(change @ change)) * identity
                scaled = True
            rho = 1.0 / curvature
            left = identity - rho * np.outer(step, change)
            inverse_hessian = left @ inverse_hessian @ left.T + rho * np.outer(step, step)
        x, value, gradient = accepted.x, accepted.value, accepted.gradient

    status = BfgsStatus.converged if np.max(np.abs(gradient), initial=0.0) <= config.gradient_tolerance \
        else BfgsStatus.max_iterations
    return BfgsResult(minimizer=x, objective_value=value, iterations=config.max_iterations, status=status)
