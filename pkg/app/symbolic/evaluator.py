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
表达式的数值求值。定义域之外的运算按 IEEE 浮点语义得到 NaN 或 ±inf，而不是抛出异常。

Numeric evaluation of expressions. Domain violations follow IEEE semantics and
produce NaN or ±inf instead of raising.
"""

from typing import Callable, Dict, Sequence

import numpy as np

from app.symbolic import tokens
from app.symbolic.expression import Expression, NodeKind
from app.utils.exceptions import ArityMismatchError

# (X[n, 3], constants) -> y[n]
CompiledExpression = Callable[[np.ndarray, np.ndarray], np.ndarray]


def _coth(values: np.ndarray) -> np.ndarray:
    return 1.0 / np.tanh(values)


UNARY_FUNCTIONS: Dict[int, Callable[[np.ndarray], np.ndarray]] = {
    tokens.ARCCOS: np.arccos,
    tokens.ARCSIN: np.arcsin,
    tokens.ARCTAN: np.arctan,
    tokens.COS: np.cos,
    tokens.COSH: np.cosh,
    tokens.COTH: _coth,
    tokens.EXP: np.exp,
    tokens.LN: np.log,
    tokens.SIN: np.sin,
    tokens.SINH: np.sinh,
    tokens.SQRT: np.sqrt,
    tokens.TAN: np.tan,
    tokens.TANH: np.tanh,
}

BINARY_FUNCTIONS: Dict[int, Callable[[np.ndarray, np.ndarray], np.ndarray]] = {
    tokens.ADD: np.add,
    tokens.MUL: np.multiply,
    tokens.DIV: np.divide,
    # 实数幂：负底数配非整数指数得到 NaN | Real power: negative base with non-integer exponent gives NaN
    tokens.POW: np.power,
}


def compile_expression(expr: Expression) -> CompiledExpression:
    """
    将表达式编译为向量化的闭包，占位符按先序依次绑定常数。

    Compile an expression into a vectorized closure; placeholders bind constants in pre-order.

    :param expr: 表达式 | Expression
    :return: 可调用对象 f(X, constants) | Callable f(X, constants)
    """
    counter = [0]

    def build(node: Expression) -> CompiledExpression:
        if node.kind is NodeKind.variable:
            column = node.variable_index - 1
            return lambda X, c: X[:, column]
        if node.kind is NodeKind.integer:
            value = float(node.int_value)
            return lambda X, c: np.full(X.shape[0], value)
        if node.kind is NodeKind.constant:
            value = node.value
            return lambda X, c: np.full(X.shape[0], value)
        if node.kind is NodeKind.placeholder:
            slot = counter[0]
            counter[0] += 1
            return lambda X, c: np.full(X.shape[0], c[slot])
        if len(node.children) == 1:
            function = UNARY_FUNCTIONS[node.token]
            child = build(node.children[0])
            return lambda X, c: function(child(X, c))
        function = BINARY_FUNCTIONS[node.token]
        left = build(node.children[0])
        right = build(node.children[1])
        return lambda X, c: function(left(X, c), right(X, c))

    body = build(expr)
    placeholder_count = counter[0]

    def evaluate_compiled(X: np.ndarray, constants: np.ndarray = ()) -> np.ndarray:
        constants = np.asarray(constants, dtype=np.float64)
        if constants.shape[0] != placeholder_count:
            raise ArityMismatchError(
                f"Expression has {placeholder_count} placeholders but {constants.shape[0]} constants were given.")
        X = np.asarray(X, dtype=np.float64)
        with np.errstate(all="ignore"):
            return body(X, constants)

    return evaluate_compiled


def evaluate_batch(expr: Expression, X: np.ndarray, constants: Sequence[float] = ()) -> np.ndarray:
    """
    在多个点上求值，X 的形状为 [n, 3]。

    Evaluate on many points; X has shape [n, 3].
    """
    X = np.atleast_2d(np.asarray(X, dtype=np.float64))
    if X.shape[1] < tokens.MAX_VARIABLES:
        X = np.hstack([X, np.zeros((X.shape[0], tokens.MAX_VARIABLES - X.shape[1]))])
    return compile_expression(expr)(X, np.asarray(constants, dtype=np.float64))


def evaluate(expr: Expression, point: Sequence[float], constants: Sequence[float] = ()) -> float:
    """
    在单个点上求值 | Evaluate at a single point

    :param expr: 表达式 | Expression
    :param point: 长度为 3 的点 | Point of length 3
    :param constants: 按先序绑定的常数 | Constants bound in pre-order
    :return: 有限值、NaN 或 ±inf | Finite value, NaN or ±inf
    """
    return float(evaluate_batch(expr, np.asarray(point, dtype=np.float64).reshape(1, -1), constants)[0])
