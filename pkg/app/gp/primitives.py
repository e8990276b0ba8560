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
遗传编程的受保护算子与扁平前缀程序。

Protected operators and flat prefix programs for the genetic-programming baseline.
A program is a pre-order list whose items are function names (str), feature
indices (int) or ephemeral constants (float).
"""

from dataclasses import dataclass
from typing import Callable, Dict, List, Sequence, Tuple, Union

import numpy as np

from app.symbolic.expression import Expression, add, div, mul, neg, sub, unary, var

Node = Union[str, int, float]
Program = List[Node]

# 受保护运算的奇异阈值 | Singularity threshold of the protected operators
PROTECTION_EPS = 1e-6
# 所有中间结果都截断到该范围内 | Every intermediate result is clipped to this range
VALUE_CAP = 1e100
EXP_CLIP = 100.0


def _capped(values: np.ndarray) -> np.ndarray:
    return np.clip(values, -VALUE_CAP, VALUE_CAP)


def protected_div(left: np.ndarray, right: np.ndarray) -> np.ndarray:
    with np.errstate(divide="ignore", invalid="ignore", over="ignore"):
        return np.where(np.abs(right) > PROTECTION_EPS, np.divide(left, right), 1.0)


def protected_inv(values: np.ndarray) -> np.ndarray:
    return protected_div(np.ones_like(values), values)


def protected_sqrt(values: np.ndarray) -> np.ndarray:
    return np.sqrt(np.abs(values))


def protected_log(values: np.ndarray) -> np.ndarray:
    with np.errstate(divide="ignore", invalid="ignore"):
        return np.where(np.abs(values) > PROTECTION_EPS, np.log(np.abs(values)), 0.0)


def protected_exp(values: np.ndarray) -> np.ndarray:
    return np.exp(np.clip(values, -EXP_CLIP, EXP_CLIP))


@dataclass(frozen=True)
class Primitive:
    name: str
    arity: int
    function: Callable[..., np.ndarray]
    # 转换为普通运算的表达式 | Conversion to an expression over plain operators
    build: Callable[..., Expression]


PRIMITIVES: Dict[str, Primitive] = {
    primitive.name: primitive for primitive in (
        Primitive("add", 2, np.add, add),
        Primitive("sub", 2, np.subtract, sub),
        Primitive("mul", 2, np.multiply, mul),
        Primitive("div", 2, protected_div, div),
        Primitive("sqrt", 1, protected_sqrt, lambda child: unary("sqrt", child)),
        Primitive("log", 1, protected_log, lambda child: unary("ln", child)),
        Primitive("exp", 1, protected_exp, lambda child: unary("exp", child)),
        Primitive("neg", 1, np.negative, neg),
        Primitive("inv", 1, protected_inv, lambda child: div(Expression.integer(1), child)),
        Primitive("sin", 1, np.sin, lambda child: unary("sin", child)),
        Primitive("cos", 1, np.cos, lambda child: unary("cos", child)),
    )
}


def is_function(node: Node) -> bool:
    return isinstance(node, str)


def execute(program: Sequence[Node], X: np.ndarray) -> np.ndarray:
    """
    用栈在 X [n, d] 上执行扁平程序；对有限输入，结果总是有限的。

    Execute a flat program on X [n, d] with an explicit stack. Finite inputs
    always give finite outputs.

    :param program: 扁平前缀程序 | Flat prefix program
    :param X: 输入矩阵 | Input matrix
    :return: [n]
    """
    count = X.shape[0]
    operands: List[np.ndarray] = []
    for node in reversed(program):
        if is_function(node):
            primitive = PRIMITIVES[node]
            arguments = [operands.pop() for _ in range(primitive.arity)]
            with np.errstate(over="ignore", invalid="ignore"):
                operands.append(_capped(primitive.function(*arguments)))
        elif isinstance(node, int):
            operands.append(X[:, node].astype(np.float64))
        else:
            operands.append(np.full(count, float(node)))
    return operands[-1]


def subtree_end(program: Sequence[Node], start: int) -> int:
    """
    返回以 start 为根的子树结束位置（不含）| End index (exclusive) of the subtree rooted at start
    """
    pending = 1
    end = start
    while pending > 0:
        node = program[end]
        pending += PRIMITIVES[node].arity - 1 if is_function(node) else -1
        end += 1
    return end


def program_depth(program: Sequence[Node]) -> int:
    # 叶子深度为 1 | A lone leaf has depth 1
    depth = 0
    open_slots: List[int] = []
    for node in program:
        depth = max(depth, len(open_slots) + 1)
        if is_function(node):
            open_slots.append(PRIMITIVES[node].arity)
            continue
        while open_slots:
            open_slots[-1] -= 1
            if open_slots[-1] > 0:
                break
            open_slots.pop()
    return depth


def to_expression(program: Sequence[Node]) -> Expression:
    """
    把受保护程序转换为普通运算的表达式。受保护运算在奇异点附近与普通运算不同，
    因此转换后的表达式在这些点上可能得到 NaN 或 ±inf。

    Convert a protected program into an expression over plain operators. The
    protected operators differ from the plain ones near their singular points,
    so the converted expression may evaluate to NaN or ±inf there.
    """
    def build(index: int) -> Tuple[Expression, int]:
        node = program[index]
        if not is_function(node):
            if isinstance(node, int):
                return var(node + 1), index + 1
            return Expression.constant(float(node)), index + 1
        primitive = PRIMITIVES[node]
        children = []
        index += 1
        for _ in range(primitive.arity):
            child, index = build(index)
            children.append(child)
        return primitive.build(*children), index

    expression, end = build(0)
    if end != len(program):
        raise ValueError(f"Program has {len(program) - end} trailing nodes")
    return expression


def program_string(program: Sequence[Node]) -> str:
    parts = []
    for node in program:
        if is_function(node):
            parts.append(node)
        elif isinstance(node, int):
            parts.append(f"x{node + 1}")
        else:
            parts.append(f"{node:.4g}")
    return " ".join(parts)
