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

from dataclasses import dataclass
from typing import Iterator, Sequence

from app.symbolic import tokens
from app.symbolic.expression import Expression, NodeKind, add, mul
from app.symbolic.prefix import to_prefix
from app.utils.exceptions import ArityMismatchError


@dataclass(frozen=True)
class Skeleton:
    """
    骨架：所有实数常数都被占位符 C 替换后的表达式。

    Skeleton: an expression whose real constants were all replaced by the placeholder C.
    """
    expr: Expression
    placeholder_count: int

    def __post_init__(self):
        if self.expr.count_constants():
            raise ValueError("Skeletons cannot contain real-constant leaves")
        if self.placeholder_count != self.expr.count_placeholders():
            raise ValueError(
                f"placeholder_count={self.placeholder_count} but the expression holds "
                f"{self.expr.count_placeholders()} placeholders")

    @classmethod
    def from_expression(cls, expr: Expression) -> "Skeleton":
        return cls(expr=expr, placeholder_count=expr.count_placeholders())

    def __str__(self) -> str:
        return str(self.expr)


def skeletonize(expr: Expression) -> Skeleton:
    """
    将实数常数替换为占位符，整数叶子保持不变。

    Replace real-constant leaves by placeholders; integer leaves are vocabulary tokens and stay.

    :param expr: 表达式 | Expression
    :return: 骨架 | Skeleton
    """

    def strip(node: Expression) -> Expression:
        if node.kind is NodeKind.constant:
            return Expression.placeholder()
        if node.is_leaf:
            return node
        return Expression.operator(node.token, *(strip(child) for child in node.children))

    return Skeleton.from_expression(strip(expr))


def place_constants(skel: Skeleton) -> Skeleton:
    """
    参数化骨架：每个一元运算 u(.) 变为 C*u(.)，每个变量 v 变为 C*v + C，已有占位符保持不变。

    Parameterize a skeleton: every unary operator u(.) becomes C*u(.), every
    variable v becomes C*v + C, existing placeholders stay. Pow is binary and
    only its children are rewritten.

    :param skel: 骨架 | Skeleton
    :return: 参数化后的骨架 | Parameterized skeleton
    """

    def place(node: Expression) -> Expression:
        if node.kind is NodeKind.variable:
            return add(mul(Expression.placeholder(), node), Expression.placeholder())
        if node.is_leaf:
            return node
        children = tuple(place(child) for child in node.children)
        rebuilt = Expression.operator(node.token, *children)
        if tokens.arity(node.token) == 1:
            return mul(Expression.placeholder(), rebuilt)
        return rebuilt

    return Skeleton.from_expression(place(skel.expr))


def instantiate(skel: Skeleton, values: Sequence[float]) -> Expression:
    """
    按先序把数值绑定到占位符 | Bind values to placeholders in pre-order

    :param skel: 骨架 | Skeleton
    :param values: 数值序列，长度必须等于占位符数 | Values, one per placeholder
    :return: 不含占位符的表达式 | Expression without placeholders
    :raises ArityMismatchError: 数值个数不匹配 | Wrong number of values
    """
    values = [float(value) for value in values]
    if len(values) != skel.placeholder_count:
        raise ArityMismatchError(
            f"Skeleton has {skel.placeholder_count} placeholders but {len(values)} values were given.")
    stream: Iterator[float] = iter(values)

    # 先序：父节点先于子节点，左子树先于右子树 | Pre-order: parent first, then left, then right
    def bind(node: Expression) -> Expression:
        if node.kind is NodeKind.placeholder:
            return Expression.constant(next(stream))
        if node.is_leaf:
            return node
        return Expression.operator(node.token, *[bind(child) for child in node.children])

    return bind(skel.expr)


def expr_length(skel: Skeleton) -> int:
    return len(to_prefix(skel.expr))
