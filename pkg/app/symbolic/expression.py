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

import enum
import math
from dataclasses import dataclass, field
from typing import Iterator, Optional, Set, Tuple

from app.symbolic import tokens


class NodeKind(str, enum.Enum):
    operator = "operator"
    variable = "variable"
    integer = "integer"
    constant = "constant"
    placeholder = "placeholder"


@dataclass(frozen=True)
class Expression:
    """
    不可变的一元/二元表达式树。

    Immutable unary-binary expression tree. Operators and integer leaves carry
    their vocabulary token id; real constants carry a finite float and no token.
    """
    kind: NodeKind
    token: Optional[int] = None
    value: Optional[float] = None
    children: Tuple["Expression", ...] = field(default=())

    def __post_init__(self):
        if self.kind is NodeKind.operator:
            if self.token is None or tokens.token_kind(self.token) not in (
                    tokens.TokenKind.unary_op, tokens.TokenKind.binary_op):
                raise ValueError(f"Operator node needs an operator token, got {self.token}")
            if len(self.children) != tokens.arity(self.token):
                raise ValueError(
                    f"Operator {tokens.symbol(self.token)} expects {tokens.arity(self.token)} children, "
                    f"got {len(self.children)}")
            return

        if self.children:
            raise ValueError(f"Leaf node of kind {self.kind.value} cannot have children")
        if self.kind is NodeKind.variable and tokens.token_kind(self.token) is not tokens.TokenKind.variable:
            raise ValueError(f"Invalid variable token {self.token}")
        if self.kind is NodeKind.integer and not tokens.is_integer_token(self.token):
            raise ValueError(f"Invalid integer token {self.token}")
        if self.kind is NodeKind.placeholder and self.token != tokens.PLACEHOLDER:
            raise ValueError("Placeholder node must use the placeholder token")
        if self.kind is NodeKind.constant:
            if self.value is None or not math.isfinite(self.value):
                raise ValueError(f"Real constant leaves must be finite, got {self.value}")

    # 构造函数 | Constructors

    @classmethod
    def variable(cls, index: int) -> "Expression":
        return cls(NodeKind.variable, token=tokens.variable_token(index))

    @classmethod
    def integer(cls, value: int) -> "Expression":
        return cls(NodeKind.integer, token=tokens.integer_token(value))

    @classmethod
    def constant(cls, value: float) -> "Expression":
        return cls(NodeKind.constant, value=float(value))

    @classmethod
    def placeholder(cls) -> "Expression":
        return cls(NodeKind.placeholder, token=tokens.PLACEHOLDER)

    @classmethod
    def operator(cls, token: int, *children: "Expression") -> "Expression":
        return cls(NodeKind.operator, token=token, children=tuple(children))

    @classmethod
    def number(cls, value: float) -> "Expression":
        """
        整数落在词表范围内时生成整数叶子，否则生成实数常数叶子。

        Integer leaf when the value is a vocabulary integer, real constant otherwise.
        """
        if float(value).is_integer() and tokens.INTEGER_MIN <= value <= tokens.INTEGER_MAX:
            return cls.integer(int(value))
        return cls.constant(value)

    # 属性 | Properties

    @property
    def is_leaf(self) -> bool:
        return self.kind is not NodeKind.operator

    @property
    def int_value(self) -> int:
        return tokens.integer_value(self.token)

    @property
    def variable_index(self) -> int:
        return tokens.variable_index(self.token)

    def is_integer(self, value: Optional[int] = None) -> bool:
        if self.kind is not NodeKind.integer:
            return False
        return value is None or self.int_value == value

    def walk(self) -> Iterator["Expression"]:
        """
        先序遍历 | Pre-order traversal
        """
        stack = [self]
        while stack:
            node = stack.pop()
            yield node
            stack.extend(reversed(node.children))

    def node_count(self) -> int:
        return sum(1 for _ in self.walk())

    def depth(self) -> int:
        if self.is_leaf:
            return 1
        return 1 + max(child.depth() for child in self.children)

    def count_placeholders(self) -> int:
        return sum(1 for node in self.walk() if node.kind is NodeKind.placeholder)

    def count_constants(self) -> int:
        return sum(1 for node in self.walk() if node.kind is NodeKind.constant)

    def variables_used(self) -> Set[int]:
        return {node.variable_index for node in self.walk() if node.kind is NodeKind.variable}

    def __str__(self) -> str:
        from app.symbolic.prefix import to_infix_string
        return to_infix_string(self)


# 常用的构造辅助函数 | Frequently used construction helpers

def add(left: Expression, right: Expression) -> Expression:
    return Expression.operator(tokens.ADD, left, right)


def mul(left: Expression, right: Expression) -> Expression:
    return Expression.operator(tokens.MUL, left, right)


def div(left: Expression, right: Expression) -> Expression:
    return Expression.operator(tokens.DIV, left, right)


def power(base: Expression, exponent: Expression) -> Expression:
    return Expression.operator(tokens.POW, base, exponent)


def unary(name: str, child: Expression) -> Expression:
    return Expression.operator(tokens.OPERATOR_IDS[name], child)


def neg(child: Expression) -> Expression:
    return mul(Expression.integer(-1), child)


def sub(left: Expression, right: Expression) -> Expression:
    return add(left, neg(right))


def var(index: int) -> Expression:
    return Expression.variable(index)


def variable_order_ok(variables: Set[int]) -> bool:
    """
    变量顺序约束：出现 x2 则必须有 x1，出现 x3 则必须有 x1 和 x2。

    Variable-order constraint: x2 requires x1, x3 requires x1 and x2.
    """
    return variables == set(range(1, len(variables) + 1))
