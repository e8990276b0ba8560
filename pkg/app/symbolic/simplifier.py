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
有界的重写规则集，迭代到不动点为止。

Bounded rewrite-rule simplifier applied bottom-up until a fixed point:

- integer constant folding (only when the result is a vocabulary integer) and
  real-constant folding;
- identities x+0, x·1, x·0, x/1, 0/x, x/x, Pow(x, 1), Pow(x, 0);
- like-term collection in sums (covers x - x and double negation);
- flattening of nested + and × with a canonical operand order.

x/x -> 1, x·0 -> 0 and 0/x -> 0 are applied symbolically, as a computer algebra
system would, even where the original expression is singular. Subtrees that
contain placeholders are never merged with each other, because every
placeholder is an independent parameter.
"""

import math
from typing import Dict, List, Optional, Tuple

import numpy as np

from app.symbolic import tokens
from app.symbolic.evaluator import UNARY_FUNCTIONS
from app.symbolic.expression import Expression, NodeKind
from app.symbolic.prefix import to_infix_string

MAX_PASSES = 64


def simplify(expr: Expression) -> Expression:
    """
    化简表达式直到不再变化 | Simplify until nothing changes

    :param expr: 表达式 | Expression
    :return: 化简后的表达式 | Simplified expression
    """
    current = expr
    for _ in range(MAX_PASSES):
        simplified = _simplify_node(current)
        if simplified == current:
            return simplified
        current = simplified
    return current


def _simplify_node(node: Expression) -> Expression:
    if node.is_leaf:
        return node
    children = tuple(_simplify_node(child) for child in node.children)
    if node.token == tokens.ADD:
        return _canonical_sum(_flatten(tokens.ADD, children))
    if node.token == tokens.MUL:
        return _canonical_product(_flatten(tokens.MUL, children))
    if node.token == tokens.DIV:
        return _simplify_div(*children)
    if node.token == tokens.POW:
        return _simplify_pow(*children)
    return _simplify_unary(node.token, children[0])


def _flatten(token: int, children: Tuple[Expression, ...]) -> List[Expression]:
    flat: List[Expression] = []
    for child in children:
        if child.kind is NodeKind.operator and child.token == token:
            flat.extend(_flatten(token, child.children))
        else:
            flat.append(child)
    return flat


def _has_placeholder(expr: Expression) -> bool:
    return any(node.kind is NodeKind.placeholder for node in expr.walk())


def _is_numeric(expr: Expression) -> bool:
    return expr.kind in (NodeKind.integer, NodeKind.constant)


def _numeric_value(expr: Expression) -> float:
    return float(expr.int_value) if expr.kind is NodeKind.integer else expr.value


def _in_vocabulary(value: int) -> bool:
    return tokens.INTEGER_MIN <= value <= tokens.INTEGER_MAX


def _order_key(expr: Expression) -> Tuple[int, str]:
    # 数值项排在最后，其余按中缀字符串排序 | Numeric terms last, the rest by infix text
    return (1 if _is_numeric(expr) else 0, to_infix_string(expr))


def _chain(token: int, operands: List[Expression]) -> Expression:
    result = operands[0]
    for operand in operands[1:]:
        result = Expression.operator(token, result, operand)
    return result


def _fold_real(value: float) -> Optional[Expression]:
    return Expression.constant(value) if math.isfinite(value) else None


def _canonical_product(factors: List[Expression]) -> Expression:
    if any(factor.is_integer(0) for factor in factors):
        return Expression.integer(0)

    integers = [factor for factor in factors if factor.kind is NodeKind.integer]
    reals = [factor for factor in factors if factor.kind is NodeKind.constant]
    others = [factor for factor in factors if not _is_numeric(factor)]

    coefficients: List[Expression] = []
    if integers:
        product = math.prod(factor.int_value for factor in integers)
        if _in_vocabulary(product):
            if product != 1 or not (others or reals):
                coefficients.append(Expression.integer(product))
        else:
            coefficients.extend(sorted(integers, key=_order_key))
    if reals:
        folded = _fold_real(math.prod(factor.value for factor in reals))
        coefficients.extend([folded] if folded is not None else reals)

    operands = coefficients + sorted(others, key=_order_key)
    if not operands:
        return Expression.integer(1)
    return _chain(tokens.MUL, operands)


def _split_coefficient(term: Expression) -> Tuple[int, Optional[Expression]]:
    """
    把乘积项拆成整数系数和剩余部分 | Split a product term into integer coefficient and rest
    """
    factors = _flatten(tokens.MUL, (term,))
    coefficient = 1
    rest = []
    for factor in factors:
        if factor.kind is NodeKind.integer:
            coefficient *= factor.int_value
        else:
            rest.append(factor)
    if not rest:
        return coefficient, None
    return coefficient, _canonical_product(rest)


def _canonical_sum(terms: List[Expression]) -> Expression:
    integer_terms = [term for term in terms if term.kind is NodeKind.integer]
    real_terms = [term for term in terms if term.kind is NodeKind.constant]
    symbolic_terms = [term for term in terms if not _is_numeric(term)]

    # 合并同类项 | Collect like terms
    groups: Dict[Expression, List[Tuple[int, Expression]]] = {}
    opaque: List[Expression] = []
    for term in symbolic_terms:
        coefficient, rest = _split_coefficient(term)
        if rest is None or _has_placeholder(rest):
            opaque.append(term)
            continue
        groups.setdefault(rest, []).append((coefficient, term))

    operands: List[Expression] = list(opaque)
    for rest, members in groups.items():
        total = sum(coefficient for coefficient, _ in members)
        if len(members) == 1:
            operands.append(members[0][1])
        elif total == 0:
            continue
        elif total == 1:
            operands.append(rest)
        elif _in_vocabulary(total):
            operands.append(_canonical_product([Expression.integer(total), rest]))
        else:
            operands.extend(term for _, term in members)

    if integer_terms:
        total = sum(term.int_value for term in integer_terms)
        if _in_vocabulary(total):
            if total != 0:
                operands.append(Expression.integer(total))
        else:
            operands.extend(integer_terms)
    if real_terms:
        folded = _fold_real(math.fsum(term.value for term in real_terms))
        operands.extend([folded] if folded is not None else real_terms)

    if not operands:
        return Expression.integer(0)
    return _chain(tokens.ADD, sorted(operands, key=_order_key))


def _simplify_div(numerator: Expression, denominator: Expression) -> Expression:
    if denominator.is_integer(1):
        return numerator
    if numerator.is_integer(0):
        return Expression.integer(0)
    if numerator == denominator and not _has_placeholder(numerator):
        return Expression.integer(1)
    if numerator.kind is NodeKind.integer and denominator.kind is NodeKind.integer:
        a, b = numerator.int_value, denominator.int_value
        if b != 0 and a % b == 0 and _in_vocabulary(a // b):
            return Expression.integer(a // b)
    elif _is_numeric(numerator) and _is_numeric(denominator):
        b = _numeric_value(denominator)
        if b != 0:
            folded = _fold_real(_numeric_value(numerator) / b)
            if folded is not None:
                return folded
    return Expression.operator(tokens.DIV, numerator, denominator)


def _simplify_pow(base: Expression, exponent: Expression) -> Expression:
    if exponent.is_integer(1):
        return base
    if exponent.is_integer(0):
        return Expression.integer(1)
    if base.kind is NodeKind.integer and exponent.kind is NodeKind.integer:
        b, e = base.int_value, exponent.int_value
        if b != 0 or e > 0:
            value = float(b) ** e
            if float(value).is_integer() and _in_vocabulary(int(value)):
                return Expression.integer(int(value))
    elif _is_numeric(base) and _is_numeric(exponent):
        with np.errstate(all="ignore"):
            value = float(np.power(_numeric_value(base), _numeric_value(exponent)))
        folded = _fold_real(value)
        if folded is not None:
            return folded
    return Expression.operator(tokens.POW, base, exponent)


def _simplify_unary(token: int, child: Expression) -> Expression:
    if child.kind is NodeKind.constant:
        with np.errstate(all="ignore"):
            value = float(UNARY_FUNCTIONS[token](np.float64(child.value)))
        folded = _fold_real(value)
        if folded is not None:
            return folded
    return Expression.operator(token, child)

