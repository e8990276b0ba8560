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
把 sympy 可解析的中缀公式转换为 Expression，内置的基准方程文件使用这种格式。

Convert sympy-parsable infix formulas, the format of the bundled benchmark
files, into Expression trees. π and e become real-constant leaves.
"""

from typing import Dict, List

import sympy as sp
from sympy.parsing.sympy_parser import convert_xor, parse_expr, standard_transformations

from app.symbolic import tokens
from app.symbolic.expression import Expression, add, div, mul, power, unary, var
from app.utils.exceptions import MalformedExpressionError

_SYMBOLS: Dict[str, sp.Symbol] = {f"x{index}": sp.Symbol(f"x{index}") for index in range(1, tokens.MAX_VARIABLES + 1)}

_FUNCTIONS = {
    sp.exp: "exp",
    sp.log: "ln",
    sp.sin: "sin",
    sp.cos: "cos",
    sp.tan: "tan",
    sp.asin: "arcsin",
    sp.acos: "arccos",
    sp.atan: "arctan",
    sp.sinh: "sinh",
    sp.cosh: "cosh",
    sp.tanh: "tanh",
    sp.coth: "coth",
}

_TRANSFORMATIONS = standard_transformations + (convert_xor,)


def parse_infix(text: str) -> Expression:
    """
    解析中缀字符串，例如 "x1*sin(x2)/2" 或 "exp(-x1^2/2)/sqrt(2*pi)"。

    Parse an infix formula such as "x1*sin(x2)/2" or "exp(-x1^2/2)/sqrt(2*pi)".

    :param text: 中缀字符串 | Infix text
    :return: 表达式 | Expression
    :raises MalformedExpressionError: 无法解析或包含未知符号 | Unparsable text or unknown symbols
    """
    try:
        parsed = parse_expr(text, local_dict=dict(_SYMBOLS), transformations=_TRANSFORMATIONS, evaluate=True)
    except (SyntaxError, TypeError, ValueError, sp.SympifyError) as error:
        raise MalformedExpressionError(f"Cannot parse formula {text!r}: {error}")
    return from_sympy(parsed)


def from_sympy(node: sp.Basic) -> Expression:
    """
    sympy 表达式到 Expression 的结构转换 | Structural conversion from sympy to Expression
    """
    if isinstance(node, sp.Symbol):
        if node.name not in _SYMBOLS:
            raise MalformedExpressionError(f"Unknown variable {node.name!r}; expected x1..x{tokens.MAX_VARIABLES}.")
        return var(int(node.name[1:]))
    if node.is_Integer:
        return Expression.number(int(node))
    if node.is_Rational:
        return _rational(node)
    if node.is_Number or node.is_NumberSymbol:
        return Expression.constant(float(node))
    if isinstance(node, sp.Add):
        return _fold(add, [from_sympy(term) for term in node.args])
    if isinstance(node, sp.Mul):
        return _product(node)
    if isinstance(node, sp.Pow):
        return _power(node.base, node.exp)
    for function, name in _FUNCTIONS.items():
        if isinstance(node, function):
            if len(node.args) != 1:
                raise MalformedExpressionError(f"{name} takes a single argument, got {len(node.args)}.")
            return unary(name, from_sympy(node.args[0]))
    raise MalformedExpressionError(f"Unsupported sympy node {type(node).__name__}: {node}")


def _in_vocabulary(value: int) -> bool:
    return tokens.INTEGER_MIN <= value <= tokens.INTEGER_MAX


def _rational(node: sp.Rational) -> Expression:
    numerator, denominator = int(node.p), int(node.q)
    if _in_vocabulary(numerator) and _in_vocabulary(denominator):
        return div(Expression.integer(numerator), Expression.integer(denominator))
    return Expression.constant(float(node))


def _fold(combine, operands: List[Expression]) -> Expression:
    result = operands[0]
    for operand in operands[1:]:
        result = combine(result, operand)
    return result


def _product(node: sp.Mul) -> Expression:
    # 负指数因子与有理系数的分母进入分母 | Negative-power factors and rational denominators go below the line
    numerator: List[Expression] = []
    denominator: List[Expression] = []
    for factor in node.args:
        if factor.is_Rational and not factor.is_Integer:
            if factor.p != 1:
                numerator.append(Expression.number(int(factor.p)))
            denominator.append(Expression.number(int(factor.q)))
        elif isinstance(factor, sp.Pow) and factor.exp.is_Rational and factor.exp < 0:
            denominator.append(_power(factor.base, -factor.exp))
        else:
            numerator.append(from_sympy(factor))
    top = _fold(mul, numerator) if numerator else Expression.integer(1)
    if not denominator:
        return top
    return div(top, _fold(mul, denominator))


def _power(base: sp.Basic, exponent: sp.Basic) -> Expression:
    if exponent == sp.Rational(1, 2):
        return unary("sqrt", from_sympy(base))
    if exponent.is_Rational and exponent < 0:
        return div(Expression.integer(1), _power(base, -exponent))
    if exponent == 1:
        return from_sympy(base)
    if exponent.is_Integer and _in_vocabulary(int(exponent)):
        return power(from_sympy(base), Expression.integer(int(exponent)))
    return power(from_sympy(base), from_sympy(exponent))
