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
前缀序列与中缀字符串的相互转换。

Conversion between expression trees, prefix token-id sequences and infix text.
"""

from typing import List, Sequence

from app.symbolic import tokens
from app.symbolic.expression import Expression, NodeKind
from app.utils.exceptions import MalformedExpressionError

_INFIX_SYMBOLS = {tokens.ADD: "+", tokens.MUL: "*", tokens.DIV: "/", tokens.POW: "^"}


def node_token(node: Expression) -> int:
    # 实数常数在机器形式中以占位符表示 | Real constants appear as placeholders in the machine form
    if node.kind is NodeKind.constant:
        return tokens.PLACEHOLDER
    return node.token


def to_prefix(expr: Expression) -> List[int]:
    """
    先序遍历得到 token id 序列，不包含 sos/eos。

    Pre-order token ids without sos/eos framing.

    :param expr: 表达式 | Expression
    :return: token id 列表 | List of token ids
    """
    return [node_token(node) for node in expr.walk()]


def parse_prefix(sequence: Sequence[int]) -> Expression:
    """
    将前缀 token 序列解析为表达式，必须恰好消耗整个序列。

    Parse a prefix token sequence into an expression, consuming the full sequence.

    :param sequence: token id 序列 | Token id sequence
    :return: 表达式 | Expression
    :raises MalformedExpressionError: 未知 id、元数不足或多余 token | Unknown id, arity underflow or trailing tokens
    """
    sequence = [int(token) for token in sequence]
    if not sequence:
        raise MalformedExpressionError("Empty prefix sequence.")

    # 逆序扫描，用栈拼装子树 | Scan right-to-left and assemble subtrees on a stack
    stack: List[Expression] = []
    for position in range(len(sequence) - 1, -1, -1):
        token = sequence[position]
        try:
            kind = tokens.token_kind(token)
        except KeyError:
            raise MalformedExpressionError(f"Unknown token id {token} at position {position}.")

        if kind in (tokens.TokenKind.padding, tokens.TokenKind.sos, tokens.TokenKind.eos):
            raise MalformedExpressionError(f"Framing token {token} inside expression at position {position}.")
        if kind is tokens.TokenKind.variable:
            stack.append(Expression(NodeKind.variable, token=token))
        elif kind is tokens.TokenKind.placeholder:
            stack.append(Expression.placeholder())
        elif kind is tokens.TokenKind.integer_literal:
            stack.append(Expression(NodeKind.integer, token=token))
        else:
            needed = tokens.arity(token)
            if len(stack) < needed:
                raise MalformedExpressionError(
                    f"Operator {tokens.symbol(token)} at position {position} is missing operands.")
            children = [stack.pop() for _ in range(needed)]
            stack.append(Expression.operator(token, *children))

    if len(stack) != 1:
        raise MalformedExpressionError(f"Prefix sequence leaves {len(stack)} trees instead of one.")
    return stack[0]


def to_infix_string(expr: Expression) -> str:
    """
    完全加括号的中缀字符串，占位符显示为 C。

    Fully parenthesized infix rendering; placeholders render as C.
    """
    if expr.kind is NodeKind.variable:
        return tokens.symbol(expr.token)
    if expr.kind is NodeKind.placeholder:
        return "C"
    if expr.kind is NodeKind.integer:
        return str(expr.int_value)
    if expr.kind is NodeKind.constant:
        return format(expr.value, ".6g")
    if tokens.arity(expr.token) == 1:
        return f"{tokens.symbol(expr.token)}({to_infix_string(expr.children[0])})"
    left, right = (to_infix_string(child) for child in expr.children)
    return f"({left} {_INFIX_SYMBOLS[expr.token]} {right})"


def is_valid_prefix(sequence: Sequence[int]) -> bool:
    """
    元数记账：(arity - 1) 的前缀和恰好在最后一个 token 处首次达到 -1。

    Arity bookkeeping: the running sum of (arity - 1) first reaches -1 exactly at the final token.
    """
    running = 0
    for position, token in enumerate(sequence):
        if int(token) in (tokens.PAD, tokens.SOS, tokens.EOS):
            return False
        try:
            running += tokens.arity(int(token)) - 1
        except KeyError:
            return False
        if running == -1:
            return position == len(sequence) - 1
    return False
