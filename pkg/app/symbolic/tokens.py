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
词表：符号与整数 id 的一一对应关系。

Vocabulary: the one-to-one mapping between symbols and integer token ids.
"""

import enum
from typing import Dict

PAD = 0
SOS = 1
EOS = 2
X1 = 3
X2 = 4
X3 = 5
PLACEHOLDER = 6
ARCCOS = 7
ADD = 8
ARCSIN = 9
ARCTAN = 10
COS = 11
COSH = 12
COTH = 13
DIV = 14
EXP = 15
LN = 16
MUL = 17
POW = 18
SIN = 19
SINH = 20
SQRT = 21
TAN = 22
TANH = 23

# 整数 -3..5 对应 id 24..32 | Integers -3..5 map to ids 24..32
INTEGER_MIN = -3
INTEGER_MAX = 5
INTEGER_OFFSET = 27

VOCAB_SIZE = 33
MAX_VARIABLES = 3


class TokenKind(str, enum.Enum):
    padding = "padding"
    sos = "sos"
    eos = "eos"
    variable = "variable"
    placeholder = "placeholder"
    unary_op = "unary-op"
    binary_op = "binary-op"
    integer_literal = "integer-literal"


UNARY_OPS: Dict[int, str] = {
    ARCCOS: "arccos", ARCSIN: "arcsin", ARCTAN: "arctan", COS: "cos", COSH: "cosh", COTH: "coth",
    EXP: "exp", LN: "ln", SIN: "sin", SINH: "sinh", SQRT: "sqrt", TAN: "tan", TANH: "tanh",
}

BINARY_OPS: Dict[int, str] = {ADD: "add", DIV: "div", MUL: "mul", POW: "pow"}

OPERATOR_IDS: Dict[str, int] = {name: token for token, name in {**UNARY_OPS, **BINARY_OPS}.items()}

SYMBOLS: Dict[int, str] = {
    PAD: "pad", SOS: "sos", EOS: "eos", X1: "x1", X2: "x2", X3: "x3", PLACEHOLDER: "C",
    **UNARY_OPS, **BINARY_OPS,
    **{INTEGER_OFFSET + value: str(value) for value in range(INTEGER_MIN, INTEGER_MAX + 1)},
}


def token_kind(token: int) -> TokenKind:
    """
    返回 token 的种类 | Return the kind of a token id

    :param token: token id
    :return: TokenKind
    """
    if token == PAD:
        return TokenKind.padding
    if token == SOS:
        return TokenKind.sos
    if token == EOS:
        return TokenKind.eos
    if X1 <= token <= X3:
        return TokenKind.variable
    if token == PLACEHOLDER:
        return TokenKind.placeholder
    if token in UNARY_OPS:
        return TokenKind.unary_op
    if token in BINARY_OPS:
        return TokenKind.binary_op
    if is_integer_token(token):
        return TokenKind.integer_literal
    raise KeyError(f"Unknown token id: {token}")


def arity(token: int) -> int:
    kind = token_kind(token)
    if kind is TokenKind.binary_op:
        return 2
    if kind is TokenKind.unary_op:
        return 1
    return 0


def is_integer_token(token: int) -> bool:
    return INTEGER_OFFSET + INTEGER_MIN <= token <= INTEGER_OFFSET + INTEGER_MAX


def integer_token(value: int) -> int:
    if not INTEGER_MIN <= value <= INTEGER_MAX:
        raise ValueError(f"Integer {value} is outside the vocabulary range {INTEGER_MIN}..{INTEGER_MAX}")
    return INTEGER_OFFSET + value


def integer_value(token: int) -> int:
    if not is_integer_token(token):
        raise ValueError(f"Token {token} is not an integer literal")
    return token - INTEGER_OFFSET


def variable_token(index: int) -> int:
    if not 1 <= index <= MAX_VARIABLES:
        raise ValueError(f"Variable index {index} is outside 1..{MAX_VARIABLES}")
    return X1 + index - 1


def variable_index(token: int) -> int:
    return token - X1 + 1


def symbol(token: int) -> str:
    return SYMBOLS[token]
