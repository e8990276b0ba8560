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
随机一元/二元表达式树的生成器。

Random unary-binary expression tree generator. Internal nodes are placed one
at a time into a uniformly chosen empty slot, so every tree shape with the
drawn number of operators can appear.
"""

from dataclasses import dataclass, field
from typing import Dict, List, Optional

import numpy as np

from app.models.ConfigModels import GeneratorConfig
from app.symbolic import tokens
from app.symbolic.expression import Expression, NodeKind, sub, variable_order_ok
from app.utils.logging_utils import configure_logging

logger = configure_logging(name=__name__)


@dataclass
class _Slot:
    # 可变的中间节点，生成完毕后转换为 Expression | Mutable node, converted to Expression when complete
    operator: Optional[str] = None
    leaf: Optional[Expression] = None
    children: List["_Slot"] = field(default_factory=list)

    def to_expression(self) -> Expression:
        if self.leaf is not None:
            return self.leaf
        children = [child.to_expression() for child in self.children]
        if self.operator == "sub":
            return sub(*children)
        return Expression.operator(tokens.OPERATOR_IDS[self.operator], *children)


def _operator_arity(name: str) -> int:
    return 2 if name == "sub" else tokens.arity(tokens.OPERATOR_IDS[name])


class ExpressionGenerator:
    """
    按配置中的运算符权重采样表达式树。

    Samples expression trees with operator frequencies proportional to the configured weights.
    """

    def __init__(self, config: GeneratorConfig):
        self.config = config
        names = sorted(name for name, weight in config.operator_weights.items() if weight > 0)
        weights = np.array([config.operator_weights[name] for name in names], dtype=np.float64)
        self.operator_names: List[str] = names
        self.operator_probabilities: np.ndarray = weights / weights.sum()
        self.exponents = np.array(config.exponent_set, dtype=np.int64)
        self.integers = np.array(config.integer_leaf_set, dtype=np.int64)

    def sample_operator(self, rng: np.random.Generator) -> str:
        return self.operator_names[int(rng.choice(len(self.operator_names), p=self.operator_probabilities))]

    def sample_operators(self, count: int, rng: np.random.Generator) -> List[str]:
        """
        一次采样多个运算符，用于分布检验 | Draw many operators at once, used for distribution checks
        """
        indices = rng.choice(len(self.operator_names), size=count, p=self.operator_probabilities)
        return [self.operator_names[index] for index in indices]

    def expected_frequencies(self) -> Dict[str, float]:
        return dict(zip(self.operator_names, self.operator_probabilities.tolist()))

    def sample_leaf(self, rng: np.random.Generator) -> Expression:
        if rng.random() < self.config.leaf_variable_prob:
            return Expression.variable(int(rng.integers(1, tokens.MAX_VARIABLES + 1)))
        return Expression.integer(int(rng.choice(self.integers)))

    def _grow(self, rng: np.random.Generator) -> Expression:
        maximum = self.config.max_internal_nodes
        internal = int(rng.integers(1, maximum + 1)) if maximum > 0 else 0

        root = _Slot()
        empty: List[_Slot] = [root]
        for _ in range(internal):
            slot = empty.pop(int(rng.integers(0, len(empty))))
            slot.operator = self.sample_operator(rng)
            if slot.operator == "pow":
                # 指数直接取整数叶子 | The exponent is an integer leaf right away
                base = _Slot()
                exponent = _Slot(leaf=Expression.integer(int(rng.choice(self.exponents))))
                slot.children = [base, exponent]
                empty.append(base)
            else:
                slot.children = [_Slot() for _ in range(_operator_arity(slot.operator))]
                empty.extend(slot.children)
        for slot in empty:
            slot.leaf = self.sample_leaf(rng)
        return root.to_expression()

    def sample_tree(self, rng: np.random.Generator) -> Expression:
        """
        采样一棵满足变量顺序约束的树 | Sample one tree respecting the variable-order constraint

        :param rng: numpy 随机数生成器 | numpy random generator
        :return: 表达式 | Expression
        """
        tree = self._grow(rng)
        for _ in range(self.config.max_resample_attempts - 1):
            if variable_order_ok(tree.variables_used()):
                return tree
            tree = self._grow(rng)
        if variable_order_ok(tree.variables_used()):
            return tree
        logger.debug(f"Relabelling variables of {tree} after {self.config.max_resample_attempts} attempts")
        return relabel_variables(tree)


def relabel_variables(expr: Expression) -> Expression:
    """
    将出现的变量按下标顺序重新编号为 x1..xk | Renumber the used variables to x1..xk, keeping their order
    """
    mapping = {old: new for new, old in enumerate(sorted(expr.variables_used()), start=1)}

    def rename(node: Expression) -> Expression:
        if node.kind is NodeKind.variable:
            return Expression.variable(mapping[node.variable_index])
        if node.is_leaf:
            return node
        return Expression.operator(node.token, *(rename(child) for child in node.children))

    return rename(expr)
