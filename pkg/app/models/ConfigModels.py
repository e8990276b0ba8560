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

import os
from typing import Any, Dict, Literal, Tuple

import yaml
from pydantic import BaseModel, ConfigDict, Field, ValidationError, field_validator, model_validator

from app.symbolic import tokens
from app.utils.exceptions import ConfigError
from config.settings import Settings

# 生成器额外支持的减法运算，会被改写为 a + (-1)·b | Generator-only subtraction, rewritten as a + (-1)·b
GENERATOR_ONLY_OPERATORS = ("sub",)

GP_FUNCTIONS = ("add", "sub", "mul", "div", "sqrt", "log", "exp", "neg", "inv", "sin", "cos")


def _check_interval(value: Tuple[float, float], name: str) -> Tuple[float, float]:
    low, high = value
    if not low < high:
        raise ValueError(f"{name} must satisfy low < high, got {value}")
    return value


# 表达式生成器配置 | Expression generator configuration
class GeneratorConfig(BaseModel):
    max_internal_nodes: int = Field(Settings.GeneratorSettings.max_internal_nodes, ge=0,
                                    description="每棵树最多的内部节点数 | Maximum internal nodes per tree")
    operator_weights: Dict[str, float] = Field(
        default_factory=lambda: dict(Settings.GeneratorSettings.operator_weights),
        description="运算符未归一化的采样权重 | Un-normalized operator sampling weights")
    leaf_variable_prob: float = Field(Settings.GeneratorSettings.leaf_variable_prob, ge=0.0, le=1.0,
                                      description="叶子为变量的概率 | Probability of a variable leaf")
    integer_leaf_set: Tuple[int, ...] = Field(Settings.GeneratorSettings.integer_leaf_set,
                                              description="整数叶子的取值集合 | Values of integer leaves")
    max_resample_attempts: int = Field(Settings.GeneratorSettings.max_resample_attempts, ge=1,
                                       description="变量顺序约束的重采样上限 | Resample budget for the variable-order constraint")
    seed: int = Field(Settings.GeneratorSettings.seed, description="随机种子 | Random seed")

    @field_validator("operator_weights")
    def check_weights(cls, value: Dict[str, float]) -> Dict[str, float]:
        known = set(tokens.OPERATOR_IDS) | set(GENERATOR_ONLY_OPERATORS)
        unknown = sorted(set(value) - known)
        if unknown:
            raise ValueError(f"Unknown operators in operator_weights: {unknown}")
        if any(weight < 0 for weight in value.values()):
            raise ValueError("Operator weights must be non-negative")
        if not any(weight > 0 for weight in value.values()):
            raise ValueError("At least one operator weight must be positive")
        return value

    @field_validator("integer_leaf_set")
    def check_integers(cls, value: Tuple[int, ...]) -> Tuple[int, ...]:
        if not value:
            raise ValueError("integer_leaf_set cannot be empty")
        outside = [item for item in value if not tokens.INTEGER_MIN <= item <= tokens.INTEGER_MAX]
        if outside:
            raise ValueError(f"Integers {outside} are outside the vocabulary range")
        return tuple(sorted(set(value)))

    @model_validator(mode="after")
    def check_pow_exponents(self) -> "GeneratorConfig":
        if self.operator_weights.get("pow", 0.0) > 0 and not self.exponent_set:
            raise ValueError("pow has positive weight but integer_leaf_set offers no exponent other than 1")
        return self

    @property
    def exponent_set(self) -> Tuple[int, ...]:
        # Pow 的指数取自整数集合去掉 1 | Pow exponents come from the integer set without 1
        return tuple(item for item in self.integer_leaf_set if item != 1)


# 训练批次配置 | Training batch specification
class BatchSpec(BaseModel):
    batch_size: int = Field(Settings.BatchSettings.batch_size, ge=1)
    max_constants: int = Field(Settings.BatchSettings.max_constants, ge=0)
    constant_range: Tuple[float, float] = Field(Settings.BatchSettings.constant_range)
    support_extrema_range: Tuple[float, float] = Field(Settings.BatchSettings.support_extrema_range)
    max_points: int = Field(Settings.BatchSettings.max_points, ge=1)
    y_abs_cap: float = Field(Settings.BatchSettings.y_abs_cap, gt=0.0)

    @field_validator("constant_range", "support_extrema_range")
    def check_ranges(cls, value, info):
        return _check_interval(value, info.field_name)


# 模型结构配置 | Model architecture configuration
class ModelConfig(BaseModel):
    hidden_dim: int = Field(Settings.ModelSettings.hidden_dim, ge=1)
    num_heads: int = Field(Settings.ModelSettings.num_heads, ge=1)
    num_isab: int = Field(Settings.ModelSettings.num_isab, ge=1)
    inducing_points: int = Field(Settings.ModelSettings.inducing_points, ge=1)
    pma_seeds: int = Field(Settings.ModelSettings.pma_seeds, ge=1)
    decoder_layers: int = Field(Settings.ModelSettings.decoder_layers, ge=1)
    vocab_size: int = Field(Settings.ModelSettings.vocab_size)
    max_target_len: int = Field(Settings.ModelSettings.max_target_len, ge=2)
    dim_x: int = Field(Settings.ModelSettings.dim_x, ge=1, le=tokens.MAX_VARIABLES)
    dim_y: int = Field(Settings.ModelSettings.dim_y, ge=1, le=1)

    @field_validator("vocab_size")
    def check_vocab(cls, value: int) -> int:
        if value != tokens.VOCAB_SIZE:
            raise ValueError(f"vocab_size must be {tokens.VOCAB_SIZE}, got {value}")
        return value

    @model_validator(mode="after")
    def check_heads(self) -> "ModelConfig":
        if self.hidden_dim % self.num_heads:
            raise ValueError(f"hidden_dim={self.hidden_dim} is not divisible by num_heads={self.num_heads}")
        return self

    @property
    def input_feature_dim(self) -> int:
        # 每个标量 16 位 | 16 bits per scalar
        return (self.dim_x + self.dim_y) * 16


# 优化器与训练循环配置 | Optimizer and training-loop configuration
class AdamConfig(BaseModel):
    learning_rate: float = Field(Settings.TrainingSettings.learning_rate, gt=0.0)
    beta1: float = Field(Settings.TrainingSettings.beta1, ge=0.0, lt=1.0)
    beta2: float = Field(Settings.TrainingSettings.beta2, ge=0.0, lt=1.0)
    eps: float = Field(Settings.TrainingSettings.eps, gt=0.0)
    log_interval: int = Field(Settings.TrainingSettings.log_interval, ge=1)
    eval_interval: int = Field(Settings.TrainingSettings.eval_interval, ge=1)
    validation_batches: int = Field(Settings.TrainingSettings.validation_batches, ge=0)
    prefetch_batches: int = Field(Settings.TrainingSettings.prefetch_batches, ge=1)
    early_stopping: bool = Field(Settings.TrainingSettings.early_stopping)
    precision: Literal["float32", "float64"] = Field(Settings.TrainingSettings.precision)
    seed: int = Field(Settings.GeneratorSettings.seed)


class BfgsConfig(BaseModel):
    max_iterations: int = Field(Settings.BfgsSettings.max_iterations, ge=1)
    gradient_tolerance: float = Field(Settings.BfgsSettings.gradient_tolerance, gt=0.0)
    wolfe_c1: float = Field(Settings.BfgsSettings.wolfe_c1)
    wolfe_c2: float = Field(Settings.BfgsSettings.wolfe_c2)
    max_line_search_steps: int = Field(Settings.BfgsSettings.max_line_search_steps, ge=1)

    @model_validator(mode="after")
    def check_wolfe(self) -> "BfgsConfig":
        if not 0.0 < self.wolfe_c1 < self.wolfe_c2 < 1.0:
            raise ValueError(f"Wolfe constants must satisfy 0 < c1 < c2 < 1, got c1={self.wolfe_c1}, c2={self.wolfe_c2}")
        return self


class InferenceConfig(BaseModel):
    beam_size: int = Field(Settings.InferenceSettings.beam_size, ge=1)
    bfgs_restarts: int = Field(Settings.InferenceSettings.bfgs_restarts, ge=1)
    token_penalty: float = Field(Settings.InferenceSettings.token_penalty, ge=0.0)
    max_decode_len: int = Field(Settings.InferenceSettings.max_decode_len, ge=2)
    restart_init_range: Tuple[float, float] = Field(Settings.InferenceSettings.restart_init_range)
    bfgs: BfgsConfig = Field(default_factory=BfgsConfig)
    seed: int = Field(Settings.GeneratorSettings.seed)

    @field_validator("restart_init_range")
    def check_range(cls, value):
        return _check_interval(value, "restart_init_range")


class MetricConfig(BaseModel):
    atol: float = Field(Settings.MetricSettings.atol, gt=0.0)
    rtol: float = Field(Settings.MetricSettings.rtol, gt=0.0)
    point_pass_fraction: float = Field(Settings.MetricSettings.point_pass_fraction, gt=0.0, le=1.0)
    r2_threshold: float = Field(Settings.MetricSettings.r2_threshold, gt=0.0, le=1.0)
    eval_points: int = Field(Settings.MetricSettings.eval_points, ge=1)
    test_points: int = Field(Settings.MetricSettings.test_points, ge=1)


class GpConfig(BaseModel):
    # 接受 1..2^17，小种群用于测试 | Accepts 1..2^17, small populations are used in tests
    population_size: int = Field(Settings.GpSettings.population_size, ge=1, le=2 ** 17)
    tournament_size: int = Field(Settings.GpSettings.tournament_size, ge=1)
    mutation_prob: float = Field(Settings.GpSettings.mutation_prob, ge=0.0, le=1.0)
    crossover_prob: float = Field(Settings.GpSettings.crossover_prob, ge=0.0, le=1.0)
    constant_range: Tuple[float, float] = Field(Settings.GpSettings.constant_range)
    generations: int = Field(Settings.GpSettings.generations, ge=0)
    function_set: Tuple[str, ...] = Field(Settings.GpSettings.function_set)
    max_depth: int = Field(Settings.GpSettings.max_depth, ge=1)
    init_depth: Tuple[int, int] = Field(Settings.GpSettings.init_depth)
    parsimony_coefficient: float = Field(Settings.GpSettings.parsimony_coefficient, ge=0.0)
    metric: Literal["mae", "mse"] = Field(Settings.GpSettings.metric)
    seed: int = Field(Settings.GeneratorSettings.seed)

    @field_validator("constant_range")
    def check_range(cls, value):
        return _check_interval(value, "constant_range")

    @field_validator("function_set")
    def check_functions(cls, value: Tuple[str, ...]) -> Tuple[str, ...]:
        unknown = sorted(set(value) - set(GP_FUNCTIONS))
        if unknown:
            raise ValueError(f"Unknown GP functions: {unknown}")
        if not value:
            raise ValueError("function_set cannot be empty")
        return tuple(value)

    @model_validator(mode="after")
    def check_consistency(self) -> "GpConfig":
        if self.mutation_prob + self.crossover_prob > 1.0:
            raise ValueError("mutation_prob + crossover_prob must not exceed 1")
        if self.tournament_size > self.population_size:
            raise ValueError("tournament_size cannot exceed population_size")
        low, high = self.init_depth
        if not 1 <= low <= high <= self.max_depth:
            raise ValueError(f"init_depth {self.init_depth} must satisfy 1 <= low <= high <= max_depth")
        return self


# 运行配置：YAML 文件中每个配置模型对应一节 | Run configuration: one YAML section per config model
class RunConfig(BaseModel):
    generator: GeneratorConfig = Field(default_factory=GeneratorConfig)
    batch: BatchSpec = Field(default_factory=BatchSpec)
    model: ModelConfig = Field(default_factory=ModelConfig)
    training: AdamConfig = Field(default_factory=AdamConfig)
    inference: InferenceConfig = Field(default_factory=InferenceConfig)
    metric: MetricConfig = Field(default_factory=MetricConfig)
    gp: GpConfig = Field(default_factory=GpConfig)

    model_config = ConfigDict(protected_namespaces=())

    @classmethod
    def from_yaml(cls, path: str) -> "RunConfig":
        """
        从 YAML 文件加载配置，缺失的键使用默认值。

        Load a configuration from a YAML file; missing keys fall back to defaults.

        :param path: YAML 文件路径 | YAML file path
        :return: RunConfig 实例 | RunConfig instance
        :raises ConfigError: 文件不存在、YAML 无效或取值不合法 | Missing file, invalid YAML or invalid values
        """
        if not os.path.isfile(path):
            raise ConfigError(f"Config file not found: {path}")
        try:
            with open(path, "r", encoding="utf-8") as handle:
                document = yaml.safe_load(handle) or {}
        except yaml.YAMLError as error:
            raise ConfigError(f"Invalid YAML in {path}: {error}")
        if not isinstance(document, dict):
            raise ConfigError(f"Config file {path} must contain a mapping at the top level")
        return cls.from_mapping(document)

    @classmethod
    def from_mapping(cls, document: Dict[str, Any]) -> "RunConfig":
        unknown = sorted(set(document) - set(cls.model_fields))
        if unknown:
            raise ConfigError(f"Unknown config sections: {unknown}")
        try:
            return cls.model_validate(document)
        except ValidationError as error:
            raise ConfigError(f"Invalid configuration: {error}")

    def with_seed(self, seed: int) -> "RunConfig":
        """
        把同一个种子写入所有带种子的配置节 | Propagate one seed into every seeded section
        """
        return self.model_copy(update={
            "generator": self.generator.model_copy(update={"seed": seed}),
            "training": self.training.model_copy(update={"seed": seed}),
            "inference": self.inference.model_copy(update={"seed": seed}),
            "gp": self.gp.model_copy(update={"seed": seed}),
        })

    def snapshot(self) -> Dict[str, Any]:
        return self.model_dump(mode="json")
