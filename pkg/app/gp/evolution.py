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

import time
from dataclasses import dataclass, field
from typing import Dict, List, Optional, Sequence, Tuple

import numpy as np

from app.gp.primitives import (PRIMITIVES, Program, execute, is_function, program_depth, program_string,
                               subtree_end, to_expression)
from app.models.ConfigModels import GpConfig
from app.models.RecordModels import EquationRecord
from app.symbolic.expression import Expression
from app.utils.concurrency import ordered_map
from app.utils.exceptions import MalformedDataError
from app.utils.file_utils import FileUtils
from app.utils.logging_utils import configure_logging

logger = configure_logging(name=__name__)

TRACE_COLUMNS = ("generation", "best_fitness", "mean_fitness")

# 原始适应度不超过该值即视为精确拟合并停止 | Stop once the raw fitness reaches this value
STOPPING_FITNESS = 0.0


@dataclass
class Individual:
    program: Program
    # 原始误差，越小越好 | Raw error, lower is better
    fitness: float = float("inf")

    @property
    def length(self) -> int:
        return len(self.program)

    @property
    def depth(self) -> int:
        return program_depth(self.program)

    def penalized(self, parsimony_coefficient: float) -> float:
        return self.fitness + parsimony_coefficient * self.length

    def __str__(self) -> str:
        return program_string(self.program)


@dataclass
class EvolutionTrace:
    rows: List[Tuple[int, float, float]] = field(default_factory=list)

    def record(self, generation: int, population: Sequence[Individual], best: Individual) -> None:
        mean = float(np.mean([individual.fitness for individual in population]))
        self.rows.append((generation, best.fitness, mean))

    def write(self, file_utils: FileUtils, file_name: str = "gp_trace.csv") -> str:
        return file_utils.write_csv(file_name, TRACE_COLUMNS, self.rows)


def _terminal(cfg: GpConfig, n_features: int, rng: np.random.Generator):
    choice = int(rng.integers(n_features + 1))
    if choice == n_features:
        return float(rng.uniform(*cfg.constant_range))
    return choice


def build_program(cfg: GpConfig, n_features: int, rng: np.random.Generator, method: Optional[str] = None,
                  depth: Optional[int] = None) -> Program:
    """
    用 grow 或 full 方法生成随机程序，深度不超过 depth。

    Build a random program with the grow or full method, no deeper than depth.
    """
    method = method or ("grow", "full")[int(rng.integers(2))]
    depth = depth or int(rng.integers(cfg.init_depth[0], cfg.init_depth[1] + 1))
    functions = cfg.function_set
    if depth == 1:
        return [_terminal(cfg, n_features, rng)]

    # 根总是函数，避免退化的单叶程序 | The root is always a function
    root = functions[int(rng.integers(len(functions)))]
    program: Program = [root]
    open_slots = [PRIMITIVES[root].arity]
    while open_slots:
        node_depth = len(open_slots) + 1
        wants_function = method == "full" or int(rng.integers(n_features + 1 + len(functions))) < len(functions)
        if node_depth < depth and wants_function:
            function = functions[int(rng.integers(len(functions)))]
            program.append(function)
            open_slots.append(PRIMITIVES[function].arity)
            continue
        program.append(_terminal(cfg, n_features, rng))
        while open_slots:
            open_slots[-1] -= 1
            if open_slots[-1] > 0:
                break
            open_slots.pop()
    return program


def init_population(cfg: GpConfig, rng: np.random.Generator, n_features: int = 1) -> List[Individual]:
    """
    ramped half-and-half 初始化：深度在 init_depth 中轮换，grow 与 full 各占一半。

    Ramped half-and-half initialisation: depths cycle through init_depth and
    the grow and full methods alternate.

    :param cfg: GP 配置 | GP configuration
    :param rng: 随机数生成器 | Random generator
    :param n_features: 输入变量数 | Number of input variables
    :return: population_size 个个体 | population_size individuals
    """
    low, high = cfg.init_depth
    depths = list(range(low, high + 1))
    population = []
    for index in range(cfg.population_size):
        method = "full" if index % 2 else "grow"
        depth = depths[(index // 2) % len(depths)]
        population.append(Individual(build_program(cfg, n_features, rng, method=method, depth=depth)))
    return population


def raw_fitness(program: Program, X: np.ndarray, Y: np.ndarray, metric: str) -> float:
    residual = execute(program, X) - Y
    if metric == "mse":
        with np.errstate(over="ignore"):
            return float(np.mean(residual ** 2))
    return float(np.mean(np.abs(residual)))


def _random_subtree(program: Program, rng: np.random.Generator) -> Tuple[int, int]:
    # 函数节点被选中的概率更高 | Functions are favoured as crossover points
    weights = np.array([0.9 if is_function(node) else 0.1 for node in program])
    start = int(rng.choice(len(program), p=weights / weights.sum()))
    return start, subtree_end(program, start)


def crossover(parent: Program, donor: Program, rng: np.random.Generator) -> Program:
    start, end = _random_subtree(parent, rng)
    donor_start, donor_end = _random_subtree(donor, rng)
    return parent[:start] + donor[donor_start:donor_end] + parent[end:]


def point_mutation(program: Program, cfg: GpConfig, n_features: int, rng: np.random.Generator) -> Program:
    """
    替换一个节点：函数换成同元数的函数，终结符换成新的终结符。

    Replace one node: a function by another of the same arity, a terminal by a fresh terminal.
    """
    mutated = list(program)
    index = int(rng.integers(len(mutated)))
    node = mutated[index]
    if is_function(node):
        same_arity = [name for name in cfg.function_set if PRIMITIVES[name].arity == PRIMITIVES[node].arity]
        if same_arity:
            mutated[index] = same_arity[int(rng.integers(len(same_arity)))]
    else:
        mutated[index] = _terminal(cfg, n_features, rng)
    return mutated


def tournament(population: Sequence[Individual], cfg: GpConfig, rng: np.random.Generator) -> Individual:
    # 不放回抽取，k 等于种群大小时总是选中最优个体 | Drawn without replacement, so k = population picks the best
    contenders = rng.choice(len(population), size=cfg.tournament_size, replace=False)
    return min((population[int(index)] for index in contenders),
               key=lambda individual: individual.penalized(cfg.parsimony_coefficient))


def _offspring(population: Sequence[Individual], cfg: GpConfig, n_features: int,
               rng: np.random.Generator) -> Program:
    parent = tournament(population, cfg, rng)
    draw = rng.uniform()
    if draw < cfg.crossover_prob:
        donor = tournament(population, cfg, rng)
        child = crossover(parent.program, donor.program, rng)
        # 超过最大深度的拼接被拒绝 | Splices deeper than max_depth are rejected
        return child if program_depth(child) <= cfg.max_depth else list(parent.program)
    if draw < cfg.crossover_prob + cfg.mutation_prob:
        return point_mutation(parent.program, cfg, n_features, rng)
    return list(parent.program)


def _evaluate(population: List[Individual], X: np.ndarray, Y: np.ndarray, cfg: GpConfig,
              workers: Optional[int]) -> None:
    fitnesses = ordered_map(lambda individual: raw_fitness(individual.program, X, Y, cfg.metric), population, workers)
    for individual, fitness in zip(population, fitnesses):
        individual.fitness = fitness


def evolve(cfg: GpConfig, X: np.ndarray, Y: np.ndarray, rng: np.random.Generator,
           workers: Optional[int] = None, trace: Optional[EvolutionTrace] = None) -> Individual:
    """
    代际进化：锦标赛选择、子树交叉、点变异或复制，保留一个精英，返回历代最优个体。
    适应度评估在个体间并行，变异操作只在主线程中消耗随机数。

    Generational evolution with tournament selection, subtree crossover, point
    mutation or reproduction and an elite of one. Returns the best individual
    ever seen. Fitness is evaluated in parallel across individuals; variation
    draws randomness on the calling thread only.

    :param cfg: GP 配置 | GP configuration
    :param X: 输入 [n, d] | Inputs [n, d]
    :param Y: 输出 [n] | Outputs [n]
    :param rng: 随机数生成器 | Random generator
    :param workers: 并行线程数 | Parallel workers
    :param trace: 可选的进化轨迹 | Optional evolution trace
    :return: 最优个体 | Best individual
    """
    X = np.asarray(X, dtype=np.float64)
    Y = np.asarray(Y, dtype=np.float64).reshape(-1)
    if X.ndim == 1:
        X = X.reshape(-1, 1)
    if X.shape[0] != Y.shape[0] or X.shape[0] == 0:
        raise MalformedDataError(f"Expected matching non-empty X and Y, got {X.shape[0]} and {Y.shape[0]} rows")
    if not (np.all(np.isfinite(X)) and np.all(np.isfinite(Y))):
        raise MalformedDataError("GP data must be finite")

    n_features = X.shape[1]
    started = time.perf_counter()
    population = init_population(cfg, rng, n_features)
    _evaluate(population, X, Y, cfg, workers)
    best = min(population, key=lambda individual: individual.fitness)
    if trace is not None:
        trace.record(0, population, best)

    for generation in range(1, cfg.generations + 1):
        if best.fitness <= STOPPING_FITNESS:
            logger.debug(f"Exact fit reached before generation {generation}")
            break
        elite = min(population, key=lambda individual: individual.fitness)
        children = [Individual(list(elite.program), elite.fitness)]
        fresh = [Individual(_offspring(population, cfg, n_features, rng)) for _ in range(cfg.population_size - 1)]
        _evaluate(fresh, X, Y, cfg, workers)
        population = children + fresh

        leader = min(population, key=lambda individual: individual.fitness)
        if leader.fitness < best.fitness:
            best = Individual(list(leader.program), leader.fitness)
        if trace is not None:
            trace.record(generation, population, best)
        logger.debug(f"Generation {generation}: best={best.fitness:.6g} length={best.length}")

    logger.info(f"GP finished with fitness {best.fitness:.6g} in {time.perf_counter() - started:.2f}s: {best}")
    return best


class GpRegressor:
    """
    把 evolve 包装成 regressor(X, Y) -> Expression。给定 trace_utils 时，
    每条基准记录的进化轨迹写入 {trace_prefix}_{记录名}.csv。

    Wraps evolve as a regressor(X, Y) -> Expression. With trace_utils set, the
    evolution trace of every benchmark record is written to
    {trace_prefix}_{record name}.csv.
    """
    record_aware = True
    serial_only = False

    def __init__(self, cfg: GpConfig, workers: Optional[int] = 1, trace_utils: Optional[FileUtils] = None,
                 trace_prefix: str = "gp_trace") -> None:
        self.cfg = cfg
        self.workers = workers
        self.trace_utils = trace_utils
        self.trace_prefix = trace_prefix
        # 记录名 -> 轨迹文件路径 | Record name -> trace file path
        self.traces: Dict[str, str] = {}

    def __call__(self, X: np.ndarray, Y: np.ndarray, record: Optional[EquationRecord] = None) -> Expression:
        trace = EvolutionTrace() if self.trace_utils is not None else None
        best = evolve(self.cfg, X, Y, np.random.default_rng(self.cfg.seed), workers=self.workers, trace=trace)
        if trace is not None:
            name = record.name if record is not None else str(len(self.traces))
            self.traces[name] = trace.write(self.trace_utils, f"{self.trace_prefix}_{name}.csv")
        return to_expression(best.program)


def as_regressor(cfg: GpConfig, workers: Optional[int] = 1, trace_utils: Optional[FileUtils] = None,
                 trace_prefix: str = "gp_trace") -> GpRegressor:
    return GpRegressor(cfg, workers, trace_utils, trace_prefix)
