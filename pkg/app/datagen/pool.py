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
from collections import Counter
from dataclasses import dataclass, field
from typing import Callable, Dict, List, Optional, Sequence, Tuple

import numpy as np

from app.datagen.generator import ExpressionGenerator, relabel_variables
from app.models.ConfigModels import GeneratorConfig
from app.symbolic.expression import Expression, variable_order_ok
from app.symbolic.prefix import parse_prefix, to_infix_string, to_prefix
from app.symbolic.simplifier import simplify
from app.symbolic.skeleton import Skeleton, skeletonize
from app.utils.concurrency import ordered_map, spawn_seeds
from app.utils.exceptions import DataGenerationError, MalformedDataError, MalformedExpressionError
from app.utils.file_utils import FileUtils, read_jsonl
from app.utils.logging_utils import configure_logging
from config.settings import Settings

logger = configure_logging(name=__name__)

# 每个工作块的骨架数，与线程数无关，保证结果可复现 | Skeletons per work chunk, independent of the thread count
CHUNK_SIZE = 256
# 单个骨架最多的采样次数 | Maximum draws for a single skeleton
MAX_DRAWS_PER_SKELETON = 1000

TreeSampler = Callable[[np.random.Generator], Expression]


@dataclass
class PoolStats:
    count: int
    unique_count: int
    mean_length: float
    length_histogram: Dict[int, int]
    most_common: List[Tuple[str, int]]

    @property
    def unique_fraction(self) -> float:
        return self.unique_count / self.count if self.count else 0.0

    def as_dict(self) -> Dict[str, object]:
        return {
            "count": self.count,
            "unique_count": self.unique_count,
            "unique_fraction": self.unique_fraction,
            "mean_length": self.mean_length,
            "length_histogram": {str(length): total for length, total in sorted(self.length_histogram.items())},
            "most_common": [[infix, total] for infix, total in self.most_common],
        }


@dataclass
class SkeletonPool:
    """
    骨架池，保留重复项 | Skeleton pool, duplicates retained
    """
    skeletons: List[Skeleton] = field(default_factory=list)

    def __len__(self) -> int:
        return len(self.skeletons)

    def __getitem__(self, index: int) -> Skeleton:
        return self.skeletons[index]

    def __iter__(self):
        return iter(self.skeletons)

    @property
    def stats(self) -> PoolStats:
        prefixes = [tuple(to_prefix(skel.expr)) for skel in self.skeletons]
        lengths = Counter(len(prefix) for prefix in prefixes)
        frequency = Counter(prefixes)
        most_common = [(to_infix_string(parse_prefix(prefix)), total) for prefix, total in frequency.most_common(10)]
        mean_length = float(np.mean([len(prefix) for prefix in prefixes])) if prefixes else 0.0
        return PoolStats(count=len(prefixes), unique_count=len(frequency), mean_length=mean_length,
                         length_histogram=dict(lengths), most_common=most_common)

    def unique(self) -> List[Skeleton]:
        """
        按首次出现顺序去重 | Deduplicate by prefix, keeping first-seen order
        """
        seen = set()
        result = []
        for skel in self.skeletons:
            key = tuple(to_prefix(skel.expr))
            if key not in seen:
                seen.add(key)
                result.append(skel)
        return result

    def save(self, file_utils: FileUtils, file_name: str) -> str:
        records = [{
            "prefix": to_prefix(skel.expr),
            "placeholder_count": skel.placeholder_count,
            "infix": to_infix_string(skel.expr),
            "length": len(to_prefix(skel.expr)),
        } for skel in self.skeletons]
        return file_utils.write_jsonl(file_name, Settings.FileSettings.pool_header, records)

    @classmethod
    def load(cls, file_path: str) -> "SkeletonPool":
        """
        读取骨架池文件 | Load a skeleton pool file

        :param file_path: 文件路径 | File path
        :return: SkeletonPool
        :raises MalformedDataError: 文件缺失或记录无效 | Missing file or invalid record
        """
        if not os.path.isfile(file_path):
            raise MalformedDataError(f"Pool file not found: {file_path}")
        skeletons = []
        for record in read_jsonl(file_path, Settings.FileSettings.pool_header):
            line = record["_line"]
            try:
                skel = Skeleton.from_expression(parse_prefix(record["prefix"]))
            except (KeyError, TypeError, MalformedExpressionError) as error:
                raise MalformedDataError(f"{file_path}: invalid pool record ({error})", line_number=line)
            if skel.placeholder_count != record.get("placeholder_count", skel.placeholder_count):
                raise MalformedDataError(f"{file_path}: placeholder_count disagrees with prefix", line_number=line)
            skeletons.append(skel)
        return cls(skeletons)


def draw_skeleton(generator: ExpressionGenerator, rng: np.random.Generator,
                  sampler: Optional[TreeSampler] = None) -> Skeleton:
    """
    采样 -> 化简 -> 变量重编号 -> 骨架化，不含变量的结果重新采样。

    sample -> simplify -> relabel -> skeletonize; variable-free results are redrawn.
    """
    sample = sampler or generator.sample_tree
    for _ in range(MAX_DRAWS_PER_SKELETON):
        tree = simplify(sample(rng))
        variables = tree.variables_used()
        if not variables:
            continue
        if not variable_order_ok(variables):
            # 化简可能消去 x1 | Simplification may cancel x1 away
            tree = relabel_variables(tree)
        return skeletonize(tree)
    raise DataGenerationError(f"No skeleton with variables after {MAX_DRAWS_PER_SKELETON} draws.")


def build_pool(config: GeneratorConfig, count: int, rng: np.random.Generator,
               sampler: Optional[TreeSampler] = None, workers: Optional[int] = None) -> SkeletonPool:
    """
    构建骨架池，按固定大小分块并行生成，结果与线程数无关。

    Build a skeleton pool in fixed-size chunks generated in parallel; the result
    does not depend on the worker count.

    :param config: 生成器配置 | Generator configuration
    :param count: 骨架数量 | Number of skeletons
    :param rng: 主随机数生成器 | Master random generator
    :param sampler: 可选的替代树采样器 | Optional replacement tree sampler
    :param workers: 线程数 | Worker count
    :return: SkeletonPool
    """
    if count < 1:
        raise ValueError(f"Pool size must be at least 1, got {count}")
    generator = ExpressionGenerator(config)
    chunk_sizes = [min(CHUNK_SIZE, count - start) for start in range(0, count, CHUNK_SIZE)]
    seeds = spawn_seeds(rng, len(chunk_sizes))

    def build_chunk(job: Tuple[int, int]) -> List[Skeleton]:
        seed, size = job
        chunk_rng = np.random.default_rng(seed)
        return [draw_skeleton(generator, chunk_rng, sampler) for _ in range(size)]

    chunks = ordered_map(build_chunk, list(zip(seeds, chunk_sizes)), workers)
    pool = SkeletonPool([skel for chunk in chunks for skel in chunk])
    logger.info(f"Built skeleton pool with {len(pool)} entries from {len(chunk_sizes)} chunks")
    return pool


def pool_from_expressions(expressions: Sequence[Expression]) -> SkeletonPool:
    return SkeletonPool([skeletonize(simplify(expr)) for expr in expressions])
