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
from concurrent.futures import ThreadPoolExecutor
from typing import Callable, Iterable, List, Optional, TypeVar

import numpy as np

from app.utils.exceptions import ConfigError

T = TypeVar("T")
R = TypeVar("R")

# 由 --threads 设置的进程级默认线程数 | Process-wide default worker count set by --threads
_default_workers: Optional[int] = None


def set_default_workers(workers: Optional[int]) -> None:
    global _default_workers
    _default_workers = None if workers is None else resolve_workers(workers)


def resolve_workers(workers: Optional[int] = None) -> int:
    """
    解析线程数：显式值优先，其次是 --threads，最后是可用核数。

    Resolve a worker count: explicit value first, then --threads, then available cores.

    :param workers: 线程数或 None | Worker count or None
    :return: 正整数线程数 | Positive worker count
    """
    if workers is None:
        workers = _default_workers if _default_workers is not None else (os.cpu_count() or 1)
    if workers < 1:
        raise ConfigError(f"Worker count must be at least 1, got {workers}")
    return workers


def ordered_map(function: Callable[[T], R], items: Iterable[T], workers: Optional[int] = None) -> List[R]:
    """
    并行执行并按输入顺序返回结果 | Run in parallel and return results in input order
    """
    items = list(items)
    workers = min(resolve_workers(workers), max(1, len(items)))
    if workers == 1:
        return [function(item) for item in items]
    with ThreadPoolExecutor(max_workers=workers) as executor:
        return list(executor.map(function, items))


def spawn_seeds(rng: np.random.Generator, count: int) -> List[int]:
    # 每个任务一个独立的随机流 | One independent stream per task
    return [int(seed) for seed in rng.integers(0, 2 ** 63 - 1, size=count, dtype=np.int64)]
