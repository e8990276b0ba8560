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

import queue
import threading
import traceback
from typing import Iterator, Optional

import numpy as np

from app.datagen.examples import TrainingBatch, assemble_batch
from app.datagen.pool import SkeletonPool
from app.models.ConfigModels import BatchSpec
from app.utils.logging_utils import configure_logging


def batch_rng(seed: int, step: int) -> np.random.Generator:
    # 第 k 个批次只依赖 (seed, k) | Batch k depends on (seed, k) only
    return np.random.default_rng([seed, step])


class BatchProducer:
    """
    后台批次生产者：在优化器之前预先组装训练批次，放入有界队列。

    Background batch producer that assembles training batches ahead of the
    optimizer into a bounded queue. Batch k is a pure function of (seed, k), so
    prefetching never changes the batches the trainer sees.
    """

    def __init__(self,
                 pool: SkeletonPool,
                 spec: BatchSpec,
                 seed: int,
                 first_step: int,
                 steps: int,
                 prefetch: int,
                 max_target_len: Optional[int] = None
                 ) -> None:
        """
        初始化 BatchProducer 实例

        :param pool: 骨架池 | Skeleton pool
        :param spec: 批次配置 | Batch specification
        :param seed: 训练种子 | Training seed
        :param first_step: 第一个批次的步数编号 | Step number of the first batch
        :param steps: 批次数量 | Number of batches
        :param prefetch: 队列长度 | Queue length
        :param max_target_len: 目标序列最大长度 | Longest allowed target sequence
        :return: None
        """
        self.pool = pool
        self.spec = spec
        self.seed = seed
        self.first_step = first_step
        self.steps = steps
        self.max_target_len = max_target_len
        # 初始化有界批次队列 | Initialize the bounded batch queue
        self.batch_queue: "queue.Queue" = queue.Queue(maxsize=prefetch)
        self.shutdown_event: threading.Event = threading.Event()
        self.thread: threading.Thread = threading.Thread(target=self.run_loop, daemon=True)
        self.logger = configure_logging(name=__name__)

    def start(self) -> None:
        """
        启动后台生产线程 | Start the background producer thread
        """
        self.thread.start()
        self.logger.debug("BatchProducer started.")

    def stop(self) -> None:
        """
        停止生产线程并清空队列 | Stop the producer thread and drain the queue
        """
        self.shutdown_event.set()
        # 清空队列，解除生产者的阻塞 | Drain the queue to unblock the producer
        while True:
            try:
                self.batch_queue.get_nowait()
            except queue.Empty:
                break
        if self.thread.is_alive():
            self.thread.join()
        self.logger.debug("BatchProducer stopped.")

    def run_loop(self) -> None:
        for step in range(self.first_step, self.first_step + self.steps):
            if self.shutdown_event.is_set():
                return
            try:
                item = assemble_batch(self.pool, self.spec, batch_rng(self.seed, step), self.max_target_len)
            except Exception as error:
                self.logger.error(f"Batch assembly failed at step {step}: {error}")
                self.logger.error(traceback.format_exc())
                item = error
            while not self.shutdown_event.is_set():
                try:
                    self.batch_queue.put((step, item), timeout=0.1)
                    break
                except queue.Full:
                    continue
            if isinstance(item, Exception):
                return

    def batches(self) -> Iterator[TrainingBatch]:
        """
        按步数顺序取出批次，生产线程的异常在这里重新抛出。

        Yield batches in step order; producer exceptions are re-raised here.
        """
        for _ in range(self.steps):
            step, item = self.batch_queue.get()
            if isinstance(item, Exception):
                raise item
            yield item

    def __enter__(self) -> "BatchProducer":
        self.start()
        return self

    def __exit__(self, exc_type, exc, tb) -> None:
        self.stop()
