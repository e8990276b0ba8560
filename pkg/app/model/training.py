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

import copy
import math
import time
from dataclasses import dataclass, field
from typing import Dict, Iterator, List, Optional, Sequence, Tuple

import numpy as np
import torch
import torch.nn.functional as F
from tqdm import tqdm

from app.datagen.examples import TrainingBatch, assemble_batch
from app.datagen.pool import SkeletonPool
from app.model.networks import SetToSequenceModel, point_features
from app.models.ConfigModels import AdamConfig, BatchSpec
from app.processors.batch_processor import BatchProducer
from app.symbolic import tokens
from app.utils.exceptions import NonFiniteLossError
from app.utils.file_utils import FileUtils
from app.utils.logging_utils import configure_logging

logger = configure_logging(name=__name__)

# 验证批次使用独立的随机流 | Validation batches use their own random stream
VALIDATION_STREAM = 7919

TRACE_COLUMNS = ("step", "train_loss", "val_loss", "wall_seconds")


@dataclass
class LossResult:
    # 每个样本的平均损失 | Mean loss per example
    loss: float
    batch_size: int
    token_count: int
    gradients: Dict[str, torch.Tensor] = field(default_factory=dict)

    @property
    def per_token(self) -> float:
        if self.token_count == 0:
            return 0.0
        return self.loss * self.batch_size / self.token_count


@dataclass
class TrainingResult:
    trace: List[Sequence[float]]
    final_step: int
    best_step: Optional[int]
    best_val_loss: float

    def write_trace(self, file_utils: FileUtils, file_name: str = "trace.csv") -> str:
        return file_utils.write_csv(file_name, TRACE_COLUMNS, self.trace)


def batch_tensors(model: SetToSequenceModel, batch: TrainingBatch):
    features = torch.from_numpy(point_features(batch.points, model.config))
    targets = torch.from_numpy(batch.targets)
    return features, targets[:, :-1], targets[:, 1:]


def loss_tensor(model: SetToSequenceModel, batch: TrainingBatch) -> Tuple[torch.Tensor, int]:
    """
    逐 token 交叉熵在非 pad 位置求和，再对批次求平均。

    Next-token cross-entropy summed over non-pad positions, averaged over the batch.
    """
    features, inputs, labels = batch_tensors(model, batch)
    logits = model(features, inputs)
    total = F.cross_entropy(logits.reshape(-1, logits.shape[-1]), labels.reshape(-1),
                            ignore_index=tokens.PAD, reduction="sum")
    token_count = int((labels != tokens.PAD).sum())
    return total / batch.size, token_count


def batch_loss(model: SetToSequenceModel, batch: TrainingBatch, with_gradients: bool = True) -> LossResult:
    """
    计算批次损失，并通过反向传播得到每个参数的梯度。

    Compute the batch loss and, by reverse-mode differentiation, the gradient of every parameter.

    :param model: 模型 | Model
    :param batch: 训练批次 | Training batch
    :param with_gradients: 是否计算梯度 | Whether to compute gradients
    :return: LossResult
    :raises NonFiniteLossError: 损失不是有限值 | Loss is not finite
    """
    model.zero_grad(set_to_none=True)
    with torch.set_grad_enabled(with_gradients):
        loss, token_count = loss_tensor(model, batch)
    if not torch.isfinite(loss):
        raise NonFiniteLossError(f"Loss is {loss.item()}")
    gradients: Dict[str, torch.Tensor] = {}
    if with_gradients:
        loss.backward()
        gradients = {name: parameter.grad.detach().clone()
                     for name, parameter in model.named_parameters() if parameter.grad is not None}
    return LossResult(loss=float(loss.item()), batch_size=batch.size, token_count=token_count, gradients=gradients)


def evaluate_loss(model: SetToSequenceModel, batches: Sequence[TrainingBatch]) -> float:
    """
    多个批次上的平均每样本损失 | Mean per-example loss over several batches
    """
    if not batches:
        return math.nan
    with torch.no_grad():
        losses = [loss_tensor(model, batch)[0].item() for batch in batches]
    return float(np.mean(losses))


def validation_batches(pool: Optional[SkeletonPool], spec: BatchSpec, opt: AdamConfig,
                       max_target_len: int) -> List[TrainingBatch]:
    if pool is None or len(pool) == 0 or opt.validation_batches == 0:
        return []
    return [assemble_batch(pool, spec, np.random.default_rng([opt.seed, VALIDATION_STREAM, index]), max_target_len)
            for index in range(opt.validation_batches)]


def _cycle(batches: Sequence[TrainingBatch], steps: int) -> Iterator[TrainingBatch]:
    for step in range(steps):
        yield batches[step % len(batches)]


def train(model: SetToSequenceModel,
          pool: SkeletonPool,
          spec: BatchSpec,
          opt: AdamConfig,
          steps: int,
          validation_pool: Optional[SkeletonPool] = None,
          start_step: int = 0,
          fixed_batches: Optional[Sequence[TrainingBatch]] = None,
          show_progress: bool = False) -> TrainingResult:
    """
    用 Adam 训练模型，每一步使用新组装的批次，定期计算验证损失并保留最优参数。

    Train with Adam on freshly assembled batches; validation loss is computed
    periodically and the best-validation parameters are kept when early stopping is on.

    :param model: 模型 | Model
    :param pool: 训练骨架池 | Training skeleton pool
    :param spec: 批次配置 | Batch specification
    :param opt: 优化器配置 | Optimizer configuration
    :param steps: 训练步数 | Number of steps
    :param validation_pool: 验证骨架池 | Validation skeleton pool
    :param start_step: 起始步数，用于断点续训 | First step number, for resumed runs
    :param fixed_batches: 固定批次，循环使用 | Fixed batches used in rotation
    :param show_progress: 是否显示进度条 | Whether to show a progress bar
    :return: TrainingResult
    :raises NonFiniteLossError: 训练发散 | Training diverged
    """
    torch.manual_seed(opt.seed)
    optimizer = torch.optim.Adam(model.parameters(), lr=opt.learning_rate, betas=(opt.beta1, opt.beta2), eps=opt.eps)
    max_target_len = model.config.max_target_len
    validation = validation_batches(validation_pool, spec, opt, max_target_len)

    trace: List[Sequence[float]] = []
    best_val = math.inf
    best_step: Optional[int] = None
    best_state = None
    last_val = math.nan
    started = time.perf_counter()

    producer: Optional[BatchProducer] = None
    if fixed_batches:
        batches = _cycle(fixed_batches, steps)
    else:
        producer = BatchProducer(pool, spec, opt.seed, start_step, steps, opt.prefetch_batches, max_target_len)
        producer.start()
        batches = producer.batches()

    model.train()
    try:
        progress = tqdm(total=steps, disable=not show_progress, desc="train")
        for offset, batch in enumerate(batches):
            step = start_step + offset + 1
            optimizer.zero_grad(set_to_none=True)
            loss, _ = loss_tensor(model, batch)
            if not torch.isfinite(loss):
                logger.error(f"Non-finite loss {loss.item()} at step {step}")
                raise NonFiniteLossError(f"Loss is {loss.item()}", step=step)
            loss.backward()
            optimizer.step()
            progress.update(1)

            if validation and (step % opt.eval_interval == 0 or offset == steps - 1):
                model.eval()
                last_val = evaluate_loss(model, validation)
                model.train()
                if last_val < best_val:
                    best_val, best_step = last_val, step
                    best_state = copy.deepcopy(model.state_dict())
            if step % opt.log_interval == 0 or offset == steps - 1:
                wall = time.perf_counter() - started
                trace.append((step, float(loss.item()), last_val, round(wall, 3)))
                logger.info(f"step {step}: train_loss={loss.item():.4f} val_loss={last_val:.4f}")
        progress.close()
    finally:
        if producer is not None:
            producer.stop()

    if opt.early_stopping and best_state is not None:
        model.load_state_dict(best_state)
        logger.info(f"Restored best parameters from step {best_step} (val_loss={best_val:.4f})")
    model.eval()
    return TrainingResult(trace=trace, final_step=start_step + steps, best_step=best_step, best_val_loss=best_val)
