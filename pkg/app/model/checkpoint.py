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
检查点文件格式：

    magic "NSRCKPT\\0" | <I 版本 | <I 配置长度 + 配置 JSON | <I 数组个数 |
    每个数组：<H 名称长度 + 名称 | <B 维数 | <I 各维大小 | 小端 float32 数据

Checkpoint layout: magic, format version, JSON config header (model config and
step counter), then named little-endian float32 arrays.
"""

import io
import json
import os
import struct
from dataclasses import dataclass
from typing import Dict, Optional

import numpy as np
import torch
from pydantic import ValidationError

from app.model.networks import SetToSequenceModel, build_model
from app.models.ConfigModels import ModelConfig
from app.utils.exceptions import CorruptCheckpointError, VersionMismatchError
from app.utils.file_utils import FileUtils
from app.utils.logging_utils import configure_logging

logger = configure_logging(name=__name__)

MAGIC = b"NSRCKPT\0"
FORMAT_VERSION = 1


@dataclass
class Checkpoint:
    config: ModelConfig
    arrays: Dict[str, np.ndarray]
    step: int = 0

    def to_model(self, precision: Optional[str] = None) -> SetToSequenceModel:
        model = build_model(self.config, precision=precision)
        state = {name: torch.from_numpy(array.copy()).to(model.dtype) for name, array in self.arrays.items()}
        expected = set(model.state_dict())
        if set(state) != expected:
            missing = sorted(expected - set(state))
            extra = sorted(set(state) - expected)
            raise CorruptCheckpointError(f"Checkpoint arrays do not match the model: missing={missing} extra={extra}")
        model.load_state_dict(state)
        model.eval()
        return model


def serialize(model: SetToSequenceModel, step: int = 0) -> bytes:
    header = json.dumps({"model": model.config.model_dump(mode="json"), "step": step}, sort_keys=True).encode("utf-8")
    buffer = io.BytesIO()
    buffer.write(MAGIC)
    buffer.write(struct.pack("<I", FORMAT_VERSION))
    buffer.write(struct.pack("<I", len(header)))
    buffer.write(header)
    state = model.state_dict()
    buffer.write(struct.pack("<I", len(state)))
    for name, tensor in state.items():
        array = tensor.detach().cpu().numpy().astype("<f4")
        encoded_name = name.encode("utf-8")
        buffer.write(struct.pack("<H", len(encoded_name)))
        buffer.write(encoded_name)
        buffer.write(struct.pack("<B", array.ndim))
        buffer.write(struct.pack(f"<{array.ndim}I", *array.shape))
        buffer.write(array.tobytes(order="C"))
    return buffer.getvalue()


def save_checkpoint(model: SetToSequenceModel, path: str, step: int = 0) -> str:
    """
    原子写入检查点 | Write a checkpoint atomically

    :param model: 模型 | Model
    :param path: 目标路径 | Target path
    :param step: 已完成的训练步数 | Completed training steps
    :return: 文件路径 | File path
    """
    file_utils = FileUtils(os.path.dirname(os.path.abspath(path)))
    file_utils.atomic_write(os.path.abspath(path), serialize(model, step))
    logger.info(f"Checkpoint saved to {path} at step {step}")
    return path


class _Reader:

    def __init__(self, payload: bytes):
        self.payload = payload
        self.offset = 0

    def take(self, size: int) -> bytes:
        if self.offset + size > len(self.payload):
            raise CorruptCheckpointError(f"Checkpoint truncated at byte {self.offset} (wanted {size} more)")
        chunk = self.payload[self.offset:self.offset + size]
        self.offset += size
        return chunk

    def unpack(self, fmt: str):
        return struct.unpack(fmt, self.take(struct.calcsize(fmt)))


def deserialize(payload: bytes, expected_dim_x: Optional[int] = None) -> Checkpoint:
    """
    解析检查点字节 | Parse checkpoint bytes

    :param payload: 文件内容 | File content
    :param expected_dim_x: 期望的输入变量数 | Expected number of input variables
    :return: Checkpoint
    :raises CorruptCheckpointError: 截断、magic 错误或数组不完整 | Truncation, bad magic or incomplete arrays
    :raises VersionMismatchError: 格式版本或 d_x 不一致 | Format version or d_x mismatch
    """
    reader = _Reader(payload)
    if reader.take(len(MAGIC)) != MAGIC:
        raise CorruptCheckpointError("Not a checkpoint file (bad magic bytes)")
    (version,) = reader.unpack("<I")
    if version != FORMAT_VERSION:
        raise VersionMismatchError(f"Checkpoint format version {version} is not supported (expected {FORMAT_VERSION})")
    (header_length,) = reader.unpack("<I")
    try:
        header = json.loads(reader.take(header_length).decode("utf-8"))
        config = ModelConfig.model_validate(header["model"])
        step = int(header.get("step", 0))
    except (UnicodeDecodeError, json.JSONDecodeError, KeyError, TypeError, ValidationError) as error:
        raise CorruptCheckpointError(f"Checkpoint config header is unreadable: {error}")
    if expected_dim_x is not None and config.dim_x != expected_dim_x:
        raise VersionMismatchError(
            f"Checkpoint was trained with dim_x={config.dim_x}, but dim_x={expected_dim_x} was expected")

    (count,) = reader.unpack("<I")
    arrays: Dict[str, np.ndarray] = {}
    for _ in range(count):
        (name_length,) = reader.unpack("<H")
        name = reader.take(name_length).decode("utf-8")
        (ndim,) = reader.unpack("<B")
        shape = reader.unpack(f"<{ndim}I") if ndim else ()
        size = int(np.prod(shape, dtype=np.int64)) if ndim else 1
        arrays[name] = np.frombuffer(reader.take(4 * size), dtype="<f4").reshape(shape).astype(np.float32)
    if reader.offset != len(payload):
        raise CorruptCheckpointError(f"Checkpoint has {len(payload) - reader.offset} trailing bytes")
    return Checkpoint(config=config, arrays=arrays, step=step)


def load_checkpoint(path: str, expected_dim_x: Optional[int] = None) -> Checkpoint:
    if not os.path.isfile(path):
        raise CorruptCheckpointError(f"Checkpoint not found: {path}")
    with open(path, "rb") as handle:
        payload = handle.read()
    checkpoint = deserialize(payload, expected_dim_x)
    logger.debug(f"Loaded checkpoint {path}: {len(checkpoint.arrays)} arrays, step {checkpoint.step}")
    return checkpoint
