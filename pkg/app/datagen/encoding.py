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
半精度 IEEE-754 多热编码：每个标量变成 16 个比特，第 0 位是符号位（高位在前）。

Half-precision IEEE-754 multi-hot encoding: every scalar becomes 16 bits,
bit 0 being the sign bit (most significant first).
"""

import numpy as np

BITS_PER_VALUE = 16
HALF_MAX = 65504.0

_SHIFTS = np.arange(BITS_PER_VALUE - 1, -1, -1, dtype=np.uint16)
_WEIGHTS = (1 << _SHIFTS.astype(np.uint32)).astype(np.uint32)


def half_pattern(values: np.ndarray) -> np.ndarray:
    # 超出半精度范围的值饱和到 ±65504，舍入为最近偶数 | Saturate to ±65504, round to nearest even
    clipped = np.clip(np.asarray(values, dtype=np.float64), -HALF_MAX, HALF_MAX)
    return np.asarray(clipped).astype(np.float16).view(np.uint16)


def encode_multihot(values) -> np.ndarray:
    """
    编码一个或多个数值，输出最后一维为 16 个比特。

    Encode one or many values; the output gains a trailing axis of 16 bits.

    :param values: 标量或数组，须为有限值 | Scalar or array of finite values
    :return: 布尔数组 [..., 16] | Boolean array [..., 16]
    """
    patterns = half_pattern(values)
    return ((patterns[..., None] >> _SHIFTS) & 1).astype(bool)


def decode_multihot(bits: np.ndarray) -> np.ndarray:
    """
    多热编码的逆变换 | Inverse of the multi-hot encoding

    :param bits: 布尔数组 [..., 16] | Boolean array [..., 16]
    :return: float64 数组 | float64 array
    """
    bits = np.asarray(bits, dtype=np.uint32)
    patterns = np.asarray((bits * _WEIGHTS).sum(axis=-1)).astype(np.uint16)
    return patterns.view(np.float16).astype(np.float64)


def encode_points(points: np.ndarray) -> np.ndarray:
    """
    编码点集，[..., D, n] -> [..., D*16, n]，特征下标为 维度*16 + 比特。

    Encode point sets, [..., D, n] -> [..., D*16, n] with feature index dim*16 + bit.
    """
    bits = encode_multihot(points)
    # [..., D, n, 16] -> [..., D, 16, n]
    bits = np.swapaxes(bits, -1, -2)
    shape = bits.shape[:-3] + (bits.shape[-3] * BITS_PER_VALUE, bits.shape[-1])
    return bits.reshape(shape).astype(np.float32)
