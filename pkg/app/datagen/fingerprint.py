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

from typing import Sequence

import numpy as np

from app.symbolic import tokens
from app.symbolic.evaluator import evaluate_batch
from app.symbolic.skeleton import Skeleton

REFERENCE_POINTS = 500
REFERENCE_RANGE = (-10.0, 10.0)
# 每个探测点上的相对容差 | Relative tolerance per reference point
FINGERPRINT_RTOL = 1e-6


def make_reference_points(seed: int) -> np.ndarray:
    """
    固定的探测点集 [500, 3]，同一次运行内所有指纹共享。

    Fixed reference set [500, 3] shared by every fingerprint of a run.
    """
    rng = np.random.default_rng(seed)
    return rng.uniform(REFERENCE_RANGE[0], REFERENCE_RANGE[1], size=(REFERENCE_POINTS, tokens.MAX_VARIABLES))


def numeric_fingerprint(skel: Skeleton, reference: np.ndarray) -> np.ndarray:
    """
    所有占位符取 1 后在探测点上求值，NaN 保留。

    Evaluate the all-ones instantiation on the reference set; NaN entries are kept.

    :param skel: 骨架 | Skeleton
    :param reference: 探测点 [500, 3] | Reference points [500, 3]
    :return: 指纹 [500] | Fingerprint [500]
    """
    return evaluate_batch(skel.expr, reference, np.ones(skel.placeholder_count))


def fingerprints_match(first: np.ndarray, second: np.ndarray) -> bool:
    # NaN 只与 NaN 匹配，±inf 只与同号 inf 匹配 | NaN matches only NaN, ±inf matches only the same inf
    return bool(np.all(np.isclose(first, second, rtol=FINGERPRINT_RTOL, atol=0.0, equal_nan=True)))


def match_any(candidate: np.ndarray, references: np.ndarray) -> bool:
    """
    候选指纹是否与参考矩阵 [m, 500] 中任一行匹配 | Whether a fingerprint matches any row of [m, 500]
    """
    if references.size == 0:
        return False
    close = np.isclose(references, candidate[None, :], rtol=FINGERPRINT_RTOL, atol=0.0, equal_nan=True)
    return bool(np.any(np.all(close, axis=1)))


def fingerprint_matrix(skeletons: Sequence[Skeleton], reference: np.ndarray) -> np.ndarray:
    if not skeletons:
        return np.empty((0, reference.shape[0]))
    return np.stack([numeric_fingerprint(skel, reference) for skel in skeletons])
