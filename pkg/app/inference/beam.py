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

from dataclasses import dataclass, field
from typing import List, Optional, Tuple

import numpy as np
import torch

from app.model.networks import SetToSequenceModel
from app.models.ConfigModels import InferenceConfig
from app.symbolic import tokens
from app.symbolic.expression import Expression
from app.symbolic.prefix import parse_prefix
from app.symbolic.skeleton import Skeleton, expr_length
from app.utils.exceptions import MalformedExpressionError, NoValidCandidateError
from app.utils.logging_utils import configure_logging

logger = configure_logging(name=__name__)


@dataclass
class Candidate:
    """
    解码得到的候选骨架，拟合后补全 fitted/mse/score。

    A decoded candidate skeleton; fitted, mse and score are filled in by constant fitting.
    """
    skeleton: Skeleton
    log_likelihood: float
    prefix: List[int] = field(default_factory=list)
    fitted: Optional[Expression] = None
    constants: Optional[np.ndarray] = None
    mse: Optional[float] = None
    score: Optional[float] = None
    fit_millis: float = 0.0

    @property
    def length(self) -> int:
        return expr_length(self.skeleton)

    @property
    def is_fitted(self) -> bool:
        return self.fitted is not None and self.score is not None


@dataclass
class BeamResult:
    candidates: List[Candidate]
    # 无法解析而被丢弃的序列数 | Finished sequences dropped because they failed to parse
    invalid_count: int


def _rank_key(sequence: Tuple[List[int], float]):
    body, log_likelihood = sequence
    return -log_likelihood, len(body), body


@torch.no_grad()
def beam_search(model: SetToSequenceModel, latent: torch.Tensor, config: InferenceConfig) -> BeamResult:
    """
    长度同步的束搜索：每步从所有束的扩展中取前 2k 个，排名在前 k 的 eos 扩展结束，
    其余取前 k 个非 eos 扩展继续。k=1 时等价于贪心解码。

    Length-synchronized beam search. Each step ranks all expansions of the live
    beams and keeps the top 2k: eos expansions ranked within the first k finish,
    the first k non-eos expansions stay live. With k = 1 this is greedy decoding.

    更宽的束不保证包含更窄束的全部候选：较宽的束可能让不同的序列先结束。
    A wider beam does not promise a superset of a narrower beam's candidates,
    since a wider beam may finish a different set of sequences first.

    :param model: 模型 | Model
    :param latent: 单个数据集的潜变量 [1, d_z, H] | Latent of one dataset [1, d_z, H]
    :param config: 推理配置 | Inference configuration
    :return: 按对数似然降序排列的候选与无效序列数 | Candidates by decreasing log-likelihood, plus the invalid count
    :raises NoValidCandidateError: 所有结束的序列都无法解析 | Every finished sequence failed to parse
    """
    width = config.beam_size
    limit = min(config.max_decode_len, model.config.max_target_len)
    live: List[Tuple[List[int], float]] = [([tokens.SOS], 0.0)]
    finished: List[Tuple[List[int], float]] = []

    while live and len(live[0][0]) < limit:
        prefix = torch.tensor([sequence for sequence, _ in live], dtype=torch.long)
        logits = model.decode_logits(latent.expand(len(live), -1, -1), prefix)[:, -1, :]
        log_probs = torch.log_softmax(logits.double(), dim=-1).cpu().numpy()
        log_probs[:, tokens.PAD] = -np.inf
        log_probs[:, tokens.SOS] = -np.inf
        totals = np.array([score for _, score in live])[:, None] + log_probs

        # 稳定排序：并列时按 (束序号, token id) 决定 | Stable sort: ties fall back to (beam index, token id)
        flat = totals.ravel()
        order = np.argsort(-flat, kind="stable")[:2 * width]
        next_live: List[Tuple[List[int], float]] = []
        for rank, index in enumerate(order):
            if not np.isfinite(flat[index]):
                break
            beam, token = divmod(int(index), tokens.VOCAB_SIZE)
            sequence = live[beam][0] + [token]
            if token == tokens.EOS:
                if rank < width:
                    finished.append((sequence, float(flat[index])))
            elif len(next_live) < width:
                next_live.append((sequence, float(flat[index])))
        live = next_live

        # 对数似然只会下降，活跃束无法再超过已完成的前 k 个时提前结束
        # Log-likelihoods only decrease: stop once no live beam can beat the top-k finished
        if len(finished) >= width:
            worst_kept = sorted(score for _, score in finished)[-width]
            if not live or live[0][1] <= worst_kept:
                break

    candidates: List[Candidate] = []
    invalid = 0
    ranked = sorted(((sequence[1:-1], score) for sequence, score in finished), key=_rank_key)
    for body, score in ranked:
        try:
            skeleton = Skeleton.from_expression(parse_prefix(body))
        except MalformedExpressionError as error:
            invalid += 1
            logger.debug(f"Dropping invalid beam {body}: {error}")
            continue
        candidates.append(Candidate(skeleton=skeleton, log_likelihood=score, prefix=body))
        if len(candidates) == width:
            break
    if not candidates:
        raise NoValidCandidateError(f"All {len(finished)} finished beams failed to parse.")
    logger.debug(f"Beam search kept {len(candidates)} candidates, dropped {invalid} invalid sequences")
    return BeamResult(candidates=candidates, invalid_count=invalid)
