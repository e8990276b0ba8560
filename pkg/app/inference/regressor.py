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
import traceback
from dataclasses import dataclass
from typing import Dict, List, Optional, Tuple

import numpy as np
import torch

from app.inference.beam import Candidate, beam_search
from app.inference.fitting import fit_candidate, select_best, selection_key
from app.model.networks import SetToSequenceModel, point_features
from app.models.ConfigModels import InferenceConfig
from app.symbolic import tokens
from app.symbolic.expression import Expression
from app.symbolic.prefix import to_infix_string
from app.utils.concurrency import ordered_map, spawn_seeds
from app.utils.exceptions import FitFailedError, MalformedDataError, TooManyVariablesError
from app.utils.file_utils import FileUtils
from app.utils.logging_utils import configure_logging
from config.settings import Settings

logger = configure_logging(name=__name__)

REPORT_FIELDS = ("rank", "infix", "prefix", "log_likelihood", "mse", "score", "fit_millis")


@dataclass
class RegressionResult:
    best: Candidate
    # 按选择顺序排列的已拟合候选 | Fitted candidates in selection order
    candidates: List[Candidate]
    invalid_count: int
    failed_count: int
    timings: Dict[str, float]

    @property
    def expression(self) -> Expression:
        return self.best.fitted

    def records(self) -> List[Dict[str, object]]:
        return [
            {
                "rank": rank,
                "infix": to_infix_string(cand.fitted),
                "prefix": cand.prefix,
                "log_likelihood": cand.log_likelihood,
                "mse": cand.mse,
                "score": cand.score,
                "fit_millis": round(cand.fit_millis, 3),
            }
            for rank, cand in enumerate(self.candidates, start=1)
        ]

    def write_report(self, file_utils: FileUtils, file_name: str = "report.jsonl") -> str:
        return file_utils.write_jsonl(file_name, Settings.FileSettings.report_header, self.records())


def prepare_inputs(X: np.ndarray, Y: np.ndarray, dim_x: int) -> Tuple[np.ndarray, np.ndarray]:
    """
    检查输入并补零到 3 列 | Validate the inputs and zero-pad X to three columns

    :raises TooManyVariablesError: 列数超过模型的 d_x | More columns than the model's d_x
    :raises MalformedDataError: 形状不一致、没有点或含非有限值 | Inconsistent shapes, no points or non-finite values
    """
    X = np.asarray(X, dtype=np.float64)
    Y = np.asarray(Y, dtype=np.float64).reshape(-1)
    if X.ndim == 1:
        X = X.reshape(-1, 1)
    if X.shape[1] > dim_x:
        raise TooManyVariablesError(f"Input has {X.shape[1]} variables but the model was trained with d_x={dim_x}")
    if X.shape[0] < 1 or X.shape[0] != Y.shape[0]:
        raise MalformedDataError(f"Expected matching non-empty X and Y, got {X.shape[0]} and {Y.shape[0]} rows")
    if not (np.all(np.isfinite(X)) and np.all(np.isfinite(Y))):
        raise MalformedDataError("Regression data must be finite")
    padded = np.zeros((X.shape[0], tokens.MAX_VARIABLES))
    padded[:, :X.shape[1]] = X
    return padded, Y


def encode_dataset(model: SetToSequenceModel, X: np.ndarray, Y: np.ndarray) -> torch.Tensor:
    points = np.concatenate([X.T, Y[None, :]], axis=0)[None, :, :]
    features = torch.from_numpy(point_features(points, model.config))
    with torch.no_grad():
        return model.encode(features)


def regress(model: SetToSequenceModel, X: np.ndarray, Y: np.ndarray, config: InferenceConfig,
            workers: Optional[int] = None) -> RegressionResult:
    """
    测试时的符号回归：编码数据集，束搜索得到候选骨架，并行拟合常数，按带惩罚的分数选出最优方程。

    Test-time symbolic regression: encode the dataset, decode candidate
    skeletons with beam search, fit their constants in parallel and select the
    best equation by penalized score.

    :param model: 训练好的模型 | Trained model
    :param X: 输入 [n, d] | Inputs [n, d]
    :param Y: 输出 [n] | Outputs [n]
    :param config: 推理配置 | Inference configuration
    :param workers: 拟合线程数 | Fitting threads
    :return: RegressionResult
    :raises TooManyVariablesError: 输入变量过多 | Too many input variables
    :raises NoValidCandidateError: 没有可用的候选 | No usable candidate
    """
    timings: Dict[str, float] = {}
    started = time.perf_counter()
    X, Y = prepare_inputs(X, Y, model.config.dim_x)
    model.eval()
    latent = encode_dataset(model, X, Y)
    timings["encode_seconds"] = time.perf_counter() - started

    decoded = time.perf_counter()
    beams = beam_search(model, latent, config)
    timings["beam_seconds"] = time.perf_counter() - decoded

    seeds = spawn_seeds(np.random.default_rng(config.seed), len(beams.candidates))

    def fit(job: Tuple[Candidate, int]) -> Optional[Candidate]:
        cand, seed = job
        try:
            return fit_candidate(cand, X, Y, config, np.random.default_rng(seed))
        except FitFailedError as error:
            logger.debug(f"Dropping candidate {cand.skeleton}: {error}")
        except Exception as error:
            logger.error(f"Unexpected failure fitting {cand.skeleton}: {error}")
            logger.error(traceback.format_exc())
        return None

    fitting = time.perf_counter()
    results = ordered_map(fit, list(zip(beams.candidates, seeds)), workers)
    timings["fit_seconds"] = time.perf_counter() - fitting

    fitted = [cand for cand in results if cand is not None and not np.isnan(cand.mse)]
    best = select_best(fitted)
    fitted.sort(key=selection_key)
    timings["total_seconds"] = time.perf_counter() - started
    logger.info(f"Best equation {to_infix_string(best.fitted)} with mse={best.mse:.3g} "
                f"({len(fitted)} fitted, {beams.invalid_count} invalid beams)")
    return RegressionResult(best=best, candidates=fitted, invalid_count=beams.invalid_count,
                            failed_count=len(results) - len(fitted), timings=timings)


class NeuralRegressor:
    """
    把加载好的模型包装成 regressor(X, Y) -> Expression，用于基准评估。

    Wraps a loaded model as a regressor(X, Y) -> Expression for benchmark runs.
    """

    def __init__(self, model: SetToSequenceModel, config: InferenceConfig, workers: Optional[int] = 1) -> None:
        self.model = model
        self.config = config
        self.workers = workers
        # 基准评估按记录串行调用 | The benchmark runner calls it one record at a time
        self.serial_only = True

    def __call__(self, X: np.ndarray, Y: np.ndarray) -> Expression:
        return regress(self.model, X, Y, self.config, self.workers).expression
