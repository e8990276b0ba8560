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

import datetime as dt
from enum import Enum
from typing import Any, ClassVar, Dict, List, Optional, Tuple

from pydantic import BaseModel, ConfigDict, Field, InstanceOf, model_validator

from app.symbolic.expression import Expression
from config.settings import Settings

Interval = Tuple[float, float]


class SuiteName(str, Enum):
    aif = "aif"
    soose_wc = "soose-wc"
    soose_nc = "soose-nc"
    soose_fc = "soose-fc"
    nguyen = "nguyen"


class SooseVariant(str, Enum):
    # 最多 3 个常数 | Up to three constants
    WC = "WC"
    # 没有常数 | No constants
    NC = "NC"
    # 每个占位符都有常数 | A constant in every placeholder
    FC = "FC"


# 基准方程记录 | Benchmark equation record
class EquationRecord(BaseModel):
    name: str = Field(..., description="方程名称 | Equation name")
    expr: InstanceOf[Expression] = Field(..., description="真实表达式 | Ground-truth expression")
    supports: Tuple[Optional[Interval], Optional[Interval], Optional[Interval]] = Field(
        ..., description="每个变量的 (lo, hi)，未使用的变量为 None | Per-variable (lo, hi), None for unused variables")
    reachable: bool = Field(True, description="神经回归器的词表能否表示该方程 | Whether the neural vocabulary can express it")

    model_config = ConfigDict(frozen=True)

    @model_validator(mode="after")
    def check_supports(self) -> "EquationRecord":
        used = self.expr.variables_used()
        for index, interval in enumerate(self.supports, start=1):
            if interval is None:
                if index in used:
                    raise ValueError(f"{self.name}: variable x{index} is used but has no support")
                continue
            low, high = interval
            if not low < high:
                raise ValueError(f"{self.name}: support of x{index} must satisfy lo < hi, got {interval}")
        return self

    @property
    def variables(self) -> List[int]:
        return sorted(self.expr.variables_used())

    @property
    def dim_x(self) -> int:
        # 回归器看到的列数 | Number of columns handed to regressors
        return max(self.variables, default=1)


# 基准报告中的一行 | One row of a benchmark report
class BenchmarkRow(BaseModel):
    name: str
    a1_iid: bool
    a1_ood: bool
    a2_iid: bool
    a2_ood: bool
    wall_seconds: float
    predicted_infix: str
    error: Optional[str] = None

    COLUMNS: ClassVar[Tuple[str, ...]] = ("name", "a1_iid", "a1_ood", "a2_iid", "a2_ood", "wall_seconds", "predicted_infix")

    def as_row(self) -> List[Any]:
        return [self.name, int(self.a1_iid), int(self.a1_ood), int(self.a2_iid), int(self.a2_ood),
                round(self.wall_seconds, 6), self.predicted_infix]


# 运行清单 | Run manifest
class RunManifest(BaseModel):
    command: str
    config: Dict[str, Any] = Field(default_factory=dict)
    seed: int
    arguments: Dict[str, Any] = Field(default_factory=dict)
    artifacts: Dict[str, str] = Field(default_factory=dict)
    started_at: dt.datetime = Field(default_factory=dt.datetime.now)
    finished_at: Optional[dt.datetime] = None
    tool_version: str = Settings.ProjectSettings.version

    def finish(self) -> "RunManifest":
        return self.model_copy(update={"finished_at": dt.datetime.now()})
