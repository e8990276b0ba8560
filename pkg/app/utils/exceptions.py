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

from typing import Optional

# 命令行退出码 | Command-line exit codes
EXIT_RUNTIME_FAILURE = 1
EXIT_USAGE_ERROR = 2


class NSRError(Exception):
    """
    基本异常类，其他异常类都继承自此类 (Base exception class for all SkeletonSR errors)
    """

    def __init__(self, message: str = "A symbolic regression error occurred.", exit_code: int = EXIT_RUNTIME_FAILURE):
        super().__init__(message)
        self.message = message
        self.exit_code = exit_code

    def __str__(self):
        """
        返回格式化的错误信息 (Return formatted error message)

        :return: 错误信息字符串 | Error message string
        """
        return f"{self.message}"


class ConfigError(NSRError):
    """当配置无效时抛出 (Raised when a configuration value is invalid)"""

    def __init__(self, message: str = "Invalid configuration."):
        super().__init__(message, EXIT_USAGE_ERROR)


class MalformedDataError(NSRError):
    """当输入数据文件格式错误时抛出 (Raised when an input data file is malformed)"""

    def __init__(self, message: str = "Malformed input data.", line_number: Optional[int] = None):
        self.line_number = line_number
        if line_number is not None:
            message = f"{message} (line {line_number})"
        super().__init__(message, EXIT_USAGE_ERROR)


class MalformedExpressionError(NSRError):
    """当前缀序列无法解析为表达式时抛出 (Raised when a prefix sequence does not parse)"""

    def __init__(self, message: str = "Malformed prefix sequence."):
        super().__init__(message)


class ArityMismatchError(NSRError):
    """当常数个数与占位符个数不一致时抛出 (Raised when the number of values differs from the placeholder count)"""

    def __init__(self, message: str = "Number of values does not match the placeholder count."):
        super().__init__(message)


class EmptySupportError(NSRError):
    """当所有支撑点都被过滤掉时抛出 (Raised when every support point was filtered out)"""

    def __init__(self, message: str = "All support points were filtered out."):
        super().__init__(message)


class DataGenerationError(NSRError):
    """当数据生成多次重试后仍失败时抛出 (Raised when data generation keeps failing after retries)"""

    def __init__(self, message: str = "Data generation failed after repeated attempts."):
        super().__init__(message)


class NonFiniteLossError(NSRError):
    """当训练损失不是有限值时抛出 (Raised when the training loss diverges)"""

    def __init__(self, message: str = "Training loss is not finite.", step: Optional[int] = None):
        self.step = step
        if step is not None:
            message = f"{message} (step {step})"
        super().__init__(message)


class CorruptCheckpointError(NSRError):
    """当检查点文件损坏或被截断时抛出 (Raised when a checkpoint file is corrupt or truncated)"""

    def __init__(self, message: str = "Checkpoint file is corrupt."):
        super().__init__(message)


class VersionMismatchError(NSRError):
    """当检查点版本或配置与预期不一致时抛出 (Raised when a checkpoint version or configuration is not the expected one)"""

    def __init__(self, message: str = "Checkpoint version mismatch."):
        super().__init__(message)


class NonFiniteObjectiveError(NSRError):
    """当目标函数在探测点不是有限值时抛出 (Raised when an objective is not finite at a trial point)"""

    def __init__(self, message: str = "Objective is not finite."):
        super().__init__(message)


class NoValidCandidateError(NSRError):
    """当没有可用的候选方程时抛出 (Raised when no usable candidate equation is left)"""

    def __init__(self, message: str = "No valid candidate equation."):
        super().__init__(message)


class FitFailedError(NSRError):
    """当所有 BFGS 重启都失败时抛出 (Raised when every BFGS restart failed)"""

    def __init__(self, message: str = "Constant fitting failed for every restart."):
        super().__init__(message)


class TooManyVariablesError(NSRError):
    """当输入变量数超过模型支持的数量时抛出 (Raised when the input has more variables than the model supports)"""

    def __init__(self, message: str = "Too many input variables."):
        super().__init__(message, EXIT_USAGE_ERROR)


class DataFileMissingError(NSRError):
    """当内置数据文件缺失时抛出 (Raised when a bundled data file is missing)"""

    def __init__(self, message: str = "Bundled data file is missing."):
        super().__init__(message)


class InsufficientDisjointSkeletonsError(NSRError):
    """当无法找到足够的与训练集不相交的骨架时抛出 (Raised when too few skeletons are disjoint from the training pool)"""

    def __init__(self, message: str = "Not enough skeletons disjoint from the training pool."):
        super().__init__(message)
