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

import math
import os
from typing import Dict, Optional, Tuple
from dotenv import load_dotenv

# 加载 .env 文件 | Load .env file
load_dotenv()


class Settings:

    # 项目设置 | Project settings
    class ProjectSettings:
        # 项目名称 | Project name
        title: str = "SkeletonSR"
        # 项目描述 | Project description
        description: str = "Pre-trained set-to-sequence symbolic regression: skeleton generation, transformer pre-training, beam search with BFGS constant fitting, and benchmark evaluation."
        # 项目版本 | Project version
        version: str = "1.0.0"

    # 表达式生成器设置 | Expression generator settings
    class GeneratorSettings:
        # 每棵树最多的内部节点数 | Maximum number of internal nodes per tree
        max_internal_nodes: int = 5
        # 运算符未归一化的采样权重 | Un-normalized sampling weights of the operators
        # "sub" 仅在生成器中出现，会被改写为 a + (-1)·b | "sub" only exists in the generator and is rewritten as a + (-1)·b
        operator_weights: Dict[str, float] = {
            "add": 10.0, "mul": 10.0, "sub": 5.0, "div": 5.0,
            "sqrt": 4.0, "pow": 4.0, "ln": 4.0, "exp": 4.0,
            "sin": 4.0, "cos": 4.0, "tan": 4.0, "arcsin": 1.0,
        }
        # 叶子为变量的概率 | Probability of a leaf being a variable
        leaf_variable_prob: float = 0.8
        # 整数叶子的取值集合 | Values of integer leaves
        integer_leaf_set: Tuple[int, ...] = (-3, -2, -1, 1, 2, 3, 4, 5)
        # 违反变量顺序约束时的最大重采样次数 | Maximum resamples when the variable-order constraint is violated
        max_resample_attempts: int = 20
        # 默认随机种子 | Default random seed
        seed: int = int(os.getenv("NSR_SEED", 0))

    # 训练批次设置 | Training batch settings
    class BatchSettings:
        # 批大小 | Batch size
        batch_size: int = 150
        # 每个方程最多的非一常数个数 | Maximum number of constants different from one per equation
        max_constants: int = 3
        # 常数的采样区间 | Sampling interval of constants
        constant_range: Tuple[float, float] = (1.0, 5.0)
        # 支撑集端点的采样区间 | Sampling interval of the support extrema
        support_extrema_range: Tuple[float, float] = (-10.0, 10.0)
        # 每个方程最多的支撑点数 | Maximum number of support points per equation
        max_points: int = 500
        # |y| 的上限，超过的点被丢弃 | Cap on |y|, points above it are dropped
        y_abs_cap: float = 1000.0

    # 模型设置（桌面规模默认值）| Model settings (desk-scale defaults)
    class ModelSettings:
        hidden_dim: int = 64
        num_heads: int = 4
        num_isab: int = 2
        inducing_points: int = 16
        pma_seeds: int = 4
        decoder_layers: int = 2
        # 32 个符号 + pad | 32 symbols + pad
        vocab_size: int = 33
        max_target_len: int = 40
        # 输入变量数与输出变量数 | Number of input and output variables
        dim_x: int = 3
        dim_y: int = 1

    # 训练设置 | Training settings
    class TrainingSettings:
        learning_rate: float = 1e-4
        beta1: float = 0.9
        beta2: float = 0.999
        eps: float = 1e-8
        # 记录训练损失的步数间隔 | Step interval between trace rows
        log_interval: int = 10
        # 计算验证损失的步数间隔 | Step interval between validation passes
        eval_interval: int = 50
        # 验证集批次数 | Number of validation batches
        validation_batches: int = 2
        # 预取队列长度 | Prefetch queue length
        prefetch_batches: int = 4
        # 是否保留验证损失最优的参数 | Whether to keep the best-validation parameters
        early_stopping: bool = True
        # 训练精度，"float32" 或 "float64" | Training precision, "float32" or "float64"
        precision: str = "float32"

    # 推理设置 | Inference settings
    class InferenceSettings:
        beam_size: int = 32
        bfgs_restarts: int = 4
        token_penalty: float = 1e-14
        max_decode_len: int = 40
        restart_init_range: Tuple[float, float] = (-3.0, 3.0)

    # BFGS 设置 | BFGS settings
    class BfgsSettings:
        max_iterations: int = 200
        gradient_tolerance: float = 1e-8
        wolfe_c1: float = 1e-4
        wolfe_c2: float = 0.9
        max_line_search_steps: int = 30

    # 评估指标设置 | Metric settings
    class MetricSettings:
        atol: float = 1e-3
        rtol: float = 0.05
        point_pass_fraction: float = 0.95
        r2_threshold: float = 0.95
        eval_points: int = 10000
        # 测试时提供给回归器的点数 | Points handed to the regressor at test time
        test_points: int = 128

    # 遗传编程基线设置 | Genetic programming baseline settings
    class GpSettings:
        population_size: int = 1024
        tournament_size: int = 20
        mutation_prob: float = 0.01
        crossover_prob: float = 0.9
        constant_range: Tuple[float, float] = (-4 * math.pi, 4 * math.pi)
        generations: int = 20
        function_set: Tuple[str, ...] = ("add", "sub", "mul", "div", "sqrt", "log", "exp", "neg", "inv", "sin", "cos")
        max_depth: int = 17
        init_depth: Tuple[int, int] = (2, 6)
        parsimony_coefficient: float = 0.001
        metric: str = "mae"

    # 文件设置 | File settings
    class FileSettings:
        # 默认数据目录，可通过环境变量覆盖 | Default data directory, can be overridden by an environment variable
        data_dir: str = os.getenv("NSR_DATA_DIR", os.path.join(os.path.dirname(os.path.dirname(os.path.abspath(__file__))), "data"))
        # 表达式池文件版本头 | Skeleton pool file version header
        pool_header: str = "# nsr-pool v1"
        # 基准集文件版本头 | Benchmark suite file version header
        suite_header: str = "# nsr-suite v1"
        # 回归报告文件版本头 | Regression report file version header
        report_header: str = "# nsr-report v1"
        # 运行清单文件名 | Run manifest file name
        manifest_name: str = "manifest.json"

    # 日志设置 | Log settings
    class LogSettings:
        # 日志级别 | Log level
        """
        CRITICAL = 50
        FATAL = CRITICAL
        ERROR = 40
        WARNING = 30
        WARN = WARNING
        INFO = 20
        DEBUG = 10
        NOTSET = 0
        """
        level: int = int(os.getenv("NSR_LOG_LEVEL", 20))
        # 日志文件目录，为空时不写文件 | Log file directory, no file is written when empty
        log_dir: Optional[str] = os.getenv("NSR_LOG_DIR", "./log_files") or None
        # 日志文件前缀 | Log file prefix
        log_file_prefix: str = "skeleton_sr"
        # 日志文件编码 | Log file encoding
        encoding: str = "utf-8"
        # 日志文件备份数 | Log file backup count
        backup_count: int = 7
