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

import logging
import os
import sys
from typing import Optional

from concurrent_log_handler import ConcurrentRotatingFileHandler

from config.settings import Settings

# 线程名区分批次生产线程、拟合线程池和主线程 | The thread name tells the batch producer, fitting pool and main thread apart
LOG_FORMAT = "%(asctime)s - %(name)s - %(levelname)s - [%(threadName)s] %(message)s"

MAX_LOG_BYTES = 10 * 1024 * 1024


def _file_handler(log_dir: str, log_file_prefix: str, backup_count: int, encoding: str) -> logging.Handler:
    log_dir = os.path.abspath(log_dir)
    os.makedirs(log_dir, exist_ok=True)
    handler = ConcurrentRotatingFileHandler(
        filename=os.path.join(log_dir, f"{log_file_prefix}.log"),
        maxBytes=MAX_LOG_BYTES,
        backupCount=backup_count,
        encoding=encoding,
    )
    handler.setFormatter(logging.Formatter(LOG_FORMAT))
    return handler


def _console_handler() -> logging.Handler:
    # stdout 留给命令行的结果输出 | stdout carries the CLI's results
    handler = logging.StreamHandler(sys.stderr)
    handler.setFormatter(logging.Formatter(LOG_FORMAT))
    return handler


def configure_logging(
    name: Optional[str] = None,
    log_level: int = Settings.LogSettings.level,
    log_dir: Optional[str] = Settings.LogSettings.log_dir,
    log_file_prefix: Optional[str] = Settings.LogSettings.log_file_prefix,
    backup_count: int = Settings.LogSettings.backup_count,
    encoding: str = Settings.LogSettings.encoding
) -> logging.Logger:
    """
    返回模块日志记录器。处理器只挂在顶层包的记录器上（例如 app.model.training 挂到 app），
    各模块的记录消息向上传递，同一个包只有一个轮转文件和一个控制台输出。

    Return a module logger. Handlers live on the top-level package logger only
    (app.model.training hands its records up to app), so one package writes to
    one rotating file and one console stream however many modules ask.

    :param name: 日志记录器名称，通常为 __name__ | Logger name, usually __name__
    :param log_level: 日志级别 | Log level
    :param log_dir: 日志文件目录，为空时只输出到控制台 | Log directory, console only when empty
    :param log_file_prefix: 日志文件前缀 | Log file prefix
    :param backup_count: 保留的备份文件数量 | Number of rotated files to keep
    :param encoding: 日志文件编码 | Log file encoding
    :return: 配置好的日志记录器 | The configured logger
    """
    logger = logging.getLogger(name)
    logger.setLevel(log_level)
    owner = logging.getLogger(name.split(".")[0]) if name else logger

    if not owner.handlers:
        if owner is not logger:
            owner.setLevel(log_level)
        if log_dir and log_file_prefix:
            owner.addHandler(_file_handler(log_dir, log_file_prefix, backup_count, encoding))
        owner.addHandler(_console_handler())
    return logger
