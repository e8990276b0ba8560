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

import csv
import io
import json
import os
import tempfile
import traceback
from typing import Any, Dict, Iterable, List, Optional, Sequence, Union

from app.utils.exceptions import MalformedDataError
from app.utils.logging_utils import configure_logging


class FileUtils:
    """
    文件工具类：原子写入、带表头的 CSV、带版本头的逐行 JSON 文件。

    File utility class: atomic writes, CSV files with a header row and
    versioned line-delimited JSON files (pools, suites, regression reports).
    """

    def __init__(self, output_dir: Optional[str] = None) -> None:
        """
        初始化文件工具类

        Initialize the file utility class.

        :param output_dir: 输出目录，为 None 时使用当前目录 | Output directory, the working directory when None.
        :return: None
        """
        # 配置日志记录器 | Configure the logger
        self.logger = configure_logging(name=__name__)

        self.OUTPUT_DIR = os.path.abspath(output_dir or ".")
        os.makedirs(self.OUTPUT_DIR, exist_ok=True)
        self.logger.debug(f"Output directory set to {self.OUTPUT_DIR}")

    def path(self, file_name: str) -> str:
        """
        返回输出目录内的绝对路径，拒绝目录之外的路径。

        Return an absolute path inside the output directory; paths escaping it are rejected.

        :param file_name: 相对文件名 | Relative file name
        :return: 绝对路径 | Absolute path
        """
        file_path = os.path.realpath(os.path.join(self.OUTPUT_DIR, file_name))
        if not file_path.startswith(os.path.realpath(self.OUTPUT_DIR) + os.sep):
            self.logger.error(f"Invalid file path detected: {file_path}")
            raise ValueError("Invalid file path detected.")
        return file_path

    def write_text(self, file_name: str, content: str) -> str:
        return self.atomic_write(self.path(file_name), content)

    def write_csv(self, file_name: str, columns: Sequence[str], rows: Iterable[Sequence[Any]]) -> str:
        """
        写入带表头的 CSV，列顺序固定 | Write a CSV with a header row and a fixed column order

        :param file_name: 文件名 | File name
        :param columns: 列名 | Column names
        :param rows: 行 | Rows
        :return: 文件路径 | File path
        """
        return self.atomic_write(self.path(file_name), render_csv(columns, rows))

    def write_json(self, file_name: str, payload: Dict[str, Any]) -> str:
        return self.atomic_write(self.path(file_name), json.dumps(payload, indent=2, sort_keys=True) + "\n")

    def write_jsonl(self, file_name: str, header: str, records: Iterable[Dict[str, Any]]) -> str:
        return self.atomic_write(self.path(file_name), render_jsonl(header, records))

    def atomic_write(self, file_path: str, content: Union[str, bytes]) -> str:
        """
        先写临时文件再替换，读者不会看到写了一半的文件。

        Write to a temporary file in the same directory, then replace the target.

        :param file_path: 目标路径 | Target path
        :param content: 文本或字节内容 | Text or bytes
        :return: 目标路径 | Target path
        """
        directory = os.path.dirname(os.path.abspath(file_path))
        os.makedirs(directory, exist_ok=True)
        handle, temp_path = tempfile.mkstemp(dir=directory, prefix=".tmp_", suffix=os.path.basename(file_path))
        try:
            if isinstance(content, bytes):
                with os.fdopen(handle, "wb") as temp_file:
                    temp_file.write(content)
            else:
                with os.fdopen(handle, "w", encoding="utf-8", newline="") as temp_file:
                    temp_file.write(content)
            os.replace(temp_path, file_path)
        except (OSError, IOError) as e:
            self.logger.error(f"Failed to write {file_path}: {str(e)}")
            self.logger.error(traceback.format_exc())
            if os.path.exists(temp_path):
                os.remove(temp_path)
            raise
        self.logger.debug(f"File written: {file_path}")
        return file_path


def render_csv(columns: Sequence[str], rows: Iterable[Sequence[Any]]) -> str:
    buffer = io.StringIO()
    writer = csv.writer(buffer, lineterminator="\n")
    writer.writerow(columns)
    for row in rows:
        writer.writerow(row)
    return buffer.getvalue()


def render_jsonl(header: str, records: Iterable[Dict[str, Any]]) -> str:
    lines = [header]
    lines.extend(json.dumps(record, sort_keys=True) for record in records)
    return "\n".join(lines) + "\n"


def read_jsonl(file_path: str, header: str) -> List[Dict[str, Any]]:
    """
    读取带版本头的逐行 JSON 文件 | Read a versioned line-delimited JSON file

    :param file_path: 文件路径 | File path
    :param header: 期望的版本头 | Expected version header
    :return: 记录列表 | Records
    :raises MalformedDataError: 版本头不符或某行不是 JSON 对象 | Wrong header or a line that is not a JSON object
    """
    records: List[Dict[str, Any]] = []
    with open(file_path, "r", encoding="utf-8") as handle:
        first = handle.readline().rstrip("\n")
        if first != header:
            raise MalformedDataError(f"{file_path}: expected header {header!r}, found {first!r}", line_number=1)
        for line_number, line in enumerate(handle, start=2):
            line = line.strip()
            if not line:
                continue
            try:
                record = json.loads(line)
            except json.JSONDecodeError as error:
                raise MalformedDataError(f"{file_path}: invalid JSON ({error.msg})", line_number=line_number)
            if not isinstance(record, dict):
                raise MalformedDataError(f"{file_path}: expected a JSON object", line_number=line_number)
            record["_line"] = line_number
            records.append(record)
    return records


def read_numeric_csv(file_path: str) -> List[List[float]]:
    """
    读取带表头的数值 CSV，表头之后每行的列数必须一致。

    Read a numeric CSV with a header row; every data row must have the header's width.

    :param file_path: 文件路径 | File path
    :return: 行列表 | List of rows
    :raises MalformedDataError: 列数不符或非数值 | Wrong width or non-numeric cell
    """
    with open(file_path, "r", encoding="utf-8", newline="") as handle:
        reader = csv.reader(handle)
        header = next(reader, None)
        if not header:
            raise MalformedDataError(f"{file_path}: missing header row", line_number=1)
        rows: List[List[float]] = []
        for row in reader:
            line_number = reader.line_num
            if not row or all(not cell.strip() for cell in row):
                continue
            if len(row) != len(header):
                raise MalformedDataError(
                    f"{file_path}: expected {len(header)} columns, found {len(row)}", line_number=line_number)
            try:
                rows.append([float(cell) for cell in row])
            except ValueError:
                raise MalformedDataError(f"{file_path}: non-numeric value in row", line_number=line_number)
    if not rows:
        raise MalformedDataError(f"{file_path}: no data rows", line_number=2)
    return rows
