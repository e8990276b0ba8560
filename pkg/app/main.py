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

import functools
import sys
from typing import Any, Dict, List, Optional

import click
import numpy as np
from pydantic import ValidationError

from app.datagen.examples import assemble_batch, write_batch_preview
from app.datagen.pool import SkeletonPool, build_pool
from app.evaluation.benchmark import GroundTruthOracle, run_benchmark
from app.evaluation.suites import BenchmarkSuite, build_soose, load_aif, load_nguyen, load_suite
from app.gp.evolution import as_regressor
from app.inference.regressor import NeuralRegressor, regress
from app.model.checkpoint import load_checkpoint, save_checkpoint
from app.model.networks import build_model, parameter_count
from app.model.training import train
from app.models.ConfigModels import InferenceConfig, RunConfig
from app.models.RecordModels import RunManifest, SooseVariant, SuiteName
from app.symbolic.prefix import to_infix_string
from app.utils.concurrency import set_default_workers
from app.utils.exceptions import EXIT_USAGE_ERROR, NSRError
from app.utils.file_utils import FileUtils, read_numeric_csv
from app.utils.logging_utils import configure_logging
from config.settings import Settings

# 配置日志记录器 | Configure the logger
logger = configure_logging(name=__name__)

SUMMARY_FILE = "summary.csv"
PREVIEW_FILE = "batch_preview.csv"
# 预览批次的独立随机流 | Separate random stream for the preview batch
PREVIEW_STREAM = 104729


def handle_errors(command):
    """
    把库异常映射为退出码：配置与数据错误为 2，其他运行错误为 1。

    Map library errors to exit codes: configuration and data errors exit 2,
    other runtime failures exit 1.
    """
    @functools.wraps(command)
    def wrapper(*args, **kwargs):
        try:
            return command(*args, **kwargs)
        except NSRError as error:
            logger.error(f"{command.__name__} failed: {error}")
            click.echo(f"Error: {error}", err=True)
            sys.exit(error.exit_code)
        except ValidationError as error:
            click.echo(f"Error: invalid configuration: {error}", err=True)
            sys.exit(EXIT_USAGE_ERROR)
    return wrapper


def load_run_config(config_path: Optional[str], seed: Optional[int]) -> RunConfig:
    config = RunConfig.from_yaml(config_path) if config_path else RunConfig()
    return config.with_seed(seed if seed is not None else config.generator.seed)


def start_manifest(command: str, config: RunConfig, arguments: Dict[str, Any]) -> RunManifest:
    return RunManifest(command=command, config=config.snapshot(), seed=config.generator.seed, arguments=arguments)


def write_manifest(file_utils: FileUtils, manifest: RunManifest, artifacts: Dict[str, str]) -> str:
    # 每个输出目录只有一个清单 | Exactly one manifest per output directory
    manifest = manifest.model_copy(update={"artifacts": artifacts}).finish()
    return file_utils.write_json(Settings.FileSettings.manifest_name, manifest.model_dump(mode="json"))


def common_options(command):
    command = click.option("--seed", type=int, default=None, help="Seed for every random stream.")(command)
    command = click.option("--config", "config_path", type=click.Path(exists=True, dir_okay=False), default=None,
                           help="YAML run configuration.")(command)
    command = click.option("--out", "out_dir", type=click.Path(file_okay=False), default=".",
                           show_default=True, help="Output directory.")(command)
    return command


@click.group()
@click.option("--threads", type=int, default=None, help="Worker threads (default: available cores).")
def cli(threads: Optional[int]) -> None:
    """SkeletonSR: pre-trained neural symbolic regression at desk scale."""
    try:
        set_default_workers(threads)
    except NSRError as error:
        click.echo(f"Error: {error}", err=True)
        sys.exit(error.exit_code)


@cli.command("gen-pool")
@click.option("--count", type=int, required=True, help="Number of skeletons.")
@click.option("--preview/--no-preview", default=False, help="Also dump one training batch drawn from the pool.")
@common_options
@handle_errors
def cmd_gen_pool(count: int, preview: bool, seed: Optional[int], config_path: Optional[str], out_dir: str) -> None:
    """Pre-sample a skeleton pool."""
    config = load_run_config(config_path, seed)
    manifest = start_manifest("gen-pool", config, {"count": count, "preview": preview})
    file_utils = FileUtils(out_dir)
    pool = build_pool(config.generator, count, np.random.default_rng(config.generator.seed))
    stats = pool.stats.as_dict()
    artifacts = {
        "pool": pool.save(file_utils, "pool.jsonl"),
        "stats": file_utils.write_json("pool_stats.json", stats),
    }
    if preview:
        batch = assemble_batch(pool, config.batch, np.random.default_rng([config.generator.seed, PREVIEW_STREAM]),
                               config.model.max_target_len)
        artifacts["preview"] = write_batch_preview(batch, file_utils, PREVIEW_FILE)
    write_manifest(file_utils, manifest, artifacts)
    click.echo(f"pool: {stats['count']} skeletons, unique fraction {stats['unique_fraction']:.4f}, "
               f"mean length {stats['mean_length']:.2f}")


@cli.command("train")
@click.option("--pool", "pool_path", type=click.Path(exists=True, dir_okay=False), required=True)
@click.option("--val-pool", "val_pool_path", type=click.Path(exists=True, dir_okay=False), default=None)
@click.option("--steps", type=int, required=True)
@click.option("--resume", "resume_path", type=click.Path(exists=True, dir_okay=False), default=None,
              help="Checkpoint to continue from; step numbering continues.")
@click.option("--model-config", "config_path", type=click.Path(exists=True, dir_okay=False), default=None,
              help="YAML run configuration.")
@click.option("--seed", type=int, default=None)
@click.option("--out", "out_dir", type=click.Path(file_okay=False), default=".", show_default=True)
@click.option("--progress/--no-progress", default=False)
@handle_errors
def cmd_train(pool_path: str, val_pool_path: Optional[str], steps: int, resume_path: Optional[str],
              config_path: Optional[str], seed: Optional[int], out_dir: str, progress: bool) -> None:
    """Train the set-to-sequence model on a skeleton pool."""
    if steps < 0:
        raise click.BadParameter("--steps must be non-negative")
    config = load_run_config(config_path, seed)
    manifest = start_manifest("train", config, {"pool": pool_path, "val_pool": val_pool_path, "steps": steps,
                                                "resume": resume_path})
    pool = SkeletonPool.load(pool_path)
    validation_pool = SkeletonPool.load(val_pool_path) if val_pool_path else None

    start_step = 0
    if resume_path:
        checkpoint = load_checkpoint(resume_path, expected_dim_x=config.model.dim_x)
        model = checkpoint.to_model(config.training.precision)
        start_step = checkpoint.step
        logger.info(f"Resuming from {resume_path} at step {start_step}")
    else:
        model = build_model(config.model, seed=config.training.seed, precision=config.training.precision)
    logger.info(f"Model has {parameter_count(model)} parameters")

    result = train(model, pool, config.batch, config.training, steps, validation_pool=validation_pool,
                   start_step=start_step, show_progress=progress)
    file_utils = FileUtils(out_dir)
    artifacts = {
        "checkpoint": save_checkpoint(model, file_utils.path("model.ckpt"), step=result.final_step),
        "trace": result.write_trace(file_utils, "trace.csv"),
    }
    write_manifest(file_utils, manifest, artifacts)
    click.echo(f"trained to step {result.final_step}; best validation loss {result.best_val_loss:.4f}")


@cli.command("regress")
@click.option("--checkpoint", "checkpoint_path", type=click.Path(exists=True, dir_okay=False), required=True)
@click.option("--data", "data_path", type=click.Path(exists=True, dir_okay=False), required=True,
              help="CSV with a header row; the last column is y.")
@click.option("--beam", type=int, default=None, help="Beam size.")
@click.option("--restarts", type=int, default=None, help="BFGS restarts per candidate.")
@common_options
@handle_errors
def cmd_regress(checkpoint_path: str, data_path: str, beam: Optional[int], restarts: Optional[int],
                seed: Optional[int], config_path: Optional[str], out_dir: str) -> None:
    """Recover an equation from a CSV data set."""
    config = load_run_config(config_path, seed)
    overrides = {key: value for key, value in (("beam_size", beam), ("bfgs_restarts", restarts)) if value is not None}
    inference = InferenceConfig.model_validate({**config.inference.model_dump(), **overrides})
    manifest = start_manifest("regress", config, {"checkpoint": checkpoint_path, "data": data_path,
                                                  "beam": inference.beam_size, "restarts": inference.bfgs_restarts})

    table = np.asarray(read_numeric_csv(data_path), dtype=np.float64)
    if table.shape[1] < 2:
        raise click.BadParameter("the data file needs at least one input column and one output column")
    model = load_checkpoint(checkpoint_path).to_model()
    result = regress(model, table[:, :-1], table[:, -1], inference)

    file_utils = FileUtils(out_dir)
    artifacts = {"report": result.write_report(file_utils, "report.jsonl")}
    write_manifest(file_utils, manifest, artifacts)
    click.echo(to_infix_string(result.expression))
    for record in result.records():
        click.echo(f"{record['rank']:>3}  score={record['score']:.6g}  mse={record['mse']:.6g}  "
                   f"ll={record['log_likelihood']:.3f}  {record['infix']}")


def _load_benchmark_suite(suite: SuiteName, suite_file: Optional[str], data_dir: Optional[str]) -> BenchmarkSuite:
    if suite_file:
        return load_suite(suite_file, name=suite.value)
    if suite is SuiteName.aif:
        return load_aif(data_dir)
    if suite is SuiteName.nguyen:
        return load_nguyen(data_dir)
    raise click.BadParameter(f"--suite {suite.value} needs --suite-file (build one with soose-build)")


@cli.command("eval")
@click.option("--suite", type=click.Choice([name.value for name in SuiteName]), required=True)
@click.option("--suite-file", type=click.Path(exists=True, dir_okay=False), default=None)
@click.option("--data-dir", type=click.Path(exists=True, file_okay=False), default=None,
              help="Directory with the bundled suites.")
@click.option("--regressor", "regressor_name", type=click.Choice(["neural", "gp", "oracle"]), default="neural",
              show_default=True)
@click.option("--checkpoint", "checkpoint_path", type=click.Path(exists=True, dir_okay=False), default=None)
@click.option("--beam", "beams", type=int, multiple=True, help="Beam sizes to sweep (neural only).")
@click.option("--points", "points", type=int, multiple=True, help="Test-time point counts to sweep.")
@click.option("--progress/--no-progress", default=False)
@common_options
@handle_errors
def cmd_eval(suite: str, suite_file: Optional[str], data_dir: Optional[str], regressor_name: str,
             checkpoint_path: Optional[str], beams: List[int], points: List[int], progress: bool,
             seed: Optional[int], config_path: Optional[str], out_dir: str) -> None:
    """Run a regressor over a benchmark suite; one report per sweep setting."""
    config = load_run_config(config_path, seed)
    suite_name = SuiteName(suite)
    arguments = {"suite": suite, "suite_file": suite_file, "regressor": regressor_name,
                 "checkpoint": checkpoint_path, "beams": list(beams), "points": list(points)}
    manifest = start_manifest("eval", config, arguments)
    benchmark_suite = _load_benchmark_suite(suite_name, suite_file, data_dir)

    model = None
    if regressor_name == "neural":
        if not checkpoint_path:
            raise click.BadParameter("--regressor neural needs --checkpoint")
        model = load_checkpoint(checkpoint_path).to_model()
    beam_sweep = list(beams) if beams and regressor_name == "neural" else [config.inference.beam_size]
    points_sweep = list(points) or [config.metric.test_points]

    file_utils = FileUtils(out_dir)
    artifacts: Dict[str, str] = {}
    summary = []
    for beam in beam_sweep:
        if regressor_name == "neural":
            inference = InferenceConfig.model_validate({**config.inference.model_dump(), "beam_size": beam})
            regressor = NeuralRegressor(model, inference, workers=None)
        elif regressor_name == "oracle":
            regressor = GroundTruthOracle()
        for count in points_sweep:
            if regressor_name == "gp":
                # 每个点数设置一组进化轨迹 | One set of evolution traces per points setting
                regressor = as_regressor(config.gp, trace_utils=file_utils, trace_prefix=f"gp_trace_points{count}")
            report = run_benchmark(regressor, benchmark_suite, config.metric, test_points=count,
                                   rng=np.random.default_rng(config.generator.seed), show_progress=progress)
            name = f"report_{suite_name.value}_{regressor_name}_beam{beam}_points{count}.csv"
            artifacts[name] = report.write(file_utils, name)
            if regressor_name == "gp":
                artifacts.update({f"gp_trace_points{count}_{record}": path for record, path in regressor.traces.items()})
            row = report.summary_row(regressor=regressor_name, beam=beam, points=count)
            summary.append(row)
            click.echo(f"beam={beam} points={count} " + " ".join(
                f"{metric}={row[f'{metric}_mean']:.3f}" for metric in ("a1_iid", "a1_ood", "a2_iid", "a2_ood")))

    columns = list(summary[0])
    artifacts["summary"] = file_utils.write_csv(SUMMARY_FILE, columns, [[row[key] for key in columns] for row in summary])
    write_manifest(file_utils, manifest, artifacts)


@cli.command("soose-build")
@click.option("--train-pool", "train_pool_path", type=click.Path(exists=True, dir_okay=False), required=True)
@click.option("--pool", "pool_path", type=click.Path(exists=True, dir_okay=False), default=None,
              help="Candidate pool; sampled fresh when omitted.")
@click.option("--candidates", type=int, default=None, help="Size of a freshly sampled candidate pool.")
@click.option("--count", type=int, required=True)
@click.option("--variant", type=click.Choice([variant.value for variant in SooseVariant], case_sensitive=False),
              required=True)
@common_options
@handle_errors
def cmd_soose_build(train_pool_path: str, pool_path: Optional[str], candidates: Optional[int], count: int,
                    variant: str, seed: Optional[int], config_path: Optional[str], out_dir: str) -> None:
    """Build a SOOSE suite disjoint from a training pool."""
    config = load_run_config(config_path, seed)
    variant = SooseVariant(variant.upper())
    arguments = {"train_pool": train_pool_path, "pool": pool_path, "candidates": candidates, "count": count,
                 "variant": variant.value}
    manifest = start_manifest("soose-build", config, arguments)
    rng = np.random.default_rng(config.generator.seed)
    train_pool = SkeletonPool.load(train_pool_path)
    if pool_path:
        pool = SkeletonPool.load(pool_path)
    else:
        pool = build_pool(config.generator, candidates or 4 * count, rng)
    suite = build_soose(pool, train_pool, count, variant, rng, config.batch)

    file_utils = FileUtils(out_dir)
    file_name = f"{suite.name}.jsonl"
    artifacts = {"suite": suite.save(file_utils, file_name),
                 "details": file_utils.write_json("soose_details.json", suite.details)}
    write_manifest(file_utils, manifest, artifacts)
    click.echo(f"{suite.name}: {len(suite)} records, {suite.details['rejected_overlaps']} overlapping skeletons "
               f"rejected, disjoint from {suite.details['train_unique']} training skeletons")


if __name__ == "__main__":
    cli()
