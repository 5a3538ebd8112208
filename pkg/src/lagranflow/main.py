"""Главный модуль lagranflow.

Этот модуль выполняет основные шаги:
1. Загружает конфигурацию с переопределениями.
2. Пишет manifest.json до любых данных.
3. Запускает эксперимент подкоманды и записывает его таблицы.
4. Переводит ошибки в коды выхода: 0 успех, 1 численный отказ, 2 ошибка конфигурации.

Использование:
    python -m src.lagranflow.main simulate --config=config.toml
"""

import json
import os
import sys
from dataclasses import asdict, dataclass
from datetime import UTC, datetime
from typing import TYPE_CHECKING, Any

from src.lagranflow import __version__
from src.lagranflow.cli import parse_args
from src.lagranflow.config import ExperimentConfig, get_config, reset_config, set_config
from src.lagranflow.errors import ConfigurationError, LagranflowError
from src.lagranflow.experiments import EXPERIMENTS, stream_identifiers
from src.lagranflow.logger import configure_logging, get_logger
from src.lagranflow.outputs import to_jsonable, write_outputs

if TYPE_CHECKING:
    from collections.abc import Mapping, Sequence
    from pathlib import Path


EXIT_OK = 0
EXIT_NUMERICAL = 1
EXIT_CONFIGURATION = 2
MANIFEST_NAME = 'manifest.json'


@dataclass(frozen=True)
class RunManifest:
    """Данные для воспроизведения запуска."""

    subcommand: str
    config_hash: str
    seed: int
    version: str
    started_at: str
    streams: list[dict[str, Any]]
    config: dict[str, Any]

    @classmethod
    def build(cls, subcommand: str, config: ExperimentConfig) -> 'RunManifest':
        """Манифест для конфигурации и подкоманды."""
        return cls(
            subcommand=subcommand,
            config_hash=config.digest(),
            seed=config.run.seed,
            version=__version__,
            started_at=datetime.now(UTC).isoformat(),
            streams=list(stream_identifiers(subcommand, config.run.seed)),
            config=config.to_dict(),
        )

    def write(self, directory: 'Path') -> 'Path':
        """Пишет manifest.json."""
        directory.mkdir(parents=True, exist_ok=True)
        path = directory / MANIFEST_NAME
        path.write_text(json.dumps(asdict(self), ensure_ascii=False, indent=2, sort_keys=True), encoding='utf-8')
        return path


def load_config(
    config_path: 'Path', overrides: 'Sequence[str]' = (), environ: 'Mapping[str, str] | None' = None
) -> ExperimentConfig:
    """Загружает конфигурацию и делает ее глобальной."""
    config = ExperimentConfig.from_toml(config_path, overrides, os.environ if environ is None else environ)
    reset_config()
    set_config(config)
    return config


def run_experiment(
    subcommand: str,
    config_path: 'Path',
    overrides: 'Sequence[str]' = (),
    environ: 'Mapping[str, str] | None' = None,
) -> int:
    """Запускает эксперимент и возвращает код выхода.

    Args:
        subcommand: Имя подкоманды из EXPERIMENTS.
        config_path: Путь к TOML-файлу.
        overrides: Строки `секция.ключ=значение`.
        environ: Окружение для LAGRANFLOW_SEED.

    Returns:
        int: 0 при успехе, 1 при численном отказе или ошибке записи, 2 при ошибке конфигурации.

    Raises:
        Exception: Ошибки самой программы не превращаются в код выхода; их вместе с трассировкой
            пишет в журнал `sys.excepthook`.
    """
    logger = get_logger()
    if subcommand not in EXPERIMENTS:
        logger.error('Ошибка: Неизвестная подкоманда', subcommand=subcommand)
        return EXIT_CONFIGURATION

    try:
        load_config(config_path, overrides, environ)
    except FileNotFoundError:
        logger.error('Ошибка: Файл конфигурации не найден', path=str(config_path))
        return EXIT_CONFIGURATION
    except ConfigurationError as e:
        logger.error('Ошибка: Некорректная конфигурация', error=str(e))
        return EXIT_CONFIGURATION

    config = get_config()
    logger.info('Конфигурация загружена', subcommand=subcommand, seed=config.run.seed, config_hash=config.digest())
    output = config.output

    try:
        manifest = RunManifest.build(subcommand, config).write(output.directory)
        logger.info('Манифест записан', path=str(manifest))
        result = EXPERIMENTS[subcommand](config)
        for artifact in result.artifacts:
            write_outputs(
                artifact.rows,
                artifact.schema,
                output.directory,
                metadata={'subcommand': subcommand, 'seed': config.run.seed, **artifact.metadata},
                formats=output.formats,
                plot_script=output.plot_script,
            )
    except ConfigurationError as e:
        logger.error('Ошибка: Некорректная конфигурация', error=str(e))
        return EXIT_CONFIGURATION
    except LagranflowError as e:
        logger.error('Ошибка эксперимента', subcommand=subcommand, error_type=type(e).__name__, error=str(e))
        return EXIT_NUMERICAL
    except OSError as e:
        logger.error('Ошибка записи результатов', path=str(e.filename), error=str(e))
        return EXIT_NUMERICAL

    logger.info('Эксперимент завершен', subcommand=subcommand, summary=to_jsonable(result.summary))
    return EXIT_OK


def main() -> None:
    """Точка входа CLI."""
    try:
        args = parse_args()
    except SystemExit as e:
        get_logger().error('Ошибка: Некорректные аргументы командной строки.')
        sys.exit(EXIT_CONFIGURATION if e.code else EXIT_OK)

    configure_logging(log_file=args.log_file, level=args.log_level)
    sys.exit(run_experiment(args.subcommand, args.config, args.overrides))


if __name__ == '__main__':
    main()
