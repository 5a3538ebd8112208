"""Модуль обработки аргументов командной строки lagranflow.

Этот модуль разбирает подкоманду эксперимента, путь к конфигурации и переопределения
и предоставляет их в виде структурированного объекта.

Использование:
    python -m src.lagranflow.main simulate --config=config.toml --set run.seed=7

Структуры:
    CLIArgs (Dataclass):
        Представляет разобранные аргументы командной строки.

Функции:
    parse_args: Разбирает аргументы командной строки и возвращает их в виде объекта CLIArgs.

Пример использования:
    >>> args = parse_args(['oracle', '--config', 'config.toml'])
    >>> print(args.subcommand)  # 'oracle'
"""

import argparse
from dataclasses import dataclass
from pathlib import Path
from typing import TYPE_CHECKING

from src.lagranflow.logger import DEFAULT_LOG_LEVEL, LogLevel

if TYPE_CHECKING:
    from collections.abc import Sequence


SUBCOMMANDS = (
    'simulate',
    'steer',
    'linctl',
    'couple',
    'density',
    'ep',
    'stationarity',
    'converge',
    'oracle',
    'gc-check',
)


@dataclass(frozen=True)
class CLIArgs:
    """Аргументы командной строки lagranflow."""

    subcommand: str
    config: Path
    overrides: tuple[str, ...] = ()
    log_level: LogLevel = LogLevel.info
    log_file: Path | None = None


def parse_args(argv: 'Sequence[str] | None' = None) -> CLIArgs:
    """Разбирает аргументы командной строки.

    Args:
        argv: Аргументы без имени программы (по умолчанию sys.argv[1:]).

    Returns:
        CLIArgs: Объект с разобранными аргументами.
    """
    parser = argparse.ArgumentParser(
        prog='lagranflow',
        description='Двумерное уравнение Навье–Стокса со случайными толчками и лагранжевой частицей',
    )
    parser.add_argument('subcommand', choices=SUBCOMMANDS, help='Эксперимент')
    parser.add_argument('--config', type=Path, required=True, help='Путь к файлу конфигурации TOML')
    parser.add_argument(
        '--set',
        dest='overrides',
        action='append',
        default=[],
        metavar='SECTION.KEY=VALUE',
        help='Переопределение ключа конфигурации (значение в синтаксисе TOML)',
    )
    parser.add_argument(
        '--log-level',
        choices=[level.value for level in LogLevel],
        default=DEFAULT_LOG_LEVEL,
        help='Уровень журнала',
    )
    parser.add_argument('--log-file', type=Path, help='Файл для копии журнала')

    args = parser.parse_args(argv)
    return CLIArgs(
        subcommand=args.subcommand,
        config=args.config,
        overrides=tuple(args.overrides),
        log_level=LogLevel(args.log_level),
        log_file=args.log_file,
    )
