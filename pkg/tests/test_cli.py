import sys
from pathlib import Path
from typing import TYPE_CHECKING

import pytest

from src.lagranflow.cli import SUBCOMMANDS, CLIArgs, parse_args
from src.lagranflow.experiments import EXPERIMENTS
from src.lagranflow.logger import LogLevel

if TYPE_CHECKING:
    from _pytest.monkeypatch import MonkeyPatch


def test_parse_args_with_config(monkeypatch: 'MonkeyPatch', tmp_path: Path) -> None:
    """Тест: подкоманда и --config разбираются из sys.argv."""
    config_file = tmp_path / 'config.toml'
    config_file.touch()

    monkeypatch.setattr(sys, 'argv', ['lagranflow', 'simulate', '--config', str(config_file)])

    args = parse_args()

    assert isinstance(args, CLIArgs)
    assert args.subcommand == 'simulate'
    assert args.config == config_file
    assert args.overrides == ()
    assert args.log_level is LogLevel.info
    assert args.log_file is None


def test_parse_args_with_nonexistent_config() -> None:
    """Тест: несуществующий путь просто передается дальше."""
    fake_path = Path('/non/existing/config.toml')

    args = parse_args(['oracle', '--config', str(fake_path)])

    assert args.config == fake_path


def test_parse_args_overrides_and_logging(tmp_path: Path) -> None:
    """Тест: --set накапливается по порядку, уровень и файл журнала разбираются."""
    log_file = tmp_path / 'run.log'

    args = parse_args(
        [
            'gc-check',
            '--config=config.toml',
            '--set',
            'run.seed=3',
            '--set',
            'physics.nu=0.2',
            '--log-level',
            'debug',
            '--log-file',
            str(log_file),
        ]
    )

    assert args.subcommand == 'gc-check'
    assert args.overrides == ('run.seed=3', 'physics.nu=0.2')
    assert args.log_level is LogLevel.debug
    assert args.log_file == log_file


def test_subcommands_match_experiments() -> None:
    """Тест: каждой подкоманде CLI соответствует эксперимент."""
    assert set(SUBCOMMANDS) == set(EXPERIMENTS)


@pytest.mark.parametrize(
    'argv',
    [
        ['simulate'],
        ['unknown', '--config', 'config.toml'],
        ['simulate', '--config', 'config.toml', '--invalid'],
        ['simulate', '--config', 'config.toml', '--log-level', 'trace'],
    ],
)
def test_parse_args_invalid_argument(argv: list[str]) -> None:
    """Тест: неверные аргументы вызывают SystemExit."""
    with pytest.raises(SystemExit):
        parse_args(argv)
