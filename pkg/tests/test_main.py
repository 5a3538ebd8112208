import json
import sys
from pathlib import Path
from typing import TYPE_CHECKING

import pytest

from src.lagranflow.errors import IntegrationDivergedError
from src.lagranflow.experiments import Artifact, ExperimentResult
from src.lagranflow.main import (
    EXIT_CONFIGURATION,
    EXIT_NUMERICAL,
    EXIT_OK,
    MANIFEST_NAME,
    main,
    run_experiment,
)
from src.lagranflow.outputs import read_rows

if TYPE_CHECKING:
    from _pytest.monkeypatch import MonkeyPatch


SMALL_CONFIG = """\
[physics]
nu = 0.1

[grid]
spatial_cutoff = 2
substeps = 16

[noise]
time_modes = 2

[run]
seed = 3
kicks = 2

[output]
directory = "results"
"""


@pytest.fixture
def config_path(tmp_path: Path) -> Path:
    """Маленькая конфигурация с каталогом результатов внутри tmp_path."""
    path = tmp_path / 'config.toml'
    path.write_text(SMALL_CONFIG, encoding='utf-8')
    return path


def test_simulate_writes_manifest_and_trajectory(config_path: Path) -> None:
    """Тест: успешный запуск пишет манифест, CSV траектории и возвращает 0."""
    code = run_experiment('simulate', config_path, environ={})

    results = config_path.parent / 'results'
    manifest = json.loads((results / MANIFEST_NAME).read_text(encoding='utf-8'))
    rows = read_rows(results / 'trajectory.csv')

    assert code == EXIT_OK
    assert manifest['subcommand'] == 'simulate'
    assert manifest['seed'] == 3  # noqa: PLR2004
    assert len(manifest['config_hash']) == 64  # noqa: PLR2004
    assert manifest['config']['physics'] == {'nu': 0.1}
    assert [stream['stage'] for stream in manifest['streams']] == ['initial', 'chain']
    assert len(rows) == 3  # noqa: PLR2004
    assert rows[0]['y1'] == 1.0
    assert rows[0]['energy'] == 0.0
    assert (results / 'plot_trajectory.py').exists()


def test_seed_environment_reaches_manifest(config_path: Path) -> None:
    """Тест: LAGRANFLOW_SEED заменяет run.seed в манифесте и метаданных."""
    code = run_experiment('simulate', config_path, environ={'LAGRANFLOW_SEED': '8'})

    results = config_path.parent / 'results'
    manifest = json.loads((results / MANIFEST_NAME).read_text(encoding='utf-8'))
    sidecar = json.loads((results / 'trajectory.json').read_text(encoding='utf-8'))

    assert code == EXIT_OK
    assert manifest['seed'] == 8  # noqa: PLR2004
    assert sidecar['metadata']['seed'] == 8  # noqa: PLR2004


def test_missing_required_key_exits_with_configuration_code(tmp_path: Path) -> None:
    """Тест: отсутствие physics.nu дает код 2 и ничего не пишет."""
    path = tmp_path / 'config.toml'
    path.write_text('[run]\nseed = 1\n', encoding='utf-8')

    assert run_experiment('simulate', path, environ={}) == EXIT_CONFIGURATION
    assert not (tmp_path / 'results').exists()


def test_missing_config_file(tmp_path: Path) -> None:
    """Тест: несуществующий файл конфигурации дает код 2."""
    assert run_experiment('simulate', tmp_path / 'missing.toml', environ={}) == EXIT_CONFIGURATION


def test_unknown_subcommand(config_path: Path) -> None:
    """Тест: неизвестная подкоманда дает код 2."""
    assert run_experiment('evolve', config_path, environ={}) == EXIT_CONFIGURATION


def test_bad_override_exits_with_configuration_code(config_path: Path) -> None:
    """Тест: недопустимое значение из --set дает код 2."""
    assert run_experiment('simulate', config_path, ['grid.substeps=4'], environ={}) == EXIT_CONFIGURATION


def test_numerical_failure_keeps_manifest(config_path: Path, mocker) -> None:
    """Тест: численный отказ дает код 1, манифест уже записан."""
    failing = mocker.Mock(side_effect=IntegrationDivergedError(4, 2))
    mocker.patch.dict('src.lagranflow.main.EXPERIMENTS', {'simulate': failing})

    code = run_experiment('simulate', config_path, environ={})

    assert code == EXIT_NUMERICAL
    assert (config_path.parent / 'results' / MANIFEST_NAME).exists()
    assert not (config_path.parent / 'results' / 'trajectory.csv').exists()


def test_invalid_artifact_is_numerical_failure(config_path: Path, mocker) -> None:
    """Тест: таблица, не совпадающая со схемой, дает код 1."""
    broken = ExperimentResult((Artifact('trajectory', [{'k': 0}]),))
    mocker.patch.dict('src.lagranflow.main.EXPERIMENTS', {'simulate': mocker.Mock(return_value=broken)})

    assert run_experiment('simulate', config_path, environ={}) == EXIT_NUMERICAL


def test_programming_error_is_not_a_numerical_failure(config_path: Path, mocker) -> None:
    """Тест: ошибка программы не маскируется кодом 1, а доходит до вызывающего."""
    broken = mocker.Mock(side_effect=TypeError('unexpected keyword argument'))
    mocker.patch.dict('src.lagranflow.main.EXPERIMENTS', {'simulate': broken})

    with pytest.raises(TypeError, match='unexpected keyword'):
        run_experiment('simulate', config_path, environ={})

    assert (config_path.parent / 'results' / MANIFEST_NAME).exists()


def test_main_exit_codes(monkeypatch: 'MonkeyPatch', config_path: Path, mocker) -> None:
    """Тест: main завершает процесс кодом эксперимента, неверные аргументы дают 2."""
    mocker.patch('src.lagranflow.main.configure_logging')
    monkeypatch.delenv('LAGRANFLOW_SEED', raising=False)
    monkeypatch.setattr(sys, 'argv', ['lagranflow', 'simulate', '--config', str(config_path)])

    with pytest.raises(SystemExit) as success:
        main()

    monkeypatch.setattr(sys, 'argv', ['lagranflow', 'simulate'])
    with pytest.raises(SystemExit) as failure:
        main()

    assert success.value.code == EXIT_OK
    assert failure.value.code == EXIT_CONFIGURATION
