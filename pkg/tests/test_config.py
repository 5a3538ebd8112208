from pathlib import Path
from typing import TYPE_CHECKING

import pytest

from src.lagranflow.config import (
    DEFAULT_FORMATS,
    DEFAULT_KICKS,
    DEFAULT_SEED,
    ExperimentConfig,
    apply_override,
    get_config,
    reset_config,
    set_config,
)
from src.lagranflow.dynamics import DEFAULT_SUBSTEPS
from src.lagranflow.errors import ConfigurationError
from src.lagranflow.measures_ep import DensityMethod

if TYPE_CHECKING:
    from collections.abc import Generator
    from typing import Any


@pytest.fixture
def valid_config(tmp_path: Path) -> Path:
    """Создает TOML-файл с корректной конфигурацией."""
    config_path = tmp_path / 'config.toml'
    config_path.write_text(
        """\
[physics]
nu = 0.2

[grid]
spatial_cutoff = 3
substeps = 32

[noise]
time_modes = 4
kappa = 0.7

[run]
seed = 11
kicks = 5
initial_position = [0.5, 1.5]

[output]
directory = "out"
formats = ["csv"]

[density]
method = "kde"
bandwidth = 0.4
""",
        encoding='utf-8',
    )
    return config_path


@pytest.fixture
def clean_container() -> 'Generator[None, None, None]':
    """Очищает глобальную конфигурацию до и после теста."""
    reset_config()
    yield
    reset_config()


def test_load_valid_config(valid_config: Path) -> None:
    """Тест загрузки корректного TOML-файла."""
    config = ExperimentConfig.from_toml(valid_config, environ={})

    assert config.physics.nu == 0.2  # noqa: PLR2004
    assert config.grid.spatial_cutoff == 3  # noqa: PLR2004
    assert config.grid.substeps == 32  # noqa: PLR2004
    assert config.noise.spatial_cutoff == 3  # noqa: PLR2004
    assert config.noise.time_modes == 4  # noqa: PLR2004
    assert config.noise.kappa == 0.7  # noqa: PLR2004
    assert config.run.seed == 11  # noqa: PLR2004
    assert config.run.initial_position == (0.5, 1.5)
    assert config.output.directory == (valid_config.parent / 'out').resolve()
    assert config.output.formats == ('csv',)
    assert config.density.method is DensityMethod.kde


def test_default_values() -> None:
    """Тест: незаданные секции получают значения по умолчанию, обязателен только physics.nu."""
    config = ExperimentConfig.from_dict({'physics': {'nu': 0.1}})

    assert config.run.seed == DEFAULT_SEED
    assert config.run.kicks == DEFAULT_KICKS
    assert config.grid.substeps == DEFAULT_SUBSTEPS
    assert config.output.formats == DEFAULT_FORMATS
    assert config.oracle.chain is None


def test_load_missing_config_file() -> None:
    """Тест обработки ошибки при отсутствии TOML-файла."""
    with pytest.raises(FileNotFoundError, match='Файл конфигурации .* не найден'):
        ExperimentConfig.from_toml(Path('non_existing_config.toml'))


def test_invalid_toml_format(tmp_path: Path) -> None:
    """Тест обработки ошибки при некорректном формате TOML."""
    invalid_config = tmp_path / 'invalid.toml'
    invalid_config.write_text('[physics]\nnu = !!invalid', encoding='utf-8')

    with pytest.raises(ConfigurationError, match='Ошибка при разборе TOML'):
        ExperimentConfig.from_toml(invalid_config)


@pytest.mark.parametrize(
    ('config_data', 'expected_error'),
    [
        ({}, 'physics.nu'),
        ({'physics': {'nu': -1.0}}, 'physics.nu должен быть положительным'),
        ({'physics': {'nu': 0.1}, 'grid': {'substeps': 8}}, 'grid.substeps'),
        ({'physics': {'nu': 0.1}, 'grid': {'spatial_cutoff': 1}}, 'grid.spatial_cutoff'),
        ({'physics': {'nu': 0.1}, 'noise': {'kappa': 0.0}}, 'noise.kappa'),
        ({'physics': {'nu': 0.1}, 'noise': {'spatial_cutoff': 9}}, 'noise.spatial_cutoff'),
        ({'physics': {'nu': 0.1}, 'run': {'seed': -1}}, 'run.seed'),
        ({'physics': {'nu': 0.1}, 'run': {'kicks': True}}, 'run.kicks'),
        ({'physics': {'nu': 0.1}, 'output': {'formats': ['xml']}}, 'output.formats'),
        ({'physics': {'nu': 0.1}, 'steer': {'delta': 0.5}}, 'steer.delta'),
        ({'physics': {'nu': 0.1}, 'coupling': {'contraction': 1.5}}, 'coupling.contraction'),
        ({'physics': {'nu': 0.1}, 'coupling': {'distance': 0.1}}, 'coupling.distance'),
        ({'physics': {'nu': 0.1}, 'density': {'method': 'spline'}}, 'density.method'),
        ({'physics': {'nu': 0.1}, 'oracle': {'level': 4}}, 'oracle.level'),
        ({'physics': {'nu': 0.1}, 'oracle': {'chain': 'missing.csv'}}, 'oracle.chain'),
        ({'physics': {'nu': 0.1, 'mu': 1.0}}, 'Неизвестный ключ physics.mu'),
        ({'physics': {'nu': 0.1}, 'extra': {}}, 'Неизвестная секция extra'),
    ],
)
def test_invalid_config_values(tmp_path: Path, config_data: dict[str, 'Any'], expected_error: str) -> None:
    """Тест: ошибка называет ключ в виде секция.ключ."""
    with pytest.raises(ConfigurationError, match=expected_error):
        ExperimentConfig.from_dict(config_data, tmp_path)


def test_overrides_and_seed_environment(valid_config: Path) -> None:
    """Тест: --set меняет ключи, LAGRANFLOW_SEED меняет только run.seed."""
    config = ExperimentConfig.from_toml(
        valid_config,
        overrides=['run.kicks=9', 'physics.nu=0.05', 'steer.target=[1.0, 1.0]'],
        environ={'LAGRANFLOW_SEED': '42'},
    )

    assert config.run.kicks == 9  # noqa: PLR2004
    assert config.physics.nu == 0.05  # noqa: PLR2004
    assert config.steer.target == (1.0, 1.0)
    assert config.run.seed == 42  # noqa: PLR2004
    assert config.noise.kappa == 0.7  # noqa: PLR2004


def test_seed_environment_must_be_integer(valid_config: Path) -> None:
    """Тест: нецелое LAGRANFLOW_SEED отклоняется."""
    with pytest.raises(ConfigurationError, match='LAGRANFLOW_SEED'):
        ExperimentConfig.from_toml(valid_config, environ={'LAGRANFLOW_SEED': 'seven'})


@pytest.mark.parametrize('override', ['run.kicks', 'kicks=5', 'run.kicks=[1,'])
def test_malformed_override(override: str) -> None:
    """Тест: переопределение должно иметь вид секция.ключ=литерал TOML."""
    with pytest.raises(ConfigurationError):
        apply_override({}, override)


def test_digest_is_stable(valid_config: Path) -> None:
    """Тест: хэш конфигурации детерминирован и зависит от значений."""
    first = ExperimentConfig.from_toml(valid_config, environ={})
    second = ExperimentConfig.from_toml(valid_config, environ={})
    other = ExperimentConfig.from_toml(valid_config, overrides=['run.seed=12'], environ={})

    assert first.digest() == second.digest()
    assert first.digest() != other.digest()
    assert first.to_dict()['density']['method'] == 'kde'


def test_global_config_container(valid_config: Path, clean_container: None) -> None:
    """Тест: конфигурацию можно установить один раз, чтение без установки запрещено."""
    with pytest.raises(RuntimeError, match='не установлена'):
        get_config()

    config = ExperimentConfig.from_toml(valid_config, environ={})
    set_config(config)

    assert get_config() is config
    with pytest.raises(RuntimeError, match='уже установлена'):
        set_config(config)
