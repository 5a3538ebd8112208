"""Конфигурация эксперимента lagranflow.

Этот модуль объединяет:
- Чтение TOML-файла с секциями physics, grid, noise, run, output, steer, coupling, density, oracle
- Валидацию значений с указанием ключа в виде `секция.ключ`
- Переопределения `--set секция.ключ=значение` и переменную окружения LAGRANFLOW_SEED
- Глобальный контейнер `set_config` / `get_config`

Классы:
    ExperimentConfig: Полная конфигурация эксперимента.

Пример использования:
    >>> config = ExperimentConfig.from_toml(Path('config.toml'), overrides=['run.seed=7'])
    >>> config.run.seed
    7
"""

import hashlib
import json
import math
import os
import tomllib
from dataclasses import asdict, dataclass, field, fields
from pathlib import Path
from typing import TYPE_CHECKING

from src.lagranflow.dynamics import DEFAULT_SUBSTEPS, MIN_SUBSTEPS
from src.lagranflow.errors import ConfigurationError, InvalidArgumentError
from src.lagranflow.measures_ep import DEFAULT_BINS, DEFAULT_BURN_IN, DensityMethod
from src.lagranflow.noise import DEFAULT_SPATIAL_CUTOFF, NoiseSpec

if TYPE_CHECKING:
    from collections.abc import Mapping, Sequence
    from typing import Any


SEED_ENVIRONMENT_VARIABLE = 'LAGRANFLOW_SEED'
DEFAULT_SEED = 0
DEFAULT_TRAJECTORIES = 4
DEFAULT_KICKS = 100
DEFAULT_WORKERS = 1
DEFAULT_INITIAL_POSITION = (1.0, 2.0)
DEFAULT_OUTPUT_DIR = Path('results')
DEFAULT_FORMATS = ('csv', 'json')
DEFAULT_TARGET = (1.5, 2.5)
DEFAULT_STEER_DELTA = 0.25
DEFAULT_KAPPA_TARGET = 0.05
DEFAULT_PAIR_DISTANCE = 1e-3
DEFAULT_CONTRACTION = 0.5
DEFAULT_PAIRS = 20
DEFAULT_REGULARIZATION = 1e-6
DEFAULT_LOCALITY_RADIUS = 1e-2
DEFAULT_WINDOW = 1
DEFAULT_DENSITY_STATES = 5
DEFAULT_ORACLE_POINTS = 10
DEFAULT_ORACLE_LEVEL = 2
SUPPORTED_FORMATS = frozenset({'csv', 'json'})


def _check(condition: bool, key: str, requirement: str, value: 'Any') -> None:
    if not condition:
        raise ConfigurationError(f'{key} должен быть {requirement}: {value!r}')


def _integer(value: 'Any', key: str, minimum: int) -> int:
    valid = isinstance(value, int) and not isinstance(value, bool) and value >= minimum
    _check(valid, key, f'целым ≥ {minimum}', value)
    return int(value)


def _real(value: 'Any', key: str) -> float:
    _check(isinstance(value, (int | float)) and not isinstance(value, bool), key, 'числом', value)
    _check(math.isfinite(value), key, 'конечным числом', value)
    return float(value)


def _pair(value: 'Any', key: str) -> tuple[float, float]:
    _check(isinstance(value, (list | tuple)) and len(value) == 2, key, 'парой чисел', value)  # noqa: PLR2004
    return _real(value[0], key), _real(value[1], key)


def _section(data: 'Mapping[str, Any]', name: str, allowed: 'Sequence[str]') -> dict[str, 'Any']:
    """Секция TOML; неизвестные ключи отвергаются."""
    section = data.get(name, {})
    _check(isinstance(section, dict), name, 'таблицей', section)
    for key in section:
        if key not in allowed:
            raise ConfigurationError(f'Неизвестный ключ {name}.{key}')
    return dict(section)


@dataclass(frozen=True)
class PhysicsConfig:
    """Секция [physics]."""

    nu: float

    @classmethod
    def from_dict(cls, data: 'Mapping[str, Any]') -> 'PhysicsConfig':
        """Вязкость обязательна."""
        section = _section(data, 'physics', ('nu',))
        if 'nu' not in section:
            raise ConfigurationError('Не задан обязательный ключ physics.nu')
        nu = _real(section['nu'], 'physics.nu')
        _check(nu > 0, 'physics.nu', 'положительным', nu)
        return cls(nu)


@dataclass(frozen=True)
class GridConfig:
    """Секция [grid]: отсечка Галеркина и подшаги RK4 на единичный интервал."""

    spatial_cutoff: int = DEFAULT_SPATIAL_CUTOFF
    substeps: int = DEFAULT_SUBSTEPS

    @classmethod
    def from_dict(cls, data: 'Mapping[str, Any]') -> 'GridConfig':
        """Отсечка не меньше 2 (носитель управления), подшагов не меньше 16."""
        section = _section(data, 'grid', ('spatial_cutoff', 'substeps'))
        return cls(
            spatial_cutoff=_integer(section.get('spatial_cutoff', DEFAULT_SPATIAL_CUTOFF), 'grid.spatial_cutoff', 2),
            substeps=_integer(section.get('substeps', DEFAULT_SUBSTEPS), 'grid.substeps', MIN_SUBSTEPS),
        )


def _noise_from_dict(data: 'Mapping[str, Any]', grid: GridConfig) -> NoiseSpec:
    """Секция [noise] в виде NoiseSpec; ошибки диапазонов переводятся в ConfigurationError."""
    names = [item.name for item in fields(NoiseSpec)]
    section = _section(data, 'noise', names)
    section.setdefault('spatial_cutoff', grid.spatial_cutoff)
    for name in ('spatial_cutoff', 'time_modes', 'sobolev_s'):
        if name in section:
            _integer(section[name], f'noise.{name}', 0)
    for name in ('kappa', 'beta', 'c0', 'delta', 'amplification'):
        if name in section:
            section[name] = _real(section[name], f'noise.{name}')
    try:
        spec = NoiseSpec(**section)
    except InvalidArgumentError as error:
        raise ConfigurationError(str(error)) from error
    _check(
        spec.spatial_cutoff <= grid.spatial_cutoff,
        'noise.spatial_cutoff',
        f'не больше grid.spatial_cutoff = {grid.spatial_cutoff}',
        spec.spatial_cutoff,
    )
    return spec


@dataclass(frozen=True)
class RunConfig:
    """Секция [run]: зерно, размеры ансамбля, разгон и начальное состояние."""

    seed: int = DEFAULT_SEED
    trajectories: int = DEFAULT_TRAJECTORIES
    kicks: int = DEFAULT_KICKS
    burn_in: int = DEFAULT_BURN_IN
    workers: int = DEFAULT_WORKERS
    initial_position: tuple[float, float] = DEFAULT_INITIAL_POSITION
    initial_amplitude: float = 0.0

    @classmethod
    def from_dict(cls, data: 'Mapping[str, Any]') -> 'RunConfig':
        """Проверяет секцию [run]."""
        section = _section(data, 'run', [item.name for item in fields(cls)])
        amplitude = _real(section.get('initial_amplitude', 0.0), 'run.initial_amplitude')
        _check(amplitude >= 0, 'run.initial_amplitude', 'неотрицательным', amplitude)
        return cls(
            seed=_integer(section.get('seed', DEFAULT_SEED), 'run.seed', 0),
            trajectories=_integer(section.get('trajectories', DEFAULT_TRAJECTORIES), 'run.trajectories', 1),
            kicks=_integer(section.get('kicks', DEFAULT_KICKS), 'run.kicks', 0),
            burn_in=_integer(section.get('burn_in', DEFAULT_BURN_IN), 'run.burn_in', 0),
            workers=_integer(section.get('workers', DEFAULT_WORKERS), 'run.workers', 1),
            initial_position=_pair(section.get('initial_position', DEFAULT_INITIAL_POSITION), 'run.initial_position'),
            initial_amplitude=amplitude,
        )


@dataclass(frozen=True)
class OutputConfig:
    """Секция [output]."""

    directory: Path = DEFAULT_OUTPUT_DIR
    formats: tuple[str, ...] = DEFAULT_FORMATS
    plot_script: bool = True

    @classmethod
    def from_dict(cls, data: 'Mapping[str, Any]', base: Path) -> 'OutputConfig':
        """Относительный каталог отсчитывается от каталога файла конфигурации."""
        section = _section(data, 'output', ('directory', 'formats', 'plot_script'))
        directory = section.get('directory', str(DEFAULT_OUTPUT_DIR))
        _check(isinstance(directory, str) and directory != '', 'output.directory', 'непустой строкой', directory)
        formats = section.get('formats', list(DEFAULT_FORMATS))
        _check(
            isinstance(formats, list) and bool(formats) and set(formats) <= SUPPORTED_FORMATS,
            'output.formats',
            f'непустым подмножеством {sorted(SUPPORTED_FORMATS)}',
            formats,
        )
        plot_script = section.get('plot_script', True)
        _check(isinstance(plot_script, bool), 'output.plot_script', 'логическим', plot_script)
        return cls(directory=(base / directory).resolve(), formats=tuple(formats), plot_script=plot_script)


@dataclass(frozen=True)
class SteerConfig:
    """Секция [steer]: цель частицы, ширина отсечки линейного управления и верхняя граница поиска κ."""

    target: tuple[float, float] = DEFAULT_TARGET
    delta: float = DEFAULT_STEER_DELTA
    kappa_target: float = DEFAULT_KAPPA_TARGET

    @classmethod
    def from_dict(cls, data: 'Mapping[str, Any]') -> 'SteerConfig':
        """0 < delta ≤ 1/4, kappa_target > 0."""
        section = _section(data, 'steer', ('target', 'delta', 'kappa_target'))
        delta = _real(section.get('delta', DEFAULT_STEER_DELTA), 'steer.delta')
        _check(0 < delta <= 0.25, 'steer.delta', 'из интервала (0, 1/4]', delta)  # noqa: PLR2004
        kappa = _real(section.get('kappa_target', DEFAULT_KAPPA_TARGET), 'steer.kappa_target')
        _check(kappa > 0, 'steer.kappa_target', 'положительным', kappa)
        return cls(target=_pair(section.get('target', DEFAULT_TARGET), 'steer.target'), delta=delta, kappa_target=kappa)


@dataclass(frozen=True)
class CouplingConfig:
    """Секция [coupling]."""

    distance: float = DEFAULT_PAIR_DISTANCE
    contraction: float = DEFAULT_CONTRACTION
    pairs: int = DEFAULT_PAIRS
    regularization: float = DEFAULT_REGULARIZATION
    locality_radius: float = DEFAULT_LOCALITY_RADIUS

    @classmethod
    def from_dict(cls, data: 'Mapping[str, Any]') -> 'CouplingConfig':
        """Расстояние внутри радиуса локальности, 0 < contraction < 1."""
        section = _section(data, 'coupling', [item.name for item in fields(cls)])
        values = {
            name: _real(section.get(name, getattr(cls, name)), f'coupling.{name}')
            for name in ('distance', 'contraction', 'regularization', 'locality_radius')
        }
        for name, value in values.items():
            _check(value > 0, f'coupling.{name}', 'положительным', value)
        _check(values['contraction'] < 1, 'coupling.contraction', 'меньше 1', values['contraction'])
        _check(
            values['distance'] <= values['locality_radius'],
            'coupling.distance',
            'не больше coupling.locality_radius',
            values['distance'],
        )
        return cls(pairs=_integer(section.get('pairs', DEFAULT_PAIRS), 'coupling.pairs', 1), **values)


@dataclass(frozen=True)
class DensityConfig:
    """Секция [density]: разбиение, метод, ширина ядра (0 означает правило по умолчанию), длина пути."""

    bins: int = DEFAULT_BINS
    method: DensityMethod = DensityMethod.histogram
    bandwidth: float = 0.0
    window: int = DEFAULT_WINDOW
    states: int = DEFAULT_DENSITY_STATES

    @classmethod
    def from_dict(cls, data: 'Mapping[str, Any]') -> 'DensityConfig':
        """Проверяет секцию [density]."""
        section = _section(data, 'density', [item.name for item in fields(cls)])
        method = section.get('method', str(DensityMethod.histogram))
        _check(method in {str(item) for item in DensityMethod}, 'density.method', 'histogram или kde', method)
        bandwidth = _real(section.get('bandwidth', 0.0), 'density.bandwidth')
        _check(0 <= bandwidth <= 1, 'density.bandwidth', 'из отрезка [0, 1]', bandwidth)
        return cls(
            bins=_integer(section.get('bins', DEFAULT_BINS), 'density.bins', 1),
            method=DensityMethod(method),
            bandwidth=bandwidth,
            window=_integer(section.get('window', DEFAULT_WINDOW), 'density.window', 1),
            states=_integer(section.get('states', DEFAULT_DENSITY_STATES), 'density.states', 1),
        )


@dataclass(frozen=True)
class OracleConfig:
    """Секция [oracle]: файл цепи (None означает цикл на трех состояниях), число точек, уровень."""

    chain: Path | None = None
    points: int = DEFAULT_ORACLE_POINTS
    level: int = DEFAULT_ORACLE_LEVEL

    @classmethod
    def from_dict(cls, data: 'Mapping[str, Any]', base: Path) -> 'OracleConfig':
        """Файл цепи должен существовать."""
        section = _section(data, 'oracle', ('chain', 'points', 'level'))
        chain = section.get('chain')
        path = None
        if chain is not None:
            _check(isinstance(chain, str), 'oracle.chain', 'строкой', chain)
            path = (base / chain).resolve()
            _check(path.is_file(), 'oracle.chain', 'существующим файлом', str(path))
        level = _integer(section.get('level', DEFAULT_ORACLE_LEVEL), 'oracle.level', 2)
        _check(level in {2, 3}, 'oracle.level', '2 или 3', level)
        points = _integer(section.get('points', DEFAULT_ORACLE_POINTS), 'oracle.points', 0)
        return cls(chain=path, points=points, level=level)


SECTIONS = ('physics', 'grid', 'noise', 'run', 'output', 'steer', 'coupling', 'density', 'oracle')


@dataclass(frozen=True)
class ExperimentConfig:
    """Конфигурация эксперимента.

    Собирается из словаря TOML; значения, не заданные в файле, берутся по умолчанию.
    Обязателен только `physics.nu`.
    """

    physics: PhysicsConfig
    grid: GridConfig = field(default_factory=GridConfig)
    noise: NoiseSpec = field(default_factory=NoiseSpec)
    run: RunConfig = field(default_factory=RunConfig)
    output: OutputConfig = field(default_factory=OutputConfig)
    steer: SteerConfig = field(default_factory=SteerConfig)
    coupling: CouplingConfig = field(default_factory=CouplingConfig)
    density: DensityConfig = field(default_factory=DensityConfig)
    oracle: OracleConfig = field(default_factory=OracleConfig)

    @classmethod
    def from_dict(cls, config_data: 'Mapping[str, Any]', base: Path | None = None) -> 'ExperimentConfig':
        """Создает конфигурацию из словаря.

        Args:
            config_data: Разобранный TOML.
            base: Каталог, от которого отсчитываются относительные пути.

        Returns:
            ExperimentConfig: Проверенная конфигурация.

        Raises:
            ConfigurationError: Если секция, ключ или значение недопустимы.
        """
        for name in config_data:
            if name not in SECTIONS:
                raise ConfigurationError(f'Неизвестная секция {name}')
        base = base or Path()
        grid = GridConfig.from_dict(config_data)
        return cls(
            physics=PhysicsConfig.from_dict(config_data),
            grid=grid,
            noise=_noise_from_dict(config_data, grid),
            run=RunConfig.from_dict(config_data),
            output=OutputConfig.from_dict(config_data, base),
            steer=SteerConfig.from_dict(config_data),
            coupling=CouplingConfig.from_dict(config_data),
            density=DensityConfig.from_dict(config_data),
            oracle=OracleConfig.from_dict(config_data, base),
        )

    @classmethod
    def from_toml(
        cls,
        config_path: Path,
        overrides: 'Sequence[str]' = (),
        environ: 'Mapping[str, str] | None' = None,
    ) -> 'ExperimentConfig':
        """Загружает конфигурацию из TOML-файла с переопределениями.

        Args:
            config_path: Путь к TOML-файлу.
            overrides: Строки `секция.ключ=значение`, значение в синтаксисе TOML.
            environ: Окружение (по умолчанию os.environ); учитывается только LAGRANFLOW_SEED.

        Returns:
            ExperimentConfig: Загруженная конфигурация.

        Raises:
            FileNotFoundError: Если файл не найден.
            ConfigurationError: Если TOML некорректен или значения не проходят проверку.
        """
        if not config_path.exists():
            raise FileNotFoundError(f'Файл конфигурации {config_path} не найден.')

        with config_path.open('rb') as f:
            try:
                config_data = tomllib.load(f)
            except tomllib.TOMLDecodeError as error:
                raise ConfigurationError(f'Ошибка при разборе TOML: {error}') from error

        for override in overrides:
            apply_override(config_data, override)
        apply_seed_environment(config_data, os.environ if environ is None else environ)
        return cls.from_dict(config_data, config_path.parent)

    def to_dict(self) -> dict[str, 'Any']:
        """Разрешенная конфигурация в виде словаря, пригодного для JSON."""
        return json.loads(json.dumps(asdict(self), default=str))

    def digest(self) -> str:
        """SHA-256 канонического JSON разрешенной конфигурации."""
        canonical = json.dumps(self.to_dict(), sort_keys=True, ensure_ascii=False, separators=(',', ':'))
        return hashlib.sha256(canonical.encode('utf-8')).hexdigest()


def apply_override(config_data: dict[str, 'Any'], override: str) -> None:
    """Применяет `секция.ключ=значение` к разобранному TOML.

    Raises:
        ConfigurationError: Если строка не имеет вида `секция.ключ=значение` или значение не TOML-литерал.
    """
    key, separator, literal = override.partition('=')
    section, dot, name = key.strip().partition('.')
    if not separator or not dot or not section or not name:
        raise ConfigurationError(f'Переопределение должно иметь вид секция.ключ=значение: {override!r}')
    try:
        value = tomllib.loads(f'value = {literal.strip()}')['value']
    except tomllib.TOMLDecodeError as error:
        raise ConfigurationError(f'Значение {key.strip()} не является литералом TOML: {literal!r}') from error
    table = config_data.setdefault(section, {})
    if not isinstance(table, dict):
        raise ConfigurationError(f'{section} должен быть таблицей')
    table[name] = value


def apply_seed_environment(config_data: dict[str, 'Any'], environ: 'Mapping[str, str]') -> None:
    """LAGRANFLOW_SEED заменяет run.seed и ничего больше."""
    raw = environ.get(SEED_ENVIRONMENT_VARIABLE)
    if raw is None:
        return
    try:
        seed = int(raw)
    except ValueError as error:
        raise ConfigurationError(f'{SEED_ENVIRONMENT_VARIABLE} должен быть целым числом: {raw!r}') from error
    config_data.setdefault('run', {})['seed'] = seed


_CONFIG_CONTAINER: dict[str, 'ExperimentConfig'] = {}


def set_config(config: 'ExperimentConfig') -> None:
    """Устанавливает глобальную конфигурацию."""
    if 'instance' in _CONFIG_CONTAINER:
        raise RuntimeError('Конфигурация уже установлена и не может быть изменена.')
    _CONFIG_CONTAINER['instance'] = config


def get_config() -> 'ExperimentConfig':
    """Возвращает глобальную конфигурацию, установленную через `set_config`."""
    if 'instance' not in _CONFIG_CONTAINER:
        raise RuntimeError('Конфигурация не установлена. Вызовите `set_config()` перед `get_config()`.')
    return _CONFIG_CONTAINER['instance']


def reset_config() -> None:
    """Сбрасывает глобальную конфигурацию (для повторных запусков в одном процессе)."""
    _CONFIG_CONTAINER.clear()
