"""Запись результатов экспериментов.

Каждая схема задает заголовок CSV. Рядом с данными пишутся JSON-сопровождение с метаданными
и, по желанию, скрипт построения графика, который читает только записанный CSV.

Функции:
    write_outputs: Пишет CSV, JSON-сопровождение и скрипт графика для схемы.
    read_rows: Читает CSV схемы обратно в список словарей.
    density_rows: Строки сеточной оценки плотности в порядке C.
    to_jsonable: Приводит numpy-значения, пути и перечисления к типам JSON.

Пример использования:
    >>> write_outputs(trajectory.summary_rows(), 'trajectory', Path('results'), metadata={'seed': 0})
"""

import csv
import enum
import itertools
import json
import string
from dataclasses import dataclass
from pathlib import Path
from typing import TYPE_CHECKING, Any

import numpy as np

from src.lagranflow.errors import InvalidArgumentError
from src.lagranflow.logger import get_logger

if TYPE_CHECKING:
    from collections.abc import Mapping, Sequence

    from src.lagranflow.measures_ep import DensityEstimate


logger = get_logger()

SIGNIFICANT_DIGITS = 17


@dataclass(frozen=True)
class Schema:
    """Заголовок CSV (None: столбцы берутся из первой строки) и вид графика."""

    columns: tuple[str, ...] | None
    x: str
    y: tuple[str, ...]
    style: str = 'line'


SCHEMAS: dict[str, Schema] = {
    'trajectory': Schema(('k', 'y1', 'y2', 'energy', 'enstrophy', 'sobolev3'), 'y1', ('y2',), 'scatter'),
    'control': Schema(('j1', 'j2', 'l', 'alpha'), 'l', ('alpha',), 'log'),
    'linctl': Schema(('delta', 'field_error', 'particle_error'), 'delta', ('particle_error', 'field_error'), 'log'),
    'coupling': Schema(('pair_id', 'k', 'd_k', 'contraction_flag'), 'k', ('d_k',), 'log'),
    'mixing': Schema(None, 'k', ('discrepancy', 'noise_floor', 'particle_tv'), 'log'),
    'density': Schema(None, 'c1', ('density', 'lower', 'upper'), 'grid'),
    'ep': Schema(('path', 'production', 'rate', 'within'), 'path', ('rate',), 'scatter'),
    'stationarity': Schema(('m1', 'm2', 'real', 'imag', 'modulus'), 'm1', ('modulus',), 'scatter'),
    'convergence': Schema(('start', 'discrepancy', 'noise_floor'), 'start', ('discrepancy', 'noise_floor'), 'log'),
    'oracle': Schema(None, 'point', ('rate_variational', 'rate_legendre'), 'scatter'),
    'gc': Schema(('r', 'residual'), 'r', ('residual',), 'line'),
}

PLOT_TEMPLATE = string.Template('''\
"""График схемы $schema по файлу $csv_name."""

from pathlib import Path

import matplotlib.pyplot as plt
import numpy as np

data = np.genfromtxt(Path(__file__).with_name('$csv_name'), delimiter=',', names=True)
figure, axes = plt.subplots()
style = '$style'
if style == 'grid':
    size = int(round(np.sqrt(data.size)))
    image = axes.imshow(data['$first_y'].reshape(size, size).T, origin='lower')
    figure.colorbar(image)
else:
    for column in $y_columns:
        if style == 'scatter':
            axes.scatter(data['$x_column'], data[column], s=4, label=column)
        else:
            axes.plot(data['$x_column'], data[column], label=column)
    if style == 'log':
        axes.set_yscale('log')
    axes.set_xlabel('$x_column')
    axes.legend()
figure.savefig(Path(__file__).with_name('$schema.png'), dpi=150)
''')


def to_jsonable(value: Any) -> Any:
    """Рекурсивно приводит значение к типам, которые понимает json."""
    if isinstance(value, dict):
        return {str(key): to_jsonable(item) for key, item in value.items()}
    if isinstance(value, (list | tuple)):
        return [to_jsonable(item) for item in value]
    if isinstance(value, np.ndarray):
        return to_jsonable(value.tolist())
    if isinstance(value, np.generic):
        return value.item()
    if isinstance(value, enum.Enum):
        return value.value
    if isinstance(value, Path):
        return str(value)
    return value


def format_value(value: Any) -> str:
    """Число с 17 значащими цифрами; целые и логические как целые."""
    if isinstance(value, (bool | np.bool_)):
        return str(int(value))
    if isinstance(value, (int | np.integer)):
        return str(int(value))
    if isinstance(value, (float | np.floating)):
        return format(float(value), f'.{SIGNIFICANT_DIGITS}g')
    return str(value)


def _columns(schema: str, rows: 'Sequence[Mapping[str, Any]]') -> tuple[str, ...]:
    if schema not in SCHEMAS:
        raise InvalidArgumentError(f'Схема {schema!r} не зарегистрирована')
    declared = SCHEMAS[schema].columns
    if declared is not None:
        return declared
    if not rows:
        raise InvalidArgumentError(f'Для схемы {schema!r} без заголовка нужна хотя бы одна строка')
    return tuple(rows[0])


def write_outputs(  # noqa: PLR0913
    rows: 'Sequence[Mapping[str, Any]]',
    schema: str,
    directory: Path,
    *,
    metadata: 'Mapping[str, Any] | None' = None,
    formats: 'Sequence[str]' = ('csv', 'json'),
    plot_script: bool = True,
) -> list[Path]:
    """Пишет данные схемы.

    Args:
        rows: Строки данных (ключи совпадают с заголовком схемы).
        schema: Идентификатор зарегистрированной схемы.
        directory: Каталог результатов.
        metadata: Метаданные JSON-сопровождения.
        formats: Подмножество {'csv', 'json'}; без CSV строки попадают в JSON.
        plot_script: Писать ли plot_<schema>.py (только вместе с CSV).

    Returns:
        list[Path]: Записанные файлы.

    Raises:
        InvalidArgumentError: Если схема неизвестна или строки не соответствуют заголовку.
        OSError: Если файл не удается записать; сообщение содержит путь.
    """
    columns = _columns(schema, rows)
    for index, row in enumerate(rows):
        if tuple(row) != columns:
            raise InvalidArgumentError(f'Строка {index} схемы {schema!r} не совпадает с заголовком {columns}')
    directory.mkdir(parents=True, exist_ok=True)
    written = []

    if 'csv' in formats:
        csv_path = directory / f'{schema}.csv'
        with csv_path.open('w', newline='', encoding='utf-8') as handle:
            writer = csv.writer(handle, lineterminator='\n')
            writer.writerow(columns)
            writer.writerows([format_value(row[column]) for column in columns] for row in rows)
        written.append(csv_path)

    if 'json' in formats:
        sidecar: dict[str, Any] = {'schema': schema, 'columns': list(columns), 'rows': len(rows)}
        sidecar['metadata'] = to_jsonable(dict(metadata or {}))
        if 'csv' not in formats:
            sidecar['data'] = to_jsonable([dict(row) for row in rows])
        json_path = directory / f'{schema}.json'
        json_path.write_text(json.dumps(sidecar, ensure_ascii=False, indent=2, sort_keys=True), encoding='utf-8')
        written.append(json_path)

    if plot_script and 'csv' in formats:
        written.append(_write_plot_script(schema, directory))

    logger.info('Результаты записаны', schema=schema, rows=len(rows), files=[path.name for path in written])
    return written


def _write_plot_script(schema: str, directory: Path) -> Path:
    plot = SCHEMAS[schema]
    script = PLOT_TEMPLATE.substitute(
        schema=schema,
        csv_name=f'{schema}.csv',
        style=plot.style,
        x_column=plot.x,
        first_y=plot.y[0],
        y_columns=repr(list(plot.y)),
    )
    path = directory / f'plot_{schema}.py'
    path.write_text(script, encoding='utf-8')
    return path


def read_rows(path: Path) -> list[dict[str, float]]:
    """Читает CSV, записанный `write_outputs`; все значения возвращаются как float."""
    with path.open(encoding='utf-8', newline='') as handle:
        return [{key: float(value) for key, value in row.items()} for row in csv.DictReader(handle)]


def density_rows(estimate: 'DensityEstimate') -> list[dict[str, float]]:
    """Ячейки оценки плотности в порядке C: индекс, координаты центра c1..c_{2t}, значения и полосы."""
    centers = estimate.centers
    dimension = estimate.values.ndim
    rows = []
    for flat, cell in enumerate(itertools.product(range(estimate.resolution), repeat=dimension)):
        row: dict[str, float] = {'cell': flat}
        row.update({f'c{axis + 1}': float(centers[index]) for axis, index in enumerate(cell)})
        row.update(
            density=float(estimate.values[cell]),
            lower=float(estimate.lower[cell]),
            upper=float(estimate.upper[cell]),
        )
        rows.append(row)
    return rows

