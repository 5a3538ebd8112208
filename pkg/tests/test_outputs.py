import json
import math
from pathlib import Path

import numpy as np
import pytest

from src.lagranflow.errors import InvalidArgumentError
from src.lagranflow.measures_ep import DensityMethod, ParticleSamples, estimate_density
from src.lagranflow.outputs import density_rows, format_value, read_rows, to_jsonable, write_outputs


@pytest.fixture
def coupling_rows() -> list[dict[str, float]]:
    """Строки схемы coupling."""
    return [
        {'pair_id': 0, 'k': 0, 'd_k': 1e-3, 'contraction_flag': True},
        {'pair_id': 0, 'k': 1, 'd_k': 0.1, 'contraction_flag': False},
    ]


def test_write_outputs_creates_files(tmp_path: Path, coupling_rows: list[dict[str, float]]) -> None:
    """Тест: CSV, JSON-сопровождение и скрипт графика пишутся рядом."""
    written = write_outputs(coupling_rows, 'coupling', tmp_path, metadata={'seed': np.int64(3)})

    assert [path.name for path in written] == ['coupling.csv', 'coupling.json', 'plot_coupling.py']
    lines = (tmp_path / 'coupling.csv').read_text(encoding='utf-8').splitlines()
    assert lines == ['pair_id,k,d_k,contraction_flag', '0,0,0.001,1', '0,1,0.10000000000000001,0']
    sidecar = json.loads((tmp_path / 'coupling.json').read_text(encoding='utf-8'))
    assert sidecar == {
        'schema': 'coupling',
        'columns': ['pair_id', 'k', 'd_k', 'contraction_flag'],
        'rows': 2,
        'metadata': {'seed': 3},
    }
    script = (tmp_path / 'plot_coupling.py').read_text(encoding='utf-8')
    assert "with_name('coupling.csv')" in script
    compile(script, 'plot_coupling.py', 'exec')


def test_write_outputs_json_only(tmp_path: Path, coupling_rows: list[dict[str, float]]) -> None:
    """Тест: без CSV строки попадают в JSON, скрипт графика не пишется."""
    written = write_outputs(coupling_rows, 'coupling', tmp_path, formats=('json',))

    assert [path.name for path in written] == ['coupling.json']
    sidecar = json.loads((tmp_path / 'coupling.json').read_text(encoding='utf-8'))
    assert sidecar['data'][1]['d_k'] == 0.1  # noqa: PLR2004
    assert not (tmp_path / 'plot_coupling.py').exists()


def test_write_outputs_rejects_mismatched_rows(tmp_path: Path) -> None:
    """Тест: ключи строки должны совпадать с заголовком схемы."""
    with pytest.raises(InvalidArgumentError, match='не совпадает с заголовком'):
        write_outputs([{'k': 0, 'pair_id': 0, 'd_k': 1.0, 'contraction_flag': 1}], 'coupling', tmp_path)


def test_write_outputs_rejects_unknown_schema(tmp_path: Path) -> None:
    """Тест: схема должна быть зарегистрирована."""
    with pytest.raises(InvalidArgumentError, match='не зарегистрирована'):
        write_outputs([], 'histogram', tmp_path)


def test_schema_without_header_takes_first_row(tmp_path: Path) -> None:
    """Тест: схема без заголовка берет столбцы первой строки и требует хотя бы одну строку."""
    rows = [{'point': 0, 'nu_0': 0.5, 'nu_1': 0.5, 'rate_variational': 0.0, 'rate_legendre': 0.0}]

    write_outputs(rows, 'oracle', tmp_path, plot_script=False)

    assert (tmp_path / 'oracle.csv').read_text(encoding='utf-8').startswith('point,nu_0,nu_1,')
    with pytest.raises(InvalidArgumentError, match='хотя бы одна строка'):
        write_outputs([], 'oracle', tmp_path)


def test_write_outputs_reports_unwritable_directory(tmp_path: Path, coupling_rows: list[dict[str, float]]) -> None:
    """Тест: каталог, занятый файлом, дает OSError."""
    blocker = tmp_path / 'blocked'
    blocker.write_text('', encoding='utf-8')

    with pytest.raises(OSError):
        write_outputs(coupling_rows, 'coupling', blocker)


def test_read_rows_restores_values(tmp_path: Path) -> None:
    """Тест: 17 значащих цифр сохраняют значение float точно."""
    value = math.pi / 3.0
    rows = [{'r': value, 'residual': -1e-17}]

    write_outputs(rows, 'gc', tmp_path, formats=('csv',))

    assert read_rows(tmp_path / 'gc.csv') == [{'r': value, 'residual': -1e-17}]


@pytest.mark.parametrize(
    ('value', 'expected'),
    [(True, '1'), (np.bool_(False), '0'), (7, '7'), (np.int32(-2), '-2'), (0.5, '0.5'), (math.inf, 'inf')],
)
def test_format_value(value: object, expected: str) -> None:
    """Тест: логические и целые пишутся как целые, числа с плавающей точкой через .17g."""
    assert format_value(value) == expected


def test_to_jsonable() -> None:
    """Тест: массивы, скаляры numpy, пути и перечисления приводятся к JSON."""
    payload = {
        'array': np.arange(3),
        'scalar': np.float64(0.25),
        'path': Path('results'),
        'method': DensityMethod.kde,
        (1, 2): (np.int64(4),),
    }

    assert to_jsonable(payload) == {
        'array': [0, 1, 2],
        'scalar': 0.25,
        'path': 'results',
        'method': 'kde',
        '(1, 2)': [4],
    }


def test_density_rows() -> None:
    """Тест: ячейки перечисляются в порядке C с координатами центров."""
    samples = ParticleSamples(np.array([[[0.5, 0.5]], [[4.0, 0.5]]]))
    estimate = estimate_density(samples, DensityMethod.histogram, bins=2)

    rows = density_rows(estimate)

    assert len(rows) == 4  # noqa: PLR2004
    assert tuple(rows[0]) == ('cell', 'c1', 'c2', 'density', 'lower', 'upper')
    assert rows[0]['c1'] == pytest.approx(math.pi / 2.0)
    assert rows[2]['c1'] == pytest.approx(3.0 * math.pi / 2.0)
    assert rows[0]['density'] == pytest.approx(2.0)
    assert rows[1]['density'] == 0.0
    assert rows[2]['density'] == pytest.approx(2.0)
