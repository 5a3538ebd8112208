import math
from pathlib import Path
from typing import TYPE_CHECKING

import numpy as np
import pytest

from src.lagranflow.cli import SUBCOMMANDS
from src.lagranflow.config import ExperimentConfig
from src.lagranflow.control import STEER_SUPPORT, ControlSignal, KappaSearch, SteeringReport
from src.lagranflow.experiments import (
    EXPERIMENT_STREAMS,
    EXPERIMENTS,
    initial_state,
    load_chain,
    parallel_map,
    stream_identifiers,
)
from src.lagranflow.ldp_oracle import FiniteChain
from src.lagranflow.outputs import SCHEMAS

if TYPE_CHECKING:
    from typing import Any


def _config(tmp_path: Path, **sections: 'dict[str, Any]') -> ExperimentConfig:
    data: dict[str, Any] = {
        'physics': {'nu': 0.1},
        'grid': {'spatial_cutoff': 2, 'substeps': 16},
        'noise': {'time_modes': 2},
        'run': {'seed': 1, 'kicks': 2, 'trajectories': 4, 'burn_in': 0},
    }
    for name, values in sections.items():
        data.setdefault(name, {}).update(values)
    return ExperimentConfig.from_dict(data, tmp_path)


def _check_schemas(result) -> None:
    for artifact in result.artifacts:
        declared = SCHEMAS[artifact.schema].columns
        assert artifact.rows
        if declared is not None:
            assert all(tuple(row) == declared for row in artifact.rows)


def test_every_subcommand_has_streams() -> None:
    """Тест: для каждой подкоманды описаны потоки ГСЧ манифеста."""
    assert set(EXPERIMENT_STREAMS) == set(EXPERIMENTS) == set(SUBCOMMANDS)
    assert stream_identifiers('couple', 5) == [
        {'stage': 'initial', 'spawn_key': [1], 'entropy': 5},
        {'stage': 'chain', 'spawn_key': [0], 'entropy': 5},
        {'stage': 'pairs', 'spawn_key': [2], 'entropy': 5},
    ]


def test_parallel_map_keeps_order() -> None:
    """Тест: результаты идут в порядке аргументов при любом числе потоков."""
    assert parallel_map(lambda value: value * value, range(10), 4) == [value * value for value in range(10)]


def test_initial_state(tmp_path: Path) -> None:
    """Тест: состояние 0 стоит в run.initial_position, поле нулевое без амплитуды."""
    config = _config(tmp_path, run={'initial_position': [0.5, 1.0]})
    noisy = _config(tmp_path, run={'initial_amplitude': 0.5})

    state = initial_state(config)
    other = initial_state(config, 3)

    np.testing.assert_allclose(state.y, [0.5, 1.0])
    assert not np.any(state.u.coeffs)
    assert not np.allclose(other.y, state.y)
    assert np.any(initial_state(noisy).u.coeffs)
    np.testing.assert_array_equal(initial_state(noisy).u.coeffs, initial_state(noisy).u.coeffs)


def test_simulate(tmp_path: Path) -> None:
    """Тест: траектория содержит run.kicks + 1 состояний и радиус поглощения."""
    result = EXPERIMENTS['simulate'](_config(tmp_path))

    _check_schemas(result)
    assert len(result.artifacts[0].rows) == 3  # noqa: PLR2004
    assert result.artifacts[0].metadata['absorbing_radius'] > 0


def test_steer_from_rest(tmp_path: Path) -> None:
    """Тест: из покоя строится явное управление переносом."""
    result = EXPERIMENTS['steer'](_config(tmp_path))

    _check_schemas(result)
    assert result.artifacts[0].schema == 'control'


def test_steer_records_discovered_kappa(tmp_path: Path, mocker) -> None:
    """Тест: при ненулевом поле найденный порог гашения попадает в сводку и метаданные."""
    report = SteeringReport(0.0, 0.0, 0.0, 0.0, converged=True, damping_norm=0.01)
    attempts = ((0.05, False), (0.025, False), (0.0125, True))
    search = KappaSearch(0.0125, ControlSignal.zeros(STEER_SUPPORT, 2), report, attempts)
    discover = mocker.patch('src.lagranflow.experiments.discover_kappa', return_value=search)

    result = EXPERIMENTS['steer'](_config(tmp_path, run={'initial_amplitude': 0.5}, steer={'kappa_target': 0.05}))

    _check_schemas(result)
    assert discover.call_args.args[3].kappa_target == 0.05  # noqa: PLR2004
    assert result.summary['kappa'] == 0.0125  # noqa: PLR2004
    assert result.summary['kappa_attempts'] == 3  # noqa: PLR2004
    assert result.artifacts[0].metadata['kappa'] == 0.0125  # noqa: PLR2004


def test_couple(tmp_path: Path) -> None:
    """Тест: строки всех пар и сводка частоты несжатия."""
    result = EXPERIMENTS['couple'](_config(tmp_path, coupling={'pairs': 2}))

    _check_schemas(result)
    assert len(result.artifacts[0].rows) == 6  # noqa: PLR2004
    assert {row['pair_id'] for row in result.artifacts[0].rows} == {0, 1}
    assert result.summary['pairs'] == 2.0  # noqa: PLR2004
    assert result.summary['initial_distance'] == pytest.approx(1e-3)


def test_density(tmp_path: Path) -> None:
    """Тест: сеточная оценка интегрируется в 1, экстремумы берутся по всем состояниям."""
    config = _config(tmp_path, run={'trajectories': 20}, density={'bins': 2, 'states': 2})

    result = EXPERIMENTS['density'](config)
    artifact = result.artifacts[0]

    assert len(artifact.rows) == 4  # noqa: PLR2004
    assert artifact.metadata['integral'] == pytest.approx(1.0)
    assert result.summary['minimum'] <= result.summary['maximum']


def test_ep_and_stationarity(tmp_path: Path) -> None:
    """Тест: σ_t считается по окнам после разгона, гармоники по всем |m|_∞ ≤ 3."""
    config = _config(tmp_path, run={'kicks': 30, 'burn_in': 5}, density={'bins': 2, 'window': 1})

    ep_result = EXPERIMENTS['ep'](config)
    stationarity_result = EXPERIMENTS['stationarity'](config)

    _check_schemas(ep_result)
    _check_schemas(stationarity_result)
    assert len(ep_result.artifacts[0].rows) == 25  # noqa: PLR2004
    assert ep_result.summary['antisymmetry_defect'] == pytest.approx(0.0, abs=1e-12)
    assert len(stationarity_result.artifacts[0].rows) == 24  # noqa: PLR2004
    assert stationarity_result.summary['count'] == 25  # noqa: PLR2004


def test_oracle_level2_default_cycle(tmp_path: Path) -> None:
    """Тест: на цикле по умолчанию оба способа согласованы, первая точка стационарна."""
    result = EXPERIMENTS['oracle'](_config(tmp_path, oracle={'points': 1}))
    rows = result.artifacts[0].rows

    assert result.summary['level'] == 2  # noqa: PLR2004
    assert result.summary['states'] == 3  # noqa: PLR2004
    assert result.summary['max_discrepancy'] <= 1e-6  # noqa: PLR2004
    assert len(rows) == 2  # noqa: PLR2004
    assert rows[0]['rate_legendre'] == pytest.approx(0.0, abs=1e-8)


def test_oracle_level3_from_file(tmp_path: Path) -> None:
    """Тест: цепь читается из oracle.chain, уровень 3 сверяется через цепь слов."""
    chain = FiniteChain(np.array([[0.7, 0.3], [0.4, 0.6]]))
    chain.to_csv(tmp_path / 'chain.csv')
    config = _config(tmp_path, oracle={'chain': 'chain.csv', 'points': 1, 'level': 3})

    result = EXPERIMENTS['oracle'](config)

    np.testing.assert_array_equal(load_chain(config).matrix, chain.matrix)
    assert result.summary['level'] == 3  # noqa: PLR2004
    assert result.summary['max_discrepancy'] <= 1e-6  # noqa: PLR2004
    assert all(math.isfinite(row['rate_variational']) for row in result.artifacts[0].rows)


def test_gc_check(tmp_path: Path) -> None:
    """Тест: симметрия выполнена на цикле по умолчанию, среднее производство равно 0.3·log 2."""
    result = EXPERIMENTS['gc-check'](_config(tmp_path))

    _check_schemas(result)
    assert result.summary['max_residual'] <= 1e-6  # noqa: PLR2004
    assert result.summary['mean_ep'] == pytest.approx(0.3 * math.log(2.0))
    assert result.summary['level3_max_residual'] <= 1e-9  # noqa: PLR2004
