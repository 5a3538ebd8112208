import math

import numpy as np
import pytest

from src.lagranflow.control import ControlSignal
from src.lagranflow.dynamics import (
    CombinedForcing,
    SystemState,
    TranslatedForcing,
    absorbing_radius,
    field_energy,
    integrate,
    jacobian_matrix,
    linearized_map,
    run_chain,
    singular_values,
    step_map,
    torus_displacement,
    torus_distance,
    translate_state,
)
from src.lagranflow.errors import IntegrationDivergedError, InvalidArgumentError
from src.lagranflow.noise import NoiseSpec, kick_norm_bound, sample_kick, stream_for
from src.lagranflow.spectral_core import FourierField, Mode, mode_table, translate_field

CUTOFF = 3
NU = 0.1


@pytest.fixture
def spec() -> NoiseSpec:
    """Шум с малым числом мод."""
    return NoiseSpec(spatial_cutoff=2, time_modes=3)


@pytest.fixture
def state() -> SystemState:
    """Ненулевое состояние с частицей в (1, 2)."""
    rng = np.random.default_rng(0)
    u = FourierField(CUTOFF, 0.5 * rng.standard_normal(mode_table(CUTOFF).size))
    return SystemState(u, np.array([1.0, 2.0]))


def _difference(first: SystemState, second: SystemState) -> float:
    field_gap = float(np.linalg.norm(first.u.coeffs - second.u.coeffs))
    return math.hypot(field_gap, torus_distance(first.y, second.y))


def test_state_wraps_position() -> None:
    """Тест: позиция частицы хранится по модулю 2π."""
    state = SystemState.at_rest(2, [-0.5, 7.0])

    np.testing.assert_allclose(state.y, [2.0 * math.pi - 0.5, 7.0 - 2.0 * math.pi])
    assert state.cutoff == 2  # noqa: PLR2004


def test_rest_state_is_fixed_point() -> None:
    """Тест: S((0, p), 0) = (0, p) точно."""
    rest = SystemState.at_rest(CUTOFF, [1.0, 2.0])

    result = step_map(rest, None, 16, nu=NU)

    assert np.all(result.u.coeffs == 0.0)
    np.testing.assert_array_equal(result.y, rest.y)


def test_unforced_energy_decays(state: SystemState) -> None:
    """Тест: без воздействия ‖u(1)‖ ≤ e^{−ν}‖u₀‖."""
    result = step_map(state, None, 64, nu=NU)

    before = math.sqrt(field_energy(state.u))
    after = math.sqrt(field_energy(result.u))
    assert after < before
    assert after <= math.exp(-NU) * before * (1.0 + 1e-6)


def test_self_convergence_order(state: SystemState, spec: NoiseSpec) -> None:
    """Тест: порядок самосходимости по подшагам не ниже 3.7."""
    kick = sample_kick(spec, stream_for(1, 0))

    coarse = step_map(state, kick, 64, nu=NU)
    middle = step_map(state, kick, 128, nu=NU)
    fine = step_map(state, kick, 256, nu=NU)

    order = math.log2(_difference(coarse, middle) / _difference(middle, fine))
    assert order >= 3.7  # noqa: PLR2004


def test_integrate_rejects_bad_arguments(state: SystemState) -> None:
    """Тест: слишком мало подшагов, ν ≤ 0 и пустой интервал отклоняются."""
    with pytest.raises(InvalidArgumentError, match='подшагов'):
        integrate(state, None, 8)
    with pytest.raises(InvalidArgumentError, match='Вязкость'):
        integrate(state, None, 16, nu=0.0)
    with pytest.raises(InvalidArgumentError, match='Пустой интервал'):
        integrate(state, None, 16, t_start=1.0, t_end=1.0)


def test_integrate_divergence_names_interval(mocker, state: SystemState) -> None:
    """Тест: NaN на подшаге дает ошибку с номером интервала и подшага."""
    mocker.patch(
        'src.lagranflow.dynamics.bilinear_coeffs',
        side_effect=lambda table, left, right: np.full(np.broadcast_shapes(left.shape, right.shape), np.nan),
    )
    mock_error = mocker.patch('src.lagranflow.dynamics.logger.error')

    with pytest.raises(IntegrationDivergedError) as error:
        step_map(state, None, 16, nu=NU, interval=7)

    assert error.value.interval == 7  # noqa: PLR2004
    assert error.value.step == 0
    mock_error.assert_called_once()


def test_integrate_records_substeps(state: SystemState) -> None:
    """Тест: запись содержит S + 1 узлов, последний совпадает с итоговым состоянием."""
    substeps = 16

    result = integrate(state, None, substeps, nu=NU, record=True)

    assert result.record is not None
    assert result.record.coeffs.shape == (substeps + 1, mode_table(CUTOFF).size)
    np.testing.assert_array_equal(result.record.coeffs[-1], result.state.u.coeffs)
    np.testing.assert_allclose(result.record.times[[0, -1]], [0.0, 1.0])


def test_run_chain_single_step_matches_step_map(state: SystemState, spec: NoiseSpec) -> None:
    """Тест: K = 1 воспроизводит step_map с первым выбранным толчком."""
    trajectory = run_chain(state, spec, seed=3, kicks=1, nu=NU, substeps=16)

    expected = step_map(state, trajectory.kicks[0], 16, nu=NU)

    np.testing.assert_array_equal(trajectory.states[1].u.coeffs, expected.u.coeffs)
    np.testing.assert_array_equal(trajectory.states[1].y, expected.y)
    assert trajectory.positions.shape == (2, 2)


def test_run_chain_deterministic(state: SystemState, spec: NoiseSpec) -> None:
    """Тест: одинаковые зерно и параметры дают побитово одинаковые траектории."""
    first = run_chain(state, spec, seed=5, kicks=3, nu=NU, substeps=16)
    second = run_chain(state, spec, seed=5, kicks=3, nu=NU, substeps=16)
    other = run_chain(state, spec, seed=5, kicks=3, nu=NU, substeps=16, trajectory=1)

    np.testing.assert_array_equal(first.positions, second.positions)
    for left, right in zip(first.states, second.states, strict=True):
        np.testing.assert_array_equal(left.u.coeffs, right.u.coeffs)
    assert not np.array_equal(first.positions, other.positions)


def test_run_chain_summary_rows(state: SystemState, spec: NoiseSpec) -> None:
    """Тест: строки сводки содержат столбцы схемы траектории."""
    trajectory = run_chain(state, spec, seed=1, kicks=2, nu=NU, substeps=16, record=True)

    rows = trajectory.summary_rows()

    assert len(rows) == 3  # noqa: PLR2004
    assert tuple(rows[0]) == ('k', 'y1', 'y2', 'energy', 'enstrophy', 'sobolev3')
    assert rows[2]['k'] == 2  # noqa: PLR2004
    assert trajectory.records is not None
    assert len(trajectory.records) == 2  # noqa: PLR2004


def test_run_chain_validation(state: SystemState) -> None:
    """Тест: отрицательное число шагов и слишком широкий шум отклоняются."""
    with pytest.raises(InvalidArgumentError, match='неотрицательным'):
        run_chain(state, NoiseSpec(spatial_cutoff=2), seed=0, kicks=-1)
    with pytest.raises(InvalidArgumentError, match='больше отсечки поля'):
        run_chain(state, NoiseSpec(spatial_cutoff=4), seed=0, kicks=1)


def test_zero_amplitude_decay(state: SystemState) -> None:
    """Тест: при нулевой амплитуде шума энергия убывает как e^{−νK}."""
    silent = NoiseSpec(spatial_cutoff=2, time_modes=2, c0=0.0)
    kicks = 4

    trajectory = run_chain(state, silent, seed=0, kicks=kicks, nu=NU, substeps=16)

    final = math.sqrt(field_energy(trajectory.states[-1].u))
    assert final <= math.exp(-NU * kicks) * math.sqrt(field_energy(state.u)) * (1.0 + 1e-6)


def test_translation_equivariance(state: SystemState, spec: NoiseSpec) -> None:
    """Тест: сдвиг начального состояния и толчков сдвигает всю траекторию."""
    shift = np.array([0.8, -1.9])
    trajectory = run_chain(state, spec, seed=2, kicks=2, nu=NU, substeps=16)

    moved = translate_state(state, shift)
    for k, kick in enumerate(trajectory.kicks, start=1):
        moved = step_map(moved, TranslatedForcing(kick, (float(shift[0]), float(shift[1]))), 16, nu=NU)
        expected_u = translate_field(trajectory.states[k].u, shift)

        np.testing.assert_allclose(moved.u.coeffs, expected_u.coeffs, atol=1e-10)
        assert torus_distance(moved.y, trajectory.states[k].y + shift) < 1e-10  # noqa: PLR2004


def test_absorbing_ball_is_invariant(spec: NoiseSpec) -> None:
    """Тест: цепь из покоя не покидает шар радиуса R."""
    radius = absorbing_radius(spec, NU)
    start = SystemState.at_rest(CUTOFF, [0.5, 0.5])

    trajectory = run_chain(start, spec, seed=9, kicks=10, nu=NU, substeps=32)

    assert all(math.sqrt(field_energy(item.u)) <= radius for item in trajectory.states)


def test_absorbing_radius_scales_inversely_with_viscosity(spec: NoiseSpec) -> None:
    """Тест: R = sup‖η(t)‖ / ν для воздействия, действующего на всем интервале."""
    assert absorbing_radius(spec, 0.5) == pytest.approx(kick_norm_bound(spec, 0) / 0.5)
    assert absorbing_radius(spec, 0.2) == pytest.approx(2.0 * absorbing_radius(spec, 0.4))


def test_absorbing_radius_requires_viscosity(spec: NoiseSpec) -> None:
    """Тест: радиус определен только при ν > 0."""
    with pytest.raises(InvalidArgumentError):
        absorbing_radius(spec, 0.0)


def test_linearized_zero_direction(state: SystemState) -> None:
    """Тест: при ζ = 0 линеаризация дает (0, 0)."""
    tangent = linearized_map(state, None, None, nu=NU, substeps=16)

    assert np.all(tangent.v.coeffs == 0.0)
    assert np.all(tangent.z == 0.0)


def test_linearized_matches_finite_differences(state: SystemState, spec: NoiseSpec) -> None:
    """Тест: D_η S[ζ] совпадает с центральной разностью."""
    rng = stream_for(4, 0)
    kick = sample_kick(spec, rng)
    zeta = sample_kick(spec, rng)
    epsilon = 1e-5

    tangent = linearized_map(state, kick, zeta, nu=NU, substeps=32)
    forward = step_map(state, CombinedForcing(((1.0, kick), (epsilon, zeta))), 32, nu=NU)
    backward = step_map(state, CombinedForcing(((1.0, kick), (-epsilon, zeta))), 32, nu=NU)

    field_fd = (forward.u.coeffs - backward.u.coeffs) / (2.0 * epsilon)
    particle_fd, _ = torus_displacement(backward.y, forward.y)
    np.testing.assert_allclose(tangent.v.coeffs, field_fd, rtol=1e-6, atol=1e-8)
    np.testing.assert_allclose(tangent.z, particle_fd / (2.0 * epsilon), rtol=1e-6, atol=1e-8)


def test_linearized_is_linear(state: SystemState, spec: NoiseSpec) -> None:
    """Тест: ответ аддитивен и однороден по ζ."""
    rng = stream_for(6, 0)
    kick, first, second = (sample_kick(spec, rng) for _ in range(3))

    combined = linearized_map(state, kick, CombinedForcing(((2.0, first), (-3.0, second))), nu=NU, substeps=16)
    left = linearized_map(state, kick, first, nu=NU, substeps=16)
    right = linearized_map(state, kick, second, nu=NU, substeps=16)

    np.testing.assert_allclose(combined.v.coeffs, 2.0 * left.v.coeffs - 3.0 * right.v.coeffs, rtol=1e-10, atol=1e-12)
    np.testing.assert_allclose(combined.z, 2.0 * left.z - 3.0 * right.z, rtol=1e-10, atol=1e-12)


def test_jacobian_empty_basis(state: SystemState) -> None:
    """Тест: пустой набор управлений дает матрицу без столбцов."""
    matrix = jacobian_matrix(state, None, [], nu=NU, substeps=16)

    assert matrix.shape == (mode_table(CUTOFF).size + 2, 0)
    assert singular_values(matrix).size == 0


def test_jacobian_superposition(state: SystemState, spec: NoiseSpec) -> None:
    """Тест: J·c совпадает с линеаризацией на комбинации управлений."""
    rng = stream_for(8, 0)
    basis = [sample_kick(spec, rng) for _ in range(3)]
    weights = np.array([0.3, -1.2, 0.7])

    matrix = jacobian_matrix(state, None, basis, nu=NU, substeps=16)
    tangent = linearized_map(
        state, None, CombinedForcing(tuple(zip(weights.tolist(), basis, strict=True))), nu=NU, substeps=16
    )

    np.testing.assert_allclose(matrix @ weights, np.concatenate([tangent.v.coeffs, tangent.z]), atol=1e-10)


def test_particle_block_has_full_rank() -> None:
    """Тест: частичный блок якобиана в покое имеет ранг 2 на модах (1,0), (0,1)."""
    rest = SystemState.at_rest(CUTOFF, [1.0, 2.0])
    basis = [ControlSignal((mode,), np.ones((1, 1))) for mode in (Mode(1, 0), Mode(0, 1))]

    matrix = jacobian_matrix(rest, None, basis, nu=NU, substeps=16)

    assert singular_values(matrix[-2:]).min() > 1e-3  # noqa: PLR2004


def test_torus_displacement_and_distance() -> None:
    """Тест: смещение берется по кратчайшему пути, ничья разрешается в +π."""
    displacement, tie = torus_displacement([0.1, 0.0], [2.0 * math.pi - 0.1, 0.0])
    half, half_tie = torus_displacement([0.0, 0.0], [math.pi, 0.0])

    np.testing.assert_allclose(displacement, [-0.2, 0.0], atol=1e-12)
    assert not tie
    np.testing.assert_allclose(half, [math.pi, 0.0])
    assert half_tie
    assert torus_distance([0.0, 0.0], [3.0, 4.0]) == pytest.approx(math.hypot(3.0, 4.0 - 2.0 * math.pi))
