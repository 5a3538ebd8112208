"""Отображение решения S(Υ, η) за единицу времени, цепь Маркова и линеаризация.

Поле и частица интегрируются совместно схемой Рунге–Кутты 4-го порядка в
переменных интегрирующего множителя: стоксова часть e^{−ν|j|²t} учитывается точно,
а скорость частицы на стадиях берется из стадийных значений поля.

Классы:
    SystemState: Состояние Υ = (u, y).
    TangentState: Касательный вектор (v, z).
    DenseRecord: Значения поля и частицы на подшагах.
    FlowResult: Результат `integrate`.
    Trajectory: Траектория цепи Υ₀..Υ_K с толчками.
    CombinedForcing / TranslatedForcing: Линейная комбинация и сдвиг воздействий.

Функции:
    integrate: Общая интеграция на [t₀, t₁] с касательными направлениями.
    step_map: S(Υ, η).
    run_chain: Υ_k = S(Υ_{k−1}, η_k) с толчками из NoiseSpec.
    linearized_map / linearized_flow: Производная S по управлению и по состоянию.
    jacobian_matrix: Матрица D_η S на наборе управлений.
    absorbing_radius: Радиус инвариантного шара в L².

Пример использования:
    >>> state = SystemState(FourierField.zeros(4), np.array([1.0, 2.0]))
    >>> trajectory = run_chain(state, NoiseSpec(), seed=7, kicks=10)
    >>> trajectory.positions[-1]
"""

import math
from dataclasses import dataclass, field
from enum import IntEnum
from typing import TYPE_CHECKING, Protocol

import numpy as np

from src.lagranflow.errors import IntegrationDivergedError, InvalidArgumentError
from src.lagranflow.logger import get_logger
from src.lagranflow.noise import kick_norm_bound, sample_kick, stream_for
from src.lagranflow.spectral_core import (
    TWO_PI,
    FourierField,
    bilinear_coeffs,
    evaluation_operators,
    mode_table,
    sobolev_norm,
    translate_field,
)

if TYPE_CHECKING:
    from collections.abc import Callable, Sequence

    from numpy.typing import NDArray

    from src.lagranflow.noise import KickRealization, NoiseSpec
    from src.lagranflow.spectral_core import ModeTable


logger = get_logger()

DEFAULT_NU = 0.1
DEFAULT_SUBSTEPS = 64
MIN_SUBSTEPS = 16


class StreamStage(IntEnum):
    """Первый ключ потока ГСЧ: этап эксперимента."""

    chain = 0
    initial = 1
    pairs = 2
    oracle = 3


class Forcing(Protocol):
    """Воздействие на [0, 1], заданное коэффициентами в базисе e_j."""

    def coefficients_at(self, t: float, cutoff: int) -> 'NDArray[np.float64]':
        """Коэффициенты η(t) на отсечке cutoff."""
        ...


@dataclass(frozen=True)
class CombinedForcing:
    """Взвешенная сумма воздействий Σ w_i η_i."""

    parts: tuple[tuple[float, Forcing], ...]

    def coefficients_at(self, t: float, cutoff: int) -> 'NDArray[np.float64]':
        """Сумма коэффициентов слагаемых."""
        total = np.zeros(mode_table(cutoff).size)
        for weight, part in self.parts:
            total += weight * part.coefficients_at(t, cutoff)
        return total


@dataclass(frozen=True)
class TranslatedForcing:
    """Воздействие x ↦ η(t, x − c)."""

    base: Forcing
    shift: tuple[float, float]

    def coefficients_at(self, t: float, cutoff: int) -> 'NDArray[np.float64]':
        """Сдвинутые коэффициенты."""
        values = FourierField(cutoff, self.base.coefficients_at(t, cutoff))
        return translate_field(values, np.asarray(self.shift)).coeffs


@dataclass(frozen=True, eq=False)
class SystemState:
    """Состояние Υ = (u, y); позиция частицы хранится по модулю 2π."""

    u: FourierField
    y: 'NDArray[np.float64]'

    def __post_init__(self) -> None:
        """Сворачивает позицию частицы на тор."""
        position = np.mod(np.asarray(self.y, dtype=np.float64).reshape(2), TWO_PI)
        position.setflags(write=False)
        object.__setattr__(self, 'y', position)

    @classmethod
    def at_rest(cls, cutoff: int, position: 'Sequence[float] | NDArray[np.float64]') -> 'SystemState':
        """Состояние (0, p)."""
        return cls(FourierField.zeros(cutoff), np.asarray(position, dtype=np.float64))

    @property
    def cutoff(self) -> int:
        """Отсечка поля."""
        return self.u.cutoff


@dataclass(frozen=True, eq=False)
class TangentState:
    """Касательный вектор (v, z) к пространству состояний."""

    v: FourierField
    z: 'NDArray[np.float64]'


@dataclass(frozen=True, eq=False)
class DenseRecord:
    """Значения на узлах подшагов: времена (S+1,), коэффициенты (S+1, M), позиции (S+1, 2).

    Позиции записаны непрерывным подъемом на R² без сворачивания.
    """

    times: 'NDArray[np.float64]'
    coeffs: 'NDArray[np.float64]'
    positions: 'NDArray[np.float64]'


@dataclass(frozen=True, eq=False)
class FlowResult:
    """Конечное состояние, запись подшагов и касательные столбцы (v: (M, C), z: (2, C))."""

    state: SystemState
    record: DenseRecord | None = None
    tangent_v: 'NDArray[np.float64] | None' = None
    tangent_z: 'NDArray[np.float64] | None' = None


@dataclass(frozen=True, eq=False)
class Trajectory:
    """Состояния Υ₀..Υ_K, толчки η₁..η_K и (по запросу) записи подшагов."""

    states: tuple[SystemState, ...]
    kicks: tuple['KickRealization', ...]
    records: tuple[DenseRecord, ...] | None = field(default=None, repr=False)

    @property
    def positions(self) -> 'NDArray[np.float64]':
        """Позиции частицы, форма (K+1, 2)."""
        return np.array([state.y for state in self.states])

    def summary_rows(self) -> list[dict[str, float]]:
        """Строки схемы траектории: k, y1, y2, energy, enstrophy, sobolev3."""
        return [
            {
                'k': k,
                'y1': float(state.y[0]),
                'y2': float(state.y[1]),
                'energy': field_energy(state.u),
                'enstrophy': enstrophy(state.u),
                'sobolev3': sobolev_norm(state.u, 3),
            }
            for k, state in enumerate(self.states)
        ]


def field_energy(u: FourierField) -> float:
    """‖u‖²."""
    return float(u.coeffs @ u.coeffs)


def enstrophy(u: FourierField) -> float:
    """‖u‖₁² = ‖rot u‖²."""
    return sobolev_norm(u, 1) ** 2


def translate_state(state: SystemState, shift: 'Sequence[float] | NDArray[np.float64]') -> SystemState:
    """Сдвиг состояния на c ∈ T²: поле x ↦ u(x − c), частица y + c."""
    vector = np.asarray(shift, dtype=np.float64)
    return SystemState(translate_field(state.u, vector), state.y + vector)


def field_tendency(u: FourierField, forcing: Forcing | None, t: float, nu: float = DEFAULT_NU) -> FourierField:
    """Правая часть ∂_t u = −ν(−Δ)u − B_N(u) + η(t)."""
    table = mode_table(u.cutoff)
    drift = -nu * table.norms_sq * u.coeffs - bilinear_coeffs(table, u.coeffs, u.coeffs)
    if forcing is not None:
        drift = drift + forcing.coefficients_at(t, u.cutoff)
    return FourierField(u.cutoff, drift)


def absorbing_radius(spec: 'NoiseSpec', nu: float = DEFAULT_NU) -> float:
    """Радиус R = sup_t‖η(t)‖/ν шара в L², который цепь не покидает.

    Нелинейность не меняет энергию, поэтому ‖u(t)‖ ≤ e^{−νt}‖u₀‖ + (1 − e^{−νt}) R.
    """
    if nu <= 0:
        raise InvalidArgumentError(f'Вязкость должна быть положительной: {nu}')
    return kick_norm_bound(spec, 0) / nu


Arrays = tuple['NDArray[np.float64]', ...]


def _lawson_rk4(
    stage: 'Callable[[float, Arrays], Arrays]', t: float, h: float, current: Arrays, decay: Arrays
) -> Arrays:
    """Один шаг RK4 в переменных интегрирующего множителя; decay = e^{−Λh/2} по компонентам."""
    k1 = tuple(h * value for value in stage(t, current))
    second = tuple(e * (x + 0.5 * a) for e, x, a in zip(decay, current, k1, strict=True))
    k2 = tuple(h * value for value in stage(t + 0.5 * h, second))
    third = tuple(e * x + 0.5 * b for e, x, b in zip(decay, current, k2, strict=True))
    k3 = tuple(h * value for value in stage(t + 0.5 * h, third))
    fourth = tuple(e * e * x + e * c for e, x, c in zip(decay, current, k3, strict=True))
    k4 = tuple(h * value for value in stage(t + h, fourth))
    return tuple(
        e * e * x + (e * e * a + 2.0 * e * (b + c) + d) / 6.0
        for e, x, a, b, c, d in zip(decay, current, k1, k2, k3, k4, strict=True)
    )


def _forcing_coeffs(forcing: Forcing | None, t: float, table: 'ModeTable') -> 'NDArray[np.float64]':
    if forcing is None:
        return np.zeros(table.size)
    return forcing.coefficients_at(t, table.cutoff)


def _make_stage(
    table: 'ModeTable', forcing: Forcing | None, controls: 'Sequence[Forcing | None] | None'
) -> 'Callable[[float, Arrays], Arrays]':
    """Нелинейная часть системы; при controls is not None добавляются касательные (v, z)."""

    def stage(t: float, values: Arrays) -> Arrays:
        u, y = values[0], values[1]
        drift_u = _forcing_coeffs(forcing, t, table) - bilinear_coeffs(table, u, u)
        value_op, gradient_op = evaluation_operators(table.cutoff, y)
        drift_y = value_op @ u
        if controls is None:
            return drift_u, drift_y
        v, z = values[2], values[3]
        drift_v = -(bilinear_coeffs(table, u, v) + bilinear_coeffs(table, v, u))
        if controls:
            drift_v = drift_v + np.stack([_forcing_coeffs(control, t, table) for control in controls], axis=1)
        drift_z = value_op @ v + (gradient_op @ u) @ z
        return drift_u, drift_y, drift_v, drift_z

    return stage


def integrate(  # noqa: PLR0913
    state: SystemState,
    forcing: Forcing | None,
    substeps: int = DEFAULT_SUBSTEPS,
    *,
    nu: float = DEFAULT_NU,
    t_start: float = 0.0,
    t_end: float = 1.0,
    record: bool = False,
    tangent: tuple['NDArray[np.float64]', 'NDArray[np.float64]'] | None = None,
    controls: 'Sequence[Forcing | None] | None' = None,
    interval: int = 0,
) -> FlowResult:
    """Интегрирует поле и частицу на [t_start, t_end] за `substeps` равных шагов.

    Args:
        state: Начальное состояние.
        forcing: Воздействие (None для нулевого); время воздействия локальное, из [0, 1].
        substeps: Число подшагов на интервале, не меньше 16.
        nu: Вязкость ν > 0.
        t_start: Начало интервала.
        t_end: Конец интервала.
        record: Сохранять ли значения на узлах подшагов.
        tangent: Начальные касательные столбцы (v₀ (M, C), z₀ (2, C)).
        controls: Управления ζ по столбцам касательных (None в списке означает ζ = 0).
        interval: Номер интервала цепи для сообщений об ошибках.

    Returns:
        FlowResult: Конечное состояние и, по запросу, запись и касательные.

    Raises:
        IntegrationDivergedError: Если на подшаге появились NaN или переполнение.
    """
    if substeps < MIN_SUBSTEPS:
        raise InvalidArgumentError(f'Число подшагов должно быть не меньше {MIN_SUBSTEPS}: {substeps}')
    if nu <= 0:
        raise InvalidArgumentError(f'Вязкость должна быть положительной: {nu}')
    if not t_end > t_start:
        raise InvalidArgumentError(f'Пустой интервал интегрирования: [{t_start}, {t_end}]')

    table = mode_table(state.cutoff)
    h = (t_end - t_start) / substeps
    half_decay = np.exp(-0.5 * nu * table.norms_sq * h)

    current: Arrays = (state.u.coeffs.copy(), state.y.copy())
    decay: Arrays = (half_decay, np.ones(2))
    columns: list[Forcing | None] | None = None
    if tangent is not None or controls is not None:
        if tangent is None:
            count = len(controls or ())
            tangent = (np.zeros((table.size, count)), np.zeros((2, count)))
        v0, z0 = (np.asarray(part, dtype=np.float64) for part in tangent)
        count = v0.shape[1]
        columns = list(controls) if controls is not None else [None] * count
        if len(columns) != count or z0.shape != (2, count) or v0.shape[0] != table.size:
            raise InvalidArgumentError('Формы касательных столбцов и управлений не согласованы')
        current = (*current, v0.copy(), z0.copy())
        decay = (*decay, half_decay[:, None], np.ones((2, 1)))

    stage = _make_stage(table, forcing, columns)
    times = t_start + h * np.arange(substeps + 1)
    recorded_u = [current[0]] if record else []
    recorded_y = [current[1]] if record else []

    with np.errstate(over='ignore', invalid='ignore'):
        for step in range(substeps):
            current = _lawson_rk4(stage, float(times[step]), h, current, decay)
            if not all(np.all(np.isfinite(value)) for value in current):
                logger.error('Интегрирование разошлось', interval=interval, step=step)
                raise IntegrationDivergedError(interval, step)
            if record:
                recorded_u.append(current[0])
                recorded_y.append(current[1])

    final = SystemState(FourierField(state.cutoff, current[0]), current[1])
    dense = DenseRecord(times, np.array(recorded_u), np.array(recorded_y)) if record else None
    if columns is None:
        return FlowResult(final, dense)
    return FlowResult(final, dense, current[2], current[3])


def step_map(
    state: SystemState,
    forcing: Forcing | None,
    substeps: int = DEFAULT_SUBSTEPS,
    *,
    nu: float = DEFAULT_NU,
    interval: int = 0,
) -> SystemState:
    """Возвращает Υ(1) = S(Υ, η).

    Args:
        state: Начальное состояние Υ.
        forcing: Толчок или управление на [0, 1] (None для нулевого).
        substeps: Число подшагов RK4 (не меньше 16).
        nu: Вязкость.
        interval: Номер интервала для сообщений об ошибках.

    Returns:
        SystemState: Состояние в момент t = 1.
    """
    return integrate(state, forcing, substeps, nu=nu, interval=interval).state


def run_chain(  # noqa: PLR0913
    initial: SystemState,
    spec: 'NoiseSpec',
    seed: int,
    kicks: int,
    *,
    nu: float = DEFAULT_NU,
    substeps: int = DEFAULT_SUBSTEPS,
    trajectory: int = 0,
    record: bool = False,
) -> Trajectory:
    """Строит траекторию Υ_k = S(Υ_{k−1}, η_k) с независимыми толчками.

    Толчки берутся из потока `stream_for(seed, StreamStage.chain, trajectory)`, поэтому
    траектория с данным номером одинакова при любом числе рабочих процессов.

    Args:
        initial: Υ₀.
        spec: Спецификация шума.
        seed: Мастер-зерно.
        kicks: Число шагов K ≥ 0.
        nu: Вязкость.
        substeps: Подшаги на интервал.
        trajectory: Номер траектории в ансамбле.
        record: Сохранять ли записи подшагов.

    Returns:
        Trajectory: Состояния, толчки и записи.
    """
    if kicks < 0:
        raise InvalidArgumentError(f'Число шагов должно быть неотрицательным: {kicks}')
    if spec.spatial_cutoff > initial.cutoff:
        raise InvalidArgumentError(
            f'Отсечка шума {spec.spatial_cutoff} больше отсечки поля {initial.cutoff}'
        )
    rng = stream_for(seed, StreamStage.chain, trajectory)
    states = [initial]
    sampled = []
    records = []
    for k in range(1, kicks + 1):
        kick = sample_kick(spec, rng)
        result = integrate(states[-1], kick, substeps, nu=nu, record=record, interval=k)
        states.append(result.state)
        sampled.append(kick)
        if result.record is not None:
            records.append(result.record)
    logger.debug('Траектория построена', kicks=kicks, trajectory=trajectory)
    return Trajectory(tuple(states), tuple(sampled), tuple(records) if record else None)


def linearized_flow(  # noqa: PLR0913
    state: SystemState,
    forcing: Forcing | None,
    *,
    direction: TangentState | None = None,
    controls: 'Sequence[Forcing]' = (),
    nu: float = DEFAULT_NU,
    substeps: int = DEFAULT_SUBSTEPS,
    t_end: float = 1.0,
) -> tuple['NDArray[np.float64]', 'NDArray[np.float64]']:
    """Решения уравнений в вариациях к (u, y) на [0, t_end].

    Если задан `direction`, возвращается единственный столбец D_Υ S(Υ, η)[direction].
    Иначе по столбцу на каждое управление ζ: D_η S(Υ, η)[ζ].

    Returns:
        tuple: Касательные поля (M, C) и касательные частицы (2, C).
    """
    table = mode_table(state.cutoff)
    columns: list[Forcing | None]
    if direction is not None:
        tangent = (direction.v.coeffs[:, None], np.asarray(direction.z, dtype=np.float64).reshape(2, 1))
        columns = [None]
    else:
        tangent = (np.zeros((table.size, len(controls))), np.zeros((2, len(controls))))
        columns = list(controls)
    result = integrate(state, forcing, substeps, nu=nu, t_end=t_end, tangent=tangent, controls=columns)
    if result.tangent_v is None or result.tangent_z is None:
        raise InvalidArgumentError('Касательные столбцы не были проинтегрированы')
    return result.tangent_v, result.tangent_z


def linearized_map(
    state: SystemState,
    forcing: Forcing | None,
    zeta: Forcing | None,
    *,
    nu: float = DEFAULT_NU,
    substeps: int = DEFAULT_SUBSTEPS,
) -> TangentState:
    """Решает v̇ = −Lv − Q(u)v + ζ, ż = v(t, y) + (D_x u)(t, y) z из (0, 0) и возвращает (v, z)(1)."""
    if zeta is None:
        return TangentState(FourierField.zeros(state.cutoff), np.zeros(2))
    v, z = linearized_flow(state, forcing, controls=[zeta], nu=nu, substeps=substeps)
    return TangentState(FourierField(state.cutoff, v[:, 0]), z[:, 0])


def jacobian_matrix(
    state: SystemState,
    forcing: Forcing | None,
    control_basis: 'Sequence[Forcing]',
    *,
    nu: float = DEFAULT_NU,
    substeps: int = DEFAULT_SUBSTEPS,
    t_end: float = 1.0,
) -> 'NDArray[np.float64]':
    """Матрица D_η S на наборе управлений: строки поля (M), затем две строки частицы.

    Args:
        state: Точка линеаризации Υ.
        forcing: Базовое воздействие η.
        control_basis: Управления-столбцы.
        nu: Вязкость.
        substeps: Подшаги.
        t_end: Момент, в котором берется производная (по умолчанию 1).

    Returns:
        NDArray: Матрица формы (M + 2, n).
    """
    size = mode_table(state.cutoff).size
    if not control_basis:
        return np.zeros((size + 2, 0))
    v, z = linearized_flow(state, forcing, controls=control_basis, nu=nu, substeps=substeps, t_end=t_end)
    return np.vstack([v, z])


def torus_displacement(
    source: 'Sequence[float] | NDArray[np.float64]', target: 'Sequence[float] | NDArray[np.float64]'
) -> tuple['NDArray[np.float64]', bool]:
    """Минимальный подъем смещения target − source в [−π, π]².

    При |смещении| = π по компоненте выбирается положительное направление.

    Returns:
        tuple: Смещение и флаг того, что такой выбор понадобился.
    """
    raw = np.asarray(target, dtype=np.float64) - np.asarray(source, dtype=np.float64)
    lifted = np.mod(raw + math.pi, TWO_PI) - math.pi
    tie = np.isclose(np.abs(lifted), math.pi, rtol=0.0, atol=1e-12)
    return np.where(tie, math.pi, lifted), bool(np.any(tie))


def torus_distance(
    first: 'Sequence[float] | NDArray[np.float64]', second: 'Sequence[float] | NDArray[np.float64]'
) -> float:
    """Геодезическое расстояние на T²."""
    displacement, _ = torus_displacement(first, second)
    return float(np.hypot(*displacement))


def singular_values(matrix: 'NDArray[np.float64]') -> 'NDArray[np.float64]':
    """Сингулярные числа по убыванию (пустой массив для матрицы без столбцов)."""
    if matrix.size == 0:
        return np.zeros(0)
    return np.linalg.svd(matrix, compute_uv=False)


def decay_factor(nu: float, duration: float = 1.0) -> float:
    """Множитель e^{−ν t} убывания энергии для стоксовой части с постоянной Пуанкаре 1."""
    return math.exp(-nu * duration)
