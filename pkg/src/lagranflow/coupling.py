"""Стабилизирующий сдвиг, связанные траектории и оценка скорости перемешивания.

Классы:
    RightInverse: Приближенный правый обратный R = Aᵀ(AAᵀ + γI)⁻¹.
    ShiftOperator: Якобиан D_η S на подпространстве управлений F_M и его правый обратный.
    CouplingReport: Расстояния пары траекторий и события несжатия.
    MixingEstimate: Подогнанная скорость перемешивания и кривые расхождений.

Функции:
    state_distance: Метрика d_X = ‖u − u'‖_{L²} + расстояние частиц на торе.
    approximate_right_inverse: Регуляризованный правый обратный матрицы.
    control_subspace: Вложенные подпространства F_M в координатах ξ.
    stabilizing_shift: Сдвиг Φ = −R (D_Υ S)(Υ' − Υ) в координатах ξ.
    coupled_pair_run: Синхронное сцепление со сдвигом.
    summarize_coupling: Частота несжатия и подогнанная константа по ансамблю пар.
    fit_failure_scaling: Линейная зависимость частоты несжатия от d₀.
    estimate_mixing_rate: Экспоненциальная скорость по расхождению средних наблюдаемых.

Пример использования:
    >>> operator = ShiftOperator.assemble(state, kick, gamma=1e-6)
    >>> shift = stabilizing_shift(state, other, operator)
"""

import math
from dataclasses import dataclass, field
from typing import TYPE_CHECKING

import numpy as np
from scipy import linalg, stats

from src.lagranflow.control import ControlSignal
from src.lagranflow.dynamics import (
    DEFAULT_NU,
    DEFAULT_SUBSTEPS,
    StreamStage,
    SystemState,
    TangentState,
    field_energy,
    jacobian_matrix,
    linearized_flow,
    run_chain,
    step_map,
    torus_displacement,
    torus_distance,
)
from src.lagranflow.errors import InvalidArgumentError, LocalityRadiusError
from src.lagranflow.logger import get_logger
from src.lagranflow.measures_ep import binned_total_variation, fit_exponential_decay
from src.lagranflow.noise import sample_kick, stream_for
from src.lagranflow.spectral_core import FourierField, enumerate_modes

if TYPE_CHECKING:
    from collections.abc import Callable, Sequence

    from numpy.typing import NDArray

    from src.lagranflow.noise import KickRealization, NoiseSpec


logger = get_logger()

DEFAULT_GAMMA = 1e-6
DEFAULT_RADIUS = 1e-2
DEFAULT_CONTROL_CUTOFF = 2
DEFAULT_CONTROL_TIME_MODES = 4
ILL_CONDITIONED = 1e12
PARTICLE_FREQUENCY_RADIUS = 3.0


def state_distance(first: SystemState, second: SystemState) -> float:
    """d_X(Υ, Υ') = ‖u − u'‖_{L²} + геодезическое расстояние частиц."""
    if first.cutoff != second.cutoff:
        raise InvalidArgumentError('Состояния с разными отсечками несравнимы')
    return float(np.linalg.norm(first.u.coeffs - second.u.coeffs)) + torus_distance(first.y, second.y)


def state_difference(first: SystemState, second: SystemState) -> TangentState:
    """Касательный вектор Υ' − Υ с минимальным подъемом смещения частицы."""
    displacement, _ = torus_displacement(first.y, second.y)
    return TangentState(second.u - first.u, displacement)


@dataclass(frozen=True, eq=False)
class RightInverse:
    """R = Aᵀ(AAᵀ + γI)⁻¹ с кэшированным разложением Холецкого.

    Attributes:
        jacobian: Матрица A формы (m, n).
        gamma: Регуляризация γ > 0.
        condition: Число обусловленности AAᵀ + γI.
        ill_conditioned: Превышен ли порог 1e12.
    """

    jacobian: 'NDArray[np.float64]'
    gamma: float
    condition: float
    ill_conditioned: bool
    _factor: tuple['NDArray[np.float64]', bool] = field(repr=False)

    def __call__(self, target: 'NDArray[np.float64]') -> 'NDArray[np.float64]':
        """Rf."""
        return self.jacobian.T @ linalg.cho_solve(self._factor, np.asarray(target, dtype=np.float64))

    @property
    def matrix(self) -> 'NDArray[np.float64]':
        """R в явном виде, форма (n, m)."""
        return self(np.eye(self.jacobian.shape[0]))

    def residual(self, target: 'NDArray[np.float64]') -> float:
        """‖ARf − f‖."""
        return float(np.linalg.norm(self.jacobian @ self(target) - target))


def approximate_right_inverse(jacobian: 'NDArray[np.float64]', gamma: float) -> RightInverse:
    """Строит регуляризованный правый обратный.

    Args:
        jacobian: Матрица A.
        gamma: Регуляризация γ > 0.

    Returns:
        RightInverse: Оператор R; при плохой обусловленности выставлен флаг и записано предупреждение.
    """
    if gamma <= 0:
        raise InvalidArgumentError(f'Регуляризация должна быть положительной: {gamma}')
    matrix = np.atleast_2d(np.asarray(jacobian, dtype=np.float64))
    gram = matrix @ matrix.T + gamma * np.eye(matrix.shape[0])
    condition = float(np.linalg.cond(gram))
    ill = condition > ILL_CONDITIONED
    if ill:
        logger.warning('Плохая обусловленность AAᵀ + γI', condition=condition, gamma=gamma)
    return RightInverse(matrix, gamma, condition, ill, linalg.cho_factor(gram))


def control_subspace(
    spec: 'NoiseSpec', cutoff: int = DEFAULT_CONTROL_CUTOFF, time_modes: int = DEFAULT_CONTROL_TIME_MODES
) -> list[tuple[int, int]]:
    """Индексы (l, m) координат ξ, порождающих F_M: моды |j|_∞ ≤ cutoff и l ≤ time_modes.

    Семейство вложено по cutoff и по time_modes.
    """
    cutoff = min(cutoff, spec.spatial_cutoff)
    time_modes = min(time_modes, spec.time_modes)
    return [
        (l, position)
        for position, mode in enumerate(spec.modes)
        if mode.linf <= cutoff
        for l in range(time_modes)  # noqa: E741
    ]


def _coordinate_controls(spec: 'NoiseSpec', indices: 'Sequence[tuple[int, int]]') -> list[ControlSignal]:
    """Управления ∂η/∂ξ_{lj} = b_j c_l ψ_l e_j."""
    controls = []
    for l, position in indices:  # noqa: E741
        row = np.zeros((1, spec.time_modes))
        row[0, l] = spec.spatial_weights[position] * spec.time_weights[l]
        controls.append(ControlSignal((spec.modes[position],), row))
    return controls


@dataclass(frozen=True, eq=False)
class ShiftOperator:
    """Линеаризация в базовой точке (Υ, η) на подпространстве F_M.

    Attributes:
        state: Базовое состояние Υ.
        kick: Базовый толчок η.
        indices: Координаты (l, m) таблицы ξ, порождающие F_M.
        inverse: Правый обратный к A = D_ξ S.
        nu: Вязкость.
        substeps: Подшаги.
    """

    state: SystemState
    kick: 'KickRealization'
    indices: tuple[tuple[int, int], ...]
    inverse: RightInverse
    nu: float = DEFAULT_NU
    substeps: int = DEFAULT_SUBSTEPS

    @classmethod
    def assemble(  # noqa: PLR0913
        cls,
        state: SystemState,
        kick: 'KickRealization',
        *,
        gamma: float = DEFAULT_GAMMA,
        cutoff: int = DEFAULT_CONTROL_CUTOFF,
        time_modes: int = DEFAULT_CONTROL_TIME_MODES,
        nu: float = DEFAULT_NU,
        substeps: int = DEFAULT_SUBSTEPS,
    ) -> 'ShiftOperator':
        """Собирает A прямой чувствительностью по всем столбцам F_M и факторизует AAᵀ + γI."""
        indices = tuple(control_subspace(kick.spec, cutoff, time_modes))
        controls = _coordinate_controls(kick.spec, indices)
        jacobian = jacobian_matrix(state, kick, controls, nu=nu, substeps=substeps)
        return cls(state, kick, indices, approximate_right_inverse(jacobian, gamma), nu, substeps)

    @property
    def dimension(self) -> int:
        """dim F_M."""
        return len(self.indices)

    def state_derivative(self, direction: TangentState) -> 'NDArray[np.float64]':
        """(D_Υ S)(Υ, η) на направлении, форма (M + 2,)."""
        v, z = linearized_flow(self.state, self.kick, direction=direction, nu=self.nu, substeps=self.substeps)
        return np.concatenate([v[:, 0], z[:, 0]])

    def to_table(self, coordinates: 'NDArray[np.float64]') -> 'NDArray[np.float64]':
        """Раскладывает вектор координат F_M в таблицу сдвига ξ формы (L, M)."""
        table = np.zeros_like(self.kick.xi)
        for value, (l, position) in zip(coordinates, self.indices, strict=True):  # noqa: E741
            table[l, position] = value
        return table


def stabilizing_shift(
    state: SystemState,
    other: SystemState,
    operator: ShiftOperator,
    radius: float = DEFAULT_RADIUS,
) -> 'NDArray[np.float64]':
    """Сдвиг Φ = −R (D_Υ S)(Υ, η)(Υ' − Υ) в координатах таблицы ξ.

    Args:
        state: Υ (совпадает с базовой точкой оператора).
        other: Υ'.
        operator: Замороженный оператор сдвига.
        radius: Радиус локальности δ.

    Returns:
        NDArray: Таблица Δξ формы (L, M).

    Raises:
        LocalityRadiusError: Если d_X(Υ, Υ') > δ.
    """
    distance = state_distance(state, other)
    if distance > radius:
        raise LocalityRadiusError(distance, radius)
    if distance == 0.0:
        return np.zeros_like(operator.kick.xi)
    drift = operator.state_derivative(state_difference(state, other))
    return operator.to_table(-operator.inverse(drift))


def shift_signal(operator: ShiftOperator, shift: 'NDArray[np.float64]') -> ControlSignal:
    """Сдвиг Φ как управление (для норм и запасов K₀)."""
    spec = operator.kick.spec
    coeffs = spec.spatial_weights[:, None] * spec.time_weights[None, :] * shift.T
    return ControlSignal(spec.modes, coeffs)


@dataclass(frozen=True, eq=False)
class CouplingReport:
    """Итог одной пары связанных траекторий.

    Attributes:
        distances: d_k, k = 0..K.
        contraction: Признаки d_k ≤ q·d_{k−1} для k = 1..K.
        failures: Число шагов, где сдвинутый толчок вышел из носителя.
        outside_radius: Число шагов, где пара вышла из радиуса локальности.
        shift_norms: ‖Φ_k‖ в L²(0, 1; L²).
        mixing_rate: Наклон −log d_k по k (nan, если данных мало).
    """

    distances: 'NDArray[np.float64]'
    contraction: 'NDArray[np.bool_]'
    failures: int
    outside_radius: int
    shift_norms: 'NDArray[np.float64]'
    mixing_rate: float

    @property
    def squeezing_factors(self) -> 'NDArray[np.float64]':
        """d_k / d_{k−1} (nan при d_{k−1} = 0)."""
        previous = self.distances[:-1]
        with np.errstate(divide='ignore', invalid='ignore'):
            return np.where(previous > 0, self.distances[1:] / np.where(previous > 0, previous, 1.0), np.nan)

    @property
    def non_contraction_frequency(self) -> float:
        """Доля шагов без сжатия."""
        return float(np.mean(~self.contraction)) if self.contraction.size else 0.0

    def rows(self, pair_id: int) -> list[dict[str, float]]:
        """Строки схемы coupling: pair_id, k, d_k, contraction_flag."""
        flags = np.concatenate([[True], self.contraction])
        return [
            {'pair_id': pair_id, 'k': k, 'd_k': float(distance), 'contraction_flag': int(flag)}
            for k, (distance, flag) in enumerate(zip(self.distances, flags, strict=True))
        ]


def _log_linear_rate(distances: 'NDArray[np.float64]') -> float:
    positive = np.flatnonzero(distances > 0)
    if positive.size < 3:  # noqa: PLR2004
        return math.nan
    fit = stats.linregress(positive.astype(np.float64), np.log(distances[positive]))
    return float(-fit.slope)


def coupled_pair_run(  # noqa: PLR0913
    first: SystemState,
    second: SystemState,
    spec: 'NoiseSpec',
    seed: int,
    kicks: int,
    q: float,
    *,
    pair_id: int = 0,
    gamma: float = DEFAULT_GAMMA,
    radius: float = DEFAULT_RADIUS,
    nu: float = DEFAULT_NU,
    substeps: int = DEFAULT_SUBSTEPS,
) -> CouplingReport:
    """Синхронное сцепление со стабилизирующим сдвигом.

    Первая траектория получает толчки из того же потока, что и `run_chain` с номером
    траектории `pair_id`, поэтому ее закон не искажается.

    Args:
        first: Υ₀.
        second: Υ'₀.
        spec: Шум.
        seed: Мастер-зерно.
        kicks: Число шагов K.
        q: Порог сжатия q ∈ (0, 1).
        pair_id: Номер пары.
        gamma: Регуляризация правого обратного.
        radius: Радиус локальности.
        nu: Вязкость.
        substeps: Подшаги.

    Returns:
        CouplingReport: Расстояния и статистика событий.
    """
    if not 0 < q < 1:
        raise InvalidArgumentError(f'Порог сжатия должен лежать в (0, 1): {q}')
    rng = stream_for(seed, StreamStage.chain, pair_id)
    distances = [state_distance(first, second)]
    norms = []
    failures = 0
    outside = 0
    current, partner = first, second
    for k in range(1, kicks + 1):
        kick = sample_kick(spec, rng)
        driven = kick
        norm = 0.0
        if distances[-1] > radius:
            outside += 1
        elif distances[-1] > 0:
            operator = ShiftOperator.assemble(current, kick, gamma=gamma, nu=nu, substeps=substeps)
            shift = stabilizing_shift(current, partner, operator, radius)
            moved = kick.shifted(shift)
            if moved is None:
                failures += 1
                logger.debug('Сдвинутый толчок вне носителя', pair_id=pair_id, k=k)
            else:
                driven = moved
                norm = shift_signal(operator, shift).norm()
        current = step_map(current, kick, substeps, nu=nu, interval=k)
        partner = step_map(partner, driven, substeps, nu=nu, interval=k)
        distances.append(state_distance(current, partner))
        norms.append(norm)

    values = np.array(distances)
    contraction = values[1:] <= q * values[:-1]
    report = CouplingReport(
        distances=values,
        contraction=contraction,
        failures=failures,
        outside_radius=outside,
        shift_norms=np.array(norms),
        mixing_rate=_log_linear_rate(values),
    )
    logger.debug('Пара траекторий построена', pair_id=pair_id, failures=failures, final=float(values[-1]))
    return report


def summarize_coupling(reports: 'Sequence[CouplingReport]') -> dict[str, float]:
    """Частота несжатия по ансамблю пар и константа C в частоте ≤ C·d₀."""
    if not reports:
        raise InvalidArgumentError('Нет пар для сводки')
    flags = np.concatenate([report.contraction for report in reports])
    frequency = float(np.mean(~flags)) if flags.size else 0.0
    initial = float(np.mean([report.distances[0] for report in reports]))
    return {
        'pairs': float(len(reports)),
        'initial_distance': initial,
        'non_contraction_frequency': frequency,
        'failure_constant': frequency / initial if initial > 0 else math.nan,
        'failures': float(sum(report.failures for report in reports)),
        'outside_radius': float(sum(report.outside_radius for report in reports)),
    }


@dataclass(frozen=True)
class FailureScaling:
    """Линейная подгонка частоты несжатия по d₀."""

    slope: float
    intercept: float
    r_squared: float


def fit_failure_scaling(distances: 'Sequence[float]', frequencies: 'Sequence[float]') -> FailureScaling:
    """Подгоняет частоту ≈ slope·d₀ + intercept; нужно хотя бы три значения d₀."""
    if len(distances) < 3 or len(distances) != len(frequencies):  # noqa: PLR2004
        raise InvalidArgumentError('Нужно не меньше трех согласованных значений d₀')
    fit = stats.linregress(np.asarray(distances, dtype=np.float64), np.asarray(frequencies, dtype=np.float64))
    return FailureScaling(float(fit.slope), float(fit.intercept), float(fit.rvalue**2))


def _particle_observables() -> list[tuple[str, 'Callable[[SystemState], float]']]:
    """cos⟨m, y⟩ для мод косинусного типа и sin⟨m, y⟩ для синусного, |m| ≤ 3."""
    observables: list[tuple[str, Callable[[SystemState], float]]] = []
    for mode in enumerate_modes(3):
        if mode.norm > PARTICLE_FREQUENCY_RADIUS:
            continue
        vector = np.array(mode, dtype=np.float64)
        wave = np.cos if mode.is_cosine else np.sin
        observables.append(
            (f'particle_{mode.j1}_{mode.j2}', lambda state, v=vector, f=wave: float(f(v @ state.y)))
        )
    return observables


def default_observables() -> list[tuple[str, 'Callable[[SystemState], float]']]:
    """Ограниченные липшицевы наблюдаемые: E/(1 + E) и частотные моды частицы."""

    def energy(state: SystemState) -> float:
        value = field_energy(state.u)
        return value / (1.0 + value)

    return [('energy', energy), *_particle_observables()]


@dataclass(frozen=True, eq=False)
class MixingEstimate:
    """Оценка скорости перемешивания.

    Attributes:
        rate: Подогнанная γ_mix (nan, если не обнаружено).
        lower: Нижняя граница доверительного интервала.
        upper: Верхняя граница.
        detected: Есть ли убывание выше шумового порога.
        discrepancy: Наибольшее расхождение средних по k.
        noise_floor: Порог Монте-Карло по k.
        curves: Расхождения по наблюдаемым.
        particle_tv: Полная вариация маргиналов частицы по k.
    """

    rate: float
    lower: float
    upper: float
    detected: bool
    discrepancy: 'NDArray[np.float64]'
    noise_floor: 'NDArray[np.float64]'
    curves: dict[str, 'NDArray[np.float64]'] = field(repr=False)
    particle_tv: 'NDArray[np.float64]' = field(repr=False)

    def rows(self) -> list[dict[str, float]]:
        """Строки схемы mixing: k, discrepancy, noise_floor, particle_tv и кривые."""
        return [
            {
                'k': k,
                'discrepancy': float(self.discrepancy[k]),
                'noise_floor': float(self.noise_floor[k]),
                'particle_tv': float(self.particle_tv[k]),
                **{name: float(curve[k]) for name, curve in self.curves.items()},
            }
            for k in range(self.discrepancy.size)
        ]


def estimate_mixing_rate(  # noqa: PLR0913
    spec: 'NoiseSpec',
    initial_states: 'Sequence[SystemState]',
    seed: int,
    trajectories: int,
    kicks: int,
    *,
    observables: 'Sequence[tuple[str, Callable[[SystemState], float]]] | None' = None,
    nu: float = DEFAULT_NU,
    substeps: int = DEFAULT_SUBSTEPS,
) -> MixingEstimate:
    """Подгоняет экспоненциальное убывание расхождения средних между ансамблями.

    Ансамбли из разных начальных состояний независимы. Точки ниже порога 3σ
    Монте-Карло в подгонку не входят; если их меньше трех или наклон неотрицателен,
    перемешивание считается не обнаруженным.

    Args:
        spec: Шум.
        initial_states: Не меньше двух начальных состояний.
        seed: Мастер-зерно.
        trajectories: Траекторий на начальное состояние.
        kicks: Горизонт K.
        observables: Пары (имя, функция); по умолчанию `default_observables`.
        nu: Вязкость.
        substeps: Подшаги.

    Returns:
        MixingEstimate: Скорость с доверительным интервалом и кривые.
    """
    if len(initial_states) < 2:  # noqa: PLR2004
        raise InvalidArgumentError('Нужно хотя бы два начальных состояния')
    if trajectories < 2:  # noqa: PLR2004
        raise InvalidArgumentError(f'Нужно хотя бы две траектории: {trajectories}')
    chosen = list(observables or default_observables())

    values = np.empty((len(initial_states), trajectories, kicks + 1, len(chosen)))
    positions = np.empty((len(initial_states), trajectories, kicks + 1, 2))
    for group, initial in enumerate(initial_states):
        for member in range(trajectories):
            trajectory = run_chain(
                initial, spec, seed, kicks, nu=nu, substeps=substeps, trajectory=group * trajectories + member
            )
            positions[group, member] = trajectory.positions
            for k, state in enumerate(trajectory.states):
                values[group, member, k] = [function(state) for _, function in chosen]

    means = values.mean(axis=1)
    errors = values.std(axis=1, ddof=1) / math.sqrt(trajectories)
    curves = {name: np.zeros(kicks + 1) for name, _ in chosen}
    discrepancy = np.zeros(kicks + 1)
    floor = np.zeros(kicks + 1)
    particle_tv = np.zeros(kicks + 1)
    for a in range(len(initial_states)):
        for b in range(a + 1, len(initial_states)):
            gaps = np.abs(means[a] - means[b])
            spread = 3.0 * np.hypot(errors[a], errors[b])
            for column, (name, _) in enumerate(chosen):
                curves[name] = np.maximum(curves[name], gaps[:, column])
            worst = gaps.argmax(axis=1)
            discrepancy = np.maximum(discrepancy, gaps.max(axis=1))
            floor = np.maximum(floor, spread[np.arange(kicks + 1), worst])
            particle_tv = np.maximum(
                particle_tv,
                [binned_total_variation(positions[a, :, k], positions[b, :, k]) for k in range(kicks + 1)],
            )

    steps = np.arange(kicks + 1, dtype=np.float64)
    rate, lower, upper, detected = fit_exponential_decay(steps, discrepancy, floor)
    if not detected:
        logger.warning('Перемешивание не обнаружено выше шумового порога', points=int((discrepancy > floor).sum()))
    else:
        logger.info('Скорость перемешивания оценена', rate=rate, lower=lower, upper=upper)
    return MixingEstimate(rate, lower, upper, detected, discrepancy, floor, curves, particle_tv)


def random_pair(state: SystemState, distance: float, rng: np.random.Generator) -> SystemState:
    """Состояние на расстоянии d_X ровно `distance` от данного: половина в поле, половина в частице."""
    field_direction = rng.standard_normal(state.u.coeffs.size)
    field_direction /= np.linalg.norm(field_direction)
    angle = rng.uniform(0.0, 2.0 * math.pi)
    shift = 0.5 * distance * np.array([math.cos(angle), math.sin(angle)])
    moved = FourierField(state.cutoff, state.u.coeffs + 0.5 * distance * field_direction)
    return SystemState(moved, state.y + shift)

