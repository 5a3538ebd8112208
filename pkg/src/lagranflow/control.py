"""Исполняемые конструкции управляемости: перенос частицы, линеаризованное управление, гашение поля.

Классы:
    ControlSignal: Детерминированное воздействие Σ α_{jl} ψ_l(t) e_j на носителе Λ.
    ParticleAnsatz: Явное поле u(t, x) = φ₁U₁(x − γ) + φ₂U₂(x − γ) и кривая γ(t).
    LinearizedSteering: Управление ζ и достигнутое (v(1), z(1)).
    DampingResult: Управление гашения поля на [0, 1/2].
    SteeringOptions: Параметры двухфазного переноса.
    SteeringReport: Отчет о переносе (ошибки, утечка, убывание коэффициентов, запасы K₀).
    KappaSearch: Найденный порог гашения κ и протокол попыток.

Функции:
    smooth_step / smooth_step_derivative: Гладкая ступенька и ее производные.
    steer_particle_control: Управление, переносящее частицу из p в p̂ при u(0) = u(1) = 0.
    steer_linearized: Управление линеаризованной системой.
    damp_velocity_control: Численная замена фазы Аграчева–Сарычева (стрельба Гаусса–Ньютона).
    exact_steer_fixpoint: Двухфазное управление с итерацией Пикара по точке переноса.
    discover_kappa: Бисекция по κ, при котором двухфазный перенос сходится.
    steering_report: Замкнутая проверка управления.

Пример использования:
    >>> control = steer_particle_control(np.array([1.0, 1.0]), np.array([1.2, 0.9]))
    >>> final = step_map(SystemState.at_rest(2, [1.0, 1.0]), control, 256)
"""

import functools
import math
from dataclasses import dataclass, field, replace
from typing import TYPE_CHECKING, Any

import numpy as np
from scipy import integrate as quadrature
from scipy import stats

from src.lagranflow.dynamics import (
    DEFAULT_NU,
    DEFAULT_SUBSTEPS,
    SystemState,
    TangentState,
    field_tendency,
    integrate,
    jacobian_matrix,
    linearized_map,
    step_map,
    torus_displacement,
)
from src.lagranflow.errors import FixedPointDivergedError, IntegrationDivergedError, InvalidArgumentError
from src.lagranflow.logger import get_logger
from src.lagranflow.noise import project_time_samples, support_margins, time_basis_matrix
from src.lagranflow.spectral_core import (
    FourierField,
    Mode,
    VectorTrigExpansion,
    bilinear_coeffs,
    enumerate_modes,
    eval_field,
    eval_field_jet,
    leray_project,
    mode_table,
    sobolev_norm,
)

if TYPE_CHECKING:
    from collections.abc import Iterable, Sequence

    from numpy.typing import NDArray

    from src.lagranflow.dynamics import Forcing
    from src.lagranflow.noise import MarginReport, NoiseSpec


logger = get_logger()

CONTROL_TIME_MODES = 255
CONTROL_SAMPLES = 1024
LINEAR_SAMPLES = 512
TRANSPORT_WINDOW = (1.0 / 3.0, 2.0 / 3.0)
FIXPOINT_WINDOW = (2.0 / 3.0, 5.0 / 6.0)
MAX_DISPLACEMENT = 1.0
STEER_SUPPORT = tuple(mode for mode in enumerate_modes(2) if mode.l1 <= 2)  # noqa: PLR2004
DAMPING_SUPPORT = enumerate_modes(1)
DAMPING_MARGIN = 0.05
DAMPING_BUMPS = 4
DECAY_MIN_INDEX = 8
DECAY_FLOOR = 1e-12
INITIAL_DAMPING = 1e-2
KAPPA_BISECTIONS = 6


def _bump(x: float) -> float:
    """exp(−1/(x(1 − x))) на (0, 1), ноль вне."""
    if x <= 0.0 or x >= 1.0:
        return 0.0
    return math.exp(-1.0 / (x * (1.0 - x)))


@functools.cache
def _bump_mass() -> float:
    value, _ = quadrature.quad(_bump, 0.0, 1.0, epsabs=1e-16, epsrel=1e-13)
    return float(value)


def smooth_step(x: 'float | NDArray[np.float64]') -> 'NDArray[np.float64]':
    """C^∞-ступенька: 0 при x ≤ 0, 1 при x ≥ 1, нормированный интеграл шапочки между ними."""
    points = np.atleast_1d(np.asarray(x, dtype=np.float64))
    values = np.where(points >= 1.0, 1.0, 0.0)
    mass = _bump_mass()
    for index in np.flatnonzero((points > 0.0) & (points < 1.0)):
        point = float(points[index])
        if point <= 0.5:  # noqa: PLR2004
            partial, _ = quadrature.quad(_bump, 0.0, point, epsabs=1e-16, epsrel=1e-13)
            values[index] = partial / mass
        else:
            partial, _ = quadrature.quad(_bump, point, 1.0, epsabs=1e-16, epsrel=1e-13)
            values[index] = 1.0 - partial / mass
    return values.reshape(np.shape(x))


def smooth_step_derivative(x: 'float | NDArray[np.float64]', order: int = 1) -> 'NDArray[np.float64]':
    """Первая или вторая производная `smooth_step`."""
    points = np.asarray(x, dtype=np.float64)
    inside = (points > 0.0) & (points < 1.0)
    safe = np.where(inside, points, 0.5)
    spread = safe * (1.0 - safe)
    first = np.where(inside, np.exp(-1.0 / spread), 0.0) / _bump_mass()
    if order == 1:
        return first
    if order == 2:  # noqa: PLR2004
        return first * (1.0 - 2.0 * safe) / spread**2
    raise InvalidArgumentError(f'Поддерживаются производные порядка 1 и 2: {order}')


@functools.cache
def _support_positions(support: tuple[Mode, ...], cutoff: int) -> tuple['NDArray[np.int64]', 'NDArray[np.int64]']:
    index = mode_table(cutoff).index
    pairs = [(row, index[mode]) for row, mode in enumerate(support) if mode in index]
    rows = np.array([pair[0] for pair in pairs], dtype=np.int64)
    positions = np.array([pair[1] for pair in pairs], dtype=np.int64)
    return rows, positions


@dataclass(frozen=True, eq=False)
class ControlSignal:
    """Управление на [0, 1]: коэффициенты α_{jl} формы (|Λ|, L) для мод носителя Λ."""

    support: tuple[Mode, ...]
    coeffs: 'NDArray[np.float64]'

    def __post_init__(self) -> None:
        """Проверяет носитель и форму коэффициентов."""
        support = tuple(Mode(*mode) for mode in self.support)
        if len(set(support)) != len(support):
            raise InvalidArgumentError('Моды носителя управления повторяются')
        values = np.array(self.coeffs, dtype=np.float64)
        if values.ndim != 2 or values.shape[0] != len(support) or values.shape[1] < 1:  # noqa: PLR2004
            raise InvalidArgumentError(f'Коэффициенты управления должны иметь форму ({len(support)}, L ≥ 1)')
        values.setflags(write=False)
        object.__setattr__(self, 'support', support)
        object.__setattr__(self, 'coeffs', values)

    @classmethod
    def zeros(cls, support: 'Iterable[Mode]', time_modes: int) -> 'ControlSignal':
        """Нулевое управление на заданном носителе."""
        modes = tuple(support)
        return cls(modes, np.zeros((len(modes), time_modes)))

    @classmethod
    def from_rows(cls, rows: 'Iterable[dict[str, Any]]') -> 'ControlSignal':
        """Собирает управление из строк схемы (j1, j2, l, alpha)."""
        entries = [(Mode(int(row['j1']), int(row['j2'])), int(row['l']), float(row['alpha'])) for row in rows]
        support = tuple(dict.fromkeys(mode for mode, _, _ in entries))
        time_modes = max((l for _, l, _ in entries), default=1)
        coeffs = np.zeros((len(support), time_modes))
        position = {mode: row for row, mode in enumerate(support)}
        for mode, l, alpha in entries:  # noqa: E741
            coeffs[position[mode], l - 1] = alpha
        return cls(support, coeffs)

    @property
    def time_modes(self) -> int:
        """Число временных мод L."""
        return int(self.coeffs.shape[1])

    def coefficients_at(self, t: float, cutoff: int) -> 'NDArray[np.float64]':
        """Коэффициенты η(t) в базисе e_j на отсечке cutoff."""
        result = np.zeros(mode_table(cutoff).size)
        rows, positions = _support_positions(self.support, cutoff)
        if rows.size:
            result[positions] = self.coeffs[rows] @ time_basis_matrix(self.time_modes, t)
        return result

    def field_at(self, t: float, cutoff: int) -> FourierField:
        """Поле η(t)."""
        return FourierField(cutoff, self.coefficients_at(t, cutoff))

    def coefficient(self, mode: 'Mode | tuple[int, int]', l: int) -> float:  # noqa: E741
        """α_{jl}; ноль вне носителя."""
        key = Mode(*mode)
        if key not in self.support or not 1 <= l <= self.time_modes:
            return 0.0
        return float(self.coeffs[self.support.index(key), l - 1])

    def __add__(self, other: 'ControlSignal') -> 'ControlSignal':
        """Сумма управлений на объединении носителей."""
        support = tuple(dict.fromkeys(self.support + other.support))
        time_modes = max(self.time_modes, other.time_modes)
        coeffs = np.zeros((len(support), time_modes))
        position = {mode: row for row, mode in enumerate(support)}
        for signal in (self, other):
            rows = [position[mode] for mode in signal.support]
            coeffs[rows, : signal.time_modes] += signal.coeffs
        return ControlSignal(support, coeffs)

    def __mul__(self, factor: float) -> 'ControlSignal':
        """Умножение на число."""
        return ControlSignal(self.support, self.coeffs * factor)

    __rmul__ = __mul__

    def truncated(self, time_modes: int) -> 'ControlSignal':
        """Оставляет временные моды l ≤ time_modes."""
        if time_modes >= self.time_modes:
            return self
        return ControlSignal(self.support, self.coeffs[:, :time_modes])

    def restricted(self, support: 'Iterable[Mode]') -> 'ControlSignal':
        """Ограничение на подмножество мод."""
        keep = tuple(mode for mode in support if mode in self.support)
        rows = [self.support.index(mode) for mode in keep]
        return ControlSignal(keep, self.coeffs[rows].reshape(len(keep), self.time_modes))

    def max_outside(self, modes: 'Iterable[Mode]') -> float:
        """Наибольший |α_{jl}| по модам вне заданного множества."""
        allowed = set(modes)
        outside = [row for row, mode in enumerate(self.support) if mode not in allowed]
        return float(np.abs(self.coeffs[outside]).max()) if outside else 0.0

    def norm(self) -> float:
        """Норма в L²(0, 1; L²)."""
        return float(np.linalg.norm(self.coeffs))

    def rows(self) -> list[dict[str, float]]:
        """Строки схемы управления: j1, j2, l, alpha."""
        return [
            {'j1': mode.j1, 'j2': mode.j2, 'l': l + 1, 'alpha': float(self.coeffs[row, l])}
            for row, mode in enumerate(self.support)
            for l in range(self.time_modes)  # noqa: E741
        ]


def _window_progress(
    times: 'NDArray[np.float64]', window: tuple[float, float]
) -> tuple['NDArray[np.float64]', 'NDArray[np.float64]', 'NDArray[np.float64]']:
    """Ступенька α(t) = S((t − t₀)/w) и ее производные по t."""
    start, end = window
    width = end - start
    scaled = (times - start) / width
    return (
        smooth_step(scaled),
        smooth_step_derivative(scaled) / width,
        smooth_step_derivative(scaled, order=2) / width**2,
    )


def _validate_window(window: tuple[float, float]) -> None:
    start, end = window
    if not 0.0 <= start < end <= 1.0:
        raise InvalidArgumentError(f'Окно управления должно лежать в [0, 1]: {window}')


@dataclass(frozen=True, eq=False)
class ParticleAnsatz:
    """Кривая γ(t) = p + α(t)Δ и поле u(t, x) = φ₁U₁(x − γ) + φ₂U₂(x − γ), φ = γ̇.

    U₁(x) = (cos x₂, 0) и U₂(x) = (0, cos x₁) бездивергентны, U₁(0) = (1, 0), U₂(0) = (0, 1),
    поэтому u(t, γ(t)) = γ̇(t).
    """

    start: 'NDArray[np.float64]'
    displacement: 'NDArray[np.float64]'
    window: tuple[float, float] = TRANSPORT_WINDOW

    def __post_init__(self) -> None:
        """Проверяет окно переноса."""
        _validate_window(self.window)

    def curve(
        self, times: 'NDArray[np.float64]'
    ) -> tuple['NDArray[np.float64]', 'NDArray[np.float64]', 'NDArray[np.float64]']:
        """γ, γ̇, γ̈ в моменты times, каждая формы (T, 2)."""
        alpha, alpha_dot, alpha_ddot = _window_progress(np.asarray(times, dtype=np.float64), self.window)
        gamma = self.start + alpha[:, None] * self.displacement
        return gamma, alpha_dot[:, None] * self.displacement, alpha_ddot[:, None] * self.displacement

    def velocity(self, t: float, x: 'NDArray[np.float64]') -> 'NDArray[np.float64]':
        """u(t, x)."""
        gamma, phi, _ = (value[0] for value in self.curve(np.array([t])))
        return np.array([phi[0] * math.cos(x[1] - gamma[1]), phi[1] * math.cos(x[0] - gamma[0])])


def shear_pair_field(
    cutoff: int, first: tuple[float, float], second: tuple[float, float], center: 'NDArray[np.float64]'
) -> 'NDArray[np.float64]':
    """Коэффициенты поля (A cos(x₂−c₂) + B sin(x₂−c₂), C cos(x₁−c₁) + D sin(x₁−c₁)).

    Args:
        cutoff: Отсечка результата.
        first: Амплитуды (A, B) первой компоненты.
        second: Амплитуды (C, D) второй компоненты.
        center: Точка сдвига c.

    Returns:
        NDArray: Коэффициенты (M,); поле бездивергентно, проекция точна.
    """
    c1, c2 = math.cos(center[1]), math.sin(center[1])
    d1, d2 = math.cos(center[0]), math.sin(center[0])
    first_cos = first[0] * c1 - first[1] * c2
    first_sin = first[0] * c2 + first[1] * c1
    second_cos = second[0] * d1 - second[1] * d2
    second_sin = second[0] * d2 + second[1] * d1
    expansion = VectorTrigExpansion.from_terms(
        {
            (0, 1): np.array([[first_cos, 0.0], [first_sin, 0.0]]),
            (1, 0): np.array([[0.0, second_cos], [0.0, second_sin]]),
        }
    )
    return leray_project(expansion, cutoff).coeffs


def particle_forcing_samples(
    ansatz: ParticleAnsatz, times: 'NDArray[np.float64]', nu: float = DEFAULT_NU, cutoff: int = 2
) -> 'NDArray[np.float64]':
    """Значения Πg = ∂_t u + ν(−Δ)u в моменты times, форма (T, M).

    Адвекция (u·∇)u этого поля есть градиент −φ₁φ₂∇(sin(x₁−γ₁) sin(x₂−γ₂)) и проектором снимается.
    """
    gamma, phi, phi_dot = ansatz.curve(times)
    samples = np.empty((len(times), mode_table(cutoff).size))
    for index, (rate, acceleration) in enumerate(zip(phi, phi_dot, strict=True)):
        cross = rate[0] * rate[1]
        samples[index] = shear_pair_field(
            cutoff,
            (acceleration[0] + nu * rate[0], cross),
            (acceleration[1] + nu * rate[1], cross),
            gamma[index],
        )
    return samples


def steer_particle_control(  # noqa: PLR0913
    p: 'Sequence[float] | NDArray[np.float64]',
    p_hat: 'Sequence[float] | NDArray[np.float64]',
    *,
    nu: float = DEFAULT_NU,
    window: tuple[float, float] = TRANSPORT_WINDOW,
    time_modes: int = CONTROL_TIME_MODES,
    samples: int = CONTROL_SAMPLES,
) -> ControlSignal:
    """Строит Πg, переносящее частицу из p в p̂ при нулевом поле в начале и в конце.

    Args:
        p: Начальная точка.
        p_hat: Целевая точка.
        nu: Вязкость.
        window: Временное окно переноса.
        time_modes: Число временных мод разложения.
        samples: Число равномерных отсчетов для разложения по ψ_l.

    Returns:
        ControlSignal: Управление с носителем Λ = {|j|₁ ≤ 2}.

    Raises:
        InvalidArgumentError: Если минимальный подъем смещения длиннее 1.
    """
    displacement, tie = torus_displacement(p, p_hat)
    distance = float(np.hypot(*displacement))
    if distance > MAX_DISPLACEMENT:
        raise InvalidArgumentError(f'Смещение {distance:.6g} превышает допустимое {MAX_DISPLACEMENT}')
    if tie:
        logger.warning('Смещение равно π по компоненте, выбрано положительное направление', displacement=distance)

    ansatz = ParticleAnsatz(np.asarray(p, dtype=np.float64), displacement, window)
    times = np.arange(samples) / samples
    coeffs = project_time_samples(particle_forcing_samples(ansatz, times, nu), time_modes)
    synthesized = ControlSignal(enumerate_modes(2), coeffs.T)
    leakage = synthesized.max_outside(STEER_SUPPORT)
    logger.debug('Управление переносом построено', displacement=distance, leakage=leakage)
    return synthesized.restricted(STEER_SUPPORT)


def coefficient_decay_exponent(control: ControlSignal, min_index: int = DECAY_MIN_INDEX) -> float:
    """Показатель r в |α_{jl}| ≤ C l^{−r} по монотонной огибающей пар (ψ_{2m}, ψ_{2m+1}).

    Возвращает inf, если коэффициенты падают ниже порога раньше, чем набирается три точки.
    """
    magnitudes = np.abs(control.coeffs).max(axis=0, initial=0.0)
    scale = float(magnitudes.max(initial=0.0))
    if scale == 0.0:
        return math.inf
    pairs = np.arange(min_index // 2, (control.time_modes - 1) // 2 + 1)
    envelope = np.maximum(magnitudes[2 * pairs - 1], magnitudes[np.minimum(2 * pairs, control.time_modes - 1)])
    envelope = np.maximum.accumulate(envelope[::-1])[::-1]
    visible = envelope > DECAY_FLOOR * scale
    if int(visible.sum()) < 3:  # noqa: PLR2004
        return math.inf
    fit = stats.linregress(np.log(2.0 * pairs[visible]), np.log(envelope[visible]))
    return float(-fit.slope)


@dataclass(frozen=True, eq=False)
class LinearizedSteering:
    """Управление ζ линеаризованной системы и достигнутые значения."""

    control: ControlSignal
    achieved: TangentState
    particle_error: float
    field_error: float


def steer_linearized(  # noqa: PLR0913
    state: SystemState,
    forcing: 'Forcing | None',
    v_hat: FourierField,
    q_hat: 'Sequence[float] | NDArray[np.float64]',
    delta: float,
    *,
    nu: float = DEFAULT_NU,
    substeps: int = DEFAULT_SUBSTEPS,
    time_modes: int = CONTROL_TIME_MODES,
    samples: int = LINEAR_SAMPLES,
) -> LinearizedSteering:
    """Строит ζ с v(1) = v̂ и |z(1) − q̂| = O(δ).

    Кривая γ = α q̂ + β w, w = v̂(y(1)) + (D_x u)(1, y(1)) q̂, задает касательную частицы;
    поле v = θ_δ(φ₁U₁(x − y) + φ₂U₂(x − y)), φ = γ̇ − (D_x u)(t, y)γ, обеспечивает z = γ до
    момента 1 − δ. Коэффициенты v(1) доводятся до v̂ точно: к ζ добавляются шапочки на
    [1 − δ, 1 − δ/2] по каждой моде, амплитуды находятся из полевого блока якобиана.

    Args:
        state: Точка линеаризации Υ.
        forcing: Базовое воздействие η.
        v_hat: Целевое касательное поле.
        q_hat: Целевой касательный вектор частицы.
        delta: Ширина срезки θ_δ, 0 < δ ≤ 1/4.
        nu: Вязкость.
        substeps: Подшаги линеаризованной интеграции.
        time_modes: Число временных мод управления.
        samples: Число отсчетов базовой траектории.

    Returns:
        LinearizedSteering: Управление, достигнутое (v(1), z(1)) и ошибки.
    """
    if not 0.0 < delta <= 0.25:  # noqa: PLR2004
        raise InvalidArgumentError(f'Ширина срезки должна лежать в (0, 1/4]: {delta}')
    if v_hat.cutoff != state.cutoff:
        raise InvalidArgumentError(f'Отсечка v̂ ({v_hat.cutoff}) не совпадает с отсечкой состояния ({state.cutoff})')
    target = np.asarray(q_hat, dtype=np.float64)
    cutoff = state.cutoff
    modes = enumerate_modes(cutoff)

    base = integrate(state, forcing, samples, nu=nu, record=True)
    if base.record is None:
        raise InvalidArgumentError('Запись базовой траектории отсутствует')
    record = base.record
    end_field = FourierField(cutoff, record.coeffs[-1])
    _, end_gradient = eval_field(end_field, record.positions[-1])
    tip = eval_field(v_hat, record.positions[-1])[0] + end_gradient @ target

    times = record.times[:-1]
    alpha, alpha_dot, alpha_ddot = _window_progress(times, TRANSPORT_WINDOW)
    beta = (times - 1.0) * alpha
    beta_dot = alpha + (times - 1.0) * alpha_dot
    beta_ddot = 2.0 * alpha_dot + (times - 1.0) * alpha_ddot
    cut = 1.0 - smooth_step((times - (1.0 - delta)) / delta)
    cut_dot = -smooth_step_derivative((times - (1.0 - delta)) / delta) / delta

    table = mode_table(cutoff)
    zeta_samples = np.zeros((len(times), table.size))
    for index, t in enumerate(times):
        gamma = alpha[index] * target + beta[index] * tip
        if not np.any(gamma) and alpha_dot[index] == 0.0 and beta_dot[index] == 0.0:
            continue
        gamma_dot = alpha_dot[index] * target + beta_dot[index] * tip
        gamma_ddot = alpha_ddot[index] * target + beta_ddot[index] * tip
        u = FourierField(cutoff, record.coeffs[index])
        y = record.positions[index]
        velocity, gradient, hessian = eval_field_jet(u, y)
        _, tendency_gradient = eval_field(field_tendency(u, forcing, float(t), nu), y)
        gradient_dot = tendency_gradient + np.einsum('ikl,l->ik', hessian, velocity)
        phi = gamma_dot - gradient @ gamma
        phi_dot = gamma_ddot - gradient_dot @ gamma - gradient @ gamma_dot
        amplitude = cut[index] * phi
        amplitude_dot = cut_dot[index] * phi + cut[index] * phi_dot
        carried = shear_pair_field(cutoff, (amplitude[0], 0.0), (amplitude[1], 0.0), y)
        coupling = _bilinear_pair(cutoff, record.coeffs[index], carried)
        zeta_samples[index] = coupling + shear_pair_field(
            cutoff,
            (amplitude_dot[0] + nu * amplitude[0], amplitude[0] * velocity[1]),
            (amplitude_dot[1] + nu * amplitude[1], amplitude[1] * velocity[0]),
            y,
        )

    transport = ControlSignal(modes, project_time_samples(zeta_samples, time_modes).T)
    bump = smooth_step_derivative((times - (1.0 - delta)) / (0.5 * delta)) / (0.5 * delta)
    bump_coeffs = project_time_samples(bump, time_modes)
    basis = [ControlSignal((mode,), bump_coeffs[None, :]) for mode in modes]

    reached = linearized_map(state, forcing, transport, nu=nu, substeps=substeps)
    field_block = jacobian_matrix(state, forcing, basis, nu=nu, substeps=substeps)[: table.size]
    amplitudes = np.linalg.solve(field_block, v_hat.coeffs - reached.v.coeffs)
    control = ControlSignal(modes, transport.coeffs + np.outer(amplitudes, bump_coeffs))

    achieved = linearized_map(state, forcing, control, nu=nu, substeps=substeps)
    particle_error = float(np.linalg.norm(achieved.z - target))
    field_error = float(np.abs(achieved.v.coeffs - v_hat.coeffs).max())
    logger.info('Линеаризованное управление построено', delta=delta, particle_error=particle_error)
    return LinearizedSteering(control, achieved, particle_error, field_error)


def _bilinear_pair(cutoff: int, u: 'NDArray[np.float64]', v: 'NDArray[np.float64]') -> 'NDArray[np.float64]':
    """Q(u)v = B(u, v) + B(v, u)."""
    table = mode_table(cutoff)
    return bilinear_coeffs(table, u, v) + bilinear_coeffs(table, v, u)


def damping_time_functions(
    time_modes: int, count: int = DAMPING_BUMPS, margin: float = DAMPING_MARGIN
) -> 'NDArray[np.float64]':
    """Коэффициенты (count, L) шапочек, разбивающих [margin, 1/2 − margin]."""
    times = np.arange(CONTROL_SAMPLES) / CONTROL_SAMPLES
    width = (0.5 - 2.0 * margin) / count
    rows = [
        smooth_step_derivative((times - margin - index * width) / width) / width
        for index in range(count)
    ]
    return project_time_samples(np.stack(rows, axis=1), time_modes).T


@dataclass(frozen=True, eq=False)
class DampingResult:
    """Управление гашения на [0, 1/2], достигнутая норма ‖u(1/2)‖_s и признак успеха."""

    control: ControlSignal
    achieved: float
    converged: bool
    iterations: int


def damp_velocity_control(  # noqa: PLR0913
    state: SystemState,
    kappa_target: float,
    s: int = 3,
    budget: int = 200,
    *,
    nu: float = DEFAULT_NU,
    substeps: int = DEFAULT_SUBSTEPS,
    time_modes: int = CONTROL_TIME_MODES,
) -> DampingResult:
    """Ищет управление на модах |j|_∞ = 1, гасящее поле к моменту 1/2.

    Стрельба Гаусса–Ньютона с регуляризацией Левенберга по амплитудам шапочек; если
    одной диссипации достаточно, возвращается нулевое управление.

    Args:
        state: Начальное состояние.
        kappa_target: Порог κ > 0 для ‖u(1/2)‖_s.
        s: Порядок нормы.
        budget: Наибольшее число итераций.
        nu: Вязкость.
        substeps: Подшаги на [0, 1/2].
        time_modes: Число временных мод управления.

    Returns:
        DampingResult: Лучшее найденное управление и достигнутая норма.
    """
    if kappa_target <= 0:
        raise InvalidArgumentError(f'Порог гашения должен быть положительным: {kappa_target}')
    table = mode_table(state.cutoff)
    weights = table.norms_sq ** (0.5 * s)
    time_functions = damping_time_functions(time_modes)
    zero = ControlSignal.zeros(DAMPING_SUPPORT, time_modes)

    def assemble(amplitudes: 'NDArray[np.float64]') -> ControlSignal:
        return ControlSignal(DAMPING_SUPPORT, amplitudes.reshape(len(DAMPING_SUPPORT), -1) @ time_functions)

    def residual(control: ControlSignal) -> 'NDArray[np.float64]':
        half = integrate(state, control, substeps, nu=nu, t_end=0.5).state
        return weights * half.u.coeffs

    current = residual(zero)
    achieved = float(np.linalg.norm(current))
    if achieved <= kappa_target:
        logger.info('Гашение не требуется: хватает диссипации', achieved=achieved)
        return DampingResult(zero, achieved, converged=True, iterations=0)

    basis = [
        ControlSignal((mode,), time_functions[index][None, :])
        for mode in DAMPING_SUPPORT
        for index in range(time_functions.shape[0])
    ]
    amplitudes = np.zeros(len(basis))
    control = zero
    damping = None
    iteration = 0
    while iteration < budget and achieved > kappa_target:
        iteration += 1
        jacobian = weights[:, None] * jacobian_matrix(state, control, basis, nu=nu, substeps=substeps, t_end=0.5)[
            : table.size
        ]
        normal = jacobian.T @ jacobian
        if damping is None:
            damping = INITIAL_DAMPING * float(np.trace(normal)) / normal.shape[0]
        step = np.linalg.solve(normal + damping * np.eye(normal.shape[0]), -jacobian.T @ current)
        trial_amplitudes = amplitudes + step
        trial_control = assemble(trial_amplitudes)
        try:
            trial = residual(trial_control)
        except IntegrationDivergedError as error:
            logger.debug('Пробный шаг гашения разошелся', iteration=iteration, interval=error.interval, step=error.step)
            trial = np.full_like(current, np.inf)
        trial_norm = float(np.linalg.norm(trial))
        if math.isfinite(trial_norm) and trial_norm < achieved:
            amplitudes, control, current, achieved = trial_amplitudes, trial_control, trial, trial_norm
            damping /= 3.0
        else:
            damping *= 10.0
        logger.debug('Итерация гашения', iteration=iteration, achieved=achieved, damping=damping)

    converged = achieved <= kappa_target
    if not converged:
        logger.warning('Гашение не достигло порога', achieved=achieved, kappa_target=kappa_target)
    return DampingResult(control, achieved, converged=converged, iterations=iteration)


@dataclass(frozen=True)
class SteeringOptions:
    """Параметры двухфазного переноса.

    Attributes:
        nu: Вязкость.
        substeps: Подшаги на единичный интервал.
        kappa_target: Порог гашения поля к моменту 1/2.
        sobolev_s: Порядок нормы гашения и отчета.
        window: Окно переноса на [1/2, 1].
        relaxation: Множитель шага итерации Пикара.
        tolerance: Порог невязки частицы.
        max_iterations: Предел итераций Пикара.
        budget: Предел итераций стрельбы.
        time_modes: Временные моды управления (None означает L шума).
    """

    nu: float = DEFAULT_NU
    substeps: int = DEFAULT_SUBSTEPS
    kappa_target: float = 0.05
    sobolev_s: int = 3
    window: tuple[float, float] = FIXPOINT_WINDOW
    relaxation: float = 0.5
    tolerance: float = 1e-8
    max_iterations: int = 100
    budget: int = 200
    time_modes: int | None = None


@dataclass(frozen=True, eq=False)
class SteeringReport:
    """Отчет о переносе частицы.

    Attributes:
        endpoint_error: Расстояние на торе от y(1) до цели.
        field_norm: ‖u(1)‖_s.
        off_support: Наибольший коэффициент вне Λ = {|j|₁ ≤ 2}.
        decay_exponent: Подогнанный показатель убывания коэффициентов по l.
        margins: Запасы K₀ (если задан шум).
        converged: Сошлась ли итерация.
        iterations: Число итераций.
        tie_broken: Понадобился ли выбор направления при смещении π.
        damping_norm: Достигнутая норма гашения (для двухфазного переноса).
    """

    endpoint_error: float
    field_norm: float
    off_support: float
    decay_exponent: float
    margins: 'MarginReport | None' = field(default=None, repr=False)
    converged: bool = True
    iterations: int = 0
    tie_broken: bool = False
    damping_norm: float | None = None

    def to_dict(self) -> dict[str, Any]:
        """Плоский словарь для JSON."""
        report: dict[str, Any] = {
            'endpoint_error': self.endpoint_error,
            'field_norm': self.field_norm,
            'off_support': self.off_support,
            'decay_exponent': self.decay_exponent,
            'converged': self.converged,
            'iterations': self.iterations,
            'tie_broken': self.tie_broken,
            'damping_norm': self.damping_norm,
        }
        if self.margins is not None:
            report.update(
                membership=self.margins.membership,
                min_margin=self.margins.min_margin,
                remainder_norm=self.margins.remainder_norm,
                required_amplification=self.margins.required_amplification,
            )
        return report


def steering_report(  # noqa: PLR0913
    state: SystemState,
    control: ControlSignal,
    target: 'Sequence[float] | NDArray[np.float64]',
    *,
    spec: 'NoiseSpec | None' = None,
    nu: float = DEFAULT_NU,
    substeps: int = DEFAULT_SUBSTEPS,
    s: int = 3,
) -> SteeringReport:
    """Замкнутая проверка: S(Υ, control) сравнивается с целью."""
    final = step_map(state, control, substeps, nu=nu)
    displacement, tie = torus_displacement(final.y, target)
    return SteeringReport(
        endpoint_error=float(np.hypot(*displacement)),
        field_norm=sobolev_norm(final.u, s),
        off_support=control.max_outside(STEER_SUPPORT),
        decay_exponent=coefficient_decay_exponent(control),
        margins=support_margins(spec, control) if spec is not None else None,
        tie_broken=tie,
    )


def exact_steer_fixpoint(
    state: SystemState,
    target: 'Sequence[float] | NDArray[np.float64]',
    spec: 'NoiseSpec',
    options: SteeringOptions | None = None,
) -> tuple[ControlSignal, SteeringReport]:
    """Двухфазное управление Φ(p): гашение на [0, 1/2], затем перенос частицы в p.

    Точка p подбирается демпфированной итерацией Пикара p ← p + r·(p̂ − S^y(Υ, Φ(p))),
    принадлежность K₀ проверяется запасами `support_margins`.

    Args:
        state: Начальное состояние Υ.
        target: Цель p̂.
        spec: Шум; задает временные моды управления и радиусы δ_{lj}.
        options: Параметры итерации.

    Returns:
        tuple: Управление η̂ и отчет.

    Raises:
        FixedPointDivergedError: Если невязка росла пять итераций подряд.
    """
    opts = options or SteeringOptions()
    time_modes = opts.time_modes or spec.time_modes
    goal = np.asarray(target, dtype=np.float64)
    damping = damp_velocity_control(
        state,
        opts.kappa_target,
        opts.sobolev_s,
        opts.budget,
        nu=opts.nu,
        substeps=opts.substeps,
        time_modes=time_modes,
    )
    half = integrate(state, damping.control, opts.substeps, nu=opts.nu, t_end=0.5).state

    point = goal.copy()
    previous = math.inf
    increases = 0
    iteration = 0
    converged = False
    tie = False
    control = damping.control
    residual = math.inf
    while iteration < opts.max_iterations:
        iteration += 1
        transport = steer_particle_control(half.y, point, nu=opts.nu, window=opts.window, time_modes=time_modes)
        control = damping.control + transport
        final = step_map(state, control, opts.substeps, nu=opts.nu)
        miss, tie = torus_displacement(final.y, goal)
        residual = float(np.hypot(*miss))
        logger.debug('Итерация Пикара', iteration=iteration, residual=residual)
        if residual <= opts.tolerance:
            converged = True
            break
        increases = increases + 1 if residual > previous else 0
        if increases >= 5:  # noqa: PLR2004
            logger.error('Итерация Пикара расходится', iteration=iteration, residual=residual)
            raise FixedPointDivergedError(f'Невязка росла 5 итераций подряд, последняя {residual:.6g}')
        previous = residual
        point = point + opts.relaxation * miss

    final = step_map(state, control, opts.substeps, nu=opts.nu)
    margins = support_margins(spec, control)
    report = SteeringReport(
        endpoint_error=residual,
        field_norm=sobolev_norm(final.u, opts.sobolev_s),
        off_support=control.max_outside(STEER_SUPPORT),
        decay_exponent=coefficient_decay_exponent(control),
        margins=margins,
        converged=converged,
        iterations=iteration,
        tie_broken=tie,
        damping_norm=damping.achieved,
    )
    logger.info(
        'Двухфазный перенос завершен',
        converged=converged,
        residual=residual,
        membership=margins.membership,
        required_amplification=margins.required_amplification,
    )
    return control, report


@dataclass(frozen=True, eq=False)
class KappaSearch:
    """Результат бисекции по порогу гашения.

    Attributes:
        kappa: Наибольший опробованный κ со сходящимся переносом (или последний опробованный).
        control: Управление при этом κ.
        report: Отчет переноса при этом κ.
        attempts: Пары (κ, сошлось ли) в порядке попыток.
    """

    kappa: float
    control: ControlSignal
    report: SteeringReport
    attempts: tuple[tuple[float, bool], ...]

    @property
    def converged(self) -> bool:
        """Нашелся ли рабочий κ."""
        return self.report.converged


def discover_kappa(
    state: SystemState,
    target: 'Sequence[float] | NDArray[np.float64]',
    spec: 'NoiseSpec',
    options: SteeringOptions | None = None,
    bisections: int = KAPPA_BISECTIONS,
) -> KappaSearch:
    """Ищет бисекцией порог κ ∈ (0, κ_max], при котором двухфазный перенос сходится.

    Сначала пробуется κ_max = options.kappa_target; при неудаче интервал делится пополам,
    сходящаяся попытка сдвигает нижнюю границу, расходящаяся верхнюю.

    Args:
        state: Начальное состояние Υ.
        target: Цель p̂.
        spec: Шум.
        options: Параметры переноса; kappa_target задает верхнюю границу поиска.
        bisections: Число делений интервала после первой попытки.

    Returns:
        KappaSearch: Найденный κ, управление и отчет.

    Raises:
        FixedPointDivergedError: Если итерация Пикара расходилась при всех опробованных κ.
    """
    if bisections < 0:
        raise InvalidArgumentError(f'Число делений должно быть неотрицательным: {bisections}')
    opts = options or SteeringOptions()
    low, high = 0.0, opts.kappa_target
    kappa = high
    attempts: list[tuple[float, bool]] = []
    best: tuple[float, ControlSignal, SteeringReport] | None = None
    last: tuple[float, ControlSignal, SteeringReport] | None = None
    for _ in range(bisections + 1):
        try:
            control, report = exact_steer_fixpoint(state, target, spec, replace(opts, kappa_target=kappa))
        except FixedPointDivergedError:
            converged = False
        else:
            converged = report.converged
            last = (kappa, control, report)
            if converged:
                best = last
        attempts.append((kappa, converged))
        logger.debug('Попытка порога гашения', kappa=kappa, converged=converged)
        if converged and kappa == high:
            break
        if converged:
            low = kappa
        else:
            high = kappa
        kappa = 0.5 * (low + high)

    chosen = best or last
    if chosen is None:
        logger.error('Перенос не сошелся ни при одном κ', attempts=len(attempts))
        raise FixedPointDivergedError(f'Итерация Пикара расходилась при всех {len(attempts)} значениях κ')
    if best is None:
        logger.warning('Рабочий κ не найден', kappa=chosen[0], attempts=len(attempts))
    else:
        logger.info('Порог гашения найден', kappa=chosen[0], attempts=len(attempts))
    return KappaSearch(chosen[0], chosen[1], chosen[2], tuple(attempts))
