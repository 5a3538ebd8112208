"""Эксперименты подкоманд CLI.

Каждая функция принимает ExperimentConfig и возвращает ExperimentResult: набор таблиц для
`write_outputs` и сводку для журнала. Файлы пишет только `run_experiment`.

Функции:
    initial_state: Начальное состояние номер i из потока инициализации.
    parallel_map: Отображение с сохранением порядка на пуле потоков.
    simulate, steer, linctl, couple, density, ep, stationarity, converge, oracle, gc_check.

Пример использования:
    >>> result = EXPERIMENTS['simulate'](config)
    >>> result.artifacts[0].schema
    'trajectory'
"""

import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import TYPE_CHECKING, Any

import numpy as np
from scipy import stats

from src.lagranflow.control import (
    STEER_SUPPORT,
    ControlSignal,
    SteeringOptions,
    discover_kappa,
    steer_linearized,
    steer_particle_control,
    steering_report,
)
from src.lagranflow.coupling import coupled_pair_run, estimate_mixing_rate, random_pair, summarize_coupling
from src.lagranflow.dynamics import (
    StreamStage,
    SystemState,
    absorbing_radius,
    jacobian_matrix,
    run_chain,
    singular_values,
)
from src.lagranflow.errors import UndefinedEntropyProductionError
from src.lagranflow.ldp_oracle import (
    FiniteChain,
    dv_rate_level3,
    gc_symmetry_check,
    random_markov_measure,
    rate_function_report,
)
from src.lagranflow.logger import get_logger
from src.lagranflow.measures_ep import (
    ParticleSamples,
    convergence_report,
    density_extrema,
    entropy_production,
    ep_bound_check,
    estimate_density,
    harmonic_means,
    run_ensemble,
    stationarity_from_trajectory,
    stationary_paths,
    stationary_windows,
)
from src.lagranflow.noise import sample_kick, stream_for
from src.lagranflow.outputs import density_rows
from src.lagranflow.spectral_core import FourierField, mode_table

if TYPE_CHECKING:
    from collections.abc import Callable, Iterable, Mapping, Sequence

    from src.lagranflow.config import ExperimentConfig
    from src.lagranflow.coupling import CouplingReport
    from src.lagranflow.measures_ep import DensityEstimate


logger = get_logger()

CYCLE_FORWARD = 0.6
CYCLE_BACKWARD = 0.3
GC_GRID = tuple(np.linspace(-1.0, 1.0, 21))
LINEAR_HALVINGS = 3
RANK_TIME_MODES = 4
RANK_TOLERANCE = 1e-10
CONVERGENCE_POINTS = 8


@dataclass(frozen=True)
class Artifact:
    """Таблица одной схемы и метаданные ее JSON-сопровождения."""

    schema: str
    rows: list[dict[str, Any]]
    metadata: dict[str, Any] = field(default_factory=dict)


@dataclass(frozen=True)
class ExperimentResult:
    """Таблицы эксперимента и краткая сводка."""

    artifacts: tuple[Artifact, ...]
    summary: dict[str, Any] = field(default_factory=dict)


EXPERIMENT_STREAMS: dict[str, tuple[StreamStage, ...]] = {
    'simulate': (StreamStage.initial, StreamStage.chain),
    'steer': (StreamStage.initial,),
    'linctl': (StreamStage.initial, StreamStage.chain),
    'couple': (StreamStage.initial, StreamStage.chain, StreamStage.pairs),
    'density': (StreamStage.initial, StreamStage.chain),
    'ep': (StreamStage.initial, StreamStage.chain),
    'stationarity': (StreamStage.initial, StreamStage.chain),
    'converge': (StreamStage.initial, StreamStage.chain),
    'oracle': (StreamStage.oracle,),
    'gc-check': (StreamStage.oracle,),
}


def parallel_map[T, R](function: 'Callable[[T], R]', items: 'Iterable[T]', workers: int) -> list[R]:
    """`map` на пуле потоков; порядок результатов совпадает с порядком аргументов."""
    with ThreadPoolExecutor(max_workers=max(1, workers)) as pool:
        return list(pool.map(function, items))


def initial_state(config: 'ExperimentConfig', index: int = 0) -> SystemState:
    """Начальное состояние номер `index`.

    Состояние 0 стоит в `run.initial_position`, остальные равномерно на торе. Поле равно
    нулю при `run.initial_amplitude = 0`, иначе это гауссово поле с весами e^{−|j|}.
    """
    cutoff = config.grid.spatial_cutoff
    rng = stream_for(config.run.seed, StreamStage.initial, index)
    position = np.array(config.run.initial_position) if index == 0 else rng.uniform(0.0, 2.0 * math.pi, 2)
    coeffs = np.zeros(mode_table(cutoff).size)
    if config.run.initial_amplitude > 0:
        weights = np.exp(-np.sqrt(mode_table(cutoff).norms_sq))
        coeffs = config.run.initial_amplitude * weights * rng.standard_normal(weights.size)
    return SystemState(FourierField(cutoff, coeffs), position)


def _states(config: 'ExperimentConfig', count: int) -> list[SystemState]:
    return [initial_state(config, index) for index in range(count)]


def simulate(config: 'ExperimentConfig') -> ExperimentResult:
    """Траектория цепи Υ_k длины run.kicks из начального состояния 0."""
    trajectory = run_chain(
        initial_state(config),
        config.noise,
        config.run.seed,
        config.run.kicks,
        nu=config.physics.nu,
        substeps=config.grid.substeps,
    )
    rows = trajectory.summary_rows()
    metadata = {
        'kicks': config.run.kicks,
        'absorbing_radius': absorbing_radius(config.noise, config.physics.nu),
        'final_energy': rows[-1]['energy'],
    }
    return ExperimentResult((Artifact('trajectory', rows, metadata),), {'states': len(rows)})


def steer(config: 'ExperimentConfig') -> ExperimentResult:
    """Точный перенос частицы в steer.target.

    Из покоя строится явное управление переносом, иначе двухфазное (гашение и перенос) с порогом
    гашения κ, найденным бисекцией ниже steer.kappa_target.
    """
    state = initial_state(config)
    target = config.steer.target
    nu = config.physics.nu
    substeps = config.grid.substeps
    kappa: dict[str, Any] = {}
    if not np.any(state.u.coeffs):
        control = steer_particle_control(state.y, target, nu=nu)
        report = steering_report(state, control, target, spec=config.noise, nu=nu, substeps=substeps)
    else:
        options = SteeringOptions(nu=nu, substeps=substeps, kappa_target=config.steer.kappa_target)
        search = discover_kappa(state, target, config.noise, options)
        control, report = search.control, search.report
        kappa = {'kappa': search.kappa, 'kappa_attempts': len(search.attempts)}
    summary = {**report.to_dict(), **kappa}
    return ExperimentResult((Artifact('control', control.rows(), summary),), summary)


def _random_field(cutoff: int, scale: float, rng: np.random.Generator) -> FourierField:
    weights = np.exp(-np.sqrt(mode_table(cutoff).norms_sq))
    return FourierField(cutoff, scale * weights * rng.standard_normal(weights.size))


def linctl(config: 'ExperimentConfig') -> ExperimentResult:
    """Управление линеаризованной системой при уменьшении ширины отсечки δ вдвое.

    Дополнительно проверяется ранг D_ηS^y на управлениях с носителем |j|₁ ≤ 2.
    """
    state = initial_state(config)
    nu = config.physics.nu
    substeps = config.grid.substeps
    kick = sample_kick(config.noise, stream_for(config.run.seed, StreamStage.chain, 0))
    rng = stream_for(config.run.seed, StreamStage.initial, 1)
    v_hat = _random_field(state.cutoff, 0.1, rng)
    q_hat = 0.1 * rng.standard_normal(2)

    rows = []
    for halving in range(LINEAR_HALVINGS):
        delta = config.steer.delta / 2**halving
        result = steer_linearized(state, kick, v_hat, q_hat, delta, nu=nu, substeps=substeps)
        rows.append({'delta': delta, 'field_error': result.field_error, 'particle_error': result.particle_error})

    errors = np.array([row['particle_error'] for row in rows])
    deltas = np.array([row['delta'] for row in rows])
    slope = math.nan
    if np.all(errors > 0):
        slope = float(stats.linregress(np.log(deltas), np.log(errors)).slope)

    identity = np.eye(RANK_TIME_MODES)
    basis = [ControlSignal((mode,), identity[[index]]) for mode in STEER_SUPPORT for index in range(RANK_TIME_MODES)]
    particle_block = jacobian_matrix(state, kick, basis, nu=nu, substeps=substeps)[-2:]
    values = singular_values(particle_block)
    rank = int(np.sum(values > RANK_TOLERANCE * values[0])) if values.size and values[0] > 0 else 0
    metadata = {'halving_slope': slope, 'particle_singular_values': values, 'particle_rank': rank}
    logger.info('Линеаризованное управление проверено', slope=slope, rank=rank)
    return ExperimentResult((Artifact('linctl', rows, metadata),), {'halving_slope': slope, 'particle_rank': rank})


def couple(config: 'ExperimentConfig') -> ExperimentResult:
    """Связанные пары на расстоянии coupling.distance со стабилизирующим сдвигом."""
    base = initial_state(config)
    settings = config.coupling

    def one(pair_id: int) -> 'CouplingReport':
        second = random_pair(base, settings.distance, stream_for(config.run.seed, StreamStage.pairs, pair_id))
        return coupled_pair_run(
            base,
            second,
            config.noise,
            config.run.seed,
            config.run.kicks,
            settings.contraction,
            pair_id=pair_id,
            gamma=settings.regularization,
            radius=settings.locality_radius,
            nu=config.physics.nu,
            substeps=config.grid.substeps,
        )

    reports = parallel_map(one, range(settings.pairs), config.run.workers)
    rows = [row for pair_id, report in enumerate(reports) for row in report.rows(pair_id)]
    summary = summarize_coupling(reports)
    metadata = {**summary, 'mixing_rates': [report.mixing_rate for report in reports]}
    return ExperimentResult((Artifact('coupling', rows, metadata),), summary)


def _density_estimate(config: 'ExperimentConfig', samples: ParticleSamples) -> 'DensityEstimate':
    bandwidth = config.density.bandwidth or None
    return estimate_density(samples, config.density.method, config.density.bins, bandwidth)


def density(config: 'ExperimentConfig') -> ExperimentResult:
    """Оценка ρ_t из начального состояния 0 и экстремумы ρ₁ по density.states состояниям."""
    states = _states(config, config.density.states)
    nu = config.physics.nu
    substeps = config.grid.substeps
    extrema = density_extrema(
        config.noise,
        states,
        config.run.trajectories,
        config.run.seed,
        bins=config.density.bins,
        nu=nu,
        substeps=substeps,
        workers=config.run.workers,
    )
    samples = run_ensemble(
        states[0],
        config.noise,
        config.density.window,
        config.run.trajectories,
        config.run.seed,
        nu=nu,
        substeps=substeps,
        workers=config.run.workers,
    )
    estimate = _density_estimate(config, samples)
    metadata = {
        **estimate.metadata(),
        'provenance': samples.provenance,
        'minimum': extrema.minimum,
        'maximum': extrema.maximum,
        'minimum_lower': extrema.minimum_lower,
        'maximum_upper': extrema.maximum_upper,
        'positive': extrema.positive,
        'extrema_under_resolved': extrema.under_resolved,
    }
    summary = {'minimum': extrema.minimum, 'maximum': extrema.maximum, 'positive': extrema.positive}
    return ExperimentResult((Artifact('density', density_rows(estimate), metadata),), summary)


def ep(config: 'ExperimentConfig') -> ExperimentResult:
    """Производство энтропии σ_t на стационарных окнах длинной траектории и граница log(M̂/m̂)."""
    steps = config.density.window
    trajectory = run_chain(
        initial_state(config),
        config.noise,
        config.run.seed,
        config.run.kicks,
        nu=config.physics.nu,
        substeps=config.grid.substeps,
    )
    samples = stationary_windows(trajectory, steps, config.run.burn_in)
    estimate = _density_estimate(config, samples)
    productions = stationary_paths(samples, estimate)
    defined = productions[np.isfinite(productions)]

    marginal = estimate_density(stationary_windows(trajectory, 1, config.run.burn_in), bins=config.density.bins)
    minimum = float(marginal.values.min())
    maximum = float(marginal.values.max())
    if minimum > 0:
        check = ep_bound_check(minimum, maximum, steps, defined)
        bound, fraction, worst = check.bound, check.fraction_within, check.worst
    else:
        logger.warning('Оценка маргинала обращается в ноль, граница не проверяется', bins=config.density.bins)
        bound, fraction, worst = math.inf, math.nan, float(np.abs(defined).max(initial=0.0)) / steps

    rows = [
        {
            'path': index,
            'production': float(value),
            'rate': abs(float(value)) / steps,
            'within': bool(abs(value) <= bound * steps),
        }
        for index, value in enumerate(productions)
    ]
    summary = {
        'bound': bound,
        'fraction_within': fraction,
        'worst': worst,
        'undefined': int(productions.size - defined.size),
        'antisymmetry_defect': _antisymmetry_defect(estimate, samples),
    }
    return ExperimentResult((Artifact('ep', rows, {**estimate.metadata(), **summary}),), summary)


def _antisymmetry_defect(estimate: 'DensityEstimate', samples: ParticleSamples, limit: int = 100) -> float:
    """max |σ_t(y) + σ_t(θy)| по первым путям выборки с определенным σ_t."""
    worst = 0.0
    for path in samples.paths[:limit]:
        try:
            total = entropy_production(estimate, path) + entropy_production(estimate, path[::-1])
        except UndefinedEntropyProductionError:
            continue
        worst = max(worst, abs(total))
    return worst


def stationarity(config: 'ExperimentConfig') -> ExperimentResult:
    """Равномерность маргинала частицы после разгона и гармонические средние."""
    trajectory = run_chain(
        initial_state(config),
        config.noise,
        config.run.seed,
        config.run.kicks,
        nu=config.physics.nu,
        substeps=config.grid.substeps,
    )
    report = stationarity_from_trajectory(trajectory, config.run.burn_in, config.density.bins)
    means = harmonic_means(trajectory.positions[config.run.burn_in + 1 :])
    rows = [
        {'m1': m[0], 'm2': m[1], 'real': value.real, 'imag': value.imag, 'modulus': abs(value)}
        for m, value in means.items()
    ]
    summary = {
        'statistic': report.statistic,
        'p_value': report.p_value,
        'uniform': report.uniform,
        'count': report.count,
        'harmonic_max': report.harmonic_max,
        'harmonic_bound': report.harmonic_bound,
        'correlation_max': report.correlation_max,
        'correlation_bound': report.correlation_bound,
    }
    return ExperimentResult((Artifact('stationarity', rows, summary),), summary)


def converge(config: 'ExperimentConfig') -> ExperimentResult:
    """Экспоненциальная сходимость ρ окон к стационарной оценке и скорость перемешивания."""
    states = _states(config, max(2, config.density.states))
    nu = config.physics.nu
    substeps = config.grid.substeps
    last = max(1, config.run.kicks)
    starts = sorted({round(last * index / CONVERGENCE_POINTS) for index in range(CONVERGENCE_POINTS + 1)})
    report = convergence_report(
        config.noise,
        states,
        min(config.density.window, 2),
        starts,
        config.run.trajectories,
        config.run.seed,
        bins=config.density.bins,
        nu=nu,
        substeps=substeps,
    )
    mixing = estimate_mixing_rate(
        config.noise, states, config.run.seed, config.run.trajectories, config.run.kicks, nu=nu, substeps=substeps
    )
    rows = [
        {'start': start, 'discrepancy': float(value), 'noise_floor': report.noise_floor}
        for start, value in zip(report.starts, report.discrepancy, strict=True)
    ]
    summary = {
        'rate': report.rate,
        'lower': report.lower,
        'upper': report.upper,
        'conclusive': report.conclusive,
        'mixing_rate': mixing.rate,
        'mixing_lower': mixing.lower,
        'mixing_upper': mixing.upper,
        'mixing_detected': mixing.detected,
    }
    artifacts = (Artifact('convergence', rows, summary), Artifact('mixing', mixing.rows(), summary))
    return ExperimentResult(artifacts, summary)


def load_chain(config: 'ExperimentConfig') -> FiniteChain:
    """Цепь из oracle.chain или цикл на трех состояниях с вероятностями 0.6/0.3/0.1."""
    if config.oracle.chain is not None:
        return FiniteChain.from_csv(config.oracle.chain)
    return FiniteChain.cycle(3, CYCLE_FORWARD, CYCLE_BACKWARD)


def oracle(config: 'ExperimentConfig') -> ExperimentResult:
    """Функции скорости уровня 2 (или 3) в стационарной и случайных мерах двумя способами."""
    chain = load_chain(config)
    seed = config.run.seed
    if config.oracle.level == 2:  # noqa: PLR2004
        report = rate_function_report(chain, config.oracle.points, seed)
        summary = {'level': 2, 'max_discrepancy': report.max_discrepancy, 'states': chain.size}
        return ExperimentResult((Artifact('oracle', report.rows(), summary),), summary)

    rng = stream_for(seed, StreamStage.oracle, 5)
    rows = []
    for index in range(config.oracle.points + 1):
        measure = random_markov_measure(chain.size, rng)
        rate = dv_rate_level3(chain, measure)
        rows.append({'point': index, 'rate_variational': rate.entropy, 'rate_legendre': rate.dual})
    discrepancy = max(abs(row['rate_variational'] - row['rate_legendre']) for row in rows)
    summary = {'level': 3, 'max_discrepancy': discrepancy, 'states': chain.size}
    return ExperimentResult((Artifact('oracle', rows, summary),), summary)


def gc_check(config: 'ExperimentConfig') -> ExperimentResult:
    """Симметрия Галлавотти–Коэна и флуктуационное соотношение уровня 3."""
    chain = load_chain(config)
    report = gc_symmetry_check(chain, GC_GRID, seed=config.run.seed)
    summary = {
        'max_residual': report.max_residual,
        'mean_ep': report.mean_ep,
        'derivative_at_zero': report.derivative_at_zero,
        'level3_max_residual': report.level3_max_residual,
        'points': int(report.grid.size),
    }
    return ExperimentResult((Artifact('gc', report.rows(), summary),), summary)


EXPERIMENTS: 'Mapping[str, Callable[[ExperimentConfig], ExperimentResult]]' = {
    'simulate': simulate,
    'steer': steer,
    'linctl': linctl,
    'couple': couple,
    'density': density,
    'ep': ep,
    'stationarity': stationarity,
    'converge': converge,
    'oracle': oracle,
    'gc-check': gc_check,
}


def stream_identifiers(subcommand: str, seed: int) -> 'Sequence[dict[str, Any]]':
    """Описание потоков ГСЧ подкоманды для манифеста."""
    return [
        {'stage': stage.name, 'spawn_key': [int(stage)], 'entropy': seed} for stage in EXPERIMENT_STREAMS[subcommand]
    ]
