'''
End-to-end protocol runners.

Every runner takes an ExperimentConfig and returns named CurveData. The
exact curve is the reported up probability computed from the density
matrix; the sampled curve draws `shots` binomial outcomes per grid point
from it. Random streams are seeded with (seed, curve index), grid points are
computed in grid order, so results do not depend on the number of workers.

Protocols
---------

    qsec_rabi           Rabi curves of the sensing drive for 0 .. n_ec rounds.
    single_phase_error  One phase flip, corrected before the first round
                        versus uncorrected in the middle of the sensing time.
    bitflip_cpmg        Bit-flip code with a CPMG-sensed AC signal and one
                        bit-flip error per CPMG block.
    reset_coherence     Nuclear coherence after k optical resets.
    no_noise_sim        qsec_rabi without dephasing, for 0 and 2 rounds.

'''

import math
import json
import hashlib
import dataclasses
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from qsecsim.error import QsecError, ConfigError
from qsecsim.dynamics import (HamiltonianParams, DephasingLaw, ACSignal,
                              rotation_segment)
from qsecsim.channels import (ResetModel, ReadoutModel, PhotonModel,
                              initial_state, nuclear_up_population)
from qsecsim.sequences import (Setup, schedule, channel,
                               run_schedule, qsec_schedule, bitflip_schedule,
                               readout_map_schedule, resonant_spacing,
                               check_spacing, cpmg_phase, phase_mismatch,
                               calibrate_gate_penalty)
from qsecsim.estimation import shot_noise_sensitivity


PROTOCOLS = ('qsec_rabi', 'single_phase_error', 'bitflip_cpmg',
             'reset_coherence', 'no_noise_sim')

MAX_EC_ROUNDS = 2


@dataclass(frozen=True)
class CpmgSettings(object):
    '''CPMG sensing of the bit-flip protocol.

    Attrs:
        n_pulses          Pi pulses per block; even.
        frequency         AC signal frequency (Hz).
        spacing           Pulse spacing (s); None for the resonant 1 / (2 f).
        amplitude_points  Points of the AC amplitude sweep per curve.
        averaged          Also report the curve averaged over all errors.
    '''
    n_pulses: int = 8
    frequency: float = 100e3
    spacing: Optional[float] = None
    amplitude_points: int = 8
    averaged: bool = True

    @property
    def pulse_spacing(self):
        if self.spacing is None:
            return resonant_spacing(self.frequency)
        return self.spacing


def _default_times():
    return tuple(round(i * 1e-6, 12) for i in range(61))


def _default_dephasing():
    return DephasingLaw(clock_mode='per_reset')


@dataclass(frozen=True)
class ExperimentConfig(object):
    protocol: str = 'qsec_rabi'
    hamiltonian: HamiltonianParams = field(default_factory=HamiltonianParams)
    dephasing: DephasingLaw = field(default_factory=_default_dephasing)
    noise: bool = True
    reset: ResetModel = field(default_factory=ResetModel)
    readout: ReadoutModel = field(default_factory=ReadoutModel)
    n_ec: int = 2
    rabi: float = 100e3
    times: tuple = field(default_factory=_default_times)
    block_fractions: Optional[tuple] = None
    error_angle: float = math.pi
    error_angles: tuple = (0.5 * math.pi, 0.75 * math.pi, math.pi)
    delays: tuple = (0.0, 0.6e-6, 1.2e-6, 1.8e-6)
    cpmg: CpmgSettings = field(default_factory=CpmgSettings)
    resets: tuple = tuple(range(0, 41, 2))
    electron_start: str = 'e0'
    gate_fidelity: float = 1.0
    hyperfine_gates: bool = False
    shots: int = 1000
    seed: int = 0
    workers: int = 1

    def __post_init__(self):
        if self.protocol not in PROTOCOLS:
            raise ConfigError('protocol', 'unknown protocol %s, expected one '
                              'of %s' % (self.protocol, ', '.join(PROTOCOLS)))
        if self.n_ec not in range(MAX_EC_ROUNDS + 1):
            raise ConfigError('n_ec', 'at most %s rounds of repetitive error '
                              'correction are supported, got %s'
                              % (MAX_EC_ROUNDS, self.n_ec))
        for name in ('shots', 'workers'):
            if getattr(self, name) < 1:
                raise ConfigError(name, 'must be at least 1')
        if self.rabi < 0:
            raise ConfigError('rabi', 'must be non-negative')
        if not 0.25 <= self.gate_fidelity <= 1:
            raise ConfigError('gate_fidelity', 'must be in [0.25, 1]')
        if self.electron_start not in ('e0', 'em1'):
            raise ConfigError('electron_start', 'must be e0 or em1')
        for name in ('times', 'delays', 'resets'):
            _check_grid(name, getattr(self, name))
        if not self.error_angles:
            raise ConfigError('error_angles', 'grid is empty')
        if any(int(k) != k for k in self.resets):
            raise ConfigError('resets', 'reset counts must be integers')
        if self.block_fractions is not None:
            fractions = self.block_fractions
            if len(fractions) != self.n_ec + 1:
                raise ConfigError('block_fractions', 'need n_ec + 1 = %s '
                                  'fractions' % (self.n_ec + 1))
            if min(fractions) < 0 or not math.isclose(sum(fractions), 1.0):
                raise ConfigError('block_fractions',
                                  'must be non-negative and sum to 1')
        cpmg = self.cpmg
        if cpmg.n_pulses < 2 or cpmg.n_pulses % 2:
            raise ConfigError('cpmg.n_pulses', 'must be even and at least 2')
        if cpmg.frequency <= 0:
            raise ConfigError('cpmg.frequency', 'must be positive')
        if cpmg.spacing is not None and cpmg.spacing <= 0:
            raise ConfigError('cpmg.spacing', 'must be positive')
        if cpmg.amplitude_points < 2:
            raise ConfigError('cpmg.amplitude_points', 'must be at least 2')
        if self.protocol == 'bitflip_cpmg' and \
                max(self.delays) > cpmg.pulse_spacing / 2:
            raise ConfigError('delays', 'delays must fit in the last free '
                              'interval (%s s)' % (cpmg.pulse_spacing / 2))

    @property
    def setup(self):
        return Setup(params=self.hamiltonian,
                     law=self.dephasing if self.noise else None,
                     reset=self.reset,
                     gate_penalty=calibrate_gate_penalty(self.gate_fidelity),
                     hyperfine_gates=self.hyperfine_gates)

    def to_dict(self):
        return json.loads(json.dumps(dataclasses.asdict(self)))

    @classmethod
    def from_dict(cls, data):
        if not isinstance(data, dict):
            raise ConfigError('config', 'expected an object')
        known = {item.name for item in dataclasses.fields(cls)}
        kwargs = {}
        for key, value in data.items():
            if key not in known:
                raise ConfigError(key, 'unknown field')
            kwargs[key] = _section(key, value)
        try:
            return cls(**kwargs)
        except ConfigError:
            raise
        except (QsecError, TypeError, ValueError) as e:
            raise ConfigError('config', str(e))


_SECTIONS = {
    'hamiltonian': HamiltonianParams,
    'dephasing': DephasingLaw,
    'reset': ResetModel,
    'readout': ReadoutModel,
    'cpmg': CpmgSettings,
}

_GRIDS = ('times', 'error_angles', 'delays', 'resets', 'block_fractions')


def _build(path, kind, values):
    if not isinstance(values, dict):
        raise ConfigError(path, 'expected an object')
    known = {item.name for item in dataclasses.fields(kind)}
    for key in values:
        if key not in known:
            raise ConfigError('%s.%s' % (path, key), 'unknown field')
    values = dict(values)
    if kind is ReadoutModel and values.get('photons') is not None:
        values['photons'] = _build(path + '.photons', PhotonModel,
                                   values['photons'])
    try:
        return kind(**values)
    except (QsecError, TypeError) as e:
        raise ConfigError(path, str(e))


def _section(key, value):
    if key in _SECTIONS:
        return _build(key, _SECTIONS[key], value)
    if key in _GRIDS and value is not None:
        if not isinstance(value, (list, tuple)):
            raise ConfigError(key, 'expected a list')
        return tuple(value)
    return value


def _check_grid(name, grid):
    if len(grid) == 0:
        raise ConfigError(name, 'grid is empty')
    values = np.asarray(grid, dtype=float)
    if (values < 0).any():
        raise ConfigError(name, 'grid values must be non-negative')
    if (np.diff(values) < 0).any():
        raise ConfigError(name, 'grid must be sorted')


def config_hash(config):
    '''SHA-256 of the canonical JSON form of a config, without the worker
    count.'''
    data = config.to_dict()
    data.pop('workers')
    text = json.dumps(data, sort_keys=True, separators=(',', ':'))
    return hashlib.sha256(text.encode('utf-8')).hexdigest()


@dataclass
class CurveData(object):
    '''One measured curve.

    Attrs:
        name      Identifier, also the output file stem.
        x         Grid (seconds, resets or signal amplitude in Hz).
        y_exact   Exact reported value from the density matrix.
        y         Shot-sampled value.
        y_err     Standard error of y.
        metadata  Config hash, seed and protocol details.
    '''
    name: str
    x: np.ndarray
    y_exact: np.ndarray
    y: np.ndarray
    y_err: np.ndarray
    metadata: dict = field(default_factory=dict)


@dataclass(frozen=True)
class SensitivityPoint(object):
    '''Signal strength and sensitivity of one bit-flip curve.

    theta and delay are None for the averaged composite.
    '''
    n_ec: int
    theta: Optional[float]
    delay: Optional[float]
    contrast: float
    sampled_contrast: float
    sensing_time: float
    sensitivity: float
    curve: str


@dataclass
class BitflipSweep(object):
    curves: dict
    points: list

    def point(self, n_ec, theta=None, delay=None):
        for point in self.points:
            if point.n_ec != n_ec:
                continue
            if theta is None and point.theta is None:
                return point
            if (theta is not None and point.theta is not None and
                    math.isclose(point.theta, theta) and
                    math.isclose(point.delay, delay, abs_tol=1e-15)):
                return point
        raise QsecError('No sensitivity point for n_ec=%s theta=%s delay=%s'
                        % (n_ec, theta, delay))


def parallel_map(function, items, workers=1):
    '''Order preserving map over a process pool.'''
    items = list(items)
    if workers > 1 and len(items) > 1:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            return list(pool.map(function, items))
    return [function(item) for item in items]


def _exact_point(job):
    pulses, setup, readout = job
    rho, _ = run_schedule(pulses, initial_state(readout), setup)
    return readout.reported_up(nuclear_up_population(rho))


def exact_curve(schedules, setup, readout, workers=1):
    '''Reported up probability after each schedule.'''
    jobs = [(pulses, setup, readout) for pulses in schedules]
    return np.array(parallel_map(_exact_point, jobs, workers))


def sample_curve(p_exact, shots, rng):
    '''Binomial shot average and its standard error.'''
    p = np.clip(np.asarray(p_exact, dtype=float), 0.0, 1.0)
    y = rng.binomial(shots, p) / shots
    return y, np.sqrt(y * (1 - y) / shots)


class _Curves(object):
    '''Names, samples and tags the curves of one run.'''

    def __init__(self, config):
        self.config = config
        self.digest = config_hash(config)
        self.curves = {}

    def add(self, name, x, p_exact, **metadata):
        rng = np.random.default_rng([self.config.seed, len(self.curves)])
        y, y_err = sample_curve(p_exact, self.config.shots, rng)
        metadata.update(protocol=self.config.protocol,
                        config_hash=self.digest, seed=self.config.seed)
        curve = CurveData(name, np.asarray(x, dtype=float),
                          np.asarray(p_exact, dtype=float), y, y_err,
                          metadata)
        self.curves[name] = curve
        return curve


def _check_protocol(config, *protocols):
    if config.protocol not in protocols:
        raise ConfigError('protocol', 'expected %s, got %s'
                          % (' or '.join(protocols), config.protocol))


def _fractions(config, n_ec):
    fractions = config.block_fractions
    if fractions is not None and len(fractions) == n_ec + 1:
        return fractions
    return None


def _rabi_curves(config, rounds, curves):
    setup = config.setup
    for n_ec in rounds:
        schedules = [qsec_schedule(t, config.rabi, n_ec, setup,
                                   _fractions(config, n_ec))
                     for t in config.times]
        p = exact_curve(schedules, setup, config.readout, config.workers)
        overhead = schedules[-1].duration - config.times[-1]
        curves.add('n_ec_%s' % n_ec, config.times, p, n_ec=n_ec,
                   rabi=config.rabi, overhead=overhead)
    return curves.curves


def run_qsec_rabi(config):
    '''Rabi curves with 0 .. config.n_ec rounds of error correction.

    The sensing time is split into n_ec + 1 blocks (equal unless
    block_fractions is set). The x axis is the sensing time without the
    gates and resets; `overhead` in the metadata adds the rest.
    '''
    _check_protocol(config, 'qsec_rabi')
    return _rabi_curves(config, range(config.n_ec + 1), _Curves(config))


def run_no_noise_sim(config):
    '''Dephasing-free Rabi curves without and with two rounds.'''
    _check_protocol(config, 'no_noise_sim')
    config = dataclasses.replace(config, noise=False)
    return _rabi_curves(config, (0, MAX_EC_ROUNDS), _Curves(config))


def run_single_phase_error(config):
    '''One phase flip of config.error_angle, with and without correction.

    with_ec     flip just before the first error-correction round
                (max(n_ec, 1) rounds); the error-free curve is
                'reference'.
    without_ec  flip in the middle of the sensing time, no rounds.

    `delta_phi` in the metadata is the phase mismatch between the code and
    error subspaces at the longest sensing time, accumulated from the flip
    to the round that corrects it (or to the final decode without one).
    '''
    _check_protocol(config, 'single_phase_error')
    setup, curves = config.setup, _Curves(config)
    n_ec = max(config.n_ec, 1)
    fractions = _fractions(config, n_ec)
    arms = (('with_ec', n_ec, 'before_ec', config.error_angle),
            ('reference', n_ec, None, None),
            ('without_ec', 0, 'midpoint', config.error_angle))
    t_max = config.times[-1]
    for name, rounds, error_at, angle in arms:
        schedules = [qsec_schedule(t, config.rabi, rounds, setup,
                                   fractions if rounds == n_ec else None,
                                   error_angle=angle, error_at=error_at)
                     for t in config.times]
        p = exact_curve(schedules, setup, config.readout, config.workers)
        budget = _mismatch(config.rabi, t_max, schedules[-1], error_at)
        curves.add(name, config.times, p, n_ec=rounds, error_at=error_at,
                   error_angle=angle, delta_phi=budget.delta_phi)
    return curves.curves


def _mismatch(rabi, total, pulses, error_at):
    if error_at is None:
        return phase_mismatch(rabi, total, total)
    t_error = pulses.marker('error') - pulses.marker('sensing_start')
    if error_at == 'before_ec':
        return phase_mismatch(rabi, t_error, t_error)
    return phase_mismatch(rabi, t_error, total)


def reset_coherence_schedule(k, electron_start='e0'):
    '''Nuclear superposition, k optical resets, phase-to-population map.'''
    pulses = schedule(rotation_segment('nuclear', 'y', math.pi / 2,
                                       label='prepare'))
    if electron_start == 'em1':
        pulses = pulses + schedule(rotation_segment('electron', 'x', math.pi,
                                                    label='prepare'))
    resets = schedule(*[channel('reset', label='reset %s' % (i + 1))
                        for i in range(int(k))])
    return pulses + resets + readout_map_schedule()


def run_reset_coherence(config):
    '''Nuclear coherence versus the number of resets.

    The reported 2 P(up) - 1 is divided by the contrast left by imperfect
    initialization and readout, (2 f_read - 1) (2 f_init - 1).
    '''
    _check_protocol(config, 'reset_coherence')
    readout = config.readout
    scale = (2 * readout.fidelity_read - 1) * (2 * readout.fidelity_init - 1)
    if abs(scale) < 1e-12:
        raise QsecError('Readout with fidelity 0.5 carries no coherence')
    setup = Setup(law=None, reset=config.reset)
    schedules = [reset_coherence_schedule(k, config.electron_start)
                 for k in config.resets]
    p = exact_curve(schedules, setup, config.readout, config.workers)
    rng = np.random.default_rng([config.seed, 0])
    sampled, err = sample_curve(p, config.shots, rng)
    metadata = dict(protocol=config.protocol, config_hash=config_hash(config),
                    seed=config.seed, eta=config.reset.eta,
                    readout_scale=scale,
                    electron_start=config.electron_start)
    curve = CurveData('reset_coherence', np.asarray(config.resets, float),
                      (2 * p - 1) / scale, (2 * sampled - 1) / scale,
                      2 * err / abs(scale), metadata)
    return {curve.name: curve}


def projected_contrast(y, reference):
    '''Contrast of y along the shape of an error-free reference curve.'''
    y = np.asarray(y, dtype=float)
    reference = np.asarray(reference, dtype=float)
    shape = reference - reference.mean()
    norm = shape @ shape
    if norm == 0:
        return 0.0
    scale = (y - y.mean()) @ shape / norm
    return float(scale * (reference.max() - reference.min()) / 2)


def amplitude_sweep(settings, repetitions):
    '''AC amplitudes covering one period of the error-free signal phase.'''
    unit = ACSignal(1.0, settings.frequency)
    per_hertz = abs(cpmg_phase(unit, settings.n_pulses,
                               settings.pulse_spacing)) * repetitions
    if per_hertz < 1e-12:
        raise QsecError('CPMG collects no phase from a %s Hz signal'
                        % settings.frequency)
    stop = 2 * math.pi / per_hertz
    return np.linspace(0.0, stop, settings.amplitude_points, endpoint=False)


def _angle_label(theta):
    return '%gpi' % round(theta / math.pi, 6)


def run_bitflip_cpmg(config):
    '''Bit-flip code sensing with one injected error per CPMG block.

    For n_ec = 0 a single uncorrected block is run; for n_ec > 0 the block
    plus an error-correction round is repeated n_ec times. Each curve sweeps
    the AC amplitude over one period of the error-free phase. Its contrast
    is the projection on the error-free reference curve; the sensitivity is
    1 / (C sqrt(T)) with T the CPMG time.
    '''
    _check_protocol(config, 'bitflip_cpmg')
    settings = config.cpmg
    spacing = settings.pulse_spacing
    check_spacing(spacing, settings.frequency)
    setup, curves, points = config.setup, _Curves(config), []

    for n_ec in range(config.n_ec + 1):
        repetitions, correct = max(n_ec, 1), n_ec > 0
        sensing_time = repetitions * settings.n_pulses * spacing
        amplitudes = amplitude_sweep(settings, repetitions)

        def measure(name, error, **metadata):
            schedules = [bitflip_schedule(
                settings.n_pulses, spacing,
                ACSignal(amplitude, settings.frequency), repetitions,
                correct, setup, error) for amplitude in amplitudes]
            p = exact_curve(schedules, setup, config.readout, config.workers)
            return curves.add(name, amplitudes, p, n_ec=n_ec,
                              sensing_time=sensing_time, **metadata)

        reference = measure('reference_n_ec_%s' % n_ec, None)
        errored = []
        for theta in config.error_angles:
            for delay in config.delays:
                name = 'theta_%s_delay_%gus_n_ec_%s' % (
                    _angle_label(theta), delay * 1e6, n_ec)
                curve = measure(name, (theta, delay), theta=theta,
                                delay=delay)
                errored.append(curve)
                points.append(_sensitivity_point(
                    n_ec, theta, delay, curve, reference, sensing_time))

        if settings.averaged:
            p = np.mean([curve.y_exact for curve in errored], axis=0)
            curve = curves.add('averaged_n_ec_%s' % n_ec, amplitudes, p,
                               n_ec=n_ec, sensing_time=sensing_time)
            curve.y = np.mean([c.y for c in errored], axis=0)
            curve.y_err = (np.sqrt(np.sum([c.y_err ** 2 for c in errored],
                                          axis=0)) / len(errored))
            points.append(_sensitivity_point(n_ec, None, None, curve,
                                             reference, sensing_time))
    return BitflipSweep(curves.curves, points)


def _sensitivity_point(n_ec, theta, delay, curve, reference, sensing_time):
    contrast = projected_contrast(curve.y_exact, reference.y_exact)
    sampled = projected_contrast(curve.y, reference.y_exact)
    return SensitivityPoint(n_ec, theta, delay, contrast, sampled,
                            sensing_time,
                            shot_noise_sensitivity(contrast, sensing_time),
                            curve.name)


RUNNERS = {
    'qsec_rabi': run_qsec_rabi,
    'single_phase_error': run_single_phase_error,
    'bitflip_cpmg': run_bitflip_cpmg,
    'reset_coherence': run_reset_coherence,
    'no_noise_sim': run_no_noise_sim,
}


def run(config):
    '''Run the protocol named in the config.'''
    return RUNNERS[config.protocol](config)
