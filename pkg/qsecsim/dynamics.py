'''
Time evolution of the register.

The master equation is

    rho' = -i[H0 + HC(t), rho] + gamma(t) (Sz rho Sz - 1/2 {Sz^2, rho})

with H0 = Delta_NV Sz + A Sz Iz + Delta_13C Iz, drives HC(t) on the electron
(Sx, Sy) or the nucleus (Ix, Iy) and the dephasing rate gamma(t) = t / T^2.

Frequencies are stored in Hz everywhere; the single conversion to angular
units happens in `build_h0` and `hamiltonian`.

It is integrated with fixed-step RK4 on the vectorized (row-major) density
matrix; segments without noise or signal use the exact propagator instead.
Segments in the signal frame drop H0: the sensing drive sits at the centre
of the hyperfine doublet, and the schedule converts to the gate frame
around each error-correction round.

Under the sigma/2 convention an electron coherence decays as
exp(-t^2 / (4 T^2)), which is what a quasi-static Gaussian detuning ensemble
with 2 pi sigma = 1 / (sqrt(2) T) produces.

'''

import math
from dataclasses import dataclass
from typing import Optional

import numpy as np
from scipy.linalg import expm

from qsecsim.error import QsecError, IntegrationError
from qsecsim.hilbert import spin_operators, embed, rotation, I4


TWO_PI = 2 * np.pi

SEGMENT_KINDS = ('free', 'mw_drive', 'rf_drive', 'instant_rotation',
                 'channel')

CLOCK_MODES = ('global', 'per_reset')

FRAMES = ('gate', 'signal')

MAX_STEPS = 10 ** 7

_SPIN = spin_operators()


@dataclass(frozen=True)
class HamiltonianParams(object):
    '''Static Hamiltonian parameters, all in Hz.

    Attrs:
        A           Parallel hyperfine coupling.
        delta_nv    Microwave detuning.
        delta_c13   Radiofrequency detuning.
    '''
    A: float = 50e3
    delta_nv: float = -25e3
    delta_c13: float = -25e3

    @property
    def cnot_wait(self):
        '''Free evolution time of a conditional gate, half a hyperfine
        period.'''
        if self.A == 0:
            raise QsecError('Conditional gate undefined for A = 0')
        return 1 / (2 * abs(self.A))


@dataclass(frozen=True)
class DephasingLaw(object):
    '''Linearly growing electron dephasing rate gamma(t) = t / T^2.

    Attrs:
        T           Dephasing time (s).
        clock_mode  'global': t is the sequence time.
                    'per_reset': t restarts at every optical reset.
    '''
    T: float = 40e-6
    clock_mode: str = 'global'

    def __post_init__(self):
        if not self.T > 0:
            raise QsecError('Dephasing time must be positive, got %s' % self.T)
        if self.clock_mode not in CLOCK_MODES:
            raise QsecError('Unknown clock mode: %s' % self.clock_mode)

    def rate(self, t):
        return t / self.T ** 2

    def envelope(self, t_start, t_end):
        '''Decay factor of an electron coherence between two clock values.'''
        return math.exp(-(t_end ** 2 - t_start ** 2) / (4 * self.T ** 2))


@dataclass(frozen=True)
class ACSignal(object):
    '''Phase-locked AC field b cos(2 pi f s + phase) along the electron Sz.'''
    amplitude: float
    frequency: float
    phase: float = 0.0

    def field(self, s):
        return self.amplitude * np.cos(TWO_PI * self.frequency * s +
                                       self.phase)


@dataclass(frozen=True)
class Segment(object):
    '''One timed or instantaneous element of a pulse schedule.

    Attrs:
        kind            One of SEGMENT_KINDS.
        duration        Seconds; zero for instantaneous kinds.
        axis            Rotation axis ('x', 'y', 'z') or drive axis ('x', 'y').
        phase           Extra drive phase in the xy plane (radians).
        amplitude       Drive Rabi frequency (Hz), or the strength of a
                        depolarizing channel.
        angle           Instantaneous rotation angle (radians).
        target          'electron' or 'nuclear'.
        conditional_on  Basis label of the other qubit, or None.
        noise_on        Whether dephasing acts during the segment.
        signal          Optional ACSignal during the segment.
        signal_origin   Signal time at the start of the segment (s).
        channel         Channel name for kind 'channel'.
        label           Free text shown in schedule listings.
        frame           'gate' evolves under H0; 'signal' drops H0, so the
                        segment sees only its drive, noise and signal.
    '''
    kind: str
    duration: float = 0.0
    axis: str = 'x'
    phase: float = 0.0
    amplitude: float = 0.0
    angle: float = 0.0
    target: str = 'electron'
    conditional_on: Optional[str] = None
    noise_on: bool = True
    signal: Optional[ACSignal] = None
    signal_origin: float = 0.0
    channel: Optional[str] = None
    label: str = ''
    frame: str = 'gate'

    def __post_init__(self):
        if self.frame not in FRAMES:
            raise QsecError('Unknown frame: %s' % self.frame)
        if self.kind not in SEGMENT_KINDS:
            raise QsecError('Unknown segment kind: %s' % self.kind)
        if self.duration < 0:
            raise QsecError('Negative segment duration: %s' % self.duration)
        if self.kind in ('instant_rotation', 'channel') and self.duration:
            raise QsecError('%s segments have no duration' % self.kind)

    def describe(self):
        if self.kind == 'instant_rotation':
            text = '%s %s-rotation %.6g rad' % (self.target, self.axis,
                                               self.angle)
        elif self.kind == 'channel':
            text = 'channel %s' % self.channel
            if self.angle:
                text += ' %.6g rad' % self.angle
        elif self.kind == 'free':
            text = 'free %.6g s' % self.duration
        else:
            text = '%s %.6g s %s-axis %.6g Hz' % (
                self.kind, self.duration, self.axis, self.amplitude)
        if self.conditional_on:
            text += ' if %s' % self.conditional_on
        if self.signal is not None:
            text += ' signal %.6g Hz @ %.6g Hz' % (self.signal.amplitude,
                                                  self.signal.frequency)
        if self.frame != 'gate':
            text += ' (%s frame)' % self.frame
        return text


def free(duration, noise_on=True, signal=None, signal_origin=0.0, label=''):
    return Segment('free', duration=duration, noise_on=noise_on,
                   signal=signal, signal_origin=signal_origin, label=label)


def mw_drive(duration, rabi, axis='x', phase=0.0, noise_on=True, label='',
             frame='gate'):
    return Segment('mw_drive', duration=duration, amplitude=rabi, axis=axis,
                   phase=phase, noise_on=noise_on, label=label, frame=frame)


def rf_drive(duration, rabi, axis='x', phase=0.0, noise_on=True, label=''):
    return Segment('rf_drive', duration=duration, amplitude=rabi, axis=axis,
                   phase=phase, target='nuclear', noise_on=noise_on,
                   label=label)


def rotation_segment(target, axis, angle, conditional_on=None, label=''):
    return Segment('instant_rotation', axis=axis, angle=angle, target=target,
                   conditional_on=conditional_on, label=label)


def build_h0(params):
    '''Static Hamiltonian in angular units (rad/s).'''
    return TWO_PI * (params.delta_nv * _SPIN['Sz'] +
                     params.A * _SPIN['Sz'] @ _SPIN['Iz'] +
                     params.delta_c13 * _SPIN['Iz'])


def _drive_operator(segment):
    base = {'x': 0.0, 'y': np.pi / 2}
    if segment.axis not in base:
        raise QsecError('Drives act along x or y, not %s' % segment.axis)
    angle = base[segment.axis] + segment.phase
    prefix = 'S' if segment.kind == 'mw_drive' else 'I'
    return (np.cos(angle) * _SPIN[prefix + 'x'] +
            np.sin(angle) * _SPIN[prefix + 'y'])


def hamiltonian(segment, params):
    '''Time-independent part of the Hamiltonian during a timed segment.'''
    if segment.frame == 'signal':
        h = np.zeros((4, 4), dtype=complex)
    else:
        h = build_h0(params)
    if segment.kind in ('mw_drive', 'rf_drive') and segment.amplitude:
        h = h + TWO_PI * segment.amplitude * _drive_operator(segment)
    return h


def _commutator_superoperator(h):
    '''vec(-i[h, rho]) for row-major vectorization.'''
    return -1j * (np.kron(h, I4) - np.kron(I4, h.T))


def _dephasing_superoperator():
    sz = _SPIN['Sz']
    sz2 = sz.conj().T @ sz
    return (np.kron(sz, sz.T) -
            0.5 * (np.kron(sz2, I4) + np.kron(I4, sz2.T)))


_DEPHASING = _dephasing_superoperator()
_SIGNAL = _commutator_superoperator(TWO_PI * _SPIN['Sz'])


def step_count(segment, params, law=None, t_clock=0.0):
    '''Number of RK4 steps: step <= min(duration / 50, 1 / (50 f_max)).'''
    if segment.duration == 0:
        return 0
    levels = np.linalg.eigvalsh(hamiltonian(segment, params))
    f_max = levels.max() - levels.min()
    if segment.signal is not None:
        f_max += TWO_PI * (abs(segment.signal.amplitude) +
                           segment.signal.frequency)
    if law is not None and segment.noise_on:
        f_max += law.rate(t_clock + segment.duration)
    return max(50, int(math.ceil(50 * segment.duration * f_max)))


def evolve_segment(rho, segment, params, law=None, t_clock=0.0,
                   max_steps=MAX_STEPS, steps=None):
    '''Evolve rho through one segment.

    `t_clock` is the dephasing clock at the start of the segment; it enters
    gamma(t). Returns (rho', t_clock + duration). `law` None switches
    dephasing off. `steps` overrides the RK4 step count.
    '''
    if segment.kind == 'instant_rotation':
        return (instant_rotation(rho, segment.target, segment.axis,
                                 segment.angle, segment.conditional_on),
                t_clock)
    if segment.kind == 'channel':
        raise QsecError('Channel segments are applied by the schedule runner')
    if segment.duration == 0:
        return rho, t_clock

    steps = steps or step_count(segment, params, law, t_clock)
    if steps > max_steps:
        raise IntegrationError(
            'Step size underflow in segment "%s" (%s): %s steps needed'
            % (segment.label or segment.kind, segment.describe(), steps))

    generator = _commutator_superoperator(hamiltonian(segment, params))
    noisy = law is not None and segment.noise_on
    signal = segment.signal
    vector = np.asarray(rho, dtype=complex).reshape(16)

    if not noisy and signal is None:
        # time independent: exact propagator
        result = (expm(generator * segment.duration) @ vector).reshape(4, 4)
        return 0.5 * (result + result.conj().T), t_clock + segment.duration

    def rhs(s, vector):
        matrix = generator
        if noisy:
            matrix = matrix + law.rate(t_clock + s) * _DEPHASING
        if signal is not None:
            matrix = matrix + signal.field(segment.signal_origin + s) * _SIGNAL
        return matrix @ vector

    h = segment.duration / steps
    for n in range(steps):
        s = n * h
        k1 = rhs(s, vector)
        k2 = rhs(s + h / 2, vector + h / 2 * k1)
        k3 = rhs(s + h / 2, vector + h / 2 * k2)
        k4 = rhs(s + h, vector + h * k3)
        vector = vector + h / 6 * (k1 + 2 * k2 + 2 * k3 + k4)

    result = vector.reshape(4, 4)
    return 0.5 * (result + result.conj().T), t_clock + segment.duration


def instant_rotation(rho, target, axis, angle, conditional_on=None):
    '''Ideal rotation exp(-i angle sigma_axis / 2) on target, optionally
    restricted to the block where the other qubit is `conditional_on`.'''
    unitary = embed(rotation(axis, angle), target, conditional_on)
    return unitary @ rho @ unitary.conj().T


def lindblad_envelope(times, law):
    '''Analytic electron coherence decay exp(-t^2 / (4 T^2)).'''
    times = np.asarray(times, dtype=float)
    return np.exp(-times ** 2 / (4 * law.T ** 2))


def calibrated_sigma(law):
    '''Detuning spread (Hz) whose ensemble matches the Lindblad envelope.'''
    return 1 / (TWO_PI * math.sqrt(2) * law.T)


ENSEMBLE_CHUNK = 10000


def _ensemble_chunk(args):
    sigma, times, size, seed, index = args
    rng = np.random.default_rng([seed, index])
    detunings = rng.normal(0.0, sigma, size)
    phases = np.exp(1j * TWO_PI * np.outer(detunings, times))
    return phases.sum(axis=0)


def quasistatic_ensemble_fid(sigma, times, n_samples, seed, workers=1):
    '''|<exp(i 2 pi delta t)>| over delta ~ Normal(0, sigma).

    Samples are drawn in fixed chunks seeded with (seed, chunk index), so
    the result does not depend on the number of workers.
    '''
    if n_samples < 1:
        raise QsecError('At least one ensemble sample is needed')
    times = np.asarray(times, dtype=float)
    sizes = [ENSEMBLE_CHUNK] * (n_samples // ENSEMBLE_CHUNK)
    if n_samples % ENSEMBLE_CHUNK:
        sizes.append(n_samples % ENSEMBLE_CHUNK)
    jobs = [(sigma, times, size, seed, index)
            for index, size in enumerate(sizes)]
    if workers > 1 and len(jobs) > 1:
        from concurrent.futures import ProcessPoolExecutor
        with ProcessPoolExecutor(max_workers=workers) as pool:
            sums = list(pool.map(_ensemble_chunk, jobs))
    else:
        sums = [_ensemble_chunk(job) for job in jobs]
    return np.abs(np.sum(sums, axis=0) / n_samples)
