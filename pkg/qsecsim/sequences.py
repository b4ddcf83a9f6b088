'''
Protocol building blocks composed into pulse schedules.

Two codes are supported:

    phase   code space |+ up>, |- down>; a phase flip of the electron maps it
            to |- up>, |+ down>. The resonant sensing drive (along y)
            accumulates the signal phase here.

    bit     code space |0 up>, |-1 down>; a bit flip of the electron maps it
            to |-1 up>, |0 down>. The CPMG-filtered AC signal accumulates the
            signal phase here.

Conditional gates condition on the nuclear |down> state. Ideal gates are
instantaneous; `Setup.hyperfine_gates` replaces the conditional z-pi by a
free evolution of half a hyperfine period, which is the same gate up to a
global phase for the default detunings.

Readout convention: a signal phase of 0 is read as nucleus up with
probability 1.

'''

import math
import warnings
from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from qsecsim.error import QsecError
from qsecsim.dynamics import (HamiltonianParams, DephasingLaw, ACSignal,
                              Segment, TWO_PI, free, mw_drive,
                              rotation_segment, evolve_segment)
from qsecsim.channels import (ResetModel, optical_reset, phase_error,
                              bit_flip, depolarize)


CODES = ('phase', 'bit')

CHANNELS = ('reset', 'phase_error', 'bit_flip', 'depolarize')


@dataclass(frozen=True)
class PulseSchedule(object):
    '''Ordered segments with named time anchors.

    Attrs:
        segments   Tuple of Segment.
        markers    Tuple of (name, time) pairs, times within [0, duration].
    '''
    segments: tuple = ()
    markers: tuple = ()

    def __post_init__(self):
        total = self.duration
        for name, time in self.markers:
            if not -1e-15 <= time <= total + 1e-15:
                raise QsecError('Marker %s at %s outside the schedule'
                                % (name, time))

    @property
    def duration(self):
        return sum(segment.duration for segment in self.segments)

    def __add__(self, other):
        offset = self.duration
        return PulseSchedule(
            self.segments + other.segments,
            self.markers + tuple((name, time + offset)
                                 for name, time in other.markers))

    def marked(self, name):
        '''This schedule with a marker at its current end.'''
        return PulseSchedule(self.segments,
                             self.markers + ((name, self.duration),))

    def marker(self, name):
        for marker_name, time in self.markers:
            if marker_name == name:
                return time
        raise QsecError('No marker named %s' % name)

    def describe(self):
        '''Human readable listing, one segment per line.'''
        lines, time = [], 0.0
        marks = sorted(self.markers, key=lambda marker: marker[1])
        for segment in self.segments:
            while marks and marks[0][1] <= time + 1e-15:
                lines.append('%12.6g  -- %s' % (marks[0][1], marks[0][0]))
                marks.pop(0)
            label = '  [%s]' % segment.label if segment.label else ''
            lines.append('%12.6g  %s%s' % (time, segment.describe(), label))
            time += segment.duration
        for name, mark_time in marks:
            lines.append('%12.6g  -- %s' % (mark_time, name))
        return '\n'.join(lines)


def schedule(*segments):
    return PulseSchedule(tuple(segments))


def channel(name, angle=0.0, strength=0.0, label=''):
    if name not in CHANNELS:
        raise QsecError('Unknown channel: %s' % name)
    return Segment('channel', channel=name, angle=angle, amplitude=strength,
                   label=label)


@dataclass(frozen=True)
class PhaseBudget(object):
    '''Phase picked up between an error and its correction.

    Attrs:
        phi_code    Phase the code space would have accumulated.
        phi_error   Phase accumulated in the error subspace.
        delta_phi   |phi_code - phi_error|.
    '''
    phi_code: float
    phi_error: float
    delta_phi: float


@dataclass(frozen=True)
class Setup(object):
    '''Physical environment a schedule runs in.

    Attrs:
        params           Hamiltonian parameters.
        law              Dephasing law, None for noise-free evolution.
        reset            Optical reset model.
        gate_penalty     Depolarizing strength after each conditional gate.
        hyperfine_gates  Realize conditional gates by hyperfine evolution.
    '''
    params: HamiltonianParams = field(default_factory=HamiltonianParams)
    law: Optional[DephasingLaw] = field(default_factory=DephasingLaw)
    reset: ResetModel = field(default_factory=ResetModel)
    gate_penalty: float = 0.0
    hyperfine_gates: bool = False


IDEAL = Setup(law=None, reset=ResetModel(1.0))


@dataclass(frozen=True)
class Clock(object):
    '''Sequence time and the time since the last optical reset.'''
    time: float = 0.0
    since_reset: float = 0.0

    def dephasing_time(self, law):
        if law is None or law.clock_mode == 'global':
            return self.time
        return self.since_reset

    def advanced(self, duration):
        return Clock(self.time + duration, self.since_reset + duration)

    def reset(self):
        return Clock(self.time, 0.0)


def apply_channel(rho, segment, reset_model=None):
    if segment.channel == 'reset':
        return optical_reset(rho, reset_model)
    if segment.channel == 'phase_error':
        return phase_error(rho, segment.angle)
    if segment.channel == 'bit_flip':
        return bit_flip(rho, segment.angle)
    if segment.channel == 'depolarize':
        return depolarize(rho, segment.amplitude)
    raise QsecError('Unknown channel: %s' % segment.channel)


def run_schedule(pulses, rho, setup=IDEAL, clock=None):
    '''Run a schedule on rho. Returns (rho, clock).'''
    clock = clock or Clock()
    for segment in pulses.segments:
        if segment.kind == 'channel':
            rho = apply_channel(rho, segment, setup.reset)
            if segment.channel == 'reset':
                clock = clock.reset()
            continue
        rho, _ = evolve_segment(rho, segment, setup.params, setup.law,
                                clock.dephasing_time(setup.law))
        clock = clock.advanced(segment.duration)
    return rho, clock


# Gates --------------------------------------------------------------------

def _penalty(setup):
    if setup is not None and setup.gate_penalty:
        return (channel('depolarize', strength=setup.gate_penalty,
                        label='gate penalty'),)
    return ()


def conditional_phase(setup=None):
    '''Conditional electron z-pi on nuclear down (a controlled-Z).'''
    if setup is not None and setup.hyperfine_gates:
        segments = (free(setup.params.cnot_wait, label='cz'),)
    else:
        segments = (rotation_segment('electron', 'z', math.pi, 'down',
                                     label='cz'),
                    rotation_segment('nuclear', 'z', math.pi / 2,
                                     label='cz phase'))
    return PulseSchedule(segments + _penalty(setup))


def cnot_z(params=None, noise_on=False):
    '''Hyperfine CNOT: electron x-pi/2, free 1/(2A), electron -x-pi/2.

    For the default detunings this is P_up (x) 1 + P_down (x) sigma_y on the
    electron, the ideal conditional flip up to a global phase.
    '''
    params = params or HamiltonianParams()
    return schedule(
        rotation_segment('electron', 'x', math.pi / 2, label='cnot'),
        free(params.cnot_wait, noise_on=noise_on, label='cnot'),
        rotation_segment('electron', 'x', -math.pi / 2, label='cnot'))


def conditional_flip(setup=None):
    '''Conditional electron y-pi on nuclear down (a CNOT).

    The flip axis matches the bit-flip error axis, so the two commute.
    '''
    if setup is not None and setup.hyperfine_gates:
        pulses = cnot_z(setup.params, noise_on=True)
        return PulseSchedule(pulses.segments + _penalty(setup))
    segments = (rotation_segment('electron', 'y', math.pi, 'down',
                                 label='cnot'),
                rotation_segment('nuclear', 'z', math.pi / 2,
                                 label='cnot phase'))
    return PulseSchedule(segments + _penalty(setup))


def _check_code(code):
    if code not in CODES:
        raise QsecError('Unknown code: %s' % code)


def encode_schedule(code='phase', setup=None):
    '''|0 up> to (|+ up> + |- down>) / sqrt 2.

    The bit code ends in (|0 up> + i|-1 down>) / sqrt 2. Global phases are
    dropped.
    '''
    _check_code(code)
    prepare = schedule(rotation_segment('nuclear', 'y', math.pi / 2,
                                        label='encode'))
    return prepare + reencode_schedule(code, setup)


def reencode_schedule(code='phase', setup=None):
    '''Entangle an electron in |0> with the nucleus again.'''
    _check_code(code)
    if code == 'bit':
        return conditional_flip(setup)
    return (schedule(rotation_segment('electron', 'x', -math.pi / 2,
                                      label='encode')) +
            conditional_phase(setup))


def decode_schedule(code='phase', setup=None):
    '''Move the signal phase onto the nucleus and flag errors on the
    electron: |0> without error, |-1> after one.'''
    _check_code(code)
    if code == 'bit':
        return conditional_flip(setup)
    return (conditional_phase(setup) +
            schedule(rotation_segment('electron', 'x', math.pi / 2,
                                      label='decode')))


def ec_round_schedule(code='phase', setup=None):
    '''Decode, optical reset, re-encode.'''
    return (decode_schedule(code, setup) +
            schedule(channel('reset', label='ec')) +
            reencode_schedule(code, setup))


def readout_map_schedule():
    '''Nuclear -y-pi/2 conditioned on electron |0>.'''
    return schedule(rotation_segment('nuclear', 'y', -math.pi / 2, 'e0',
                                     label='readout'))


def encode(rho, code='phase'):
    return run_schedule(encode_schedule(code), rho)[0]


def decode(rho, code='phase'):
    return run_schedule(decode_schedule(code), rho)[0]


def ec_round(rho, reset_model=None, code='phase'):
    setup = Setup(law=None, reset=reset_model or ResetModel())
    return run_schedule(ec_round_schedule(code), rho, setup)[0]


def readout_map(rho):
    return run_schedule(readout_map_schedule(), rho)[0]


# Sensing ------------------------------------------------------------------

def sensing_schedule(duration, rabi):
    '''Resonant microwave signal along y, advancing the phase-code phase.

    The drive runs in the signal frame, so the code-space phase advances by
    2 pi rabi per unit of drive exposure and by nothing else.
    '''
    return schedule(mw_drive(duration, rabi, axis='y', label='sensing',
                             frame='signal'))


def sensing_block(rho, duration, rabi, setup=None, clock=None):
    '''Sense for `duration` under the full noise model.

    Returns (rho, clock).
    '''
    setup = setup or Setup()
    return run_schedule(sensing_schedule(duration, rabi), rho, setup, clock)


def resonant_spacing(frequency):
    return 1 / (2 * frequency)


def check_spacing(spacing, frequency, tolerance=1e-9):
    '''Warn when the CPMG spacing does not match the signal frequency.'''
    resonant = resonant_spacing(frequency)
    if abs(spacing - resonant) > tolerance * resonant:
        warnings.warn('CPMG spacing %.6g s is not resonant with %.6g Hz '
                      '(resonant spacing %.6g s)'
                      % (spacing, frequency, resonant))
        return False
    return True


def cpmg_schedule(n_pulses, spacing, signal=None, error=None):
    '''CPMG block tau/2 - (pi - tau)^(n-1) - pi - tau/2.

    `error` is an optional (theta, delay) pair: a bit flip by theta placed
    `delay` seconds before the end of the last free interval. The marker
    'error' records its time.
    '''
    if n_pulses < 1:
        raise QsecError('CPMG needs at least one pulse')
    if spacing <= 0:
        raise QsecError('CPMG spacing must be positive')

    def interval(start, length, label='cpmg'):
        return free(length, signal=signal, signal_origin=start, label=label)

    segments, time = [interval(0.0, spacing / 2)], spacing / 2
    for k in range(n_pulses):
        segments.append(rotation_segment('electron', 'y', math.pi,
                                         label='cpmg pi'))
        length = spacing if k < n_pulses - 1 else spacing / 2
        if k == n_pulses - 1 and error is not None:
            break
        segments.append(interval(time, length))
        time += length
    else:
        return PulseSchedule(tuple(segments))

    theta, delay = error
    if not 0 <= delay <= spacing / 2:
        raise QsecError('Error delay %s outside the last free interval'
                        % delay)
    segments.append(interval(time, spacing / 2 - delay))
    segments.append(channel('bit_flip', angle=theta, label='error'))
    segments.append(interval(time + spacing / 2 - delay, delay))
    error_time = n_pulses * spacing - delay
    return PulseSchedule(tuple(segments), (('error', error_time),))


def cpmg_block(rho, n_pulses, spacing, signal, setup=None, clock=None,
               error=None):
    '''Run a CPMG block. Returns (rho, clock).'''
    setup = setup or Setup()
    return run_schedule(cpmg_schedule(n_pulses, spacing, signal, error), rho,
                        setup, clock)


def cpmg_phase(signal, n_pulses, spacing):
    '''Signal phase collected by ideal CPMG: sum of (-1)^k integral of
    2 pi b(s) over the free intervals.'''
    edges = [0.0] + [spacing / 2 + k * spacing for k in range(n_pulses)]
    edges.append(n_pulses * spacing)
    omega = TWO_PI * signal.frequency
    total = 0.0
    for k, (start, end) in enumerate(zip(edges[:-1], edges[1:])):
        if omega:
            integral = (np.sin(omega * end + signal.phase) -
                        np.sin(omega * start + signal.phase)) / omega
        else:
            integral = np.cos(signal.phase) * (end - start)
        total += (-1) ** k * TWO_PI * signal.amplitude * integral
    return total


def phase_mismatch(rabi, t_error, t_correct):
    '''Phase budget of a phase flip at t_error corrected at t_correct.

    The code space advances at +2 pi rabi, the error subspace at -2 pi rabi.
    '''
    if t_error > t_correct:
        raise QsecError('Error at %s after its correction at %s'
                        % (t_error, t_correct))
    phi_code = TWO_PI * rabi * (t_correct - t_error)
    phi_error = -phi_code
    return PhaseBudget(phi_code, phi_error, abs(phi_code - phi_error))


def block_durations(total, n_ec, fractions=None):
    '''Split a sensing time into n_ec + 1 blocks.'''
    if fractions is None:
        fractions = [1.0 / (n_ec + 1)] * (n_ec + 1)
    if len(fractions) != n_ec + 1:
        raise QsecError('Need %s block fractions, got %s'
                        % (n_ec + 1, len(fractions)))
    fractions = np.asarray(fractions, dtype=float)
    if (fractions < 0).any() or not np.isclose(fractions.sum(), 1.0):
        raise QsecError('Block fractions must be non-negative and sum to 1')
    return [total * fraction for fraction in fractions]


def frame_slip(elapsed, params):
    '''Electron z angle between the signal frame and the gate frame after
    `elapsed` seconds of sensing.

    The signal sits at the centre of the hyperfine doublet; the gate frame
    is resonant with the nuclear-up line and trails it by A / 2.
    '''
    return TWO_PI * params.A / 2 * elapsed


def corrected_round_schedule(elapsed, setup=None):
    '''An ec round of the phase code entered from the signal frame.'''
    params = setup.params if setup is not None else HamiltonianParams()
    angle = frame_slip(elapsed, params)
    return (schedule(rotation_segment('electron', 'z', angle,
                                      label='to gate frame')) +
            ec_round_schedule('phase', setup) +
            schedule(rotation_segment('electron', 'z', -angle,
                                      label='to signal frame')))


def qsec_schedule(total, rabi, n_ec, setup=None, fractions=None,
                  error_angle=None, error_at=None):
    '''Encode, sense in n_ec + 1 blocks separated by ec rounds, decode,
    readout map.

    `error_at` places a phase error of `error_angle` either at the marker
    'before_ec' (just before the first ec round) or at 'midpoint' (middle of
    the total sensing time).

    Encode, the final decode and the readout map are locked to the signal
    frame; each ec round is converted to the gate frame and back.
    '''
    pulses = encode_schedule('phase', setup).marked('sensing_start')
    sensed = 0.0
    for index, duration in enumerate(block_durations(total, n_ec, fractions)):
        if error_at == 'midpoint' and sensed <= total / 2 <= sensed + duration:
            first = total / 2 - sensed
            pulses = (pulses + sensing_schedule(first, rabi) +
                      schedule(channel('phase_error', angle=error_angle,
                                       label='error')).marked('error') +
                      sensing_schedule(duration - first, rabi))
            error_at = None
        else:
            pulses = pulses + sensing_schedule(duration, rabi)
        sensed += duration
        if index < n_ec:
            if error_at == 'before_ec':
                pulses = pulses.marked('error') + schedule(
                    channel('phase_error', angle=error_angle, label='error'))
                error_at = None
            pulses = pulses.marked('ec_%s' % (index + 1))
            elapsed = pulses.duration - pulses.marker('sensing_start')
            pulses = pulses + corrected_round_schedule(elapsed, setup)
    if error_at is not None:
        raise QsecError('Cannot place the error at %s with %s ec rounds'
                        % (error_at, n_ec))
    return (pulses.marked('sensing_end') + decode_schedule('phase', setup) +
            readout_map_schedule())


def bitflip_schedule(n_pulses, spacing, signal, repetitions, correct,
                     setup=None, error=None):
    '''Bit-flip code CPMG protocol.

    encode, then `repetitions` CPMG blocks each carrying `error` and, if
    `correct`, followed by an ec round; decode and readout map at the end.
    '''
    pulses = encode_schedule('bit', setup)
    for index in range(repetitions):
        pulses = pulses + cpmg_schedule(n_pulses, spacing, signal, error)
        if correct:
            pulses = (pulses.marked('ec_%s' % (index + 1)) +
                      ec_round_schedule('bit', setup))
    return pulses + decode_schedule('bit', setup) + readout_map_schedule()


def calibrate_gate_penalty(fidelity=0.8):
    '''Depolarizing strength per conditional gate that leaves an encoded
    pure state with the given fidelity: F = 1 - 3 p / 4.'''
    if not 0.25 <= fidelity <= 1:
        raise QsecError('Gate fidelity must be in [1/4, 1], got %s' % fidelity)
    return (1 - fidelity) / 0.75
