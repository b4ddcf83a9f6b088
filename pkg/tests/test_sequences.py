import math
import numpy as np
from pytest import raises, mark, approx, warns
from qsecsim.error import QsecError
from qsecsim.hilbert import (pure_state, ket, fidelity, normalized,
                             partial_trace_electron, partial_trace_nuclear,
                             random_density_matrix, check_density_matrix,
                             I4)
from qsecsim.dynamics import (HamiltonianParams, DephasingLaw, ACSignal, free,
                              mw_drive, rf_drive, rotation_segment)
from qsecsim.channels import (ResetModel, phase_flip, phase_error, bit_flip,
                              nuclear_up_population)
from qsecsim.sequences import (IDEAL, Setup, Clock, PulseSchedule, schedule,
                               channel, run_schedule, conditional_phase,
                               conditional_flip, cnot_z, encode_schedule,
                               encode, decode, ec_round, readout_map,
                               sensing_block, resonant_spacing, check_spacing,
                               cpmg_schedule, cpmg_phase, phase_mismatch,
                               block_durations, qsec_schedule, frame_slip,
                               bitflip_schedule, calibrate_gate_penalty)


NO_COUPLING = HamiltonianParams(A=0.0, delta_nv=0.0, delta_c13=0.0)

PHASE_CODE = normalized(np.kron([1, 1j], [1, 0]) +
                        np.kron([1, -1j], [0, 1]))
'''(|+ up> + |- down>) / sqrt 2'''

BIT_CODE = normalized([1, 0, 0, 1j])
'''(|0 up> + i|-1 down>) / sqrt 2'''


def start():
    return pure_state(('e0', 'up'))


def phase_code(phi):
    '''Phase-code state carrying the signal phase phi.'''
    return pure_state(normalized(np.kron([1, 1j], [1, 0]) +
                                 np.exp(1j * phi) *
                                 np.kron([1, -1j], [0, 1])))


def nuclear_phase(rho):
    return np.angle(partial_trace_electron(rho)[1, 0])


NOISY = Setup(reset=ResetModel(0.9))

SEGMENTS = [
    free(12e-6),
    free(10e-6, signal=ACSignal(20e3, 100e3)),
    mw_drive(6e-6, 100e3, axis='y', frame='signal'),
    mw_drive(3e-6, 80e3, phase=0.4),
    rf_drive(5e-6, 20e3, axis='y'),
    rotation_segment('electron', 'x', 1.1, 'down'),
    rotation_segment('nuclear', 'z', 0.7),
    channel('reset'),
    channel('phase_error', angle=0.9),
    channel('bit_flip', angle=2.0),
    channel('depolarize', strength=0.3),
]


def segment_map(segment):
    '''Superoperator (row-major vectorization) and Choi matrix of one
    segment, run from a clock 20 us into the sequence.

    Built from Hermitian inputs only: E_ij = X + iY with X, Y Hermitian.
    '''
    def apply(rho):
        pulses = schedule(segment)
        return run_schedule(pulses, rho, NOISY, Clock(20e-6, 20e-6))[0]

    superoperator = np.zeros((16, 16), dtype=complex)
    choi = np.zeros((16, 16), dtype=complex)
    for i in range(4):
        for j in range(4):
            unit = np.zeros((4, 4), dtype=complex)
            unit[i, j] = 1
            real = (unit + unit.T) / 2
            imaginary = (unit - unit.T) / 2j
            image = apply(real) + 1j * apply(imaginary)
            superoperator[:, 4 * i + j] = image.reshape(16)
            choi += np.kron(unit, image)
    return superoperator, choi


class TestPulseSchedule:

    def test_duration_and_markers(self):
        pulses = (schedule(free(1e-6)).marked('a') +
                  schedule(free(2e-6)).marked('b'))
        assert pulses.duration == approx(3e-6)
        assert pulses.marker('a') == approx(1e-6)
        assert pulses.marker('b') == approx(3e-6)

    def test_missing_marker(self):
        with raises(QsecError):
            schedule(free(1e-6)).marker('nowhere')

    def test_marker_outside(self):
        with raises(QsecError):
            PulseSchedule((free(1e-6),), (('late', 2e-6),))

    def test_describe(self):
        pulses = schedule(free(1e-6, label='wait')).marked('end')
        lines = pulses.describe().splitlines()
        assert len(lines) == 2
        assert '[wait]' in lines[0] and '-- end' in lines[1]

    def test_unknown_channel(self):
        with raises(QsecError):
            channel('erase')


class TestRunSchedule:

    def test_clock_advances_and_resets(self):
        pulses = schedule(free(2e-6), channel('reset'), free(1e-6))
        _, clock = run_schedule(pulses, start())
        assert clock.time == approx(3e-6)
        assert clock.since_reset == approx(1e-6)

    def test_per_reset_clock(self):
        assert Clock(5e-6, 1e-6).dephasing_time(
            DephasingLaw(clock_mode='per_reset')) == approx(1e-6)
        assert Clock(5e-6, 1e-6).dephasing_time(DephasingLaw()) == \
            approx(5e-6)

    def test_channels(self):
        rho = run_schedule(schedule(channel('bit_flip', angle=math.pi)),
                           start())[0]
        assert fidelity(rho, ket('em1', 'up')) == approx(1)
        rho = run_schedule(schedule(channel('depolarize', strength=1.0)),
                           start())[0]
        assert np.allclose(rho, I4 / 4)


class TestGates:

    def test_conditional_phase_truth_table(self):
        pulses = conditional_phase()
        for electron in ('+', '-'):
            rho = run_schedule(pulses, pure_state((electron, 'up')))[0]
            assert fidelity(rho, ket(electron, 'up')) == approx(1)
        rho = run_schedule(pulses, pure_state(('+', 'down')))[0]
        assert fidelity(rho, ket('-', 'down')) == approx(1)

    def test_conditional_flip_truth_table(self):
        pulses = conditional_flip()
        for electron, expected in (('e0', 'e0'), ('em1', 'em1')):
            rho = run_schedule(pulses, pure_state((electron, 'up')))[0]
            assert fidelity(rho, ket(expected, 'up')) == approx(1)
        rho = run_schedule(pulses, pure_state(('e0', 'down')))[0]
        assert fidelity(rho, ket('em1', 'down')) == approx(1)

    def test_hyperfine_cnot_matches_ideal(self):
        rho = random_density_matrix(np.random.default_rng(8))
        physical = run_schedule(cnot_z(), rho)[0]
        ideal = run_schedule(conditional_flip(), rho)[0]
        assert np.allclose(physical, ideal, atol=1e-9)

    def test_hyperfine_cnot_twice_is_identity(self):
        rho = random_density_matrix(np.random.default_rng(9))
        twice = run_schedule(cnot_z() + cnot_z(), rho)[0]
        assert np.allclose(twice, rho, atol=1e-9)

    def test_hyperfine_cz_matches_ideal(self):
        rho = random_density_matrix(np.random.default_rng(10))
        setup = Setup(law=None, hyperfine_gates=True)
        physical = run_schedule(conditional_phase(setup), rho, setup)[0]
        ideal = run_schedule(conditional_phase(), rho)[0]
        assert np.allclose(physical, ideal, atol=1e-9)

    def test_hyperfine_gate_needs_coupling(self):
        with raises(QsecError):
            cnot_z(NO_COUPLING)

    def test_bit_flip_commutes_with_conditional_flip(self):
        rho = random_density_matrix(np.random.default_rng(11))
        theta = 0.7
        first = run_schedule(conditional_flip(), bit_flip(rho, theta))[0]
        second = bit_flip(run_schedule(conditional_flip(), rho)[0], theta)
        assert np.allclose(first, second)

    def test_gate_penalty_fidelity(self):
        p = calibrate_gate_penalty(0.8)
        setup = Setup(law=None, gate_penalty=p)
        rho = run_schedule(encode_schedule('phase', setup), start(), setup)[0]
        assert fidelity(rho, PHASE_CODE) == approx(0.8)

    def test_calibrate_gate_penalty(self):
        assert calibrate_gate_penalty(0.8) == approx(0.26666666)
        assert calibrate_gate_penalty(1.0) == 0
        with raises(QsecError):
            calibrate_gate_penalty(0.1)


class TestPhaseCode:

    def test_encode(self):
        assert fidelity(encode(start()), PHASE_CODE) == approx(1)

    def test_hyperfine_encode(self):
        setup = Setup(law=None, hyperfine_gates=True)
        rho = run_schedule(encode_schedule('phase', setup), start(), setup)[0]
        assert fidelity(rho, PHASE_CODE) == approx(1)

    def test_decode_undoes_encode(self):
        rho = decode(encode(start()))
        assert fidelity(rho, normalized([1, 1, 0, 0])) == approx(1)

    @mark.parametrize('phi', [0.0, 0.4, 1.5, -2.0, 3.0])
    def test_decode_moves_phase_to_nucleus(self, phi):
        rho = decode(phase_code(phi))
        assert partial_trace_nuclear(rho)[0, 0].real == approx(1)
        assert nuclear_phase(rho) == approx(phi)

    def test_decode_flags_a_phase_flip(self):
        rho = decode(phase_flip(phase_code(0.8)))
        assert partial_trace_nuclear(rho)[1, 1].real == approx(1)
        assert nuclear_phase(rho) == approx(0.8)

    @mark.parametrize('phi', [0.0, 1.1, 2.9])
    def test_ec_round_is_transparent(self, phi):
        rho = phase_code(phi)
        assert np.allclose(ec_round(rho, ResetModel(1.0)), rho)

    @mark.parametrize('angle', [math.pi, 0.5])
    def test_ec_round_removes_phase_errors(self, angle):
        rho = phase_code(1.1)
        corrected = ec_round(phase_error(rho, angle), ResetModel(1.0))
        assert np.allclose(corrected, rho)

    def test_ec_round_reset_loss(self):
        eta = 0.9
        rho = ec_round(ec_round(phase_code(0.0), ResetModel(eta)),
                       ResetModel(eta))
        assert partial_trace_electron(decode(rho))[0, 1].real == \
            approx(eta ** 2 / 2)

    @mark.parametrize('phi', [0.0, math.pi / 2, 2.0, math.pi])
    def test_readout_map(self, phi):
        rho = readout_map(decode(phase_code(phi)))
        assert nuclear_up_population(rho) == approx((1 + math.cos(phi)) / 2)

    def test_readout_map_ignores_error_subspace(self):
        rho = readout_map(pure_state(normalized([0, 0, 1, 1])))
        assert nuclear_up_population(rho) == approx(0.5)

    def test_unknown_code(self):
        with raises(QsecError):
            encode_schedule('shor')


class TestBitCode:

    def test_encode(self):
        assert fidelity(encode(start(), 'bit'), BIT_CODE) == approx(1)

    def test_decode_undoes_encode(self):
        rho = decode(encode(start(), 'bit'), 'bit')
        assert partial_trace_nuclear(rho)[0, 0].real == approx(1)
        assert nuclear_up_population(readout_map(rho)) == approx(1)

    def test_ec_round_removes_bit_flip(self):
        rho = encode(start(), 'bit')
        corrected = ec_round(bit_flip(rho, math.pi), ResetModel(1.0), 'bit')
        assert np.allclose(corrected, rho)

    def test_ec_round_removes_partial_bit_flip(self):
        rho = encode(start(), 'bit')
        corrected = ec_round(bit_flip(rho, 0.6), ResetModel(1.0), 'bit')
        assert np.allclose(corrected, rho)


class TestSensing:

    def test_zero_duration_is_identity(self):
        rho = phase_code(0.3)
        assert np.allclose(sensing_block(rho, 0.0, 100e3, IDEAL)[0], rho)

    @mark.parametrize('t', [1e-6, 3.3e-6, 7e-6])
    def test_drive_advances_code_phase(self, t):
        rabi = 100e3
        setup = Setup(params=NO_COUPLING, law=None)
        rho, clock = sensing_block(phase_code(0.0), t, rabi, setup)
        assert clock.time == approx(t)
        assert np.allclose(rho, phase_code(2 * math.pi * rabi * t),
                           atol=1e-9)

    def test_drive_ignores_the_static_hamiltonian(self):
        rabi, t = 100e3, 7.3e-6
        setup = Setup(law=None)
        rho, _ = sensing_block(phase_code(0.0), t, rabi, setup)
        assert np.allclose(rho, phase_code(2 * math.pi * rabi * t),
                           atol=1e-9)

    def test_phase_mismatch(self):
        budget = phase_mismatch(100e3, 2e-6, 5e-6)
        assert budget.phi_code == approx(2 * math.pi * 100e3 * 3e-6)
        assert budget.phi_error == approx(-budget.phi_code)
        assert budget.delta_phi == approx(4 * math.pi * 100e3 * 3e-6)

    @mark.parametrize('t_error, t_correct', [(2e-6, 5e-6), (1e-6, 8.7e-6)])
    def test_phase_mismatch_matches_the_register(self, t_error, t_correct):
        rabi = 100e3
        setup = Setup(law=None)
        code = (normalized(np.kron([1, 1j], [1, 0])),
                normalized(np.kron([1, -1j], [0, 1])))
        error = (normalized(np.kron([1, -1j], [1, 0])),
                 normalized(np.kron([1, 1j], [0, 1])))

        def coherences(rho):
            return (code[0].conj() @ rho @ code[1],
                    error[0].conj() @ rho @ error[1])

        rho, _ = sensing_block(phase_code(0.4), t_error, rabi, setup)
        rho = phase_error(rho, math.pi / 2)
        before = coherences(rho)
        rho, _ = sensing_block(rho, t_correct - t_error, rabi, setup)
        after = coherences(rho)
        code_turn = after[0] / before[0]
        error_turn = after[1] / before[1]

        budget = phase_mismatch(rabi, t_error, t_correct)
        assert abs(code_turn) == approx(1)
        assert code_turn.real == approx(math.cos(budget.phi_code), abs=1e-9)
        assert error_turn.real == approx(math.cos(budget.phi_error), abs=1e-9)
        assert (code_turn * np.conj(error_turn)).real == approx(
            math.cos(budget.delta_phi), abs=1e-9)

    def test_phase_mismatch_order(self):
        with raises(QsecError):
            phase_mismatch(100e3, 5e-6, 2e-6)


class TestCpmg:

    def test_layout(self):
        pulses = cpmg_schedule(4, 5e-6)
        kinds = [segment.kind for segment in pulses.segments]
        assert kinds.count('instant_rotation') == 4
        assert pulses.duration == approx(20e-6)

    def test_error_marker(self):
        pulses = cpmg_schedule(8, 5e-6, error=(math.pi, 1.2e-6))
        assert pulses.duration == approx(40e-6)
        assert pulses.marker('error') == approx(40e-6 - 1.2e-6)

    def test_error_delay_must_fit(self):
        with raises(QsecError):
            cpmg_schedule(8, 5e-6, error=(math.pi, 3e-6))

    def test_rejects_bad_arguments(self):
        with raises(QsecError):
            cpmg_schedule(0, 5e-6)
        with raises(QsecError):
            cpmg_schedule(4, 0.0)

    def test_resonant_spacing(self):
        assert resonant_spacing(100e3) == approx(5e-6)
        assert check_spacing(5e-6, 100e3)
        with warns(UserWarning):
            assert not check_spacing(6e-6, 100e3)

    def test_resonant_phase(self):
        signal = ACSignal(10e3, 100e3)
        phase = cpmg_phase(signal, 4, 5e-6)
        assert abs(phase) == approx(4 * 10e3 * 20e-6)

    def test_refocuses_static_detuning(self):
        setup = Setup(params=HamiltonianParams(0.0, 30e3, 0.0), law=None)
        rho = pure_state(normalized([1, 0, 1, 0]))
        echoed = run_schedule(cpmg_schedule(4, 5e-6), rho, setup)[0]
        assert np.allclose(echoed, rho, atol=1e-9)

    def test_collects_analytic_phase(self):
        signal = ACSignal(10e3, 100e3)
        setup = Setup(params=NO_COUPLING, law=None)
        rho = pure_state(normalized([1, 0, 1, 0]))
        rho = run_schedule(cpmg_schedule(4, 5e-6, signal), rho, setup)[0]
        assert 2 * abs(rho[0, 2]) == approx(1, abs=1e-6)
        assert np.angle(rho[0, 2]) == approx(-cpmg_phase(signal, 4, 5e-6),
                                             abs=1e-5)


class TestQsecSchedule:

    def test_block_durations(self):
        assert block_durations(30e-6, 2) == approx([10e-6] * 3)
        assert block_durations(10e-6, 1, [0.25, 0.75]) == approx(
            [2.5e-6, 7.5e-6])
        with raises(QsecError):
            block_durations(10e-6, 1, [0.5])
        with raises(QsecError):
            block_durations(10e-6, 1, [0.5, 0.6])

    def test_markers(self):
        pulses = qsec_schedule(30e-6, 100e3, 2, IDEAL)
        assert pulses.marker('sensing_start') == 0
        assert pulses.marker('ec_1') == approx(10e-6)
        assert pulses.marker('ec_2') == approx(20e-6)
        assert pulses.marker('sensing_end') == approx(30e-6)

    def test_error_before_ec(self):
        pulses = qsec_schedule(30e-6, 100e3, 1, IDEAL, error_angle=math.pi,
                               error_at='before_ec')
        assert pulses.marker('error') == approx(15e-6)

    def test_error_needs_a_round(self):
        with raises(QsecError):
            qsec_schedule(30e-6, 100e3, 0, IDEAL, error_angle=math.pi,
                          error_at='before_ec')

    def test_without_coupling_reads_the_drive_phase(self):
        setup = Setup(params=NO_COUPLING, law=None, reset=ResetModel(1.0))
        for n_ec in (0, 1, 2):
            for t in (0.0, 2e-6, 3.7e-6):
                rho = run_schedule(qsec_schedule(t, 100e3, n_ec, setup),
                                   start(), setup)[0]
                assert nuclear_up_population(rho) == approx(
                    (1 + math.cos(2 * math.pi * 100e3 * t)) / 2, abs=1e-9)

    def test_frame_slip(self):
        params = HamiltonianParams()
        assert frame_slip(0.0, params) == 0
        assert frame_slip(10e-6, params) == approx(
            2 * math.pi * 25e3 * 10e-6)
        assert frame_slip(10e-6, NO_COUPLING) == 0

    def test_rounds_are_wrapped_in_frame_changes(self):
        pulses = qsec_schedule(30e-6, 100e3, 2, IDEAL)
        turns = [segment.angle for segment in pulses.segments
                 if segment.label in ('to gate frame', 'to signal frame')]
        first = frame_slip(10e-6, HamiltonianParams())
        assert turns == approx([first, -first, 2 * first, -2 * first])
        frames = {segment.frame for segment in pulses.segments
                  if segment.kind == 'mw_drive'}
        assert frames == {'signal'}

    @mark.parametrize('t', [4e-6, 20e-6, 27.5e-6])
    def test_hyperfine_beat_of_the_rounds(self, t):
        rabi, A = 100e3, 50e3
        setup = Setup(law=None, reset=ResetModel(1.0))

        def population(n_ec):
            rho = run_schedule(qsec_schedule(t, rabi, n_ec, setup),
                               start(), setup)[0]
            return nuclear_up_population(rho)

        signal = math.cos(2 * math.pi * rabi * t)
        assert population(0) == approx((1 + signal) / 2, abs=1e-9)
        assert population(1) == approx(
            0.5 + 0.5 * math.cos(math.pi * A * t / 4) ** 2 * signal,
            abs=1e-9)
        half = [math.pi * A / 2 * t / 3, math.pi * A / 2 * 2 * t / 3]
        expected = 0.5 + 0.5 * math.cos(half[1]) ** 2 * (
            math.cos(half[0]) ** 2 * signal +
            math.sin(half[0]) ** 2 * math.cos(2 * math.pi * rabi * t / 3))
        assert population(2) == approx(expected, abs=1e-9)

    def test_phase_flip_before_a_round_is_corrected(self):
        setup = Setup(law=None, reset=ResetModel(1.0))
        for t in (6e-6, 17e-6):
            reference = run_schedule(qsec_schedule(t, 100e3, 1, setup),
                                     start(), setup)[0]
            flipped = run_schedule(
                qsec_schedule(t, 100e3, 1, setup, error_angle=math.pi,
                              error_at='before_ec'), start(), setup)[0]
            assert np.allclose(flipped, reference, atol=1e-9)


class TestBitflipSchedule:

    def test_exact_recovery_at_zero_delay(self):
        setup = Setup(law=None, reset=ResetModel(1.0))
        signal = ACSignal(5e3, 100e3)
        reference = run_schedule(
            bitflip_schedule(8, 5e-6, signal, 1, True, setup), start(),
            setup)[0]
        for theta in (math.pi / 2, math.pi):
            errored = run_schedule(
                bitflip_schedule(8, 5e-6, signal, 1, True, setup,
                                 (theta, 0.0)), start(), setup)[0]
            assert nuclear_up_population(errored) == approx(
                nuclear_up_population(reference), abs=1e-9)

    def test_uncorrected_full_flip_loses_the_signal(self):
        for amplitude in (0.0, 5e3, 20e3):
            pulses = bitflip_schedule(8, 5e-6, ACSignal(amplitude, 100e3), 1,
                                      False, IDEAL, (math.pi, 0.0))
            rho = run_schedule(pulses, start(), IDEAL)[0]
            assert nuclear_up_population(rho) == approx(0.5, abs=1e-9)

    def test_markers(self):
        pulses = bitflip_schedule(8, 5e-6, None, 2, True, IDEAL)
        assert pulses.marker('ec_1') == approx(40e-6)
        assert pulses.marker('ec_2') == approx(80e-6)


class TestCompletePositivity:

    @mark.parametrize('segment', SEGMENTS,
                      ids=[segment.describe() for segment in SEGMENTS])
    def test_segment_is_cptp(self, segment):
        superoperator, choi = segment_map(segment)
        assert np.linalg.eigvalsh(0.5 * (choi + choi.conj().T)).min() > -1e-6
        for i in range(4):
            for j in range(4):
                image = superoperator[:, 4 * i + j].reshape(4, 4)
                assert np.trace(image) == approx(float(i == j), abs=1e-9)

        rng = np.random.default_rng(31)
        for n in range(1000):
            rho = random_density_matrix(rng, rank=1 + n % 4)
            image = (superoperator @ rho.reshape(16)).reshape(4, 4)
            check_density_matrix(image, 1e-6)
