import numpy as np
from pytest import raises, mark, fixture
from qsecsim.error import QsecError
from qsecsim.hilbert import (BASIS, PAULI, I4, tensor, spin_operators, ket,
                             pure_state, fidelity, partial_trace_electron,
                             partial_trace_nuclear, purity, rotation,
                             projector, embed, is_hermitian, is_unitary,
                             check_density_matrix, random_density_matrix,
                             format_matrix, parse_matrix)


@fixture
def rng():
    return np.random.default_rng(1234)


class TestBasis:

    def test_order(self):
        for index, labels in enumerate(BASIS):
            vector = ket(*labels)
            assert vector[index] == 1
            assert np.count_nonzero(vector) == 1

    def test_sz_convention(self):
        spin = spin_operators()
        assert np.allclose(np.diag(spin['Sz']), [0.5, 0.5, -0.5, -0.5])
        assert np.allclose(np.diag(spin['Iz']), [0.5, -0.5, 0.5, -0.5])

    def test_plus_minus_are_sy_eigenstates(self):
        sy = PAULI['y'] / 2
        for label, sign in (('+', 1), ('-', -1)):
            vector = ket(label, 'up')[[0, 2]]
            assert np.allclose(sy @ vector, sign * 0.5 * vector)

    def test_unknown_label(self):
        with raises(QsecError):
            ket('e1', 'up')
        with raises(QsecError):
            projector('sideways')


class TestStates:

    def test_pure_state_from_amplitudes_is_normalized(self):
        rho = pure_state([1, 1, 0, 0])
        assert np.isclose(np.trace(rho), 1)
        assert np.isclose(purity(rho), 1)

    def test_zero_vector(self):
        with raises(QsecError):
            pure_state([0, 0, 0, 0])

    def test_fidelity(self):
        rho = pure_state(('e0', 'up'))
        assert fidelity(rho, ket('e0', 'up')) == 1
        assert fidelity(rho, ket('em1', 'up')) == 0

    def test_partial_traces_of_product(self, rng):
        electron = np.array([[0.7, 0.2j], [-0.2j, 0.3]])
        nuclear = np.array([[0.4, 0.1], [0.1, 0.6]])
        rho = tensor(electron, nuclear)
        assert np.allclose(partial_trace_electron(rho), nuclear)
        assert np.allclose(partial_trace_nuclear(rho), electron)

    def test_partial_trace_of_entangled_state(self):
        bell = (ket('e0', 'up') + ket('em1', 'down')) / np.sqrt(2)
        rho = pure_state(bell)
        assert np.allclose(partial_trace_electron(rho), np.eye(2) / 2)
        assert np.isclose(purity(partial_trace_nuclear(rho)), 0.5)

    def test_random_density_matrix_is_valid(self, rng):
        for rank in (1, 2, 4):
            check_density_matrix(random_density_matrix(rng, rank))


class TestOperators:

    @mark.parametrize('axis', ['x', 'y', 'z'])
    def test_rotation_is_unitary(self, axis):
        assert is_unitary(rotation(axis, 0.3))

    def test_pi_rotation(self):
        assert np.allclose(rotation('x', np.pi), -1j * PAULI['x'])
        assert np.allclose(rotation('z', 2 * np.pi), -np.eye(2))

    def test_unknown_axis(self):
        with raises(QsecError):
            rotation('w', 1.0)

    def test_embed_unconditional(self):
        assert np.allclose(embed(PAULI['x'], 'electron'),
                           np.kron(PAULI['x'], np.eye(2)))
        assert np.allclose(embed(PAULI['x'], 'nuclear'),
                           np.kron(np.eye(2), PAULI['x']))

    def test_embed_conditional_acts_in_one_block(self):
        flip = embed(PAULI['x'], 'electron', 'down')
        assert np.allclose(flip @ ket('e0', 'up'), ket('e0', 'up'))
        assert np.allclose(flip @ ket('e0', 'down'), ket('em1', 'down'))
        assert is_unitary(flip)

    def test_embed_rejects_wrong_condition(self):
        with raises(QsecError):
            embed(PAULI['x'], 'electron', 'e0')
        with raises(QsecError):
            embed(PAULI['x'], 'nuclear', 'up')
        with raises(QsecError):
            embed(PAULI['x'], 'photon')

    def test_spin_operators_are_hermitian(self):
        for operator in spin_operators().values():
            assert is_hermitian(operator)


class TestDensityMatrixCheck:

    def test_accepts_identity(self):
        check_density_matrix(I4 / 4)

    @mark.parametrize('matrix', [
        np.diag([1, 1, 0, 0]),
        np.diag([1.5, -0.5, 0, 0]),
        np.array([[0.5, 0.5, 0, 0], [0, 0.5, 0, 0],
                  [0, 0, 0, 0], [0, 0, 0, 0]]),
    ])
    def test_rejects_invalid(self, matrix):
        with raises(QsecError):
            check_density_matrix(matrix)


class TestMatrixText:

    def test_parse_formatted(self, rng):
        rho = random_density_matrix(rng)
        assert np.array_equal(parse_matrix(format_matrix(rho)), rho)

    def test_skips_comments_and_blank_lines(self):
        matrix = parse_matrix('''
                              # identity
                              1,0 0,0

                              0,0 1,0
                              ''')
        assert np.array_equal(matrix, np.eye(2))

    def test_rejects_wrong_entry(self):
        with raises(QsecError):
            parse_matrix('1,0 0\n0,0 1,0')

    def test_rejects_non_square(self):
        with raises(QsecError):
            parse_matrix('1,0 0,0\n0,0')
