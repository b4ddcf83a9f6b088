'''
Hilbert-space primitives for the electron (x) nuclear register.

Operators and density matrices are plain 4x4 complex numpy arrays. The basis
ordering is fixed for every matrix in the package:

    index 0    |0>  |up>
    index 1    |0>  |down>
    index 2    |-1> |up>
    index 3    |-1> |down>

Electron labels are 'e0' and 'em1'; nuclear labels are 'up' and 'down'.
The electron superpositions |+> = |0> + i|-1> and |-> = |0> - i|-1> are
addressed by the labels '+' and '-'.

Spin operators follow the sigma/2 convention (eigenvalues +-1/2), so that
S_z = diag(+1/2, +1/2, -1/2, -1/2).


Matrix text format
------------------

One row per line, entries separated by blanks, every entry written as
`re,im`:

    1,0 0,0 0,0 0,0
    0,0 0,0 0,0 0,0
    ...

'''

import numpy as np
from qsecsim.error import QsecError


BASIS = (('e0', 'up'), ('e0', 'down'), ('em1', 'up'), ('em1', 'down'))
'''Basis labels in matrix order.'''

ELECTRON_STATES = ('e0', 'em1')
NUCLEAR_STATES = ('up', 'down')

SQRT_HALF = 1 / np.sqrt(2)

ELECTRON_KETS = {
    'e0': np.array([1, 0], dtype=complex),
    'em1': np.array([0, 1], dtype=complex),
    '+': np.array([1, 1j], dtype=complex) * SQRT_HALF,
    '-': np.array([1, -1j], dtype=complex) * SQRT_HALF,
}

NUCLEAR_KETS = {
    'up': np.array([1, 0], dtype=complex),
    'down': np.array([0, 1], dtype=complex),
}

PAULI = {
    'x': np.array([[0, 1], [1, 0]], dtype=complex),
    'y': np.array([[0, -1j], [1j, 0]], dtype=complex),
    'z': np.array([[1, 0], [0, -1]], dtype=complex),
}

I2 = np.eye(2, dtype=complex)
I4 = np.eye(4, dtype=complex)


def tensor(electron, nuclear):
    '''Kronecker product electron (x) nuclear.'''
    return np.kron(electron, nuclear)


def spin_operators():
    '''Return S_x, S_y, S_z (electron) and I_x, I_y, I_z (nuclear).'''
    operators = {}
    for axis, sigma in PAULI.items():
        operators['S' + axis] = tensor(sigma / 2, I2)
        operators['I' + axis] = tensor(I2, sigma / 2)
    return operators


def ket(electron, nuclear):
    '''Product 4-vector from an electron and a nuclear label.'''
    try:
        return tensor(ELECTRON_KETS[electron], NUCLEAR_KETS[nuclear])
    except KeyError:
        raise QsecError('Unknown basis label: (%s, %s)' % (electron, nuclear))


def normalized(amplitudes):
    vector = np.asarray(amplitudes, dtype=complex).ravel()
    if vector.size != 4:
        raise QsecError('Expected 4 amplitudes, got %s' % vector.size)
    norm = np.linalg.norm(vector)
    if norm == 0:
        raise QsecError('Zero state vector')
    return vector / norm


def pure_state(label_or_amplitudes):
    '''Density matrix |psi><psi| for a label pair or a vector of amplitudes.'''
    if (isinstance(label_or_amplitudes, tuple) and
            len(label_or_amplitudes) == 2 and
            isinstance(label_or_amplitudes[0], str)):
        vector = ket(*label_or_amplitudes)
    else:
        vector = normalized(label_or_amplitudes)
    return np.outer(vector, vector.conj())


def fidelity(rho, target):
    '''Overlap <psi|rho|psi> with a pure target state vector.'''
    target = np.asarray(target, dtype=complex).ravel()
    return float(np.real(np.vdot(target, rho @ target)))


def partial_trace_electron(rho):
    '''Reduced 2x2 nuclear density matrix.'''
    return np.einsum('ajak->jk', np.asarray(rho).reshape(2, 2, 2, 2))


def partial_trace_nuclear(rho):
    '''Reduced 2x2 electron density matrix.'''
    return np.einsum('jaka->jk', np.asarray(rho).reshape(2, 2, 2, 2))


def purity(rho):
    return float(np.real(np.trace(rho @ rho)))


def rotation(axis, angle):
    '''Single-qubit rotation exp(-i angle sigma_axis / 2).'''
    try:
        sigma = PAULI[axis]
    except KeyError:
        raise QsecError('Unknown rotation axis: %s' % axis)
    return np.cos(angle / 2) * I2 - 1j * np.sin(angle / 2) * sigma


def projector(label):
    '''2x2 projector on an electron or nuclear basis label.'''
    vector = ELECTRON_KETS.get(label)
    if vector is None:
        vector = NUCLEAR_KETS.get(label)
    if vector is None:
        raise QsecError('Unknown basis label: %s' % label)
    return np.outer(vector, vector.conj())


def embed(operator, target, conditional_on=None):
    '''Lift a 2x2 operator on `target` to the register.

    With `conditional_on` set, the operator acts only in the block where the
    other qubit is in that basis state; elsewhere the register is untouched.
    Electron targets condition on 'up'/'down', nuclear targets on 'e0'/'em1'.
    '''
    if target not in ('electron', 'nuclear'):
        raise QsecError('Unknown target: %s' % target)
    if conditional_on is None:
        return (tensor(operator, I2) if target == 'electron'
                else tensor(I2, operator))

    allowed = NUCLEAR_STATES if target == 'electron' else ELECTRON_STATES
    if conditional_on not in allowed:
        raise QsecError('A %s operation cannot be conditioned on %s'
                        % (target, conditional_on))
    inside = projector(conditional_on)
    outside = I2 - inside
    if target == 'electron':
        return tensor(operator, inside) + tensor(I2, outside)
    return tensor(inside, operator) + tensor(outside, I2)


def is_hermitian(matrix, tolerance=1e-12):
    return np.linalg.norm(matrix - matrix.conj().T) <= tolerance


def is_unitary(matrix, tolerance=1e-12):
    dimension = matrix.shape[0]
    return (np.linalg.norm(matrix.conj().T @ matrix - np.eye(dimension))
            <= tolerance)


def check_density_matrix(rho, tolerance=1e-9):
    '''Raise QsecError unless rho is Hermitian, trace one and PSD.'''
    rho = np.asarray(rho)
    if rho.shape[0] != rho.shape[-1]:
        raise QsecError('Density matrix must be square')
    if not is_hermitian(rho, tolerance):
        raise QsecError('Density matrix is not Hermitian')
    if abs(np.trace(rho) - 1) > tolerance:
        raise QsecError('Density matrix trace is %s' % np.trace(rho).real)
    if np.linalg.eigvalsh(rho).min() < -tolerance:
        raise QsecError('Density matrix has a negative eigenvalue')
    return rho


def random_density_matrix(rng, rank=None):
    '''A random valid 4x4 density matrix (Ginibre construction).'''
    rank = rank or 4
    ginibre = (rng.standard_normal((4, rank)) +
               1j * rng.standard_normal((4, rank)))
    rho = ginibre @ ginibre.conj().T
    return rho / np.trace(rho).real


def format_matrix(matrix):
    '''Serialize a matrix to the row-major "re,im" text format.'''
    return '\n'.join(' '.join('%.17g,%.17g' % (entry.real, entry.imag)
                              for entry in row)
                     for row in np.asarray(matrix, dtype=complex))


def parse_matrix(text):
    '''Inverse of format_matrix.'''
    rows = []
    for line_number, line in enumerate(text.splitlines(), 1):
        line = line.strip()
        if not line or line.startswith('#'):
            continue
        row = []
        for item in line.split():
            try:
                re, im = item.split(',')
                row.append(complex(float(re), float(im)))
            except ValueError:
                raise QsecError('Wrong matrix entry at line %s: %s'
                                % (line_number, item))
        rows.append(row)
    if not rows or any(len(row) != len(rows) for row in rows):
        raise QsecError('Matrix text is not square')
    return np.array(rows, dtype=complex)
