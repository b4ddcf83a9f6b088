'''
Non-unitary and stochastic operations on the register: injected errors,
optical reset of the electron, and single-shot readout of the nucleus.

Random draws always go through an explicit numpy Generator.

'''

import math
from dataclasses import dataclass
from typing import Optional

import numpy as np
from scipy import stats

from qsecsim.error import QsecError
from qsecsim.hilbert import (pure_state, partial_trace_electron, projector,
                             embed, tensor, I4)
from qsecsim.dynamics import instant_rotation


DEFAULT_ETA = 0.95 ** (1 / 20)
'''Per-reset nuclear coherence retention: 20 resets keep 95%.'''


@dataclass(frozen=True)
class ResetModel(object):
    eta: float = DEFAULT_ETA

    def __post_init__(self):
        if not 0 < self.eta <= 1:
            raise QsecError('Reset retention eta must be in (0, 1], got %s'
                            % self.eta)


@dataclass(frozen=True)
class PhotonModel(object):
    '''Fluorescence statistics of the single-shot readout.

    Attrs:
        rate_up      Mean counts per repetition, nucleus up.
        rate_down    Mean counts per repetition, nucleus down.
        threshold    Count threshold (counts above it read as up);
                     None picks the optimal threshold.
        repetitions  Accumulated repetitions per shot.
    '''
    rate_up: float = 0.035
    rate_down: float = 0.025
    threshold: Optional[float] = None
    repetitions: int = 10000

    def __post_init__(self):
        if self.rate_up < 0 or self.rate_down < 0:
            raise QsecError('Photon rates must be non-negative')
        if self.rate_up < self.rate_down:
            raise QsecError('Nucleus up must be the brighter state: rate_up '
                            '%s < rate_down %s'
                            % (self.rate_up, self.rate_down))
        if self.repetitions < 1:
            raise QsecError('At least one repetition is needed')

    @property
    def mean_up(self):
        return self.rate_up * self.repetitions

    @property
    def mean_down(self):
        return self.rate_down * self.repetitions


@dataclass(frozen=True)
class ReadoutModel(object):
    fidelity_read: float = 0.98
    fidelity_init: float = 0.99
    photons: Optional[PhotonModel] = None

    def __post_init__(self):
        for name in ('fidelity_read', 'fidelity_init'):
            value = getattr(self, name)
            if not 0 <= value <= 1:
                raise QsecError('%s must be a probability, got %s'
                                % (name, value))

    def reported_up(self, p_up):
        '''Probability of reporting up given the true up population.'''
        f = self.fidelity_read
        return f * p_up + (1 - f) * (1 - p_up)


def phase_error(rho, angle=math.pi):
    '''Electron z-rotation by `angle`; a full phase flip at pi.'''
    return instant_rotation(rho, 'electron', 'z', angle)


def phase_flip(rho):
    '''Exact electron phase flip |+> <-> |->.'''
    return phase_error(rho, math.pi)


def bit_flip(rho, theta):
    '''Electron y-rotation by theta; a full bit flip at pi.'''
    return instant_rotation(rho, 'electron', 'y', theta)


def optical_reset(rho, model=None):
    '''Repump the electron to |0>, keeping the nuclear state.

    Nuclear off-diagonals are multiplied by eta.
    '''
    model = model or ResetModel()
    nuclear = partial_trace_electron(rho).copy()
    nuclear[0, 1] *= model.eta
    nuclear[1, 0] *= model.eta
    return tensor(projector('e0'), nuclear)


def depolarize(rho, strength):
    '''Mix towards the maximally mixed state:
    (1 - p) rho + p tr(rho) I / 4.'''
    if not 0 <= strength <= 1:
        raise QsecError('Depolarizing strength must be in [0, 1]')
    return (1 - strength) * rho + strength * np.trace(rho) * I4 / 4


def nuclear_up_population(rho):
    return float(np.real(partial_trace_electron(rho)[0, 0]))


def initial_state(model=None):
    '''Register after measurement-based initialization into |0 up>.'''
    model = model or ReadoutModel()
    f = model.fidelity_init
    return (f * pure_state(('e0', 'up')) +
            (1 - f) * pure_state(('e0', 'down')))


def readout_nuclear(rho, model, rng):
    '''Single-shot non-demolition readout of the nucleus.

    The true outcome is drawn from the nuclear populations, the reported one
    is flipped with probability 1 - fidelity_read. The returned state is the
    projection on the true outcome.
    '''
    p_up = min(max(nuclear_up_population(rho), 0.0), 1.0)
    true_outcome = 'up' if rng.random() < p_up else 'down'
    keep = embed(projector(true_outcome), 'nuclear')
    post = keep @ rho @ keep
    post = post / np.trace(post).real

    outcome = true_outcome
    if rng.random() >= model.fidelity_read:
        outcome = 'down' if true_outcome == 'up' else 'up'
    return outcome, post


def optimal_threshold(photons):
    '''Count threshold minimizing the two-Poisson misclassification.'''
    low, high = sorted((photons.mean_down, photons.mean_up))
    candidates = np.arange(math.floor(low), math.ceil(high) + 1)
    if candidates.size == 0:
        return low
    errors = [_classification_error(photons, k) for k in candidates]
    return float(candidates[int(np.argmin(errors))])


def _classification_error(photons, threshold):
    up_wrong = stats.poisson.cdf(threshold, photons.mean_up)
    down_wrong = stats.poisson.sf(threshold, photons.mean_down)
    return 0.5 * (up_wrong + down_wrong)


def threshold_fidelity(photons):
    '''Readout fidelity implied by thresholding the two count distributions.'''
    threshold = photons.threshold
    if threshold is None:
        threshold = optimal_threshold(photons)
    return 1 - _classification_error(photons, threshold)


def classify(counts, photons):
    '''Report 'up' (True) for counts above threshold.'''
    threshold = photons.threshold
    if threshold is None:
        threshold = optimal_threshold(photons)
    return np.asarray(counts) > threshold


def ssr_counts(p_up, model, n_shots, rng):
    '''Raw accumulated fluorescence counts and true nuclear states per shot.'''
    photons = model.photons
    if photons is None:
        raise QsecError('Readout model has no photon model')
    if n_shots < 1:
        raise QsecError('At least one shot is needed')
    states = rng.random(n_shots) < p_up
    means = np.where(states, photons.mean_up, photons.mean_down)
    return rng.poisson(means), states


def ssr_histogram(p_up, model, n_shots, rng, bins=None):
    '''Histogram of single-shot fluorescence counts.

    Returns (bin_centers, counts).
    '''
    counts, _ = ssr_counts(p_up, model, n_shots, rng)
    if bins is None:
        bins = np.arange(counts.min(), counts.max() + 2) - 0.5
    histogram, edges = np.histogram(counts, bins=bins)
    return 0.5 * (edges[:-1] + edges[1:]), histogram
