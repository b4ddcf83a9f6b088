'''
Curve fits, Bayesian posteriors of the decay rate, and sensitivity.

Models
------

    single   A exp(-gamma x) cos(omega x + phi) + c
    double   A1 exp(-gamma1 x) cos(omega1 x + phi1)
             + A2 exp(-gamma2 x) cos(omega2 x + phi2) + c

omega is angular (rad per unit of x). Internally x is rescaled to [0, 1]
so that all fitted parameters are of order one.

'''

import math
import warnings
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field

import numpy as np
from scipy import optimize, signal, stats
from scipy.integrate import trapezoid

from qsecsim.error import QsecError, FitError


MODELS = {
    'single': ('A', 'gamma', 'omega', 'phi', 'c'),
    'double': ('A1', 'gamma1', 'omega1', 'phi1',
               'A2', 'gamma2', 'omega2', 'phi2', 'c'),
}

CREDIBLE_LEVEL = 0.95
ACCEPTANCE_RANGE = (0.1, 0.6)
R_HAT_LIMIT = 1.1


def _component(x, amplitude, gamma, omega, phi):
    return amplitude * np.exp(-gamma * x) * np.cos(omega * x + phi)


@dataclass(frozen=True)
class FitModel(object):
    kind: str = 'single'

    def __post_init__(self):
        if self.kind not in MODELS:
            raise QsecError('Unknown fit model: %s' % self.kind)

    @property
    def names(self):
        return MODELS[self.kind]

    def __call__(self, x, params):
        '''Evaluate at x with a parameter vector in `names` order.'''
        x = np.asarray(x, dtype=float)
        p = np.asarray(params, dtype=float)
        if self.kind == 'single':
            return _component(x, *p[:4]) + p[4]
        return _component(x, *p[:4]) + _component(x, *p[4:8]) + p[8]

    def scales(self, x_scale):
        '''Factor from rescaled to physical units, per parameter.'''
        factors = {'gamma': 1 / x_scale, 'omega': 1 / x_scale}
        return np.array([factors.get(name.rstrip('12'), 1.0)
                         for name in self.names])


@dataclass(frozen=True)
class Envelope(object):
    '''Exponential contrast envelope C(t) = contrast exp(-gamma t).'''
    contrast: float
    gamma: float

    def __call__(self, t):
        return self.contrast * np.exp(-self.gamma * np.asarray(t, float))

    @property
    def optimal_time(self):
        '''argmin of exp(gamma t) / sqrt(t).'''
        return 1 / (2 * self.gamma) if self.gamma > 0 else math.inf


@dataclass
class FitResult(object):
    '''Least squares estimate.

    Attrs:
        model          FitModel.
        params         Name to physical value.
        errors         Name to standard error (nan when undetermined).
        covariance     Physical-unit covariance, `model.names` order.
        residual_norm  Euclidean norm of the (weighted) residuals.
        unidentified   Names the data cannot determine.
    '''
    model: FitModel
    params: dict
    errors: dict
    covariance: np.ndarray
    residual_norm: float
    n_points: int
    unidentified: tuple = ()

    @property
    def vector(self):
        return np.array([self.params[name] for name in self.model.names])

    def __call__(self, x):
        return self.model(x, self.vector)

    def envelope(self):
        '''Envelope of the single component, or of the stronger one.'''
        p = self.params
        if self.model.kind == 'single':
            gamma = p['gamma'] if np.isfinite(p['gamma']) else 0.0
            return Envelope(abs(p['A']), gamma)
        strong = '1' if abs(p['A1']) >= abs(p['A2']) else '2'
        return Envelope(abs(p['A' + strong]), p['gamma' + strong])


def _uniform(x, y):
    steps = np.diff(x)
    if np.allclose(steps, steps[0], rtol=1e-6, atol=0):
        return x, y
    grid = np.linspace(x[0], x[-1], len(x))
    return grid, np.interp(grid, x, y)


def spectrum(x, y, padding=8):
    '''Zero padded one-sided amplitude spectrum of the mean-free data.

    Returns (frequencies in cycles per unit of x, complex amplitudes). A
    non-uniform grid is resampled linearly first.
    '''
    x = np.asarray(x, dtype=float)
    y = np.asarray(y, dtype=float)
    if len(x) < 3:
        raise QsecError('Need at least 3 points for a spectrum')
    x, y = _uniform(x, y)
    size = padding * len(x)
    amplitudes = np.fft.rfft(y - y.mean(), n=size)
    return np.fft.rfftfreq(size, d=x[1] - x[0]), amplitudes


def spectral_peaks(x, y, count=1, padding=8):
    '''Frequencies (cycles per unit of x) and phases of the strongest peaks,
    strongest first. The phase refers to x = 0.'''
    frequencies, amplitudes = spectrum(x, y, padding)
    power = np.abs(amplitudes)
    peaks, _ = signal.find_peaks(power)
    if peaks.size == 0:
        peaks = np.array([int(np.argmax(power))])
    peaks = peaks[np.argsort(power[peaks])[::-1]][:count]
    x0 = float(np.asarray(x, dtype=float)[0])
    result = []
    for index in peaks:
        f = frequencies[index]
        result.append((f, float(np.angle(amplitudes[index]) -
                                2 * np.pi * f * x0)))
    while len(result) < count:
        f, phi = result[-1]
        result.append((f + frequencies[1] * padding, phi))
    return result


def line_power(x, y, frequency):
    '''Share of the variance of y in the spectral line nearest `frequency`.

    Uses the unpadded spectrum, so a line that completes a whole number of
    periods on the grid falls in a single bin.
    '''
    frequencies, amplitudes = spectrum(x, y, padding=1)
    total = float(np.sum(np.abs(amplitudes[1:]) ** 2))
    size = len(x)
    # one-sided: interior bins stand for two
    if size % 2 == 0:
        total = 2 * total - float(np.abs(amplitudes[-1]) ** 2)
    else:
        total = 2 * total
    if total == 0:
        return 0.0
    index = int(np.argmin(np.abs(frequencies - frequency)))
    nyquist = size % 2 == 0 and index == size // 2
    weight = 1 if index == 0 or nyquist else 2
    return weight * float(np.abs(amplitudes[index]) ** 2) / total


def _seeds(model, u, y):
    '''Starting points in rescaled units.'''
    offset = float(np.mean(y))
    amplitude = float(np.ptp(y)) / 2
    peaks = spectral_peaks(u, y, 1 if model.kind == 'single' else 2)
    starts = []
    for gamma in (0.0, 1.0, 4.0):
        for flip in (0.0, np.pi):
            if model.kind == 'single':
                f, phi = peaks[0]
                starts.append([amplitude, gamma, 2 * np.pi * f, phi + flip,
                               offset])
            else:
                (f1, p1), (f2, p2) = peaks
                starts.append([amplitude / 2, gamma, 2 * np.pi * f1, p1 + flip,
                               amplitude / 2, gamma, 2 * np.pi * f2, p2,
                               offset])
    return starts


def _bounds(model):
    lower = [-np.inf] * len(model.names)
    for index, name in enumerate(model.names):
        if name.startswith(('gamma', 'omega')):
            lower[index] = 0.0
    return lower, [np.inf] * len(model.names)


def _clip_start(start, lower):
    return [max(value, low + 1e-9) if np.isfinite(low) else value
            for value, low in zip(start, lower)]


def _constant_fit(model, x, y, weights):
    names = model.names
    params = {name: 0.0 for name in names}
    params['c'] = float(np.mean(y))
    for name in names:
        if name.startswith(('gamma', 'omega', 'phi')):
            params[name] = math.nan
    residual = float(np.linalg.norm((y - params['c']) * weights))
    size = len(names)
    return FitResult(model, params, {name: math.nan for name in names},
                     np.full((size, size), np.nan), residual, len(x),
                     tuple(name for name in names
                           if name.startswith(('gamma', 'omega', 'phi'))))


def fit_curve(x, y, model='single', y_err=None, init=None, max_nfev=4000):
    '''Least squares fit of a decaying cosine model.

    `init` is an optional parameter dict (physical units) used as the first
    starting point; otherwise the frequency seeds come from the strongest
    spectral peaks. Constant data returns amplitude 0 with gamma, omega and
    phi flagged as unidentified. Raises FitError, carrying the best
    parameters found, when no start converges.
    '''
    model = model if isinstance(model, FitModel) else FitModel(model)
    x = np.asarray(x, dtype=float)
    y = np.asarray(y, dtype=float)
    n_params = len(model.names)
    if len(x) != len(y):
        raise QsecError('x and y differ in length')
    if len(x) < 3 * n_params:
        raise QsecError('%s model needs at least %s points, got %s'
                        % (model.kind, 3 * n_params, len(x)))
    weights = np.ones_like(y)
    if y_err is not None:
        y_err = np.asarray(y_err, dtype=float)
        positive = y_err[y_err > 0]
        floor = positive.min() if positive.size else 1.0
        weights = 1 / np.where(y_err > 0, y_err, floor)

    if np.ptp(y) <= 1e-12 * max(1.0, abs(float(np.mean(y)))):
        return _constant_fit(model, x, y, weights)

    x_scale = float(np.ptp(x)) or 1.0
    u = (x - x[0]) / x_scale
    to_physical = model.scales(x_scale)
    shift = x[0]

    def residuals(p):
        return (model(u, p) - y) * weights

    starts = _seeds(model, u, y)
    if init is not None:
        start = _from_physical(model, init, to_physical, shift)
        starts.insert(0, start)
    lower, upper = _bounds(model)

    best, converged = None, None
    for start in starts:
        result = optimize.least_squares(
            residuals, _clip_start(start, lower), bounds=(lower, upper),
            method='trf', x_scale='jac', ftol=1e-14, xtol=1e-14, gtol=1e-14,
            max_nfev=max_nfev)
        if best is None or result.cost < best.cost:
            best = result
        if result.status > 0 and (converged is None or
                                  result.cost < converged.cost):
            converged = result

    if converged is None:
        raise FitError('%s fit did not converge after %s evaluations'
                       % (model.kind, max_nfev),
                       best=_to_physical(model, best.x, to_physical, shift))

    params = _to_physical(model, converged.x, to_physical, shift)
    dof = max(len(x) - n_params, 1)
    variance = 1.0 if y_err is not None else 2 * converged.cost / dof
    jacobian = converged.jac
    covariance = np.linalg.pinv(jacobian.T @ jacobian) * variance
    covariance = covariance * np.outer(to_physical, to_physical)
    errors = {name: float(np.sqrt(max(covariance[i, i], 0.0)))
              for i, name in enumerate(model.names)}
    return FitResult(model, params, errors, covariance,
                     float(np.linalg.norm(converged.fun)), len(x))


def fit_envelope(x, y, reference, gamma_max=None):
    '''Exponential envelope of y relative to a noise-free reference curve.

    Fits y = c + contrast exp(-gamma x) (reference - mean(reference)): c and
    the contrast by linear least squares for each gamma, gamma by a coarse
    grid over [0, gamma_max] refined with a bounded scalar search. Works for
    curves whose oscillation is not a single cosine, such as Rabi curves
    with error-correction rounds.
    '''
    x = np.asarray(x, dtype=float)
    y = np.asarray(y, dtype=float)
    shape = np.asarray(reference, dtype=float)
    if not len(x) == len(y) == len(shape):
        raise QsecError('x, y and reference differ in length')
    shape = shape - shape.mean()
    if np.ptp(shape) <= 1e-12:
        raise QsecError('Reference curve is constant')
    if gamma_max is None:
        gamma_max = 50 / (float(np.ptp(x)) or 1.0)

    def solve(gamma):
        design = np.column_stack([np.ones_like(x),
                                  np.exp(-gamma * x) * shape])
        coefficients, _, _, _ = np.linalg.lstsq(design, y, rcond=None)
        return coefficients, float(np.sum((design @ coefficients - y) ** 2))

    grid = np.linspace(0.0, gamma_max, 201)
    best = int(np.argmin([solve(gamma)[1] for gamma in grid]))
    low, high = grid[max(best - 1, 0)], grid[min(best + 1, len(grid) - 1)]
    result = optimize.minimize_scalar(lambda gamma: solve(gamma)[1],
                                      bounds=(low, high),
                                      method='bounded',
                                      options={'xatol': gamma_max * 1e-9})
    gamma = float(result.x)
    coefficients, _ = solve(gamma)
    return Envelope(float(coefficients[1]), gamma)


def _to_physical(model, vector, to_physical, shift):
    '''Rescaled vector to a physical parameter dict; x is shifted back to
    the original origin.'''
    values = np.asarray(vector, dtype=float) * to_physical
    params = dict(zip(model.names, values.tolist()))
    for suffix in ('', '1', '2'):
        if 'omega' + suffix in params:
            omega, gamma = params['omega' + suffix], params['gamma' + suffix]
            params['phi' + suffix] = _wrap(params['phi' + suffix] -
                                           omega * shift)
            params['A' + suffix] *= math.exp(gamma * shift)
    return params


def _from_physical(model, params, to_physical, shift):
    values = dict(params)
    for suffix in ('', '1', '2'):
        if 'omega' + suffix in values:
            omega, gamma = values['omega' + suffix], values['gamma' + suffix]
            values['phi' + suffix] += omega * shift
            values['A' + suffix] *= math.exp(-gamma * shift)
    return [values[name] / scale
            for name, scale in zip(model.names, to_physical)]


def _wrap(angle):
    return (angle + np.pi) % (2 * np.pi) - np.pi


# Posterior -----------------------------------------------------------------

@dataclass
class Posterior(object):
    '''Marginal posterior of gamma.

    Attrs:
        samples     Pooled post burn-in samples.
        chains      Samples per chain, shape (chains, n).
        estimate    Posterior mode.
        interval    Central credible interval at `level`.
        grid, pdf   Density on a grid, integrating to one.
        acceptance  Post burn-in acceptance rate per chain.
        r_hat       Gelman-Rubin statistic of gamma.
    '''
    samples: np.ndarray
    chains: np.ndarray
    estimate: float
    interval: tuple
    grid: np.ndarray
    pdf: np.ndarray
    acceptance: list
    r_hat: float
    burn_in: int
    level: float = CREDIBLE_LEVEL
    name: str = 'gamma'
    metadata: dict = field(default_factory=dict)

    @property
    def mean(self):
        return float(np.mean(self.samples))

    @property
    def std(self):
        return float(np.std(self.samples))


def gelman_rubin(chains):
    '''Potential scale reduction factor of an (m, n) array of chains.'''
    chains = np.asarray(chains, dtype=float)
    if chains.ndim != 2 or chains.shape[0] < 2 or chains.shape[1] < 2:
        raise QsecError('Gelman-Rubin needs at least 2 chains of 2 samples')
    n = chains.shape[1]
    within = chains.var(axis=1, ddof=1).mean()
    between = n * chains.mean(axis=1).var(ddof=1)
    if within == 0:
        return 1.0 if between == 0 else math.inf
    pooled = (n - 1) / n * within + between / n
    return float(np.sqrt(pooled / within))


def _log_posterior(theta, model, u, y, weights, bounds):
    lower, upper = bounds
    if np.any(theta < lower) or np.any(theta > upper):
        return -np.inf
    residual = (model(u, theta) - y) * weights
    return -0.5 * float(residual @ residual)


def _run_chain(job):
    (model, u, y, weights, bounds, start, covariance, burn_in, n_samples,
     seed, index) = job
    rng = np.random.default_rng([seed, index])
    dimension = len(start)
    scale = 2.38 ** 2 / dimension
    try:
        factor = np.linalg.cholesky(covariance)
    except np.linalg.LinAlgError:
        factor = np.diag(np.sqrt(np.abs(np.diag(covariance))))
    # chains start one proposal width apart
    current = np.array(start, dtype=float) + factor @ \
        rng.standard_normal(dimension)
    current_log = _log_posterior(current, model, u, y, weights, bounds)
    if not np.isfinite(current_log):
        current = np.array(start, dtype=float)
        current_log = _log_posterior(current, model, u, y, weights, bounds)
    samples = np.empty((n_samples, dimension))
    accepted, window = 0, 0

    for step in range(burn_in + n_samples):
        proposal = current + math.sqrt(scale) * factor @ \
            rng.standard_normal(dimension)
        proposal_log = _log_posterior(proposal, model, u, y, weights, bounds)
        if math.log(rng.random()) < proposal_log - current_log:
            current, current_log = proposal, proposal_log
            if step < burn_in:
                window += 1
            else:
                accepted += 1
        if step < burn_in and (step + 1) % 100 == 0:
            # aim for an acceptance near 0.3
            scale *= math.exp(window / 100 - 0.3)
            window = 0
        if step >= burn_in:
            samples[step - burn_in] = current
    return samples, accepted / n_samples


def posterior_gamma(x, y, y_err, model='single', gamma_max=None,
                    n_samples=20000, burn_in=5000, chains=2, seed=0,
                    workers=1, fit=None):
    '''Random-walk Metropolis posterior of the decay rate.

    Gaussian likelihood with the given y_err, flat priors, gamma uniform on
    [0, gamma_max]. The proposal covariance comes from the least squares
    fit; its global scale adapts during burn-in. Warns when the acceptance
    leaves [0.1, 0.6] or when the chains disagree (R-hat above 1.1).
    '''
    model = model if isinstance(model, FitModel) else FitModel(model)
    x = np.asarray(x, dtype=float)
    y = np.asarray(y, dtype=float)
    y_err = np.asarray(y_err, dtype=float)
    if (y_err <= 0).any():
        raise QsecError('Posterior needs positive y_err')
    if chains < 2:
        raise QsecError('At least 2 chains are needed')
    fit = fit or fit_curve(x, y, model, y_err)
    if fit.unidentified:
        raise QsecError('gamma is not identified by the data')

    x_scale = float(np.ptp(x)) or 1.0
    u = (x - x[0]) / x_scale
    to_physical = model.scales(x_scale)
    start = np.array(_from_physical(model, fit.params, to_physical, x[0]))
    covariance = fit.covariance / np.outer(to_physical, to_physical)
    covariance = 0.5 * (covariance + covariance.T)
    covariance += np.eye(len(start)) * 1e-12 * max(np.abs(np.diag(
        covariance)).max(), 1e-30)

    gamma_index = [i for i, name in enumerate(model.names)
                   if name.startswith('gamma')]
    if gamma_max is None:
        gamma_max = max(10 * max(fit.params[model.names[i]]
                                 for i in gamma_index), 10 / x_scale)
    lower, upper = _bounds(model)
    lower, upper = np.array(lower), np.array(upper)
    upper[gamma_index] = gamma_max * x_scale

    jobs = [(model, u, y, 1 / y_err, (lower, upper), start, covariance,
             burn_in, n_samples, seed, index) for index in range(chains)]
    if workers > 1:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            results = list(pool.map(_run_chain, jobs))
    else:
        results = [_run_chain(job) for job in jobs]

    tracked = gamma_index[0]
    if model.kind == 'double':
        tracked = gamma_index[0 if abs(fit.params['A1']) >=
                              abs(fit.params['A2']) else 1]
    per_chain = np.array([samples[:, tracked] for samples, _ in results])
    per_chain = per_chain * to_physical[tracked]
    acceptance = [rate for _, rate in results]
    for index, rate in enumerate(acceptance):
        if not ACCEPTANCE_RANGE[0] <= rate <= ACCEPTANCE_RANGE[1]:
            warnings.warn('Chain %s acceptance %.3f outside [%s, %s]; '
                          'adjust n_samples or burn_in'
                          % (index, rate, ACCEPTANCE_RANGE[0],
                             ACCEPTANCE_RANGE[1]))
    r_hat = gelman_rubin(per_chain)
    if r_hat > R_HAT_LIMIT:
        warnings.warn('Chains have not converged: R-hat %.3f' % r_hat)

    pooled = per_chain.ravel()
    tail = (1 - CREDIBLE_LEVEL) / 2 * 100
    interval = tuple(float(v) for v in np.percentile(pooled,
                                                     [tail, 100 - tail]))
    grid, pdf = density(pooled)
    return Posterior(pooled, per_chain, float(grid[np.argmax(pdf)]),
                     interval, grid, pdf, acceptance, r_hat, burn_in)


def density(samples, points=200):
    '''Kernel density estimate on a grid, normalized to unit integral.

    Falls back to a histogram when the samples are degenerate for a KDE.
    '''
    samples = np.asarray(samples, dtype=float)
    low, high = samples.min(), samples.max()
    if high <= low:
        width = max(abs(low) * 1e-9, 1e-300)
        grid = np.linspace(low - width, high + width, points)
        pdf = np.zeros(points)
        pdf[points // 2] = 1
        return grid, pdf / trapezoid(pdf, grid)
    pad = 0.1 * (high - low)
    grid = np.linspace(low - pad, high + pad, points)
    try:
        pdf = stats.gaussian_kde(samples)(grid)
    except np.linalg.LinAlgError:
        counts, edges = np.histogram(samples, bins=points // 4)
        pdf = np.interp(grid, 0.5 * (edges[1:] + edges[:-1]), counts,
                        left=0, right=0).astype(float)
    return grid, pdf / trapezoid(pdf, grid)


# Sensitivity ---------------------------------------------------------------

def shot_noise_sensitivity(contrast, time):
    '''1 / (C sqrt(t)) in arbitrary units; inf without contrast.'''
    if contrast <= 0 or time <= 0:
        return math.inf
    return 1 / (contrast * math.sqrt(time))


@dataclass
class SensitivityCurve(object):
    times: np.ndarray
    values: np.ndarray
    optimal_time: float


def sensitivity_curve(envelope, times):
    '''S(t) = 1 / (C(t) sqrt(t)) for an Envelope or a FitResult.

    The optimum is analytic for a single exponential envelope.
    '''
    if isinstance(envelope, FitResult):
        envelope = envelope.envelope()
    times = np.asarray(times, dtype=float)
    if (times <= 0).any():
        raise QsecError('Sensing times must be positive')
    contrast = envelope(times)
    if (contrast <= 0).any():
        raise QsecError('Contrast vanishes on the time grid')
    values = 1 / (contrast * np.sqrt(times))
    return SensitivityCurve(times, values, envelope.optimal_time)


def sensitivity_crossover(first, second, times):
    '''Earliest time after which `second` beats `first`, or None.

    Both arguments are envelopes (or fits); `times` brackets the search.
    '''
    first = first.envelope() if isinstance(first, FitResult) else first
    second = second.envelope() if isinstance(second, FitResult) else second
    times = np.asarray(times, dtype=float)

    def gap(t):
        return float(np.log(second(t)) - np.log(first(t)))

    values = np.array([gap(t) for t in times])
    for index in range(len(times) - 1):
        if values[index] <= 0 < values[index + 1]:
            if values[index] == 0:
                return float(times[index])
            return float(optimize.brentq(gap, times[index],
                                         times[index + 1], xtol=1e-15))
    return None
