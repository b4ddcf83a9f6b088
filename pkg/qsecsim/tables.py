'''
Delimited text export of curves, fits, posteriors and sensitivities.

All tables are tab separated with `# key: <json>` header lines; curve tables
read back with the curve builders.
'''

import os
import json
import math

import numpy as np

from qsecsim.builders import builders, CURVE_COLUMNS


def _plain(value):
    if isinstance(value, np.generic):
        return value.item()
    if isinstance(value, np.ndarray):
        return value.tolist()
    raise TypeError('Not serializable: %r' % (value,))


def _number(value):
    if value is None:
        return 'nan'
    return '%.17g' % value


def header(metadata):
    return ''.join('# %s: %s\n' % (key, json.dumps(value, default=_plain))
                   for key, value in metadata.items())


def table(columns, rows):
    lines = ['\t'.join(columns)]
    for row in rows:
        lines.append('\t'.join(item if isinstance(item, str) else
                               _number(item) for item in row))
    return '\n'.join(lines) + '\n'


def format_curve(curve):
    metadata = dict(name=curve.name)
    metadata.update(curve.metadata)
    rows = zip(curve.x, curve.y_exact, curve.y, curve.y_err)
    return header(metadata) + table(CURVE_COLUMNS, rows)


def format_fit(fit, metadata=None):
    info = dict(metadata or {})
    info.update(model=fit.model.kind, residual_norm=fit.residual_norm,
                n_points=fit.n_points, unidentified=list(fit.unidentified))
    rows = [(name, fit.params[name], fit.errors[name])
            for name in fit.model.names]
    return header(info) + table(('parameter', 'value', 'error'), rows)


def format_posterior(posterior, metadata=None):
    info = dict(metadata or {})
    info.update(parameter=posterior.name, estimate=posterior.estimate,
                mean=posterior.mean, std=posterior.std,
                level=posterior.level, interval=list(posterior.interval),
                acceptance=posterior.acceptance, r_hat=posterior.r_hat,
                burn_in=posterior.burn_in,
                samples_per_chain=posterior.chains.shape[1])
    rows = zip(posterior.grid, posterior.pdf)
    return header(info) + table((posterior.name, 'pdf'), rows)


def format_histogram(centers, counts, metadata=None):
    return header(metadata or {}) + table(('counts', 'shots'),
                                          zip(centers, counts))


def format_sensitivity_points(points, metadata=None):
    columns = ('n_ec', 'theta', 'delay', 'contrast', 'sampled_contrast',
               'sensing_time', 'sensitivity', 'curve')
    rows = [(p.n_ec, p.theta, p.delay, p.contrast, p.sampled_contrast,
             p.sensing_time, p.sensitivity, p.curve) for p in points]
    return header(metadata or {}) + table(columns, rows)


def format_sensitivity_curve(curve, metadata=None):
    info = dict(metadata or {})
    info.update(optimal_time=(curve.optimal_time
                              if math.isfinite(curve.optimal_time) else None))
    return header(info) + table(('time', 'sensitivity'),
                                zip(curve.times, curve.values))


def write(text, directory, file_name):
    if not os.path.isdir(directory):
        os.makedirs(directory)
    path = os.path.join(directory, file_name)
    with open(path, 'w') as f:
        f.write(text)
    return path


def write_curve(curve, directory):
    return write(format_curve(curve), directory, curve.name + '.tsv')


def read_curve(file_name):
    return builders[('curve', 'file')](file_name).build()
