'''
Builders to create experiment inputs from text in different ways.

Three formats are supported (JSON config, curve table and matrix).
For each format, you can build from a stream, a file or a string.


JSON config
-----------

An object whose keys are the ExperimentConfig fields; nested sections
(hamiltonian, dephasing, reset, readout, cpmg) are objects too. Every key is
optional and missing keys take their defaults:

    {
        "protocol": "qsec_rabi",
        "hamiltonian": {"A": 50e3, "delta_nv": -25e3, "delta_c13": -25e3},
        "dephasing": {"T": 40e-6, "clock_mode": "per_reset"},
        "gate_fidelity": 0.8,
        "n_ec": 2,
        "times": [0, 1e-6, 2e-6],
        "seed": 7
    }


Curve table
-----------

Tab separated columns with a commented header. Header values are JSON:

    # name: "n_ec_2"
    # config_hash: "3f1d..."
    # seed: 7
    x	y_exact	y	y_err
    0	0.98	0.975	0.0049
    ...


Matrix
------

One matrix row per line, entries `re,im` separated by blanks, in the
basis order of `qsecsim.hilbert`. Lines starting with # are skipped. The
`qsec state` command reads and writes register states in this format.

'''

import json

import numpy as np

from qsecsim.error import QsecError, ConfigError
from qsecsim.hilbert import parse_matrix
from qsecsim.experiments import ExperimentConfig, CurveData


CURVE_COLUMNS = ('x', 'y_exact', 'y', 'y_err')


def override(data, key, value):
    '''Set a dotted key ('dephasing.T') in a nested config dict.'''
    parts = key.split('.')
    target = data
    for part in parts[:-1]:
        section = target.setdefault(part, {})
        if not isinstance(section, dict):
            raise ConfigError(key, '%s is not a section' % part)
        target = section
    target[parts[-1]] = value
    return data


def parse_assignment(text):
    '''"key=value" with a JSON value; bare words are taken as strings.'''
    if '=' not in text:
        raise ConfigError(text, 'expected key=value')
    key, value = text.split('=', 1)
    try:
        return key.strip(), json.loads(value)
    except ValueError:
        return key.strip(), value.strip()


class ConfigStreamBuilder(object):
    '''A builder that constructs an ExperimentConfig from a JSON stream.'''
    def __init__(self, stream, overrides=None):
        self.stream = stream
        self.overrides = overrides or {}
        self.format_ = 'json'
        self.input_type = 'stream'

    def load(self):
        text = ''.join(line if line.endswith('\n') else line + '\n'
                       for line in self.stream)
        if not text.strip():
            return {}
        try:
            data = json.loads(text)
        except ValueError as e:
            raise ConfigError('config', 'invalid JSON (%s)' % e)
        if not isinstance(data, dict):
            raise ConfigError('config', 'expected an object')
        return data

    def build(self):
        data = self.load()
        for key, value in self.overrides.items():
            override(data, key, value)
        return ExperimentConfig.from_dict(data)


class ConfigFileBuilder(ConfigStreamBuilder):
    '''A builder that constructs an ExperimentConfig from a JSON file.'''
    def __init__(self, file_name, overrides=None):
        self.file_name = file_name
        self.overrides = overrides or {}
        self.format_ = 'json'
        self.input_type = 'file'

    def build(self):
        with open(self.file_name) as f:
            self.stream = f
            return super(ConfigFileBuilder, self).build()


class ConfigStringBuilder(ConfigStreamBuilder):
    '''A builder that constructs an ExperimentConfig from a JSON string.'''
    def __init__(self, string_, overrides=None):
        self.string_ = string_
        self.overrides = overrides or {}
        self.format_ = 'json'
        self.input_type = 'string'

    def build(self):
        self.stream = self.string_.splitlines()
        return super(ConfigStringBuilder, self).build()


class CurveStreamBuilder(object):
    '''A builder that constructs a CurveData from a curve table stream.'''
    def __init__(self, stream):
        self.stream = stream
        self.format_ = 'curve'
        self.input_type = 'stream'

    def build(self):
        metadata, columns, rows, line_number = {}, None, [], 0
        for line in self.stream:
            line_number += 1
            line = line.strip()
            if not line:
                continue
            if line.startswith('#'):
                key, _, value = line[1:].partition(':')
                if not _:
                    continue
                try:
                    metadata[key.strip()] = json.loads(value)
                except ValueError:
                    metadata[key.strip()] = value.strip()
                continue
            items = line.split('\t')
            if columns is None:
                columns = [item.strip() for item in items]
                missing = [name for name in ('x', 'y') if name not in columns]
                if missing:
                    raise QsecError('Missing column %s at line %s.'
                                    % (', '.join(missing), line_number))
                continue
            if len(items) != len(columns):
                raise QsecError('Wrong number of items at line %s.'
                                % line_number)
            try:
                rows.append([float(item) for item in items])
            except ValueError:
                raise QsecError('Wrong format at line %s.' % line_number)
        if not rows:
            raise QsecError('Curve table has no data rows.')

        table = dict(zip(columns, np.array(rows).T))
        y = table['y']
        return CurveData(str(metadata.pop('name', 'curve')), table['x'],
                         table.get('y_exact', y), y,
                         table.get('y_err', np.zeros_like(y)), metadata)


class CurveFileBuilder(CurveStreamBuilder):
    '''A builder that constructs a CurveData from a curve table file.'''
    def __init__(self, file_name):
        self.file_name = file_name
        self.format_ = 'curve'
        self.input_type = 'file'

    def build(self):
        with open(self.file_name) as f:
            self.stream = f
            curve = super(CurveFileBuilder, self).build()
        curve.metadata.setdefault('source', self.file_name)
        return curve


class CurveStringBuilder(CurveStreamBuilder):
    '''A builder that constructs a CurveData from a curve table string.'''
    def __init__(self, string_):
        self.string_ = string_
        self.format_ = 'curve'
        self.input_type = 'string'

    def build(self):
        self.stream = self.string_.splitlines()
        return super(CurveStringBuilder, self).build()


class MatrixStreamBuilder(object):
    '''A builder that constructs a complex matrix from a matrix stream.'''
    def __init__(self, stream):
        self.stream = stream
        self.format_ = 'matrix'
        self.input_type = 'stream'

    def build(self):
        return parse_matrix('\n'.join(line.rstrip('\n')
                                      for line in self.stream))


class MatrixFileBuilder(MatrixStreamBuilder):
    '''A builder that constructs a complex matrix from a matrix file.'''
    def __init__(self, file_name):
        self.file_name = file_name
        self.format_ = 'matrix'
        self.input_type = 'file'

    def build(self):
        with open(self.file_name) as f:
            self.stream = f
            return super(MatrixFileBuilder, self).build()


class MatrixStringBuilder(MatrixStreamBuilder):
    '''A builder that constructs a complex matrix from a matrix string.'''
    def __init__(self, string_):
        self.string_ = string_
        self.format_ = 'matrix'
        self.input_type = 'string'

    def build(self):
        self.stream = self.string_.splitlines()
        return super(MatrixStringBuilder, self).build()


builders = {
    ('json', 'stream'): ConfigStreamBuilder,
    ('json', 'file'): ConfigFileBuilder,
    ('json', 'string'): ConfigStringBuilder,
    ('curve', 'stream'): CurveStreamBuilder,
    ('curve', 'file'): CurveFileBuilder,
    ('curve', 'string'): CurveStringBuilder,
    ('matrix', 'stream'): MatrixStreamBuilder,
    ('matrix', 'file'): MatrixFileBuilder,
    ('matrix', 'string'): MatrixStringBuilder,
}
'''A map from (format, input_type) to builder.'''
