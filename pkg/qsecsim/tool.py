'''
qsec: quantum sensing with repetitive error correction, simulated.

Usage:
    qsec qsec-rabi [options] [--set=<kv>]...
    qsec single-error [options] [--set=<kv>]...
    qsec bitflip-cpmg [options] [--set=<kv>]...
    qsec reset-coherence [options] [--resets=<k>] [--set=<kv>]...
    qsec no-noise-sim [options] [--set=<kv>]...
    qsec ssr-histogram [options] [--p-up=<p>] [--set=<kv>]...
    qsec fit [options] [--model=<kind>] [--exact] <curve>...
    qsec posterior [options] [--model=<kind>] [--samples=<n>] <curve>...
    qsec sensitivity [options] [--model=<kind>] [--exact] <curve>...
    qsec validate [options] [--set=<kv>]...
    qsec state [options] <matrix>...
    qsec help

Options:
    -c <file> --config=<file>   JSON experiment config. Built-in defaults
                                are used for missing keys or without a file.
    -s <seed> --seed=<seed>     Random seed (overrides the config).
    -o <dir> --out=<dir>        Output directory. Defaults to $QSEC_OUT,
                                or ./qsec-out when that is not set.
    -w <n> --workers=<n>        Worker processes. Defaults to the number
                                of cores.
    -n <n> --n-ec=<n>           Error-correction rounds (0, 1 or 2).
    --shots=<n>                 Shots per grid point.
    --times=<grid>              Sensing times as start:stop:count (s).
    --resets=<k>                Reset counts: 0 .. k, or start:stop:step.
    --set=<kv>                  Override any config field, dotted for
                                sections: --set dephasing.T=30e-6
    --model=<kind>              Fit model, single or double.
                                [default: single]
    --exact                     Use the exact instead of the sampled column.
    --samples=<n>               Posterior samples per chain. [default: 20000]
    --p-up=<p>                  Nuclear up population to histogram.
                                [default: 0.5]
    --rounds=<k>                Error-correction rounds applied to a state.
                                [default: 1]
    --code=<code>               Code of those rounds, phase or bit.
                                [default: phase]
    --eta=<eta>                 Nuclear retention of each optical reset.
                                [default: 1]
    -q --quiet                  Only report errors.

    -h --help     Show this help.
    -v --version  Show version.

Commands:
    qsec-rabi        Rabi curves with 0 .. n_ec error-correction rounds.
    single-error     One phase flip, corrected versus uncorrected.
    bitflip-cpmg     Bit-flip errors during CPMG sensing, with sensitivities.
    reset-coherence  Nuclear coherence versus number of optical resets.
    no-noise-sim     Noise-free curves without and with two rounds.
    ssr-histogram    Single-shot readout photon count histogram.
    fit              Fit decaying cosine models to curve tables.
    posterior        Bayesian posterior of the decay rate of curve tables.
    sensitivity      Magnetic sensitivity versus sensing time from a fit.
    validate         Check a config and print it with all defaults.
    state            Run a register density matrix ("re,im" text, - for
                     stdin) through error-correction rounds.
    help             Show this help.

Exit status is 0 on success, 1 for invalid input and 2 for internal errors.
'''

import os
import sys
import json
import time
import traceback
from dataclasses import dataclass, field, asdict, replace

import numpy as np
from docopt import docopt, DocoptExit

from version import version
from qsecsim.error import QsecError
from qsecsim.builders import builders, parse_assignment
from qsecsim.hilbert import check_density_matrix, format_matrix, purity
from qsecsim.channels import PhotonModel, ResetModel, ssr_histogram, \
    optimal_threshold, threshold_fidelity, nuclear_up_population
from qsecsim.sequences import ec_round
from qsecsim.experiments import RUNNERS, BitflipSweep, config_hash
from qsecsim.estimation import fit_curve, posterior_gamma, sensitivity_curve
from qsecsim import tables


EXPERIMENTS = {
    'qsec-rabi': 'qsec_rabi',
    'single-error': 'single_phase_error',
    'bitflip-cpmg': 'bitflip_cpmg',
    'reset-coherence': 'reset_coherence',
    'no-noise-sim': 'no_noise_sim',
}


@dataclass
class RunManifest(object):
    '''Everything needed to reproduce a run.'''
    command: str
    config_path: str
    config: dict
    config_hash: str
    seed: int
    version: str
    outputs: list = field(default_factory=list)
    duration: float = 0.0

    def write(self, directory):
        stem = self.command.replace('-', '_')
        return tables.write(json.dumps(asdict(self), indent=2) + '\n',
                            directory, stem + '.manifest.json')


class Task(object):
    def __init__(self, args, builder):
        self.args = args
        self.builder = builder
        self.silent = args['--quiet']
        self.out = args['--out'] or os.environ.get('QSEC_OUT', 'qsec-out')

    def prepare(self):
        '''Do things that must be done just once per input.'''
        self.input = self.builder.build()
        if self.builder.input_type == 'file':
            self.log('-- %s' % self.builder.file_name)

    def log(self, message):
        if not self.silent:
            print(message)

    def run(self):
        '''To be redefined by subclasses.'''
        pass


class ExperimentTask(Task):
    def __init__(self, args, builder, command):
        super(ExperimentTask, self).__init__(args, builder)
        self.command = command

    def prepare(self):
        super(ExperimentTask, self).prepare()
        self.config = self.input

    def run(self):
        started = time.time()
        config = self.config
        self.log('-- %s, seed %s, config %s'
                 % (config.protocol, config.seed, config_hash(config)[:12]))
        result = RUNNERS[config.protocol](config)

        outputs = []
        curves = result.curves if isinstance(result, BitflipSweep) else result
        for curve in curves.values():
            outputs.append(tables.write_curve(curve, self.out))
            self.log('%-40s %s points' % (curve.name, len(curve.x)))
        if isinstance(result, BitflipSweep):
            outputs.append(tables.write(
                tables.format_sensitivity_points(
                    result.points, {'config_hash': config_hash(config)}),
                self.out, 'sensitivity.tsv'))
            for point in result.points:
                self.log('n_ec %s  theta %-8s delay %-8s contrast %.4f  '
                         'sensitivity %.4g'
                         % (point.n_ec, _optional(point.theta),
                            _optional(point.delay), point.contrast,
                            point.sensitivity))

        outputs.append(tables.write(json.dumps(config.to_dict(), indent=2),
                                    self.out, 'config.json'))
        manifest = RunManifest(self.command, self.args['--config'],
                               config.to_dict(), config_hash(config),
                               config.seed, version, outputs,
                               time.time() - started)
        self.log('Manifest    : %s' % manifest.write(self.out))


def _optional(value):
    return '-' if value is None else '%.4g' % value


class HistogramTask(Task):
    def run(self):
        readout = self.input.readout
        photons = readout.photons or PhotonModel()
        readout = replace(readout, photons=photons)
        try:
            p_up = float(self.args['--p-up'])
        except ValueError:
            raise DocoptExit('--p-up must be a number.')
        rng = np.random.default_rng([self.input.seed, 0])
        centers, counts = ssr_histogram(p_up, readout, self.input.shots, rng)
        threshold = (photons.threshold if photons.threshold is not None
                     else optimal_threshold(photons))
        fidelity = threshold_fidelity(photons)
        path = tables.write(tables.format_histogram(
            centers, counts, {'p_up': p_up, 'threshold': threshold,
                              'threshold_fidelity': fidelity,
                              'seed': self.input.seed}),
            self.out, 'ssr_histogram.tsv')
        self.log('Threshold   : %s counts' % threshold)
        self.log('Fidelity    : %.4f' % fidelity)
        self.log('Histogram   : %s' % path)


class ValidateTask(Task):
    def run(self):
        self.log(json.dumps(self.input.to_dict(), indent=2))
        self.log('OK.')


class StateTask(Task):
    def stem(self):
        if self.builder.input_type != 'file':
            return 'stdin'
        return os.path.splitext(os.path.basename(self.builder.file_name))[0]

    def run(self):
        rho = self.input
        if rho.shape != (4, 4):
            raise QsecError('Register states are 4x4, got %sx%s'
                            % rho.shape)
        rho = check_density_matrix(rho, 1e-6)
        try:
            reset = ResetModel(float(self.args['--eta']))
        except ValueError:
            raise DocoptExit('--eta must be a number.')
        rounds = _int(self.args, '--rounds')
        for _ in range(rounds):
            rho = ec_round(rho, reset, self.args['--code'])
        self.log('Rounds      : %s (%s code, eta %s)'
                 % (rounds, self.args['--code'], reset.eta))
        self.log('Purity      : %.6f' % purity(rho))
        self.log('P(up)       : %.6f' % nuclear_up_population(rho))
        path = tables.write(format_matrix(rho) + '\n', self.out,
                            self.stem() + '.state.txt')
        self.log('State       : %s' % path)


class CurveTask(Task):
    def column(self):
        curve = self.input
        return curve.y_exact if self.args['--exact'] else curve.y

    def stem(self):
        return os.path.splitext(os.path.basename(self.builder.file_name))[0]

    def fit(self):
        return fit_curve(self.input.x, self.column(), self.args['--model'])


class FitTask(CurveTask):
    def run(self):
        result = self.fit()
        for name in result.model.names:
            self.log('%-8s %.6g +- %.2g' % (name, result.params[name],
                                            result.errors[name]))
        if result.unidentified:
            self.log('Unidentified: %s' % ', '.join(result.unidentified))
        path = tables.write(tables.format_fit(result, self.input.metadata),
                            self.out, self.stem() + '.fit.tsv')
        self.log('Fit         : %s' % path)


class PosteriorTask(CurveTask):
    def run(self):
        curve = self.input
        y_err = np.asarray(curve.y_err, dtype=float)
        positive = y_err[y_err > 0]
        if positive.size == 0:
            raise QsecError('Curve has no positive y_err for a likelihood.')
        y_err = np.where(y_err > 0, y_err, positive.min())
        workers = _workers(self.args)
        samples = int(self.args['--samples'])
        posterior = posterior_gamma(curve.x, curve.y, y_err,
                                    self.args['--model'],
                                    n_samples=samples,
                                    burn_in=max(samples // 4, 100),
                                    seed=_seed(self.args, 0),
                                    workers=workers)
        low, high = posterior.interval
        self.log('gamma       : %.6g (95%% interval %.6g .. %.6g)'
                 % (posterior.estimate, low, high))
        self.log('R-hat       : %.4f' % posterior.r_hat)
        path = tables.write(tables.format_posterior(posterior,
                                                    curve.metadata),
                            self.out, self.stem() + '.posterior.tsv')
        self.log('Posterior   : %s' % path)


class SensitivityTask(CurveTask):
    def run(self):
        times = self.input.x[self.input.x > 0]
        curve = sensitivity_curve(self.fit(), times)
        self.log('Optimal time: %.6g s' % curve.optimal_time)
        path = tables.write(tables.format_sensitivity_curve(curve),
                            self.out, self.stem() + '.sensitivity.tsv')
        self.log('Sensitivity : %s' % path)


def _int(args, name):
    value = args[name]
    if value is None:
        return None
    try:
        return int(value)
    except ValueError:
        raise DocoptExit('%s must be an integer.' % name)


def _seed(args, default):
    seed = _int(args, '--seed')
    return default if seed is None else seed


def _workers(args):
    return _int(args, '--workers') or os.cpu_count() or 1


def _grid(text, name):
    try:
        if ':' not in text:
            return list(range(0, int(text) + 1))
        start, stop, step = text.split(':')
        if name == '--times':
            return np.linspace(float(start), float(stop), int(step)).tolist()
        return list(range(int(start), int(stop) + 1, int(step)))
    except ValueError:
        raise DocoptExit('Wrong grid for %s: %s.' % (name, text))


def overrides(args):
    '''Config overrides from the command line, as dotted keys.'''
    result = dict(parse_assignment(item) for item in args['--set'])
    result['workers'] = _workers(args)
    for option, key in (('--seed', 'seed'), ('--n-ec', 'n_ec'),
                        ('--shots', 'shots')):
        value = _int(args, option)
        if value is not None:
            result[key] = value
    if args['--times']:
        result['times'] = _grid(args['--times'], '--times')
    if args['--resets']:
        result['resets'] = _grid(args['--resets'], '--resets')
    return result


def config_builder(args, protocol=None):
    settings = overrides(args)
    if protocol:
        settings['protocol'] = protocol
    if args['--config']:
        return builders[('json', 'file')](args['--config'], settings)
    return builders[('json', 'string')]('', settings)


def matrix_builder(name):
    if name == '-':
        return builders[('matrix', 'stream')](sys.stdin)
    return builders[('matrix', 'file')](name)


def get_tasks(args):
    for command in EXPERIMENTS:
        if args[command]:
            builder = config_builder(args, EXPERIMENTS[command])
            return [ExperimentTask(args, builder, command)]
    if args['ssr-histogram']:
        return [HistogramTask(args, config_builder(args))]
    if args['validate']:
        return [ValidateTask(args, config_builder(args))]
    if args['state']:
        return [StateTask(args, matrix_builder(name))
                for name in args['<matrix>']]
    task = (FitTask if args['fit'] else
            PosteriorTask if args['posterior'] else
            SensitivityTask if args['sensitivity'] else
            None)
    if not task:
        raise DocoptExit('Unknown command.')
    return [task(args, builders[('curve', 'file')](name))
            for name in args['<curve>']]


def check_args(args):
    if args['--model'] not in ('single', 'double'):
        raise DocoptExit('Unknown fit model.')
    if args['--code'] not in ('phase', 'bit'):
        raise DocoptExit('Unknown code.')
    for name in ('--workers', '--shots', '--samples', '--n-ec',
                 '--rounds'):
        value = _int(args, name)
        if value is not None and value < 0:
            raise DocoptExit('%s must not be negative.' % name)


def show_help():
    print(__doc__.strip('\n'))


def main(argv=None):
    args = docopt(__doc__, argv=argv, version='qsec %s' % version)

    if args['help']:
        show_help()
        return 0

    check_args(args)

    status = 0
    try:
        tasks = get_tasks(args)
    except QsecError as e:
        print('Error: %s' % e, file=sys.stderr)
        return 1
    for task in tasks:
        try:
            task.prepare()
            task.run()
        except (QsecError, IOError) as e:
            print('Error: %s' % e, file=sys.stderr)
            status = max(status, 1)
        except Exception:
            traceback.print_exc()
            status = 2
    return status


if __name__ == '__main__':
    sys.exit(main())
