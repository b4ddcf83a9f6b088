class QsecError(Exception):
    pass


class ConfigError(QsecError):
    '''A configuration value failed validation.

    Attrs:
        field   Dotted path of the offending field (e.g. 'dephasing.T').
    '''
    def __init__(self, field, message):
        super(ConfigError, self).__init__('%s: %s' % (field, message))
        self.field = field


class IntegrationError(QsecError):
    pass


class FitError(QsecError):
    '''A fit did not converge.

    Attrs:
        best   Best parameters found before giving up.
    '''
    def __init__(self, message, best=None):
        super(FitError, self).__init__(message)
        self.best = best
