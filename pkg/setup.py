#!/usr/bin/env python
# -*- coding: utf-8 -*-

from setuptools import setup
from version import version


setup(name='qsecsim',
      version=version,
      description='Simulation and analysis of quantum sensing with '
                  'repetitive error correction on an NV-13C register.',

      packages=['qsecsim'],
      py_modules=['version'],
      install_requires=['docopt', 'numpy', 'scipy'],
      tests_require=['pytest'],

      include_package_data=True,

      entry_points={'console_scripts': ['qsec = qsecsim.tool:main']})
