# -*- coding: utf-8 -*-
"""
/*
 * This file is part of the pysubriemann distribution (https://github.com/pysubriemann/pysubriemann).
 * Copyright (c) 2025 The pysubriemann authors.
 *
 * This program is free software: you can redistribute it and/or modify
 * it under the terms of the GNU Affero General Public License as published by
 * the Free Software Foundation, version 3.
 *
 * This program is distributed in the hope that it will be useful, but
 * WITHOUT ANY WARRANTY; without even the implied warranty of
 * MERCHANTABILITY or FITNESS FOR A PARTICULAR PURPOSE. See the GNU
 * Affero General Public License for more details.
 *
 * You should have received a copy of the GNU Affero General Public License
 * along with this program. If not, see <https://www.gnu.org/licenses/>.
 */
"""

from setuptools import setup

import re
VERSIONFILE = 'subriemann/_version.py'
verstrline = open(VERSIONFILE, 'rt').read()
VSRE = r"^__version__ = ['\"]([^'\"]*)['\"]"
mo = re.search(VSRE, verstrline, re.M)
if mo:
    version = mo.group(1)
else:
    raise RuntimeError("Unable to find version string in %s." % (VERSIONFILE,))

INSTALL_REQUIRES = [
    'setuptools',
    'numpy>=1.22',
    'scipy>=1.8',
]

long_description = open('README.md').read()

setup(
    name='pysubriemann',
    packages=['subriemann', 'subriemann/core'],
    version=version,
    description='Sub-Riemannian geometry workbench: nonholonomic geodesics, steering and convexity',
    license='AGPL',
    author="The pysubriemann authors",
    url='https://github.com/pysubriemann/pysubriemann',
    long_description=long_description,
    long_description_content_type='text/markdown',
    python_requires='>=3.8',
    classifiers=[
        'Development Status :: 3 - Alpha',
        'Environment :: Console',
        'Intended Audience :: Science/Research',
        'License :: OSI Approved :: GNU Affero General Public License v3 or later (AGPLv3+)',
        'Programming Language :: Python :: 3',
        'Programming Language :: Python :: 3.8',
        'Topic :: Scientific/Engineering :: Mathematics',
    ],
    install_requires=INSTALL_REQUIRES,
    extras_require={'test': ['pytest']},
    include_package_data=True,
    entry_points={
        'console_scripts': [
            'subriemann = subriemann.Cli:main',
        ],
    },
)
