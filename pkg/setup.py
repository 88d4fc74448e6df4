"""A setuptools based setup module.
See:
https://packaging.python.org/en/latest/distributing.html
https://github.com/pypa/sampleproject
"""

import re

from os import path
# Always prefer setuptools over distutils
from setuptools import setup, find_packages

here = path.abspath(path.dirname(__file__))

# get the dependencies and installs
with open(path.join(here, 'requirements.txt'), encoding='utf-8') as f:
    all_reqs = f.read().split('\n')
install_requires = [x.strip() for x in all_reqs if x.strip() and 'git+' not in x]
dependency_links = [x.strip().replace('git+', '') for x in all_reqs if 'git+' in x]

# Get the long description from the README file
with open(path.join(here, 'README.md'), encoding='utf-8') as f:
    long_description = f.read()

with open(path.join(here, 'gat_gan', 'version.py'), encoding='utf-8') as f:
    __version__ = re.search(r"__version__ = '([^']+)'", f.read()).group(1)

setup(
    name='gat-gan',  # Required
    version=__version__,  # Required
    description=('Graph-attention adversarial autoencoder for multivariate time-series '
                 'generation, with Frechet transformer distance and predictive-score evaluation'),  # Required
    long_description=long_description,  # Optional
    long_description_content_type='text/markdown',
    classifiers=[  # Optional
        'Intended Audience :: Science/Research',
        'Topic :: Scientific/Engineering :: Artificial Intelligence',
        'Programming Language :: Python :: 3.8',
        'Programming Language :: Python :: 3.9',
        'Programming Language :: Python :: 3.10',
        'Programming Language :: Python :: 3.11'
    ],
    keywords='gan time-series graph-attention autoencoder autodiff',  # Optional
    packages=find_packages(exclude=['.circleci', 'contrib', 'docs', 'tests']),  # Required
    package_data={'gat_gan': ['schemas/*.json']},
    install_requires=install_requires,
    python_requires='>=3.8',
    dependency_links=dependency_links,
    entry_points={'console_scripts': ['gat-gan=gat_gan.cli:run']},
)
