from setuptools import setup, find_packages
import sys
import os
import re


def read(fname):
    """Read a file."""
    return open(fname).read()


def absolute_links(txt):
    """Replace relative cfql github links by absolute links."""

    raw_base = "(https://raw.githubusercontent.com/cfql-dev/cfql/master/"
    embedded_base = "(https://github.com/cfql-dev/cfql/tree/master/"
    # iterate over links
    for var in re.findall(r'\[.*?\]\((?!http).*?\)', txt):
        if re.match(r'.*?.(png|svg)\)', var):
            rep = var.replace("(", raw_base)
        else:
            rep = var.replace("(", embedded_base)
        txt = txt.replace(var, rep)
    return txt


# numpy.random.Generator and dataclasses
if sys.version_info < (3, 8):
    sys.exit('cfql requires at least Python version 3.8')

# read version from file
__version__ = ''
version_file = os.path.join('cfql', 'version.py')
# sets __version__
exec(read(version_file))  # pylint: disable=W0122 # nosec

ENTRY_POINTS = {
    'console_scripts': [
        'cfql = cfql.cli:main',
        'cfql_visualize = cfql.visualize.cli:_cfql_visualize_main',
    ]
}

# project metadata
# noinspection PyUnresolvedReferences
setup(name='cfql',
      version=__version__,
      description='Causal flow Q-learning under unobserved confounding',
      long_description=absolute_links(read('README.md')),
      long_description_content_type="text/markdown",
      author='The cfql developers',
      url='https://github.com/cfql-dev/cfql',
      packages=find_packages(exclude=['doc*', 'test*']),
      package_data={'cfql': ['config_schema.yaml', 'configs/*.yaml']},
      install_requires=['numpy>=1.20.0',
                        'pandas>=1.2.0',
                        'scipy>=1.6.0',
                        'matplotlib>=3.5.0',
                        'colorama',
                        'seaborn',
                        'pyyaml',
                        'jsonschema',
                        ],
      include_package_data=True,
      tests_require=['flake8', 'pytest'],
      python_requires='>=3.8',
      entry_points=ENTRY_POINTS,
      extras_require={
          'doc': [
              'sphinx>=3.5.3',
              'sphinxcontrib-napoleon>=0.7',
              'sphinx-rtd-theme>=0.5.1',
              'myst-parser>=0.16.1',
          ]
      }
      )
