from setuptools import setup, find_packages

with open("smauq/__init__.py") as f:
    exec([x for x in f.readlines() if '__version__' in x][0])

with open("README.md", "r") as f:
    long_description = f.read()

with open("requirements.txt", "r") as f:
    requirements = f.read()

setup(
  name='smauq',
  version=__version__,
  description='Simulation, screening, Bayesian calibration and uncertainty propagation for shape memory alloy actuation',
  long_description=long_description,
  long_description_content_type="text/markdown",
  license='MIT',
  keywords='shape memory alloy uncertainty quantification bayesian calibration mcmc design of experiments',

  classifiers=[
    'Intended Audience :: Developers',
    'Intended Audience :: Science/Research',
    'Natural Language :: English',
    'Operating System :: OS Independent',
    'Programming Language :: Python :: 3',
    'Topic :: Scientific/Engineering :: Physics',
    'Topic :: Software Development :: Libraries :: Python Modules',
  ],

  packages=find_packages(
    include=['smauq', 'smauq.*']
  ),
  include_package_data=True,
  package_data={'smauq': ['default_configs/*.json', 'default_configs/*.md']},
  entry_points = {
        'console_scripts': ['smauq=smauq.main:CLI'],
    },

  python_requires='>=3.8',
  install_requires=requirements,
  extras_require={
    'test': ['pytest'],
  },
)
