from codecs import open
from os import path
from setuptools import setup, find_packages

here = path.abspath(path.dirname(__file__))

with open(path.join(here, 'README.rst'), encoding='utf-8') as f:
    long_description = f.read()

setup(
    name='hyperagg',
    version='0.1.0',
    description='HyperAggregation graph neural networks on a small numpy '
                'autodiff engine',
    long_description=long_description,
    url='https://github.com/hyperagg/hyperagg',
    author='hyperagg developers',
    license='MIT',
    install_requires=['six', 'numpy>=1.17', 'scipy>=1.3'],
    python_requires='>=3.5',
    test_suite='tests',
    entry_points={
        'console_scripts': ['hyperagg=hyperagg.cli:main'],
    },
    classifiers=[
        'Development Status :: 3 - Alpha',
        'Intended Audience :: Science/Research',
        'License :: OSI Approved :: MIT License',
        'Programming Language :: Python :: 3',
        'Programming Language :: Python :: 3.5',
        'Programming Language :: Python :: 3.6',
        'Programming Language :: Python :: 3.7',
        'Programming Language :: Python :: Implementation :: CPython',
        'Topic :: Scientific/Engineering :: Artificial Intelligence',
    ],
    keywords=('graph', 'neural', 'network', 'gnn', 'hypernetwork',
              'aggregation', 'node', 'classification', 'autodiff'),
    packages=find_packages(exclude=[
        'contrib',
        'docs',
        'tests*',
        'benchmarks'
    ]),
)
