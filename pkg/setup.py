from pathlib import Path

from setuptools import setup, find_packages

classifiers = '''Development Status :: 3 - Alpha
Programming Language :: Python :: 3.8
Programming Language :: Python :: 3.9
Programming Language :: Python :: 3.10
Programming Language :: Python :: 3.11'''

with open('README.md', encoding='utf-8') as file:
    long_description = file.read()

with open('requirements.txt', encoding='utf-8') as file:
    requirements = file.read().splitlines()

with open(Path(__file__).resolve().parent / 'lrpipe/__version__.py', encoding='utf-8') as file:
    scope = {}
    exec(file.read(), scope)
    __version__ = scope['__version__']

setup(
    name='lowrank-pipe',
    packages=find_packages(include=('lrpipe', 'lrpipe.*')),
    include_package_data=True,
    version=__version__,
    description='Compression-aware training, low-rank surgery and recovery of neural networks',
    long_description=long_description,
    long_description_content_type='text/markdown',
    license='MIT',
    keywords=['low-rank', 'svd', 'compression'],
    classifiers=classifiers.splitlines(),
    install_requires=requirements,
    python_requires='>=3.8',
    entry_points={
        'console_scripts': [
            'lrpipe = lrpipe.pipeline.cli:main',
        ],
    },
)
