from skbuild import setup
import argparse

import io,os,sys
this_directory = os.path.abspath(os.path.dirname(__file__))
with io.open(os.path.join(this_directory, 'README.md'), encoding='utf-8') as f:
    long_description = f.read()

setup(
    name="reidnas",
    version="0.1",
    include_package_data=True,
    author=['reidnas developers'],
    description='Differentiable architecture search for person re-identification',
    license='MIT',
    keywords='neural architecture search, person re-identification, part-aware attention, metric learning',
    scripts=['bin/reidnas.py'],
    packages=['reidnas','reidnas/algorithms','reidnas/datatypes','reidnas/apps','reidnas/io','reidnas/utils'],
    package_data={'reidnas': ['config/*.yaml']},
    entry_points={'console_scripts': ['reidnas=reidnas.cli:main']},
    install_requires=[
        'numpy',
        'scikit-build',
        'torch',
        'h5py',
        'PyYAML',
        'fire',
        'tqdm',
        'Pillow',
    ],
    long_description=long_description,
    long_description_content_type='text/markdown',
)
