""" Setup script """


import os
from setuptools import setup, find_packages


_DIR = os.path.abspath(os.path.dirname(__file__))
SRC_PATH = os.path.relpath(os.path.join(_DIR))


def read(path):
    """ Dump a file relative to this program's directory into a string. """
    with open(os.path.join(SRC_PATH, path)) as f:
        return f.read()


setup(
    name="lexrank",
    version=f"{os.environ.get('GITHUB_RUN_NUMBER', 0)}",
    description="Lexicographically-ordered reward inference from pairwise preferences",
    long_description=read("README.md"),
    long_description_content_type='text/markdown',
    author="lexrank developers",
    classifiers=[
        'Programming Language :: Python :: 3',
        'Programming Language :: Python :: 3.8',
        'Programming Language :: Python :: 3.9',
        'Programming Language :: Python :: 3.10',
    ],
    keywords=["lexicographic", "preferences", "reward inference", "inverse reinforcement learning"],
    packages=find_packages(exclude=['tests', 'tests.*']),   # keep tests out of the wheel
    package_data={"lexrank.lori.data": ["*.yaml", "*.csv"]},
    install_requires=read("requirements.txt"),              # numpy, scipy, pandas, PyYAML
    python_requires=">=3.8",                                # numpy.typing needs 3.8
    entry_points={"console_scripts": ["lexrank=lexrank.lori.cli:main"]},
)
