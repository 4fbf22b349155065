"""Builds the optional Cython alignment kernel.

The package works without the extension: crashforge.edr falls back to a
pure-Python/numpy implementation when the compiled module is absent.
"""

from setuptools import setup

ext_modules = []
try:
    import numpy
    from Cython.Build import cythonize

    ext_modules = cythonize(
        "src/crashforge/edr/_scan.pyx",
        compiler_directives={"language_level": "3"},
    )
    include_dirs = [numpy.get_include()]
except ImportError:
    include_dirs = []

setup(ext_modules=ext_modules, include_dirs=include_dirs)
