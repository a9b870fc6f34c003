"""Build the optional Cython kernels.

The package works without them: ``groundplan.kernels`` falls back to the
pure-Python implementations when the extension is missing.
"""
import numpy
from setuptools import Extension, setup

try:
    from Cython.Build import cythonize
except ImportError:  # no Cython: ship the pure-Python path only
    ext_modules = []
else:
    ext_modules = cythonize(
        [
            Extension(
                "groundplan._kernels",
                ["src/groundplan/_kernels.pyx"],
                include_dirs=[numpy.get_include()],
                extra_compile_args=["-O3"],
                optional=True,
            )
        ],
        compiler_directives={
            "language_level": "3",
            "boundscheck": False,
            "wraparound": False,
            "cdivision": True,
        },
    )

setup(ext_modules=ext_modules)
