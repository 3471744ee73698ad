"""Build script. The compiled sweep kernel is optional: if Cython or a C
compiler is unavailable the install falls back to the pure-numpy sweeps."""

import numpy
from setuptools import setup

try:
    from Cython.Build import cythonize
    from setuptools.extension import Extension

    extensions = cythonize(
        [
            Extension(
                "fracsig.kernels._sweeps_cy",
                ["src/fracsig/kernels/_sweeps_cy.pyx"],
                include_dirs=[numpy.get_include()],
                extra_compile_args=["-O3", "-ffp-contract=off"],
                define_macros=[("NPY_NO_DEPRECATED_API", "NPY_1_7_API_VERSION")],
            )
        ],
        language_level=3,
    )
except ImportError:
    extensions = []

setup(ext_modules=extensions)
