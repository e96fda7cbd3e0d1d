"""Build script: compiles the optional grid nearest-neighbour kernel.

The extension is marked optional so installation succeeds on machines
without a C toolchain; the package then falls back to the pure numpy
implementation of the same kernel.
"""

from setuptools import Extension, setup

ext_modules = []
try:
    import numpy
    from Cython.Build import cythonize

    ext_modules = cythonize(
        [
            Extension(
                "craniomorph._kernels._gridnn",
                ["src/craniomorph/_kernels/_gridnn.pyx"],
                include_dirs=[numpy.get_include()],
                define_macros=[("NPY_NO_DEPRECATED_API", "NPY_1_7_API_VERSION")],
                optional=True,
            )
        ],
        language_level=3,
    )
except ImportError:
    pass

setup(ext_modules=ext_modules)
