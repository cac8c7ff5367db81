"""Build hook for the optional compiled kernels.

The package works without the extension; if Cython or a compiler is
missing the build falls back to the pure-numpy kernels.
"""

from setuptools import setup

ext_modules = []
try:
    import numpy
    from Cython.Build import cythonize
    from setuptools import Extension

    ext_modules = cythonize(
        [
            Extension(
                "ragintent.kernels._ckernels",
                ["src/ragintent/kernels/_ckernels.pyx"],
                include_dirs=[numpy.get_include()],
                # No FMA contraction: scores must match the numpy fallback bit for bit.
                extra_compile_args=["-O3", "-ffp-contract=off"],
                define_macros=[("NPY_NO_DEPRECATED_API", "NPY_1_7_API_VERSION")],
            )
        ],
        language_level=3,
    )
except ImportError:
    pass

setup(ext_modules=ext_modules)
