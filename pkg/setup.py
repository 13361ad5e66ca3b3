import numpy
from setuptools import Extension, setup

try:
    from Cython.Build import cythonize
except ImportError:
    # Pure-python fallback kernels are selected at import time, so a build
    # without Cython still yields a working package.
    ext_modules = []
else:
    ext_modules = cythonize(
        [
            Extension(
                "deepboundary._kernels",
                ["src/deepboundary/_kernels.pyx"],
                include_dirs=[numpy.get_include()],
                define_macros=[("NPY_NO_DEPRECATED_API", "NPY_1_7_API_VERSION")],
                extra_compile_args=["-O3"],
            )
        ],
        language_level=3,
    )

setup(ext_modules=ext_modules)
