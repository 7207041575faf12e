import os

from setuptools import Extension, setup

# The compiled kernels are an optional accelerator: if Cython (or a C
# compiler) is unavailable, install the pure-NumPy package and let
# mammofuse.kernels fall back at import time.
ext_modules = []
if not os.environ.get("MAMMOFUSE_PURE_PYTHON"):
    try:
        import numpy as np
        from Cython.Build import cythonize
    except ImportError:
        pass
    else:
        ext_modules = cythonize(
            [
                Extension(
                    "mammofuse.kernels._native",
                    ["src/mammofuse/kernels/_native.pyx"],
                    include_dirs=[np.get_include()],
                    define_macros=[("NPY_NO_DEPRECATED_API", "NPY_1_7_API_VERSION")],
                )
            ],
            language_level=3,
        )

setup(ext_modules=ext_modules)
