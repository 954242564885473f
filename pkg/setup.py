"""Build script: compiles the Cython assembly kernels.

The package works without the extension (a NumPy fallback is selected at
import time), so a failed compile only costs speed. Set CURLTD_NO_EXT=1 to
skip the extension build entirely.
"""

import os

from setuptools import Extension, setup

ext_modules = []
if not os.environ.get("CURLTD_NO_EXT"):
    try:
        import numpy as np
        from Cython.Build import cythonize

        ext_modules = cythonize(
            [
                Extension(
                    "curltd._kernels",
                    ["src/curltd/_kernels.pyx"],
                    include_dirs=[np.get_include()],
                    define_macros=[("NPY_NO_DEPRECATED_API", "NPY_1_7_API_VERSION")],
                )
            ],
            language_level=3,
        )
    except ImportError:
        ext_modules = []

setup(ext_modules=ext_modules)
