"""Build script for the optional compiled kernels.

The package is pure Python plus one Cython extension holding the hot
kernels of the proximal update (cost matrix and Gibbs kernel assembly).
If the extension cannot be built the install still succeeds and the
numpy fallback is used at import time.
"""

import os
import sys

from setuptools import Extension, setup

try:
    import numpy
    from Cython.Build import cythonize
except ImportError:  # bare-metal installs still get the pure lane
    numpy = None
    cythonize = None


def extensions():
    if cythonize is None or os.environ.get("KPROX_SKIP_BUILD_EXT"):
        return []
    compile_args = ["-O3"]
    link_args = []
    if os.environ.get("KPROX_OPENMP"):
        # opt-in: single-core hosts gain nothing and some toolchains lack libgomp
        compile_args.append("-fopenmp")
        link_args.append("-fopenmp")
    ext = Extension(
        "kprox._speedups",
        sources=[os.path.join("src", "kprox", "_speedups.pyx")],
        include_dirs=[numpy.get_include()],
        define_macros=[("NPY_NO_DEPRECATED_API", "NPY_1_7_API_VERSION")],
        extra_compile_args=compile_args,
        extra_link_args=link_args,
    )
    return cythonize([ext], language_level="3")


try:
    setup(ext_modules=extensions())
except SystemExit:
    raise
except Exception as exc:  # noqa: BLE001 - any build failure falls back to pure python
    sys.stderr.write(f"kprox: compiled kernels unavailable ({exc}); installing pure-Python lane\n")
    setup(ext_modules=[])
