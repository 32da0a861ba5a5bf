# Builds the optional compiled kernel core. If Cython or a C compiler is
# unavailable the install still succeeds and the package falls back to the
# pure-numpy kernels at import time.
import sys

from setuptools import setup

ext_modules = []
try:
    import numpy
    from Cython.Build import cythonize
    from setuptools import Extension

    ext_modules = cythonize(
        [
            Extension(
                "ffnerv.kernels._ckernels",
                ["src/ffnerv/kernels/_ckernels.pyx"],
                include_dirs=[numpy.get_include()],
                extra_compile_args=[] if sys.platform == "win32" else ["-O3"],
                define_macros=[("NPY_NO_DEPRECATED_API", "NPY_1_7_API_VERSION")],
            )
        ],
        compiler_directives={"language_level": "3"},
    )
except ImportError as exc:  # pragma: no cover - build-env dependent
    print(f"ffnerv: building without compiled kernels ({exc})", file=sys.stderr)

setup(ext_modules=ext_modules)
