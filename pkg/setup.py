"""Build the compiled filter kernels; the package falls back to numpy without them."""
import os

from setuptools import Extension, setup

try:
    from Cython.Build import cythonize
except ImportError:  # pure-Python install
    cythonize = None

ext_modules = []
if cythonize is not None and os.environ.get("LEGGED_INEKF_NO_EXT") != "1":
    ext_modules = cythonize(
        [
            Extension(
                "legged_inekf._kernels._ckernels",
                [os.path.join("src", "legged_inekf", "_kernels", "_ckernels.pyx")],
                extra_compile_args=["-O3"],
            )
        ],
        compiler_directives={"language_level": 3},
    )

setup(ext_modules=ext_modules)
