import numpy as np
from setuptools import setup, Extension

# The compiled kernels are optional: the package falls back to the pure
# numpy implementations in branchlab._kernels_py when the extension is
# missing.  -ffp-contract=off keeps the C arithmetic free of fused
# multiply-adds so both backends perform plain IEEE double operations.
try:
    from Cython.Build import cythonize

    ext_modules = cythonize(
        [
            Extension(
                "branchlab._kernels",
                ["src/branchlab/_kernels.pyx"],
                include_dirs=[np.get_include()],
                extra_compile_args=["-O3", "-ffp-contract=off"],
            )
        ],
        language_level=3,
    )
except ImportError:
    ext_modules = []

setup(ext_modules=ext_modules)
