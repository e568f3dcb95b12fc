import numpy as np
from setuptools import Extension, setup

# The compiled kernels are an optional fast path; the package works without
# them (mkdm.kernels falls back to the numpy implementations).
try:
    from Cython.Build import cythonize

    ext_modules = cythonize(
        [
            Extension(
                "mkdm._native_kernels",
                ["src/mkdm/_native_kernels.pyx"],
                include_dirs=[np.get_include()],
                # -ffast-math lets gcc vectorize the expf/tanhf loops via
                # libmvec; kernel parity tests pin the accuracy envelope.
                extra_compile_args=["-O3", "-march=native", "-ffast-math"],
                extra_link_args=["-lmvec"],
            )
        ],
        language_level=3,
    )
except ImportError:
    print("Cython not available; installing with pure-numpy kernels only.")
    ext_modules = []

setup(ext_modules=ext_modules)
