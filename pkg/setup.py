import numpy as np
from setuptools import Extension, setup

try:
    from Cython.Build import cythonize
except ImportError:  # fallback backend is used at import time
    ext_modules = []
else:
    ext_modules = cythonize(
        [
            Extension(
                "phinehari._kernels",
                ["src/phinehari/_kernels.pyx"],
                include_dirs=[np.get_include()],
                extra_compile_args=["-O3", "-march=native", "-ffast-math", "-fopenmp"],
                extra_link_args=["-fopenmp"],
                libraries=["m", "mvec"],
            )
        ],
        compiler_directives={"language_level": "3"},
    )

setup(ext_modules=ext_modules)
