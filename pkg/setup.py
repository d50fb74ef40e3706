import numpy as np
from setuptools import Extension, setup

try:
    from Cython.Build import cythonize

    extensions = cythonize(
        [
            Extension(
                "dfwi._stencil",
                ["src/dfwi/_stencil.pyx"],
                include_dirs=[np.get_include()],
                # -ffp-contract=off keeps the compiled kernels bit-compatible
                # with the numpy fallback (no FMA reassociation).
                extra_compile_args=["-O3", "-ffp-contract=off"],
            )
        ],
        compiler_directives={"language_level": "3"},
    )
except ImportError:
    # No Cython available: install pure-Python; dfwi.kernels falls back to numpy.
    extensions = []

setup(ext_modules=extensions)
