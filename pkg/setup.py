"""Build script for the optional compiled trajectory kernel.

The package works without the extension (a numpy fallback is selected at
import time); building it just makes large trajectory ensembles much faster.
"""

from setuptools import Extension, setup

try:
    import numpy
    from Cython.Build import cythonize

    ext_modules = cythonize(
        [
            Extension(
                "darkstate._stepper",
                ["src/darkstate/_stepper.pyx"],
                include_dirs=[numpy.get_include()],
                extra_compile_args=["-O3"],
            )
        ],
        language_level=3,
    )
except Exception as exc:  # pragma: no cover - cython/compiler missing
    print(f"skipping compiled stepper ({exc!r}); pure-python fallback will be used")
    ext_modules = []

setup(ext_modules=ext_modules)
