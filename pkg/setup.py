"""Build script for the optional compiled kernel extension.

The package works without the extension (a pure-numpy fallback is selected at
import time), so a missing C compiler must not break installation.
"""

import warnings

from setuptools import setup
from setuptools.command.build_ext import build_ext
from setuptools.extension import Extension


class OptionalBuildExt(build_ext):
    """Try to build the Cython kernels; fall back to pure Python on failure."""

    def run(self):
        try:
            super().run()
        except Exception as exc:  # compiler missing, header mismatch, ...
            warnings.warn(
                f"compiled kernels skipped ({exc!r}); "
                "the pure-Python backend will be used"
            )

    def build_extension(self, ext):
        try:
            super().build_extension(ext)
        except Exception as exc:
            warnings.warn(
                f"building {ext.name} failed ({exc!r}); "
                "the pure-Python backend will be used"
            )


def extensions():
    try:
        import numpy
        from Cython.Build import cythonize
    except ImportError:
        return []
    ext = Extension(
        "robod._kernels",
        ["src/robod/_kernels.pyx"],
        include_dirs=[numpy.get_include()],
        define_macros=[("NPY_NO_DEPRECATED_API", "NPY_1_7_API_VERSION")],
        extra_compile_args=["-O3"],
    )
    return cythonize([ext], language_level=3)


setup(ext_modules=extensions(), cmdclass={"build_ext": OptionalBuildExt})
