"""Build the optional compiled kernel extension.

If Cython or a C compiler is unavailable the build degrades to the pure
NumPy backend (voxloc._kernels._python); the package selects whichever
is present at import time.
"""

import warnings

from setuptools import Extension, setup
from setuptools.command.build_ext import build_ext


def _extensions():
    try:
        from Cython.Build import cythonize
    except ImportError:
        warnings.warn("Cython not available; building voxloc without the compiled kernels")
        return []
    ext = Extension(
        "voxloc._kernels._native",
        sources=["src/voxloc/_kernels/_native.pyx"],
        extra_compile_args=["-O3", "-fopenmp"],
        extra_link_args=["-fopenmp"],
    )
    return cythonize([ext], compiler_directives={"language_level": "3"})


class OptionalBuildExt(build_ext):
    """Tolerate compiler failures: the NumPy fallback keeps the package usable."""

    def run(self):
        try:
            super().run()
        except Exception as exc:  # noqa: BLE001
            warnings.warn(f"compiled kernels skipped ({exc}); using the NumPy backend")

    def build_extension(self, ext):
        try:
            super().build_extension(ext)
        except Exception as exc:  # noqa: BLE001
            warnings.warn(f"compiled kernels skipped ({exc}); using the NumPy backend")


setup(ext_modules=_extensions(), cmdclass={"build_ext": OptionalBuildExt})
