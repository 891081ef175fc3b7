"""Build script for the optional compiled kernel.

The package is pure Python plus one Cython extension holding the mixture
log-likelihood inner loop.  If Cython or a C compiler is unavailable the
build degrades to the numpy fallback selected at import time.
"""

import warnings

from setuptools import Extension, setup
from setuptools.command.build_ext import build_ext


class _OptionalBuildExt(build_ext):
    """Build the extension if possible, warn and continue if not."""

    def run(self):
        try:
            super().run()
        except Exception as exc:  # compiler missing entirely
            warnings.warn(f"skipping compiled kernel build: {exc}")

    def build_extension(self, ext):
        try:
            super().build_extension(ext)
        except Exception as exc:
            warnings.warn(f"skipping compiled kernel {ext.name}: {exc}")


def _extensions():
    try:
        import numpy
        from Cython.Build import cythonize
    except ImportError as exc:
        warnings.warn(f"building without compiled kernel: {exc}")
        return []
    ext = Extension(
        "ebshrink._kernels_c",
        ["src/ebshrink/_kernels_c.pyx"],
        include_dirs=[numpy.get_include()],
        define_macros=[("NPY_NO_DEPRECATED_API", "NPY_1_7_API_VERSION")],
    )
    return cythonize([ext], compiler_directives={"language_level": "3"})


setup(ext_modules=_extensions(), cmdclass={"build_ext": _OptionalBuildExt})
