"""Builds the optional compiled clustering kernel.

The package also works without it: a NumPy fallback is selected at import
time, so a failed extension build only costs speed, never correctness.
"""

import os

from setuptools import Extension, setup
from setuptools.command.build_ext import build_ext


class OptionalBuildExt(build_ext):
    """Skip the extension (with a warning) instead of failing the install."""

    def run(self):
        try:
            super().run()
        except Exception as exc:  # compiler missing, etc.
            self._warn(exc)

    def build_extension(self, ext):
        try:
            super().build_extension(ext)
        except Exception as exc:
            self._warn(exc)

    @staticmethod
    def _warn(exc):
        print(f"warning: skipping compiled clustering kernel ({exc}); "
              f"the pure-Python fallback will be used")


def extensions():
    if os.environ.get("HURETEX_NO_EXT"):
        return []
    from Cython.Build import cythonize

    ext = Extension(
        "huretex._agglo_cy",
        ["src/huretex/_agglo_cy.pyx"],
        # -ffp-contract=off: no FMA contraction, so the kernel stays
        # bit-identical to the NumPy fallback.
        extra_compile_args=["-O3", "-ffp-contract=off"],
    )
    return cythonize([ext], language_level=3)


setup(ext_modules=extensions(), cmdclass={"build_ext": OptionalBuildExt})
