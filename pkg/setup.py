"""Build script for the optional compiled event-engine core.

The simulator runs on a pure-Python engine if the extension is missing,
so a failed compile degrades the install instead of aborting it.
"""

import sys

from setuptools import setup
from setuptools.command.build_ext import build_ext
from setuptools.errors import CCompilerError, ExecError, PlatformError

try:
    from Cython.Build import cythonize
except ImportError:
    cythonize = None


class optional_build_ext(build_ext):
    def run(self):
        try:
            build_ext.run(self)
        except (CCompilerError, ExecError, PlatformError) as exc:
            sys.stderr.write(
                "warning: compiled engine skipped (%s); using pure-Python engine\n" % exc
            )

    def build_extension(self, ext):
        try:
            build_ext.build_extension(self, ext)
        except (CCompilerError, ExecError, PlatformError) as exc:
            sys.stderr.write(
                "warning: %s skipped (%s); using pure-Python engine\n" % (ext.name, exc)
            )


if cythonize is not None:
    extensions = cythonize(
        ["src/loratherm/simcore/_engine.pyx"],
        language_level=3,
    )
else:
    extensions = []

setup(
    ext_modules=extensions,
    cmdclass={"build_ext": optional_build_ext},
)
