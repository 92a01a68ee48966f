"""Build script for the optional compiled Bloom/Merkle kernel.

The extension links against libcrypto for one-shot SHA-256. It is marked
optional: if the toolchain or OpenSSL headers are missing, installation
still succeeds and the package falls back to the pure-Python kernel.
"""

from setuptools import Extension, setup

try:
    from Cython.Build import cythonize
except ImportError:
    ext_modules = []
else:
    ext = Extension(
        "lara._kernel._fastcore",
        ["src/lara/_kernel/_fastcore.pyx"],
        libraries=["crypto"],
        extra_compile_args=["-O3", "-DOPENSSL_SUPPRESS_DEPRECATED"],
    )
    ext.optional = True
    ext_modules = cythonize([ext], compiler_directives={"language_level": "3"})

setup(ext_modules=ext_modules)
