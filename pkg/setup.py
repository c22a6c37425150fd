"""Build script: compiles the optional accelerator extension.

The package is fully functional without the extension; the kernel layer
falls back to the NumPy implementation when the compiled module is absent
(see proxflow/_kernels/__init__.py). Build failures are therefore
non-fatal.
"""

from setuptools import setup

ext_modules = []
try:
    import numpy as np
    from Cython.Build import cythonize
    from setuptools import Extension

    ext_modules = cythonize(
        [
            Extension(
                "proxflow._kernels._core",
                ["src/proxflow/_kernels/_core.pyx"],
                include_dirs=[np.get_include()],
                extra_compile_args=["-O3"],
            )
        ],
        compiler_directives={"language_level": "3"},
    )
except ImportError:
    pass

setup(ext_modules=ext_modules)
