import os

from setuptools import setup

ext_modules = []
if os.environ.get("PRIVDISTILL_NO_EXT") != "1":
    try:
        from Cython.Build import cythonize
        from setuptools import Extension
    except ImportError:
        print("Cython not available; installing the pure-Python kernels only")
    else:
        ext_modules = cythonize(
            [
                Extension(
                    "privdistill._kernels",
                    ["src/privdistill/_kernels.pyx"],
                    extra_compile_args=["-O3"],
                )
            ],
            compiler_directives={"language_level": "3"},
        )

setup(ext_modules=ext_modules)
