from setuptools import Extension, setup

try:
    from Cython.Build import cythonize
except ImportError:
    # no Cython: install pure Python, kernels fall back at import
    ext_modules = []
else:
    ext_modules = cythonize(
        [Extension("qcsoc.kernels._ckernels", ["src/qcsoc/kernels/_ckernels.pyx"],
                   extra_compile_args=["-O3"])],
        compiler_directives={"language_level": "3"},
    )

setup(ext_modules=ext_modules)
