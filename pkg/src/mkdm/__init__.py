"""Multi-task knowledge distillation for question-answer relevance, at desk
scale: numpy tensors, a taped autodiff core, transformer teachers distilled
into a shallow multi-headed student."""

import os as _os

# MKDM_THREADS bounds BLAS parallelism; must land in the environment before
# numpy loads its backend, hence before any other import in this package.
_threads = _os.environ.get("MKDM_THREADS")
if _threads:
    for _var in ("OPENBLAS_NUM_THREADS", "OMP_NUM_THREADS", "MKL_NUM_THREADS"):
        _os.environ.setdefault(_var, _threads)

from .kernels import BACKEND, has_native  # noqa: E402

__version__ = "0.1.0"
__all__ = ["BACKEND", "has_native", "__version__"]
