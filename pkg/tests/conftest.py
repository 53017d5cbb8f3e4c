import os
import sys

# single-threaded BLAS: the suite runs many small dense operations, and the
# multi-threaded handshake overhead dominates otherwise (must be set before
# numpy initializes its backend)
for var in ("OPENBLAS_NUM_THREADS", "OMP_NUM_THREADS", "MKL_NUM_THREADS"):
    os.environ.setdefault(var, "1")

sys.path.insert(0, os.path.dirname(__file__))
