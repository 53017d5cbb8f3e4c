"""Key-rate analysis of QPSK-modulated CV-QKD with trusted source and detector noise."""

import os

# The workload is many small dense matrix operations; multi-threaded BLAS adds
# millisecond-scale handshake overhead per call and slows everything ~50x.
# Respect explicit user settings.
for _var in ("OPENBLAS_NUM_THREADS", "OMP_NUM_THREADS", "MKL_NUM_THREADS"):
    os.environ.setdefault(_var, "1")

__version__ = "0.1.0"
