import os

# Keep BLAS single-threaded: results stay bit-reproducible across machines and
# harness worker processes do not oversubscribe the cores they fork onto.
for _var in ("OPENBLAS_NUM_THREADS", "OMP_NUM_THREADS", "MKL_NUM_THREADS"):
    os.environ.setdefault(_var, "1")
