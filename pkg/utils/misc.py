import sys
import time
import logging
import functools


def timeit(f):
    """ Decorator to time Any Function """

    @functools.wraps(f)
    def timed(*args, **kwargs):
        start_time = time.time()
        result = f(*args, **kwargs)
        end_time = time.time()
        seconds = end_time - start_time
        logging.getLogger("Timer").info("   [-] %s : %2.5f sec, which is %2.5f min, which is %2.5f hour",
                                        f.__name__, seconds, seconds / 60, seconds / 3600)
        return result

    return timed


def versions():
    """Versions of the interpreter and the numerical stack, for run manifests."""
    import numpy
    import scipy
    import sklearn
    import torch
    return {"python": sys.version.split()[0], "numpy": numpy.__version__, "scipy": scipy.__version__,
            "torch": torch.__version__, "scikit-learn": sklearn.__version__}
