"""BFGS with coordinate-wise (diagonal) step-size matrices.

Subpackages and modules:

* :mod:`cwss.numerics`, :mod:`cwss.problems`: linear algebra helpers and test objectives.
* :mod:`cwss.bfgs`: the inverse-form BFGS loop with a diagonal step matrix.
* :mod:`cwss.strategies`: line search, hypergradient descent and fixed steps.
* :mod:`cwss.l2o`: the learned LSTM step-size model and its meta-training.
* :mod:`cwss.theory`: step-size condition checks and monitors.
* :mod:`cwss.harness`: datasets, benchmarks and the ``cwss`` command line.
"""

__version__ = "0.1.0"
