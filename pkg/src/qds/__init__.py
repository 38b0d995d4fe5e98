"""Simulation toolkit for quantum digital signatures over a DPS-QKD link.

Subpackages and modules:

- ``channel``: link budget, detection rate, QBER and correlated bit-string sampling.
- ``security``: guessing probability, thresholds, Hoeffding failure bounds, L sizing.
- ``protocol``: three-party distribution and messaging stages.
- ``adversary``: Monte Carlo attack simulations and exact binomial oracles.
- ``net``: framed wire protocol and in-process/socket session harness.
- ``cli``: the ``qds`` command line entry point.
"""

__version__ = "0.1.0"
