"""Learning in a mixed cooperative-competitive organization domain.

Modules: ``env`` (the organization domain), ``models`` and ``belief`` (opponent
models and the Bayesian filter over them), ``nn`` (actor/critic networks),
``learners`` (IA2C+, IA2C- and IAC), ``oracle`` (exact evaluation and
enumeration) and ``harness`` (runs, sweeps, exports).
"""
__version__ = "0.1.0"
