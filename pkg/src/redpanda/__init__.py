"""Anomaly detection that ignores variation along known nuisance attributes.

Subpackages and modules: ``numerics`` (autodiff, Adam, checkpoints),
``synthdata`` (benchmark builder), ``augment``, ``networks``, ``losses``,
``training``, ``scorer``, ``metrics`` and ``runner``/``cli``.
"""
__version__ = "0.1.0"
