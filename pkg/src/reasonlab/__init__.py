"""Executable diagnostics for systems that infer explanations from phenomena
and generate phenomena back from explanations under checkable principles.

Submodules: :mod:`core` (the system bundle), :mod:`diagnostics` (criteria and
failure labels), :mod:`dynamics` (refinement, adaptation, drift), and three
reference instantiations: :mod:`logic`, :mod:`opt` and :mod:`neural`.
"""

__version__ = "0.1.0"
