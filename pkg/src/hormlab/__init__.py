"""Numerical lab for sum-of-squares operators built from vector fields.

Modules: ``symexpr`` (expressions), ``vecfield`` (fields and brackets),
``bch`` (free-algebra correction terms), ``hormander`` (sampled Hoermander
criteria), ``flows`` (flows, transport, Hoelder norms), ``spectral`` (torus
discretization and subelliptic constants), ``runs``/``cli`` (batch front end).
"""

from .symexpr import ParseError, parse, simplify, to_string
from .vecfield import FieldSystem, VectorField, lie_bracket, multi_commutator

__version__ = "0.1.0"

__all__ = ["ParseError", "parse", "simplify", "to_string", "FieldSystem", "VectorField",
           "lie_bracket", "multi_commutator", "__version__"]
