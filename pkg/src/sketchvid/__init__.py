"""Fine-grained sketch-based video retrieval at desk scale.

Subpackages: ``core`` (autodiff and RMSprop), ``synthdata`` (paired sketch
and clip generator), ``optflow`` (TV-L1 flow), ``embednet`` (stream and
relation networks), ``losses``, ``training``, ``retrieval`` and ``cli``.
"""
__version__ = "0.1.0"
