"""Distance-aware fair adversarial training (DAFA) on synthetic Gaussian mixtures.

Modules: ``theory`` (closed-form binary analysis), ``synthdata``, ``nn``,
``attack``, ``dafa`` (class weights), ``training``, ``metrics``,
``experiments`` and ``cli``.
"""

__version__ = "0.1.0"
