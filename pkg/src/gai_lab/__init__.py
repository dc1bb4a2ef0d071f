"""Allocator-independence workbench.

Subpackages by concern: ``core`` (flat heap), ``alloc_model`` (strategy
interface, symbolic sequences, feasibility, well-formedness harness),
``allocators`` (concrete strategies), ``notac`` (the unsafe language),
``filtering`` (symbolic filter and trace similarity), ``gai`` (the
differential checker), ``memsafe`` (the safe language and its
translation), ``corpus`` (worked examples), ``cli`` (entry point).
"""

__version__ = "0.1.0"
