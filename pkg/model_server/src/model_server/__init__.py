"""Reference implementation of the translation engine's wire protocol.

Exposes /translate, /score, /detect, and /health over HTTP.  Model backends
are looked up by identifier; the builtin ones are deterministic and need no
downloads, so the server is fully functional (and testable) offline.
"""

__version__ = "0.1.0"
