"""LARA: lightweight anonymous authentication with revocation auditability.

Clients hold CA-signed one-shot pseudonyms. Revocation is verifier-local:
the CA publishes a revocation list (a fresh random seed plus the encoded
access tokens of every revoked pseudonym), and a client can audit its own
status against exactly that list before revealing anything. Three list
encodings are provided: a single Bloom filter, a hierarchy of Bloom
filters of ascending size, and a Bloom filter under a Merkle-tree
redactable signature.
"""

__version__ = "0.1.0"

from ._kernel import BACKEND as KERNEL_BACKEND

__all__ = ["KERNEL_BACKEND", "__version__"]
