"""Static detection of privacy over-collection in super-app sub-apps."""

__version__ = "0.1.0"
