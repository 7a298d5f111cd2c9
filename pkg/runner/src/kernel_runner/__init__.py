"""Reference external runner speaking the evaluation wire protocol on stdio."""

__version__ = "0.1.0"
