"""Survey value-conflict mapping and persona-conditioned preference evaluation."""

__version__ = "0.1.0"
