"""Two-stage memory for LLM decision agents: formation, retrieval and refinement."""

__version__ = "0.1.0"
