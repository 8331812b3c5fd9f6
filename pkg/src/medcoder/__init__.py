"""Extract-retrieve-rerank engine for assisted ICD-10 medical coding."""

__version__ = "0.1.0"
