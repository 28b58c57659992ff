"""Data ingestion, splits, synthetic data and experiment orchestration."""
