"""Unified token-preference policy optimization (GRPO, DAPO, Dr. GRPO, lambda-GRPO)
with a desk-scale verifiable-reward training simulator."""

__version__ = "0.1.0"
