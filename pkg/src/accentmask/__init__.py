"""Saliency-driven accent masking for ASR data augmentation."""

__version__ = "0.1.0"
