"""Quality assessment toolkit for text-driven image editing.

Subpackages cover the full evaluation workflow: dataset manifests and
image preparation, subjective-score normalization and observer screening,
correlation and pixel metrics, a learned three-branch quality model with
its training/cross-validation harness, and a rating-collection service.
"""

__version__ = "0.1.0"
