"""Saliency-map features for eye-tracking classification.

Pipeline: bottom-up saliency models score each image, evaluation metrics
compare every map against fixation data, the scores concatenate into per-image
feature vectors, which aggregate per subject or per image and feed a kernel
SVM or gradient-boosted trees under reproducible cross-validation protocols.
"""

__version__ = "0.1.0"
