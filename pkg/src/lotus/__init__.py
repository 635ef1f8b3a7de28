"""Zero-shot selection of outlier-detection pipelines by low-rank
Gromov-Wasserstein similarity between datasets."""

__version__ = "0.1.0"
