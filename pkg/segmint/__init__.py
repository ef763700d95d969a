"""
Segmint
========
Behavioural Group extraction from socio-economic tabular data:
preprocessing, partitional clustering (K-means and CLARA) with
index-driven model selection, marker-expression profiling, and
selfishness-based personality labeling.
"""

__version__ = "1.0.0"
