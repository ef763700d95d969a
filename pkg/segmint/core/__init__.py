"""
Core Modules
=============
Contains the analysis logic:
- tabular.py        : column-typed table model, CSV I/O, schema loading
- preprocess.py     : cleaning pipeline and stage selection
- cluster_engine.py : K-means, PAM, CLARA and the restart/k sweep
- validation.py     : Silhouette, Calinski-Harabasz, k selection
- profiling.py      : PCA, box statistics, expression markers, group matching
- plots.py          : SVG boxplots, biplots and index curves
- personality.py    : selfishness weights and group labeling
- synthgen.py       : synthetic tables with planted groups
"""
