"""Pointer-attention sequence models on exactly-solved planar geometry tasks.

Submodules:
    tensor    -- float64 tensors with a reverse-mode gradient tape
    geometry  -- convex hull, Delaunay triangulation, polygon utilities
    tsp       -- exact and heuristic travelling-salesman solvers
    data      -- dataset generation, canonical orderings, line format
    models    -- LSTM encoder/decoder architectures and likelihoods
    training  -- mini-batch SGD loop with clipping and checkpoints
    checkpoint-- binary parameter file format
    decoding  -- greedy and constrained beam search
    metrics   -- task metrics and evaluation reports
    plotting  -- deterministic SVG figures
    cli       -- command-line entry point
"""

__version__ = "0.1.0"
