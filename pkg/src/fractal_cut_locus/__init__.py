"""Fractal cut loci: the infinite tree, its convex hulls, smoothing profiles and Randers metrics."""

__version__ = "0.1.0"
