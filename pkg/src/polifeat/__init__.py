"""Graph and sequence featurizations of political systems, with learners,
synthetic ground truth and intervention searches."""

__version__ = "0.1.0"
