"""skillprobe - skill-neuron laboratory for a desk-scale Transformer"""

__version__ = "1.0.0"
__author__ = "skillprobe maintainers"
