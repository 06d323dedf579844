"""
unicluster

Uniquely determined hierarchical clustering of finite measures:
forests of separated regions, simple measures, exact 1D and dyadic
grid level-set engines, and mixtures of Hausdorff dimensions.
"""

__version__ = "1.0.0"
