"""LIME, Kernel SHAP and IME with injectable samplers, plus an exact oracle.

All explainers work on code vectors, so a categorical feature is one player
and one-hot blocks are never split.  ``f`` maps a code matrix to the model
output being explained (see :func:`value_function`).
"""

from .base import (
    ExplainerConfig, ExplainerError, Explanation, SingularRegression, TooManyFeatures,
    most_important_feature, value_function, weighted_ridge,
)
from .exact import exact_shapley, shapley_from_values
from .ime import explain_ime, explain_ime_exhaustive
from .lime import explain_lime
from .shap import all_coalitions, coalition_values, explain_shap

__all__ = [
    "ExplainerConfig", "ExplainerError", "Explanation", "SingularRegression", "TooManyFeatures",
    "all_coalitions", "coalition_values", "exact_shapley", "explain_ime", "explain_ime_exhaustive",
    "explain_lime", "explain_shap", "most_important_feature", "shapley_from_values",
    "value_function", "weighted_ridge",
]
