"""Likelihood models: MVN mean tests, contingency tables, AR(1)."""

from .ar1 import Ar1Model, Ar1Params
from .base import LikelihoodModel, WaldComponents, reparametrize
from .multinomial import MultinomialModel
from .mvn import MvnModel, MvnParams

#: model tags accepted by the CLI and experiment configs
MODEL_TAGS = ("mvn_common_mean", "monotone_normal", "multinomial_table", "ar1")


def make_model(tag: str, **kwargs) -> LikelihoodModel:
    """Build a model from its public tag.

    ``mvn_common_mean`` tests equality of all mean components;
    ``monotone_normal`` is the same sampling model testing a zero mean
    vector; ``multinomial_table`` takes ``shape`` and ``null``; ``ar1``
    tests zero autocorrelation.
    """
    if tag == "mvn_common_mean":
        return MvnModel(p=kwargs.get("p", 2), null="common_mean")
    if tag == "monotone_normal":
        return MvnModel(p=kwargs.get("p", 2), null="zero_mean")
    if tag == "multinomial_table":
        return MultinomialModel(
            shape=kwargs.get("shape", (2, 2, 2)),
            null=kwargs.get("null", "full_independence"),
            given_axis=kwargs.get("given_axis", 0),
        )
    if tag == "ar1":
        return Ar1Model()
    raise ValueError(f"unknown model tag {tag!r}; expected one of {MODEL_TAGS}")


__all__ = [
    "Ar1Model",
    "Ar1Params",
    "LikelihoodModel",
    "MODEL_TAGS",
    "MultinomialModel",
    "MvnModel",
    "MvnParams",
    "WaldComponents",
    "make_model",
    "reparametrize",
]
