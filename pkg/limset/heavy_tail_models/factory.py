import math

import numpy as np
from loguru import logger

from limset.errors import CapabilityError, ParameterError
from limset.heavy_tail_models.base import MomentModel, StarSet
from limset.heavy_tail_models.example8 import build_example8
from limset.heavy_tail_models.gaussian import GaussianModel
from limset.heavy_tail_models.independent import IndependentComponentsModel, make_law


def build_model(descriptor) -> MomentModel:
    """Model from a validated config section (or the equivalent plain dict)."""
    spec = descriptor if isinstance(descriptor, dict) else descriptor.model_dump(exclude_none=True)
    kind = spec.get("kind")
    if kind == "gaussian":
        return GaussianModel(spec["cov"])
    if kind == "independent_components":
        return IndependentComponentsModel([make_law(law) for law in spec["coordinate_laws"]])
    if kind == "example8":
        star = StarSet.from_json(spec["star_set"])
        return build_example8(
            star,
            mode=spec.get("mode", "exact_log"),
            kappa=spec.get("kappa", 8),
            k_max=spec.get("k_max", 2),
            base=spec.get("base", 2),
        )
    raise ParameterError(f"unknown model kind {kind!r}")


def trunc_cov(model: MomentModel, t: float) -> np.ndarray:
    """E[X X^T 1{|X| <= t}]; the zero matrix for t <= 0."""
    if math.isnan(t):
        raise ParameterError("t must be a number")
    return model.trunc_cov(t)


def sample_X(model: MomentModel, rng_stream, count: int) -> np.ndarray:
    """`count` i.i.d. draws of X from a stream handle (anything exposing `.generator`) or a Generator."""
    if not model.supports_sampling:
        raise CapabilityError(f"{model.kind} model does not support sampling")
    if count < 0:
        raise ParameterError(f"count must be nonnegative, got {count}")
    gen = getattr(rng_stream, "generator", rng_stream)
    batch = model.sample(gen, count)
    logger.trace(f"sampled {count} draws from {model.kind}")
    return batch
