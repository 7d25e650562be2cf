from .model import (
    PARAM_ORDER,
    LayerShape,
    Model,
    ModelSpec,
    ShapeError,
    StaleCacheError,
    infer_shapes,
    param_shapes,
)

__all__ = [
    "PARAM_ORDER",
    "LayerShape",
    "Model",
    "ModelSpec",
    "ShapeError",
    "StaleCacheError",
    "infer_shapes",
    "param_shapes",
]
