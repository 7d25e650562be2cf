from .generator import (
    ClassMotif,
    MotifError,
    SynthConfig,
    default_separable_profile,
    generate_trialset,
    load_profile,
    save_profile,
)
from .rng import Xoshiro256StarStar, derive_seed, mix_seed, splitmix64

__all__ = [
    "ClassMotif",
    "MotifError",
    "SynthConfig",
    "Xoshiro256StarStar",
    "default_separable_profile",
    "derive_seed",
    "generate_trialset",
    "load_profile",
    "mix_seed",
    "save_profile",
    "splitmix64",
]
