from .augment import AugmentConfig, AugmentParams, augment
from .io import load_dataset, save_dataset
from .sample import IngestionError, SamplePair
from .synth import SynthConfig, synth_generate
from .tiling import TilingSpec, stitch, stitch_prediction, tile

__all__ = ["AugmentConfig", "AugmentParams", "IngestionError", "SamplePair", "SynthConfig",
           "TilingSpec", "augment", "load_dataset", "save_dataset", "stitch",
           "stitch_prediction", "synth_generate", "tile"]
