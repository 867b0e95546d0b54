"""Learn hyperspectral target signatures from bag-labelled training pixels.

The signature is chosen to maximize a diverse-density style objective over
matched-filter responses: high in at least one pixel of every positive bag,
low on average over negative bags.
"""

from .background import (
    BackgroundModel,
    MatchedFilter,
    fit_background,
    fit_background_from_bags,
    matched_filter,
    whiten,
)
from .bags import Bag, BagSet, Label, Pixel, ValidationReport, validate
from .errors import (
    DegenerateSignatureError,
    InitializationError,
    InputError,
    MitargetError,
    NumericError,
    SingularBackgroundError,
)
from .evaluation import DetectionMap, GridSearchResult, RocCurve, detection_map, grid_search_2d, roc
from .evolution import EAConfig, EstimationResult, MutationParams, Population, run
from .objective import (
    BagObjective,
    ObjectiveBreakdown,
    ObjectiveConfig,
    negative_bag_term,
    objective,
    positive_bag_term,
)
from .synth import GroundTruth, Scene, SyntheticConfig, generate_scene, mix_pixel, sample_bags

__version__ = "0.1.0"
