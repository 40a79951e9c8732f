"""Statistical shape-model face alignment toolkit.

Train a PCA shape model plus per-landmark profile statistics and linear
SVM classifiers from annotated images, then fit landmarks to new images
with a multi-resolution, SVM-gated, edge-weighted local search.
"""

from .errors import AsmFitError
from .evaluation import EvalReport, evaluate, format_report
from .imaging import (
    GradientField,
    GrayImage,
    ImagePyramid,
    build_pyramid,
    canny_edges,
    equalize_histogram,
    sample_bilinear,
    sobel_gradients,
)
from .profiles import (
    Profile,
    ProfileModel,
    ProfileStats,
    edge_weighted_cost,
    extract_profile_1d,
    extract_profile_2d,
    landmark_normal,
    mahalanobis_cost,
    train_profile_stats,
)
from .dataset_io import (
    AnnotatedSample,
    ModelBundle,
    load_bundle,
    load_image,
    load_points_file,
    save_bundle,
    split_dataset,
    write_points_file,
)
from .scheme import DEFAULT_SCHEME, ContourGroup, LandmarkScheme
from .search import (
    FitConfig,
    FitResult,
    config_for_mode,
    fit,
    init_shape_from_box,
    search_landmarks,
)
from .shape_model import (
    ParamFit,
    Shape,
    ShapeModel,
    SimilarityTransform,
    build_shape_model,
    clamp_params,
    fit_params,
    gpa_align,
    procrustes_fit,
    synthesize,
)
from .svm import (
    FeatureScaler,
    LandmarkTrainingSet,
    LinearSvmModel,
    SvmTrainConfig,
    build_landmark_training_set,
    predict,
    train_linear_svm,
)
from .synthetic import generate_face_dataset, write_dataset
from .training import TrainingSummary, train_bundle

__version__ = "0.1.0"
