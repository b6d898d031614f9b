"""Two-view wide-baseline matching with on-demand affine view synthesis."""

from .detectors import detect, detect_dog, detect_hessian_affine, detect_mser
from .descriptor import (describe_frames, dominant_orientations,
                         normalize_patch, root_sift, sift_describe)
from .image import (downsample, gaussian_blur, load_image, save_image,
                    to_grayscale, warp_affine)
from .matcher import (FIRST_GEOM_INCONSISTENT, SECOND_NEAREST, MatchStrategy,
                      NNIndex, TentativeCorrespondence, build_index,
                      filter_duplicates, match, match_first_inconsistent,
                      match_second_nearest)
from .overlay import render_match_overlay
from .pipeline import (ModsResult, ModsStage, default_stages, match_single,
                       run_mods)
from .sweeps import (gen_scaled_pair, gen_synthetic_pair, robust_quantile,
                     run_scale_sweep, run_tilt_sweep)
from .synthesis import (AffineDecomposition, PRESETS, SynthesisConfig,
                        ViewSpec, backproject_frame, decompose_affine,
                        enumerate_views, latitude_to_tilt, synthesize_view,
                        transition_tilt)
from .verify import (FUNDAMENTAL, HOMOGRAPHY, TwoViewGeometry,
                     estimate_lo_ransac, load_homography, save_homography,
                     score_against_ground_truth, symmetric_transfer_error)

__version__ = "0.1.0"
