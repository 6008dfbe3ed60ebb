"""Label engineering for LiDAR 3D detection with mixed-grained supervision:
coarse cluster labels, label assignment, mask lifting with separability-aware
refinement, panoptic metrics, and self-training label maintenance.
"""

from .geometry import (
    Box3D,
    PointCloud,
    PointIndexSet,
    bev_polygon_contains,
    connected_components,
    point_set_iou,
    points_in_box,
)
from .clusters import (
    ClusterLabel,
    CostReport,
    LabelSet,
    NOISE_PRESETS,
    NoiseModel,
    annotation_cost,
    augment_cluster,
    cluster_center,
    cluster_from_clicks,
    clusters_from_boxes,
    pilot_crop_regions,
    select_budget,
)
from .assignment import (
    AssignmentPartition,
    BevGrid,
    Sample,
    box_assign,
    box_cluster_iou,
    center_assign,
    combine_loss,
    iou_ambiguity_probe,
)
from .masks import (
    CameraModel,
    InstanceMasks2D,
    PointLabeling,
    labeling_to_clusters,
    lift_masks,
    perturb_calibration,
    project_points,
    sar_refine,
)
from .metrics import PanopticReport, panoptic_eval, segmentation_miou
from .fitting import PseudoBox, fit_lshape, selftrain_merge

__version__ = "0.1.0"
