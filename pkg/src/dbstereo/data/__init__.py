from .formats import (
    KittiPngError,
    PfmColorError,
    PfmError,
    PfmHeaderError,
    PfmPayloadError,
    load_kitti_disparity_png,
    load_pfm,
    write_kitti_disparity_png,
    write_pfm,
)
from .synthetic import (
    StereoSample,
    SyntheticConfig,
    color_jitter,
    crop_sample,
    generate_random_dot_pair,
    photo_consistency_fraction,
    random_crop,
    random_region_disparity,
    render_random_dot_pair,
)
from .dataset import (
    DatasetView,
    SyntheticDataset,
    load_sample,
    save_sample,
    write_synthetic_dataset,
)

__all__ = [
    "KittiPngError",
    "PfmColorError",
    "PfmError",
    "PfmHeaderError",
    "PfmPayloadError",
    "StereoSample",
    "SyntheticConfig",
    "SyntheticDataset",
    "DatasetView",
    "color_jitter",
    "crop_sample",
    "generate_random_dot_pair",
    "load_kitti_disparity_png",
    "load_pfm",
    "load_sample",
    "photo_consistency_fraction",
    "random_crop",
    "random_region_disparity",
    "render_random_dot_pair",
    "save_sample",
    "write_kitti_disparity_png",
    "write_pfm",
    "write_synthetic_dataset",
]
