from .augment import augment_image, augment_text
from .io import load_dataset, save_dataset
from .synthetic import MomentSegment, QuerySample, SyntheticDataset, VideoSample, generate, make_templates

__all__ = ["MomentSegment", "QuerySample", "SyntheticDataset", "VideoSample", "augment_image",
           "augment_text", "generate", "load_dataset", "make_templates", "save_dataset"]
