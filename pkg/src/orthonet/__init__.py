"""Orthographic-projection object descriptors and open-ended category learning."""
__version__ = "0.1.0"

from .config import Config, load_config
from .embedding import ObjectDescriptor, RawEmbedder, describe_object
from .learner import CategoryStore, chi2, js_distance
from .pointcloud_io import PointCloud, read_point_cloud
from .reference_frame import ReferenceFrame, build_reference_frame

__all__ = ["Config", "load_config", "ObjectDescriptor", "RawEmbedder", "describe_object",
           "CategoryStore", "chi2", "js_distance", "PointCloud", "read_point_cloud",
           "ReferenceFrame", "build_reference_frame", "__version__"]
