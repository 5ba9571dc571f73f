"""Visual localization against a voxel radiance-field map.

Pipeline: synthesize posed images of a procedural scene, train an explicit
voxel radiance field on them, then localize query frames by rendering
reference views near a pose prior, matching binary features and solving a
RANSAC-refined 2D-3D alignment. Evaluation covers reconstruction PSNR,
trajectory/rotation error and the map-vs-image-database storage footprint.
"""

from ._kernels import BACKEND
from .geom import CameraModel, Pose, Ray, look_at, rotation_error
from .field import (RadianceField, RenderOptions, RenderedView, load_field,
                    psnr, render_image, render_ray, render_rays, save_field)
from .training import TrainConfig, TrainReport, loss_and_gradient, train

__version__ = "0.1.0"
