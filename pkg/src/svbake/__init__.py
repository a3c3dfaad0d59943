"""Multiview SVBRDF texturing core: condition buffers, depth reprojection,
atlas merging, perceptual metrics and relighting."""

from .atlas import (
    AtlasGeometry,
    BlendWeights,
    SVBRDFView,
    SVBRDFViewSet,
    TextureAtlas,
    bake_atlas,
    fill_holes,
    rasterize_uv_charts,
    sample_atlas,
)
from .brdf import BRDFSample, PointLight, shade_brdf
from .camera import (
    Camera,
    OrbitSpec,
    camera_from_fov,
    load_cameras,
    look_at,
    orbit_cameras,
    save_cameras,
)
from .errors import (
    ColorspaceError,
    ConfigError,
    CorruptImageError,
    MeshParseError,
    MissingUVError,
    RangeError,
    SvbakeError,
    UnsupportedFormatError,
)
from .flip import flip_error, flip_mean
from .image import (
    ImageF,
    LINEAR_RGB,
    SCALAR,
    SRGB,
    YCXCZ,
    center_crop_square,
    linear_to_srgb,
    resize_box,
    srgb_to_linear,
    srgb_to_ycxcz,
    tonemap_reinhard,
)
from .imgio import (
    load_bundle,
    load_depth,
    load_image,
    load_mask,
    save_bundle,
    save_depth,
    save_image,
    save_mask,
)
from .mesh import TriangleMesh, load_mesh, save_mesh
from .metrics import (
    FlickerReport,
    LossWeights,
    flicker_metric,
    flip_l1,
    psnr,
    scale_invariant_normalize,
    si_psnr,
    ssim,
    training_loss,
)
from .raster import GBuffer, contour_map, rasterize_gbuffer
from .render import render_view
from .warp import WarpResult, accumulate_views, hole_stats, warp_view

__version__ = "0.1.0"
