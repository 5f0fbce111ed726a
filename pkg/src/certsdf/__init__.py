"""certsdf: guaranteed weak signed distance functions from voxel occupancy grids.

Occupancy smoothed by Gaussian convolution doubles as the expected noisy
classification of the scene, which turns certified-radius computation into
a cheap grid operation: the weak SDF is sigma * PhiInv(smoothed occupancy),
positive inside.  The package also renders the derived density field and
extracts isosurface meshes from the weak SDF.
"""

from .certify import (DEFAULT_EPS_P, McCertificate, WeakSdfGrid,
                      certify_monte_carlo, inverse_normal_cdf, normal_cdf,
                      validate_convolution_vs_mc, weak_sdf, weak_sdf_at)
from .fit import FitConfig, FitReport, fit, loss_and_grad
from .grid import (Box, Halfspace, Sphere, VoxelGrid, centered_geometry,
                   hard_classify, load_grid, make_analytic_grid, sample_trilinear,
                   save_grid)
from .mesh import TriangleMesh, marching_cubes, read_mesh, write_mesh
from .metrics import PointCloud, chamfer, chamfer_brute_force, psnr, sample_mesh
from .oracle import (analytic_sdf, brute_force_distance_transform,
                     exact_distance_transform, sample_sphere_surface)
from .render import (Camera, Ray, RenderedImage, density_field_from_grid,
                     generate_rays, load_camera, look_at_camera, march_ray,
                     read_ppm, render, save_camera, write_ppm)
from .smoothing import (SmoothedGrid, SmoothingConfig, gaussian_kernel_1d,
                        smooth, smooth_direct_reference)
from .transfer import TransferConfig, density, occupancy_soft, transfer_grad

__version__ = "0.1.0"
