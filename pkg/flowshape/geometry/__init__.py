"""Meshes, analytic SDFs, sampling, isosurfaces and NDC normalization"""

from .mesh import TriMesh, concatenate, load_obj, save_obj
from .sdf import ShapeSpec, mesh_shape, sdf_eval, union_of, yaw_rotation
from .isosurface import SdfGrid, marching_cubes
from .ndc import NdcTransform, normalize_mesh, normalize_to_ndc, rescale_mesh
from .sampling import SurfaceSamples, sample_edge_salient, sample_surface_uniform
