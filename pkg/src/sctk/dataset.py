"""Per-slice synthetic data generation shared by the CLI and scripts."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .core import EnergyGrid
from .fbp import FilterConfig, fbp_stack
from .phantom import (MaterialSpectrum, NoiseConfig, SceneConfig, rasterize, sample_scene,
                      simulate_scan, subsample_indices)
from .projector import ScanGeometry, parallel_geometry


@dataclass(frozen=True)
class GeometryConfig:
    image_size: int = 64
    num_views_dense: int = 74
    num_views_sparse: int = 9
    pixel_size_cm: float = 0.1

    def dense(self) -> ScanGeometry:
        return parallel_geometry(self.image_size, self.num_views_dense, self.pixel_size_cm)

    def sparse(self) -> ScanGeometry:
        dense = self.dense()
        idx = subsample_indices(self.num_views_dense, self.num_views_sparse)
        return dense.with_angles(dense.angles[idx])


@dataclass
class SliceData:
    seed: int
    phantom: np.ndarray      # S x N x N
    dense_sino: np.ndarray   # S x V_dense x D
    sparse_sino: np.ndarray  # S x V_sparse x D
    fbp_sparse: np.ndarray   # S x N x N


def generate_slice(seed: int, geometry: GeometryConfig, grid: EnergyGrid, materials: list[MaterialSpectrum],
                   scene_cfg: SceneConfig = SceneConfig(), noise: NoiseConfig = NoiseConfig(),
                   filter_cfg: FilterConfig = FilterConfig()) -> SliceData:
    scene = sample_scene(seed, scene_cfg, materials)
    phantom = rasterize(scene, geometry.image_size, grid, geometry.pixel_size_cm)
    dense_geo = geometry.dense()
    dense = simulate_scan(phantom, dense_geo, noise, seed).data
    idx = subsample_indices(geometry.num_views_dense, geometry.num_views_sparse)
    sparse = dense[:, idx, :]
    fbp = fbp_stack(sparse, geometry.sparse(), filter_cfg)
    return SliceData(seed, phantom.data, dense, sparse, fbp)
