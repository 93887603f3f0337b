"""Whole-body PET/CT lesion segmentation toolkit.

NIfTI I/O, spacing-aware resampling, intensity/spatial augmentation, a numpy
3D U-Net forward pass, sliding-window ensemble inference and the autoPET
evaluation metrics.
"""
from .errors import LesionSegError
from .volume import Kind, MultiChannelVolume, Volume3D, index_at, voxel_volume_ml

__version__ = "0.1.0"

__all__ = ["Kind", "LesionSegError", "MultiChannelVolume", "Volume3D", "index_at", "voxel_volume_ml"]
