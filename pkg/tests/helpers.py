import numpy as np

from lesionseg import nifti
from lesionseg.unet import ArchDescriptor, init_weights, write_weights_file
from lesionseg.volume import Kind, Volume3D

TOY_ARCH = ArchDescriptor(channels=(4, 8), in_channels=2, out_channels=2)


def make_case(case_dir, shape=(24, 20, 16), spacing=(1.5, 1.01821005, 1.01821005), seed=0, seg=True):
    """Synthetic autoPET-style case: CT, SUV and a blob-shaped lesion mask."""
    rng = np.random.default_rng(seed)
    case_dir.mkdir(parents=True, exist_ok=True)
    z, y, x = np.indices(shape)
    c = [s / 2 for s in shape]
    blob = ((z - c[0]) ** 2 + (y - c[1]) ** 2 + (x - c[2]) ** 2) < (min(shape) / 5) ** 2
    ct = rng.normal(0, 200, size=shape) - 500 * blob
    pet = np.abs(rng.normal(1, 0.3, size=shape)) + 8 * blob
    nifti.save(Volume3D(ct, spacing), case_dir / nifti.CT_NAME)
    nifti.save(Volume3D(pet, spacing), case_dir / nifti.PET_NAME)
    if seg:
        nifti.save(Volume3D(blob.astype(np.uint8), spacing, Kind.LABEL), case_dir / nifti.SEG_NAME)
    return case_dir


def make_folds(directory, n=2, arch=TOY_ARCH):
    paths = []
    for i in range(n):
        p = directory / f"fold_{i}.unw"
        write_weights_file(init_weights(arch, seed=100 + i), p)
        paths.append(str(p))
    return paths
