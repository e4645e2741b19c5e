import numpy as np
import pytest
import torch

torch.set_num_threads(1)


@pytest.fixture(scope="session")
def host():
    from huealign.models import build_host

    return build_host("tiny:0")


@pytest.fixture()
def rng():
    return np.random.default_rng(1234)


def make_flat_color_image(rgb, size=128):
    """Uniform color image tensor (3, size, size) in [-1, 1]."""
    arr = np.zeros((size, size, 3), dtype=np.float32)
    arr[:] = np.asarray(rgb, dtype=np.float32)
    tensor = torch.from_numpy(arr).permute(2, 0, 1)
    return tensor * 2.0 / 255.0 - 1.0


def make_textured_image(seed, size=128):
    """Deterministic smooth random image tensor (3, size, size) in [-1, 1]."""
    gen = np.random.default_rng(seed)
    coarse = gen.uniform(-1, 1, size=(3, size // 16, size // 16)).astype(np.float32)
    image = torch.from_numpy(coarse)
    image = torch.nn.functional.interpolate(
        image.unsqueeze(0), size=(size, size), mode="bilinear", align_corners=False
    ).squeeze(0)
    return image.clamp(-1, 1)
