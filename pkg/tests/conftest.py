import sys
from pathlib import Path

import numpy as np
import pytest

sys.path.insert(0, str(Path(__file__).parent))

from lorastyle import dataset
from lorastyle.lora_io import (
    LoraLayer,
    LoraModel,
    classify_layer,
)


def make_model(arrays: dict[str, tuple[np.ndarray, np.ndarray]]) -> LoraModel:
    """Build a LoraModel from {layer_name: (A, B)} float arrays."""
    layers = [
        LoraLayer(
            layer_name=name,
            A=np.asarray(A, dtype=np.float64),
            B=np.asarray(B, dtype=np.float64),
            subnet=classify_layer(name),
        )
        for name, (A, B) in sorted(arrays.items())
    ]
    return LoraModel(layers=layers, metadata={})


def random_model(rng: np.random.Generator, n_layers: int = 3, rank: int = 2) -> LoraModel:
    """Random rank-r model with mixed subnet names, values on the f32 grid."""
    suffixes = ["attn1_to_q", "attn2_to_k", "ff_net_0_proj", "proj_out"]
    arrays = {}
    for i in range(n_layers):
        name = f"lora_unet_blocks_{i}_{suffixes[i % len(suffixes)]}"
        n = int(rng.integers(rank, rank + 6))
        m = int(rng.integers(rank, rank + 6))
        A = rng.standard_normal((rank, n)).astype(np.float32).astype(np.float64)
        B = rng.standard_normal((m, rank)).astype(np.float32).astype(np.float64)
        arrays[name] = (A, B)
    return make_model(arrays)


@pytest.fixture(scope="session")
def small_population(tmp_path_factory):
    """A compact synthetic population shared by cross-module tests."""
    out = tmp_path_factory.mktemp("pop")
    spec = dataset.SynthSpec(
        n_artists=6,
        m_train=6,
        m_cali=2,
        m_val=2,
        m_cali_diff=2,
        m_test_diff=2,
        ambient_dim=600,
        signal_dim=5,
        intra_cluster_std=0.5,
        drift_scale=1.25,
        drift_offset=0.3,
        seed=21,
    )
    manifest = dataset.generate_synthetic(spec, out)
    return spec, manifest
