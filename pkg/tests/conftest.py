import json
import time
from pathlib import Path

import pytest

GOLDEN = Path(__file__).parent / "golden"
CACHE = Path(__file__).parent / ".trained_cache"


@pytest.fixture(scope="session")
def golden_dir() -> Path:
    GOLDEN.mkdir(exist_ok=True)
    return GOLDEN


@pytest.fixture(scope="session")
def trained_bundle():
    """Toy denoiser trained on the default 200-clip recipe, cached on disk.

    Returns (weights, train_minutes, history).  The cache key covers the
    training configuration, so edits to the recipe retrain automatically.
    """
    from motionforge.diffcore.checkpoint import load_checkpoint, save_checkpoint
    from motionforge.diffcore.training import TrainConfig, make_blob_dataset, train

    recipe = {
        "clips": 200,
        "dataset_seed": 11,
        "steps": 12000,
        "batch": 8,
        "lr": 1e-3,
        "seed": 0,
        "layout": 4,
    }
    CACHE.mkdir(exist_ok=True)
    key = "-".join(f"{k}{v}" for k, v in sorted(recipe.items()))
    ckpt = CACHE / f"toy_{key}.ckpt"
    meta = CACHE / f"toy_{key}.json"
    if ckpt.exists() and meta.exists():
        info = json.loads(meta.read_text())
        return load_checkpoint(ckpt), info["train_minutes"], info["history"]

    dataset = make_blob_dataset(recipe["clips"], seed=recipe["dataset_seed"])
    t0 = time.perf_counter()
    weights, history = train(
        dataset,
        TrainConfig(steps=recipe["steps"], batch_size=recipe["batch"],
                    learning_rate=recipe["lr"], seed=recipe["seed"]),
    )
    minutes = (time.perf_counter() - t0) / 60.0
    save_checkpoint(weights, ckpt)
    meta.write_text(json.dumps({"train_minutes": minutes, "history": history}))
    return weights, minutes, history


@pytest.fixture(scope="session")
def trained_weights(trained_bundle):
    return trained_bundle[0]


@pytest.fixture(scope="session")
def trained_model(trained_weights):
    from motionforge.longgen import model_with_flag

    return model_with_flag(trained_weights.to_model(), True)
