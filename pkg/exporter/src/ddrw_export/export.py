"""Checkpoint -> DDRW conversion and logit-parity verification."""

import json
import math
import shutil
import subprocess
import tempfile

import numpy as np
import torch

from . import reference
from .errors import (
    ConditionalModelError,
    EngineMissingError,
    ExporterError,
    MissingTensorError,
)
from .writer import write_ddrw

ENGINE = "discdream"


def load_state_dict(source_path):
    """Read a torch checkpoint: a bare state dict or one nested under 'D'."""
    obj = torch.load(source_path, map_location="cpu", weights_only=False)
    if isinstance(obj, dict) and "D" in obj:
        obj = obj["D"]
    if hasattr(obj, "state_dict"):
        obj = obj.state_dict()
    if not isinstance(obj, dict) or not obj:
        raise ExporterError("checkpoint does not contain a tensor dictionary")
    sd = {k: torch.as_tensor(v) for k, v in obj.items() if torch.is_tensor(v) or hasattr(v, "shape")}
    if any(k.startswith("mapping.") for k in sd):
        raise ConditionalModelError("checkpoint contains a mapping network (conditional model)")
    # per-block FIR buffers carry no information; drop them
    sd = {k: v for k, v in sd.items() if not k.endswith("resample_filter")}
    if "b4.out.weight" in sd and sd["b4.out.weight"].shape[0] != 1:
        raise ConditionalModelError(
            "b4.out produces %d logits; only unconditional (single-logit) "
            "discriminators are supported" % sd["b4.out.weight"].shape[0])
    return sd


def bake(state_dict, arch):
    """Fold the equalized-learning-rate 1/sqrt(fan_in) gains into the weights."""
    out = {}
    for name, shape in reference.expected_shapes(arch).items():
        t = state_dict[name].detach().to(torch.float32).numpy()
        if name.endswith(".weight"):
            t = t * np.float32(1.0 / math.sqrt(reference.fan_in(shape)))
        out[name] = t.astype(np.float32)
    return out


def export(source_path, out_path):
    """Convert a checkpoint to DDRW; returns the report dict (sans verify)."""
    sd = load_state_dict(source_path)
    arch = reference.detect_arch(sd)
    baked = bake(sd, arch)
    write_ddrw(out_path, arch, baked)
    return {
        "source": str(source_path),
        "output": str(out_path),
        "arch": arch,
        "tensor_count": len(baked),
        "mapping": {name: name for name in baked},
    }


def _engine_logit(ddrw_path, probe):
    exe = shutil.which(ENGINE)
    if exe is None:
        raise EngineMissingError("%r not found on PATH" % ENGINE)
    with tempfile.NamedTemporaryFile(suffix=".npy") as fh:
        np.save(fh, probe)
        fh.flush()
        proc = subprocess.run(
            [exe, "logits", "--weights", str(ddrw_path), "--input", fh.name],
            capture_output=True, text=True,
        )
    if proc.returncode != 0:
        raise ExporterError("engine failed (exit %d): %s" % (proc.returncode, proc.stderr.strip()))
    return float(json.loads(proc.stdout)["logit"])


def verify(source_path, ddrw_path, probes=4):
    """Max abs logit difference between the checkpoint and the DDRW engine
    over `probes` seeded random images."""
    sd = load_state_dict(source_path)
    arch = reference.detect_arch(sd)
    r, c = arch["img_resolution"], arch["img_channels"]
    worst = 0.0
    for seed in range(probes):
        rng = np.random.Generator(np.random.PCG64(seed))
        probe = rng.uniform(-1.0, 1.0, (1, c, r, r)).astype(np.float32)
        ref = reference.forward_logit(sd, arch, probe)
        eng = _engine_logit(ddrw_path, probe)
        if not (math.isfinite(ref) and math.isfinite(eng)):
            raise ExporterError("non-finite logit (reference %r, engine %r)" % (ref, eng))
        worst = max(worst, abs(ref - eng))
    return worst
