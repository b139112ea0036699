"""Instance JSON files: {"users", "arms", "probs", "winners", "spec"}.

Floats are written with Python's shortest round-trip repr, so a saved instance
reloads bit-for-bit and identical instances serialize to identical bytes.
"""
from __future__ import annotations

import json
import os
from pathlib import Path

import numpy as np

import config
from resources.core import PreferenceTensor, WinnerSet, derive_scores, find_true_winners
from resources.envgen import Instance, InstanceSpec
from resources.errors import InstanceError


def resolve_resource_path(filename: str | os.PathLike, resource_dir: str | None = None) -> Path:
    """Use the path as given if it exists, else look it up by name inside the resource directory."""
    path = Path(filename)
    if path.exists():
        return path
    name = str(filename)
    if ".." in name or name.startswith("/"):
        raise FileNotFoundError(f"Error: File '{name}' not found.")
    candidate = Path(resource_dir or config.RESOURCE_DIR) / name
    if not candidate.exists():
        raise FileNotFoundError(f"Error: File '{name}' not found.")
    return candidate


def instance_to_dict(instance: Instance) -> dict:
    data = {
        "users": instance.num_users,
        "arms": instance.num_arms,
        "probs": instance.tensor.probs.tolist(),
        "winners": list(instance.winners.winners),
    }
    if instance.spec is not None:
        data["spec"] = instance.spec.to_dict()
    return data


def dumps_instance(instance: Instance) -> str:
    return json.dumps(instance_to_dict(instance), separators=(",", ":")) + "\n"


def save_instance(instance: Instance, path: str | os.PathLike) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(dumps_instance(instance), encoding="utf-8")
    return path


def instance_from_dict(data: dict) -> Instance:
    try:
        users, arms = int(data["users"]), int(data["arms"])
        probs = np.asarray(data["probs"], dtype=np.float64)
    except (KeyError, TypeError, ValueError) as exc:
        raise InstanceError(f"malformed instance document: {exc}") from exc
    if probs.shape != (users, arms, arms):
        raise InstanceError(f"probs has shape {probs.shape}, expected ({users}, {arms}, {arms})")
    tensor = PreferenceTensor(probs)
    spec = InstanceSpec.from_dict(data["spec"]) if data.get("spec") else None

    true_winners = find_true_winners(tensor)
    if true_winners is None:
        raise InstanceError("no Condorcet winner for at least one user; refusing the instance")
    if data.get("winners") is not None:
        stated = WinnerSet(tuple(data["winners"]))
        if stated != true_winners:
            raise InstanceError(f"stated winners {stated.winners} differ from the tensor's {true_winners.winners}")
    return Instance(tensor, true_winners, derive_scores(tensor, true_winners), spec)


def load_instance(path: str | os.PathLike) -> Instance:
    resolved = resolve_resource_path(path)
    try:
        data = json.loads(resolved.read_text(encoding="utf-8"))
    except json.JSONDecodeError as exc:
        raise InstanceError(f"Error processing instance file '{resolved}': {exc}") from exc
    return instance_from_dict(data)
