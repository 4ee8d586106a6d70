"""Flat binary checkpointing: one npz of arrays plus a JSON shape manifest.

Array keys are ordered as listed in the manifest: for every actor unit, each
branch net's weight/bias pairs layer by layer, then its ADAM moments; then
every critic bundle (net, target net, moments). RNG stream states and scalar
counters live in the JSON part.
"""

from __future__ import annotations

import json
from pathlib import Path

import numpy as np

__all__ = ["save_checkpoint", "load_checkpoint"]


def _net_arrays(prefix: str, net) -> dict:
    out = {}
    for i, (w, b) in enumerate(zip(net.weights, net.biases)):
        out[f"{prefix}/layer{i}/w"] = w
        out[f"{prefix}/layer{i}/b"] = b
    return out


def _opt_arrays(prefix: str, opt) -> dict:
    out = {}
    for t, (m, v) in enumerate(zip(opt.m, opt.v)):
        out[f"{prefix}/m{t}"] = m
        out[f"{prefix}/v{t}"] = v
    return out


def agent_arrays(agent) -> tuple[dict, dict]:
    """Collect (arrays, meta) for any agent kind."""
    arrays: dict[str, np.ndarray] = {}
    meta: dict = {"opt_steps": {}, "critic_updates": {}, "rng": {}}
    actors, critics = agent.components()
    for name, unit in actors:
        for j, net in enumerate(unit.nets):
            arrays.update(_net_arrays(f"{name}/net{j}", net))
        arrays.update(_opt_arrays(f"{name}/opt", unit.opt))
        meta["opt_steps"][name] = unit.opt.step
    for name, bundle in critics:
        arrays.update(_net_arrays(f"{name}/net", bundle.net))
        arrays.update(_net_arrays(f"{name}/target", bundle.target))
        arrays.update(_opt_arrays(f"{name}/opt", bundle.opt))
        meta["opt_steps"][name] = bundle.opt.step
        meta["critic_updates"][name] = bundle.updates
    for name, gen in agent.rng_streams().items():
        meta["rng"][name] = json.loads(json.dumps(gen.bit_generator.state))
    return arrays, meta


def restore_agent(agent, arrays: dict, meta: dict) -> None:
    def load_net(prefix, net):
        for i in range(len(net.weights)):
            net.weights[i][...] = arrays[f"{prefix}/layer{i}/w"]
            net.biases[i][...] = arrays[f"{prefix}/layer{i}/b"]

    def load_opt(prefix, opt, step):
        for t in range(len(opt.m)):
            opt.m[t][...] = arrays[f"{prefix}/m{t}"]
            opt.v[t][...] = arrays[f"{prefix}/v{t}"]
        opt.step = step

    actors, critics = agent.components()
    for name, unit in actors:
        for j, net in enumerate(unit.nets):
            load_net(f"{name}/net{j}", net)
        load_opt(f"{name}/opt", unit.opt, meta["opt_steps"][name])
    for name, bundle in critics:
        load_net(f"{name}/net", bundle.net)
        load_net(f"{name}/target", bundle.target)
        load_opt(f"{name}/opt", bundle.opt, meta["opt_steps"][name])
        bundle.updates = meta["critic_updates"][name]
    for name, gen in agent.rng_streams().items():
        state = meta["rng"].get(name)
        if state is not None:
            gen.bit_generator.state = state


def save_checkpoint(path, agent, *, step: int, episode: int,
                    extra: dict | None = None) -> None:
    """Write <path>.npz and <path>.json side by side."""
    path = Path(path)
    arrays, meta = agent_arrays(agent)
    meta.update({"step": step, "episode": episode})
    if extra:
        meta.update(extra)
    np.savez(str(path) + ".npz", **arrays)
    manifest = {
        "fields": [{"key": k, "shape": list(arrays[k].shape)} for k in arrays],
        "meta": meta,
    }
    with open(str(path) + ".json", "w") as fh:
        json.dump(manifest, fh, indent=1)


def load_checkpoint(path, agent) -> dict:
    """Restore agent state in place; returns the checkpoint meta."""
    path = Path(path)
    with open(str(path) + ".json") as fh:
        manifest = json.load(fh)
    with np.load(str(path) + ".npz") as data:
        arrays = {k: data[k] for k in data.files}
    restore_agent(agent, arrays, manifest["meta"])
    return manifest["meta"]
