"""Named hyperparameter presets for the published experiment grid.

Each preset fixes algorithm, topology, agent count, compressor, consensus
step-size and the optimizer recipe (Nesterov momentum 0.9, weight decay 1e-4,
batch 32 per agent, beta 0.999). Names read
``paper/<dataset>-<topology><agents>-<compressor>-<algorithm>``, e.g.
``paper/cifar10-ring16-topk90-adag``. The learning task itself stays the
desk-scale one selected in the config.
"""

from __future__ import annotations

__all__ = ["PRESETS", "preset"]

# (lr0, epochs) per dataset
_RECIPES = {
    "cifar10": (0.1, 200),
    "cifar100": (0.1, 100),
    "fmnist": (0.01, 100),
    "imagenette": (0.01, 100),
    "imagenet": (0.1, 50),
}

_COMPRESSORS = {
    "topk90": "topk:0.9",
    "topk99": "topk:0.99",
    "quant8": "quant:8",
    "quant4": "quant:4",
    "quant2": "quant:2",
}

_TOPOLOGIES = {
    "ring16": ("ring", 16),
    "ring32": ("ring", 32),
    "dyck32": ("dyck32", 32),
    "torus32": ("torus:4x8", 32),
}

# dataset -> topology -> algorithm -> {compressor key: gamma}
_GAMMAS = {
    "cifar10": {
        "ring16": {
            "deepsqueeze": {"topk90": 0.05, "topk99": 0.01, "quant8": 0.1, "quant4": 0.02, "quant2": 0.01},
            "choco": {"topk90": 0.2, "topk99": 0.0375, "quant8": 0.7, "quant4": 0.1, "quant2": 0.025},
            "adag": {"topk90": 0.01, "topk99": 0.001, "quant8": 0.008, "quant4": 0.002, "quant2": 0.0008},
        },
        "ring32": {
            "deepsqueeze": {"topk90": 0.1, "topk99": 0.02, "quant8": 0.1, "quant4": 0.08, "quant2": 0.03},
            "choco": {"topk90": 0.2, "topk99": 0.05, "quant8": 0.8, "quant4": 0.1, "quant2": 0.025},
            "adag": {"topk90": 0.004, "topk99": 0.0008, "quant8": 0.02, "quant4": 0.002, "quant2": 0.0008},
        },
        "dyck32": {
            "choco": {"topk90": 0.15, "topk99": 0.03},
            "adag": {"topk90": 0.004, "topk99": 0.0008},
        },
        "torus32": {
            "choco": {"topk90": 0.15, "topk99": 0.03},
            "adag": {"topk90": 0.004, "topk99": 0.001},
        },
    },
    "fmnist": {
        "ring16": {
            "choco": {"topk90": 0.1, "topk99": 0.01},
            "adag": {"topk90": 0.002, "topk99": 0.001},
        },
    },
    "cifar100": {
        "ring16": {
            "choco": {"topk90": 0.2, "topk99": 0.04},
            "adag": {"topk90": 0.01, "topk99": 0.001},
        },
    },
    "imagenette": {
        "ring16": {
            "choco": {"topk90": 0.1, "topk99": 0.06},
            "adag": {"topk90": 0.005, "topk99": 0.0003},
        },
    },
    "imagenet": {
        "ring16": {
            "choco": {"topk90": 0.3, "topk99": 0.03},
            "adag": {"topk90": 0.001, "topk99": 0.0001},
        },
    },
}


def _build() -> dict[str, dict]:
    out = {}
    for dataset, by_topo in _GAMMAS.items():
        lr, epochs = _RECIPES[dataset]
        base = {"lr": lr, "epochs": epochs, "batch": 32, "momentum": 0.9, "nesterov": True,
                "weight_decay": 1e-4, "beta": 0.999}
        for topo_key, by_alg in by_topo.items():
            topology, agents = _TOPOLOGIES[topo_key]
            # full-communication baseline, gamma = 1
            out[f"paper/{dataset}-{topo_key}-full-dsgd"] = dict(
                base, algorithm="dsgd", topology=topology, agents=agents, compressor="none", gamma=1.0
            )
            for alg, by_comp in by_alg.items():
                for comp_key, gamma in by_comp.items():
                    out[f"paper/{dataset}-{topo_key}-{comp_key}-{alg}"] = dict(
                        base,
                        algorithm=alg,
                        topology=topology,
                        agents=agents,
                        compressor=_COMPRESSORS[comp_key],
                        gamma=gamma,
                    )
    return out


PRESETS = _build()


def preset(name: str) -> dict:
    try:
        return dict(PRESETS[name])
    except KeyError:
        raise KeyError(f"unknown preset {name!r}; {len(PRESETS)} presets available") from None
