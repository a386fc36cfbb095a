"""Experiment configuration files.

A config is a TOML document with the sections ``plant``, ``reference``,
``surface``, ``hyper``, ``network`` and ``run``. Every section is optional;
missing keys take the defaults of the corresponding dataclass. Unknown keys
are rejected, and errors name the offending line where possible.
"""
import hashlib
import json
import re
import sys
from dataclasses import asdict, dataclass, field, fields
from importlib import resources
from pathlib import Path
from typing import Optional, Tuple

if sys.version_info >= (3, 11):
    import tomllib
else:
    import tomli as tomllib

from .harness import Hyperparameters, TrackingTask
from .net import ActorSpec, CriticSpec, layers
from .plant import MassSpringDamper, MassSpringDamperParams, SinusoidReference
from .smc import SurfaceSpec

PRESETS = ("paper-msd", "desk-msd")

NETWORK_SHAPES = {
    "desk": {
        "actor_hidden": [[64, "relu"], [64, "relu"]],
        "critic_state": [[64, "relu"]],
        "critic_action": [[64, "relu"]],
        "critic_trunk": [[64, "relu"]],
    },
    "full": {
        "actor_hidden": [[512, "relu"], [512, "relu"], [512, "relu"], [64, "linear"]],
        "critic_state": [[512, "relu"]] * 3,
        "critic_action": [[512, "relu"]] * 3,
        "critic_trunk": [[512, "relu"]] * 2,
    },
}


class ConfigError(ValueError):
    pass


@dataclass
class RunSettings:
    seeds: Tuple[int, ...] = (0,)
    initial_state: Tuple[float, ...] = (0.0, 0.0)
    out_dir: str = "runs/experiment"
    use_kernel: bool = True

    def __post_init__(self):
        self.seeds = tuple(int(s) for s in self.seeds)
        self.initial_state = tuple(float(v) for v in self.initial_state)
        if not self.seeds:
            raise ValueError("at least one seed is required")


@dataclass
class ExperimentConfig:
    name: str = "experiment"
    plant: MassSpringDamperParams = field(default_factory=MassSpringDamperParams)
    reference: dict = field(default_factory=lambda: {"amplitude": 1.0, "omega": 1.0, "phase": 0.0, "offset": -1.0})
    surface: SurfaceSpec = field(default_factory=SurfaceSpec)
    hyper: Hyperparameters = field(default_factory=Hyperparameters)
    actor: ActorSpec = field(default_factory=ActorSpec)
    critic: CriticSpec = field(default_factory=CriticSpec)
    run: RunSettings = field(default_factory=RunSettings)

    # -- construction -------------------------------------------------------

    def build_task(self, use_kernel=None) -> TrackingTask:
        if use_kernel is None:
            use_kernel = self.run.use_kernel
        return TrackingTask(
            MassSpringDamper(self.plant),
            self.surface,
            SinusoidReference(**self.reference),
            ts=self.hyper.ts,
            substeps=self.hyper.substeps,
            use_kernel=use_kernel,
        )

    def with_overrides(self, seed=None, episodes=None, alpha_actor=None, alpha_critic=None, out_dir=None):
        d = self.to_dict()
        if seed is not None:
            d["run"]["seeds"] = [int(seed)]
        if out_dir is not None:
            d["run"]["out_dir"] = str(out_dir)
        for key, value in (("episodes", episodes), ("alpha_actor", alpha_actor), ("alpha_critic", alpha_critic)):
            if value is not None:
                d["hyper"][key] = value
        return from_dict(d)

    # -- serialization -----------------------------------------------------

    def to_dict(self):
        hyper = asdict(self.hyper)
        hyper["q"] = list(hyper["q"])
        return {
            "name": self.name,
            "plant": {"kind": "mass-spring-damper", **asdict(self.plant)},
            "reference": {"kind": "sinusoid", **self.reference},
            "surface": {"a": list(self.surface.a), "mu_hat": self.surface.mu_hat, "eps_g": self.surface.eps_g},
            "hyper": hyper,
            "network": {
                "actor_hidden": [ls.as_list() for ls in self.actor.hidden],
                "mu_scale": self.actor.mu_scale,
                "critic_state": [ls.as_list() for ls in self.critic.state_branch],
                "critic_action": [ls.as_list() for ls in self.critic.action_branch],
                "critic_trunk": [ls.as_list() for ls in self.critic.trunk],
            },
            "run": {
                "seeds": list(self.run.seeds),
                "initial_state": list(self.run.initial_state),
                "out_dir": self.run.out_dir,
                "use_kernel": self.run.use_kernel,
            },
        }

    def content_hash(self):
        """Git blob hash of the canonical JSON form."""
        blob = json.dumps(self.to_dict(), sort_keys=True, separators=(",", ":")).encode()
        return hashlib.sha1(b"blob %d\0" % len(blob) + blob).hexdigest()


_TOP = {"name", "plant", "reference", "surface", "hyper", "network", "run"}
_NETWORK_KEYS = {"shape", "actor_hidden", "mu_scale", "critic_state", "critic_action", "critic_trunk"}


def _line_of(text, section, key):
    """1-based line where ``key`` is assigned inside ``[section]``, if found."""
    if text is None:
        return None
    current = None
    pat = re.compile(r"^\s*" + re.escape(str(key)) + r"\s*=")
    for no, line in enumerate(text.splitlines(), start=1):
        head = re.match(r"^\s*\[([^\]]+)\]\s*(#.*)?$", line)
        if head:
            current = head.group(1).strip()
            if key is None and current == section:
                return no
            continue
        if current == section and key is not None and pat.match(line):
            return no
    return None


def _fail(message, source, text, section=None, key=None):
    line = _line_of(text, section, key) if (section or key) else None
    where = str(source) if source else "<config>"
    if line is not None:
        where += f":{line}"
    raise ConfigError(f"{where}: {message}")


def _section(d, name, allowed, source, text):
    sec = d.get(name, {})
    if not isinstance(sec, dict):
        _fail(f"[{name}] must be a table", source, text, name, None)
    for key in sec:
        if key not in allowed:
            _fail(f"unknown key '{key}' in [{name}]; allowed: {', '.join(sorted(allowed))}", source, text, name, key)
    return sec


def from_dict(d, source=None, text=None) -> ExperimentConfig:
    for key in d:
        if key not in _TOP:
            _fail(f"unknown top-level key '{key}'", source, text, None, key)

    plant_keys = {f.name for f in fields(MassSpringDamperParams)} | {"kind"}
    ref_keys = {"kind", "amplitude", "omega", "phase", "offset"}
    surface_keys = {"a", "mu_hat", "eps_g"}
    hyper_keys = {f.name for f in fields(Hyperparameters)}
    run_keys = {f.name for f in fields(RunSettings)}

    plant = dict(_section(d, "plant", plant_keys, source, text))
    reference = dict(_section(d, "reference", ref_keys, source, text))
    surface = dict(_section(d, "surface", surface_keys, source, text))
    hyper = dict(_section(d, "hyper", hyper_keys, source, text))
    network = dict(_section(d, "network", _NETWORK_KEYS, source, text))
    run = dict(_section(d, "run", run_keys, source, text))

    if plant.pop("kind", "mass-spring-damper") != "mass-spring-damper":
        _fail("only plant kind 'mass-spring-damper' is available", source, text, "plant", "kind")
    if reference.pop("kind", "sinusoid") != "sinusoid":
        _fail("only reference kind 'sinusoid' is available", source, text, "reference", "kind")

    def build(section, key_hint, factory, *args, **kwargs):
        try:
            return factory(*args, **kwargs)
        except (TypeError, ValueError) as exc:
            # point at the first key of the section mentioned in the message
            bad = next((k for k in key_hint if k in str(exc)), None)
            _fail(f"[{section}] {exc}", source, text, section, bad)

    shape_name = network.pop("shape", None)
    shape = dict(NETWORK_SHAPES["desk"])
    if shape_name is not None:
        if shape_name not in NETWORK_SHAPES:
            _fail(f"unknown network shape '{shape_name}'; expected one of {sorted(NETWORK_SHAPES)}", source, text, "network", "shape")
        shape = dict(NETWORK_SHAPES[shape_name])
    shape.update(network)

    ref_full = {"amplitude": 1.0, "omega": 1.0, "phase": 0.0, "offset": -1.0}
    for key, value in reference.items():
        if not isinstance(value, (int, float)) or isinstance(value, bool):
            _fail(f"reference.{key} must be a number", source, text, "reference", key)
        ref_full[key] = float(value)

    plant_p = build("plant", plant, MassSpringDamperParams, **{k: float(v) for k, v in plant.items()}) if _all_numbers(plant, "plant", source, text) else None
    surface_s = build("surface", surface, SurfaceSpec, **surface)
    hyper_h = build("hyper", hyper, Hyperparameters, **hyper)
    n = len(surface_s.a)
    actor = build("network", ["actor_hidden", "mu_scale"], ActorSpec, n, layers(*shape["actor_hidden"]), float(shape.get("mu_scale", 1.0)))
    critic = build(
        "network",
        ["critic_state", "critic_action", "critic_trunk"],
        CriticSpec,
        n,
        layers(*shape["critic_state"]),
        layers(*shape["critic_action"]),
        layers(*shape["critic_trunk"]),
    )
    run_s = build("run", run, RunSettings, **run)
    if len(run_s.initial_state) != n:
        _fail(f"initial_state needs {n} components", source, text, "run", "initial_state")
    if n != 2:
        _fail("the mass-spring-damper plant has 2 states; surface.a needs 2 coefficients", source, text, "surface", "a")
    name = d.get("name", "experiment")
    if not isinstance(name, str):
        _fail("name must be a string", source, text, None, "name")
    return ExperimentConfig(name, plant_p, ref_full, surface_s, hyper_h, actor, critic, run_s)


def _all_numbers(section, name, source, text):
    for key, value in section.items():
        if not isinstance(value, (int, float)) or isinstance(value, bool):
            _fail(f"{name}.{key} must be a number", source, text, name, key)
    return True


def loads(text, source=None) -> ExperimentConfig:
    try:
        d = tomllib.loads(text)
    except tomllib.TOMLDecodeError as exc:
        raise ConfigError(f"{source or '<config>'}: {exc}") from exc
    return from_dict(d, source, text)


def load(path) -> ExperimentConfig:
    path = Path(path)
    try:
        text = path.read_text()
    except OSError as exc:
        raise ConfigError(f"{path}: cannot read config ({exc.strerror or exc})") from exc
    return loads(text, source=path)


def preset_text(name) -> str:
    if name not in PRESETS:
        raise ConfigError(f"unknown preset '{name}'; available: {', '.join(PRESETS)}")
    return resources.files("smc_ddpg").joinpath("presets", f"{name}.toml").read_text()


def preset(name) -> ExperimentConfig:
    return loads(preset_text(name), source=f"preset:{name}")


def resolve(config_path: Optional[str] = None, preset_name: Optional[str] = None) -> ExperimentConfig:
    if config_path is not None:
        return load(config_path)
    return preset(preset_name or "paper-msd")
