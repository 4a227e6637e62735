"""Run configuration: INI-style sections or the equivalent JSON object.

    [problem]
    variant = minkowski

    [source]
    domain = ball
    radius = 1.0

    [target]
    domain = ball
    radius = 0.7071067811865476

    [rhs]
    rhs = quadratic_product
    eps = 0.2

    [grid]
    n_r = 65
    n_t = 128

    [solver]
    newton_tol = 1e-10

    [output]
    directory = out
    exports = ["solution", "log", "report", "dual"]

Values are read as JSON when they parse as JSON and as plain strings otherwise.
"""

from __future__ import annotations

import configparser
import copy
import dataclasses
import json
from dataclasses import dataclass, field
from pathlib import Path

from . import problem as pb
from .errors import ConfigError, InvalidProblem, IoError
from .grid import build_grid
from .solver import SolverConfig

SECTIONS = ("problem", "source", "target", "rhs", "grid", "solver", "output")
EXPORTS = ("solution", "log", "report", "dual")

DOMAIN_KEYS = {
    "ball": ("radius", "center"),
    "ellipse": ("a", "b", "center", "angle"),
    "superellipse": ("a", "b", "eps", "center", "angle"),
}
RHS_KEYS = {
    "zero": (),
    "constant": ("value",),
    "affine": ("kappa", "offset", "iota"),
    "quadratic_product": ("eps", "alpha", "beta", "center"),
}
# keys with no default; the rest fall back to the factory defaults
REQUIRED_KEYS = {
    "ball": ("radius",),
    "ellipse": ("a", "b"),
    "superellipse": ("a", "b"),
    "zero": (),
    "constant": ("value",),
    "affine": ("kappa",),
    "quadratic_product": ("eps",),
}
GRID_KEYS = ("n_r", "n_t", "stretch", "theta_order")
SOLVER_KEYS = tuple(f.name for f in dataclasses.fields(SolverConfig))


def _value(raw: str):
    try:
        return json.loads(raw)
    except json.JSONDecodeError:
        return raw.strip()


@dataclass
class RunConfig:
    variant: str = "minkowski"
    source: dict = field(default_factory=dict)
    target: dict = field(default_factory=dict)
    rhs: dict = field(default_factory=dict)
    grid: dict = field(default_factory=lambda: {"n_r": 33, "n_t": 64})
    solver: dict = field(default_factory=dict)
    output: dict = field(default_factory=lambda: {"directory": ".", "exports": list(EXPORTS)})
    base_dir: Path = field(default=Path("."), compare=False)

    # ---- parsing

    @classmethod
    def from_dict(cls, data: dict, base_dir=".") -> "RunConfig":
        unknown = set(data) - set(SECTIONS)
        if unknown:
            raise ConfigError(f"unknown section(s): {', '.join(sorted(unknown))}")
        for name in ("source", "target", "rhs"):
            if name not in data:
                raise ConfigError(f"missing required section [{name}]")
        cfg = cls(base_dir=Path(base_dir))
        cfg.variant = str(data.get("problem", {}).get("variant", "minkowski")).lower()
        extra = set(data.get("problem", {})) - {"variant"}
        if extra:
            raise ConfigError(f"unknown key(s) in [problem]: {', '.join(sorted(extra))}")
        cfg.source = dict(data["source"])
        cfg.target = dict(data["target"])
        cfg.rhs = dict(data["rhs"])
        cfg.grid = {**cfg.grid, **data.get("grid", {})}
        cfg.solver = dict(data.get("solver", {}))
        cfg.output = {**cfg.output, **data.get("output", {})}
        cfg.validate()
        return cfg

    @classmethod
    def from_text(cls, text: str, fmt: str = "ini", base_dir=".") -> "RunConfig":
        if fmt == "json":
            try:
                data = json.loads(text)
            except json.JSONDecodeError as exc:
                raise ConfigError(f"invalid JSON config: {exc}") from exc
            if not isinstance(data, dict):
                raise ConfigError("JSON config must be an object of sections")
            return cls.from_dict(data, base_dir)
        parser = configparser.ConfigParser(interpolation=None)
        parser.optionxform = str
        try:
            parser.read_string(text)
        except configparser.Error as exc:
            raise ConfigError(f"invalid config: {exc}") from exc
        data = {s: {k: _value(v) for k, v in parser[s].items()} for s in parser.sections()}
        return cls.from_dict(data, base_dir)

    @classmethod
    def load(cls, path) -> "RunConfig":
        path = Path(path)
        try:
            text = path.read_text()
        except OSError as exc:
            raise IoError(f"cannot read config {path}: {exc}") from exc
        fmt = "json" if path.suffix.lower() == ".json" or text.lstrip().startswith("{") else "ini"
        return cls.from_text(text, fmt, base_dir=path.resolve().parent)

    # ---- emitting

    def to_dict(self) -> dict:
        return {
            "problem": {"variant": self.variant},
            "source": dict(self.source),
            "target": dict(self.target),
            "rhs": dict(self.rhs),
            "grid": dict(self.grid),
            "solver": dict(self.solver),
            "output": dict(self.output),
        }

    def to_ini(self) -> str:
        lines = []
        for section, body in self.to_dict().items():
            lines.append(f"[{section}]")
            for k, v in body.items():
                lines.append(f"{k} = {v if isinstance(v, str) else json.dumps(v)}")
            lines.append("")
        return "\n".join(lines)

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=2) + "\n"

    def save(self, path) -> None:
        path = Path(path)
        text = self.to_json() if path.suffix.lower() == ".json" else self.to_ini()
        try:
            path.write_text(text)
        except OSError as exc:
            raise IoError(f"cannot write config {path}: {exc}") from exc

    def with_value(self, dotted: str, value) -> "RunConfig":
        """Copy with ``section.key`` (``rhs`` when no section is given) set to ``value``."""
        section, _, key = dotted.rpartition(".")
        section = section or "rhs"
        if section not in SECTIONS or section == "problem" and key != "variant":
            raise ConfigError(f"cannot sweep over {dotted!r}")
        new = copy.deepcopy(self)
        if section == "problem":
            new.variant = str(value)
        else:
            getattr(new, section)[key] = value
        new.validate()
        return new

    # ---- building

    def validate(self) -> None:
        try:
            pb.Variant(self.variant)
        except ValueError:
            raise ConfigError(f"[problem] variant must be minkowski or euclidean, "
                              f"got {self.variant!r}") from None
        for name in ("source", "target"):
            self._check_keys(name, getattr(self, name), "domain", DOMAIN_KEYS)
        self._check_keys("rhs", self.rhs, "rhs", RHS_KEYS)
        for section, allowed in (("grid", GRID_KEYS), ("solver", SOLVER_KEYS)):
            extra = set(getattr(self, section)) - set(allowed)
            if extra:
                raise ConfigError(f"unknown key(s) in [{section}]: {', '.join(sorted(extra))}")
        extra = set(self.output) - {"directory", "exports"}
        if extra:
            raise ConfigError(f"unknown key(s) in [output]: {', '.join(sorted(extra))}")
        exports = self.output.get("exports", [])
        if isinstance(exports, str):
            exports = [e.strip() for e in exports.split(",") if e.strip()]
            self.output["exports"] = exports
        bad = set(exports) - set(EXPORTS)
        if bad:
            raise ConfigError(f"unknown export(s): {', '.join(sorted(bad))}")

    @staticmethod
    def _check_keys(section, body, kind_key, table):
        if kind_key not in body:
            raise ConfigError(f"missing key '{kind_key}' in [{section}]")
        kind = body[kind_key]
        if kind not in table:
            raise ConfigError(f"[{section}] {kind_key} must be one of {', '.join(table)}, "
                              f"got {kind!r}")
        extra = set(body) - {kind_key} - set(table[kind])
        if extra:
            raise ConfigError(f"unknown key(s) in [{section}]: {', '.join(sorted(extra))}")
        missing = [k for k in REQUIRED_KEYS[kind] if k not in body]
        if missing:
            raise ConfigError(f"missing key(s) in [{section}] for {kind}: {', '.join(missing)}")

    def build_domain(self, section: str) -> pb.DomainSpec:
        body = dict(getattr(self, section))
        kind = body.pop("domain")
        factory = {"ball": pb.ball_domain, "ellipse": pb.ellipse_domain,
                   "superellipse": pb.superellipse_domain}[kind]
        try:
            return factory(**body)
        except (TypeError, InvalidProblem, ValueError) as exc:
            raise ConfigError(f"[{section}] {exc}") from exc

    def build_rhs(self) -> pb.RhsFunction:
        body = dict(self.rhs)
        kind = body.pop("rhs")
        factory = {"zero": pb.zero_rhs, "constant": pb.constant_rhs, "affine": pb.affine_rhs,
                   "quadratic_product": pb.quadratic_product_rhs}[kind]
        try:
            return factory(**body)
        except (TypeError, ValueError) as exc:
            raise ConfigError(f"[rhs] {exc}") from exc

    def build_problem(self) -> pb.ProblemSpec:
        try:
            return pb.ProblemSpec(self.build_domain("source"), self.build_domain("target"),
                                  self.build_rhs(), pb.Variant(self.variant))
        except InvalidProblem as exc:
            raise ConfigError(str(exc)) from exc

    def build_grid(self, prob: pb.ProblemSpec):
        try:
            return build_grid(prob.source, **self.grid)
        except (TypeError, ValueError) as exc:
            raise ConfigError(f"[grid] {exc}") from exc

    def solver_config(self) -> SolverConfig:
        try:
            return SolverConfig(**self.solver)
        except (TypeError, ValueError) as exc:
            raise ConfigError(f"[solver] {exc}") from exc

    @property
    def output_dir(self) -> Path:
        """Output directory; relative paths are taken from the config file's directory."""
        d = Path(str(self.output.get("directory", ".")))
        return d if d.is_absolute() else self.base_dir / d

    @property
    def exports(self) -> list[str]:
        return list(self.output.get("exports", EXPORTS))
