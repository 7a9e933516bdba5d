# model_config.py
"""
SNR model specification and its plain-text config file.

One directive per line, '#' starts a comment:

    name mod1
    response counts|intensity|edge_counts
    mode undirected|in|out|cg|directed|nach_child
    family poisson|gaussian|gamma [link=log|identity]
    fixed <name> [categorical] [ref=<level>]
    graphstat degree categorical|numeric
    graphstat betweenness
    graphstat component_size
    smooth <name> [degree=3] [knots=20] [order=2] [domain=<lo>,<hi>]
    mrf <lattice.csv> [map=<region_map.csv>] [column=<covariate column>]
    exclude-undefined true|false

Relative file paths are resolved against the config file's directory.
"""
import os
import shlex
from enum import Enum
from typing import Any, Dict, List, Optional, Tuple

from pydantic import BaseModel, ConfigDict, ValidationError, model_validator

from geograph import EdgeClass
from mmfit import FamilyName, Link
from network_loader import InputFileError, load_lattice, load_region_map
from smooth import SplineConfig


class ModelSpecError(ValueError):
    """Invalid model specification; carries the config file and line when parsed from a file."""

    def __init__(self, message: str, path: Optional[str] = None, line: Optional[int] = None):
        self.path = path
        self.line = line
        if path is not None:
            where = f"{path}:{line}" if line is not None else path
            message = f"{where}: {message}"
        super().__init__(message)


class Response(str, Enum):
    COUNTS = "counts"            # node counts with log-length offset
    INTENSITY = "intensity"      # nodewise mean intensity
    EDGE_COUNTS = "edge_counts"  # edge counts with log-length offset


GRAPH_STATS = ("degree", "betweenness", "component_size")


class FixedTerm(BaseModel):
    model_config = ConfigDict(frozen=True)

    name: str
    categorical: bool = False
    ref: Optional[str] = None


class GraphStatTerm(BaseModel):
    model_config = ConfigDict(frozen=True)

    name: str
    categorical: bool = False

    @model_validator(mode="after")
    def _known(self):
        if self.name not in GRAPH_STATS:
            raise ValueError(f"unknown graph statistic '{self.name}' (expected one of {', '.join(GRAPH_STATS)})")
        if self.categorical and self.name != "degree":
            raise ValueError(f"graph statistic '{self.name}' cannot be categorical")
        return self


class SmoothSpec(BaseModel):
    model_config = ConfigDict(frozen=True)

    name: str
    spline: SplineConfig = SplineConfig()


class LatticeSpec(BaseModel):
    model_config = ConfigDict(frozen=True)

    pairs: List[Tuple[Any, Any]]
    region_map: Optional[Dict[Any, Any]] = None
    column: str = "region"


class SNRSpec(BaseModel):
    model_config = ConfigDict(frozen=True)

    name: str = "model"
    response: Response = Response.COUNTS
    mode: EdgeClass = EdgeClass.UNDIRECTED
    family: FamilyName = FamilyName.POISSON
    link: Optional[Link] = None
    fixed: List[FixedTerm] = []
    graphstats: List[GraphStatTerm] = []
    smooths: List[SmoothSpec] = []
    lattice: Optional[LatticeSpec] = None
    exclude_undefined: bool = True

    @model_validator(mode="after")
    def _consistent(self):
        fixed = [t.name for t in self.fixed]
        smooth = [t.name for t in self.smooths]
        stats = [t.name for t in self.graphstats]
        for label, names in (("fixed", fixed), ("smooth", smooth), ("graphstat", stats)):
            dupes = sorted({n for n in names if names.count(n) > 1})
            if dupes:
                raise ValueError(f"{label} term listed twice: {', '.join(dupes)}")
        both = sorted(set(fixed) & set(smooth))
        if both:
            raise ValueError(f"covariate in both fixed and smooth terms: {', '.join(both)}")
        counts = self.response in (Response.COUNTS, Response.EDGE_COUNTS)
        if counts and self.family != FamilyName.POISSON:
            raise ValueError(f"response '{self.response.value}' needs family poisson")
        if not counts and self.family == FamilyName.POISSON:
            raise ValueError("response 'intensity' needs family gaussian or gamma")
        if self.response == Response.EDGE_COUNTS and any(t.name == "degree" and t.categorical for t in self.graphstats):
            raise ValueError("categorical degree is a node statistic; use 'graphstat degree numeric' for edge responses")
        if self.response == Response.EDGE_COUNTS and self.lattice is not None:
            raise ValueError("mrf terms need a node response")
        return self

    def covariate_names(self) -> List[str]:
        names = [t.name for t in self.fixed] + [t.name for t in self.smooths]
        if self.lattice is not None and self.lattice.region_map is None:
            names.append(self.lattice.column)
        return names


# -----------------------------
# Parser
# -----------------------------
_TRUE = {"true", "yes", "1"}
_FALSE = {"false", "no", "0"}


def _options(tokens: List[str], allowed: Tuple[str, ...], path: Optional[str], line: int) -> Dict[str, str]:
    out: Dict[str, str] = {}
    for tok in tokens:
        key, sep, value = tok.partition("=")
        if not sep or key not in allowed:
            raise ModelSpecError(f"unexpected option {tok!r}", path, line)
        out[key] = value
    return out


def _choice(value: str, enum, what: str, path: Optional[str], line: int):
    try:
        return enum(value)
    except ValueError:
        choices = "|".join(m.value for m in enum)
        raise ModelSpecError(f"unknown {what} {value!r} (expected {choices})", path, line) from None


def _resolve(base_dir: str, p: str) -> str:
    return p if os.path.isabs(p) else os.path.join(base_dir, p)


def parse_model_config(text: str, path: Optional[str] = None, base_dir: Optional[str] = None) -> SNRSpec:
    base_dir = base_dir or (os.path.dirname(os.path.abspath(path)) if path else os.getcwd())
    fields: Dict[str, Any] = {"fixed": [], "graphstats": [], "smooths": []}

    for line_no, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        try:
            tokens = shlex.split(line)
        except ValueError as e:
            raise ModelSpecError(f"cannot tokenise line ({e})", path, line_no) from None
        key, args = tokens[0].lower(), tokens[1:]

        try:
            if key == "name":
                if len(args) != 1:
                    raise ModelSpecError("usage: name <label>", path, line_no)
                fields["name"] = args[0]

            elif key == "response":
                if len(args) != 1:
                    raise ModelSpecError("usage: response counts|intensity|edge_counts", path, line_no)
                fields["response"] = _choice(args[0], Response, "response", path, line_no)

            elif key == "mode":
                if len(args) != 1:
                    raise ModelSpecError("usage: mode undirected|in|out|cg", path, line_no)
                fields["mode"] = _choice(args[0], EdgeClass, "mode", path, line_no)

            elif key == "family":
                if not args:
                    raise ModelSpecError("usage: family poisson|gaussian|gamma [link=log|identity]", path, line_no)
                fields["family"] = _choice(args[0], FamilyName, "family", path, line_no)
                opts = _options(args[1:], ("link",), path, line_no)
                if "link" in opts:
                    fields["link"] = _choice(opts["link"], Link, "link", path, line_no)

            elif key == "fixed":
                if not args:
                    raise ModelSpecError("usage: fixed <name> [categorical] [ref=<level>]", path, line_no)
                categorical = len(args) > 1 and args[1] == "categorical"
                opts = _options(args[2:] if categorical else args[1:], ("ref",), path, line_no)
                if "ref" in opts and not categorical:
                    raise ModelSpecError("ref= needs a categorical term", path, line_no)
                fields["fixed"].append(FixedTerm(name=args[0], categorical=categorical, ref=opts.get("ref")))

            elif key == "graphstat":
                if not args:
                    raise ModelSpecError("usage: graphstat degree|betweenness|component_size [categorical|numeric]", path, line_no)
                kind = args[1] if len(args) > 1 else "numeric"
                if kind not in ("categorical", "numeric") or len(args) > 2:
                    raise ModelSpecError(f"unexpected graphstat option {' '.join(args[1:])!r}", path, line_no)
                fields["graphstats"].append(GraphStatTerm(name=args[0], categorical=kind == "categorical"))

            elif key == "smooth":
                if not args:
                    raise ModelSpecError("usage: smooth <name> [degree=] [knots=] [order=] [domain=lo,hi]", path, line_no)
                opts = _options(args[1:], ("degree", "knots", "order", "domain"), path, line_no)
                settings: Dict[str, Any] = {}
                if "degree" in opts:
                    settings["degree"] = int(opts["degree"])
                if "knots" in opts:
                    settings["inner_knots"] = int(opts["knots"])
                if "order" in opts:
                    settings["order"] = int(opts["order"])
                if "domain" in opts:
                    lo, _, hi = opts["domain"].partition(",")
                    settings["domain"] = (float(lo), float(hi))
                fields["smooths"].append(SmoothSpec(name=args[0], spline=SplineConfig(**settings)))

            elif key == "mrf":
                if not args:
                    raise ModelSpecError("usage: mrf <lattice.csv> [map=<region_map.csv>] [column=<name>]", path, line_no)
                opts = _options(args[1:], ("map", "column"), path, line_no)
                pairs = load_lattice(_resolve(base_dir, args[0]))
                region_map = load_region_map(_resolve(base_dir, opts["map"])) if "map" in opts else None
                fields["lattice"] = LatticeSpec(pairs=pairs, region_map=region_map, column=opts.get("column", "region"))

            elif key == "exclude-undefined":
                value = args[0].lower() if len(args) == 1 else ""
                if value not in _TRUE | _FALSE:
                    raise ModelSpecError("usage: exclude-undefined true|false", path, line_no)
                fields["exclude_undefined"] = value in _TRUE

            else:
                raise ModelSpecError(f"unknown directive {key!r}", path, line_no)

        except (ValidationError, ValueError) as e:
            if isinstance(e, (ModelSpecError, InputFileError)):
                raise
            raise ModelSpecError(_first_error(e), path, line_no) from None

    try:
        return SNRSpec(**fields)
    except ValidationError as e:
        raise ModelSpecError(_first_error(e), path) from None


def _first_error(e: Exception) -> str:
    if isinstance(e, ValidationError):
        err = e.errors()[0]
        msg = err.get("msg", str(e))
        return msg.removeprefix("Value error, ")
    return str(e)


def load_model_config(path: str) -> SNRSpec:
    if not os.path.exists(path):
        raise ModelSpecError("file not found", path)
    with open(path, "r", encoding="utf-8") as f:
        return parse_model_config(f.read(), path=path)
