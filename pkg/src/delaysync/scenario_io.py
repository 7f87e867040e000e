"""JSON scenario files: parsing with anchored diagnostics, and serialization.

Agents are labeled from 1 in files and from 0 in memory. Floats are
written with ``repr``, the shortest decimal string that reads back to the
same double, so ``parse(dump(s))`` reproduces every matrix bit for bit.

Layout::

    {
      "name": "example1_case1",
      "variant": "partial_state",
      "models": {"hom": {"A": [[...]], "B": [[...]], "C": [[...]], "C_m": null}},
      "agents": ["hom", "hom", "hom"],
      "exosystem": {"A": [[...]], "C": [[...]], "x0": [...]},
      "topology": {
        "agents": 3,
        "exosystem_link": {"agent": 1, "delay": 0},
        "edges": [{"from": 1, "to": 2, "weight": 1.0, "delay": 3, "exchange_delay": 2}]
      },
      "gains": {"K": [[...]], "H": [[...]]}  or  {"synthesize": {"Q": null, "R": null}},
      "target": "auto",
      "precompensators": "auto",
      "run": {"horizon": 2000, "tolerance": 0.0001, "prefill": "zeros", "seed": 0,
              "initial_states": null}
    }

``agents`` entries are model names or inline model objects. A missing
``exchange_delay`` defaults to ``delay``.
"""

import json
import re
from importlib import resources

import numpy as np

from .engine import DEFAULT_HORIZON, DEFAULT_TOLERANCE, GainSpec, Scenario
from .errors import DimensionError, ModelError, ScenarioError
from .plant import AgentModel, Exosystem, PreCompensator, TargetModel
from .protocol import HETEROGENEOUS, VARIANTS
from .topology import NetworkTopology

FORMAT_VERSION = 1
_PRE_FIELDS = (
    "A_h", "B_h", "E_h", "C_h", "D_h", "F_h",
    "reference_from_agent", "reference_from_comp",
    "state_from_agent", "state_from_comp",
    "rho_A", "rho_C", "rho_from_agent", "rho_from_comp",
)


class _Node:
    """A JSON value together with its field path, for diagnostics."""

    def __init__(self, value, path):
        self.value = value
        self.path = path

    def fail(self, message):
        raise ScenarioError(message, where=self.path or "<root>")

    def get(self, key, default=KeyError):
        if not isinstance(self.value, dict):
            self.fail("expected an object")
        sub = f"{self.path}.{key}" if self.path else key
        if key not in self.value:
            if default is KeyError:
                raise ScenarioError("required field is missing", where=sub)
            return _Node(default, sub)
        return _Node(self.value[key], sub)

    def has(self, key):
        return isinstance(self.value, dict) and key in self.value

    def items(self):
        if not isinstance(self.value, list):
            self.fail("expected a list")
        return [_Node(v, f"{self.path}[{i}]") for i, v in enumerate(self.value)]

    def is_null(self):
        return self.value is None

    def integer(self, minimum=None):
        v = self.value
        if isinstance(v, bool) or not isinstance(v, int):
            self.fail(f"expected an integer, got {v!r}")
        if minimum is not None and v < minimum:
            self.fail(f"must be >= {minimum}, got {v}")
        return v

    def number(self):
        v = self.value
        if isinstance(v, bool) or not isinstance(v, (int, float)):
            self.fail(f"expected a number, got {v!r}")
        return float(v)

    def string(self, choices=None):
        if not isinstance(self.value, str):
            self.fail(f"expected a string, got {self.value!r}")
        if choices is not None and self.value not in choices:
            self.fail(f"must be one of {', '.join(choices)}; got {self.value!r}")
        return self.value

    def matrix(self):
        v = self.value
        if isinstance(v, dict):
            # zero-sized matrices keep their shape this way
            rows, cols = self.get("rows").integer(0), self.get("cols").integer(0)
            if rows * cols:
                self.fail("shape-only matrices must have a zero dimension")
            return np.zeros((rows, cols))
        if not isinstance(v, list) or not v or not all(isinstance(r, list) for r in v):
            self.fail("expected a non-empty list of rows")
        width = len(v[0])
        for i, row in enumerate(v):
            if len(row) != width:
                raise ScenarioError(f"row has {len(row)} entries, expected {width}", where=f"{self.path}[{i}]")
        return np.array([[_Node(x, f"{self.path}[{i}][{j}]").number() for j, x in enumerate(row)]
                         for i, row in enumerate(v)])

    def vector(self):
        if not isinstance(self.value, list):
            self.fail("expected a list of numbers")
        return np.array([n.number() for n in self.items()])


def _domain(node, build):
    """Run a model constructor, anchoring its validation error at ``node``."""
    try:
        return build()
    except (DimensionError, ModelError) as exc:
        raise type(exc)(f"{node.path}: {exc}") from exc


def _model(node):
    return _domain(node, lambda: AgentModel(
        node.get("A").matrix(), node.get("B").matrix(), node.get("C").matrix(),
        None if node.get("C_m", None).is_null() else node.get("C_m").matrix(),
    ))


def _topology(node, n_agents):
    n = node.get("agents").integer(1)
    if n != n_agents:
        node.get("agents").fail(f"network has {n} agents but {n_agents} agent models are listed")
    link = node.get("exosystem_link")
    root = link.get("agent").integer(1)
    if root > n:
        link.get("agent").fail(f"agent {root} does not exist")
    root_delay = link.get("delay", 0).integer(0)
    edges = []
    seen = set()
    for e in node.get("edges").items():
        src, dst = e.get("from").integer(1), e.get("to").integer(1)
        for key, val in (("from", src), ("to", dst)):
            if val > n:
                e.get(key).fail(f"agent {val} does not exist")
        if (src, dst) in seen:
            e.fail(f"duplicate edge {src}->{dst}")
        seen.add((src, dst))
        delay = e.get("delay").integer(0)
        exch = e.get("exchange_delay", delay).integer(0)
        edges.append((src - 1, dst - 1, e.get("weight", 1.0).number(), delay, exch))
    return NetworkTopology.from_edges(n, edges, root=root - 1, root_delay=root_delay)


def _gains(node):
    if node.has("synthesize"):
        syn = node.get("synthesize")
        Q = syn.get("Q", None)
        R = syn.get("R", None)
        return GainSpec(Q=None if Q.is_null() else Q.matrix(), R=None if R.is_null() else R.matrix())
    K = node.get("K").matrix()
    H = node.get("H", None)
    return GainSpec(K=K, H=None if H.is_null() else H.matrix())


def _precompensator(node):
    kw = {name: node.get(name).matrix() for name in _PRE_FIELDS[:8]}
    for name in _PRE_FIELDS[8:]:
        if node.has(name):
            kw[name] = node.get(name).matrix()
    return _domain(node, lambda: PreCompensator(label=node.get("label", "").string(), **kw))


def scenario_from_dict(data):
    """Build a ``Scenario`` from decoded JSON; raises ``ScenarioError`` with a field path."""
    root = _Node(data, "")
    version = root.get("format", FORMAT_VERSION).integer()
    if version != FORMAT_VERSION:
        root.get("format").fail(f"unsupported format version {version}")
    variant = root.get("variant").string(VARIANTS)
    models = {}
    if root.has("models"):
        mnode = root.get("models")
        if not isinstance(mnode.value, dict):
            mnode.fail("expected an object of named models")
        models = {name: _model(mnode.get(name)) for name in mnode.value}
    agents = []
    for a in root.get("agents").items():
        if isinstance(a.value, str):
            if a.value not in models:
                a.fail(f"unknown model {a.value!r}")
            agents.append(models[a.value])
        else:
            agents.append(_model(a))
    if not agents:
        root.get("agents").fail("at least one agent is required")

    ex = root.get("exosystem")
    x0 = ex.get("x0", None)
    exo = _domain(ex, lambda: Exosystem(ex.get("A").matrix(), ex.get("C").matrix(),
                                        None if x0.is_null() else x0.vector()))
    topology = _topology(root.get("topology"), len(agents))
    gains = _gains(root.get("gains"))

    target = pres = None
    if variant == HETEROGENEOUS:
        t = root.get("target", "auto")
        if t.value != "auto":
            target = _domain(t, lambda: TargetModel(
                t.get("A").matrix(), t.get("B").matrix(), t.get("C").matrix(),
                t.get("n_q").integer(1), t.get("state_map").matrix()))
        p = root.get("precompensators", "auto")
        if p.value != "auto":
            entries = p.items()
            if len(entries) != len(agents):
                p.fail(f"{len(entries)} pre-compensators for {len(agents)} agents")
            pres = tuple(None if e.value == "auto" else _precompensator(e) for e in entries)

    run = root.get("run", {})
    init = run.get("initial_states", None)
    initial = None
    if not init.is_null():
        initial = tuple(v.vector() for v in init.items())
        if len(initial) != len(agents):
            init.fail(f"{len(initial)} initial states for {len(agents)} agents")
    tol = run.get("tolerance", DEFAULT_TOLERANCE).number()
    if not tol > 0:
        run.get("tolerance").fail("tolerance must be positive")
    return Scenario(
        variant=variant,
        agents=tuple(agents),
        exosystem=exo,
        topology=topology,
        gains=gains,
        horizon=run.get("horizon", DEFAULT_HORIZON).integer(0),
        tolerance=tol,
        prefill=run.get("prefill", "zeros").string(("zeros", "hold_initial")),
        seed=run.get("seed", 0).integer(0),
        initial_states=initial,
        target=target,
        precompensators=pres,
        name=root.get("name", "scenario").string(),
    )


def parse_scenario(text, source="<string>"):
    try:
        data = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ScenarioError(exc.msg, where=f"{source}: line {exc.lineno}, column {exc.colno}") from exc
    return scenario_from_dict(data)


def load_scenario(path):
    with open(path, encoding="utf-8") as fh:
        text = fh.read()
    return parse_scenario(text, source=str(path))


def _mat(M):
    M = np.atleast_2d(np.asarray(M, dtype=float))
    if M.size == 0:
        return {"rows": int(M.shape[0]), "cols": int(M.shape[1])}
    return [[float(v) for v in row] for row in M]


def _model_dict(a):
    return {"A": _mat(a.A), "B": _mat(a.B), "C": _mat(a.C), "C_m": None if a.C_m is None else _mat(a.C_m)}


def scenario_to_dict(s):
    """Inverse of ``scenario_from_dict``; identical models are shared by name."""
    models, names = {}, []
    for a in s.agents:
        for name, m in models.items():
            if m == _model_dict(a):
                break
        else:
            name = f"model{len(models) + 1}"
            models[name] = _model_dict(a)
        names.append(name)
    t = s.topology
    edges = [
        {"from": j + 1, "to": i + 1, "weight": float(w), "delay": int(k), "exchange_delay": int(kh)}
        for j, i, w, k, kh in sorted(t.edges(), key=lambda e: (e[1], e[0]))
    ]
    g = s.gains
    if g.K is not None:
        gains = {"K": _mat(g.K), "H": None if g.H is None else _mat(g.H)}
    else:
        gains = {"synthesize": {"Q": None if g.Q is None else _mat(g.Q), "R": None if g.R is None else _mat(g.R)}}
    out = {
        "format": FORMAT_VERSION,
        "name": s.name,
        "variant": s.variant,
        "models": models,
        "agents": names,
        "exosystem": {"A": _mat(s.exosystem.A), "C": _mat(s.exosystem.C), "x0": [float(v) for v in s.exosystem.x0]},
        "topology": {
            "agents": t.n_agents,
            "exosystem_link": {"agent": t.root + 1, "delay": int(t.root_delay)},
            "edges": edges,
        },
        "gains": gains,
    }
    if s.variant == HETEROGENEOUS:
        tg = s.target
        out["target"] = "auto" if tg is None else {
            "A": _mat(tg.A), "B": _mat(tg.B), "C": _mat(tg.C), "n_q": int(tg.n_q), "state_map": _mat(tg.state_map),
        }
        if s.precompensators is None:
            out["precompensators"] = "auto"
        else:
            out["precompensators"] = [
                "auto" if pre is None else dict({f: _mat(getattr(pre, f)) for f in _PRE_FIELDS}, label=pre.label)
                for pre in s.precompensators
            ]
    out["run"] = {
        "horizon": int(s.horizon),
        "tolerance": float(s.tolerance),
        "prefill": s.prefill,
        "seed": int(s.seed),
        "initial_states": None if s.initial_states is None else [[float(v) for v in np.ravel(x)] for x in s.initial_states],
    }
    return out


_FLAT = re.compile(r"([\[{])([^\[\]{}]*)([\]}])")


def _join(m):
    inner = re.sub(r"^\s*\n\s*|\s*\n\s*$", "", m.group(2))
    return m.group(1) + re.sub(r"\s*\n\s*", " ", inner) + m.group(3)


def dump_scenario(s):
    """Canonical text form: two-space indent, LF endings, trailing newline."""
    text = json.dumps(scenario_to_dict(s), indent=2)
    # put innermost lists and flat objects (matrix rows, edges) on one line;
    # JSON strings hold no raw newlines, so only layout whitespace changes
    text = _FLAT.sub(_join, text)
    return text + "\n"


def save_scenario(s, path):
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        fh.write(dump_scenario(s))


def shipped_scenarios():
    """Names of the scenario files bundled with the package."""
    files = resources.files("delaysync").joinpath("scenarios")
    return sorted(f.name[:-5] for f in files.iterdir() if f.name.endswith(".json"))


def shipped_path(name):
    """Filesystem path of a bundled scenario (``name`` without ``.json``)."""
    path = resources.files("delaysync").joinpath("scenarios", f"{name}.json")
    if not path.is_file():
        raise FileNotFoundError(f"no shipped scenario named {name!r}")
    return str(path)


def load_shipped(name):
    return load_scenario(shipped_path(name))
