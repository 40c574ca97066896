"""Command-line front end: ``liquidpower power|axioms|game|experiment``.

Election and game files are JSON with 1-indexed agents; a delegation target
of 0 means abstention. Quotas and weights may be exact fraction strings such
as ``"13/2"``.

Exit codes: 0 success, 1 a check failed, 2 bad input or configuration,
3 instance too large, 4 incompatible overlap, 5 network not complete.
"""

from __future__ import annotations

import argparse
import csv
import io
import json
import sys
from dataclasses import asdict, replace
from fractions import Fraction
from importlib import resources
from pathlib import Path
from typing import Optional, Sequence

import numpy as np

from .constructions import (
    Axiom,
    Fact,
    IncompatibleOverlap,
    check_axiom,
    check_fact,
    constant_index,
    db_index,
    random_compatible_pair,
    random_lde,
)
from .core import NULL_AGENT, DelegationProfile, InvalidElection, Lde, classify
from .experiments import PRESETS, ExperimentConfig, Row, preset, run_experiment
from .game import (
    DelegationGame,
    IllegalStrategy,
    NotComplete,
    construct_ne_complete,
    find_pure_ne,
    is_nash,
    legal_profiles,
)
from .power import (
    DEFAULT_CONFIDENCE,
    DEFAULT_SAMPLES,
    ExactBackend,
    MonteCarloBackend,
    TooLarge,
    delegative_banzhaf,
    delegative_banzhaf_mc,
)

EXIT_FAIL = 1
EXIT_INPUT = 2
EXIT_TOO_LARGE = 3
EXIT_OVERLAP = 4
EXIT_NOT_COMPLETE = 5

CSV_FIELDS = (
    "preset",
    "dynamics",
    "grid_param",
    "grid_value",
    "instances",
    "delegator_ratio",
    "longest_chain",
    "avg_chain_length",
    "max_db",
    "min_db",
    "mean_db",
    "gini",
    "weighted_guru_accuracy",
    "converged_count",
    "mean_rounds",
    "master_seed",
)


class InputError(ValueError):
    pass


# -- file formats -------------------------------------------------------------


def parse_rational(value) -> Fraction:
    if isinstance(value, bool):
        raise InputError(f"not a number: {value!r}")
    if isinstance(value, (int, float, str)):
        try:
            return Fraction(str(value).strip())
        except (ValueError, ZeroDivisionError) as exc:
            raise InputError(f"not a number: {value!r}") from exc
    raise InputError(f"not a number: {value!r}")


def format_rational(x: Fraction):
    return x.numerator if x.denominator == 1 else f"{x.numerator}/{x.denominator}"


def _agents(doc: dict) -> int:
    n = doc.get("agents")
    if not isinstance(n, int) or isinstance(n, bool) or n < 1:
        raise InputError("'agents' must be a positive integer")
    return n


def election_from_dict(doc: dict) -> Lde:
    if not isinstance(doc, dict):
        raise InputError("election file must hold a JSON object")
    n = _agents(doc)
    dels = doc.get("delegations")
    if not isinstance(dels, list) or len(dels) != n:
        raise InputError("'delegations' must list one target per agent")
    targets = []
    for t in dels:
        if not isinstance(t, int) or isinstance(t, bool) or not 0 <= t <= n:
            raise InputError(f"delegation target {t!r} outside 0..{n}")
        targets.append(NULL_AGENT if t == 0 else t - 1)
    weights = doc.get("weights")
    if weights is not None:
        if not isinstance(weights, list) or len(weights) != n:
            raise InputError("'weights' must list one weight per agent")
        weights = [parse_rational(w) for w in weights]
    if "quota" not in doc:
        raise InputError("missing 'quota'")
    labels = doc.get("labels")
    if labels is not None and (not isinstance(labels, list) or len(labels) != n):
        raise InputError("'labels' must list one label per agent")
    try:
        return Lde.build(targets, parse_rational(doc["quota"]), weights, labels)
    except InvalidElection as exc:
        raise InputError(str(exc)) from exc


def election_to_dict(lde: Lde) -> dict:
    doc: dict = {
        "agents": lde.n,
        "weights": [format_rational(w) for w in lde.weights],
        "delegations": [0 if t == NULL_AGENT else t + 1 for t in lde.profile.targets],
        "quota": format_rational(lde.quota),
    }
    if lde.labels is not None:
        doc["labels"] = list(lde.labels)
    return doc


def game_from_dict(doc: dict) -> DelegationGame:
    if not isinstance(doc, dict):
        raise InputError("game file must hold a JSON object")
    n = _agents(doc)
    weights = doc.get("weights")
    if weights is not None and any(parse_rational(w) != 1 for w in weights):
        raise InputError("delegation games use unit weights")
    pairs = []
    for e in doc.get("edges", []):
        if not (isinstance(e, list) and len(e) == 2 and all(isinstance(x, int) and 1 <= x <= n for x in e)):
            raise InputError(f"bad edge {e!r}")
        if e[0] == e[1]:
            raise InputError(f"self-loop edge {e!r}")
        pairs.append((e[0] - 1, e[1] - 1))
    acc = doc.get("accuracies")
    if not isinstance(acc, list) or len(acc) != n:
        raise InputError("'accuracies' must list one value per agent")
    if "quota" not in doc:
        raise InputError("missing 'quota'")
    try:
        return DelegationGame.from_pairs(
            n, pairs, [float(q) for q in acc], parse_rational(doc["quota"]), float(doc.get("alpha", 1.0))
        )
    except (TypeError, ValueError) as exc:
        raise InputError(str(exc)) from exc


def game_to_dict(game: DelegationGame) -> dict:
    return {
        "agents": game.n,
        "edges": [[i + 1, j + 1] for i in range(game.n) for j in game.edges[i]],
        "accuracies": list(game.accuracies),
        "quota": format_rational(game.quota),
        "alpha": game.alpha,
    }


def _load_json(path: str) -> dict:
    try:
        with open(path, encoding="utf-8") as fh:
            return json.load(fh)
    except OSError as exc:
        raise InputError(f"cannot read {path}: {exc.strerror}") from exc
    except json.JSONDecodeError as exc:
        raise InputError(f"{path}: invalid JSON ({exc})") from exc


def load_election(path: str) -> Lde:
    return election_from_dict(_load_json(path))


def load_game(path: str) -> DelegationGame:
    return game_from_dict(_load_json(path))


def fixture_path(name: str) -> Path:
    """Path of a bundled data file, e.g. ``example1_d2.json``."""
    return Path(str(resources.files("liquidpower") / "data" / name))


def parse_profile(text: str, n: int) -> DelegationProfile:
    """A profile is a comma-separated target list or a file with 'delegations'."""
    if Path(text).is_file():
        dels = _load_json(text).get("delegations")
    else:
        try:
            dels = [int(x) for x in text.replace(" ", "").split(",") if x]
        except ValueError as exc:
            raise InputError(f"bad profile {text!r}") from exc
    if not isinstance(dels, list) or len(dels) != n or any(not isinstance(t, int) or not 0 <= t <= n for t in dels):
        raise InputError(f"profile must list {n} targets in 0..{n}")
    return DelegationProfile(tuple(NULL_AGENT if t == 0 else t - 1 for t in dels))


def format_profile(d: DelegationProfile) -> str:
    return ",".join(str(0 if t == NULL_AGENT else t + 1) for t in d.targets)


# -- CSV ----------------------------------------------------------------------


def _format_grid_value(v) -> str:
    if isinstance(v, Fraction):
        return str(v.numerator) if v.denominator == 1 else f"{v.numerator}/{v.denominator}"
    if isinstance(v, (int, np.integer)):
        return str(int(v))
    return repr(float(v))


def _format_cell(name: str, value) -> str:
    if name == "grid_value":
        return _format_grid_value(value)
    if isinstance(value, bool):
        return str(int(value))
    if isinstance(value, (int, np.integer)):
        return str(int(value))
    if isinstance(value, float):
        return f"{value:.6f}"
    return str(value)


def rows_to_csv(rows: Sequence[Row]) -> str:
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(CSV_FIELDS)
    for row in rows:
        d = asdict(row)
        writer.writerow([_format_cell(f, d[f]) for f in CSV_FIELDS])
    return buf.getvalue()


# -- commands -----------------------------------------------------------------


def _emit(args, payload: dict, lines: Sequence[str]) -> None:
    if getattr(args, "json", False):
        print(json.dumps(payload, indent=2))
    else:
        for line in lines:
            print(line)


def cmd_power(args) -> int:
    lde = load_election(args.file)
    if args.agent == "all":
        agents = list(range(lde.n))
    else:
        try:
            a = int(args.agent)
        except ValueError as exc:
            raise InputError(f"bad --agent {args.agent!r}") from exc
        if not 1 <= a <= lde.n:
            raise InputError(f"--agent must lie in 1..{lde.n}")
        agents = [a - 1]
    records, lines = [], []
    for i in agents:
        guru = lde.profile.gurus[i]
        rec = {"agent": i + 1, "class": classify(lde, i).value, "guru": None if guru is None else guru + 1}
        if args.mc is None:
            db = delegative_banzhaf(lde, i, args.cap)
            rec.update(db=str(db), db_float=float(db))
            lines.append(f"agent {i + 1}: DB={db} ({float(db):.6f}) class={rec['class']} guru={rec['guru'] or '-'}")
        else:
            est = delegative_banzhaf_mc(lde, i, args.mc, args.confidence, args.seed)
            rec.update(db_estimate=est.estimate, ci_halfwidth=est.ci_halfwidth, confidence=est.confidence, samples=est.samples)
            lines.append(
                f"agent {i + 1}: DB~{est.estimate:.6f} +/- {est.ci_halfwidth:.6f} "
                f"class={rec['class']} guru={rec['guru'] or '-'}"
            )
        records.append(rec)
    _emit(args, {"quota": format_rational(lde.quota), "agents": records}, lines)
    return 0


def _parse_kv(tokens: Sequence[str]) -> dict:
    out = {"n": 6, "count": 100, "seed": 0}
    for tok in tokens:
        key, sep, value = tok.partition("=")
        if not sep or key not in out:
            raise InputError(f"bad --random option {tok!r}; expected n=K count=M seed=S")
        try:
            out[key] = int(value)
        except ValueError as exc:
            raise InputError(f"bad --random option {tok!r}") from exc
    if out["n"] < 1 or out["count"] < 1:
        raise InputError("--random needs n >= 1 and count >= 1")
    return out


def _index_fn(name: str):
    if name == "db":
        return db_index
    if name.startswith("const"):
        return constant_index(parse_rational(name[len("const") :]))
    raise InputError(f"unknown index {name!r}")


def cmd_axioms(args) -> int:
    f = _index_fn(args.index)
    if args.random is not None:
        opts = _parse_kv(args.random)
        rng = np.random.default_rng(opts["seed"])
        singles = [random_lde(rng, int(rng.integers(1, opts["n"] + 1))) for _ in range(opts["count"])]
        pairs = [random_compatible_pair(rng, max_n=opts["n"]) for _ in range(opts["count"])]
    else:
        if not args.files or len(args.files) > 2:
            raise InputError("give one or two election files, or --random")
        ldes = [load_election(p) for p in args.files]
        singles = ldes
        pairs = [tuple(ldes)] if len(ldes) == 2 else []
    if args.axiom == "all":
        # SP needs a pair; with a single file it is skipped rather than an error.
        selected = [a.value for a in Axiom if a is not Axiom.SP or pairs] + ["facts"]
    else:
        selected = [args.axiom]
    results = {}
    for name in selected:
        if name == "facts":
            for fact in Fact:
                res = None
                checked = 0
                for lde in singles:
                    res = check_fact(fact, lde, f=f)
                    checked += res.checked
                    if not res:
                        break
                results[fact.value] = (bool(res) if res is not None else True, checked, None if res is None else res.witness)
        elif name == Axiom.SP.value:
            if not pairs:
                raise InputError("SP needs two election files or --random")
            res = check_axiom(Axiom.SP, f, pairs)
            results[name] = (res.holds, res.checked, res.witness)
        else:
            res = check_axiom(Axiom(name), f, singles)
            results[name] = (res.holds, res.checked, res.witness)
    lines = []
    for name, (ok, checked, witness) in results.items():
        lines.append(f"{name}: {'pass' if ok else 'FAIL'} ({checked} cases)")
        if witness:
            lines.append(f"  witness: {witness}")
    payload = {k: {"holds": v[0], "checked": v[1], "witness": v[2]} for k, v in results.items()}
    _emit(args, payload, lines)
    return 0 if all(v[0] for v in results.values()) else EXIT_FAIL


def _backend(args):
    if args.mc is None:
        return ExactBackend(args.cap)
    return MonteCarloBackend(args.mc, args.confidence, args.seed)


def cmd_game(args) -> int:
    if args.preset is not None:
        game = load_game(str(fixture_path("theorem2_game.json")))
    elif args.file:
        game = load_game(args.file)
    else:
        raise InputError("give a game file or --preset theorem2")
    if args.alpha is not None:
        game = game.with_alpha(args.alpha)
    backend = _backend(args)
    if args.check_ne is not None:
        d = parse_profile(args.check_ne, game.n)
        try:
            verdict = is_nash(game, d, backend)
        except IllegalStrategy as exc:
            raise InputError(str(exc)) from exc
        lines = [f"profile {format_profile(d)}", f"NE: {str(verdict.is_nash).lower()}"]
        if verdict.witness:
            lines.append(f"deviation: {verdict.witness}")
        if verdict.advisory:
            lines.append("(advisory: Monte-Carlo utilities)")
        payload = {
            "profile": format_profile(d),
            "is_nash": verdict.is_nash,
            "advisory": verdict.advisory,
            "witness": None if verdict.witness is None else str(verdict.witness),
        }
        _emit(args, payload, lines)
        return 0
    if args.find_ne:
        total = game.profile_count()
        found = find_pure_ne(game, backend)
        refuted = total - len(found)
        if found:
            head = f"{len(found)} pure NE found ({refuted}/{total} profiles refuted)"
        else:
            head = f"no pure NE ({refuted}/{total} profiles refuted)"
        lines = [head] + [f"NE: {format_profile(d)}" for d in found]
        if args.verbose:
            for d in legal_profiles(game):
                v = is_nash(game, d, backend)
                lines.append(f"{format_profile(d)}: " + ("NE" if v else str(v.witness)))
        _emit(args, {"profiles": total, "refuted": refuted, "equilibria": [format_profile(d) for d in found]}, lines)
        return 0
    if args.construct_ne:
        d = construct_ne_complete(game, backend=backend)
        verdict = is_nash(game, d, backend)
        lines = [f"profile {format_profile(d)}", f"verified NE: {str(verdict.is_nash).lower()}"]
        _emit(args, {"profile": format_profile(d), "verified_ne": verdict.is_nash}, lines)
        return 0
    raise InputError("choose one of --check-ne, --find-ne, --construct-ne")


def _config_from_file(path: str, seed: Optional[int]):
    doc = _load_json(path)
    grid_param = doc.pop("grid_param", None)
    grid = doc.pop("grid", None)
    name = doc.pop("name", "custom")
    if grid_param is None or not isinstance(grid, list) or not grid:
        raise InputError("config needs 'grid_param' and a non-empty 'grid'")
    if "quota" in doc:
        doc["quota"] = parse_rational(doc["quota"])
    if "dynamics" in doc:
        doc["dynamics"] = tuple(doc["dynamics"])
    if seed is not None:
        doc["master_seed"] = seed
    try:
        config = ExperimentConfig(**doc)
    except TypeError as exc:
        raise InputError(f"bad config key: {exc}") from exc
    if grid_param == "quota":
        grid = [parse_rational(v) for v in grid]
    return name, config, grid_param, grid


def cmd_experiment(args) -> int:
    if args.config:
        name, config, grid_param, grid = _config_from_file(args.config, args.seed)
    else:
        p = preset(args.preset, master_seed=args.seed if args.seed is not None else 0)
        name, config, grid_param, grid = p.name, p.config, p.grid_param, list(p.grid)
    overrides = {}
    for key in ("n", "instances", "max_rounds"):
        if getattr(args, key) is not None:
            overrides[key] = getattr(args, key)
    if args.samples is not None:
        overrides["mc_samples"] = args.samples
    if args.quota is not None:
        overrides["quota"] = parse_rational(args.quota)
    if args.backend is not None:
        overrides["backend"] = args.backend
    if overrides:
        config = replace(config, **overrides)
    rows = run_experiment(config, grid_param, grid, threads=args.threads, preset=name)
    text = rows_to_csv(rows)
    if args.out:
        with open(args.out, "w", encoding="utf-8", newline="") as fh:
            fh.write(text)
    else:
        sys.stdout.write(text)
    return 0


# -- entry point --------------------------------------------------------------


def _add_backend_flags(p: argparse.ArgumentParser) -> None:
    g = p.add_mutually_exclusive_group()
    g.add_argument("--exact", action="store_true", help="exact enumeration (default)")
    g.add_argument("--mc", type=int, metavar="SAMPLES", nargs="?", const=DEFAULT_SAMPLES, help="Monte-Carlo estimate")
    p.add_argument("--confidence", type=float, default=DEFAULT_CONFIDENCE)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--cap", type=int, default=30, help="largest n enumerated exactly")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="liquidpower", description="Voting power in liquid democracy.")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("power", help="delegative Banzhaf index of agents in an election file")
    p.add_argument("file")
    p.add_argument("--agent", default="all", help="1-based agent id or 'all'")
    p.add_argument("--json", action="store_true")
    _add_backend_flags(p)
    p.set_defaults(func=cmd_power)

    p = sub.add_parser("axioms", help="check the power axioms and structural facts")
    p.add_argument("files", nargs="*")
    p.add_argument("--random", nargs="*", metavar="KEY=VALUE", help="random instances: n=K count=M seed=S")
    p.add_argument("--axiom", default="all", choices=[a.value for a in Axiom] + ["facts", "all"])
    p.add_argument("--index", default="db", help="'db' or a constant such as const0, const1, const1/2")
    p.add_argument("--json", action="store_true")
    p.set_defaults(func=cmd_axioms)

    p = sub.add_parser("game", help="equilibria of a delegation game")
    p.add_argument("file", nargs="?")
    p.add_argument("--preset", choices=["theorem2"])
    g = p.add_mutually_exclusive_group(required=True)
    g.add_argument("--check-ne", metavar="PROFILE", help="comma-separated 1-based targets or a JSON file")
    g.add_argument("--find-ne", action="store_true")
    g.add_argument("--construct-ne", action="store_true")
    p.add_argument("--alpha", type=float)
    p.add_argument("--verbose", action="store_true", help="with --find-ne, list a deviation for every profile")
    p.add_argument("--json", action="store_true")
    _add_backend_flags(p)
    p.set_defaults(func=cmd_game)

    p = sub.add_parser("experiment", help="run a simulation preset and write CSV")
    src = p.add_mutually_exclusive_group(required=True)
    src.add_argument("--preset", choices=PRESETS)
    src.add_argument("--config", metavar="FILE")
    p.add_argument("--out", metavar="FILE")
    p.add_argument("--seed", type=int)
    p.add_argument("--threads", type=int, help="worker processes (default: $LIQUIDPOWER_THREADS or 1)")
    p.add_argument("--n", type=int)
    p.add_argument("--quota")
    p.add_argument("--instances", type=int)
    p.add_argument("--max-rounds", dest="max_rounds", type=int)
    p.add_argument("--samples", type=int)
    p.add_argument("--backend", choices=["mc", "exact"])
    p.set_defaults(func=cmd_experiment)
    return parser


def main(argv: Optional[Sequence[str]] = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except TooLarge as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_TOO_LARGE
    except IncompatibleOverlap as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_OVERLAP
    except NotComplete as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_NOT_COMPLETE
    except (InputError, InvalidElection, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_INPUT


if __name__ == "__main__":
    sys.exit(main())
