"""Command-line interface: ``playvalue <command> [options]``.

Commands
--------
synth      generate a seeded synthetic tracking corpus
ingest     validate a tracking CSV and list its ball-carrier sequences
features   build the per-frame feature table from a tracking CSV
train      fit one model family on a feature table
evaluate   leave-one-week-out evaluation of one or more families
value      per-frame valuation timelines for plays
density    fit an end yard-line density forest and write per-frame densities

Every command writes its outputs plus ``manifest.json`` into ``--output``
(default ``$PLAYVALUE_OUTPUT_DIR`` or ``./playvalue-out``). Files are first
written to temporary names and renamed only after the command succeeds.
Exit codes: 0 success, 1 invalid input or usage, 2 internal error.
"""

import argparse
import hashlib
import io
import json
import os
import sys
import tempfile
import time
import traceback
import warnings
from dataclasses import asdict, dataclass, field

import numpy as np

from . import __version__, evaluate, featurize, ingest, synthgen
from .models import FAMILIES, ModelConfig, ModelError, fit_model, load_model
from .valuation import (
    DensityForest,
    ExpectedPoints,
    GameState,
    WinProbability,
    load_value_function,
    timelines_csv,
    valuation_timelines,
)

OUTPUT_ENV = "PLAYVALUE_OUTPUT_DIR"
DEFAULT_OUTPUT = "playvalue-out"
EXIT_OK, EXIT_INVALID, EXIT_INTERNAL = 0, 1, 2


class UsageError(Exception):
    """Bad flags, config values or input files."""


# --------------------------------------------------------------------------
# outputs and manifest
# --------------------------------------------------------------------------


@dataclass
class RunManifest:
    command: str
    config: dict
    input_hashes: dict
    seed: int
    tool_version: str
    outputs: list = field(default_factory=list)
    wall_clock_seconds: float = 0.0

    def to_json(self):
        return json.dumps(asdict(self), sort_keys=True, indent=1)


def file_sha256(path):
    h = hashlib.sha256()
    with open(path, "rb") as fh:
        for block in iter(lambda: fh.read(1 << 20), b""):
            h.update(block)
    return h.hexdigest()


class Outputs:
    """Output files collected in memory and committed together.

    ``commit`` writes each file to a temporary name in the output
    directory, then renames them all into place, so a failing command never
    leaves partial files behind.
    """

    def __init__(self, directory):
        self.directory = directory
        self.files = {}

    def add(self, name, content):
        if name in self.files:
            raise RuntimeError(f"output {name} written twice")
        self.files[name] = content.encode("utf-8") if isinstance(content, str) else bytes(content)

    def commit(self):
        staged = []
        try:
            for name, data in sorted(self.files.items()):
                path = os.path.join(self.directory, name)
                os.makedirs(os.path.dirname(path), exist_ok=True)
                fd, tmp = tempfile.mkstemp(dir=os.path.dirname(path), prefix=".tmp-")
                with os.fdopen(fd, "wb") as fh:
                    fh.write(data)
                staged.append((tmp, path))
        except BaseException:
            for tmp, _ in staged:
                os.unlink(tmp)
            raise
        for tmp, path in staged:
            os.replace(tmp, path)
        return [name for name in sorted(self.files)]


# --------------------------------------------------------------------------
# helpers
# --------------------------------------------------------------------------


def _load_config(path):
    if path is None:
        return {}
    try:
        with open(path) as fh:
            cfg = json.load(fh)
    except (OSError, json.JSONDecodeError) as exc:
        raise UsageError(f"cannot read config file {path}: {exc}") from exc
    if not isinstance(cfg, dict):
        raise UsageError("config file must hold a JSON object")
    return cfg


def _setting(args, cfg, name, default=None):
    """Flag value if given, else config-file value, else ``default``."""
    value = getattr(args, name, None)
    if value is not None:
        return value
    return cfg.get(name, default)


def _require_input(args, cfg):
    path = _setting(args, cfg, "input")
    if path is None:
        raise UsageError("--input is required")
    if not os.path.exists(path):
        raise UsageError(f"input file {path} does not exist")
    return path


def _read_features(path):
    with open(path, newline="") as fh:
        return featurize.read_feature_csv(fh)


def _parse_params(pairs, family):
    """Hyperparameters for ``family`` from ``key=value`` or ``family.key=value`` items.

    Unprefixed keys apply to every family; prefixed keys only to theirs.
    """
    params = {}
    for item in pairs or []:
        key, sep, value = item.partition("=")
        if not sep:
            raise UsageError(f"--param expects key=value, got {item!r}")
        scope, dot, name = key.rpartition(".")
        if dot:
            if scope not in FAMILIES:
                raise UsageError(f"--param prefix {scope!r} is not a model family")
            if scope != family:
                continue
            key = name
        try:
            params[key] = json.loads(value)
        except json.JSONDecodeError:
            params[key] = value
    return params


def _parse_plays(items):
    keys = []
    for item in items or []:
        game, sep, play = item.partition(":")
        if not sep:
            raise UsageError(f"--play expects GAME_ID:PLAY_ID, got {item!r}")
        keys.append((game, play))
    return keys


def _select_plays(table, keys):
    if not keys:
        return table
    wanted = set(keys)
    rows = [i for i in range(len(table)) if (str(table.game_id[i]), str(table.play_id[i])) in wanted]
    if not rows:
        raise UsageError("none of the requested plays are in the input")
    return table.subset(np.array(rows))


# --------------------------------------------------------------------------
# commands
# --------------------------------------------------------------------------


def cmd_synth(args, cfg, out):
    gen = dict(cfg.get("generator", {}))
    gen["seed"] = args.seed
    for name in ("weeks", "plays_per_week"):
        value = _setting(args, cfg, name)
        if value is not None:
            gen[name] = value
    base = synthgen.null_signal_config() if _setting(args, cfg, "null_signal", False) else synthgen.GeneratorConfig()
    try:
        config = synthgen.GeneratorConfig.from_dict({**base.to_dict(), **gen}).validate()
    except (TypeError, ValueError) as exc:
        raise UsageError(f"invalid generator config: {exc}") from exc
    corpus = synthgen.generate_corpus(config)
    out.add("tracking.csv", corpus.csv_text())
    out.add("truth.json", corpus.truth_json())
    return {"generator": config.to_dict()}


def cmd_ingest(args, cfg, out):
    path = _require_input(args, cfg)
    plays, report = ingest.read_tracking_csv(path)
    sequences, report = ingest.extract_ball_carrier_sequences(plays, report)
    buf = io.StringIO()
    buf.write("game_id,play_id,week,carrier_id,drive_direction,start_frame,end_frame,start_event,end_event,"
              "length,end_yardline\n")
    for s in sequences:
        buf.write(f"{s.play.game_id},{s.play.play_id},{s.week},{s.carrier_id},{s.drive_direction},"
                  f"{s.start_frame},{s.end_frame},{s.start_event},{s.end_event},{s.length},{float(s.end_yardline)!r}\n")
    out.add("sequences.csv", buf.getvalue())
    out.add("exclusions.json", report.to_json(sort_keys=True, indent=1))
    return {"n_plays": len(plays), "n_sequences": len(sequences)}


def cmd_features(args, cfg, out):
    path = _require_input(args, cfg)
    plays, report = ingest.read_tracking_csv(path)
    sequences, report = ingest.extract_ball_carrier_sequences(plays, report)
    if not sequences:
        raise UsageError("no ball-carrier sequences in the input")
    table = featurize.build_feature_table(sequences, threads=args.threads)
    out.add("features.csv", featurize.feature_csv(table))
    out.add("exclusions.json", report.to_json(sort_keys=True, indent=1))
    return {"n_rows": len(table), "schema_hash": table.schema_hash}


def _model_config(args, cfg, family):
    params = dict(cfg.get("params", {}).get(family, {})) if isinstance(cfg.get("params"), dict) else {}
    params.update(_parse_params(args.param, family))
    try:
        return ModelConfig(family, params=params, seed=args.seed)
    except ModelError as exc:
        raise UsageError(str(exc)) from exc


def cmd_train(args, cfg, out):
    table = _read_features(_require_input(args, cfg))
    family = _setting(args, cfg, "family")
    if family is None:
        raise UsageError("--family is required")
    config = _model_config(args, cfg, family)
    weeks = _setting(args, cfg, "train_weeks")
    rows = None
    if weeks:
        rows = np.flatnonzero(np.isin(table.week, [int(w) for w in weeks]))
    model = fit_model(table, config, rows=rows)
    out.add(f"model_{family}.json", model.dumps())
    return {"model": config.to_dict(), "n_rows": model.metadata["n_rows"]}


def cmd_evaluate(args, cfg, out):
    table = _read_features(_require_input(args, cfg))
    families = _setting(args, cfg, "family") or list(FAMILIES)
    families = [families] if isinstance(families, str) else list(families)
    reports = []
    for family in families:
        config = _model_config(args, cfg, family)
        report = evaluate.lowo_cv(table, config, threads=args.threads)
        reports.append(report)
        out.add(f"report_{family}.json", report.to_json())
        out.add(f"predictions_{family}.csv", report.predictions.to_csv())
        rows = evaluate.player_aggregates(report.predictions)
        out.add(f"players_{family}.csv", evaluate.aggregates_csv(rows))
    out.add("offsets.csv", evaluate.offsets_csv(reports))
    summary = {r.family: r.overall_rmse for r in reports}
    out.add("summary.json", json.dumps(summary, sort_keys=True, indent=1))
    return {"families": families, "overall_rmse": summary}


def _value_functions(args, cfg):
    names = _setting(args, cfg, "value_function") or ["ep", "wp"]
    fns = []
    ep = ExpectedPoints()
    for name in names:
        if name == "ep":
            fns.append(ep)
        elif name == "wp":
            fns.append(WinProbability(ep))
        elif os.path.exists(name):
            fns.append(load_value_function(name))
        else:
            raise UsageError(f"unknown value function {name!r} (use ep, wp or a lookup-table JSON path)")
    return fns


def _game_state(args, cfg, table):
    fields = {k: _setting(args, cfg, k) for k in ("down", "distance", "score_diff", "seconds_remaining")}
    fields = {k: v for k, v in fields.items() if v is not None}
    if not fields:
        return {}
    states = {}
    for _, a, _ in table.sequence_slices():
        start = float(np.clip(table.bc_x_adj[a], 1.0, 99.0))
        kw = {"down": 1, "distance": min(10.0, start), **fields}
        try:
            states[(str(table.game_id[a]), str(table.play_id[a]))] = GameState(start, **kw)
        except ValueError as exc:
            raise UsageError(str(exc)) from exc
    return states


def cmd_value(args, cfg, out):
    table = _select_plays(_read_features(_require_input(args, cfg)), _parse_plays(_setting(args, cfg, "play")))
    model_path = _setting(args, cfg, "model")
    if model_path is None or not os.path.exists(model_path):
        raise UsageError("--model must name an existing model file")
    model = load_model(model_path)
    density = None
    density_path = _setting(args, cfg, "density")
    if density_path:
        with open(density_path) as fh:
            density = DensityForest.from_state(json.load(fh))
    timelines = valuation_timelines(table, model, _value_functions(args, cfg), density,
                                    _game_state(args, cfg, table), threads=args.threads)
    for tl in timelines:
        out.add(os.path.join("timelines", f"{tl.game_id}_{tl.play_id}.json"), tl.to_json())
    out.add("timelines.csv", timelines_csv(timelines))
    return {"n_plays": len(timelines), "model": model_path, "density": density_path}


def cmd_density(args, cfg, out):
    table = _read_features(_require_input(args, cfg))
    forest_cfg = dict(cfg.get("forest", {}))
    for name in ("n_trees", "min_leaf", "bandwidth"):
        value = _setting(args, cfg, name)
        if value is not None:
            forest_cfg[name] = value
    train = table
    weeks = _setting(args, cfg, "train_weeks")
    if weeks:
        train = table.subset(np.flatnonzero(np.isin(table.week, [int(w) for w in weeks])))
    if len(train) == 0:
        raise UsageError("no training rows for the density forest")
    try:
        forest = DensityForest(seed=args.seed, **forest_cfg)
    except TypeError as exc:
        raise UsageError(f"invalid forest config: {exc}") from exc
    forest.fit(train.X, train.end_yardline, train.columns)
    out.add("density_model.json", json.dumps(forest.state(), sort_keys=True))
    query = _select_plays(table, _parse_plays(_setting(args, cfg, "play")))
    buf = io.StringIO()
    buf.write("game_id,play_id,frame_id,yardline,mass\n")
    for i, dens in enumerate(forest.estimate_many(query.X)):
        for y, m in enumerate(dens.mass):
            buf.write(f"{query.game_id[i]},{query.play_id[i]},{query.frame_id[i]},{y},{float(m)!r}\n")
    out.add("densities.csv", buf.getvalue())
    return {"forest": forest_cfg, "n_train": len(train), "n_query": len(query)}


COMMANDS = {
    "synth": cmd_synth,
    "ingest": cmd_ingest,
    "features": cmd_features,
    "train": cmd_train,
    "evaluate": cmd_evaluate,
    "value": cmd_value,
    "density": cmd_density,
}


# --------------------------------------------------------------------------
# argument parsing
# --------------------------------------------------------------------------


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_help(sys.stderr)
        raise UsageError(message)


def build_parser():
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", help="JSON config file; flags override its values")
    common.add_argument("--seed", type=int, help="random seed (default 0)")
    common.add_argument("--threads", type=int, help="worker count (default: available cores)")
    common.add_argument("--input", help="input file")
    common.add_argument("--output", help=f"output directory (default ${OUTPUT_ENV} or ./{DEFAULT_OUTPUT})")

    parser = _Parser(prog="playvalue", description="Continuous-time valuation of ball-carrier plays.")
    parser.add_argument("--version", action="version", version=f"playvalue {__version__}")
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)

    p = sub.add_parser("synth", parents=[common], help="generate a synthetic tracking corpus")
    p.add_argument("--weeks", type=int)
    p.add_argument("--plays-per-week", dest="plays_per_week", type=int)
    p.add_argument("--null-signal", dest="null_signal", action="store_true", default=None,
                   help="outcomes independent of every feature")

    sub.add_parser("ingest", parents=[common], help="validate tracking data and list carries")
    sub.add_parser("features", parents=[common], help="tracking CSV -> feature CSV")

    for name, helptext in (("train", "fit one model family"), ("evaluate", "leave-one-week-out evaluation")):
        p = sub.add_parser(name, parents=[common], help=helptext)
        if name == "train":
            p.add_argument("--family", choices=FAMILIES)
            p.add_argument("--train-weeks", dest="train_weeks", type=int, nargs="+",
                           help="restrict training to these weeks")
        else:
            p.add_argument("--family", choices=FAMILIES, nargs="+", help="families to evaluate (default all)")
        p.add_argument("--param", action="append", metavar="[FAMILY.]KEY=VALUE",
                       help="model hyperparameter, e.g. n_trees=50 or lstm.hidden=8 (repeatable)")

    p = sub.add_parser("value", parents=[common], help="valuation timelines")
    p.add_argument("--model", help="trained ball-carrier model file")
    p.add_argument("--density", help="density model file from the density command")
    p.add_argument("--play", action="append", metavar="GAME_ID:PLAY_ID", help="restrict to plays (repeatable)")
    p.add_argument("--value-function", dest="value_function", nargs="+",
                   help="ep, wp or lookup-table JSON paths (default: ep wp)")
    p.add_argument("--down", type=int)
    p.add_argument("--distance", type=float)
    p.add_argument("--score-diff", dest="score_diff", type=float)
    p.add_argument("--seconds-remaining", dest="seconds_remaining", type=float)

    p = sub.add_parser("density", parents=[common], help="end yard-line densities")
    p.add_argument("--play", action="append", metavar="GAME_ID:PLAY_ID", help="plays to report (default all)")
    p.add_argument("--train-weeks", dest="train_weeks", type=int, nargs="+")
    p.add_argument("--n-trees", dest="n_trees", type=int)
    p.add_argument("--min-leaf", dest="min_leaf", type=int)
    p.add_argument("--bandwidth", type=float)
    return parser


def main(argv=None):
    start = time.perf_counter()
    try:
        args = build_parser().parse_args(argv)
        cfg = _load_config(args.config)
        args.seed = int(_setting(args, cfg, "seed", 0))
        args.threads = int(_setting(args, cfg, "threads", os.cpu_count() or 1))
        if args.threads < 1:
            raise UsageError("--threads must be at least 1")
        directory = _setting(args, cfg, "output") or os.environ.get(OUTPUT_ENV) or DEFAULT_OUTPUT
        out = Outputs(directory)
        with warnings.catch_warnings():
            warnings.simplefilter("ignore")
            snapshot = COMMANDS[args.command](args, cfg, out)
        inputs = {}
        for name in ("input", "model", "density", "config"):
            path = getattr(args, name, None) or (cfg.get(name) if name != "config" else None)
            if path and os.path.isfile(path):
                inputs[path] = file_sha256(path)
        manifest = RunManifest(
            command=args.command,
            config={"flags": {k: v for k, v in sorted(vars(args).items()) if v is not None},
                    "file": cfg, "resolved": snapshot},
            input_hashes=inputs,
            seed=args.seed,
            tool_version=__version__,
            outputs=sorted(out.files) + ["manifest.json"],
        )
        manifest.wall_clock_seconds = round(time.perf_counter() - start, 3)
        out.add("manifest.json", manifest.to_json())
        out.commit()
    except UsageError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_INVALID
    except (ingest.IngestError, ModelError, ValueError, KeyError, OSError) as exc:
        print(f"error: {type(exc).__name__}: {exc}", file=sys.stderr)
        return EXIT_INVALID
    except SystemExit as exc:
        return exc.code if isinstance(exc.code, int) else EXIT_OK
    except Exception:
        traceback.print_exc()
        return EXIT_INTERNAL
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
