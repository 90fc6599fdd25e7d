"""``forge`` command line entry point.

Exit codes: 0 success, 1 internal failure, 2 user-input error.
"""

from __future__ import annotations

import argparse
import json
import logging
import sys
from pathlib import Path
from typing import Optional, Sequence

from ttsforge import corpus, dsp, evaluation, losses, selftest
from ttsforge.config import ConfigError, parse_flat
from ttsforge.embfile import read_emb
from ttsforge.fixtures import make_fixtures

log = logging.getLogger("forge")

EXIT_OK, EXIT_INTERNAL, EXIT_USAGE = 0, 1, 2


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise UsageError(message)


def _common() -> argparse.ArgumentParser:
    # SUPPRESS keeps subcommand-level copies from clobbering values given before the subcommand
    p = argparse.ArgumentParser(add_help=False)
    p.add_argument("--seed", type=int, default=argparse.SUPPRESS, help="seed for every random draw")
    p.add_argument("--config", default=argparse.SUPPRESS, help="key=value file supplying option defaults")
    p.add_argument("--quiet", action="store_true", default=argparse.SUPPRESS)
    return p


def build_parser() -> argparse.ArgumentParser:
    common = _common()
    parser = _Parser(prog="forge", description="TTS corpus engineering and evaluation toolkit")
    parser.add_argument("--seed", type=int, default=0)
    parser.add_argument("--config", default=None)
    parser.add_argument("--quiet", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)

    p = sub.add_parser("filter", parents=[common], help="apply the dataset filtering rules to a manifest")
    p.add_argument("--manifest")
    p.add_argument("--policy")
    p.add_argument("--out-accepted")
    p.add_argument("--out-report")

    p = sub.add_parser("eval", parents=[common], help="compute metrics over hypothesis/reference pairs")
    p.add_argument("--pairs")
    p.add_argument("--metrics")
    p.add_argument("--out")
    p.add_argument("--mel-config")

    p = sub.add_parser("kernel", help="architecture kernel tools")
    ks = p.add_subparsers(dest="action", required=True, parser_class=_Parser)
    ks.add_parser("selftest", parents=[common])

    p = sub.add_parser("losses", help="training-objective tools")
    ls = p.add_subparsers(dest="action", required=True, parser_class=_Parser)
    ls.add_parser("selftest", parents=[common])
    le = ls.add_parser("eval", parents=[common])
    le.add_argument("--trace")
    le.add_argument("--weights")
    le.add_argument("--mel-real")
    le.add_argument("--mel-fake")
    le.add_argument("--out")

    p = sub.add_parser("selftest", parents=[common], help="run kernel and loss self-tests")
    p.add_argument("--scope", choices=("kernel", "losses", "all"))

    p = sub.add_parser("make-fixtures", parents=[common], help="write a deterministic synthetic fixture tree")
    p.add_argument("--out")
    return parser


_GLOBALS = ("seed", "config", "quiet", "command", "action", "explicit")

_DEFAULTS = {
    "filter": {},
    "eval": {"metrics": "cer,secs,sbs,de"},
    "selftest": {"scope": "all"},
    "make-fixtures": {"out": "fixtures"},
}

_REQUIRED = {
    "filter": ("manifest", "out_accepted", "out_report"),
    "eval": ("pairs", "out"),
    ("losses", "eval"): ("trace",),
}


def resolve(args: argparse.Namespace) -> dict:
    """Merge flags over config-file values over defaults; unknown config keys are rejected."""
    options = {k: v for k, v in vars(args).items() if k not in _GLOBALS}
    resolved = dict(_DEFAULTS.get(args.command, {}))
    if args.config:
        try:
            text = Path(args.config).read_text(encoding="utf-8")
        except OSError as exc:
            raise UsageError(f"cannot read config {args.config}: {exc}") from None
        for key, value in parse_flat(text, args.config).items():
            name = key.replace("-", "_")
            if name == "seed":
                if "seed" not in args.explicit:
                    args.seed = int(value)
                continue
            if name not in options:
                raise ConfigError(f"{args.config}: unknown key {key} for '{args.command}'")
            resolved[name] = value
    for key, value in options.items():
        if value is not None:
            resolved[key] = value
    for key in options:
        resolved.setdefault(key, None)
    resolved["seed"] = args.seed
    key = (args.command, args.action) if getattr(args, "action", None) else args.command
    missing = [k for k in _REQUIRED.get(key, ()) if not resolved.get(k)]
    if missing:
        raise UsageError("missing required option(s): " + ", ".join("--" + m.replace("_", "-") for m in missing))
    return resolved


def _emit(obj, out) -> None:
    out.write(json.dumps(obj, ensure_ascii=False) + "\n")


def cmd_filter(opts: dict) -> int:
    manifest = Path(opts["manifest"])
    policy = corpus.FilterPolicy.from_file(opts["policy"]) if opts.get("policy") else corpus.FilterPolicy()
    records = corpus.read_manifest(manifest)
    report = corpus.apply_filters(records, policy, base_dir=manifest.parent)
    accepted = set(report.accepted)
    corpus.write_manifest([r for r in records if r.id in accepted], opts["out_accepted"])
    corpus.write_manifest(report, opts["out_report"])
    log.info("filter counts: %s", json.dumps(report.counts))
    return EXIT_OK


def cmd_eval(opts: dict) -> int:
    names = evaluation.parse_metric_list(opts["metrics"])
    mel_cfg = dsp.MelConfig.from_file(opts["mel_config"]) if opts.get("mel_config") else dsp.MelConfig()
    pairs_path = Path(opts["pairs"])
    pairs = evaluation.read_pairs(pairs_path)
    lines = [
        json.dumps(evaluation.evaluate_pair(p, names, pairs_path.parent, mel_cfg), ensure_ascii=False) + "\n"
        for p in pairs
    ]
    Path(opts["out"]).write_text("".join(lines), encoding="utf-8")
    return EXIT_OK


def cmd_selftest(scope: str, seed: int, out=None) -> int:
    out = out or sys.stdout
    results = selftest.run(scope, seed)
    for r in results:
        _emit({"check": r.name, "status": "pass" if r.passed else "fail", "detail": r.detail}, out)
    ok = all(bool(r.passed) for r in results)
    _emit({"scope": scope, "passed": sum(bool(r.passed) for r in results), "total": len(results), "ok": ok}, out)
    return EXIT_OK if ok else EXIT_INTERNAL


def cmd_losses_eval(opts: dict, out=None) -> int:
    out = out or sys.stdout
    weights = losses.LossWeights.from_file(opts["weights"]) if opts.get("weights") else losses.LossWeights()
    traces = losses.read_traces(opts["trace"])
    if not traces:
        raise ValueError(f"{opts['trace']} holds no traces")
    rows = [
        {"k": k, "adv_d": losses.adv_d(t), "adv_g": losses.adv_g(t), "fm": losses.fm_loss(t)}
        for k, t in enumerate(traces)
    ]
    summary = {"discriminator_total": losses.hifi_discriminator_total(traces)}
    if opts.get("mel_real") and opts.get("mel_fake"):
        real, fake = read_emb(opts["mel_real"]), read_emb(opts["mel_fake"])
        summary["mel"] = losses.mel_loss(real, fake)
        summary["generator_total"] = losses.hifi_generator_total(traces, real, fake, weights)
    else:
        # no spectrograms supplied: mel term omitted
        summary["generator_total"] = sum(r["adv_g"] + weights.lambda_fm * r["fm"] for r in rows)
    text = "".join(json.dumps(r) + "\n" for r in rows) + json.dumps(summary) + "\n"
    if opts.get("out"):
        Path(opts["out"]).write_text(text, encoding="utf-8")
    else:
        out.write(text)
    return EXIT_OK


def cmd_make_fixtures(out_dir: str, seed: int) -> int:
    files = make_fixtures(out_dir, seed)
    log.info("wrote %d fixture files under %s", len(files), out_dir)
    return EXIT_OK


def _explicit_flags(argv: Sequence[str]) -> set[str]:
    return {a[2:].split("=")[0].replace("-", "_") for a in argv if a.startswith("--")}


def main(argv: Optional[Sequence[str]] = None) -> int:
    argv = list(sys.argv[1:] if argv is None else argv)
    try:
        args = build_parser().parse_args(argv)
        args.explicit = _explicit_flags(argv)
        logging.basicConfig(
            level=logging.WARNING if args.quiet else logging.INFO,
            format="%(name)s: %(message)s", stream=sys.stderr, force=True,
        )
        opts = resolve(args)
        action = getattr(args, "action", None)
        log.info("resolved config: %s", json.dumps({"command": args.command, "action": action, **opts}, sort_keys=True))
        if args.command == "filter":
            return cmd_filter(opts)
        if args.command == "eval":
            return cmd_eval(opts)
        if args.command in ("kernel", "losses") and action == "selftest":
            return cmd_selftest(args.command, opts["seed"])
        if args.command == "losses" and action == "eval":
            return cmd_losses_eval(opts)
        if args.command == "selftest":
            return cmd_selftest(opts["scope"], opts["seed"])
        if args.command == "make-fixtures":
            return cmd_make_fixtures(opts["out"], opts["seed"])
        raise UsageError(f"unhandled command {args.command}")
    except (UsageError, ConfigError, corpus.ManifestError, evaluation.PairSchemaError) as exc:
        print(f"forge: error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except (OSError, ValueError) as exc:
        # bad input files or values supplied by the user
        print(f"forge: error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except Exception as exc:  # noqa: BLE001
        print(f"forge: internal error: {exc!r}", file=sys.stderr)
        return EXIT_INTERNAL


if __name__ == "__main__":
    sys.exit(main())
