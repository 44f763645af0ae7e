"""Command-line front end: generate, detect, analyze, experiment, selftest.

Exit codes: 0 success (for detect: watermark found in at least one record),
1 negative result (no watermark / selftest failure), 2 configuration error.
"""

from __future__ import annotations

import argparse
import json
import sys

from .analysis import SizeAnalysisParams, analysis_rows
from .core import SecretKey, TokenSequence
from .detect import detect_ensemble
from .errors import ConfigError, EnsmarkError
from .generate import GenerationRecord, generate, generate_unwatermarked
from .harness import load_spec, run_null_calibration, run_power_sweep, run_unbiasedness_suite
from .lm import DistributionTrace, SyntheticLM
from .reweight import EnsembleConfig


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except ConfigError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except EnsmarkError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="ensmark",
        description="Ensemble unbiased watermarking: generation, detection, analysis.",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p_gen = sub.add_parser("generate", help="generate watermarked token sequences")
    p_gen.add_argument("--config", required=True, help="JSON config file")
    p_gen.add_argument("-o", "--output", required=True, help="output JSONL path")
    p_gen.set_defaults(func=cmd_generate)

    p_det = sub.add_parser("detect", help="detect the watermark in recorded sequences")
    p_det.add_argument("--input", required=True, help="GenerationRecord JSONL path")
    p_det.add_argument("--keys", required=True,
                       help="comma-separated 32-hex-char secret keys")
    p_det.add_argument("--n", type=int, default=None,
                       help="expected ensemble size (validated against --keys)")
    p_det.add_argument("--alpha", type=float, default=0.3)
    p_det.add_argument("--a", type=int, default=2, help="context window length")
    p_det.add_argument("--vocab-size", type=int, default=None,
                       help="vocabulary size (defaults to the record's LM descriptor)")
    p_det.add_argument("--threshold", type=float, default=None,
                       help="score threshold for the decision")
    p_det.add_argument("--fpr", type=float, default=None,
                       help="target FPR; derives the analytic threshold")
    p_det.add_argument("--skip-repeats", action="store_true",
                       help="exclude repeated contexts from scoring")
    p_det.add_argument("-o", "--output", default=None, help="report JSON path (default stdout)")
    p_det.set_defaults(func=cmd_detect)

    p_ana = sub.add_parser("analyze", help="closed-form ensemble-size trade-off curves")
    p_ana.add_argument("--gamma", type=float, required=True)
    p_ana.add_argument("--eps", type=float, required=True)
    p_ana.add_argument("--T", type=int, default=250)
    p_ana.add_argument("--C", type=float, default=2.0)
    p_ana.add_argument("--n-max", type=int, default=10)
    p_ana.add_argument("-o", "--output", default=None, help="CSV path (default stdout)")
    p_ana.set_defaults(func=cmd_analyze)

    p_exp = sub.add_parser("experiment", help="run a power / null / unbiasedness experiment")
    p_exp.add_argument("--spec", required=True, help="ExperimentSpec JSON file")
    p_exp.add_argument("--mode", choices=["power", "null", "unbiasedness"], default="power")
    p_exp.add_argument("-o", "--output", required=True,
                       help="output prefix (.csv and .jsonl are appended)")
    p_exp.set_defaults(func=cmd_experiment)

    p_self = sub.add_parser("selftest", help="run golden-vector conformance checks")
    p_self.set_defaults(func=cmd_selftest)

    return parser


def _load_json(path, field="config"):
    try:
        with open(path) as fh:
            return json.load(fh)
    except FileNotFoundError as exc:
        raise ConfigError(field, f"file not found: {path}") from exc
    except json.JSONDecodeError as exc:
        raise ConfigError(field, f"invalid JSON: {exc}") from exc


def cmd_generate(args) -> int:
    obj = _load_json(args.config)
    for field in ("lm", "ensemble", "prompt", "T", "seed"):
        if field not in obj:
            raise ConfigError(field, "missing")
    if "secret_keys" not in obj["ensemble"]:
        raise ConfigError("ensemble.secret_keys", "missing")
    try:
        lm = _lm_from_json(obj["lm"])
        cfg = EnsembleConfig.from_json(obj["ensemble"])
    except (TypeError, ValueError, KeyError) as exc:
        raise ConfigError("ensemble" if "key" in str(exc).lower() else "lm", str(exc)) from exc
    prompt = TokenSequence(tuple(obj["prompt"]), prompt_len=len(obj["prompt"]))
    runs = int(obj.get("runs", 1))
    unwatermarked = bool(obj.get("unwatermarked", False))
    preseed = bool(obj.get("preseed_history", False))
    with open(args.output, "w") as fh:
        for run in range(runs):
            seed = int(obj["seed"]) + run
            if unwatermarked:
                rec = generate_unwatermarked(lm, prompt, int(obj["T"]), seed,
                                             context_window=cfg.context_window)
            else:
                rec = generate(lm, cfg, prompt, int(obj["T"]), seed,
                               preseed_history=preseed)
            fh.write(rec.to_jsonl() + "\n")
    return 0


def _lm_from_json(obj):
    if obj.get("kind", "synthetic") == "trace":
        return DistributionTrace.load(obj["path"])
    return SyntheticLM.from_json(obj)


def cmd_detect(args) -> int:
    key_hexes = [k for k in args.keys.split(",") if k]
    try:
        keys = tuple(SecretKey.from_hex(k) for k in key_hexes)
    except ValueError as exc:
        raise ConfigError("keys", str(exc)) from exc
    if args.n is not None and args.n != len(keys):
        raise ConfigError("n", f"--n={args.n} but {len(keys)} keys were given")
    if args.threshold is None and args.fpr is None:
        raise ConfigError("threshold", "supply --threshold or --fpr")
    from .reweight import DipReweight

    cfg = EnsembleConfig(DipReweight(args.alpha), keys, context_window=args.a)
    reports = []
    any_detected = False
    with open(args.input) as fh:
        for line in fh:
            line = line.strip()
            if not line:
                continue
            rec = GenerationRecord.from_json(json.loads(line))
            n_vocab = args.vocab_size or rec.lm_descriptor.get("vocab_size")
            if n_vocab is None:
                raise ConfigError("vocab_size", "not in record; pass --vocab-size")
            report = detect_ensemble(
                rec.sequence, cfg,
                threshold=args.threshold,
                target_fpr=args.fpr,
                skip_repeats=args.skip_repeats,
                n_vocab=int(n_vocab),
            )
            reports.append(report.to_json())
            any_detected = any_detected or report.decision
    if not reports:
        raise ConfigError("input", "no records in input file")
    text = json.dumps(reports, indent=2, sort_keys=True)
    if args.output:
        with open(args.output, "w") as fh:
            fh.write(text + "\n")
    else:
        print(text)
    return 0 if any_detected else 1


def cmd_analyze(args) -> int:
    try:
        params = SizeAnalysisParams(gamma=args.gamma, eps=args.eps,
                                    length=args.T, bound_constant=args.C)
    except ValueError as exc:
        raise ConfigError("gamma/eps", str(exc)) from exc
    rows = analysis_rows(params, args.n_max)
    lines = ["n,promoted_mass,mu,g,p_bound"]
    for row in rows:
        lines.append(
            f"{row['n']},{row['promoted_mass']!r},{row['mu']!r},{row['g']!r},{row['p_bound']!r}"
        )
    text = "\n".join(lines) + "\n"
    if args.output:
        with open(args.output, "w") as fh:
            fh.write(text)
    else:
        sys.stdout.write(text)
    return 0


def cmd_experiment(args) -> int:
    spec = load_spec(args.spec)
    if args.mode == "power":
        result = run_power_sweep(spec)
    elif args.mode == "null":
        result = run_null_calibration(spec)
    else:
        report = run_unbiasedness_suite()
        with open(args.output + ".json", "w") as fh:
            json.dump(report, fh, indent=2, sort_keys=True)
        print(json.dumps(report, sort_keys=True))
        return 0
    result.write_csv(args.output + ".csv")
    result.write_jsonl(args.output + ".jsonl")
    for warning in result.warnings:
        print(f"warning: {warning}", file=sys.stderr)
    return 0


def cmd_selftest(args) -> int:
    from .conformance import run_selftest

    checks = run_selftest()
    failed = 0
    for name, ok, detail in checks:
        status = "PASS" if ok else "FAIL"
        print(f"{status} {name}" + ("" if ok else f"  ({detail})"))
        failed += 0 if ok else 1
    print(f"{len(checks) - failed}/{len(checks)} conformance checks passed")
    return 0 if failed == 0 else 1


if __name__ == "__main__":
    sys.exit(main())
