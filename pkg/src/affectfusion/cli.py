"""Command-line entry point: ``affectfusion <command> [options]``.

Exit codes: 0 success, 1 validation error, 2 numeric failure.
"""

from __future__ import annotations

import argparse
import json
import logging
import sys

from affectfusion import DIMENSIONS, pipeline
from affectfusion.config import parse_override, resolve_config
from affectfusion.data.io import read_json
from affectfusion.errors import NumericError, ValidationError
from affectfusion.synth import GmmSynthSpec, SynthSpec, gen_gmm_samples, gen_regression_corpus, gen_test_images

logger = logging.getLogger("affectfusion")


def _csv_list(text: str) -> list[str]:
    return [t.strip() for t in text.split(",") if t.strip()]


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", help="JSON config or a previous run.json")
    common.add_argument("--manifest", help="corpus manifest JSON")
    common.add_argument("--work-dir", help="output root (default: ./work)")
    common.add_argument("--seed", type=int, help="global seed")
    common.add_argument("--workers", type=int, help="worker processes for per-subject extraction")
    common.add_argument("--set", action="append", default=[], metavar="KEY=VALUE",
                        help="override any config key, e.g. --set train.epochs=50")
    common.add_argument("-v", "--verbose", action="count", default=0)

    p = argparse.ArgumentParser(prog="affectfusion", description=__doc__.splitlines()[0])
    sub = p.add_subparsers(dest="command", required=True)

    e = sub.add_parser("extract", parents=[common], help="per-frame feature extraction")
    e.add_argument("--kind", required=True, choices=pipeline.EXTRACT_KINDS)
    e.add_argument("--modality", required=True)

    f = sub.add_parser("fit", parents=[common], help="fit an unsupervised model on train data")
    f.add_argument("--kind", required=True, choices=pipeline.FIT_KINDS)
    f.add_argument("--modality", required=True)

    t = sub.add_parser("train", parents=[common], help="train per-dimension regressors")
    t.add_argument("--modality", required=True)
    t.add_argument("--dimensions", type=_csv_list, default=list(DIMENSIONS))

    pr = sub.add_parser("predict", parents=[common], help="write prediction tracks")
    pr.add_argument("--modality", required=True)
    pr.add_argument("--partitions", type=_csv_list, default=["dev", "test"])

    ev = sub.add_parser("evaluate", parents=[common], help="score predictions against gold labels")
    ev.add_argument("--source", required=True, help="modality name, or 'fused'")
    ev.add_argument("--partition", default="dev", choices=("train", "dev"))

    fu = sub.add_parser("fuse", parents=[common], help="dev weight search and late fusion")
    fu.add_argument("--modalities", type=_csv_list, required=True)
    fu.add_argument("--partitions", type=_csv_list, default=["dev", "test"])

    sy = sub.add_parser("synth", help="generate synthetic fixtures")
    sy.add_argument("what", choices=("corpus", "gmm", "images"))
    sy.add_argument("--out", required=True)
    sy.add_argument("--seed", type=int, default=0)
    sy.add_argument("--spec", help="JSON file with generator options")
    sy.add_argument("-v", "--verbose", action="count", default=0)
    return p


def _resolve(args) -> dict:
    overrides = [parse_override(s) for s in args.set]
    for flag, key in (("manifest", "manifest"), ("work_dir", "work_dir"), ("seed", "seed"), ("workers", "workers")):
        val = getattr(args, flag)
        if val is not None:
            overrides.append((key, val))
    return resolve_config(args.config, overrides)


def _synth(args) -> None:
    opts = read_json(args.spec) if args.spec else {}
    if not isinstance(opts, dict):
        raise ValidationError("synth spec must be a JSON object")
    opts.setdefault("seed", args.seed)
    if args.what == "corpus":
        res = gen_regression_corpus(SynthSpec.from_dict(opts), args.out)
        print(f"manifest: {res.manifest_path}")
        print(f"clamped labels: {res.clamped}")
        for d, v in res.oracle["combined"].items():
            print(f"oracle ridge dev ccc {d}: {v:.4f}")
    elif args.what == "gmm":
        try:
            spec = GmmSynthSpec(**{k: (tuple(map(tuple, v)) if k in ("means", "variances") else
                                       tuple(v) if k == "weights" else v) for k, v in opts.items()})
        except TypeError as exc:
            raise ValidationError(f"bad gmm synth spec: {exc}") from None
        x, _ = gen_gmm_samples(spec, args.out)
        print(f"wrote {len(x)} samples to {args.out}")
    else:
        paths = gen_test_images(args.out, seed=opts["seed"])
        print(f"wrote {len(paths)} images to {args.out}")


def run(args) -> None:
    if args.command == "synth":
        _synth(args)
        return
    cfg = _resolve(args)
    if args.command == "extract":
        out = pipeline.cmd_extract(cfg, args.kind, args.modality)
        print(f"extracted {len(out)} track(s)")
    elif args.command == "fit":
        print(pipeline.cmd_fit(cfg, args.kind, args.modality))
    elif args.command == "train":
        bad = set(args.dimensions) - set(DIMENSIONS)
        if bad:
            raise ValidationError(f"unknown dimension(s) {sorted(bad)}")
        for p in pipeline.cmd_train(cfg, args.modality, tuple(args.dimensions)):
            print(p)
    elif args.command == "predict":
        out = pipeline.cmd_predict(cfg, args.modality, tuple(args.partitions))
        print(f"wrote {len(out)} prediction track(s)")
    elif args.command == "evaluate":
        report, out_dir = pipeline.cmd_evaluate(cfg, args.source, args.partition)
        print(json.dumps(report.to_dict(), indent=2, sort_keys=True))
        print("\n".join(report.csv_lines()))
        print(f"report: {out_dir}")
    elif args.command == "fuse":
        weights, fused, _ = pipeline.cmd_fuse(cfg, args.modalities, tuple(args.partitions))
        for d in DIMENSIONS:
            w = ", ".join(f"{m}={v:.2f}" for m, v in zip(weights.modalities, weights.weights[d]))
            print(f"{d}: dev ccc {fused[d]:.4f} [{w}]")


def main(argv=None) -> int:
    try:
        args = build_parser().parse_args(argv)
    except SystemExit as exc:
        # usage errors count as validation errors; exit 2 is reserved for numeric failures
        return 0 if exc.code in (0, None) else 1
    level = logging.WARNING - 10 * min(args.verbose, 2)
    logging.basicConfig(level=level, format="%(levelname)s %(name)s: %(message)s")
    try:
        run(args)
    except NumericError as exc:
        logger.error("numeric failure: %s", exc)
        return 2
    except ValidationError as exc:
        logger.error("%s", exc)
        return 1
    return 0


if __name__ == "__main__":
    sys.exit(main())
