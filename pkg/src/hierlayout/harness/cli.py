"""The hierlayout command-line interface.

Subcommands: validate, render, score, generate, ingest, eval, judge. Every
data-facing command takes --json for machine-readable stdout; without it the
output is a short human summary. Exit codes: 0 on success, 1 on domain
errors (bad drafts, missing assets, judge failures, and the like), 2 on
usage errors, which argparse reports itself.
"""

from __future__ import annotations

import argparse
import json
import re
import sys
from pathlib import Path

from ..draft import CanvasSpec, DraftProtocol, parse_draft, serialize_draft
from ..errors import (
    DecodeError,
    DimensionMismatch,
    DivisibilityError,
    DraftError,
    EmptyCorpus,
    EmptyInput,
    FormatError,
    GeneratorError,
    IdMismatch,
    ManifestError,
    MissingAsset,
    TransportError,
)
from ..raster import RgbaImage, composite, decode_png, encode_png
from ..solver import anneal, solve_glg
from .config import eval_config_from, judge_kwargs_from, load_config, solver_config_from
from .evalrun import eval_corpus, score_draft
from .judge import JudgeClient, judge_rating, judge_voting
from .store import CorpusStore, ingest

__all__ = ["main"]

_DOMAIN_ERRORS = (
    DraftError,
    ManifestError,
    EmptyCorpus,
    EmptyInput,
    GeneratorError,
    TransportError,
    FormatError,
    MissingAsset,
    IdMismatch,
    DimensionMismatch,
    DivisibilityError,
    DecodeError,
    FileNotFoundError,
    NotADirectoryError,
    ValueError,
)


def _load_draft(path: str) -> DraftProtocol:
    return parse_draft(Path(path).read_bytes())


def _load_assets_for(directory: str, element_ids) -> dict[str, RgbaImage]:
    root = Path(directory)
    if not root.is_dir():
        raise NotADirectoryError(f"{root} is not a directory")
    assets = {}
    for element_id in element_ids:
        path = root / f"{element_id}.png"
        if not path.is_file():
            raise MissingAsset(element_id)
        assets[element_id] = decode_png(path.read_bytes())
    return assets


def _discover_assets(directory: str) -> dict[str, RgbaImage]:
    root = Path(directory)
    if not root.is_dir():
        raise NotADirectoryError(f"{root} is not a directory")
    files = sorted(root.glob("*.png"))
    if not files:
        raise EmptyInput(f"no .png assets in {root}")
    return {f.stem: decode_png(f.read_bytes()) for f in files}


def _parse_canvas(text: str) -> CanvasSpec:
    match = re.fullmatch(r"(\d+)x(\d+)", text)
    if not match:
        raise ValueError(f"canvas must look like 640x480, got {text!r}")
    return CanvasSpec(int(match.group(1)), int(match.group(2)))


def _emit(args, payload: dict, lines: list[str]) -> None:
    if getattr(args, "json", False):
        print(json.dumps(payload, indent=2, sort_keys=True))
    else:
        for line in lines:
            print(line)


def _cmd_validate(args) -> int:
    draft = _load_draft(args.draft)
    _emit(
        args,
        {"ok": True, "elements": len(draft.placements)},
        [f"OK ({len(draft.placements)} elements)"],
    )
    return 0


def _cmd_render(args) -> int:
    draft = _load_draft(args.draft)
    assets = _load_assets_for(args.assets, (p.element_id for p in draft.placements))
    render, mask = composite(draft, assets)
    out = Path(args.out)
    out.write_bytes(encode_png(render))
    written = {"render": str(out)}
    if args.mask:
        Path(args.mask).write_bytes(mask.to_png16())
        written["mask"] = args.mask
    _emit(args, {"ok": True, **written}, [f"wrote {v}" for v in written.values()])
    return 0


def _cmd_score(args) -> int:
    draft = _load_draft(args.draft)
    truth = _load_draft(args.truth)
    assets = _load_assets_for(args.assets, (p.element_id for p in draft.placements))
    reference = {p.element_id: p.hierarchy for p in truth.placements}
    report, _ = score_draft(draft, reference, assets)
    if args.json:
        sys.stdout.write(report.to_json())
    else:
        for key, value in report.to_json_dict().items():
            if key == "counts":
                print(f"overlapping_pairs {value['overlapping_pairs']}")
                print(f"elements {value['elements']}")
            else:
                print(f"{key} {value}")
    return 0


def _cmd_generate(args) -> int:
    canvas = _parse_canvas(args.canvas)
    cfg = solver_config_from(load_config(args.config), seed=args.seed)
    elements = _discover_assets(args.assets)
    if args.mode == "hlg":
        draft = anneal(elements, canvas, cfg)
    else:
        order = args.order.split(",") if args.order else sorted(elements)
        if set(order) != set(elements) or len(order) != len(elements):
            raise ValueError(
                f"--order must list every asset exactly once; assets are {sorted(elements)}"
            )
        draft = solve_glg({i: elements[i] for i in order}, canvas, cfg)
    data = serialize_draft(draft)
    if args.out:
        Path(args.out).write_bytes(data)
        print(f"wrote {args.out}")
    else:
        sys.stdout.write(data.decode("utf-8"))
    return 0


def _cmd_ingest(args) -> int:
    store = ingest(args.manifest, args.store)
    splits = ", ".join(f"{k}={v}" for k, v in store.splits.items())
    _emit(
        args,
        {"compositions": len(store.ids), "splits": store.splits, "store_hash": store.store_hash},
        [
            f"ingested {len(store.ids)} compositions into {store.root}",
            f"splits: {splits}",
            f"store hash: {store.store_hash}",
        ],
    )
    return 0


def _cmd_eval(args) -> int:
    include = None
    if args.include:
        include = [
            line.strip()
            for line in Path(args.include).read_text(encoding="utf-8").splitlines()
            if line.strip()
        ]
    cfg = eval_config_from(
        load_config(args.config),
        {
            "generator": args.generator,
            "drafts_dir": args.drafts,
            "seed": args.seed,
            "shuffle_p": args.shuffle_p,
            "workers": args.workers,
            "include": include,
        },
    )
    store = CorpusStore.open(args.store)
    run = eval_corpus(store, cfg, args.out_root)
    payload = {
        "run_id": run.run_id,
        "root": str(run.root),
        "summary": run.summary.to_json_dict() if run.summary else None,
        "skips": [{"id": rid, "reason": reason} for rid, reason in run.skips],
    }
    lines = [f"run {run.run_id} -> {run.root}"]
    if run.summary:
        for key, value in run.summary.to_json_dict().items():
            lines.append(f"{key} {value}")
    else:
        lines.append("no cases scored")
    if run.skips:
        lines.append(f"skipped {len(run.skips)} case(s)")
        lines.extend(f"  {rid}: {reason}" for rid, reason in run.skips)
    _emit(args, payload, lines)
    return 0


def _cmd_judge(args) -> int:
    kwargs = judge_kwargs_from(load_config(args.config), args.endpoint)
    client = JudgeClient(log_path=args.log, **kwargs)
    run_dir = Path(args.run)
    if args.mode == "voting":
        if not args.versus:
            raise ValueError("voting mode needs --versus RUN_DIR")
        result = judge_voting(client, run_dir, args.versus)
    else:
        result = judge_rating(client, run_dir)
    (run_dir / f"judge_{args.mode}.json").write_text(
        json.dumps(result, indent=2, sort_keys=True) + "\n", encoding="utf-8"
    )
    lines = [f"{args.mode}: {result['n_cases']} case(s) judged"]
    if args.mode == "rating" and result["means"]:
        lines.extend(f"{name} {value}" for name, value in result["means"].items())
    if args.mode == "voting":
        lines.append(f"first {result['counts']['first']} second {result['counts']['second']}")
    if result["skips"]:
        lines.append(f"skipped {len(result['skips'])} case(s)")
    _emit(args, result, lines)
    return 0


def _build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="hierlayout",
        description="Layered graphic composition toolkit: validate, render, "
        "score, and generate drafts; ingest and evaluate corpora.",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("validate", help="check a draft file against the protocol")
    p.add_argument("draft", help="path to a draft JSON file")
    p.add_argument("--json", action="store_true")
    p.set_defaults(func=_cmd_validate)

    p = sub.add_parser("render", help="composite a draft to a PNG")
    p.add_argument("--draft", required=True)
    p.add_argument("--assets", required=True, help="directory with <element id>.png files")
    p.add_argument("--out", required=True, help="output PNG path")
    p.add_argument("--mask", help="also write the coverage alpha as 16-bit PNG")
    p.add_argument("--json", action="store_true")
    p.set_defaults(func=_cmd_render)

    p = sub.add_parser("score", help="score a draft against a reference draft")
    p.add_argument("--draft", required=True, help="predicted draft JSON")
    p.add_argument("--truth", required=True, help="reference draft JSON")
    p.add_argument("--assets", required=True)
    p.add_argument("--json", action="store_true")
    p.set_defaults(func=_cmd_score)

    p = sub.add_parser("generate", help="run the solver over a directory of assets")
    p.add_argument("--assets", required=True)
    p.add_argument("--canvas", required=True, help="canvas size, e.g. 640x480")
    p.add_argument("--mode", choices=("hlg", "glg"), default="hlg")
    p.add_argument("--order", help="comma-separated layer order (glg mode)")
    p.add_argument("--config", help="TOML config file")
    p.add_argument("--seed", type=int)
    p.add_argument("--out", help="output draft path; stdout when omitted")
    p.set_defaults(func=_cmd_generate)

    p = sub.add_parser("ingest", help="build a corpus store from a JSONL manifest")
    p.add_argument("--manifest", required=True)
    p.add_argument("--store", required=True)
    p.add_argument("--json", action="store_true")
    p.set_defaults(func=_cmd_ingest)

    p = sub.add_parser("eval", help="evaluate the test split of a corpus store")
    p.add_argument("--store", required=True)
    p.add_argument("--generator", choices=("solver-hlg", "solver-glg", "external"))
    p.add_argument("--drafts", help="directory of <case id>.json drafts (external)")
    p.add_argument("--out-root", default="runs")
    p.add_argument("--config", help="TOML config file")
    p.add_argument("--seed", type=int)
    p.add_argument("--shuffle-p", type=float, dest="shuffle_p")
    p.add_argument("--workers", type=int)
    p.add_argument("--include", help="file with one case id per line")
    p.add_argument("--json", action="store_true")
    p.set_defaults(func=_cmd_eval)

    p = sub.add_parser("judge", help="send a run's renders to a judge endpoint")
    p.add_argument("--run", required=True, help="run directory")
    p.add_argument("--mode", choices=("rating", "voting"), default="rating")
    p.add_argument("--versus", help="second run directory (voting)")
    p.add_argument("--endpoint")
    p.add_argument("--config", help="TOML config file")
    p.add_argument("--log", help="JSONL attempt log path")
    p.add_argument("--json", action="store_true")
    p.set_defaults(func=_cmd_judge)

    return parser


def main(argv=None) -> int:
    args = _build_parser().parse_args(argv)
    try:
        return args.func(args)
    except _DOMAIN_ERRORS as err:
        if getattr(args, "json", False):
            print(
                json.dumps(
                    {"ok": False, "error": type(err).__name__, "message": str(err)},
                    sort_keys=True,
                )
            )
        else:
            print(f"{type(err).__name__}: {err}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
