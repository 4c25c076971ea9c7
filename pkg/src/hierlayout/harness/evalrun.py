"""Corpus evaluation runs.

A run takes every test-split composition in a store, obtains a draft for it
from the configured generator, renders and scores it, and writes the whole
thing under runs/<run_id>/: a frozen config snapshot, a JSON report, a TSV
of per-case rows, and one PNG render per scored case. The run id is a hash
of the store hash plus the config snapshot, and nothing in the output
depends on wall-clock time or case completion order, so rerunning the same
store with the same config reproduces every byte.

Generators:
  solver-hlg   run the annealing solver on the element set; the input id
               order is shuffled per case first, which the solver's own
               order independence makes harmless by construction.
  solver-glg   run the geometry-only solver on the ground-truth layer order.
  external     load a finished draft from <drafts_dir>/<case id>.json.

Per-case seeds are run_seed XOR case_index (case_index counts the sorted
test ids), so workers never share RNG state and a single changed seed moves
every case. Any per-case failure, from the generator or from scoring, turns
into a skip entry with a reason; the run itself never aborts.
"""

from __future__ import annotations

import hashlib
import json
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import Mapping

from ..draft import DraftProtocol, parse_draft
from ..errors import DraftError, EmptyCorpus, GeneratorError
from ..metrics import (
    CorpusSummary,
    MetricReport,
    corpus_summary,
    inverse_order_counts,
    r_ali,
    r_com,
    r_occ,
    r_ove,
    r_und,
)
from ..raster import RgbaImage, composite, element_stats, encode_png
from ..seqcodec import shuffle_inputs
from ..solver import SolverConfig, anneal, default_saliency, infer_roles, solve_glg
from .store import CorpusRecord, CorpusStore

__all__ = ["GENERATORS", "EvalConfig", "EvalRun", "score_draft", "eval_corpus"]

GENERATORS = ("solver-hlg", "solver-glg", "external")


@dataclass(frozen=True)
class EvalConfig:
    """Everything a run depends on besides the store itself.

    The solver config's own seed field is ignored during evaluation; each
    case gets seed XOR case_index instead.
    """

    generator: str = "solver-hlg"
    drafts_dir: str | None = None
    seed: int = 0
    shuffle_p: float = 1.0
    workers: int = 1
    include: tuple[str, ...] | None = None
    solver: SolverConfig = field(default_factory=SolverConfig)

    def __post_init__(self) -> None:
        if self.generator not in GENERATORS:
            raise ValueError(f"generator must be one of {list(GENERATORS)}")
        if self.generator == "external" and not self.drafts_dir:
            raise ValueError("external generator needs drafts_dir")
        if self.seed < 0:
            raise ValueError("seed must be a non-negative integer")
        if not 0.0 <= self.shuffle_p <= 1.0:
            raise ValueError("shuffle_p must lie in [0, 1]")
        if self.workers < 1:
            raise ValueError("workers must be >= 1")
        if self.include is not None:
            object.__setattr__(self, "include", tuple(str(i) for i in self.include))

    def to_json_dict(self) -> dict:
        return {
            "generator": self.generator,
            "drafts_dir": self.drafts_dir,
            "seed": self.seed,
            "shuffle_p": self.shuffle_p,
            "workers": self.workers,
            "include": list(self.include) if self.include is not None else None,
            "solver": self.solver.to_json_dict(),
        }

    @classmethod
    def from_mapping(cls, mapping: Mapping) -> "EvalConfig":
        kwargs: dict = {}
        for key, value in mapping.items():
            if key == "solver":
                kwargs["solver"] = SolverConfig.from_mapping(value)
            elif key == "include":
                kwargs["include"] = tuple(str(i) for i in value) if value is not None else None
            elif key in ("generator", "drafts_dir"):
                kwargs[key] = None if value is None else str(value)
            elif key in ("seed", "workers"):
                kwargs[key] = int(value)
            elif key == "shuffle_p":
                kwargs[key] = float(value)
            else:
                raise ValueError(f"unknown config key {key!r}")
        return cls(**kwargs)


@dataclass(frozen=True)
class EvalRun:
    run_id: str
    root: Path
    config: EvalConfig
    store_hash: str
    reports: dict[str, MetricReport]
    skips: tuple[tuple[str, str], ...]
    summary: CorpusSummary | None


def score_draft(
    draft: DraftProtocol,
    reference_order: Mapping[str, int],
    assets: Mapping[str, RgbaImage],
) -> tuple[MetricReport, RgbaImage]:
    """Score one predicted draft against a reference stacking order.

    Returns the metric bundle and the full render. Roles come from the
    pixel-rule classifier; the readability measure sees the composition
    flattened without its text-like layers, and occlusion uses the
    background-only saliency map.
    """
    roles = infer_roles(
        {i: (img, element_stats(img)) for i, img in assets.items()}, draft.canvas
    )
    inverted, overlapping = inverse_order_counts(draft, reference_order)
    render, mask = composite(draft, assets)
    saliency = default_saliency(draft, assets, roles)

    by_rank = sorted(draft.placements, key=lambda p: p.hierarchy)
    kept = [p for p in by_rank if roles.get(p.element_id) != "text_like"]
    if kept:
        ranked = tuple(replace(p, hierarchy=k) for k, p in enumerate(kept))
        base_render, _ = composite(
            DraftProtocol(canvas=draft.canvas, placements=ranked), assets
        )
    else:
        base_render = RgbaImage.filled(
            draft.canvas.width, draft.canvas.height, (255, 255, 255, 255)
        )

    report = MetricReport(
        iopr=inverted / overlapping if overlapping else 0.0,
        r_com=r_com(base_render, draft, roles),
        r_occ=r_occ(draft, saliency, mask),
        r_ali=r_ali(draft),
        r_ove=r_ove(draft, roles),
        r_und=r_und(draft, roles),
        overlapping_pairs=overlapping,
        elements=len(draft.placements),
    )
    return report, render


def _generate(
    record: CorpusRecord,
    assets: Mapping[str, RgbaImage],
    cfg: EvalConfig,
    case_seed: int,
) -> DraftProtocol:
    canvas = record.canvas
    if cfg.generator == "solver-hlg":
        order = shuffle_inputs(sorted(assets), cfg.shuffle_p, case_seed)
        elements = {i: assets[i] for i in order}
        return anneal(elements, canvas, replace(cfg.solver, seed=case_seed))
    if cfg.generator == "solver-glg":
        truth = sorted(record.elements, key=lambda e: e.hierarchy)
        elements = {e.element_id: assets[e.element_id] for e in truth}
        return solve_glg(elements, canvas, replace(cfg.solver, seed=case_seed))
    path = Path(cfg.drafts_dir) / f"{record.record_id}.json"
    if not path.is_file():
        raise GeneratorError(f"draft file {path} not found")
    try:
        draft = parse_draft(path.read_bytes())
    except DraftError as err:
        raise GeneratorError(f"draft file {path}: {err}") from None
    if draft.canvas != canvas:
        raise GeneratorError(
            f"draft canvas {draft.canvas.width}x{draft.canvas.height} does not match "
            f"corpus canvas {canvas.width}x{canvas.height}"
        )
    return draft


def _json_blob(obj) -> bytes:
    return (json.dumps(obj, indent=2, sort_keys=True) + "\n").encode("utf-8")


def eval_corpus(
    store: CorpusStore, cfg: EvalConfig, out_root: str | Path = "runs"
) -> EvalRun:
    """Evaluate every test composition and write the run directory.

    Aggregates are order-independent (cases are summed in sorted-id order
    with exact summation), so the worker count changes throughput only.
    """
    case_ids = store.split_ids("test")
    if cfg.include is not None:
        unknown = sorted(set(cfg.include) - set(case_ids))
        if unknown:
            raise ValueError(f"include list names unknown test cases: {unknown}")
        wanted = set(cfg.include)
        case_ids = [rid for rid in case_ids if rid in wanted]
    if not case_ids:
        raise EmptyCorpus("no test cases to evaluate")

    config_snapshot = {"store_hash": store.store_hash, "config": cfg.to_json_dict()}
    run_id = hashlib.sha256(_json_blob(config_snapshot)).hexdigest()[:12]
    root = Path(out_root) / run_id
    (root / "renders").mkdir(parents=True, exist_ok=True)

    def work(case: tuple[int, str]):
        index, rid = case
        record = store.record(rid)
        try:
            assets = store.load_assets(record)
            draft = _generate(record, assets, cfg, cfg.seed ^ index)
            report, render = score_draft(draft, record.reference_order(), assets)
            return rid, report, encode_png(render), None
        except GeneratorError as err:
            return rid, None, None, str(err)
        except Exception as err:
            return rid, None, None, f"{type(err).__name__}: {err}"

    with ThreadPoolExecutor(max_workers=cfg.workers) as pool:
        outcomes = list(pool.map(work, enumerate(case_ids)))

    reports: dict[str, MetricReport] = {}
    skips: list[tuple[str, str]] = []
    for rid, report, png, reason in outcomes:
        if report is None:
            skips.append((rid, reason))
            continue
        reports[rid] = report
        (root / "renders" / f"{rid}.png").write_bytes(png)

    summary = corpus_summary([reports[rid] for rid in sorted(reports)]) if reports else None

    (root / "config.json").write_bytes(_json_blob(config_snapshot))
    report_doc = {
        "run_id": run_id,
        "store_hash": store.store_hash,
        "config": cfg.to_json_dict(),
        "cases": [{"id": rid, **reports[rid].to_json_dict()} for rid in sorted(reports)],
        "skips": [{"id": rid, "reason": reason} for rid, reason in skips],
        "summary": summary.to_json_dict() if summary else None,
    }
    (root / "report.json").write_bytes(_json_blob(report_doc))
    lines = ["id\t" + MetricReport.TSV_HEADER]
    lines.extend(f"{rid}\t{reports[rid].to_tsv()}" for rid in sorted(reports))
    (root / "summary.tsv").write_text("\n".join(lines) + "\n", encoding="utf-8")

    return EvalRun(
        run_id=run_id,
        root=root,
        config=cfg,
        store_hash=store.store_hash,
        reports=reports,
        skips=tuple(skips),
        summary=summary,
    )
