"""HTTP client for a remote vision judge.

The judge is any HTTP endpoint that accepts a rendered composition and
returns either four rubric scores (rating mode) or a preference between two
renders (voting mode). Requests are JSON:

    {"mode": "rating", "case_id": "c01", "rubric": "<prompt text>",
     "image_b64": "..."}                      (+ "image_b_b64" for voting)

and responses must decode to a JSON object, either

    {"layout": 7, "graphics": 6.5, "innovation": 4, "readability": 8}

with every score in [0, 10], or {"choice": "first"} / {"choice": "second"}.
Judges that wrap their JSON in prose get one repair pass (the first
parseable brace-balanced object in the text); each case gets up to five
attempts with exponential backoff, after which it is skipped, never fatal
to the caller's loop. The endpoint and bearer token can come from the
HIERLAYOUT_JUDGE_ENDPOINT and HIERLAYOUT_JUDGE_TOKEN environment variables.

Rubric prompts live in prompts/rating.txt and prompts/voting.txt next to
this module and are meant to be edited to taste.
"""

from __future__ import annotations

import base64
import json
import math
import os
import time
from pathlib import Path
from typing import Callable

import requests

from ..errors import FormatError, TransportError

__all__ = [
    "ENDPOINT_ENV",
    "TOKEN_ENV",
    "RATING_FIELDS",
    "JudgeClient",
    "extract_json_object",
    "judge_rating",
    "judge_voting",
]

ENDPOINT_ENV = "HIERLAYOUT_JUDGE_ENDPOINT"
TOKEN_ENV = "HIERLAYOUT_JUDGE_TOKEN"

RATING_FIELDS = ("layout", "graphics", "innovation", "readability")

_PROMPTS_DIR = Path(__file__).parent / "prompts"
_rubric_cache: dict[str, str] = {}


def load_rubric(mode: str) -> str:
    if mode not in ("rating", "voting"):
        raise ValueError(f"unknown judge mode {mode!r}")
    if mode not in _rubric_cache:
        _rubric_cache[mode] = (_PROMPTS_DIR / f"{mode}.txt").read_text(encoding="utf-8")
    return _rubric_cache[mode]


def extract_json_object(text: str) -> dict:
    """Pull the first parseable brace-balanced object out of free text."""
    start = text.find("{")
    while start != -1:
        depth = 0
        in_string = False
        escaped = False
        for i in range(start, len(text)):
            c = text[i]
            if in_string:
                if escaped:
                    escaped = False
                elif c == "\\":
                    escaped = True
                elif c == '"':
                    in_string = False
            elif c == '"':
                in_string = True
            elif c == "{":
                depth += 1
            elif c == "}":
                depth -= 1
                if depth == 0:
                    try:
                        doc = json.loads(text[start : i + 1])
                    except json.JSONDecodeError:
                        break
                    if isinstance(doc, dict):
                        return doc
                    break
        start = text.find("{", start + 1)
    raise FormatError("no JSON object found in judge response")


def _validate_rating(doc: dict) -> dict[str, float]:
    scores = {}
    for name in RATING_FIELDS:
        if name not in doc:
            raise FormatError(f"rating response is missing {name!r}")
        value = doc[name]
        if isinstance(value, bool) or not isinstance(value, (int, float)):
            raise FormatError(f"rating {name!r} is not a number: {value!r}")
        value = float(value)
        if not math.isfinite(value) or not 0.0 <= value <= 10.0:
            raise FormatError(f"rating {name!r} out of [0, 10]: {value!r}")
        scores[name] = value
    return scores


def _validate_voting(doc: dict) -> dict[str, str]:
    choice = doc.get("choice")
    if choice not in ("first", "second"):
        raise FormatError(f"voting choice must be 'first' or 'second', got {choice!r}")
    return {"choice": choice}


class JudgeClient:
    """One judge endpoint with retry, rate-limit, and logging policy.

    sleep and clock are injectable so tests run without waiting; log_path,
    when set, gets one JSON line per attempt.
    """

    def __init__(
        self,
        endpoint: str | None = None,
        *,
        token: str | None = None,
        max_attempts: int = 5,
        backoff_base: float = 0.5,
        backoff_cap: float = 8.0,
        min_interval: float = 0.0,
        timeout: float = 30.0,
        session=None,
        sleep: Callable[[float], None] = time.sleep,
        clock: Callable[[], float] = time.monotonic,
        log_path: str | Path | None = None,
    ) -> None:
        self.endpoint = endpoint or os.environ.get(ENDPOINT_ENV)
        if not self.endpoint:
            raise ValueError(f"no judge endpoint given and {ENDPOINT_ENV} is not set")
        self.token = token if token is not None else os.environ.get(TOKEN_ENV)
        if max_attempts < 1:
            raise ValueError("max_attempts must be >= 1")
        self.max_attempts = max_attempts
        self.backoff_base = backoff_base
        self.backoff_cap = backoff_cap
        self.min_interval = min_interval
        self.timeout = timeout
        self.session = session if session is not None else requests.Session()
        self._sleep = sleep
        self._clock = clock
        self.log_path = Path(log_path) if log_path is not None else None
        self._last_sent: float | None = None

    def _log(self, record: dict) -> None:
        if self.log_path is None:
            return
        with open(self.log_path, "a", encoding="utf-8") as fh:
            fh.write(json.dumps(record, sort_keys=True) + "\n")

    def _throttle(self) -> None:
        if self.min_interval <= 0 or self._last_sent is None:
            return
        wait = self.min_interval - (self._clock() - self._last_sent)
        if wait > 0:
            self._sleep(wait)

    def request(
        self, mode: str, case_id: str, image_png: bytes, image_b_png: bytes | None = None
    ) -> dict:
        """One judged case; returns validated scores or raises after retries.

        The terminal exception mirrors the last failure: TransportError for
        network or HTTP trouble, FormatError for responses that never
        yielded a valid payload.
        """
        if mode == "voting" and image_b_png is None:
            raise ValueError("voting mode needs a second image")
        payload = {
            "mode": mode,
            "case_id": case_id,
            "rubric": load_rubric(mode),
            "image_b64": base64.b64encode(image_png).decode("ascii"),
        }
        if image_b_png is not None:
            payload["image_b_b64"] = base64.b64encode(image_b_png).decode("ascii")
        headers = {"Authorization": f"Bearer {self.token}"} if self.token else {}

        last_kind = "transport"
        last_detail = "no attempts made"
        for attempt in range(1, self.max_attempts + 1):
            if attempt > 1:
                delay = min(self.backoff_cap, self.backoff_base * 2 ** (attempt - 2))
                if delay > 0:
                    self._sleep(delay)
            self._throttle()
            self._last_sent = self._clock()
            try:
                resp = self.session.post(
                    self.endpoint, json=payload, headers=headers, timeout=self.timeout
                )
            except requests.RequestException as err:
                last_kind, last_detail = "transport", str(err)
                self._log({"case_id": case_id, "mode": mode, "attempt": attempt,
                           "outcome": "transport", "detail": last_detail})
                continue
            if resp.status_code != 200:
                last_kind, last_detail = "transport", f"HTTP {resp.status_code}"
                self._log({"case_id": case_id, "mode": mode, "attempt": attempt,
                           "outcome": "transport", "detail": last_detail})
                continue
            try:
                try:
                    doc = json.loads(resp.text)
                    if not isinstance(doc, dict):
                        raise FormatError(f"judge response is not an object: {resp.text!r}")
                except json.JSONDecodeError:
                    doc = extract_json_object(resp.text)
                validated = _validate_rating(doc) if mode == "rating" else _validate_voting(doc)
            except FormatError as err:
                last_kind, last_detail = "format", str(err)
                self._log({"case_id": case_id, "mode": mode, "attempt": attempt,
                           "outcome": "format", "detail": last_detail})
                continue
            self._log({"case_id": case_id, "mode": mode, "attempt": attempt,
                       "outcome": "ok", "detail": None})
            return validated

        detail = f"gave up after {self.max_attempts} attempts: {last_detail}"
        if last_kind == "transport":
            raise TransportError(detail)
        raise FormatError(detail)


def _run_case_ids(run_dir: Path) -> list[str]:
    report = json.loads((run_dir / "report.json").read_text(encoding="utf-8"))
    return [case["id"] for case in report["cases"]]


def judge_rating(client: JudgeClient, run_dir: str | Path) -> dict:
    """Judge every scored case of a run; returns per-field means and skips."""
    run_dir = Path(run_dir)
    sums = {name: [] for name in RATING_FIELDS}
    skips: list[dict] = []
    scored = 0
    for case_id in _run_case_ids(run_dir):
        image = (run_dir / "renders" / f"{case_id}.png").read_bytes()
        try:
            scores = client.request("rating", case_id, image)
        except (TransportError, FormatError) as err:
            skips.append({"id": case_id, "reason": str(err)})
            continue
        scored += 1
        for name in RATING_FIELDS:
            sums[name].append(scores[name])
    means = (
        {name: math.fsum(values) / scored for name, values in sums.items()}
        if scored
        else None
    )
    return {"mode": "rating", "n_cases": scored, "means": means, "skips": skips}


def judge_voting(client: JudgeClient, run_a: str | Path, run_b: str | Path) -> dict:
    """Pairwise preference between two runs over their shared case ids."""
    run_a, run_b = Path(run_a), Path(run_b)
    shared = sorted(set(_run_case_ids(run_a)) & set(_run_case_ids(run_b)))
    counts = {"first": 0, "second": 0}
    skips: list[dict] = []
    for case_id in shared:
        image_a = (run_a / "renders" / f"{case_id}.png").read_bytes()
        image_b = (run_b / "renders" / f"{case_id}.png").read_bytes()
        try:
            result = client.request("voting", case_id, image_a, image_b)
        except (TransportError, FormatError) as err:
            skips.append({"id": case_id, "reason": str(err)})
            continue
        counts[result["choice"]] += 1
    return {
        "mode": "voting",
        "n_cases": counts["first"] + counts["second"],
        "counts": counts,
        "skips": skips,
    }
