"""Judge client: retries, response repair, validation, aggregation."""

from __future__ import annotations

import base64
import json
import math

import pytest
import requests

import synth
from hierlayout.errors import FormatError, TransportError
from hierlayout.harness.judge import (
    ENDPOINT_ENV,
    TOKEN_ENV,
    JudgeClient,
    extract_json_object,
    judge_rating,
    judge_voting,
    load_rubric,
)
from hierlayout.raster import encode_png

RATING_OK = '{"layout": 7, "graphics": 6.5, "innovation": 4, "readability": 8}'


class FakeResponse:
    def __init__(self, status_code=200, text=""):
        self.status_code = status_code
        self.text = text


class ScriptedSession:
    """Plays back a fixed list of responses; exceptions in the list raise."""

    def __init__(self, script):
        self.script = list(script)
        self.calls = []

    def post(self, url, json=None, headers=None, timeout=None):
        self.calls.append(
            {"url": url, "json": json, "headers": headers, "timeout": timeout}
        )
        if not self.script:
            raise AssertionError("session called more times than scripted")
        item = self.script.pop(0)
        if isinstance(item, Exception):
            raise item
        return item


def make_client(script, **kwargs):
    session = ScriptedSession(script)
    sleeps: list[float] = []
    kwargs.setdefault("endpoint", "http://judge.test/v1")
    kwargs.setdefault("sleep", sleeps.append)
    client = JudgeClient(session=session, **kwargs)
    return client, session, sleeps


class TestExtractJsonObject:
    def test_bare_object(self):
        assert extract_json_object('{"a": 1}') == {"a": 1}

    def test_object_wrapped_in_prose(self):
        text = 'Sure, here you go:\n\n{"choice": "first"}\n\nHope that helps!'
        assert extract_json_object(text) == {"choice": "first"}

    def test_skips_unparseable_brace_groups(self):
        assert extract_json_object('{oops} then {"a": 1}') == {"a": 1}

    def test_braces_inside_strings(self):
        assert extract_json_object('{"a": "}{"}') == {"a": "}{"}

    def test_nested_objects(self):
        assert extract_json_object('x {"a": {"b": 2}} y') == {"a": {"b": 2}}

    def test_no_object_raises(self):
        with pytest.raises(FormatError):
            extract_json_object("the judge says: first")


class TestConstruction:
    def test_requires_an_endpoint(self, monkeypatch):
        monkeypatch.delenv(ENDPOINT_ENV, raising=False)
        with pytest.raises(ValueError, match=ENDPOINT_ENV):
            JudgeClient()

    def test_endpoint_and_token_from_env(self, monkeypatch):
        monkeypatch.setenv(ENDPOINT_ENV, "http://env.test/judge")
        monkeypatch.setenv(TOKEN_ENV, "sekrit")
        client = JudgeClient(session=ScriptedSession([]))
        assert client.endpoint == "http://env.test/judge"
        assert client.token == "sekrit"

    def test_explicit_endpoint_wins(self, monkeypatch):
        monkeypatch.setenv(ENDPOINT_ENV, "http://env.test/judge")
        client = JudgeClient("http://arg.test/judge", session=ScriptedSession([]))
        assert client.endpoint == "http://arg.test/judge"

    def test_max_attempts_floor(self):
        with pytest.raises(ValueError):
            JudgeClient("http://judge.test", max_attempts=0, session=ScriptedSession([]))

    def test_rubrics_load(self):
        assert load_rubric("rating").strip()
        assert load_rubric("voting").strip()
        with pytest.raises(ValueError):
            load_rubric("ranking")


class TestRequest:
    def test_rating_success_and_payload(self):
        client, session, sleeps = make_client(
            [FakeResponse(text=RATING_OK)], token="tok"
        )
        scores = client.request("rating", "c01", b"png-bytes")
        assert scores == {
            "layout": 7.0,
            "graphics": 6.5,
            "innovation": 4.0,
            "readability": 8.0,
        }
        assert sleeps == []
        (call,) = session.calls
        assert call["url"] == "http://judge.test/v1"
        assert call["headers"] == {"Authorization": "Bearer tok"}
        body = call["json"]
        assert body["mode"] == "rating"
        assert body["case_id"] == "c01"
        assert body["rubric"] == load_rubric("rating")
        assert base64.b64decode(body["image_b64"]) == b"png-bytes"
        assert "image_b_b64" not in body

    def test_no_token_means_no_auth_header(self, monkeypatch):
        monkeypatch.delenv(TOKEN_ENV, raising=False)
        client, session, _ = make_client([FakeResponse(text=RATING_OK)])
        client.request("rating", "c01", b"x")
        assert session.calls[0]["headers"] == {}

    def test_voting_roundtrip(self):
        client, session, _ = make_client([FakeResponse(text='{"choice": "second"}')])
        result = client.request("voting", "c01", b"img-a", b"img-b")
        assert result == {"choice": "second"}
        body = session.calls[0]["json"]
        assert base64.b64decode(body["image_b64"]) == b"img-a"
        assert base64.b64decode(body["image_b_b64"]) == b"img-b"

    def test_voting_needs_two_images(self):
        client, _, _ = make_client([])
        with pytest.raises(ValueError):
            client.request("voting", "c01", b"img-a")

    def test_prose_wrapped_response_is_repaired(self):
        client, _, _ = make_client(
            [FakeResponse(text=f"My verdict:\n{RATING_OK}\nCheers.")]
        )
        scores = client.request("rating", "c01", b"x")
        assert scores["layout"] == 7.0

    def test_retries_after_http_error(self):
        client, session, sleeps = make_client(
            [FakeResponse(status_code=503), FakeResponse(text=RATING_OK)]
        )
        client.request("rating", "c01", b"x")
        assert len(session.calls) == 2
        assert sleeps == [0.5]

    def test_retries_after_connection_error(self):
        client, session, _ = make_client(
            [requests.ConnectionError("refused"), FakeResponse(text=RATING_OK)]
        )
        client.request("rating", "c01", b"x")
        assert len(session.calls) == 2

    def test_exhausted_transport_failures(self):
        client, session, sleeps = make_client([FakeResponse(status_code=500)] * 5)
        with pytest.raises(TransportError, match="5 attempts.*HTTP 500"):
            client.request("rating", "c01", b"x")
        assert len(session.calls) == 5
        assert sleeps == [0.5, 1.0, 2.0, 4.0]

    def test_exhausted_format_failures(self):
        client, _, _ = make_client([FakeResponse(text="no json here")] * 5)
        with pytest.raises(FormatError, match="5 attempts"):
            client.request("rating", "c01", b"x")

    def test_terminal_error_mirrors_last_failure(self):
        script = [FakeResponse(status_code=500)] * 4 + [FakeResponse(text="garbage")]
        client, _, _ = make_client(script)
        with pytest.raises(FormatError):
            client.request("rating", "c01", b"x")

    def test_backoff_respects_cap(self):
        client, _, sleeps = make_client(
            [FakeResponse(status_code=500)] * 5, backoff_base=4.0, backoff_cap=5.0
        )
        with pytest.raises(TransportError):
            client.request("rating", "c01", b"x")
        assert sleeps == [4.0, 5.0, 5.0, 5.0]

    def test_rating_validation_retries(self):
        bad = [
            '{"layout": 7, "graphics": 6, "innovation": 4}',
            '{"layout": 11, "graphics": 6, "innovation": 4, "readability": 8}',
            '{"layout": true, "graphics": 6, "innovation": 4, "readability": 8}',
            '{"layout": NaN, "graphics": 6, "innovation": 4, "readability": 8}',
        ]
        client, session, _ = make_client(
            [FakeResponse(text=t) for t in bad] + [FakeResponse(text=RATING_OK)]
        )
        scores = client.request("rating", "c01", b"x")
        assert scores["readability"] == 8.0
        assert len(session.calls) == 5

    def test_voting_validation_retries(self):
        client, _, _ = make_client(
            [FakeResponse(text='{"choice": "both"}')] * 5
        )
        with pytest.raises(FormatError, match="first.*second"):
            client.request("voting", "c01", b"a", b"b")

    def test_min_interval_throttles_consecutive_requests(self):
        ticks = iter([100.0, 103.0, 103.0])
        client, _, sleeps = make_client(
            [FakeResponse(text=RATING_OK)] * 2,
            min_interval=10.0,
            clock=lambda: next(ticks),
        )
        client.request("rating", "c01", b"x")
        client.request("rating", "c02", b"x")
        assert sleeps == [7.0]

    def test_attempt_log(self, tmp_path):
        log = tmp_path / "judge.jsonl"
        client, _, _ = make_client(
            [
                FakeResponse(status_code=502),
                FakeResponse(text="not json"),
                FakeResponse(text=RATING_OK),
            ],
            log_path=log,
        )
        client.request("rating", "c01", b"x")
        lines = [json.loads(l) for l in log.read_text().splitlines()]
        assert [l["outcome"] for l in lines] == ["transport", "format", "ok"]
        assert [l["attempt"] for l in lines] == [1, 2, 3]
        assert all(l["case_id"] == "c01" for l in lines)


def make_run_dir(root, case_ids):
    root.mkdir(parents=True)
    (root / "renders").mkdir()
    report = {"cases": [{"id": cid} for cid in case_ids]}
    (root / "report.json").write_text(json.dumps(report), encoding="utf-8")
    for k, cid in enumerate(case_ids):
        png = encode_png(synth.solid(2, 2, (10 * k, 20, 30, 255)))
        (root / "renders" / f"{cid}.png").write_bytes(png)
    return root


class TestRatingAggregate:
    def test_constant_scores(self, tmp_path):
        run = make_run_dir(tmp_path / "run", ["c1", "c2", "c3"])
        flat = '{"layout": 5, "graphics": 5, "innovation": 5, "readability": 5}'
        client, session, _ = make_client([FakeResponse(text=flat)] * 3)
        result = judge_rating(client, run)
        assert result["mode"] == "rating"
        assert result["n_cases"] == 3
        assert result["skips"] == []
        assert result["means"] == {
            "layout": 5.0, "graphics": 5.0, "innovation": 5.0, "readability": 5.0,
        }
        sent = [c["json"]["case_id"] for c in session.calls]
        assert sent == ["c1", "c2", "c3"]

    def test_means_are_hand_checkable(self, tmp_path):
        run = make_run_dir(tmp_path / "run", ["c1", "c2", "c3", "c4"])
        layouts = [7.0, 3.5, 9.0, 4.0]
        script = [
            FakeResponse(
                text=json.dumps(
                    {"layout": v, "graphics": 2, "innovation": 1, "readability": 10}
                )
            )
            for v in layouts
        ]
        client, _, _ = make_client(script)
        result = judge_rating(client, run)
        assert result["means"]["layout"] == math.fsum(layouts) / 4
        assert result["means"]["graphics"] == 2.0

    def test_failing_case_is_skipped_not_fatal(self, tmp_path):
        run = make_run_dir(tmp_path / "run", ["c1", "c2", "c3"])
        flat = '{"layout": 6, "graphics": 6, "innovation": 6, "readability": 6}'
        script = (
            [FakeResponse(text=flat)]
            + [FakeResponse(status_code=500)] * 5
            + [FakeResponse(text=flat)]
        )
        client, _, _ = make_client(script)
        result = judge_rating(client, run)
        assert result["n_cases"] == 2
        assert [s["id"] for s in result["skips"]] == ["c2"]
        assert "5 attempts" in result["skips"][0]["reason"]
        assert result["means"]["layout"] == 6.0

    def test_all_skipped_means_none(self, tmp_path):
        run = make_run_dir(tmp_path / "run", ["c1"])
        client, _, _ = make_client([FakeResponse(status_code=500)] * 5)
        result = judge_rating(client, run)
        assert result["n_cases"] == 0
        assert result["means"] is None


class TestVotingAggregate:
    def test_counts_over_shared_cases(self, tmp_path):
        run_a = make_run_dir(tmp_path / "a", ["c1", "c2", "c3"])
        run_b = make_run_dir(tmp_path / "b", ["c1", "c2", "c3"])
        script = [
            FakeResponse(text='{"choice": "first"}'),
            FakeResponse(text='{"choice": "second"}'),
            FakeResponse(text='{"choice": "first"}'),
        ]
        client, session, _ = make_client(script)
        result = judge_voting(client, run_a, run_b)
        assert result["counts"] == {"first": 2, "second": 1}
        assert result["n_cases"] == 3
        assert all("image_b_b64" in c["json"] for c in session.calls)

    def test_only_shared_ids_are_judged(self, tmp_path):
        run_a = make_run_dir(tmp_path / "a", ["c1", "c2", "c3"])
        run_b = make_run_dir(tmp_path / "b", ["c2", "c3", "c4"])
        client, session, _ = make_client(
            [FakeResponse(text='{"choice": "first"}')] * 2
        )
        result = judge_voting(client, run_a, run_b)
        assert result["n_cases"] == 2
        assert [c["json"]["case_id"] for c in session.calls] == ["c2", "c3"]

    def test_skip_keeps_going(self, tmp_path):
        run_a = make_run_dir(tmp_path / "a", ["c1", "c2"])
        run_b = make_run_dir(tmp_path / "b", ["c1", "c2"])
        script = [requests.ConnectionError("down")] * 5 + [
            FakeResponse(text='{"choice": "second"}')
        ]
        client, _, _ = make_client(script)
        result = judge_voting(client, run_a, run_b)
        assert result["counts"] == {"first": 0, "second": 1}
        assert [s["id"] for s in result["skips"]] == ["c1"]
