"""Chat-completions transport with retry/backoff, transcript recording and replay."""
from __future__ import annotations

import json
import logging
import os
import threading
import time
from datetime import datetime, timezone
from pathlib import Path

import httpx

log = logging.getLogger(__name__)

RETRYABLE_STATUS = {408, 409, 429, 500, 502, 503, 504}


class RefinerNetworkError(RuntimeError):
    pass


class TranscriptWriter:
    """Appends one JSON line per exchange: {request, response, timestamp, slot, attempt}."""

    def __init__(self, path: str | Path):
        self.path = Path(path)
        self.path.parent.mkdir(parents=True, exist_ok=True)
        self._lock = threading.Lock()

    def write(self, request: dict, response: dict, slot: int, attempt: int) -> None:
        rec = {
            "request": request,
            "response": response,
            "timestamp": datetime.now(timezone.utc).isoformat(),
            "slot": slot,
            "attempt": attempt,
        }
        line = json.dumps(rec, sort_keys=True)
        with self._lock, open(self.path, "a", encoding="utf-8") as f:
            f.write(line + "\n")


def response_content(body: dict) -> str:
    try:
        return body["choices"][0]["message"]["content"] or ""
    except (KeyError, IndexError, TypeError):
        raise RefinerNetworkError(f"malformed chat-completions response: {str(body)[:200]}") from None


class ChatCompletionsClient:
    def __init__(
        self,
        endpoint: str,
        model: str,
        api_key_env: str = "OPENAI_API_KEY",
        temperature: float = 0.7,
        timeout: float = 60.0,
        transport_retries: int = 3,
        backoff: float = 1.0,
        transcript: TranscriptWriter | None = None,
        transport: httpx.BaseTransport | None = None,
        sleep=time.sleep,
    ):
        self.endpoint = endpoint
        self.model = model
        self.api_key_env = api_key_env
        self.temperature = temperature
        self.timeout = timeout
        self.transport_retries = transport_retries
        self.backoff = backoff
        self.transcript = transcript
        self._transport = transport
        self._sleep = sleep

    def request_body(self, prompt: str) -> dict:
        return {"model": self.model, "messages": [{"role": "user", "content": prompt}], "temperature": self.temperature}

    def _headers(self) -> dict:
        key = os.environ.get(self.api_key_env, "")
        headers = {"Content-Type": "application/json"}
        if key:
            headers["Authorization"] = f"Bearer {key}"
        return headers

    def complete(self, prompt: str, slot: int = 0, attempt: int = 0) -> str:
        body = self.request_body(prompt)
        last: Exception | None = None
        with httpx.Client(timeout=self.timeout, transport=self._transport) as http:
            for i in range(self.transport_retries + 1):
                if i:
                    self._sleep(self.backoff * 2 ** (i - 1))
                try:
                    resp = http.post(self.endpoint, json=body, headers=self._headers())
                except httpx.TransportError as exc:
                    last = exc
                    log.warning("refiner transport error (try %d): %s", i + 1, exc)
                    continue
                if resp.status_code in RETRYABLE_STATUS:
                    last = RefinerNetworkError(f"HTTP {resp.status_code}")
                    log.warning("refiner HTTP %d (try %d)", resp.status_code, i + 1)
                    continue
                if resp.status_code >= 400:
                    raise RefinerNetworkError(f"HTTP {resp.status_code}: {resp.text[:200]}")
                try:
                    data = resp.json()
                except ValueError:
                    raise RefinerNetworkError("response body is not JSON") from None
                if self.transcript is not None:
                    self.transcript.write(body, data, slot, attempt)
                return response_content(data)
        raise RefinerNetworkError(f"no response after {self.transport_retries + 1} tries: {last}")


class ReplayClient:
    """Serves responses from a recorded transcript, keyed by (slot, attempt).

    Records without slot/attempt fields are served in file order.
    """

    def __init__(self, path: str | Path, check_prompt: bool = True):
        self.path = Path(path)
        self.check_prompt = check_prompt
        self._keyed: dict[tuple[int, int], dict] = {}
        self._ordered: list[dict] = []
        self._lock = threading.Lock()
        with open(self.path, encoding="utf-8") as f:
            for line in f:
                if not line.strip():
                    continue
                rec = json.loads(line)
                if "slot" in rec and "attempt" in rec:
                    self._keyed[(rec["slot"], rec["attempt"])] = rec
                else:
                    self._ordered.append(rec)

    def complete(self, prompt: str, slot: int = 0, attempt: int = 0) -> str:
        with self._lock:
            rec = self._keyed.get((slot, attempt))
            if rec is None:
                if not self._ordered:
                    raise RefinerNetworkError(f"transcript {self.path} has no response for slot {slot} attempt {attempt}")
                rec = self._ordered.pop(0)
        if self.check_prompt:
            sent = rec["request"]["messages"][0]["content"]
            if sent != prompt:
                raise RefinerNetworkError(f"transcript prompt mismatch at slot {slot} attempt {attempt}")
        return response_content(rec["response"])
