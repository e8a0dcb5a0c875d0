"""Live session server: streams phosphenized stimulus frames over a
WebSocket, takes key responses and pose updates, and writes the same trial
logs as the offline simulator.

Wire format: JSON envelopes {type, seq, t_server_ms, ...}; frame pixels ride
as base64 of row-major 8-bit grayscale.  seq increases strictly per
direction.  Reaction times use the server clock only: first key press after
the imperative onset, measured against the moment the onset was reached.
Transport heartbeats are handled by the websocket ping interval configured
at serve time.
"""

from __future__ import annotations

import asyncio
import base64
import logging
import time
from dataclasses import dataclass

import numpy as np

from fastapi import FastAPI, WebSocket, WebSocketDisconnect

from .acuity import Staircase
from .frames import HeadPose, crop_viewport
from .phosphenes import build_phosphene_map, quantize, render, resolve_condition, sample
from .session import (
    TIMEOUT,
    TrialRecord,
    block_report,
    draw_trial_stimulus,
    write_summary,
    write_trial_log,
)
from .stimuli import EventKind, Key, TestFamily, merge_timing, stimulus_frames

logger = logging.getLogger("spvbench.service")


@dataclass
class ServiceSettings:
    fps: float = 30.0
    out_side_px: int = 256
    iti_ms: int = 1000
    hello_timeout_s: float = 30.0


class ProtocolError(Exception):
    pass


class LiveSession:
    """One connected subject running one block; state is session-local."""

    def __init__(self, ws: WebSocket, cfg, settings: ServiceSettings):
        self.ws = ws
        self.cfg = cfg
        self.settings = settings
        self._seq_out = 0
        self._seq_in = 0
        self.pose = HeadPose()
        self.records: list[TrialRecord] = []
        self.session_id = "live"
        self.aborted = False

    async def send(self, msg_type: str, **payload) -> None:
        self._seq_out += 1
        await self.ws.send_json({
            "type": msg_type,
            "seq": self._seq_out,
            "t_server_ms": int(time.time() * 1000),
            **payload,
        })

    async def _receive(self, timeout_s: float) -> dict | None:
        try:
            msg = await asyncio.wait_for(self.ws.receive_json(),
                                         timeout=max(timeout_s, 1e-3))
        except asyncio.TimeoutError:
            return None
        seq = msg.get("seq")
        if not isinstance(seq, int) or seq <= self._seq_in:
            raise ProtocolError(f"client seq must increase (got {seq!r} "
                                f"after {self._seq_in})")
        self._seq_in = seq
        return msg

    async def run(self) -> None:
        hello = await self._receive(self.settings.hello_timeout_s)
        if hello is None or hello.get("type") != "hello":
            await self.send("error", message="expected hello")
            return
        test, condition, n_trials = self._negotiate(hello)

        pmap = build_phosphene_map(condition)
        out_ppd = self.settings.out_side_px / condition.fov_deg
        side = render(pmap, quantize([0.0] * len(pmap)), out_ppd).width_px
        await self.send(
            "config",
            test=test.value,
            condition={"label": condition.name,
                       "phosphene_count": condition.phosphene_count,
                       "fov_deg": condition.fov_deg},
            width_px=side, height_px=side,
            level_count=8,
            trials=n_trials,
            fps=self.settings.fps,
            timing=merge_timing(self.cfg.timing),
        )

        rng = np.random.default_rng(self.cfg.seed)
        stair = Staircase(2.0) if test == TestFamily.LANDOLT else None
        try:
            for idx in range(n_trials):
                spec, timeline, corr = draw_trial_stimulus(test, rng, stair,
                                                           self.cfg.timing)
                record = await self._run_trial(idx, spec, timeline, corr,
                                               condition, pmap, out_ppd)
                if stair is not None:
                    stair.record(record.correct)
                self.records.append(record)
                await asyncio.sleep(self.settings.iti_ms / 1000.0)
        except (WebSocketDisconnect, RuntimeError):
            # receive raises WebSocketDisconnect; sending on a dead socket
            # surfaces as RuntimeError depending on the transport
            self.aborted = True
            logger.warning("client disconnected mid-block; trial voided")
        except ProtocolError as exc:
            self.aborted = True
            logger.warning("protocol violation: %s", exc)
            try:
                await self.send("error", message=str(exc))
            except Exception:
                pass
        except BaseException:
            # includes task cancellation when the client just goes away
            self.aborted = True
            raise
        finally:
            self._persist(test, condition)

        if not self.aborted and self.records:
            doc = block_report(self.records, aborted=False)
            await self.send("block_done", report=doc)

    def _negotiate(self, hello: dict):
        subject = str(hello.get("subject", "live"))
        self.session_id = subject
        test = TestFamily(hello.get("test", self.cfg.tests[0].value))
        label = hello.get("condition")
        condition = resolve_condition(label) if label else self.cfg.conditions[0]
        n_trials = int(hello.get("trials", self.cfg.trials_per_block))
        return test, condition, n_trials

    async def _run_trial(self, idx, spec, timeline, corr, condition, pmap,
                         out_ppd) -> TrialRecord:
        tone_ms = next(e.t_ms for e in timeline.events
                       if e.kind == EventKind.TONE)
        onset_ms = timeline.imperative_onset_ms
        close_ms = timeline.response_window[1]
        window_ms = close_ms - timeline.response_window[0]
        period_ms = 1000.0 / self.settings.fps

        t0 = time.monotonic()
        now_ms = 0.0
        tone_sent = False
        onset_wall: float | None = None
        next_frame_ms = 0.0
        response: Key | None = None
        rt_ms: int | None = None

        while True:
            now_ms = (time.monotonic() - t0) * 1000.0
            if not tone_sent and now_ms >= tone_ms:
                await self.send("tone", trial=idx, onset_t_stim_ms=onset_ms)
                tone_sent = True
            if onset_wall is None and now_ms >= onset_ms:
                onset_wall = time.monotonic()
            if now_ms >= next_frame_ms:
                await self._send_frame(idx, spec, timeline, now_ms, condition,
                                       pmap, out_ppd)
                next_frame_ms += period_ms
                if next_frame_ms < now_ms:  # don't burst after a stall
                    next_frame_ms = now_ms
            if response is not None or now_ms >= close_ms:
                break

            deadline = min(next_frame_ms, close_ms)
            if not tone_sent:
                deadline = min(deadline, tone_ms)
            if onset_wall is None:
                deadline = min(deadline, onset_ms)
            msg = await self._receive((deadline - now_ms) / 1000.0)
            if msg is None:
                continue
            kind = msg.get("type")
            if kind == "pose":
                self.pose = HeadPose(float(msg.get("yaw_deg", 0.0)),
                                     float(msg.get("pitch_deg", 0.0)))
            elif kind == "response":
                if onset_wall is None:
                    logger.info("trial %d: response before onset ignored", idx)
                elif response is not None:
                    logger.info("trial %d: duplicate response ignored", idx)
                else:
                    response = Key(msg["key"])
                    rt_ms = int(round((time.monotonic() - onset_wall) * 1000.0))
            elif kind == "hello":
                raise ProtocolError("unexpected hello mid-block")

        if response is None:
            return TrialRecord(self.session_id, spec.family, condition.name,
                               idx, spec, TIMEOUT, False, None)
        rt_ms = min(max(rt_ms, 0), window_ms)
        return TrialRecord(self.session_id, spec.family, condition.name, idx,
                           spec, response.value, response == corr.key, rt_ms)

    async def _send_frame(self, idx, spec, timeline, t_ms, condition, pmap,
                          out_ppd) -> None:
        source = stimulus_frames(spec, timeline, t_ms)
        cropped = crop_viewport(source, self.pose, condition.fov_deg)
        activation = quantize(sample(cropped.frame, pmap))
        percept = render(pmap, activation, out_ppd)
        await self.send(
            "frame", trial=idx,
            width=percept.width_px, height=percept.height_px,
            t_stim_ms=int(t_ms),
            clamped=cropped.clamped,
            data_b64=base64.b64encode(percept.to_u8().tobytes()).decode(),
        )

    def _persist(self, test, condition) -> None:
        if not self.records:
            return
        out = self.cfg.out_dir
        out.mkdir(parents=True, exist_ok=True)
        stem = f"{self.session_id}_{test.value}_{condition.name}"
        write_trial_log(out / f"{stem}.csv", self.records)
        write_summary(out / f"{stem}.json",
                      block_report(self.records, aborted=self.aborted))


def create_app(cfg=None, settings: ServiceSettings | None = None,
               webui_dir=None) -> FastAPI:
    """Session service app; mounts the browser UI when a directory is given
    (or frontend/dist exists)."""
    from .cli import RunConfig

    cfg = cfg or RunConfig()
    settings = settings or ServiceSettings()
    app = FastAPI(title="spvbench session service")

    @app.websocket("/ws")
    async def ws_endpoint(ws: WebSocket):
        await ws.accept()
        session = LiveSession(ws, cfg, settings)
        try:
            await session.run()
        except WebSocketDisconnect:
            pass
        finally:
            try:
                await ws.close()
            except Exception:
                pass

    from pathlib import Path

    from starlette.staticfiles import StaticFiles

    candidates = [webui_dir] if webui_dir else [Path("frontend/dist")]
    for cand in candidates:
        if cand and Path(cand).is_dir():
            app.mount("/", StaticFiles(directory=str(cand), html=True),
                      name="webui")
            break
    return app
