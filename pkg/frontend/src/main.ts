/** DOM wiring for the experiment runner page. */

import { fitScale, drawFrame, bufferHash } from "./render.js";
import { ExperimentClient } from "./session.js";
import { paintTrainingPhase, trainingPlan, type TrainingTrial } from "./trainer.js";
import { keyToResponse } from "./input.js";
import type { FrameMsg } from "./protocol.js";
import type { UiSessionState } from "./state.js";

const canvas = document.getElementById("view") as HTMLCanvasElement;
const statusEl = document.getElementById("status")!;
const edgeEl = document.getElementById("edge")!;
const connectBtn = document.getElementById("connect") as HTMLButtonElement;
const trainBtn = document.getElementById("train") as HTMLButtonElement;
const downloadEl = document.getElementById("download") as HTMLAnchorElement;
const subjectEl = document.getElementById("subject") as HTMLInputElement;
const testEl = document.getElementById("test") as HTMLSelectElement;
const conditionEl = document.getElementById("condition") as HTMLSelectElement;

let client: ExperimentClient | null = null;
let lastHash = "";

function setStatus(text: string): void {
  statusEl.textContent = text;
}

function onState(state: UiSessionState): void {
  const trial = state.trialsTotal
    ? ` trial ${state.trialIndex + 1}/${state.trialsTotal}`
    : "";
  setStatus(`${state.phase}${trial}${state.desync ? " DESYNC: " + state.desync : ""}`);
}

function onFrame(gray: Uint8Array, msg: FrameMsg): void {
  const scale = fitScale(msg.width, msg.height, window.innerWidth - 40,
    window.innerHeight - 160);
  drawFrame(canvas, gray, msg.width, msg.height, scale);
  lastHash = bufferHash(gray);
  edgeEl.textContent = msg.clamped ? "view clamped at scene edge" : "";
  edgeEl.setAttribute("data-hash", lastHash);
}

function startSession(): void {
  client = new ExperimentClient(
    {
      subject: subjectEl.value || "subject",
      test: testEl.value,
      condition: conditionEl.value,
    },
    {
      onFrame,
      onState,
      onConfig: (cfg) =>
        setStatus(`running ${cfg.test} at ${cfg.condition.label} ` +
          `(${cfg.condition.phosphene_count} phosphenes, ${cfg.condition.fov_deg} deg)`),
      onDone: (report) => {
        const blob = new Blob([JSON.stringify(report, null, 2)],
          { type: "application/json" });
        downloadEl.href = URL.createObjectURL(blob);
        downloadEl.download = "session-summary.json";
        downloadEl.hidden = false;
        setStatus("block done; summary ready to download");
      },
      onError: (message) => setStatus(`error: ${message}`),
    },
    new AudioContext(),
  );
  const proto = location.protocol === "https:" ? "wss" : "ws";
  client.connect(new WebSocket(`${proto}://${location.host}/ws`));
}

/* training mode: five demo trials with normal vision */

let training: TrainingTrial[] | null = null;
let trainingIdx = 0;
let trainingTimer: ReturnType<typeof setTimeout> | null = null;

function startTraining(): void {
  training = trainingPlan(Date.now() % 100_000);
  trainingIdx = 0;
  runTrainingTrial();
}

function runTrainingTrial(): void {
  if (!training || trainingIdx >= training.length) {
    setStatus("training finished; connect to start the real block");
    training = null;
    return;
  }
  const trial = training[trainingIdx];
  const side = Math.min(window.innerWidth - 40, window.innerHeight - 160);
  canvas.width = canvas.height = side;
  const ctx = canvas.getContext("2d")!;
  setStatus(`training ${trainingIdx + 1}/5 (${trial.family}): ${trial.instructions}`);
  paintTrainingPhase(ctx, side, trial, "pre");
  const t0 = performance.now();
  const animate = () => {
    if (!training) return;
    paintTrainingPhase(ctx, side, trial, "stim", performance.now() - t0);
    if (trial.family === "motion") trainingTimer = setTimeout(animate, 33);
  };
  trainingTimer = setTimeout(animate, 700);
}

function handleTrainingKey(ev: KeyboardEvent): void {
  if (!training) return;
  const key = keyToResponse(ev);
  if (!key) return;
  const trial = training[trainingIdx];
  setStatus(key === trial.correct
    ? `correct (${key}); next...`
    : `the right answer was ${trial.correct}; next...`);
  if (trainingTimer) clearTimeout(trainingTimer);
  trainingIdx += 1;
  setTimeout(runTrainingTrial, 900);
}

/* global wiring */

window.addEventListener("keydown", (ev) => {
  if (ev.code.startsWith("Arrow")) ev.preventDefault();
  if (training) {
    handleTrainingKey(ev);
    return;
  }
  client?.handleKey(ev);
});

let dragging = false;
let lastX = 0;
let lastY = 0;
canvas.addEventListener("pointerdown", (ev) => {
  dragging = true;
  lastX = ev.clientX;
  lastY = ev.clientY;
  canvas.setPointerCapture(ev.pointerId);
});
canvas.addEventListener("pointermove", (ev) => {
  if (!dragging || !client) return;
  client.handleDrag(ev.clientX - lastX, ev.clientY - lastY);
  lastX = ev.clientX;
  lastY = ev.clientY;
});
canvas.addEventListener("pointerup", () => {
  dragging = false;
});

connectBtn.addEventListener("click", () => {
  training = null;
  startSession();
});
trainBtn.addEventListener("click", startTraining);

setStatus("idle; train first, then connect");
