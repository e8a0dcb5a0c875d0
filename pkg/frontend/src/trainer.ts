/** Training mode: the five tests with normal (unphosphenized) vision, run
 * entirely client-side so subjects learn the tasks and the key coding
 * before the real block starts. */

import type { ResponseKey } from "./protocol.js";

export type Family = "light" | "time" | "location" | "motion" | "landolt";

export const TRAINING_ORDER: Family[] = [
  "light",
  "time",
  "location",
  "motion",
  "landolt",
];

export interface TrainingTrial {
  family: Family;
  /** what to draw, keyed by phase */
  params: Record<string, number | string | boolean>;
  correct: ResponseKey;
  instructions: string;
}

/** Small deterministic RNG so a training run can be replayed. */
export function mulberry32(seed: number): () => number {
  let a = seed >>> 0;
  return () => {
    a = (a + 0x6d2b79f5) | 0;
    let t = Math.imul(a ^ (a >>> 15), 1 | a);
    t = (t + Math.imul(t ^ (t >>> 7), 61 | t)) ^ t;
    return ((t ^ (t >>> 14)) >>> 0) / 4294967296;
  };
}

const DIRECTIONS: ResponseKey[] = ["up", "down", "left", "right"];

export function makeTrainingTrial(family: Family, rnd: () => number): TrainingTrial {
  switch (family) {
    case "light": {
      const present = rnd() < 0.5;
      return {
        family,
        params: { present },
        correct: present ? "left" : "right",
        instructions: "Did a light appear after the tone? left = yes, right = no",
      };
    }
    case "time": {
      const flashes = rnd() < 0.5 ? 1 : 2;
      return {
        family,
        params: { flashes },
        correct: flashes === 1 ? "left" : "right",
        instructions: "One flash or two? left = one, right = two",
      };
    }
    case "location":
    case "motion":
    case "landolt": {
      const dir = DIRECTIONS[Math.floor(rnd() * 4)];
      const what =
        family === "location"
          ? "Which way does the wedge point?"
          : family === "motion"
            ? "Which way does the pattern move?"
            : "Where is the gap in the ring?";
      return {
        family,
        params: { direction: dir },
        correct: dir,
        instructions: `${what} Answer with the arrow key.`,
      };
    }
  }
}

export function trainingPlan(seed: number): TrainingTrial[] {
  const rnd = mulberry32(seed);
  return TRAINING_ORDER.map((family) => makeTrainingTrial(family, rnd));
}

/* ------------------------------------------------------------------ */
/* canvas painters (normal-vision stimuli)                              */

type Ctx = CanvasRenderingContext2D;

function blank(ctx: Ctx, side: number): void {
  ctx.fillStyle = "#000";
  ctx.fillRect(0, 0, side, side);
}

function disc(ctx: Ctx, side: number, r: number): void {
  ctx.fillStyle = "#fff";
  ctx.beginPath();
  ctx.arc(side / 2, side / 2, r, 0, 2 * Math.PI);
  ctx.fill();
}

const DIR_VEC: Record<ResponseKey, [number, number]> = {
  up: [0, -1],
  down: [0, 1],
  left: [-1, 0],
  right: [1, 0],
};

export function paintTrainingPhase(
  ctx: Ctx,
  side: number,
  trial: TrainingTrial,
  phase: "pre" | "stim",
  tMs = 0,
): void {
  blank(ctx, side);
  const u = side / 60; // canvas units per degree-equivalent
  const dir = DIR_VEC[(trial.params.direction as ResponseKey) ?? "up"];
  switch (trial.family) {
    case "light":
      if (phase === "stim" && trial.params.present) disc(ctx, side, 20 * u);
      break;
    case "time":
      if (phase === "stim") disc(ctx, side, 20 * u);
      break;
    case "location": {
      disc(ctx, side, 1.5 * u);
      if (phase === "stim") {
        ctx.fillStyle = "#fff";
        const angle = Math.atan2(dir[1], dir[0]);
        ctx.beginPath();
        ctx.arc(side / 2, side / 2, 4.5 * u, angle - Math.PI / 12, angle + Math.PI / 12);
        ctx.arc(side / 2, side / 2, 2.5 * u, angle + Math.PI / 12, angle - Math.PI / 12, true);
        ctx.fill();
      }
      break;
    }
    case "motion": {
      const rnd = mulberry32(7);
      const cell = 2 * u;
      const off = phase === "stim" ? ((5 * u * tMs) / 1000) % side : 0;
      for (let y = 0; y < side / cell + 2; y++) {
        for (let x = 0; x < side / cell + 2; x++) {
          if (rnd() < 0.5) continue;
          ctx.fillStyle = "#fff";
          const px = (x * cell + off * dir[0] + side) % side;
          const py = (y * cell + off * dir[1] + side) % side;
          ctx.fillRect(px - cell / 2, py - cell / 2, cell, cell);
        }
      }
      break;
    }
    case "landolt": {
      if (phase !== "stim") break;
      const gap = 4 * u;
      ctx.strokeStyle = "#fff";
      ctx.lineWidth = gap;
      const angle = Math.atan2(dir[1], dir[0]);
      const half = Math.asin(gap / 2 / (2 * gap));
      ctx.beginPath();
      ctx.arc(side / 2, side / 2, 2 * gap, angle + half, angle - half + 2 * Math.PI);
      ctx.stroke();
      break;
    }
  }
}
