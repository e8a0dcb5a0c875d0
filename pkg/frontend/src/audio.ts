/** Warning-tone synthesis: a 440 Hz sine for 150 ms at each tone event. */

export interface OscillatorLike {
  frequency: { value: number };
  connect(node: unknown): void;
  start(when?: number): void;
  stop(when?: number): void;
}

export interface AudioContextLike {
  currentTime: number;
  destination: unknown;
  createOscillator(): OscillatorLike;
  createGain(): { gain: { value: number }; connect(node: unknown): void };
}

export const TONE_FREQ_HZ = 440;
export const TONE_DURATION_MS = 150;

export function playTone(
  ctx: AudioContextLike,
  freqHz: number = TONE_FREQ_HZ,
  durationMs: number = TONE_DURATION_MS,
): void {
  const osc = ctx.createOscillator();
  const gain = ctx.createGain();
  osc.frequency.value = freqHz;
  gain.gain.value = 0.3;
  osc.connect(gain);
  gain.connect(ctx.destination);
  osc.start(ctx.currentTime);
  osc.stop(ctx.currentTime + durationMs / 1000);
}
