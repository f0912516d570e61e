/**
 * Shared test scaffolding: deterministic schedules, a virtual clock that
 * pumps the player's scheduled callbacks, and recording stand-ins for the
 * presenter and frame store.
 */

import type { FramePresenter, FrameStore, PlayerClock } from "../src/player.js";
import type { ScheduleEntry, SchedulePayload } from "../src/protocol.js";

/** Deterministic PRNG so jitter sequences are reproducible across runs. */
export function mulberry32(seed: number): () => number {
  let state = seed >>> 0;
  return () => {
    state = (state + 0x6d2b79f5) >>> 0;
    let t = state;
    t = Math.imul(t ^ (t >>> 15), t | 1);
    t ^= t + Math.imul(t ^ (t >>> 7), t | 61);
    return ((t ^ (t >>> 14)) >>> 0) / 4294967296;
  };
}

function payload(videoId: string, fps: number, entries: ScheduleEntry[]): SchedulePayload {
  return {
    video_id: videoId,
    timebase: [1, 1000],
    framerate: `${fps}/1`,
    resolution: [1920, 1080],
    nominal_duration: Math.round(1000 / fps),
    entries,
  };
}

/** Uniform schedule: n frames at the given fps on a 1/1000 timebase. */
export function uniformSchedule(videoId: string, frames: number, fps: number): SchedulePayload {
  const step = 1000 / fps;
  const entries: ScheduleEntry[] = [];
  for (let i = 0; i < frames; i++) {
    entries.push({
      entry_index: i + 1,
      source_frame_index: i + 1,
      render_pts: Math.round(i * step),
      flag: "normal",
    });
  }
  return payload(videoId, fps, entries);
}

/**
 * Schedule where one source frame is held for extra repeat slots at nominal
 * spacing, the shape a restructured stall produces.
 */
export function stallSchedule(
  videoId: string,
  frames: number,
  fps: number,
  stallAt: number,
  repeats: number,
): SchedulePayload {
  const step = 1000 / fps;
  const entries: ScheduleEntry[] = [];
  let pts = 0;
  let entryIndex = 1;
  for (let frame = 1; frame <= frames; frame++) {
    entries.push({
      entry_index: entryIndex++,
      source_frame_index: frame,
      render_pts: Math.round(pts),
      flag: "normal",
    });
    pts += step;
    if (frame === stallAt) {
      for (let r = 0; r < repeats; r++) {
        entries.push({
          entry_index: entryIndex++,
          source_frame_index: frame,
          render_pts: Math.round(pts),
          flag: "stall_repeat",
        });
        pts += step;
      }
    }
  }
  return payload(videoId, fps, entries);
}

/** Normal-rate lead-in followed by a run compressed by the given rate. */
export function mixedRateSchedule(
  videoId: string,
  fps: number,
  normalFrames: number,
  acceleratedFrames: number,
  rate: number,
): SchedulePayload {
  const step = 1000 / fps;
  const entries: ScheduleEntry[] = [];
  let pts = 0;
  for (let i = 0; i < normalFrames + acceleratedFrames; i++) {
    const accelerated = i >= normalFrames;
    entries.push({
      entry_index: i + 1,
      source_frame_index: i + 1,
      render_pts: Math.round(pts),
      flag: accelerated ? "accelerated" : "normal",
    });
    pts += accelerated ? step / rate : step;
  }
  return payload(videoId, fps, entries);
}

/**
 * Virtual clock. schedule() queues the callback at the requested time plus
 * an injectable timer error; drive() pumps queued callbacks, earliest first,
 * until the given promise settles. Each fired event advances time by at
 * least a small quantum so an early-firing timer cannot wedge the player's
 * deadline re-check loop.
 */
export class ManualClock implements PlayerClock {
  private t = 0;
  private seq = 0;
  private readonly queue: Array<{ at: number; seq: number; cb: () => void }> = [];

  constructor(private readonly timerErrorMs: (atMs: number) => number = () => 0) {}

  now(): number {
    return this.t;
  }

  schedule(cb: () => void, atMs: number): void {
    const fireAt = Math.max(this.t, atMs + this.timerErrorMs(atMs));
    this.queue.push({ at: fireAt, seq: this.seq++, cb });
  }

  async drive<T>(work: Promise<T>): Promise<T> {
    let settled = false;
    const watched = work.then(
      (value) => {
        settled = true;
        return value;
      },
      (err: unknown) => {
        settled = true;
        throw err;
      },
    );
    watched.catch(() => {});

    let idleRounds = 0;
    while (!settled) {
      // Macrotask hop so the code under test can run its microtask chains.
      await new Promise<void>((resolve) => setTimeout(resolve, 0));
      if (settled) break;
      if (this.queue.length === 0) {
        if (++idleRounds > 20) throw new Error("clock starved: nothing scheduled and work not settled");
        continue;
      }
      idleRounds = 0;
      this.queue.sort((a, b) => a.at - b.at || a.seq - b.seq);
      const next = this.queue.shift()!;
      this.t = Math.max(this.t + 0.25, next.at);
      next.cb();
    }
    return watched;
  }
}

export interface FrameToken {
  sourceFrameIndex: number;
  fetchSeq: number;
}

/** Hands out a fresh token object per fetch and counts fetches per index. */
export class TokenStore implements FrameStore<FrameToken> {
  readonly failing = new Set<number>();
  private readonly fetchCounts = new Map<number, number>();
  private seq = 0;

  async get(sourceFrameIndex: number): Promise<FrameToken> {
    this.fetchCounts.set(sourceFrameIndex, (this.fetchCounts.get(sourceFrameIndex) ?? 0) + 1);
    if (this.failing.has(sourceFrameIndex)) throw new Error(`frame ${sourceFrameIndex} unavailable`);
    return { sourceFrameIndex, fetchSeq: this.seq++ };
  }

  fetchCount(sourceFrameIndex: number): number {
    return this.fetchCounts.get(sourceFrameIndex) ?? 0;
  }
}

export class RecordingPresenter implements FramePresenter<FrameToken> {
  readonly presented: Array<{ frame: FrameToken; entry: ScheduleEntry; atMs: number }> = [];

  present(frame: FrameToken, entry: ScheduleEntry, actualMs: number): void {
    this.presented.push({ frame, entry, atMs: actualMs });
  }
}
