/**
 * Schedule-clocked playback loop.
 *
 * Native video elements cannot reproduce arbitrary PTS tracks, so the player
 * drives an injected presenter (a canvas in the browser, a recorder in the
 * test harness) directly from the render schedule. Presentation deadlines
 * are computed as absolute offsets from a single anchor taken at play()
 * start, so per-callback timer error cannot accumulate across the schedule.
 *
 * Two hard rules from the schedule contract:
 *  - entries render in order, and never before their render_pts;
 *  - late entries are shown immediately, never dropped. Dropping a late
 *    stall repeat would silently shorten the very stall being studied.
 */

import { msPerTick, type ScheduleEntry, type SchedulePayload } from "./protocol.js";

export interface PlayerClock {
  /** Monotonic time in milliseconds. */
  now(): number;
  /**
   * Invoke cb at or after the absolute time atMs. Host timers may fire late
   * or even slightly early; the player re-checks the deadline itself.
   */
  schedule(cb: () => void, atMs: number): void;
}

export interface FramePresenter<TFrame> {
  present(frame: TFrame, entry: ScheduleEntry, actualMs: number): void;
}

export interface FrameStore<TFrame> {
  /** Fetch the image for a 1-based source frame index. */
  get(sourceFrameIndex: number): Promise<TFrame>;
}

export interface TimingLogEntry {
  entryIndex: number;
  sourceFrameIndex: number;
  scheduledMs: number;
  actualMs: number;
  /** actualMs - scheduledMs. Never negative: frames are never shown early. */
  deltaMs: number;
}

export interface PlaybackResult {
  timingLog: TimingLogEntry[];
  /**
   * Lateness of the final presentation against its absolute deadline. With
   * anchored scheduling this is the playback's end-to-end drift, not a sum
   * of per-frame jitter.
   */
  cumulativeDriftMs: number;
  maxDeltaMs: number;
}

export class PlaybackAbortError extends Error {
  /** Position in schedule.entries to resume from once the fault clears. */
  readonly entryIndex: number;

  constructor(entryIndex: number, cause: unknown) {
    super(`playback aborted at entry ${entryIndex}`, { cause });
    this.name = "PlaybackAbortError";
    this.entryIndex = entryIndex;
  }
}

/**
 * Memoizes frame fetches by source frame index. Repeat slots in a stall
 * therefore resolve to the identical object, which makes "same image across
 * all repeat slots" checkable by identity instead of by pixel comparison.
 * Failed fetches are evicted so a resumed playback can retry them. No size
 * cap: corpus videos are a few hundred small frames at most.
 */
export class FrameCache<TFrame> {
  private readonly slots = new Map<number, Promise<TFrame>>();

  constructor(private readonly store: FrameStore<TFrame>) {}

  request(sourceFrameIndex: number): Promise<TFrame> {
    let slot = this.slots.get(sourceFrameIndex);
    if (!slot) {
      const fetched = this.store.get(sourceFrameIndex);
      fetched.catch(() => {
        if (this.slots.get(sourceFrameIndex) === fetched) this.slots.delete(sourceFrameIndex);
      });
      this.slots.set(sourceFrameIndex, fetched);
      slot = fetched;
    }
    return slot;
  }
}

export interface PlayerOptions {
  /** How many entries ahead of the cursor to keep requested. */
  prefetchWindow?: number;
}

export interface PlayOptions {
  /** Resume position from a previous PlaybackAbortError. */
  fromEntry?: number;
}

export class SchedulePlayer<TFrame> {
  private readonly prefetchWindow: number;

  constructor(
    private readonly clock: PlayerClock,
    private readonly presenter: FramePresenter<TFrame>,
    private readonly store: FrameStore<TFrame>,
    options: PlayerOptions = {},
  ) {
    this.prefetchWindow = options.prefetchWindow ?? 12;
  }

  async play(schedule: SchedulePayload, options: PlayOptions = {}): Promise<PlaybackResult> {
    const entries = schedule.entries;
    const from = options.fromEntry ?? 0;
    if (entries.length === 0) return { timingLog: [], cumulativeDriftMs: 0, maxDeltaMs: 0 };
    if (!Number.isInteger(from) || from < 0 || from >= entries.length) {
      throw new RangeError(`fromEntry ${from} outside schedule of ${entries.length} entries`);
    }

    const tickMs = msPerTick(schedule.timebase);
    const cache = new FrameCache(this.store);
    // Deadlines are anchored once; a resume re-anchors at the resume entry.
    const basePts = entries[from].render_pts;
    const anchorMs = this.clock.now();
    const timingLog: TimingLogEntry[] = [];
    let maxDeltaMs = 0;

    for (let i = from; i < entries.length; i++) {
      const horizon = Math.min(entries.length, i + this.prefetchWindow);
      for (let j = i; j < horizon; j++) cache.request(entries[j].source_frame_index);

      const entry = entries[i];
      let frame: TFrame;
      try {
        frame = await cache.request(entry.source_frame_index);
      } catch (err) {
        throw new PlaybackAbortError(i, err);
      }

      const scheduledMs = anchorMs + (entry.render_pts - basePts) * tickMs;
      await this.waitUntil(scheduledMs);
      const actualMs = this.clock.now();
      this.presenter.present(frame, entry, actualMs);

      const deltaMs = actualMs - scheduledMs;
      if (deltaMs > maxDeltaMs) maxDeltaMs = deltaMs;
      timingLog.push({
        entryIndex: entry.entry_index,
        sourceFrameIndex: entry.source_frame_index,
        scheduledMs,
        actualMs,
        deltaMs,
      });
    }

    return {
      timingLog,
      cumulativeDriftMs: timingLog[timingLog.length - 1]!.deltaMs,
      maxDeltaMs,
    };
  }

  private async waitUntil(atMs: number): Promise<void> {
    // Loop rather than trust a single callback: a timer that fires early
    // would otherwise break the "never before render_pts" invariant.
    while (this.clock.now() < atMs) {
      await new Promise<void>((resolve) => this.clock.schedule(resolve, atMs));
    }
  }
}
