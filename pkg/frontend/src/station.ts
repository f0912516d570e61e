/**
 * Browser wiring: canvas presenter, rating bar, and the session loop.
 *
 * Everything with testable behavior lives in player.ts and ratings.ts; this
 * file only binds those classes to the DOM, host timers, and the live HTTP
 * endpoints. The shell follows the test-room conventions: the video is drawn
 * at its native resolution on a gray surround, and the 1..5 rating bar
 * unlocks only after the last scheduled frame (retrospective scoring).
 */

import {
  PlaybackAbortError,
  SchedulePlayer,
  type FramePresenter,
  type FrameStore,
  type PlayerClock,
} from "./player.js";
import { StationClient, type SchedulePayload } from "./protocol.js";
import { RatingQueue } from "./ratings.js";

const SURROUND_GRAY = "#7f7f7f";

/**
 * performance.now() clock over setTimeout. Browsers clamp and jitter
 * timeouts; the player re-checks deadlines, so firing a little early or
 * late here is harmless.
 */
export class BrowserClock implements PlayerClock {
  constructor(private readonly win: Window & typeof globalThis = window) {}

  now(): number {
    return this.win.performance.now();
  }

  schedule(cb: () => void, atMs: number): void {
    this.win.setTimeout(cb, Math.max(0, atMs - this.now()));
  }
}

export class HttpFrameStore implements FrameStore<ImageBitmap> {
  constructor(
    private readonly client: StationClient,
    private readonly videoId: string,
    private readonly win: Window & typeof globalThis = window,
  ) {}

  async get(sourceFrameIndex: number): Promise<ImageBitmap> {
    const response = await this.win.fetch(this.client.frameUrl(this.videoId, sourceFrameIndex));
    if (!response.ok) {
      throw new Error(`frame ${sourceFrameIndex} of ${this.videoId}: HTTP ${response.status}`);
    }
    return this.win.createImageBitmap(await response.blob());
  }
}

export class CanvasPresenter implements FramePresenter<ImageBitmap> {
  private readonly ctx: CanvasRenderingContext2D;

  constructor(private readonly canvas: HTMLCanvasElement) {
    const ctx = canvas.getContext("2d");
    if (!ctx) throw new Error("2d canvas context unavailable");
    this.ctx = ctx;
    this.clear();
  }

  clear(): void {
    this.ctx.fillStyle = SURROUND_GRAY;
    this.ctx.fillRect(0, 0, this.canvas.width, this.canvas.height);
  }

  present(frame: ImageBitmap): void {
    // Native resolution, centered; scaling would change the stimulus.
    const x = Math.round((this.canvas.width - frame.width) / 2);
    const y = Math.round((this.canvas.height - frame.height) / 2);
    this.ctx.drawImage(frame, x, y);
  }
}

/** Five buttons plus number-key shortcuts; integer scale, so no slider. */
export class RatingBar {
  private readonly buttons: HTMLButtonElement[] = [];
  private enabled = false;
  onRate: ((score: number) => void) | null = null;

  constructor(container: HTMLElement, doc: Document = container.ownerDocument) {
    for (let score = 1; score <= 5; score++) {
      const button = doc.createElement("button");
      button.type = "button";
      button.textContent = String(score);
      button.disabled = true;
      button.addEventListener("click", () => this.fire(score));
      container.appendChild(button);
      this.buttons.push(button);
    }
    doc.addEventListener("keydown", (event) => {
      if (!this.enabled) return;
      const score = Number(event.key);
      if (Number.isInteger(score) && score >= 1 && score <= 5) this.fire(score);
    });
  }

  setEnabled(enabled: boolean): void {
    this.enabled = enabled;
    for (const button of this.buttons) button.disabled = !enabled;
  }

  private fire(score: number): void {
    if (!this.enabled || !this.onRate) return;
    this.onRate(score);
  }
}

export interface StationOptions {
  subject: string;
  /** Origin prefix for the rating service; same-origin when served by it. */
  apiBase?: string;
  /** Resume attempts per video after frame-fetch aborts. */
  playbackRetries?: number;
}

function nextScore(bar: RatingBar): Promise<number> {
  return new Promise((resolve) => {
    bar.onRate = (score) => {
      bar.onRate = null;
      resolve(score);
    };
  });
}

async function playWithResume(
  player: SchedulePlayer<ImageBitmap>,
  schedule: SchedulePayload,
  retries: number,
  win: Window & typeof globalThis,
): Promise<void> {
  let from = 0;
  for (let attempt = 0; ; attempt++) {
    try {
      await player.play(schedule, { fromEntry: from });
      return;
    } catch (err) {
      if (!(err instanceof PlaybackAbortError) || attempt >= retries) throw err;
      from = err.entryIndex;
      await new Promise((resolve) => win.setTimeout(resolve, 1000));
    }
  }
}

/**
 * Run one full session: open, then for each playlist item play the schedule,
 * collect a score, and hand it to the delivery queue. One pass, no replay.
 */
export async function runStation(root: HTMLElement, options: StationOptions): Promise<void> {
  const doc = root.ownerDocument;
  const win = doc.defaultView ?? window;

  const canvas = doc.createElement("canvas");
  canvas.width = win.innerWidth;
  canvas.height = Math.max(240, win.innerHeight - 96);
  const status = doc.createElement("p");
  status.textContent = "connecting";
  const barHost = doc.createElement("div");
  root.append(canvas, status, barHost);

  const client = new StationClient(options.apiBase ?? "", (url, init) => win.fetch(url, init));
  const bar = new RatingBar(barHost, doc);
  const queue = new RatingQueue((body) => client.postRating(body));
  const clock = new BrowserClock(win);
  const presenter = new CanvasPresenter(canvas);

  const session = await client.openSession(options.subject);
  for (const [position, videoId] of session.playlist.entries()) {
    status.textContent = `video ${position + 1} of ${session.playlist.length}`;
    bar.setEnabled(false);
    const schedule = await client.fetchSchedule(videoId, session.session_id);
    const store = new HttpFrameStore(client, videoId, win);
    const player = new SchedulePlayer<ImageBitmap>(clock, presenter, store);
    await playWithResume(player, schedule, options.playbackRetries ?? 3, win);

    status.textContent = "rate this video (1 to 5)";
    bar.setEnabled(true);
    const score = await nextScore(bar);
    bar.setEnabled(false);
    presenter.clear();

    const outcome = await queue.submit(session.session_id, videoId, score);
    if (!outcome.accepted) {
      status.textContent = `rating rejected (${outcome.reason}), continuing`;
    }
  }
  status.textContent = "all videos rated, thank you";
}
