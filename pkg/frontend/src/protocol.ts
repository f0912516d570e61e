/**
 * Wire types and a thin typed client for the rating-session HTTP API.
 *
 * The station is a pure consumer of this protocol: it never rewrites
 * schedules and never talks to any endpoint that is not listed here. Every
 * shape below mirrors the server's JSON exactly, including the 1-based
 * entry_index and source_frame_index.
 */

export interface SessionResponse {
  session_id: string;
  /** Video ids in the order the subject must watch them. */
  playlist: string[];
}

export type EntryFlag = "normal" | "stall_repeat" | "accelerated";

export interface ScheduleEntry {
  entry_index: number;
  source_frame_index: number;
  render_pts: number;
  flag: EntryFlag;
}

export interface SchedulePayload {
  video_id: string;
  /** Seconds per PTS tick as a [numerator, denominator] fraction. */
  timebase: [number, number];
  /** Frames per second as a fraction string, e.g. "25/1". */
  framerate: string;
  resolution: [number, number];
  /** Nominal inter-frame duration in PTS ticks. */
  nominal_duration: number;
  entries: ScheduleEntry[];
}

export interface RatingRequest {
  session_id: string;
  video_id: string;
  score: number;
}

export type RejectReason =
  | "unknown_session"
  | "not_in_playlist"
  | "already_rated"
  | "not_played"
  | "score_out_of_range";

export type RatingResponse =
  | { accepted: true }
  | { accepted: false; reason: RejectReason };

/**
 * Raw outcome of one rating POST. `body` is null when the response was not
 * a recognizable rating response (404 page, proxy error, and so on); the
 * retry queue treats that the same as a transport failure.
 */
export interface PostResult {
  status: number;
  body: RatingResponse | null;
}

export type FetchLike = (url: string, init?: RequestInit) => Promise<Response>;

export function parseFraction(text: string): [number, number] {
  const match = /^(\d+)\/(\d+)$/.exec(text.trim());
  if (!match) throw new Error(`not a fraction: ${JSON.stringify(text)}`);
  const numerator = Number(match[1]);
  const denominator = Number(match[2]);
  if (denominator === 0) throw new Error(`zero denominator: ${JSON.stringify(text)}`);
  return [numerator, denominator];
}

/** Milliseconds per PTS tick for a schedule's timebase. */
export function msPerTick(timebase: [number, number]): number {
  return (1000 * timebase[0]) / timebase[1];
}

async function errorFromResponse(operation: string, response: Response): Promise<Error> {
  let detail = "";
  try {
    const body = (await response.json()) as { detail?: unknown };
    if (body && body.detail !== undefined) detail = `: ${JSON.stringify(body.detail)}`;
  } catch {
    // Non-JSON error body; the status alone has to do.
  }
  return new Error(`${operation} failed with HTTP ${response.status}${detail}`);
}

export class StationClient {
  constructor(
    private readonly baseUrl: string = "",
    private readonly fetchImpl: FetchLike = (url, init) => globalThis.fetch(url, init),
  ) {}

  async openSession(subject: string): Promise<SessionResponse> {
    const url = `${this.baseUrl}/api/session?subject=${encodeURIComponent(subject)}`;
    const response = await this.fetchImpl(url);
    if (!response.ok) throw await errorFromResponse("opening session", response);
    return (await response.json()) as SessionResponse;
  }

  /**
   * Fetch a render schedule. Passing the session id tells the server the
   * video is about to be played, which is what later authorizes a rating;
   * omit it only for previews that must not unlock the rating widget.
   */
  async fetchSchedule(videoId: string, sessionId?: string): Promise<SchedulePayload> {
    let url = `${this.baseUrl}/api/video/${encodeURIComponent(videoId)}/schedule`;
    if (sessionId !== undefined) url += `?session=${encodeURIComponent(sessionId)}`;
    const response = await this.fetchImpl(url);
    if (!response.ok) throw await errorFromResponse(`fetching schedule for ${videoId}`, response);
    return (await response.json()) as SchedulePayload;
  }

  frameUrl(videoId: string, sourceFrameIndex: number): string {
    return `${this.baseUrl}/api/video/${encodeURIComponent(videoId)}/frame/${sourceFrameIndex}`;
  }

  /**
   * Post one rating. Transport failures propagate as rejections; HTTP
   * responses of any status resolve, so the caller can tell "the server
   * answered" apart from "the server may or may not have seen this".
   */
  async postRating(body: RatingRequest): Promise<PostResult> {
    const response = await this.fetchImpl(`${this.baseUrl}/api/rating`, {
      method: "POST",
      headers: { "content-type": "application/json" },
      body: JSON.stringify(body),
    });
    let parsed: RatingResponse | null = null;
    try {
      const json = (await response.json()) as Record<string, unknown>;
      if (typeof json.accepted === "boolean") parsed = json as unknown as RatingResponse;
    } catch {
      parsed = null;
    }
    return { status: response.status, body: parsed };
  }
}
