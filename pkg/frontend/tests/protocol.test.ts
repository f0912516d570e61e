import { describe, expect, it } from "vitest";

import { StationClient, msPerTick, parseFraction } from "../src/protocol.js";
import { StubService, makeVideoMap } from "./stub-server.js";

describe("fraction helpers", () => {
  it("parses fraction strings", () => {
    expect(parseFraction("25/1")).toEqual([25, 1]);
    expect(parseFraction(" 30000/1001 ")).toEqual([30000, 1001]);
    expect(() => parseFraction("25")).toThrow(/not a fraction/);
    expect(() => parseFraction("a/b")).toThrow(/not a fraction/);
    expect(() => parseFraction("1/0")).toThrow(/zero denominator/);
  });

  it("converts timebases to milliseconds per tick", () => {
    expect(msPerTick([1, 1000])).toBe(1);
    expect(msPerTick([1, 90000])).toBeCloseTo(0.011111, 6);
    expect(msPerTick([1001, 30000])).toBeCloseTo(33.3667, 4);
  });
});

describe("StationClient", () => {
  it("opens a session and receives a playlist permutation", async () => {
    const stub = new StubService(makeVideoMap(["vid-a", "vid-b", "vid-c"]));
    const client = new StationClient("", stub.fetch);

    const session = await client.openSession("ann e");

    expect(session.session_id.startsWith("ann e-")).toBe(true);
    expect([...session.playlist].sort()).toEqual(["vid-a", "vid-b", "vid-c"]);
  });

  it("rejects a blank subject with the server's 422", async () => {
    const stub = new StubService(makeVideoMap(["vid-a"]));
    const client = new StationClient("", stub.fetch);

    await expect(client.openSession("  ")).rejects.toThrow(/422/);
  });

  it("marks a video played only when the schedule fetch carries the session", async () => {
    const stub = new StubService(makeVideoMap(["vid-a", "vid-b"]));
    const client = new StationClient("", stub.fetch);
    const session = await client.openSession("tester");

    const preview = await client.fetchSchedule("vid-a");
    expect(preview.video_id).toBe("vid-a");
    expect(stub.sessionState(session.session_id, "vid-a")).toBe("pending");

    const schedule = await client.fetchSchedule("vid-a", session.session_id);
    expect(schedule.entries[0]).toEqual({
      entry_index: 1,
      source_frame_index: 1,
      render_pts: 0,
      flag: "normal",
    });
    expect(stub.sessionState(session.session_id, "vid-a")).toBe("played");
  });

  it("surfaces unknown videos as errors", async () => {
    const stub = new StubService(makeVideoMap(["vid-a"]));
    const client = new StationClient("", stub.fetch);

    await expect(client.fetchSchedule("vid-zz")).rejects.toThrow(/404/);
  });

  it("builds frame urls with encoded ids and serves PNG bytes", async () => {
    const stub = new StubService(makeVideoMap(["vid a"]));
    const client = new StationClient("http://host:8000", stub.fetch);

    expect(client.frameUrl("vid a", 3)).toBe("http://host:8000/api/video/vid%20a/frame/3");

    const response = await stub.fetch(client.frameUrl("vid a", 3));
    expect(response.status).toBe(200);
    expect(response.headers.get("content-type")).toBe("image/png");
    const bytes = new Uint8Array(await response.arrayBuffer());
    expect([...bytes.slice(0, 4)]).toEqual([0x89, 0x50, 0x4e, 0x47]);
  });

  it("returns malformed rating posts as status plus null body", async () => {
    const stub = new StubService(makeVideoMap(["vid-a"]));
    const client = new StationClient("", stub.fetch);
    const session = await client.openSession("tester");
    await client.fetchSchedule("vid-a", session.session_id);

    const fractional = await client.postRating({
      session_id: session.session_id,
      video_id: "vid-a",
      score: 3.5,
    });
    expect(fractional).toEqual({ status: 422, body: null });

    const wellFormed = await client.postRating({
      session_id: session.session_id,
      video_id: "vid-a",
      score: 9,
    });
    expect(wellFormed).toEqual({
      status: 200,
      body: { accepted: false, reason: "score_out_of_range" },
    });
  });
});
