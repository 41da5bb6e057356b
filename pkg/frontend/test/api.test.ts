import { afterEach, describe, expect, it, vi } from "vitest";

import { ApiError, Client } from "../src/api.js";

function mockFetch(status: number, body: unknown): void {
  vi.stubGlobal("fetch", vi.fn(async () => ({
    ok: status >= 200 && status < 300,
    status,
    json: async () => body,
  })));
}

afterEach(() => {
  vi.unstubAllGlobals();
});

describe("client", () => {
  it("PUT correspondence sends the anchor and returns the echo", async () => {
    const echo = {
      anchor: [3, 20],
      histology_spacing_mm: 3.0,
      microus_spacing_mm: 1.0,
      mapping: [{ histology: 4, micro: 23 }],
      dropped: [],
    };
    mockFetch(200, echo);
    const client = new Client();
    const saved = await client.putCorrespondence("demo", { anchor: [3, 20] });
    expect(saved).toEqual(echo);
    const call = (fetch as unknown as ReturnType<typeof vi.fn>).mock.calls[0];
    expect(call[0]).toBe("/api/cases/demo/correspondence");
    expect(call[1].method).toBe("PUT");
    expect(JSON.parse(call[1].body)).toEqual({ anchor: [3, 20] });
  });

  it("surfaces the service's 422 reason", async () => {
    mockFetch(422, { detail: "anchor histology index 99 outside [0, 6)" });
    const client = new Client();
    await expect(client.putCorrespondence("demo", { anchor: [99, 0] }))
      .rejects.toSatisfy((e: unknown) =>
        e instanceof ApiError && e.status === 422
        && e.detail === "anchor histology index 99 outside [0, 6)");
  });

  it("flattens pydantic validation error lists", async () => {
    mockFetch(422, { detail: [{ msg: "Input should be greater than 0", loc: ["body"] }] });
    const client = new Client();
    await expect(client.putCorrespondence("demo", { anchor: [0, 0] }))
      .rejects.toSatisfy((e: unknown) =>
        e instanceof ApiError && e.detail.includes("greater than 0"));
  });

  it("reports 409 busy from concurrent register attempts", async () => {
    mockFetch(409, { detail: "registration already running" });
    const client = new Client();
    await expect(client.register("demo")).rejects.toSatisfy((e: unknown) =>
      e instanceof ApiError && e.status === 409);
  });

  it("parses the report verbatim: displayed numbers equal the JSON payload", async () => {
    const report = {
      k: 2,
      means: {
        dice: 0.9781234567890123, hausdorff_mm: 0.8944271909999159,
        urethra_deviation_mm: 0.123, landmark_error_mm: null,
        n_dice: 2, n_hausdorff_mm: 2, n_urethra_deviation_mm: 2, n_landmark_error_mm: 0,
      },
      skipped: [],
      slices: [
        { slice: 0, micro_slice: 10, dice: 0.97, hd_mm: 0.8, ud_mm: 0.1, le_mm: null },
        { slice: 1, micro_slice: 13, dice: 0.9862469135780246, hd_mm: 0.99, ud_mm: 0.15, le_mm: null },
      ],
    };
    mockFetch(200, JSON.parse(JSON.stringify(report)));
    const client = new Client();
    const got = await client.getReport("demo");
    expect(got).toStrictEqual(report);
    expect(got.means.dice).toBe(0.9781234567890123);
  });

  it("builds the declared image URLs", () => {
    const client = new Client("http://host:8000");
    expect(client.microSliceUrl("a", 12)).toBe("http://host:8000/api/cases/a/microus/slices/12.png");
    expect(client.histologySliceUrl("a", 3)).toBe("http://host:8000/api/cases/a/histology/3.png");
    expect(client.overlayUrl("a", 3)).toBe("http://host:8000/api/cases/a/overlays/3.png");
  });
});
