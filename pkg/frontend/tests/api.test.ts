import { describe, expect, it, vi } from "vitest";

import { ApiError, Client } from "../src/api.js";

function fakeFetch(status: number, body: unknown) {
  return vi.fn(async () => ({
    ok: status >= 200 && status < 300,
    status,
    json: async () => body,
  })) as unknown as typeof fetch;
}

const RESPONSE = {
  tokens: [["cold", "wind", "bay", ","]],
  rhyme_slots: [{ line: 0, index: 2, group: "A" }],
  request_id: 1,
};

describe("Client", () => {
  it("posts the format DSL and returns the parsed grid", async () => {
    const fetchFn = fakeFetch(200, RESPONSE);
    const client = new Client("http://svc", fetchFn);
    const resp = await client.generate({ format_dsl: "_ _ _:A ,", seed: 7 });
    expect(resp.tokens).toEqual([["cold", "wind", "bay", ","]]);
    expect(resp.request_id).toBe(1);
    const [url, init] = (fetchFn as any).mock.calls[0];
    expect(url).toBe("http://svc/generate");
    expect(JSON.parse(init.body)).toEqual({ format_dsl: "_ _ _:A ,", seed: 7 });
  });

  it("posts token lines and lock pairs for polish", async () => {
    const fetchFn = fakeFetch(200, RESPONSE);
    const client = new Client("", fetchFn);
    await client.polish({
      tokens: [["a", "b"]],
      locks: [[0, 1]],
      k: 8,
    });
    const [url, init] = (fetchFn as any).mock.calls[0];
    expect(url).toBe("/polish");
    expect(JSON.parse(init.body).locks).toEqual([[0, 1]]);
  });

  it("surfaces DSL errors with their reported position", async () => {
    const detail = { message: "unknown slot syntax '_x'", line: 1, col: 3 };
    const client = new Client("", fakeFetch(400, { detail }));
    const err = await client
      .generate({ format_dsl: "_ _x" })
      .catch((e) => e as ApiError);
    expect(err).toBeInstanceOf(ApiError);
    expect((err as ApiError).status).toBe(400);
    expect((err as ApiError).position()).toEqual({ line: 1, col: 3 });
  });

  it("surfaces plain-string error details without a position", async () => {
    const client = new Client(
      "",
      fakeFetch(422, { detail: "fixed tokens not in vocab: zebra" }),
    );
    const err = await client
      .generate({ format_dsl: "zebra _" })
      .catch((e) => e as ApiError);
    expect((err as ApiError).status).toBe(422);
    expect((err as ApiError).position()).toBeNull();
    expect((err as ApiError).message).toContain("zebra");
  });
});
