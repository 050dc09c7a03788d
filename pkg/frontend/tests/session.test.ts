import { describe, expect, it } from "vitest";

import type {
  GenerateParams,
  GenerateResponse,
  GenerationClient,
  PolishParams,
} from "../src/api.js";
import { ApiError } from "../src/api.js";
import { PolishSession, lockKey } from "../src/state.js";

/**
 * A stand-in for the generation service that honors its contract:
 * locked tokens come back verbatim, free slots are resampled
 * (deterministically from the request seed), and request ids are a
 * monotone counter.
 */
class FakeService implements GenerationClient {
  private counter = 0;
  private words = ["cold", "warm", "wind", "moon", "stone", "light",
                   "rain", "leaf"];

  private pick(seedParts: number[]): string {
    let h = 2166136261;
    for (const p of seedParts) {
      h = Math.imul(h ^ p, 16777619) >>> 0;
    }
    return this.words[h % this.words.length]!;
  }

  async generate(params: GenerateParams): Promise<GenerateResponse> {
    const lines = params.format_dsl.trim().split("\n");
    const tokens = lines.map((line, li) =>
      line.trim().split(/\s+/).map((slot, ti) => {
        if (slot === "_" || slot.startsWith("_:")) {
          return this.pick([params.seed ?? 0, li, ti]);
        }
        return slot; // punctuation or fixed word
      }),
    );
    const rhyme_slots = [];
    for (const [li, line] of lines.entries()) {
      for (const [ti, slot] of line.trim().split(/\s+/).entries()) {
        if (slot.startsWith("_:")) {
          rhyme_slots.push({ line: li, index: ti, group: slot.slice(2) });
        }
      }
    }
    return { tokens, rhyme_slots, request_id: ++this.counter };
  }

  async polish(params: PolishParams): Promise<GenerateResponse> {
    const locked = new Set(params.locks.map(([l, i]) => `${l}:${i}`));
    const tokens = params.tokens.map((line, li) =>
      line.map((tok, ti) => {
        if (locked.has(`${li}:${ti}`)) return tok;
        if ([",", ".", "!", "?"].includes(tok)) return tok;
        return this.pick([params.seed ?? 0, this.counter, li, ti]);
      }),
    );
    return { tokens, rhyme_slots: [], request_id: ++this.counter };
  }
}

const DSL = "_ _ _:A ,\n_ _ _ _:A .";

describe("the polishing loop", () => {
  it("keeps locked tokens through three regenerations and restores "
     + "history grids exactly", async () => {
    const session = new PolishSession(new FakeService());
    await session.generate(DSL, { seed: 1 });
    const first = session.grid!;
    const kept0 = first.tokens[0]![2]!;
    const kept1 = first.tokens[1]![3]!;

    // lock the two rhyme words
    session.toggleLock(0, 2);
    session.toggleLock(1, 3);

    const grids = [first];
    for (const seed of [11, 12, 13]) {
      const grid = await session.regenerate({ seed });
      expect(grid.tokens[0]![2]).toBe(kept0);
      expect(grid.tokens[1]![3]).toBe(kept1);
      grids.push(grid);
    }
    expect(session.history).toHaveLength(4);

    // restore each prior grid and compare token-for-token
    for (const grid of grids) {
      const restored = session.restore(grid.requestId);
      expect(restored.tokens).toEqual(grid.tokens);
      expect(restored.requestId).toBe(grid.requestId);
    }
  });

  it("restore also brings back the locks active at that point", async () => {
    const session = new PolishSession(new FakeService());
    await session.generate(DSL, { seed: 2 });
    const before = session.grid!.requestId;
    expect(session.locks.size).toBe(0);
    session.toggleLock(0, 0);
    await session.regenerate({ seed: 3 });
    session.toggleLock(0, 1);
    expect(session.locks.size).toBe(2);

    session.restore(before);
    expect(session.locks.size).toBe(0); // no locks existed back then

    session.restore(session.history[1]!.requestId);
    expect([...session.locks]).toEqual([lockKey(0, 0)]);
  });

  it("display equals the last server response verbatim", async () => {
    const service = new FakeService();
    const session = new PolishSession(service);
    await session.generate(DSL, { seed: 4 });
    const direct = await new FakeService().generate({
      format_dsl: DSL,
      seed: 4,
    });
    expect(session.grid!.tokens).toEqual(direct.tokens);
    expect(session.grid!.rhymeSlots).toEqual(direct.rhyme_slots);
  });

  it("toggling out-of-range positions is a no-op", async () => {
    const session = new PolishSession(new FakeService());
    await session.generate(DSL);
    session.toggleLock(9, 0);
    session.toggleLock(0, 99);
    expect(session.locks.size).toBe(0);
  });

  it("rejects overlapping requests", async () => {
    const session = new PolishSession(new FakeService());
    const slow = session.generate(DSL);
    await expect(session.generate(DSL)).rejects.toThrow("in flight");
    await slow;
    expect(session.grid).not.toBeNull();
  });

  it("keeps the editor state when the service fails", async () => {
    class Failing extends FakeService {
      override async polish(): Promise<GenerateResponse> {
        throw new ApiError(400, { message: "bad lock", line: 1, col: 2 });
      }
    }
    const session = new PolishSession(new Failing());
    await session.generate(DSL, { seed: 5 });
    const kept = session.grid;
    session.toggleLock(0, 0);
    await expect(session.regenerate()).rejects.toThrow();
    expect(session.grid).toBe(kept); // untouched
    expect(session.error).toContain("bad lock");
    expect(session.errorPosition).toEqual({ line: 1, col: 2 });
    expect(session.history).toHaveLength(1);
    expect(session.pending).toBe(false);
  });

  it("regenerate before generate is an error", async () => {
    const session = new PolishSession(new FakeService());
    await expect(session.regenerate()).rejects.toThrow("generate from");
  });
});
