/**
 * The polishing session: grid state, lock set, request history.
 *
 * The displayed tokens are always exactly the last server response; the
 * client never edits them, it only annotates locks and asks the server to
 * regenerate. History lives in session memory only (the server is
 * stateless), one entry per response, addressable by request_id.
 */

import type {
  GenerationClient,
  GenerateResponse,
  RhymeSlot,
} from "./api.js";
import { ApiError } from "./api.js";

export type LockKey = `${number}:${number}`;

export function lockKey(line: number, index: number): LockKey {
  return `${line}:${index}`;
}

export interface Grid {
  tokens: string[][];
  rhymeSlots: RhymeSlot[];
  requestId: number;
}

export interface HistoryEntry extends Grid {
  locks: LockKey[]; // locks that were active when this grid arrived
}

export interface DecodeOptions {
  k?: number;
  temperature?: number;
  seed?: number;
  hard_constrain?: boolean;
}

export class PolishSession {
  grid: Grid | null = null;
  locks: Set<LockKey> = new Set();
  history: HistoryEntry[] = [];
  pending = false;
  error: string | null = null;
  errorPosition: { line: number; col: number } | null = null;

  constructor(private client: GenerationClient) {}

  /** Start a session from a format DSL. Clears locks and history. */
  async generate(formatDsl: string, opts: DecodeOptions = {}): Promise<Grid> {
    const grid = await this.request(() =>
      this.client.generate({ format_dsl: formatDsl, ...opts }),
    );
    this.locks = new Set();
    this.history = [this.snapshot(grid)];
    return grid;
  }

  /** Flip the lock on one token. Out-of-range positions are ignored. */
  toggleLock(line: number, index: number): Set<LockKey> {
    if (!this.grid) return this.locks;
    const row = this.grid.tokens[line];
    if (row === undefined || index < 0 || index >= row.length) {
      return this.locks;
    }
    const key = lockKey(line, index);
    if (this.locks.has(key)) {
      this.locks.delete(key);
    } else {
      this.locks.add(key);
    }
    return this.locks;
  }

  lockedPairs(): [number, number][] {
    return [...this.locks]
      .map((key) => key.split(":").map(Number) as [number, number])
      .sort((a, b) => a[0] - b[0] || a[1] - b[1]);
  }

  /** Regenerate the current grid, keeping locked tokens. Appends to
   * history. Rejected while another request is in flight. */
  async regenerate(opts: DecodeOptions = {}): Promise<Grid> {
    if (!this.grid) {
      throw new Error("nothing to regenerate: generate from a format first");
    }
    const body = {
      tokens: this.grid.tokens,
      locks: this.lockedPairs(),
      ...opts,
    };
    const grid = await this.request(() => this.client.polish(body));
    this.history.push(this.snapshot(grid));
    return grid;
  }

  /** Restore a previous response (tokens, rhyme slots and the locks that
   * were active when it arrived). */
  restore(requestId: number): Grid {
    const entry = this.history.find((h) => h.requestId === requestId);
    if (!entry) {
      throw new Error(`no history entry for request ${requestId}`);
    }
    this.grid = {
      tokens: entry.tokens,
      rhymeSlots: entry.rhymeSlots,
      requestId: entry.requestId,
    };
    this.locks = new Set(entry.locks);
    this.error = null;
    this.errorPosition = null;
    return this.grid;
  }

  private snapshot(grid: Grid): HistoryEntry {
    return { ...grid, locks: [...this.locks] };
  }

  private async request(
    call: () => Promise<GenerateResponse>,
  ): Promise<Grid> {
    if (this.pending) {
      throw new Error("a request is already in flight");
    }
    this.pending = true;
    try {
      const resp = await call();
      this.grid = {
        tokens: resp.tokens,
        rhymeSlots: resp.rhyme_slots,
        requestId: resp.request_id,
      };
      this.error = null;
      this.errorPosition = null;
      return this.grid;
    } catch (err) {
      // surface the failure but keep the editor state untouched
      if (err instanceof ApiError) {
        this.error = err.message;
        this.errorPosition = err.position();
      } else {
        this.error = String(err);
      }
      throw err;
    } finally {
      this.pending = false;
    }
  }
}
