/**
 * Typed client for the generation service JSON API.
 *
 * Endpoints: POST /generate (format DSL in, token lines out),
 * POST /polish (token lines + (line, index) locks in, token lines out),
 * GET /health. The fetch implementation is injectable for tests.
 */

export interface RhymeSlot {
  line: number;
  index: number;
  group: string;
}

export interface GenerateResponse {
  tokens: string[][];
  rhyme_slots: RhymeSlot[];
  request_id: number;
}

export interface GenerateParams {
  format_dsl: string;
  k?: number;
  temperature?: number;
  seed?: number;
  hard_constrain?: boolean;
}

export interface PolishParams {
  tokens: string[][];
  locks: [number, number][];
  k?: number;
  temperature?: number;
  seed?: number;
  hard_constrain?: boolean;
}

/** Error carrying the HTTP status and the server's detail payload
 * (format errors include 1-based line/col of the bad DSL token). */
export class ApiError extends Error {
  constructor(
    public status: number,
    public detail: unknown,
  ) {
    super(typeof detail === "string" ? detail : JSON.stringify(detail));
    this.name = "ApiError";
  }

  /** Position of a DSL parse error, when the server reported one. */
  position(): { line: number; col: number } | null {
    if (
      this.detail &&
      typeof this.detail === "object" &&
      "line" in this.detail &&
      "col" in this.detail
    ) {
      const d = this.detail as { line: number; col: number };
      return { line: d.line, col: d.col };
    }
    return null;
  }
}

export interface GenerationClient {
  generate(params: GenerateParams): Promise<GenerateResponse>;
  polish(params: PolishParams): Promise<GenerateResponse>;
}

export class Client implements GenerationClient {
  constructor(
    private baseUrl: string = "",
    private fetchFn: typeof fetch = fetch.bind(globalThis),
  ) {}

  private async post<T>(path: string, body: unknown): Promise<T> {
    const resp = await this.fetchFn(`${this.baseUrl}${path}`, {
      method: "POST",
      headers: { "Content-Type": "application/json" },
      body: JSON.stringify(body),
    });
    const data = await resp.json().catch(() => ({}));
    if (!resp.ok) {
      throw new ApiError(resp.status, (data as { detail?: unknown }).detail ?? data);
    }
    return data as T;
  }

  generate(params: GenerateParams): Promise<GenerateResponse> {
    return this.post<GenerateResponse>("/generate", params);
  }

  polish(params: PolishParams): Promise<GenerateResponse> {
    return this.post<GenerateResponse>("/polish", params);
  }

  async health(): Promise<{ status: string }> {
    const resp = await this.fetchFn(`${this.baseUrl}/health`);
    if (!resp.ok) throw new ApiError(resp.status, "health check failed");
    return (await resp.json()) as { status: string };
  }
}
